use serde::{Deserialize, Serialize};

use super::layout::{ColumnShape, Hyperparams, Layout, Section};
use super::{AnpmModel, TrainConfig};
use crate::catalog::FactorizationSpec;
use crate::container::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KDMODEL\0";
const MAJOR: u16 = 1;
const MINOR: u16 = 0;

#[derive(Serialize, Deserialize)]
struct Header {
    hyper: Hyperparams,
    columns: Vec<ColumnShape>,
    specs: Vec<FactorizationSpec>,
    ndvs: Vec<usize>,
    seed: u64,
    config: TrainConfig,
    sections: Vec<Section>,
}

pub fn encode_model(m: &AnpmModel) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC, MAJOR, MINOR);
    w.header(&Header {
        hyper: m.layout.hp,
        columns: m.layout.columns.clone(),
        specs: m.specs.clone(),
        ndvs: m.ndvs.clone(),
        seed: m.config.seed,
        config: m.config.clone(),
        sections: m.layout.sections.clone(),
    })?;
    for &p in &m.params {
        w.f32(p);
    }
    Ok(w.finish())
}

pub fn decode_model(data: &[u8]) -> Result<AnpmModel> {
    let (mut r, major, minor) = Reader::open(data, MAGIC, "model")?;
    if major != MAJOR {
        return Err(Error::Version { found_major: major, found_minor: minor, supported_major: MAJOR });
    }
    let h: Header = r.header()?;
    let layout = Layout::new(h.hyper, h.columns).map_err(|e| Error::Integrity(format!("model: {e}")))?;
    if layout.sections != h.sections {
        return Err(Error::Integrity("model: section table does not match the architecture".into()));
    }
    if h.specs.len() != layout.n_columns() || h.ndvs.len() != layout.n_columns() {
        return Err(Error::Integrity("model: column metadata length mismatch".into()));
    }
    if r.remaining() != layout.total * 4 {
        return Err(Error::Integrity(format!(
            "model: {} parameter bytes, expected {}",
            r.remaining(),
            layout.total * 4
        )));
    }
    let mut params = Vec::with_capacity(layout.total);
    for _ in 0..layout.total {
        params.push(r.f32()?);
    }
    r.expect_end()?;
    Ok(AnpmModel { layout, params, specs: h.specs, ndvs: h.ndvs, config: h.config })
}
