use super::TableCatalog;
use crate::container::{Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KDCATLG\0";
const MAJOR: u16 = 1;
const MINOR: u16 = 0;

/// Header (schema, domains, factorization specs) followed by one LE u64 array per column.
pub fn encode_catalog(cat: &TableCatalog) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC, MAJOR, MINOR);
    w.header(cat)?;
    for col in &cat.columns {
        for &c in &col.codes {
            w.u64(c as u64);
        }
    }
    Ok(w.finish())
}

pub fn decode_catalog(data: &[u8]) -> Result<TableCatalog> {
    let (mut r, major, minor) = Reader::open(data, MAGIC, "catalog")?;
    if major != MAJOR {
        return Err(Error::Version { found_major: major, found_minor: minor, supported_major: MAJOR });
    }
    let mut cat: TableCatalog = r.header()?;
    let expected = cat.columns.len() * cat.row_count * 8;
    if r.remaining() != expected {
        return Err(Error::Integrity(format!(
            "catalog {}: {} code bytes, expected {expected}",
            cat.name,
            r.remaining()
        )));
    }
    for col in &mut cat.columns {
        col.codes = Vec::with_capacity(cat.row_count);
        for _ in 0..cat.row_count {
            let c = r.u64()?;
            if c >= col.domain.len() as u64 {
                return Err(Error::Integrity(format!("catalog {}: code {c} out of range", cat.name)));
            }
            col.codes.push(c as u32);
        }
    }
    r.expect_end()?;
    cat.validate().map_err(|e| Error::Integrity(e.to_string()))?;
    Ok(cat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ingest_table, read_csv_from};

    fn sample() -> TableCatalog {
        let raw = read_csv_from("k,s,x\n3,a,1.5\n1,,2\n3,b,\n".as_bytes(), "t", b',').unwrap();
        ingest_table(&raw, "k", 12).unwrap()
    }

    #[test]
    fn round_trip() {
        let cat = sample();
        let bytes = encode_catalog(&cat).unwrap();
        assert_eq!(decode_catalog(&bytes).unwrap(), cat);
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode_catalog(&sample()).unwrap();
        for cut in [0, 5, 12, 20, bytes.len() - 1] {
            assert!(matches!(decode_catalog(&bytes[..cut]), Err(Error::Integrity(_))), "cut {cut}");
        }
    }

    #[test]
    fn foreign_major_rejected() {
        let mut bytes = encode_catalog(&sample()).unwrap();
        bytes[8] = 9;
        assert!(matches!(decode_catalog(&bytes), Err(Error::Version { found_major: 9, .. })));
    }
}
