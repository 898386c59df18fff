use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layout::{ColumnShape, Hyperparams, Layout};
use super::net::{Net, QueryInput};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter with the largest error.
    pub worst: usize,
}

/// Compares analytic gradients with central differences on a two-column model
/// (E=4, H=8, two sub-columns per column) in double precision.
pub fn gradient_check(seed: u64) -> GradCheckReport {
    let hp = Hyperparams { embed_dim: 4, hidden: 8, layers: 2, hyper_width: 4 };
    let columns = vec![
        ColumnShape { name: "a".into(), sub_domains: vec![2, 4], learn_temperature: true },
        ColumnShape { name: "k".into(), sub_domains: vec![2, 4], learn_temperature: true },
    ];
    let lay = Layout::new(hp, columns).expect("tiny layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let mut p: Vec<f64> = (0..lay.total).map(|_| normal.sample(&mut rng)).collect();

    let batch = 4;
    let inputs: Vec<QueryInput> = (0..batch)
        .map(|_| {
            let n_preds = rng.random_range(0..3);
            let preds = (0..n_preds)
                .map(|_| (rng.random_range(0..5), vec![rng.random_range(0..2), rng.random_range(0..4)]))
                .collect();
            QueryInput { cols: vec![preds] }
        })
        .collect();
    let targets: Vec<Vec<u32>> = (0..batch)
        .map(|_| vec![rng.random_range(0..2), rng.random_range(0..4), rng.random_range(0..2), rng.random_range(0..4)])
        .collect();
    let ins: Vec<&QueryInput> = inputs.iter().collect();
    let tg: Vec<&[u32]> = targets.iter().map(|t| t.as_slice()).collect();
    let scale = 1.0 / batch as f64;

    let loss = |p: &[f64]| {
        let net = Net::new(&lay, p);
        let c = net.forward_batch(&ins, &tg);
        net.nll(&c, &tg) * scale
    };
    let mut grad = vec![0.0; lay.total];
    {
        let net = Net::new(&lay, &p);
        let c = net.forward_batch(&ins, &tg);
        net.backward(&c, &ins, &tg, scale, &mut grad);
    }

    let h = 1e-6;
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: 0 };
    for i in 0..lay.total {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - grad[i]).abs() / (numeric.abs() + grad[i].abs()).max(1e-6);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = i;
        }
    }
    report
}
