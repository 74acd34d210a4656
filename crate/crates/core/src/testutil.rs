use rand::Rng as _;

use crate::model::{rng_from_seed, Snapshot};

/// Uniform random snapshot.
pub fn random_snapshot(questions: usize, learners: usize, seed: u64) -> Snapshot {
    let mut rng = rng_from_seed(seed);
    let rows: Vec<Vec<f64>> = (0..questions)
        .map(|_| (0..learners).map(|_| rng.gen::<f64>()).collect())
        .collect();
    Snapshot::from_rows(&rows).unwrap()
}
