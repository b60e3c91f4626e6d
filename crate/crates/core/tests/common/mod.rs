#![allow(dead_code)]

use expsig::{Dataset, TimeSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy ramps: class 0 rises, class 1 falls, so the level-1 signature
/// separates them.
pub fn ramps(per_class: usize, n_points: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(2 * per_class);
    for class in 0..2 {
        let slope = if class == 0 { 1.0 } else { -1.0 };
        for _ in 0..per_class {
            let values = (0..n_points)
                .map(|i| slope * i as f64 / (n_points - 1) as f64 + rng.random_range(-0.1..0.1))
                .collect();
            items.push((TimeSeries::on_unit_grid(values, 1).unwrap(), class));
        }
    }
    Dataset::new("ramps", items, 2).unwrap()
}
