//! Benchmark fixtures shared by the criterion targets.

use platoon_core::ModelParams;

/// Parameter sets from the `T = 10` experiment family.
pub fn fixture(capacity: usize, p: f64, expiration_cost: f64) -> ModelParams {
    ModelParams::new(capacity, 10, p, expiration_cost, 1.0, 1.0).expect("valid fixture")
}
