//! Fixtures shared by the benchmarks.

use cuberobust::corruption::{corrupt, Adversary, CorruptionSpec};
use cuberobust::geometry::{sample_body, AxisBox, Parallelopiped, SampleSet};

/// A skewed box in `d` dimensions.
pub fn test_box(d: usize) -> Parallelopiped {
    let lower: Vec<f64> = (0..d).map(|i| -1.0 - 0.1 * i as f64).collect();
    let upper: Vec<f64> = (0..d).map(|i| 0.5 + 0.2 * i as f64).collect();
    AxisBox::new(lower, upper).expect("valid box").to_parallelopiped()
}

/// `n` points from `body` with an ε fraction replaced by `adversary`.
pub fn corrupted(body: &Parallelopiped, n: usize, eps: f64, adversary: Adversary, seed: u64) -> SampleSet {
    let clean = sample_body(body, n, seed).expect("sample");
    let spec = CorruptionSpec { epsilon: eps, adversary, seed: seed ^ 0x5eed };
    corrupt(&clean, body, &spec).expect("corrupt")
}
