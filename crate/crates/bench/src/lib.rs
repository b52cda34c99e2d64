//! Benchmark fixtures shared by the criterion targets.

use hrt_core::{Dataset, SyntheticFunction, SyntheticSpec};

pub fn sinc(n: usize, seed: u64) -> Dataset {
    SyntheticSpec::new(SyntheticFunction::Sinc, n, 0.025, seed).generate().expect("generator")
}

pub fn f2(n: usize, seed: u64) -> Dataset {
    SyntheticSpec::new(SyntheticFunction::F2, n, 0.05, seed).generate().expect("generator")
}
