use crate::numerics::ComplexMatrix;
use crate::rng::{complex_normal, substream, SimRng};

pub fn rng(seed: u64) -> SimRng {
    substream(seed, &[0xdead])
}

pub fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}
