//! Seeded random streams.
//!
//! Every generator draws from a ChaCha8 stream keyed by the user seed and a
//! stream id. The stream id packs a purpose tag (high 16 bits) and a sub-index
//! (low 48 bits), so adding draws for one purpose never shifts another's.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum Stream {
    Dictionary = 1,
    Projection = 2,
    Codes = 3,
    Noise = 4,
    Lemma1 = 5,
    /// Test and acceptance instances (random Φ, Ψ, directions).
    Instance = 6,
}

const INDEX_MASK: u64 = (1 << 48) - 1;

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | (index & INDEX_MASK));
    rng
}

/// Fills a `rows × cols` matrix with i.i.d. standard normals, column-major draw order.
pub fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(StandardNormal.sample(rng));
    }
    DMatrix::from_vec(rows, cols, data)
}
