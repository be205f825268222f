//! Pseudo-hyperboloid geometry and pseudo-Riemannian graph convolutional networks.

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod geodesic;
pub mod geomcheck;
pub mod graph;
pub mod io;
pub mod manifold;
pub mod metrics;
pub mod qgcn;
pub mod trainer;

pub use error::{GeomError, GeomResult};
pub use manifold::{PseudoPoint, Signature, TangentVec};

/// Deterministic random generator used throughout the crate.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
