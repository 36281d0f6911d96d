//! Dense real / complex-pair linear algebra and integration kernels shared by
//! every other module. All operations are pure functions of their inputs.

mod expm;
mod factor;
mod integrate;
mod types;

pub use expm::expm;
pub use factor::{
    kernel_basis, lstsq_min_norm, numerical_rank, row_complement, sqrtm_psd, DEFAULT_RANK_TOL,
};
pub use integrate::{
    gramian_quadrature, integrate_lyapunov, LyapunovPropagator, QUADRATURE_TOL, RK4_NORM_STEP,
};
pub use types::{ComplexPair, HermitianPair, RealMatrix, RealVector, PAIR_SYMMETRY_TOL};
