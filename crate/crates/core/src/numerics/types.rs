use crate::error::{Error, Result};
use nalgebra::linalg::SVD;

/// Dense real matrix, row-major in all file formats, column-major in memory.
pub type RealMatrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type RealVector = nalgebra::DVector<f64>;

/// Tolerance for the structural invariants of [`HermitianPair`].
pub const PAIR_SYMMETRY_TOL: f64 = 1e-12;

/// A complex Hermitian matrix `re + i*im` stored as a symmetric real part and
/// an antisymmetric imaginary part. Covariance matrices `V(t)` and the Ito
/// matrix `I + iJ` live here; no complex scalar type is used anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPair {
    re: RealMatrix,
    im: RealMatrix,
}

impl HermitianPair {
    /// Validates the symmetry structure: `re = re^T` and `im = -im^T`,
    /// both within [`PAIR_SYMMETRY_TOL`], and equal square orders.
    pub fn new(re: RealMatrix, im: RealMatrix) -> Result<Self> {
        if !re.is_square() || re.shape() != im.shape() {
            return Err(Error::dimension(
                "HermitianPair",
                "square re and im of equal order".to_string(),
                format!("re {}x{}, im {}x{}", re.nrows(), re.ncols(), im.nrows(), im.ncols()),
            ));
        }
        let sym_dev = (&re - re.transpose()).norm();
        if sym_dev > PAIR_SYMMETRY_TOL {
            return Err(Error::Asymmetric {
                name: "HermitianPair.re".into(),
                asymmetry: sym_dev,
                tol: PAIR_SYMMETRY_TOL,
            });
        }
        let antisym_dev = (&im + im.transpose()).norm();
        if antisym_dev > PAIR_SYMMETRY_TOL {
            return Err(Error::Asymmetric {
                name: "HermitianPair.im".into(),
                asymmetry: antisym_dev,
                tol: PAIR_SYMMETRY_TOL,
            });
        }
        Ok(Self { re, im })
    }

    /// Constructs the pair by projecting onto the symmetric/antisymmetric
    /// subspaces. Exact (bit-identical) when the inputs already have the
    /// required structure; used by integrators whose updates preserve the
    /// structure in exact arithmetic.
    pub fn project(re: RealMatrix, im: RealMatrix) -> Self {
        let re = (&re + re.transpose()) * 0.5;
        let im = (&im - im.transpose()) * 0.5;
        Self { re, im }
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            re: RealMatrix::zeros(order, order),
            im: RealMatrix::zeros(order, order),
        }
    }

    pub fn re(&self) -> &RealMatrix {
        &self.re
    }

    pub fn im(&self) -> &RealMatrix {
        &self.im
    }

    pub fn order(&self) -> usize {
        self.re.nrows()
    }

    pub fn into_parts(self) -> (RealMatrix, RealMatrix) {
        (self.re, self.im)
    }
}

/// A general complex matrix `re + i*im` as two unconstrained real parts.
/// Used for resolvents and transfer-function values, where no Hermitian
/// structure is available.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPair {
    re: RealMatrix,
    im: RealMatrix,
}

impl ComplexPair {
    pub fn new(re: RealMatrix, im: RealMatrix) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::dimension(
                "ComplexPair",
                format!("{}x{}", re.nrows(), re.ncols()),
                format!("{}x{}", im.nrows(), im.ncols()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            re: RealMatrix::zeros(rows, cols),
            im: RealMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(order: usize) -> Self {
        Self {
            re: RealMatrix::identity(order, order),
            im: RealMatrix::zeros(order, order),
        }
    }

    pub fn from_real(re: RealMatrix) -> Self {
        let im = RealMatrix::zeros(re.nrows(), re.ncols());
        Self { re, im }
    }

    /// `(u_re + i*u_im) I - a`, the coefficient of a shifted resolvent solve.
    pub fn shifted_identity(u: (f64, f64), a: &RealMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dimension(
                "shifted_identity",
                "square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let n = a.nrows();
        Ok(Self {
            re: RealMatrix::identity(n, n) * u.0 - a,
            im: RealMatrix::identity(n, n) * u.1,
        })
    }

    pub fn re(&self) -> &RealMatrix {
        &self.re
    }

    pub fn im(&self) -> &RealMatrix {
        &self.im
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }

    /// Frobenius norm of the complex matrix: `sqrt(||re||^2 + ||im||^2)`.
    pub fn norm(&self) -> f64 {
        (self.re.norm_squared() + self.im.norm_squared()).sqrt()
    }

    pub fn transpose(&self) -> Self {
        Self {
            re: self.re.transpose(),
            im: self.im.transpose(),
        }
    }

    pub fn mul(&self, rhs: &ComplexPair) -> Result<ComplexPair> {
        if self.re.ncols() != rhs.re.nrows() {
            return Err(Error::dimension(
                "ComplexPair::mul",
                format!("inner dimension {}", self.re.ncols()),
                format!("{}", rhs.re.nrows()),
            ));
        }
        Ok(ComplexPair {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        })
    }

    pub fn sub(&self, rhs: &ComplexPair) -> Result<ComplexPair> {
        if self.shape() != rhs.shape() {
            return Err(Error::dimension(
                "ComplexPair::sub",
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(ComplexPair {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
        })
    }

    /// Solves `self * X = rhs` for a square coefficient through the real
    /// embedding `[[re, -im], [im, re]]`. Reports a pole (with the condition
    /// number) when the coefficient is singular to working precision.
    pub fn solve(&self, rhs: &ComplexPair, context: &str) -> Result<ComplexPair> {
        let (n, nc) = self.shape();
        if n != nc {
            return Err(Error::dimension(
                "ComplexPair::solve",
                "square coefficient",
                format!("{n}x{nc}"),
            ));
        }
        if rhs.re.nrows() != n {
            return Err(Error::dimension(
                "ComplexPair::solve",
                format!("rhs with {n} rows"),
                format!("{}", rhs.re.nrows()),
            ));
        }
        let c = rhs.re.ncols();
        if n == 0 {
            return Ok(ComplexPair::zeros(0, c));
        }

        let mut embed = RealMatrix::zeros(2 * n, 2 * n);
        embed.view_mut((0, 0), (n, n)).copy_from(&self.re);
        embed.view_mut((0, n), (n, n)).copy_from(&(-&self.im));
        embed.view_mut((n, 0), (n, n)).copy_from(&self.im);
        embed.view_mut((n, n), (n, n)).copy_from(&self.re);

        let mut stacked = RealMatrix::zeros(2 * n, c);
        stacked.view_mut((0, 0), (n, c)).copy_from(&rhs.re);
        stacked.view_mut((n, 0), (n, c)).copy_from(&rhs.im);

        let svd = SVD::new(embed, true, true);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        if sigma_min <= 1e-12 * sigma_max {
            return Err(Error::Pole {
                context: context.into(),
                condition: if sigma_min > 0.0 {
                    sigma_max / sigma_min
                } else {
                    f64::INFINITY
                },
            });
        }
        let solution = svd
            .solve(&stacked, 0.0)
            .map_err(|msg| Error::Numeric {
                context: format!("{context}: {msg}"),
            })?;
        Ok(ComplexPair {
            re: solution.view((0, 0), (n, c)).into_owned(),
            im: solution.view((n, 0), (n, c)).into_owned(),
        })
    }
}
