//! Direct-coupling optimization: choosing the off-diagonal energy block of
//! a two-system composite so as to minimize the quadratic coupling gain of
//! a fixed set of isolated variables.
//!
//! With `Sigma = F^T F` and a composite energy `R = R* + [[0, N], [N^T, 0]]`
//! the objective is `f(N) = (1/2) ||F Theta R sqrt(P)||_F^2`, a convex
//! quadratic in `N` with gradient `-(g(N) + K)`; minimizers solve the
//! normal equation `g(N) = -K`.

use crate::error::{Error, Result};
use crate::numerics::{
    lstsq_min_norm, numerical_rank, sqrtm_psd, RealMatrix, RealVector, DEFAULT_RANK_TOL,
};
use rayon::prelude::*;

/// Relative tolerance on the optimality residual `||g(N) + K||`.
pub const OPTIMALITY_TOL: f64 = 1e-8;

fn check_square(name: &str, m: &RealMatrix, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::dimension(
            name,
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_symmetric(name: &str, m: &RealMatrix) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    let tol = 1e-12 * (1.0 + m.norm());
    if asym > tol {
        return Err(Error::Asymmetric {
            name: name.into(),
            asymmetry: asym,
            tol,
        });
    }
    Ok(())
}

/// Block data of the quadratic form, extracted from composite matrices
/// partitioned at `n1` (the dimension of the first subsystem).
#[derive(Debug, Clone)]
pub struct OptimizerBlocks {
    theta1: RealMatrix,
    theta2: RealMatrix,
    sigma11: RealMatrix,
    sigma12: RealMatrix,
    sigma22: RealMatrix,
    p11: RealMatrix,
    p12: RealMatrix,
    p22: RealMatrix,
    n1: usize,
    n2: usize,
}

impl OptimizerBlocks {
    /// Partitions the composite commutation, weight, and covariance
    /// matrices. The commutation matrix must be block diagonal with respect
    /// to the split (which holds exactly for a pair of subsystems stacked
    /// in position-momentum order), and `Sigma`, `P` must be symmetric.
    pub fn from_composite(
        theta: &RealMatrix,
        sigma: &RealMatrix,
        p: &RealMatrix,
        n1: usize,
    ) -> Result<Self> {
        let n = theta.nrows();
        check_square("commutation matrix", theta, n)?;
        check_square("weight matrix", sigma, n)?;
        check_square("covariance matrix", p, n)?;
        if n1 == 0 || n1 >= n || !n1.is_multiple_of(2) || !n.is_multiple_of(2) {
            return Err(Error::Domain {
                context: format!("split {n1} of {n} must be even and interior"),
            });
        }
        check_symmetric("weight matrix", sigma)?;
        check_symmetric("covariance matrix", p)?;
        let n2 = n - n1;
        let cross = theta.view((0, n1), (n1, n2)).norm() + theta.view((n1, 0), (n2, n1)).norm();
        if cross > 1e-14 {
            return Err(Error::Domain {
                context: format!(
                    "commutation matrix is not block diagonal at split {n1}: off-block norm {cross:.3e}"
                ),
            });
        }
        Ok(OptimizerBlocks {
            theta1: theta.view((0, 0), (n1, n1)).into_owned(),
            theta2: theta.view((n1, n1), (n2, n2)).into_owned(),
            sigma11: sigma.view((0, 0), (n1, n1)).into_owned(),
            sigma12: sigma.view((0, n1), (n1, n2)).into_owned(),
            sigma22: sigma.view((n1, n1), (n2, n2)).into_owned(),
            p11: p.view((0, 0), (n1, n1)).into_owned(),
            p12: p.view((0, n1), (n1, n2)).into_owned(),
            p22: p.view((n1, n1), (n2, n2)).into_owned(),
            n1,
            n2,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }
}

/// Applies the quadratic-form operator to a candidate block `N`:
///
/// `g(N) = T1 S11 T1 N P22 + P11 N T2 S22 T2 + T1 S12 T2 N^T P12
///        + P12 N^T T1 S12 T2`
///
/// (`Tk` the subsystem commutation blocks, `Sjk`, `Pjk` the blocks of the
/// weight and covariance). `g` is self-adjoint and negative semidefinite
/// with respect to the Frobenius inner product.
pub fn apply_g(n: &RealMatrix, blocks: &OptimizerBlocks) -> Result<RealMatrix> {
    if n.shape() != (blocks.n1, blocks.n2) {
        return Err(Error::dimension(
            "coupling block",
            format!("{}x{}", blocks.n1, blocks.n2),
            format!("{}x{}", n.nrows(), n.ncols()),
        ));
    }
    let w11 = &blocks.theta1 * &blocks.sigma11 * &blocks.theta1;
    let w22 = &blocks.theta2 * &blocks.sigma22 * &blocks.theta2;
    let w12 = &blocks.theta1 * &blocks.sigma12 * &blocks.theta2;
    let nt = n.transpose();
    Ok(w11 * n * &blocks.p22
        + &blocks.p11 * n * w22
        + &w12 * &nt * &blocks.p12
        + &blocks.p12 * nt * w12)
}

/// Matrix of the operator [`apply_g`] in the column-stacked basis of
/// `n1 x n2` blocks. Columns are generated in parallel.
pub fn assemble_g(blocks: &OptimizerBlocks) -> Result<RealMatrix> {
    let (n1, n2) = (blocks.n1, blocks.n2);
    let dim = n1 * n2;
    let columns: Vec<RealVector> = (0..dim)
        .into_par_iter()
        .map(|c| {
            let mut basis = RealMatrix::zeros(n1, n2);
            basis[(c % n1, c / n1)] = 1.0;
            apply_g(&basis, blocks).map(|g| RealVector::from_column_slice(g.as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RealMatrix::from_fn(dim, dim, |r, c| columns[c][r]))
}

/// Constant term of the gradient: `K = X12 + X21^T` for
/// `X = Theta Sigma Theta R* P`, so that the gradient of the objective at
/// block `N` is `-(g(N) + K)`.
pub fn compute_k(
    theta: &RealMatrix,
    sigma: &RealMatrix,
    rstar: &RealMatrix,
    p: &RealMatrix,
    n1: usize,
) -> Result<RealMatrix> {
    let n = theta.nrows();
    check_square("commutation matrix", theta, n)?;
    check_square("weight matrix", sigma, n)?;
    check_square("baseline energy", rstar, n)?;
    check_square("covariance matrix", p, n)?;
    if n1 == 0 || n1 >= n {
        return Err(Error::Domain {
            context: format!("split {n1} of {n} must be interior"),
        });
    }
    let n2 = n - n1;
    let x = theta * sigma * theta * rstar * p;
    let x12 = x.view((0, n1), (n1, n2)).into_owned();
    let x21 = x.view((n1, 0), (n2, n1)).into_owned();
    Ok(x12 + x21.transpose())
}

/// Result of solving the coupling normal equation.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Minimum-norm minimizer of the objective.
    pub r12_opt: RealMatrix,
    /// Residual `||g(N) + K||_F` of the normal equation, evaluated through
    /// the operator (not the assembled matrix).
    pub residual: f64,
    /// Objective value at the minimizer.
    pub f_value: f64,
    /// Gradient norm at the minimizer.
    pub grad_norm: f64,
    /// Rank of the assembled operator matrix.
    pub g_matrix_rank: usize,
    /// Dimension of its null space (flat directions of the objective).
    pub nullity: usize,
}

/// The coupling-gain minimization problem for fixed rows `F`, composite
/// commutation matrix, covariance, and baseline energy `R*`.
#[derive(Debug, Clone)]
pub struct CouplingProblem {
    f_rows: RealMatrix,
    theta: RealMatrix,
    rstar: RealMatrix,
    sqrt_p: RealMatrix,
    blocks: OptimizerBlocks,
    k: RealMatrix,
}

impl CouplingProblem {
    /// Validates the inputs and precomputes the block data, the covariance
    /// factor, and the gradient constant `K`.
    pub fn new(
        f_rows: &RealMatrix,
        theta: &RealMatrix,
        p: &RealMatrix,
        rstar: &RealMatrix,
        n1: usize,
    ) -> Result<Self> {
        let n = theta.nrows();
        if f_rows.ncols() != n || f_rows.nrows() == 0 {
            return Err(Error::dimension(
                "objective rows",
                format!("s x {n} with s >= 1"),
                format!("{}x{}", f_rows.nrows(), f_rows.ncols()),
            ));
        }
        let antisym = (theta + theta.transpose()).norm();
        if antisym > 1e-12 * (1.0 + theta.norm()) {
            return Err(Error::Domain {
                context: format!("commutation matrix must be antisymmetric, residual {antisym:.3e}"),
            });
        }
        check_square("baseline energy", rstar, n)?;
        check_symmetric("baseline energy", rstar)?;
        let sigma = f_rows.transpose() * f_rows;
        let blocks = OptimizerBlocks::from_composite(theta, &sigma, p, n1)?;
        let sqrt_p = sqrtm_psd(p, 1e-10 * (1.0 + p.norm()))?;
        let k = compute_k(theta, &sigma, rstar, p, n1)?;
        Ok(CouplingProblem {
            f_rows: f_rows.clone(),
            theta: theta.clone(),
            rstar: rstar.clone(),
            sqrt_p,
            blocks,
            k,
        })
    }

    pub fn k(&self) -> &RealMatrix {
        &self.k
    }

    pub fn blocks(&self) -> &OptimizerBlocks {
        &self.blocks
    }

    /// Full composite energy for a candidate coupling block.
    pub fn embed(&self, r12: &RealMatrix) -> RealMatrix {
        let (n1, n2) = (self.blocks.n1, self.blocks.n2);
        let mut r = self.rstar.clone();
        let mut upper = r.view_mut((0, n1), (n1, n2));
        upper += r12;
        let mut lower = r.view_mut((n1, 0), (n2, n1));
        lower += r12.transpose();
        r
    }

    /// Objective value and gradient at a coupling block.
    pub fn objective_and_gradient(&self, r12: &RealMatrix) -> Result<(f64, RealMatrix)> {
        let r = self.embed(r12);
        let value = 0.5 * (&self.f_rows * &self.theta * r * &self.sqrt_p).norm_squared();
        let grad = -(apply_g(r12, &self.blocks)? + &self.k);
        Ok((value, grad))
    }

    /// Solves the normal equation `g(N) = -K` for the minimum-norm
    /// stationary block and cross-checks the residual through the operator
    /// itself. A residual above `1e-8 (1 + ||K||)` is reported as an
    /// optimality violation.
    pub fn optimal_coupling(&self) -> Result<OptimizationResult> {
        let (n1, n2) = (self.blocks.n1, self.blocks.n2);
        let l = assemble_g(&self.blocks)?;
        let rhs = -RealVector::from_column_slice(self.k.as_slice());
        let (x, _) = lstsq_min_norm(&l, &rhs, DEFAULT_RANK_TOL)?;
        let r12_opt = RealMatrix::from_column_slice(n1, n2, x.as_slice());
        let residual = (apply_g(&r12_opt, &self.blocks)? + &self.k).norm();
        let tol = OPTIMALITY_TOL * (1.0 + self.k.norm());
        if residual > tol {
            return Err(Error::OptimalityViolation { residual, tol });
        }
        let (f_value, grad) = self.objective_and_gradient(&r12_opt)?;
        let rank = numerical_rank(&l, DEFAULT_RANK_TOL);
        Ok(OptimizationResult {
            r12_opt,
            residual,
            f_value,
            grad_norm: grad.norm(),
            g_matrix_rank: rank,
            nullity: n1 * n2 - rank,
        })
    }
}

/// Converts the objective value into the gain scale `||G sqrt(P)||_F` of
/// the isolated variables: `G = 2 F Theta R` gives
/// `||G sqrt(P)||^2 = 8 f`.
pub fn gain_scale_from_objective(f_value: f64) -> f64 {
    (8.0 * f_value.max(0.0)).sqrt()
}
