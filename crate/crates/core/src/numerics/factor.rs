use crate::error::{Error, Result};
use crate::numerics::{RealMatrix, RealVector};
use nalgebra::linalg::{SymmetricEigen, SVD};

/// Default relative rank tolerance: singular values at or below
/// `tol * sigma_max * max(rows, cols)` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

fn rank_cutoff(m: &RealMatrix, sigma_max: f64, tol: f64) -> f64 {
    tol * sigma_max * m.nrows().max(m.ncols()) as f64
}

/// Numerical rank with the cutoff `tol * sigma_max * max(rows, cols)`.
pub fn numerical_rank(m: &RealMatrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = SVD::new(m.clone(), false, false);
    let sigma_max = svd.singular_values.max();
    let cutoff = rank_cutoff(m, sigma_max, tol);
    svd.singular_values.iter().filter(|&&s| s > cutoff).count()
}

/// Symmetric square root of a positive semi-definite matrix via a symmetric
/// eigendecomposition. Eigenvalues in `[-tol, 0)` are clamped to zero;
/// anything lower is rejected.
pub fn sqrtm_psd(p: &RealMatrix, tol: f64) -> Result<RealMatrix> {
    if !p.is_square() {
        return Err(Error::dimension(
            "sqrtm_psd",
            "square matrix",
            format!("{}x{}", p.nrows(), p.ncols()),
        ));
    }
    let asymmetry = (p - p.transpose()).norm();
    if asymmetry > 1e-12 * (1.0 + p.norm()) {
        return Err(Error::Asymmetric {
            name: "sqrtm_psd input".into(),
            asymmetry,
            tol: 1e-12,
        });
    }
    if p.nrows() == 0 {
        return Ok(RealMatrix::zeros(0, 0));
    }
    let symmetrized = (p + p.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(symmetrized);
    let mut scaled = eigen.eigenvectors.clone();
    for (j, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda < -tol {
            return Err(Error::NotPsd {
                name: "sqrtm_psd input".into(),
                eigenvalue: lambda,
                tol,
            });
        }
        let root = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(root);
    }
    let sqrt = &scaled * eigen.eigenvectors.transpose();
    Ok((&sqrt + sqrt.transpose()) * 0.5)
}

/// Flips column signs so the largest-magnitude entry of each column is
/// positive; pins an otherwise arbitrary eigenvector sign.
fn normalize_column_signs(m: &mut RealMatrix) {
    for mut col in m.column_iter_mut() {
        let mut lead = 0.0_f64;
        for &x in col.iter() {
            if x.abs() > lead.abs() {
                lead = x;
            }
        }
        if lead < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis of `ker M` as the columns of an `n x d` matrix,
/// `d = n - rank(M)`. Rank is decided by the singular-value cutoff
/// `tol * sigma_max * max(rows, cols)`.
///
/// The basis is extracted from the eigenvectors of the orthogonal projector
/// onto the complement of the row space, which stays accurate for wide
/// matrices where a thin SVD carries no kernel columns.
pub fn kernel_basis(m: &RealMatrix, tol: f64) -> RealMatrix {
    let n = m.ncols();
    if n == 0 {
        return RealMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return RealMatrix::identity(n, n);
    }
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("kernel_basis: SVD requested v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = rank_cutoff(m, sigma_max, tol);

    let mut projector = RealMatrix::identity(n, n);
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma > cutoff {
            let row_dir = v_t.row(i).transpose();
            projector -= &row_dir * row_dir.transpose();
        }
    }
    let projector = (&projector + projector.transpose()) * 0.5;

    let eigen = SymmetricEigen::new(projector);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[j]
            .partial_cmp(&eigen.eigenvalues[i])
            .expect("projector eigenvalues are finite")
            .then(i.cmp(&j))
    });
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eigen.eigenvalues[i] > 0.5)
        .collect();

    let mut basis = RealMatrix::zeros(n, kept.len());
    for (j, &i) in kept.iter().enumerate() {
        basis.set_column(j, &eigen.eigenvectors.column(i));
    }
    normalize_column_signs(&mut basis);
    basis
}

/// Orthonormal rows spanning the orthogonal complement of the row space of a
/// full-row-rank `F`; stacking `S = [F; T]` is then nonsingular.
pub fn row_complement(f: &RealMatrix) -> Result<RealMatrix> {
    let (s, n) = f.shape();
    if s >= n {
        return Err(Error::dimension(
            "row_complement",
            "strictly wide matrix (s < n)",
            format!("{s}x{n}"),
        ));
    }
    let rank = numerical_rank(f, DEFAULT_RANK_TOL);
    if rank < s {
        return Err(Error::RankDeficient {
            context: "row_complement".into(),
            expected: s,
            actual: rank,
        });
    }
    Ok(kernel_basis(f, DEFAULT_RANK_TOL).transpose())
}

/// Minimum-norm least-squares solution of `L x = b` by SVD with the
/// singular-value cutoff `tol * sigma_max`; returns the solution together
/// with the residual norm `||L x - b||`.
pub fn lstsq_min_norm(l: &RealMatrix, b: &RealVector, tol: f64) -> Result<(RealVector, f64)> {
    if l.nrows() != b.nrows() {
        return Err(Error::dimension(
            "lstsq_min_norm",
            format!("rhs of length {}", l.nrows()),
            format!("{}", b.nrows()),
        ));
    }
    if l.ncols() == 0 {
        return Ok((RealVector::zeros(0), b.norm()));
    }
    if l.nrows() == 0 {
        return Ok((RealVector::zeros(l.ncols()), 0.0));
    }
    let svd = SVD::new(l.clone(), true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = tol * sigma_max;
    let solution = svd.solve(b, cutoff.max(0.0)).map_err(|msg| Error::Numeric {
        context: format!("lstsq_min_norm: {msg}"),
    })?;
    let solution = RealVector::from_column_slice(solution.as_slice());
    let residual = (l * &solution - b).norm();
    Ok((solution, residual))
}
