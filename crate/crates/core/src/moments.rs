//! Second-moment dynamics of the isolated variables: the deviation
//! functional, its trajectory on a time grid, and the short-horizon Taylor
//! data at `t = 0`.

use crate::error::{Error, Result};
use crate::numerics::{
    expm, integrate_lyapunov, numerical_rank, sqrtm_psd, RealMatrix, DEFAULT_RANK_TOL,
};
use crate::oqho::{CcrStructure, StateSpace};

/// Threshold below which `||F sqrt(P)||^2` counts as degenerate.
pub const TRIVIAL_SCALE_TOL: f64 = 1e-14;

/// Tolerance on the smallest eigenvalue of the quantum state test
/// `P + i Theta >= 0`.
pub const PHYSICALITY_TOL: f64 = 1e-10;

/// Ingredients of the deviation functional for fixed rows `F` and initial
/// covariance `P`: the weight `Sigma = F^T F`, the factor `sqrt(P)`, and the
/// reference scale `||F sqrt(P)||^2` used to normalize thresholds.
#[derive(Debug, Clone)]
pub struct DeviationSpec {
    f: RealMatrix,
    sigma: RealMatrix,
    p: RealMatrix,
    sqrt_p: RealMatrix,
    ref_scale: f64,
}

impl DeviationSpec {
    pub fn f(&self) -> &RealMatrix {
        &self.f
    }

    pub fn sigma(&self) -> &RealMatrix {
        &self.sigma
    }

    pub fn p(&self) -> &RealMatrix {
        &self.p
    }

    pub fn sqrt_p(&self) -> &RealMatrix {
        &self.sqrt_p
    }

    /// `||F sqrt(P)||_F^2`, the squared size of the isolated variables in
    /// the initial state.
    pub fn ref_scale(&self) -> f64 {
        self.ref_scale
    }
}

/// Validates the rows and the initial covariance and precomputes the
/// derived quantities.
///
/// `P` must be symmetric and, unless `allow_unphysical` is set, satisfy the
/// state condition `P + i Theta >= 0` (checked on the doubled real
/// symmetric form `[[P, -Theta], [Theta, P]]`).
pub fn deviation_spec(
    f: &RealMatrix,
    p: &RealMatrix,
    ccr: &CcrStructure,
    allow_unphysical: bool,
) -> Result<DeviationSpec> {
    let n = ccr.n();
    if f.ncols() != n || f.nrows() == 0 || f.nrows() > n {
        return Err(Error::dimension(
            "deviation rows",
            format!("s x {n} with 1 <= s <= {n}"),
            format!("{}x{}", f.nrows(), f.ncols()),
        ));
    }
    let rank = numerical_rank(f, DEFAULT_RANK_TOL);
    if rank < f.nrows() {
        return Err(Error::RankDeficient {
            context: "deviation rows".into(),
            expected: f.nrows(),
            actual: rank,
        });
    }
    if p.shape() != (n, n) {
        return Err(Error::dimension(
            "initial covariance",
            format!("{n}x{n}"),
            format!("{}x{}", p.nrows(), p.ncols()),
        ));
    }
    let asym = (p - p.transpose()).norm();
    let tol = 1e-12 * (1.0 + p.norm());
    if asym > tol {
        return Err(Error::Asymmetric {
            name: "initial covariance".into(),
            asymmetry: asym,
            tol,
        });
    }
    if !allow_unphysical {
        let theta = ccr.theta();
        let mut doubled = RealMatrix::zeros(2 * n, 2 * n);
        doubled.view_mut((0, 0), (n, n)).copy_from(p);
        doubled.view_mut((0, n), (n, n)).copy_from(&(-theta));
        doubled.view_mut((n, 0), (n, n)).copy_from(theta);
        doubled.view_mut((n, n), (n, n)).copy_from(p);
        let sym = (&doubled + doubled.transpose()) * 0.5;
        let eigen = sym.symmetric_eigen();
        let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -PHYSICALITY_TOL {
            return Err(Error::UnphysicalState { eigenvalue: min_eig });
        }
    }
    let sqrt_p = sqrtm_psd(p, PHYSICALITY_TOL * (1.0 + p.norm()))?;
    let ref_scale = (f * &sqrt_p).norm_squared();
    if ref_scale <= TRIVIAL_SCALE_TOL {
        return Err(Error::TrivialCase { ref_scale });
    }
    Ok(DeviationSpec {
        f: f.clone(),
        sigma: f.transpose() * f,
        p: p.clone(),
        sqrt_p,
        ref_scale,
    })
}

/// Deviation of the isolated variables sampled on a time grid, split into
/// the drift contribution `||F (e^{tA} - I) sqrt(P)||^2` and the noise
/// contribution `<Sigma, Re V(t)>`.
#[derive(Debug, Clone)]
pub struct DeviationTrajectory {
    pub t_grid: Vec<f64>,
    /// Total deviation at each grid time.
    pub delta: Vec<f64>,
    /// `F Re V(t) F^T` at each grid time (its trace is the noise term).
    pub v_re_f: Vec<RealMatrix>,
    /// Drift contribution at each grid time.
    pub state_term: Vec<f64>,
}

impl DeviationTrajectory {
    /// Noise contribution `delta - state_term` at grid index `i`.
    pub fn noise_term(&self, i: usize) -> f64 {
        self.v_re_f[i].trace()
    }
}

/// Evaluates the deviation functional along `t_grid` (which must start at
/// zero and increase strictly). The noise covariance is propagated once
/// through the whole grid; the drift term uses the exact propagator at each
/// sample.
pub fn deviation_trajectory(
    ss: &StateSpace,
    spec: &DeviationSpec,
    t_grid: &[f64],
) -> Result<DeviationTrajectory> {
    if spec.f.ncols() != ss.n() {
        return Err(Error::dimension(
            "deviation rows vs state space",
            format!("columns {}", ss.n()),
            format!("columns {}", spec.f.ncols()),
        ));
    }
    let covariances = integrate_lyapunov(ss.a(), ss.mho(), t_grid)?;
    let mut delta = Vec::with_capacity(t_grid.len());
    let mut v_re_f = Vec::with_capacity(t_grid.len());
    let mut state_term = Vec::with_capacity(t_grid.len());
    let identity = RealMatrix::identity(ss.n(), ss.n());
    for (t, v) in t_grid.iter().zip(covariances.iter()) {
        let alpha = expm(ss.a(), *t)? - &identity;
        let drift = (&spec.f * alpha * &spec.sqrt_p).norm_squared();
        let projected = &spec.f * v.re() * spec.f.transpose();
        delta.push(drift + projected.trace());
        state_term.push(drift);
        v_re_f.push(projected);
    }
    Ok(DeviationTrajectory {
        t_grid: t_grid.to_vec(),
        delta,
        v_re_f,
        state_term,
    })
}

/// Taylor data of the deviation at `t = 0`.
///
/// With `F B = 0` the first two derivatives vanish and the leading behavior
/// is cubic, `delta(t) ~ t^3 tr(third_order_matrix)` with
/// `third_order_matrix = (1/3) G (B B^T) G^T`, `G = F A0`. Without the
/// isolation property the leading term is `t ||F B||^2`.
#[derive(Debug, Clone)]
pub struct ShortHorizon {
    pub delta0: f64,
    /// First derivative at zero: `||F B||_F^2`.
    pub delta_dot0: f64,
    /// Second derivative at zero:
    /// `2 (||F A sqrt(P)||_F^2 + <F B, F A B>_F)`.
    pub delta_ddot0: f64,
    /// Cubic coefficient matrix of the noise term under `F B = 0`.
    pub third_order_matrix: RealMatrix,
}

/// Computes the short-horizon expansion coefficients for the pair
/// `(state space, deviation spec)`.
pub fn short_horizon(ss: &StateSpace, spec: &DeviationSpec) -> Result<ShortHorizon> {
    if spec.f.ncols() != ss.n() {
        return Err(Error::dimension(
            "deviation rows vs state space",
            format!("columns {}", ss.n()),
            format!("columns {}", spec.f.ncols()),
        ));
    }
    let fb = &spec.f * ss.b();
    let fa = &spec.f * ss.a();
    let delta_dot0 = fb.norm_squared();
    let delta_ddot0 = 2.0 * ((&fa * &spec.sqrt_p).norm_squared() + fb.dot(&(&fa * ss.b())));
    let g = &spec.f * ss.a0();
    let third_order_matrix = (&g * ss.mho().re() * g.transpose()) / 3.0;
    Ok(ShortHorizon {
        delta0: 0.0,
        delta_dot0,
        delta_ddot0,
        third_order_matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gramian_quadrature;
    use crate::oqho::{realize, OqhoParams};

    fn open_system() -> (StateSpace, CcrStructure) {
        let ccr = CcrStructure::new(2, 2).unwrap();
        let energy = RealMatrix::from_row_slice(
            4,
            4,
            &[
                0.8, 0.1, 0.0, -0.2, 0.1, 0.5, 0.3, 0.0, 0.0, 0.3, 1.1, -0.4, -0.2, 0.0, -0.4,
                0.9,
            ],
        );
        let coupling =
            RealMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let params = OqhoParams::new(energy, coupling, None).unwrap();
        let ss = realize(&params, &ccr).unwrap();
        (ss, ccr)
    }

    fn isolating_rows(ss: &StateSpace) -> RealMatrix {
        crate::isolation::isolation_basis(ss, 2).unwrap().f().clone()
    }

    #[test]
    fn vacuum_state_is_physical_and_halved_identity_is_extremal() {
        let (_, ccr) = open_system();
        let p = RealMatrix::identity(4, 4) * 0.5;
        let f = RealMatrix::identity(4, 4);
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        assert!((spec.ref_scale() - 2.0).abs() <= 1e-12);

        // Covariance below the uncertainty floor must be rejected ...
        let squeezed = RealMatrix::identity(4, 4) * 0.25;
        assert!(matches!(
            deviation_spec(&f, &squeezed, &ccr, false),
            Err(Error::UnphysicalState { .. })
        ));
        // ... unless explicitly allowed.
        let spec = deviation_spec(&f, &squeezed, &ccr, true).unwrap();
        assert!((spec.ref_scale() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sqrt_factor_reproduces_covariance() {
        let (_, ccr) = open_system();
        let p = RealMatrix::from_row_slice(
            4,
            4,
            &[
                0.9, 0.1, 0.0, 0.0, 0.1, 0.8, 0.05, 0.0, 0.0, 0.05, 1.2, -0.1, 0.0, 0.0, -0.1,
                0.7,
            ],
        );
        let f = RealMatrix::identity(4, 4);
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        assert!((spec.sqrt_p() * spec.sqrt_p() - &p).norm() <= 1e-12);
        // ref_scale = ||sqrt(P)||^2 = tr(P) when F = I.
        assert!((spec.ref_scale() - p.trace()).abs() <= 1e-12);
    }

    #[test]
    fn zero_rows_are_a_degenerate_request() {
        let (_, ccr) = open_system();
        let p = RealMatrix::identity(4, 4) * 0.5;
        let f = RealMatrix::zeros(1, 4);
        // Rank check fires before the trivial-scale check.
        assert!(matches!(
            deviation_spec(&f, &p, &ccr, false),
            Err(Error::RankDeficient { .. })
        ));
        // A zero covariance gives a genuinely trivial scale.
        let f = RealMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            deviation_spec(&f, &RealMatrix::zeros(4, 4), &ccr, true),
            Err(Error::TrivialCase { .. })
        ));
    }

    #[test]
    fn closed_system_deviation_is_pure_drift() {
        let ccr = CcrStructure::new(1, 2).unwrap();
        let params = OqhoParams::new(
            RealMatrix::identity(2, 2),
            RealMatrix::zeros(2, 2),
            None,
        )
        .unwrap();
        let ss = realize(&params, &ccr).unwrap();
        let f = RealMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = RealMatrix::identity(2, 2) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| 0.3 * i as f64).collect();
        let traj = deviation_trajectory(&ss, &spec, &grid).unwrap();
        for i in 0..grid.len() {
            assert!(traj.noise_term(i).abs() <= 1e-14);
            assert!((traj.delta[i] - traj.state_term[i]).abs() <= 1e-14);
        }
        // A = bJ rotates, so F(e^{tA} - I) sqrt(P) has norm
        // 2 sin(t/2)^2 + ... : check against the closed form
        // ||e1^T (e^{tA} - I)||^2 * 0.5 = (2 - 2 cos t) * 0.5.
        for (i, t) in grid.iter().enumerate() {
            let expected = (1.0 - t.cos()) * 1.0;
            assert!(
                (traj.delta[i] - expected).abs() <= 1e-10,
                "t = {t}: {} vs {expected}",
                traj.delta[i]
            );
        }
    }

    #[test]
    fn noise_term_matches_quadrature_oracle() {
        let (ss, ccr) = open_system();
        let f = isolating_rows(&ss);
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let grid = [0.0, 0.25, 0.5, 1.0];
        let traj = deviation_trajectory(&ss, &spec, &grid).unwrap();
        let oracle = gramian_quadrature(ss.a(), ss.b(), ccr.j_field(), 1.0).unwrap();
        let projected = &f * oracle.re() * f.transpose();
        assert!((traj.v_re_f[3].clone() - projected).norm() <= 1e-8);
    }

    #[test]
    fn trace_identity_for_long_time_limit() {
        // <Sigma, P> = ||F sqrt(P)||^2: the weight applied to the initial
        // covariance itself reproduces the reference scale.
        let (ss, ccr) = open_system();
        let f = isolating_rows(&ss);
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let weighted = (spec.sigma() * &p).trace();
        assert!((weighted - spec.ref_scale()).abs() <= 1e-12);
        let _ = ss;
    }

    #[test]
    fn short_horizon_derivatives_match_finite_differences() {
        let (ss, ccr) = open_system();
        // Generic (non-isolating) rows so both derivatives are non-zero.
        let f = RealMatrix::from_row_slice(2, 4, &[1.0, 0.2, 0.0, 0.3, 0.0, 1.0, -0.1, 0.0]);
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let sh = short_horizon(&ss, &spec).unwrap();
        assert!(sh.delta_dot0 > 1e-3);

        let h = 1e-5;
        let grid = [0.0, h, 2.0 * h];
        let traj = deviation_trajectory(&ss, &spec, &grid).unwrap();
        let fd_dot = traj.delta[1] / h;
        assert!(
            (fd_dot - sh.delta_dot0).abs() <= 1e-3 * (1.0 + sh.delta_dot0.abs()),
            "fd {fd_dot} vs {}",
            sh.delta_dot0
        );
        let fd_ddot = (traj.delta[2] - 2.0 * traj.delta[1]) / (h * h);
        assert!(
            (fd_ddot - sh.delta_ddot0).abs() <= 1e-2 * (1.0 + sh.delta_ddot0.abs()),
            "fd {fd_ddot} vs {}",
            sh.delta_ddot0
        );
    }

    #[test]
    fn isolated_rows_have_cubic_leading_term() {
        let (ss, ccr) = open_system();
        let f = isolating_rows(&ss);
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let sh = short_horizon(&ss, &spec).unwrap();
        assert!(sh.delta_dot0 <= 1e-20);
        // F B = 0 turns the second derivative into 2 ||G sqrt(P)||^2.
        let g = &f * ss.a0();
        let expected = 2.0 * (&g * spec.sqrt_p()).norm_squared();
        assert!((sh.delta_ddot0 - expected).abs() <= 1e-10 * (1.0 + expected));

        // Noise term at small t matches (t^3 / 3) G B B^T G^T in trace.
        let t = 1e-4;
        let grid = [0.0, t];
        let traj = deviation_trajectory(&ss, &spec, &grid).unwrap();
        let cubic = t.powi(3) * sh.third_order_matrix.trace();
        let noise = traj.noise_term(1);
        assert!(
            (noise - cubic).abs() <= 0.02 * cubic.abs().max(1e-30),
            "noise {noise:.6e} vs cubic {cubic:.6e}"
        );
    }

    #[test]
    fn deviation_is_nonnegative_and_projected_block_is_psd() {
        let (ss, ccr) = open_system();
        let f = isolating_rows(&ss);
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| 0.2 * i as f64).collect();
        let traj = deviation_trajectory(&ss, &spec, &grid).unwrap();
        for (i, v) in traj.v_re_f.iter().enumerate() {
            assert!(traj.delta[i] >= -1e-12);
            assert!(traj.state_term[i] >= -1e-12);
            let sym = (v.clone() + v.transpose()) * 0.5;
            let min_eig = sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-10, "t = {}: min eig {min_eig}", grid[i]);
        }
    }
}
