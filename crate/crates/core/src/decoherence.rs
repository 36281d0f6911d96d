//! Decoherence times: first threshold crossing of the deviation functional,
//! the short-horizon closed-form approximation, Markov-type tail bounds,
//! and threshold sweeps.

use crate::error::{Error, Result};
use crate::moments::DeviationSpec;
use crate::numerics::{expm, HermitianPair, LyapunovPropagator, RealMatrix};
use crate::oqho::StateSpace;
use rayon::prelude::*;

/// Norm below which `||G sqrt(P)||` makes the short-horizon approximation
/// inapplicable.
pub const ASYMPTOTE_TOL: f64 = 1e-14;

/// First time the deviation exceeds its threshold; `Unbounded` when no
/// crossing occurs within the search horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Finite(f64),
    Unbounded,
}

impl Tau {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Tau::Finite(t) => Some(*t),
            Tau::Unbounded => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Tau::Finite(_))
    }
}

/// Search controls for the threshold crossing. Unset fields fall back to:
/// `t_max` = ten times the short-horizon approximation when available,
/// otherwise `10 / ||A||` (or 1 for `A = 0`); `grid_step` = `t_max / 2000`;
/// `bisect_tol` = `1e-9 * t_max`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossingOptions {
    pub t_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub bisect_tol: Option<f64>,
}

/// Outcome of a decoherence-time computation at one threshold level.
#[derive(Debug, Clone)]
pub struct DecoherenceReport {
    pub epsilon: f64,
    pub tau: Tau,
    /// Short-horizon approximation, absent when the cubic coefficient
    /// degenerates.
    pub tau_hat: Option<f64>,
    /// `tau / tau_hat` when both are available.
    pub ratio: Option<f64>,
    /// Absolute threshold `epsilon * ||F sqrt(P)||^2`.
    pub threshold: f64,
    /// Final bisection bracket around the crossing.
    pub crossing_bracket: Option<(f64, f64)>,
    /// Set when the deviation is nearly flat at the crossing, which makes
    /// the reported time ill-conditioned against threshold perturbations.
    pub near_tangency: bool,
}

/// Threshold sweep outcome: one report per level plus a log-log slope fit
/// of the finite crossing times against the levels.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub reports: Vec<DecoherenceReport>,
    pub fitted_slope: Option<f64>,
}

/// Short-horizon approximation of the crossing time,
/// `(||F sqrt(P)|| / ||G sqrt(P)||) sqrt(epsilon)`, valid while the
/// deviation is dominated by its quadratic term.
pub fn approx_decoherence_time(
    spec: &DeviationSpec,
    g: &RealMatrix,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain {
            context: format!("threshold level must be positive and finite, got {epsilon}"),
        });
    }
    let g_scale = (g * spec.sqrt_p()).norm();
    if g_scale <= ASYMPTOTE_TOL {
        return Err(Error::InapplicableAsymptote { g_norm: g_scale });
    }
    Ok(spec.ref_scale().sqrt() / g_scale * epsilon.sqrt())
}

/// Markov-type tail bound: for a threshold `z` above the current deviation
/// `delta`, the excess mass fraction is at most `delta / z`.
pub fn tail_bound(delta: f64, z: f64) -> Result<f64> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain {
            context: format!("deviation must be finite and nonnegative, got {delta}"),
        });
    }
    if !(z > delta && z.is_finite()) {
        return Err(Error::Domain {
            context: format!("tail level must exceed the deviation ({z} vs {delta})"),
        });
    }
    Ok(delta / z)
}

/// Incremental deviation evaluator: shares the Lyapunov propagator between
/// grid walk and bisection so covariances are never recomputed from zero.
struct DeltaEvaluator<'a> {
    ss: &'a StateSpace,
    spec: &'a DeviationSpec,
    prop: LyapunovPropagator<'a>,
    identity: RealMatrix,
}

impl<'a> DeltaEvaluator<'a> {
    fn new(ss: &'a StateSpace, spec: &'a DeviationSpec) -> Result<Self> {
        Ok(DeltaEvaluator {
            ss,
            spec,
            prop: LyapunovPropagator::new(ss.a(), ss.mho())?,
            identity: RealMatrix::identity(ss.n(), ss.n()),
        })
    }

    fn advance(&self, v: &HermitianPair, t0: f64, t1: f64) -> Result<HermitianPair> {
        self.prop.advance(v, t0, t1)
    }

    fn delta(&self, v: &HermitianPair, t: f64) -> Result<f64> {
        let alpha = expm(self.ss.a(), t)? - &self.identity;
        let drift = (self.spec.f() * alpha * self.spec.sqrt_p()).norm_squared();
        let noise = (self.spec.f() * v.re() * self.spec.f().transpose()).trace();
        Ok(drift + noise)
    }
}

/// Computes the first time the deviation exceeds `epsilon` times the
/// reference scale. Scans a uniform grid for the first strict up-crossing,
/// then bisects the bracketing interval down to the tolerance. Returns
/// `Tau::Unbounded` when the horizon is exhausted without a crossing.
pub fn decoherence_time(
    ss: &StateSpace,
    spec: &DeviationSpec,
    epsilon: f64,
    opts: &CrossingOptions,
) -> Result<DecoherenceReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain {
            context: format!("threshold level must be positive and finite, got {epsilon}"),
        });
    }
    if spec.f().ncols() != ss.n() {
        return Err(Error::dimension(
            "deviation rows vs state space",
            format!("columns {}", ss.n()),
            format!("columns {}", spec.f().ncols()),
        ));
    }
    let threshold = epsilon * spec.ref_scale();
    let g = spec.f() * ss.a0();
    let tau_hat = match approx_decoherence_time(spec, &g, epsilon) {
        Ok(t) => Some(t),
        Err(Error::InapplicableAsymptote { .. }) => None,
        Err(e) => return Err(e),
    };

    let t_max = match opts.t_max {
        Some(t) => t,
        None => match tau_hat {
            Some(t) => 10.0 * t,
            None => {
                let a_norm = ss.a().norm();
                if a_norm > 0.0 {
                    10.0 / a_norm
                } else {
                    1.0
                }
            }
        },
    };
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain {
            context: format!("search horizon must be positive and finite, got {t_max}"),
        });
    }
    let grid_step = opts.grid_step.unwrap_or(t_max / 2000.0);
    if !(grid_step > 0.0 && grid_step <= t_max) {
        return Err(Error::Grid {
            context: format!("grid step {grid_step} incompatible with horizon {t_max}"),
        });
    }
    let bisect_tol = opts.bisect_tol.unwrap_or(1e-9 * t_max);
    if !(bisect_tol > 0.0 && bisect_tol.is_finite()) {
        return Err(Error::Grid {
            context: format!("bisection tolerance must be positive, got {bisect_tol}"),
        });
    }

    let eval = DeltaEvaluator::new(ss, spec)?;
    let n_steps = (t_max / grid_step).ceil() as usize;

    // Grid walk: V is carried forward incrementally; the crossing bracket
    // keeps the covariance at its lower endpoint.
    let mut t_lo = 0.0_f64;
    let mut v_lo = eval.prop.initial();
    let mut bracket: Option<(f64, f64, HermitianPair)> = None;
    for i in 1..=n_steps {
        let t = (i as f64 * grid_step).min(t_max);
        let v = eval.advance(&v_lo, t_lo, t)?;
        let delta = eval.delta(&v, t)?;
        if delta > threshold {
            bracket = Some((t_lo, t, v_lo.clone()));
            break;
        }
        t_lo = t;
        v_lo = v;
        if t >= t_max {
            break;
        }
    }

    let Some((mut lo, mut hi, mut v_at)) = bracket else {
        return Ok(DecoherenceReport {
            epsilon,
            tau: Tau::Unbounded,
            tau_hat,
            ratio: None,
            threshold,
            crossing_bracket: None,
            near_tangency: false,
        });
    };

    // v_at tracks the covariance at time t_at <= lo.
    let mut t_at = lo;
    while hi - lo > bisect_tol {
        let mid = 0.5 * (lo + hi);
        let v_mid = eval.advance(&v_at, t_at, mid)?;
        if eval.delta(&v_mid, mid)? > threshold {
            hi = mid;
        } else {
            lo = mid;
            v_at = v_mid;
            t_at = mid;
        }
    }
    let tau = 0.5 * (lo + hi);

    // Flat crossings make tau ill-conditioned; flag them via a centered
    // difference of the deviation around the crossing.
    let probe = bisect_tol.max(1e-12 * t_max);
    let t_minus = (tau - probe).max(t_at);
    let v_minus = eval.advance(&v_at, t_at, t_minus)?;
    let d_minus = eval.delta(&v_minus, t_minus)?;
    let v_plus = eval.advance(&v_minus, t_minus, tau + probe)?;
    let d_plus = eval.delta(&v_plus, tau + probe)?;
    let slope = (d_plus - d_minus) / (tau + probe - t_minus);
    let near_tangency = slope.abs() * tau.max(probe) < 1e-8 * threshold.max(f64::MIN_POSITIVE);

    Ok(DecoherenceReport {
        epsilon,
        tau: Tau::Finite(tau),
        tau_hat,
        ratio: tau_hat.map(|th| tau / th),
        threshold,
        crossing_bracket: Some((lo, hi)),
        near_tangency,
    })
}

/// Runs [`decoherence_time`] over a family of threshold levels in parallel
/// and fits the log-log slope of the finite crossing times.
pub fn epsilon_sweep(
    ss: &StateSpace,
    spec: &DeviationSpec,
    eps_grid: &[f64],
    opts: &CrossingOptions,
) -> Result<SweepResult> {
    if eps_grid.is_empty() {
        return Err(Error::Grid {
            context: "threshold sweep requires at least one level".into(),
        });
    }
    let reports: Vec<DecoherenceReport> = eps_grid
        .par_iter()
        .map(|&eps| decoherence_time(ss, spec, eps, opts))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|r| r.tau.finite().map(|t| (r.epsilon, t)))
        .filter(|&(e, t)| e > 0.0 && t > 0.0)
        .collect();
    let fitted_slope = fit_log_slope(&points);
    Ok(SweepResult {
        reports,
        fitted_slope,
    })
}

/// Least-squares slope of `ln y` against `ln x` over strictly positive
/// pairs; `None` with fewer than two usable points or a degenerate spread.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(x, y)| x > 0.0 && y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= 1e-30 {
        return None;
    }
    let sxy: f64 = logs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isolation::isolation_basis;
    use crate::moments::{deviation_spec, deviation_trajectory};
    use crate::oqho::{realize, CcrStructure, OqhoParams};

    fn isolated_setup() -> (StateSpace, DeviationSpec) {
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
        let f = isolation_basis(&ss, 2).unwrap().f().clone();
        let p = RealMatrix::identity(4, 4) * 0.5;
        let spec = deviation_spec(&f, &p, &ccr, false).unwrap();
        (ss, spec)
    }

    #[test]
    fn approximation_arithmetic() {
        let ccr = CcrStructure::new(1, 2).unwrap();
        let f = RealMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p = RealMatrix::identity(2, 2);
        let spec = deviation_spec(&f, &p, &ccr, true).unwrap();
        assert!((spec.ref_scale() - 1.0).abs() <= 1e-15);
        let g = RealMatrix::from_row_slice(1, 2, &[0.0, 2.0]);
        // tau_hat = (1 / 2) sqrt(0.01) = 0.05.
        let tau_hat = approx_decoherence_time(&spec, &g, 0.01).unwrap();
        assert!((tau_hat - 0.05).abs() <= 1e-15);
        // sqrt(epsilon) scaling.
        let scaled = approx_decoherence_time(&spec, &g, 0.04).unwrap();
        assert!((scaled / tau_hat - 2.0).abs() <= 1e-12);
        // Degenerate G.
        assert!(matches!(
            approx_decoherence_time(&spec, &RealMatrix::zeros(1, 2), 0.01),
            Err(Error::InapplicableAsymptote { .. })
        ));
        assert!(approx_decoherence_time(&spec, &g, 0.0).is_err());
    }

    #[test]
    fn tail_bound_cases() {
        assert!((tail_bound(0.2, 0.5).unwrap() - 0.4).abs() <= 1e-15);
        assert_eq!(tail_bound(0.0, 1.0).unwrap(), 0.0);
        assert!(tail_bound(0.5, 0.5).is_err());
        assert!(tail_bound(-0.1, 1.0).is_err());
        assert!(tail_bound(0.1, f64::INFINITY).is_err());
    }

    #[test]
    fn closed_system_below_threshold_never_crosses() {
        // Pure rotation gives delta(t) = 1 - cos t, peaking at 2, which is
        // 4 ref_scale; a threshold above that is never crossed.
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
        let opts = CrossingOptions {
            t_max: Some(20.0),
            ..Default::default()
        };
        let report = decoherence_time(&ss, &spec, 5.0, &opts).unwrap();
        assert_eq!(report.tau, Tau::Unbounded);
        assert!(report.ratio.is_none());
        assert!(report.crossing_bracket.is_none());

        // A threshold below the rotation peak is crossed: delta(t) =
        // (1 - cos t), so delta = eps * 0.5 at t = acos(1 - eps/2).
        let report = decoherence_time(&ss, &spec, 0.5, &opts).unwrap();
        let tau = report.tau.finite().unwrap();
        let expected = (1.0_f64 - 0.25).acos();
        assert!(
            (tau - expected).abs() <= 1e-6,
            "tau {tau} vs closed form {expected}"
        );
    }

    #[test]
    fn crossing_satisfies_level_identity() {
        let (ss, spec) = isolated_setup();
        let report = decoherence_time(&ss, &spec, 0.1, &CrossingOptions::default()).unwrap();
        let tau = report.tau.finite().expect("crossing expected");
        let traj = deviation_trajectory(&ss, &spec, &[0.0, tau]).unwrap();
        let rel = (traj.delta[1] - report.threshold).abs() / report.threshold;
        assert!(rel <= 1e-6, "level identity residual {rel:.3e}");
        let (lo, hi) = report.crossing_bracket.unwrap();
        assert!(lo <= tau && tau <= hi);
        assert!(!report.near_tangency);
    }

    #[test]
    fn small_threshold_ratio_approaches_one() {
        let (ss, spec) = isolated_setup();
        let report = decoherence_time(&ss, &spec, 1e-6, &CrossingOptions::default()).unwrap();
        let ratio = report.ratio.expect("approximation applicable");
        assert!(
            (ratio - 1.0).abs() <= 0.05,
            "tau/tau_hat = {ratio} too far from 1"
        );
    }

    #[test]
    fn sweep_slope_is_one_half() {
        let (ss, spec) = isolated_setup();
        let eps: Vec<f64> = (0..7).map(|i| 1e-6 * 4.0_f64.powi(i)).collect();
        let sweep = epsilon_sweep(&ss, &spec, &eps, &CrossingOptions::default()).unwrap();
        assert_eq!(sweep.reports.len(), eps.len());
        let slope = sweep.fitted_slope.expect("finite crossings");
        assert!(
            (slope - 0.5).abs() <= 0.03,
            "log-log slope {slope} should be near 1/2"
        );
        // Monotone in the threshold level.
        for w in sweep.reports.windows(2) {
            let a = w[0].tau.finite().unwrap();
            let b = w[1].tau.finite().unwrap();
            assert!(b >= a * (1.0 - 1e-9));
        }
    }

    #[test]
    fn slope_fit_basics() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, (i as f64).powi(3))).collect();
        let slope = fit_log_slope(&pts).unwrap();
        assert!((slope - 3.0).abs() <= 1e-12);
        assert!(fit_log_slope(&[(1.0, 2.0)]).is_none());
        assert!(fit_log_slope(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
        assert!(fit_log_slope(&[(-1.0, 2.0), (1.0, 3.0)]).is_none());
    }
}
