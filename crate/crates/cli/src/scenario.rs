//! Scenario files: JSON schema, exhaustive validation (all failures are
//! collected, not just the first), and instantiation into library types.
//!
//! Matrices are row-major nested arrays in the fixed variable ordering
//! `(q1, p1, q2, p2, ...)`; the ordering itself cannot be validated, only
//! dimensions and symmetries are.

use crate::artifacts::rows_to_matrix;
use crate::error::{CliError, CliResult};
use qmemtime_core::oqho::{
    compose, realize, validate_selector, CcrStructure, InterconnectionSpec, OqhoParams,
};
use qmemtime_core::{RealMatrix, StateSpace};
use serde::Deserialize;
use std::path::Path;

pub const SUPPORTED_SCHEMA: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Interconnection,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Interconnection => "interconnection",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorBlock {
    pub nu: usize,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "D", default)]
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(rename = "N", default)]
    pub n: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolationSection {
    pub s: usize,
    #[serde(rename = "F_override", default)]
    pub f_override: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: String,
    pub mode: Mode,
    pub oscillators: Vec<OscillatorBlock>,
    #[serde(rename = "R12", default)]
    pub r12: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P", default)]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub isolation: Option<IsolationSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub seed: u64,
}

/// Fully validated scenario, still at the parameter level; realization
/// happens in [`Scenario::instantiate`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: Mode,
    pub oscillators: Vec<ValidatedOscillator>,
    pub r12: Option<RealMatrix>,
    /// Initial covariance; defaults to the isotropic minimum-uncertainty
    /// choice `P = I/2`.
    pub p: RealMatrix,
    pub isolation_order: usize,
    pub f_override: Option<RealMatrix>,
    pub analysis: AnalysisSection,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ValidatedOscillator {
    pub nu: usize,
    pub energy: RealMatrix,
    pub coupling: RealMatrix,
    pub selector: Option<RealMatrix>,
    pub cross: Option<RealMatrix>,
}

/// Realized scenario ready for analysis commands.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: OqhoParams,
    pub ccr: CcrStructure,
    pub ss: StateSpace,
    pub p: RealMatrix,
    /// Present for interconnections: the validated pair spec, the
    /// coupling-independent part of the energy, and the first subsystem
    /// dimension.
    pub composite: Option<CompositePart>,
}

#[derive(Debug, Clone)]
pub struct CompositePart {
    pub spec: InterconnectionSpec,
    pub r_star: RealMatrix,
    pub n1: usize,
}

/// Reads and validates a scenario file. Parse problems report line and
/// column; validation problems are collected exhaustively.
pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        message: e.to_string(),
        line: e.line(),
        column: e.column(),
    })?;
    validate(file)
}

fn expect_shape(
    failures: &mut Vec<String>,
    rows: &[Vec<f64>],
    name: &str,
    want_rows: usize,
    want_cols: usize,
) -> Option<RealMatrix> {
    match rows_to_matrix(rows, name) {
        Ok(m) => {
            if m.shape() != (want_rows, want_cols) {
                failures.push(format!(
                    "{name}: expected {want_rows}x{want_cols}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                ));
                None
            } else {
                Some(m)
            }
        }
        Err(msg) => {
            failures.push(msg);
            None
        }
    }
}

fn expect_symmetric(failures: &mut Vec<String>, m: &RealMatrix, name: &str) {
    let asym = (m - m.transpose()).norm();
    let tol = 1e-12 * (1.0 + m.norm());
    if asym > tol {
        failures.push(format!(
            "{name}: not symmetric, max asymmetry norm {asym:.6e} exceeds {tol:.6e}"
        ));
    }
}

fn validate(file: ScenarioFile) -> CliResult<Scenario> {
    let mut failures: Vec<String> = Vec::new();

    if file.schema_version != SUPPORTED_SCHEMA {
        failures.push(format!(
            "schema_version: expected \"{SUPPORTED_SCHEMA}\", got \"{}\"",
            file.schema_version
        ));
    }
    let expected_oscillators = match file.mode {
        Mode::Single => 1,
        Mode::Interconnection => 2,
    };
    if file.oscillators.len() != expected_oscillators {
        failures.push(format!(
            "oscillators: {} mode requires exactly {expected_oscillators}, got {}",
            file.mode.as_str(),
            file.oscillators.len()
        ));
        return Err(CliError::Scenario { failures });
    }

    let mut oscillators = Vec::new();
    for (idx, osc) in file.oscillators.iter().enumerate() {
        let label = format!("oscillator {}", idx + 1);
        if osc.nu == 0 {
            failures.push(format!("{label}: nu must be at least 1"));
            continue;
        }
        let n = 2 * osc.nu;
        let energy = expect_shape(&mut failures, &osc.r, &format!("{label}: R"), n, n);
        if let Some(r) = &energy {
            expect_symmetric(&mut failures, r, &format!("{label}: R"));
        }
        let m_rows = osc.m.len();
        let coupling = if m_rows == 0 || m_rows % 2 != 0 {
            failures.push(format!(
                "{label}: M must have a positive even number of rows, got {m_rows}"
            ));
            None
        } else {
            expect_shape(&mut failures, &osc.m, &format!("{label}: M"), m_rows, n)
        };
        let selector = match &osc.d {
            None => None,
            Some(rows) => {
                let r = rows.len();
                let parsed = if r == 0 {
                    failures.push(format!("{label}: D must have at least one row"));
                    None
                } else {
                    expect_shape(&mut failures, rows, &format!("{label}: D"), r, m_rows)
                };
                if let Some(d) = &parsed {
                    if let Err(e) = validate_selector(d) {
                        failures.push(format!("{label}: D: {e}"));
                    }
                }
                parsed
            }
        };
        let cross = match (&osc.n, file.mode) {
            (None, Mode::Single) => None,
            (Some(_), Mode::Single) => {
                failures.push(format!("{label}: N is only meaningful for interconnections"));
                None
            }
            (None, Mode::Interconnection) => {
                failures.push(format!("{label}: N is required for interconnections"));
                None
            }
            (Some(rows), Mode::Interconnection) => {
                // N_k has one row per selected output of the *other*
                // oscillator and one column per variable of this one;
                // both dimensions are checked below once the partner's
                // output count is known.
                match rows_to_matrix(rows, &format!("{label}: N")) {
                    Ok(m) => Some(m),
                    Err(msg) => {
                        failures.push(msg);
                        None
                    }
                }
            }
        };
        oscillators.push(ValidatedOscillator {
            nu: osc.nu,
            energy: energy.unwrap_or_else(|| RealMatrix::zeros(n, n)),
            coupling: coupling.unwrap_or_else(|| RealMatrix::zeros(2.max(m_rows), n)),
            selector,
            cross,
        });
    }

    // Cross-coupling shapes need both oscillators.
    if file.mode == Mode::Interconnection && oscillators.len() == 2 {
        let r_of = |o: &ValidatedOscillator| match &o.selector {
            Some(d) => d.nrows(),
            None => o.coupling.nrows(),
        };
        let (n1, n2) = (2 * oscillators[0].nu, 2 * oscillators[1].nu);
        let (r1, r2) = (r_of(&oscillators[0]), r_of(&oscillators[1]));
        for (idx, (want_rows, want_cols)) in [(r2, n1), (r1, n2)].iter().enumerate() {
            if let Some(nk) = &oscillators[idx].cross {
                if nk.shape() != (*want_rows, *want_cols) {
                    failures.push(format!(
                        "oscillator {}: N: expected {want_rows}x{want_cols}, got {}x{}",
                        idx + 1,
                        nk.nrows(),
                        nk.ncols()
                    ));
                }
            }
        }
    }

    let n_total: usize = oscillators.iter().map(|o| 2 * o.nu).sum();

    let r12 = match (&file.r12, file.mode) {
        (None, _) => None,
        (Some(_), Mode::Single) => {
            failures.push("R12: only meaningful for interconnections".into());
            None
        }
        (Some(rows), Mode::Interconnection) => {
            let (n1, n2) = (2 * oscillators[0].nu, 2 * oscillators[1].nu);
            expect_shape(&mut failures, rows, "R12", n1, n2)
        }
    };

    let p = match &file.p {
        None => RealMatrix::identity(n_total, n_total) * 0.5,
        Some(rows) => match expect_shape(&mut failures, rows, "P", n_total, n_total) {
            Some(m) => {
                expect_symmetric(&mut failures, &m, "P");
                m
            }
            None => RealMatrix::identity(n_total, n_total) * 0.5,
        },
    };

    let (isolation_order, f_override) = match &file.isolation {
        None => (1, None),
        Some(section) => {
            if section.s == 0 {
                failures.push("isolation: s must be at least 1".into());
            }
            let f = match &section.f_override {
                None => None,
                Some(rows) => expect_shape(
                    &mut failures,
                    rows,
                    "isolation: F_override",
                    section.s.max(1),
                    n_total,
                ),
            };
            (section.s.max(1), f)
        }
    };

    let analysis = file.analysis.clone();
    if let Some(t) = analysis.t_max {
        if !(t > 0.0 && t.is_finite()) {
            failures.push(format!("analysis: t_max must be positive and finite, got {t}"));
        }
    }
    if let Some(g) = analysis.grid_points {
        if g < 2 {
            failures.push(format!("analysis: grid_points must be at least 2, got {g}"));
        }
    }
    if let Some(e) = analysis.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            failures.push(format!("analysis: epsilon must be positive and finite, got {e}"));
        }
    }
    if let Some(grid) = &analysis.eps_grid {
        if grid.is_empty() {
            failures.push("analysis: eps_grid must be non-empty when present".into());
        }
        for (i, e) in grid.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                failures.push(format!(
                    "analysis: eps_grid[{i}] must be positive and finite, got {e}"
                ));
            }
        }
    }

    if !failures.is_empty() {
        return Err(CliError::Scenario { failures });
    }

    Ok(Scenario {
        mode: file.mode,
        oscillators,
        r12,
        p,
        isolation_order,
        f_override,
        analysis,
        seed: file.seed,
    })
}

impl Scenario {
    /// Total number of system variables.
    pub fn n_total(&self) -> usize {
        self.oscillators.iter().map(|o| 2 * o.nu).sum()
    }

    /// Builds the validated parameters of one oscillator.
    fn params_of(&self, idx: usize) -> CliResult<OqhoParams> {
        let osc = &self.oscillators[idx];
        Ok(OqhoParams::new(
            osc.energy.clone(),
            osc.coupling.clone(),
            osc.selector.clone(),
        )?)
    }

    /// Builds the pair spec for interconnection scenarios.
    pub fn pair_spec(&self) -> CliResult<InterconnectionSpec> {
        let params1 = self.params_of(0)?;
        let params2 = self.params_of(1)?;
        let n1 = self.oscillators[0]
            .cross
            .clone()
            .expect("validated interconnection has N1");
        let n2 = self.oscillators[1]
            .cross
            .clone()
            .expect("validated interconnection has N2");
        let r12 = self
            .r12
            .clone()
            .unwrap_or_else(|| RealMatrix::zeros(params1.n(), params2.n()));
        Ok(InterconnectionSpec::new(params1, params2, n1, n2, r12)?)
    }

    /// Realizes the scenario into a state space (composing the pair first
    /// in interconnection mode).
    pub fn instantiate(&self) -> CliResult<Instance> {
        match self.mode {
            Mode::Single => {
                let params = self.params_of(0)?;
                let ccr = CcrStructure::new(params.nu(), params.m())?;
                let ss = realize(&params, &ccr)?;
                Ok(Instance {
                    params,
                    ccr,
                    ss,
                    p: self.p.clone(),
                    composite: None,
                })
            }
            Mode::Interconnection => {
                let spec = self.pair_spec()?;
                let n1 = spec.n1();
                let inter = compose(&spec)?;
                Ok(Instance {
                    params: inter.params,
                    ccr: inter.ccr,
                    ss: inter.ss,
                    p: self.p.clone(),
                    composite: Some(CompositePart {
                        spec,
                        r_star: inter.r_star,
                        n1,
                    }),
                })
            }
        }
    }
}
