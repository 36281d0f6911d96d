//! Canonical commutation structures, oscillator parameter validation,
//! state-space realization, and the two-oscillator coherent feedback
//! interconnection.
//!
//! Variable ordering is fixed as (q1, p1, q2, p2, ...), matching the
//! `I ox bJ` block structure of the CCR matrices.

use crate::error::{Error, Result};
use crate::numerics::{HermitianPair, RealMatrix};

/// Relative tolerance for symmetry validation of energy matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

fn bj() -> RealMatrix {
    RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// CCR matrix of `nu` oscillator modes: `Theta = 1/2 I_nu ox bJ`.
pub fn ccr_theta(nu: usize) -> Result<RealMatrix> {
    if nu == 0 {
        return Err(Error::Domain {
            context: "ccr_theta: nu must be >= 1".into(),
        });
    }
    Ok(RealMatrix::identity(nu, nu).kronecker(&bj()) * 0.5)
}

/// Imaginary part of the quantum Ito matrix of `m` field channels:
/// `J = I_{m/2} ox bJ`.
pub fn ito_j(m: usize) -> Result<RealMatrix> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::Domain {
            context: format!("ito_j: m = {m} must be even and >= 2"),
        });
    }
    Ok(RealMatrix::identity(m / 2, m / 2).kronecker(&bj()))
}

/// Commutation structure of one system: `nu` modes (`n = 2 nu` variables)
/// against `m` external field channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CcrStructure {
    nu: usize,
    n: usize,
    m: usize,
    theta: RealMatrix,
    j_field: RealMatrix,
}

impl CcrStructure {
    pub fn new(nu: usize, m: usize) -> Result<Self> {
        Ok(Self {
            nu,
            n: 2 * nu,
            m,
            theta: ccr_theta(nu)?,
            j_field: ito_j(m)?,
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self) -> &RealMatrix {
        &self.theta
    }

    pub fn j_field(&self) -> &RealMatrix {
        &self.j_field
    }
}

pub fn validate_selector(d: &RealMatrix) -> Result<()> {
    let (r, m) = d.shape();
    if r < 2 || r % 2 != 0 || r > m {
        return Err(Error::InvalidSelector {
            reason: format!("selector is {r}x{m}; need even 2 <= r <= m"),
        });
    }
    for i in 0..r {
        let mut ones = 0;
        for j in 0..m {
            let x = d[(i, j)];
            if x != 0.0 && x != 1.0 {
                return Err(Error::InvalidSelector {
                    reason: format!("entry ({i}, {j}) = {x} is not 0 or 1"),
                });
            }
            if x == 1.0 {
                ones += 1;
            }
        }
        if ones != 1 {
            return Err(Error::InvalidSelector {
                reason: format!("row {i} has {ones} ones, expected exactly one"),
            });
        }
    }
    for j in 0..m {
        let ones = (0..r).filter(|&i| d[(i, j)] == 1.0).count();
        if ones > 1 {
            return Err(Error::InvalidSelector {
                reason: format!("column {j} selected {ones} times"),
            });
        }
    }
    // Rows must be selected in conjugate (q, p) pairs: the selector has to
    // carry the field Ito structure through, D J D^T = I_{r/2} ox bJ.
    let j_m = ito_j(m)?;
    let j_r = ito_j(r)?;
    if d * &j_m * d.transpose() != j_r {
        return Err(Error::InvalidSelector {
            reason: "rows are not conjugate pairs: D J D^T != I_{r/2} ox bJ".into(),
        });
    }
    Ok(())
}

/// Physical data of one oscillator: energy matrix `R` (n x n symmetric),
/// field coupling matrix `M` (m x n), and output selector `D` (r x m).
#[derive(Debug, Clone, PartialEq)]
pub struct OqhoParams {
    energy: RealMatrix,
    coupling: RealMatrix,
    selector: RealMatrix,
}

impl OqhoParams {
    /// Validates the parameter block. `selector` defaults to `I_m`
    /// (all output fields selected) when omitted.
    pub fn new(
        energy: RealMatrix,
        coupling: RealMatrix,
        selector: Option<RealMatrix>,
    ) -> Result<Self> {
        let n = energy.nrows();
        if !energy.is_square() || n == 0 || !n.is_multiple_of(2) {
            return Err(Error::dimension(
                "OqhoParams.energy",
                "square of even order n = 2 nu",
                format!("{}x{}", energy.nrows(), energy.ncols()),
            ));
        }
        let asymmetry = (&energy - energy.transpose()).norm();
        if asymmetry > SYMMETRY_TOL * (1.0 + energy.norm()) {
            return Err(Error::Asymmetric {
                name: "R".into(),
                asymmetry,
                tol: SYMMETRY_TOL,
            });
        }
        let m = coupling.nrows();
        if coupling.ncols() != n || m < 2 || !m.is_multiple_of(2) {
            return Err(Error::dimension(
                "OqhoParams.coupling",
                format!("m x {n} with even m >= 2"),
                format!("{}x{}", coupling.nrows(), coupling.ncols()),
            ));
        }
        let selector = selector.unwrap_or_else(|| RealMatrix::identity(m, m));
        if selector.ncols() != m {
            return Err(Error::dimension(
                "OqhoParams.selector",
                format!("r x {m}"),
                format!("{}x{}", selector.nrows(), selector.ncols()),
            ));
        }
        validate_selector(&selector)?;
        Ok(Self {
            energy,
            coupling,
            selector,
        })
    }

    pub fn energy(&self) -> &RealMatrix {
        &self.energy
    }

    pub fn coupling(&self) -> &RealMatrix {
        &self.coupling
    }

    pub fn selector(&self) -> &RealMatrix {
        &self.selector
    }

    pub fn n(&self) -> usize {
        self.energy.nrows()
    }

    pub fn nu(&self) -> usize {
        self.n() / 2
    }

    pub fn m(&self) -> usize {
        self.coupling.nrows()
    }

    /// Number of selected output channels.
    pub fn r(&self) -> usize {
        self.selector.nrows()
    }
}

/// Realization of one oscillator (or of a composite interconnection):
/// drift `A = A0 + Atilde`, gain `B`, output map `C`, and the diffusion
/// pair `mho = B (I + iJ) B^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: RealMatrix,
    a0: RealMatrix,
    atilde: RealMatrix,
    b: RealMatrix,
    c: RealMatrix,
    mho: HermitianPair,
    ccr: CcrStructure,
}

impl StateSpace {
    pub fn a(&self) -> &RealMatrix {
        &self.a
    }

    /// Energy part of the drift, `A0 = 2 Theta R`.
    pub fn a0(&self) -> &RealMatrix {
        &self.a0
    }

    /// Coupling part of the drift, `Atilde = 2 Theta M^T J M = B J M`.
    pub fn atilde(&self) -> &RealMatrix {
        &self.atilde
    }

    pub fn b(&self) -> &RealMatrix {
        &self.b
    }

    pub fn c(&self) -> &RealMatrix {
        &self.c
    }

    pub fn mho(&self) -> &HermitianPair {
        &self.mho
    }

    pub fn ccr(&self) -> &CcrStructure {
        &self.ccr
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// State-space realization from the physical data:
/// `A0 = 2 Theta R`, `Atilde = 2 Theta M^T J M`, `B = 2 Theta M^T`,
/// `C = 2 D J M`, `mho = B (I + iJ) B^T`.
pub fn realize(params: &OqhoParams, ccr: &CcrStructure) -> Result<StateSpace> {
    if params.n() != ccr.n() || params.m() != ccr.m() {
        return Err(Error::dimension(
            "realize",
            format!("params with n = {}, m = {}", ccr.n(), ccr.m()),
            format!("n = {}, m = {}", params.n(), params.m()),
        ));
    }
    let theta = ccr.theta();
    let j = ccr.j_field();
    let mt = params.coupling().transpose();
    let a0 = theta * params.energy() * 2.0;
    let b = theta * &mt * 2.0;
    let atilde = theta * &mt * j * params.coupling() * 2.0;
    let a = &a0 + &atilde;
    let c = params.selector() * j * params.coupling() * 2.0;
    let mho = HermitianPair::project(&b * b.transpose(), &b * j * b.transpose());
    Ok(StateSpace {
        a,
        a0,
        atilde,
        b,
        c,
        mho,
        ccr: ccr.clone(),
    })
}

/// Two oscillators coupled directly through `R12` and indirectly through
/// exchanged output fields (`cross1 = N1`, `cross2 = N2`, selectors `D_k`).
///
/// `N1` maps the first oscillator's variables into the second one's fed-back
/// output space (r2 x n1); `N2` is the mirror image (r1 x n2).
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionSpec {
    params1: OqhoParams,
    params2: OqhoParams,
    ccr1: CcrStructure,
    ccr2: CcrStructure,
    cross1: RealMatrix,
    cross2: RealMatrix,
    r12: RealMatrix,
}

impl InterconnectionSpec {
    pub fn new(
        params1: OqhoParams,
        params2: OqhoParams,
        cross1: RealMatrix,
        cross2: RealMatrix,
        r12: RealMatrix,
    ) -> Result<Self> {
        let ccr1 = CcrStructure::new(params1.nu(), params1.m())?;
        let ccr2 = CcrStructure::new(params2.nu(), params2.m())?;
        if cross1.shape() != (params2.r(), params1.n()) {
            return Err(Error::dimension(
                "InterconnectionSpec.N1",
                format!("{}x{}", params2.r(), params1.n()),
                format!("{}x{}", cross1.nrows(), cross1.ncols()),
            ));
        }
        if cross2.shape() != (params1.r(), params2.n()) {
            return Err(Error::dimension(
                "InterconnectionSpec.N2",
                format!("{}x{}", params1.r(), params2.n()),
                format!("{}x{}", cross2.nrows(), cross2.ncols()),
            ));
        }
        if r12.shape() != (params1.n(), params2.n()) {
            return Err(Error::dimension(
                "InterconnectionSpec.R12",
                format!("{}x{}", params1.n(), params2.n()),
                format!("{}x{}", r12.nrows(), r12.ncols()),
            ));
        }
        Ok(Self {
            params1,
            params2,
            ccr1,
            ccr2,
            cross1,
            cross2,
            r12,
        })
    }

    pub fn params1(&self) -> &OqhoParams {
        &self.params1
    }

    pub fn params2(&self) -> &OqhoParams {
        &self.params2
    }

    pub fn ccr1(&self) -> &CcrStructure {
        &self.ccr1
    }

    pub fn ccr2(&self) -> &CcrStructure {
        &self.ccr2
    }

    pub fn cross1(&self) -> &RealMatrix {
        &self.cross1
    }

    pub fn cross2(&self) -> &RealMatrix {
        &self.cross2
    }

    pub fn r12(&self) -> &RealMatrix {
        &self.r12
    }

    pub fn n1(&self) -> usize {
        self.params1.n()
    }

    pub fn n2(&self) -> usize {
        self.params2.n()
    }

    /// Same interconnection with the direct energy coupling replaced.
    pub fn with_r12(&self, r12: RealMatrix) -> Result<Self> {
        Self::new(
            self.params1.clone(),
            self.params2.clone(),
            self.cross1.clone(),
            self.cross2.clone(),
            r12,
        )
    }
}

/// Composite system assembled by [`compose`]: validated composite parameters,
/// the composite commutation structure, the realization, and the
/// field-mediated part `R*` of the energy matrix (the part independent of
/// the direct coupling `R12`).
#[derive(Debug, Clone, PartialEq)]
pub struct Interconnection {
    pub params: OqhoParams,
    pub ccr: CcrStructure,
    pub ss: StateSpace,
    pub r_star: RealMatrix,
}

fn block2x2(
    b11: &RealMatrix,
    b12: &RealMatrix,
    b21: &RealMatrix,
    b22: &RealMatrix,
) -> RealMatrix {
    let (r1, c1) = b11.shape();
    let (r2, c2) = b22.shape();
    let mut out = RealMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(b11);
    out.view_mut((0, c1), (r1, c2)).copy_from(b12);
    out.view_mut((r1, 0), (r2, c1)).copy_from(b21);
    out.view_mut((r1, c1), (r2, c2)).copy_from(b22);
    out
}

/// Field-mediated energy matrix of the interconnection:
/// diagonal blocks `R_k`, off-diagonal blocks
/// `N1^T D2 J2 M2 - M1^T J1 D1^T N2` and its mirror image.
pub fn field_mediated_energy(spec: &InterconnectionSpec) -> RealMatrix {
    let (p1, p2) = (&spec.params1, &spec.params2);
    let (j1, j2) = (spec.ccr1.j_field(), spec.ccr2.j_field());
    let upper = spec.cross1.transpose() * p2.selector() * j2 * p2.coupling()
        - p1.coupling().transpose() * j1 * p1.selector().transpose() * &spec.cross2;
    let lower = spec.cross2.transpose() * p1.selector() * j1 * p1.coupling()
        - p2.coupling().transpose() * j2 * p2.selector().transpose() * &spec.cross1;
    block2x2(p1.energy(), &upper, &lower, p2.energy())
}

/// Builds the composite oscillator: energy `R = R* + [[0, R12], [R12^T, 0]]`,
/// coupling `M = [[M1, D1^T N2], [D2^T N1, M2]]`, selector `diag(D1, D2)`,
/// and the realization of the resulting parameters.
pub fn compose(spec: &InterconnectionSpec) -> Result<Interconnection> {
    let (p1, p2) = (&spec.params1, &spec.params2);
    let r_star = field_mediated_energy(spec);
    let energy = &r_star
        + block2x2(
            &RealMatrix::zeros(spec.n1(), spec.n1()),
            &spec.r12,
            &spec.r12.transpose(),
            &RealMatrix::zeros(spec.n2(), spec.n2()),
        );
    let coupling = block2x2(
        p1.coupling(),
        &(p1.selector().transpose() * &spec.cross2),
        &(p2.selector().transpose() * &spec.cross1),
        p2.coupling(),
    );
    let selector = block2x2(
        p1.selector(),
        &RealMatrix::zeros(p1.r(), p2.m()),
        &RealMatrix::zeros(p2.r(), p1.m()),
        p2.selector(),
    );
    let ccr = CcrStructure::new(p1.nu() + p2.nu(), p1.m() + p2.m())?;
    let params = OqhoParams::new(energy, coupling, Some(selector))?;
    let ss = realize(&params, &ccr)?;
    Ok(Interconnection {
        params,
        ccr,
        ss,
        r_star,
    })
}

/// Drift and gain of the interconnection assembled directly from the
/// per-oscillator block formulas:
/// `A = [[A1, F1 + E1 C2], [F2 + E2 C1, A2]]`,
/// `B = [[B1, E1 D2], [E2 D1, B2]]` with
/// `A_k = 2 Theta_k (R_k + M_k^T J_k M_k + N_k^T Jt_{3-k} N_k)`,
/// `B_k = 2 Theta_k M_k^T`, `C_k = 2 D_k J_k M_k`, `E_k = 2 Theta_k N_k^T`,
/// `F_k = 2 Theta_k R_{k,3-k}`, `Jt_k = D_k J_k D_k^T`.
///
/// This is an independent construction route; it must agree with the
/// realization of the composite parameters from [`compose`].
pub fn interconnection_blocks(spec: &InterconnectionSpec) -> Result<(RealMatrix, RealMatrix)> {
    let (p1, p2) = (&spec.params1, &spec.params2);
    let (th1, th2) = (spec.ccr1.theta(), spec.ccr2.theta());
    let (j1, j2) = (spec.ccr1.j_field(), spec.ccr2.j_field());
    let jt1 = p1.selector() * j1 * p1.selector().transpose();
    let jt2 = p2.selector() * j2 * p2.selector().transpose();

    let a1 = th1
        * (p1.energy()
            + p1.coupling().transpose() * j1 * p1.coupling()
            + spec.cross1.transpose() * &jt2 * &spec.cross1)
        * 2.0;
    let a2 = th2
        * (p2.energy()
            + p2.coupling().transpose() * j2 * p2.coupling()
            + spec.cross2.transpose() * &jt1 * &spec.cross2)
        * 2.0;
    let b1 = th1 * p1.coupling().transpose() * 2.0;
    let b2 = th2 * p2.coupling().transpose() * 2.0;
    let c1 = p1.selector() * j1 * p1.coupling() * 2.0;
    let c2 = p2.selector() * j2 * p2.coupling() * 2.0;
    let e1 = th1 * spec.cross1.transpose() * 2.0;
    let e2 = th2 * spec.cross2.transpose() * 2.0;
    let f1 = th1 * &spec.r12 * 2.0;
    let f2 = th2 * spec.r12.transpose() * 2.0;

    let a = block2x2(&a1, &(&f1 + &e1 * &c2), &(&f2 + &e2 * &c1), &a2);
    let b = block2x2(&b1, &(&e1 * p2.selector()), &(&e2 * p1.selector()), &b2);
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_single_mode_matches_display() {
        let theta = ccr_theta(1).unwrap();
        let expected = RealMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]);
        assert_eq!(theta, expected);
    }

    #[test]
    fn theta_is_block_diagonal_and_squares_to_quarter_identity() {
        let theta = ccr_theta(2).unwrap();
        assert_eq!(theta.view((0, 0), (2, 2)).clone_owned(), ccr_theta(1).unwrap());
        assert_eq!(theta.view((2, 2), (2, 2)).clone_owned(), ccr_theta(1).unwrap());
        for nu in 1..5 {
            let theta = ccr_theta(nu).unwrap();
            let n = 2 * nu;
            assert!((&theta * &theta + RealMatrix::identity(n, n) * 0.25).norm() == 0.0);
            assert!((theta.transpose() + &theta).norm() == 0.0);
        }
        assert!(ccr_theta(0).is_err());
    }

    #[test]
    fn ito_j_structure() {
        assert_eq!(ito_j(2).unwrap(), bj());
        let j4 = ito_j(4).unwrap();
        assert_eq!(j4.view((0, 0), (2, 2)).clone_owned(), bj());
        assert_eq!(j4.view((2, 2), (2, 2)).clone_owned(), bj());
        assert!(ito_j(3).is_err());
        assert!(ito_j(0).is_err());
        for m in [2usize, 4, 6] {
            let j = ito_j(m).unwrap();
            assert!((&j * &j + RealMatrix::identity(m, m)).norm() == 0.0);
            assert!((j.transpose() + &j).norm() == 0.0);
        }
    }

    #[test]
    fn closed_oscillator_realization() {
        let ccr = CcrStructure::new(1, 2).unwrap();
        let params =
            OqhoParams::new(RealMatrix::identity(2, 2), RealMatrix::zeros(2, 2), None).unwrap();
        let ss = realize(&params, &ccr).unwrap();
        assert_eq!(ss.a(), &bj());
        assert!(ss.b().norm() == 0.0);
        assert!(ss.c().norm() == 0.0);
        assert!(ss.mho().re().norm() == 0.0);
    }

    #[test]
    fn hand_substituted_realization() {
        // R = 0, M = I2, D = I2: A = 2 Theta J = -I, B = 2 Theta = bJ,
        // C = 2 J = 2 bJ.
        let ccr = CcrStructure::new(1, 2).unwrap();
        let params =
            OqhoParams::new(RealMatrix::zeros(2, 2), RealMatrix::identity(2, 2), None).unwrap();
        let ss = realize(&params, &ccr).unwrap();
        assert!((ss.a() + RealMatrix::identity(2, 2)).norm() <= 1e-15);
        assert!((ss.b() - bj()).norm() <= 1e-15);
        assert!((ss.c() - bj() * 2.0).norm() <= 1e-15);
    }

    #[test]
    fn fully_degenerate_realization_is_zero() {
        let ccr = CcrStructure::new(1, 2).unwrap();
        let params =
            OqhoParams::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(2, 2), None).unwrap();
        let ss = realize(&params, &ccr).unwrap();
        assert!(ss.a().norm() == 0.0);
    }

    #[test]
    fn rejects_asymmetric_energy() {
        let r = RealMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            OqhoParams::new(r, RealMatrix::zeros(2, 2), None),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn rejects_non_conjugate_selector() {
        // Selecting rows 1 and 3 of I4 splits conjugate pairs.
        let d = RealMatrix::from_row_slice(
            2,
            4,
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        assert!(matches!(
            OqhoParams::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(4, 2), Some(d)),
            Err(Error::InvalidSelector { .. })
        ));
        // Selecting the last conjugate pair is fine.
        let d = RealMatrix::from_row_slice(
            2,
            4,
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        );
        assert!(OqhoParams::new(RealMatrix::zeros(2, 2), RealMatrix::zeros(4, 2), Some(d)).is_ok());
    }

    fn decoupled_spec(r12: RealMatrix) -> InterconnectionSpec {
        let r1 = RealMatrix::from_row_slice(4, 4, &{
            let mut v = vec![0.0; 16];
            for i in 0..4 {
                v[i * 4 + i] = (i + 1) as f64 * 0.25;
            }
            v
        });
        let r2 = RealMatrix::identity(4, 4) * 0.5;
        let p1 = OqhoParams::new(r1, RealMatrix::zeros(2, 4), None).unwrap();
        let p2 = OqhoParams::new(r2, RealMatrix::zeros(2, 4), None).unwrap();
        InterconnectionSpec::new(
            p1,
            p2,
            RealMatrix::zeros(2, 4),
            RealMatrix::zeros(2, 4),
            r12,
        )
        .unwrap()
    }

    #[test]
    fn decoupled_composition_is_block_diagonal() {
        let spec = decoupled_spec(RealMatrix::zeros(4, 4));
        let composite = compose(&spec).unwrap();
        let a = composite.ss.a();
        let expected1 = spec.ccr1().theta() * spec.params1().energy() * 2.0;
        let expected2 = spec.ccr2().theta() * spec.params2().energy() * 2.0;
        assert!((a.view((0, 0), (4, 4)).clone_owned() - expected1).norm() <= 1e-15);
        assert!((a.view((4, 4), (4, 4)).clone_owned() - expected2).norm() <= 1e-15);
        assert!(a.view((0, 4), (4, 4)).norm() == 0.0);
        assert!(composite.ss.b().norm() == 0.0);
    }

    #[test]
    fn direct_coupling_fills_off_diagonal_blocks() {
        let mut r12 = RealMatrix::zeros(4, 4);
        r12[(0, 1)] = 0.7;
        r12[(3, 2)] = -0.4;
        let spec = decoupled_spec(r12.clone());
        let composite = compose(&spec).unwrap();
        let a = composite.ss.a();
        let up = spec.ccr1().theta() * &r12 * 2.0;
        let lo = spec.ccr2().theta() * r12.transpose() * 2.0;
        assert!((a.view((0, 4), (4, 4)).clone_owned() - up).norm() <= 1e-15);
        assert!((a.view((4, 0), (4, 4)).clone_owned() - lo).norm() <= 1e-15);
    }

    #[test]
    fn composite_ccr_matches_stacked_structure() {
        let spec = decoupled_spec(RealMatrix::zeros(4, 4));
        let composite = compose(&spec).unwrap();
        assert_eq!(composite.ccr.theta(), &ccr_theta(4).unwrap());
        assert_eq!(composite.ccr.j_field(), &ito_j(4).unwrap());
    }
}
