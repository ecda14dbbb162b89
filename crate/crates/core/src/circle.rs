//! Circle-criterion certification of the MIMO Q(U) loop.
//!
//! With the sector `[0, M_β]` the loop is absolutely stable if
//! `Ω(s) = I + M_β G̃(s)` is strictly positive real, where
//! `G̃ = diag(G_i) · K_Q`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::der::{DerError, DerLoop, DerModel, Pt2Params};
use crate::fit::{fit_der, FitConfig, FitError};
use crate::grid::GridModel;
use crate::lti::{compose_mimo, eigenvalues, LtiError, StateSpace};
use crate::powerflow::SensitivityMatrix;
use crate::search::{bracket_search, BracketError, SearchOptions, SearchOutcome, SearchStep};

/// Default SPR tolerance on the real parts of the test-matrix eigenvalues.
pub const DEFAULT_DELTA: f64 = 1e-8;

/// Minimum Cholesky pivot accepted for `Q = D + Dᵀ`.
const MIN_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircleError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("sector bound must be finite and >= 0, got {0}")]
    InvalidBeta(f64),
    #[error(
        "singular feedthrough: Q = D + Dᵀ is not positive definite; the transformation \
         that handles this case is not implemented"
    )]
    SingularFeedthrough,
    #[error("slope {0} %/p.u. is already not certified")]
    StartNotCertified(f64),
    #[error("invalid search options: {0}")]
    InvalidSearch(&'static str),
    #[error("sensitivity matrix order {got:?} does not match DER order {expected:?}")]
    SensitivityOrder { expected: Vec<String>, got: Vec<String> },
    #[error("grid has no DERs")]
    NoDers,
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl From<BracketError<CircleError>> for CircleError {
    fn from(e: BracketError<CircleError>) -> Self {
        match e {
            BracketError::InvalidOptions(s) => CircleError::InvalidSearch(s),
            BracketError::StartFails(m) => CircleError::StartNotCertified(m),
            BracketError::Eval(e) => e,
        }
    }
}

/// Diagonal sector `[0, β_i]` per DER; the lower bound is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBounds {
    beta: Vec<f64>,
}

impl SectorBounds {
    pub fn new(beta: Vec<f64>) -> Result<Self, CircleError> {
        if let Some(&b) = beta.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(CircleError::InvalidBeta(b));
        }
        Ok(SectorBounds { beta })
    }

    pub fn alpha(&self) -> Vec<f64> {
        vec![0.0; self.beta.len()]
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.beta))
    }
}

/// `Ω = I + M_β G̃`: `C_Ω = M_β C`, `D_Ω = I + M_β D`.
pub fn build_omega(gtilde: &StateSpace, sector: &SectorBounds) -> Result<StateSpace, CircleError> {
    let n = gtilde.n_inputs();
    if gtilde.n_outputs() != n {
        return Err(CircleError::Dimension("G̃ must be square"));
    }
    if sector.len() != n {
        return Err(CircleError::Dimension("one sector bound per channel"));
    }
    let mb = sector.matrix();
    let c = &mb * gtilde.c();
    let d = DMatrix::identity(n, n) + &mb * gtilde.d();
    Ok(StateSpace::new(gtilde.a().clone(), gtilde.b().clone(), c, d)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprVerdict {
    pub is_spr: bool,
    pub hurwitz_ok: bool,
    pub n_matrix_ok: bool,
    pub min_abs_real_eig_n: f64,
    pub max_real_eig_a: f64,
    pub delta: f64,
}

/// Inverse of `Q = D + Dᵀ` through a Cholesky factorization.
fn q_inverse(d: &DMatrix<f64>) -> Result<DMatrix<f64>, CircleError> {
    let q = d + d.transpose();
    let chol = nalgebra::Cholesky::new(q).ok_or(CircleError::SingularFeedthrough)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= MIN_PIVOT) {
        return Err(CircleError::SingularFeedthrough);
    }
    Ok(chol.inverse())
}

/// Test matrix whose imaginary-axis eigenvalues mark frequencies where
/// `Ω(jω) + Ω(jω)ᴴ` is singular:
///
/// ```text
/// N = [ -A + B Q⁻¹ C      B Q⁻¹ Bᵀ        ]
///     [ -Cᵀ Q⁻¹ C         Aᵀ - Cᵀ Q⁻¹ Bᵀ  ]
/// ```
pub fn spr_test_matrix(omega: &StateSpace) -> Result<DMatrix<f64>, CircleError> {
    let qi = q_inverse(omega.d())?;
    let (a, b, c) = (omega.a(), omega.b(), omega.c());
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a + b * &qi * c));
    m.view_mut((0, n), (n, n)).copy_from(&(b * &qi * b.transpose()));
    m.view_mut((n, 0), (n, n)).copy_from(&(-(c.transpose() * &qi * c)));
    m.view_mut((n, n), (n, n)).copy_from(&(a.transpose() - c.transpose() * &qi * b.transpose()));
    Ok(m)
}

/// Eigenvalue test for strict positive realness: `A` Hurwitz and no
/// eigenvalue of the test matrix within `delta` of the imaginary axis.
pub fn spr_eigen_test(omega: &StateSpace, delta: f64) -> Result<SprVerdict, CircleError> {
    if omega.n_inputs() != omega.n_outputs() {
        return Err(CircleError::Dimension("Ω must be square"));
    }
    let n = spr_test_matrix(omega)?;
    let max_real_eig_a = omega.spectral_abscissa()?;
    let min_abs_real_eig_n = eigenvalues(&n)?
        .iter()
        .map(|l| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    let hurwitz_ok = max_real_eig_a < 0.0;
    let n_matrix_ok = min_abs_real_eig_n > delta;
    Ok(SprVerdict { is_spr: hurwitz_ok && n_matrix_ok, hurwitz_ok, n_matrix_ok, min_abs_real_eig_n, max_real_eig_a, delta })
}

/// Smallest eigenvalue of the Hermitian part `M + Mᴴ`, via the real
/// symmetric embedding `[[Re, -Im], [Im, Re]]` (each eigenvalue doubled).
pub fn hermitian_part_min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let h = m + m.adjoint();
    let n = h.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            r[(i, j)] = z.re;
            r[(n + i, n + j)] = z.re;
            r[(i, n + j)] = -z.im;
            r[(n + i, j)] = z.im;
        }
    }
    r.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepVerdict {
    pub is_spr: bool,
    pub hurwitz_ok: bool,
    pub min_eigenvalue: f64,
    pub at_omega: f64,
}

/// Frequency-sweep check: `A` Hurwitz and `λ_min(Ω(jω) + Ω(jω)ᴴ) > margin`
/// at every grid frequency.
pub fn spr_sweep_test(
    mut omega_at: impl FnMut(f64) -> DMatrix<Complex64>,
    hurwitz_ok: bool,
    grid: &[f64],
    margin: f64,
) -> SweepVerdict {
    let mut worst = f64::INFINITY;
    let mut at = f64::NAN;
    for &w in grid {
        let v = hermitian_part_min_eigenvalue(&omega_at(w));
        if !(v >= worst) {
            worst = v;
            at = w;
        }
    }
    SweepVerdict { is_spr: hurwitz_ok && worst > margin, hurwitz_ok, min_eigenvalue: worst, at_omega: at }
}

/// Sweep test of a state-space `Ω`.
pub fn spr_sweep_state_space(omega: &StateSpace, grid: &[f64], margin: f64) -> Result<SweepVerdict, CircleError> {
    let hurwitz = omega.spectral_abscissa()? < 0.0;
    let mut err = None;
    let v = spr_sweep_test(
        |w| match omega.freq(w) {
            Ok(m) => m,
            Err(e) => {
                err = Some(e);
                DMatrix::from_element(omega.n_outputs(), omega.n_inputs(), Complex64::new(f64::NAN, 0.0))
            }
        },
        hurwitz,
        grid,
        margin,
    );
    match err {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

/// Which linear model stands in for each DER.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// detailed control loop with a Padé dead time
    Orig,
    /// PT2 fitted to each detailed loop's frequency response
    Pt2Der,
    /// the generic PT2 of the step-response requirements
    Pt2Tar,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Orig, Representation::Pt2Der, Representation::Pt2Tar];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Orig => "orig",
            Representation::Pt2Der => "pt2-der",
            Representation::Pt2Tar => "pt2-tar",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "orig" => Ok(Representation::Orig),
            "pt2-der" => Ok(Representation::Pt2Der),
            "pt2-tar" => Ok(Representation::Pt2Tar),
            other => Err(alloc::format!("unknown representation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificationOptions {
    pub pade_order: usize,
    pub delta: f64,
    pub tar: Pt2Params,
    pub fit: FitConfig,
    pub search: SearchOptions,
}

impl Default for CertificationOptions {
    fn default() -> Self {
        CertificationOptions {
            pade_order: 3,
            delta: DEFAULT_DELTA,
            tar: Pt2Params::TAR,
            fit: FitConfig::default(),
            search: SearchOptions::default(),
        }
    }
}

/// Linear loop of every DER under a representation, in grid DER order.
///
/// PT2-DER fits each distinct detailed model once; plants already given as
/// PT2 keep their own parameters.
pub fn representation_loops(
    grid: &GridModel,
    representation: Representation,
    opts: &CertificationOptions,
) -> Result<Vec<DerLoop>, CircleError> {
    let mut fitted: Vec<(DerModel, DerLoop)> = Vec::new();
    grid.ders
        .iter()
        .map(|d| match representation {
            Representation::Orig => Ok(d.model.control_loop()?),
            Representation::Pt2Tar => Ok(DerModel::Pt2(opts.tar).control_loop()?),
            Representation::Pt2Der => {
                if let DerModel::Pt2(_) = d.model {
                    return Ok(d.model.control_loop()?);
                }
                if let Some((_, l)) = fitted.iter().find(|(m, _)| *m == d.model) {
                    return Ok(l.clone());
                }
                let fit = fit_der(&d.model.control_loop()?, &opts.fit)?;
                let l = DerModel::Pt2(fit.params).control_loop()?;
                fitted.push((d.model, l.clone()));
                Ok(l)
            }
        })
        .collect()
}

/// Everything needed to evaluate `Ω` for a uniform slope.
#[derive(Debug, Clone)]
pub struct CertificationCase {
    pub der_ids: Vec<String>,
    pub loops: Vec<DerLoop>,
    pub rated_mw: Vec<f64>,
    pub base_mva: f64,
    pub k_q: DMatrix<f64>,
    gtilde: StateSpace,
}

impl CertificationCase {
    pub fn new(
        der_ids: Vec<String>,
        loops: Vec<DerLoop>,
        rated_mw: Vec<f64>,
        base_mva: f64,
        k_q: DMatrix<f64>,
        pade_order: usize,
    ) -> Result<Self, CircleError> {
        let n = loops.len();
        if n == 0 {
            return Err(CircleError::NoDers);
        }
        if rated_mw.len() != n || der_ids.len() != n || k_q.nrows() != n || k_q.ncols() != n {
            return Err(CircleError::Dimension("DER count must match K_Q and rated powers"));
        }
        let blocks = loops.iter().map(|l| l.realize(pade_order)).collect::<Result<Vec<_>, _>>()?;
        let gtilde = compose_mimo(&blocks, &k_q)?;
        Ok(CertificationCase { der_ids, loops, rated_mw, base_mva, k_q, gtilde })
    }

    pub fn from_grid(
        grid: &GridModel,
        kq: &SensitivityMatrix,
        representation: Representation,
        opts: &CertificationOptions,
    ) -> Result<Self, CircleError> {
        let ids = grid.der_ids();
        if kq.der_order != ids {
            return Err(CircleError::SensitivityOrder { expected: ids, got: kq.der_order.clone() });
        }
        let loops = representation_loops(grid, representation, opts)?;
        let rated = grid.ders.iter().map(|d| d.p_r_mw).collect();
        Self::new(ids, loops, rated, grid.base_mva, kq.entries.clone(), opts.pade_order)
    }

    /// Realized `G̃ = diag(G_i) · K_Q`.
    pub fn gtilde(&self) -> &StateSpace {
        &self.gtilde
    }

    /// `β_i = (m/100) · P_r,i / S_b` for a uniform slope `m` in %/p.u.
    pub fn sector(&self, m: f64) -> Result<SectorBounds, CircleError> {
        SectorBounds::new(self.rated_mw.iter().map(|p| m / 100.0 * p / self.base_mva).collect())
    }

    pub fn omega(&self, m: f64) -> Result<StateSpace, CircleError> {
        build_omega(&self.gtilde, &self.sector(m)?)
    }

    /// `Ω(jω)` with exact dead times.
    pub fn omega_exact(&self, m: f64, w: f64) -> Result<DMatrix<Complex64>, CircleError> {
        let sector = self.sector(m)?;
        let n = self.loops.len();
        let mut g = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (i, l) in self.loops.iter().enumerate() {
            let gi = l.freq(w) * sector.beta()[i];
            for j in 0..n {
                g[(i, j)] = gi * self.k_q[(i, j)];
            }
            g[(i, i)] += 1.0;
        }
        Ok(g)
    }
}

/// Circle-criterion verdict for a uniform slope `m` in %/p.u.
pub fn assess_slope(case: &CertificationCase, m: f64, delta: f64) -> Result<SprVerdict, CircleError> {
    spr_eigen_test(&case.omega(m)?, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSearchResult {
    pub m_max: Option<f64>,
    pub bracket_low: f64,
    pub bracket_high: Option<f64>,
    pub outcome: SearchOutcome,
    pub steps: Vec<SearchStep<SprVerdict>>,
}

impl SlopeSearchResult {
    pub fn evaluations(&self) -> usize {
        self.steps.len()
    }
}

/// Largest uniformly certified slope by doubling and bisection.
pub fn max_slope_search(case: &CertificationCase, search: &SearchOptions, delta: f64) -> Result<SlopeSearchResult, CircleError> {
    let r = bracket_search(search, |m| {
        let v = assess_slope(case, m, delta)?;
        Ok::<_, CircleError>((v.is_spr, v))
    })?;
    Ok(SlopeSearchResult {
        m_max: r.limit,
        bracket_low: r.bracket_low,
        bracket_high: r.bracket_high,
        outcome: r.outcome,
        steps: r.steps,
    })
}
