//! DER reactive-power control models.
//!
//! A plant is a static droop characteristic `ψ` followed by a linear control
//! loop `G(s)`. The detailed loop of the wind/PV farm types is
//!
//! ```text
//!  u ─► VA (1/(1+sT_U))^k ─► ψ ─► PT1(T_dQ) ─► e^{-sT_g} ─► [PI · PT1(T_l)] unity fb ─► q
//! ```
//!
//! where the farm setpoint lag `T_dQ` dominates, the communication dead time
//! sits between the farm setpoint and the unit controller, and the unit PI
//! with its current-control lag forms a closed inner loop. `ψ` is stored with
//! positive slope; the negative feedback through the grid is applied by the
//! loop assembly in [`crate::circle`] and [`crate::sim`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use num_complex::Complex64;

use crate::lti::{self, LtiError, RationalTransfer, StateSpace};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DerError {
    #[error("invalid DER parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("unknown DER model kind {0:?}")]
    UnknownKind(alloc::string::String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Piecewise-linear Q(U) droop with symmetric deadband and saturation.
///
/// `slope` is in %/p.u. relative to the plant's rated power: a voltage
/// deviation of 1 p.u. beyond the deadband asks for `slope` percent of
/// `rated_mw` in reactive power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuCharacteristic {
    pub u_ref: f64,
    pub slope: f64,
    pub deadband: f64,
    pub q_limit_share: f64,
    pub rated_mw: f64,
}

/// Saturation default as a share of rated power.
pub const DEFAULT_Q_LIMIT_SHARE: f64 = 0.33;

impl QuCharacteristic {
    pub fn new(u_ref: f64, slope: f64, deadband: f64, q_limit_share: f64, rated_mw: f64) -> Result<Self, DerError> {
        let ch = QuCharacteristic { u_ref, slope, deadband, q_limit_share, rated_mw };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<(), DerError> {
        if !(self.slope >= 0.0) || !self.slope.is_finite() {
            return Err(DerError::InvalidParameter("slope must be finite and >= 0"));
        }
        if !(self.deadband >= 0.0) || !self.deadband.is_finite() {
            return Err(DerError::InvalidParameter("deadband must be finite and >= 0"));
        }
        if !(self.q_limit_share > 0.0 && self.q_limit_share <= 1.0) {
            return Err(DerError::InvalidParameter("q_limit_share must lie in (0, 1]"));
        }
        if !(self.rated_mw > 0.0) || !self.rated_mw.is_finite() {
            return Err(DerError::InvalidParameter("rated power must be > 0"));
        }
        if !(self.u_ref > 0.0) || !self.u_ref.is_finite() {
            return Err(DerError::InvalidParameter("reference voltage must be > 0"));
        }
        Ok(())
    }

    pub fn with_slope(&self, slope: f64) -> Self {
        QuCharacteristic { slope, ..*self }
    }

    /// Upper sector bound `β = (m/100) · P_r / S_b` in p.u./p.u.
    ///
    /// A deadband only lowers the secant slope `ψ(e)/e`, so the bound is
    /// the same with or without one.
    pub fn sector_bound(&self, base_mva: f64) -> f64 {
        self.slope / 100.0 * self.rated_mw / base_mva
    }

    /// Saturation level in p.u. on the system base.
    pub fn q_limit(&self, base_mva: f64) -> f64 {
        self.q_limit_share * self.rated_mw / base_mva
    }

    /// `ψ(e)` for a voltage deviation `e = u - u_ref`, optionally without
    /// the saturation (for small-signal studies).
    pub fn response(&self, e: f64, base_mva: f64, saturate: bool) -> f64 {
        let excess = e.abs() - self.deadband;
        if excess <= 0.0 {
            return 0.0;
        }
        let mut v = self.sector_bound(base_mva) * excess;
        if saturate {
            v = v.min(self.q_limit(base_mva));
        }
        v.copysign(e)
    }

    /// `ψ(u - u_ref)` in p.u. on the system base.
    pub fn evaluate(&self, u: f64, base_mva: f64) -> f64 {
        self.response(u - self.u_ref, base_mva, true)
    }

    /// Local slope `dψ/de` at `e` (0 in the deadband and in saturation).
    pub fn derivative(&self, e: f64, base_mva: f64, saturate: bool) -> f64 {
        let excess = e.abs() - self.deadband;
        if excess <= 0.0 {
            return 0.0;
        }
        let beta = self.sector_bound(base_mva);
        if saturate && beta * excess >= self.q_limit(base_mva) {
            return 0.0;
        }
        beta
    }
}

/// Parameters of the detailed reactive-power control chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerControlParams {
    /// voltage averaging time constant, s
    pub t_u: f64,
    /// number of cascaded averaging lags
    pub va_order: u32,
    /// dominant setpoint-tracking lag, s
    pub t_dq: f64,
    /// PI gain
    pub k_q: f64,
    /// PI integral time, s
    pub t_q: f64,
    /// unit current-control lag, s
    pub t_l: f64,
    /// farm-to-unit communication dead time, s
    pub t_g: f64,
}

impl DerControlParams {
    /// Wind farm with fully rated converter, the reference parameterization.
    pub const WF_FRC: DerControlParams = DerControlParams {
        t_u: 0.02,
        va_order: 1,
        t_dq: 2.0,
        k_q: 0.5,
        t_q: 0.2,
        t_l: 0.1,
        t_g: 0.2,
    };

    /// Doubly fed wind farm. No published parameter set exists for this
    /// type; the FRC values stand in until plant data is supplied.
    pub const WF_DFIG: DerControlParams = Self::WF_FRC;

    /// Photovoltaic farm: third-order averaging and a fast inverter loop.
    pub const PVF: DerControlParams = DerControlParams {
        t_u: 0.004,
        va_order: 3,
        t_dq: 2.0,
        k_q: 0.5,
        t_q: 0.2,
        t_l: 0.0033,
        t_g: 0.1,
    };

    pub fn validate(&self) -> Result<(), DerError> {
        let times = [self.t_u, self.t_dq, self.t_q, self.t_l, self.t_g];
        if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(DerError::InvalidParameter("time constants must be finite and >= 0"));
        }
        if !(self.k_q > 0.0) || !self.k_q.is_finite() {
            return Err(DerError::InvalidParameter("PI gain k_q must be > 0"));
        }
        if !(self.t_q > 0.0) {
            return Err(DerError::InvalidParameter("PI integral time t_q must be > 0"));
        }
        if self.va_order == 0 || self.va_order > 5 {
            return Err(DerError::InvalidParameter("va_order must lie in 1..=5"));
        }
        Ok(())
    }
}

/// Second-order lag `κ / (1 + 2 D T s + T² s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt2Params {
    pub gain: f64,
    pub damping: f64,
    pub time_constant: f64,
}

impl Pt2Params {
    /// Generic step-response envelope of the high-voltage connection rules.
    pub const TAR: Pt2Params = Pt2Params { gain: 1.0, damping: 0.517, time_constant: 2.335 };
    /// Frequency-domain fit of the reference WF-FRC loop.
    pub const DER: Pt2Params = Pt2Params { gain: 1.0, damping: 0.747, time_constant: 1.028 };

    pub fn validate(&self) -> Result<(), DerError> {
        if !(self.gain > 0.0 && self.damping > 0.0 && self.time_constant > 0.0)
            || !(self.gain.is_finite() && self.damping.is_finite() && self.time_constant.is_finite())
        {
            return Err(DerError::InvalidParameter("PT2 gain, damping and time constant must be > 0"));
        }
        Ok(())
    }
}

pub fn build_pt2(p: &Pt2Params) -> Result<RationalTransfer, DerError> {
    p.validate()?;
    let t = p.time_constant;
    Ok(RationalTransfer::new(vec![p.gain], vec![1.0, 2.0 * p.damping * t, t * t])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    WfFrc,
    WfDfig,
    Pvf,
    Pt2,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::WfFrc => "wf-frc",
            ModelKind::WfDfig => "wf-dfig",
            ModelKind::Pvf => "pvf",
            ModelKind::Pt2 => "pt2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = DerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wf-frc" => Ok(ModelKind::WfFrc),
            "wf-dfig" => Ok(ModelKind::WfDfig),
            "pvf" => Ok(ModelKind::Pvf),
            "pt2" => Ok(ModelKind::Pt2),
            other => Err(DerError::UnknownKind(other.into())),
        }
    }
}

/// Model type together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerModel {
    WfFrc(DerControlParams),
    WfDfig(DerControlParams),
    Pvf(DerControlParams),
    Pt2(Pt2Params),
}

impl DerModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            DerModel::WfFrc(_) => ModelKind::WfFrc,
            DerModel::WfDfig(_) => ModelKind::WfDfig,
            DerModel::Pvf(_) => ModelKind::Pvf,
            DerModel::Pt2(_) => ModelKind::Pt2,
        }
    }

    /// Reference parameterization for a kind.
    pub fn reference(kind: ModelKind) -> DerModel {
        match kind {
            ModelKind::WfFrc => DerModel::WfFrc(DerControlParams::WF_FRC),
            ModelKind::WfDfig => DerModel::WfDfig(DerControlParams::WF_DFIG),
            ModelKind::Pvf => DerModel::Pvf(DerControlParams::PVF),
            ModelKind::Pt2 => DerModel::Pt2(Pt2Params::DER),
        }
    }

    pub fn control_params(&self) -> Option<&DerControlParams> {
        match self {
            DerModel::WfFrc(p) | DerModel::WfDfig(p) | DerModel::Pvf(p) => Some(p),
            DerModel::Pt2(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), DerError> {
        match self {
            DerModel::Pt2(p) => p.validate(),
            DerModel::WfFrc(p) | DerModel::WfDfig(p) | DerModel::Pvf(p) => p.validate(),
        }
    }

    pub fn control_loop(&self) -> Result<DerLoop, DerError> {
        match self {
            DerModel::Pt2(p) => Ok(DerLoop { averaging: Vec::new(), forward: vec![build_pt2(p)?], delay: 0.0 }),
            DerModel::WfFrc(p) | DerModel::WfDfig(p) | DerModel::Pvf(p) => build_control_loop(p),
        }
    }
}

/// Linear control loop `G(s)` of one plant, kept factored.
///
/// `averaging` precedes the characteristic in the physical chain, `forward`
/// follows it, and `delay` is an exact dead time in series. The factors are
/// realized one by one and cascaded, which keeps the state-space model far
/// better conditioned than a companion form of the expanded product.
#[derive(Debug, Clone, PartialEq)]
pub struct DerLoop {
    pub averaging: Vec<RationalTransfer>,
    pub forward: Vec<RationalTransfer>,
    pub delay: f64,
}

/// Detailed loop from the control parameters; see the module docs for the
/// wiring. The PI integrator makes the static gain exactly 1.
pub fn build_control_loop(p: &DerControlParams) -> Result<DerLoop, DerError> {
    p.validate()?;
    let averaging = if p.t_u > 0.0 {
        (0..p.va_order).map(|_| RationalTransfer::pt1(p.t_u)).collect()
    } else {
        Vec::new()
    };
    let pi = RationalTransfer::new(vec![p.k_q, p.k_q * p.t_q], vec![0.0, p.t_q])?;
    let unit_loop = pi.series(&RationalTransfer::pt1(p.t_l)).feedback_unity()?;
    let mut forward = Vec::new();
    if p.t_dq > 0.0 {
        forward.push(RationalTransfer::pt1(p.t_dq));
    }
    forward.push(unit_loop);
    Ok(DerLoop { averaging, forward, delay: p.t_g })
}

impl DerLoop {
    fn factors(&self) -> impl Iterator<Item = &RationalTransfer> {
        self.averaging.iter().chain(self.forward.iter())
    }

    /// Delay-free rational part as a single expanded fraction.
    pub fn rational(&self) -> RationalTransfer {
        self.factors()
            .fold(RationalTransfer::constant(1.0), |acc, f| acc.series(f))
    }

    pub fn static_gain(&self) -> f64 {
        self.factors().map(|f| f.static_gain()).product()
    }

    /// Exact response `G(jω)` including `exp(-jωT_g)`.
    pub fn freq(&self, omega: f64) -> Complex64 {
        let r: Complex64 = self.factors().map(|f| f.freq(omega)).product();
        r * Complex64::new(0.0, -omega * self.delay).exp()
    }

    /// Continuous phase of `G(jω)` along an increasing frequency grid.
    ///
    /// Each low-order factor is unwrapped on its own and the dead time
    /// contributes exactly `-ωT_g`.
    pub fn unwrapped_phase(&self, omegas: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; omegas.len()];
        for f in self.factors() {
            let ph: Vec<f64> = omegas.iter().map(|&w| f.freq(w).arg()).collect();
            for (acc, v) in total.iter_mut().zip(unwrap(&ph)) {
                *acc += v;
            }
        }
        for (acc, &w) in total.iter_mut().zip(omegas) {
            *acc -= w * self.delay;
        }
        total
    }

    fn cascade(factors: &[RationalTransfer]) -> Result<StateSpace, LtiError> {
        let mut sys = lti::realize(&RationalTransfer::constant(1.0));
        for f in factors {
            sys = sys.series(&lti::realize(f))?;
        }
        Ok(sys)
    }

    /// Averaging stage alone (identity when absent).
    pub fn averaging_block(&self) -> Result<StateSpace, LtiError> {
        Self::cascade(&self.averaging)
    }

    /// Everything after the characteristic except the dead time.
    pub fn forward_block(&self) -> Result<StateSpace, LtiError> {
        Self::cascade(&self.forward)
    }

    /// Finite-dimensional realization with a Padé dead time.
    pub fn realize(&self, pade_order: usize) -> Result<StateSpace, LtiError> {
        let mut factors: Vec<RationalTransfer> = self.factors().cloned().collect();
        if self.delay > 0.0 {
            factors.push(lti::pade_delay(self.delay, pade_order)?);
        }
        Self::cascade(&factors)
    }

    /// Unit-step response; the dead time shifts the delay-free trace.
    pub fn step_response(&self, horizon: f64, dt: f64) -> Result<lti::StepResponse, LtiError> {
        let sys = Self::cascade(&self.factors().cloned().collect::<Vec<_>>())?;
        let mut r = lti::step_response(&sys, horizon, dt)?;
        if self.delay > 0.0 {
            let shifted: Vec<f64> = r
                .times
                .iter()
                .map(|&t| interpolate(&r.times, &r.values, t - self.delay))
                .collect();
            r.values = shifted;
        }
        Ok(r)
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let dt = times[1] - times[0];
    let pos = t / dt;
    let i = pos.floor() as usize;
    if i + 1 >= values.len() {
        return *values.last().unwrap();
    }
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// Remove 2π jumps from a sampled phase sequence.
pub fn unwrap(phase: &[f64]) -> Vec<f64> {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            if d > core::f64::consts::PI {
                offset -= two_pi;
            } else if d < -core::f64::consts::PI {
                offset += two_pi;
            }
        }
        out.push(p + offset);
    }
    out
}
