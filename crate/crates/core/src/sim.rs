//! Quasi-static time-domain simulation of the Q(U) loop.
//!
//! Controller states evolve with fixed-step RK4; the grid is algebraic and
//! is either re-solved every step or replaced by its linearization at the
//! initial operating point. Dead times are sample-delay ring buffers, so the
//! reactive power at the end of a step is known before the step is taken and
//! the terminal voltage is interpolated linearly inside it.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::der::{DerError, QuCharacteristic};
use crate::grid::GridModel;
use crate::lti::{LtiError, StateSpace};
use crate::powerflow::{
    der_node_indices, injections_with, Network, PowerFlowError, PowerFlowOptions, PowerFlowSolution,
};
use crate::search::{bracket_search, BracketError, SearchOptions, SearchResult};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
    #[error("time step {dt} s is too coarse for the {delay} s dead time")]
    DelayTooShort { dt: f64, delay: f64 },
    #[error("initial power flow failed: {0}")]
    InitialPowerFlow(PowerFlowError),
    #[error("no consistent initial reactive-power equilibrium")]
    Initialization,
    #[error("classification window ends at {needed} s but the trace ends at {available} s")]
    WindowExceedsTrace { needed: f64, available: f64 },
    #[error("slope {0} %/p.u. is already not stable")]
    StartNotStable(f64),
    #[error("invalid search options: {0}")]
    InvalidSearch(&'static str),
    #[error("grid has no DERs")]
    NoDers,
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

impl From<BracketError<SimError>> for SimError {
    fn from(e: BracketError<SimError>) -> Self {
        match e {
            BracketError::InvalidOptions(s) => SimError::InvalidSearch(s),
            BracketError::StartFails(m) => SimError::StartNotStable(m),
            BracketError::Eval(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridCoupling {
    /// fixed `K_Q`, `K_P` of the initial operating point
    Linearized,
    /// a Newton–Raphson solve at every step
    FullPowerFlow,
}

impl GridCoupling {
    pub fn as_str(self) -> &'static str {
        match self {
            GridCoupling::Linearized => "linearized",
            GridCoupling::FullPowerFlow => "full",
        }
    }
}

/// Active-power ramp as shares of installed power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub duration: f64,
    pub p_initial_share: f64,
    pub p_final_share: f64,
}

impl Default for Ramp {
    fn default() -> Self {
        Ramp { start: 1.0, duration: 5.0, p_initial_share: 0.1, p_final_share: 1.0 }
    }
}

impl Ramp {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn share(&self, t: f64) -> f64 {
        if t <= self.start {
            self.p_initial_share
        } else if t >= self.end() {
            self.p_final_share
        } else {
            let x = (t - self.start) / self.duration;
            self.p_initial_share + x * (self.p_final_share - self.p_initial_share)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScenario {
    /// uniform Q(U) slope, %/p.u.
    pub slope: f64,
    pub ramp: Ramp,
    pub horizon: f64,
    pub dt: f64,
    pub coupling: GridCoupling,
    /// apply the characteristic's reactive-power limit
    pub saturation: bool,
}

/// Length of the post-ramp classification window.
pub const CLASSIFY_WINDOW: f64 = 10.0;

impl SimScenario {
    pub fn new(slope: f64) -> Self {
        SimScenario {
            slope,
            ramp: Ramp::default(),
            horizon: 18.0,
            dt: 1e-3,
            coupling: GridCoupling::FullPowerFlow,
            saturation: true,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::InvalidScenario("dt must be > 0"));
        }
        let r = &self.ramp;
        if !(r.start >= 0.0 && r.duration > 0.0) {
            return Err(SimError::InvalidScenario("ramp needs start >= 0 and duration > 0"));
        }
        if !(0.0 <= r.p_initial_share && r.p_initial_share <= r.p_final_share && r.p_final_share <= 1.0) {
            return Err(SimError::InvalidScenario("requires 0 <= initial share <= final share <= 1"));
        }
        if !(self.horizon > r.end() + CLASSIFY_WINDOW) || !self.horizon.is_finite() {
            return Err(SimError::InvalidScenario("horizon must exceed ramp end + 10 s"));
        }
        if !(self.slope >= 0.0) || !self.slope.is_finite() {
            return Err(SimError::InvalidScenario("slope must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub der_ids: Vec<String>,
    /// `voltages[k][i]`: DER `k` at sample `i`, p.u.
    pub voltages: Vec<Vec<f64>>,
    /// injected reactive power, p.u. on the system base
    pub reactive_powers: Vec<Vec<f64>>,
    /// controller states per DER at the end of the run
    pub final_states: Vec<Vec<f64>>,
    pub ramp_end: f64,
    /// time of the power-flow failure that ended the run early
    pub truncated_at: Option<f64>,
}

struct DerChannel {
    ch: QuCharacteristic,
    avg: StateSpace,
    fwd: StateSpace,
    x_avg: DVector<f64>,
    x_fwd: DVector<f64>,
    ring: VecDeque<f64>,
    ring_len: usize,
}

impl DerChannel {
    fn steady_state(sys: &StateSpace, u: f64) -> Result<DVector<f64>, SimError> {
        if sys.n_states() == 0 {
            return Ok(DVector::zeros(0));
        }
        let rhs = sys.b() * DVector::from_element(1, -u);
        sys.a().clone().lu().solve(&rhs).ok_or(SimError::Initialization)
    }

    fn output(sys: &StateSpace, x: &DVector<f64>, u: f64) -> f64 {
        let mut y = sys.d()[(0, 0)] * u;
        if sys.n_states() > 0 {
            y += (sys.c() * x)[(0, 0)];
        }
        y
    }

    fn delayed(&self) -> f64 {
        *self.ring.front().expect("ring is never empty")
    }

    /// Delayed output one step ahead, if the dead time spans at least one step.
    fn delayed_next(&self) -> Option<f64> {
        self.ring.get(1).copied()
    }

    fn rates(&self, xa: &DVector<f64>, xf: &DVector<f64>, u: f64, base: f64, sat: bool) -> (DVector<f64>, DVector<f64>) {
        let uf = Self::output(&self.avg, xa, u);
        let r = self.ch.response(uf - self.ch.u_ref, base, sat);
        (derivative(&self.avg, xa, u), derivative(&self.fwd, xf, r))
    }

    /// One RK4 step of the whole channel with the terminal voltage moving
    /// linearly from `u0` to `u1`; pushes the new output into the dead time.
    fn step(&mut self, u0: f64, u1: f64, dt: f64, base: f64, sat: bool) {
        let um = 0.5 * (u0 + u1);
        let h = 0.5 * dt;
        let (xa, xf) = (&self.x_avg, &self.x_fwd);
        let (a1, f1) = self.rates(xa, xf, u0, base, sat);
        let (a2, f2) = self.rates(&(xa + &a1 * h), &(xf + &f1 * h), um, base, sat);
        let (a3, f3) = self.rates(&(xa + &a2 * h), &(xf + &f2 * h), um, base, sat);
        let (a4, f4) = self.rates(&(xa + &a3 * dt), &(xf + &f3 * dt), u1, base, sat);
        self.x_avg += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        self.x_fwd += (f1 + f2 * 2.0 + f3 * 2.0 + f4) * (dt / 6.0);
        let uf = Self::output(&self.avg, &self.x_avg, u1);
        let r = self.ch.response(uf - self.ch.u_ref, base, sat);
        self.ring.push_back(Self::output(&self.fwd, &self.x_fwd, r));
        while self.ring.len() > self.ring_len {
            self.ring.pop_front();
        }
    }
}

fn derivative(sys: &StateSpace, x: &DVector<f64>, u: f64) -> DVector<f64> {
    if sys.n_states() == 0 {
        return DVector::zeros(0);
    }
    sys.a() * x + sys.b().column(0) * u
}

/// Node voltages at the DER nodes for given per-DER P share and Q (p.u.).
struct GridSide<'a> {
    grid: &'a GridModel,
    net: Network,
    nodes: Vec<usize>,
    opts: PowerFlowOptions,
    last: PowerFlowSolution,
    coupling: GridCoupling,
    u0: Vec<f64>,
    p0: Vec<f64>,
    k_q: DMatrix<f64>,
    k_p: DMatrix<f64>,
}

impl<'a> GridSide<'a> {
    fn new(grid: &'a GridModel, share0: f64, coupling: GridCoupling) -> Result<Self, SimError> {
        let net = Network::from_grid(grid).map_err(SimError::InitialPowerFlow)?;
        let nodes = der_node_indices(grid);
        let opts = PowerFlowOptions::default();
        let inj = injections_with(grid, |k| share0 * grid.ders[k].p_inst_mw, |_| 0.0);
        let sol = net.solve(&inj, None, &opts).map_err(SimError::InitialPowerFlow)?;
        let s = net.sensitivities(&sol, &nodes).map_err(SimError::InitialPowerFlow)?;
        let u0 = nodes.iter().map(|&i| sol.voltages[i]).collect();
        let p0 = grid.ders.iter().map(|d| share0 * d.p_inst_mw / grid.base_mva).collect();
        Ok(GridSide { grid, net, nodes, opts, last: sol, coupling, u0, p0, k_q: s.k_q, k_p: s.k_p })
    }

    fn voltages(&mut self, share: f64, q: &[f64]) -> Result<Vec<f64>, PowerFlowError> {
        let g = self.grid;
        match self.coupling {
            GridCoupling::Linearized => {
                let n = q.len();
                let dp: Vec<f64> = (0..n).map(|k| share * g.ders[k].p_inst_mw / g.base_mva - self.p0[k]).collect();
                Ok((0..n)
                    .map(|i| {
                        let mut u = self.u0[i];
                        for j in 0..n {
                            u += self.k_q[(i, j)] * q[j] + self.k_p[(i, j)] * dp[j];
                        }
                        u
                    })
                    .collect())
            }
            GridCoupling::FullPowerFlow => {
                let inj = injections_with(g, |k| share * g.ders[k].p_inst_mw, |k| q[k] * g.base_mva);
                let sol = self.net.solve(&inj, Some(&self.last), &self.opts)?;
                let u = self.nodes.iter().map(|&i| sol.voltages[i]).collect();
                self.last = sol;
                Ok(u)
            }
        }
    }
}

/// residual noise per unit of sector gain left by the power-flow tolerance
const NOISE_FLOOR: f64 = 1e-7;

/// Reactive-power equilibrium `q = -ψ(U(q) - u_ref)`.
///
/// Pseudo-transient continuation on `dq/dτ = -(q + ψ(U(q) - u_ref))` with
/// implicit Euler steps and the initial `K_Q` as Jacobian model: the flow
/// contracts for monotone `ψ`, so short pseudo-time steps always make
/// progress across the kinks of the characteristic, and long ones turn into
/// Newton steps near the solution.
fn initial_equilibrium(
    side: &mut GridSide<'_>,
    chars: &[QuCharacteristic],
    share0: f64,
    base: f64,
    saturate: bool,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let n = chars.len();
    let residual = |side: &mut GridSide<'_>, q: &[f64]| -> Result<(Vec<f64>, Vec<f64>), SimError> {
        let u = side.voltages(share0, q).map_err(SimError::InitialPowerFlow)?;
        let f = (0..n).map(|k| q[k] + chars[k].response(u[k] - chars[k].u_ref, base, saturate)).collect();
        Ok((u, f))
    };
    let norm = |f: &[f64]| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = NOISE_FLOOR * (1.0 + chars.iter().map(|c| c.sector_bound(base)).fold(0.0, f64::max));
    let mut q = vec![0.0; n];
    let (mut u, mut f) = residual(side, &q)?;
    let mut dtau = 1.0;
    for _ in 0..500 {
        let before = norm(&f);
        if before < 1e-12 {
            return Ok((q, u));
        }
        let mut j = DMatrix::identity(n, n) * (1.0 + 1.0 / dtau);
        for k in 0..n {
            let d = chars[k].derivative(u[k] - chars[k].u_ref, base, saturate);
            for l in 0..n {
                j[(k, l)] += d * side.k_q[(k, l)];
            }
        }
        let step = j.lu().solve(&DVector::from_column_slice(&f)).ok_or(SimError::Initialization)?;
        let trial: Vec<f64> = (0..n).map(|k| q[k] - step[k]).collect();
        let (tu, tf) = residual(side, &trial)?;
        let after = norm(&tf);
        if after < before {
            (q, u, f) = (trial, tu, tf);
            if after < floor && after > 0.5 * before {
                // power-flow tolerance limits further progress
                return Ok((q, u));
            }
            dtau = (dtau * 2.0 * before / after.max(1e-300)).min(1e12);
        } else {
            if dtau < 1e-9 {
                break;
            }
            dtau *= 0.25;
        }
    }
    if norm(&f) < floor {
        Ok((q, u))
    } else {
        Err(SimError::Initialization)
    }
}

/// Run a ramp scenario with every DER's own control loop.
pub fn simulate(grid: &GridModel, scenario: &SimScenario) -> Result<SimTrace, SimError> {
    scenario.validate()?;
    if grid.ders.is_empty() {
        return Err(SimError::NoDers);
    }
    let dt = scenario.dt;
    let base = grid.base_mva;
    let sat = scenario.saturation;
    let chars: Vec<QuCharacteristic> = grid.ders.iter().map(|d| d.qu.with_slope(scenario.slope)).collect();
    let share0 = scenario.ramp.share(0.0);
    let mut side = GridSide::new(grid, share0, scenario.coupling)?;
    let (q_eq, u_eq) = initial_equilibrium(&mut side, &chars, share0, base, sat)?;

    let mut chans = Vec::with_capacity(grid.ders.len());
    for (k, d) in grid.ders.iter().enumerate() {
        let l = d.model.control_loop()?;
        let delay_steps = (l.delay / dt).round() as usize;
        if l.delay > 0.0 && delay_steps == 0 {
            return Err(SimError::DelayTooShort { dt, delay: l.delay });
        }
        let avg = l.averaging_block()?;
        let fwd = l.forward_block()?;
        let x_avg = DerChannel::steady_state(&avg, u_eq[k])?;
        let r = -q_eq[k];
        let x_fwd = DerChannel::steady_state(&fwd, r)?;
        let y = DerChannel::output(&fwd, &x_fwd, r);
        chans.push(DerChannel {
            ch: chars[k],
            avg,
            fwd,
            x_avg,
            x_fwd,
            ring: core::iter::repeat_n(y, delay_steps + 1).collect(),
            ring_len: delay_steps + 1,
        });
    }

    let steps = (scenario.horizon / dt).round() as usize;
    let n = chans.len();
    let mut trace = SimTrace {
        times: Vec::with_capacity(steps + 1),
        der_ids: grid.der_ids(),
        voltages: vec![Vec::with_capacity(steps + 1); n],
        reactive_powers: vec![Vec::with_capacity(steps + 1); n],
        final_states: Vec::new(),
        ramp_end: scenario.ramp.end(),
        truncated_at: None,
    };
    let mut q: Vec<f64> = chans.iter().map(|c| -c.delayed()).collect();
    let valid = |u: &Vec<f64>| u.iter().all(|v| v.is_finite() && *v > 0.0);
    let mut u = match side.voltages(scenario.ramp.share(0.0), &q) {
        Ok(u) if valid(&u) => u,
        _ => return Err(SimError::Initialization),
    };
    for i in 0..=steps {
        let t = i as f64 * dt;
        trace.times.push(t);
        for k in 0..n {
            trace.voltages[k].push(u[k]);
            trace.reactive_powers[k].push(q[k]);
        }
        if i == steps {
            break;
        }
        let t_next = (i + 1) as f64 * dt;
        let share_next = scenario.ramp.share(t_next);
        let q_ahead: Vec<f64> = chans.iter().zip(&q).map(|(c, &qk)| c.delayed_next().map_or(qk, |y| -y)).collect();
        let u_next = match side.voltages(share_next, &q_ahead) {
            Ok(v) if valid(&v) => v,
            _ => {
                trace.truncated_at = Some(t_next);
                break;
            }
        };
        for (k, c) in chans.iter_mut().enumerate() {
            c.step(u[k], u_next[k], dt, base, sat);
        }
        let q_new: Vec<f64> = chans.iter().map(|c| -c.delayed()).collect();
        u = if q_new == q_ahead {
            u_next
        } else {
            // dead time shorter than a step
            match side.voltages(share_next, &q_new) {
                Ok(v) if valid(&v) => v,
                _ => {
                    trace.truncated_at = Some(t_next);
                    break;
                }
            }
        };
        q = q_new;
    }
    trace.final_states = chans
        .iter()
        .map(|c| c.x_avg.iter().chain(c.x_fwd.iter()).copied().collect())
        .collect();
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    AsymptoticallyStable,
    NotDecayed,
    Diverged,
}

impl StabilityVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityVerdict::AsymptoticallyStable => "asymptotically_stable",
            StabilityVerdict::NotDecayed => "not_decayed",
            StabilityVerdict::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// length of each of the two comparison windows, s
    pub window: f64,
    pub decay_threshold: f64,
    /// voltage excursion from the initial value counted as divergence, p.u.
    pub divergence_guard: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { window: 5.0, decay_threshold: 0.5, divergence_guard: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityClassification {
    pub verdict: StabilityVerdict,
    /// largest late-to-early peak-to-peak ratio over the DER voltages
    pub decay_ratio: f64,
    pub window: (f64, f64),
}

/// Ratio of the peak-to-peak voltage swing in the second window after the
/// ramp to that in the first.
pub fn classify(trace: &SimTrace, ramp_end: f64, opts: &ClassifyOptions) -> Result<StabilityClassification, SimError> {
    let w = opts.window;
    let window = (ramp_end, ramp_end + 2.0 * w);
    let diverged_result = |ratio| StabilityClassification { verdict: StabilityVerdict::Diverged, decay_ratio: ratio, window };
    if trace.truncated_at.is_some() {
        return Ok(diverged_result(f64::INFINITY));
    }
    let end = trace.times.last().copied().unwrap_or(0.0);
    let tol = 1e-9 * (1.0 + window.1);
    if end + tol < window.1 {
        return Err(SimError::WindowExceedsTrace { needed: window.1, available: end });
    }
    let in_window = |a: f64, b: f64| {
        let lo = trace.times.partition_point(|&t| t < a - tol);
        let hi = trace.times.partition_point(|&t| t <= b + tol);
        lo..hi
    };
    let first = in_window(window.0, window.0 + w);
    let second = in_window(window.0 + w, window.1);
    let pp = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if v.is_empty() { 0.0 } else { hi - lo }
    };
    let mut ratio: f64 = 0.0;
    let mut diverged = false;
    for u in &trace.voltages {
        let u0 = u[0];
        if u.iter().any(|&x| !((x - u0).abs() <= opts.divergence_guard)) {
            diverged = true;
        }
        let a = pp(&u[first.clone()]);
        let b = pp(&u[second.clone()]);
        let r = if a < 1e-12 && b < 1e-12 { 0.0 } else { b / a.max(1e-300) };
        ratio = ratio.max(r);
    }
    if diverged {
        return Ok(diverged_result(ratio));
    }
    let verdict = if ratio < opts.decay_threshold {
        StabilityVerdict::AsymptoticallyStable
    } else {
        StabilityVerdict::NotDecayed
    };
    Ok(StabilityClassification { verdict, decay_ratio: ratio, window })
}

/// Largest uniform slope the simulator classifies as stable.
pub fn find_sim_threshold(
    grid: &GridModel,
    template: &SimScenario,
    search: &SearchOptions,
    classify_opts: &ClassifyOptions,
) -> Result<SearchResult<StabilityClassification>, SimError> {
    let r = bracket_search(search, |m| {
        let sc = SimScenario { slope: m, ..*template };
        let trace = simulate(grid, &sc)?;
        let c = classify(&trace, sc.ramp.end(), classify_opts)?;
        Ok::<_, SimError>((c.verdict == StabilityVerdict::AsymptoticallyStable, c))
    })?;
    Ok(r)
}
