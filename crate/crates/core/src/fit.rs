//! PT2 approximations from step-response specifications or a detailed
//! model's frequency response.

use alloc::vec::Vec;

use crate::der::{DerLoop, Pt2Params};
use crate::optimize::NelderMead;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("trace never reaches 90% of the static gain")]
    NeverReaches90,
    #[error("trace starts at or above 90% of the static gain, rise time undefined")]
    NoRise,
    #[error("trace does not settle inside the tolerance band before its end")]
    NotSettled,
    #[error("trace is empty or times and values differ in length")]
    BadTrace,
    #[error("static gain must be finite and > 0, got {0}")]
    BadGain(f64),
    #[error("model static gain is {0}, expected 1")]
    ModelGain(f64),
    #[error("invalid step specification: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("optimizer did not converge within {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub overshoot: f64,
    pub rise_time_90: f64,
    pub settling_time: f64,
}

/// Step-response requirements of the connection rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TarStepSpec {
    pub overshoot: f64,
    pub rise_time_90: f64,
    pub settling_time: f64,
    pub settle_band: f64,
}

impl TarStepSpec {
    /// 15% overshoot, 5 s to 90%, settled about 3 s later.
    pub const HIGH_VOLTAGE: TarStepSpec =
        TarStepSpec { overshoot: 0.15, rise_time_90: 5.0, settling_time: 8.0, settle_band: 0.05 };

    pub fn validate(&self) -> Result<(), FitError> {
        if !(0.0..1.0).contains(&self.overshoot) {
            return Err(FitError::InvalidSpec("overshoot must lie in [0, 1)"));
        }
        if !(self.rise_time_90 > 0.0 && self.rise_time_90 < self.settling_time && self.settling_time.is_finite()) {
            return Err(FitError::InvalidSpec("requires 0 < rise time < settling time"));
        }
        if !(self.settle_band > 0.0 && self.settle_band < 0.5) {
            return Err(FitError::InvalidSpec("settle band must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub band_low: f64,
    pub band_high: f64,
    pub grid_points: usize,
    /// weights of the overshoot, rise-time and settling-time residuals
    pub weights: (f64, f64, f64),
    pub optimizer: NelderMead,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            band_low: 1e-2,
            band_high: 1e2,
            grid_points: 200,
            weights: (100.0, 100.0, 1.0),
            optimizer: NelderMead { initial_step: 0.3, ..NelderMead::default() },
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.band_low > 0.0 && self.band_low < self.band_high && self.band_high.is_finite()) {
            return Err(FitError::InvalidConfig("requires 0 < band_low < band_high"));
        }
        if self.grid_points < 50 {
            return Err(FitError::InvalidConfig("at least 50 grid points"));
        }
        let (a, b, c) = self.weights;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || a + b + c == 0.0 {
            return Err(FitError::InvalidConfig("weights must be >= 0 and not all zero"));
        }
        Ok(())
    }

    /// Log-spaced frequencies over the fit band.
    pub fn frequencies(&self) -> Vec<f64> {
        log_space(self.band_low, self.band_high, self.grid_points)
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Tar,
    Der,
}

impl FitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMode::Tar => "tar",
            FitMode::Der => "der",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt2Fit {
    pub params: Pt2Params,
    pub residual: f64,
    pub iterations: usize,
    pub mode: FitMode,
}

/// Overshoot, 90% rise time and settling time of a sampled step response.
///
/// Crossing times are linearly interpolated between samples.
pub fn step_metrics(times: &[f64], values: &[f64], static_gain: f64, settle_band: f64) -> Result<StepMetrics, FitError> {
    if times.is_empty() || times.len() != values.len() {
        return Err(FitError::BadTrace);
    }
    if !(static_gain > 0.0) || !static_gain.is_finite() {
        return Err(FitError::BadGain(static_gain));
    }
    let g = static_gain;
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let overshoot = ((peak - g) / g).max(0.0);

    let level = 0.9 * g;
    if values[0] >= level {
        return Err(FitError::NoRise);
    }
    let k = values.iter().position(|&v| v >= level).ok_or(FitError::NeverReaches90)?;
    let rise_time_90 = crossing(times, values, k, level);

    let tol = settle_band * g;
    let outside = |v: f64| (v - g).abs() > tol;
    let settling_time = match values.iter().rposition(|&v| outside(v)) {
        None => times[0],
        Some(last) if last + 1 == values.len() => return Err(FitError::NotSettled),
        Some(last) => {
            let bound = if values[last] > g { g + tol } else { g - tol };
            crossing(times, values, last + 1, bound)
        }
    };
    Ok(StepMetrics { overshoot, rise_time_90, settling_time })
}

fn crossing(times: &[f64], values: &[f64], k: usize, level: f64) -> f64 {
    if k == 0 {
        return times[0];
    }
    let (t0, t1, v0, v1) = (times[k - 1], times[k], values[k - 1], values[k]);
    if v1 == v0 {
        return t1;
    }
    t0 + (t1 - t0) * (level - v0) / (v1 - v0)
}

/// Closed-form unit-step response of `1 / (1 + 2DTs + T²s²)`.
pub fn pt2_step_value(damping: f64, time_constant: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (d, tc) = (damping, time_constant);
    let x = t / tc;
    if (d - 1.0).abs() < 1e-7 {
        return 1.0 - (-x).exp() * (1.0 + x);
    }
    if d < 1.0 {
        let r = (1.0 - d * d).sqrt();
        1.0 - (-d * x).exp() * ((r * x).cos() + d / r * (r * x).sin())
    } else {
        let r = (d * d - 1.0).sqrt();
        let (s1, s2) = (-d + r, -d - r);
        1.0 + (s2 * (s1 * x).exp() - s1 * (s2 * x).exp()) / (s1 - s2)
    }
}

/// Horizon long enough for the PT2 to settle into a band of half-width `band`.
fn pt2_horizon(d: f64, t: f64, band: f64) -> f64 {
    let slow = if d < 1.0 { d / t } else { (d - (d * d - 1.0).max(0.0).sqrt()) / t };
    let damp = if d < 1.0 { (1.0 - d * d).sqrt() } else { 1.0 };
    let settle = (1.0 / (band * damp)).ln().max(1.0) / slow.max(1e-9);
    1.5 * settle + 10.0 * t
}

const TRACE_SAMPLES: usize = 20_000;

/// Step metrics of a unit-gain PT2 from a densely sampled closed-form trace.
pub fn pt2_step_metrics(p: &Pt2Params, settle_band: f64, min_horizon: f64) -> Result<StepMetrics, FitError> {
    let horizon = pt2_horizon(p.damping, p.time_constant, settle_band).max(min_horizon);
    let dt = horizon / TRACE_SAMPLES as f64;
    let times: Vec<f64> = (0..=TRACE_SAMPLES).map(|k| k as f64 * dt).collect();
    let values: Vec<f64> = times
        .iter()
        .map(|&t| p.gain * pt2_step_value(p.damping, p.time_constant, t))
        .collect();
    step_metrics(&times, &values, p.gain, settle_band)
}

/// Weighted, target-normalized residual of a candidate against the step requirements.
pub fn tar_objective(spec: &TarStepSpec, weights: (f64, f64, f64), p: &Pt2Params) -> f64 {
    let Ok(m) = pt2_step_metrics(p, spec.settle_band, 2.0 * spec.settling_time) else {
        return 1e6;
    };
    let rz = (m.overshoot - spec.overshoot) / spec.overshoot.max(0.01);
    let r90 = (m.rise_time_90 - spec.rise_time_90) / spec.rise_time_90;
    let rs = (m.settling_time - spec.settling_time) / spec.settling_time;
    weights.0 * rz * rz + weights.1 * r90 * r90 + weights.2 * rs * rs
}

fn unit_pt2(x: &[f64]) -> Pt2Params {
    Pt2Params { gain: 1.0, damping: x[0].exp(), time_constant: x[1].exp() }
}

/// Least-squares PT2 matching overshoot, rise and settling time, `κ = 1`.
///
/// Residuals are relative to the targets so the weights compare like with
/// like; the search runs over `(ln D, ln T)`.
pub fn fit_tar(spec: &TarStepSpec, cfg: &FitConfig) -> Result<Pt2Fit, FitError> {
    spec.validate()?;
    cfg.validate()?;
    let x0 = [0.7f64.ln(), (spec.rise_time_90 / 3.0).ln()];
    let m = cfg.optimizer.minimize(|x| tar_objective(spec, cfg.weights, &unit_pt2(x)), &x0);
    if !m.converged {
        return Err(FitError::NoConvergence(m.iterations));
    }
    Ok(Pt2Fit { params: unit_pt2(&m.x), residual: m.value, iterations: m.iterations, mode: FitMode::Tar })
}

/// Phase of `1 / (1 + 2DTjω - T²ω²)`, continuous in `[-π, 0]`.
pub fn pt2_phase(d: f64, t: f64, omega: f64) -> f64 {
    -(2.0 * d * t * omega).atan2(1.0 - t * t * omega * omega)
}

pub fn pt2_log_magnitude(d: f64, t: f64, omega: f64) -> f64 {
    let re = 1.0 - t * t * omega * omega;
    let im = 2.0 * d * t * omega;
    -0.5 * (re * re + im * im).ln()
}

/// Least-squares PT2 matching log-magnitude and unwrapped phase of a
/// detailed loop over the fit band, `κ = 1`.
pub fn fit_der(model: &DerLoop, cfg: &FitConfig) -> Result<Pt2Fit, FitError> {
    cfg.validate()?;
    let gain = model.static_gain();
    if !((gain - 1.0).abs() < 1e-9) {
        return Err(FitError::ModelGain(gain));
    }
    let omegas = cfg.frequencies();
    let target_mag: Vec<f64> = omegas.iter().map(|&w| model.freq(w).norm().ln()).collect();
    let target_phase = model.unwrapped_phase(&omegas);
    let objective = |x: &[f64]| {
        let (d, t) = (x[0].exp(), x[1].exp());
        omegas
            .iter()
            .zip(target_mag.iter().zip(&target_phase))
            .map(|(&w, (&m, &p))| {
                let dm = pt2_log_magnitude(d, t, w) - m;
                let dp = pt2_phase(d, t, w) - p;
                dm * dm + dp * dp
            })
            .sum::<f64>()
    };
    let w_mid = (cfg.band_low * cfg.band_high).sqrt();
    let x0 = [0.7f64.ln(), (1.0 / w_mid).ln()];
    let m = cfg.optimizer.minimize(objective, &x0);
    if !m.converged {
        return Err(FitError::NoConvergence(m.iterations));
    }
    Ok(Pt2Fit { params: unit_pt2(&m.x), residual: m.value, iterations: m.iterations, mode: FitMode::Der })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::der::{build_control_loop, DerControlParams, DerModel};
    use crate::lti::RationalTransfer;
    use alloc::vec;

    fn sampled(f: impl Fn(f64) -> f64, horizon: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        let v = t.iter().map(|&x| f(x)).collect();
        (t, v)
    }

    #[test]
    fn pt1_rise_time() {
        let (t, v) = sampled(|x| 1.0 - (-x).exp(), 20.0, 200_000);
        let m = step_metrics(&t, &v, 1.0, 0.05).unwrap();
        assert_eq!(m.overshoot, 0.0);
        assert!((m.rise_time_90 - 10f64.ln()).abs() < 1e-6);
        assert!((m.settling_time - 20f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn tar_pt2_overshoot() {
        let m = pt2_step_metrics(&Pt2Params::TAR, 0.05, 0.0).unwrap();
        let d: f64 = 0.517;
        let formula = (-core::f64::consts::PI * d / (1.0 - d * d).sqrt()).exp();
        assert!((m.overshoot - formula).abs() < 1e-6);
        assert!((m.overshoot - 0.15).abs() < 0.005);
    }

    #[test]
    fn degenerate_traces() {
        let (t, v) = sampled(|_| 1.0, 5.0, 10);
        assert_eq!(step_metrics(&t, &v, 1.0, 0.05), Err(FitError::NoRise));
        let (t, v) = sampled(|x| 0.5 * (1.0 - (-x).exp()), 20.0, 100);
        assert_eq!(step_metrics(&t, &v, 1.0, 0.05), Err(FitError::NeverReaches90));
        let (t, v) = sampled(|x| 1.0 - (-x).exp(), 2.5, 100);
        assert_eq!(step_metrics(&t, &v, 1.0, 0.05), Err(FitError::NotSettled));
    }

    #[test]
    fn closed_form_matches_simulation() {
        for d in [0.3, 0.999_999_99, 1.0, 1.7] {
            let g = RationalTransfer::new(vec![1.0], vec![1.0, 2.0 * d * 1.5, 2.25]).unwrap();
            let r = crate::lti::step_response(&crate::lti::realize(&g), 10.0, 1e-3).unwrap();
            for (t, v) in r.times.iter().zip(&r.values).step_by(500) {
                assert!((pt2_step_value(d, 1.5, *t) - v).abs() < 1e-8, "d={d} t={t}");
            }
        }
    }

    #[test]
    fn tar_fit_reproduces_envelope_model() {
        let f = fit_tar(&TarStepSpec::HIGH_VOLTAGE, &FitConfig::default()).unwrap();
        let p = f.params;
        assert!((p.damping - 0.517).abs() < 0.05 * 0.517, "{p:?}");
        assert!((p.time_constant - 2.335).abs() < 0.05 * 2.335, "{p:?}");
        assert_eq!(p.gain, 1.0);
    }

    #[test]
    fn tar_fit_reports_infeasible_residual() {
        let spec = TarStepSpec { overshoot: 0.99, rise_time_90: 1.0, settling_time: 1.1, settle_band: 0.05 };
        let f = fit_tar(&spec, &FitConfig::default()).unwrap();
        assert!(f.residual > 1.0, "{f:?}");
    }

    #[test]
    fn der_self_fit_is_identity() {
        let p = Pt2Params { gain: 1.0, damping: 0.6, time_constant: 1.7 };
        let model = DerModel::Pt2(p).control_loop().unwrap();
        let f = fit_der(&model, &FitConfig::default()).unwrap();
        assert!((f.params.damping - 0.6).abs() < 1e-6);
        assert!((f.params.time_constant - 1.7).abs() < 1e-6);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn der_fit_rejects_non_unit_gain() {
        let model = DerLoop { averaging: vec![], forward: vec![RationalTransfer::new(vec![2.0], vec![1.0, 1.0]).unwrap()], delay: 0.0 };
        assert_eq!(fit_der(&model, &FitConfig::default()), Err(FitError::ModelGain(2.0)));
    }

    #[test]
    fn der_fit_of_reference_wind_farm() {
        let g = build_control_loop(&DerControlParams::WF_FRC).unwrap();
        let f = fit_der(&g, &FitConfig::default()).unwrap();
        assert!((f.params.damping - 0.747).abs() < 0.15 * 0.747, "{:?}", f.params);
        assert!((f.params.time_constant - 1.028).abs() < 0.15 * 1.028, "{:?}", f.params);
    }

    #[test]
    fn config_validation() {
        let bad = FitConfig { grid_points: 10, ..FitConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FitConfig { band_low: 10.0, band_high: 1.0, ..FitConfig::default() };
        assert!(bad.validate().is_err());
    }
}
