use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{LtiError, StateSpace};
#[allow(unused_imports)]
use num_traits::Float;

/// Sampled unit-step response of a SISO model.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResponse {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when the model has a pole with nonnegative real part; the trace
    /// is still computed.
    pub unstable: bool,
}

/// Default integration step: a tenth of the fastest time constant `1/|λ|`.
pub fn default_step(sys: &StateSpace) -> Result<f64, LtiError> {
    let fastest = sys
        .poles()?
        .iter()
        .map(|l| l.norm())
        .filter(|m| *m > 0.0)
        .fold(0.0, f64::max);
    Ok(if fastest > 0.0 { 0.1 / fastest } else { 0.01 })
}

/// Classical fixed-step RK4 on `x' = A x + B`, `y = C x + D` (unit step
/// applied at `t = 0` from rest).
pub fn step_response(sys: &StateSpace, horizon: f64, dt: f64) -> Result<StepResponse, LtiError> {
    if !sys.is_siso() {
        return Err(LtiError::NotSiso);
    }
    if !(dt > 0.0) || !(horizon >= 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(LtiError::InvalidParameter("step response needs dt > 0 and horizon >= 0"));
    }
    let unstable = sys.spectral_abscissa()? >= 0.0;
    let n = sys.n_states();
    let steps = (horizon / dt).round() as usize;
    let a = sys.a();
    let b = DVector::from_column_slice(sys.b().column(0).as_slice());
    let c = sys.c();
    let d = sys.d()[(0, 0)];
    let f = |x: &DVector<f64>| a * x + &b;
    let mut x = DVector::zeros(n);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let out = |x: &DVector<f64>| -> f64 {
        if n == 0 {
            d
        } else {
            (c * x)[(0, 0)] + d
        }
    };
    for k in 0..=steps {
        times.push(k as f64 * dt);
        values.push(out(&x));
        if k == steps || n == 0 {
            continue;
        }
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(StepResponse { times, values, unstable })
}

/// One RK4 step of `x' = A x + B u` with `u` held over the step.
pub fn rk4_step(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &mut DVector<f64>, u: &DVector<f64>, dt: f64) {
    if x.is_empty() {
        return;
    }
    let bu = b * u;
    let f = |x: &DVector<f64>| a * x + &bu;
    let k1 = f(x);
    let k2 = f(&(&*x + &k1 * (dt / 2.0)));
    let k3 = f(&(&*x + &k2 * (dt / 2.0)));
    let k4 = f(&(&*x + &k3 * dt));
    *x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{realize, RationalTransfer};
    use alloc::vec;

    #[test]
    fn constant_is_flat() {
        let r = step_response(&realize(&RationalTransfer::constant(1.0)), 1.0, 0.1).unwrap();
        assert!(r.values.iter().all(|&v| v == 1.0));
        assert_eq!(r.times.len(), 11);
        assert!(!r.unstable);
    }

    #[test]
    fn pt1_at_one_time_constant() {
        let r = step_response(&realize(&RationalTransfer::pt1(2.0)), 4.0, 0.001).unwrap();
        let i = r.times.iter().position(|&t| (t - 2.0).abs() < 1e-9).unwrap();
        assert!((r.values[i] - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn final_value_reaches_static_gain() {
        let g = RationalTransfer::new(vec![1.0], vec![1.0, 3.0, 2.0]).unwrap();
        let ss = realize(&g);
        let dt = default_step(&ss).unwrap();
        let r = step_response(&ss, 20.0 * 2.0, dt).unwrap();
        assert!((r.values.last().unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn unstable_flagged_not_refused() {
        let g = RationalTransfer::new(vec![1.0], vec![1.0, -1.0]).unwrap();
        let r = step_response(&realize(&g), 1.0, 0.01).unwrap();
        assert!(r.unstable);
        assert_eq!(r.values.len(), 101);
    }

    #[test]
    fn rejects_bad_step() {
        let ss = realize(&RationalTransfer::pt1(1.0));
        assert!(step_response(&ss, 1.0, 0.0).is_err());
    }
}
