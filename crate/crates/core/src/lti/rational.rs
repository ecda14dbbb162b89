use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

use super::LtiError;

/// Polynomial helpers over ascending coefficient slices (`c[k]` multiplies `s^k`).
pub mod poly {
    use super::*;

    pub fn trim(mut c: Vec<f64>) -> Vec<f64> {
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        if c.is_empty() {
            c.push(0.0);
        }
        c
    }

    pub fn degree(c: &[f64]) -> Option<usize> {
        c.iter().rposition(|&v| v != 0.0)
    }

    pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        trim(out)
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len().max(b.len())];
        for (i, &x) in a.iter().enumerate() {
            out[i] += x;
        }
        for (i, &y) in b.iter().enumerate() {
            out[i] += y;
        }
        trim(out)
    }

    pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
        trim(a.iter().map(|v| v * k).collect())
    }

    /// Horner evaluation at a complex point.
    pub fn eval(c: &[f64], s: Complex64) -> Complex64 {
        c.iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
    }

    /// `(1 + s t)^n`
    pub fn lag_power(t: f64, n: usize) -> Vec<f64> {
        (0..n).fold(vec![1.0], |acc, _| mul(&acc, &[1.0, t]))
    }
}

/// SISO rational transfer function `num(s) / den(s)`, coefficients ascending.
///
/// Stored normalized: the denominator's constant term is 1 whenever it is
/// nonzero (the `1 + 2DTs + T²s²` form), otherwise its leading coefficient is
/// 1. Only proper functions can be constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransfer {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTransfer {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, LtiError> {
        if num.iter().chain(den.iter()).any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite);
        }
        let num = poly::trim(num);
        let den = poly::trim(den);
        let dd = poly::degree(&den).ok_or(LtiError::ZeroDenominator)?;
        if let Some(nd) = poly::degree(&num) {
            if nd > dd {
                return Err(LtiError::Improper { num: nd, den: dd });
            }
        }
        let norm = if den[0] != 0.0 { den[0] } else { den[dd] };
        Ok(RationalTransfer {
            num: poly::scale(&num, 1.0 / norm),
            den: poly::scale(&den, 1.0 / norm),
        })
    }

    pub fn constant(k: f64) -> Self {
        RationalTransfer { num: vec![k], den: vec![1.0] }
    }

    /// First-order lag `1 / (1 + sT)`; `T = 0` gives the constant 1.
    pub fn pt1(t: f64) -> Self {
        Self::new(vec![1.0], vec![1.0, t]).expect("lag with finite time constant")
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    /// Number of poles (denominator degree).
    pub fn order(&self) -> usize {
        poly::degree(&self.den).unwrap_or(0)
    }

    pub fn is_strictly_proper(&self) -> bool {
        match poly::degree(&self.num) {
            None => true,
            Some(d) => d < self.order(),
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Response at `s = jω`.
    pub fn freq(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Value at `s = 0`; infinite when the denominator has a root at the origin.
    pub fn static_gain(&self) -> f64 {
        if self.den[0] == 0.0 {
            if self.num[0] == 0.0 {
                // cancelled origin root: fall back to the limit
                let k = self.den.iter().position(|&v| v != 0.0).unwrap();
                return self.num.get(k).copied().unwrap_or(0.0) / self.den[k];
            }
            return f64::INFINITY;
        }
        self.num[0] / self.den[0]
    }

    /// Product `self · other` (cascade).
    pub fn series(&self, other: &RationalTransfer) -> RationalTransfer {
        RationalTransfer::new(
            poly::mul(&self.num, &other.num),
            poly::mul(&self.den, &other.den),
        )
        .expect("product of proper rationals is proper")
    }

    /// Unity negative feedback `L / (1 + L)`.
    pub fn feedback_unity(&self) -> Result<RationalTransfer, LtiError> {
        let den = poly::add(&self.den, &self.num);
        if poly::degree(&den).is_none() {
            return Err(LtiError::ZeroDenominator);
        }
        RationalTransfer::new(self.num.clone(), den)
    }

    /// Poles as eigenvalues of the denominator companion matrix.
    pub fn poles(&self) -> Result<Vec<Complex64>, LtiError> {
        let ss = super::realize(self);
        super::eigenvalues(ss.a())
    }
}

/// Padé approximant of `exp(-s T)` of the given order (1 to 5).
///
/// Numerator and denominator share the coefficients
/// `c_k = (2n-k)! n! / ((2n)! k! (n-k)!)`, the numerator with alternating
/// sign, so the magnitude on the imaginary axis is exactly one.
pub fn pade_delay(delay: f64, order: usize) -> Result<RationalTransfer, LtiError> {
    if !(1..=5).contains(&order) {
        return Err(LtiError::UnsupportedPadeOrder(order));
    }
    if !(delay >= 0.0) || !delay.is_finite() {
        return Err(LtiError::InvalidParameter("dead time must be finite and >= 0"));
    }
    if delay == 0.0 {
        return Ok(RationalTransfer::constant(1.0));
    }
    let fact = |k: usize| (1..=k).fold(1.0, |acc, v| acc * v as f64);
    let n = order;
    let mut num = Vec::with_capacity(n + 1);
    let mut den = Vec::with_capacity(n + 1);
    let mut tk = 1.0;
    for k in 0..=n {
        let c = fact(2 * n - k) * fact(n) / (fact(2 * n) * fact(k) * fact(n - k));
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        num.push(sgn * c * tk);
        den.push(c * tk);
        tk *= delay;
    }
    RationalTransfer::new(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalization_by_constant_term() {
        let g = RationalTransfer::new(vec![2.0], vec![2.0, 4.0]).unwrap();
        assert_eq!(g.numerator(), &[1.0]);
        assert_eq!(g.denominator(), &[1.0, 2.0]);
        let i = RationalTransfer::new(vec![3.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(i.denominator(), &[0.0, 1.0]);
        assert_eq!(i.numerator(), &[1.5]);
    }

    #[test]
    fn rejects_improper_and_zero() {
        assert_eq!(
            RationalTransfer::new(vec![0.0, 0.0, 1.0], vec![1.0, 1.0]),
            Err(LtiError::Improper { num: 2, den: 1 })
        );
        assert_eq!(
            RationalTransfer::new(vec![1.0], vec![0.0]),
            Err(LtiError::ZeroDenominator)
        );
    }

    #[test]
    fn series_examples() {
        let a = RationalTransfer::pt1(2.0);
        assert_eq!(a.series(&RationalTransfer::constant(1.0)), a);
        let b = RationalTransfer::pt1(1.0).series(&RationalTransfer::pt1(1.0));
        assert_eq!(b.denominator(), &[1.0, 2.0, 1.0]);
        assert_eq!(b.numerator(), &[1.0]);
    }

    #[test]
    fn series_pi_with_lag_hand_expansion() {
        // PI 0.5 (1 + 1/(0.2 s)) = (0.5 + 0.1 s) / (0.2 s) ; times 1/(1 + 0.1 s)
        // = (0.5 + 0.1 s) / (0.2 s + 0.02 s^2), normalized by leading 0.02:
        // (25 + 5 s) / (10 s + s^2)
        let pi = RationalTransfer::new(vec![0.5, 0.1], vec![0.0, 0.2]).unwrap();
        let g = pi.series(&RationalTransfer::pt1(0.1));
        let n = g.numerator();
        let d = g.denominator();
        assert!(close(n[0], 25.0, 1e-12) && close(n[1], 5.0, 1e-12));
        assert!(close(d[0], 0.0, 0.0) && close(d[1], 10.0, 1e-12) && close(d[2], 1.0, 1e-12));
    }

    #[test]
    fn feedback_examples() {
        let k = 3.0;
        let integ = RationalTransfer::new(vec![k], vec![0.0, 1.0]).unwrap();
        let cl = integ.feedback_unity().unwrap();
        // k/(s+k), normalized by constant term: 1/(1 + s/k)
        assert!(close(cl.static_gain(), 1.0, 1e-15));
        assert!(close(cl.denominator()[1], 1.0 / k, 1e-15));
        let half = RationalTransfer::constant(1.0).feedback_unity().unwrap();
        assert!(close(half.static_gain(), 0.5, 1e-15));
    }

    #[test]
    fn feedback_static_gain_formula() {
        let l = RationalTransfer::new(vec![4.0, 1.0], vec![1.0, 3.0, 2.0]).unwrap();
        let cl = l.feedback_unity().unwrap();
        let l0 = l.static_gain();
        assert!(close(cl.static_gain(), l0 / (1.0 + l0), 1e-14));
    }

    #[test]
    fn pade_first_order_textbook() {
        let p = pade_delay(0.2, 1).unwrap();
        assert!(close(p.numerator()[0], 1.0, 1e-15) && close(p.numerator()[1], -0.1, 1e-15));
        assert!(close(p.denominator()[1], 0.1, 1e-15));
        assert_eq!(pade_delay(0.0, 3).unwrap(), RationalTransfer::constant(1.0));
        assert_eq!(pade_delay(0.1, 0), Err(LtiError::UnsupportedPadeOrder(0)));
        assert_eq!(pade_delay(0.1, 6), Err(LtiError::UnsupportedPadeOrder(6)));
    }

    #[test]
    fn pade_third_order_phase_at_two_rad_s() {
        // exact phase of exp(-j 2 * 0.2) is -0.4 rad
        let p = pade_delay(0.2, 3).unwrap();
        let h = p.freq(2.0);
        let err_deg = (h.arg() + 0.4).abs().to_degrees();
        assert!(err_deg < 0.1, "phase error {err_deg} deg");
        assert!(close(h.norm(), 1.0, 1e-14));
    }

    #[test]
    fn pade_phase_error_below_one_degree_in_band() {
        for order in 1..=5 {
            let t = 0.3;
            let p = pade_delay(t, order).unwrap();
            for k in 1..200 {
                let w = (order as f64 / 2.0) / t * (k as f64 / 200.0);
                let exact = Complex64::new(0.0, -w * t).exp();
                let err = (p.freq(w) / exact).arg().abs().to_degrees();
                assert!(err < 1.0, "order {order} w {w}: {err}");
            }
        }
    }
}
