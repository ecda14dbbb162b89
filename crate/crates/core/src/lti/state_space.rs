use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{eigenvalues, LtiError, RationalTransfer};
#[cfg(test)]
use super::poly;

/// Continuous-time state-space model `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch("A must be square"));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(LtiError::DimensionMismatch("B rows / C columns must equal the state count"));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch("D must be outputs x inputs"));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite);
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// Static gain `D` with no dynamics.
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.a, self.b, self.c, self.d)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.n_inputs() == 1 && self.n_outputs() == 1
    }

    /// `C (sI - A)^{-1} B + D`.
    pub fn eval(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.n_states();
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let a = self.a.map(|v| Complex64::new(v, 0.0));
        let resolvent = DMatrix::<Complex64>::identity(n, n) * s - a;
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = resolvent.lu().solve(&b).ok_or(LtiError::SingularAt(s.re, s.im))?;
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        Ok(c * x + d)
    }

    pub fn freq(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn freq_response(&self, omegas: &[f64]) -> Result<Vec<DMatrix<Complex64>>, LtiError> {
        omegas.iter().map(|&w| self.freq(w)).collect()
    }

    pub fn poles(&self) -> Result<Vec<Complex64>, LtiError> {
        eigenvalues(&self.a)
    }

    /// Largest real part among the poles (`-inf` without dynamics).
    pub fn spectral_abscissa(&self) -> Result<f64, LtiError> {
        super::spectral_abscissa(&self.a)
    }

    /// Cascade: `self` feeds `next`, i.e. the transfer `next · self`.
    pub fn series(&self, next: &StateSpace) -> Result<StateSpace, LtiError> {
        if self.n_outputs() != next.n_inputs() {
            return Err(LtiError::DimensionMismatch("series: outputs of the first block must feed the second"));
        }
        let (n1, n2) = (self.n_states(), next.n_states());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&next.b * &self.c));
        let mut b = DMatrix::zeros(n, self.n_inputs());
        b.view_mut((0, 0), (n1, self.n_inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.n_inputs())).copy_from(&(&next.b * &self.d));
        let mut c = DMatrix::zeros(next.n_outputs(), n);
        c.view_mut((0, 0), (next.n_outputs(), n1)).copy_from(&(&next.d * &self.c));
        c.view_mut((0, n1), (next.n_outputs(), n2)).copy_from(&next.c);
        let d = &next.d * &self.d;
        StateSpace::new(a, b, c, d)
    }

    /// Block-diagonal stacking: independent channels side by side.
    pub fn block_diag(blocks: &[StateSpace]) -> StateSpace {
        let n: usize = blocks.iter().map(|b| b.n_states()).sum();
        let m: usize = blocks.iter().map(|b| b.n_inputs()).sum();
        let p: usize = blocks.iter().map(|b| b.n_outputs()).sum();
        let mut a = DMatrix::zeros(n, n);
        let mut bm = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(p, n);
        let mut d = DMatrix::zeros(p, m);
        let (mut xi, mut ui, mut yi) = (0, 0, 0);
        for blk in blocks {
            let (nx, nu, ny) = (blk.n_states(), blk.n_inputs(), blk.n_outputs());
            a.view_mut((xi, xi), (nx, nx)).copy_from(&blk.a);
            bm.view_mut((xi, ui), (nx, nu)).copy_from(&blk.b);
            c.view_mut((yi, xi), (ny, nx)).copy_from(&blk.c);
            d.view_mut((yi, ui), (ny, nu)).copy_from(&blk.d);
            xi += nx;
            ui += nu;
            yi += ny;
        }
        StateSpace { a, b: bm, c, d }
    }

    /// Post-multiplication by a static matrix on the input side: `G(s) · K`.
    pub fn with_input_gain(&self, k: &DMatrix<f64>) -> Result<StateSpace, LtiError> {
        if k.nrows() != self.n_inputs() {
            return Err(LtiError::DimensionMismatch("input gain rows must equal the input count"));
        }
        StateSpace::new(self.a.clone(), &self.b * k, self.c.clone(), &self.d * k)
    }

    /// Static gain `D - C A^{-1} B`; `None` if `A` is singular.
    pub fn dc_gain(&self) -> Option<DMatrix<f64>> {
        if self.n_states() == 0 {
            return Some(self.d.clone());
        }
        let x = self.a.clone().lu().solve(&self.b)?;
        Some(&self.d - &self.c * x)
    }
}

/// Controllable canonical realization of a proper SISO rational.
///
/// With the denominator made monic, `A` is the companion matrix with the
/// negated low-order coefficients in its last row, `B = e_n`, `C` carries
/// the strictly proper numerator remainder and `D` the direct feedthrough.
pub fn realize(tf: &RationalTransfer) -> StateSpace {
    let den = tf.denominator();
    let n = tf.order();
    let lead = den[n];
    let a_coef: Vec<f64> = den.iter().map(|v| v / lead).collect();
    let mut b_coef: Vec<f64> = tf.numerator().iter().map(|v| v / lead).collect();
    b_coef.resize(n + 1, 0.0);
    let d = b_coef[n];
    if n == 0 {
        return StateSpace::gain(DMatrix::from_element(1, 1, d));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -a_coef[j];
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let mut c = DMatrix::zeros(1, n);
    for j in 0..n {
        c[(0, j)] = b_coef[j] - d * a_coef[j];
    }
    StateSpace { a, b, c, d: DMatrix::from_element(1, 1, d) }
}

/// Diagonal transfer matrix with a static right factor: `diag(G_i(s)) · K`.
///
/// Each block optionally carries an exact dead time that frequency sweeps
/// apply as `exp(-jωT)` and realizations replace by a Padé approximant.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub blocks: Vec<RationalTransfer>,
    pub delays: Vec<f64>,
    pub right_factor: DMatrix<f64>,
}

impl TransferMatrix {
    pub fn new(
        blocks: Vec<RationalTransfer>,
        delays: Vec<f64>,
        right_factor: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = blocks.len();
        if delays.len() != n || right_factor.nrows() != n || right_factor.ncols() != n {
            return Err(LtiError::DimensionMismatch("block count must match the right factor"));
        }
        Ok(TransferMatrix { blocks, delays, right_factor })
    }

    /// Exact response including dead times.
    pub fn freq(&self, omega: f64) -> DMatrix<Complex64> {
        let n = self.blocks.len();
        let k = self.right_factor.map(|v| Complex64::new(v, 0.0));
        let mut g = DMatrix::zeros(n, n);
        for (i, (blk, &t)) in self.blocks.iter().zip(&self.delays).enumerate() {
            g[(i, i)] = blk.freq(omega) * Complex64::new(0.0, -omega * t).exp();
        }
        g * k
    }

    /// Finite-dimensional realization with Padé dead times of `pade_order`.
    pub fn realize(&self, pade_order: usize) -> Result<StateSpace, LtiError> {
        let blocks = self
            .blocks
            .iter()
            .zip(&self.delays)
            .map(|(g, &t)| {
                let p = super::pade_delay(t, pade_order)?;
                Ok(realize(&g.series(&p)))
            })
            .collect::<Result<Vec<_>, LtiError>>()?;
        compose_mimo(&blocks, &self.right_factor)
    }
}

/// `blockdiag(G_i) · K` for SISO blocks `G_i`: `A = diag(A_i)`,
/// `B = diag(B_i) K`, `C = diag(C_i)`, `D = diag(d_i) K`.
pub fn compose_mimo(blocks: &[StateSpace], right_factor: &DMatrix<f64>) -> Result<StateSpace, LtiError> {
    if blocks.iter().any(|b| !b.is_siso()) {
        return Err(LtiError::NotSiso);
    }
    if right_factor.nrows() != blocks.len() || right_factor.ncols() != blocks.len() {
        return Err(LtiError::DimensionMismatch("right factor must be n x n for n blocks"));
    }
    StateSpace::block_diag(blocks).with_input_gain(right_factor)
}
