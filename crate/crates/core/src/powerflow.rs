//! Newton–Raphson AC power flow and voltage sensitivities.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::{GridModel, NodeKind};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerFlowError {
    #[error("zero-impedance element {0:?}")]
    ZeroImpedance(String),
    #[error("no convergence after {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    NoConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("power flow diverged to a non-physical voltage")]
    Diverged,
    #[error("injection vector length {got} does not match {expected} nodes")]
    InjectionLength { expected: usize, got: usize },
    #[error("grid has no slack node")]
    NoSlack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions { tolerance: 1e-8, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub voltages: Vec<f64>,
    pub angles: Vec<f64>,
    /// computed nodal injections, generator convention
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// `∂U/∂Q` at the DER nodes, rows and columns in `der_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub entries: DMatrix<f64>,
    pub der_order: Vec<String>,
}

/// Both sensitivity blocks at the DER nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSensitivities {
    pub k_q: DMatrix<f64>,
    pub k_p: DMatrix<f64>,
}

/// Specified nodal injections in p.u., generator convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Nodal admittance matrix in p.u. on the grid's system base.
///
/// Lines are π-equivalents converted with the from-node's nominal voltage.
/// Transformers are series impedances `uk`/`ur` on their rating with an
/// off-nominal ratio `1 + tap·step` on the high-voltage side.
pub fn build_admittance(grid: &GridModel) -> Result<DMatrix<Complex64>, PowerFlowError> {
    let n = grid.nodes.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let idx = |id: &str| grid.node_index(id).expect("validated grid");
    for b in &grid.branches {
        let (i, j) = (idx(&b.from), idx(&b.to));
        let vn = grid.nodes[i].vn_kv;
        let z_base = vn * vn / grid.base_mva;
        let z = Complex64::new(b.r_ohm, b.x_ohm) / z_base;
        if z.norm() == 0.0 {
            return Err(PowerFlowError::ZeroImpedance(b.id.clone()));
        }
        let ys = z.inv();
        let half = Complex64::new(0.0, b.b_us * 1e-6 * z_base / 2.0);
        y[(i, i)] += ys + half;
        y[(j, j)] += ys + half;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    for t in &grid.transformers {
        let (h, l) = (idx(&t.hv_node), idx(&t.lv_node));
        let zk = t.uk_percent / 100.0 * grid.base_mva / t.s_rated_mva;
        let r = t.ur_percent / 100.0 * grid.base_mva / t.s_rated_mva;
        let x = (zk * zk - r * r).max(0.0).sqrt();
        let z = Complex64::new(r, x);
        if z.norm() == 0.0 {
            return Err(PowerFlowError::ZeroImpedance(t.id.clone()));
        }
        let ys = z.inv();
        let ratio = 1.0 + t.tap_pos as f64 * t.tap_step_percent / 100.0;
        y[(h, h)] += ys / (ratio * ratio);
        y[(l, l)] += ys;
        y[(h, l)] -= ys / ratio;
        y[(l, h)] -= ys / ratio;
    }
    Ok(y)
}

/// Operating-point injections: DER active feed-in, loads, zero DER reactive power.
pub fn operating_injections(grid: &GridModel) -> Injections {
    injections_with(grid, |d| grid.ders[d].p_op_mw, |_| 0.0)
}

/// Injections with per-DER active and reactive power in MW / Mvar.
pub fn injections_with(
    grid: &GridModel,
    der_p_mw: impl Fn(usize) -> f64,
    der_q_mvar: impl Fn(usize) -> f64,
) -> Injections {
    let n = grid.nodes.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for l in &grid.loads {
        let i = grid.node_index(&l.node).expect("validated grid");
        p[i] -= l.p_mw / grid.base_mva;
        q[i] -= l.q_mvar / grid.base_mva;
    }
    for (k, d) in grid.ders.iter().enumerate() {
        let i = grid.node_index(&d.node).expect("validated grid");
        p[i] += der_p_mw(k) / grid.base_mva;
        q[i] += der_q_mvar(k) / grid.base_mva;
    }
    Injections { p, q }
}

/// A grid prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct Network {
    y: DMatrix<Complex64>,
    slack: usize,
    u_slack: f64,
    /// non-slack node indices in state order
    free: Vec<usize>,
    /// position of each node in `free`, `None` for the slack
    pos: Vec<Option<usize>>,
}

impl Network {
    pub fn from_grid(grid: &GridModel) -> Result<Self, PowerFlowError> {
        let y = build_admittance(grid)?;
        let slack = grid.slack_index().ok_or(PowerFlowError::NoSlack)?;
        let u_slack = grid.nodes[slack].u_set.unwrap_or(1.0);
        debug_assert!(grid.nodes.iter().filter(|n| n.kind == NodeKind::Slack).count() == 1);
        let free: Vec<usize> = (0..grid.nodes.len()).filter(|&i| i != slack).collect();
        let mut pos = vec![None; grid.nodes.len()];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = Some(k);
        }
        Ok(Network { y, slack, u_slack, free, pos })
    }

    pub fn admittance(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn n_nodes(&self) -> usize {
        self.y.nrows()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    fn calc_injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_nodes();
        let volt: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(v[i], th[i])).collect();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let mut current = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let yik = self.y[(i, k)];
                if yik.re != 0.0 || yik.im != 0.0 {
                    current += yik * volt[k];
                }
            }
            let s = volt[i] * current.conj();
            p[i] = s.re;
            q[i] = s.im;
        }
        (p, q)
    }

    /// Polar Jacobian of `[P; Q]` over `[θ; U]` for the non-slack nodes.
    pub fn jacobian(&self, v: &[f64], th: &[f64]) -> DMatrix<f64> {
        let (p, q) = self.calc_injections(v, th);
        let m = self.free.len();
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in self.free.iter().enumerate() {
            for (c, &k) in self.free.iter().enumerate() {
                let yik = self.y[(i, k)];
                let (g, b) = (yik.re, yik.im);
                if i == k {
                    j[(r, c)] = -q[i] - b * v[i] * v[i];
                    j[(r, m + c)] = p[i] / v[i] + g * v[i];
                    j[(m + r, c)] = p[i] - g * v[i] * v[i];
                    j[(m + r, m + c)] = q[i] / v[i] - b * v[i];
                } else {
                    if g == 0.0 && b == 0.0 {
                        continue;
                    }
                    let (s, co) = (th[i] - th[k]).sin_cos();
                    j[(r, c)] = v[i] * v[k] * (g * s - b * co);
                    j[(r, m + c)] = v[i] * (g * co + b * s);
                    j[(m + r, c)] = -v[i] * v[k] * (g * co + b * s);
                    j[(m + r, m + c)] = v[i] * (g * s - b * co);
                }
            }
        }
        j
    }

    /// Solve from a flat start or from a previous solution.
    pub fn solve(
        &self,
        inj: &Injections,
        start: Option<&PowerFlowSolution>,
        opts: &PowerFlowOptions,
    ) -> Result<PowerFlowSolution, PowerFlowError> {
        let n = self.n_nodes();
        if inj.p.len() != n || inj.q.len() != n {
            return Err(PowerFlowError::InjectionLength { expected: n, got: inj.p.len().min(inj.q.len()) });
        }
        let (mut v, mut th) = match start {
            Some(s) if s.voltages.len() == n => (s.voltages.clone(), s.angles.clone()),
            _ => (vec![1.0; n], vec![0.0; n]),
        };
        v[self.slack] = self.u_slack;
        th[self.slack] = 0.0;
        let m = self.free.len();
        let mut iterations = 0;
        loop {
            let (p, q) = self.calc_injections(&v, &th);
            let mut mismatch = nalgebra::DVector::zeros(2 * m);
            for (r, &i) in self.free.iter().enumerate() {
                mismatch[r] = inj.p[i] - p[i];
                mismatch[m + r] = inj.q[i] - q[i];
            }
            let worst = mismatch.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if !worst.is_finite() {
                return Err(PowerFlowError::Diverged);
            }
            if worst <= opts.tolerance {
                return Ok(PowerFlowSolution { voltages: v, angles: th, p, q, iterations, max_mismatch: worst });
            }
            if iterations >= opts.max_iterations {
                return Err(PowerFlowError::NoConvergence { iterations, mismatch: worst });
            }
            let j = self.jacobian(&v, &th);
            let dx = j.lu().solve(&mismatch).ok_or(PowerFlowError::SingularJacobian)?;
            for (r, &i) in self.free.iter().enumerate() {
                th[i] += dx[r];
                v[i] += dx[m + r];
                if !(v[i] > 0.0) || !v[i].is_finite() {
                    return Err(PowerFlowError::Diverged);
                }
            }
            iterations += 1;
        }
    }

    /// `∂U/∂Q` and `∂U/∂P` between the given nodes from the inverse Jacobian.
    /// Rows or columns at the slack are zero.
    pub fn sensitivities(
        &self,
        sol: &PowerFlowSolution,
        nodes: &[usize],
    ) -> Result<VoltageSensitivities, PowerFlowError> {
        let m = self.free.len();
        let k = nodes.len();
        let mut k_q = DMatrix::zeros(k, k);
        let mut k_p = DMatrix::zeros(k, k);
        if m == 0 {
            return Ok(VoltageSensitivities { k_q, k_p });
        }
        let j = self.jacobian(&sol.voltages, &sol.angles);
        let inv = j.try_inverse().ok_or(PowerFlowError::SingularJacobian)?;
        if inv.iter().any(|x| !x.is_finite()) {
            return Err(PowerFlowError::SingularJacobian);
        }
        for (a, &i) in nodes.iter().enumerate() {
            let Some(ri) = self.pos[i] else { continue };
            for (b, &jn) in nodes.iter().enumerate() {
                let Some(cj) = self.pos[jn] else { continue };
                k_q[(a, b)] = inv[(m + ri, m + cj)];
                k_p[(a, b)] = inv[(m + ri, cj)];
            }
        }
        Ok(VoltageSensitivities { k_q, k_p })
    }
}

/// Solve the operating point of a grid.
pub fn solve(grid: &GridModel, opts: &PowerFlowOptions) -> Result<PowerFlowSolution, PowerFlowError> {
    Network::from_grid(grid)?.solve(&operating_injections(grid), None, opts)
}

pub fn der_node_indices(grid: &GridModel) -> Vec<usize> {
    grid.ders
        .iter()
        .map(|d| grid.node_index(&d.node).expect("validated grid"))
        .collect()
}

/// `K_Q` at the DER nodes, in DER order.
pub fn sensitivity(grid: &GridModel, sol: &PowerFlowSolution) -> Result<SensitivityMatrix, PowerFlowError> {
    let net = Network::from_grid(grid)?;
    let s = net.sensitivities(sol, &der_node_indices(grid))?;
    Ok(SensitivityMatrix { entries: s.k_q, der_order: grid.der_ids() })
}
