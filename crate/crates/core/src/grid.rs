//! Static grid data model, validation and the penetration metric.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::der::{DerError, DerModel, QuCharacteristic};

/// Conventional high-voltage system base.
pub const DEFAULT_BASE_MVA: f64 = 100.0;

/// Average DER penetration of the German grid, for orientation only.
pub const GERMAN_PENETRATION_KW_PER_KM: f64 = 57.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("base power must be > 0, got {0}")]
    InvalidBasePower(f64),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{element} {id:?} references unknown node {node:?}")]
    DanglingReference { element: &'static str, id: String, node: String },
    #[error("exactly one slack node required, found {0}")]
    SlackCount(usize),
    #[error("grid is not connected: node {0:?} cannot be reached from the slack")]
    Disconnected(String),
    #[error("{element} {id:?}: {reason}")]
    Invalid { element: &'static str, id: String, reason: &'static str },
    #[error("total grid length is zero or unknown")]
    UnknownLength,
    #[error("DER {id:?}: {source}")]
    Der { id: String, source: DerError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub vn_kv: f64,
    pub kind: NodeKind,
    pub u_set: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub b_us: f64,
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub id: String,
    pub hv_node: String,
    pub lv_node: String,
    pub s_rated_mva: f64,
    pub uk_percent: f64,
    pub ur_percent: f64,
    pub tap_pos: i32,
    pub tap_step_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub node: String,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerPlant {
    pub id: String,
    pub node: String,
    pub p_inst_mw: f64,
    pub p_r_mw: f64,
    pub p_op_mw: f64,
    pub model: DerModel,
    pub qu: QuCharacteristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub base_mva: f64,
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    pub transformers: Vec<Transformer>,
    pub loads: Vec<Load>,
    pub ders: Vec<DerPlant>,
    pub total_length_km: Option<f64>,
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl GridModel {
    /// Check every structural invariant; called by all constructors of the
    /// std companion crate.
    pub fn validate(&self) -> Result<(), GridError> {
        if !positive(self.base_mva) {
            return Err(GridError::InvalidBasePower(self.base_mva));
        }
        let index = self.unique_ids()?;
        let node_ref = |element: &'static str, id: &str, node: &str| {
            if index.contains_key(node) {
                Ok(())
            } else {
                Err(GridError::DanglingReference { element, id: id.into(), node: node.into() })
            }
        };
        let invalid = |element: &'static str, id: &str, reason: &'static str| GridError::Invalid {
            element,
            id: id.into(),
            reason,
        };

        let slacks = self.nodes.iter().filter(|n| n.kind == NodeKind::Slack).count();
        for n in &self.nodes {
            if !positive(n.vn_kv) {
                return Err(invalid("node", &n.id, "nominal voltage must be > 0"));
            }
            if let Some(u) = n.u_set {
                if !(0.8..=1.2).contains(&u) {
                    return Err(invalid("node", &n.id, "voltage setpoint must lie in [0.8, 1.2] p.u."));
                }
            }
        }
        if slacks != 1 {
            return Err(GridError::SlackCount(slacks));
        }
        for b in &self.branches {
            node_ref("branch", &b.id, &b.from)?;
            node_ref("branch", &b.id, &b.to)?;
            if !(b.r_ohm.is_finite() && b.x_ohm.is_finite() && b.b_us.is_finite()) {
                return Err(invalid("branch", &b.id, "impedance must be finite"));
            }
            if b.r_ohm == 0.0 && b.x_ohm == 0.0 {
                return Err(invalid("branch", &b.id, "resistance and reactance are both zero"));
            }
            if !(b.length_km >= 0.0) {
                return Err(invalid("branch", &b.id, "length must be >= 0"));
            }
            if b.from == b.to {
                return Err(invalid("branch", &b.id, "branch connects a node to itself"));
            }
        }
        for t in &self.transformers {
            node_ref("transformer", &t.id, &t.hv_node)?;
            node_ref("transformer", &t.id, &t.lv_node)?;
            if !positive(t.s_rated_mva) {
                return Err(invalid("transformer", &t.id, "rated power must be > 0"));
            }
            if !(t.ur_percent > 0.0 && t.ur_percent <= t.uk_percent && t.uk_percent.is_finite()) {
                return Err(invalid("transformer", &t.id, "requires 0 < ur <= uk"));
            }
            if !t.tap_step_percent.is_finite() || 1.0 + t.tap_pos as f64 * t.tap_step_percent / 100.0 <= 0.0 {
                return Err(invalid("transformer", &t.id, "tap setting gives a non-positive ratio"));
            }
            if t.hv_node == t.lv_node {
                return Err(invalid("transformer", &t.id, "transformer connects a node to itself"));
            }
        }
        for l in &self.loads {
            node_ref("load", "", &l.node)?;
            if !(l.p_mw.is_finite() && l.q_mvar.is_finite()) {
                return Err(invalid("load", &l.node, "powers must be finite"));
            }
        }
        for d in &self.ders {
            node_ref("DER", &d.id, &d.node)?;
            if !positive(d.p_r_mw) {
                return Err(invalid("DER", &d.id, "rated power must be > 0"));
            }
            if !(d.p_op_mw >= 0.0 && d.p_op_mw <= d.p_inst_mw && d.p_inst_mw.is_finite()) {
                return Err(invalid("DER", &d.id, "requires 0 <= operating power <= installed power"));
            }
            let wrap = |source| GridError::Der { id: d.id.clone(), source };
            d.model.validate().map_err(wrap)?;
            d.qu.validate().map_err(wrap)?;
            if d.qu.rated_mw != d.p_r_mw {
                return Err(invalid("DER", &d.id, "characteristic rated power differs from plant rated power"));
            }
        }
        if let Some(l) = self.total_length_km {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(invalid("grid", "", "total length must be finite and >= 0"));
            }
        }
        self.check_connected(&index)
    }

    fn unique_ids(&self) -> Result<BTreeMap<&str, usize>, GridError> {
        let mut nodes = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if nodes.insert(n.id.as_str(), i).is_some() {
                return Err(GridError::DuplicateId { kind: "node", id: n.id.clone() });
            }
        }
        let mut seen = BTreeMap::new();
        let elements = self
            .branches
            .iter()
            .map(|b| ("branch", &b.id))
            .chain(self.transformers.iter().map(|t| ("transformer", &t.id)))
            .chain(self.ders.iter().map(|d| ("DER", &d.id)));
        for (kind, id) in elements {
            if seen.insert((kind, id.as_str()), ()).is_some() {
                return Err(GridError::DuplicateId { kind, id: id.clone() });
            }
        }
        Ok(nodes)
    }

    fn check_connected(&self, index: &BTreeMap<&str, usize>) -> Result<(), GridError> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in self.edges() {
            let (i, j) = (index[a], index[b]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let start = self.slack_index().expect("slack checked");
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(GridError::Disconnected(self.nodes[i].id.clone())),
            None => Ok(()),
        }
    }

    fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.branches
            .iter()
            .map(|b| (b.from.as_str(), b.to.as_str()))
            .chain(self.transformers.iter().map(|t| (t.hv_node.as_str(), t.lv_node.as_str())))
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Slack)
    }

    pub fn der_ids(&self) -> Vec<String> {
        self.ders.iter().map(|d| d.id.clone()).collect()
    }

    pub fn installed_der_mw(&self) -> f64 {
        self.ders.iter().map(|d| d.p_inst_mw).sum()
    }

    /// Explicit total length, else the sum of branch lengths.
    pub fn total_length(&self) -> f64 {
        self.total_length_km
            .unwrap_or_else(|| self.branches.iter().map(|b| b.length_km).sum())
    }

    /// Installed DER power per grid length, kW/km.
    pub fn penetration_factor(&self) -> Result<f64, GridError> {
        let l = self.total_length();
        if !(l > 0.0) {
            return Err(GridError::UnknownLength);
        }
        Ok(self.installed_der_mw() * 1000.0 / l)
    }

    /// Copy with every DER characteristic set to the same slope.
    pub fn with_uniform_slope(&self, slope: f64) -> GridModel {
        let mut g = self.clone();
        for d in &mut g.ders {
            d.qu = d.qu.with_slope(slope);
        }
        g
    }
}
