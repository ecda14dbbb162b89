//! JSON grid documents.
//!
//! Keys are lower_snake_case and unknown keys are rejected. The `params`
//! object of a DER depends on its `model`: the detailed types take
//! `t_u, va_order, t_dq, k_q, t_q, t_l, t_g`, the `pt2` type takes
//! `kappa, damping, t`. Omitted parameters fall back to the reference set of
//! the model type. Serialization always writes every parameter.

use std::path::Path;

use qucert_core::der::{DerControlParams, DerModel, ModelKind, Pt2Params, QuCharacteristic};
use qucert_core::grid::{Branch, DerPlant, GridModel, Load, Node, NodeKind, Transformer, DEFAULT_BASE_MVA};
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub branches: Vec<BranchDoc>,
    #[serde(default)]
    pub transformers: Vec<TransformerDoc>,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default)]
    pub ders: Vec<DerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_length_km: Option<f64>,
}

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKindDoc {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    pub vn_kv: f64,
    pub kind: NodeKindDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_set_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default)]
    pub b_us: f64,
    #[serde(default)]
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerDoc {
    pub id: String,
    pub hv_node: String,
    pub lv_node: String,
    pub s_rated_mva: f64,
    pub uk_percent: f64,
    pub ur_percent: f64,
    #[serde(default)]
    pub tap_pos: i32,
    #[serde(default)]
    pub tap_step_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub node: String,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerDoc {
    pub id: String,
    pub node: String,
    pub p_inst_mw: f64,
    pub p_r_mw: f64,
    pub p_op_mw: f64,
    pub model: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub qu: QuDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuDoc {
    pub u_ref_pu: f64,
    pub slope_percent_per_pu: f64,
    #[serde(default)]
    pub deadband_pu: f64,
    #[serde(default = "default_q_limit")]
    pub q_limit_share: f64,
}

fn default_q_limit() -> f64 {
    qucert_core::der::DEFAULT_Q_LIMIT_SHARE
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParamsDoc {
    pub t_u: Option<f64>,
    pub va_order: Option<u32>,
    pub t_dq: Option<f64>,
    pub k_q: Option<f64>,
    pub t_q: Option<f64>,
    pub t_l: Option<f64>,
    pub t_g: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pt2ParamsDoc {
    pub kappa: Option<f64>,
    pub damping: Option<f64>,
    pub t: Option<f64>,
}

impl ControlParamsDoc {
    pub fn resolve(&self, base: DerControlParams) -> DerControlParams {
        DerControlParams {
            t_u: self.t_u.unwrap_or(base.t_u),
            va_order: self.va_order.unwrap_or(base.va_order),
            t_dq: self.t_dq.unwrap_or(base.t_dq),
            k_q: self.k_q.unwrap_or(base.k_q),
            t_q: self.t_q.unwrap_or(base.t_q),
            t_l: self.t_l.unwrap_or(base.t_l),
            t_g: self.t_g.unwrap_or(base.t_g),
        }
    }

    pub fn full(p: &DerControlParams) -> Self {
        ControlParamsDoc {
            t_u: Some(p.t_u),
            va_order: Some(p.va_order),
            t_dq: Some(p.t_dq),
            k_q: Some(p.k_q),
            t_q: Some(p.t_q),
            t_l: Some(p.t_l),
            t_g: Some(p.t_g),
        }
    }
}

impl Pt2ParamsDoc {
    pub fn resolve(&self, base: Pt2Params) -> Pt2Params {
        Pt2Params {
            gain: self.kappa.unwrap_or(base.gain),
            damping: self.damping.unwrap_or(base.damping),
            time_constant: self.t.unwrap_or(base.time_constant),
        }
    }

    pub fn full(p: &Pt2Params) -> Self {
        Pt2ParamsDoc { kappa: Some(p.gain), damping: Some(p.damping), t: Some(p.time_constant) }
    }
}

/// Build a model of `kind` from a `params` object.
pub fn model_from_params(
    kind: ModelKind,
    params: &serde_json::Map<String, serde_json::Value>,
) -> Result<DerModel, Error> {
    let value = serde_json::Value::Object(params.clone());
    let bad = |e: serde_json::Error| Error::Schema(format!("{kind} params: {e}"));
    Ok(match (kind, DerModel::reference(kind)) {
        (ModelKind::Pt2, DerModel::Pt2(base)) => {
            let doc: Pt2ParamsDoc = serde_json::from_value(value).map_err(bad)?;
            DerModel::Pt2(doc.resolve(base))
        }
        (_, reference) => {
            let base = *reference.control_params().expect("detailed model");
            let p = serde_json::from_value::<ControlParamsDoc>(value).map_err(bad)?.resolve(base);
            match kind {
                ModelKind::WfFrc => DerModel::WfFrc(p),
                ModelKind::WfDfig => DerModel::WfDfig(p),
                _ => DerModel::Pvf(p),
            }
        }
    })
}

/// Full `params` object of a model.
pub fn params_of(model: &DerModel) -> serde_json::Map<String, serde_json::Value> {
    let value = match model {
        DerModel::Pt2(p) => serde_json::to_value(Pt2ParamsDoc::full(p)),
        DerModel::WfFrc(p) | DerModel::WfDfig(p) | DerModel::Pvf(p) => serde_json::to_value(ControlParamsDoc::full(p)),
    };
    match value.expect("plain numbers serialize") {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("params serialize to an object"),
    }
}

impl GridDocument {
    pub fn into_model(self) -> Result<GridModel, Error> {
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| Node {
                id: n.id,
                vn_kv: n.vn_kv,
                kind: match n.kind {
                    NodeKindDoc::Slack => NodeKind::Slack,
                    NodeKindDoc::Pq => NodeKind::Pq,
                },
                u_set: n.u_set_pu,
            })
            .collect();
        let branches = self
            .branches
            .into_iter()
            .map(|b| Branch {
                id: b.id,
                from: b.from,
                to: b.to,
                r_ohm: b.r_ohm,
                x_ohm: b.x_ohm,
                b_us: b.b_us,
                length_km: b.length_km,
            })
            .collect();
        let transformers = self
            .transformers
            .into_iter()
            .map(|t| Transformer {
                id: t.id,
                hv_node: t.hv_node,
                lv_node: t.lv_node,
                s_rated_mva: t.s_rated_mva,
                uk_percent: t.uk_percent,
                ur_percent: t.ur_percent,
                tap_pos: t.tap_pos,
                tap_step_percent: t.tap_step_percent,
            })
            .collect();
        let loads = self.loads.into_iter().map(|l| Load { node: l.node, p_mw: l.p_mw, q_mvar: l.q_mvar }).collect();
        let ders = self
            .ders
            .into_iter()
            .map(|d| {
                let kind: ModelKind =
                    d.model.parse().map_err(|e| Error::Schema(format!("DER {}: {e}", d.id)))?;
                let model = model_from_params(kind, &d.params)
                    .map_err(|e| Error::Schema(format!("DER {}: {e}", d.id)))?;
                Ok(DerPlant {
                    qu: QuCharacteristic {
                        u_ref: d.qu.u_ref_pu,
                        slope: d.qu.slope_percent_per_pu,
                        deadband: d.qu.deadband_pu,
                        q_limit_share: d.qu.q_limit_share,
                        rated_mw: d.p_r_mw,
                    },
                    id: d.id,
                    node: d.node,
                    p_inst_mw: d.p_inst_mw,
                    p_r_mw: d.p_r_mw,
                    p_op_mw: d.p_op_mw,
                    model,
                })
            })
            .collect::<Result<_, Error>>()?;
        let grid = GridModel {
            base_mva: self.base_mva,
            nodes,
            branches,
            transformers,
            loads,
            ders,
            total_length_km: self.total_length_km,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn from_model(grid: &GridModel) -> Self {
        GridDocument {
            base_mva: grid.base_mva,
            nodes: grid
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.clone(),
                    vn_kv: n.vn_kv,
                    kind: match n.kind {
                        NodeKind::Slack => NodeKindDoc::Slack,
                        NodeKind::Pq => NodeKindDoc::Pq,
                    },
                    u_set_pu: n.u_set,
                })
                .collect(),
            branches: grid
                .branches
                .iter()
                .map(|b| BranchDoc {
                    id: b.id.clone(),
                    from: b.from.clone(),
                    to: b.to.clone(),
                    r_ohm: b.r_ohm,
                    x_ohm: b.x_ohm,
                    b_us: b.b_us,
                    length_km: b.length_km,
                })
                .collect(),
            transformers: grid
                .transformers
                .iter()
                .map(|t| TransformerDoc {
                    id: t.id.clone(),
                    hv_node: t.hv_node.clone(),
                    lv_node: t.lv_node.clone(),
                    s_rated_mva: t.s_rated_mva,
                    uk_percent: t.uk_percent,
                    ur_percent: t.ur_percent,
                    tap_pos: t.tap_pos,
                    tap_step_percent: t.tap_step_percent,
                })
                .collect(),
            loads: grid.loads.iter().map(|l| LoadDoc { node: l.node.clone(), p_mw: l.p_mw, q_mvar: l.q_mvar }).collect(),
            ders: grid
                .ders
                .iter()
                .map(|d| DerDoc {
                    id: d.id.clone(),
                    node: d.node.clone(),
                    p_inst_mw: d.p_inst_mw,
                    p_r_mw: d.p_r_mw,
                    p_op_mw: d.p_op_mw,
                    model: d.model.kind().as_str().to_owned(),
                    params: params_of(&d.model),
                    qu: QuDoc {
                        u_ref_pu: d.qu.u_ref,
                        slope_percent_per_pu: d.qu.slope,
                        deadband_pu: d.qu.deadband,
                        q_limit_share: d.qu.q_limit_share,
                    },
                })
                .collect(),
            total_length_km: grid.total_length_km,
        }
    }
}

/// Parse and validate a grid document.
pub fn load_grid(json: &str) -> Result<GridModel, Error> {
    let doc: GridDocument = serde_json::from_str(json).map_err(|e| {
        if e.is_data() {
            Error::Schema(e.to_string())
        } else {
            Error::Json(e)
        }
    })?;
    doc.into_model()
}

pub fn grid_to_json(grid: &GridModel) -> String {
    serde_json::to_string_pretty(&GridDocument::from_model(grid)).expect("grid documents serialize")
}

/// Read a grid file; the id is the file stem.
pub fn read_grid_file(path: &Path) -> Result<(String, GridModel), Error> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::GridFileNotFound(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "grid".into());
    Ok((id, load_grid(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "base_mva": 100,
        "nodes": [
            {"id": "a", "vn_kv": 20, "kind": "slack", "u_set_pu": 1.0},
            {"id": "b", "vn_kv": 20, "kind": "pq"}
        ],
        "branches": [{"id": "l1", "from": "a", "to": "b", "r_ohm": 0.4, "x_ohm": 1.6, "b_us": 0, "length_km": 4}],
        "transformers": [], "loads": [], "ders": []
    }"#;

    #[test]
    fn minimal_document() {
        let g = load_grid(MINIMAL).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.branches.len(), 1);
        assert_eq!(g.slack_index(), Some(0));
    }

    #[test]
    fn dangling_load() {
        let doc = MINIMAL.replace(r#""loads": []"#, r#""loads": [{"node": "n99", "p_mw": 1, "q_mvar": 0}]"#);
        assert!(matches!(load_grid(&doc), Err(Error::Grid(qucert_core::grid::GridError::DanglingReference { .. }))));
    }

    #[test]
    fn unknown_key_rejected() {
        let doc = MINIMAL.replace(r#""base_mva": 100,"#, r#""base_mva": 100, "colour": "red","#);
        assert!(matches!(load_grid(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_type_is_schema_error() {
        let doc = MINIMAL.replace(r#""vn_kv": 20, "kind": "pq""#, r#""vn_kv": "twenty", "kind": "pq""#);
        assert!(matches!(load_grid(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn two_slacks_rejected() {
        let doc = MINIMAL.replace(r#""kind": "pq""#, r#""kind": "slack""#);
        assert!(matches!(load_grid(&doc), Err(Error::Grid(_))));
    }

    #[test]
    fn partial_params_fall_back_to_reference() {
        let mut params = serde_json::Map::new();
        params.insert("t_dq".into(), 0.5.into());
        let m = model_from_params(ModelKind::WfFrc, &params).unwrap();
        let p = m.control_params().unwrap();
        assert_eq!(p.t_dq, 0.5);
        assert_eq!(p.t_g, DerControlParams::WF_FRC.t_g);
    }

    #[test]
    fn pt2_params_keys() {
        let mut params = serde_json::Map::new();
        params.insert("damping".into(), 0.6.into());
        params.insert("t".into(), 1.5.into());
        let m = model_from_params(ModelKind::Pt2, &params).unwrap();
        assert_eq!(m, DerModel::Pt2(Pt2Params { gain: 1.0, damping: 0.6, time_constant: 1.5 }));
        params.insert("t_g".into(), 0.1.into());
        assert!(model_from_params(ModelKind::Pt2, &params).is_err());
    }
}
