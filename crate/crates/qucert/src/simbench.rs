//! Importer for SimBench-style CSV tables (`;`-separated, header row).
//!
//! Only a column subset is read; everything else is ignored.
//!
//! | table | columns |
//! |-------|---------|
//! | Node  | `id`, `vmR` (kV), `vmSetp` (p.u., non-empty marks the slack) |
//! | Line  | `id`, `nodeA`, `nodeB`, `length` (km), `r`, `x` (Ω/km), `b` (µS/km, optional) |
//! | Trafo | `id`, `nodeHV`, `nodeLV`, `sR` (MVA), `vmImp` (%), `pCu` (kW), `tappos`, `dVm` (% per tap) |
//! | Load  | `node`, `pLoad` (MW), `qLoad` (Mvar) |
//! | RES   | `id`, `node`, `pRES` (MW), `sR` (MW, optional rated power) |
//!
//! Line impedances are expected joined from the line type table. RES rows
//! become WF-FRC plants with the reference control parameters, full
//! operating power, a flat characteristic at 1 p.u. and zero slope.

use std::collections::HashMap;

use qucert_core::der::{DerModel, ModelKind, QuCharacteristic, DEFAULT_Q_LIMIT_SHARE};
use qucert_core::grid::{Branch, DerPlant, GridModel, Load, Node, NodeKind, Transformer, DEFAULT_BASE_MVA};

#[derive(Debug, thiserror::Error)]
pub enum SimBenchError {
    #[error("{table} table: missing column {column:?}")]
    MissingColumn { table: &'static str, column: &'static str },
    #[error("{table} table row {row}: column {column:?} is not a number: {value:?}")]
    NotANumber { table: &'static str, row: usize, column: &'static str, value: String },
    #[error("{table} table row {row}: unknown node {node:?}")]
    UnresolvedNode { table: &'static str, row: usize, node: String },
    #[error("{table} {id}: {reason}")]
    UnitInconsistency { table: &'static str, id: String, reason: String },
    #[error("{table} table: {source}")]
    Csv {
        table: &'static str,
        #[source]
        source: csv::Error,
    },
}

/// CSV texts of the five tables.
#[derive(Debug, Clone, Copy)]
pub struct SimBenchTables<'a> {
    pub nodes: &'a str,
    pub lines: &'a str,
    pub trafos: &'a str,
    pub loads: &'a str,
    pub res: &'a str,
}

impl SimBenchTables<'_> {
    pub const FILE_NAMES: [&'static str; 5] = ["Node.csv", "Line.csv", "Trafo.csv", "Load.csv", "RES.csv"];
}

struct Table {
    name: &'static str,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(name: &'static str, text: &str) -> Result<Self, SimBenchError> {
        let csv_err = |source| SimBenchError::Csv { table: name, source };
        let mut reader = csv::ReaderBuilder::new().delimiter(b';').trim(csv::Trim::All).from_reader(text.as_bytes());
        let columns = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_owned(), i))
            .collect();
        let rows = reader.records().collect::<Result<_, _>>().map_err(csv_err)?;
        Ok(Table { name, columns, rows })
    }

    fn require(&self, column: &'static str) -> Result<usize, SimBenchError> {
        if self.rows.is_empty() {
            return Ok(usize::MAX);
        }
        self.columns.get(column).copied().ok_or(SimBenchError::MissingColumn { table: self.name, column })
    }

    fn text<'r>(&self, row: &'r csv::StringRecord, col: usize) -> &'r str {
        row.get(col).unwrap_or("")
    }

    fn number(&self, row_idx: usize, col: usize, column: &'static str) -> Result<f64, SimBenchError> {
        let raw = self.text(&self.rows[row_idx], col);
        raw.parse().map_err(|_| SimBenchError::NotANumber {
            table: self.name,
            row: row_idx + 1,
            column,
            value: raw.to_owned(),
        })
    }

    fn optional_number(&self, row_idx: usize, column: &'static str) -> Result<Option<f64>, SimBenchError> {
        match self.columns.get(column) {
            Some(&c) if !self.text(&self.rows[row_idx], c).is_empty() => self.number(row_idx, c, column).map(Some),
            _ => Ok(None),
        }
    }
}

/// Build a validated grid from the five tables.
pub fn import_simbench(t: SimBenchTables<'_>) -> Result<GridModel, crate::Error> {
    let node_t = Table::parse("Node", t.nodes)?;
    let line_t = Table::parse("Line", t.lines)?;
    let trafo_t = Table::parse("Trafo", t.trafos)?;
    let load_t = Table::parse("Load", t.loads)?;
    let res_t = Table::parse("RES", t.res)?;

    let (c_id, c_vmr) = (node_t.require("id")?, node_t.require("vmR")?);
    let mut nodes = Vec::with_capacity(node_t.rows.len());
    let mut vn = HashMap::new();
    for (i, row) in node_t.rows.iter().enumerate() {
        let id = node_t.text(row, c_id).to_owned();
        let vn_kv = node_t.number(i, c_vmr, "vmR")?;
        let u_set = node_t.optional_number(i, "vmSetp")?;
        vn.insert(id.clone(), vn_kv);
        nodes.push(Node {
            id,
            vn_kv,
            kind: if u_set.is_some() { NodeKind::Slack } else { NodeKind::Pq },
            u_set,
        });
    }
    let resolve = |table: &'static str, row: usize, node: &str| {
        vn.get(node).copied().ok_or_else(|| SimBenchError::UnresolvedNode { table, row: row + 1, node: node.into() })
    };

    let cols = ["id", "nodeA", "nodeB", "length", "r", "x"].map(|c| line_t.require(c));
    let [c_id, c_a, c_b, c_len, c_r, c_x] = cols_ok(cols)?;
    let mut branches = Vec::with_capacity(line_t.rows.len());
    for (i, row) in line_t.rows.iter().enumerate() {
        let id = line_t.text(row, c_id).to_owned();
        let (from, to) = (line_t.text(row, c_a).to_owned(), line_t.text(row, c_b).to_owned());
        let (va, vb) = (resolve("Line", i, &from)?, resolve("Line", i, &to)?);
        if (va - vb).abs() > 1e-9 * va.max(vb) {
            return Err(SimBenchError::UnitInconsistency {
                table: "Line",
                id,
                reason: format!("endpoints at different nominal voltages ({va} kV, {vb} kV)"),
            }
            .into());
        }
        let length = line_t.number(i, c_len, "length")?;
        let b = line_t.optional_number(i, "b")?.unwrap_or(0.0);
        branches.push(Branch {
            r_ohm: line_t.number(i, c_r, "r")? * length,
            x_ohm: line_t.number(i, c_x, "x")? * length,
            b_us: b * length,
            length_km: length,
            id,
            from,
            to,
        });
    }

    let cols = ["id", "nodeHV", "nodeLV", "sR", "vmImp", "pCu"].map(|c| trafo_t.require(c));
    let [c_id, c_hv, c_lv, c_sr, c_uk, c_pcu] = cols_ok(cols)?;
    let mut transformers = Vec::with_capacity(trafo_t.rows.len());
    for (i, row) in trafo_t.rows.iter().enumerate() {
        let id = trafo_t.text(row, c_id).to_owned();
        let (hv, lv) = (trafo_t.text(row, c_hv).to_owned(), trafo_t.text(row, c_lv).to_owned());
        let (vh, vl) = (resolve("Trafo", i, &hv)?, resolve("Trafo", i, &lv)?);
        if vh < vl {
            return Err(SimBenchError::UnitInconsistency {
                table: "Trafo",
                id,
                reason: format!("HV side {vh} kV below LV side {vl} kV"),
            }
            .into());
        }
        let s_rated = trafo_t.number(i, c_sr, "sR")?;
        transformers.push(Transformer {
            id,
            hv_node: hv,
            lv_node: lv,
            s_rated_mva: s_rated,
            uk_percent: trafo_t.number(i, c_uk, "vmImp")?,
            // copper losses in kW over rated power in MVA
            ur_percent: trafo_t.number(i, c_pcu, "pCu")? / (10.0 * s_rated),
            tap_pos: trafo_t.optional_number(i, "tappos")?.unwrap_or(0.0).round() as i32,
            tap_step_percent: trafo_t.optional_number(i, "dVm")?.unwrap_or(0.0),
        });
    }

    let [c_node, c_p, c_q] = cols_ok(["node", "pLoad", "qLoad"].map(|c| load_t.require(c)))?;
    let mut loads = Vec::with_capacity(load_t.rows.len());
    for (i, row) in load_t.rows.iter().enumerate() {
        let node = load_t.text(row, c_node).to_owned();
        resolve("Load", i, &node)?;
        loads.push(Load { node, p_mw: load_t.number(i, c_p, "pLoad")?, q_mvar: load_t.number(i, c_q, "qLoad")? });
    }

    let [c_id, c_node, c_p] = cols_ok(["id", "node", "pRES"].map(|c| res_t.require(c)))?;
    let mut ders = Vec::with_capacity(res_t.rows.len());
    for (i, row) in res_t.rows.iter().enumerate() {
        let node = res_t.text(row, c_node).to_owned();
        resolve("RES", i, &node)?;
        let p = res_t.number(i, c_p, "pRES")?;
        let rated = res_t.optional_number(i, "sR")?.unwrap_or(p);
        ders.push(DerPlant {
            id: res_t.text(row, c_id).to_owned(),
            node,
            p_inst_mw: p,
            p_r_mw: rated,
            p_op_mw: p,
            model: DerModel::reference(ModelKind::WfFrc),
            qu: QuCharacteristic { u_ref: 1.0, slope: 0.0, deadband: 0.0, q_limit_share: DEFAULT_Q_LIMIT_SHARE, rated_mw: rated },
        });
    }

    let grid = GridModel {
        base_mva: DEFAULT_BASE_MVA,
        nodes,
        branches,
        transformers,
        loads,
        ders,
        total_length_km: None,
    };
    grid.validate()?;
    Ok(grid)
}

fn cols_ok<const N: usize>(cols: [Result<usize, SimBenchError>; N]) -> Result<[usize; N], SimBenchError> {
    let mut out = [0; N];
    for (o, c) in out.iter_mut().zip(cols) {
        *o = c?;
    }
    Ok(out)
}

/// Read the five tables from a directory using the SimBench file names.
pub fn import_simbench_dir(dir: &std::path::Path) -> Result<GridModel, crate::Error> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| crate::Error::io(p, e))
    };
    let [n, l, t, lo, r] = SimBenchTables::FILE_NAMES.map(read);
    let (n, l, t, lo, r) = (n?, l?, t?, lo?, r?);
    import_simbench(SimBenchTables { nodes: &n, lines: &l, trafos: &t, loads: &lo, res: &r })
}
