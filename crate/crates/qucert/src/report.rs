//! Machine-readable outputs: assessment reports, simulation traces and
//! response data.

use std::io::Write;

use qucert_core::circle::{Representation, SlopeSearchResult};
use qucert_core::powerflow::{PowerFlowSolution, SensitivityMatrix};
use qucert_core::search::SearchOutcome;
use qucert_core::sim::{SimTrace, StabilityClassification};
use serde::{Deserialize, Serialize};

/// Slope range recommended by the German high-voltage connection rules.
pub const TAR_RECOMMENDATION_BAND: [f64; 2] = [6.0, 20.0];

pub const TOOL_VERSION: &str = concat!("qucert ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub slope: f64,
    pub pass: bool,
    pub hurwitz_ok: bool,
    pub min_abs_real_eig_n: f64,
    pub max_real_eig_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimThresholdRecord {
    /// `None` when every slope up to the cap was classified stable
    pub m_threshold: Option<f64>,
    pub coupling: String,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentReport {
    pub grid_id: String,
    pub representation: String,
    pub criterion: String,
    /// %/p.u.; present only when the search found a failing slope
    pub m_max: Option<f64>,
    /// "bounded" or "no_limit_below_cap"
    pub outcome: String,
    pub m_cap: f64,
    pub bracket_high: Option<f64>,
    pub tar_recommendation_band: [f64; 2],
    pub verdict_trace: Vec<VerdictRecord>,
    pub sim_threshold: Option<SimThresholdRecord>,
    /// kW/km, absent when the grid length is unknown
    pub penetration_kw_per_km: Option<f64>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub tool_version: String,
}

impl AssessmentReport {
    pub fn new(
        grid_id: &str,
        representation: Representation,
        result: &SlopeSearchResult,
        m_cap: f64,
        penetration: Option<f64>,
    ) -> Self {
        AssessmentReport {
            grid_id: grid_id.to_owned(),
            representation: representation.as_str().to_owned(),
            criterion: "circle".to_owned(),
            m_max: result.m_max,
            outcome: outcome_str(result.outcome).to_owned(),
            m_cap,
            bracket_high: result.bracket_high,
            tar_recommendation_band: TAR_RECOMMENDATION_BAND,
            verdict_trace: result
                .steps
                .iter()
                .map(|s| VerdictRecord {
                    slope: s.slope,
                    pass: s.pass,
                    hurwitz_ok: s.detail.hurwitz_ok,
                    min_abs_real_eig_n: s.detail.min_abs_real_eig_n,
                    max_real_eig_a: s.detail.max_real_eig_a,
                })
                .collect(),
            sim_threshold: None,
            penetration_kw_per_km: penetration,
            started_unix_s: 0,
            finished_unix_s: 0,
            tool_version: TOOL_VERSION.to_owned(),
        }
    }
}

pub fn outcome_str(o: SearchOutcome) -> &'static str {
    match o {
        SearchOutcome::Bounded => "bounded",
        SearchOutcome::NoLimitBelowCap => "no_limit_below_cap",
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One summary-table line: grid id, then each representation's slope limit.
pub fn table_row(grid_id: &str, reports: &[AssessmentReport]) -> (String, String) {
    let mut header = format!("{:<16}", "grid");
    let mut row = format!("{grid_id:<16}");
    for r in reports {
        header.push_str(&format!(" {:>14}", r.representation));
        let cell = match r.m_max {
            Some(m) => format!("{m:.1}"),
            None => format!(">{:.0} (no limit)", r.m_cap),
        };
        row.push_str(&format!(" {cell:>14}"));
    }
    (header, row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub verdict: String,
    pub decay_ratio: f64,
    pub window_s: [f64; 2],
    pub slope: f64,
    pub coupling: String,
    pub truncated_at_s: Option<f64>,
}

impl ClassificationRecord {
    pub fn new(c: &StabilityClassification, trace: &SimTrace, slope: f64, coupling: &str) -> Self {
        ClassificationRecord {
            verdict: c.verdict.as_str().to_owned(),
            // JSON has no infinity; a truncated run reports the largest finite value
            decay_ratio: if c.decay_ratio.is_finite() { c.decay_ratio } else { f64::MAX },
            window_s: [c.window.0, c.window.1],
            slope,
            coupling: coupling.to_owned(),
            truncated_at_s: trace.truncated_at,
        }
    }
}

/// Trace CSV: `time_s`, then `u_<id>_pu` and `q_<id>_pu` per DER.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_s".to_owned()];
    for id in &trace.der_ids {
        header.push(format!("u_{id}_pu"));
        header.push(format!("q_{id}_pu"));
    }
    w.write_record(&header)?;
    for (i, t) in trace.times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        for k in 0..trace.der_ids.len() {
            rec.push(trace.voltages[k][i].to_string());
            rec.push(trace.reactive_powers[k][i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResult {
    pub id: String,
    pub u_pu: f64,
    pub angle_rad: f64,
    pub p_pu: f64,
    pub q_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowReport {
    pub grid_id: String,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
    pub nodes: Vec<NodeResult>,
}

impl PowerFlowReport {
    pub fn new(grid_id: &str, ids: &[String], sol: &PowerFlowSolution) -> Self {
        PowerFlowReport {
            grid_id: grid_id.to_owned(),
            iterations: sol.iterations,
            max_mismatch_pu: sol.max_mismatch,
            nodes: ids
                .iter()
                .enumerate()
                .map(|(i, id)| NodeResult {
                    id: id.clone(),
                    u_pu: sol.voltages[i],
                    angle_rad: sol.angles[i],
                    p_pu: sol.p[i],
                    q_pu: sol.q[i],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub grid_id: String,
    pub der_order: Vec<String>,
    /// row `i`, column `j`: ∂U_i/∂Q_j in p.u./p.u.
    pub k_q: Vec<Vec<f64>>,
}

impl SensitivityReport {
    pub fn new(grid_id: &str, s: &SensitivityMatrix) -> Self {
        let n = s.entries.nrows();
        SensitivityReport {
            grid_id: grid_id.to_owned(),
            der_order: s.der_order.clone(),
            k_q: (0..n).map(|i| (0..n).map(|j| s.entries[(i, j)]).collect()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_header() {
        let tr = SimTrace {
            times: vec![0.0, 0.5],
            der_ids: vec!["wp1".into()],
            voltages: vec![vec![1.0, 1.01]],
            reactive_powers: vec![vec![0.0, -0.01]],
            final_states: vec![],
            ramp_end: 0.0,
            truncated_at: None,
        };
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time_s,u_wp1_pu,q_wp1_pu"));
        assert_eq!(lines.next(), Some("0,1,0"));
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn table_row_marks_missing_limit() {
        let mk = |rep: &str, m| AssessmentReport {
            grid_id: "g".into(),
            representation: rep.into(),
            criterion: "circle".into(),
            m_max: m,
            outcome: "bounded".into(),
            m_cap: 1000.0,
            bracket_high: None,
            tar_recommendation_band: TAR_RECOMMENDATION_BAND,
            verdict_trace: vec![],
            sim_threshold: None,
            penetration_kw_per_km: None,
            started_unix_s: 0,
            finished_unix_s: 0,
            tool_version: TOOL_VERSION.into(),
        };
        let (h, r) = table_row("g", &[mk("orig", None), mk("pt2-tar", Some(12.34))]);
        assert!(h.contains("orig") && h.contains("pt2-tar"));
        assert!(r.contains(">1000 (no limit)") && r.contains("12.3"));
    }
}
