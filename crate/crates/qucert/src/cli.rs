//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 when a computation fails, 2 for usage and input errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qucert_core::circle::{max_slope_search, CertificationCase, CertificationOptions, Representation};
use qucert_core::der::{DerModel, ModelKind};
use qucert_core::fit::{fit_der, fit_tar, FitConfig, Pt2Fit, TarStepSpec};
use qucert_core::grid::GridModel;
use qucert_core::powerflow::{self, PowerFlowOptions};
use qucert_core::search::SearchOptions;
use qucert_core::sim::{classify, find_sim_threshold, simulate, ClassifyOptions, GridCoupling, Ramp, SimScenario};
use serde::Serialize;

use crate::error::Error;
use crate::report::{self, AssessmentReport, ClassificationRecord, PowerFlowReport, SensitivityReport, SimThresholdRecord};
use crate::schema::{self, read_grid_file};
use crate::simbench::import_simbench_dir;

#[derive(Debug, Parser)]
#[command(name = "qucert", version, about = "Stability certification of Q(U) droop control")]
pub struct Cli {
    /// grid document (JSON)
    #[arg(long, global = true)]
    pub grid: Option<PathBuf>,
    /// output file (directory for `responses`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// recorded in diagnostics; all commands are deterministic
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Largest slope certified by the circle criterion
    Assess(AssessArgs),
    /// Fit a PT2 element to step specs or to a model's frequency response
    FitPt2(FitArgs),
    /// Ramp simulation with stability classification
    Simulate(SimulateArgs),
    /// Step and frequency responses of a model and its PT2 approximations
    Responses(ResponsesArgs),
    /// Convert SimBench CSV tables to a grid document
    ImportSimbench(ImportArgs),
    /// AC power flow at the operating point
    Powerflow(PowerFlowArgs),
    /// Voltage sensitivity matrix K_Q at the DER nodes
    Sensitivity(PowerFlowArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepresentationArg {
    Orig,
    Pt2Der,
    Pt2Tar,
    All,
}

impl RepresentationArg {
    fn list(self) -> Vec<Representation> {
        match self {
            RepresentationArg::Orig => vec![Representation::Orig],
            RepresentationArg::Pt2Der => vec![Representation::Pt2Der],
            RepresentationArg::Pt2Tar => vec![Representation::Pt2Tar],
            RepresentationArg::All => Representation::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingArg {
    Linearized,
    Full,
}

impl From<CouplingArg> for GridCoupling {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::Linearized => GridCoupling::Linearized,
            CouplingArg::Full => GridCoupling::FullPowerFlow,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 1.0)]
    pub m_start: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub m_cap: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
}

impl SearchArgs {
    fn options(&self) -> SearchOptions {
        SearchOptions { m_start: self.m_start, m_cap: self.m_cap, tolerance: self.tolerance }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value_t = CouplingArg::Full)]
    pub coupling: CouplingArg,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 18.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ramp_start: f64,
    #[arg(long, default_value_t = 5.0)]
    pub ramp_duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p_initial: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_final: f64,
    /// disable the Q limit of the characteristic
    #[arg(long)]
    pub no_saturation: bool,
    #[arg(long, default_value_t = 0.5)]
    pub decay_threshold: f64,
    #[arg(long, default_value_t = 0.3)]
    pub divergence_guard: f64,
}

impl ScenarioArgs {
    fn scenario(&self, slope: f64) -> Result<SimScenario, Error> {
        let sc = SimScenario {
            slope,
            ramp: Ramp {
                start: self.ramp_start,
                duration: self.ramp_duration,
                p_initial_share: self.p_initial,
                p_final_share: self.p_final,
            },
            horizon: self.horizon,
            dt: self.dt,
            coupling: self.coupling.into(),
            saturation: !self.no_saturation,
        };
        sc.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(sc)
    }

    fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            decay_threshold: self.decay_threshold,
            divergence_guard: self.divergence_guard,
            ..ClassifyOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AssessArgs {
    #[arg(long, value_enum, default_value_t = RepresentationArg::All)]
    pub representation: RepresentationArg,
    #[command(flatten)]
    pub search: SearchArgs,
    /// eigenvalue margin of the strict-positive-realness test
    #[arg(long, default_value_t = qucert_core::circle::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 3)]
    pub pade_order: usize,
    /// also search the simulated stability threshold
    #[arg(long)]
    pub with_sim: bool,
    #[arg(long, default_value_t = 1.0)]
    pub sim_tolerance: f64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModeArg {
    Tar,
    Der,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub mode: FitModeArg,
    /// overshoot as a fraction
    #[arg(long, default_value_t = 0.15)]
    pub zeta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub t90: f64,
    #[arg(long, default_value_t = 8.0)]
    pub tstl: f64,
    #[arg(long, default_value_t = 0.05)]
    pub settle_band: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub band: BandArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// wf-frc, wf-dfig, pvf or pt2
    #[arg(long, default_value = "wf-frc")]
    pub model: String,
    /// JSON object with model parameters (same keys as in grid documents)
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<DerModel, Error> {
        let kind: ModelKind = self.model.parse().map_err(|e: qucert_core::der::DerError| Error::Usage(e.to_string()))?;
        let params = match &self.params {
            None => serde_json::Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?
            }
        };
        let model = schema::model_from_params(kind, &params)?;
        model.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    /// lower fit frequency, rad/s
    #[arg(long, default_value_t = 1e-2)]
    pub band_low: f64,
    /// upper fit frequency, rad/s
    #[arg(long, default_value_t = 1e2)]
    pub band_high: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

impl BandArgs {
    fn config(&self) -> Result<FitConfig, Error> {
        let cfg = FitConfig {
            band_low: self.band_low,
            band_high: self.band_high,
            grid_points: self.points,
            ..FitConfig::default()
        };
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// uniform characteristic slope, %/p.u.
    #[arg(long)]
    pub slope: f64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// write the classification JSON here as well as to standard output
    #[arg(long)]
    pub classification: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ResponsesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub band: BandArgs,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ImportArgs {
    /// directory holding Node.csv, Line.csv, Trafo.csv, Load.csv and RES.csv
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PowerFlowArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub pf_tolerance: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
}

impl PowerFlowArgs {
    fn options(&self) -> PowerFlowOptions {
        PowerFlowOptions { tolerance: self.pf_tolerance, max_iterations: self.max_iterations }
    }
}

struct Ctx<'a> {
    grid: Option<PathBuf>,
    out: Option<PathBuf>,
    verbose: bool,
    stdout: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("qucert: {}", msg.as_ref());
        }
    }

    fn grid(&self) -> Result<(String, GridModel), Error> {
        let path = self.grid.as_deref().ok_or_else(|| Error::Usage("--grid is required".into()))?;
        let (id, grid) = read_grid_file(path)?;
        self.log(format!("loaded {id}: {} nodes, {} DERs", grid.nodes.len(), grid.ders.len()));
        Ok((id, grid))
    }

    fn emit_json<T: Serialize>(&mut self, value: &T) -> Result<(), Error> {
        let text = serde_json::to_string_pretty(value)?;
        match &self.out {
            Some(p) => write_file(p, text.as_bytes()),
            None => writeln!(self.stdout, "{text}").map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn print(&mut self, line: &str) -> Result<(), Error> {
        writeln!(self.stdout, "{line}").map_err(|e| Error::io("<stdout>", e))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parse `args` (including the program name) and execute.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    let mut ctx = Ctx { grid: cli.grid, out: cli.out, verbose: cli.verbose, stdout };
    if let Some(seed) = cli.seed {
        ctx.log(format!("seed {seed}"));
    }
    let result = match cli.command {
        Command::Assess(a) => cmd_assess(&mut ctx, &a),
        Command::FitPt2(a) => cmd_fit_pt2(&mut ctx, &a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, &a),
        Command::Responses(a) => cmd_responses(&mut ctx, &a),
        Command::ImportSimbench(a) => cmd_import(&mut ctx, &a),
        Command::Powerflow(a) => cmd_powerflow(&mut ctx, &a),
        Command::Sensitivity(a) => cmd_sensitivity(&mut ctx, &a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qucert: error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_assess(ctx: &mut Ctx<'_>, a: &AssessArgs) -> Result<(), Error> {
    let started = report::unix_now();
    let (id, grid) = ctx.grid()?;
    let sol = powerflow::solve(&grid, &PowerFlowOptions::default())?;
    ctx.log(format!("power flow converged in {} iterations", sol.iterations));
    let kq = powerflow::sensitivity(&grid, &sol)?;
    let search = a.search.options();
    let opts = CertificationOptions { pade_order: a.pade_order, delta: a.delta, search, ..CertificationOptions::default() };
    let penetration = grid.penetration_factor().ok();

    let sim = if a.with_sim {
        let template = a.scenario.scenario(0.0)?;
        let sim_search = SearchOptions { tolerance: a.sim_tolerance, ..search };
        let r = find_sim_threshold(&grid, &template, &sim_search, &a.scenario.classify_options())?;
        ctx.log(format!("simulation threshold search: {} runs", r.evaluations()));
        Some(SimThresholdRecord {
            m_threshold: r.limit,
            coupling: template.coupling.as_str().to_owned(),
            evaluations: r.evaluations(),
        })
    } else {
        None
    };

    let mut reports = Vec::new();
    for rep in a.representation.list() {
        let case = CertificationCase::from_grid(&grid, &kq, rep, &opts)?;
        let result = max_slope_search(&case, &search, a.delta)?;
        ctx.log(format!("{}: {} SPR evaluations", rep.as_str(), result.evaluations()));
        let mut r = AssessmentReport::new(&id, rep, &result, search.m_cap, penetration);
        r.sim_threshold = sim.clone();
        reports.push(r);
    }
    let finished = report::unix_now();
    for r in &mut reports {
        r.started_unix_s = started;
        r.finished_unix_s = finished;
    }
    let (header, row) = report::table_row(&id, &reports);
    if ctx.out.is_some() {
        ctx.emit_json(&reports)?;
        ctx.print(&header)?;
        ctx.print(&row)?;
    } else {
        eprintln!("{header}\n{row}");
        ctx.emit_json(&reports)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitOutput {
    mode: &'static str,
    kappa: f64,
    damping: f64,
    t: f64,
    residual: f64,
    iterations: usize,
}

impl From<&Pt2Fit> for FitOutput {
    fn from(f: &Pt2Fit) -> Self {
        FitOutput {
            mode: f.mode.as_str(),
            kappa: f.params.gain,
            damping: f.params.damping,
            t: f.params.time_constant,
            residual: f.residual,
            iterations: f.iterations,
        }
    }
}

fn cmd_fit_pt2(ctx: &mut Ctx<'_>, a: &FitArgs) -> Result<(), Error> {
    let cfg = a.band.config()?;
    let fit = match a.mode {
        FitModeArg::Tar => {
            let spec = TarStepSpec { overshoot: a.zeta, rise_time_90: a.t90, settling_time: a.tstl, settle_band: a.settle_band };
            spec.validate().map_err(|e| Error::Usage(e.to_string()))?;
            fit_tar(&spec, &cfg)?
        }
        FitModeArg::Der => {
            let model = a.model.resolve()?;
            fit_der(&model.control_loop()?, &cfg)?
        }
    };
    ctx.log(format!("fit converged after {} iterations", fit.iterations));
    ctx.emit_json(&FitOutput::from(&fit))
}

fn cmd_simulate(ctx: &mut Ctx<'_>, a: &SimulateArgs) -> Result<(), Error> {
    let sc = a.scenario.scenario(a.slope)?;
    let (_, grid) = ctx.grid()?;
    let trace = simulate(&grid, &sc)?;
    if let Some(t) = trace.truncated_at {
        ctx.log(format!("power flow failed at t = {t:.3} s; trace truncated"));
    }
    let c = classify(&trace, sc.ramp.end(), &a.scenario.classify_options())?;
    let record = ClassificationRecord::new(&c, &trace, a.slope, sc.coupling.as_str());
    if let Some(p) = &ctx.out {
        let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        report::write_trace_csv(&trace, std::io::BufWriter::new(f))
            .map_err(|e| Error::io(p, std::io::Error::other(e)))?;
    }
    let text = serde_json::to_string_pretty(&record)?;
    if let Some(p) = &a.classification {
        write_file(p, text.as_bytes())?;
    }
    ctx.print(&text)
}

fn cmd_responses(ctx: &mut Ctx<'_>, a: &ResponsesArgs) -> Result<(), Error> {
    let dir = ctx.out.clone().ok_or_else(|| Error::Usage("responses needs --out DIR".into()))?;
    if !(a.dt > 0.0 && a.horizon > 0.0) {
        return Err(Error::Usage("--dt and --horizon must be > 0".into()));
    }
    let cfg = a.band.config()?;
    let model = a.model.resolve()?;
    let orig = model.control_loop()?;
    let der_fit = fit_der(&orig, &cfg)?;
    ctx.log(format!("pt2-der fit: D = {:.4}, T = {:.4} s", der_fit.params.damping, der_fit.params.time_constant));
    let loops = [orig, DerModel::Pt2(der_fit.params).control_loop()?, DerModel::Pt2(CertificationOptions::default().tar).control_loop()?];
    let names = ["orig", "pt2_der", "pt2_tar"];
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let steps = loops.iter().map(|l| l.step_response(a.horizon, a.dt)).collect::<Result<Vec<_>, _>>()?;
    let mut w = csv_writer(&dir.join("step.csv"))?;
    let mut header = vec!["time_s".to_owned()];
    header.extend(names.iter().map(|n| n.to_string()));
    write_row(&mut w, &header, &dir)?;
    for i in 0..steps[0].times.len() {
        let mut rec = vec![steps[0].times[i].to_string()];
        rec.extend(steps.iter().map(|s| s.values[i].to_string()));
        write_row(&mut w, &rec, &dir)?;
    }

    let omegas = cfg.frequencies();
    let phases: Vec<Vec<f64>> = loops.iter().map(|l| l.unwrapped_phase(&omegas)).collect();
    let mut w = csv_writer(&dir.join("freq.csv"))?;
    let mut header = vec!["omega_rad_s".to_owned()];
    for n in names {
        header.push(format!("mag_{n}"));
        header.push(format!("phase_{n}_rad"));
    }
    write_row(&mut w, &header, &dir)?;
    for (i, &om) in omegas.iter().enumerate() {
        let mut rec = vec![om.to_string()];
        for (l, ph) in loops.iter().zip(&phases) {
            rec.push(l.freq(om).norm().to_string());
            rec.push(ph[i].to_string());
        }
        write_row(&mut w, &rec, &dir)?;
    }
    ctx.print(&format!("wrote {} and {}", dir.join("step.csv").display(), dir.join("freq.csv").display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Error> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn write_row(w: &mut csv::Writer<std::fs::File>, rec: &[String], dir: &Path) -> Result<(), Error> {
    w.write_record(rec).map_err(|e| Error::io(dir, std::io::Error::other(e)))
}

fn cmd_import(ctx: &mut Ctx<'_>, a: &ImportArgs) -> Result<(), Error> {
    let grid = import_simbench_dir(&a.dir)?;
    ctx.log(format!("imported {} nodes, {} lines, {} DERs", grid.nodes.len(), grid.branches.len(), grid.ders.len()));
    let text = schema::grid_to_json(&grid);
    match &ctx.out {
        Some(p) => write_file(p, text.as_bytes()),
        None => ctx.print(&text),
    }
}

fn cmd_powerflow(ctx: &mut Ctx<'_>, a: &PowerFlowArgs) -> Result<(), Error> {
    let (id, grid) = ctx.grid()?;
    let sol = powerflow::solve(&grid, &a.options())?;
    let ids: Vec<String> = grid.nodes.iter().map(|n| n.id.clone()).collect();
    ctx.emit_json(&PowerFlowReport::new(&id, &ids, &sol))
}

fn cmd_sensitivity(ctx: &mut Ctx<'_>, a: &PowerFlowArgs) -> Result<(), Error> {
    let (id, grid) = ctx.grid()?;
    let sol = powerflow::solve(&grid, &a.options())?;
    let kq = powerflow::sensitivity(&grid, &sol)?;
    ctx.emit_json(&SensitivityReport::new(&id, &kq))
}
