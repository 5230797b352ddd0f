//! Stage orchestration and artifact writing.
//!
//! Every command runs a prefix of discretize -> check -> solve -> simulate ->
//! rollout and records what it did in `manifest.json`, including any error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use ulamot::feedback::{self, InitialSampler, RolloutOptions};
use ulamot::grid::{l1_distance, ControlGrid, Measure, Partition};
use ulamot::lp::{self, SolveOptions};
use ulamot::par::{configure_threads, Execution};
use ulamot::reachability::{check_sufficient_condition, reachable_sets, ReachMode, Verdict};
use ulamot::systems::{DoubleIntegrator, GyreUnicycle, StateBox, SystemMap, Translation};
use ulamot::ulam::{build_cost_table, build_tensor, CostScaling, CostTable, QuadraticCost, TransitionTensor};
use ulamot::Error;

use crate::config::{CostScalingConfig, RunConfig, SamplerConfig, SystemConfig};
use crate::measures::project_measure;

/// Pairs listed by the reachability report when the condition fails.
pub const MAX_REPORTED_PAIRS: usize = 20;
/// Tensors with at most this many nonzeros also get a CSV export.
const TEXT_TENSOR_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Discretize,
    CheckReachability,
    Solve,
    Simulate,
    Rollout,
    Run,
    ExportLp,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Discretize => "discretize",
            Command::CheckReachability => "check-reachability",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Rollout => "rollout",
            Command::Run => "run",
            Command::ExportLp => "export-lp",
        }
    }

    /// Position in the stage chain; later stages include earlier ones.
    fn depth(self) -> u8 {
        match self {
            Command::Discretize | Command::ExportLp => 0,
            Command::CheckReachability => 1,
            Command::Solve => 2,
            Command::Simulate => 3,
            Command::Rollout | Command::Run => 4,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Infeasible(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Infeasible(_) => "infeasible",
            Failure::Numerical(_) => "numerical_failure",
            Failure::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            Error::NumericalFailure(_) | Error::UndefinedLaw { .. } => Failure::Numerical(e.to_string()),
            Error::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Result of one CLI invocation.
#[derive(Debug)]
pub struct Report {
    pub exit_code: i32,
    pub out_dir: Option<PathBuf>,
    pub manifest: Value,
    pub failure: Option<Failure>,
}

/// Everything derived from the config before any heavy computation.
pub struct Setup {
    pub config: RunConfig,
    pub partition: Partition,
    pub controls: ControlGrid,
    pub system: Box<dyn SystemMap>,
    pub mu0: Measure,
    pub muf: Measure,
    pub exec: Execution,
}

impl Setup {
    /// `base` resolves relative paths inside the config.
    pub fn new(config: RunConfig, base: &Path) -> Result<Self, Failure> {
        let cfg = |e: Error| Failure::Config(e.to_string());
        let d = &config.domain;
        let partition = Partition::new(&d.lower, &d.upper, &d.counts).map_err(cfg)?;
        let c = &config.controls;
        let controls = ControlGrid::regular(&c.lower, &c.upper, &c.counts).map_err(cfg)?;
        let domain = StateBox::new(d.lower.clone(), d.upper.clone()).map_err(cfg)?;
        let system: Box<dyn SystemMap> = match &config.system {
            SystemConfig::Translation { clamp } => Box::new(Translation::new(domain, *clamp)),
            SystemConfig::DoubleIntegrator { clamp } => Box::new(DoubleIntegrator::new(domain, *clamp).map_err(cfg)?),
            SystemConfig::GyreUnicycle { clamp, params } => Box::new(GyreUnicycle::new(domain, *clamp, *params).map_err(cfg)?),
        };
        if system.control_dim() != controls.dim() {
            return Err(Failure::Config(format!(
                "{} takes {} control components, the control grid has {}",
                system.name(),
                system.control_dim(),
                controls.dim()
            )));
        }
        let q = config.quadrature;
        let mu0 = project_measure(&config.initial, &partition, q, base).map_err(|e| Failure::Config(format!("initial measure: {e}")))?;
        let muf = project_measure(&config.target, &partition, q, base).map_err(|e| Failure::Config(format!("target measure: {e}")))?;
        if let (SamplerConfig::Point, Some(p)) = (config.rollout.sampler, &config.rollout.point) {
            if !partition.contains(p) {
                return Err(Failure::Config(format!("rollout point {p:?} lies outside the domain")));
            }
        }
        Ok(Self {
            config,
            partition,
            controls,
            system,
            mu0,
            muf,
            exec: Execution::Parallel,
        })
    }

    pub fn costs(&self) -> Result<CostTable, Failure> {
        let scaling = match self.config.cost_scaling {
            CostScalingConfig::Integral => CostScaling::Integral,
            CostScalingConfig::Average => CostScaling::Average,
        };
        let q = self.config.quadrature;
        let table = match self.config.cost.as_str() {
            "zero" => CostTable::zeros(self.partition.n_cells(), self.controls.len()),
            _ => build_cost_table(&self.partition, &self.controls, &QuadraticCost, q, scaling, self.exec)?,
        };
        Ok(table)
    }

    pub fn tensor(&self) -> Result<TransitionTensor, Failure> {
        Ok(build_tensor(
            self.system.as_ref(),
            &self.partition,
            &self.controls,
            self.config.quadrature,
            self.exec,
        )?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

/// Hash of the effective config plus the bytes of every weight file it
/// references.
fn config_hash(config: &RunConfig, base: &Path) -> String {
    let mut h = Sha256::new();
    h.update(config.canonical().as_bytes());
    for spec in [&config.initial, &config.target] {
        if let crate::config::MeasureSpec::Explicit { file: Some(f), .. } = spec {
            if let Ok(bytes) = fs::read(base.join(f)) {
                h.update(&bytes);
            }
        }
    }
    hex(&h.finalize())
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, PathBuf)>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.written.push((name.to_string(), path));
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<(), Failure>) -> Result<(), Failure> {
        let mut w = self.create(name)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn listing(&self) -> Value {
        let mut m = Map::new();
        for (name, path) in &self.written {
            let digest = sha256_file(path).unwrap_or_default();
            m.insert(name.clone(), json!({ "sha256": digest }));
        }
        Value::Object(m)
    }
}

/// Loads the config at `config_path`, applies overrides and runs `command`.
/// The manifest is written whenever an output directory is known.
pub fn execute(config_path: &Path, command: Command, overrides: &Overrides) -> Report {
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = Map::new();
    manifest.insert("command".into(), json!(command.name()));
    manifest.insert(
        "versions".into(),
        json!({ "ulamot": env!("CARGO_PKG_VERSION"), "config_format": 1 }),
    );

    let config = RunConfig::load(config_path).and_then(|mut c| {
        if let Some(s) = overrides.seed {
            c.seed = s;
        }
        if let Some(t) = overrides.tol {
            if !(t > 0.0) {
                return Err(format!("--tol must be positive, got {t}"));
            }
            c.tolerances.lp = t;
        }
        Ok(c)
    });
    let out_dir = match (&overrides.out, &config) {
        (Some(o), _) => Some(o.clone()),
        (None, Ok(c)) => Some(if c.out.is_absolute() { c.out.clone() } else { base.join(&c.out) }),
        (None, Err(_)) => None,
    };
    let mut art = Artifacts {
        dir: out_dir.clone().unwrap_or_default(),
        written: Vec::new(),
    };

    let result = match config {
        Err(e) => Err(Failure::Config(e)),
        Ok(config) => {
            manifest.insert("config_hash".into(), json!(config_hash(&config, &base)));
            manifest.insert("seed".into(), json!(config.seed));
            if let Some(t) = overrides.threads {
                configure_threads(t);
            }
            match fs::create_dir_all(&art.dir) {
                Err(e) => Err(Failure::Io(format!("{}: {e}", art.dir.display()))),
                Ok(()) => Setup::new(config, &base).and_then(|setup| run_stages(&setup, command, &mut art, &mut manifest)),
            }
        }
    };

    let (exit_code, failure) = match result {
        Ok(()) => {
            manifest.insert("status".into(), json!("ok"));
            (0, None)
        }
        Err(f) => {
            manifest.insert("status".into(), json!(f.kind()));
            manifest.insert("error".into(), json!({ "kind": f.kind(), "message": f.message() }));
            (f.exit_code(), Some(f))
        }
    };
    manifest.insert("exit_code".into(), json!(exit_code));
    manifest.insert("artifacts".into(), art.listing());
    let manifest = Value::Object(manifest);
    if let Some(dir) = &out_dir {
        if fs::create_dir_all(dir).is_ok() {
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            if let Err(e) = fs::write(dir.join("manifest.json"), text + "\n") {
                eprintln!("warning: could not write manifest: {e}");
            }
        }
    }
    Report {
        exit_code,
        out_dir,
        manifest,
        failure,
    }
}

fn run_stages(setup: &Setup, command: Command, art: &mut Artifacts, manifest: &mut Map<String, Value>) -> Result<(), Failure> {
    let cfg = &setup.config;
    let tol = cfg.tolerances;
    manifest.insert(
        "problem".into(),
        json!({
            "system": setup.system.name(),
            "partition": {
                "lower": setup.partition.lower(),
                "upper": setup.partition.upper(),
                "resolution": setup.partition.resolution(),
                "n_cells": setup.partition.n_cells(),
                "ordering": "row-major, axis 0 fastest",
            },
            "controls": { "count": setup.controls.len(), "points": setup.controls.points() },
            "horizon": cfg.horizon,
            "quadrature": cfg.quadrature,
            "cost": cfg.cost,
            "initial_support": setup.mu0.support(tol.support).len(),
            "target_support": setup.muf.support(tol.support).len(),
        }),
    );
    manifest.insert(
        "tolerances".into(),
        json!({
            "eps_mass": tol.eps_mass,
            "support": tol.support,
            "lp": tol.lp,
            "propagate_l1": tol.propagate,
            "cost": tol.cost,
            "row_sum": 1e-12,
            "measure_total": ulamot::grid::MASS_TOLERANCE,
            "lp_marginal": lp::MARGINAL_TOLERANCE,
            "lp_pushforward": lp::PUSHFORWARD_TOLERANCE,
            "lp_terminal_l1": lp::TERMINAL_TOLERANCE,
            "lp_negative_mass_floor": lp::NEGATIVE_MASS_FLOOR,
            "law_row_sum": 1e-9,
        }),
    );

    let t = Instant::now();
    let tensor = setup.tensor()?;
    let costs = setup.costs()?;
    let row_defect = tensor.max_row_defect();
    manifest.insert(
        "discretize".into(),
        json!({
            "nnz": tensor.nnz(),
            "max_row_defect": row_defect,
            "partition_sha256": hex(tensor.partition_hash()),
            "controls_sha256": hex(tensor.controls_hash()),
            "seconds": t.elapsed().as_secs_f64(),
        }),
    );
    art.write("tensor.bin", |w| Ok(tensor.write_binary(w)?))?;
    if tensor.nnz() <= TEXT_TENSOR_LIMIT {
        art.write("tensor.csv", |w| Ok(tensor.write_text(w)?))?;
    }
    art.write("costs.csv", |w| {
        writeln!(w, "cell,control,cost")?;
        for i in 0..costs.n_cells() {
            for k in 0..costs.n_controls() {
                writeln!(w, "{i},{k},{}", costs.get(i, k))?;
            }
        }
        Ok(())
    })?;
    if row_defect > 1e-12 {
        return Err(Failure::Numerical(format!("tensor row sums deviate from one by {row_defect:e}")));
    }

    if command == Command::ExportLp {
        let problem = lp::assemble(&tensor, &costs, &setup.mu0, &setup.muf, cfg.horizon)?;
        art.write("problem.mps", |w| Ok(problem.write_mps(w)?))?;
        manifest.insert(
            "lp".into(),
            json!({ "columns": problem.n_columns(), "rows": problem.n_rows() }),
        );
        return Ok(());
    }
    if command.depth() < 1 {
        return Ok(());
    }

    let t = Instant::now();
    let sets = reachable_sets(&tensor, cfg.horizon, ReachMode::Exact, setup.exec);
    let verdict = check_sufficient_condition(&sets, &setup.mu0, &setup.muf, tol.support);
    let reach = reachability_report(&sets, &tensor, setup, &verdict);
    art.write("reachability.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &reach).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })?;
    manifest.insert(
        "reachability".into(),
        json!({
            "verdict": if verdict.is_satisfied() { "satisfied" } else { "violated" },
            "violated_pairs": match &verdict { Verdict::Violated(p) => p.len(), Verdict::Satisfied => 0 },
            "seconds": t.elapsed().as_secs_f64(),
        }),
    );
    if command.depth() < 2 {
        return Ok(());
    }

    let t = Instant::now();
    let problem = lp::assemble(&tensor, &costs, &setup.mu0, &setup.muf, cfg.horizon)?;
    let opts = SolveOptions {
        tol: tol.lp,
        ..SolveOptions::default()
    };
    let solved = lp::solve(&problem, &opts);
    let solution = match solved {
        Ok(s) => s,
        Err(e) => {
            manifest.insert(
                "lp".into(),
                json!({
                    "columns": problem.n_columns(),
                    "rows": problem.n_rows(),
                    "feasible": false,
                    "reachability_satisfied": verdict.is_satisfied(),
                    "seconds": t.elapsed().as_secs_f64(),
                }),
            );
            return Err(e.into());
        }
    };
    let res = *solution.residuals();
    let stats = solution.stats();
    manifest.insert(
        "lp".into(),
        json!({
            "feasible": true,
            "objective": solution.objective(),
            "backend": stats.backend,
            "columns": stats.columns,
            "rows": stats.rows,
            "reduced_columns": stats.reduced_columns,
            "reduced_rows": stats.reduced_rows,
            "duality_gap": stats.duality_gap,
            "residuals": {
                "pushforward": res.pushforward,
                "marginal": res.marginal,
                "normalization": res.normalization,
                "terminal_l1": res.terminal_l1,
                "min_raw_mass": res.min_raw_mass,
            },
            "seconds": t.elapsed().as_secs_f64(),
        }),
    );
    art.write("solution_measures.csv", |w| Ok(feedback::write_measures_csv(solution.measures(), w)?))?;
    art.write("solution_joint.csv", |w| {
        writeln!(w, "step,control,cell,mass")?;
        for n in 0..solution.horizon() {
            for k in 0..solution.n_controls() {
                for i in 0..solution.n_cells() {
                    let v = solution.joint(n, k, i);
                    if v != 0.0 {
                        writeln!(w, "{n},{k},{i},{v}")?;
                    }
                }
            }
        }
        Ok(())
    })?;
    if command.depth() < 3 {
        return Ok(());
    }

    let law = feedback::extract_feedback(&solution, tol.eps_mass);
    let traj = feedback::propagate(&tensor, &law, &setup.mu0, &costs, tol.propagate)?;
    art.write("feedback.csv", |w| Ok(law.write_csv(w)?))?;
    art.write("trajectory.csv", |w| Ok(traj.write_csv(w)?))?;
    let agreement = traj
        .measures
        .iter()
        .zip(solution.measures())
        .map(|(a, b)| l1_distance(a, b))
        .fold(0.0, f64::max);
    let cost_gap = (traj.total_cost - solution.objective()).abs();
    let mass_defect = traj.max_mass_defect();
    let law_defect = law.max_row_defect();
    manifest.insert(
        "simulate".into(),
        json!({
            "total_cost": traj.total_cost,
            "step_costs": traj.step_costs,
            "max_mass_defect": mass_defect,
            "held_mass": traj.held_mass,
            "max_l1_vs_lp": agreement,
            "cost_gap_vs_lp": cost_gap,
            "law_max_row_defect": law_defect,
        }),
    );
    let mut broken = Vec::new();
    if mass_defect > ulamot::grid::MASS_TOLERANCE {
        broken.push(format!("mass defect {mass_defect:e}"));
    }
    if agreement > tol.propagate {
        broken.push(format!("propagated measures differ from the LP by {agreement:e} in 1-norm"));
    }
    if cost_gap > tol.cost * (1.0 + solution.objective().abs()) {
        broken.push(format!("propagated cost differs from the LP objective by {cost_gap:e}"));
    }
    if law_defect > 1e-9 {
        broken.push(format!("feedback rows deviate from distributions by {law_defect:e}"));
    }
    if !broken.is_empty() {
        return Err(Failure::Numerical(format!("closed-loop check failed: {}", broken.join("; "))));
    }
    if command.depth() < 4 {
        return Ok(());
    }

    let t = Instant::now();
    let r = &cfg.rollout;
    let sampler = match r.sampler {
        SamplerConfig::CellUniform => InitialSampler::CellUniform(setup.mu0.clone()),
        SamplerConfig::Point => InitialSampler::Point(r.point.clone().expect("validated")),
    };
    let result = feedback::rollout(
        setup.system.as_ref(),
        &setup.partition,
        &setup.controls,
        &law,
        &sampler,
        &RolloutOptions {
            agents: r.agents,
            seed: cfg.seed,
            keep_paths: r.keep_paths,
            exec: setup.exec,
        },
    )?;
    art.write("rollout.csv", |w| Ok(result.write_csv(w)?))?;
    if !result.paths.is_empty() {
        art.write("rollout_paths.csv", |w| {
            writeln!(w, "agent,step,{}", (0..setup.partition.dim()).map(|d| format!("x{d}")).collect::<Vec<_>>().join(","))?;
            for (a, path) in result.paths.iter().enumerate() {
                for (n, x) in path.iter().enumerate() {
                    let coords: Vec<String> = x.iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{a},{n},{}", coords.join(","))?;
                }
            }
            Ok(())
        })?;
    }
    let tv = 0.5 * l1_distance(&result.empirical(), &traj.measures[cfg.horizon]);
    manifest.insert(
        "rollout".into(),
        json!({
            "agents": result.agents,
            "sampler": match r.sampler { SamplerConfig::CellUniform => "cell_uniform", SamplerConfig::Point => "point" },
            "flagged": result.flagged,
            "flagged_fraction": result.flagged_fraction(),
            "tv_vs_propagated": tv,
            "seconds": t.elapsed().as_secs_f64(),
        }),
    );
    Ok(())
}

fn reachability_report(
    sets: &ulamot::reachability::ReachabilitySets,
    tensor: &TransitionTensor,
    setup: &Setup,
    verdict: &Verdict,
) -> Value {
    let n = sets.horizon();
    match verdict {
        Verdict::Satisfied => {
            // One witness control word per target cell, from the first
            // initial cell, so the report shows how the condition is met.
            let eps = setup.config.tolerances.support;
            let from = setup.mu0.support(eps).first().copied();
            let witnesses: Vec<Value> = from
                .map(|i| {
                    setup
                        .muf
                        .support(eps)
                        .into_iter()
                        .take(MAX_REPORTED_PAIRS)
                        .filter_map(|j| sets.witness(tensor, n, i, j))
                        .map(|w| json!({ "from": i, "to": w.cells.last(), "controls": w.controls, "cells": w.cells }))
                        .collect()
                })
                .unwrap_or_default();
            json!({ "verdict": "satisfied", "horizon": n, "witnesses": witnesses })
        }
        Verdict::Violated(pairs) => json!({
            "verdict": "violated",
            "horizon": n,
            "violated_pair_count": pairs.len(),
            "pairs": pairs.iter().take(MAX_REPORTED_PAIRS).map(|&(i, j)| json!([i, j])).collect::<Vec<_>>(),
        }),
    }
}
