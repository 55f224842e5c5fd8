//! Batch runner: sweeps `(P, splits)` for one preset and writes
//! `results.csv` and `summary.json`.
//!
//! Exit codes: 0 on success, 2 if any case failed to converge or errored,
//! 1 on a configuration error (in which case no results file is written).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_eoc, mesh_width, write_estimator_csv, write_solution_csv};
use crate::assembly::DEFAULT_KAPPA_MAX;
use crate::error::{Error, Result};
use crate::grid::write_grid_csv;
use crate::neighborhood::write_neighborhoods_csv;
use crate::pipeline::{run_case, CaseResult, RunOptions, SolvedCase};
use crate::problems::{preset, PresetCase};
use crate::solver::SolveOptions;
use crate::sparse::write_rectangular_market;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DumpKind {
    Solution,
    Estimator,
    Grid,
    System,
    Neighborhoods,
}

/// JSON run configuration. Either `preset` or `case` must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Explicit domain, grid and problem block; overrides `preset`.
    pub case: Option<PresetCase>,
    pub p_list: Option<Vec<usize>>,
    pub splits_list: Option<Vec<u32>>,
    pub solver: SolveOptions,
    pub kappa_max: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub dump: Vec<DumpKind>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(
    name = "lsqd",
    version,
    about = "Least-squares meshless solver: h-P convergence sweeps"
)]
pub struct Args {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset name, e.g. dirichlet/octofoil/adaptive.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Polynomial degrees, comma separated.
    #[arg(long = "p", value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    /// Global split counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<u32>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra outputs per case.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub dump: Vec<DumpKind>,
    /// Cases solved concurrently.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print the preset names and exit.
    #[arg(long)]
    pub list_presets: bool,
}

/// A validated sweep.
#[derive(Clone, Debug)]
pub struct Plan {
    pub name: String,
    pub case: PresetCase,
    pub degrees: Vec<usize>,
    pub splits: Vec<u32>,
    pub options: RunOptions,
    pub out_dir: PathBuf,
    pub dump: Vec<DumpKind>,
    pub threads: usize,
}

pub const DEFAULT_OUT_DIR: &str = "lsqd-out";

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_args(&mut self, args: &Args) {
        if let Some(p) = &args.preset {
            self.preset = Some(p.clone());
            self.case = None;
        }
        if let Some(o) = &args.out {
            self.out_dir = Some(o.clone());
        }
        if let Some(p) = &args.p {
            self.p_list = Some(p.clone());
        }
        if let Some(s) = &args.splits {
            self.splits_list = Some(s.clone());
        }
        if args.seed.is_some() {
            self.seed = args.seed;
        }
        if !args.dump.is_empty() {
            self.dump = args.dump.clone();
        }
        if args.threads.is_some() {
            self.threads = args.threads;
        }
    }

    pub fn plan(&self) -> Result<Plan> {
        let mut case = match (&self.case, &self.preset) {
            (Some(c), _) => c.clone(),
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(Error::Config("either a preset or a case block is required".into())),
        };
        if let Some(seed) = self.seed {
            case = case.with_seed(seed);
        }
        case.grid.validate()?;
        let degrees = self.p_list.clone().unwrap_or_else(|| case.p_range.clone());
        let mut splits = self.splits_list.clone().unwrap_or_else(|| case.splits_range.clone());
        if degrees.is_empty() || splits.is_empty() {
            return Err(Error::Config("P and splits lists must be nonempty".into()));
        }
        if let Some(&p) = degrees.iter().find(|&&p| !(1..=12).contains(&p)) {
            return Err(Error::Config(format!("polynomial degree {p} outside 1..=12")));
        }
        let mut degrees = degrees;
        degrees.sort_unstable();
        degrees.dedup();
        splits.sort_unstable();
        splits.dedup();
        self.solver.validate()?;
        let kappa_max = self.kappa_max.unwrap_or(DEFAULT_KAPPA_MAX);
        if !(kappa_max > 1.0) {
            return Err(Error::Config("kappa_max must exceed 1".into()));
        }
        let threads = self.threads.unwrap_or(1);
        if threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let mut dump = self.dump.clone();
        dump.sort_unstable();
        dump.dedup();
        Ok(Plan {
            name: case.name.clone(),
            case,
            degrees,
            splits,
            options: RunOptions {
                solver: self.solver,
                kappa_max,
                keep_system: dump.contains(&DumpKind::System),
                condition_estimate: false,
            },
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            dump,
            threads,
        })
    }
}

pub const RESULTS_HEADER: [&str; 14] = [
    "run_id",
    "preset",
    "P",
    "splits",
    "N",
    "M",
    "eta_min",
    "epsilon",
    "iterations",
    "residual_inf",
    "linf_error",
    "estimator_global",
    "eoc_running",
    "wall_time_s",
];

fn run_id(name: &str, r: &CaseResult) -> String {
    format!("{}-P{}-s{}", name.replace('/', "-"), r.degree, r.splits)
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// EOC of the cases with the same degree and at most as many splits.
fn running_eoc(results: &[CaseResult], r: &CaseResult) -> Option<f64> {
    let (h, e): (Vec<f64>, Vec<f64>) = results
        .iter()
        .filter(|o| o.degree == r.degree && o.splits <= r.splits)
        .filter_map(|o| o.linf_error.map(|e| (mesh_width(o.splits), e)))
        .unzip();
    fit_eoc(&h, &e).ok()
}

/// Writes `results.csv` sorted by `(P, splits)`.
pub fn write_results(path: &Path, name: &str, results: &[CaseResult]) -> Result<()> {
    let mut sorted: Vec<&CaseResult> = results.iter().collect();
    sorted.sort_by_key(|r| (r.degree, r.splits));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in sorted {
        w.write_record([
            run_id(name, r),
            name.to_string(),
            r.degree.to_string(),
            r.splits.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.eta_min.to_string(),
            r.epsilon.to_string(),
            r.iterations.to_string(),
            r.residual_inf.to_string(),
            opt_num(r.linf_error),
            r.estimator_global.to_string(),
            opt_num(running_eoc(results, r)),
            format!("{:.6}", r.timings.total()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timings(path: &Path, name: &str, results: &[CaseResult]) -> Result<()> {
    let mut sorted: Vec<&CaseResult> = results.iter().collect();
    sorted.sort_by_key(|r| (r.degree, r.splits));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run_id",
        "grid_s",
        "neighborhoods_s",
        "assembly_s",
        "solve_s",
        "analysis_s",
    ])?;
    for r in sorted {
        let t = r.timings;
        w.write_record(
            std::iter::once(run_id(name, r))
                .chain([t.grid, t.neighborhoods, t.assembly, t.solve, t.analysis].map(|v| format!("{v:.6}"))),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    preset: &'a str,
    seed: u64,
    cases: usize,
    failed: usize,
    all_converged: bool,
    /// Fitted EOC of the max-norm error, per degree.
    eoc: BTreeMap<usize, Option<f64>>,
    /// Fitted EOC of the global estimator, per degree.
    estimator_eoc: BTreeMap<usize, Option<f64>>,
}

fn write_summary(path: &Path, plan: &Plan, results: &[CaseResult], failed: usize) -> Result<()> {
    let mut eoc = BTreeMap::new();
    let mut est = BTreeMap::new();
    for &p in &plan.degrees {
        let mut rows: Vec<&CaseResult> = results.iter().filter(|r| r.degree == p).collect();
        rows.sort_by_key(|r| r.splits);
        let h: Vec<f64> = rows.iter().map(|r| mesh_width(r.splits)).collect();
        let e: Option<Vec<f64>> = rows.iter().map(|r| r.linf_error).collect();
        let g: Vec<f64> = rows.iter().map(|r| r.estimator_global).collect();
        eoc.insert(p, e.and_then(|e| fit_eoc(&h, &e).ok()));
        est.insert(p, fit_eoc(&h, &g).ok());
    }
    let summary = Summary {
        preset: &plan.name,
        seed: plan.case.grid.random_seed,
        cases: results.len(),
        failed,
        all_converged: failed == 0 && results.iter().all(|r| r.converged),
        eoc,
        estimator_eoc: est,
    };
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, &summary)?;
    Ok(())
}

fn write_dumps(dir: &Path, plan: &Plan, solved: &SolvedCase) -> Result<()> {
    if plan.dump.is_empty() {
        return Ok(());
    }
    let dir = dir.join("dumps");
    fs::create_dir_all(&dir)?;
    let stem = format!("p{}_s{}", solved.result.degree, solved.result.splits);
    let open = |kind: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(dir.join(format!("{stem}_{kind}")))?))
    };
    for kind in &plan.dump {
        match kind {
            DumpKind::Solution => write_solution_csv(
                &solved.cloud,
                &solved.alpha,
                &solved.bases,
                solved
                    .problem
                    .exact
                    .as_ref()
                    .map(|f| f.as_ref() as &dyn Fn(crate::geometry::Point) -> f64),
                open("solution.csv")?,
            )?,
            DumpKind::Estimator => write_estimator_csv(&solved.estimator, open("estimator.csv")?)?,
            DumpKind::Grid => match &solved.tree {
                Some(tree) => write_grid_csv(tree, open("grid.csv")?)?,
                None => log::info!("grid dump skipped for a 1D cloud"),
            },
            DumpKind::System => {
                if let Some((sys, ns)) = &solved.system {
                    write_rectangular_market(&sys.a, &sys.b, open("system.mtx")?)?;
                    ns.g.write_matrix_market(open("normal.mtx")?)?;
                }
            }
            DumpKind::Neighborhoods => write_neighborhoods_csv(&solved.neighborhoods, open("neighborhoods.csv")?)?,
        }
    }
    Ok(())
}

fn append_solve_log(path: &Path, r: &CaseResult) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "N,Q,M,epsilon,iterations,residual,wall_time_s")?;
    }
    writeln!(
        f,
        "{},{},{},{:e},{},{:e},{:.6}",
        r.n, r.q, r.m, r.epsilon, r.iterations, r.residual_inf, r.timings.solve
    )?;
    Ok(())
}

struct Shared {
    results: Vec<CaseResult>,
    failed: usize,
}

/// Runs a validated plan. Returns the process exit code.
pub fn execute(plan: &Plan) -> Result<i32> {
    fs::create_dir_all(&plan.out_dir)?;
    let results_path = plan.out_dir.join("results.csv");
    let jobs: Vec<(usize, u32)> = plan
        .degrees
        .iter()
        .flat_map(|&p| plan.splits.iter().map(move |&s| (p, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let shared = Mutex::new(Shared {
        results: Vec::new(),
        failed: 0,
    });

    let worker = || -> Result<()> {
        loop {
            let k = next.fetch_add(1, Ordering::SeqCst);
            let Some(&(p, s)) = jobs.get(k) else { return Ok(()) };
            log::info!("{} P={p} splits={s}", plan.name);
            match run_case(&plan.case, p, s, &plan.options) {
                Ok(solved) => {
                    write_dumps(&plan.out_dir, plan, &solved)?;
                    let mut sh = shared.lock().unwrap();
                    if !solved.result.converged {
                        sh.failed += 1;
                    }
                    append_solve_log(&plan.out_dir.join("solve_log.csv"), &solved.result)?;
                    sh.results.push(solved.result);
                    write_results(&results_path, &plan.name, &sh.results)?;
                }
                Err(e) => {
                    log::error!("{} P={p} splits={s} failed: {e}", plan.name);
                    shared.lock().unwrap().failed += 1;
                }
            }
        }
    };
    let threads = plan.threads.min(jobs.len()).max(1);
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..threads).map(|_| scope.spawn(worker)).collect();
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;

    let sh = shared.into_inner().unwrap();
    write_results(&results_path, &plan.name, &sh.results)?;
    write_timings(&plan.out_dir.join("timings.csv"), &plan.name, &sh.results)?;
    write_summary(&plan.out_dir.join("summary.json"), plan, &sh.results, sh.failed)?;
    let not_converged = sh.failed + sh.results.iter().filter(|r| !r.converged).count();
    Ok(if sh.failed > 0 || not_converged > 0 { 2 } else { 0 })
}

/// Parses flags, runs, and maps failures to exit codes.
pub fn run_with_args(args: &Args) -> i32 {
    if args.list_presets {
        for name in crate::problems::preset_names() {
            println!("{name}");
        }
        return 0;
    }
    let mut cfg = match &args.config {
        Some(path) => match RunConfig::from_file(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        None => RunConfig::default(),
    };
    cfg.apply_args(args);
    let plan = match cfg.plan() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match execute(&plan) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run_with_args(&Args::parse())
}
