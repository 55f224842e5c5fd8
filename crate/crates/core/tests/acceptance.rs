//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any of them fails. Progress goes to stderr.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use lsqd::analysis::{fit_eoc, log_correlation, mesh_width};
use lsqd::assembly::{epsilon_from_bounds, stabilization_epsilon};
use lsqd::pipeline::{run_case, CaseResult, RunOptions};
use lsqd::problems::{preset, standard_presets};
use lsqd::sparse::BlockSymMatrix;

struct Outcome {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Runner {
    epsilons: Vec<(String, f64)>,
    cases: usize,
}

impl Runner {
    fn run(&mut self, name: &str, degree: usize, splits: u32) -> Option<CaseResult> {
        let case = preset(name).expect("known preset");
        let clock = Instant::now();
        match run_case(&case, degree, splits, &RunOptions::default()) {
            Ok(solved) => {
                let r = solved.result;
                self.cases += 1;
                self.epsilons.push((format!("{name} P={degree} s={splits}"), r.epsilon));
                eprintln!(
                    "  {name} P={degree} s={splits}: N={} it={} linf={} est={:.3e} ({:.1}s)",
                    r.n,
                    r.iterations,
                    r.linf_error.map_or("-".into(), |e| format!("{e:.3e}")),
                    r.estimator_global,
                    clock.elapsed().as_secs_f64()
                );
                Some(r)
            }
            Err(e) => {
                eprintln!("  {name} P={degree} s={splits}: error: {e}");
                None
            }
        }
    }

    /// Linf errors over `splits`, None if any run failed.
    fn series(&mut self, name: &str, degree: usize, splits: &[u32]) -> Option<Vec<CaseResult>> {
        splits.iter().map(|&s| self.run(name, degree, s)).collect()
    }
}

fn linf(r: &CaseResult) -> f64 {
    r.linf_error.unwrap_or(f64::NAN)
}

fn eoc_of(rs: &[CaseResult]) -> f64 {
    let h: Vec<f64> = rs.iter().map(|r| mesh_width(r.splits)).collect();
    let e: Vec<f64> = rs.iter().map(linf).collect();
    fit_eoc(&h, &e).unwrap_or(f64::NAN)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn criterion_1(run: &mut Runner) -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for bc in ["dirichlet", "robin"] {
        for dom in ["square", "octofoil"] {
            for grid in ["uniform", "adaptive"] {
                let name = format!("poly/{bc}/{dom}/{grid}");
                for p in 2..=5 {
                    let err = run.run(&name, p, 0).map_or(f64::NAN, |r| linf(&r));
                    if !(err < 1e-7) {
                        failures.push(format!("{name} P={p}: {err:.3e}"));
                    }
                    if err.is_nan() || err > worst.0 {
                        worst = (err, format!("{name} P={p}"));
                    }
                }
            }
        }
    }
    Outcome {
        id: 1,
        title: "polynomial exactness, Linf < 1e-7",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("32 cases, worst {:.3e} ({})", worst.0, worst.1)
        } else {
            format!("failing: {}", failures.join("; "))
        },
    }
}

const RUNTIME_TARGET_MIN: f64 = 30.0;
const EOC_MIN: [(usize, f64); 4] = [(2, 1.4), (3, 1.6), (4, 2.7), (5, 3.0)];

fn criterion_2(run: &mut Runner, keep: &str) -> (Outcome, BTreeMap<usize, Vec<CaseResult>>) {
    let splits: Vec<u32> = (0..=3).collect();
    let clock = Instant::now();
    let mut kept = BTreeMap::new();
    let mut failures = Vec::new();
    let mut table = Vec::new();
    for name in standard_presets() {
        let mut row = Vec::new();
        for (p, min) in EOC_MIN {
            let eoc = match run.series(&name, p, &splits) {
                Some(rs) => {
                    let eoc = eoc_of(&rs);
                    if name == keep {
                        kept.insert(p, rs);
                    }
                    eoc
                }
                None => f64::NAN,
            };
            if !(eoc >= min) {
                failures.push(format!("{name} P={p}: {eoc:.2} < {min}"));
            }
            row.push(format!("{eoc:.2}"));
        }
        table.push(format!("{name} {}", row.join("/")));
        eprintln!("  EOC {}", table.last().unwrap());
    }
    let minutes = clock.elapsed().as_secs_f64() / 60.0;
    let on_time = minutes <= RUNTIME_TARGET_MIN;
    let eoc_status = if failures.is_empty() {
        format!("all EOC thresholds met; {}", table.join(", "))
    } else {
        format!("EOC failing: {}", failures.join("; "))
    };
    let outcome = Outcome {
        id: 2,
        title: "h-P convergence, EOC >= 1.4/1.6/2.7/3.0 for P=2..5, serial runtime <= 30 min",
        pass: failures.is_empty() && on_time,
        detail: format!(
            "runtime {minutes:.1} min ({}); {eoc_status}",
            if on_time {
                "within target"
            } else {
                "over the 30 min target"
            }
        ),
    };
    (outcome, kept)
}

fn criterion_3(run: &mut Runner) -> Outcome {
    let splits: Vec<u32> = (0..=3).collect();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for name in ["degenerate/robin", "degenerate/helmholtz"] {
        for p in [3, 5] {
            let Some(rs) = run.series(name, p, &splits) else {
                failures.push(format!("{name} P={p}: run failed"));
                continue;
            };
            let errs: Vec<f64> = rs.iter().map(linf).collect();
            let converged = rs.iter().all(|r| r.converged && r.epsilon.is_finite());
            let shown: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
            if !converged {
                failures.push(format!("{name} P={p}: solve did not converge"));
            } else if !strictly_decreasing(&errs) {
                failures.push(format!("{name} P={p}: not decreasing [{}]", shown.join(", ")));
            }
            summary.push(format!("{name} P={p} [{}]", shown.join(", ")));
        }
    }
    Outcome {
        id: 3,
        title: "degenerate Robin and Helmholtz cases converge",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            summary.join("; ")
        } else {
            format!("failing: {}", failures.join("; "))
        },
    }
}

fn criterion_4(run: &mut Runner) -> Outcome {
    let low = run
        .run("neumann/octofoil/uniform/ratio1", 4, 2)
        .map_or(f64::NAN, |r| linf(&r));
    let high = run
        .run("neumann/octofoil/uniform/ratio1000", 4, 2)
        .map_or(f64::NAN, |r| linf(&r));
    let gain = low / high;
    Outcome {
        id: 4,
        title: "Neumann a/mu=1000 at least 10x more accurate than a/mu=1",
        pass: gain >= 10.0,
        detail: format!("ratio1 {low:.3e}, ratio1000 {high:.3e}, gain {gain:.1}x"),
    }
}

fn criterion_5(run: &mut Runner) -> Outcome {
    let splits: Vec<u32> = (0..=5).collect();
    let mut failures = Vec::new();
    let mut finals = BTreeMap::new();
    for p in [2, 3, 4] {
        let errs: Vec<f64> = match run.series("demo1d", p, &splits) {
            Some(rs) => rs.iter().map(linf).collect(),
            None => vec![f64::NAN; splits.len()],
        };
        let tail: Vec<f64> = errs.iter().copied().skip_while(|&e| !(e < 1e-1)).collect();
        if tail.is_empty() || !strictly_decreasing(&tail) {
            let shown: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
            failures.push(format!("P={p}: [{}]", shown.join(", ")));
        }
        finals.insert(p, errs[5]);
    }
    let gap = finals[&2] / finals[&4];
    if !(gap >= 100.0) {
        failures.push(format!("P=2/P=4 gap at split 5 only {gap:.1}x"));
    }
    Outcome {
        id: 5,
        title: "1D demo convergence",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "split 5: P2 {:.2e}, P3 {:.2e}, P4 {:.2e} (gap {gap:.0}x)",
                finals[&2], finals[&3], finals[&4]
            )
        } else {
            format!("failing: {}", failures.join("; "))
        },
    }
}

fn criterion_6(run: &Runner) -> Outcome {
    let direct = epsilon_from_bounds(100.0, 0.0, 1e40);
    let g = BlockSymMatrix::from_dense(1, &[vec![50.0, 50.0], vec![50.0, 50.0]]).expect("symmetric");
    let via_matrix = stabilization_epsilon(&g, 1e40);
    let rel = |e: f64| ((e - 1e-38) / 1e-38).abs();
    let unit_ok = rel(direct) <= 0.01 && rel(via_matrix) <= 0.01;
    let worst = run
        .epsilons
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap_or((String::from("none"), f64::NAN));
    let pipeline_ok = run.cases > 0 && run.epsilons.iter().all(|(_, e)| *e <= 1e-30);
    Outcome {
        id: 6,
        title: "stabilization epsilon 1e-38 within 1%, pipeline epsilon <= 1e-30",
        pass: unit_ok && pipeline_ok,
        detail: format!(
            "formula {direct:.4e}, from matrix {via_matrix:.4e}; largest pipeline epsilon {:.3e} ({}) over {} runs",
            worst.1, worst.0, run.cases
        ),
    }
}

fn criterion_7(series: &BTreeMap<usize, Vec<CaseResult>>) -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (p, _) in EOC_MIN {
        let Some(rs) = series.get(&p) else {
            failures.push(format!("P={p}: no runs"));
            continue;
        };
        let err: Vec<f64> = rs.iter().map(linf).collect();
        let est: Vec<f64> = rs.iter().map(|r| r.estimator_global).collect();
        let h: Vec<f64> = rs.iter().map(|r| mesh_width(r.splits)).collect();
        let corr = log_correlation(&err, &est).unwrap_or(f64::NAN);
        let eoc = fit_eoc(&h, &err).unwrap_or(f64::NAN);
        let est_eoc = fit_eoc(&h, &est).unwrap_or(f64::NAN);
        if !(corr >= 0.9) {
            failures.push(format!("P={p}: correlation {corr:.3}"));
        }
        if !((est_eoc - eoc).abs() <= 1.0) {
            failures.push(format!("P={p}: estimator EOC {est_eoc:.2} vs true {eoc:.2}"));
        }
        summary.push(format!("P={p} r={corr:.3} eoc {eoc:.2}/{est_eoc:.2}"));
    }
    Outcome {
        id: 7,
        title: "estimator tracks the error on dirichlet/octofoil/adaptive",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            summary.join("; ")
        } else {
            format!("failing: {}", failures.join("; "))
        },
    }
}

fn results_without_timing(dir: &std::path::Path) -> Result<Vec<Vec<String>>, String> {
    let mut rd = csv::Reader::from_path(dir.join("results.csv")).map_err(|e| e.to_string())?;
    let headers = rd.headers().map_err(|e| e.to_string())?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| !headers[i].contains("time")).collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].to_string()).collect()];
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok(rows)
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let preset = "mixed/octofoil/adaptive";
    let mut tables = Vec::new();
    let mut problems = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_lsqd"))
            .args([
                "--preset", preset, "--p", "2,3,4", "--splits", "0,1,2", "--seed", "11", "--out",
            ])
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status();
        match status {
            Ok(s) if s.success() => match results_without_timing(&out) {
                Ok(rows) => tables.push(rows),
                Err(e) => problems.push(format!("run {k}: {e}")),
            },
            Ok(s) => problems.push(format!("run {k}: exit {s}")),
            Err(e) => problems.push(format!("run {k}: {e}")),
        }
    }
    let identical = problems.is_empty() && tables.len() == 2 && tables[0] == tables[1];
    Outcome {
        id: 8,
        title: "repeated runs give identical results.csv",
        pass: identical,
        detail: if !problems.is_empty() {
            problems.join("; ")
        } else if identical {
            format!("{preset} seed 11, {} rows identical modulo timing", tables[0].len() - 1)
        } else {
            "results differ between runs".into()
        },
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut run = Runner::default();
    let mut outcomes = Vec::new();

    let stage = |label: &str| eprintln!("[{:>7.1}s] {label}", started.elapsed().as_secs_f64());

    stage("criterion 1");
    outcomes.push(criterion_1(&mut run));
    stage("criterion 4");
    outcomes.push(criterion_4(&mut run));
    stage("criterion 5");
    outcomes.push(criterion_5(&mut run));
    stage("criterion 8");
    outcomes.push(criterion_8());
    stage("criterion 3");
    outcomes.push(criterion_3(&mut run));
    stage("criterion 2");
    let (c2, kept) = criterion_2(&mut run, "dirichlet/octofoil/adaptive");
    outcomes.push(c2);
    outcomes.push(criterion_7(&kept));
    outcomes.push(criterion_6(&run));
    stage("done");

    outcomes.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {tag}: {} | {}", o.id, o.title, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "{}/{} criteria passed in {:.0}s ({} solver runs)",
        outcomes.len() - failed,
        outcomes.len(),
        started.elapsed().as_secs_f64(),
        run.cases + 18
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
