//! One complete run: grid, neighborhoods, assembly, solve and analysis.

use std::time::Instant;

use serde::Serialize;

use crate::analysis::{error_estimate, error_estimate_1d, global_estimate, point_errors, NodeEstimate};
use crate::assembly::{
    assemble, form_normal, local_basis, rescale_rows, NormalSystem, ProblemSpec, RectangularSystem, DEFAULT_KAPPA_MAX,
};
use crate::basis::{basis_size, LocalBasis};
use crate::error::Result;
use crate::geometry::LevelSetDomain;
use crate::grid::{build_1d_cloud, build_quadtree, PointCloud, Quadtree};
use crate::neighborhood::{build_neighborhood, build_neighborhood_1d, connectivity_check, min_neighbors, Neighborhood};
use crate::problems::{DomainChoice, PresetCase, DEMO_1D_POINTS};
use crate::solver::{condition_estimate, solve, ConditionEstimate, Preconditioner, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub solver: SolveOptions,
    pub kappa_max: f64,
    /// Keep the assembled systems in the output (for dumps).
    pub keep_system: bool,
    /// Run the power-iteration condition diagnostic.
    pub condition_estimate: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolveOptions::default(),
            kappa_max: DEFAULT_KAPPA_MAX,
            keep_system: false,
            condition_estimate: false,
        }
    }
}

/// Wall time per phase, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub grid: f64,
    pub neighborhoods: f64,
    pub assembly: f64,
    pub solve: f64,
    pub analysis: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.grid + self.neighborhoods + self.assembly + self.solve + self.analysis
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub degree: usize,
    pub splits: u32,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub eta_min: usize,
    pub under_resolved: usize,
    pub connected: bool,
    pub epsilon: f64,
    pub gershgorin: (f64, f64),
    pub iterations: usize,
    pub residual_inf: f64,
    pub converged: bool,
    pub preconditioner: Preconditioner,
    pub linf_error: Option<f64>,
    pub estimator_global: f64,
    pub condition: Option<ConditionEstimate>,
    pub timings: PhaseTimings,
}

/// Everything a solved case leaves behind.
pub struct SolvedCase {
    pub result: CaseResult,
    pub domain: LevelSetDomain,
    pub problem: ProblemSpec,
    pub cloud: PointCloud,
    pub tree: Option<Quadtree>,
    pub neighborhoods: Vec<Neighborhood>,
    pub bases: Vec<LocalBasis>,
    pub alpha: Vec<f64>,
    pub local_abs: Vec<f64>,
    pub estimator: Vec<NodeEstimate>,
    pub system: Option<(RectangularSystem, NormalSystem)>,
}

impl SolvedCase {
    /// Expansion of the point whose cell contains `p` (2D), or of the
    /// nearest point (1D and points outside every inside leaf).
    pub fn evaluate(&self, p: crate::geometry::Point) -> f64 {
        let owner = self
            .tree
            .as_ref()
            .and_then(|t| t.locate(p))
            .and_then(|c| self.tree.as_ref().unwrap().cell(c).leaf_index)
            .unwrap_or_else(|| {
                (0..self.cloud.n_inside)
                    .min_by(|&a, &b| {
                        (self.cloud.points[a] - p)
                            .norm()
                            .total_cmp(&(self.cloud.points[b] - p).norm())
                    })
                    .expect("non-empty cloud")
            });
        crate::analysis::evaluate_solution(&self.alpha, &self.bases, p, owner)
    }
}

pub fn run_case(case: &PresetCase, degree: usize, splits: u32, opts: &RunOptions) -> Result<SolvedCase> {
    let mut t = PhaseTimings::default();
    let domain = case.domain.build();
    let problem = case.problem(degree);
    problem.validate()?;

    let clock = Instant::now();
    let (cloud, tree) = if case.domain == DomainChoice::Interval {
        (
            build_1d_cloud(DEMO_1D_POINTS, case.grid.random_seed, splits, 0.0, 1.0)?,
            None,
        )
    } else {
        let mut cfg = case.grid.clone();
        cfg.splits = splits;
        let (tree, cloud) = build_quadtree(&domain, &cfg)?;
        (cloud, Some(tree))
    };
    t.grid = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let neighborhoods: Vec<Neighborhood> = (0..cloud.n_inside)
        .map(|i| match &tree {
            Some(tree) => build_neighborhood(i, &cloud, tree, &domain, degree),
            None => build_neighborhood_1d(i, &cloud, degree),
        })
        .collect::<Result<_>>()?;
    let connected = connectivity_check(&neighborhoods, cloud.n_inside);
    if !connected {
        log::warn!("neighbor graph of {} points is not connected", cloud.n_inside);
    }
    let under_resolved = neighborhoods.iter().filter(|nb| nb.under_resolved).count();
    let bases: Vec<LocalBasis> = neighborhoods.iter().map(|nb| local_basis(&cloud, nb, degree)).collect();
    t.neighborhoods = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut sys = assemble(&cloud, &neighborhoods, &bases, &domain, &problem)?;
    rescale_rows(&mut sys)?;
    let ns = form_normal(&sys, opts.kappa_max);
    let m = sys.m();
    let kept = opts.keep_system.then_some(sys);
    t.assembly = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let report = solve(&ns, &opts.solver)?;
    let condition = opts.condition_estimate.then(|| condition_estimate(&ns));
    t.solve = clock.elapsed().as_secs_f64();
    let q = basis_size(degree, cloud.dim);
    log::info!(
        "solve,{},{},{},{:e},{},{:e},{:.3}",
        cloud.n_inside,
        q,
        m,
        ns.epsilon,
        report.iterations,
        report.final_residual_inf,
        report.wall_time
    );
    if !report.converged {
        log::warn!(
            "P={degree} splits={splits}: not converged after {} iterations (residual {:e})",
            report.iterations,
            report.final_residual_inf
        );
    }

    let clock = Instant::now();
    let (local_abs, linf) = match &problem.exact {
        Some(exact) => {
            let (l, m) = point_errors(&cloud, &report.alpha, &bases, exact.as_ref());
            (l, Some(m))
        }
        None => (Vec::new(), None),
    };
    let estimator = match &tree {
        Some(tree) => error_estimate(&cloud, tree, &report.alpha, &bases, &domain),
        None => error_estimate_1d(&cloud, &report.alpha, &bases),
    };
    t.analysis = clock.elapsed().as_secs_f64();

    let result = CaseResult {
        degree,
        splits,
        n: cloud.n_inside,
        q,
        m,
        eta_min: min_neighbors(degree, cloud.dim),
        under_resolved,
        connected,
        epsilon: ns.epsilon,
        gershgorin: ns.gershgorin,
        iterations: report.iterations,
        residual_inf: report.final_residual_inf,
        converged: report.converged,
        preconditioner: report.preconditioner,
        linf_error: linf,
        estimator_global: global_estimate(&estimator),
        condition,
        timings: t,
    };
    Ok(SolvedCase {
        result,
        domain,
        problem,
        cloud,
        tree,
        neighborhoods,
        bases,
        alpha: report.alpha,
        local_abs,
        estimator,
        system: kept.map(|sys| (sys, ns)),
    })
}
