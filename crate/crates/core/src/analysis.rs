//! Error norms, convergence orders and the node-based error estimator.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::basis::LocalBasis;
use crate::error::{Error, Result};
use crate::geometry::{LevelSetDomain, Point};
use crate::grid::{PointCloud, Quadtree};

/// Value of point `owner`'s local expansion at `p`.
pub fn evaluate_solution(alpha: &[f64], bases: &[LocalBasis], p: Point, owner: usize) -> f64 {
    let basis = &bases[owner];
    let q = basis.len();
    basis.expand(&alpha[owner * q..(owner + 1) * q], p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeEstimate {
    pub node: Point,
    pub estimate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub local_abs: Vec<f64>,
    pub linf: f64,
    pub estimator_per_node: Vec<NodeEstimate>,
    pub estimator_global: f64,
}

/// `|u_exact(x_i) − u_i(x_i)|` per inside point, and their maximum.
pub fn point_errors(
    cloud: &PointCloud,
    alpha: &[f64],
    bases: &[LocalBasis],
    exact: &dyn Fn(Point) -> f64,
) -> (Vec<f64>, f64) {
    let local: Vec<f64> = (0..cloud.n_inside)
        .map(|i| (exact(cloud.points[i]) - evaluate_solution(alpha, bases, cloud.points[i], i)).abs())
        .collect();
    let linf = local.iter().copied().fold(0.0, f64::max);
    (local, linf)
}

fn max_pairwise(values: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for (k, a) in values.iter().enumerate() {
        for b in &values[k + 1..] {
            m = m.max((a - b).abs());
        }
    }
    m
}

/// Jump estimator on a quadtree: at each leaf corner strictly inside the
/// domain, the largest difference between the expansions of the inside leaves
/// touching it. Corners touched by fewer than two inside leaves are skipped.
pub fn error_estimate(
    cloud: &PointCloud,
    tree: &Quadtree,
    alpha: &[f64],
    bases: &[LocalBasis],
    dom: &LevelSetDomain,
) -> Vec<NodeEstimate> {
    let delta = 1e-3 * tree.min_leaf_half_width();
    let probes = [
        Point::new(delta, delta),
        Point::new(-delta, delta),
        Point::new(-delta, -delta),
        Point::new(delta, -delta),
    ];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut owners = Vec::with_capacity(4);
    let mut values = Vec::with_capacity(4);
    for i in 0..cloud.n_inside {
        let cell = tree.cell(cloud.cells[i].expect("quadtree cloud"));
        for node in cell.corners() {
            if !seen.insert((node.x.to_bits(), node.y.to_bits())) || !(dom.value(node) < 0.0) {
                continue;
            }
            owners.clear();
            for d in probes {
                if let Some(j) = tree.locate(node + d).and_then(|c| tree.cell(c).leaf_index) {
                    if !owners.contains(&j) {
                        owners.push(j);
                    }
                }
            }
            if owners.len() < 2 {
                continue;
            }
            values.clear();
            values.extend(owners.iter().map(|&j| evaluate_solution(alpha, bases, node, j)));
            out.push(NodeEstimate {
                node,
                estimate: max_pairwise(&values),
            });
        }
    }
    out
}

/// One-dimensional variant: the jump between neighboring expansions at the
/// midpoint of each pair of adjacent points.
pub fn error_estimate_1d(cloud: &PointCloud, alpha: &[f64], bases: &[LocalBasis]) -> Vec<NodeEstimate> {
    (1..cloud.n_inside)
        .map(|k| {
            let node = (cloud.points[k - 1] + cloud.points[k]) * 0.5;
            let a = evaluate_solution(alpha, bases, node, k - 1);
            let b = evaluate_solution(alpha, bases, node, k);
            NodeEstimate {
                node,
                estimate: (a - b).abs(),
            }
        })
        .collect()
}

pub fn global_estimate(nodes: &[NodeEstimate]) -> f64 {
    nodes.iter().map(|n| n.estimate).fold(0.0, f64::max)
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_eoc(h: &[f64], err: &[f64]) -> Result<f64> {
    if h.len() != err.len() {
        return Err(Error::InvalidArgument("h and error series differ in length".into()));
    }
    if h.len() < 2 {
        return Err(Error::TooFewEntries);
    }
    if err.iter().chain(h).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveError);
    }
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all h values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Relative mesh width after `splits` global refinements.
pub fn mesh_width(splits: u32) -> f64 {
    0.5f64.powi(splits as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub splits: u32,
    pub h: f64,
    pub linf: f64,
    pub estimator_global: f64,
    pub n: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub entries: Vec<ConvergenceEntry>,
}

impl ConvergenceSeries {
    pub fn push(&mut self, e: ConvergenceEntry) {
        self.entries.push(e);
        self.entries.sort_by_key(|e| e.splits);
    }

    pub fn eoc(&self) -> Result<f64> {
        let h: Vec<f64> = self.entries.iter().map(|e| e.h).collect();
        let err: Vec<f64> = self.entries.iter().map(|e| e.linf).collect();
        fit_eoc(&h, &err)
    }

    pub fn estimator_eoc(&self) -> Result<f64> {
        let h: Vec<f64> = self.entries.iter().map(|e| e.h).collect();
        let est: Vec<f64> = self.entries.iter().map(|e| e.estimator_global).collect();
        fit_eoc(&h, &est)
    }
}

/// Pearson correlation of `log a` and `log b`.
pub fn log_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::TooFewEntries);
    }
    if a.iter().chain(b).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveError);
    }
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let n = la.len() as f64;
    let ma = la.iter().sum::<f64>() / n;
    let mb = lb.iter().sum::<f64>() / n;
    let cov: f64 = la.iter().zip(&lb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = la.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = lb.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}

/// `x, y, u_num, u_exact, abs_err` per inside point.
pub fn write_solution_csv<W: Write>(
    cloud: &PointCloud,
    alpha: &[f64],
    bases: &[LocalBasis],
    exact: Option<&dyn Fn(Point) -> f64>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "u_num", "u_exact", "abs_err"])?;
    for i in 0..cloud.n_inside {
        let p = cloud.points[i];
        let u = evaluate_solution(alpha, bases, p, i);
        let (ue, err) = match exact {
            Some(f) => {
                let v = f(p);
                (v.to_string(), (v - u).abs().to_string())
            }
            None => (String::new(), String::new()),
        };
        w.write_record([p.x.to_string(), p.y.to_string(), u.to_string(), ue, err])?;
    }
    w.flush()?;
    Ok(())
}

/// `x, y, est` per estimator node.
pub fn write_estimator_csv<W: Write>(nodes: &[NodeEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "est"])?;
    for n in nodes {
        w.write_record([n.node.x.to_string(), n.node.y.to_string(), n.estimate.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
