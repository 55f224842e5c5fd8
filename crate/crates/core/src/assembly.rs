//! The rectangular least-squares system and its stabilized normal equations.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::basis::{BasisValues, LocalBasis};
use crate::error::{Error, Result};
use crate::geometry::{LevelSetDomain, Point, BISECTION_TOL};
use crate::grid::PointCloud;
use crate::neighborhood::Neighborhood;
use crate::sparse::{BlockSymMatrix, CsrMatrix};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// Boundary data, called with the boundary point and its outward normal.
pub type BoundaryField = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// Coefficients `(beta, gamma)` of `beta u + gamma du/dn = g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryWeights {
    Constant {
        beta: f64,
        gamma: f64,
    },
    /// `left` applies where `x < 0`, `right` elsewhere.
    SplitX {
        left: (f64, f64),
        right: (f64, f64),
    },
}

impl BoundaryWeights {
    pub fn at(&self, p: Point) -> (f64, f64) {
        match *self {
            Self::Constant { beta, gamma } => (beta, gamma),
            Self::SplitX { left, right } => {
                if p.x < 0.0 {
                    left
                } else {
                    right
                }
            }
        }
    }

    fn pairs(&self) -> Vec<(f64, f64)> {
        match *self {
            Self::Constant { beta, gamma } => vec![(beta, gamma)],
            Self::SplitX { left, right } => vec![left, right],
        }
    }
}

/// `a u - mu Δu = f` in the domain, `beta u + gamma ∇u·n = g` on its boundary.
#[derive(Clone)]
pub struct ProblemSpec {
    pub a: f64,
    pub mu: f64,
    pub weights: BoundaryWeights,
    pub f: ScalarField,
    pub g: BoundaryField,
    pub exact: Option<ScalarField>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.mu.is_finite() {
            return Err(Error::InvalidArgument("a and mu must be finite".into()));
        }
        for (beta, gamma) in self.weights.pairs() {
            if beta == 0.0 && gamma == 0.0 {
                return Err(Error::InvalidArgument("beta and gamma are both zero".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("a", &self.a)
            .field("mu", &self.mu)
            .field("weights", &self.weights)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    Pde,
    C0,
    C1x,
    C1y,
    Bc,
}

/// Where a row came from: kind, owner `i`, and the neighbor `j` (for boundary
/// rows, the index of the ghost in `G_i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowTag {
    pub kind: RowKind,
    pub i: usize,
    pub j: usize,
}

#[derive(Clone, Debug)]
pub struct RectangularSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub tags: Vec<RowTag>,
    /// Unknowns per point.
    pub q: usize,
    /// Number of points (column blocks).
    pub n_points: usize,
    /// Boundary evaluation points, one per boundary row.
    pub boundary_points: Vec<Point>,
}

impl RectangularSystem {
    pub fn new(q: usize, n_points: usize) -> Self {
        Self {
            a: CsrMatrix::new(q * n_points),
            b: Vec::new(),
            tags: Vec::new(),
            q,
            n_points,
            boundary_points: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn push_row(&mut self, entries: &mut [(usize, f64)], rhs: f64, tag: RowTag) {
        self.a.push_row(entries);
        self.b.push(rhs);
        self.tags.push(tag);
    }

    /// `‖A x − b‖_∞`
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m()];
        self.a.matvec(x, &mut ax);
        ax.iter().zip(&self.b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }
}

/// Local expansion for point `i`, centered there and scaled by its
/// neighborhood extent.
pub fn local_basis(cloud: &PointCloud, nb: &Neighborhood, degree: usize) -> LocalBasis {
    LocalBasis::new(cloud.points[nb.owner], nb.extent, degree, cloud.dim)
}

/// Builds PDE, continuity, derivative-continuity and boundary rows.
///
/// `neighborhoods[i]` and `bases[i]` belong to inside point `i`.
pub fn assemble(
    cloud: &PointCloud,
    neighborhoods: &[Neighborhood],
    bases: &[LocalBasis],
    dom: &LevelSetDomain,
    prob: &ProblemSpec,
) -> Result<RectangularSystem> {
    let n = cloud.n_inside;
    if n == 0 || neighborhoods.is_empty() {
        return Err(Error::EmptySystem);
    }
    if neighborhoods.len() != n || bases.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} neighborhoods and bases, got {} and {}",
            neighborhoods.len(),
            bases.len()
        )));
    }
    let q = bases[0].len();
    let dim = cloud.dim;
    let under = neighborhoods.iter().filter(|nb| nb.under_resolved).count();
    if under > 0 {
        log::warn!("{under} of {n} neighborhoods are under-resolved");
    }

    let mut sys = RectangularSystem::new(q, n);
    let mut vi = BasisValues::default();
    let mut vj = BasisValues::default();
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * q);

    for (i, nb) in neighborhoods.iter().enumerate() {
        let bi = &bases[i];
        let ci = i * q;
        for &j in &nb.members {
            let xj = cloud.points[j];
            bi.eval_all(xj, &mut vi);

            entries.clear();
            entries.extend((0..q).map(|k| (ci + k, prob.a * vi.value[k] - prob.mu * vi.laplacian[k])));
            sys.push_row(
                &mut entries,
                (prob.f)(xj),
                RowTag {
                    kind: RowKind::Pde,
                    i,
                    j,
                },
            );

            if j == i {
                continue;
            }
            bases[j].eval_all(xj, &mut vj);
            let cj = j * q;
            let families: [(RowKind, &[f64], &[f64]); 3] = [
                (RowKind::C0, &vi.value, &vj.value),
                (RowKind::C1x, &vi.dx, &vj.dx),
                (RowKind::C1y, &vi.dy, &vj.dy),
            ];
            for (kind, own, other) in families.into_iter().take(dim + 1) {
                entries.clear();
                entries.extend((0..q).map(|k| (ci + k, own[k])));
                entries.extend((0..q).map(|k| (cj + k, -other[k])));
                sys.push_row(&mut entries, 0.0, RowTag { kind, i, j });
            }
        }

        for (gk, ghost) in nb.ghosts.iter().enumerate() {
            let xb = dom.locate_boundary_point(cloud.points[i], ghost.center, BISECTION_TOL)?;
            let normal = dom.outward_normal(xb)?;
            let (beta, gamma) = prob.weights.at(xb);
            bi.eval_all(xb, &mut vi);
            entries.clear();
            entries.extend((0..q).map(|k| {
                (
                    ci + k,
                    beta * vi.value[k] + gamma * (vi.dx[k] * normal.x + vi.dy[k] * normal.y),
                )
            }));
            sys.push_row(
                &mut entries,
                (prob.g)(xb, normal),
                RowTag {
                    kind: RowKind::Bc,
                    i,
                    j: gk,
                },
            );
            sys.boundary_points.push(xb);
        }
    }
    Ok(sys)
}

/// Scales every row of `[A | b]` to unit L1 norm (over `A`). Returns the
/// weights.
pub fn rescale_rows(sys: &mut RectangularSystem) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(sys.m());
    for k in 0..sys.m() {
        let row = sys.a.row_mut(k);
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if !(s > 0.0) || !s.is_finite() {
            let t = sys.tags[k];
            return Err(Error::ZeroRow {
                row: k,
                kind: t.kind,
                i: t.i,
                j: t.j,
            });
        }
        let w = 1.0 / s;
        for v in row.iter_mut() {
            *v *= w;
        }
        sys.b[k] *= w;
        weights.push(w);
    }
    Ok(weights)
}

/// Gershgorin bracket `(λmax, λmin)` of a symmetric matrix, with the lower
/// bound clamped at zero.
pub fn gershgorin_bounds(g: &BlockSymMatrix) -> (f64, f64) {
    let (diag, off) = g.row_abs_sums();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (d, o) in diag.iter().zip(&off) {
        hi = hi.max(d + o);
        lo = lo.min(d - o);
    }
    (hi, lo.max(0.0))
}

/// Smallest shift `ε` with `(λmax + ε)/(λmin + ε) <= κmax`, clamped at zero.
pub fn epsilon_from_bounds(lambda_max: f64, lambda_min: f64, kappa_max: f64) -> f64 {
    assert!(kappa_max > 1.0, "kappa_max must exceed 1");
    ((lambda_max - kappa_max * lambda_min) / (kappa_max - 1.0)).max(0.0)
}

pub fn stabilization_epsilon(g: &BlockSymMatrix, kappa_max: f64) -> f64 {
    let (hi, lo) = gershgorin_bounds(g);
    epsilon_from_bounds(hi, lo, kappa_max)
}

pub const DEFAULT_KAPPA_MAX: f64 = 1e40;

#[derive(Clone, Debug)]
pub struct NormalSystem {
    pub g: BlockSymMatrix,
    pub rhs: Vec<f64>,
    pub epsilon: f64,
    /// Gershgorin bracket of `AᵀA` before the shift.
    pub gershgorin: (f64, f64),
}

/// `AᵀA` with the block pattern implied by the rows. Entries are accumulated
/// in row order, so the result is deterministic and exactly symmetric.
pub fn gram(a: &CsrMatrix, q: usize) -> BlockSymMatrix {
    assert_eq!(a.ncols() % q, 0);
    let nb = a.ncols() / q;
    let mut pattern: Vec<BTreeSet<usize>> = (0..nb).map(|i| BTreeSet::from([i])).collect();
    let mut groups: Vec<(usize, usize, usize)> = Vec::new();
    for k in 0..a.nrows() {
        row_groups(a.row(k).0, q, &mut groups);
        for (x, &(bi, _, _)) in groups.iter().enumerate() {
            for &(bj, _, _) in &groups[x + 1..] {
                pattern[bi].insert(bj);
            }
        }
    }
    let mut g = BlockSymMatrix::from_pattern(q, pattern.into_iter().map(|s| s.into_iter().collect()).collect());
    for k in 0..a.nrows() {
        let (cols, vals) = a.row(k);
        row_groups(cols, q, &mut groups);
        for (x, &(bi, s0, e0)) in groups.iter().enumerate() {
            for &(bj, s1, e1) in &groups[x..] {
                let slot = g.find(bi, bj).expect("pattern covers every row pair");
                let blk = g.block_mut(slot);
                for u in s0..e0 {
                    let (cu, vu) = (cols[u] % q, vals[u]);
                    let dst = &mut blk[cu * q..(cu + 1) * q];
                    for w in s1..e1 {
                        dst[cols[w] % q] += vu * vals[w];
                    }
                }
            }
        }
    }
    g
}

/// Splits sorted columns into `(block, start, end)` runs.
fn row_groups(cols: &[usize], q: usize, out: &mut Vec<(usize, usize, usize)>) {
    out.clear();
    for (k, &c) in cols.iter().enumerate() {
        let b = c / q;
        match out.last_mut() {
            Some(last) if last.0 == b => last.2 = k + 1,
            _ => out.push((b, k, k + 1)),
        }
    }
}

/// `(AᵀA + εI) α = Aᵀb` with `ε` from the Gershgorin bracket.
pub fn form_normal(sys: &RectangularSystem, kappa_max: f64) -> NormalSystem {
    let mut g = gram(&sys.a, sys.q);
    let gershgorin = gershgorin_bounds(&g);
    let epsilon = epsilon_from_bounds(gershgorin.0, gershgorin.1, kappa_max);
    g.add_to_diagonal(epsilon);
    let mut rhs = vec![0.0; sys.a.ncols()];
    sys.a.matvec_transpose(&sys.b, &mut rhs);
    NormalSystem {
        g,
        rhs,
        epsilon,
        gershgorin,
    }
}
