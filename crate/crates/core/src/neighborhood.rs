//! Neighbor sets `V_i` and ghost sets `G_i`.
//!
//! A neighborhood must give enough equations for the local unknowns (size),
//! connect every point to every other through neighbor links (connectivity),
//! and contain at least `P + 1` distinct coordinates per direction
//! (independence). On quadtrees it is grown one layer of direct neighbors at a
//! time; outside cells met on the way become ghosts, which later locate the
//! boundary evaluation points.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::io::Write;

use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};
use crate::geometry::{LevelSetDomain, Point};
use crate::grid::{CellId, Direction, PointCloud, Quadtree};

/// Outside site used to locate a boundary point for the owner's expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ghost {
    pub center: Point,
    /// `None` for virtual cells beyond the root box, and for 1D endpoints.
    pub cell: Option<CellId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub owner: usize,
    /// Point indices; the owner comes first.
    pub members: Vec<usize>,
    pub ghosts: Vec<Ghost>,
    /// Largest coordinate distance from the owner over the members.
    pub extent: Point,
    pub passes: usize,
    pub under_resolved: bool,
}

impl Neighborhood {
    pub fn eta(&self) -> usize {
        self.members.len()
    }
}

/// Smallest neighborhood size giving at least as many equations as unknowns.
///
/// With `eta` members a neighborhood yields `eta` PDE rows, `eta - 1` value
/// continuity rows and `d (eta - 1)` derivative continuity rows, so we need
/// `Q <= eta (d + 2) - d - 1`. In one dimension the size is `max(3, P + 1)`.
pub fn min_neighbors(degree: usize, dim: usize) -> usize {
    match dim {
        1 => (degree + 1).max(3),
        2 => {
            let q = (degree + 1) * (degree + 2) / 2;
            (q + dim + 1).div_ceil(dim + 2)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Coordinate-equality tolerance for the independence condition, relative to
/// the root box width.
pub const COORD_TOL_REL: f64 = 1e-9;

fn distinct_count(values: &mut [f64], tol: f64) -> usize {
    values.sort_by(f64::total_cmp);
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for &v in values.iter() {
        if v - last > tol {
            count += 1;
            last = v;
        }
    }
    count
}

struct Conditions<'a> {
    cloud: &'a PointCloud,
    eta_min: usize,
    need_distinct: usize,
    tol: f64,
}

impl Conditions<'_> {
    fn independence_unmet(&self, members: &[usize], axis: usize) -> bool {
        let mut coords: Vec<f64> = members.iter().map(|&m| self.cloud.points[m].coord(axis)).collect();
        distinct_count(&mut coords, self.tol) < self.need_distinct
    }

    fn size_met(&self, members: &[usize]) -> bool {
        members.len() >= self.eta_min
    }

    fn all_met(&self, members: &[usize]) -> bool {
        self.size_met(members) && (0..self.cloud.dim).all(|a| !self.independence_unmet(members, a))
    }

    fn is_new_coordinate(&self, members: &[usize], axis: usize, c: f64) -> bool {
        members
            .iter()
            .all(|&m| (self.cloud.points[m].coord(axis) - c).abs() > self.tol)
    }
}

fn extent_of(cloud: &PointCloud, members: &[usize], owner: usize) -> Point {
    let o = cloud.points[owner];
    let mut e = Point::default();
    for &m in members {
        let d = cloud.points[m] - o;
        e.x = e.x.max(d.x.abs());
        e.y = e.y.max(d.y.abs());
    }
    // A neighborhood flat in one direction (possible only when under-resolved)
    // falls back to the owner's cell size there.
    let h = cloud.cell_extent[owner];
    if e.x == 0.0 {
        e.x = h.x.max(h.y);
    }
    if e.y == 0.0 && cloud.dim == 2 {
        e.y = h.y.max(h.x);
    }
    e
}

/// Counter-clockwise angle from the +x axis, in `[0, 2 pi)`.
fn ccw_angle(d: Point) -> f64 {
    let a = d.y.atan2(d.x);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

enum Candidate {
    Inside(usize),
    Outside(Ghost),
}

/// Layered neighborhood construction on a quadtree.
pub fn build_neighborhood(
    i: usize,
    cloud: &PointCloud,
    tree: &Quadtree,
    dom: &LevelSetDomain,
    degree: usize,
) -> Result<Neighborhood> {
    if i >= cloud.n_inside || !dom.contains(cloud.points[i]) {
        return Err(Error::PointOutside(i));
    }
    let cond = Conditions {
        cloud,
        eta_min: min_neighbors(degree, 2),
        need_distinct: degree + 1,
        tol: COORD_TOL_REL * tree.bounding_box().width(),
    };
    let owner = cloud.points[i];
    let delta = 1e-3 * tree.min_leaf_half_width();
    let max_passes = degree + 4;

    let mut members = vec![i];
    let mut member_set: HashSet<usize> = HashSet::from([i]);
    let mut ghosts: Vec<Ghost> = Vec::new();
    let mut ghost_keys: HashSet<(u64, u64)> = HashSet::new();
    let mut passes = 0;
    let mut done = false;

    while passes < max_passes {
        passes += 1;
        // Direct neighbors of every current member.
        let mut seen: HashSet<(u64, u64)> = HashSet::new();
        let mut candidates: Vec<(Point, Candidate)> = Vec::new();
        for &m in &members {
            let cell_id = cloud.cells[m].expect("2D points carry their cell");
            let cell = tree.cell(cell_id);
            for dir in Direction::ALL {
                let (center, cand) = match tree.direct_neighbor_with_offset(cell_id, dir, delta) {
                    Some(n) => {
                        let nc = tree.cell(n);
                        match nc.leaf_index {
                            Some(j) => (nc.center, Candidate::Inside(j)),
                            None => (
                                nc.center,
                                Candidate::Outside(Ghost {
                                    center: nc.center,
                                    cell: Some(n),
                                }),
                            ),
                        }
                    }
                    None => {
                        // Mirror cell beyond the root box.
                        let h = cell.half_width.coord(dir.axis());
                        let c = cell.center + dir.unit() * (2.0 * h);
                        (c, Candidate::Outside(Ghost { center: c, cell: None }))
                    }
                };
                let key = (center.x.to_bits(), center.y.to_bits());
                let known = match &cand {
                    Candidate::Inside(j) => member_set.contains(j),
                    Candidate::Outside(_) => ghost_keys.contains(&key),
                };
                if !known && seen.insert(key) {
                    candidates.push((center, cand));
                }
            }
        }
        candidates.sort_by(|(a, _), (b, _)| {
            let (da, db) = (*a - owner, *b - owner);
            ccw_angle(da)
                .total_cmp(&ccw_angle(db))
                .then(da.norm().total_cmp(&db.norm()))
        });

        for (center, cand) in candidates {
            match cand {
                Candidate::Outside(g) => {
                    ghost_keys.insert((center.x.to_bits(), center.y.to_bits()));
                    ghosts.push(g);
                }
                Candidate::Inside(j) => {
                    let add = passes == 1
                        || !cond.size_met(&members)
                        || (0..2).any(|axis| {
                            cond.independence_unmet(&members, axis)
                                && cond.is_new_coordinate(&members, axis, center.coord(axis))
                        });
                    if add {
                        members.push(j);
                        member_set.insert(j);
                    }
                }
            }
        }
        if cond.all_met(&members) {
            done = true;
            break;
        }
    }

    Ok(Neighborhood {
        owner: i,
        extent: extent_of(cloud, &members, i),
        members,
        ghosts,
        passes,
        under_resolved: !done,
    })
}

/// One-dimensional neighborhoods: the point, its left and right neighbors,
/// then the closest remaining points until `max(3, P + 1)` members.
///
/// Interval endpoints adjacent to any member become ghosts.
pub fn build_neighborhood_1d(i: usize, cloud: &PointCloud, degree: usize) -> Result<Neighborhood> {
    let n = cloud.n_inside;
    if i >= n {
        return Err(Error::PointOutside(i));
    }
    let eta = min_neighbors(degree, 1);
    let x = |k: usize| cloud.points[k].x;
    // Inside points are sorted, so the neighborhood is a contiguous index range.
    let (mut lo, mut hi) = (i.saturating_sub(1), i);
    if hi + 1 < n {
        hi += 1;
    }
    while hi - lo + 1 < eta && (lo > 0 || hi + 1 < n) {
        let left = (lo > 0).then(|| x(i) - x(lo - 1));
        let right = (hi + 1 < n).then(|| x(hi + 1) - x(i));
        match (left, right) {
            (Some(l), Some(r)) if l <= r => lo -= 1,
            (Some(_), None) => lo -= 1,
            _ => hi += 1,
        }
    }
    let mut members = vec![i];
    members.extend((lo..=hi).filter(|&k| k != i));
    let mut ghosts = Vec::new();
    if lo == 0 {
        ghosts.push(Ghost {
            center: cloud.points[n],
            cell: None,
        });
    }
    if hi == n - 1 {
        ghosts.push(Ghost {
            center: cloud.points[n + 1],
            cell: None,
        });
    }
    let under_resolved = members.len() < eta;
    Ok(Neighborhood {
        owner: i,
        extent: extent_of(cloud, &members, i),
        members,
        ghosts,
        passes: 1,
        under_resolved,
    })
}

/// True when the undirected neighbor graph on `n` points is connected.
pub fn connectivity_check(all: &[Neighborhood], n: usize) -> bool {
    if n <= 1 {
        return true;
    }
    let mut uf = UnionFind::<usize>::new(n);
    for nb in all {
        for &j in &nb.members {
            if j < n {
                uf.union(nb.owner, j);
            }
        }
    }
    let root = uf.find(0);
    (1..n).all(|k| uf.find(k) == root)
}

/// Debug dump: `i, eta, ghost_count, under_resolved`.
pub fn write_neighborhoods_csv<W: Write>(all: &[Neighborhood], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "eta", "ghost_count", "under_resolved"])?;
    for nb in all {
        w.write_record([
            nb.owner.to_string(),
            nb.eta().to_string(),
            nb.ghosts.len().to_string(),
            u8::from(nb.under_resolved).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::grid::{build_1d_cloud, build_quadtree, GridConfig, GridMode};

    fn uniform(dom: &LevelSetDomain, depth: u32) -> (Quadtree, PointCloud) {
        let cfg = GridConfig {
            base_depth: depth,
            ..GridConfig::default()
        };
        build_quadtree(dom, &cfg).unwrap()
    }

    fn index_at(cloud: &PointCloud, p: Point) -> usize {
        cloud.points.iter().position(|&q| (q - p).norm() < 1e-12).unwrap()
    }

    fn check_conditions(nb: &Neighborhood, cloud: &PointCloud, degree: usize) {
        assert_eq!(nb.members[0], nb.owner);
        let set: HashSet<_> = nb.members.iter().collect();
        assert_eq!(set.len(), nb.members.len());
        assert!(nb.eta() >= min_neighbors(degree, cloud.dim));
        for axis in 0..cloud.dim {
            let mut c: Vec<f64> = nb.members.iter().map(|&m| cloud.points[m].coord(axis)).collect();
            assert!(distinct_count(&mut c, 1e-12) > degree);
        }
        let o = cloud.points[nb.owner];
        let ex = nb
            .members
            .iter()
            .map(|&m| (cloud.points[m].x - o.x).abs())
            .fold(0.0, f64::max);
        assert_eq!(nb.extent.x, ex);
        if cloud.dim == 2 {
            let ey = nb
                .members
                .iter()
                .map(|&m| (cloud.points[m].y - o.y).abs())
                .fold(0.0, f64::max);
            assert_eq!(nb.extent.y, ey);
        }
    }

    #[test]
    fn min_neighbor_counts() {
        assert_eq!(min_neighbors(4, 2), 5);
        assert_eq!(min_neighbors(2, 1), 3);
        assert_eq!(min_neighbors(5, 1), 6);
        assert_eq!(min_neighbors(7, 2), 10);
        for p in 1..10 {
            let q = (p + 1) * (p + 2) / 2;
            let eta = min_neighbors(p, 2);
            assert!(q <= 4 * eta - 3);
            assert!(q > 4 * (eta - 1) - 3);
        }
    }

    #[test]
    fn interior_point_first_layer_suffices_for_p2() {
        // 8x8 uniform lattice; pick an interior point far from the box.
        let dom = LevelSetDomain::square();
        let (tree, cloud) = uniform(&dom, 3);
        let i = index_at(&cloud, Point::new(0.125, 0.125));
        let nb = build_neighborhood(i, &cloud, &tree, &dom, 2).unwrap();
        assert_eq!(nb.eta(), 5);
        assert_eq!(nb.passes, 1);
        assert!(!nb.under_resolved && nb.ghosts.is_empty());
        let mut pts: Vec<Point> = nb.members[1..].iter().map(|&m| cloud.points[m]).collect();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        assert_eq!(
            pts,
            vec![
                Point::new(-0.125, 0.125),
                Point::new(0.125, -0.125),
                Point::new(0.125, 0.375),
                Point::new(0.375, 0.125)
            ]
        );
        check_conditions(&nb, &cloud, 2);
    }

    #[test]
    fn first_layer_is_counter_clockwise_from_the_right() {
        let dom = LevelSetDomain::square();
        let (tree, cloud) = uniform(&dom, 3);
        let i = index_at(&cloud, Point::new(0.125, 0.125));
        let nb = build_neighborhood(i, &cloud, &tree, &dom, 2).unwrap();
        let dirs: Vec<Point> = nb.members[1..]
            .iter()
            .map(|&m| cloud.points[m] - cloud.points[i])
            .collect();
        assert_eq!(
            dirs,
            vec![
                Point::new(0.25, 0.0),
                Point::new(0.0, 0.25),
                Point::new(-0.25, 0.0),
                Point::new(0.0, -0.25)
            ]
        );
    }

    #[test]
    fn all_conditions_hold_on_uniform_and_random_grids() {
        for dom in [LevelSetDomain::square(), LevelSetDomain::octofoil()] {
            for mode in [GridMode::Uniform, GridMode::Random] {
                let cfg = GridConfig {
                    mode,
                    base_depth: 4,
                    split_probability: 0.3,
                    max_extra_depth: 2,
                    ..GridConfig::default()
                };
                let (tree, cloud) = build_quadtree(&dom, &cfg).unwrap();
                for degree in 2..=5 {
                    let all: Vec<_> = (0..cloud.len())
                        .map(|i| build_neighborhood(i, &cloud, &tree, &dom, degree).unwrap())
                        .collect();
                    for nb in all.iter().filter(|nb| !nb.under_resolved) {
                        check_conditions(nb, &cloud, degree);
                    }
                    for nb in &all {
                        for g in &nb.ghosts {
                            assert!(dom.value(g.center) >= 0.0);
                        }
                        for &m in &nb.members {
                            assert!(dom.contains(cloud.points[m]));
                        }
                    }
                    assert!(connectivity_check(&all, cloud.len()));
                }
            }
        }
    }

    #[test]
    fn interface_cells_get_ghosts() {
        let dom = LevelSetDomain::octofoil();
        let (tree, cloud) = uniform(&dom, 4);
        let mut with_ghosts = 0;
        for i in 0..cloud.len() {
            let nb = build_neighborhood(i, &cloud, &tree, &dom, 4).unwrap();
            for g in &nb.ghosts {
                assert!(dom.value(g.center) >= 0.0);
                if let Some(c) = g.cell {
                    assert!(tree.cell(c).leaf_index.is_none());
                    assert!(!nb.members.iter().any(|&m| cloud.cells[m] == Some(c)));
                }
            }
            with_ghosts += usize::from(!nb.ghosts.is_empty());
        }
        assert!(with_ghosts > 0);
    }

    #[test]
    fn box_edge_cells_get_virtual_ghosts() {
        let dom = LevelSetDomain::square();
        let (tree, cloud) = uniform(&dom, 3);
        let i = index_at(&cloud, Point::new(0.875, 0.125));
        let nb = build_neighborhood(i, &cloud, &tree, &dom, 2).unwrap();
        assert!(nb.ghosts.contains(&Ghost {
            center: Point::new(1.125, 0.125),
            cell: None
        }));
    }

    #[test]
    fn coarse_grid_with_high_degree_is_under_resolved() {
        // 3x3 cells: only 3 distinct coordinates per direction exist.
        let bbox = BoundingBox::new(Point::new(0.0, 0.0), Point::new(4.0, 4.0));
        let inner = BoundingBox::new(Point::new(0.0, 0.0), Point::new(3.0, 3.0));
        let dom = LevelSetDomain::rectangle_in(inner, bbox);
        let (tree, cloud) = uniform(&dom, 2);
        assert_eq!(cloud.len(), 9);
        let nb = build_neighborhood(0, &cloud, &tree, &dom, 5).unwrap();
        assert!(nb.under_resolved);
        assert_eq!(nb.passes, 9);
        // size is met at 6; no later candidate brings a new coordinate
        assert_eq!(nb.eta(), 6);
    }

    #[test]
    fn outside_point_is_rejected() {
        let dom = LevelSetDomain::octofoil();
        let (tree, cloud) = uniform(&dom, 3);
        assert!(matches!(
            build_neighborhood(cloud.len(), &cloud, &tree, &dom, 2),
            Err(Error::PointOutside(_))
        ));
    }

    #[test]
    fn connectivity_counterexamples() {
        let nb = |owner: usize, members: Vec<usize>| Neighborhood {
            owner,
            members,
            ghosts: vec![],
            extent: Point::new(1.0, 1.0),
            passes: 1,
            under_resolved: false,
        };
        assert!(connectivity_check(&[nb(0, vec![0])], 1));
        let split = vec![
            nb(0, vec![0, 1]),
            nb(1, vec![1, 0]),
            nb(2, vec![2, 3]),
            nb(3, vec![3, 2]),
        ];
        assert!(!connectivity_check(&split, 4));
        // one directed link suffices
        let joined = vec![
            nb(0, vec![0, 1]),
            nb(1, vec![1, 0]),
            nb(2, vec![2, 3, 1]),
            nb(3, vec![3, 2]),
        ];
        assert!(connectivity_check(&joined, 4));
    }

    #[test]
    fn one_dimensional_neighborhoods() {
        let cloud = build_1d_cloud(10, 1, 1, 0.0, 1.0).unwrap();
        let n = cloud.len();
        for degree in 2..=4 {
            let all: Vec<_> = (0..n)
                .map(|i| build_neighborhood_1d(i, &cloud, degree).unwrap())
                .collect();
            for nb in &all {
                assert_eq!(nb.eta(), (degree + 1).max(3));
                check_conditions(nb, &cloud, degree);
            }
            assert_eq!(all[0].ghosts[0].center, Point::on_line(0.0));
            assert_eq!(all[n - 1].ghosts.last().unwrap().center, Point::on_line(1.0));
            assert!(connectivity_check(&all, n));
        }
    }
}
