//! Point clouds: one-dimensional random points with midpoint splitting, and
//! cell-centered non-graded quadtrees.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, LevelSetDomain, Point};

pub type CellId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::PlusX, Direction::PlusY, Direction::MinusX, Direction::MinusY];

    pub fn unit(self) -> Point {
        match self {
            Direction::PlusX => Point::new(1.0, 0.0),
            Direction::MinusX => Point::new(-1.0, 0.0),
            Direction::PlusY => Point::new(0.0, 1.0),
            Direction::MinusY => Point::new(0.0, -1.0),
        }
    }

    pub fn axis(self) -> usize {
        match self {
            Direction::PlusX | Direction::MinusX => 0,
            Direction::PlusY | Direction::MinusY => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadtreeCell {
    pub center: Point,
    pub half_width: Point,
    pub depth: u32,
    /// Children ordered (-,-), (+,-), (-,+), (+,+).
    pub children: Option<[CellId; 4]>,
    /// Index into the point cloud, for leaves whose center is inside the domain.
    pub leaf_index: Option<usize>,
    /// Root is 1; each level appends the two-bit child index.
    path: u64,
}

impl QuadtreeCell {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn contains(&self, p: Point) -> bool {
        (p.x - self.center.x).abs() <= self.half_width.x && (p.y - self.center.y).abs() <= self.half_width.y
    }

    pub fn corners(&self) -> [Point; 4] {
        let (c, h) = (self.center, self.half_width);
        [
            Point::new(c.x - h.x, c.y - h.y),
            Point::new(c.x + h.x, c.y - h.y),
            Point::new(c.x - h.x, c.y + h.y),
            Point::new(c.x + h.x, c.y + h.y),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct Quadtree {
    cells: Vec<QuadtreeCell>,
    bbox: BoundingBox,
    min_half: f64,
}

impl Quadtree {
    pub fn new(bbox: BoundingBox) -> Self {
        let root = QuadtreeCell {
            center: bbox.center(),
            half_width: bbox.half_widths(),
            depth: 0,
            children: None,
            leaf_index: None,
            path: 1,
        };
        let h = bbox.half_widths();
        Self {
            cells: vec![root],
            bbox,
            min_half: h.x.min(h.y),
        }
    }

    pub const ROOT: CellId = 0;

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    pub fn cell(&self, id: CellId) -> &QuadtreeCell {
        &self.cells[id]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Splits a leaf into four children and returns their ids.
    pub fn split(&mut self, id: CellId) -> [CellId; 4] {
        assert!(self.cells[id].is_leaf(), "cell {id} already split");
        let parent = self.cells[id].clone();
        let h = parent.half_width * 0.5;
        let first = self.cells.len();
        for k in 0..4u64 {
            let sx = if k & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if k & 2 == 0 { -1.0 } else { 1.0 };
            self.cells.push(QuadtreeCell {
                center: Point::new(parent.center.x + sx * h.x, parent.center.y + sy * h.y),
                half_width: h,
                depth: parent.depth + 1,
                children: None,
                leaf_index: None,
                path: (parent.path << 2) | k,
            });
        }
        self.min_half = self.min_half.min(h.x).min(h.y);
        let children = [first, first + 1, first + 2, first + 3];
        self.cells[id].children = Some(children);
        children
    }

    /// Leaves in depth-first order (children visited in storage order).
    pub fn leaves(&self) -> Vec<CellId> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            match self.cells[id].children {
                Some(ch) => stack.extend(ch.iter().rev()),
                None => out.push(id),
            }
        }
        out
    }

    /// The leaf containing `p`, or `None` outside the root cell. Points on a
    /// shared face go to the upper/right cell.
    pub fn locate(&self, p: Point) -> Option<CellId> {
        if !self.bbox.contains(p) {
            return None;
        }
        let mut id = Self::ROOT;
        while let Some(ch) = self.cells[id].children {
            let c = self.cells[id].center;
            let k = usize::from(p.x >= c.x) | (usize::from(p.y >= c.y) << 1);
            id = ch[k];
        }
        Some(id)
    }

    /// Cells only shrink when split, so this is also the minimum over leaves.
    pub fn min_leaf_half_width(&self) -> f64 {
        self.min_half
    }

    /// The leaf across the `dir` face of `cell`, on the axis through its center.
    pub fn direct_neighbor(&self, cell: CellId, dir: Direction) -> Option<CellId> {
        let delta = 1e-3 * self.min_leaf_half_width();
        self.direct_neighbor_with_offset(cell, dir, delta)
    }

    pub(crate) fn direct_neighbor_with_offset(&self, cell: CellId, dir: Direction, delta: f64) -> Option<CellId> {
        let c = &self.cells[cell];
        debug_assert!(c.is_leaf());
        let half = c.half_width.coord(dir.axis());
        self.locate(c.center + dir.unit() * (half + delta))
    }

    fn leaf_index_reset(&mut self) {
        for c in &mut self.cells {
            c.leaf_index = None;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Uniform,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub mode: GridMode,
    pub base_depth: u32,
    pub random_seed: u64,
    pub split_probability: f64,
    pub max_extra_depth: u32,
    pub splits: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mode: GridMode::Uniform,
            base_depth: 4,
            random_seed: 7,
            split_probability: 0.5,
            max_extra_depth: 3,
            splits: 0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_depth < 1 {
            return Err(Error::InvalidArgument("base_depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.split_probability) {
            return Err(Error::InvalidArgument(format!(
                "split_probability {} outside [0, 1]",
                self.split_probability
            )));
        }
        Ok(())
    }
}

/// The discretization points `x_i`.
///
/// Inside points occupy indices `0..n_inside`. One-dimensional clouds append
/// the interval endpoints after them as boundary sites.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<Point>,
    /// Leaf half-widths in 2D; in 1D, half the gaps to the left and right
    /// neighbors stored as `(left, right)`.
    pub cell_extent: Vec<Point>,
    pub inside: Vec<bool>,
    pub n_inside: usize,
    /// Owning quadtree leaf of each point (2D only).
    pub cells: Vec<Option<CellId>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.n_inside
    }

    pub fn is_empty(&self) -> bool {
        self.n_inside == 0
    }
}

/// Uniform or randomly refined quadtree, followed by `cfg.splits` global
/// refinements. Leaves with centers strictly inside `dom` become points.
pub fn build_quadtree(dom: &LevelSetDomain, cfg: &GridConfig) -> Result<(Quadtree, PointCloud)> {
    cfg.validate()?;
    let mut tree = Quadtree::new(dom.bounding_box());
    refine_to_depth(&mut tree, Quadtree::ROOT, cfg.base_depth);
    if cfg.mode == GridMode::Random && cfg.split_probability > 0.0 {
        let max_depth = cfg.base_depth + cfg.max_extra_depth;
        for leaf in tree.leaves() {
            refine_randomly(&mut tree, leaf, max_depth, cfg);
        }
    }
    for _ in 0..cfg.splits {
        for leaf in tree.leaves() {
            tree.split(leaf);
        }
    }
    let cloud = index_inside_leaves(&mut tree, dom);
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("no leaf center lies inside the domain".into()));
    }
    Ok((tree, cloud))
}

fn refine_to_depth(tree: &mut Quadtree, id: CellId, depth: u32) {
    if tree.cell(id).depth >= depth {
        return;
    }
    for child in tree.split(id) {
        refine_to_depth(tree, child, depth);
    }
}

fn refine_randomly(tree: &mut Quadtree, id: CellId, max_depth: u32, cfg: &GridConfig) {
    let cell = tree.cell(id);
    if cell.depth >= max_depth {
        return;
    }
    // Keyed by (seed, path): independent of traversal order.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_seed);
    rng.set_stream(cell.path);
    if rng.gen::<f64>() < cfg.split_probability {
        for child in tree.split(id) {
            refine_randomly(tree, child, max_depth, cfg);
        }
    }
}

/// Assigns point indices to inside leaves (depth-first order) and builds the cloud.
pub fn index_inside_leaves(tree: &mut Quadtree, dom: &LevelSetDomain) -> PointCloud {
    tree.leaf_index_reset();
    let mut cloud = PointCloud {
        dim: 2,
        points: Vec::new(),
        cell_extent: Vec::new(),
        inside: Vec::new(),
        n_inside: 0,
        cells: Vec::new(),
    };
    for leaf in tree.leaves() {
        let cell = &mut tree.cells[leaf];
        if dom.value(cell.center) < 0.0 {
            cell.leaf_index = Some(cloud.points.len());
            cloud.points.push(cell.center);
            cloud.cell_extent.push(cell.half_width);
            cloud.inside.push(true);
            cloud.cells.push(Some(leaf));
        }
    }
    cloud.n_inside = cloud.points.len();
    cloud
}

/// `n0` random points in `(lo, hi)`, recursively split `splits` times by
/// inserting the midpoint of every adjacent pair (endpoints included).
pub fn build_1d_cloud(n0: usize, seed: u64, splits: u32, lo: f64, hi: f64) -> Result<PointCloud> {
    if n0 < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 initial points, got {n0}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n0 + 2);
    xs.push(lo);
    xs.push(hi);
    while xs.len() < n0 + 2 {
        let x: f64 = rng.gen_range(lo..hi);
        if x > lo && !xs.contains(&x) {
            xs.push(x);
        }
    }
    xs.sort_by(f64::total_cmp);
    for _ in 0..splits {
        let mut refined = Vec::with_capacity(2 * xs.len() - 1);
        for w in xs.windows(2) {
            refined.push(w[0]);
            refined.push(0.5 * (w[0] + w[1]));
        }
        refined.push(*xs.last().unwrap());
        xs = refined;
    }
    let interior = &xs[1..xs.len() - 1];
    let n = interior.len();
    let mut points: Vec<Point> = interior.iter().map(|&x| Point::on_line(x)).collect();
    let mut cell_extent: Vec<Point> = (1..xs.len() - 1)
        .map(|k| Point::new(0.5 * (xs[k] - xs[k - 1]), 0.5 * (xs[k + 1] - xs[k])))
        .collect();
    points.push(Point::on_line(lo));
    points.push(Point::on_line(hi));
    cell_extent.push(Point::new(0.0, 0.5 * (xs[1] - xs[0])));
    cell_extent.push(Point::new(0.5 * (xs[xs.len() - 1] - xs[xs.len() - 2]), 0.0));
    let mut inside = vec![true; n];
    inside.extend([false, false]);
    Ok(PointCloud {
        dim: 1,
        points,
        cell_extent,
        inside,
        n_inside: n,
        cells: vec![None; n + 2],
    })
}

/// Writes leaves as CSV: `cell_id, depth, cx, cy, hx, hy, inside`.
pub fn write_grid_csv<W: Write>(tree: &Quadtree, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "depth", "cx", "cy", "hx", "hy", "inside"])?;
    for id in tree.leaves() {
        let c = tree.cell(id);
        w.write_record([
            id.to_string(),
            c.depth.to_string(),
            c.center.x.to_string(),
            c.center.y.to_string(),
            c.half_width.x.to_string(),
            c.half_width.y.to_string(),
            u8::from(c.leaf_index.is_some()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
