//! Implicit geometry.
//!
//! Domains are described by a level-set function that is negative inside,
//! positive outside and zero on the boundary. Boundary points are found by
//! bisection along a segment that crosses the zero contour, and outward
//! normals are the normalized level-set gradient.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// A point (or vector) in the plane. One-dimensional problems keep `y = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub const fn on_line(x: f64) -> Self {
        Self { x, y: 0.0 }
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// The default root cell `[-1, 1] x [-1, 1]`.
    pub fn unit() -> Self {
        Self::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0))
    }

    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }

    pub fn half_widths(&self) -> Point {
        (self.max - self.min) * 0.5
    }

    pub fn width(&self) -> f64 {
        (self.max.x - self.min.x).max(self.max.y - self.min.y)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Square,
    Octofoil,
    Custom,
}

type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `max_d (|x_d - c_d| - h_d)` over the first `dim` axes.
    Square {
        center: Point,
        half: Point,
        dim: usize,
    },
    Octofoil,
    Custom {
        value: ScalarField,
        gradient: VectorField,
    },
}

/// Computational domain given by a level-set function.
#[derive(Clone)]
pub struct LevelSetDomain {
    kind: DomainKind,
    shape: Shape,
    bbox: BoundingBox,
}

impl fmt::Debug for LevelSetDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetDomain")
            .field("kind", &self.kind)
            .field("bbox", &self.bbox)
            .finish()
    }
}

/// Default bisection tolerance, relative to the segment length.
pub const BISECTION_TOL: f64 = 1e-12;
/// Bisection iteration cap.
pub const BISECTION_MAX_ITERS: usize = 200;

impl LevelSetDomain {
    /// The square `[-1, 1]^2`, coinciding with the root cell.
    pub fn square() -> Self {
        Self::rectangle(BoundingBox::unit())
    }

    /// A rectangle that is also the root cell of the tree built over it.
    pub fn rectangle(bbox: BoundingBox) -> Self {
        Self {
            kind: DomainKind::Square,
            shape: Shape::Square {
                center: bbox.center(),
                half: bbox.half_widths(),
                dim: 2,
            },
            bbox,
        }
    }

    /// A rectangle strictly inside a larger root cell.
    pub fn rectangle_in(rect: BoundingBox, bbox: BoundingBox) -> Self {
        Self {
            kind: DomainKind::Square,
            shape: Shape::Square {
                center: rect.center(),
                half: rect.half_widths(),
                dim: 2,
            },
            bbox,
        }
    }

    /// The interval `[lo, hi]`, for one-dimensional problems.
    pub fn interval(lo: f64, hi: f64) -> Self {
        let bbox = BoundingBox::new(Point::new(lo, -0.5), Point::new(hi, 0.5));
        Self {
            kind: DomainKind::Square,
            shape: Shape::Square {
                center: Point::on_line(0.5 * (lo + hi)),
                half: Point::new(0.5 * (hi - lo), 0.5),
                dim: 1,
            },
            bbox,
        }
    }

    /// Eight-lobed flower centered at the origin, inside `[-1, 1]^2`.
    pub fn octofoil() -> Self {
        Self {
            kind: DomainKind::Octofoil,
            shape: Shape::Octofoil,
            bbox: BoundingBox::unit(),
        }
    }

    pub fn custom<V, G>(value: V, gradient: G, bbox: BoundingBox) -> Self
    where
        V: Fn(Point) -> f64 + Send + Sync + 'static,
        G: Fn(Point) -> Point + Send + Sync + 'static,
    {
        Self {
            kind: DomainKind::Custom,
            shape: Shape::Custom {
                value: Arc::new(value),
                gradient: Arc::new(gradient),
            },
            bbox,
        }
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    pub fn value(&self, p: Point) -> f64 {
        match &self.shape {
            Shape::Square { center, half, dim } => {
                let dx = (p.x - center.x).abs() - half.x;
                if *dim == 1 {
                    dx
                } else {
                    dx.max((p.y - center.y).abs() - half.y)
                }
            }
            Shape::Octofoil => octofoil_value(p),
            Shape::Custom { value, .. } => value(p),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.value(p) < 0.0
    }

    pub fn gradient(&self, p: Point) -> Result<Point> {
        match &self.shape {
            Shape::Square { center, half, dim } => {
                let dx = (p.x - center.x).abs() - half.x;
                let dy = (p.y - center.y).abs() - half.y;
                // ties go to x
                if *dim == 1 || dx >= dy {
                    Ok(Point::new(sign(p.x - center.x), 0.0))
                } else {
                    Ok(Point::new(0.0, sign(p.y - center.y)))
                }
            }
            Shape::Octofoil => octofoil_gradient(p),
            Shape::Custom { gradient, .. } => Ok(gradient(p)),
        }
    }

    /// Finds a zero of the level set on the segment `[a, b]` by bisection.
    ///
    /// `tol` is relative to the segment length. An endpoint lying exactly on
    /// the boundary is returned as is.
    pub fn locate_boundary_point(&self, a: Point, b: Point, tol: f64) -> Result<Point> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("bisection tolerance {tol}")));
        }
        let fa = self.value(a);
        let fb = self.value(b);
        if fa == 0.0 {
            return Ok(a);
        }
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
            return Err(Error::NoSignChange);
        }
        let dir = b - a;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECTION_MAX_ITERS {
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let fm = self.value(a + dir * mid);
            if fm == 0.0 {
                return Ok(a + dir * mid);
            }
            if fm.signum() == fa.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(a + dir * (0.5 * (lo + hi)))
    }

    pub fn outward_normal(&self, p: Point) -> Result<Point> {
        let g = self.gradient(p)?;
        let n = g.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateNormal);
        }
        Ok(g * (1.0 / n))
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

const OCTOFOIL_RADIUS: f64 = 4.0 / 5.0;
const OCTOFOIL_AMPLITUDE: f64 = 4.0 / 25.0;
const OCTOFOIL_LOBES: f64 = 8.0;

/// Full-plane polar angle; zero at the origin.
fn polar_angle(p: Point) -> f64 {
    if p.x == 0.0 && p.y == 0.0 {
        0.0
    } else {
        p.y.atan2(p.x)
    }
}

pub fn octofoil_value(p: Point) -> f64 {
    let theta = polar_angle(p);
    let radius = OCTOFOIL_RADIUS + OCTOFOIL_AMPLITUDE * (OCTOFOIL_LOBES * theta).sin();
    p.norm() - radius
}

/// Closed-form gradient of [`octofoil_value`].
pub fn octofoil_gradient(p: Point) -> Result<Point> {
    let r2 = p.x * p.x + p.y * p.y;
    if r2 == 0.0 {
        return Err(Error::SingularGradient);
    }
    let r = r2.sqrt();
    let theta = polar_angle(p);
    // d(radius)/d(theta)
    let dr = OCTOFOIL_AMPLITUDE * OCTOFOIL_LOBES * (OCTOFOIL_LOBES * theta).cos();
    // d(theta)/dx = -y / r^2, d(theta)/dy = x / r^2
    Ok(Point::new(p.x / r + dr * p.y / r2, p.y / r - dr * p.x / r2))
}
