//! Centered, rescaled monomial bases.
//!
//! Around `x_i` with rescaling extents `s = (s_x, s_y)` the basis functions are
//! `((x - x_i) / s_x)^px * ((y - y_i) / s_y)^py` for `px + py <= P`. In one
//! dimension only `py = 0` is used.
//!
//! Basis indices are zero-based and ordered by total degree, then by `px`
//! descending: `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.

use crate::geometry::Point;

/// Number of basis functions of degree `<= degree` in dimension `dim`.
pub fn basis_size(degree: usize, dim: usize) -> usize {
    match dim {
        1 => degree + 1,
        2 => (degree + 1) * (degree + 2) / 2,
        _ => panic!("unsupported dimension {dim}"),
    }
}

pub fn exponents(degree: usize, dim: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(basis_size(degree, dim));
    for total in 0..=degree as u32 {
        if dim == 1 {
            out.push((total, 0));
        } else {
            for py in 0..=total {
                out.push((total - py, py));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalBasis {
    center: Point,
    scale: Point,
    degree: usize,
    dim: usize,
    exponents: Vec<(u32, u32)>,
}

/// All basis values and derivatives at one point.
#[derive(Clone, Debug, Default)]
pub struct BasisValues {
    pub value: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub laplacian: Vec<f64>,
}

impl LocalBasis {
    /// # Panics
    ///
    /// If a used scale component is not strictly positive.
    pub fn new(center: Point, scale: Point, degree: usize, dim: usize) -> Self {
        assert!(scale.x > 0.0, "basis scale must be positive, got {scale}");
        let scale = if dim == 1 {
            Point::new(scale.x, 1.0)
        } else {
            assert!(scale.y > 0.0, "basis scale must be positive, got {scale}");
            scale
        };
        Self {
            center,
            scale,
            degree,
            dim,
            exponents: exponents(degree, dim),
        }
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn scale(&self) -> Point {
        self.scale
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.exponents
    }

    fn local(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.center.x) / self.scale.x,
            (p.y - self.center.y) / self.scale.y,
        )
    }

    pub fn eval(&self, q: usize, p: Point) -> f64 {
        let (px, py) = self.exponents[q];
        let (u, v) = self.local(p);
        u.powi(px as i32) * v.powi(py as i32)
    }

    pub fn eval_grad(&self, q: usize, p: Point) -> Point {
        let (px, py) = self.exponents[q];
        let (u, v) = self.local(p);
        let gx = if px == 0 {
            0.0
        } else {
            px as f64 * u.powi(px as i32 - 1) * v.powi(py as i32) / self.scale.x
        };
        let gy = if py == 0 {
            0.0
        } else {
            py as f64 * u.powi(px as i32) * v.powi(py as i32 - 1) / self.scale.y
        };
        Point::new(gx, gy)
    }

    pub fn eval_laplacian(&self, q: usize, p: Point) -> f64 {
        let (px, py) = self.exponents[q];
        let (u, v) = self.local(p);
        let mut lap = 0.0;
        if px >= 2 {
            lap += (px * (px - 1)) as f64 * u.powi(px as i32 - 2) * v.powi(py as i32) / (self.scale.x * self.scale.x);
        }
        if py >= 2 {
            lap += (py * (py - 1)) as f64 * u.powi(px as i32) * v.powi(py as i32 - 2) / (self.scale.y * self.scale.y);
        }
        lap
    }

    /// Value, gradient and Laplacian of every basis function at `p`.
    pub fn eval_all(&self, p: Point, out: &mut BasisValues) {
        let n = self.len();
        for v in [&mut out.value, &mut out.dx, &mut out.dy, &mut out.laplacian] {
            v.clear();
            v.resize(n, 0.0);
        }
        let (u, v) = self.local(p);
        let deg = self.degree;
        let mut pu = vec![1.0; deg + 1];
        let mut pv = vec![1.0; deg + 1];
        for k in 1..=deg {
            pu[k] = pu[k - 1] * u;
            pv[k] = pv[k - 1] * v;
        }
        let (sx, sy) = (self.scale.x, self.scale.y);
        for (q, &(px, py)) in self.exponents.iter().enumerate() {
            let (px, py) = (px as usize, py as usize);
            out.value[q] = pu[px] * pv[py];
            if px >= 1 {
                out.dx[q] = px as f64 * pu[px - 1] * pv[py] / sx;
            }
            if py >= 1 {
                out.dy[q] = py as f64 * pu[px] * pv[py - 1] / sy;
            }
            let mut lap = 0.0;
            if px >= 2 {
                lap += (px * (px - 1)) as f64 * pu[px - 2] * pv[py] / (sx * sx);
            }
            if py >= 2 {
                lap += (py * (py - 1)) as f64 * pu[px] * pv[py - 2] / (sy * sy);
            }
            out.laplacian[q] = lap;
        }
    }

    /// Evaluates the expansion `sum_q coeffs[q] * phi_q(p)`.
    pub fn expand(&self, coeffs: &[f64], p: Point) -> f64 {
        debug_assert_eq!(coeffs.len(), self.len());
        let (u, v) = self.local(p);
        self.exponents
            .iter()
            .zip(coeffs)
            .map(|(&(px, py), c)| c * u.powi(px as i32) * v.powi(py as i32))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis(p: usize) -> LocalBasis {
        LocalBasis::new(Point::new(0.3, -0.2), Point::new(0.5, 1.0), p, 2)
    }

    #[test]
    fn exponent_count_and_order() {
        for p in 0..=8 {
            assert_eq!(exponents(p, 2).len(), (p + 1) * (p + 2) / 2);
            assert_eq!(exponents(p, 1).len(), p + 1);
        }
        assert_eq!(exponents(2, 2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn constant_and_center_values() {
        let b = basis(3);
        assert_eq!(b.eval(0, Point::new(5.0, 7.0)), 1.0);
        for q in 1..b.len() {
            assert_eq!(b.eval(q, b.center()), 0.0);
        }
        let q = b.exponents().iter().position(|&e| e == (2, 0)).unwrap();
        let p = b.center() + Point::new(0.25, 0.7);
        assert!((b.eval(q, p) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_rule_values() {
        let b = basis(3);
        let q = b.exponents().iter().position(|&e| e == (2, 0)).unwrap();
        let d = 0.1;
        let g = b.eval_grad(q, b.center() + Point::new(d, 0.0));
        assert!((g.x - 2.0 * d / 0.25).abs() < 1e-14 && g.y == 0.0);
        assert_eq!(b.eval_grad(0, Point::new(1.0, 1.0)), Point::new(0.0, 0.0));
        assert!((b.eval_laplacian(q, Point::new(-3.0, 2.0)) - 2.0 / 0.25).abs() < 1e-14);
        for q in 0..3 {
            assert_eq!(b.eval_laplacian(q, Point::new(0.9, 0.4)), 0.0);
        }
    }

    #[test]
    fn eval_all_agrees_with_single_evaluations() {
        let b = basis(5);
        let p = Point::new(0.55, 0.1);
        let mut all = BasisValues::default();
        b.eval_all(p, &mut all);
        for q in 0..b.len() {
            let scale = 1.0 + all.value[q].abs();
            assert!((all.value[q] - b.eval(q, p)).abs() < 1e-14 * scale);
            let g = b.eval_grad(q, p);
            assert!((all.dx[q] - g.x).abs() < 1e-13 * (1.0 + g.x.abs()));
            assert!((all.dy[q] - g.y).abs() < 1e-13 * (1.0 + g.y.abs()));
            let l = b.eval_laplacian(q, p);
            assert!((all.laplacian[q] - l).abs() < 1e-12 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn values_bounded_in_scaled_box() {
        let b = basis(6);
        for k in 0..=10 {
            for l in 0..=10 {
                let p = b.center()
                    + Point::new(
                        b.scale().x * (-1.0 + 0.2 * k as f64),
                        b.scale().y * (-1.0 + 0.2 * l as f64),
                    );
                for q in 0..b.len() {
                    assert!(b.eval(q, p).abs() <= 1.0 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn reproduces_every_polynomial_of_degree_p() {
        use nalgebra::{DMatrix, DVector};
        for p in 1..=5 {
            let b = basis(p);
            let n = b.len();
            // g(x, y) = sum over monomials (x^a y^b) with deterministic coefficients
            let g = |pt: Point| {
                let mut s = 0.0;
                for (k, (a, c)) in exponents(p, 2).into_iter().enumerate() {
                    s += (1.0 + k as f64 * 0.37).sin() * pt.x.powi(a as i32) * pt.y.powi(c as i32);
                }
                s
            };
            let m = n + 5;
            let pts: Vec<Point> = (0..m)
                .map(|k| {
                    let t = k as f64 * 0.7;
                    b.center() + Point::new(0.4 * t.sin(), 0.9 * (1.3 * t).cos())
                })
                .collect();
            let a = DMatrix::from_fn(m, n, |r, c| b.eval(c, pts[r]));
            let rhs = DVector::from_fn(m, |r, _| g(pts[r]));
            let coef = a.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
            let res = (a * &coef - &rhs).amax();
            assert!(res < 1e-10, "P={p}: residual {res}");
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(q in 0usize..21, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let b = basis(5);
            let p = Point::new(x, y);
            let h = 1e-6;
            let fx = (b.eval(q, Point::new(x + h, y)) - b.eval(q, Point::new(x - h, y))) / (2.0 * h);
            let fy = (b.eval(q, Point::new(x, y + h)) - b.eval(q, Point::new(x, y - h))) / (2.0 * h);
            let g = b.eval_grad(q, p);
            let scale = 1.0 + g.norm();
            prop_assert!((g.x - fx).abs() <= 1e-7 * scale);
            prop_assert!((g.y - fy).abs() <= 1e-7 * scale);
        }

        #[test]
        fn laplacian_matches_five_point_stencil(q in 0usize..21, x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let b = basis(5);
            let h = 1e-4;
            let c = b.eval(q, Point::new(x, y));
            let fd = (b.eval(q, Point::new(x + h, y)) + b.eval(q, Point::new(x - h, y))
                + b.eval(q, Point::new(x, y + h)) + b.eval(q, Point::new(x, y - h)) - 4.0 * c) / (h * h);
            let l = b.eval_laplacian(q, Point::new(x, y));
            prop_assert!((l - fd).abs() <= 1e-5 * (1.0 + l.abs()), "{} vs {}", l, fd);
        }
    }

    #[test]
    fn one_dimensional_basis() {
        let b = LocalBasis::new(Point::on_line(0.5), Point::on_line(0.25), 3, 1);
        assert_eq!(b.len(), 4);
        let p = Point::on_line(0.75);
        assert_eq!(b.eval(3, p), 1.0);
        assert_eq!(b.eval_grad(1, p), Point::new(4.0, 0.0));
        assert_eq!(b.eval_laplacian(2, p), 2.0 * 16.0);
    }
}
