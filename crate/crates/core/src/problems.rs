//! Manufactured solutions and the named experiment presets.
//!
//! Preset names are path-like: `{bc}/{domain}/{grid}` with `bc` one of
//! `dirichlet`, `neumann`, `robin`, `mixed`; `domain` one of `square`,
//! `octofoil`; `grid` one of `uniform`, `adaptive`. Further names:
//! `neumann/octofoil/{grid}/ratio{1,10,100,1000}`, `degenerate/robin[/..]`,
//! `degenerate/helmholtz[/..]`, `poly/{bc}/{domain}/{grid}` and `demo1d`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{BoundaryWeights, ProblemSpec};
use crate::basis::exponents;
use crate::error::{Error, Result};
use crate::geometry::{LevelSetDomain, Point};
use crate::grid::{GridConfig, GridMode};

pub trait ExactSolution: Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Point;
    fn laplacian(&self, p: Point) -> f64;
}

/// `e^(x+y)`
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpXY;

impl ExactSolution for ExpXY {
    fn value(&self, p: Point) -> f64 {
        (p.x + p.y).exp()
    }
    fn gradient(&self, p: Point) -> Point {
        let e = self.value(p);
        Point::new(e, e)
    }
    fn laplacian(&self, p: Point) -> f64 {
        2.0 * self.value(p)
    }
}

/// `sin(7x) + cos(7x)`, independent of `y`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SinCos7;

impl ExactSolution for SinCos7 {
    fn value(&self, p: Point) -> f64 {
        (7.0 * p.x).sin() + (7.0 * p.x).cos()
    }
    fn gradient(&self, p: Point) -> Point {
        Point::new(7.0 * ((7.0 * p.x).cos() - (7.0 * p.x).sin()), 0.0)
    }
    fn laplacian(&self, p: Point) -> f64 {
        -49.0 * self.value(p)
    }
}

/// Bivariate polynomial `sum c x^px y^py`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<((u32, u32), f64)>,
}

impl Polynomial {
    /// A fixed polynomial with every monomial of total degree `<= degree`
    /// present and coefficients of mixed sign, all of order one.
    pub fn of_degree(degree: usize) -> Self {
        let terms = exponents(degree, 2)
            .into_iter()
            .enumerate()
            .map(|(k, e)| (e, 0.5 + (1.7 * k as f64 + 0.3).sin()))
            .collect();
        Self { terms }
    }

    fn mono(x: f64, k: u32) -> f64 {
        x.powi(k as i32)
    }

    fn dmono(x: f64, k: u32) -> f64 {
        if k == 0 {
            0.0
        } else {
            k as f64 * x.powi(k as i32 - 1)
        }
    }

    fn d2mono(x: f64, k: u32) -> f64 {
        if k < 2 {
            0.0
        } else {
            (k * (k - 1)) as f64 * x.powi(k as i32 - 2)
        }
    }
}

impl ExactSolution for Polynomial {
    fn value(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|&((a, b), c)| c * Self::mono(p.x, a) * Self::mono(p.y, b))
            .sum()
    }
    fn gradient(&self, p: Point) -> Point {
        self.terms.iter().fold(Point::default(), |g, &((a, b), c)| {
            g + Point::new(
                c * Self::dmono(p.x, a) * Self::mono(p.y, b),
                c * Self::mono(p.x, a) * Self::dmono(p.y, b),
            )
        })
    }
    fn laplacian(&self, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|&((a, b), c)| {
                c * (Self::d2mono(p.x, a) * Self::mono(p.y, b) + Self::mono(p.x, a) * Self::d2mono(p.y, b))
            })
            .sum()
    }
}

/// `f = a u − μ Δu` and `g = β u + γ ∇u·n` from an exact solution.
pub fn manufacture(exact: Arc<dyn ExactSolution>, a: f64, mu: f64, weights: BoundaryWeights) -> ProblemSpec {
    let ef = exact.clone();
    let eg = exact.clone();
    ProblemSpec {
        a,
        mu,
        weights,
        f: Arc::new(move |p| a * ef.value(p) - mu * ef.laplacian(p)),
        g: Arc::new(move |p, n| {
            let (beta, gamma) = weights.at(p);
            beta * eg.value(p) + gamma * eg.gradient(p).dot(n)
        }),
        exact: Some(Arc::new(move |p| exact.value(p))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactKind {
    ExpXy,
    #[serde(rename = "sincos7_1d")]
    SinCos7,
    /// Polynomial of the run's basis degree.
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Dirichlet,
    Neumann,
    Robin,
    MixedDirRobin,
    DegenerateRobin,
    HelmholtzDirichlet,
}

impl BcKind {
    pub fn weights(self) -> BoundaryWeights {
        match self {
            Self::Dirichlet | Self::HelmholtzDirichlet => BoundaryWeights::Constant { beta: 1.0, gamma: 0.0 },
            Self::Neumann => BoundaryWeights::Constant { beta: 0.0, gamma: 1.0 },
            Self::Robin => BoundaryWeights::Constant { beta: 1.0, gamma: 1.0 },
            Self::MixedDirRobin => BoundaryWeights::SplitX {
                left: (1.0, 0.0),
                right: (1.0, 1.0),
            },
            Self::DegenerateRobin => BoundaryWeights::SplitX {
                left: (1.0, 0.0),
                right: (1.0, -1.0),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainChoice {
    Square,
    Octofoil,
    /// The unit interval, discretized by random points and midpoint splits.
    Interval,
}

impl DomainChoice {
    pub fn build(self) -> LevelSetDomain {
        match self {
            Self::Square => LevelSetDomain::square(),
            Self::Octofoil => LevelSetDomain::octofoil(),
            Self::Interval => LevelSetDomain::interval(0.0, 1.0),
        }
    }
}

/// Initial random point count of the 1D demo.
pub const DEMO_1D_POINTS: usize = 10;

/// Refinement parameters of the `adaptive` grids.
pub const ADAPTIVE_SPLIT_PROBABILITY: f64 = 0.1;
pub const ADAPTIVE_MAX_EXTRA_DEPTH: u32 = 2;

/// Fully specified run inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetCase {
    pub name: String,
    pub domain: DomainChoice,
    pub grid: GridConfig,
    pub exact: ExactKind,
    pub bc: BcKind,
    pub a: f64,
    pub mu: f64,
    pub p_range: Vec<usize>,
    pub splits_range: Vec<u32>,
}

impl PresetCase {
    pub fn problem(&self, degree: usize) -> ProblemSpec {
        let exact: Arc<dyn ExactSolution> = match self.exact {
            ExactKind::ExpXy => Arc::new(ExpXY),
            ExactKind::SinCos7 => Arc::new(SinCos7),
            ExactKind::Polynomial => Arc::new(Polynomial::of_degree(degree)),
        };
        manufacture(exact, self.a, self.mu, self.bc.weights())
    }

    /// Replaces the grid seed (random grids and the 1D demo points).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.grid.random_seed = seed;
        self
    }
}

pub fn uniform_grid() -> GridConfig {
    GridConfig {
        mode: GridMode::Uniform,
        base_depth: 4,
        ..GridConfig::default()
    }
}

pub fn adaptive_grid() -> GridConfig {
    GridConfig {
        mode: GridMode::Random,
        base_depth: 4,
        split_probability: ADAPTIVE_SPLIT_PROBABILITY,
        max_extra_depth: ADAPTIVE_MAX_EXTRA_DEPTH,
        ..GridConfig::default()
    }
}

fn parse_domain(s: &str) -> Option<DomainChoice> {
    match s {
        "square" => Some(DomainChoice::Square),
        "octofoil" => Some(DomainChoice::Octofoil),
        _ => None,
    }
}

fn parse_grid(s: &str) -> Option<GridConfig> {
    match s {
        "uniform" => Some(uniform_grid()),
        "adaptive" => Some(adaptive_grid()),
        _ => None,
    }
}

fn parse_bc(s: &str) -> Option<BcKind> {
    match s {
        "dirichlet" => Some(BcKind::Dirichlet),
        "neumann" => Some(BcKind::Neumann),
        "robin" => Some(BcKind::Robin),
        "mixed" => Some(BcKind::MixedDirRobin),
        _ => None,
    }
}

/// Looks up a named preset; P range 2..=5 and splits 0..=3 unless stated.
pub fn preset(name: &str) -> Result<PresetCase> {
    let unknown = || Error::UnknownPreset(name.to_string());
    let parts: Vec<&str> = name.split('/').collect();
    let mut case = PresetCase {
        name: name.to_string(),
        domain: DomainChoice::Octofoil,
        grid: uniform_grid(),
        exact: ExactKind::ExpXy,
        bc: BcKind::Dirichlet,
        a: 1.0,
        mu: 1.0,
        p_range: (2..=5).collect(),
        splits_range: (0..=3).collect(),
    };
    let dom_grid = |case: &mut PresetCase, rest: &[&str]| -> Result<()> {
        match rest {
            [] => Ok(()),
            [d, g] => {
                case.domain = parse_domain(d).ok_or_else(unknown)?;
                case.grid = parse_grid(g).ok_or_else(unknown)?;
                Ok(())
            }
            _ => Err(unknown()),
        }
    };
    match parts.as_slice() {
        ["demo1d"] => {
            case.domain = DomainChoice::Interval;
            case.exact = ExactKind::SinCos7;
            case.a = 0.0;
            case.p_range = vec![2, 3, 4];
            case.splits_range = (0..=5).collect();
        }
        ["neumann", "octofoil", g, ratio] => {
            let a: f64 = ratio
                .strip_prefix("ratio")
                .and_then(|r| r.parse().ok())
                .filter(|r| [1.0, 10.0, 100.0, 1000.0].contains(r))
                .ok_or_else(unknown)?;
            case.bc = BcKind::Neumann;
            case.grid = parse_grid(g).ok_or_else(unknown)?;
            case.a = a;
        }
        ["degenerate", kind, rest @ ..] => {
            match *kind {
                "robin" => case.bc = BcKind::DegenerateRobin,
                "helmholtz" => {
                    case.bc = BcKind::HelmholtzDirichlet;
                    case.mu = -100.0;
                }
                _ => return Err(unknown()),
            }
            dom_grid(&mut case, rest)?;
        }
        ["poly", bc, d, g] => {
            case.bc = parse_bc(bc).ok_or_else(unknown)?;
            case.exact = ExactKind::Polynomial;
            dom_grid(&mut case, &[d, g])?;
        }
        [bc, d, g] => {
            case.bc = parse_bc(bc).ok_or_else(unknown)?;
            dom_grid(&mut case, &[d, g])?;
        }
        _ => return Err(unknown()),
    }
    Ok(case)
}

/// The standard twelve boundary-condition/domain/grid configurations.
pub fn standard_presets() -> Vec<String> {
    let mut names = Vec::new();
    for bc in ["dirichlet", "neumann", "mixed"] {
        for d in ["square", "octofoil"] {
            for g in ["uniform", "adaptive"] {
                names.push(format!("{bc}/{d}/{g}"));
            }
        }
    }
    names
}

/// Every accepted preset name (short aliases excluded).
pub fn preset_names() -> Vec<String> {
    let mut names = standard_presets();
    for bc in ["robin"] {
        for d in ["square", "octofoil"] {
            for g in ["uniform", "adaptive"] {
                names.push(format!("{bc}/{d}/{g}"));
            }
        }
    }
    for g in ["uniform", "adaptive"] {
        for r in [1, 10, 100, 1000] {
            names.push(format!("neumann/octofoil/{g}/ratio{r}"));
        }
    }
    for kind in ["robin", "helmholtz"] {
        for d in ["square", "octofoil"] {
            for g in ["uniform", "adaptive"] {
                names.push(format!("degenerate/{kind}/{d}/{g}"));
            }
        }
    }
    for bc in ["dirichlet", "neumann", "robin", "mixed"] {
        for d in ["square", "octofoil"] {
            for g in ["uniform", "adaptive"] {
                names.push(format!("poly/{bc}/{d}/{g}"));
            }
        }
    }
    names.push("demo1d".into());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(e: &dyn ExactSolution, p: Point) {
        let h = 1e-4;
        let dx = (e.value(p + Point::new(h, 0.0)) - e.value(p - Point::new(h, 0.0))) / (2.0 * h);
        let dy = (e.value(p + Point::new(0.0, h)) - e.value(p - Point::new(0.0, h))) / (2.0 * h);
        let g = e.gradient(p);
        assert!((g.x - dx).abs() < 1e-6 * (1.0 + dx.abs()));
        assert!((g.y - dy).abs() < 1e-6 * (1.0 + dy.abs()));
        let lap = (e.value(p + Point::new(h, 0.0))
            + e.value(p - Point::new(h, 0.0))
            + e.value(p + Point::new(0.0, h))
            + e.value(p - Point::new(0.0, h))
            - 4.0 * e.value(p))
            / (h * h);
        assert!((e.laplacian(p) - lap).abs() < 1e-4 * (1.0 + lap.abs()));
    }

    #[test]
    fn exact_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            fd_check(&ExpXY, p);
            fd_check(&SinCos7, p);
            for d in 2..=5 {
                fd_check(&Polynomial::of_degree(d), p);
            }
        }
    }

    #[test]
    fn polynomial_has_every_monomial() {
        let p = Polynomial::of_degree(4);
        assert_eq!(p.terms.len(), 15);
        assert!(p.terms.iter().all(|&(_, c)| c != 0.0));
    }

    #[test]
    fn manufactured_sources() {
        let p = Point::new(0.3, -0.2);
        let prob = manufacture(Arc::new(ExpXY), 1.0, 1.0, BcKind::Dirichlet.weights());
        assert!(((prob.f)(p) + (0.1f64).exp()).abs() < 1e-15);

        let x = Point::on_line(0.4);
        let prob = manufacture(Arc::new(SinCos7), 0.0, 1.0, BcKind::Dirichlet.weights());
        let expect = 49.0 * ((2.8f64).sin() + (2.8f64).cos());
        assert!(((prob.f)(x) - expect).abs() < 1e-12);

        let case = preset("degenerate/helmholtz").unwrap();
        let prob = case.problem(3);
        assert!(((prob.f)(p) - 201.0 * (0.1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn manufactured_data_satisfies_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dom = LevelSetDomain::octofoil();
        let mut names = standard_presets();
        names.extend(
            [
                "degenerate/robin",
                "degenerate/helmholtz",
                "poly/robin/square/uniform",
                "demo1d",
            ]
            .map(String::from),
        );
        for name in names {
            let case = preset(&name).unwrap();
            let prob = case.problem(4);
            let exact: Arc<dyn ExactSolution> = match case.exact {
                ExactKind::ExpXy => Arc::new(ExpXY),
                ExactKind::SinCos7 => Arc::new(SinCos7),
                ExactKind::Polynomial => Arc::new(Polynomial::of_degree(4)),
            };
            for _ in 0..1000 {
                let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let f = case.a * exact.value(p) - case.mu * exact.laplacian(p);
                assert!(((prob.f)(p) - f).abs() < 1e-10 * (1.0 + f.abs()));
                // boundary residual on the octofoil boundary along the ray through p
                let Ok(b) = dom.locate_boundary_point(Point::new(0.0, 1e-3), p * 10.0, 1e-14) else {
                    continue;
                };
                let n = dom.outward_normal(b).unwrap();
                let (beta, gamma) = case.bc.weights().at(b);
                let g = beta * exact.value(b) + gamma * exact.gradient(b).dot(n);
                assert!(((prob.g)(b, n) - g).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn preset_lookup() {
        let c = preset("dirichlet/octofoil/adaptive").unwrap();
        assert_eq!(c.domain, DomainChoice::Octofoil);
        assert_eq!(c.grid.mode, GridMode::Random);
        assert_eq!(c.bc.weights(), BoundaryWeights::Constant { beta: 1.0, gamma: 0.0 });
        assert_eq!(c.p_range, vec![2, 3, 4, 5]);
        assert_eq!(c.splits_range, vec![0, 1, 2, 3]);

        let c = preset("neumann/octofoil/uniform/ratio1000").unwrap();
        assert_eq!((c.a, c.mu), (1000.0, 1.0));
        assert_eq!(c.bc.weights(), BoundaryWeights::Constant { beta: 0.0, gamma: 1.0 });

        let c = preset("degenerate/robin").unwrap();
        assert_eq!(c.bc.weights().at(Point::new(0.5, 0.0)), (1.0, -1.0));
        assert_eq!(c.bc.weights().at(Point::new(-0.5, 0.0)), (1.0, 0.0));

        let c = preset("degenerate/helmholtz/square/adaptive").unwrap();
        assert_eq!((c.a, c.mu, c.domain), (1.0, -100.0, DomainChoice::Square));

        let c = preset("demo1d").unwrap();
        assert_eq!(c.p_range, vec![2, 3, 4]);
        assert_eq!(c.splits_range, (0..=5).collect::<Vec<_>>());
        assert_eq!(c.a, 0.0);

        for bad in [
            "",
            "dirichlet",
            "dirichlet/circle/uniform",
            "neumann/octofoil/uniform/ratio2",
            "degenerate/x",
            "poly/robin",
        ] {
            assert!(matches!(preset(bad), Err(Error::UnknownPreset(_))), "{bad}");
        }
        assert_eq!(standard_presets().len(), 12);
        for name in preset_names() {
            assert_eq!(preset(&name).unwrap().name, name);
        }
    }
}
