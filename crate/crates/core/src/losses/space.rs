use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A structured output or label value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// A class index in `0..T`.
    Class(usize),
    /// A point of ℝᵈ (scalars are points of length one).
    Point(Vec<f64>),
    /// An element of a product space.
    Pair(Box<Output>, Box<Output>),
}

impl Output {
    pub fn scalar(v: f64) -> Self {
        Output::Point(vec![v])
    }

    pub fn pair(a: Output, b: Output) -> Self {
        Output::Pair(Box::new(a), Box::new(b))
    }

    pub fn as_point(&self) -> Result<&[f64]> {
        match self {
            Output::Point(p) => Ok(p),
            other => Err(Error::Input(format!("expected a point, got {other:?}"))),
        }
    }

    pub fn as_class(&self) -> Result<usize> {
        match self {
            Output::Class(c) => Ok(*c),
            other => Err(Error::Input(format!("expected a class label, got {other:?}"))),
        }
    }

    pub fn as_pair(&self) -> Result<(&Output, &Output)> {
        match self {
            Output::Pair(a, b) => Ok((a, b)),
            other => Err(Error::Input(format!("expected a pair, got {other:?}"))),
        }
    }
}

/// Tolerance used when validating sphere norms and simplex masses.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Descriptor of an output or label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSpace {
    /// Class labels `0..count`.
    Classes { count: usize },
    /// An explicit finite list.
    Finite { elements: Vec<Output> },
    /// Unit sphere in ℝ^dim.
    Sphere { dim: usize },
    /// Probability simplex over `bins` bins.
    Simplex { bins: usize },
    /// Closed interval of the real line.
    Interval { lo: f64, hi: f64 },
    /// Closed Euclidean ball in ℝ^dim centred at the origin.
    Ball { dim: usize, radius: f64 },
    /// All of ℝ^dim.
    Euclidean { dim: usize },
    Product { left: Box<OutputSpace>, right: Box<OutputSpace> },
}

impl OutputSpace {
    pub fn product(left: OutputSpace, right: OutputSpace) -> Self {
        OutputSpace::Product { left: Box::new(left), right: Box::new(right) }
    }

    pub fn contains(&self, o: &Output) -> bool {
        match (self, o) {
            (OutputSpace::Classes { count }, Output::Class(c)) => c < count,
            (OutputSpace::Finite { elements }, o) => elements.contains(o),
            (OutputSpace::Sphere { dim }, Output::Point(p)) => {
                p.len() == *dim && (p.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= DOMAIN_TOL
            }
            (OutputSpace::Simplex { bins }, Output::Point(p)) => {
                p.len() == *bins
                    && p.iter().all(|&v| v >= -DOMAIN_TOL && v.is_finite())
                    && (p.iter().sum::<f64>() - 1.0).abs() <= DOMAIN_TOL
            }
            (OutputSpace::Interval { lo, hi }, Output::Point(p)) => p.len() == 1 && p[0] >= *lo && p[0] <= *hi,
            (OutputSpace::Ball { dim, radius }, Output::Point(p)) => {
                p.len() == *dim && p.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + DOMAIN_TOL)
            }
            (OutputSpace::Euclidean { dim }, Output::Point(p)) => p.len() == *dim && p.iter().all(|v| v.is_finite()),
            (OutputSpace::Product { left, right }, Output::Pair(a, b)) => left.contains(a) && right.contains(b),
            _ => false,
        }
    }

    /// All elements, when the space is finite.
    pub fn elements(&self) -> Option<Vec<Output>> {
        match self {
            OutputSpace::Classes { count } => Some((0..*count).map(Output::Class).collect()),
            OutputSpace::Finite { elements } => Some(elements.clone()),
            OutputSpace::Product { left, right } => {
                let (l, r) = (left.elements()?, right.elements()?);
                Some(
                    l.iter()
                        .flat_map(|a| r.iter().map(move |b| Output::pair(a.clone(), b.clone())))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            OutputSpace::Classes { .. } | OutputSpace::Finite { .. } => true,
            OutputSpace::Product { left, right } => left.is_finite() && right.is_finite(),
            _ => false,
        }
    }

    /// Projects a point back onto the space (continuous spaces only).
    pub fn project(&self, z: &mut [f64]) -> Result<()> {
        match self {
            OutputSpace::Sphere { .. } => {
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::Numeric("cannot project a zero or non-finite vector on the sphere".into()));
                }
                z.iter_mut().for_each(|v| *v /= norm);
            }
            OutputSpace::Ball { radius, .. } => {
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > *radius {
                    z.iter_mut().for_each(|v| *v *= radius / norm);
                }
            }
            OutputSpace::Interval { lo, hi } => {
                for v in z.iter_mut() {
                    *v = v.clamp(*lo, *hi);
                }
            }
            OutputSpace::Simplex { .. } => project_simplex(z),
            OutputSpace::Euclidean { .. } => {}
            other => {
                return Err(Error::Capability(format!("no projection onto {}", other.describe())));
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("projection produced a non-finite value".into()));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            OutputSpace::Classes { count } => format!("classes({count})"),
            OutputSpace::Finite { elements } => format!("finite({})", elements.len()),
            OutputSpace::Sphere { dim } => format!("sphere({dim})"),
            OutputSpace::Simplex { bins } => format!("simplex({bins})"),
            OutputSpace::Interval { lo, hi } => format!("interval[{lo}, {hi}]"),
            OutputSpace::Ball { dim, radius } => format!("ball({dim}, {radius})"),
            OutputSpace::Euclidean { dim } => format!("euclidean({dim})"),
            OutputSpace::Product { left, right } => format!("{} x {}", left.describe(), right.describe()),
        }
    }

    /// Deterministic point set used to estimate suprema over the space:
    /// 10⁴-point grids for one- and two-dimensional sets, 10⁵ uniform samples otherwise.
    pub fn sup_grid(&self) -> Result<Vec<Output>> {
        const GRID_1D: usize = 10_000;
        const GRID_2D_SIDE: usize = 100;
        const SAMPLES: usize = 100_000;
        const SEED: u64 = 0x5EED_0F_5AB;
        if let Some(el) = self.elements() {
            return Ok(el);
        }
        let linspace = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        };
        let mut rng = rng_from_seed(SEED);
        let pts: Vec<Vec<f64>> = match *self {
            OutputSpace::Interval { lo, hi } => linspace(lo, hi, GRID_1D).into_iter().map(|v| vec![v]).collect(),
            OutputSpace::Ball { dim: 1, radius } => {
                linspace(-radius, radius, GRID_1D).into_iter().map(|v| vec![v]).collect()
            }
            OutputSpace::Ball { dim: 2, radius } => {
                let mut out = Vec::with_capacity(GRID_2D_SIDE * GRID_2D_SIDE);
                for r in linspace(0.0, radius, GRID_2D_SIDE) {
                    for k in 0..GRID_2D_SIDE {
                        let t = std::f64::consts::TAU * k as f64 / GRID_2D_SIDE as f64;
                        out.push(vec![r * t.cos(), r * t.sin()]);
                    }
                }
                out
            }
            OutputSpace::Ball { dim, radius } => (0..SAMPLES)
                .map(|_| {
                    let dir = gaussian_direction(&mut rng, dim);
                    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                    dir.into_iter().map(|v| v * r).collect()
                })
                .collect(),
            OutputSpace::Sphere { dim: 1 } => vec![vec![-1.0], vec![1.0]],
            OutputSpace::Sphere { dim: 2 } => (0..GRID_1D)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / GRID_1D as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            OutputSpace::Sphere { dim: 3 } => {
                let mut out = Vec::with_capacity(GRID_2D_SIDE * GRID_2D_SIDE);
                for polar in linspace(0.0, std::f64::consts::PI, GRID_2D_SIDE) {
                    for k in 0..GRID_2D_SIDE {
                        let az = std::f64::consts::TAU * k as f64 / GRID_2D_SIDE as f64;
                        out.push(vec![polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos()]);
                    }
                }
                out
            }
            OutputSpace::Sphere { dim } => (0..SAMPLES).map(|_| gaussian_direction(&mut rng, dim)).collect(),
            OutputSpace::Simplex { bins: 2 } => {
                linspace(0.0, 1.0, GRID_1D).into_iter().map(|t| vec![t, 1.0 - t]).collect()
            }
            OutputSpace::Simplex { bins: 3 } => {
                let side = 140;
                let mut out = Vec::new();
                for i in 0..=side {
                    for j in 0..=(side - i) {
                        let (a, b) = (i as f64 / side as f64, j as f64 / side as f64);
                        out.push(vec![a, b, (1.0 - a - b).max(0.0)]);
                    }
                }
                out
            }
            OutputSpace::Simplex { bins } => {
                let mut out: Vec<Vec<f64>> = (0..bins)
                    .map(|k| (0..bins).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
                    .collect();
                out.extend((0..SAMPLES).map(|_| {
                    let g: Vec<f64> = (0..bins).map(|_| Exp1.sample(&mut rng)).collect();
                    let s: f64 = g.iter().sum();
                    g.into_iter().map(|v| v / s).collect()
                }));
                out
            }
            _ => {
                return Err(Error::BoundEstimation(format!(
                    "cannot build a sup grid over {}",
                    self.describe()
                )))
            }
        };
        Ok(pts.into_iter().map(Output::Point).collect())
    }
}

fn gaussian_direction(rng: &mut crate::rng::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(z: &mut [f64]) {
    let mut sorted: Vec<f64> = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for v in z.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}
