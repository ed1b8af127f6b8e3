//! Loss catalog and explicit embeddings.
//!
//! A loss `Δ(z, y)` is described by a [`LossSpec`]: an evaluator, the output
//! and label spaces it is declared on, and an upper bound on `sup_z ‖ψ(z)‖`
//! for some factorization `Δ(z, y) = ⟨ψ(z), φ(y)⟩` with `‖φ‖ ≤ 1`, when one
//! is known in closed form.

mod finite;
mod fourier;
mod space;

pub use finite::{finite_embedding, semi_finite_embedding, FiniteEmbedding, FiniteSide, SemiFiniteEmbedding};
pub use fourier::{fourier_embedding, FourierEmbedding};
pub use space::{project_simplex, Output, OutputSpace, DOMAIN_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};

/// Evaluator of a catalog or combined loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    SquaredEuclidean,
    Hellinger,
    GeodesicSphereSq,
    Absolute,
    Huber { delta: f64 },
    Hinge,
    Kde { kernel: KernelSpec },
    Constant { value: f64 },
    Sum { left: Box<LossSpec>, right: Box<LossSpec> },
    Product { left: Box<LossSpec>, right: Box<LossSpec> },
}

/// A loss together with its domains and (optional) embedding constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub outputs: OutputSpace,
    pub labels: OutputSpace,
    /// Upper bound on `sup_z ‖ψ(z)‖`; `None` when unknown.
    pub bound: Option<f64>,
}

/// Catalog entries addressable by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum LossId {
    ZeroOne {
        classes: usize,
    },
    /// On the ball of the given radius, or on all of ℝ^dim when absent.
    SquaredEuclidean {
        dim: usize,
        #[serde(default)]
        radius: Option<f64>,
    },
    Hellinger {
        bins: usize,
    },
    GeodesicSphereSq {
        dim: usize,
    },
    Absolute {
        lo: f64,
        hi: f64,
    },
    Huber {
        delta: f64,
        lo: f64,
        hi: f64,
    },
    /// `max(0, 1 − zy)` with `z ∈ {−1, 1}` and `y ∈ [−1, 1]`.
    Hinge,
    Kde {
        kernel: KernelSpec,
        dim: usize,
    },
    Constant {
        value: f64,
        classes: usize,
    },
}

pub fn make_loss(id: &LossId) -> Result<LossSpec> {
    let param = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Parameter(msg)) };
    match *id {
        LossId::ZeroOne { classes } => {
            param(classes >= 2, format!("zero_one needs at least 2 classes, got {classes}"))?;
            let space = OutputSpace::Classes { count: classes };
            Ok(LossSpec {
                kind: LossKind::ZeroOne,
                outputs: space.clone(),
                labels: space,
                bound: Some((classes - 1) as f64),
            })
        }
        LossId::SquaredEuclidean { dim, radius } => {
            param(dim >= 1, "squared_euclidean needs dim >= 1".into())?;
            let (space, bound) = match radius {
                Some(r) => {
                    param(r > 0.0 && r.is_finite(), format!("radius must be positive, got {r}"))?;
                    let (r2, r4) = (r * r, r * r * r * r);
                    (OutputSpace::Ball { dim, radius: r }, Some(((1.0 + r2 + r4) * (1.0 + 4.0 * r2 + r4)).sqrt()))
                }
                None => (OutputSpace::Euclidean { dim }, None),
            };
            Ok(LossSpec { kind: LossKind::SquaredEuclidean, outputs: space.clone(), labels: space, bound })
        }
        LossId::Hellinger { bins } => {
            param(bins >= 2, format!("hellinger needs at least 2 bins, got {bins}"))?;
            let space = OutputSpace::Simplex { bins };
            Ok(LossSpec { kind: LossKind::Hellinger, outputs: space.clone(), labels: space, bound: Some(4.0) })
        }
        LossId::GeodesicSphereSq { dim } => {
            param(dim >= 2, format!("sphere dimension must be at least 2, got {dim}"))?;
            let space = OutputSpace::Sphere { dim };
            Ok(LossSpec { kind: LossKind::GeodesicSphereSq, outputs: space.clone(), labels: space, bound: None })
        }
        LossId::Absolute { lo, hi } => {
            let space = interval(lo, hi)?;
            Ok(LossSpec { kind: LossKind::Absolute, outputs: space.clone(), labels: space, bound: None })
        }
        LossId::Huber { delta, lo, hi } => {
            param(delta > 0.0 && delta.is_finite(), format!("huber delta must be positive, got {delta}"))?;
            let space = interval(lo, hi)?;
            Ok(LossSpec { kind: LossKind::Huber { delta }, outputs: space.clone(), labels: space, bound: None })
        }
        LossId::Hinge => Ok(LossSpec {
            kind: LossKind::Hinge,
            outputs: OutputSpace::Finite { elements: vec![Output::scalar(-1.0), Output::scalar(1.0)] },
            labels: OutputSpace::Interval { lo: -1.0, hi: 1.0 },
            bound: Some(2.0),
        }),
        LossId::Kde { ref kernel, dim } => {
            param(dim >= 1, "kde needs dim >= 1".into())?;
            kde_loss_from_kernel(kernel, dim)
        }
        LossId::Constant { value, classes } => {
            param(classes >= 1, "constant loss needs at least one class".into())?;
            let space = OutputSpace::Classes { count: classes };
            constant_loss(value, space.clone(), space)
        }
    }
}

fn interval(lo: f64, hi: f64) -> Result<OutputSpace> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Parameter(format!("invalid interval [{lo}, {hi}]")));
    }
    Ok(OutputSpace::Interval { lo, hi })
}

/// `Δ ≡ value` on the given spaces.
pub fn constant_loss(value: f64, outputs: OutputSpace, labels: OutputSpace) -> Result<LossSpec> {
    if !value.is_finite() {
        return Err(Error::Parameter(format!("constant loss value must be finite, got {value}")));
    }
    Ok(LossSpec { kind: LossKind::Constant { value }, outputs, labels, bound: Some(value.abs()) })
}

/// `Δ(z, y) = h(z, z) + h(y, y) − 2h(z, y)` for a bounded output kernel `h`
/// with `η² = sup h(y, y)`; the embedding constant is `2(2η⁴ + 1)`.
pub fn kde_loss_from_kernel(kernel: &KernelSpec, dim: usize) -> Result<LossSpec> {
    kernel.validate()?;
    let space = match kernel.family {
        KernelFamily::Linear => OutputSpace::Ball {
            dim,
            radius: kernel
                .domain_radius
                .ok_or_else(|| Error::Parameter("linear output kernel needs a domain radius".into()))?,
        },
        _ => OutputSpace::Euclidean { dim },
    };
    let eta2 = kernel.kappa_sq();
    Ok(LossSpec {
        kind: LossKind::Kde { kernel: kernel.clone() },
        outputs: space.clone(),
        labels: space,
        bound: Some(2.0 * (2.0 * eta2 * eta2 + 1.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    Sum,
    Product,
}

/// Loss on product spaces: `Δ₁(z₁, y₁) + Δ₂(z₂, y₂)` or `Δ₁ · Δ₂`.
pub fn combine(first: &LossSpec, second: &LossSpec, mode: CombineMode) -> LossSpec {
    let (left, right) = (Box::new(first.clone()), Box::new(second.clone()));
    let (kind, bound) = match mode {
        CombineMode::Sum => (LossKind::Sum { left, right }, first.bound.zip(second.bound).map(|(a, b)| a + b)),
        CombineMode::Product => {
            (LossKind::Product { left, right }, first.bound.zip(second.bound).map(|(a, b)| a * b))
        }
    };
    LossSpec {
        kind,
        outputs: OutputSpace::product(first.outputs.clone(), second.outputs.clone()),
        labels: OutputSpace::product(first.labels.clone(), second.labels.clone()),
        bound,
    }
}

/// The same loss on finite subsets of its domains; the bound is inherited.
pub fn restrict(loss: &LossSpec, outputs: &[Output], labels: &[Output]) -> Result<LossSpec> {
    for (set, space, what) in [(outputs, &loss.outputs, "output"), (labels, &loss.labels, "label")] {
        if set.is_empty() {
            return Err(Error::Input(format!("restriction needs a nonempty {what} set")));
        }
        if let Some(bad) = set.iter().find(|o| !space.contains(o)) {
            return Err(Error::Input(format!("{what} {bad:?} is not in {}", space.describe())));
        }
    }
    Ok(LossSpec {
        kind: loss.kind.clone(),
        outputs: OutputSpace::Finite { elements: outputs.to_vec() },
        labels: OutputSpace::Finite { elements: labels.to_vec() },
        bound: loss.bound,
    })
}

fn same_len(z: &[f64], y: &[f64]) -> Result<()> {
    if z.len() != y.len() {
        return Err(Error::Input(format!("output has dimension {}, label has {}", z.len(), y.len())));
    }
    Ok(())
}

fn scalar(o: &Output) -> Result<f64> {
    match o.as_point()? {
        [v] => Ok(*v),
        p => Err(Error::Input(format!("expected a scalar, got a point of dimension {}", p.len()))),
    }
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::ZeroOne => "zero_one",
            LossKind::SquaredEuclidean => "squared_euclidean",
            LossKind::Hellinger => "hellinger",
            LossKind::GeodesicSphereSq => "geodesic_sphere_sq",
            LossKind::Absolute => "absolute",
            LossKind::Huber { .. } => "huber",
            LossKind::Hinge => "hinge",
            LossKind::Kde { .. } => "kde",
            LossKind::Constant { .. } => "constant",
            LossKind::Sum { .. } => "sum",
            LossKind::Product { .. } => "product",
        }
    }

    pub fn eval(&self, z: &Output, y: &Output) -> Result<f64> {
        let value = match &self.kind {
            LossKind::ZeroOne => f64::from(u8::from(z != y)),
            LossKind::SquaredEuclidean => {
                let (z, y) = (z.as_point()?, y.as_point()?);
                same_len(z, y)?;
                z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            LossKind::Hellinger => {
                let (z, y) = (z.as_point()?, y.as_point()?);
                same_len(z, y)?;
                z.iter()
                    .zip(y)
                    .map(|(a, b)| {
                        let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
                        d * d
                    })
                    .sum()
            }
            LossKind::GeodesicSphereSq => {
                let (z, y) = (z.as_point()?, y.as_point()?);
                same_len(z, y)?;
                let dot: f64 = z.iter().zip(y).map(|(a, b)| a * b).sum();
                let theta = dot.clamp(-1.0, 1.0).acos();
                theta * theta
            }
            LossKind::Absolute => (scalar(z)? - scalar(y)?).abs(),
            LossKind::Huber { delta } => huber(scalar(z)? - scalar(y)?, *delta),
            LossKind::Hinge => (1.0 - scalar(z)? * scalar(y)?).max(0.0),
            LossKind::Kde { kernel } => {
                let (z, y) = (z.as_point()?, y.as_point()?);
                same_len(z, y)?;
                kernel.eval_unchecked(z, z) + kernel.eval_unchecked(y, y) - 2.0 * kernel.eval_unchecked(z, y)
            }
            LossKind::Constant { value } => *value,
            LossKind::Sum { left, right } => {
                let ((z1, z2), (y1, y2)) = (z.as_pair()?, y.as_pair()?);
                left.eval(z1, y1)? + right.eval(z2, y2)?
            }
            LossKind::Product { left, right } => {
                let ((z1, z2), (y1, y2)) = (z.as_pair()?, y.as_pair()?);
                left.eval(z1, y1)? * right.eval(z2, y2)?
            }
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{} loss evaluated to {value}", self.name())));
        }
        Ok(value)
    }

    /// A subgradient of `z ↦ Δ(z, y)` at a point output.
    pub fn subgradient(&self, z: &[f64], y: &Output) -> Result<Vec<f64>> {
        let y = match y {
            Output::Point(p) => p.as_slice(),
            other => {
                return Err(Error::Capability(format!(
                    "{} loss has no point subgradient for label {other:?}",
                    self.name()
                )))
            }
        };
        same_len(z, y)?;
        let g = match &self.kind {
            LossKind::SquaredEuclidean => z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
            LossKind::Hellinger => z
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let a = a.max(1e-12);
                    1.0 - (b.max(0.0) / a).sqrt()
                })
                .collect(),
            LossKind::GeodesicSphereSq => {
                let dot: f64 = z.iter().zip(y).map(|(a, b)| a * b).sum();
                let c = dot.clamp(-1.0, 1.0);
                let theta = c.acos();
                let s = theta.sin();
                // d/dz arccos(⟨z,y⟩)² = −2θ/sinθ · y; the limit at θ → 0 is −2y.
                let factor = if s > 1e-8 { -2.0 * theta / s } else if c > 0.0 { -2.0 } else { 0.0 };
                y.iter().map(|b| factor * b).collect()
            }
            LossKind::Absolute => vec![(z[0] - y[0]).signum() * f64::from(u8::from(z[0] != y[0]))],
            LossKind::Huber { delta } => vec![(z[0] - y[0]).clamp(-delta, *delta)],
            LossKind::Hinge => vec![if 1.0 - z[0] * y[0] > 0.0 { -y[0] } else { 0.0 }],
            LossKind::Kde { kernel } => match kernel.family {
                KernelFamily::Gaussian => {
                    let h = kernel.eval_unchecked(z, y);
                    let s2 = kernel.sigma * kernel.sigma;
                    z.iter().zip(y).map(|(a, b)| 4.0 * h * (a - b) / s2).collect()
                }
                KernelFamily::Linear => z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
                KernelFamily::Laplacian => {
                    return Err(Error::Capability("kde loss with a laplacian kernel has no subgradient".into()))
                }
            },
            LossKind::Constant { .. } => vec![0.0; z.len()],
            _ => {
                return Err(Error::Capability(format!("{} loss has no subgradient", self.name())));
            }
        };
        Ok(g)
    }

    /// `v` with `Δ(z, y) = v(z − y)` for scalar translation-invariant losses.
    pub fn translation_profile(&self) -> Option<fn(f64) -> f64> {
        let is_scalar = matches!(
            self.outputs,
            OutputSpace::Interval { .. } | OutputSpace::Ball { dim: 1, .. } | OutputSpace::Euclidean { dim: 1 }
        );
        match self.kind {
            LossKind::SquaredEuclidean if is_scalar => Some(|u| u * u),
            LossKind::Absolute => Some(f64::abs),
            _ => None,
        }
    }
}

fn huber(u: f64, delta: f64) -> f64 {
    if u.abs() <= delta {
        0.5 * u * u
    } else {
        delta * (u.abs() - 0.5 * delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(i: usize) -> Output {
        Output::Class(i)
    }

    #[test]
    fn zero_one_values() {
        let l = make_loss(&LossId::ZeroOne { classes: 3 }).unwrap();
        assert_eq!(l.eval(&c(1), &c(1)).unwrap(), 0.0);
        assert_eq!(l.eval(&c(1), &c(2)).unwrap(), 1.0);
        assert_eq!(l.bound, Some(2.0));
    }

    #[test]
    fn hellinger_opposite_vertices() {
        let l = make_loss(&LossId::Hellinger { bins: 2 }).unwrap();
        let v = l.eval(&Output::Point(vec![1.0, 0.0]), &Output::Point(vec![0.0, 1.0])).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn kde_bounds_and_values() {
        let g = make_loss(&LossId::Kde { kernel: KernelSpec::gaussian(0.5), dim: 2 }).unwrap();
        assert_eq!(g.bound, Some(6.0));
        let l = make_loss(&LossId::Kde { kernel: KernelSpec::linear(1.0), dim: 2 }).unwrap();
        let v = l.eval(&Output::Point(vec![1.0, 0.0]), &Output::Point(vec![0.0, 1.0])).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(make_loss(&LossId::ZeroOne { classes: 1 }).is_err());
        assert!(make_loss(&LossId::Hellinger { bins: 1 }).is_err());
        assert!(make_loss(&LossId::GeodesicSphereSq { dim: 1 }).is_err());
        assert!(make_loss(&LossId::Huber { delta: 0.0, lo: 0.0, hi: 1.0 }).is_err());
        assert!(make_loss(&LossId::Absolute { lo: 1.0, hi: 1.0 }).is_err());
        assert!(make_loss(&LossId::SquaredEuclidean { dim: 2, radius: Some(-1.0) }).is_err());
    }

    #[test]
    fn geodesic_clamps_round_off() {
        let l = make_loss(&LossId::GeodesicSphereSq { dim: 3 }).unwrap();
        let z = vec![0.6, 0.8, 0.0];
        let scaled: Vec<f64> = z.iter().map(|v| v * (1.0 + 1e-15)).collect();
        assert_eq!(l.eval(&Output::Point(z.clone()), &Output::Point(scaled)).unwrap(), 0.0);
        let v = l.eval(&Output::Point(vec![1.0, 0.0, 0.0]), &Output::Point(vec![-1.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn combinations() {
        let z1 = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        let sum = combine(&z1, &z1, CombineMode::Sum);
        let p = |a, b| Output::pair(c(a), c(b));
        assert_eq!(sum.eval(&p(0, 1), &p(0, 1)).unwrap(), 0.0);
        assert_eq!(sum.eval(&p(0, 1), &p(1, 0)).unwrap(), 2.0);
        assert_eq!(sum.bound, Some(2.0));

        let one = constant_loss(1.0, OutputSpace::Classes { count: 2 }, OutputSpace::Classes { count: 2 }).unwrap();
        let prod = combine(&z1, &one, CombineMode::Product);
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(prod.eval(&p(a, 0), &p(b, 1)).unwrap(), z1.eval(&c(a), &c(b)).unwrap());
            }
        }
        let geo = make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap();
        assert_eq!(combine(&z1, &geo, CombineMode::Sum).bound, None);
    }

    #[test]
    fn sum_table_is_elementwise_sum() {
        let a = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        let b = constant_loss(0.5, OutputSpace::Classes { count: 2 }, OutputSpace::Classes { count: 2 }).unwrap();
        let sum = combine(&a, &b, CombineMode::Sum);
        let zs = sum.outputs.elements().unwrap();
        let ys = sum.labels.elements().unwrap();
        assert_eq!(zs.len(), 4);
        for z in &zs {
            for y in &ys {
                let ((z1, z2), (y1, y2)) = (z.as_pair().unwrap(), y.as_pair().unwrap());
                let expected = a.eval(z1, y1).unwrap() + b.eval(z2, y2).unwrap();
                assert_eq!(sum.eval(z, y).unwrap(), expected);
            }
        }
    }

    #[test]
    fn restriction() {
        let l3 = make_loss(&LossId::ZeroOne { classes: 3 }).unwrap();
        let r = restrict(&l3, &[c(1), c(2)], &[c(1), c(2)]).unwrap();
        let l2 = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r.eval(&c(i + 1), &c(j + 1)).unwrap(), l2.eval(&c(i), &c(j)).unwrap());
            }
        }
        assert_eq!(r.bound, l3.bound);
        assert!(restrict(&l3, &[c(3)], &[c(0)]).is_err());
        assert!(restrict(&l3, &[], &[c(0)]).is_err());
    }

    #[test]
    fn subgradients_match_finite_differences() {
        let cases = [
            (make_loss(&LossId::SquaredEuclidean { dim: 2, radius: None }).unwrap(), vec![0.3, -0.2], vec![0.1, 0.5]),
            (make_loss(&LossId::Hellinger { bins: 3 }).unwrap(), vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]),
            (make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap(), vec![0.6, 0.8], vec![0.0, 1.0]),
            (make_loss(&LossId::Huber { delta: 0.5, lo: -2.0, hi: 2.0 }).unwrap(), vec![0.9], vec![0.1]),
            (
                make_loss(&LossId::Kde { kernel: KernelSpec::gaussian(0.8), dim: 2 }).unwrap(),
                vec![0.2, 0.1],
                vec![-0.3, 0.4],
            ),
        ];
        for (loss, z, y) in cases {
            let y = Output::Point(y);
            let g = loss.subgradient(&z, &y).unwrap();
            for k in 0..z.len() {
                let h = 1e-6;
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[k] += h;
                zm[k] -= h;
                let fd = (loss.eval(&Output::Point(zp), &y).unwrap() - loss.eval(&Output::Point(zm), &y).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(g[k], fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
        let zo = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        assert!(matches!(zo.subgradient(&[0.0], &c(0)), Err(Error::Capability(_))));
    }

    #[test]
    fn catalog_serializes_by_id() {
        let id: LossId = serde_json::from_str(r#"{"id":"squared_euclidean","dim":2}"#).unwrap();
        assert_eq!(id, LossId::SquaredEuclidean { dim: 2, radius: None });
        let id: LossId = serde_json::from_str(r#"{"id":"zero_one","classes":4}"#).unwrap();
        assert_eq!(make_loss(&id).unwrap().bound, Some(3.0));
    }

    proptest! {
        #[test]
        fn losses_vanish_on_the_diagonal(a in 0.0f64..std::f64::consts::TAU, w in proptest::collection::vec(0.01f64..1.0, 3)) {
            let s: f64 = w.iter().sum();
            let hist: Vec<f64> = w.iter().map(|v| v / s).collect();
            let circle = vec![a.cos(), a.sin()];
            let checks = [
                (make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap(), circle.clone()),
                (make_loss(&LossId::Hellinger { bins: 3 }).unwrap(), hist),
                (make_loss(&LossId::Kde { kernel: KernelSpec::gaussian(0.3), dim: 2 }).unwrap(), circle),
            ];
            for (loss, p) in checks {
                let v = loss.eval(&Output::Point(p.clone()), &Output::Point(p)).unwrap();
                prop_assert!(v.abs() < 1e-12, "{} gave {v}", loss.name());
            }
        }

        #[test]
        fn losses_are_continuous_along_sequences(a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::TAU) {
            let loss = make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap();
            let y = Output::Point(vec![b.cos(), b.sin()]);
            let base = loss.eval(&Output::Point(vec![a.cos(), a.sin()]), &y).unwrap();
            let mut prev = f64::INFINITY;
            for k in 1..8 {
                let t = a + 10f64.powi(-k);
                let d = (loss.eval(&Output::Point(vec![t.cos(), t.sin()]), &y).unwrap() - base).abs();
                prop_assert!(d <= 2.0 * std::f64::consts::PI * 10f64.powi(-k) + 1e-9);
                prev = prev.min(d);
            }
            prop_assert!(prev < 1e-5);
        }
    }
}
