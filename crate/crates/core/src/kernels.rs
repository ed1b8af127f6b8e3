//! Positive-definite kernels on ℝᵈ, Gram matrices and evaluation vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-‖x − x′‖² / σ²)`
    Gaussian,
    /// `exp(-‖x − x′‖ / σ)`
    Laplacian,
    /// `⟨x, x′⟩` on a ball of the declared radius.
    Linear,
}

/// A kernel family with its parameters, serialized as `{family, sigma, domain_radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Bandwidth; ignored by the linear kernel.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Radius of the input domain; only meaningful for the linear kernel,
    /// where it fixes `κ² = radius²`.
    #[serde(default)]
    pub domain_radius: Option<f64>,
}

fn default_sigma() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec { family: KernelFamily::Gaussian, sigma, domain_radius: None }
    }

    pub fn laplacian(sigma: f64) -> Self {
        KernelSpec { family: KernelFamily::Laplacian, sigma, domain_radius: None }
    }

    pub fn linear(domain_radius: f64) -> Self {
        KernelSpec { family: KernelFamily::Linear, sigma: 1.0, domain_radius: Some(domain_radius) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian => {
                if !(self.sigma > 0.0 && self.sigma.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "kernel bandwidth must be positive, got {}",
                        self.sigma
                    )));
                }
            }
            KernelFamily::Linear => match self.domain_radius {
                Some(r) if r > 0.0 && r.is_finite() => {}
                other => {
                    return Err(Error::Parameter(format!(
                        "linear kernel needs a positive domain radius, got {other:?}"
                    )))
                }
            },
        }
        Ok(())
    }

    /// `κ² = sup_x k(x, x)` over the declared domain.
    pub fn kappa_sq(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian | KernelFamily::Laplacian => 1.0,
            KernelFamily::Linear => self.domain_radius.map_or(f64::INFINITY, |r| r * r),
        }
    }

    /// Kernel value without dimension checks; callers guarantee equal lengths.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (self.sigma * self.sigma)).exp()
            }
            KernelFamily::Laplacian => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2.sqrt() / self.sigma).exp()
            }
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Gram matrix `K_ij = k(x_i, x_j)`, symmetrized as `(K + Kᵀ)/2`.
    pub fn gram(&self, xs: &[Vec<f64>]) -> Result<GramMatrix> {
        let d = input_dim(xs)?;
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = self.eval_unchecked(&xs[i], &xs[j]);
            }
        }
        crate::linalg::symmetrize(&mut k);
        debug_assert!(xs.iter().all(|x| x.len() == d));
        Ok(GramMatrix { entries: k, kappa_sq: self.kappa_sq() })
    }

    /// Evaluation vector `v(x)_i = k(x, x_i)`.
    pub fn eval_vector(&self, train: &[Vec<f64>], x: &[f64]) -> Result<DVector<f64>> {
        let d = input_dim(train)?;
        check_dims(d, x.len())?;
        Ok(DVector::from_iterator(
            train.len(),
            train.iter().map(|xi| self.eval_unchecked(x, xi)),
        ))
    }

    /// Cross-kernel matrix with rows indexed by `rows` and columns by `cols`.
    pub fn cross(&self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let d = input_dim(rows)?;
        check_dims(d, input_dim(cols)?)?;
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.eval_unchecked(&rows[i], &cols[j])
        }))
    }
}

/// Checks that a point list is nonempty with a common dimension and returns it.
pub(crate) fn input_dim(xs: &[Vec<f64>]) -> Result<usize> {
    let first = xs.first().ok_or_else(|| Error::Input("empty input list".into()))?;
    let d = first.len();
    for x in xs {
        check_dims(d, x.len())?;
    }
    Ok(d)
}

/// Empirical kernel matrix of a point list.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    kappa_sq: f64,
}

impl GramMatrix {
    /// Wraps an arbitrary symmetric matrix, e.g. a synthetic spectrum.
    pub fn from_matrix(mut entries: DMatrix<f64>, kappa_sq: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Input("gram matrix must be square and nonempty".into()));
        }
        crate::linalg::symmetrize(&mut entries);
        Ok(GramMatrix { entries, kappa_sq })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let g = KernelSpec::gaussian(1.0);
        assert_eq!(g.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        assert_eq!(KernelSpec::linear(1.0).eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(g.eval(&[0.0], &[1.0]).unwrap(), 0.367_879_441_171_442_3, epsilon = 1e-15);
        assert_relative_eq!(
            KernelSpec::laplacian(2.0).eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            (-2.5_f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let g = KernelSpec::gaussian(1.0);
        assert!(matches!(g.eval(&[0.0], &[0.0, 1.0]), Err(Error::Input(_))));
        assert!(matches!(g.eval_vector(&[vec![0.0]], &[1.0, 2.0]), Err(Error::Input(_))));
        assert!(matches!(g.gram(&[]), Err(Error::Input(_))));
        assert!(matches!(g.gram(&[vec![0.0], vec![1.0, 2.0]]), Err(Error::Input(_))));
    }

    #[test]
    fn gram_examples() {
        let k = KernelSpec::linear(1.0).gram(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(k.matrix(), &DMatrix::identity(2, 2));
        let k = KernelSpec::gaussian(1.0).gram(&[vec![0.0], vec![1.0]]).unwrap();
        let e = (-1.0_f64).exp();
        assert_eq!(k.matrix()[(0, 0)], 1.0);
        assert_eq!(k.matrix()[(1, 1)], 1.0);
        assert_relative_eq!(k.matrix()[(0, 1)], e, epsilon = 1e-15);
        assert_relative_eq!(k.matrix()[(1, 0)], e, epsilon = 1e-15);
    }

    #[test]
    fn eval_vector_examples() {
        let g = KernelSpec::gaussian(1.0);
        let xs = vec![vec![0.0], vec![2.0]];
        let v = g.eval_vector(&xs, &[1.0]).unwrap();
        let e = (-1.0_f64).exp();
        assert_relative_eq!(v[0], e, epsilon = 1e-15);
        assert_relative_eq!(v[1], e, epsilon = 1e-15);
        assert_eq!(g.eval_vector(&xs, &[2.0]).unwrap()[1], 1.0);
        let lin = KernelSpec::linear(3.0).eval_vector(&[vec![1.0, 2.0], vec![-1.0, 0.5]], &[0.0, 0.0]).unwrap();
        assert_eq!(lin, DVector::zeros(2));
    }

    #[test]
    fn parameter_validation() {
        assert!(KernelSpec::gaussian(0.0).validate().is_err());
        assert!(KernelSpec::laplacian(-1.0).validate().is_err());
        assert!(KernelSpec { family: KernelFamily::Linear, sigma: 1.0, domain_radius: None }.validate().is_err());
        assert_eq!(KernelSpec::linear(2.0).kappa_sq(), 4.0);
        assert_eq!(KernelSpec::laplacian(0.3).kappa_sq(), 1.0);
    }

    #[test]
    fn config_record_shape() {
        let text = serde_json::to_string(&KernelSpec::gaussian(0.5)).unwrap();
        assert_eq!(text, r#"{"family":"gaussian","sigma":0.5,"domain_radius":null}"#);
        let back: KernelSpec = serde_json::from_str(r#"{"family":"linear","domain_radius":2.0}"#).unwrap();
        assert_eq!(back, KernelSpec::linear(2.0));
    }

    #[test]
    fn bandwidth_monotonicity() {
        let (x, y) = ([0.1, 0.2], [0.9, -0.4]);
        let mut prev = 0.0;
        for s in [0.1, 0.3, 0.7, 1.0, 2.0, 5.0] {
            let k = KernelSpec::gaussian(s).eval(&x, &y).unwrap();
            assert!(k > prev);
            prev = k;
        }
    }

    fn points(max_n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), 1..=max_n)
    }

    fn family() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.2..3.0f64).prop_map(KernelSpec::gaussian),
            (0.2..3.0f64).prop_map(KernelSpec::laplacian),
            Just(KernelSpec::linear(2.0 * 3.0_f64.sqrt())),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gram_is_psd_up_to_roundoff(spec in family(), xs in points(50, 3)) {
            let k = spec.gram(&xs).unwrap();
            let n = k.n() as f64;
            let (vals, _) = crate::linalg::sym_eigen(k.matrix()).unwrap();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-10 * n * spec.kappa_sq(), "min eigenvalue {}", min);
            prop_assert_eq!(k.matrix().transpose(), k.matrix().clone());
        }

        #[test]
        fn eval_vector_is_gram_row(spec in family(), xs in points(20, 2), pick in 0usize..20) {
            let j = pick % xs.len();
            let k = spec.gram(&xs).unwrap();
            let v = spec.eval_vector(&xs, &xs[j]).unwrap();
            for i in 0..xs.len() {
                prop_assert_eq!(v[i], k.matrix()[(j, i)]);
            }
        }

        #[test]
        fn symmetric_evaluation(spec in family(), x in prop::collection::vec(-2.0..2.0f64, 3), y in prop::collection::vec(-2.0..2.0f64, 3)) {
            prop_assert_eq!(spec.eval(&x, &y).unwrap(), spec.eval(&y, &x).unwrap());
        }
    }
}
