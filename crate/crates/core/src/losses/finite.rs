use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LossSpec, Output};
use crate::error::{Error, Result};
use crate::linalg::operator_norm;

/// Relative tolerance of the power iteration for `‖V‖`.
const OPNORM_TOL: f64 = 1e-10;
/// Default inflation of grid-estimated suprema.
pub const DEFAULT_INFLATION: f64 = 0.05;

/// Explicit embedding of a loss on finite `Z × Y` through its loss matrix.
///
/// `V_ij = Δ(z_i, y_j)`, `ψ(z_i) = Φ · Vᵀe_i` and `φ(y_j) = e_j / Φ` with
/// `Φ = max_j ‖e_j‖ = 1`. Rows of the two tables are the embeddings.
#[derive(Debug, Clone)]
pub struct FiniteEmbedding {
    outputs: Vec<Output>,
    labels: Vec<Output>,
    v: DMatrix<f64>,
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    closs_bound: f64,
}

/// Rescales row embeddings so that the largest `φ` row has unit norm.
fn normalize(mut psi: DMatrix<f64>, mut phi: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let scale = phi.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max);
    if scale > 0.0 {
        psi *= scale;
        phi /= scale;
    }
    (psi, phi)
}

pub fn finite_embedding(loss: &LossSpec, outputs: &[Output], labels: &[Output]) -> Result<FiniteEmbedding> {
    if outputs.is_empty() || labels.is_empty() {
        return Err(Error::Input("finite embedding needs nonempty output and label lists".into()));
    }
    let mut v = DMatrix::zeros(outputs.len(), labels.len());
    for (i, z) in outputs.iter().enumerate() {
        for (j, y) in labels.iter().enumerate() {
            v[(i, j)] = loss.eval(z, y)?;
        }
    }
    let (psi, phi) = normalize(v.clone(), DMatrix::identity(labels.len(), labels.len()));
    let closs_bound = operator_norm(&v, OPNORM_TOL);
    Ok(FiniteEmbedding { outputs: outputs.to_vec(), labels: labels.to_vec(), v, psi, phi, closs_bound })
}

fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0_f64, f64::max)
}

impl FiniteEmbedding {
    pub fn outputs(&self) -> &[Output] {
        &self.outputs
    }

    pub fn labels(&self) -> &[Output] {
        &self.labels
    }

    /// The loss matrix `V` (outputs × labels).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Operator norm `‖V‖`.
    pub fn closs_bound(&self) -> f64 {
        self.closs_bound
    }

    pub fn psi(&self, i: usize) -> DVector<f64> {
        self.psi.row(i).transpose()
    }

    pub fn phi(&self, j: usize) -> DVector<f64> {
        self.phi.row(j).transpose()
    }

    /// `max_i ‖ψ(z_i)‖`.
    pub fn psi_sup(&self) -> f64 {
        max_row_norm(&self.psi)
    }

    /// `max_j ‖φ(y_j)‖`.
    pub fn phi_sup(&self) -> f64 {
        max_row_norm(&self.phi)
    }

    pub fn output_index(&self, z: &Output) -> Option<usize> {
        self.outputs.iter().position(|o| o == z)
    }

    pub fn label_index(&self, y: &Output) -> Option<usize> {
        self.labels.iter().position(|o| o == y)
    }

    /// `max_ij |⟨ψ(z_i), φ(y_j)⟩ − V_ij|`.
    pub fn reconstruction_error(&self) -> f64 {
        let recon = &self.psi * self.phi.transpose();
        (recon - &self.v).abs().max()
    }

    /// `g = Σ_i α_i φ(y_i)` for labels given by table index.
    pub fn embed_mixture(&self, label_indices: &[usize], alpha: &DVector<f64>) -> Result<DVector<f64>> {
        if label_indices.len() != alpha.len() {
            return Err(Error::Input(format!(
                "{} labels but {} weights",
                label_indices.len(),
                alpha.len()
            )));
        }
        let mut g = DVector::zeros(self.phi.ncols());
        for (&j, &a) in label_indices.iter().zip(alpha.iter()) {
            if j >= self.labels.len() {
                return Err(Error::Input(format!("label index {j} out of range")));
            }
            g += self.phi.row(j).transpose() * a;
        }
        Ok(g)
    }

    /// Scores `⟨ψ(z_i), g⟩` for every tabulated output.
    pub fn scores(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        if g.len() != self.psi.ncols() {
            return Err(Error::Input(format!("embedding has dimension {}, got {}", self.psi.ncols(), g.len())));
        }
        Ok(&self.psi * g)
    }

    /// Writes `V` as CSV: a header with the labels, then one row per output.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let ser = |o: &Output| serde_json::to_string(o).map_err(|e| Error::Serialization(e.to_string()));
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header = vec!["output".to_string()];
        for y in &self.labels {
            header.push(ser(y)?);
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, z) in self.outputs.iter().enumerate() {
            let mut row = vec![ser(z)?];
            row.extend(self.v.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Which side of the loss is the finite one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteSide {
    Outputs,
    Labels,
}

/// Embedding of a loss with one finite side.
///
/// With finite outputs `z_1..z_p`: `φ(y) = (Δ(z_1, y), …, Δ(z_p, y)) / r`
/// and `ψ(z_i) = r e_i`. With finite labels `y_1..y_q`:
/// `ψ(z) = (Δ(z, y_1), …, Δ(z, y_q))` and `φ(y_j) = e_j`. In both cases
/// `r = sup √(Σ Δ²)` over the continuous side, estimated on a grid and
/// inflated by a relative margin.
#[derive(Debug, Clone)]
pub struct SemiFiniteEmbedding {
    loss: LossSpec,
    side: FiniteSide,
    finite: Vec<Output>,
    grid_sup: f64,
    radius: f64,
    argmax: Output,
}

pub fn semi_finite_embedding(loss: &LossSpec, side: FiniteSide, finite: &[Output]) -> Result<SemiFiniteEmbedding> {
    SemiFiniteEmbedding::with_inflation(loss, side, finite, DEFAULT_INFLATION)
}

impl SemiFiniteEmbedding {
    pub fn with_inflation(loss: &LossSpec, side: FiniteSide, finite: &[Output], inflation: f64) -> Result<Self> {
        if finite.is_empty() {
            return Err(Error::Input("semi-finite embedding needs a nonempty finite side".into()));
        }
        if !(inflation >= 0.0 && inflation.is_finite()) {
            return Err(Error::Parameter(format!("inflation must be nonnegative, got {inflation}")));
        }
        let (finite_space, other_space) = match side {
            FiniteSide::Outputs => (&loss.outputs, &loss.labels),
            FiniteSide::Labels => (&loss.labels, &loss.outputs),
        };
        if let Some(bad) = finite.iter().find(|o| !finite_space.contains(o)) {
            return Err(Error::Input(format!("{bad:?} is not in {}", finite_space.describe())));
        }
        let grid = other_space.sup_grid()?;
        let mut best = (-1.0_f64, 0usize);
        for (k, w) in grid.iter().enumerate() {
            let mut sq = 0.0;
            for f in finite {
                let d = match side {
                    FiniteSide::Outputs => loss.eval(f, w),
                    FiniteSide::Labels => loss.eval(w, f),
                }
                .map_err(|e| Error::BoundEstimation(format!("loss evaluation failed at {w:?}: {e}")))?;
                sq += d * d;
            }
            if !sq.is_finite() || sq > 1e300 {
                return Err(Error::BoundEstimation(format!(
                    "loss is unbounded on the sampled grid: Σ Δ² = {sq} at {w:?}"
                )));
            }
            if sq > best.0 {
                best = (sq, k);
            }
        }
        let grid_sup = best.0.sqrt();
        Ok(SemiFiniteEmbedding {
            loss: loss.clone(),
            side,
            finite: finite.to_vec(),
            grid_sup,
            radius: grid_sup * (1.0 + inflation),
            argmax: grid[best.1].clone(),
        })
    }

    pub fn side(&self) -> FiniteSide {
        self.side
    }

    pub fn finite(&self) -> &[Output] {
        &self.finite
    }

    /// Uninflated grid maximum of `√(Σ Δ²)`.
    pub fn grid_sup(&self) -> f64 {
        self.grid_sup
    }

    /// Grid point attaining [`grid_sup`](Self::grid_sup).
    pub fn argmax(&self) -> &Output {
        &self.argmax
    }

    /// The embedding constant `r`.
    pub fn closs_bound(&self) -> f64 {
        self.radius
    }

    fn loss_vector(&self, w: &Output) -> Result<DVector<f64>> {
        let vals = self
            .finite
            .iter()
            .map(|f| match self.side {
                FiniteSide::Outputs => self.loss.eval(f, w),
                FiniteSide::Labels => self.loss.eval(w, f),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    fn unit(&self, o: &Output) -> Result<DVector<f64>> {
        let k = self
            .finite
            .iter()
            .position(|f| f == o)
            .ok_or_else(|| Error::Input(format!("{o:?} is not on the finite side")))?;
        let mut e = DVector::zeros(self.finite.len());
        e[k] = 1.0;
        Ok(e)
    }

    pub fn psi(&self, z: &Output) -> Result<DVector<f64>> {
        match self.side {
            FiniteSide::Outputs => Ok(self.unit(z)? * self.radius),
            FiniteSide::Labels => self.loss_vector(z),
        }
    }

    pub fn phi(&self, y: &Output) -> Result<DVector<f64>> {
        match self.side {
            FiniteSide::Outputs => {
                let v = self.loss_vector(y)?;
                Ok(if self.radius > 0.0 { v / self.radius } else { v })
            }
            FiniteSide::Labels => self.unit(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{constant_loss, make_loss, restrict, LossId, OutputSpace};
    use super::*;

    fn classes(n: usize) -> Vec<Output> {
        (0..n).map(Output::Class).collect()
    }

    #[test]
    fn zero_one_two_classes_is_the_swap_matrix() {
        let l = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        let e = finite_embedding(&l, &classes(2), &classes(2)).unwrap();
        assert_eq!(e.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!((e.closs_bound() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_one_matrix_is_ones_minus_identity() {
        for t in 2..7 {
            let l = make_loss(&LossId::ZeroOne { classes: t }).unwrap();
            let e = finite_embedding(&l, &classes(t), &classes(t)).unwrap();
            let expected = DMatrix::from_element(t, t, 1.0) - DMatrix::identity(t, t);
            assert_eq!(e.matrix(), &expected);
            assert!(e.reconstruction_error() <= 1e-12);
            assert!(e.phi_sup() <= 1.0);
            assert!(e.psi_sup() <= e.closs_bound());
            assert!((e.closs_bound() - (t - 1) as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_zero_loss() {
        let l = constant_loss(0.0, OutputSpace::Classes { count: 3 }, OutputSpace::Classes { count: 2 }).unwrap();
        let e = finite_embedding(&l, &classes(3), &classes(2)).unwrap();
        assert_eq!(e.matrix(), &DMatrix::zeros(3, 2));
        assert_eq!(e.closs_bound(), 0.0);
    }

    #[test]
    fn restriction_keeps_reconstruction_exact() {
        let l = make_loss(&LossId::ZeroOne { classes: 4 }).unwrap();
        let sub = vec![Output::Class(1), Output::Class(3)];
        let r = restrict(&l, &sub, &sub).unwrap();
        let e = finite_embedding(&r, &sub, &sub).unwrap();
        assert!(e.reconstruction_error() <= 1e-12);
        let single = restrict(&l, &[Output::Class(2)], &classes(4)).unwrap();
        let e = finite_embedding(&single, &[Output::Class(2)], &classes(4)).unwrap();
        assert_eq!(e.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn explicit_scores_match_loss_sums() {
        let l = make_loss(&LossId::ZeroOne { classes: 3 }).unwrap();
        let e = finite_embedding(&l, &classes(3), &classes(3)).unwrap();
        let idx = [0, 2, 2, 1];
        let alpha = DVector::from_vec(vec![0.5, -0.25, 1.0, 0.1]);
        let s = e.scores(&e.embed_mixture(&idx, &alpha).unwrap()).unwrap();
        for z in 0..3 {
            let direct: f64 = idx.iter().zip(alpha.iter()).map(|(&j, a)| a * e.matrix()[(z, j)]).sum();
            assert!((s[z] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_export() {
        let l = make_loss(&LossId::ZeroOne { classes: 2 }).unwrap();
        let e = finite_embedding(&l, &classes(2), &classes(2)).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "output,\"{\"\"class\"\":0}\",\"{\"\"class\"\":1}\"\n\"{\"\"class\"\":0}\",0,1\n\"{\"\"class\"\":1}\",1,0\n");
    }

    #[test]
    fn semi_finite_constant() {
        let l = constant_loss(-1.5, OutputSpace::Classes { count: 1 }, OutputSpace::Interval { lo: 0.0, hi: 1.0 })
            .unwrap();
        let e = SemiFiniteEmbedding::with_inflation(&l, FiniteSide::Outputs, &classes(1), 0.0).unwrap();
        assert_eq!(e.closs_bound(), 1.5);
        let phi = e.phi(&Output::scalar(0.3)).unwrap();
        assert_eq!(phi.as_slice(), &[-1.0]);
    }

    #[test]
    fn semi_finite_hinge_radius() {
        let l = make_loss(&LossId::Hinge).unwrap();
        let zs = vec![Output::scalar(-1.0), Output::scalar(1.0)];
        let e = SemiFiniteEmbedding::with_inflation(&l, FiniteSide::Outputs, &zs, 0.0).unwrap();
        assert!((e.grid_sup() - 2.0).abs() < 1e-12);
        let y = e.argmax().as_point().unwrap()[0];
        assert!(y.abs() == 1.0, "{y}");
        let inflated = semi_finite_embedding(&l, FiniteSide::Outputs, &zs).unwrap();
        assert!((inflated.closs_bound() - 2.1).abs() < 1e-12);
        for k in 0..=20 {
            let y = Output::scalar(-1.0 + k as f64 / 10.0);
            assert!(inflated.phi(&y).unwrap().norm() <= 1.0);
            for z in &zs {
                let recon = inflated.psi(z).unwrap().dot(&inflated.phi(&y).unwrap());
                assert!((recon - l.eval(z, &y).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semi_finite_matches_finite_on_finite_labels() {
        let l = make_loss(&LossId::ZeroOne { classes: 3 }).unwrap();
        let fe = finite_embedding(&l, &classes(3), &classes(3)).unwrap();
        for side in [FiniteSide::Outputs, FiniteSide::Labels] {
            let se = semi_finite_embedding(&l, side, &classes(3)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let a = se.psi(&Output::Class(i)).unwrap().dot(&se.phi(&Output::Class(j)).unwrap());
                    let b = fe.psi(i).dot(&fe.phi(j));
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn semi_finite_bound_estimation_errors() {
        let l = make_loss(&LossId::SquaredEuclidean { dim: 2, radius: None }).unwrap();
        let err = semi_finite_embedding(&l, FiniteSide::Outputs, &[Output::Point(vec![0.0, 0.0])]).unwrap_err();
        assert!(matches!(err, Error::BoundEstimation(_)));
        let l = make_loss(&LossId::Hinge).unwrap();
        assert!(semi_finite_embedding(&l, FiniteSide::Outputs, &[Output::scalar(0.5)]).is_err());
    }

    #[test]
    fn semi_finite_on_the_circle() {
        // Three fixed directions against all of S¹: the maximum of √(Σθ²) is
        // attained antipodally to one of them and cannot exceed √3·π.
        let l = make_loss(&LossId::GeodesicSphereSq { dim: 2 }).unwrap();
        let zs: Vec<Output> = [0.0f64, 2.0, 4.0].iter().map(|t| Output::Point(vec![t.cos(), t.sin()])).collect();
        let e = semi_finite_embedding(&l, FiniteSide::Outputs, &zs).unwrap();
        assert!(e.grid_sup() <= 3f64.sqrt() * std::f64::consts::PI.powi(2));
        assert!(e.grid_sup() >= std::f64::consts::PI.powi(2));
    }
}
