//! PCA over per-point feature vectors.
//!
//! A model is fit on the union of the memory and scene features and then
//! used to project both into a shared low-dimensional space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::FeatureCloud;

pub const DEFAULT_PCA_DIM: usize = 32;

/// Eigenvalues below `RANK_TOLERANCE * largest` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// `d_out x D`, orthonormal rows.
    components: DMatrix<f64>,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

/// Row-major feature matrix view.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRows<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> FeatureRows<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        debug_assert!(dim == 0 || data.len().is_multiple_of(dim));
        Self { data, dim }
    }

    pub fn of(cloud: &'a FeatureCloud) -> Self {
        Self::new(cloud.features(), cloud.feature_dim())
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }
}

/// Number of eigenvalues that are significantly positive.
pub fn numerical_rank(eigenvalues_desc: &[f64]) -> usize {
    let top = eigenvalues_desc.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    eigenvalues_desc
        .iter()
        .take_while(|v| **v > top * RANK_TOLERANCE)
        .count()
}

struct Spectrum {
    mean: DVector<f64>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn spectrum(a: FeatureRows, b: FeatureRows) -> Result<Spectrum> {
    if a.dim != b.dim {
        return Err(Error::DimMismatch {
            what: "feature dimension",
            expected: a.dim,
            actual: b.dim,
        });
    }
    let dim = a.dim;
    let n = a.rows() + b.rows();
    if dim == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "PCA needs at least one non-empty feature row".into(),
        ));
    }
    let data = DMatrix::from_row_iterator(n, dim, a.data.iter().chain(b.data).copied());
    let mean = data.row_mean().transpose();
    let mut centered = data;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { mean, values, vectors })
}

/// Fits a `d_out`-component PCA on the row-concatenation of `a` and `b`.
pub fn fit_pca(a: FeatureRows, b: FeatureRows, d_out: usize) -> Result<PcaModel> {
    let total_rows = a.rows() + b.rows();
    if d_out == 0 || d_out > a.dim || d_out > total_rows {
        return Err(Error::InvalidConfig(format!(
            "cannot fit {d_out} components on {total_rows} rows of dim {}",
            a.dim
        )));
    }
    let s = spectrum(a, b)?;
    let rank = numerical_rank(&s.values);
    if rank < d_out {
        return Err(Error::RankDeficient {
            requested: d_out,
            achievable: rank,
        });
    }
    Ok(model_from(s, d_out))
}

/// Like [`fit_pca`], but reduces `d_out` to the achievable rank instead of
/// failing. Returns `None` when the union has no variance at all.
pub fn fit_pca_up_to(a: FeatureRows, b: FeatureRows, d_out: usize) -> Result<Option<PcaModel>> {
    let s = spectrum(a, b)?;
    let d = d_out.min(a.dim).min(a.rows() + b.rows()).min(numerical_rank(&s.values));
    if d == 0 {
        return Ok(None);
    }
    Ok(Some(model_from(s, d)))
}

fn model_from(s: Spectrum, d_out: usize) -> PcaModel {
    let dim = s.mean.len();
    let mut components = DMatrix::zeros(d_out, dim);
    for k in 0..d_out {
        let col = s.vectors.column(k);
        let mut pivot = 0;
        for i in 1..dim {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            components[(k, i)] = sign * col[i];
        }
    }
    PcaModel {
        mean: s.mean,
        components,
        explained_variance: s.values[..d_out].to_vec(),
        total_variance: s.values.iter().sum(),
    }
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    pub fn project_vector(&self, f: &[f64]) -> Vec<f64> {
        let centered = DVector::from_column_slice(f) - &self.mean;
        (&self.components * centered).as_slice().to_vec()
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let back = self.components.tr_mul(&DVector::from_column_slice(z)) + &self.mean;
        back.as_slice().to_vec()
    }

    /// Same geometry, features replaced by their projections.
    pub fn project(&self, cloud: &FeatureCloud) -> Result<FeatureCloud> {
        if cloud.feature_dim() != self.input_dim() {
            return Err(Error::DimMismatch {
                what: "cloud feature dimension vs PCA input",
                expected: self.input_dim(),
                actual: cloud.feature_dim(),
            });
        }
        let n = cloud.len();
        let data = DMatrix::from_row_slice(n, self.input_dim(), cloud.features());
        let mut centered = data;
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        // (n x D) * (D x d) -> n x d, emitted row-major
        let projected = centered * self.components.transpose();
        let mut flat = Vec::with_capacity(n * self.output_dim());
        for row in projected.row_iter() {
            flat.extend(row.iter());
        }
        cloud.with_features(flat, self.output_dim())
    }
}

/// Per-point RGB in [0, 1] from a 3-component model; each channel is min-max
/// normalized over the cloud, and a constant channel maps to 0.5.
pub fn visualization_projection(model: &PcaModel, cloud: &FeatureCloud) -> Result<Vec<[f64; 3]>> {
    if model.output_dim() != 3 {
        return Err(Error::InvalidConfig(format!(
            "colour projection needs a 3-component model, got {}",
            model.output_dim()
        )));
    }
    Ok(unit_channels(&model.project(cloud)?))
}

/// Min-max normalizes up to three feature channels into RGB; absent or
/// constant channels are 0.5.
fn unit_channels(projected: &FeatureCloud) -> Vec<[f64; 3]> {
    let channels = projected.feature_dim().min(3);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..projected.len() {
        for (c, v) in projected.feature(i).iter().take(channels).enumerate() {
            lo[c] = lo[c].min(*v);
            hi[c] = hi[c].max(*v);
        }
    }
    (0..projected.len())
        .map(|i| {
            let f = projected.feature(i);
            let mut rgb = [0.5; 3];
            for c in 0..channels {
                let range = hi[c] - lo[c];
                if range > 1e-12 {
                    rgb[c] = ((f[c] - lo[c]) / range).clamp(0.0, 1.0);
                }
            }
            rgb
        })
        .collect()
}

/// Colours for `cloud` from a PCA fit on it together with `others`. Works on
/// any input: components the data cannot support are left mid-grey.
pub fn feature_colours(cloud: &FeatureCloud, others: &[&FeatureCloud]) -> Result<Vec<[f64; 3]>> {
    let mut all = vec![cloud];
    all.extend_from_slice(others);
    let union = FeatureCloud::concat(&all)?;
    if union.feature_dim() == 0 {
        return Ok(vec![[0.5; 3]; cloud.len()]);
    }
    let empty = FeatureRows::new(&[], union.feature_dim());
    match fit_pca_up_to(FeatureRows::of(&union), empty, 3)? {
        Some(model) if model.output_dim() == 3 => visualization_projection(&model, cloud),
        Some(model) => Ok(unit_channels(&model.project(cloud)?)),
        None => Ok(vec![[0.5; 3]; cloud.len()]),
    }
}
