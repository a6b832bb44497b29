//! Resultant operators used for external estimation.
//!
//! The resultant of `y` on a weighted group `(X, M)` is `X M Xᵀ y`: its
//! direction locates `y`'s concordance with the group, its norm measures how
//! strong that concordance is. Everything here returns unnormalized vectors so
//! that information survives; callers standardize.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, FactorScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Identity,
    BlockInverseGram,
    MfaWeights,
    Custom,
}

/// Disjoint, covering list of column-index sub-groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition(Vec<Vec<usize>>);

impl Partition {
    /// Validates that `blocks` cover `0..ncols` exactly once.
    pub fn new(blocks: Vec<Vec<usize>>, ncols: usize) -> Result<Self> {
        let mut seen = vec![false; ncols];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::EmptySubgroup);
            }
            for &j in block {
                if j >= ncols {
                    return Err(Error::BadPartition(format!(
                        "column {j} out of range for a block of {ncols} columns"
                    )));
                }
                if seen[j] {
                    return Err(Error::BadPartition(format!("column {j} appears twice")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::BadPartition(format!("column {j} is not covered")));
        }
        Ok(Partition(blocks))
    }

    pub fn singletons(ncols: usize) -> Self {
        Partition((0..ncols).map(|j| vec![j]).collect())
    }

    pub fn whole(ncols: usize) -> Self {
        Partition(vec![(0..ncols).collect()])
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.0
    }

    pub fn ncols(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }
}

fn sub_block(x: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(1), cols)
}

/// A symmetric PSD weight matrix on a group's columns.
#[derive(Debug, Clone)]
pub struct Metric {
    matrix: Array2<f64>,
    kind: MetricKind,
    partition: Option<Partition>,
}

impl Metric {
    pub fn identity(ncols: usize) -> Self {
        Metric {
            matrix: Array2::eye(ncols),
            kind: MetricKind::Identity,
            partition: None,
        }
    }

    /// Wraps an arbitrary matrix after checking symmetry and semidefiniteness.
    pub fn custom(matrix: Array2<f64>, partition: Option<Partition>) -> Result<Self> {
        linalg::sym_eig(matrix.view())?;
        if let Some(p) = &partition {
            if p.ncols() != matrix.nrows() {
                return Err(Error::BadPartition(format!(
                    "partition covers {} columns, metric has {}",
                    p.ncols(),
                    matrix.nrows()
                )));
            }
        }
        Ok(Metric {
            matrix,
            kind: MetricKind::Custom,
            partition,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The sub-groups the closeness bonus is computed over: the declared
    /// partition, or one sub-group per column when there is none.
    pub fn bonus_partition(&self) -> Partition {
        self.partition
            .clone()
            .unwrap_or_else(|| Partition::singletons(self.dim()))
    }
}

/// Builds a group metric of the requested kind.
///
/// Block kinds need a partition: `block_inverse_gram` puts `pinv(X_rᵀX_r)` on
/// each sub-group, `mfa_weights` puts `I / λ₁(X_r)` where `λ₁` is the
/// sub-group's largest PCA eigenvalue.
pub fn build_metric(
    kind: MetricKind,
    x: ArrayView2<f64>,
    partition: Option<&Partition>,
) -> Result<Metric> {
    let j = x.ncols();
    if let Some(p) = partition {
        if p.ncols() != j {
            return Err(Error::BadPartition(format!(
                "partition covers {} columns, group has {j}",
                p.ncols()
            )));
        }
    }
    match kind {
        MetricKind::Identity => Ok(Metric {
            matrix: Array2::eye(j),
            kind,
            partition: partition.cloned(),
        }),
        MetricKind::BlockInverseGram | MetricKind::MfaWeights => {
            let p = partition.ok_or_else(|| {
                Error::BadPartition(format!("{kind:?} metric needs a partition"))
            })?;
            let mut m = Array2::zeros((j, j));
            for block in p.blocks() {
                let xr = sub_block(x, block);
                let gram = xr.t().dot(&xr);
                let weights = match kind {
                    MetricKind::BlockInverseGram => linalg::pinv_sym(gram.view())?,
                    _ => {
                        let top = linalg::sym_eig(gram.view())?.eigenvalues[0];
                        if top <= 0.0 {
                            return Err(Error::EmptySubgroup);
                        }
                        Array2::eye(block.len()) / top
                    }
                };
                for (a, &ja) in block.iter().enumerate() {
                    for (b, &jb) in block.iter().enumerate() {
                        m[[ja, jb]] = weights[[a, b]];
                    }
                }
            }
            Ok(Metric {
                matrix: m,
                kind,
                partition: Some(p.clone()),
            })
        }
        MetricKind::Custom => Err(Error::InvalidParameter(
            "custom metrics are built with Metric::custom".into(),
        )),
    }
}

/// Applies `(B Bᵀ)^α` to `y` through the thin SVD of `B`, never forming the
/// `n × n` operator.
fn powered_gram_apply(b: ArrayView2<f64>, alpha: f64, y: ArrayView1<f64>) -> Array1<f64> {
    let svd = linalg::thin_svd(b);
    let r = svd.rank();
    let u = svd.u.slice(s![.., ..r]);
    let mut coords = u.t().dot(&y);
    if alpha != 0.0 {
        for (c, sigma) in coords.iter_mut().zip(svd.singular_values.iter()) {
            *c *= (sigma * sigma).powf(alpha);
        }
    }
    u.dot(&coords)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha < 0.0 || alpha.is_nan() {
        return Err(Error::NegativeAlpha(alpha));
    }
    Ok(())
}

/// `(X M Xᵀ)^α y`, the α-degree resultant of `y` on the weighted group.
pub fn linear_resultant(
    x: ArrayView2<f64>,
    metric: &Metric,
    y: ArrayView1<f64>,
    alpha: f64,
) -> Result<Array1<f64>> {
    check_alpha(alpha)?;
    if x.nrows() != y.len() || x.ncols() != metric.dim() {
        return Err(Error::DimensionMismatch(format!(
            "group is {}×{}, metric {}×{}, vector length {}",
            x.nrows(),
            x.ncols(),
            metric.dim(),
            metric.dim(),
            y.len()
        )));
    }
    let b = if metric.kind == MetricKind::Identity {
        x.to_owned()
    } else {
        x.dot(&linalg::sym_power(metric.matrix.view(), 0.5)?)
    };
    Ok(powered_gram_apply(b.view(), alpha, y))
}

fn check_partition(x: ArrayView2<f64>, partition: &Partition, y: ArrayView1<f64>) -> Result<()> {
    if partition.ncols() != x.ncols() {
        return Err(Error::BadPartition(format!(
            "partition covers {} columns, group has {}",
            partition.ncols(),
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "group has {} rows, vector length {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Order-`k` non-linear resultant `Σ_r ‖Π_⟨X_r⟩ y‖^{2k} Π_⟨X_r⟩ y`.
pub fn nl_resultant_grouped(
    x: ArrayView2<f64>,
    partition: &Partition,
    k: u32,
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_partition(x, partition, y)?;
    let mut out = Array1::zeros(y.len());
    for block in partition.blocks() {
        let xr = sub_block(x, block);
        let proj = linalg::project_span(xr.view(), y)?;
        let weight = proj.dot(&proj).powi(k as i32);
        out.scaled_add(weight, &proj);
    }
    Ok(out)
}

/// The local metric `Diag({‖Π_⟨X_r⟩ y‖^{2k} pinv(X_rᵀX_r)}_r)`, for which
/// `X M Xᵀ y` equals [`nl_resultant_grouped`].
pub fn local_metric(
    x: ArrayView2<f64>,
    partition: &Partition,
    k: u32,
    y: ArrayView1<f64>,
) -> Result<Metric> {
    check_partition(x, partition, y)?;
    let base = build_metric(MetricKind::BlockInverseGram, x, Some(partition))?;
    let mut m = bonus_metric(&base, x, y, k)?;
    m.kind = MetricKind::Custom;
    m.partition = Some(partition.clone());
    Ok(m)
}

/// Scales each sub-group block of `base` by `‖Π_⟨X_r⟩ y‖^{2k}`.
///
/// With no declared partition every column is its own sub-group, which turns
/// the identity metric into `Diag(cos^{2k}(x^j, y))`. At `k = 0` the base
/// metric comes back unchanged.
pub fn bonus_metric(base: &Metric, x: ArrayView2<f64>, y: ArrayView1<f64>, k: u32) -> Result<Metric> {
    if k == 0 {
        return Ok(base.clone());
    }
    let partition = base.bonus_partition();
    check_partition(x, &partition, y)?;
    let mut m = Array2::zeros(base.matrix.raw_dim());
    for block in partition.blocks() {
        let xr = sub_block(x, block);
        let proj = linalg::project_span(xr.view(), y)?;
        let weight = proj.dot(&proj).powi(k as i32);
        for &a in block {
            for &b in block {
                m[[a, b]] = weight * base.matrix[[a, b]];
            }
        }
    }
    Ok(Metric {
        matrix: m,
        kind: MetricKind::Custom,
        partition: base.partition.clone(),
    })
}

/// `(X M_{X,y,k} Xᵀ)^α y` with the local metric frozen at the input `y`.
pub fn powered_local_resultant(
    x: ArrayView2<f64>,
    partition: &Partition,
    k: u32,
    alpha: f64,
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_alpha(alpha)?;
    let m = local_metric(x, partition, k, y)?;
    linear_resultant(x, &m, y, alpha)
}

/// `Σ_h Σ_j cos^{2k}(x^j, F^h)` over mutually orthogonal factors, `k ≥ 2`.
pub fn quartimax_criterion(x: ArrayView2<f64>, factors: &[FactorScores], k: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "quartimax order must be at least 2, got {k}"
        )));
    }
    for (a, fa) in factors.iter().enumerate() {
        if fa.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "factor {a} has length {}, group has {} rows",
                fa.len(),
                x.nrows()
            )));
        }
        for (b, fb) in factors.iter().enumerate().skip(a + 1) {
            let ip = fa.scores().dot(fb.scores());
            if ip.abs() > 1e-8 {
                return Err(Error::NonOrthogonalFactors(a, b, ip));
            }
        }
    }
    let mut total = 0.0;
    for f in factors {
        for col in x.columns() {
            let cos = col.dot(f.scores()) / linalg::norm(col);
            total += cos.powi(2 * k as i32);
        }
    }
    Ok(total)
}
