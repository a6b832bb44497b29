use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, FactorScores};
use crate::model::{EstimationConfig, GroupBinding, ModelSpec};
use crate::resultants::{build_metric, Metric, Partition};

/// A group ready for estimation.
#[derive(Debug, Clone)]
pub struct PreparedGroup {
    pub lv: String,
    pub columns: Vec<String>,
    /// Standardized observed columns, used for loadings and weights.
    pub standardized: Array2<f64>,
    /// The block the algorithms work on: `standardized`, or its retained
    /// principal component scores after PCA reduction.
    pub block: Array2<f64>,
    pub metric: Metric,
    pub reduced: bool,
}

impl PreparedGroup {
    pub fn new(group: &GroupBinding, data: &Dataset, pca_threshold: Option<f64>) -> Result<Self> {
        let raw = data.select(&group.columns)?;
        let standardized = standardize_block(&group.lv_name, &group.columns, raw.view())?;
        let (block, metric, reduced) = match pca_threshold {
            Some(t) => {
                let scores = reduce_block(standardized.view(), t)?;
                let m = Metric::identity(scores.ncols());
                (scores, m, true)
            }
            None => {
                let partition = match group.partition_indices() {
                    Some(blocks) => Some(Partition::new(blocks, group.columns.len())?),
                    None => None,
                };
                let m = build_metric(group.metric_kind, standardized.view(), partition.as_ref())?;
                (standardized.clone(), m, false)
            }
        };
        Ok(PreparedGroup {
            lv: group.lv_name.clone(),
            columns: group.columns.clone(),
            standardized,
            block,
            metric,
            reduced,
        })
    }

    /// Standardized first principal component of `X M Xᵀ`, sign fixed so the
    /// largest-magnitude loading is positive.
    pub fn first_component(&self) -> Result<FactorScores> {
        let b = if self.metric.kind() == crate::resultants::MetricKind::Identity {
            self.block.clone()
        } else {
            self.block.dot(&linalg::sym_power(self.metric.matrix().view(), 0.5)?)
        };
        let svd = linalg::thin_svd(b.view());
        if svd.rank() == 0 {
            return Err(Error::DegenerateGroup(self.lv.clone()));
        }
        let f = linalg::standardize(svd.u.column(0))
            .map_err(|_| Error::DegenerateGroup(self.lv.clone()))?;
        let loadings = self.standardized.t().dot(f.scores());
        let lead = loadings
            .iter()
            .copied()
            .fold(0.0_f64, |best, l| if l.abs() > best.abs() { l } else { best });
        Ok(if lead < 0.0 {
            FactorScores::from_standardized(-f.into_inner())
        } else {
            f
        })
    }
}

fn standardize_block(lv: &str, columns: &[String], raw: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(raw.raw_dim());
    let mut constant = Vec::new();
    for (j, col) in raw.axis_iter(Axis(1)).enumerate() {
        match linalg::standardize(col) {
            Ok(f) => out.column_mut(j).assign(f.scores()),
            Err(_) => constant.push(columns[j].clone()),
        }
    }
    if constant.len() == columns.len() {
        return Err(Error::DegenerateGroup(lv.to_string()));
    }
    if !constant.is_empty() {
        return Err(Error::InvalidModel(
            constant
                .into_iter()
                .map(|c| format!("column {c:?} of group {lv:?} is constant"))
                .collect(),
        ));
    }
    Ok(out)
}

/// Principal component scores `X g_k` (norm² = λ_k) for `λ_k ≥ threshold·λ₁`.
pub(crate) fn reduce_block(x: ArrayView2<f64>, threshold: f64) -> Result<Array2<f64>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "PCA threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let svd = linalg::thin_svd(x);
    let top = svd.singular_values.first().map_or(0.0, |s| s * s);
    let keep = svd
        .singular_values
        .iter()
        .take(svd.rank())
        .take_while(|s| *s * *s >= threshold * top * (1.0 - 1e-12))
        .count()
        .max(1);
    let mut scores = Array2::zeros((x.nrows(), keep));
    for k in 0..keep {
        let col: Array1<f64> = svd.u.column(k).mapv(|u| u * svd.singular_values[k]);
        scores.column_mut(k).assign(&col);
    }
    Ok(scores)
}

/// Replaces a group's standardized columns by its leading principal
/// component scores.
pub fn pca_reduce(group: &GroupBinding, threshold: f64, data: &Dataset) -> Result<Array2<f64>> {
    let raw = data.select(&group.columns)?;
    let standardized = standardize_block(&group.lv_name, &group.columns, raw.view())?;
    reduce_block(standardized.view(), threshold)
}

/// Model, options and prepared blocks bundled together.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub spec: ModelSpec,
    pub cfg: EstimationConfig,
    pub n: usize,
    pub(crate) groups: BTreeMap<String, PreparedGroup>,
    /// Equation indices in topological order of their dependents.
    pub(crate) order: Vec<usize>,
}

impl PreparedModel {
    pub fn new(spec: &ModelSpec, data: &Dataset, cfg: &EstimationConfig) -> Result<Self> {
        cfg.check()?;
        let issues = spec.structural_issues();
        if !issues.is_empty() {
            return Err(Error::InvalidModel(issues.iter().map(|i| i.to_string()).collect()));
        }
        let mut groups = BTreeMap::new();
        for g in &spec.groups {
            groups.insert(
                g.lv_name.clone(),
                PreparedGroup::new(g, data, cfg.pca_reduce_threshold)?,
            );
        }
        Ok(PreparedModel {
            spec: spec.clone(),
            cfg: cfg.clone(),
            n: data.n(),
            groups,
            order: spec.equation_order(),
        })
    }

    pub fn group(&self, lv: &str) -> &PreparedGroup {
        &self.groups[lv]
    }

    pub fn equation_order(&self) -> &[usize] {
        &self.order
    }

    pub fn init_factors(&self) -> Result<BTreeMap<String, FactorScores>> {
        self.groups
            .iter()
            .map(|(lv, g)| Ok((lv.clone(), g.first_component()?)))
            .collect()
    }
}

/// Each latent variable's standardized first principal component.
pub fn init_factors(spec: &ModelSpec, data: &Dataset) -> Result<BTreeMap<String, FactorScores>> {
    PreparedModel::new(spec, data, &EstimationConfig::default())?.init_factors()
}
