use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use super::prepare::{PreparedGroup, PreparedModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, FactorScores};
use crate::model::{EstimationConfig, GroupBinding};
use crate::resultants::{bonus_metric, linear_resultant, Metric};

pub type Factors = BTreeMap<String, FactorScores>;

/// Entries of the interaction modulation `β̂ + Σ δ̂ F_r` smaller than this in
/// magnitude are clipped before dividing.
pub const MODULATION_FLOOR: f64 = 1e-6;

const ZERO_NORM: f64 = 1e-12;

/// Standardizes an update, treating a vanishing vector as [`Error::ZeroResultant`].
pub(crate) fn standardize_update(v: ArrayView1<f64>, lv: &str) -> Result<FactorScores> {
    if linalg::norm(v) < ZERO_NORM {
        return Err(Error::ZeroResultant(lv.to_string()));
    }
    linalg::standardize(v).map_err(|_| Error::ZeroResultant(lv.to_string()))
}

/// Centered elementwise product of two factors.
pub fn product_term(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    linalg::center((&a * &b).view())
}

fn block_of(n: usize, cols: &[Array1<f64>]) -> Array2<f64> {
    linalg::column_block(n, cols.iter().map(|c| c.view()))
}

/// One step-1/step-2 pass of the interaction loop.
#[derive(Debug, Clone, Serialize)]
pub struct InnerLog {
    pub lv: String,
    pub equation: usize,
    pub inner_iteration: usize,
    pub step1_r_squared: f64,
    pub step2_r_squared: f64,
    pub beta: f64,
    pub deltas: Vec<(String, f64)>,
    pub clipped: usize,
    pub change: f64,
}

#[derive(Debug, Clone)]
pub struct InteractionUpdate {
    pub phi: FactorScores,
    pub beta: f64,
    pub deltas: Vec<(String, f64)>,
    pub inner: Vec<InnerLog>,
}

impl PreparedGroup {
    /// `st((X M_{X,φ,k} Xᵀ)^α φ)`, sign aligned with `φ`.
    pub fn external(&self, phi: &FactorScores, k: u32, alpha: f64) -> Result<FactorScores> {
        let metric = bonus_metric(&self.metric, self.block.view(), phi.view(), k)?;
        let v = linear_resultant(self.block.view(), &metric, phi.view(), alpha)?;
        Ok(standardize_update(v.view(), &self.lv)?.aligned_with(phi.view()))
    }
}

/// External estimation of one group from its internal estimate.
pub fn external_estimate(
    group: &GroupBinding,
    phi: &FactorScores,
    cfg: &EstimationConfig,
    data: &Dataset,
) -> Result<FactorScores> {
    PreparedGroup::new(group, data, cfg.pca_reduce_threshold)?.external(
        phi,
        cfg.resultant_order_k,
        cfg.alpha,
    )
}

/// `st(R^α_{Ω,I} F)` over the internal estimates an LV collected in one
/// iteration. Estimates are sign-aligned with `previous` first.
pub fn synthesize_internal(
    estimates: &[FactorScores],
    previous: &FactorScores,
    alpha: f64,
) -> Result<FactorScores> {
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("nothing to synthesize".into()));
    }
    let n = previous.len();
    let aligned: Vec<Array1<f64>> = estimates
        .iter()
        .map(|e| e.clone().aligned_with(previous.view()).into_inner())
        .collect();
    let omega = block_of(n, &aligned);
    let v = linear_resultant(omega.view(), &Metric::identity(aligned.len()), previous.view(), alpha)?;
    Ok(standardize_update(v.view(), "synthesis")?.aligned_with(previous.view()))
}

impl PreparedModel {
    fn factor<'a>(&self, factors: &'a Factors, lv: &str) -> &'a FactorScores {
        &factors[lv]
    }

    /// Centered products of equation `e` not involving `skip`, as
    /// `(name, values)`.
    pub(crate) fn products(&self, e: usize, factors: &Factors, skip: Option<&str>) -> Vec<(String, Array1<f64>)> {
        self.spec.equations[e]
            .product_terms()
            .into_iter()
            .filter(|(a, b)| skip.is_none_or(|s| a != s && b != s))
            .map(|(a, b)| {
                let p = product_term(factors[&a].view(), factors[&b].view());
                (format!("{a}*{b}"), p)
            })
            .collect()
    }

    /// Regressor columns of equation `e`: predictors, then products when
    /// `with_products`.
    pub(crate) fn regressors(&self, e: usize, factors: &Factors, with_products: bool) -> (Vec<String>, Array2<f64>) {
        let eq = &self.spec.equations[e];
        let mut names = Vec::new();
        let mut cols = Vec::new();
        for p in &eq.predictors {
            names.push(p.clone());
            cols.push(factors[p].scores().clone());
        }
        if with_products {
            for (name, col) in self.products(e, factors, None) {
                names.push(name);
                cols.push(col);
            }
        }
        (names, block_of(self.n, &cols))
    }

    /// R² of equation `e` under the current factors.
    pub fn equation_r_squared(&self, e: usize, factors: &Factors, with_products: bool) -> Result<f64> {
        let (_, x) = self.regressors(e, factors, with_products);
        let dep = &self.spec.equations[e].dependent;
        Ok(linalg::ols(x.view(), factors[dep].view())?.r_squared)
    }

    /// Lohmöller rules for one LV: dependent-side regression predictions plus
    /// correlation-weighted dependents it predicts, summed over equations.
    ///
    /// If the correlation weights cancel everything (e.g. a sole predictor
    /// whose start is orthogonal to its dependent) the dependents are
    /// weighted by the sign of the correlation instead, with sign(0) = +1.
    pub fn lohmoller_internal(&self, lv: &str, factors: &Factors) -> Result<FactorScores> {
        let mut acc = Array1::zeros(self.n);
        let mut by_sign = Array1::zeros(self.n);
        let mut touched = false;
        for (e, eq) in self.spec.equations.iter().enumerate() {
            if eq.dependent == lv {
                touched = true;
                let (_, x) = self.regressors(e, factors, false);
                let fitted = linalg::ols(x.view(), factors[lv].view())?.fitted;
                acc += &fitted;
                by_sign += &fitted;
            }
            if eq.predictors.iter().any(|p| p == lv) {
                touched = true;
                let dep = self.factor(factors, &eq.dependent);
                let rho = factors[lv].scores().dot(dep.scores());
                acc.scaled_add(rho, dep.scores());
                by_sign.scaled_add(if rho < 0.0 { -1.0 } else { 1.0 }, dep.scores());
            }
        }
        if !touched {
            return Err(Error::IsolatedLv(lv.to_string()));
        }
        let v = if linalg::norm(acc.view()) < ZERO_NORM { by_sign } else { acc };
        Ok(standardize_update(v.view(), lv)?.aligned_with(factors[lv].view()))
    }

    /// The `⟨X_t⟩` component of the dependent factor, parallel to the
    /// other explanatory factors (and products not involving `t` when
    /// interactions are on).
    pub fn tcpm_internal_explanatory(&self, e: usize, t: &str, factors: &Factors) -> Result<FactorScores> {
        let eq = &self.spec.equations[e];
        let mut others: Vec<Array1<f64>> = eq
            .predictors
            .iter()
            .filter(|p| *p != t)
            .map(|p| factors[p].scores().clone())
            .collect();
        if self.cfg.with_interactions {
            others.extend(self.products(e, factors, Some(t)).into_iter().map(|(_, c)| c));
        }
        let z = block_of(self.n, &others);
        let xt = &self.groups[t].block;
        let comp = linalg::oblique_component(xt.view(), z.view(), factors[&eq.dependent].view())
            .map_err(|err| collinearity(err, t))?;
        Ok(standardize_update(comp.view(), t)?.aligned_with(factors[t].view()))
    }

    /// `st(Π_⟨X_r⟩ Π_⟨F_t⟩ F_r)`.
    pub fn tcpm_internal_dependent(&self, e: usize, factors: &Factors) -> Result<FactorScores> {
        let dep = &self.spec.equations[e].dependent;
        let (_, x) = self.regressors(e, factors, self.cfg.with_interactions);
        let inner = linalg::project_span(x.view(), factors[dep].view())?;
        let outer = linalg::project_span(self.groups[dep].block.view(), inner.view())?;
        Ok(standardize_update(outer.view(), dep)?.aligned_with(factors[dep].view()))
    }

    /// The two-step interaction algorithm for explanatory LV `t` of equation `e`.
    pub fn interactive_internal(&self, e: usize, t: &str, factors: &Factors) -> Result<InteractionUpdate> {
        let eq = &self.spec.equations[e];
        let partners = eq.partners_of(t);
        let fs = factors[&eq.dependent].view();
        let xt = &self.groups[t].block;
        let n = self.n;

        let mut others: Vec<Array1<f64>> = eq
            .predictors
            .iter()
            .filter(|p| *p != t)
            .map(|p| factors[p].scores().clone())
            .collect();
        others.extend(self.products(e, factors, Some(t)).into_iter().map(|(_, c)| c));
        let mut with_const = vec![Array1::ones(n)];
        with_const.extend(others.iter().cloned());
        let z_step2 = block_of(n, &with_const);

        let mut phi = self.tcpm_internal_explanatory(e, t, factors)?;
        let mut inner = Vec::new();
        let mut beta = 0.0;
        let mut deltas = Vec::new();
        for it in 0..self.cfg.inner_max_iter {
            let mut cols = vec![phi.scores().clone()];
            cols.extend(others.iter().cloned());
            for r in &partners {
                cols.push(product_term(factors[r].view(), phi.view()));
            }
            let step1 = linalg::ols(block_of(n, &cols).view(), fs)?;
            beta = step1.coefficients[0];
            let first_product = 1 + others.len();
            deltas = partners
                .iter()
                .enumerate()
                .map(|(i, r)| (r.clone(), step1.coefficients[first_product + i]))
                .collect();

            let mut modulation = Array1::from_elem(n, beta);
            for (r, d) in &deltas {
                modulation.scaled_add(*d, factors[r].scores());
            }
            let y = xt * &modulation.view().insert_axis(Axis(1));
            let split = linalg::oblique_split(y.view(), z_step2.view(), fs)
                .map_err(|err| collinearity(err, t))?;
            let step2_r_squared = r_squared_of(&split.fitted(), fs);

            let mut clipped = 0;
            let safe = modulation.mapv(|m| {
                if m.abs() < MODULATION_FLOOR {
                    clipped += 1;
                    if m < 0.0 {
                        -MODULATION_FLOOR
                    } else {
                        MODULATION_FLOOR
                    }
                } else {
                    m
                }
            });
            if clipped == n {
                return Err(Error::NearZeroModulation(t.to_string(), clipped));
            }
            let g = &split.x_part / &safe;
            let next = standardize_update(g.view(), t)?.aligned_with(phi.view());
            let change = next.change_from(&phi);
            inner.push(InnerLog {
                lv: t.to_string(),
                equation: e,
                inner_iteration: it + 1,
                step1_r_squared: step1.r_squared,
                step2_r_squared,
                beta,
                deltas: deltas.clone(),
                clipped,
                change,
            });
            phi = next;
            if change < self.cfg.tolerance {
                break;
            }
        }
        Ok(InteractionUpdate {
            phi: phi.aligned_with(factors[t].view()),
            beta,
            deltas,
            inner,
        })
    }
}

fn r_squared_of(fitted: &Array1<f64>, y: ArrayView1<f64>) -> f64 {
    let centered = linalg::center(y);
    let tss = centered.dot(&centered);
    if tss <= 0.0 {
        return 0.0;
    }
    let resid = &y - fitted;
    (1.0 - resid.dot(&resid) / tss).clamp(0.0, 1.0)
}

fn collinearity(err: Error, lv: &str) -> Error {
    match err {
        Error::OverlappingSubspaces(msg) => Error::OverlappingSubspaces(format!(
            "group {lv:?} is collinear with the other explanatory factors, so partial effects cannot be separated ({msg})"
        )),
        other => other,
    }
}
