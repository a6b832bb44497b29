//! Estimation algorithms: initialization, internal and external updates,
//! the outer loop and fit reporting.

mod prepare;
mod report;
mod updates;

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use prepare::{init_factors, pca_reduce, PreparedGroup, PreparedModel};
pub use report::{factor_correlation, fit_report, Table};
pub use updates::{
    external_estimate, product_term, synthesize_internal, Factors, InnerLog, InteractionUpdate,
    MODULATION_FLOOR,
};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::linalg::{self, FactorScores};
use crate::model::{EstimationConfig, Mode, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Lohmoller,
    Explanatory,
    Interactive,
    Dependent,
    Synthesis,
}

/// A factor replaced inside an iteration, with every equation's R² right after.
#[derive(Debug, Clone, Serialize)]
pub struct UpdateLog {
    pub lv: String,
    pub equation: Option<usize>,
    pub kind: UpdateKind,
    pub r_squared: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub change: f64,
    pub r_squared: Vec<f64>,
    pub updates: Vec<UpdateLog>,
    pub inner: Vec<InnerLog>,
}

#[derive(Debug, Clone)]
pub struct EstimationState {
    pub factors: Factors,
    pub iteration: usize,
    pub last_change: f64,
    pub r_squared_trace: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermEstimate {
    pub name: String,
    pub coefficient: f64,
    /// The coefficient when factors are scaled to unit variance instead of
    /// unit norm. Products pick up a factor `1/√n`.
    pub unit_variance_coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquationResult {
    pub dependent: String,
    pub terms: Vec<TermEstimate>,
    pub r_squared: f64,
    #[serde(skip)]
    pub residuals: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub factors: Factors,
    pub equations: Vec<EquationResult>,
    /// Per LV, `(column, ρ(x^j, F))` in group order.
    pub loadings: BTreeMap<String, Vec<(String, f64)>>,
    /// Per LV, `(column, w_j)` with `F ≈ Σ w_j st(x^j)`.
    pub weights: BTreeMap<String, Vec<(String, f64)>>,
    pub trace: Vec<IterationLog>,
    pub converged: bool,
    pub iterations: usize,
}

impl EstimationResult {
    pub fn factor(&self, lv: &str) -> &FactorScores {
        &self.factors[lv]
    }

    pub fn equation_for(&self, dependent: &str) -> Option<&EquationResult> {
        self.equations.iter().find(|e| e.dependent == dependent)
    }

    pub fn loading(&self, lv: &str, column: &str) -> Option<f64> {
        self.loadings
            .get(lv)?
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, l)| *l)
    }
}

/// Runs the outer loop one iteration at a time.
#[derive(Debug, Clone)]
pub struct Estimator {
    model: PreparedModel,
    state: EstimationState,
    trace: Vec<IterationLog>,
    /// For each LV, the positions in the equation order where it occurs.
    touches: BTreeMap<String, Vec<usize>>,
}

impl Estimator {
    pub fn new(spec: &ModelSpec, data: &Dataset, cfg: &EstimationConfig) -> Result<Self> {
        let model = PreparedModel::new(spec, data, cfg)?;
        let factors = model.init_factors()?;
        let mut touches: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (pos, &e) in model.order.iter().enumerate() {
            let eq = &model.spec.equations[e];
            for lv in eq.predictors.iter().chain(std::iter::once(&eq.dependent)) {
                touches.entry(lv.clone()).or_default().push(pos);
            }
        }
        Ok(Estimator {
            model,
            state: EstimationState {
                factors,
                iteration: 0,
                last_change: f64::INFINITY,
                r_squared_trace: Vec::new(),
            },
            trace: Vec::new(),
            touches,
        })
    }

    /// Replaces the starting factors (missing LVs keep their PC start).
    pub fn with_factors(mut self, factors: Factors) -> Self {
        for (lv, f) in factors {
            self.state.factors.insert(lv, f);
        }
        self
    }

    pub fn model(&self) -> &PreparedModel {
        &self.model
    }

    pub fn state(&self) -> &EstimationState {
        &self.state
    }

    pub fn trace(&self) -> &[IterationLog] {
        &self.trace
    }

    fn r_squared_all(&self, factors: &Factors) -> Result<Vec<f64>> {
        (0..self.model.spec.equations.len())
            .map(|e| self.model.equation_r_squared(e, factors, self.model.cfg.with_interactions))
            .collect()
    }

    /// One outer iteration.
    pub fn step(&mut self) -> Result<&IterationLog> {
        let previous = self.state.factors.clone();
        let (updates, inner) = match self.model.cfg.mode {
            Mode::Lohmoller => self.lohmoller_step(&previous)?,
            Mode::Tcpm => self.tcpm_step()?,
        };
        let change = self
            .state
            .factors
            .iter()
            .map(|(lv, f)| f.change_from(&previous[lv]))
            .fold(0.0, f64::max);
        let r_squared = self.r_squared_all(&self.state.factors)?;
        self.state.iteration += 1;
        self.state.last_change = change;
        self.state.r_squared_trace.push(r_squared.clone());
        self.trace.push(IterationLog {
            iteration: self.state.iteration,
            change,
            r_squared,
            updates,
            inner,
        });
        Ok(self.trace.last().expect("just pushed"))
    }

    fn finalize(&self, lv: &str, phi: FactorScores) -> Result<FactorScores> {
        let cfg = &self.model.cfg;
        let f = if cfg.skip_external {
            phi
        } else {
            self.model.groups[lv].external(&phi, cfg.resultant_order_k, cfg.alpha)?
        };
        Ok(f.aligned_with(self.state.factors[lv].view()))
    }

    fn lohmoller_step(&mut self, previous: &Factors) -> Result<(Vec<UpdateLog>, Vec<InnerLog>)> {
        let mut phis = BTreeMap::new();
        for lv in previous.keys() {
            phis.insert(lv.clone(), self.model.lohmoller_internal(lv, previous)?);
        }
        let mut updates = Vec::new();
        for (lv, phi) in phis {
            let f = self.finalize(&lv, phi)?;
            self.state.factors.insert(lv.clone(), f);
            updates.push(UpdateLog {
                lv,
                equation: None,
                kind: UpdateKind::Lohmoller,
                r_squared: Vec::new(),
            });
        }
        let r2 = self.r_squared_all(&self.state.factors)?;
        for u in &mut updates {
            u.r_squared = r2.clone();
        }
        Ok((updates, Vec::new()))
    }

    fn tcpm_step(&mut self) -> Result<(Vec<UpdateLog>, Vec<InnerLog>)> {
        let mut omega: BTreeMap<String, Vec<FactorScores>> = BTreeMap::new();
        let mut updates = Vec::new();
        let mut inner = Vec::new();
        let order = self.model.order.clone();
        for (pos, &e) in order.iter().enumerate() {
            let eq = self.model.spec.equations[e].clone();
            for t in &eq.predictors {
                let interactive =
                    self.model.cfg.with_interactions && !eq.partners_of(t).is_empty();
                let (phi, kind) = if interactive {
                    let u = self.model.interactive_internal(e, t, &self.state.factors)?;
                    inner.extend(u.inner);
                    (u.phi, UpdateKind::Interactive)
                } else {
                    let phi = self.model.tcpm_internal_explanatory(e, t, &self.state.factors)?;
                    (phi, UpdateKind::Explanatory)
                };
                self.deliver(t, phi, e, pos, kind, &mut omega, &mut updates)?;
            }
            let phi = self.model.tcpm_internal_dependent(e, &self.state.factors)?;
            self.deliver(&eq.dependent, phi, e, pos, UpdateKind::Dependent, &mut omega, &mut updates)?;
        }
        Ok((updates, inner))
    }

    /// Applies an internal estimate at once when the LV sits in a single
    /// equation; otherwise collects it and synthesizes after its last equation.
    #[allow(clippy::too_many_arguments)]
    fn deliver(
        &mut self,
        lv: &str,
        phi: FactorScores,
        e: usize,
        pos: usize,
        kind: UpdateKind,
        omega: &mut BTreeMap<String, Vec<FactorScores>>,
        updates: &mut Vec<UpdateLog>,
    ) -> Result<()> {
        let positions = &self.touches[lv];
        let (phi, kind) = if positions.len() == 1 {
            (phi, kind)
        } else {
            let bucket = omega.entry(lv.to_string()).or_default();
            bucket.push(phi);
            if pos != *positions.last().expect("non-empty") {
                return Ok(());
            }
            let estimates = omega.remove(lv).unwrap_or_default();
            let synth = synthesize_internal(
                &estimates,
                &self.state.factors[lv],
                self.model.cfg.synthesis_alpha,
            )?;
            (synth, UpdateKind::Synthesis)
        };
        let f = self.finalize(lv, phi)?;
        self.state.factors.insert(lv.to_string(), f);
        updates.push(UpdateLog {
            lv: lv.to_string(),
            equation: Some(e),
            kind,
            r_squared: self.r_squared_all(&self.state.factors)?,
        });
        Ok(())
    }

    /// Iterates until the change drops below tolerance or `max_iter` is hit.
    pub fn run(mut self) -> Result<EstimationResult> {
        let (tol, max_iter) = (self.model.cfg.tolerance, self.model.cfg.max_iter);
        let mut converged = false;
        for _ in 0..max_iter {
            if self.step()?.change < tol {
                converged = true;
                break;
            }
        }
        self.finish(converged)
    }

    /// Builds the result from the current factors.
    pub fn finish(self, converged: bool) -> Result<EstimationResult> {
        let model = &self.model;
        let factors = self.state.factors;
        let n = model.n;
        let mut equations = Vec::new();
        for (e, eq) in model.spec.equations.iter().enumerate() {
            let (names, x) = model.regressors(e, &factors, true);
            let fit = linalg::ols(x.view(), factors[&eq.dependent].view())?;
            let diag = linalg::gram_pinv_diagonal(x.view());
            let df = n as f64 - fit.rank as f64 - 1.0;
            let sigma2 = fit.residuals.dot(&fit.residuals) / df;
            let dist = (df > 0.0).then(|| StudentsT::new(0.0, 1.0, df).ok()).flatten();
            let n_pred = eq.predictors.len();
            let terms = names
                .into_iter()
                .enumerate()
                .map(|(j, name)| {
                    let coefficient = fit.coefficients[j];
                    let std_error = (sigma2 * diag[j]).sqrt();
                    let t_value = coefficient / std_error;
                    let p_value = match &dist {
                        Some(d) if t_value.is_finite() => 2.0 * d.sf(t_value.abs()),
                        _ => f64::NAN,
                    };
                    let unit_variance_coefficient = if j < n_pred {
                        coefficient
                    } else {
                        coefficient / (n as f64).sqrt()
                    };
                    TermEstimate {
                        name,
                        coefficient,
                        unit_variance_coefficient,
                        std_error,
                        t_value,
                        p_value,
                    }
                })
                .collect();
            equations.push(EquationResult {
                dependent: eq.dependent.clone(),
                terms,
                r_squared: fit.r_squared,
                residuals: fit.residuals,
            });
        }

        let mut loadings = BTreeMap::new();
        let mut weights = BTreeMap::new();
        for (lv, g) in &model.groups {
            let f = &factors[lv];
            let l = g.standardized.t().dot(f.scores());
            loadings.insert(lv.clone(), g.columns.iter().cloned().zip(l.iter().copied()).collect());
            let w = linalg::ols(g.standardized.view(), f.view())?.coefficients;
            weights.insert(lv.clone(), g.columns.iter().cloned().zip(w.iter().copied()).collect());
        }

        Ok(EstimationResult {
            factors,
            equations,
            loadings,
            weights,
            iterations: self.state.iteration,
            trace: self.trace,
            converged,
        })
    }
}

/// Estimates a model end to end. Non-convergence is reported through
/// `converged`, not as an error.
pub fn run_estimation(spec: &ModelSpec, data: &Dataset, cfg: &EstimationConfig) -> Result<EstimationResult> {
    Estimator::new(spec, data, cfg)?.run()
}
