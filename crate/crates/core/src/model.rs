//! Declarative latent-variable path models and their JSON configuration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::resultants::MetricKind;

/// A latent variable bound to a block of observed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupBinding {
    #[serde(rename = "name")]
    pub lv_name: String,
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<String>>>,
    #[serde(rename = "metric", default, skip_serializing_if = "is_identity")]
    pub metric_kind: MetricKind,
}

fn is_identity(kind: &MetricKind) -> bool {
    *kind == MetricKind::Identity
}

impl GroupBinding {
    pub fn new(lv_name: &str, columns: &[&str]) -> Self {
        GroupBinding {
            lv_name: lv_name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            partition: None,
            metric_kind: MetricKind::Identity,
        }
    }

    /// Sub-groups as column indices into `columns`.
    pub fn partition_indices(&self) -> Option<Vec<Vec<usize>>> {
        self.partition.as_ref().map(|blocks| {
            blocks
                .iter()
                .map(|b| {
                    b.iter()
                        .filter_map(|c| self.columns.iter().position(|x| x == c))
                        .collect()
                })
                .collect()
        })
    }
}

/// Products `effect × moderator` entering an equation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub effect: String,
    pub moderators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equation {
    pub dependent: String,
    pub predictors: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<Interaction>,
}

impl Equation {
    pub fn new(dependent: &str, predictors: &[&str]) -> Self {
        Equation {
            dependent: dependent.to_string(),
            predictors: predictors.iter().map(|p| p.to_string()).collect(),
            interactions: Vec::new(),
        }
    }

    pub fn with_interaction(mut self, effect: &str, moderators: &[&str]) -> Self {
        self.interactions.push(Interaction {
            effect: effect.to_string(),
            moderators: moderators.iter().map(|m| m.to_string()).collect(),
        });
        self
    }

    /// Every declared product as an ordered `(effect, moderator)` pair,
    /// duplicates removed, declaration order kept.
    pub fn product_terms(&self) -> Vec<(String, String)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for it in &self.interactions {
            for m in &it.moderators {
                let key = if it.effect <= *m {
                    (it.effect.clone(), m.clone())
                } else {
                    (m.clone(), it.effect.clone())
                };
                if seen.insert(key) {
                    out.push((it.effect.clone(), m.clone()));
                }
            }
        }
        out
    }

    /// Predictors forming a product with `lv` in this equation.
    pub fn partners_of(&self, lv: &str) -> Vec<String> {
        self.product_terms()
            .into_iter()
            .filter_map(|(a, b)| {
                if a == lv {
                    Some(b)
                } else if b == lv {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub groups: Vec<GroupBinding>,
    pub equations: Vec<Equation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lohmoller,
    #[default]
    Tcpm,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lohmoller" => Ok(Mode::Lohmoller),
            "tcpm" => Ok(Mode::Tcpm),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub mode: Mode,
    pub resultant_order_k: u32,
    pub alpha: f64,
    pub skip_external: bool,
    pub synthesis_alpha: f64,
    pub with_interactions: bool,
    pub tolerance: f64,
    pub max_iter: usize,
    pub inner_max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_reduce_threshold: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            mode: Mode::Tcpm,
            resultant_order_k: 0,
            alpha: 1.0,
            skip_external: false,
            synthesis_alpha: 1.0,
            with_interactions: false,
            tolerance: 1e-3,
            max_iter: 100,
            inner_max_iter: 25,
            pca_reduce_threshold: None,
        }
    }
}

impl EstimationConfig {
    // Negated comparisons so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Validation {
                path: format!("estimation.{field}"),
                message,
            })
        };
        if !(self.tolerance > 0.0) {
            return bad("tolerance", format!("must be positive, got {}", self.tolerance));
        }
        if self.max_iter < 1 {
            return bad("max_iter", "must be at least 1".into());
        }
        if self.inner_max_iter < 1 {
            return bad("inner_max_iter", "must be at least 1".into());
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha", format!("must be non-negative, got {}", self.alpha));
        }
        if !(self.synthesis_alpha >= 0.0) {
            return bad(
                "synthesis_alpha",
                format!("must be non-negative, got {}", self.synthesis_alpha),
            );
        }
        if let Some(t) = self.pca_reduce_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return bad("pca_reduce_threshold", format!("must lie in (0, 1], got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IssueKind {
    DuplicateLv,
    UnboundLv,
    EmptyGroup,
    BadPartition,
    BadEquation,
    BadInteraction,
    CycleError,
    MissingColumn,
    ConstantColumn,
    OverparameterizedGroup,
    IsolatedLv,
}

/// One finding of [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub path: String,
    pub message: String,
}

impl Issue {
    fn error(kind: IssueKind, path: String, message: String) -> Self {
        Issue {
            severity: Severity::Error,
            kind,
            path,
            message,
        }
    }
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} [{:?}] {}: {}", self.kind, self.path, self.message)
    }
}

impl ModelSpec {
    pub fn group(&self, lv: &str) -> Option<&GroupBinding> {
        self.groups.iter().find(|g| g.lv_name == lv)
    }

    pub fn lv_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.lv_name.as_str()).collect()
    }

    /// Structural problems that do not depend on any data.
    pub fn structural_issues(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut bound = BTreeMap::new();
        for (i, g) in self.groups.iter().enumerate() {
            let path = format!("groups[{i}]");
            if bound.insert(g.lv_name.as_str(), i).is_some() {
                issues.push(Issue::error(
                    IssueKind::DuplicateLv,
                    format!("{path}.name"),
                    format!("latent variable {:?} is bound more than once", g.lv_name),
                ));
            }
            if g.columns.is_empty() {
                issues.push(Issue::error(
                    IssueKind::EmptyGroup,
                    format!("{path}.columns"),
                    format!("group {:?} has no columns", g.lv_name),
                ));
            }
            let unique: BTreeSet<&String> = g.columns.iter().collect();
            if unique.len() != g.columns.len() {
                issues.push(Issue::error(
                    IssueKind::EmptyGroup,
                    format!("{path}.columns"),
                    "a column is listed twice".into(),
                ));
            }
            match &g.partition {
                Some(blocks) => {
                    let mut covered = BTreeSet::new();
                    for (b, block) in blocks.iter().enumerate() {
                        if block.is_empty() {
                            issues.push(Issue::error(
                                IssueKind::BadPartition,
                                format!("{path}.partition[{b}]"),
                                "empty sub-group".into(),
                            ));
                        }
                        for c in block {
                            if !g.columns.contains(c) {
                                issues.push(Issue::error(
                                    IssueKind::BadPartition,
                                    format!("{path}.partition[{b}]"),
                                    format!("{c:?} is not a column of the group"),
                                ));
                            } else if !covered.insert(c) {
                                issues.push(Issue::error(
                                    IssueKind::BadPartition,
                                    format!("{path}.partition[{b}]"),
                                    format!("{c:?} appears in two sub-groups"),
                                ));
                            }
                        }
                    }
                    for c in &g.columns {
                        if !covered.contains(c) {
                            issues.push(Issue::error(
                                IssueKind::BadPartition,
                                format!("{path}.partition"),
                                format!("column {c:?} is not in any sub-group"),
                            ));
                        }
                    }
                }
                None => {
                    if matches!(
                        g.metric_kind,
                        MetricKind::BlockInverseGram | MetricKind::MfaWeights
                    ) {
                        issues.push(Issue::error(
                            IssueKind::BadPartition,
                            format!("{path}.partition"),
                            format!("metric {:?} needs a partition", g.metric_kind),
                        ));
                    }
                }
            }
            if g.metric_kind == MetricKind::Custom {
                issues.push(Issue::error(
                    IssueKind::BadPartition,
                    format!("{path}.metric"),
                    "custom metrics cannot be declared in a configuration".into(),
                ));
            }
        }

        for (e, eq) in self.equations.iter().enumerate() {
            let path = format!("equations[{e}]");
            if !bound.contains_key(eq.dependent.as_str()) {
                issues.push(Issue::error(
                    IssueKind::UnboundLv,
                    format!("{path}.dependent"),
                    format!("unbound latent variable {:?}", eq.dependent),
                ));
            }
            if eq.predictors.is_empty() {
                issues.push(Issue::error(
                    IssueKind::BadEquation,
                    format!("{path}.predictors"),
                    "an equation needs at least one predictor".into(),
                ));
            }
            let mut seen = BTreeSet::new();
            for (p, pred) in eq.predictors.iter().enumerate() {
                if !bound.contains_key(pred.as_str()) {
                    issues.push(Issue::error(
                        IssueKind::UnboundLv,
                        format!("{path}.predictors[{p}]"),
                        format!("unbound latent variable {pred:?}"),
                    ));
                }
                if *pred == eq.dependent {
                    issues.push(Issue::error(
                        IssueKind::BadEquation,
                        format!("{path}.predictors[{p}]"),
                        format!("{pred:?} cannot predict itself"),
                    ));
                }
                if !seen.insert(pred) {
                    issues.push(Issue::error(
                        IssueKind::BadEquation,
                        format!("{path}.predictors[{p}]"),
                        format!("{pred:?} is listed twice"),
                    ));
                }
            }
            for (i, it) in eq.interactions.iter().enumerate() {
                let ipath = format!("{path}.interactions[{i}]");
                if !eq.predictors.contains(&it.effect) {
                    issues.push(Issue::error(
                        IssueKind::BadInteraction,
                        format!("{ipath}.effect"),
                        format!("{:?} is not a predictor of this equation", it.effect),
                    ));
                }
                if it.moderators.is_empty() {
                    issues.push(Issue::error(
                        IssueKind::BadInteraction,
                        format!("{ipath}.moderators"),
                        "an interaction needs at least one moderator".into(),
                    ));
                }
                for (m, modr) in it.moderators.iter().enumerate() {
                    if !eq.predictors.contains(modr) {
                        issues.push(Issue::error(
                            IssueKind::BadInteraction,
                            format!("{ipath}.moderators[{m}]"),
                            format!("{modr:?} is not a predictor of this equation"),
                        ));
                    }
                    if *modr == it.effect {
                        issues.push(Issue::error(
                            IssueKind::BadInteraction,
                            format!("{ipath}.moderators[{m}]"),
                            format!("{modr:?} cannot moderate itself"),
                        ));
                    }
                }
            }
        }

        for g in &self.groups {
            let used = self
                .equations
                .iter()
                .any(|eq| eq.dependent == g.lv_name || eq.predictors.contains(&g.lv_name));
            if !used {
                issues.push(Issue::error(
                    IssueKind::IsolatedLv,
                    "equations".into(),
                    format!("latent variable {:?} appears in no equation", g.lv_name),
                ));
            }
        }

        if self.topological_lvs().is_none() {
            issues.push(Issue::error(
                IssueKind::CycleError,
                "equations".into(),
                "the latent variable graph has a cycle".into(),
            ));
        }
        issues
    }

    /// Latent variables in dependency order (predictors before dependents),
    /// ties broken by declaration order; `None` on a cycle.
    pub fn topological_lvs(&self) -> Option<Vec<String>> {
        let mut names: Vec<String> = self.groups.iter().map(|g| g.lv_name.clone()).collect();
        for eq in &self.equations {
            for lv in std::iter::once(&eq.dependent).chain(eq.predictors.iter()) {
                if !names.contains(lv) {
                    names.push(lv.clone());
                }
            }
        }
        let idx = |name: &str| names.iter().position(|n| n == name).expect("collected above");
        let mut indegree = vec![0usize; names.len()];
        let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); names.len()];
        for eq in &self.equations {
            let d = idx(&eq.dependent);
            for p in &eq.predictors {
                let s = idx(p);
                if s != d && edges[s].insert(d) {
                    indegree[d] += 1;
                }
                if s == d {
                    return None;
                }
            }
        }
        let mut order = Vec::with_capacity(names.len());
        let mut ready: BTreeSet<usize> = (0..names.len()).filter(|&i| indegree[i] == 0).collect();
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(names[i].clone());
            for &d in &edges[i] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.insert(d);
                }
            }
        }
        (order.len() == names.len()).then_some(order)
    }

    /// Equation indices sorted by the topological rank of their dependent.
    pub fn equation_order(&self) -> Vec<usize> {
        let order = self.topological_lvs().unwrap_or_default();
        let rank = |lv: &str| order.iter().position(|n| n == lv).unwrap_or(usize::MAX);
        let mut eqs: Vec<usize> = (0..self.equations.len()).collect();
        eqs.sort_by_key(|&e| (rank(&self.equations[e].dependent), e));
        eqs
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    groups: Vec<GroupBinding>,
    equations: Vec<Equation>,
    #[serde(default)]
    estimation: Option<EstimationConfig>,
}

/// Parses and validates a JSON model configuration.
pub fn parse_model_config(text: &str) -> Result<(ModelSpec, EstimationConfig)> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ConfigDocument = match serde_path_to_error::deserialize(&mut de) {
        Ok(doc) => doc,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => Error::Validation {
                    path,
                    message: inner.to_string(),
                },
                _ => Error::Parse(inner.to_string()),
            });
        }
    };
    de.end().map_err(|e| Error::Parse(e.to_string()))?;

    let spec = ModelSpec {
        groups: doc.groups,
        equations: doc.equations,
    };
    if let Some(issue) = spec.structural_issues().into_iter().next() {
        return Err(Error::Validation {
            path: issue.path,
            message: issue.message,
        });
    }
    let cfg = doc.estimation.unwrap_or_default();
    cfg.check()?;
    Ok((spec, cfg))
}

/// Serializes a model and its estimation options back to the configuration format.
pub fn to_config_json(spec: &ModelSpec, cfg: &EstimationConfig) -> String {
    let doc = ConfigDocument {
        groups: spec.groups.clone(),
        equations: spec.equations.clone(),
        estimation: Some(cfg.clone()),
    };
    serde_json::to_string_pretty(&doc).expect("model types always serialize")
}

/// Checks a model against a dataset. Problems are collected, not raised.
///
/// Groups with more columns than observations are flagged as
/// `OverparameterizedGroup` warnings unless PCA reduction is configured:
/// oblique projections onto such a group are not unique.
pub fn validate_model(spec: &ModelSpec, cfg: &EstimationConfig, data: &Dataset) -> Vec<Issue> {
    let mut issues = spec.structural_issues();
    for (i, g) in spec.groups.iter().enumerate() {
        for (c, col) in g.columns.iter().enumerate() {
            match data.column(col) {
                None => issues.push(Issue::error(
                    IssueKind::MissingColumn,
                    format!("groups[{i}].columns[{c}]"),
                    format!("dataset has no column {col:?}"),
                )),
                Some(values) => {
                    if crate::linalg::standardize(values).is_err() {
                        issues.push(Issue::error(
                            IssueKind::ConstantColumn,
                            format!("groups[{i}].columns[{c}]"),
                            format!("column {col:?} is constant"),
                        ));
                    }
                }
            }
        }
        if g.columns.len() > data.n() && cfg.pca_reduce_threshold.is_none() {
            issues.push(Issue {
                severity: Severity::Warning,
                kind: IssueKind::OverparameterizedGroup,
                path: format!("groups[{i}].columns"),
                message: format!(
                    "group {:?} has {} columns for {} observations; consider pca_reduce_threshold",
                    g.lv_name,
                    g.columns.len(),
                    data.n()
                ),
            });
        }
    }
    issues
}

pub fn has_errors(issues: &[Issue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SENEGAL: &str = r#"{
        "groups": [
            {"name": "X1", "columns": ["a", "b"]},
            {"name": "X2", "columns": ["c"]},
            {"name": "X3", "columns": ["d", "e"]},
            {"name": "X4", "columns": ["f"]}
        ],
        "equations": [
            {"dependent": "X3", "predictors": ["X1", "X2"]},
            {"dependent": "X4", "predictors": ["X3"]}
        ]
    }"#;

    #[test]
    fn defaults_are_filled() {
        let (spec, cfg) = parse_model_config(SENEGAL).unwrap();
        assert_eq!(spec.groups.len(), 4);
        assert_eq!(spec.equations.len(), 2);
        assert_eq!(cfg, EstimationConfig::default());
        assert_eq!(cfg.mode, Mode::Tcpm);
        assert_eq!(cfg.max_iter, 100);
        assert_eq!(cfg.inner_max_iter, 25);
        assert_eq!(cfg.tolerance, 1e-3);
    }

    #[test]
    fn interactions_parse() {
        let text = r#"{
            "groups": [
                {"name": "R", "columns": ["r"]},
                {"name": "S", "columns": ["s1", "s2"]},
                {"name": "B", "columns": ["b"]},
                {"name": "A", "columns": ["a"]}
            ],
            "equations": [{"dependent": "R", "predictors": ["S", "B", "A"],
                           "interactions": [{"effect": "S", "moderators": ["B", "A"]}]}],
            "estimation": {"with_interactions": true, "resultant_order_k": 1}
        }"#;
        let (spec, cfg) = parse_model_config(text).unwrap();
        assert_eq!(spec.equations.len(), 1);
        assert_eq!(spec.equations[0].product_terms().len(), 2);
        assert_eq!(spec.equations[0].partners_of("B"), vec!["S".to_string()]);
        assert_eq!(spec.equations[0].partners_of("S").len(), 2);
        assert!(cfg.with_interactions);
        assert_eq!(cfg.resultant_order_k, 1);
    }

    #[test]
    fn unbound_lv_is_named() {
        let text = r#"{"groups": [{"name": "A", "columns": ["a"]}],
                       "equations": [{"dependent": "A", "predictors": ["Z"]}]}"#;
        match parse_model_config(text) {
            Err(Error::Validation { path, message }) => {
                assert_eq!(path, "equations[0].predictors[0]");
                assert!(message.contains("\"Z\""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_and_schema_errors_differ() {
        assert!(matches!(parse_model_config("{"), Err(Error::Parse(_))));
        let text = r#"{"groups": [], "equations": [], "colour": 1}"#;
        assert!(matches!(parse_model_config(text), Err(Error::Validation { .. })));
        let text = r#"{"groups": [], "equations": [], "estimation": {"tol": 1}}"#;
        match parse_model_config(text) {
            Err(Error::Validation { path, .. }) => assert!(path.starts_with("estimation")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycles_are_rejected() {
        let spec = ModelSpec {
            groups: vec![GroupBinding::new("A", &["a"]), GroupBinding::new("B", &["b"])],
            equations: vec![Equation::new("A", &["B"]), Equation::new("B", &["A"])],
        };
        let issues = spec.structural_issues();
        assert!(issues.iter().any(|i| i.kind == IssueKind::CycleError));
        assert!(spec.topological_lvs().is_none());
    }

    #[test]
    fn bad_estimation_values() {
        let text = r#"{"groups": [{"name": "A", "columns": ["a"]}, {"name": "B", "columns": ["b"]}],
                       "equations": [{"dependent": "A", "predictors": ["B"]}],
                       "estimation": {"tolerance": 0}}"#;
        assert!(matches!(parse_model_config(text), Err(Error::Validation { .. })));
    }

    #[test]
    fn topological_order_puts_predictors_first() {
        let (spec, _) = parse_model_config(SENEGAL).unwrap();
        let order = spec.topological_lvs().unwrap();
        let pos = |n: &str| order.iter().position(|x| x == n).unwrap();
        assert!(pos("X1") < pos("X3") && pos("X2") < pos("X3") && pos("X3") < pos("X4"));
        assert_eq!(spec.equation_order(), vec![0, 1]);
    }

    #[test]
    fn validate_flags_missing_and_wide_groups() {
        use ndarray::array;
        let data = Dataset::new(
            array![[1.0, 2.0, 3.0], [2.0, 1.0, 0.0]],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let spec = ModelSpec {
            groups: vec![
                GroupBinding::new("A", &["a", "b", "c"]),
                GroupBinding::new("B", &["zz"]),
            ],
            equations: vec![Equation::new("B", &["A"])],
        };
        let issues = validate_model(&spec, &EstimationConfig::default(), &data);
        assert!(issues.iter().any(|i| i.kind == IssueKind::MissingColumn));
        assert!(issues
            .iter()
            .any(|i| i.kind == IssueKind::OverparameterizedGroup && i.severity == Severity::Warning));
        let cfg = EstimationConfig {
            pca_reduce_threshold: Some(0.01),
            ..Default::default()
        };
        let issues = validate_model(&spec, &cfg, &data);
        assert!(!issues.iter().any(|i| i.kind == IssueKind::OverparameterizedGroup));
    }
}
