use serde::Serialize;

use super::EstimationResult;
use crate::linalg::FactorScores;
use crate::model::ModelSpec;

/// A named table of pre-formatted cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, title: &str, header: Vec<String>) -> Self {
        Table {
            name: name.to_string(),
            title: title.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

pub(crate) fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        let s = format!("{x:.4}");
        // Avoid "-0.0000".
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

fn pvalue(p: f64) -> String {
    if p.is_nan() {
        "NA".to_string()
    } else if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// Sign-sensitive correlation of two factors, e.g. the same LV estimated
/// from two different models.
pub fn factor_correlation(a: &FactorScores, b: &FactorScores) -> f64 {
    a.correlation(b.view())
}

/// Summary, coefficient, iteration-trace and per-LV loading/weight tables.
///
/// p-values come from two-sided t-tests and are descriptive only: factors
/// are estimated from the same data they are tested on.
pub fn fit_report(result: &EstimationResult, spec: &ModelSpec) -> Vec<Table> {
    let mut tables = Vec::new();

    let mut summary = Table::new(
        "summary",
        "Equations",
        ["equation", "dependent", "r_squared", "iterations", "converged"]
            .map(String::from)
            .to_vec(),
    );
    for (e, eq) in result.equations.iter().enumerate() {
        summary.push(vec![
            (e + 1).to_string(),
            eq.dependent.clone(),
            num(eq.r_squared),
            result.iterations.to_string(),
            result.converged.to_string(),
        ]);
    }
    tables.push(summary);

    let mut coefs = Table::new(
        "coefficients",
        "Structural coefficients (p-values descriptive only)",
        [
            "equation",
            "term",
            "coefficient",
            "unit_variance_coefficient",
            "std_error",
            "t_value",
            "p_value",
        ]
        .map(String::from)
        .to_vec(),
    );
    for (e, eq) in result.equations.iter().enumerate() {
        for t in &eq.terms {
            coefs.push(vec![
                (e + 1).to_string(),
                t.name.clone(),
                num(t.coefficient),
                num(t.unit_variance_coefficient),
                num(t.std_error),
                num(t.t_value),
                pvalue(t.p_value),
            ]);
        }
    }
    tables.push(coefs);

    let mut trace_header = vec!["iteration".to_string(), "change".to_string()];
    trace_header.extend(result.equations.iter().map(|e| format!("r_squared_{}", e.dependent)));
    let mut trace = Table::new("trace", "Iterations", trace_header);
    for it in &result.trace {
        let mut row = vec![it.iteration.to_string(), num(it.change)];
        row.extend(it.r_squared.iter().map(|r| num(*r)));
        trace.push(row);
    }
    tables.push(trace);

    for g in &spec.groups {
        let lv = &g.lv_name;
        let (Some(loadings), Some(weights)) = (result.loadings.get(lv), result.weights.get(lv)) else {
            continue;
        };
        let mut header = vec![String::new()];
        header.extend(loadings.iter().map(|(c, _)| c.clone()));
        let title = match result.equation_for(lv) {
            Some(eq) => format!("{lv} (R² = {})", num(eq.r_squared)),
            None => lv.clone(),
        };
        let mut t = Table::new(&format!("lv_{lv}"), &title, header);
        let mut row = vec!["Correlations".to_string()];
        row.extend(loadings.iter().map(|(_, l)| num(*l)));
        t.push(row);
        let mut row = vec!["Coefficients".to_string()];
        row.extend(weights.iter().map(|(_, w)| num(*w)));
        t.push(row);
        tables.push(t);
    }
    tables
}
