//! Exact engine checks against independent oracles. Each returns the worst
//! observed discrepancy, or a description of what went wrong.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use tcpm_core::data_io::generate_figure8_scenario;
use tcpm_core::engine::{run_estimation, Estimator, Factors, PreparedModel};
use tcpm_core::linalg::FactorScores;
use tcpm_core::model::{Equation, EstimationConfig, GroupBinding, Mode, ModelSpec};

use super::*;

pub type Check = Result<f64, String>;

fn group(lv: &str, prefix: &str, m: usize) -> GroupBinding {
    GroupBinding {
        columns: names(prefix, m),
        ..GroupBinding::new(lv, &[])
    }
}

fn tight(mode: Mode) -> EstimationConfig {
    EstimationConfig {
        mode,
        tolerance: 1e-14,
        max_iter: 20_000,
        ..EstimationConfig::default()
    }
}

/// Two blocks sharing one strong latent direction plus noise.
fn two_blocks(seed: u64, n: usize, p: usize, q: usize) -> (Array2<f64>, Array2<f64>) {
    let z = random_vector(seed, n);
    let mut x = random_matrix(seed + 1, n, p);
    let mut y = random_matrix(seed + 2, n, q);
    for i in 0..n {
        x[[i, 0]] += 2.0 * z[i];
        y[[i, 0]] += 1.5 * z[i];
        y[[i, 1]] -= z[i];
    }
    (x, y)
}

fn mismatch(a: &FactorScores, b: &Array1<f64>) -> f64 {
    1.0 - abs_cos(a.scores(), b)
}

fn centered(x: &Array2<f64>) -> DMatrix<f64> {
    to_na(&standardize_columns(x))
}

/// One predictor group, one dependent group, skip-external TCPM: the factor
/// pair is the first canonical pair, from QR + SVD in nalgebra.
pub fn cca_equivalence() -> Check {
    let mut worst = 0.0f64;
    for seed in [3u64, 17, 101] {
        let (x, y) = two_blocks(seed * 10, 40, 4, 3);
        let data = dataset(&[("x", &x), ("y", &y)]);
        let spec = ModelSpec {
            groups: vec![group("X", "x", 4), group("Y", "y", 3)],
            equations: vec![Equation::new("Y", &["X"])],
        };
        let cfg = EstimationConfig {
            skip_external: true,
            ..tight(Mode::Tcpm)
        };
        let r = run_estimation(&spec, &data, &cfg).map_err(|e| e.to_string())?;
        if !r.converged {
            return Err(format!("seed {seed}: no convergence"));
        }
        let qx = centered(&x).qr().q();
        let qy = centered(&y).qr().q();
        let svd = (qx.transpose() * &qy).svd(true, true);
        let (k, _) = svd.singular_values.argmax();
        let u = qx * svd.u.unwrap().column(k);
        let v = qy * svd.v_t.unwrap().row(k).transpose();
        worst = worst
            .max(mismatch(r.factor("X"), &from_na_vec(&u)))
            .max(mismatch(r.factor("Y"), &from_na_vec(&v)));
    }
    if worst <= 1e-6 {
        Ok(worst)
    } else {
        Err(format!("angular mismatch {worst:.2e}"))
    }
}

/// Same model with the simple resultant (k=0, α=1, identity): factors are
/// the rank-1 PLS components from alternating `w ∝ XᵀF_Y`, `c ∝ YᵀF_X`.
pub fn pls_rank1_equivalence() -> Check {
    let mut worst = 0.0f64;
    for seed in [5u64, 23, 77] {
        let (x, y) = two_blocks(seed * 10, 30, 5, 4);
        let data = dataset(&[("x", &x), ("y", &y)]);
        let spec = ModelSpec {
            groups: vec![group("X", "x", 5), group("Y", "y", 4)],
            equations: vec![Equation::new("Y", &["X"])],
        };
        let r = run_estimation(&spec, &data, &tight(Mode::Tcpm)).map_err(|e| e.to_string())?;
        if !r.converged {
            return Err(format!("seed {seed}: no convergence"));
        }
        let (xn, yn) = (centered(&x), centered(&y));
        let mut fy = yn.column(0).into_owned();
        let mut fx = xn.column(0).into_owned();
        for _ in 0..20_000 {
            let w = xn.transpose() * &fy;
            fx = (&xn * w).normalize();
            let c = yn.transpose() * &fx;
            let next = (&yn * c).normalize();
            let done = (&next - &fy).norm() < 1e-15;
            fy = next;
            if done {
                break;
            }
        }
        worst = worst
            .max(mismatch(r.factor("X"), &from_na_vec(&fx)))
            .max(mismatch(r.factor("Y"), &from_na_vec(&fy)));
    }
    if worst <= 1e-6 {
        Ok(worst)
    } else {
        Err(format!("angular mismatch {worst:.2e}"))
    }
}

/// Starting each explanatory factor at the standardized `⟨X_t⟩` part of the
/// regression of `y` on all explanatory columns, one skip-external TCPM
/// iteration moves nothing.
pub fn fixed_point_invariance() -> Check {
    let n = 25;
    let x1 = random_matrix(61, n, 3);
    let x2 = random_matrix(62, n, 2);
    let mut y = random_matrix(63, n, 1);
    for i in 0..n {
        y[[i, 0]] += x1[[i, 0]] - 0.5 * x1[[i, 2]] + 0.8 * x2[[i, 1]];
    }
    let data = dataset(&[("a", &x1), ("b", &x2), ("y", &y)]);
    let spec = ModelSpec {
        groups: vec![group("A", "a", 3), group("B", "b", 2), group("Y", "y", 1)],
        equations: vec![Equation::new("Y", &["A", "B"])],
    };
    let cfg = EstimationConfig {
        skip_external: true,
        ..EstimationConfig::default()
    };
    let (s1, s2) = (standardize_columns(&x1), standardize_columns(&x2));
    let both = linalg_hstack(&s1, &s2);
    let ys = factor(standardize_columns(&y).column(0).to_owned());
    let beta = to_na(&both).pseudo_inverse(1e-12).unwrap() * to_na_vec(ys.scores());
    let part = |block: &Array2<f64>, from: usize| {
        let b = Array1::from_iter((0..block.ncols()).map(|j| beta[from + j]));
        factor(block.dot(&b))
    };
    let mut start = Factors::new();
    start.insert("A".into(), part(&s1, 0));
    start.insert("B".into(), part(&s2, 3));
    start.insert("Y".into(), ys);
    let mut est = Estimator::new(&spec, &data, &cfg)
        .map_err(|e| e.to_string())?
        .with_factors(start.clone());
    est.step().map_err(|e| e.to_string())?;
    let moved = start
        .iter()
        .map(|(lv, f)| est.state().factors[lv].change_from(f))
        .fold(0.0, f64::max);
    if moved <= 1e-8 {
        Ok(moved)
    } else {
        Err(format!("factors moved by {moved:.2e}"))
    }
}

fn linalg_hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).unwrap()
}

/// On the four-point collinear scenario Lohmöller's scheme lands on `b`, TCPM on `a`.
pub fn collinear_scenario_discrimination() -> Check {
    let (data, spec) = generate_figure8_scenario();
    let col = |c: &str| data.column(c).unwrap().to_owned();
    let lohmoller = run_estimation(&spec, &data, &tight(Mode::Lohmoller)).map_err(|e| e.to_string())?;
    let tcpm = run_estimation(&spec, &data, &tight(Mode::Tcpm)).map_err(|e| e.to_string())?;
    let to_b = mismatch(lohmoller.factor("X1"), &col("b"));
    let to_a = mismatch(tcpm.factor("X1"), &col("a"));
    let worst = to_a.max(to_b);
    if worst <= 1e-8 {
        Ok(worst)
    } else {
        Err(format!("lohmoller vs b {to_b:.2e}, tcpm vs a {to_a:.2e}"))
    }
}

/// Skip-external TCPM without interactions: R² never drops across single
/// factor updates. Returns the largest drop seen.
pub fn r_squared_monotone() -> Check {
    let mut worst = 0.0f64;
    for seed in [7u64, 8, 9, 10] {
        let n = 30;
        let x1 = random_matrix(seed * 100, n, 4);
        let x2 = random_matrix(seed * 100 + 1, n, 3);
        let mut y = random_matrix(seed * 100 + 2, n, 3);
        for i in 0..n {
            y[[i, 0]] += x1[[i, 1]] + x2[[i, 0]];
            y[[i, 2]] -= x1[[i, 3]];
        }
        let data = dataset(&[("a", &x1), ("b", &x2), ("y", &y)]);
        let spec = ModelSpec {
            groups: vec![group("A", "a", 4), group("B", "b", 3), group("Y", "y", 3)],
            equations: vec![Equation::new("Y", &["A", "B"])],
        };
        let cfg = EstimationConfig {
            skip_external: true,
            ..EstimationConfig::default()
        };
        let mut est = Estimator::new(&spec, &data, &cfg).map_err(|e| e.to_string())?;
        let mut last = est
            .model()
            .equation_r_squared(0, &est.state().factors, false)
            .map_err(|e| e.to_string())?;
        for _ in 0..30 {
            let log = est.step().map_err(|e| e.to_string())?;
            for u in &log.updates {
                worst = worst.max(last - u.r_squared[0]);
                last = u.r_squared[0];
            }
        }
    }
    if worst <= 1e-10 {
        Ok(worst.max(0.0))
    } else {
        Err(format!("R² dropped by {worst:.2e}"))
    }
}

/// Data whose dependent is exactly additive in `A` and a single-column `B`:
/// the interaction loop returns the plain oblique-projection estimate.
pub fn delta_zero_reduction() -> Check {
    let n = 30;
    let xa = random_matrix(301, n, 3);
    let b = random_matrix(302, n, 1);
    let sa = standardize_columns(&xa);
    let sb = standardize_columns(&b);
    let mut c = Array2::zeros((n, 1));
    for i in 0..n {
        c[[i, 0]] = 0.7 * sa[[i, 0]] - 0.4 * sa[[i, 2]] + 0.5 * sb[[i, 0]];
    }
    let data = dataset(&[("a", &xa), ("b", &b), ("c", &c)]);
    let spec = ModelSpec {
        groups: vec![group("A", "a", 3), group("B", "b", 1), group("C", "c", 1)],
        equations: vec![Equation::new("C", &["A", "B"]).with_interaction("A", &["B"])],
    };
    let cfg = EstimationConfig {
        with_interactions: true,
        tolerance: 1e-12,
        ..EstimationConfig::default()
    };
    let model = PreparedModel::new(&spec, &data, &cfg).map_err(|e| e.to_string())?;
    let factors = model.init_factors().map_err(|e| e.to_string())?;
    let plain = model
        .tcpm_internal_explanatory(0, "A", &factors)
        .map_err(|e| e.to_string())?;
    let inter = model.interactive_internal(0, "A", &factors).map_err(|e| e.to_string())?;
    let delta = inter.deltas[0].1.abs();
    let gap = mismatch(&inter.phi, plain.scores()).max(delta);
    if gap <= 1e-6 {
        Ok(gap)
    } else {
        Err(format!("|δ̂| = {delta:.2e}, angular gap {:.2e}", mismatch(&inter.phi, plain.scores())))
    }
}

fn within(worst: f64, tol: f64, what: &str) -> Check {
    if worst <= tol {
        Ok(worst)
    } else {
        Err(format!("{what} {worst:.2e} > {tol:.0e}"))
    }
}

/// `R^α y` against `Σ λ^α ⟨G|y⟩ G` from nalgebra's eigendecomposition of `XXᵀ`.
pub fn eigen_expansion_identity() -> Check {
    use tcpm_core::resultants::{linear_resultant, Metric};
    let mut worst = 0.0f64;
    for (seed, alpha) in [(1u64, 0.0), (2, 0.5), (3, 1.0), (4, 2.5), (5, 3.0)] {
        let x = standardize_columns(&random_matrix(seed, 12, 5));
        let y = random_vector(seed + 50, 12);
        let ours = linear_resultant(x.view(), &Metric::identity(5), y.view(), alpha)
            .map_err(|e| e.to_string())?;
        let xn = to_na(&x);
        let eig = (&xn * xn.transpose()).symmetric_eigen();
        let top = eig.eigenvalues.max();
        let yn = to_na_vec(&y);
        let mut oracle = nalgebra::DVector::zeros(12);
        for k in 0..12 {
            let l = eig.eigenvalues[k];
            if l > 1e-10 * top {
                let g = eig.eigenvectors.column(k);
                oracle += g * (l.powf(alpha) * g.dot(&yn));
            }
        }
        let oracle = from_na_vec(&oracle);
        let d = &ours - &oracle;
        worst = worst.max(d.dot(&d).sqrt() / oracle.dot(&oracle).sqrt());
    }
    within(worst, 1e-8, "relative error")
}

/// The grouped non-linear resultant against `X M_{X,y,k} Xᵀ y`.
pub fn grouped_equals_local_metric() -> Check {
    use tcpm_core::resultants::{local_metric, nl_resultant_grouped, Partition};
    let mut worst = 0.0f64;
    for k in 0..5u32 {
        let x = random_matrix(70 + k as u64, 10, 6);
        let y = random_vector(80 + k as u64, 10);
        let p = Partition::new(vec![vec![0, 3], vec![1], vec![2, 4, 5]], 6).map_err(|e| e.to_string())?;
        let grouped = nl_resultant_grouped(x.view(), &p, k, y.view()).map_err(|e| e.to_string())?;
        let m = local_metric(x.view(), &p, k, y.view()).map_err(|e| e.to_string())?;
        let via_metric = x.dot(&m.matrix().dot(&x.t().dot(&y)));
        let d = &via_metric - &grouped;
        worst = worst.max(d.dot(&d).sqrt() / grouped.dot(&grouped).sqrt());
    }
    within(worst, 1e-10, "relative error")
}

/// `Σ_f Σ_j cos^{2k}(x^j, f)` against `Σ_f ⟨R_{k-1} f | f⟩` with singleton groups.
pub fn quartimax_identity() -> Check {
    use tcpm_core::linalg::span_basis;
    use tcpm_core::resultants::{nl_resultant_grouped, quartimax_criterion, Partition};
    let mut worst = 0.0f64;
    for k in 2..6u32 {
        let x = standardize_columns(&random_matrix(90 + k as u64, 14, 5));
        let basis = span_basis(standardize_columns(&random_matrix(95 + k as u64, 14, 3)).view());
        let factors: Vec<FactorScores> = basis.columns().into_iter().map(|c| factor(c.to_owned())).collect();
        let crit = quartimax_criterion(x.view(), &factors, k).map_err(|e| e.to_string())?;
        let mut via = 0.0;
        for f in &factors {
            let r = nl_resultant_grouped(x.view(), &Partition::singletons(5), k - 1, f.view())
                .map_err(|e| e.to_string())?;
            via += r.dot(f.scores());
        }
        worst = worst.max((crit - via).abs() / via.abs());
    }
    within(worst, 1e-10, "relative error")
}

/// Every check of the exact property suite, by name.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("eigen expansion", eigen_expansion_identity()),
        ("grouped = local metric", grouped_equals_local_metric()),
        ("quartimax identity", quartimax_identity()),
        ("R² monotone", r_squared_monotone()),
        ("CCA oracle", cca_equivalence()),
        ("PLS rank-1 oracle", pls_rank1_equivalence()),
        ("collinear scenario", collinear_scenario_discrimination()),
        ("fixed point", fixed_point_invariance()),
        ("δ=0 reduction", delta_zero_reduction()),
    ]
}
