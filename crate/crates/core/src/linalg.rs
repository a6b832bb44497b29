//! Dense linear algebra used throughout the estimation code.
//!
//! Everything here works on small dense blocks (a few dozen columns, at most a
//! few hundred rows), so the decompositions are plain Jacobi sweeps: slow in
//! theory, but exact to working precision and fully deterministic.
//!
//! Column blocks are `n × J` arrays whose columns are variables. A block with
//! zero columns is valid and spans the null subspace.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative threshold on eigenvalues (squared singular values) below which a
/// direction is treated as absent.
pub const RANK_TOL: f64 = 1e-10;

/// Relative threshold on Gram eigenvalues of two stacked orthonormal bases
/// below which their spans are considered to intersect.
pub const OVERLAP_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// A zero-mean, unit-norm score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores(Array1<f64>);

impl FactorScores {
    /// Centers `v` and scales it to unit Euclidean norm.
    ///
    /// Fails with [`Error::ConstantVector`] when every entry equals the mean
    /// to within `1e-12` relative to the largest entry.
    pub fn standardize(v: ArrayView1<f64>) -> Result<Self> {
        let n = v.len();
        if n < 2 {
            return Err(Error::ConstantVector);
        }
        let mean = v.sum() / n as f64;
        let centered = v.mapv(|x| x - mean);
        let spread = centered.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if spread == 0.0 || spread <= 1e-12 * scale {
            return Err(Error::ConstantVector);
        }
        let norm = centered.dot(&centered).sqrt();
        Ok(FactorScores(centered / norm))
    }

    /// Wraps a vector that is already standardized. The caller vouches for it.
    pub(crate) fn from_standardized(v: Array1<f64>) -> Self {
        FactorScores(v)
    }

    pub fn scores(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Flips the sign when the inner product with `reference` is negative.
    pub fn aligned_with(self, reference: ArrayView1<f64>) -> Self {
        if self.0.dot(&reference) < 0.0 {
            FactorScores(-self.0)
        } else {
            self
        }
    }

    /// Sign-invariant distance `min(‖a − b‖, ‖a + b‖)`.
    pub fn change_from(&self, previous: &FactorScores) -> f64 {
        let d = &self.0 - &previous.0;
        let s = &self.0 + &previous.0;
        d.dot(&d).sqrt().min(s.dot(&s).sqrt())
    }

    /// Pearson correlation with an arbitrary (non-constant) vector.
    pub fn correlation(&self, other: ArrayView1<f64>) -> f64 {
        correlation(self.0.view(), other)
    }
}

/// Free-function form of [`FactorScores::standardize`].
pub fn standardize(v: ArrayView1<f64>) -> Result<FactorScores> {
    FactorScores::standardize(v)
}

pub fn correlation(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn center(v: ArrayView1<f64>) -> Array1<f64> {
    let mean = v.sum() / v.len() as f64;
    v.mapv(|x| x - mean)
}

/// Stacks column vectors into an `n × k` block.
pub fn column_block<'a, I>(n: usize, columns: I) -> Array2<f64>
where
    I: IntoIterator<Item = ArrayView1<'a, f64>>,
{
    let cols: Vec<ArrayView1<f64>> = columns.into_iter().collect();
    let mut out = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    out
}

pub fn hstack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot join blocks with {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(concatenate(Axis(1), &[a, b]).expect("row counts checked"))
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of eigenvalues above `RANK_TOL` times the largest one.
    pub fn rank(&self) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues;
        scaled.dot(&self.eigenvectors.t())
    }
}

fn max_asymmetry(s: ArrayView2<f64>) -> f64 {
    let m = s.nrows();
    let mut worst = 0.0_f64;
    for i in 0..m {
        for j in (i + 1)..m {
            worst = worst.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    worst
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; each eigenvector's
/// largest-magnitude entry is made positive. Tiny negative eigenvalues
/// (within `1e-10 · λ_max`) are clamped to zero, larger ones are rejected.
pub fn sym_eig(s: ArrayView2<f64>) -> Result<EigenSystem> {
    let (values, vectors) = jacobi_eigen(s)?;
    let top = values.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
    let mut values = values;
    for l in values.iter_mut() {
        if *l < 0.0 {
            if *l < -RANK_TOL * top {
                return Err(Error::NotPositiveSemidefinite(*l));
            }
            *l = 0.0;
        }
    }
    Ok(EigenSystem {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Raw Jacobi solver: sorted descending, sign-fixed, no PSD requirement.
pub(crate) fn jacobi_eigen(s: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (m, m2) = s.dim();
    if m != m2 {
        return Err(Error::DimensionMismatch(format!("matrix is {m}×{m2}, not square")));
    }
    let scale = s.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    let asym = max_asymmetry(s);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    // Symmetrize explicitly so rounding asymmetry cannot leak into the result.
    let mut a = Array2::from_shape_fn((m, m), |(i, j)| 0.5 * (s[[i, j]] + s[[j, i]]));
    let mut v = Array2::<f64>::eye(m);
    let total: f64 = a.iter().map(|x| x * x).sum();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;

                for k in 0..m {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - sn * akq;
                    a[[k, q]] = sn * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - sn * aqk;
                    a[[q, k]] = sn * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((m, m));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        fix_sign(&mut col);
        vectors.column_mut(dst).assign(&col);
    }
    Ok((values, vectors))
}

/// Makes the entry of largest magnitude positive (first one on ties).
fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 * best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// `Σ λ_k^α G^k G^kᵀ` for a symmetric PSD `S`.
///
/// Eigenvalues below the rank threshold are treated as zero for every α, so
/// `α = 0` yields the orthogonal projector onto the numerical range of `S`.
pub fn sym_power(s: ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if alpha < 0.0 || alpha.is_nan() {
        return Err(Error::NegativeAlpha(alpha));
    }
    let eig = sym_eig(s)?;
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let powered = eig.eigenvalues.mapv(|l| {
        if top <= 0.0 || l <= RANK_TOL * top {
            0.0
        } else if alpha == 0.0 {
            1.0
        } else {
            l.powf(alpha)
        }
    });
    let scaled = &eig.eigenvectors * &powered;
    Ok(scaled.dot(&eig.eigenvectors.t()))
}

/// Moore–Penrose inverse of a symmetric PSD matrix.
pub fn pinv_sym(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = sym_eig(s)?;
    let top = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let inv = eig
        .eigenvalues
        .mapv(|l| if top > 0.0 && l > RANK_TOL * top { 1.0 / l } else { 0.0 });
    let scaled = &eig.eigenvectors * &inv;
    Ok(scaled.dot(&eig.eigenvectors.t()))
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`, σ descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    /// Number of singular values with `σ² > RANK_TOL · σ_1²`.
    pub fn rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        let cut = RANK_TOL * top * top;
        self.singular_values.iter().filter(|&&s| s * s > cut).count()
    }

    /// Orthonormal basis of the numerical column space.
    pub fn range_basis(&self) -> Array2<f64> {
        self.u.slice(s![.., ..self.rank()]).to_owned()
    }
}

/// One-sided (Hestenes) Jacobi SVD. Works for any shape, including blocks
/// with more columns than rows.
pub fn thin_svd(a: ArrayView2<f64>) -> Svd {
    let (n, p) = a.dim();
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| a.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            e
        })
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

    let scale = cols.iter().map(|c| dot(c, c)).fold(0.0_f64, f64::max);
    // Columns this small are rounding debris; rotating them never converges.
    let floor = scale * 1e-28;

    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for i in 0..p {
                for j in (i + 1)..p {
                    let alpha = dot(&cols[i], &cols[i]);
                    let beta = dot(&cols[j], &cols[j]);
                    if alpha <= floor || beta <= floor {
                        continue;
                    }
                    let gamma = dot(&cols[i], &cols[j]);
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let sn = c * t;
                    let (left, right) = cols.split_at_mut(j);
                    rotate(&mut left[i], &mut right[0], c, sn);
                    let (left, right) = vcols.split_at_mut(j);
                    rotate(&mut left[i], &mut right[0], c, sn);
                }
            }
            if !rotated {
                break;
            }
        }
    }

    let sigmas: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]).then(i.cmp(&j)));

    let mut u = Array2::zeros((n, p));
    let mut v = Array2::zeros((p, p));
    let mut singular_values = Array1::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = sigmas[src];
        singular_values[dst] = sigma;
        if sigma > 0.0 {
            for (k, x) in cols[src].iter().enumerate() {
                u[[k, dst]] = x / sigma;
            }
        }
        for (k, x) in vcols[src].iter().enumerate() {
            v[[k, dst]] = *x;
        }
    }
    Svd {
        u,
        singular_values,
        v,
    }
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

fn check_rows(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "block has {} rows but vector has length {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Orthonormal basis of `⟨X⟩`; `n × 0` when `X` is empty or null.
pub fn span_basis(x: ArrayView2<f64>) -> Array2<f64> {
    if x.ncols() == 0 {
        return Array2::zeros((x.nrows(), 0));
    }
    thin_svd(x).range_basis()
}

/// Orthogonal projection of `y` onto the span of the columns of `X`.
pub fn project_span(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_rows(x, y)?;
    let basis = span_basis(x);
    Ok(basis.dot(&basis.t().dot(&y)))
}

/// The `⟨X⟩` and `⟨Z⟩` parts of `Π_{⟨X⟩+⟨Z⟩} y`.
#[derive(Debug, Clone)]
pub struct ObliqueSplit {
    pub x_part: Array1<f64>,
    pub z_part: Array1<f64>,
}

impl ObliqueSplit {
    pub fn fitted(&self) -> Array1<f64> {
        &self.x_part + &self.z_part
    }
}

/// Regresses `y` on `[X, Z]` and splits the fitted value into its `⟨X⟩` and
/// `⟨Z⟩` components. The split is unique only when the spans meet in `{0}`;
/// otherwise [`Error::OverlappingSubspaces`] is returned.
pub fn oblique_split(
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<ObliqueSplit> {
    check_rows(x, y)?;
    check_rows(z, y)?;
    let n = y.len();
    let bx = span_basis(x);
    let bz = span_basis(z);
    let (rx, rz) = (bx.ncols(), bz.ncols());
    if rz == 0 {
        let x_part = bx.dot(&bx.t().dot(&y));
        return Ok(ObliqueSplit {
            x_part,
            z_part: Array1::zeros(n),
        });
    }
    if rx == 0 {
        let z_part = bz.dot(&bz.t().dot(&y));
        return Ok(ObliqueSplit {
            x_part: Array1::zeros(n),
            z_part,
        });
    }

    let w = hstack(bx.view(), bz.view())?;
    let gram = w.t().dot(&w);
    let (values, vectors) = jacobi_eigen(gram.view())?;
    let top = values[0];
    let bottom = values[values.len() - 1];
    if bottom < OVERLAP_TOL * top {
        return Err(Error::OverlappingSubspaces(format!(
            "spans of dimension {rx} and {rz} intersect (smallest principal gap {bottom:e})"
        )));
    }
    let rhs = w.t().dot(&y);
    let inv = vectors.mapv(|x| x) / &values;
    let coef = inv.dot(&vectors.t().dot(&rhs));
    let x_part = bx.dot(&coef.slice(s![..rx]));
    let z_part = bz.dot(&coef.slice(s![rx..]));
    Ok(ObliqueSplit { x_part, z_part })
}

/// `Π_⟨X⟩^⟨Z⟩ y`: the `⟨X⟩`-part of the projection onto `⟨X⟩ + ⟨Z⟩`.
pub fn oblique_component(
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    Ok(oblique_split(x, z, y)?.x_part)
}

/// Least-squares fit without intercept.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub coefficients: Array1<f64>,
    pub fitted: Array1<f64>,
    pub residuals: Array1<f64>,
    pub r_squared: f64,
    /// Numerical rank of the predictor block.
    pub rank: usize,
}

/// Minimal-norm least squares of `y` on the columns of `predictors`.
pub fn ols(predictors: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<RegressionFit> {
    check_rows(predictors, y)?;
    if predictors.ncols() == 0 {
        return Err(Error::InvalidParameter("regression needs at least one predictor".into()));
    }
    let svd = thin_svd(predictors);
    let r = svd.rank();
    let u = svd.u.slice(s![.., ..r]);
    let sig = svd.singular_values.slice(s![..r]);
    let v = svd.v.slice(s![.., ..r]);
    let uty = u.t().dot(&y) / sig;
    let coefficients = v.dot(&uty);
    let fitted = predictors.dot(&coefficients);
    let residuals = &y - &fitted;
    let centered = center(y);
    let tss = centered.dot(&centered);
    let rss = residuals.dot(&residuals);
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(RegressionFit {
        coefficients,
        fitted,
        residuals,
        r_squared,
        rank: r,
    })
}

/// Diagonal of the pseudo-inverse of `XᵀX`, used for coefficient standard errors.
pub fn gram_pinv_diagonal(x: ArrayView2<f64>) -> Array1<f64> {
    let svd = thin_svd(x);
    let r = svd.rank();
    let mut diag = Array1::zeros(x.ncols());
    for k in 0..r {
        let s2 = svd.singular_values[k] * svd.singular_values[k];
        for j in 0..x.ncols() {
            diag[j] += svd.v[[j, k]] * svd.v[[j, k]] / s2;
        }
    }
    diag
}
