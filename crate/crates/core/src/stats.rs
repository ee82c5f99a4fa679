//! Inference battery: percentile bootstrap, one-way ANOVA, t-tests and
//! logistic regression fitted by iteratively reweighted least squares.
//!
//! F and t p-values go through the regularized incomplete beta function,
//! evaluated by continued fraction (modified Lentz).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, StatsError};
use crate::model::{Condition, ConditionGrid, ConfidenceInterval};
use crate::par::{derive_seed, Exec};

// ---------------------------------------------------------------------------
// Special functions

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps small arguments accurate.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for I_x(a, b), valid for x < (a+1)/(a+b+2).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b). NaN outside the domain.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || a <= 0.0 || b <= 0.0 || x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// P(F >= f) for the F distribution with (d1, d2) degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)
}

// ---------------------------------------------------------------------------
// Bootstrap

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub level: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            level: 0.68,
            replicates: 10_000,
            seed: 0,
        }
    }
}

/// Mean computed about the first element, so constant inputs are reproduced
/// exactly.
fn shifted_mean(values: impl Iterator<Item = f64>, pivot: f64, len: usize) -> f64 {
    pivot + values.map(|v| v - pivot).sum::<f64>() / len as f64
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Percentile bootstrap interval for the mean of `values`.
///
/// Replicate `r` draws from its own ChaCha8 stream seeded with
/// `derive_seed(cfg.seed, r)`, so the interval does not depend on how
/// replicates are scheduled across threads.
pub fn bootstrap_ci(
    values: &[f64],
    cfg: &BootstrapConfig,
) -> Result<ConfidenceInterval, StatsError> {
    bootstrap_ci_with(values, cfg, Exec::default())
}

pub fn bootstrap_ci_with(
    values: &[f64],
    cfg: &BootstrapConfig,
    exec: Exec,
) -> Result<ConfidenceInterval, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(StatsError::BadLevel(cfg.level));
    }
    if cfg.replicates == 0 {
        return Err(StatsError::TooFew {
            what: "replicates",
            needed: 1,
            got: 0,
        });
    }
    let m = values.len();
    let pivot = values[0];
    let mut means = exec.map_range(cfg.replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
        shifted_mean((0..m).map(|_| values[rng.gen_range(0..m)]), pivot, m)
    });
    means.sort_by(f64::total_cmp);
    Ok(ConfidenceInterval {
        lo: quantile_sorted(&means, (1.0 - cfg.level) / 2.0),
        hi: quantile_sorted(&means, (1.0 + cfg.level) / 2.0),
        level: cfg.level,
    })
}

// ---------------------------------------------------------------------------
// ANOVA and t-tests

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Classical one-way ANOVA. When every value is identical the F statistic is
/// taken as 0 with p = 1.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew {
            what: "groups",
            needed: 2,
            got: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.is_empty()) {
        return Err(StatsError::TooFew {
            what: "values per group",
            needed: 1,
            got: g.len(),
        });
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    if total <= k {
        return Err(StatsError::TooFew {
            what: "within-group degrees of freedom",
            needed: 1,
            got: 0,
        });
    }
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = total - k;
    if ss_between == 0.0 && ss_within == 0.0 {
        return Ok(AnovaResult {
            f: 0.0,
            p: 1.0,
            df_between,
            df_within,
        });
    }
    let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f,
        p: f_survival(f, df_between as f64, df_within as f64),
        df_between,
        df_within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub df: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    (m, ss / (n - 1.0))
}

/// One-sample t-test of `mean(values) == mu0`.
pub fn one_sample_t(values: &[f64], mu0: f64) -> Result<TTestResult, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            what: "values",
            needed: 2,
            got: values.len(),
        });
    }
    let (m, var) = mean_var(values);
    if var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let df = (values.len() - 1) as f64;
    let t = (m - mu0) / (var / values.len() as f64).sqrt();
    Ok(TTestResult {
        t,
        p: student_t_two_sided_p(t, df),
        df,
    })
}

/// Two-sample t-test with pooled variance.
pub fn two_sample_t_pooled(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.is_empty() || b.is_empty() || a.len() + b.len() < 3 {
        return Err(StatsError::TooFew {
            what: "values",
            needed: 3,
            got: a.len() + b.len(),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ss = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>()
        + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let df = na + nb - 2.0;
    let pooled = ss / df;
    if pooled == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTestResult {
        t,
        p: student_t_two_sided_p(t, df),
        df,
    })
}

// ---------------------------------------------------------------------------
// Design matrix and logistic regression

/// Intercept plus one indicator per non-reference level of each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub column_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DesignMatrix {
    pub fn new(column_names: Vec<String>, x: DMatrix<f64>, y: DVector<f64>) -> Self {
        DesignMatrix { column_names, x, y }
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }
}

/// One-hot encodes conditions against `grid`. The first level of each factor
/// (declared order, then extra-block levels) is the dropped reference.
pub fn one_hot_encode(
    records: &[(Condition, bool)],
    grid: &ConditionGrid,
) -> Result<DesignMatrix, StatsError> {
    let mut names = vec!["intercept".to_owned()];
    let mut offsets = Vec::with_capacity(grid.factors.len());
    let mut levels = Vec::with_capacity(grid.factors.len());
    for f in &grid.factors {
        let lv = grid.levels_of(&f.name).unwrap_or_default();
        offsets.push(names.len());
        names.extend(lv.iter().skip(1).map(|l| format!("{}={}", f.name, l)));
        levels.push(lv);
    }
    let mut x = DMatrix::zeros(records.len(), names.len());
    let mut y = DVector::zeros(records.len());
    for (row, (cond, success)) in records.iter().enumerate() {
        if let Some((name, _)) = cond.iter().find(|(n, _)| grid.factor(n).is_none()) {
            return Err(ModelError::UnknownFactor(name.to_owned()).into());
        }
        x[(row, 0)] = 1.0;
        for ((f, lv), offset) in grid.factors.iter().zip(&levels).zip(&offsets) {
            let level = cond
                .get(&f.name)
                .ok_or_else(|| ModelError::IncompleteCondition {
                    condition: cond.to_string(),
                    factor: f.name.clone(),
                })?;
            let pos =
                lv.iter()
                    .position(|l| l == level)
                    .ok_or_else(|| ModelError::UnknownLevel {
                        factor: f.name.clone(),
                        level: level.to_owned(),
                    })?;
            if pos > 0 {
                x[(row, offset + pos - 1)] = 1.0;
            }
        }
        y[row] = if *success { 1.0 } else { 0.0 };
    }
    Ok(DesignMatrix::new(names, x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized log-likelihood at the final coefficients (plain
    /// log-likelihood when ridge is 0).
    pub log_likelihood: f64,
    /// Objective after each accepted iteration, starting from beta = 0.
    pub trace: Vec<f64>,
    pub ridge: f64,
    /// Some coefficient exceeded 15 in magnitude, which usually means the
    /// data are (quasi-)separated.
    pub separation_warning: bool,
}

const MAX_ITER: usize = 100;
const LL_TOL: f64 = 1e-10;
const SEPARATION_BOUND: f64 = 15.0;

fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn penalty(beta: &DVector<f64>, ridge: f64) -> f64 {
    0.5 * ridge * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

/// Bernoulli log-likelihood minus `ridge/2 * |beta without intercept|^2`.
pub fn logit_objective(design: &DesignMatrix, beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = &design.x * beta;
    let ll: f64 = eta
        .iter()
        .zip(design.y.iter())
        .map(|(e, y)| y * e - log1p_exp(*e))
        .sum();
    ll - penalty(beta, ridge)
}

/// Analytic gradient of [`logit_objective`].
pub fn logit_gradient(design: &DesignMatrix, beta: &DVector<f64>, ridge: f64) -> DVector<f64> {
    let eta = &design.x * beta;
    let resid = DVector::from_iterator(
        design.rows(),
        eta.iter()
            .zip(design.y.iter())
            .map(|(e, y)| y - sigmoid(*e)),
    );
    let mut g = design.x.transpose() * resid;
    for j in 1..g.len() {
        g[j] -= ridge * beta[j];
    }
    g
}

/// Negative Hessian of the objective: X^T W X + ridge * D.
fn information(design: &DesignMatrix, beta: &DVector<f64>, ridge: f64) -> DMatrix<f64> {
    let p = design.cols();
    let eta = &design.x * beta;
    let mut h = DMatrix::zeros(p, p);
    for (i, e) in eta.iter().enumerate() {
        let mu = sigmoid(*e);
        let w = mu * (1.0 - mu);
        if w == 0.0 {
            continue;
        }
        let row = design.x.row(i);
        for a in 0..p {
            let xa = row[a];
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                h[(a, b)] += w * xa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
        if a > 0 {
            h[(a, a)] += ridge;
        }
    }
    h
}

/// Solves `h x = rhs` for symmetric `h`, or `None` when `h` is not
/// numerically positive definite (some squared Cholesky pivot is below
/// 1e-12 of the largest diagonal entry).
fn spd_solve<C: nalgebra::Dim, S>(
    h: DMatrix<f64>,
    rhs: &nalgebra::Matrix<f64, nalgebra::Dyn, C, S>,
) -> Option<nalgebra::OMatrix<f64, nalgebra::Dyn, C>>
where
    S: nalgebra::storage::Storage<f64, nalgebra::Dyn, C>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Dyn, C>,
{
    let scale = h.diagonal().iter().fold(0.0_f64, |m, v| m.max(*v));
    let chol = h.cholesky()?;
    let l = chol.l_dirty();
    // NaN diagonals fail the first test too.
    if scale.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        || (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale)
    {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Fits a logistic regression by IRLS (Newton steps on the penalized
/// log-likelihood with step halving, so the objective never decreases).
///
/// Stops when an accepted step changes the objective by less than 1e-10, or
/// after 100 iterations.
pub fn logit_fit(design: &DesignMatrix, ridge: f64) -> Result<LogitFit, StatsError> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(StatsError::BadRidge(ridge));
    }
    let (n, p) = (design.rows(), design.cols());
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if ridge == 0.0 && n < p {
        return Err(StatsError::Underdetermined { rows: n, cols: p });
    }
    if let Some(bad) = design.y.iter().find(|y| **y != 0.0 && **y != 1.0) {
        return Err(StatsError::NonBinaryResponse(*bad));
    }

    let mut beta = DVector::zeros(p);
    let mut obj = logit_objective(design, &beta, ridge);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let grad = logit_gradient(design, &beta, ridge);
        let info = information(design, &beta, ridge);
        let step = match spd_solve(info, &grad) {
            Some(step) => step,
            None if iterations == 1 => return Err(StatsError::Singular),
            None => {
                log::warn!(
                    "information matrix lost positive definiteness at iteration {iterations}"
                );
                break;
            }
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let cand_obj = logit_objective(design, &cand, ridge);
            if cand_obj >= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_obj)) = accepted else {
            // No ascent possible along the Newton direction: at the optimum
            // up to rounding.
            converged = true;
            break;
        };
        let delta = next_obj - obj;
        beta = next;
        obj = next_obj;
        trace.push(obj);
        if delta.abs() < LL_TOL {
            converged = true;
            break;
        }
    }

    let info = information(design, &beta, ridge);
    let std_errors = match spd_solve(info, &DMatrix::identity(p, p)) {
        Some(inv) => (0..p).map(|j| inv[(j, j)].sqrt()).collect(),
        None => vec![f64::NAN; p],
    };
    let separation_warning = beta.iter().any(|b| b.abs() > SEPARATION_BOUND);
    Ok(LogitFit {
        column_names: design.column_names.clone(),
        coefficients: beta.iter().copied().collect(),
        std_errors,
        converged,
        iterations,
        log_likelihood: obj,
        trace,
        ridge,
        separation_warning,
    })
}
