//! Small statistics toolkit used by the experiment drivers and tests:
//! means with standard errors, chi-square fits with bin pooling, ratio
//! estimators, and the hockey-stick regression for driven density traces.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Sample mean and standard error of the mean (`0` when fewer than two
/// samples).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Standard error of a difference or sum of two independent estimates.
pub fn combined_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Ratio estimator `Σ num / Σ den` over paired samples, with its
/// linearization standard error.
pub fn ratio_mean_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    let num_mean = num.iter().sum::<f64>() / n as f64;
    let den_mean = den.iter().sum::<f64>() / n as f64;
    let ratio = num_mean / den_mean;
    if n < 2 {
        return (ratio, 0.0);
    }
    let var = num
        .iter()
        .zip(den)
        .map(|(&r, &k)| (r - ratio * k).powi(2))
        .sum::<f64>()
        / (n as f64 - 1.0);
    (ratio, var.sqrt() / (den_mean * (n as f64).sqrt()))
}

/// Outcome of a chi-square test after bin pooling.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    /// Number of bins actually compared after pooling.
    pub bins: usize,
}

const MIN_EXPECTED: f64 = 5.0;

/// Pool adjacent bins (left to right) until each pooled bin's expected count
/// reaches the minimum; any light trailing remainder joins the final bin.
fn pool(observed: &[u64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let mut o_acc = 0.0;
    let mut e_acc = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o as f64;
        e_acc += e;
        if e_acc >= MIN_EXPECTED {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    (obs, exp)
}

fn chi_square_p(statistic: f64, dof: u32) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Goodness-of-fit test of observed counts against expected counts (same
/// binning, expected from fully specified theory — no fitted parameters).
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::InvalidParameter(
            "chi-square needs matching, nonempty observed/expected bins".into(),
        ));
    }
    let (obs, exp) = pool(observed, expected);
    if obs.len() < 2 {
        return Err(Error::InvalidParameter(
            "chi-square needs at least two pooled bins; increase the sample size".into(),
        ));
    }
    let statistic: f64 =
        obs.iter().zip(&exp).map(|(&o, &e)| (o - e) * (o - e) / e).sum();
    let dof = (obs.len() - 1) as u32;
    Ok(ChiSquareResult { statistic, dof, p_value: chi_square_p(statistic, dof), bins: obs.len() })
}

/// Two-sample homogeneity test on a pair of histograms over the same bins.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidParameter(
            "two-sample chi-square needs matching, nonempty histograms".into(),
        ));
    }
    let total_a: f64 = a.iter().map(|&x| x as f64).sum();
    let total_b: f64 = b.iter().map(|&x| x as f64).sum();
    let total = total_a + total_b;
    if total_a == 0.0 || total_b == 0.0 {
        return Err(Error::InvalidParameter("both samples must be nonempty".into()));
    }
    // Pool positionally on the combined column mass so both rows share one
    // binning, then test each row against its share of every pooled column.
    let mut cols: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        acc.0 += x as f64;
        acc.1 += y as f64;
        let scale = MIN_EXPECTED * total / total_a.min(total_b);
        if acc.0 + acc.1 >= scale {
            cols.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc != (0.0, 0.0) {
        if let Some(last) = cols.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            cols.push(acc);
        }
    }
    if cols.len() < 2 {
        return Err(Error::InvalidParameter(
            "two-sample chi-square needs at least two pooled bins".into(),
        ));
    }
    let mut statistic = 0.0;
    for &(oa, ob) in &cols {
        let col = oa + ob;
        let ea = col * total_a / total;
        let eb = col * total_b / total;
        statistic += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
    }
    let dof = (cols.len() - 1) as u32;
    Ok(ChiSquareResult { statistic, dof, p_value: chi_square_p(statistic, dof), bins: cols.len() })
}

/// Histogram of geometric samples on `{1, 2, …}` together with the expected
/// counts under success probability `p`, tail mass folded into the top bin.
pub fn geometric_counts(samples: &[u32], p: f64) -> (Vec<u64>, Vec<f64>) {
    let max = samples.iter().copied().max().unwrap_or(1).max(1) as usize;
    let mut observed = vec![0u64; max];
    for &s in samples {
        observed[(s as usize).min(max) - 1] += 1;
    }
    let n = samples.len() as f64;
    let mut expected = Vec::with_capacity(max);
    let q = 1.0 - p;
    for k in 1..=max {
        if k < max {
            expected.push(n * p * q.powi(k as i32 - 1));
        } else {
            expected.push(n * q.powi(max as i32 - 1));
        }
    }
    (observed, expected)
}

/// Chi-square fit of samples against `Geo(p)` on the positive integers.
pub fn chi_square_geometric_fit(samples: &[u32], p: f64) -> Result<ChiSquareResult> {
    let (observed, expected) = geometric_counts(samples, p);
    chi_square_gof(&observed, &expected)
}

/// Whether an observed success proportion sits within `z` binomial standard
/// errors of probability `p`.
pub fn proportion_within(successes: u64, trials: u64, p: f64, z: f64) -> bool {
    let n = trials as f64;
    let se = (p * (1.0 - p) / n).sqrt();
    ((successes as f64 / n) - p).abs() <= z * se
}

/// Hockey-stick regression: fit `y_t = s·min(t, b)` over `t = 1..=N` by
/// least squares, scanning every breakpoint `b`.
#[derive(Debug, Clone, Copy)]
pub struct TwoPhaseFit {
    /// Fitted breakpoint (1-based step index).
    pub breakpoint: usize,
    /// Slope of the rising phase.
    pub slope: f64,
    /// Plateau level `slope · breakpoint`.
    pub plateau: f64,
    /// Coefficient of determination of the best fit.
    pub r_squared: f64,
}

pub fn two_phase_fit(ys: &[f64]) -> Result<TwoPhaseFit> {
    let n = ys.len();
    if n < 3 {
        return Err(Error::InvalidParameter("two-phase fit needs at least 3 points".into()));
    }
    // Prefix sums let every breakpoint be scored in O(1).
    let mut sum_ty = vec![0.0; n + 1]; // Σ_{t≤b} t·y_t
    let mut sum_t2 = vec![0.0; n + 1]; // Σ_{t≤b} t²
    let mut sum_y = vec![0.0; n + 1]; // Σ_{t≤b} y_t
    let mut sum_y2 = vec![0.0; n + 1]; // Σ_{t≤b} y_t²
    for (i, &y) in ys.iter().enumerate() {
        let t = (i + 1) as f64;
        sum_ty[i + 1] = sum_ty[i] + t * y;
        sum_t2[i + 1] = sum_t2[i] + t * t;
        sum_y[i + 1] = sum_y[i] + y;
        sum_y2[i + 1] = sum_y2[i] + y * y;
    }
    let total_y = sum_y[n];
    let total_y2 = sum_y2[n];
    let mean = total_y / n as f64;
    let sst: f64 = total_y2 - n as f64 * mean * mean;
    let mut best: Option<TwoPhaseFit> = None;
    for b in 1..=n {
        let bf = b as f64;
        let tail_y = total_y - sum_y[b];
        // Minimize Σ_{t≤b}(y−st)² + Σ_{t>b}(y−sb)² over s.
        let numer = sum_ty[b] + bf * tail_y;
        let denom = sum_t2[b] + bf * bf * (n - b) as f64;
        let s = numer / denom;
        let sse = total_y2 - 2.0 * s * numer + s * s * denom;
        let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
        if best.map_or(true, |f| r2 > f.r_squared) {
            best = Some(TwoPhaseFit { breakpoint: b, slope: s, plateau: s * bf, r_squared: r2 });
        }
    }
    Ok(best.expect("at least one breakpoint scored"))
}
