//! Leave-one-out jackknife over realizations.
//!
//! All reductions here run sequentially in realization order, so results are
//! bit-identical for a given input regardless of how the samples were
//! produced.

use num_complex::Complex64;

/// Mean and jackknife standard error of complex samples.
pub fn jackknife_mean(samples: &[Complex64]) -> (Complex64, f64) {
    let n = samples.len();
    if n == 0 {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    let total: Complex64 = samples.iter().sum();
    let mean = total / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let m = (n - 1) as f64;
    let spread: f64 = samples
        .iter()
        .map(|x| {
            let loo = (total - x) / m;
            (loo - mean).norm_sqr()
        })
        .sum();
    (mean, (m / n as f64 * spread).sqrt())
}

/// Mean and jackknife standard error of real samples.
pub fn jackknife_mean_real(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let total: f64 = samples.iter().sum();
    let mean = total / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let m = (n - 1) as f64;
    let spread: f64 = samples
        .iter()
        .map(|x| {
            let d = (total - x) / m - mean;
            d * d
        })
        .sum();
    (mean, (m / n as f64 * spread).sqrt())
}

/// Jackknife estimate of a smooth statistic of several sample means.
///
/// `samples` is row-major, `width` values per realization. `stat` receives
/// the column means. Returns the full-sample value and its standard error.
pub fn jackknife_stat<F>(samples: &[f64], width: usize, stat: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    assert!(width > 0 && samples.len().is_multiple_of(width));
    let n = samples.len() / width;
    let mut totals = vec![0.0; width];
    for row in samples.chunks_exact(width) {
        for (t, x) in totals.iter_mut().zip(row) {
            *t += x;
        }
    }
    let means: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let value = stat(&means);
    if n < 2 {
        return (value, f64::NAN);
    }
    let m = (n - 1) as f64;
    let mut loo = vec![0.0; width];
    let mut acc = 0.0;
    let mut spread = 0.0;
    let loo_values: Vec<f64> = samples
        .chunks_exact(width)
        .map(|row| {
            for ((l, t), x) in loo.iter_mut().zip(&totals).zip(row) {
                *l = (t - x) / m;
            }
            stat(&loo)
        })
        .collect();
    for v in &loo_values {
        acc += v;
    }
    let loo_mean = acc / n as f64;
    for v in &loo_values {
        spread += (v - loo_mean) * (v - loo_mean);
    }
    (value, (m / n as f64 * spread).sqrt())
}
