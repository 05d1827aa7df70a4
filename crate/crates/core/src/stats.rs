//! Small statistics toolkit shared by the experiments: survival curves,
//! log-linear tail fits with bootstrap intervals, quantiles and binomial
//! intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// `S[n] = P(X > n)` for `n = 0..=max(X)`.
pub fn survival(values: &[u32]) -> Vec<f64> {
    let Some(&max) = values.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0usize; max as usize + 1];
    for &v in values {
        counts[v as usize] += 1;
    }
    let total = values.len() as f64;
    let mut above = values.len();
    counts
        .into_iter()
        .map(|c| {
            above -= c;
            above as f64 / total
        })
        .collect()
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::arg(format!("quantile level {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Ok(if i + 1 < v.len() { v[i] + frac * (v[i + 1] - v[i]) } else { v[i] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize) -> Interval {
    if n == 0 {
        return Interval { estimate: f64::NAN, lo: 0.0, hi: 1.0 };
    }
    let nf = n as f64;
    let ph = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (ph + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (ph * (1.0 - ph) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Interval { estimate: ph, lo: (centre - half).max(0.0), hi: (centre + half).min(1.0) }
}

/// Sample mean with a normal-approximation 95% interval.
pub fn mean_interval(values: &[f64]) -> Interval {
    let n = values.len();
    if n == 0 {
        return Interval { estimate: f64::NAN, lo: f64::NAN, hi: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Interval { estimate: mean, lo: mean, hi: mean };
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z95 * (var / n as f64).sqrt();
    Interval { estimate: mean, lo: mean - half, hi: mean + half }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} points for a line fit", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

/// Fit of `ln P(X > n) = a - rate * n`.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub rate: Interval,
    pub intercept: f64,
    /// Abscissae used by the point estimate.
    pub n_lo: u32,
    pub n_hi: u32,
    pub samples: usize,
}

/// Points `(n, ln S[n])` for `n_min <= n` while at least `min_exceed`
/// observations exceed `n`.
fn tail_points(values: &[u32], n_min: u32, min_exceed: usize) -> (Vec<f64>, Vec<f64>) {
    let s = survival(values);
    let total = values.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (n, &sn) in s.iter().enumerate().skip(n_min as usize) {
        if sn * total < min_exceed as f64 - 0.5 {
            break;
        }
        xs.push(n as f64);
        ys.push(sn.ln());
    }
    (xs, ys)
}

/// Log-linear tail fit with a percentile bootstrap interval for the rate.
pub fn fit_tail(values: &[u32], n_min: u32, min_exceed: usize, resamples: usize, seed: u64) -> Result<TailFit> {
    let (xs, ys) = tail_points(values, n_min, min_exceed);
    let (a, b) = ols(&xs, &ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates = Vec::with_capacity(resamples);
    let mut buf = vec![0u32; values.len()];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = values[rng.gen_range(0..values.len())];
        }
        let (bx, by) = tail_points(&buf, n_min, min_exceed);
        if let Ok((_, bb)) = ols(&bx, &by) {
            rates.push(-bb);
        }
    }
    let (lo, hi) = if rates.len() >= 20 {
        (quantile(&rates, 0.025)?, quantile(&rates, 0.975)?)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    Ok(TailFit {
        rate: Interval { estimate: -b, lo, hi },
        intercept: a,
        n_lo: xs[0] as u32,
        n_hi: *xs.last().unwrap() as u32,
        samples: values.len(),
    })
}
