//! Tabulated gauge (height) functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed form a gauge was materialized from, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeKind {
    /// `h(j) = c`.
    Constant { c: f64 },
    /// `h(j) = max(j, 1)^exponent`; `j = 0` is clamped so that `h(0) > 0`.
    Power { exponent: f64 },
    /// `h(j) = ln(j + 2)^r`.
    LogPower { r: f64 },
    /// Arbitrary tabulated values.
    Custom,
}

/// A positive, nondecreasing height function tabulated on `0..=j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeFunction {
    values: Vec<f64>,
    kind: GaugeKind,
}

impl GaugeFunction {
    pub fn constant(c: f64, j_max: usize) -> Result<Self> {
        Self::tabulate(GaugeKind::Constant { c }, j_max, |_| c)
    }

    pub fn power(exponent: f64, j_max: usize) -> Result<Self> {
        Self::tabulate(GaugeKind::Power { exponent }, j_max, |j| {
            (j.max(1) as f64).powf(exponent)
        })
    }

    pub fn log_power(r: f64, j_max: usize) -> Result<Self> {
        Self::tabulate(GaugeKind::LogPower { r }, j_max, |j| {
            ((j + 2) as f64).ln().powf(r)
        })
    }

    pub fn custom(values: Vec<f64>) -> Result<Self> {
        Self::from_parts(values, GaugeKind::Custom)
    }

    fn tabulate(kind: GaugeKind, j_max: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::from_parts((0..=j_max).map(f).collect(), kind)
    }

    pub(crate) fn from_parts(values: Vec<f64>, kind: GaugeKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("gauge needs at least one tabulated value"));
        }
        for (j, w) in values.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::arg(format!(
                    "gauge is not monotone: h({}) = {} < h({}) = {}",
                    j + 1,
                    w[1],
                    j,
                    w[0]
                )));
            }
        }
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::arg(format!("gauge must be positive and finite: h({j}) = {v}")));
        }
        Ok(Self { values, kind })
    }

    pub fn kind(&self) -> GaugeKind {
        self.kind
    }

    pub fn j_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        self.values.get(j).copied()
    }

    pub fn value(&self, j: usize) -> Result<f64> {
        self.get(j).ok_or(Error::Range {
            what: "j",
            value: j as i64,
            min: 0,
            max: self.j_max() as i64,
        })
    }
}

/// Lipschitz regularization `f(0) = h(0)`, `f(n+1) = min(h(n+1), f(n) + 1)`.
///
/// The output keeps the closed-form tag of `h` only when nothing was clipped.
pub fn regularize_gauge(h: &GaugeFunction) -> GaugeFunction {
    let mut f = Vec::with_capacity(h.values.len());
    f.push(h.values[0]);
    for &hv in &h.values[1..] {
        let prev = *f.last().unwrap();
        f.push(hv.min(prev + 1.0));
    }
    let kind = if f == h.values { h.kind } else { GaugeKind::Custom };
    GaugeFunction { values: f, kind }
}

/// Smallest `x0` with `h(x) > 4 C ln(x)` for every tabulated `x > x0`, together
/// with the half gauge `g(x) = h(x + x0) / 2`.
///
/// `ln(0)` is taken as `-inf`, so `x = 0` never fails the condition.
pub fn shifted_half_gauge(h: &GaugeFunction, c: f64) -> Result<(usize, GaugeFunction)> {
    if !(c >= 0.0) {
        return Err(Error::arg(format!("core constant must be nonnegative, got {c}")));
    }
    let holds = |x: usize| x == 0 || h.values[x] > 4.0 * c * (x as f64).ln();
    let j_max = h.j_max();
    if !holds(j_max) {
        return Err(Error::Range {
            what: "x0",
            value: j_max as i64,
            min: 0,
            max: j_max as i64,
        });
    }
    let x0 = (0..=j_max).rev().find(|&x| !holds(x)).unwrap_or(0);
    let g = h.values[x0..].iter().map(|v| v / 2.0).collect();
    Ok((x0, GaugeFunction { values: g, kind: GaugeKind::Custom }))
}
