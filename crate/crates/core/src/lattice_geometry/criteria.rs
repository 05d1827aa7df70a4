//! Summation criteria `sum 1/(j h(j))` and `sum 1/(j sqrt(h(j)))` with
//! certified convergence classification.

use serde::{Deserialize, Serialize};

use super::gauge::{GaugeFunction, GaugeKind};
use crate::error::{Error, Result};

/// Which series is summed: `1/(j h(j))` or `1/(j sqrt h(j))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Lyons,
    HaggstromMossel,
}

impl Criterion {
    /// Power applied to `h` in the summand.
    fn h_exponent(self) -> f64 {
        match self {
            Criterion::Lyons => 1.0,
            Criterion::HaggstromMossel => 0.5,
        }
    }

    fn term(self, j: usize, h: f64) -> f64 {
        match self {
            Criterion::Lyons => 1.0 / (j as f64 * h),
            Criterion::HaggstromMossel => 1.0 / (j as f64 * h.sqrt()),
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running partial sums for `J = 1..=j_max` (index `J - 1`).
pub fn partial_sums(h: &GaugeFunction, criterion: Criterion) -> Vec<f64> {
    let mut acc = CompensatedSum::default();
    h.values()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &hv)| {
            acc.add(criterion.term(j, hv));
            acc.value()
        })
        .collect()
}

fn partial_sum(h: &GaugeFunction, criterion: Criterion, upto: usize) -> Result<f64> {
    if upto == 0 || upto > h.j_max() {
        return Err(Error::Range {
            what: "J",
            value: upto as i64,
            min: 1,
            max: h.j_max() as i64,
        });
    }
    let mut acc = CompensatedSum::default();
    for (j, &hv) in h.values().iter().enumerate().take(upto + 1).skip(1) {
        acc.add(criterion.term(j, hv));
    }
    Ok(acc.value())
}

/// `sum_{j=1}^{J} 1/(j h(j))`.
pub fn lyons_partial_sum(h: &GaugeFunction, upto: usize) -> Result<f64> {
    partial_sum(h, Criterion::Lyons, upto)
}

/// `sum_{j=1}^{J} 1/(j sqrt(h(j)))`.
pub fn hm_partial_sum(h: &GaugeFunction, upto: usize) -> Result<f64> {
    partial_sum(h, Criterion::HaggstromMossel, upto)
}

/// Certified bounds on the tail `sum_{j > J} t(j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Integral-comparison bounds on a series tail. `J` is passed as `ln J` so
/// that cutoffs far beyond `f64` range can be certified.
pub trait TailBound {
    fn tail(&self, ln_j: f64) -> TailBounds;
}

/// Tail oracles for the closed-form gauges, valid for `J >= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailOracle {
    /// `t(j) = coef * j^-q`.
    PowerLaw { q: f64, coef: f64 },
    /// `t(j) = 1 / (j ln^e(j + 2))`.
    LogPower { e: f64 },
}

impl TailOracle {
    pub fn for_gauge(h: &GaugeFunction, criterion: Criterion) -> Option<Self> {
        let s = criterion.h_exponent();
        match h.kind() {
            GaugeKind::Constant { c } => Some(TailOracle::PowerLaw { q: 1.0, coef: c.powf(-s) }),
            GaugeKind::Power { exponent } => Some(TailOracle::PowerLaw {
                q: 1.0 + exponent * s,
                coef: 1.0,
            }),
            GaugeKind::LogPower { r } => Some(TailOracle::LogPower { e: r * s }),
            GaugeKind::Custom => None,
        }
    }
}

impl TailBound for TailOracle {
    fn tail(&self, ln_j: f64) -> TailBounds {
        const INF: TailBounds = TailBounds {
            lower: f64::INFINITY,
            upper: f64::INFINITY,
        };
        // ln(J + k) without forming J
        let ln_shift = |k: f64| ln_j + (k * (-ln_j).exp()).ln_1p();
        match *self {
            TailOracle::PowerLaw { q, coef } => {
                if q <= 1.0 {
                    return INF;
                }
                // t decreasing: int_{J+1}^inf t <= tail <= int_J^inf t
                TailBounds {
                    lower: coef * ((1.0 - q) * ln_shift(1.0)).exp() / (q - 1.0),
                    upper: coef * ((1.0 - q) * ln_j).exp() / (q - 1.0),
                }
            }
            TailOracle::LogPower { e } => {
                if e <= 1.0 {
                    // int dx/((x+2) ln^e(x+2)) is unbounded for e <= 1
                    return INF;
                }
                // 1/((x+2) ln^e(x+2)) <= t(x) <= 1/(x ln^e x), both decreasing
                TailBounds {
                    lower: (ln_shift(3.0).ln() * (1.0 - e)).exp() / (e - 1.0),
                    upper: (ln_j.ln() * (1.0 - e)).exp() / (e - 1.0),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Convergent,
    Divergent,
    Inconclusive,
}

impl std::fmt::Display for Convergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convergence::Convergent => "convergent",
            Convergence::Divergent => "divergent",
            Convergence::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Convergence,
    /// Last tabulated partial sum.
    pub partial_sum: f64,
    /// `ln J` at which the verdict was certified.
    pub ln_cutoff: f64,
    pub tail: TailBounds,
}

impl Serialize for TailBounds {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TailBounds", 2)?;
        st.serialize_field("lower", &finite_or_str(self.lower))?;
        st.serialize_field("upper", &finite_or_str(self.upper))?;
        st.end()
    }
}

fn finite_or_str(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(x.to_string())
    }
}

/// Largest `ln J` the classifier will push the cutoff to.
const MAX_LN_CUTOFF: f64 = 1e300;

/// Classify a series from its tabulated partial sums and a tail oracle.
///
/// Convergent requires a certified upper tail bound below `tol` at some
/// cutoff `J >= len(partial_sums)`. Divergent requires the certified lower
/// tail bound to be unbounded. Partial sums alone never decide divergence.
pub fn classify_convergence(
    partial_sums: &[f64],
    tail: Option<&dyn TailBound>,
    tol: f64,
) -> Classification {
    let last = partial_sums.last().copied().unwrap_or(0.0);
    let j0 = partial_sums.len().max(2) as f64;
    let mut ln_j = j0.ln();
    let inconclusive = |ln_j, tail| Classification {
        verdict: Convergence::Inconclusive,
        partial_sum: last,
        ln_cutoff: ln_j,
        tail,
    };
    let Some(oracle) = tail else {
        let nan = TailBounds { lower: f64::NAN, upper: f64::NAN };
        return inconclusive(ln_j, nan);
    };
    let monotone = partial_sums.windows(2).all(|w| w[1] >= w[0]);
    let first = oracle.tail(ln_j);
    if !monotone {
        return inconclusive(ln_j, first);
    }
    if first.lower.is_infinite() {
        return Classification {
            verdict: Convergence::Divergent,
            partial_sum: last,
            ln_cutoff: ln_j,
            tail: first,
        };
    }
    let mut bounds = first;
    while ln_j <= MAX_LN_CUTOFF {
        if bounds.upper < tol {
            return Classification {
                verdict: Convergence::Convergent,
                partial_sum: last,
                ln_cutoff: ln_j,
                tail: bounds,
            };
        }
        ln_j *= 2.0;
        bounds = oracle.tail(ln_j);
    }
    inconclusive(ln_j, bounds)
}

/// Tabulate, sum and classify in one step.
pub fn classify_gauge(h: &GaugeFunction, criterion: Criterion, tol: f64) -> Classification {
    let sums = partial_sums(h, criterion);
    let oracle = TailOracle::for_gauge(h, criterion);
    classify_convergence(&sums, oracle.as_ref().map(|o| o as &dyn TailBound), tol)
}
