//! Projection (spectral cut-off) estimator, losses and exact risks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::HullTable;
use crate::sequence_model::{Observation, SigmaSpec, Signal};

/// Risk values over bandwidths `N = 1..=N_max` with the smallest minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    values: Vec<f64>,
    argmin_n: usize,
    min_value: f64,
}

impl RiskCurve {
    /// `values[i]` is the risk at bandwidth `i + 1`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let (argmin_n, min_value) = argmin(&values).ok_or_else(|| Error::invalid("values", "empty risk curve"))?;
        Ok(Self {
            values,
            argmin_n,
            min_value,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Risk at bandwidth `n` (1-based).
    pub fn at(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn argmin_n(&self) -> usize {
        self.argmin_n
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn n_max(&self) -> usize {
        self.values.len()
    }
}

/// Smallest 1-based minimizer and the minimum.
pub(crate) fn argmin(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i + 1, v)),
        }
    }
    best
}

/// Keeps `y_k` for `k <= n` and zeroes the rest. `n = 0` gives the zero signal.
pub fn project(obs: &Observation, n: usize) -> Result<Signal> {
    if n > obs.n_max() {
        return Err(Error::BandwidthOutOfRange {
            bandwidth: n,
            min: 0,
            max: obs.n_max(),
        });
    }
    let mut coeffs = obs.ys().to_vec();
    coeffs[n..].fill(0.0);
    Signal::new(coeffs)
}

/// `||estimate - truth||^2` over the union of supports.
pub fn squared_loss(estimate: &Signal, truth: &Signal) -> f64 {
    let len = estimate.len().max(truth.len());
    (1..=len).map(|k| (estimate.get(k) - truth.get(k)).powi(2)).sum()
}

/// Loss of the projection estimator at bandwidth `n` computed directly from
/// the data; equals `squared_loss(project(obs, n), truth)` up to rounding.
pub(crate) fn projection_loss(ys: &[f64], truth: &Signal, truth_tails: &[f64], n: usize) -> f64 {
    let head: f64 = ys[..n]
        .iter()
        .enumerate()
        .map(|(i, y)| (y - truth.get(i + 1)).powi(2))
        .sum();
    let tail = truth_tails.get(n).copied().unwrap_or(0.0);
    // the stored signal may be shorter than ys; nothing to add past its end
    head + tail
}

/// Bias and variance terms of `R(theta, N)` for `N = 1..=n_max`.
struct RiskTerms {
    tails: Vec<f64>,
    variance: Vec<f64>,
}

impl RiskTerms {
    fn new(signal: &Signal, spec: &SigmaSpec, n_max: usize) -> Result<Self> {
        let tails = signal.tail_sums();
        let variance = spec
            .variances(n_max)?
            .into_iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        Ok(Self { tails, variance })
    }

    fn risk(&self, n: usize) -> f64 {
        self.tails.get(n).copied().unwrap_or(0.0) + self.variance[n - 1]
    }
}

fn check_bandwidth(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BandwidthOutOfRange {
            bandwidth: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    Ok(())
}

/// `R(theta, N) = sum_{k > N} theta_k^2 + sum_{k <= N} sigma_k^2`.
pub fn projection_risk(signal: &Signal, spec: &SigmaSpec, n: usize) -> Result<f64> {
    check_bandwidth(n)?;
    Ok(RiskTerms::new(signal, spec, n)?.risk(n))
}

/// Exact risk curve over `N = 1..=n_max` and the oracle bandwidth.
pub fn oracle_risk(signal: &Signal, spec: &SigmaSpec, n_max: usize) -> Result<RiskCurve> {
    check_bandwidth(n_max)?;
    let terms = RiskTerms::new(signal, spec, n_max)?;
    RiskCurve::from_values((1..=n_max).map(|n| terms.risk(n)).collect())
}

/// Risk hull objective `R(theta, N) + (1 + alpha) U0(N)`.
pub fn rhm_risk(signal: &Signal, spec: &SigmaSpec, hull: &HullTable, alpha: f64, n: usize) -> Result<f64> {
    hull.check_spec(spec)?;
    let u0 = hull.u0_at(n)?;
    Ok(projection_risk(signal, spec, n)? + (1.0 + alpha) * u0)
}

/// Smallest `N <= n_max` with `sum sigma_k^2 >= 2 (2 sum sigma_k^4)^(1/2)`,
/// the bandwidth from which the unbiased risk estimate dominates its own
/// standard deviation. Computed on `sigma_k / sigma_1`, so the answer does not
/// depend on the noise level.
pub fn ure_threshold(spec: &SigmaSpec, n_max: usize) -> Result<Option<usize>> {
    let rel = spec.relative_variances(n_max)?;
    let mut second = 0.0;
    let mut fourth = 0.0;
    for (i, v) in rel.iter().enumerate() {
        second += v;
        fourth += v * v;
        if second >= 2.0 * (2.0 * fourth).sqrt() {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}
