//! Monte Carlo experiment harness: stem diagrams of selected bandwidths,
//! oracle efficiency curves over the test signal family, and penalty ratio
//! curves.
//!
//! Replication `r` always draws its noise from stream `r` of the observation
//! domain for the run seed, so every amplitude and every selector sees the same
//! noise vectors and results do not depend on scheduling. Per-replication
//! results are collected in order and summed sequentially.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{oracle_risk, projection_loss};
use crate::hull::{penalty_ratio, HullTable, PenaltyRatio};
use crate::noise::{CounterNoise, NoiseSource};
use crate::selectors::{Method, Selector};
use crate::sequence_model::{fill_observation, signal_family, SigmaSpec, Signal};

/// Default replication count (desk scale).
pub const DEFAULT_REPS: usize = 10_000;
pub const DEFAULT_WIDTH: f64 = 6.0;
pub const DEFAULT_SMOOTHNESS: f64 = 6.0;

/// Default data length and search range: 200 for `beta <= 1`, 100 otherwise.
pub fn default_n_max(spec: &SigmaSpec) -> usize {
    match spec {
        SigmaSpec::PowerLaw { beta, .. } if *beta <= 1.0 => 200,
        SigmaSpec::PowerLaw { .. } => 100,
        SigmaSpec::Explicit { values } => values.len().min(200),
    }
}

/// 20 log-spaced amplitudes from 0.5 to 500.
pub fn default_a_grid() -> Vec<f64> {
    log_grid(0.5, 500.0, 20)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut grid: Vec<f64> = (0..points)
                .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
                .collect();
            grid[0] = lo;
            grid[points - 1] = hi;
            grid
        }
    }
}

/// Per-replication outcomes for each selector.
struct Replications {
    /// `selected[s][r]`
    selected: Vec<Vec<usize>>,
    losses: Vec<Vec<f64>>,
}

fn run_replications(
    spec: &SigmaSpec,
    signal: &Signal,
    selectors: &[Selector],
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<Replications> {
    if reps == 0 {
        return Err(Error::invalid("reps", "at least one replication is required"));
    }
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    let sigmas = spec.sigmas(n_max)?;
    let prepared = selectors
        .iter()
        .map(|s| s.prepare(spec, n_max))
        .collect::<Result<Vec<_>>>()?;
    let tails = signal.tail_sums();
    let noise = CounterNoise::observation(seed);

    let per_rep: Vec<Vec<(usize, f64)>> = (0..reps)
        .into_par_iter()
        .with_min_len(64)
        .map_init(
            || vec![0.0; n_max],
            |ys, r| {
                noise.fill(r as u64, 1, ys);
                fill_observation(&sigmas, signal, ys);
                prepared
                    .iter()
                    .map(|p| {
                        let n = p.select(ys);
                        (n, projection_loss(ys, signal, &tails, n))
                    })
                    .collect()
            },
        )
        .collect();

    let mut selected = vec![Vec::with_capacity(reps); selectors.len()];
    let mut losses = vec![Vec::with_capacity(reps); selectors.len()];
    for rep in per_rep {
        for (s, (n, loss)) in rep.into_iter().enumerate() {
            selected[s].push(n);
            losses[s].push(loss);
        }
    }
    Ok(Replications { selected, losses })
}

/// Sample mean and standard error, summed in replication order.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemRecord {
    pub rep: usize,
    pub selected_n: usize,
    /// `||theta_hat - theta||^2 / sigma_1^2`.
    pub normalized_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemConfig {
    pub spec: SigmaSpec,
    pub method: String,
    pub reps: usize,
    pub n_max: usize,
    pub seed: u64,
    pub signal_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemData {
    pub records: Vec<StemRecord>,
    /// Mean selected bandwidth.
    pub n_emp: f64,
    /// Mean normalized loss.
    pub r_emp: f64,
    pub config: StemConfig,
}

impl StemData {
    fn summarize(records: &[StemRecord]) -> (f64, f64) {
        let n = records.len() as f64;
        let n_emp = records.iter().map(|r| r.selected_n as f64).sum::<f64>() / n;
        let r_emp = records.iter().map(|r| r.normalized_loss).sum::<f64>() / n;
        (n_emp, r_emp)
    }

    /// True when the stored summary equals the one recomputed from records.
    pub fn is_consistent(&self) -> bool {
        Self::summarize(&self.records) == (self.n_emp, self.r_emp)
    }
}

/// Simulate, select, project and score `reps` times; losses are normalized by
/// `sigma_1^2` (the squared noise level for power laws).
pub fn stem_experiment(
    spec: &SigmaSpec,
    signal: &Signal,
    selector: &Selector,
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<StemData> {
    let reps_out = run_replications(spec, signal, std::slice::from_ref(selector), reps, n_max, seed)?;
    let scale = spec.sigma1().powi(2);
    let records: Vec<StemRecord> = reps_out.selected[0]
        .iter()
        .zip(&reps_out.losses[0])
        .enumerate()
        .map(|(rep, (&selected_n, &loss))| StemRecord {
            rep,
            selected_n,
            normalized_loss: loss / scale,
        })
        .collect();
    let (n_emp, r_emp) = StemData::summarize(&records);
    Ok(StemData {
        records,
        n_emp,
        r_emp,
        config: StemConfig {
            spec: spec.clone(),
            method: selector.name(),
            reps,
            n_max,
            seed,
            signal_norm_sq: signal.norm_sq(),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRisk {
    pub mean_loss: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `E ||theta_hat(N_hat) - theta||^2`.
pub fn mc_selector_risk(
    spec: &SigmaSpec,
    signal: &Signal,
    selector: &Selector,
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<McRisk> {
    if reps < 2 {
        return Err(Error::invalid(
            "reps",
            "a standard error needs at least two replications",
        ));
    }
    let out = run_replications(spec, signal, std::slice::from_ref(selector), reps, n_max, seed)?;
    let (mean_loss, std_error) = mean_and_se(&out.losses[0]);
    Ok(McRisk { mean_loss, std_error })
}

/// Oracle efficiency of one selector at one signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    /// `inf_N R(theta, N) / E ||theta_hat(N_hat) - theta||^2`.
    pub efficiency: f64,
    /// Delta-method standard error of `efficiency`.
    pub std_error: f64,
    pub oracle_n: usize,
    pub oracle_risk: f64,
    pub risk: McRisk,
}

fn efficiency_point(oracle_n: usize, oracle_value: f64, losses: &[f64]) -> EfficiencyPoint {
    let (mean_loss, std_error) = mean_and_se(losses);
    let efficiency = oracle_value / mean_loss;
    EfficiencyPoint {
        efficiency,
        std_error: efficiency * std_error / mean_loss,
        oracle_n,
        oracle_risk: oracle_value,
        risk: McRisk { mean_loss, std_error },
    }
}

/// Efficiencies of several selectors on shared replications.
pub fn oracle_efficiencies(
    spec: &SigmaSpec,
    signal: &Signal,
    selectors: &[Selector],
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<Vec<EfficiencyPoint>> {
    if reps < 2 {
        return Err(Error::invalid(
            "reps",
            "a standard error needs at least two replications",
        ));
    }
    let oracle = oracle_risk(signal, spec, n_max)?;
    let out = run_replications(spec, signal, selectors, reps, n_max, seed)?;
    Ok(out
        .losses
        .iter()
        .map(|l| efficiency_point(oracle.argmin_n(), oracle.min_value(), l))
        .collect())
}

pub fn oracle_efficiency(
    spec: &SigmaSpec,
    signal: &Signal,
    selector: &Selector,
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<EfficiencyPoint> {
    Ok(oracle_efficiencies(spec, signal, std::slice::from_ref(selector), reps, n_max, seed)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub method: Method,
    pub label: String,
    pub reps: usize,
    pub a_grid: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub std_error: Vec<f64>,
    pub oracle_n: Vec<usize>,
    pub oracle_risk: Vec<f64>,
}

impl EfficiencyCurve {
    /// Every point is at most `1 + k` standard errors above one.
    pub fn dominated_by_oracle(&self, k: f64) -> bool {
        self.efficiency
            .iter()
            .zip(&self.std_error)
            .all(|(e, se)| *e <= 1.0 + k * se)
    }
}

/// Parameters of the amplitude sweep over `theta_i = a eps / (1 + (i/W)^m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub a_grid: Vec<f64>,
    pub width: f64,
    pub smoothness: f64,
    pub reps: usize,
    pub n_max: usize,
    pub seed: u64,
}

/// Efficiency curves for several selectors; each amplitude reuses the same
/// replication streams. The family uses `sigma_1` as its noise level.
pub fn efficiency_curves(spec: &SigmaSpec, selectors: &[Selector], sweep: &Sweep) -> Result<Vec<EfficiencyCurve>> {
    if sweep.a_grid.is_empty() {
        return Err(Error::invalid("a_grid", "amplitude grid is empty"));
    }
    let mut curves: Vec<EfficiencyCurve> = selectors
        .iter()
        .map(|s| EfficiencyCurve {
            method: s.method(),
            label: s.name(),
            reps: sweep.reps,
            a_grid: sweep.a_grid.clone(),
            efficiency: Vec::new(),
            std_error: Vec::new(),
            oracle_n: Vec::new(),
            oracle_risk: Vec::new(),
        })
        .collect();
    for &a in &sweep.a_grid {
        let signal = signal_family(a, sweep.width, sweep.smoothness, spec.sigma1(), sweep.n_max)?;
        let points = oracle_efficiencies(spec, &signal, selectors, sweep.reps, sweep.n_max, sweep.seed)?;
        for (curve, p) in curves.iter_mut().zip(points) {
            curve.efficiency.push(p.efficiency);
            curve.std_error.push(p.std_error);
            curve.oracle_n.push(p.oracle_n);
            curve.oracle_risk.push(p.oracle_risk);
        }
    }
    Ok(curves)
}

pub fn efficiency_curve(spec: &SigmaSpec, selector: &Selector, sweep: &Sweep) -> Result<EfficiencyCurve> {
    Ok(efficiency_curves(spec, std::slice::from_ref(selector), sweep)?.remove(0))
}

/// Selected bandwidths per replication, for argmin-level comparisons.
pub fn selected_bandwidths(
    spec: &SigmaSpec,
    signal: &Signal,
    selector: &Selector,
    reps: usize,
    n_max: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(
        run_replications(spec, signal, std::slice::from_ref(selector), reps, n_max, seed)?
            .selected
            .remove(0),
    )
}

/// `(N, rho, rho_tilde)` over a bandwidth range.
pub fn ratio_curve(
    spec: &SigmaSpec,
    hull: &HullTable,
    alpha: f64,
    range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<PenaltyRatio>> {
    range.map(|n| penalty_ratio(spec, hull, alpha, n)).collect()
}
