//! Monte Carlo risk hull penalty.
//!
//! `U0(N) = inf { t > 0 : E eta_N 1(eta_N >= t) <= sigma_1^2 }` with
//! `eta_N = sum_{i <= N} sigma_i^2 (xi_i^2 - 1)`. Paths are coupled: one
//! vector of `xi` per replication serves every `N`. Replications are split
//! into blocks and processed in parallel, but every draw is addressed by
//! `(seed, replication, index)`, so tables are identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::{CounterNoise, NoiseSource};
use crate::sequence_model::SigmaSpec;

pub const MIN_SAMPLES: usize = 10_000;
pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Replications handled by one parallel task.
const REPS_PER_TASK: usize = 4096;
/// Upper bound on the path buffer held in memory while building a table.
const CHUNK_BYTES: usize = 256 << 20;

/// Monte Carlo settings for the hull penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub samples: usize,
    pub seed: u64,
    pub monotonize: bool,
}

impl McParams {
    pub fn new(samples: usize, seed: u64, monotonize: bool) -> Result<Self> {
        let mc = Self {
            samples,
            seed,
            monotonize,
        };
        mc.validate()?;
        Ok(mc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::invalid(
                "samples",
                format!(
                    "at least {MIN_SAMPLES} Monte Carlo samples are required, got {}",
                    self.samples
                ),
            ));
        }
        Ok(())
    }
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            monotonize: true,
        }
    }
}

/// Cumulative paths `eta_1, ..., eta_{N_max}`, one row per replication.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaPaths {
    samples: usize,
    n_max: usize,
    data: Vec<f64>,
}

impl EtaPaths {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_max..(r + 1) * self.n_max]
    }

    /// All replications of `eta_n` (1-based `n`).
    pub fn column(&self, n: usize) -> Vec<f64> {
        assert!((1..=self.n_max).contains(&n), "column {n} out of range");
        self.data.iter().skip(n - 1).step_by(self.n_max).copied().collect()
    }
}

fn alloc(len: usize) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len)
        .map_err(|e| Error::Resource(format!("cannot allocate {len} path values: {e}")))?;
    v.resize(len, 0.0);
    Ok(v)
}

/// Advances `eta` through indices `first..first + row.len()`, storing each
/// partial sum in `row`.
#[inline]
fn advance(
    eta: &mut f64,
    row: &mut [f64],
    xi: &mut [f64],
    variances: &[f64],
    noise: &dyn NoiseSource,
    rep: u64,
    first: usize,
) {
    let xi = &mut xi[..row.len()];
    noise.fill(rep, first, xi);
    for ((slot, x), v) in row.iter_mut().zip(xi.iter()).zip(&variances[first - 1..]) {
        *eta += v * (x * x - 1.0);
        *slot = *eta;
    }
}

/// Full path matrix with the hull noise stream for `mc.seed`.
pub fn sample_eta_paths(spec: &SigmaSpec, n_max: usize, mc: &McParams) -> Result<EtaPaths> {
    mc.validate()?;
    sample_eta_paths_with(spec, n_max, mc.samples, &CounterNoise::hull(mc.seed))
}

/// Path matrix from an arbitrary noise source; no sample-count floor.
pub fn sample_eta_paths_with(
    spec: &SigmaSpec,
    n_max: usize,
    samples: usize,
    noise: &dyn NoiseSource,
) -> Result<EtaPaths> {
    if n_max == 0 || samples == 0 {
        return Err(Error::invalid("n_max", "paths need n_max >= 1 and samples >= 1"));
    }
    let variances = spec.variances(n_max)?;
    let len = samples
        .checked_mul(n_max)
        .ok_or_else(|| Error::Resource("path matrix size overflows".into()))?;
    let mut data = alloc(len)?;
    data.par_chunks_mut(n_max * REPS_PER_TASK)
        .enumerate()
        .for_each(|(task, rows)| {
            let mut xi = vec![0.0; n_max];
            for (i, row) in rows.chunks_mut(n_max).enumerate() {
                let rep = (task * REPS_PER_TASK + i) as u64;
                let mut eta = 0.0;
                advance(&mut eta, row, &mut xi, &variances, noise, rep, 1);
            }
        });
    Ok(EtaPaths { samples, n_max, data })
}

/// Replications of `eta_n` for each requested `n`, without materializing the
/// whole path matrix. Columns come back in the order requested.
pub fn sample_eta_columns(
    spec: &SigmaSpec,
    columns: &[usize],
    samples: usize,
    noise: &dyn NoiseSource,
) -> Result<Vec<Vec<f64>>> {
    let n_max = columns.iter().copied().max().unwrap_or(0);
    if n_max == 0 || columns.contains(&0) {
        return Err(Error::invalid("columns", "columns are 1-based and must be nonempty"));
    }
    let variances = spec.variances(n_max)?;
    let per_rep: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .with_min_len(REPS_PER_TASK)
        .map_init(
            || (vec![0.0; n_max], vec![0.0; n_max]),
            |(xi, row), rep| {
                let mut eta = 0.0;
                advance(&mut eta, row, xi, &variances, noise, rep as u64, 1);
                columns.iter().map(|&n| row[n - 1]).collect()
            },
        )
        .collect();
    Ok((0..columns.len())
        .map(|c| per_rep.iter().map(|r| r[c]).collect())
        .collect())
}

/// Empirical `E eta 1(eta >= t)`: the sum of entries `>= t` divided by the
/// sample size. `sorted` must be ascending.
pub fn tail_functional(sorted: &[f64], t: f64) -> f64 {
    assert!(!sorted.is_empty(), "tail functional of an empty sample");
    let start = sorted.partition_point(|&v| v < t);
    // an empty float sum is -0.0
    (sorted[start..].iter().sum::<f64>() + 0.0) / sorted.len() as f64
}

/// Outcome of the empirical `U0` search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct U0Solution {
    pub value: f64,
    /// The tail functional exceeded the level even at the largest sample;
    /// `value` is then the largest order statistic.
    pub saturated: bool,
}

/// Smallest `t > 0` with empirical `E eta 1(eta >= t) <= level`.
///
/// Only positive samples can matter for `t > 0`. They are scanned from the top:
/// the answer is the first order statistic whose inclusion pushes the tail sum
/// over `level * n`, or zero when all positives together stay below it.
pub fn solve_u0(samples: &[f64], level: f64) -> U0Solution {
    let positives: Vec<f64> = samples.iter().copied().filter(|&v| v > 0.0).collect();
    solve_positive(positives, samples.len(), level)
}

fn solve_positive(mut pos: Vec<f64>, count: usize, level: f64) -> U0Solution {
    let target = level * count as f64;
    let total: f64 = pos.iter().sum();
    if pos.is_empty() || total <= target {
        return U0Solution {
            value: 0.0,
            saturated: false,
        };
    }
    let len = pos.len();
    // The crossing usually sits deep in the tail, so only the top `k`
    // order statistics are sorted; widen if the guess was too small.
    let mut k = (len / 32).max(256).min(len);
    loop {
        let split = len - k;
        if split > 0 {
            pos.select_nth_unstable_by(split, f64::total_cmp);
        }
        let top = &mut pos[split..];
        top.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        for (i, &v) in top.iter().enumerate() {
            acc += v;
            if acc > target {
                return U0Solution {
                    value: v,
                    saturated: i == 0,
                };
            }
        }
        assert!(k < len, "tail sum exceeds the target but no crossing was found");
        k = (2 * k).min(len);
    }
}

/// `U0(n)` from a dedicated sample of `eta_n`.
pub fn compute_u0(spec: &SigmaSpec, n: usize, mc: &McParams) -> Result<f64> {
    Ok(compute_u0_detailed(spec, n, mc)?.value)
}

pub fn compute_u0_detailed(spec: &SigmaSpec, n: usize, mc: &McParams) -> Result<U0Solution> {
    mc.validate()?;
    if n == 0 {
        return Err(Error::BandwidthOutOfRange {
            bandwidth: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    let column = sample_eta_columns(spec, &[n], mc.samples, &CounterNoise::hull(mc.seed))?
        .pop()
        .expect("one column requested");
    Ok(solve_u0(&column, spec.sigma1().powi(2)))
}

fn chunk_width(samples: usize, n_max: usize) -> usize {
    (CHUNK_BYTES / (samples * std::mem::size_of::<f64>())).clamp(1, n_max)
}

/// Tabulates `U0(1..=n_max)` from one coupled set of paths.
pub fn build_hull_table(spec: &SigmaSpec, n_max: usize, mc: &McParams) -> Result<HullTable> {
    mc.validate()?;
    if n_max == 0 {
        return Err(Error::invalid("n_max", "hull tables need n_max >= 1"));
    }
    let variances = spec.variances(n_max)?;
    let noise = CounterNoise::hull(mc.seed);
    let samples = mc.samples;
    let level = spec.sigma1().powi(2);
    let width = chunk_width(samples, n_max);

    let mut eta = alloc(samples)?;
    let mut block = alloc(samples * width)?;
    let mut raw = Vec::with_capacity(n_max);
    let mut saturated = false;

    let mut first = 1;
    while first <= n_max {
        let w = width.min(n_max - first + 1);
        let block = &mut block[..samples * w];
        block
            .par_chunks_mut(w * REPS_PER_TASK)
            .zip(eta.par_chunks_mut(REPS_PER_TASK))
            .enumerate()
            .for_each(|(task, (rows, etas))| {
                let mut xi = vec![0.0; w];
                for (i, (row, eta)) in rows.chunks_mut(w).zip(etas.iter_mut()).enumerate() {
                    let rep = (task * REPS_PER_TASK + i) as u64;
                    advance(eta, row, &mut xi, &variances, &noise, rep, first);
                }
            });
        let block = &*block;
        let solved: Vec<U0Solution> = (0..w)
            .into_par_iter()
            .map(|c| {
                let pos = block.iter().skip(c).step_by(w).copied().filter(|&v| v > 0.0).collect();
                solve_positive(pos, samples, level)
            })
            .collect();
        for s in solved {
            saturated |= s.saturated;
            raw.push(s.value);
        }
        first += w;
    }

    let u0 = if mc.monotonize { running_max(&raw) } else { raw };
    HullTable::assemble(spec.clone(), u0, mc.samples, mc.seed, mc.monotonize, saturated)
}

fn running_max(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0f64, |m, &v| {
            *m = m.max(v);
            Some(*m)
        })
        .collect()
}

/// Tabulated hull penalty `U0(1..=N_max)` with its Monte Carlo provenance.
///
/// Serializes to the on-disk cache format. Loaded tables must go through
/// [`HullTable::from_json`], which rejects stale or edited files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullTable {
    spec: SigmaSpec,
    #[serde(rename = "N_max")]
    n_max: usize,
    mc_samples: usize,
    seed: u64,
    monotonized: bool,
    #[serde(rename = "U0")]
    u0: Vec<f64>,
    #[serde(rename = "SigmaFourth")]
    sigma_fourth: Vec<f64>,
    spec_fingerprint: String,
    saturated: bool,
    digest: String,
}

#[derive(Serialize)]
struct DigestView<'a> {
    spec: &'a SigmaSpec,
    n_max: usize,
    mc_samples: usize,
    seed: u64,
    monotonized: bool,
    u0: &'a [f64],
    sigma_fourth: &'a [f64],
    spec_fingerprint: &'a str,
    saturated: bool,
}

/// Key identifying a table by everything that determines its contents.
pub fn cache_key(spec: &SigmaSpec, n_max: usize, mc: &McParams) -> String {
    let json =
        serde_json::to_vec(&(spec.fingerprint(), n_max, mc.samples, mc.seed, mc.monotonize)).expect("key serializes");
    hex::encode(Sha256::digest(&json))
}

fn cumulative_fourth(spec: &SigmaSpec, n_max: usize) -> Result<Vec<f64>> {
    Ok(spec
        .variances(n_max)?
        .into_iter()
        .scan(0.0, |acc, v| {
            *acc += v * v;
            Some(*acc)
        })
        .collect())
}

impl HullTable {
    /// Table from externally supplied `U0` values (e.g. another solver).
    pub fn from_values(spec: SigmaSpec, u0: Vec<f64>, mc_samples: usize, seed: u64, monotonized: bool) -> Result<Self> {
        spec.validate()?;
        if u0.is_empty() {
            return Err(Error::invalid("U0", "hull table is empty"));
        }
        if let Some(i) = u0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("U0", format!("entry {} must be finite and >= 0", i + 1)));
        }
        if monotonized && u0.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("U0", "flagged monotonized but decreasing"));
        }
        Self::assemble(spec, u0, mc_samples, seed, monotonized, false)
    }

    fn assemble(
        spec: SigmaSpec,
        u0: Vec<f64>,
        mc_samples: usize,
        seed: u64,
        monotonized: bool,
        saturated: bool,
    ) -> Result<Self> {
        let n_max = u0.len();
        let sigma_fourth = cumulative_fourth(&spec, n_max)?;
        let spec_fingerprint = spec.fingerprint();
        let mut table = Self {
            spec,
            n_max,
            mc_samples,
            seed,
            monotonized,
            u0,
            sigma_fourth,
            spec_fingerprint,
            saturated,
            digest: String::new(),
        };
        table.digest = table.compute_digest();
        Ok(table)
    }

    fn compute_digest(&self) -> String {
        let view = DigestView {
            spec: &self.spec,
            n_max: self.n_max,
            mc_samples: self.mc_samples,
            seed: self.seed,
            monotonized: self.monotonized,
            u0: &self.u0,
            sigma_fourth: &self.sigma_fourth,
            spec_fingerprint: &self.spec_fingerprint,
            saturated: self.saturated,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&view).expect("table serializes")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Parses and verifies a cached table.
    pub fn from_json(text: &str) -> Result<Self> {
        let table: HullTable = serde_json::from_str(text).map_err(|e| Error::CorruptedTable(e.to_string()))?;
        table.verify()?;
        Ok(table)
    }

    /// Re-derives fingerprints and invariants from the stored fields.
    pub fn verify(&self) -> Result<()> {
        self.spec.validate().map_err(|e| Error::CorruptedTable(e.to_string()))?;
        let fingerprint = self.spec.fingerprint();
        if fingerprint != self.spec_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: fingerprint,
                found: self.spec_fingerprint.clone(),
            });
        }
        if self.u0.len() != self.n_max || self.sigma_fourth.len() != self.n_max || self.n_max == 0 {
            return Err(Error::CorruptedTable("table lengths disagree with N_max".into()));
        }
        if self.u0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::CorruptedTable("U0 entries must be finite and >= 0".into()));
        }
        if self.monotonized && self.u0.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::CorruptedTable("monotonized table is decreasing".into()));
        }
        let fourth = cumulative_fourth(&self.spec, self.n_max).map_err(|e| Error::CorruptedTable(e.to_string()))?;
        if fourth != self.sigma_fourth {
            return Err(Error::CorruptedTable("SigmaFourth does not match the spectrum".into()));
        }
        let digest = self.compute_digest();
        if digest != self.digest {
            return Err(Error::FingerprintMismatch {
                expected: digest,
                found: self.digest.clone(),
            });
        }
        Ok(())
    }

    /// Errors unless the table was built for `spec`.
    pub fn check_spec(&self, spec: &SigmaSpec) -> Result<()> {
        let expected = spec.fingerprint();
        if expected != self.spec_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: self.spec_fingerprint.clone(),
            });
        }
        Ok(())
    }

    pub fn cache_key(&self) -> String {
        cache_key(
            &self.spec,
            self.n_max,
            &McParams {
                samples: self.mc_samples,
                seed: self.seed,
                monotonize: self.monotonized,
            },
        )
    }

    pub fn spec(&self) -> &SigmaSpec {
        &self.spec
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn monotonized(&self) -> bool {
        self.monotonized
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn spec_fingerprint(&self) -> &str {
        &self.spec_fingerprint
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn sigma_fourth(&self) -> &[f64] {
        &self.sigma_fourth
    }

    fn index(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.n_max {
            return Err(Error::BandwidthOutOfRange {
                bandwidth: n,
                min: 1,
                max: self.n_max,
            });
        }
        Ok(n - 1)
    }

    pub fn u0_at(&self, n: usize) -> Result<f64> {
        Ok(self.u0[self.index(n)?])
    }

    /// `u0(N) = U0(N) / sqrt(2 Sigma_N)`.
    pub fn normalized_u0(&self, n: usize) -> Result<f64> {
        let i = self.index(n)?;
        Ok(self.u0[i] / (2.0 * self.sigma_fourth[i]).sqrt())
    }
}

/// Gaussian-tail approximation `sqrt(2 S log(S / (pi sigma_1^4)))` for
/// `S = sum_{s <= N} sigma_s^4`; zero where the log is negative.
pub fn gaussian_u0_value(sigma_fourth: f64, sigma1: f64) -> f64 {
    let ratio = sigma_fourth / (std::f64::consts::PI * sigma1.powi(4));
    if ratio <= 1.0 {
        0.0
    } else {
        (2.0 * sigma_fourth * ratio.ln()).sqrt()
    }
}

/// Lower envelope `sqrt(log(S / (2 pi sigma_1^4)))` of the normalized hull
/// penalty; zero where the log is negative.
pub fn u1_value(sigma_fourth: f64, sigma1: f64) -> f64 {
    let ratio = sigma_fourth / (std::f64::consts::TAU * sigma1.powi(4));
    if ratio <= 1.0 {
        0.0
    } else {
        ratio.ln().sqrt()
    }
}

fn sigma_fourth_at(spec: &SigmaSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::BandwidthOutOfRange {
            bandwidth: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    Ok(*cumulative_fourth(spec, n)?.last().expect("n >= 1"))
}

pub fn gaussian_u0(spec: &SigmaSpec, n: usize) -> Result<f64> {
    Ok(gaussian_u0_value(sigma_fourth_at(spec, n)?, spec.sigma1()))
}

pub fn u1(spec: &SigmaSpec, n: usize) -> Result<f64> {
    Ok(u1_value(sigma_fourth_at(spec, n)?, spec.sigma1()))
}

/// Ratios of the hull penalty to the unbiased-risk penalty at one bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRatio {
    pub n: usize,
    pub rho: f64,
    pub rho_tilde: f64,
}

/// `rho(N) = 1 + (1 + alpha) U0(N) / sum sigma_k^2`, and `rho_tilde` with the
/// Gaussian approximation in place of `U0`.
pub fn penalty_ratio(spec: &SigmaSpec, hull: &HullTable, alpha: f64, n: usize) -> Result<PenaltyRatio> {
    hull.check_spec(spec)?;
    let i = hull.index(n)?;
    let variance: f64 = spec.variances(n)?.iter().sum();
    let gaussian = gaussian_u0_value(hull.sigma_fourth[i], spec.sigma1());
    Ok(PenaltyRatio {
        n,
        rho: 1.0 + (1.0 + alpha) * hull.u0[i] / variance,
        rho_tilde: 1.0 + (1.0 + alpha) * gaussian / variance,
    })
}

/// Smallest `N0` with `u0(N) >= u1(N)` for every `N0 <= N <= N_max`.
pub fn envelope_crossing(hull: &HullTable) -> Option<usize> {
    let sigma1 = hull.spec.sigma1();
    let mut crossing = None;
    for n in (1..=hull.n_max).rev() {
        let u0 = hull.normalized_u0(n).expect("in range");
        if u0 >= u1_value(hull.sigma_fourth[n - 1], sigma1) {
            crossing = Some(n);
        } else {
            break;
        }
    }
    crossing
}
