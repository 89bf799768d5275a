//! Noise spectra, signals and the Gaussian sequence model
//! `y_k = theta_k + sigma_k xi_k`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::{CounterNoise, NoiseSource};

/// Noise spectrum `sigma_k`, either a power law `epsilon * k^beta` or an
/// explicit finite table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaSpec {
    PowerLaw { epsilon: f64, beta: f64 },
    Explicit { values: Vec<f64> },
}

impl SigmaSpec {
    pub fn power_law(epsilon: f64, beta: f64) -> Result<Self> {
        let spec = SigmaSpec::PowerLaw { epsilon, beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let spec = SigmaSpec::Explicit { values };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the invariants; deserialized specs must pass through here.
    pub fn validate(&self) -> Result<()> {
        match self {
            SigmaSpec::PowerLaw { epsilon, beta } => {
                if !(epsilon.is_finite() && *epsilon > 0.0) {
                    return Err(Error::invalid(
                        "epsilon",
                        format!("must be finite and > 0, got {epsilon}"),
                    ));
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(Error::invalid("beta", format!("must be finite and >= 0, got {beta}")));
                }
            }
            SigmaSpec::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("values", "explicit spectrum is empty"));
                }
                if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::invalid(
                        "values",
                        format!("entry {} must be finite and > 0, got {v}", i + 1),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Largest admissible index, `None` for the unbounded power law.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            SigmaSpec::PowerLaw { .. } => None,
            SigmaSpec::Explicit { values } => Some(values.len()),
        }
    }

    /// Errors unless indices `1..=n` are all in the domain.
    pub fn check_domain(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(len) if n > len => Err(Error::IndexOutOfRange { index: n, len }),
            _ => Ok(()),
        }
    }

    /// `sigma_k` for 1-based `k`.
    pub fn sigma_at(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("k", "indices start at 1"));
        }
        match self {
            SigmaSpec::PowerLaw { epsilon, beta } => Ok(epsilon * index_power(k, *beta)),
            SigmaSpec::Explicit { values } => values.get(k - 1).copied().ok_or(Error::IndexOutOfRange {
                index: k,
                len: values.len(),
            }),
        }
    }

    pub fn sigma1(&self) -> f64 {
        match self {
            SigmaSpec::PowerLaw { epsilon, .. } => *epsilon,
            SigmaSpec::Explicit { values } => values[0],
        }
    }

    /// `sigma_1, ..., sigma_n`.
    pub fn sigmas(&self, n: usize) -> Result<Vec<f64>> {
        self.check_domain(n)?;
        (1..=n).map(|k| self.sigma_at(k)).collect()
    }

    /// `sigma_1^2, ..., sigma_n^2`.
    pub fn variances(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self.sigmas(n)?.into_iter().map(|s| s * s).collect())
    }

    /// `(sigma_k / sigma_1)^2` for `k = 1..=n`, free of the noise level.
    ///
    /// For power laws this is `k^(2 beta)` computed without touching epsilon.
    pub fn relative_variances(&self, n: usize) -> Result<Vec<f64>> {
        self.check_domain(n)?;
        match self {
            SigmaSpec::PowerLaw { beta, .. } => Ok((1..=n)
                .map(|k| {
                    let r = index_power(k, *beta);
                    r * r
                })
                .collect()),
            SigmaSpec::Explicit { values } => {
                let s1 = values[0];
                Ok(values[..n].iter().map(|v| (v / s1) * (v / s1)).collect())
            }
        }
    }

    /// Same spectrum with every `sigma_k` multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let spec = match self {
            SigmaSpec::PowerLaw { epsilon, beta } => SigmaSpec::PowerLaw {
                epsilon: epsilon * c,
                beta: *beta,
            },
            SigmaSpec::Explicit { values } => SigmaSpec::Explicit {
                values: values.iter().map(|v| v * c).collect(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("spectrum serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Short human-readable label, used for output file names.
    pub fn label(&self) -> String {
        match self {
            SigmaSpec::PowerLaw { epsilon, beta } => format!("beta{beta}_eps{epsilon}"),
            SigmaSpec::Explicit { .. } => format!("explicit_{}", &self.fingerprint()[..8]),
        }
    }
}

/// `k^beta`, exact for integer exponents.
fn index_power(k: usize, beta: f64) -> f64 {
    let k = k as f64;
    if beta.fract() == 0.0 && beta <= i32::MAX as f64 {
        k.powi(beta as i32)
    } else {
        k.powf(beta)
    }
}

/// Square-summable coefficient sequence with a finite stored prefix; indices
/// past the prefix are zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    coeffs: Vec<f64>,
}

impl Signal {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid("coeffs", format!("entry {} is not finite", i + 1)));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `theta_k` for 1-based `k`, zero past the stored prefix.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `sum_{k > n} theta_k^2` over the stored prefix.
    pub fn tail_norm_sq(&self, n: usize) -> f64 {
        self.coeffs.iter().skip(n).rev().map(|c| c * c).sum()
    }

    /// `tails[n] = sum_{k > n} theta_k^2` for `n = 0..=len`, summed from the end.
    pub(crate) fn tail_sums(&self) -> Vec<f64> {
        let mut tails = vec![0.0; self.coeffs.len() + 1];
        for n in (0..self.coeffs.len()).rev() {
            let c = self.coeffs[n];
            tails[n] = tails[n + 1] + c * c;
        }
        tails
    }
}

/// Test signal family `theta_i = a eps / (1 + (i / W)^m)`, `i = 1..=n_max`.
pub fn signal_family(amplitude: f64, width: f64, smoothness: f64, epsilon: f64, n_max: usize) -> Result<Signal> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::invalid("a", format!("must be finite and >= 0, got {amplitude}")));
    }
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::invalid("W", format!("must be finite and > 0, got {width}")));
    }
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return Err(Error::invalid("m", format!("must be finite and > 0, got {smoothness}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be finite and > 0, got {epsilon}"),
        ));
    }
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    let level = amplitude * epsilon;
    let coeffs = (1..=n_max)
        .map(|i| level / (1.0 + (i as f64 / width).powf(smoothness)))
        .collect();
    Signal::new(coeffs)
}

/// One realization of the sequence model up to `n_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    ys: Vec<f64>,
    sigma: SigmaSpec,
    seed: u64,
}

impl Observation {
    /// Wraps observed data, e.g. read from a file.
    pub fn from_data(ys: Vec<f64>, sigma: SigmaSpec, seed: u64) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::invalid("ys", "observation is empty"));
        }
        if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid("ys", format!("entry {} is not finite", i + 1)));
        }
        sigma.validate()?;
        sigma.check_domain(ys.len())?;
        Ok(Self { ys, sigma, seed })
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n_max(&self) -> usize {
        self.ys.len()
    }

    pub fn sigma(&self) -> &SigmaSpec {
        &self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `y_k = theta_k + sigma_k xi_k` for `k = 1..=n_max` with the
/// counter-based observation noise for `seed`.
pub fn simulate(spec: &SigmaSpec, signal: &Signal, n_max: usize, seed: u64) -> Result<Observation> {
    simulate_with(spec, signal, n_max, &CounterNoise::observation(seed), 0, seed)
}

/// [`simulate`] with an explicit noise source and stream (replication).
pub fn simulate_with(
    spec: &SigmaSpec,
    signal: &Signal,
    n_max: usize,
    noise: &dyn NoiseSource,
    stream: u64,
    seed: u64,
) -> Result<Observation> {
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be >= 1"));
    }
    let sigmas = spec.sigmas(n_max)?;
    let mut ys = vec![0.0; n_max];
    noise.fill(stream, 1, &mut ys);
    fill_observation(&sigmas, signal, &mut ys);
    Ok(Observation {
        ys,
        sigma: spec.clone(),
        seed,
    })
}

/// Turns `xi` (in place) into `y = theta + sigma xi`.
pub(crate) fn fill_observation(sigmas: &[f64], signal: &Signal, xi: &mut [f64]) {
    for (k, (y, s)) in xi.iter_mut().zip(sigmas).enumerate() {
        *y = signal.get(k + 1) + s * *y;
    }
}
