//! Data-driven bandwidth choice by penalized empirical risk.
//!
//! Every criterion has the form `-sum_{k<=N} y_k^2 + base(N)`, where `base`
//! collects the data-free terms: `2 sum sigma_k^2` for unbiased risk
//! estimation, plus `(1 + alpha) U0(N)` for risk hull minimization.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::argmin;
use crate::hull::HullTable;
use crate::sequence_model::{Observation, SigmaSpec};

/// Default hull inflation. The oracle inequality for the hull method asks for
/// `alpha > 1`; `alpha = 0` is unstable for `beta = 2` spectra and large values
/// over-smooth.
pub const DEFAULT_ALPHA: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ure,
    Rhm,
    CustomPenalty,
    Fixed,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ure => "ure",
            Method::Rhm => "rhm",
            Method::CustomPenalty => "custom-penalty",
            Method::Fixed => "fixed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorResult {
    pub n_selected: usize,
    /// Criterion at `N = 1..=N_max`.
    pub objective_values: Vec<f64>,
    pub method: Method,
}

fn check_range(obs: &Observation, n_max: usize) -> Result<()> {
    if n_max == 0 || n_max > obs.n_max() {
        return Err(Error::BandwidthOutOfRange {
            bandwidth: n_max,
            min: 1,
            max: obs.n_max(),
        });
    }
    Ok(())
}

fn cumulative(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    values
        .into_iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// `-sum_{k<=N} y_k^2 + sum_{k<=N} sigma_k^2 + pen(N)`.
pub fn penalized_objective(obs: &Observation, pen: impl Fn(usize) -> f64, n: usize) -> Result<f64> {
    check_range(obs, n)?;
    let energy: f64 = obs.ys()[..n].iter().map(|y| y * y).sum();
    let variance: f64 = obs.sigma().variances(n)?.iter().sum();
    Ok(-energy + variance + pen(n))
}

/// Data-free part of a criterion, precomputed for `N = 1..=N_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyProfile {
    base: Vec<f64>,
}

impl PenaltyProfile {
    pub fn ure(spec: &SigmaSpec, n_max: usize) -> Result<Self> {
        let base = cumulative(spec.variances(n_max)?)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect();
        Ok(Self { base })
    }

    pub fn rhm(spec: &SigmaSpec, hull: &HullTable, alpha: f64, n_max: usize) -> Result<Self> {
        check_alpha(alpha)?;
        hull.check_spec(spec)?;
        if n_max > hull.n_max() {
            return Err(Error::BandwidthOutOfRange {
                bandwidth: n_max,
                min: 1,
                max: hull.n_max(),
            });
        }
        let mut profile = Self::ure(spec, n_max)?;
        for (b, u) in profile.base.iter_mut().zip(hull.u0()) {
            *b += (1.0 + alpha) * u;
        }
        Ok(profile)
    }

    pub fn custom(spec: &SigmaSpec, pen: impl Fn(usize) -> f64, n_max: usize) -> Result<Self> {
        let base = cumulative(spec.variances(n_max)?)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v + pen(i + 1))
            .collect();
        Ok(Self { base })
    }

    pub fn n_max(&self) -> usize {
        self.base.len()
    }

    /// Smallest minimizer over `N = 1..=min(n_max, ys.len())`, in one pass.
    pub fn argmin(&self, ys: &[f64]) -> usize {
        let mut energy = 0.0;
        let mut best = (1, f64::INFINITY);
        for (i, (y, b)) in ys.iter().zip(&self.base).enumerate() {
            energy += y * y;
            let value = b - energy;
            if value < best.1 {
                best = (i + 1, value);
            }
        }
        best.0
    }

    pub fn objective(&self, ys: &[f64]) -> Vec<f64> {
        let mut energy = 0.0;
        ys.iter()
            .zip(&self.base)
            .map(|(y, b)| {
                energy += y * y;
                b - energy
            })
            .collect()
    }

    fn select(&self, obs: &Observation, method: Method) -> SelectorResult {
        let objective_values = self.objective(obs.ys());
        let (n_selected, _) = argmin(&objective_values).expect("nonempty range");
        SelectorResult {
            n_selected,
            objective_values,
            method,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// Unbiased risk estimation: minimize `-sum y_k^2 + 2 sum sigma_k^2`.
pub fn select_ure(obs: &Observation, n_max: usize) -> Result<SelectorResult> {
    check_range(obs, n_max)?;
    Ok(PenaltyProfile::ure(obs.sigma(), n_max)?.select(obs, Method::Ure))
}

/// Risk hull minimization: unbiased risk plus `(1 + alpha) U0(N)`.
pub fn select_rhm(obs: &Observation, hull: &HullTable, alpha: f64, n_max: usize) -> Result<SelectorResult> {
    check_range(obs, n_max)?;
    Ok(PenaltyProfile::rhm(obs.sigma(), hull, alpha, n_max)?.select(obs, Method::Rhm))
}

/// Penalized empirical risk with a caller-supplied `pen(N)`.
pub fn select_penalized(obs: &Observation, pen: impl Fn(usize) -> f64, n_max: usize) -> Result<SelectorResult> {
    check_range(obs, n_max)?;
    Ok(PenaltyProfile::custom(obs.sigma(), pen, n_max)?.select(obs, Method::CustomPenalty))
}

/// A bandwidth rule usable by the experiment harness.
#[derive(Clone, Debug)]
pub enum Selector {
    Ure,
    Rhm {
        hull: Arc<HullTable>,
        alpha: f64,
    },
    /// Always the same bandwidth; reduces to the fixed-`N` risk.
    Fixed(usize),
}

impl Selector {
    pub fn method(&self) -> Method {
        match self {
            Selector::Ure => Method::Ure,
            Selector::Rhm { .. } => Method::Rhm,
            Selector::Fixed(_) => Method::Fixed,
        }
    }

    /// Name used in output files.
    pub fn name(&self) -> String {
        match self {
            Selector::Fixed(n) => format!("fixed{n}"),
            other => other.method().to_string(),
        }
    }

    /// Compiles the rule for a spectrum and search range.
    pub fn prepare(&self, spec: &SigmaSpec, n_max: usize) -> Result<PreparedSelector> {
        if n_max == 0 {
            return Err(Error::invalid("n_max", "search range must be >= 1"));
        }
        Ok(match self {
            Selector::Ure => PreparedSelector::Profile(PenaltyProfile::ure(spec, n_max)?),
            Selector::Rhm { hull, alpha } => PreparedSelector::Profile(PenaltyProfile::rhm(spec, hull, *alpha, n_max)?),
            Selector::Fixed(n) => {
                if *n > n_max {
                    return Err(Error::BandwidthOutOfRange {
                        bandwidth: *n,
                        min: 0,
                        max: n_max,
                    });
                }
                PreparedSelector::Fixed(*n)
            }
        })
    }
}

#[derive(Clone, Debug)]
pub enum PreparedSelector {
    Profile(PenaltyProfile),
    Fixed(usize),
}

impl PreparedSelector {
    pub fn select(&self, ys: &[f64]) -> usize {
        match self {
            PreparedSelector::Profile(p) => p.argmin(ys),
            PreparedSelector::Fixed(n) => *n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hull::{build_hull_table, McParams, MIN_SAMPLES};
    use crate::sequence_model::{signal_family, simulate};
    use proptest::prelude::*;

    fn unit() -> SigmaSpec {
        SigmaSpec::power_law(1.0, 0.0).unwrap()
    }

    fn obs(ys: &[f64]) -> Observation {
        Observation::from_data(ys.to_vec(), unit(), 0).unwrap()
    }

    #[test]
    fn objective_examples() {
        assert_eq!(penalized_objective(&obs(&[0.0, 0.0]), |_| 0.0, 2).unwrap(), 2.0);
        assert_eq!(penalized_objective(&obs(&[3.0, 1.0]), |n| n as f64, 1).unwrap(), -7.0);
        assert!(penalized_objective(&obs(&[3.0, 1.0]), |_| 0.0, 3).is_err());
    }

    #[test]
    fn ure_is_penalized_with_variance_penalty() {
        let spec = SigmaSpec::power_law(0.4, 1.0).unwrap();
        let o = simulate(&spec, &signal_family(30.0, 6.0, 6.0, 0.4, 20).unwrap(), 20, 3).unwrap();
        let ure = select_ure(&o, 20).unwrap();
        let variances = spec.variances(20).unwrap();
        let pen = |n: usize| variances[..n].iter().sum::<f64>();
        let custom = select_penalized(&o, pen, 20).unwrap();
        assert_eq!(ure.objective_values, custom.objective_values);
        for n in 1..=20 {
            let direct = penalized_objective(&o, pen, n).unwrap();
            assert!((direct - ure.objective_values[n - 1]).abs() < 1e-12 * direct.abs().max(1.0));
        }
        assert_eq!(custom.method, Method::CustomPenalty);
    }

    #[test]
    fn ure_examples() {
        assert_eq!(select_ure(&obs(&[0.5, 0.5, 0.5]), 3).unwrap().n_selected, 1);
        let r = select_ure(&obs(&[10.0, 3.0, 0.1]), 3).unwrap();
        assert_eq!(r.n_selected, 2);
        assert_eq!(r.method, Method::Ure);
        assert!(select_ure(&obs(&[1.0]), 2).is_err());
        assert!(select_ure(&obs(&[1.0]), 0).is_err());
    }

    #[test]
    fn rhm_examples() {
        let o = obs(&[10.0, 3.0, 0.1]);
        let zero = HullTable::from_values(unit(), vec![0.0; 3], 0, 0, true).unwrap();
        let r = select_rhm(&o, &zero, 1.0, 3).unwrap();
        assert_eq!(r.n_selected, select_ure(&o, 3).unwrap().n_selected);
        assert_eq!(r.objective_values, select_ure(&o, 3).unwrap().objective_values);

        let hull = HullTable::from_values(unit(), vec![0.0, 5.0, 5.0], 0, 0, true).unwrap();
        assert_eq!(select_rhm(&o, &hull, 1.0, 3).unwrap().n_selected, 1);

        let stale = HullTable::from_values(SigmaSpec::power_law(2.0, 0.0).unwrap(), vec![0.0; 3], 0, 0, true).unwrap();
        assert!(matches!(
            select_rhm(&o, &stale, 1.0, 3),
            Err(Error::FingerprintMismatch { .. })
        ));
        let short = HullTable::from_values(unit(), vec![0.0; 2], 0, 0, true).unwrap();
        assert!(select_rhm(&o, &short, 1.0, 3).is_err());
        assert!(select_rhm(&o, &hull, -1.0, 3).is_err());
    }

    #[test]
    fn fast_path_matches_full_scan() {
        let spec = SigmaSpec::power_law(1.0, 1.0).unwrap();
        let hull = Arc::new(build_hull_table(&spec, 40, &McParams::new(MIN_SAMPLES, 1, true).unwrap()).unwrap());
        let theta = signal_family(50.0, 6.0, 6.0, 1.0, 40).unwrap();
        let ure = Selector::Ure.prepare(&spec, 40).unwrap();
        let rhm = Selector::Rhm {
            hull: hull.clone(),
            alpha: 1.1,
        }
        .prepare(&spec, 40)
        .unwrap();
        for seed in 0..200 {
            let o = simulate(&spec, &theta, 40, seed).unwrap();
            assert_eq!(ure.select(o.ys()), select_ure(&o, 40).unwrap().n_selected);
            assert_eq!(rhm.select(o.ys()), select_rhm(&o, &hull, 1.1, 40).unwrap().n_selected);
        }
        assert_eq!(Selector::Fixed(7).prepare(&spec, 40).unwrap().select(&[]), 7);
        assert!(Selector::Fixed(41).prepare(&spec, 40).is_err());
    }

    #[test]
    fn rhm_penalty_dominates_ure() {
        let spec = SigmaSpec::power_law(1.0, 1.0).unwrap();
        let hull = build_hull_table(&spec, 30, &McParams::new(MIN_SAMPLES, 2, true).unwrap()).unwrap();
        let ure = PenaltyProfile::ure(&spec, 30).unwrap();
        let rhm = PenaltyProfile::rhm(&spec, &hull, 1.1, 30).unwrap();
        for (n, (r, u)) in rhm.base.iter().zip(&ure.base).enumerate() {
            assert!(r >= u);
            assert_eq!(r == u, hull.u0()[n] == 0.0);
        }
    }

    #[test]
    fn argmin_scale_invariance() {
        let spec = SigmaSpec::power_law(0.3, 1.0).unwrap();
        let params = McParams::new(MIN_SAMPLES, 5, true).unwrap();
        let hull = build_hull_table(&spec, 30, &params).unwrap();
        let theta = signal_family(40.0, 6.0, 6.0, 0.3, 30).unwrap();
        for c in [0.25, 2.0, 8.0] {
            let spec_c = spec.scaled(c).unwrap();
            let hull_c = build_hull_table(&spec_c, 30, &params).unwrap();
            for seed in 0..50 {
                let o = simulate(&spec, &theta, 30, seed).unwrap();
                let ys_c = o.ys().iter().map(|y| c * y).collect();
                let o_c = Observation::from_data(ys_c, spec_c.clone(), seed).unwrap();
                assert_eq!(
                    select_ure(&o, 30).unwrap().n_selected,
                    select_ure(&o_c, 30).unwrap().n_selected
                );
                assert_eq!(
                    select_rhm(&o, &hull, 1.1, 30).unwrap().n_selected,
                    select_rhm(&o_c, &hull_c, 1.1, 30).unwrap().n_selected
                );
            }
        }
    }

    proptest! {
        #[test]
        fn selected_is_smallest_minimizer(ys in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let n = ys.len();
            let o = Observation::from_data(ys, unit(), 0).unwrap();
            let r = select_ure(&o, n).unwrap();
            let min = r.objective_values.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(r.objective_values[r.n_selected - 1], min);
            prop_assert!(r.objective_values[..r.n_selected - 1].iter().all(|&v| v > min));
            prop_assert_eq!(r.clone(), select_ure(&o, n).unwrap());
        }
    }
}
