//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rhm_core::experiments::{efficiency_curves, ratio_curve, stem_experiment, EfficiencyCurve, StemData, Sweep};
use rhm_core::hull::{build_hull_table, cache_key, envelope_crossing, HullTable};
use rhm_core::selectors::Selector;
use rhm_core::{project, select_rhm, select_ure, signal_family, Observation, SigmaSpec, Signal};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentKind, HullConfig, MethodName, RunConfig};
use crate::error::CliError;
use crate::output::{csv_document, json_document, read_observations, write_atomic, Outputs};

const TOOL: &str = "rhm";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A hull table together with where it came from.
pub struct LoadedHull {
    pub table: Arc<HullTable>,
    pub path: PathBuf,
    pub cache_hit: bool,
}

impl LoadedHull {
    fn describe(&self) -> Value {
        json!({
            "file": self.path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "cache_key": self.table.cache_key(),
            "spec_fingerprint": self.table.spec_fingerprint(),
            "digest": self.table.digest(),
            "N_max": self.table.n_max(),
            "mc_samples": self.table.mc_samples(),
            "seed": self.table.seed(),
            "monotonized": self.table.monotonized(),
            "saturated": self.table.saturated(),
        })
    }
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("hull-{}.json", &key[..16]))
}

/// Reads a verified table from disk; any problem with the file is exit 3.
pub fn read_hull_file(path: &Path) -> Result<HullTable, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    HullTable::from_json(&text).map_err(|e| {
        CliError::Io(format!(
            "hull file {} failed verification (fingerprint mismatch or corruption): {e}",
            path.display()
        ))
    })
}

/// Read-through cache keyed by spectrum and Monte Carlo parameters.
pub fn load_or_build(
    spec: &SigmaSpec,
    n_max: usize,
    hull: &HullConfig,
    dir: &Path,
    rebuild: bool,
) -> Result<LoadedHull, CliError> {
    let mc = hull.mc();
    mc.validate().map_err(|e| CliError::Config(format!("hull: {e}")))?;
    let key = cache_key(spec, n_max, &mc);
    let path = cache_path(dir, &key);
    if !rebuild && path.exists() {
        let table = read_hull_file(&path)?;
        if table.cache_key() != key {
            return Err(CliError::Io(format!(
                "hull file {} has a fingerprint mismatch: expected key {key}, found {}",
                path.display(),
                table.cache_key()
            )));
        }
        return Ok(LoadedHull {
            table: Arc::new(table),
            path,
            cache_hit: true,
        });
    }
    let table = build_hull_table(spec, n_max, &mc)?;
    write_atomic(&path, table.to_json().as_bytes())?;
    Ok(LoadedHull {
        table: Arc::new(table),
        path,
        cache_hit: false,
    })
}

fn hull_n_max(config: &RunConfig, needed: usize) -> Result<usize, CliError> {
    match config.hull.as_ref().and_then(|h| h.n_max) {
        Some(n) if n < needed => Err(CliError::Config(format!(
            "hull.N_max: table size {n} is smaller than the {needed} bandwidths this run needs"
        ))),
        Some(n) => Ok(n),
        None => Ok(needed),
    }
}

fn manifest(command: &str, config: &RunConfig, runs: Vec<Value>) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": config,
        "runs": runs,
    })
}

pub fn cmd_hull(config: &RunConfig, rebuild: bool) -> Result<(), CliError> {
    let hull_cfg = config.hull.clone().unwrap_or_default();
    let dir = config.hull_cache_dir();
    let mut runs = Vec::new();
    for spec in config.specs() {
        let n_max = hull_cfg.n_max.unwrap_or_else(|| config.n_max_for(&spec));
        spec.check_domain(n_max)
            .map_err(|e| CliError::Config(format!("hull.N_max: {e}")))?;
        let loaded = load_or_build(&spec, n_max, &hull_cfg, &dir, rebuild)?;
        let t = &loaded.table;
        let crossing = envelope_crossing(t);
        println!(
            "{} {}: N_max={} U0[1]={} U0[{}]={} envelope N0={}{}",
            if loaded.cache_hit { "cache hit" } else { "built" },
            loaded.path.display(),
            t.n_max(),
            t.u0()[0],
            t.n_max(),
            t.u0()[t.n_max() - 1],
            crossing.map_or("none".to_string(), |n| n.to_string()),
            if t.saturated() {
                " (saturated: Monte Carlo sample too small for some N)"
            } else {
                ""
            },
        );
        runs.push(json!({
            "label": spec.label(),
            "spec": spec,
            "hull": loaded.describe(),
            "envelope_crossing": crossing,
        }));
    }
    let mut out = Outputs::default();
    out.add("manifest.json", json_document(&manifest("hull", config, runs)));
    out.write_all(&config.output.dir)?;
    Ok(())
}

#[derive(Serialize)]
struct Selection {
    method: MethodName,
    #[serde(rename = "N_selected")]
    n_selected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    estimate_file: String,
}

fn estimate_csv(estimate: &Signal) -> Result<Vec<u8>, CliError> {
    csv_document(
        &["k", "estimate"],
        estimate
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )
}

pub fn cmd_select(config: &RunConfig, data: &Path, hull_file: Option<&Path>, rebuild: bool) -> Result<(), CliError> {
    let specs = config.specs();
    let [spec] = specs.as_slice() else {
        return Err(CliError::Config(
            "problem: select needs exactly one noise spectrum".into(),
        ));
    };
    let ys = read_observations(data)?;
    let n = ys.len();
    let obs = Observation::from_data(ys, spec.clone(), 0).map_err(|e| CliError::Input(e.to_string()))?;
    let n_max = config.selector.n_max.unwrap_or(n);
    if n_max > n {
        return Err(CliError::Config(format!(
            "selector.N_max: {n_max} exceeds the {n} observations"
        )));
    }

    let mut out = Outputs::default();
    let mut selections = Vec::new();
    let mut hull_info = Value::Null;
    for &method in &config.selector.methods {
        let (result, alpha) = match method {
            MethodName::Ure => (select_ure(&obs, n_max)?, None),
            MethodName::Rhm => {
                let table = match (hull_file, &config.hull) {
                    (Some(path), _) => {
                        let table = read_hull_file(path)?;
                        hull_info = json!({ "file": path.display().to_string(), "digest": table.digest() });
                        Arc::new(table)
                    }
                    (None, Some(h)) => {
                        let loaded =
                            load_or_build(spec, hull_n_max(config, n_max)?, h, &config.hull_cache_dir(), rebuild)?;
                        hull_info = loaded.describe();
                        loaded.table
                    }
                    (None, None) => {
                        return Err(CliError::HullMissing(
                            "method rhm needs --hull FILE or a `hull` section in the config".into(),
                        ))
                    }
                };
                (
                    select_rhm(&obs, &table, config.selector.alpha, n_max)?,
                    Some(config.selector.alpha),
                )
            }
        };
        let name = format!("estimate_{}.csv", result.method);
        out.add(name.clone(), estimate_csv(&project(&obs, result.n_selected)?)?);
        println!("{}: N={}", result.method, result.n_selected);
        selections.push(Selection {
            method,
            n_selected: result.n_selected,
            alpha,
            estimate_file: name,
        });
    }
    let run = json!({
        "label": spec.label(),
        "spec": spec,
        "data": data.display().to_string(),
        "observations": n,
        "N_max": n_max,
        "selections": selections,
        "hull": hull_info,
    });
    out.add("manifest.json", json_document(&manifest("select", config, vec![run])));
    out.write_all(&config.output.dir)?;
    Ok(())
}

fn selectors_for(
    config: &RunConfig,
    spec: &SigmaSpec,
    n_max: usize,
    rebuild: bool,
) -> Result<(Vec<Selector>, Value), CliError> {
    let mut selectors = Vec::new();
    let mut hull_info = Value::Null;
    for method in &config.selector.methods {
        match method {
            MethodName::Ure => selectors.push(Selector::Ure),
            MethodName::Rhm => {
                let hull_cfg = config.hull.clone().unwrap_or_default();
                let loaded = load_or_build(
                    spec,
                    hull_n_max(config, n_max)?,
                    &hull_cfg,
                    &config.hull_cache_dir(),
                    rebuild,
                )?;
                hull_info = loaded.describe();
                selectors.push(Selector::Rhm {
                    hull: loaded.table,
                    alpha: config.selector.alpha,
                });
            }
        }
    }
    Ok((selectors, hull_info))
}

fn stem_csv(data: &StemData) -> Result<Vec<u8>, CliError> {
    csv_document(
        &["rep", "N_selected", "normalized_loss"],
        data.records.iter().map(|r| {
            vec![
                r.rep.to_string(),
                r.selected_n.to_string(),
                r.normalized_loss.to_string(),
            ]
        }),
    )
}

fn efficiency_csv(curve: &EfficiencyCurve) -> Result<Vec<u8>, CliError> {
    csv_document(
        &["a", "efficiency", "std_error", "oracle_N", "oracle_risk"],
        (0..curve.a_grid.len()).map(|i| {
            vec![
                curve.a_grid[i].to_string(),
                curve.efficiency[i].to_string(),
                curve.std_error[i].to_string(),
                curve.oracle_n[i].to_string(),
                curve.oracle_risk[i].to_string(),
            ]
        }),
    )
}

pub fn cmd_bench(config: &RunConfig, rebuild: bool) -> Result<(), CliError> {
    let e = &config.experiment;
    if e.kind == ExperimentKind::Select {
        let data = e
            .data
            .as_deref()
            .ok_or_else(|| CliError::Config("experiment.data: required for kind = select".into()))?;
        return cmd_select(config, data, None, rebuild);
    }

    let mut out = Outputs::default();
    let mut runs = Vec::new();
    for spec in config.specs() {
        let label = spec.label();
        let n_max = config.n_max_for(&spec);
        spec.check_domain(n_max)
            .map_err(|err| CliError::Config(format!("experiment.n_max: {err}")))?;
        let run = match e.kind {
            ExperimentKind::Stem => {
                let (selectors, hull_info) = selectors_for(config, &spec, n_max, rebuild)?;
                let signal = if e.amplitude > 0.0 {
                    signal_family(e.amplitude, e.width, e.smoothness, spec.sigma1(), n_max)?
                } else {
                    Signal::zeros(n_max)
                };
                let mut summaries = Vec::new();
                for sel in &selectors {
                    let data = stem_experiment(&spec, &signal, sel, e.reps, n_max, e.seed)?;
                    let name = format!("stem_{label}_{}.csv", sel.name());
                    out.add(name.clone(), stem_csv(&data)?);
                    println!("{label} {}: N_emp={} R_emp={}", sel.name(), data.n_emp, data.r_emp);
                    summaries
                        .push(json!({ "method": sel.name(), "file": name, "N_emp": data.n_emp, "R_emp": data.r_emp }));
                }
                json!({ "label": label, "spec": spec, "n_max": n_max, "hull": hull_info, "stem": summaries })
            }
            ExperimentKind::Efficiency => {
                let (selectors, hull_info) = selectors_for(config, &spec, n_max, rebuild)?;
                let sweep = Sweep {
                    a_grid: config.a_grid(),
                    width: e.width,
                    smoothness: e.smoothness,
                    reps: e.reps,
                    n_max,
                    seed: e.seed,
                };
                let curves = efficiency_curves(&spec, &selectors, &sweep)?;
                let mut summaries = Vec::new();
                for curve in &curves {
                    let name = format!("efficiency_{label}_{}.csv", curve.label);
                    out.add(name.clone(), efficiency_csv(curve)?);
                    let min = curve.efficiency.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = curve.efficiency.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    println!("{label} {}: efficiency in [{min}, {max}]", curve.label);
                    summaries.push(
                        json!({ "method": curve.label, "file": name, "min_efficiency": min, "max_efficiency": max }),
                    );
                }
                json!({ "label": label, "spec": spec, "n_max": n_max, "hull": hull_info, "efficiency": summaries })
            }
            ExperimentKind::Ratio => {
                let hull_cfg = config.hull.clone().unwrap_or_default();
                let table_n = hull_cfg.n_max.unwrap_or(n_max);
                let [lo, hi] = e.n_range.unwrap_or([1, table_n]);
                let table_n = hull_n_max(config, hi.max(table_n))?;
                let loaded = load_or_build(&spec, table_n, &hull_cfg, &config.hull_cache_dir(), rebuild)?;
                let curve = ratio_curve(&spec, &loaded.table, config.selector.alpha, lo..=hi)?;
                let name = format!("ratio_{label}.csv");
                out.add(
                    name.clone(),
                    csv_document(
                        &["N", "rho", "rho_tilde"],
                        curve
                            .iter()
                            .map(|p| vec![p.n.to_string(), p.rho.to_string(), p.rho_tilde.to_string()]),
                    )?,
                );
                let max_rho = curve.iter().map(|p| p.rho).fold(f64::NEG_INFINITY, f64::max);
                println!("{label}: rho max {max_rho} over N in [{lo}, {hi}]");
                json!({ "label": label, "spec": spec, "hull": loaded.describe(), "ratio": { "file": name, "alpha": config.selector.alpha, "max_rho": max_rho } })
            }
            ExperimentKind::Select => unreachable!("handled above"),
        };
        runs.push(run);
    }
    out.add("manifest.json", json_document(&manifest("bench", config, runs)));
    out.write_all(&config.output.dir)?;
    Ok(())
}
