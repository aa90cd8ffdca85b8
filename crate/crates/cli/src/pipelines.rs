//! The four analysis pipelines. Each writes its files into `out` and returns
//! their paths in the order written.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nmwalk::divisibility::{cp_divisibility_scan, uniform_grid};
use nmwalk::qops::DensityMatrix;
use nmwalk::spectral::{disambiguate, DisambiguationOptions, SpectrumOptions, TimeSeries};
use nmwalk::walk::{
    noiseless_trajectory, position_distribution, pure_position_distribution, stepwise_visit,
    Distribution,
};
use nmwalk::witness::{variance, witness_many, SeriesOptions, WitnessKind, WitnessSeries};
use nmwalk::{EvolutionMode, Exec};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::csv::{fmt_float, read_series, series_table, Table};
use crate::error::CliError;

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Position distributions for `t = 0..=T`.
fn distributions(cfg: &ExperimentConfig) -> Result<Vec<Distribution>, CliError> {
    let lattice = cfg.walk.lattice();
    if cfg.mode == EvolutionMode::Stepwise && !cfg.noise.is_none() {
        let mut out = Vec::with_capacity(cfg.walk.steps + 1);
        stepwise_visit(&cfg.walk, &cfg.noise, cfg.walk.steps, |_, rho| {
            out.push(position_distribution(
                &DensityMatrix::with_tolerance(rho.clone(), 1e-9)?,
                &lattice,
            )?);
            Ok(())
        })?;
        return Ok(out);
    }
    // Coin dephasing leaves the position marginal untouched, so the one-shot
    // distribution is the noiseless one.
    noiseless_trajectory(&cfg.walk)?
        .iter()
        .map(|psi| pure_position_distribution(psi, &lattice).map_err(CliError::from))
        .collect()
}

/// `distribution.csv (step, x, probability)` over the reachable sites
/// `x₀ − t, x₀ − t + 2, …, x₀ + t`, and `variance.csv (step, variance)`.
pub fn run_walk(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let dists = distributions(cfg)?;
    prepare(out)?;
    let x0 = cfg.walk.initial_position;
    let mut table = Table::new(&["step", "x", "probability"]);
    for (t, d) in dists.iter().enumerate() {
        let t = t as i64;
        for x in (x0 - t..=x0 + t).step_by(2) {
            table.row(&[t.to_string(), x.to_string(), fmt_float(d.probability_at(x))]);
        }
    }
    let dist_path = out.join("distribution.csv");
    table.write(&dist_path)?;
    let steps: Vec<usize> = (0..dists.len()).collect();
    let values: Vec<f64> = dists.iter().map(variance).collect();
    let var_path = out.join("variance.csv");
    series_table("variance", &steps, &values).write(&var_path)?;
    Ok(vec![dist_path, var_path])
}

/// Requested witness series. The trace distance compares the two states
/// of `td_pair`; every other witness uses the walk's own initial state.
pub fn compute_witnesses(
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<Vec<WitnessSeries>, CliError> {
    let (d1, e1, d2, e2) = cfg.td_pair;
    let options = SeriesOptions {
        td_partner: (d2, e2),
        exec,
        ..SeriesOptions::default()
    };
    let others: Vec<WitnessKind> = cfg
        .witnesses
        .iter()
        .copied()
        .filter(|&k| k != WitnessKind::TraceDistance)
        .collect();
    let mut computed = if others.is_empty() {
        Vec::new()
    } else {
        witness_many(&cfg.walk, &cfg.noise, cfg.mode, &others, &options)?
    };
    if cfg.witnesses.contains(&WitnessKind::TraceDistance) {
        let walk = cfg.walk.with_initial(d1, e1);
        computed.extend(witness_many(
            &walk,
            &cfg.noise,
            cfg.mode,
            &[WitnessKind::TraceDistance],
            &options,
        )?);
    }
    Ok(cfg
        .witnesses
        .iter()
        .map(|k| {
            computed
                .iter()
                .find(|s| s.kind == *k)
                .expect("every witness computed")
                .clone()
        })
        .collect())
}

/// One `<tag>.csv (step, value)` per witness plus `metadata.json`.
pub fn run_witness(
    cfg: &ExperimentConfig,
    out: &Path,
    seed: Option<u64>,
) -> Result<Vec<PathBuf>, CliError> {
    let series = compute_witnesses(cfg, Exec::default())?;
    prepare(out)?;
    let mut files = Vec::new();
    for s in &series {
        let path = out.join(format!("{}.csv", s.kind.tag()));
        series_table("value", &s.steps, &s.values).write(&path)?;
        files.push(path);
    }
    let degenerate: serde_json::Map<String, serde_json::Value> = series
        .iter()
        .filter(|s| !s.degenerate_steps.is_empty())
        .map(|s| (s.kind.tag().to_string(), json!(s.degenerate_steps)))
        .collect();
    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let metadata = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "generated_unix_seconds": generated,
        "seed": seed,
        "witnesses": series.iter().map(|s| s.kind.tag()).collect::<Vec<_>>(),
        "degenerate_steps": degenerate,
        "config": cfg.echo(),
    });
    let path = out.join("metadata.json");
    write_json(&path, &metadata)?;
    files.push(path);
    Ok(files)
}

/// `choi.csv (t2, lambda3, lambda4, is_cp, invertible)` over
/// `t2 = t1 + dt, …, t2_max`. Non-invertible rows leave the eigenvalue and
/// verdict columns empty.
pub fn run_choi_scan(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if cfg.noise.is_none() {
        return Err(CliError::Config("the Choi scan needs a noise model".into()));
    }
    let c = cfg.choi;
    let grid = uniform_grid(c.t1, c.t2_max, c.dt)?;
    let scan = cp_divisibility_scan(&cfg.noise, c.t1, &grid, Exec::default())?;
    prepare(out)?;
    let mut table = Table::new(&["t2", "lambda3", "lambda4", "is_cp", "invertible"]);
    for p in &scan.points {
        table.row(&[
            fmt_float(p.t2),
            p.lambda3.map(fmt_float).unwrap_or_default(),
            p.lambda4.map(fmt_float).unwrap_or_default(),
            p.is_cp.map(|b| b.to_string()).unwrap_or_default(),
            p.invertible.to_string(),
        ]);
    }
    let path = out.join("choi.csv");
    table.write(&path)?;
    Ok(vec![path])
}

/// `fit.csv`, `residual.csv`, `spectrum.csv` and `peaks.json` for a
/// `(step, value)` series read from `input`.
pub fn run_spectrum(
    cfg: &ExperimentConfig,
    input: &Path,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let file = read_series(input)?;
    let csv_error = |index: usize, message: String| CliError::Csv {
        path: input.to_path_buf(),
        line: file.lines.get(index).copied().unwrap_or(1),
        message,
    };
    for i in 1..file.steps.len() {
        if file.steps[i] != file.steps[i - 1] + 1.0 {
            return Err(csv_error(
                i,
                format!(
                    "steps must increase by 1, found {} after {}",
                    file.steps[i],
                    file.steps[i - 1]
                ),
            ));
        }
    }
    let series =
        TimeSeries::new(file.steps.clone(), file.values.clone(), None).map_err(|e| match e {
            nmwalk::Error::InvalidSeries { index, reason } => csv_error(index, reason.to_string()),
            other => other.into(),
        })?;
    let options = DisambiguationOptions {
        family: cfg.family,
        min_prominence: cfg.min_prominence,
        spectrum: SpectrumOptions { hann: cfg.hann },
    };
    let report = disambiguate(&series, &options)?;
    prepare(out)?;
    let steps_column = |values: &[f64], name: &str| {
        let mut t = Table::new(&["step", name]);
        for (s, v) in file.steps.iter().zip(values) {
            t.row(&[format_step(*s), fmt_float(*v)]);
        }
        t
    };
    let fit_path = out.join("fit.csv");
    steps_column(&report.fit.fitted, "fit").write(&fit_path)?;
    let residual_path = out.join("residual.csv");
    steps_column(report.residual.values(), "residual").write(&residual_path)?;
    let mut spectrum = Table::new(&["frequency", "power"]);
    for (f, p) in report
        .spectrum
        .frequencies
        .iter()
        .zip(&report.spectrum.power)
    {
        spectrum.row(&[fmt_float(*f), fmt_float(*p)]);
    }
    let spectrum_path = out.join("spectrum.csv");
    spectrum.write(&spectrum_path)?;
    let peaks: Vec<serde_json::Value> = report
        .peaks
        .iter()
        .map(|p| json!({"frequency": p.frequency, "power": p.power, "relative_power": p.relative_power}))
        .collect();
    let peaks_path = out.join("peaks.json");
    write_json(&peaks_path, &json!(peaks))?;
    Ok(vec![fit_path, residual_path, spectrum_path, peaks_path])
}

/// Integral steps print without a fractional part.
fn format_step(s: f64) -> String {
    if s.fract() == 0.0 && s.abs() < 1e15 {
        format!("{}", s as i64)
    } else {
        fmt_float(s)
    }
}
