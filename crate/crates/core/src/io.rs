//! CSV/JSON serialization for the library's result types. Plot-ready CSV,
//! machine-readable JSON sidecars; floats use Rust's shortest round-trip
//! formatting so repeated runs are byte-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::durations::{DurationSeries, LatentPath, SeriesOrigin};
use crate::error::{Error, Result};
use crate::inference::KbarRow;
use crate::market::{CumulativeResponse, LagResponse, VolCurve};
use crate::stats::AcfResult;
use crate::subordination::CompoundSimulation;

pub fn write_duration_series(series: &DurationSeries, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "duration_ms")?;
    for v in &series.values {
        writeln!(f, "{v}")?;
    }
    Ok(())
}

pub fn read_duration_series(path: &Path) -> Result<DurationSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.is_empty() || &headers[0] != "duration_ms" {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header duration_ms, got {}",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let v: f64 = row
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Parse {
                line,
                message: format!("bad duration: {e}"),
            })?;
        if !(v > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("duration must be positive, got {v}"),
            });
        }
        values.push(v);
    }
    Ok(DurationSeries {
        values,
        origin: SeriesOrigin::Observed,
    })
}

pub fn write_latent_path(path_data: &LatentPath, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    let headers: Vec<String> = std::iter::once("step".to_string())
        .chain((1..=path_data.kbar).map(|k| format!("M_{k}")))
        .chain(std::iter::once("intensity".to_string()))
        .collect();
    writeln!(f, "{}", headers.join(","))?;
    for (i, (state, intensity)) in path_data
        .states
        .iter()
        .zip(&path_data.intensities)
        .enumerate()
    {
        let mut row = vec![format!("{}", i + 1)];
        row.extend(state.iter().map(|m| format!("{m}")));
        row.push(format!("{intensity}"));
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

/// CSV (window_index, count, return) plus a JSON sidecar carrying the run
/// context (tau, seed/params live with the caller's manifest, adjustments).
pub fn write_compound_simulation(
    sim: &CompoundSimulation,
    csv_path: &Path,
    json_path: &Path,
) -> Result<()> {
    let mut f = File::create(csv_path)?;
    writeln!(f, "window_index,count,return")?;
    for (i, (c, r)) in sim.counts.iter().zip(&sim.window_returns).enumerate() {
        writeln!(f, "{i},{c},{r}")?;
    }
    let sidecar = serde_json::json!({
        "tau": sim.tau,
        "n_windows": sim.window_returns.len(),
        "n_trades": sim.tick_returns.len(),
        "adjustments": sim.adjustments,
    });
    let mut jf = File::create(json_path)?;
    writeln!(jf, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn write_acf(acf: &AcfResult, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "lag,rho")?;
    for (lag, rho) in acf.lags.iter().zip(&acf.rho) {
        writeln!(f, "{lag},{rho}")?;
    }
    Ok(())
}

pub fn write_qq(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "theoretical_quantile,sample_quantile")?;
    for (t, s) in points {
        writeln!(f, "{t},{s}")?;
    }
    Ok(())
}

/// Model-comparison table across kbar: one row per candidate.
pub fn write_kbar_table(rows: &[KbarRow], path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "kbar,lambda,gamma_kbar,b,m0,loglik,converged,error")?;
    for row in rows {
        match (&row.fit, &row.error) {
            (Some(fit), _) => {
                let p = fit.param_map();
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},",
                    row.kbar,
                    p.get("lambda").copied().unwrap_or(f64::NAN),
                    p.get("gamma_kbar").copied().unwrap_or(f64::NAN),
                    p.get("b").copied().unwrap_or(f64::NAN),
                    p.get("m0").copied().unwrap_or(f64::NAN),
                    fit.loglik,
                    fit.converged,
                )?;
            }
            (None, Some(err)) => {
                writeln!(f, "{},,,,,,,{}", row.kbar, err.replace(',', ";"))?;
            }
            (None, None) => writeln!(f, "{},,,,,,,", row.kbar)?,
        }
    }
    Ok(())
}

pub fn write_vol_curve(curve: &VolCurve, csv_path: &Path, json_path: &Path) -> Result<()> {
    let mut f = File::create(csv_path)?;
    writeln!(f, "lambda,tau_med,vol")?;
    for p in &curve.points {
        writeln!(f, "{},{},{}", p.lambda, p.tau_med, p.vol_annualized)?;
    }
    let sidecar = serde_json::json!({
        "coeffs": curve.coeffs,
        "coordinate": "ln(tau_med)",
        "r_squared": curve.r_squared,
        "price_ref": curve.price_ref,
        "annual_ms": curve.annual_ms,
    });
    let mut jf = File::create(json_path)?;
    writeln!(jf, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn write_lag_response(resp: &LagResponse, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "lag,response")?;
    for (lag, r) in resp.lags.iter().zip(&resp.response) {
        writeln!(f, "{lag},{r}")?;
    }
    Ok(())
}

pub fn write_cumulative_response(cum: &CumulativeResponse, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "t_f,plus,minus")?;
    for ((tf, p), m) in cum.horizons.iter().zip(&cum.positive).zip(&cum.negative) {
        writeln!(f, "{tf},{p},{m}")?;
    }
    Ok(())
}
