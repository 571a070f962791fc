use std::io::Write;

use serde::Serialize;

use super::{ImputationSummary, PosteriorDraws};
use crate::data::DataError;

/// Draws as CSV: `chain,iteration` followed by one column per monitored
/// quantity, one row per retained draw.
pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.columns.iter().cloned());
    wtr.write_record(&header)?;
    for (k, chain) in draws.chains.iter().enumerate() {
        for t in 0..draws.n_retained() {
            let mut row = vec![(k + 1).to_string(), (t + 1).to_string()];
            row.extend(chain.iter().map(|col| col[t].to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_imputations_csv<W: Write>(
    rows: &[ImputationSummary],
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "id",
        "arm",
        "quantity",
        "baseline_observed",
        "mean",
        "hpd_low",
        "hpd_high",
        "no_interval",
    ])?;
    for r in rows {
        wtr.write_record([
            r.id.clone(),
            r.arm.to_string(),
            r.quantity.clone(),
            r.baseline_observed.to_string(),
            r.mean.to_string(),
            opt(r.hpd_low),
            opt(r.hpd_high),
            r.no_interval.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(
    value: &T,
    mut writer: W,
) -> Result<(), DataError> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| DataError::Io(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}
