//! CSV output, CSV input and gnuplot scripts.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::run::{sort_records, ResultRecord};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "estimator",
    "eta",
    "snr_db",
    "turbo_iter",
    "nmse_mean_db",
    "nmse_stderr_db",
    "trials",
    "wall_time_s",
];

/// Format with six significant digits, `%g` style.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write records as CSV, sorted.
pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &sorted {
        w.write_record([
            r.estimator.clone(),
            fmt_sig6(r.eta),
            fmt_sig6(r.snr_db),
            r.turbo_iter.to_string(),
            fmt_sig6(r.nmse_mean_db()),
            fmt_sig6(r.nmse_stderr_db()),
            r.trials.to_string(),
            fmt_sig6(r.wall_time),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no records to write"));
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_csv(records, file).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    estimator: String,
    eta: f64,
    snr_db: f64,
    turbo_iter: usize,
    nmse_mean_db: f64,
    nmse_stderr_db: f64,
    trials: usize,
    wall_time_s: f64,
}

/// Parse CSV produced by [`write_csv`]. Linear means are recovered from the dB columns.
pub fn read_csv_from<R: std::io::Read>(input: R, path: &Path) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mean = 10f64.powf(row.nmse_mean_db / 10.0);
        out.push(ResultRecord {
            estimator: row.estimator,
            eta: row.eta,
            snr_db: row.snr_db,
            turbo_iter: row.turbo_iter,
            nmse_mean: mean,
            nmse_std_err: row.nmse_stderr_db * mean * std::f64::consts::LN_10 / 10.0,
            trials: row.trials,
            wall_time: row.wall_time_s,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_csv_from(file, path)
}

/// A gnuplot script drawing NMSE against SNR, one curve per (estimator, eta, iteration).
pub fn gnuplot_script(records: &[ResultRecord], csv_path: &str) -> String {
    let mut curves: Vec<(String, f64, usize)> = Vec::new();
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    for r in &sorted {
        let key = (r.estimator.clone(), r.eta, r.turbo_iter);
        if !curves.contains(&key) {
            curves.push(key);
        }
    }
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set xlabel 'SNR (dB)'\nset ylabel 'NMSE (dB)'\nset grid\n");
    s.push_str("plot \\\n");
    let lines: Vec<String> = curves
        .iter()
        .map(|(est, eta, it)| {
            let label = if *it > 0 {
                format!("{est} eta={} iter={it}", fmt_sig6(*eta))
            } else {
                format!("{est} eta={}", fmt_sig6(*eta))
            };
            format!(
                "  '{csv_path}' using (strcol(1) eq '{est}' && $2 == {} && $4 == {it} ? $3 : 1/0):5 with linespoints title '{label}'",
                fmt_sig6(*eta)
            )
        })
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}
