//! Plain-text digest of experiment results.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::output::fmt_sig6;
use super::run::{sort_records, ResultRecord};
use crate::{Error, Result};

/// Gap within which an iteration counts as converged to the final one.
pub const CONVERGENCE_DB: f64 = 0.5;

const BOUND_PAIRS: [(&str, &str); 3] = [("lse_smp", "crlb_lse_smp"), ("genie_lse", "crlb_lse_smp"), ("lse", "crlb_lse")];

/// Key for one curve point: estimator, eta bits, snr bits.
type PointKey = (String, u64, u64);

fn key(r: &ResultRecord) -> PointKey {
    (r.estimator.clone(), r.eta.to_bits(), r.snr_db.to_bits())
}

/// Per-estimator NMSE at every SNR, estimator-to-bound gaps, and the first
/// turbo iteration within [`CONVERGENCE_DB`] of the last.
pub fn summarize(records: &[ResultRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::invalid("no records to summarize"));
    }
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);

    // Last iteration of each curve point, plus the full iteration trace.
    let mut finals: BTreeMap<PointKey, &ResultRecord> = BTreeMap::new();
    let mut traces: BTreeMap<PointKey, Vec<&ResultRecord>> = BTreeMap::new();
    for r in &sorted {
        finals.insert(key(r), r);
        traces.entry(key(r)).or_default().push(r);
    }
    let mut ordered: Vec<&ResultRecord> = finals.values().copied().collect();
    sort_records_ref(&mut ordered);

    let mut out = String::new();
    for r in &ordered {
        let iter = if r.turbo_iter > 0 {
            format!(" iter={}", r.turbo_iter)
        } else {
            String::new()
        };
        writeln!(
            out,
            "{} eta={} snr={} dB{iter}: NMSE {} dB (+/- {} dB, {} trials)",
            r.estimator,
            fmt_sig6(r.eta),
            fmt_sig6(r.snr_db),
            fmt_sig(r.nmse_mean_db(), 2),
            fmt_sig(r.nmse_stderr_db(), 2),
            r.trials
        )
        .expect("write to string");
    }

    let mut gaps = String::new();
    for (est, bound) in BOUND_PAIRS {
        for r in ordered.iter().filter(|r| r.estimator == est) {
            if let Some(b) = finals.get(&(bound.to_string(), r.eta.to_bits(), r.snr_db.to_bits())) {
                writeln!(
                    gaps,
                    "gap {est} - {bound} eta={} snr={} dB: {} dB",
                    fmt_sig6(r.eta),
                    fmt_sig6(r.snr_db),
                    fmt_sig(r.nmse_mean_db() - b.nmse_mean_db(), 2)
                )
                .expect("write to string");
            }
        }
    }

    let mut conv = String::new();
    for (k, trace) in &traces {
        if trace.len() < 2 {
            continue;
        }
        let last = trace.last().expect("non-empty").nmse_mean_db();
        let first_ok = trace
            .iter()
            .find(|r| (r.nmse_mean_db() - last).abs() <= CONVERGENCE_DB)
            .map(|r| r.turbo_iter)
            .unwrap_or(trace.last().expect("non-empty").turbo_iter);
        writeln!(
            conv,
            "convergence {} eta={} snr={} dB: iteration {first_ok} of {}",
            k.0,
            fmt_sig6(f64::from_bits(k.1)),
            fmt_sig6(f64::from_bits(k.2)),
            trace.len()
        )
        .expect("write to string");
    }

    for section in [gaps, conv] {
        if !section.is_empty() {
            out.push('\n');
            out.push_str(&section);
        }
    }
    Ok(out)
}

fn sort_records_ref(records: &mut [&ResultRecord]) {
    records.sort_by(|a, b| {
        a.estimator
            .cmp(&b.estimator)
            .then(a.eta.total_cmp(&b.eta))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
}

fn fmt_sig(x: f64, decimals: usize) -> String {
    format!("{x:.decimals$}")
}
