//! CSV and JSON artifacts. Output bytes depend only on the table contents.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{Aggregate, ResultTable, RunMode, SweepPoint, UserResult};
use crate::error::{Error, Result};
use crate::security::{LimitingTerm, ProtocolParams};

pub const USERS_CSV: &str = "users.csv";
pub const FRAMES_CSV: &str = "frames.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Serialize)]
struct UserRow {
    user: usize,
    loss_db: f64,
    transmittance: f64,
    tau: f64,
    excess_noise: f64,
    snr: f64,
    snr_bin: Option<usize>,
    beta: f64,
    i_ab: Option<f64>,
    chi_be: Option<f64>,
    max_inter_bob: Option<f64>,
    k_bits_per_symbol: Option<f64>,
    skr_bps: f64,
    limiting: Option<LimitingTerm>,
    plob_bits: f64,
    plob_bps: f64,
}

impl From<&UserResult> for UserRow {
    fn from(u: &UserResult) -> Self {
        let k = u.key.as_ref();
        Self {
            user: u.user,
            loss_db: u.loss_db,
            transmittance: u.transmittance,
            tau: u.tau,
            excess_noise: u.excess_noise,
            snr: u.snr,
            snr_bin: u.snr_bin,
            beta: u.beta,
            i_ab: k.map(|k| k.i_ab),
            chi_be: k.map(|k| k.chi_be),
            max_inter_bob: k.map(|k| k.max_inter_bob),
            k_bits_per_symbol: k.map(|k| k.k_bits_per_symbol),
            skr_bps: u.skr_bps,
            limiting: k.map(|k| k.limiting),
            plob_bits: u.plob_bits,
            plob_bps: u.plob_bps,
        }
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    distance_km: f64,
    loss_db: f64,
    skr_bps: f64,
    plob_bits: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    mode: RunMode,
    seed: u64,
    n_frames: usize,
    frame_symbols: usize,
    protocol: &'a ProtocolParams,
    aggregate: &'a Aggregate,
    users: &'a [UserResult],
}

fn csv_bytes<R: Serialize>(headers: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("CSV serialization failed: {e}"));
    w.write_record(headers).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("CSV serialization failed: {e}")))
}

const USER_HEADERS: [&str; 16] = [
    "user",
    "loss_db",
    "transmittance",
    "tau",
    "excess_noise",
    "snr",
    "snr_bin",
    "beta",
    "i_ab",
    "chi_be",
    "max_inter_bob",
    "k_bits_per_symbol",
    "skr_bps",
    "limiting",
    "plob_bits",
    "plob_bps",
];

const FRAME_HEADERS: [&str; 12] = [
    "frame",
    "user",
    "tau_hat",
    "xi_x",
    "xi_p",
    "xi_hat",
    "snr",
    "snu_x",
    "snu_p",
    "pilot_snr_db",
    "k_bits_per_symbol",
    "skr_bps",
];

const SWEEP_HEADERS: [&str; 4] = ["distance_km", "loss_db", "skr_bps", "plob_bits"];

/// One row per user.
pub fn users_csv(table: &ResultTable) -> Result<Vec<u8>> {
    csv_bytes(&USER_HEADERS, table.users.iter().map(UserRow::from))
}

/// One row per user per frame, sorted by frame then user.
pub fn frames_csv(table: &ResultTable) -> Result<Vec<u8>> {
    let mut rows = table.frames.clone();
    rows.sort_by_key(|r| (r.frame, r.user));
    csv_bytes(&FRAME_HEADERS, rows)
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<Vec<u8>> {
    let mut rows: Vec<SweepRow> = points
        .iter()
        .map(|p| SweepRow {
            distance_km: p.distance_km,
            loss_db: p.loss_db,
            skr_bps: p.skr_bps,
            plob_bits: p.plob_bits,
        })
        .collect();
    rows.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km));
    csv_bytes(&SWEEP_HEADERS, rows)
}

/// Scenario, aggregate and per-user results as pretty-printed JSON.
pub fn summary_json(table: &ResultTable) -> Result<Vec<u8>> {
    let s = Summary {
        scenario: &table.scenario,
        mode: table.mode,
        seed: table.seed,
        n_frames: table.n_frames,
        frame_symbols: table.frame_symbols,
        protocol: &table.protocol,
        aggregate: &table.aggregate,
        users: &table.users,
    };
    let mut v = serde_json::to_vec_pretty(&s)
        .map_err(|e| Error::Config(format!("JSON serialization failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the table (and an optional sweep) into `dir`, creating it if
/// needed. Returns the written paths.
pub fn emit_outputs(
    table: Option<&ResultTable>,
    sweep: Option<&[SweepPoint]>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(t) = table {
        written.push(write(dir, USERS_CSV, &users_csv(t)?)?);
        written.push(write(dir, FRAMES_CSV, &frames_csv(t)?)?);
        written.push(write(dir, SUMMARY_JSON, &summary_json(t)?)?);
    }
    if let Some(s) = sweep {
        written.push(write(dir, SWEEP_CSV, &sweep_csv(s)?)?);
    }
    Ok(written)
}
