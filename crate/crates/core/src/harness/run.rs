//! Scenario runners producing [`ResultTable`]s.

use serde::{Deserialize, Serialize};

use super::config::{ResolvedUser, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimation::{
    calibrate_snu, excess_noise_statistics, normalize, snr_classify, ChannelEstimate,
    ChannelMoments, ExcessNoiseSummary,
};
use crate::gaussian::CovarianceMatrix;
use crate::parallel::{self, Execution};
use crate::rng::{derive_seed, stream};
use crate::rx::{process_frame, FrameStructure};
use crate::security::{
    build_ptmp_covariance, db_to_transmittance, plob_bound, secret_key_rate, NetworkTopology,
    ProtocolParams, UserChannelParams, UserKeyRate,
};
use crate::tx::{
    apply_channel, build_frame, gate_calibration_frames, generate_gaussian_symbols,
    rrc_shape_and_shift, ChannelModel, FrameLayout,
};
use crate::waveform::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Model,
    Waveform,
}

/// Estimation results of one user pooled over all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEstimate {
    pub pooled: ChannelEstimate,
    /// Heterodyne-referenced transmittance the channel was driven with.
    pub injected_tau_hat: f64,
    pub injected_excess_noise: f64,
    pub excess_noise: ExcessNoiseSummary,
    /// Frame-to-frame standard error of the mean ξ̂.
    pub xi_std_error: f64,
    /// Mean and standard error of the per-frame `K` over frames where the
    /// estimated state was physical.
    pub frame_k_mean: Option<f64>,
    pub frame_k_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub user: usize,
    pub loss_db: f64,
    pub transmittance: f64,
    /// Security-model transmittance `T·η_eff`.
    pub tau: f64,
    /// Input to the key rate. For waveform runs this is the pooled ξ̂
    /// clamped at zero; the raw estimate is in `estimate`.
    pub excess_noise: f64,
    /// Per-quadrature heterodyne SNR.
    pub snr: f64,
    pub beta: f64,
    pub snr_bin: Option<usize>,
    /// Absent when the (estimated) state is unphysical or the SNR is below
    /// the reconciliation range.
    pub key: Option<UserKeyRate>,
    pub skr_bps: f64,
    pub plob_bits: f64,
    /// PLOB capacity at the protocol symbol rate.
    pub plob_bps: f64,
    pub estimate: Option<UserEstimate>,
}

/// One user in one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame: usize,
    pub user: usize,
    pub tau_hat: f64,
    pub xi_x: f64,
    pub xi_p: f64,
    pub xi_hat: f64,
    pub snr: f64,
    pub snu_x: f64,
    pub snu_p: f64,
    pub pilot_snr_db: f64,
    pub k_bits_per_symbol: Option<f64>,
    pub skr_bps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_skr_bps: f64,
    pub total_skr_bps: f64,
    pub min_skr_bps: f64,
    pub max_skr_bps: f64,
    pub mean_snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub scenario: String,
    pub mode: RunMode,
    pub seed: u64,
    pub n_frames: usize,
    pub frame_symbols: usize,
    pub protocol: ProtocolParams,
    pub users: Vec<UserResult>,
    pub frames: Vec<FrameRow>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub feeder_km: f64,
    pub distance_km: f64,
    pub loss_db: f64,
    /// Mean over users.
    pub skr_bps: f64,
    /// Largest per-user `K` at this point, in bits per symbol.
    pub max_k_bits_per_symbol: f64,
    pub plob_bits: f64,
}

/// Per-quadrature heterodyne SNR `τ·V_A / (2 + τ·ξ)`.
pub fn model_snr(tau: f64, xi: f64, v_mod: f64) -> f64 {
    tau * v_mod / (2.0 + tau * xi)
}

fn with_beta(p: &ProtocolParams, beta: f64) -> ProtocolParams {
    ProtocolParams { beta, ..*p }
}

/// β for one user and its SNR class. `Ok(None)` means no key can be
/// reconciled at this SNR.
fn choose_beta(
    cfg: &ScenarioConfig,
    user: &ResolvedUser,
    snr: f64,
) -> Result<(Option<f64>, Option<usize>)> {
    let plan = snr_classify(snr, &cfg.beta_table);
    let bin = plan.as_ref().ok().map(|p| p.bin_index);
    if let Some(b) = user.beta {
        return Ok((Some(b), bin));
    }
    if !cfg.use_beta_table {
        return Ok((Some(cfg.protocol.beta), bin));
    }
    match plan {
        Ok(p) => Ok((Some(p.beta_effective), bin)),
        Err(Error::InsufficientRate { .. }) => Ok((None, None)),
        Err(e) => Err(e),
    }
}

fn aggregate(users: &[UserResult]) -> Aggregate {
    let n = users.len().max(1) as f64;
    let skr: Vec<f64> = users.iter().map(|u| u.skr_bps).collect();
    Aggregate {
        mean_skr_bps: skr.iter().sum::<f64>() / n,
        total_skr_bps: skr.iter().sum(),
        min_skr_bps: skr.iter().copied().fold(f64::INFINITY, f64::min),
        max_skr_bps: skr.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_snr: users.iter().map(|u| u.snr).sum::<f64>() / n,
    }
}

fn key_for(
    gamma: &CovarianceMatrix,
    user: usize,
    beta: Option<f64>,
    p: &ProtocolParams,
) -> Result<Option<UserKeyRate>> {
    match beta {
        Some(b) => secret_key_rate(gamma, user, &with_beta(p, b)).map(Some),
        None => Ok(None),
    }
}

/// PLOB in bits per use and bits per second; infinite for a lossless link.
fn plob_pair(transmittance: f64, p: &ProtocolParams) -> Result<(f64, f64)> {
    let bits = match plob_bound(transmittance) {
        Err(Error::Unbounded(_)) => f64::INFINITY,
        other => other?,
    };
    Ok((bits, bits * p.symbol_rate))
}

/// Evaluates the covariance model for every user of the scenario.
pub fn run_model_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<ResultTable> {
    cfg.validate()?;
    let users = cfg.resolve_users()?;
    let p = &cfg.protocol;
    let params: Vec<UserChannelParams> = users.iter().map(|u| u.params).collect();
    let gamma = build_ptmp_covariance(p, &params)?;
    let indices: Vec<usize> = (0..users.len()).collect();
    let results = parallel::map(exec, &indices, |&i| -> Result<UserResult> {
        let u = &users[i];
        let tau = u.params.tau();
        let snr = model_snr(tau, u.params.excess_noise, p.v_mod);
        let (beta, snr_bin) = choose_beta(cfg, u, snr)?;
        let key = key_for(&gamma, i, beta, p)?;
        let (plob_bits, plob_bps) = plob_pair(u.params.transmittance, p)?;
        Ok(UserResult {
            user: i,
            loss_db: u.loss_db,
            transmittance: u.params.transmittance,
            tau,
            excess_noise: u.params.excess_noise,
            snr,
            beta: beta.unwrap_or(0.0),
            snr_bin,
            skr_bps: key.as_ref().map_or(0.0, |k| k.skr_bps),
            key,
            plob_bits,
            plob_bps,
            estimate: None,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ResultTable {
        scenario: cfg.name.clone(),
        mode: RunMode::Model,
        seed: cfg.seed,
        n_frames: 0,
        frame_symbols: 0,
        protocol: *p,
        aggregate: aggregate(&results),
        users: results,
        frames: Vec::new(),
    })
}

/// Per-user products of one simulated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame: usize,
    pub moments: Vec<ChannelMoments>,
    pub estimates: Vec<ChannelEstimate>,
    pub snu: Vec<(f64, f64)>,
    pub pilot_snr_db: Vec<f64>,
}

/// Transmits one frame to every user and runs the receivers and the
/// per-frame estimators. All users see the same Alice symbols.
pub fn simulate_frame(
    cfg: &ScenarioConfig,
    users: &[ResolvedUser],
    frame: usize,
) -> Result<FrameOutcome> {
    let p = &cfg.protocol;
    let f = frame as u64;
    let symbols = generate_gaussian_symbols(
        cfg.frame_symbols,
        p.v_mod,
        derive_seed(cfg.seed, &[f, stream::SYMBOLS]),
    )?;
    let layout = FrameLayout::new(cfg.frame_symbols, p.pilot_ratio);
    let tx_frame = build_frame(&symbols, &layout)?;
    let mut all = tx_frame.symbols.clone();
    if cfg.calibration_symbols > 0 {
        let tail = generate_gaussian_symbols(
            cfg.calibration_symbols,
            p.v_mod,
            derive_seed(cfg.seed, &[f, stream::TAIL]),
        )?;
        all.extend_from_slice(&tail);
    }
    let mut shaped = rrc_shape_and_shift(&all, &cfg.waveform)?.waveform;
    drop(all);
    if let Some(mark) = shaped.annotations.frames.first_mut() {
        mark.frame_id = f;
    }
    let gate_start = tx_frame.symbols.len() * cfg.waveform.oversampling;
    let gated = gate_calibration_frames(&shaped, &[Interval::new(gate_start, shaped.len())])?;
    drop(shaped);
    let structure = FrameStructure::from(&tx_frame);

    let mut out = FrameOutcome {
        frame,
        moments: Vec::with_capacity(users.len()),
        estimates: Vec::with_capacity(users.len()),
        snu: Vec::with_capacity(users.len()),
        pilot_snr_db: Vec::with_capacity(users.len()),
    };
    for (i, u) in users.iter().enumerate() {
        let model = ChannelModel::heterodyne(u.params);
        let rx = apply_channel(
            &gated,
            &model,
            &cfg.waveform,
            derive_seed(cfg.seed, &[f, stream::CHANNEL, i as u64]),
        )?;
        let rec = process_frame(&rx, &structure, &cfg.waveform, &cfg.dsp)?;
        drop(rx);
        let cal = calibrate_snu(&rec.calibration, f, &cfg.calibration)?;
        let y = normalize(&rec, &cal)?;
        let m = ChannelMoments::from_pairs(&symbols, &y)?;
        out.estimates.push(m.estimate(p.v_mod)?);
        out.moments.push(m);
        out.snu.push((cal.snu_x, cal.snu_p));
        out.pilot_snr_db.push(rec.metrics.pilot_snr_db);
    }
    Ok(out)
}

/// Key rates of all users from estimated channels. Negative ξ̂ is
/// unphysical, so the key uses the estimate projected onto `ξ ≥ 0`.
fn keys_from_estimates(
    cfg: &ScenarioConfig,
    users: &[ResolvedUser],
    estimates: &[ChannelEstimate],
) -> Result<Vec<(Option<UserKeyRate>, f64, Option<usize>)>> {
    let p = &cfg.protocol;
    let params: Vec<UserChannelParams> = estimates.iter().map(physical_params).collect();
    let gamma = build_ptmp_covariance(p, &params)?;
    users
        .iter()
        .zip(estimates)
        .enumerate()
        .map(|(i, (u, e))| {
            let (beta, bin) = choose_beta(cfg, u, e.snr.max(f64::MIN_POSITIVE))?;
            let key = key_for(&gamma, i, beta, p)?;
            Ok((key, beta.unwrap_or(0.0), bin))
        })
        .collect()
}

fn physical_params(e: &ChannelEstimate) -> UserChannelParams {
    let mut u = e.user_params();
    u.excess_noise = u.excess_noise.max(0.0);
    u
}

fn mean_and_std_error(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    Some((mean, se))
}

/// Full transmitter → channel → receiver → estimation chain over
/// `n_frames` frames. The key rate comes from the estimate pooled over all
/// frames; per-frame estimates and keys are kept for spread statistics.
pub fn run_waveform_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<ResultTable> {
    cfg.validate()?;
    if cfg.model_only {
        return Err(Error::Config(
            "scenario is model-only; waveform simulation disabled".into(),
        ));
    }
    let users = cfg.resolve_users()?;
    let p = &cfg.protocol;
    let outcomes = parallel::map_range(exec, cfg.n_frames, |f| {
        simulate_frame(cfg, &users, f).map_err(|e| Error::Frame {
            frame: f,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::with_capacity(outcomes.len() * users.len());
    let mut frame_k: Vec<Vec<f64>> = vec![Vec::new(); users.len()];
    for o in &outcomes {
        let keys = keys_from_estimates(cfg, &users, &o.estimates)?;
        for (i, (e, (key, _, _))) in o.estimates.iter().zip(keys).enumerate() {
            if let Some(k) = &key {
                frame_k[i].push(k.k_bits_per_symbol);
            }
            frames.push(FrameRow {
                frame: o.frame,
                user: i,
                tau_hat: e.tau_hat,
                xi_x: e.x.xi_hat,
                xi_p: e.p.xi_hat,
                xi_hat: e.xi_hat,
                snr: e.snr,
                snu_x: o.snu[i].0,
                snu_p: o.snu[i].1,
                pilot_snr_db: o.pilot_snr_db[i],
                k_bits_per_symbol: key.as_ref().map(|k| k.k_bits_per_symbol),
                skr_bps: key.as_ref().map(|k| k.skr_bps),
            });
        }
    }

    let mut pooled = Vec::with_capacity(users.len());
    for i in 0..users.len() {
        let mut m = ChannelMoments::default();
        for o in &outcomes {
            m.merge(&o.moments[i]);
        }
        pooled.push(m.estimate(p.v_mod)?);
    }
    let keys = keys_from_estimates(cfg, &users, &pooled)?;

    let mut results = Vec::with_capacity(users.len());
    for (i, (u, (key, beta, snr_bin))) in users.iter().zip(keys).enumerate() {
        let per_frame: Vec<ChannelEstimate> = outcomes.iter().map(|o| o.estimates[i]).collect();
        let spread = excess_noise_statistics(&per_frame)?;
        let xi: Vec<f64> = per_frame.iter().map(|e| e.xi_hat).collect();
        let xi_se = mean_and_std_error(&xi).map_or(f64::NAN, |(_, se)| se);
        let fk = mean_and_std_error(&frame_k[i]);
        let est = pooled[i];
        let model = ChannelModel::heterodyne(u.params);
        let (plob_bits, plob_bps) = plob_pair(u.params.transmittance, p)?;
        results.push(UserResult {
            user: i,
            loss_db: u.loss_db,
            transmittance: u.params.transmittance,
            tau: est.user_params().tau(),
            excess_noise: physical_params(&est).excess_noise,
            snr: est.snr,
            beta,
            snr_bin,
            skr_bps: key.as_ref().map_or(0.0, |k| k.skr_bps),
            key,
            plob_bits,
            plob_bps,
            estimate: Some(UserEstimate {
                pooled: est,
                injected_tau_hat: model.detected_tau(),
                injected_excess_noise: u.params.excess_noise,
                excess_noise: spread,
                xi_std_error: xi_se,
                frame_k_mean: fk.map(|(m, _)| m),
                frame_k_std_error: fk.map(|(_, se)| se),
            }),
        });
    }
    Ok(ResultTable {
        scenario: cfg.name.clone(),
        mode: RunMode::Waveform,
        seed: cfg.seed,
        n_frames: cfg.n_frames,
        frame_symbols: cfg.frame_symbols,
        protocol: *p,
        aggregate: aggregate(&results),
        users: results,
        frames,
    })
}

/// Model key rate against feeder length at the sweep fan-out. Receivers
/// cycle through the scenario's users; losses follow the topology.
pub fn run_sweep(cfg: &ScenarioConfig, exec: Execution) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let s = &cfg.sweep;
    let lengths = s.feeder_lengths()?;
    let template = cfg.resolve_users()?;
    let p = &cfg.protocol;
    let points = parallel::map(exec, &lengths, |&feeder| -> Result<SweepPoint> {
        let topo = NetworkTopology {
            feeder_length_km: feeder,
            attenuation_db_per_km: cfg.topology.attenuation_db_per_km,
            fanout: s.fanout,
            splitter_excess_loss_db: s
                .splitter_excess_loss_db
                .unwrap_or(cfg.topology.splitter_excess_loss_db),
            drop_lengths_km: vec![s.drop_length_km; s.fanout],
        };
        topo.validate()?;
        let loss_db = topo.loss_db(0)?;
        let transmittance = db_to_transmittance(loss_db);
        let users: Vec<ResolvedUser> = (0..s.fanout)
            .map(|i| {
                let mut u = template[i % template.len()];
                u.loss_db = loss_db;
                u.params.transmittance = transmittance;
                u
            })
            .collect();
        let params: Vec<UserChannelParams> = users.iter().map(|u| u.params).collect();
        let gamma = build_ptmp_covariance(p, &params)?;
        let mut skr = 0.0;
        let mut max_k = f64::NEG_INFINITY;
        for (i, u) in users.iter().enumerate() {
            let snr = model_snr(u.params.tau(), u.params.excess_noise, p.v_mod);
            let (beta, _) = choose_beta(cfg, u, snr)?;
            if let Some(k) = key_for(&gamma, i, beta, p)? {
                skr += k.skr_bps;
                max_k = max_k.max(k.k_bits_per_symbol);
            }
        }
        Ok(SweepPoint {
            feeder_km: feeder,
            distance_km: feeder + s.drop_length_km,
            loss_db,
            skr_bps: skr / s.fanout as f64,
            max_k_bits_per_symbol: max_k,
            plob_bits: plob_bound(transmittance)?,
        })
    });
    points.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{UserEntry, UsersSpec};
    use crate::harness::presets::{preset, PRESETS};

    fn single_user(loss_db: f64, xi: f64, beta: f64) -> ScenarioConfig {
        let mut cfg = preset("1x4@15km").unwrap();
        cfg.topology.fanout = 1;
        cfg.topology.drop_lengths_km = vec![0.0];
        cfg.protocol.beta = beta;
        cfg.users = UsersSpec::Explicit {
            entries: vec![UserEntry {
                loss_db: Some(loss_db),
                eta: 1.0,
                excess_noise: Some(xi),
                xi_x: None,
                xi_p: None,
                v_elec: 0.0,
                beta: None,
            }],
            repeat: false,
        };
        cfg
    }

    #[test]
    fn lossless_noiseless_single_user_keeps_all_information() {
        let t = run_model_scenario(&single_user(0.0, 0.0, 1.0), Execution::Sequential).unwrap();
        let k = t.users[0].key.as_ref().unwrap();
        assert!(k.chi_be.abs() < 1e-9);
        assert!((k.k_bits_per_symbol - k.i_ab).abs() < 1e-9);
    }

    #[test]
    fn model_run_is_deterministic_across_execution_modes() {
        let cfg = preset("1x16@6km").unwrap();
        let a = run_model_scenario(&cfg, Execution::Parallel).unwrap();
        let b = run_model_scenario(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 16);
        assert!(a.frames.is_empty());
    }

    #[test]
    fn beta_table_selects_by_snr_class() {
        let mut cfg = preset("1x16@6km").unwrap();
        cfg.use_beta_table = true;
        cfg.beta_table.betas = (0..12).map(|i| 0.90 + 0.001 * i as f64).collect();
        let t = run_model_scenario(&cfg, Execution::Sequential).unwrap();
        for u in &t.users {
            let bin = u.snr_bin.unwrap();
            assert!((u.beta - (0.90 + 0.001 * (bin - 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn low_snr_with_beta_table_yields_no_key() {
        let mut cfg = single_user(25.0, 0.01, 0.92);
        cfg.use_beta_table = true;
        let t = run_model_scenario(&cfg, Execution::Sequential).unwrap();
        assert!(t.users[0].key.is_none());
        assert_eq!(t.users[0].skr_bps, 0.0);
    }

    #[test]
    fn sweep_decreases_and_stays_below_plob() {
        for info in &PRESETS {
            let pts = run_sweep(&info.scenario(), Execution::Parallel).unwrap();
            assert_eq!(pts.len(), 41);
            for w in pts.windows(2) {
                assert!(w[1].distance_km > w[0].distance_km);
                assert!(w[1].skr_bps <= w[0].skr_bps);
            }
            for pt in &pts {
                assert!(pt.skr_bps >= 0.0);
                assert!(pt.max_k_bits_per_symbol < pt.plob_bits);
            }
        }
    }

    #[test]
    fn waveform_run_refuses_model_only_configs() {
        let cfg = preset("1x4@15km").unwrap();
        assert!(matches!(
            run_waveform_scenario(&cfg, Execution::Sequential),
            Err(Error::Config(_))
        ));
    }
}
