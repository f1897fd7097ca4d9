//! Named scenarios for the five tested access-network configurations.

use serde::Serialize;

use super::config::{ScenarioConfig, SweepConfig, UserEntry, UsersSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::estimation::{BetaTable, CalibrationConfig};
use crate::rx::DspConfig;
use crate::security::{NetworkTopology, ProtocolParams};
use crate::tx::WaveformConfig;

/// Receivers of the four measured users: `(loss_db, eta, xi_x, xi_p)`.
pub const TESTED_USERS: [(f64, f64, f64, f64); 4] = [
    (15.15, 0.71, 0.031, 0.028),
    (14.95, 0.63, 0.026, 0.020),
    (14.62, 0.63, 0.031, 0.030),
    (15.77, 0.75, 0.028, 0.027),
];

/// Reconciliation efficiencies found for the same four users.
pub const TESTED_BETAS: [f64; 4] = [0.923, 0.926, 0.923, 0.920];

pub const ATTENUATION_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub fanout: usize,
    pub feeder_km: f64,
    pub drop_km: f64,
    pub measured_loss_db: f64,
    /// Reported key rate for the configuration, in bits per second.
    pub reference_skr_bps: f64,
}

pub const PRESETS: [PresetInfo; 5] = [
    PresetInfo {
        name: "1x4@15km",
        fanout: 4,
        feeder_km: 10.0,
        drop_km: 5.0,
        measured_loss_db: 10.9,
        reference_skr_bps: 12.050e6,
    },
    PresetInfo {
        name: "1x4@30km",
        fanout: 4,
        feeder_km: 25.0,
        drop_km: 5.0,
        measured_loss_db: 12.8,
        reference_skr_bps: 4.237e6,
    },
    PresetInfo {
        name: "1x8@6km",
        fanout: 8,
        feeder_km: 5.0,
        drop_km: 1.0,
        measured_loss_db: 11.3,
        reference_skr_bps: 7.440e6,
    },
    PresetInfo {
        name: "1x8@15km",
        fanout: 8,
        feeder_km: 10.0,
        drop_km: 5.0,
        measured_loss_db: 14.2,
        reference_skr_bps: 3.303e6,
    },
    PresetInfo {
        name: "1x16@6km",
        fanout: 16,
        feeder_km: 5.0,
        drop_km: 1.0,
        measured_loss_db: 15.1,
        reference_skr_bps: 2.087e6,
    },
];

pub fn protocol() -> ProtocolParams {
    ProtocolParams {
        v_mod: 4.3,
        beta: 0.92,
        symbol_rate: 1e9,
        pilot_ratio: 0.2,
        duty_cycle: 1.0,
    }
}

fn tested_entries(use_measured_loss: Option<f64>) -> Vec<UserEntry> {
    TESTED_USERS
        .iter()
        .map(|&(loss, eta, xi_x, xi_p)| UserEntry {
            loss_db: Some(use_measured_loss.unwrap_or(loss)),
            eta,
            excess_noise: None,
            xi_x: Some(xi_x),
            xi_p: Some(xi_p),
            v_elec: 0.0,
            beta: None,
        })
        .collect()
}

impl PresetInfo {
    /// Splitter excess loss that reconciles the nominal fiber and split
    /// loss with the measured total.
    pub fn splitter_excess_loss_db(&self) -> f64 {
        let nominal = ATTENUATION_DB_PER_KM * (self.feeder_km + self.drop_km)
            + 10.0 * (self.fanout as f64).log10();
        (self.measured_loss_db - nominal).max(0.0)
    }

    pub fn topology(&self) -> NetworkTopology {
        NetworkTopology {
            feeder_length_km: self.feeder_km,
            attenuation_db_per_km: ATTENUATION_DB_PER_KM,
            fanout: self.fanout,
            splitter_excess_loss_db: self.splitter_excess_loss_db(),
            drop_lengths_km: vec![self.drop_km; self.fanout],
        }
    }

    /// Model-only scenario. The 16-port network carries the four measured
    /// receivers' own losses; smaller networks use the measured total loss
    /// for every port. Ports beyond four repeat the measured receivers.
    pub fn scenario(&self) -> ScenarioConfig {
        let per_user_loss = self.fanout == 16;
        let entries = tested_entries(if per_user_loss {
            None
        } else {
            Some(self.measured_loss_db)
        });
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: self.name.to_string(),
            description: format!(
                "1x{} split, {} km feeder + {} km drop, {} dB measured loss",
                self.fanout, self.feeder_km, self.drop_km, self.measured_loss_db
            ),
            topology: self.topology(),
            protocol: protocol(),
            users: UsersSpec::Explicit {
                entries,
                repeat: true,
            },
            model_only: true,
            seed: 1,
            n_frames: 40,
            frame_symbols: 100_000,
            calibration_symbols: 50_000,
            use_beta_table: false,
            beta_table: BetaTable::default(),
            waveform: WaveformConfig::desk(),
            dsp: DspConfig::desk(),
            calibration: CalibrationConfig::default(),
            sweep: SweepConfig {
                fanout: self.fanout,
                drop_length_km: self.drop_km,
                ..SweepConfig::default()
            },
        }
    }
}

pub fn preset_info(name: &str) -> Result<&'static PresetInfo> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::Config(format!(
            "unknown preset {name:?}; available: {}",
            names.join(", ")
        ))
    })
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    Ok(preset_info(name)?.scenario())
}
