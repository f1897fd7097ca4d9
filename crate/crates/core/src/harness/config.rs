//! Scenario configuration, read from versioned TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{BetaTable, CalibrationConfig};
use crate::rx::DspConfig;
use crate::security::{db_to_transmittance, NetworkTopology, ProtocolParams, UserChannelParams};
use crate::tx::WaveformConfig;

pub const SCHEMA_VERSION: u32 = 1;

fn default_n_frames() -> usize {
    40
}

fn default_frame_symbols() -> usize {
    100_000
}

fn default_calibration_symbols() -> usize {
    50_000
}

/// One receiver's channel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    /// Measured link loss; derived from the topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_db: Option<f64>,
    pub eta: f64,
    /// Excess noise used for the key rate; defaults to the mean of
    /// `xi_x` and `xi_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excess_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_p: Option<f64>,
    #[serde(default)]
    pub v_elec: f64,
    /// Per-user reconciliation efficiency, overriding the protocol value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl UserEntry {
    pub fn excess_noise(&self) -> Result<f64> {
        match (self.excess_noise, self.xi_x, self.xi_p) {
            (Some(xi), _, _) => Ok(xi),
            (None, Some(x), Some(p)) => Ok((x + p) / 2.0),
            _ => Err(Error::Config(
                "user needs excess_noise or both xi_x and xi_p".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum UsersSpec {
    /// Listed users; with `repeat` the list is cycled up to the fan-out.
    Explicit {
        entries: Vec<UserEntry>,
        #[serde(default)]
        repeat: bool,
    },
    /// Every user gets the same receiver and its topology-derived loss.
    Topology {
        eta: f64,
        excess_noise: f64,
        #[serde(default)]
        v_elec: f64,
    },
}

/// Feeder-length sweep at fixed fan-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fanout: usize,
    pub feeder_start_km: f64,
    pub feeder_stop_km: f64,
    pub points: usize,
    pub drop_length_km: f64,
    /// Defaults to the scenario topology's excess loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splitter_excess_loss_db: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fanout: 4,
            feeder_start_km: 0.0,
            feeder_stop_km: 40.0,
            points: 41,
            drop_length_km: 5.0,
            splitter_excess_loss_db: None,
        }
    }
}

impl SweepConfig {
    pub fn feeder_lengths(&self) -> Result<Vec<f64>> {
        if self.points == 0 || self.fanout == 0 {
            return Err(Error::Config(
                "sweep needs points >= 1 and fanout >= 1".into(),
            ));
        }
        if !(self.feeder_stop_km >= self.feeder_start_km && self.feeder_start_km >= 0.0) {
            return Err(Error::Config(format!(
                "sweep range {}..{} km is invalid",
                self.feeder_start_km, self.feeder_stop_km
            )));
        }
        if self.points == 1 {
            return Ok(vec![self.feeder_start_km]);
        }
        let step = (self.feeder_stop_km - self.feeder_start_km) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| self.feeder_start_km + step * i as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: NetworkTopology,
    pub protocol: ProtocolParams,
    pub users: UsersSpec,
    /// Skip the waveform simulation and evaluate the covariance model.
    #[serde(default)]
    pub model_only: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_frames")]
    pub n_frames: usize,
    /// Quantum symbols per frame.
    #[serde(default = "default_frame_symbols")]
    pub frame_symbols: usize,
    /// Gated symbols appended to each frame for shot-noise calibration.
    #[serde(default = "default_calibration_symbols")]
    pub calibration_symbols: usize,
    /// Pick β from the SNR class instead of the protocol value.
    #[serde(default)]
    pub use_beta_table: bool,
    #[serde(default)]
    pub beta_table: BetaTable,
    #[serde(default = "WaveformConfig::desk")]
    pub waveform: WaveformConfig,
    #[serde(default = "DspConfig::desk")]
    pub dsp: DspConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// A user's resolved channel and the β used for its key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedUser {
    pub loss_db: f64,
    pub params: UserChannelParams,
    pub xi_x: f64,
    pub xi_p: f64,
    pub beta: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.topology.validate()?;
        self.protocol.validate()?;
        if self.n_frames == 0 || self.frame_symbols == 0 {
            return Err(Error::Config(
                "n_frames and frame_symbols must be >= 1".into(),
            ));
        }
        if let UsersSpec::Explicit { entries, repeat } = &self.users {
            if entries.is_empty() {
                return Err(Error::Config("explicit user list is empty".into()));
            }
            if !repeat && entries.len() != self.topology.fanout {
                return Err(Error::Config(format!(
                    "{} users listed for fan-out {}",
                    entries.len(),
                    self.topology.fanout
                )));
            }
            if entries.len() > self.topology.fanout {
                return Err(Error::Config(format!(
                    "{} users listed for fan-out {}",
                    entries.len(),
                    self.topology.fanout
                )));
            }
        }
        self.resolve_users()?;
        if !self.model_only {
            self.waveform.validate()?;
            self.dsp.validate(&self.waveform)?;
        }
        Ok(())
    }

    /// Per-user channel parameters, one per splitter port.
    pub fn resolve_users(&self) -> Result<Vec<ResolvedUser>> {
        let n = self.topology.fanout;
        (0..n)
            .map(|i| {
                let topo_loss = self.topology.loss_db(i)?;
                let (loss_db, eta, xi, xi_x, xi_p, v_elec, beta) = match &self.users {
                    UsersSpec::Explicit { entries, .. } => {
                        let e = &entries[i % entries.len()];
                        let xi = e.excess_noise()?;
                        (
                            e.loss_db.unwrap_or(topo_loss),
                            e.eta,
                            xi,
                            e.xi_x.unwrap_or(xi),
                            e.xi_p.unwrap_or(xi),
                            e.v_elec,
                            e.beta,
                        )
                    }
                    UsersSpec::Topology {
                        eta,
                        excess_noise,
                        v_elec,
                    } => (
                        topo_loss,
                        *eta,
                        *excess_noise,
                        *excess_noise,
                        *excess_noise,
                        *v_elec,
                        None,
                    ),
                };
                if !(loss_db >= 0.0) {
                    return Err(Error::Config(format!("user {i}: loss must be >= 0 dB")));
                }
                if let Some(b) = beta {
                    if !(b > 0.0 && b <= 1.0) {
                        return Err(Error::Config(format!("user {i}: beta {b} outside (0, 1]")));
                    }
                }
                let params = UserChannelParams {
                    transmittance: db_to_transmittance(loss_db),
                    excess_noise: xi,
                    eta,
                    v_elec,
                };
                params
                    .validate()
                    .map_err(|e| Error::Config(format!("user {i}: {e}")))?;
                Ok(ResolvedUser {
                    loss_db,
                    params,
                    xi_x,
                    xi_p,
                    beta,
                })
            })
            .collect()
    }
}
