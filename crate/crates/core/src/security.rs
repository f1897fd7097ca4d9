//! Point-to-multipoint covariance model and the per-user key rate
//! `K_N = β I(A:B_N) − max{ max_{i≠N} I(B_N:B_i), χ_{B_N E} }` in reverse
//! reconciliation.
//!
//! Mode 0 of every network covariance matrix is Alice's EB mode; user `i`
//! (0-based) lives in mode `i + 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    heterodyne_condition, scalar_gaussian_mutual_info, von_neumann_entropy, CovarianceMatrix,
};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Alice's per-quadrature modulation variance `V_A` (SNU).
    pub v_mod: f64,
    /// Reconciliation efficiency β.
    pub beta: f64,
    /// Symbols per second.
    pub symbol_rate: f64,
    /// Fraction of symbols spent on pilots.
    pub pilot_ratio: f64,
    /// Fraction of time carrying key-bearing frames.
    #[serde(default = "default_duty_cycle")]
    pub duty_cycle: f64,
}

fn default_duty_cycle() -> f64 {
    1.0
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_mod >= 0.0 && self.v_mod.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "v_mod must be >= 0, got {}",
                self.v_mod
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "symbol_rate must be positive, got {}",
                self.symbol_rate
            )));
        }
        if !(0.0..1.0).contains(&self.pilot_ratio) {
            return Err(Error::InvalidParameter(format!(
                "pilot_ratio must lie in [0, 1), got {}",
                self.pilot_ratio
            )));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "duty_cycle must lie in (0, 1], got {}",
                self.duty_cycle
            )));
        }
        Ok(())
    }

    /// EB-mode variance `V = V_A + 1`.
    pub fn v(&self) -> f64 {
        self.v_mod + 1.0
    }

    /// Source-replacement scale `k = √(2(V−1)/(V+1))` mapping EB heterodyne
    /// outcomes on mode A to PM modulation data.
    pub fn k(&self) -> f64 {
        let v = self.v();
        (2.0 * (v - 1.0) / (v + 1.0)).sqrt()
    }

    /// Key-bearing symbols per second.
    pub fn effective_symbol_rate(&self) -> f64 {
        self.symbol_rate * (1.0 - self.pilot_ratio) * self.duty_cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserChannelParams {
    /// Channel power transmittance `T`.
    pub transmittance: f64,
    /// Excess noise ξ referred to the channel input (SNU).
    pub excess_noise: f64,
    /// Trusted detector efficiency η.
    pub eta: f64,
    /// Electronic noise (SNU of shot noise), folded into untrusted loss.
    #[serde(default)]
    pub v_elec: f64,
}

impl UserChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.transmittance > 0.0 && self.transmittance <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "transmittance must lie in (0, 1], got {}",
                self.transmittance
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if !(self.v_elec >= 0.0 && self.v_elec.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "v_elec must be >= 0, got {}",
                self.v_elec
            )));
        }
        if !self.excess_noise.is_finite() {
            return Err(Error::InvalidParameter("excess noise is not finite".into()));
        }
        Ok(())
    }

    /// One-time calibration: `η_eff = η / (1 + v_el)`.
    pub fn eta_eff(&self) -> f64 {
        self.eta / (1.0 + self.v_elec)
    }

    /// Effective transmittance `τ = T · η_eff`.
    pub fn tau(&self) -> f64 {
        self.transmittance * self.eta_eff()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub feeder_length_km: f64,
    pub attenuation_db_per_km: f64,
    pub fanout: usize,
    pub splitter_excess_loss_db: f64,
    pub drop_lengths_km: Vec<f64>,
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<()> {
        if self.fanout == 0 {
            return Err(Error::InvalidParameter("fan-out must be >= 1".into()));
        }
        if self.drop_lengths_km.len() != self.fanout {
            return Err(Error::InvalidParameter(format!(
                "{} drop lengths for fan-out {}",
                self.drop_lengths_km.len(),
                self.fanout
            )));
        }
        let lengths_ok = self.feeder_length_km >= 0.0
            && self.drop_lengths_km.iter().all(|&l| l >= 0.0)
            && self.attenuation_db_per_km >= 0.0
            && self.splitter_excess_loss_db >= 0.0;
        if !lengths_ok {
            return Err(Error::InvalidParameter(
                "lengths, attenuation and excess loss must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Total link loss in dB seen by `user`.
    pub fn loss_db(&self, user: usize) -> Result<f64> {
        let drop = *self
            .drop_lengths_km
            .get(user)
            .ok_or(Error::IndexOutOfRange {
                index: user,
                len: self.drop_lengths_km.len(),
            })?;
        Ok(self.attenuation_db_per_km * (self.feeder_length_km + drop)
            + 10.0 * (self.fanout as f64).log10()
            + self.splitter_excess_loss_db)
    }
}

pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// `T = 10^(−(α(L_feeder + L_drop) + 10 log10 N + excess)/10)`.
pub fn channel_transmittance(topology: &NetworkTopology, user: usize) -> Result<f64> {
    topology.validate()?;
    Ok(db_to_transmittance(topology.loss_db(user)?))
}

/// Network covariance matrix of Alice's EB mode and all users' received modes.
pub fn build_ptmp_covariance(
    p: &ProtocolParams,
    users: &[UserChannelParams],
) -> Result<CovarianceMatrix> {
    p.validate()?;
    if users.is_empty() {
        return Err(Error::InvalidParameter("at least one user required".into()));
    }
    for u in users {
        u.validate()?;
    }
    let v = p.v();
    let modes = users.len() + 1;
    let mut g = DMatrix::<f64>::zeros(2 * modes, 2 * modes);
    g[(0, 0)] = v;
    g[(1, 1)] = v;
    let taus: Vec<f64> = users.iter().map(UserChannelParams::tau).collect();
    for (i, u) in users.iter().enumerate() {
        let b = 2 * (i + 1);
        let tau = taus[i];
        let diag = tau * (v - 1.0) + 1.0 + tau * u.excess_noise;
        g[(b, b)] = diag;
        g[(b + 1, b + 1)] = diag;
        let c = (tau * (v * v - 1.0)).sqrt();
        g[(0, b)] = c;
        g[(b, 0)] = c;
        g[(1, b + 1)] = -c;
        g[(b + 1, 1)] = -c;
        for (j, &tau_j) in taus.iter().enumerate().skip(i + 1) {
            let bj = 2 * (j + 1);
            let s = (tau * tau_j).sqrt() * (v - 1.0);
            for q in 0..2 {
                g[(b + q, bj + q)] = s;
                g[(bj + q, b + q)] = s;
            }
        }
    }
    CovarianceMatrix::new(g)
}

fn user_mode(gamma: &CovarianceMatrix, user: usize) -> Result<usize> {
    let users = gamma.modes().saturating_sub(1);
    if user >= users {
        return Err(Error::IndexOutOfRange {
            index: user,
            len: users,
        });
    }
    Ok(user + 1)
}

/// Heterodyne mutual information between Alice's data and Bob `user`,
/// both quadratures summed.
pub fn mutual_info_alice_bob(gamma: &CovarianceMatrix, user: usize) -> Result<f64> {
    let b = 2 * user_mode(gamma, user)?;
    (0..2)
        .map(|q| {
            let v_a = gamma.get(q, q);
            let v_b = gamma.get(b + q, b + q);
            let c = gamma.get(q, b + q);
            let measured = 0.5 * (v_b + 1.0);
            let conditional = 0.5 * (v_b + 1.0 - c * c / (v_a + 1.0));
            scalar_gaussian_mutual_info(measured, conditional)
        })
        .sum()
}

/// Eve's Holevo information on Bob `user`'s heterodyne outcomes.
///
/// Eve is granted the purification of the Alice–Bob marginal, i.e. she is
/// also credited with every other user's mode. See
/// [`holevo_bound_joint`] for the variant where she only purifies the whole
/// network state.
pub fn holevo_bound(gamma: &CovarianceMatrix, user: usize) -> Result<f64> {
    let mode = user_mode(gamma, user)?;
    let marginal = gamma.reduced(&[0, mode])?;
    holevo_on(&marginal, 1)
}

/// Holevo information when Eve holds only the purification of the full
/// `A B_1 … B_N` state; the other users' modes stay with the trusted parties.
pub fn holevo_bound_joint(gamma: &CovarianceMatrix, user: usize) -> Result<f64> {
    let mode = user_mode(gamma, user)?;
    holevo_on(gamma, mode)
}

fn holevo_on(gamma: &CovarianceMatrix, mode: usize) -> Result<f64> {
    let s_e = von_neumann_entropy(gamma)?;
    let s_e_given_b = von_neumann_entropy(&heterodyne_condition(gamma, mode)?)?;
    Ok((s_e - s_e_given_b).max(0.0))
}

/// Classical mutual information between the heterodyne outcomes of users
/// `i` and `j`, summed over x and p.
pub fn inter_user_mutual_info(gamma: &CovarianceMatrix, i: usize, j: usize) -> Result<f64> {
    let bi = 2 * user_mode(gamma, i)?;
    let bj = 2 * user_mode(gamma, j)?;
    if i == j {
        return Err(Error::InvalidParameter(
            "inter-user information needs two distinct users".into(),
        ));
    }
    Ok((0..2)
        .map(|q| {
            heterodyne_pair_info(
                gamma.get(bi + q, bi + q),
                gamma.get(bj + q, bj + q),
                gamma.get(bi + q, bj + q),
            )
        })
        .sum())
}

/// Mutual information of one quadrature pair measured by heterodyne on two
/// modes with variances `vi`, `vj` and covariance `c`.
fn heterodyne_pair_info(vi: f64, vj: f64, c: f64) -> f64 {
    let rho2 = (c * c / ((vi + 1.0) * (vj + 1.0))).min(1.0 - f64::EPSILON);
    -0.5 * (1.0 - rho2).log2()
}

/// Which term of the outer max limited the key rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingTerm {
    Holevo,
    InterUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserKeyRate {
    pub user: usize,
    pub i_ab: f64,
    pub chi_be: f64,
    pub max_inter_bob: f64,
    /// Raw `K_N` in bits per symbol; may be negative.
    pub k_bits_per_symbol: f64,
    /// `max(0, K_N)` times the effective symbol rate.
    pub skr_bps: f64,
    pub limiting: LimitingTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityResult {
    pub users: Vec<UserKeyRate>,
}

impl SecurityResult {
    pub fn mean_skr_bps(&self) -> f64 {
        if self.users.is_empty() {
            return 0.0;
        }
        self.users.iter().map(|u| u.skr_bps).sum::<f64>() / self.users.len() as f64
    }
}

pub fn secret_key_rate(
    gamma: &CovarianceMatrix,
    user: usize,
    p: &ProtocolParams,
) -> Result<UserKeyRate> {
    p.validate()?;
    let users = gamma.modes() - 1;
    let i_ab = mutual_info_alice_bob(gamma, user)?;
    let chi_be = holevo_bound(gamma, user)?;
    let mut max_inter_bob = 0.0f64;
    for other in (0..users).filter(|&o| o != user) {
        max_inter_bob = max_inter_bob.max(inter_user_mutual_info(gamma, user, other)?);
    }
    Ok(assemble_key(user, i_ab, chi_be, max_inter_bob, p))
}

fn assemble_key(
    user: usize,
    i_ab: f64,
    chi_be: f64,
    max_inter_bob: f64,
    p: &ProtocolParams,
) -> UserKeyRate {
    let (leak, limiting) = if max_inter_bob > chi_be {
        (max_inter_bob, LimitingTerm::InterUser)
    } else {
        (chi_be, LimitingTerm::Holevo)
    };
    let k = p.beta * i_ab - leak;
    UserKeyRate {
        user,
        i_ab,
        chi_be,
        max_inter_bob,
        k_bits_per_symbol: k,
        skr_bps: k.max(0.0) * p.effective_symbol_rate(),
        limiting,
    }
}

/// Key rates for every user of the network, evaluated independently.
pub fn evaluate_network(
    gamma: &CovarianceMatrix,
    p: &ProtocolParams,
    exec: Execution,
) -> Result<SecurityResult> {
    let users: Vec<usize> = (0..gamma.modes().saturating_sub(1)).collect();
    let users = parallel::map(exec, &users, |&u| secret_key_rate(gamma, u, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SecurityResult { users })
}

/// Repeaterless secret-key capacity `−log2(1 − T)` in bits per channel use.
pub fn plob_bound(transmittance: f64) -> Result<f64> {
    if transmittance >= 1.0 {
        return Err(Error::Unbounded(format!(
            "PLOB bound diverges at T = {transmittance}"
        )));
    }
    if !(transmittance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "transmittance must be positive, got {transmittance}"
        )));
    }
    Ok(-(1.0 - transmittance).log2())
}
