//! Design variables, effective channels and the performance metrics built on
//! them: per-user SINR, radar SINR, sum rate and the WMMSE surrogate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, CMat, CVec};
use crate::scenario::{effective_radar_channel, effective_si_channel, effective_user_channel, ChannelSet};

/// A channel realization together with the scalar system parameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ch: ChannelSet,
    /// Receiver noise power `σ_r²`.
    pub noise: f64,
    /// Target reflection variance `σ_t²`.
    pub sigma_t2: f64,
    /// Radar SINR threshold (linear).
    pub gamma_r: f64,
    pub p_bs: f64,
    pub p_user: Vec<f64>,
}

impl Instance {
    pub fn new(s: &Scenario, ch: ChannelSet) -> Self {
        Instance {
            ch,
            noise: s.noise,
            sigma_t2: s.sigma_t2,
            gamma_r: s.gamma_r,
            p_bs: s.p_bs,
            p_user: s.p_user.clone(),
        }
    }

    /// Equivalent instance with unit noise power.
    ///
    /// Every received quantity is scaled by `1/σ_r`, which leaves all SINRs
    /// unchanged while keeping the numbers near unity.
    pub fn normalized(&self) -> Self {
        let s = 1.0 / self.noise.sqrt();
        Instance {
            ch: self.ch.scale_receive(s),
            noise: 1.0,
            ..self.clone()
        }
    }

    pub fn n_tx(&self) -> usize {
        self.ch.n_tx()
    }
    pub fn n_rx(&self) -> usize {
        self.ch.n_rx()
    }
    pub fn n_ris(&self) -> usize {
        self.ch.n_ris()
    }
    pub fn n_users(&self) -> usize {
        self.ch.n_users()
    }
}

/// Optimization variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVariables {
    /// Transmit beamformer, `N_t × N_t`.
    pub w: CMat,
    /// RIS reflection coefficients, unit modulus.
    pub phi: CVec,
    /// User transmit powers.
    pub q: Vec<f64>,
    /// User receive filters, each `N_r`.
    pub u: Vec<CVec>,
    /// Radar receive filter, `N_r`.
    pub u0: CVec,
}

impl DesignVariables {
    pub fn check(&self, inst: &Instance) -> Result<()> {
        let dim = |context, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { context, expected, got })
            }
        };
        dim("beamformer rows", inst.n_tx(), self.w.nrows())?;
        dim("beamformer cols", inst.n_tx(), self.w.ncols())?;
        dim("phase vector", inst.n_ris(), self.phi.len())?;
        dim("user powers", inst.n_users(), self.q.len())?;
        dim("user filters", inst.n_users(), self.u.len())?;
        for u in &self.u {
            dim("user filter length", inst.n_rx(), u.len())?;
        }
        dim("radar filter length", inst.n_rx(), self.u0.len())
    }
}

/// Auxiliary state: WMMSE scalings and weights plus the phase-splitting and
/// ADMM state carried between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxState {
    /// MMSE receiver scalings `β_k`.
    pub beta: Vec<Complex64>,
    /// Rate weights `ω_k > 0`.
    pub omega: Vec<f64>,
    /// Receive-side copy of the phase vector.
    pub psi1: CVec,
    /// Unit-modulus copy of the phase vector.
    pub psi2: CVec,
    pub lambda1: CVec,
    pub lambda2: CVec,
    /// Penalty parameter `ρ`.
    pub rho: f64,
    /// Current consensus threshold `η_k`.
    pub eta_threshold: f64,
    /// ADMM penalty `υ`.
    pub upsilon: f64,
    /// ADMM dual, `N_t²`.
    pub tau: CVec,
}

impl AuxState {
    /// Unit weights, zero scalings, splitting copies equal to `phi`.
    pub fn new(n_users: usize, phi: &CVec, n_tx: usize) -> Self {
        let m = phi.len();
        AuxState {
            beta: vec![Complex64::new(0.0, 0.0); n_users],
            omega: vec![1.0; n_users],
            psi1: phi.clone(),
            psi2: phi.clone(),
            lambda1: CVec::zeros(m),
            lambda2: CVec::zeros(m),
            rho: 1.0,
            eta_threshold: 0.1,
            upsilon: 1.0,
            tau: CVec::zeros(n_tx * n_tx),
        }
    }

    pub fn wmmse(beta: Vec<Complex64>, omega: Vec<f64>, phi: &CVec, n_tx: usize) -> Self {
        AuxState {
            beta,
            omega,
            ..AuxState::new(0, phi, n_tx)
        }
    }
}

/// Effective channels for one RIS configuration.
#[derive(Debug, Clone)]
pub struct Effective {
    /// `h_{U,k}`.
    pub h_u: Vec<CVec>,
    /// Self-interference channel `G`.
    pub g: CMat,
    /// Target channel `H`.
    pub h: CMat,
}

impl Effective {
    pub fn new(ch: &ChannelSet, phi: &CVec) -> Result<Self> {
        Self::split(ch, phi, phi)
    }

    /// Target channel with the receive-side reflection replaced by `psi1`.
    pub fn split(ch: &ChannelSet, phi: &CVec, psi1: &CVec) -> Result<Self> {
        let h_u = (0..ch.n_users())
            .map(|k| effective_user_channel(ch, phi, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Effective {
            h_u,
            g: effective_si_channel(ch, phi)?,
            h: effective_radar_channel(ch, phi, psi1)?,
        })
    }
}

/// Power collected by a receive filter, split by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    /// `|u^H h_{U,i}|²` for every user (before power weighting).
    pub user_gain: Vec<f64>,
    /// `σ_t² ‖u^H H W‖²`.
    pub target: f64,
    /// `‖u^H G W‖²`.
    pub si: f64,
    /// `σ_r² ‖u‖²`.
    pub noise: f64,
}

impl Received {
    pub fn new(inst: &Instance, eff: &Effective, w: &CMat, u: &CVec) -> Self {
        let user_gain = eff.h_u.iter().map(|h| u.dotc(h).norm_sqr()).collect();
        let hw_u = (&eff.h * w).ad_mul(u);
        let gw_u = (&eff.g * w).ad_mul(u);
        Received {
            user_gain,
            target: inst.sigma_t2 * norm_sq(&hw_u),
            si: norm_sq(&gw_u),
            noise: inst.noise * norm_sq(u),
        }
    }

    /// Total received power `Σ q_i |u^H h_i|² + target + SI + noise`.
    pub fn total(&self, q: &[f64]) -> f64 {
        self.user_sum(q) + self.target + self.si + self.noise
    }

    pub fn user_sum(&self, q: &[f64]) -> f64 {
        self.user_gain.iter().zip(q).map(|(g, q)| g * q).sum()
    }
}

/// SINR of user `k` with filter `dv.u[k]`.
pub fn sinr_user_with(inst: &Instance, eff: &Effective, dv: &DesignVariables, k: usize) -> f64 {
    let r = Received::new(inst, eff, &dv.w, &dv.u[k]);
    let signal = dv.q[k] * r.user_gain[k];
    let denom = r.total(&dv.q) - signal;
    if denom <= 0.0 {
        return 0.0;
    }
    signal / denom
}

/// Radar SINR with filter `dv.u0`.
pub fn sinr_radar_with(inst: &Instance, eff: &Effective, dv: &DesignVariables) -> f64 {
    let r = Received::new(inst, eff, &dv.w, &dv.u0);
    let denom = r.user_sum(&dv.q) + r.si + r.noise;
    if denom <= 0.0 {
        return 0.0;
    }
    r.target / denom
}

pub fn sinr_user(inst: &Instance, dv: &DesignVariables, k: usize) -> Result<f64> {
    dv.check(inst)?;
    if dv.u[k].iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroFilter("user"));
    }
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    Ok(sinr_user_with(inst, &eff, dv, k))
}

pub fn sinr_radar(inst: &Instance, dv: &DesignVariables) -> Result<f64> {
    dv.check(inst)?;
    if dv.u0.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::ZeroFilter("radar"));
    }
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    Ok(sinr_radar_with(inst, &eff, dv))
}

pub fn sum_rate_with(inst: &Instance, eff: &Effective, dv: &DesignVariables) -> f64 {
    (0..inst.n_users())
        .map(|k| sinr_user_with(inst, eff, dv, k).ln_1p())
        .sum()
}

/// Uplink sum rate in nats/s/Hz.
pub fn sum_rate(inst: &Instance, dv: &DesignVariables) -> Result<f64> {
    dv.check(inst)?;
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    Ok(sum_rate_with(inst, &eff, dv))
}

/// Mean squared error of user `k` after the scalar equalizer `β`.
pub fn mse_with(inst: &Instance, eff: &Effective, dv: &DesignVariables, beta: Complex64, k: usize) -> f64 {
    let u = &dv.u[k];
    let r = Received::new(inst, eff, &dv.w, u);
    let cross = (beta.conj() * dv.q[k].sqrt() * u.dotc(&eff.h_u[k])).re;
    1.0 - 2.0 * cross + beta.norm_sqr() * r.total(&dv.q)
}

/// `log ω − ω e + 1` summed over users.
pub fn surrogate_rate_with(inst: &Instance, eff: &Effective, dv: &DesignVariables, aux: &AuxState) -> f64 {
    (0..inst.n_users())
        .map(|k| {
            let e = mse_with(inst, eff, dv, aux.beta[k], k);
            aux.omega[k].ln() - aux.omega[k] * e + 1.0
        })
        .sum()
}

pub fn surrogate_rate(inst: &Instance, dv: &DesignVariables, aux: &AuxState) -> Result<f64> {
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    Ok(surrogate_rate_with(inst, &eff, dv, aux))
}

/// Negative surrogate with the receive-side reflection of the target path
/// decoupled as `psi1`; reduces to `-surrogate_rate` when `psi1 == phi`.
pub fn split_objective(inst: &Instance, dv: &DesignVariables, aux: &AuxState, phi: &CVec, psi1: &CVec) -> Result<f64> {
    let eff = Effective::split(&inst.ch, phi, psi1)?;
    Ok(-surrogate_rate_with(inst, &eff, dv, aux))
}

/// Radar constraint in `≤ 0` form:
/// interference + noise − (σ_t²/Γ)·target power.
pub fn radar_constraint_with(inst: &Instance, eff: &Effective, dv: &DesignVariables) -> f64 {
    let r = Received::new(inst, eff, &dv.w, &dv.u0);
    r.user_sum(&dv.q) + r.si + r.noise - r.target / inst.gamma_r
}

pub fn split_radar_constraint(inst: &Instance, dv: &DesignVariables, phi: &CVec, psi1: &CVec) -> Result<f64> {
    let eff = Effective::split(&inst.ch, phi, psi1)?;
    Ok(radar_constraint_with(inst, &eff, dv))
}

/// Per-constraint feasibility of a design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `tr(W W^H) / P_BS`.
    pub bs_power_ratio: f64,
    /// `max_k q_k / P_U,k`.
    pub user_power_ratio: f64,
    /// `max_m ||φ_m| − 1|`.
    pub unit_modulus_error: f64,
    /// `SINR_r / Γ_r`.
    pub radar_ratio: f64,
    pub min_user_power: f64,
}

impl Feasibility {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.bs_power_ratio <= 1.0 + tol
            && self.user_power_ratio <= 1.0 + tol
            && self.unit_modulus_error <= tol
            && self.radar_ratio >= 1.0 - tol
            && self.min_user_power >= -tol
    }
}

pub fn feasibility(inst: &Instance, dv: &DesignVariables) -> Result<Feasibility> {
    dv.check(inst)?;
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let bs_power_ratio = dv.w.norm_squared() / inst.p_bs;
    let user_power_ratio = dv
        .q
        .iter()
        .zip(&inst.p_user)
        .map(|(q, p)| q / p)
        .fold(0.0, f64::max);
    let unit_modulus_error = dv.phi.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    Ok(Feasibility {
        bs_power_ratio,
        user_power_ratio,
        unit_modulus_error,
        radar_ratio: sinr_radar_with(inst, &eff, dv) / inst.gamma_r,
        min_user_power: dv.q.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}
