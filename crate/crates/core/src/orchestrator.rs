//! Guarded block coordinate ascent over all design variables.
//!
//! One outer iteration refreshes the WMMSE auxiliaries and then updates the
//! RIS phases, the beamformer, the user powers, the user filters and the
//! radar filter in that order. Every block result is kept only if the true
//! sum rate does not drop and the radar constraint still holds; otherwise
//! the previous value stays in place.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::{optimize_beamformer, BeamformerConfig};
use crate::coeffs::{build_filter_problems, build_power_problem};
use crate::config::{lin_to_db, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::filters::{mmse_filter, update_radar_filter, update_user_filters, update_wmmse_aux};
use crate::linalg::{cr, solve_hpd, CMat, CVec};
use crate::metrics::{feasibility, sinr_radar, sum_rate, AuxState, DesignVariables, Effective, Instance, Received};
use crate::power::{solve_power, PowerCase};
use crate::ris_pdd::{pdd_optimize_phase, PddConfig, PhaseChoice};
use crate::scenario::{ones, radar_rx_factor, radar_tx_factor_t, random_phase, ChannelSet};

/// Absolute sum-rate slack (bits/s/Hz) tolerated by the block guards.
pub const RATE_SLACK: f64 = 1e-8;
/// Relative slack on the radar SINR threshold.
pub const RADAR_SLACK: f64 = 1e-8;
/// Relative slack on the power budgets.
const POWER_SLACK: f64 = 1e-9;
/// Salt separating the phase-initialization stream from channel draws.
const PHASE_STREAM: u64 = 0x5eed_0f_9a5e;

/// Which variables the run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every block, RIS phases included.
    Full,
    /// RIS links removed; phases play no role.
    NoRis,
    /// RIS phases fixed to a seeded random vector.
    RndRis,
}

impl Mode {
    pub fn optimizes_phase(self) -> bool {
        self == Mode::Full
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::NoRis => "noris",
            Mode::RndRis => "rndris",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Mode::Full),
            "noris" => Ok(Mode::NoRis),
            "rndris" => Ok(Mode::RndRis),
            other => Err(Error::Config {
                field: "mode".into(),
                reason: format!("unknown mode '{other}', expected full, noris or rndris"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    /// Seed of the initial phase draw.
    pub seed: u64,
    /// Relative sum-rate change ending the run.
    pub stop_tol: f64,
    pub max_outer: usize,
    /// Alternations allowed when the initial point misses the radar threshold.
    pub max_restore: usize,
    /// Seeded phase draws tried before the radar threshold is declared
    /// unreachable. Ignored without a surface.
    pub phase_draws: usize,
    /// Radar-SINR alternations always run at initialization, enlarging the
    /// radar budget available to the users.
    pub init_radar_steps: usize,
    /// Fraction of the radar budget given to the initial user powers.
    pub init_power_fraction: f64,
    pub radar_filter_tol: f64,
    pub radar_filter_iters: usize,
    pub power_tol: f64,
    /// Refresh-and-solve passes of the power block per iteration.
    pub power_passes: usize,
    pub pdd: PddConfig,
    pub beamformer: BeamformerConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: Mode::Full,
            seed: 0,
            stop_tol: 1e-4,
            max_outer: 50,
            max_restore: 50,
            phase_draws: 8,
            init_radar_steps: 50,
            init_power_fraction: 0.95,
            radar_filter_tol: 1e-10,
            radar_filter_iters: 200,
            power_tol: 1e-12,
            power_passes: 1,
            pdd: PddConfig {
                inner_tol: 1e-4,
                ..PddConfig::default()
            },
            beamformer: BeamformerConfig::default(),
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.into(),
                reason,
            })
        };
        if !(self.stop_tol > 0.0) {
            return bad("stop_tol", format!("must be positive, got {}", self.stop_tol));
        }
        if self.max_outer == 0 {
            return bad("max_outer", "must be at least 1".into());
        }
        if !(self.beamformer.admm.upsilon > 0.0) {
            return bad("admm.upsilon", format!("must be positive, got {}", self.beamformer.admm.upsilon));
        }
        self.pdd.validate()
    }
}

/// Why the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxOuter,
}

/// Relative slack of every constraint; all are non-negative when feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `1 − ‖W‖²/P_BS`.
    pub bs_power: f64,
    /// `1 − max_k q_k/P_U,k`.
    pub user_power: f64,
    /// `SINR_r/Γ_r − 1`.
    pub radar: f64,
    /// `−max_m ||φ_m| − 1|`.
    pub unit_modulus: f64,
}

impl Margins {
    pub fn evaluate(inst: &Instance, dv: &DesignVariables) -> Result<Self> {
        let f = feasibility(inst, dv)?;
        Ok(Margins {
            bs_power: 1.0 - f.bs_power_ratio,
            user_power: if f.min_user_power < 0.0 { f.min_user_power } else { 1.0 - f.user_power_ratio },
            radar: f.radar_ratio - 1.0,
            unit_modulus: -f.unit_modulus_error,
        })
    }

    /// Every constraint holds up to relative tolerance `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.bs_power >= -tol && self.user_power >= -tol && self.radar >= -tol && self.unit_modulus >= -tol
    }
}

/// Wall time per block in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockTiming {
    pub wmmse_ms: f64,
    pub phase_ms: f64,
    pub beamformer_ms: f64,
    pub power_ms: f64,
    pub user_filter_ms: f64,
    pub radar_filter_ms: f64,
}

/// Whether each block's result was kept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub phase: bool,
    pub beamformer: bool,
    pub power: bool,
    pub user_filters: bool,
    pub radar_filter: bool,
}

/// Sum rate (bits/s/Hz) after each block of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockRates {
    pub phase: f64,
    pub beamformer: f64,
    pub power: f64,
    pub user_filters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Sum rate in bits/s/Hz after the iteration.
    pub sum_rate: f64,
    pub sinr_radar_db: f64,
    pub margins: Margins,
    pub timing: BlockTiming,
    pub accepted: Accepted,
    /// Sum rate after each block, in block order.
    pub block_rates: BlockRates,
    pub pdd_outer_iters: usize,
    pub mm_iters: usize,
    pub admm_iters: usize,
    pub power_case: Option<PowerCase>,
    pub phase_choice: Option<PhaseChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: Mode,
    pub config: Option<ScenarioConfig>,
    pub options: RunOptions,
    /// Sum rate (bits/s/Hz) at the feasible starting point.
    pub initial_sum_rate: f64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub final_sum_rate: f64,
    pub final_sinr_radar_db: f64,
    pub final_margins: Margins,
    pub final_dv: DesignVariables,
    pub warnings: Vec<String>,
    pub wall_ms: f64,
}

impl RunReport {
    /// Rate after every iteration, preceded by the initial rate.
    pub fn rate_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial_sum_rate)
            .chain(self.records.iter().map(|r| r.sum_rate))
            .collect()
    }

    /// Largest drop between consecutive entries of the rate sequence.
    pub fn max_rate_drop(&self) -> f64 {
        self.rate_sequence()
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

/// Normalized instance for a run in `mode`.
pub fn prepare_instance(s: &Scenario, ch: &ChannelSet, mode: Mode) -> Instance {
    let ch = match mode {
        Mode::NoRis => ch.without_ris(),
        Mode::Full | Mode::RndRis => ch.clone(),
    };
    Instance::new(s, ch).normalized()
}

fn bits(inst: &Instance, dv: &DesignVariables) -> Result<f64> {
    Ok(sum_rate(inst, dv)? / std::f64::consts::LN_2)
}

fn radar_ok(inst: &Instance, dv: &DesignVariables) -> Result<bool> {
    Ok(sinr_radar(inst, dv)? >= inst.gamma_r * (1.0 - RADAR_SLACK))
}

/// Radar-SINR-maximizing single-stream beamformer at full power for a
/// fixed radar filter: `w ∝ (G^H u0 u0^H G + (σ²‖u0‖²/P) I)⁻¹ H^H u0`.
fn radar_beamformer(inst: &Instance, eff: &Effective, u0: &CVec) -> Result<CMat> {
    let nt = inst.n_tx();
    let gu = eff.g.ad_mul(u0);
    let hu = eff.h.ad_mul(u0);
    let reg = inst.noise * u0.norm_squared() / inst.p_bs;
    let a = &gu * gu.adjoint() + CMat::identity(nt, nt) * cr(reg);
    let w = solve_hpd(&a, &hu, "radar beamformer system")?;
    Ok(single_column(&w, nt, inst.p_bs))
}

/// `N_t × N_t` matrix with `√P · w/‖w‖` as first column.
fn single_column(w: &CVec, nt: usize, p: f64) -> CMat {
    let mut out = CMat::zeros(nt, nt);
    let n = w.norm();
    if n > 0.0 {
        out.set_column(0, &(w * cr(p.sqrt() / n)));
    }
    out
}

fn refresh_radar_filter(inst: &Instance, dv: &mut DesignVariables, aux: &AuxState, opts: &RunOptions) -> Result<()> {
    let fp = build_filter_problems(inst, dv, aux)?;
    dv.u0 = update_radar_filter(&fp, &dv.u0, opts.radar_filter_tol, opts.radar_filter_iters)?;
    Ok(())
}

/// Zero-power starting point: seeded phases (all ones without RIS), the
/// full-power matched beam toward the target as first beamformer column and
/// the optimized radar filter.
pub fn matched_start(inst: &Instance, mode: Mode, seed: u64, draw: usize, opts: &RunOptions) -> Result<DesignVariables> {
    let (nt, nr, k_users, m) = (inst.n_tx(), inst.n_rx(), inst.n_users(), inst.n_ris());
    let phi = match mode {
        Mode::NoRis => ones(m),
        Mode::Full | Mode::RndRis => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PHASE_STREAM);
            let mut phi = random_phase(m, &mut rng);
            for _ in 0..draw {
                phi = random_phase(m, &mut rng);
            }
            phi
        }
    };
    let tx = radar_tx_factor_t(&inst.ch, &phi);
    if tx.norm() == 0.0 {
        return Err(Error::Infeasible("target is unreachable from the transmit array".into()));
    }
    let mut dv = DesignVariables {
        w: single_column(&tx.map(|z| z.conj()), nt, inst.p_bs),
        u0: radar_rx_factor(&inst.ch, &phi),
        phi,
        q: vec![0.0; k_users],
        u: vec![CVec::from_element(nr, Complex64::new(1.0, 0.0)); k_users],
    };
    if dv.u0.norm() == 0.0 {
        return Err(Error::Infeasible("target echo cannot reach the receive array".into()));
    }
    let aux = AuxState::new(k_users, &dv.phi, nt);
    refresh_radar_filter(inst, &mut dv, &aux, opts)?;
    Ok(dv)
}

/// Alternate the radar filter and the radar-optimal beam until the radar
/// threshold holds. Returns the number of alternations used.
pub fn restore_radar(inst: &Instance, dv: &mut DesignVariables, opts: &RunOptions) -> Result<usize> {
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let aux = AuxState::new(inst.n_users(), &dv.phi, inst.n_tx());
    let mut restores = 0;
    while !radar_ok(inst, dv)? {
        if restores == opts.max_restore {
            let sinr = sinr_radar(inst, dv)?;
            return Err(Error::Infeasible(format!(
                "radar SINR margin {:.3} dB (SINR {:.3} dB against threshold {:.3} dB) after {restores} restoration steps",
                lin_to_db(sinr) - lin_to_db(inst.gamma_r),
                lin_to_db(sinr),
                lin_to_db(inst.gamma_r)
            )));
        }
        dv.w = radar_beamformer(inst, &eff, &dv.u0)?;
        refresh_radar_filter(inst, dv, &aux, opts)?;
        restores += 1;
    }
    Ok(restores)
}

/// Feasible starting point.
///
/// Starts from [`matched_start`] with all user powers zero and restores the
/// radar threshold if needed. Each user then receives a positive power seed
/// using at most half of the remaining radar budget, since zero power is a
/// fixed point of the rate-weighted updates. User filters start at MMSE.
pub fn init_feasible(inst: &Instance, mode: Mode, seed: u64, opts: &RunOptions) -> Result<DesignVariables> {
    let k_users = inst.n_users();
    let draws = if mode == Mode::NoRis { 1 } else { opts.phase_draws.max(1) };
    let mut found = None;
    for draw in 0..draws {
        let mut dv = matched_start(inst, mode, seed, draw, opts)?;
        match restore_radar(inst, &mut dv, opts) {
            Ok(_) => {
                found = Some(Ok(dv));
                break;
            }
            Err(e) => {
                log::debug!("phase draw {draw} rejected: {e}");
                if found.is_none() {
                    found = Some(Err(e));
                }
            }
        }
    }
    let mut dv = found.expect("at least one draw")?;
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    {
        let aux = AuxState::new(k_users, &dv.phi, inst.n_tx());
        for _ in 0..opts.init_radar_steps {
            dv.w = radar_beamformer(inst, &eff, &dv.u0)?;
            refresh_radar_filter(inst, &mut dv, &aux, opts)?;
        }
    }
    let r0 = Received::new(inst, &eff, &dv.w, &dv.u0);
    let budget = (r0.target / inst.gamma_r - r0.si - r0.noise).max(0.0);
    for k in 0..k_users {
        let d = r0.user_gain[k];
        let cap = if d > 0.0 {
            opts.init_power_fraction * budget / (k_users as f64 * d)
        } else {
            f64::INFINITY
        };
        dv.q[k] = inst.p_user[k].min(cap);
    }
    let aux = AuxState::new(k_users, &dv.phi, inst.n_tx());
    let fp = build_filter_problems(inst, &dv, &aux)?;
    dv.u = (0..k_users).map(|k| mmse_filter(&fp, k)).collect::<Result<_>>()?;
    refresh_radar_filter(inst, &mut dv, &aux, opts)?;
    if !radar_ok(inst, &dv)? {
        return Err(Error::Infeasible("radar threshold lost after seeding user powers".into()));
    }
    Ok(dv)
}

/// Block guard state: the current rate and the last logged rate.
struct Guard {
    rate: f64,
    floor: f64,
}

impl Guard {
    /// Rate of `cand` if it may replace the current point.
    fn admit(&self, inst: &Instance, cand: &DesignVariables) -> Option<f64> {
        let f = feasibility(inst, cand).ok()?;
        let feasible = f.bs_power_ratio <= 1.0 + POWER_SLACK
            && f.user_power_ratio <= 1.0 + POWER_SLACK
            && f.min_user_power >= 0.0
            && f.unit_modulus_error <= POWER_SLACK
            && f.radar_ratio >= 1.0 - RADAR_SLACK;
        let rate = bits(inst, cand).ok()?;
        (feasible && rate.is_finite() && rate >= self.rate - RATE_SLACK && rate >= self.floor - RATE_SLACK).then_some(rate)
    }

    fn offer(&mut self, inst: &Instance, dv: &mut DesignVariables, cand: DesignVariables) -> bool {
        match self.admit(inst, &cand) {
            Some(rate) => {
                *dv = cand;
                self.rate = rate;
                true
            }
            None => false,
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Run the guarded block ascent from a feasible point.
pub fn run_from(inst: &Instance, dv0: DesignVariables, opts: &RunOptions) -> Result<RunReport> {
    opts.validate()?;
    let start = Instant::now();
    let mut dv = dv0;
    dv.check(inst)?;
    if !radar_ok(inst, &dv)? {
        return Err(Error::Infeasible("starting point misses the radar threshold".into()));
    }
    let mut aux = AuxState::new(inst.n_users(), &dv.phi, inst.n_tx());
    aux.upsilon = opts.beamformer.admm.upsilon;
    let initial = bits(inst, &dv)?;
    let mut guard = Guard {
        rate: initial,
        floor: initial,
    };
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut termination = Termination::MaxOuter;
    for iter in 1..=opts.max_outer {
        let prev = guard.floor;
        let mut timing = BlockTiming::default();
        let mut accepted = Accepted::default();
        let mut block_rates = BlockRates::default();
        let mut rec_extra = (0, 0, 0, None, None);

        let refresh = |dv: &DesignVariables, aux: &mut AuxState, timing: &mut BlockTiming| -> Result<()> {
            let t = Instant::now();
            update_wmmse_aux(inst, dv, aux)?;
            timing.wmmse_ms += ms(t);
            Ok(())
        };

        if opts.mode.optimizes_phase() {
            refresh(&dv, &mut aux, &mut timing)?;
            let t = Instant::now();
            match pdd_optimize_phase(inst, &dv, &mut aux, &opts.pdd) {
                Ok(up) => {
                    rec_extra.0 = up.pdd.outer_iters;
                    rec_extra.4 = Some(up.choice);
                    warnings.extend(up.pdd.warnings.iter().map(|w| format!("iter {iter} phase: {w}")));
                    if up.choice != PhaseChoice::Previous {
                        let mut cand = dv.clone();
                        cand.phi = up.phi;
                        accepted.phase = guard.offer(inst, &mut dv, cand);
                    }
                }
                Err(e) => warnings.push(format!("iter {iter} phase: {e}")),
            }
            timing.phase_ms = ms(t);
        }
        block_rates.phase = guard.rate;

        refresh(&dv, &mut aux, &mut timing)?;
        let t = Instant::now();
        match optimize_beamformer(inst, &dv, &mut aux, &opts.beamformer) {
            Ok(out) => {
                rec_extra.1 = out.mm_iters;
                rec_extra.2 = out.admm_iters;
                warnings.extend(out.warnings.iter().map(|w| format!("iter {iter} beamformer: {w}")));
                if out.mm_iters > 0 {
                    let mut cand = dv.clone();
                    cand.w = out.w;
                    accepted.beamformer = guard.offer(inst, &mut dv, cand);
                }
            }
            Err(e) => warnings.push(format!("iter {iter} beamformer: {e}")),
        }
        timing.beamformer_ms = ms(t);
        block_rates.beamformer = guard.rate;

        let t = Instant::now();
        for pass in 0..opts.power_passes.max(1) {
            refresh(&dv, &mut aux, &mut timing)?;
            let before = guard.rate;
            match build_power_problem(inst, &dv, &aux).and_then(|pd| solve_power(&pd, opts.power_tol)) {
                Ok(sol) => {
                    rec_extra.3 = Some(sol.case);
                    let mut cand = dv.clone();
                    cand.q = sol.q;
                    let kept = guard.offer(inst, &mut dv, cand);
                    accepted.power |= kept;
                    if !kept || guard.rate - before <= opts.stop_tol * before.abs() * 1e-2 {
                        break;
                    }
                }
                Err(e) => {
                    warnings.push(format!("iter {iter} power pass {pass}: {e}"));
                    break;
                }
            }
        }
        timing.power_ms = ms(t);
        block_rates.power = guard.rate;

        refresh(&dv, &mut aux, &mut timing)?;
        let t = Instant::now();
        match build_filter_problems(inst, &dv, &aux).and_then(|fp| update_user_filters(&fp)) {
            Ok(u) => {
                let mut cand = dv.clone();
                cand.u = u;
                accepted.user_filters = guard.offer(inst, &mut dv, cand);
            }
            Err(e) => warnings.push(format!("iter {iter} user filters: {e}")),
        }
        timing.user_filter_ms = ms(t);
        block_rates.user_filters = guard.rate;

        let t = Instant::now();
        let mut cand = dv.clone();
        match refresh_radar_filter(inst, &mut cand, &aux, opts) {
            Ok(()) => {
                let better = sinr_radar(inst, &cand)? >= sinr_radar(inst, &dv)?;
                accepted.radar_filter = better && guard.offer(inst, &mut dv, cand);
            }
            Err(e) => warnings.push(format!("iter {iter} radar filter: {e}")),
        }
        timing.radar_filter_ms = ms(t);

        let rate = guard.rate;
        guard.floor = rate;
        let sinr = sinr_radar(inst, &dv)?;
        let (pdd_outer_iters, mm_iters, admm_iters, power_case, phase_choice) = rec_extra;
        records.push(IterationRecord {
            iter,
            sum_rate: rate,
            sinr_radar_db: lin_to_db(sinr),
            margins: Margins::evaluate(inst, &dv)?,
            timing,
            accepted,
            block_rates,
            pdd_outer_iters,
            mm_iters,
            admm_iters,
            power_case,
            phase_choice,
        });
        log::debug!("iter {iter}: sum rate {rate:.6} bits/s/Hz, radar SINR {:.3} dB", lin_to_db(sinr));
        let rel = (rate - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        if rel < opts.stop_tol {
            termination = Termination::Converged;
            break;
        }
    }
    let final_sinr = sinr_radar(inst, &dv)?;
    Ok(RunReport {
        seed: opts.seed,
        mode: opts.mode,
        config: None,
        options: *opts,
        initial_sum_rate: initial,
        iterations: records.len(),
        final_sum_rate: guard.rate,
        final_sinr_radar_db: lin_to_db(final_sinr),
        final_margins: Margins::evaluate(inst, &dv)?,
        records,
        termination,
        final_dv: dv,
        warnings,
        wall_ms: ms(start),
    })
}

/// Feasible initialization followed by the guarded block ascent.
pub fn run(s: &Scenario, ch: &ChannelSet, opts: &RunOptions) -> Result<RunReport> {
    let inst = prepare_instance(s, ch, opts.mode);
    let dv = init_feasible(&inst, opts.mode, opts.seed, opts)?;
    let mut report = run_from(&inst, dv, opts)?;
    report.config = Some(s.cfg.clone());
    Ok(report)
}
