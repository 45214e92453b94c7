//! RIS phase update by penalty dual decomposition.
//!
//! The unit-modulus vector `φ` is split into copies `ψ1` (the receive side
//! of the target path) and `ψ2` (carrying the unit-modulus constraint). The
//! inner loop runs block coordinate descent on the augmented Lagrangian
//!
//! `f(φ, ψ1)/κ + Σ_i Re{λ_i^H(φ − ψ_i)} + (1/2ρ) Σ_i ‖φ − ψ_i‖²`
//!
//! subject to the radar constraint, where `κ` normalizes the objective
//! curvature. The outer loop either takes a dual step or shrinks `ρ`.

use serde::{Deserialize, Serialize};

use crate::coeffs::{P5CoeffSet, P7CoeffSet, PhaseTerms, PhiStep, Psi1Step};
use crate::error::{Error, Result};
use crate::linalg::{cr, inf_norm, norm_sq, unit_modulus, CMat, CVec};
use crate::metrics::{sinr_radar, sum_rate, AuxState, DesignVariables, Instance};
use crate::qcqp::PreparedQcqp;

/// Root tolerance for the subproblem solves.
const SUBPROBLEM_TOL: f64 = 1e-12;
/// Power-iteration steps for the objective curvature estimate.
const CURVATURE_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PddConfig {
    pub rho0: f64,
    pub penalty_shrink_c: f64,
    pub eta0: f64,
    pub eta_decay: f64,
    /// Relative change of the augmented Lagrangian ending the inner loop.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Consensus residual `max_i ‖φ − ψ_i‖₂` ending the outer loop.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    /// Resume from the splitting state of the previous phase update instead
    /// of zero duals and `ρ0`.
    pub warm_start: bool,
}

impl Default for PddConfig {
    fn default() -> Self {
        PddConfig {
            rho0: 1.0,
            penalty_shrink_c: 0.85,
            eta0: 0.1,
            eta_decay: 0.7,
            inner_tol: 1e-6,
            inner_max_iters: 50,
            outer_tol: 1e-6,
            outer_max_iters: 120,
            warm_start: false,
        }
    }
}

impl PddConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: format!("pdd.{field}"),
                reason,
            })
        };
        if !(self.rho0 > 0.0) {
            return bad("rho0", format!("must be positive, got {}", self.rho0));
        }
        if !(self.penalty_shrink_c > 0.0 && self.penalty_shrink_c < 1.0) {
            return bad("penalty_shrink_c", format!("must lie in (0, 1), got {}", self.penalty_shrink_c));
        }
        if !(self.eta0 > 0.0) {
            return bad("eta0", format!("must be positive, got {}", self.eta0));
        }
        if !(self.eta_decay > 0.0 && self.eta_decay < 1.0) {
            return bad("eta_decay", format!("must lie in (0, 1), got {}", self.eta_decay));
        }
        Ok(())
    }
}

/// Primal copies, duals and penalty of the splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PddState {
    pub phi: CVec,
    pub psi1: CVec,
    pub psi2: CVec,
    pub lambda1: CVec,
    pub lambda2: CVec,
    pub rho: f64,
    pub eta: f64,
}

impl PddState {
    /// Copies equal to `phi`, zero duals.
    /// State carried in `aux` with `φ` replaced, or `None` when it does not
    /// match the problem size or holds no usable penalty.
    pub fn from_aux(phi: &CVec, aux: &AuxState) -> Option<Self> {
        let m = phi.len();
        let sizes_match = [&aux.psi1, &aux.psi2, &aux.lambda1, &aux.lambda2].iter().all(|v| v.len() == m);
        (sizes_match && aux.rho > 0.0 && aux.eta_threshold > 0.0).then(|| PddState {
            phi: phi.clone(),
            psi1: aux.psi1.clone(),
            psi2: aux.psi2.clone(),
            lambda1: aux.lambda1.clone(),
            lambda2: aux.lambda2.clone(),
            rho: aux.rho,
            eta: aux.eta_threshold,
        })
    }

    pub fn new(phi: &CVec, cfg: &PddConfig) -> Self {
        let m = phi.len();
        PddState {
            phi: phi.clone(),
            psi1: phi.clone(),
            psi2: phi.clone(),
            lambda1: CVec::zeros(m),
            lambda2: CVec::zeros(m),
            rho: cfg.rho0,
            eta: cfg.eta0,
        }
    }

    /// `(‖φ − ψ1‖_∞, ‖φ − ψ2‖_∞)`.
    pub fn residual_inf(&self) -> (f64, f64) {
        (inf_norm(&(&self.phi - &self.psi1)), inf_norm(&(&self.phi - &self.psi2)))
    }

    /// `(‖φ − ψ1‖₂, ‖φ − ψ2‖₂)`.
    pub fn residual_2(&self) -> (f64, f64) {
        ((&self.phi - &self.psi1).norm(), (&self.phi - &self.psi2).norm())
    }
}

/// Power-iteration estimate of the largest eigenvalue of the objective's
/// `φ`-curvature at `ψ1`, used to normalize the objective.
pub fn objective_scale(terms: &PhaseTerms, psi1: &CVec) -> f64 {
    let m = terms.n_ris();
    let weight: f64 = (0..terms.ct.len()).map(|k| terms.ct[k] * terms.s_user(k, psi1).norm_sqr()).sum();
    let t = &terms.t10 + &terms.bbt * cr(weight);
    let mut x = CVec::from_element(m, cr(1.0 / (m as f64).sqrt()));
    let mut lam = 0.0;
    for _ in 0..CURVATURE_ITERS {
        let y = &t * &x;
        let n = y.norm();
        if n == 0.0 {
            break;
        }
        lam = n;
        x = y / cr(n);
    }
    if lam > 0.0 && lam.is_finite() {
        lam
    } else {
        1.0
    }
}

/// Augmented Lagrangian value at `st`.
pub fn augmented_lagrangian(terms: &PhaseTerms, st: &PddState, scale: f64) -> f64 {
    let r1 = &st.phi - &st.psi1;
    let r2 = &st.phi - &st.psi2;
    terms.objective(&st.phi, &st.psi1) / scale
        + st.lambda1.dotc(&r1).re
        + st.lambda2.dotc(&r2).re
        + (norm_sq(&r1) + norm_sq(&r2)) / (2.0 * st.rho)
}

/// `φ`-step: objective `T̂1/κ + I/ρ`, radar constraint linearized at the
/// anchor stored in `c5`.
pub fn update_phi(c5: &P5CoeffSet, st: &PddState, scale: f64) -> Result<CVec> {
    let m = st.phi.len();
    let q = &c5.t1_hat / cr(scale) + CMat::identity(m, m) * cr(1.0 / st.rho);
    let lin = &c5.t1_lin_hat / cr(scale) - (&st.lambda1 + &st.lambda2) * cr(0.5)
        + (&st.psi1 + &st.psi2) * cr(0.5 / st.rho);
    let sol = PreparedQcqp::new(&q, &c5.t0_factor)?.solve(&lin, &c5.t0_lin_acute, c5.c2_acute, SUBPROBLEM_TOL)?;
    Ok(sol.x)
}

/// `ψ1`-step: objective `T110/κ + I/2ρ` with the affine radar constraint.
pub fn update_psi1(c7: &P7CoeffSet, st: &PddState, scale: f64) -> Result<CVec> {
    let m = st.phi.len();
    let q = &c7.t110 / cr(scale) + CMat::identity(m, m) * cr(0.5 / st.rho);
    let lin = &c7.t14 / cr(scale) + &st.lambda1 * cr(0.5) + &st.phi * cr(0.5 / st.rho);
    let sol = PreparedQcqp::new(&q, &CMat::zeros(m, 0))?.solve(&lin, &c7.t04_tilde, c7.c2_grave, SUBPROBLEM_TOL)?;
    Ok(sol.x)
}

/// Prepared solver for `αI + U U^H`, dense when `U` is not thin.
fn prepare_low_rank(alpha: f64, u: &CMat, cons_factor: &CMat) -> Result<PreparedQcqp> {
    let m = u.nrows();
    if 2 * u.ncols() < m {
        PreparedQcqp::identity_plus_low_rank(alpha, u, cons_factor)
    } else {
        let q = CMat::identity(m, m) * cr(alpha) + u * u.adjoint();
        PreparedQcqp::new(&q, cons_factor)
    }
}

/// [`update_phi`] from the factored coefficients of [`PhaseTerms::phi_step`].
pub fn update_phi_lean(terms: &PhaseTerms, step: &PhiStep, st: &PddState, scale: f64) -> Result<CVec> {
    let m = st.phi.len();
    let r10 = terms.t10_factor.ncols();
    let nb = terms.b.ncols();
    let mut u = CMat::zeros(m, r10 + nb);
    u.columns_mut(0, r10).copy_from(&(&terms.t10_factor / cr(scale.sqrt())));
    u.columns_mut(r10, nb)
        .copy_from(&(terms.b.map(|z| z.conj()) * cr((step.weight / scale).sqrt())));
    let lin = &step.lin / cr(scale) - (&st.lambda1 + &st.lambda2) * cr(0.5) + (&st.psi1 + &st.psi2) * cr(0.5 / st.rho);
    let prep = prepare_low_rank(1.0 / st.rho, &u, &terms.t0_factor)?;
    Ok(prep.solve(&lin, &step.cons_lin, step.cons_scalar, SUBPROBLEM_TOL)?.x)
}

/// [`update_psi1`] from the vectors of [`PhaseTerms::psi1_step`].
pub fn update_psi1_lean(terms: &PhaseTerms, step: &Psi1Step, st: &PddState, scale: f64) -> Result<CVec> {
    let m = st.phi.len();
    let k_users = terms.ct.len();
    let mut u = CMat::zeros(m, k_users);
    for k in 0..k_users {
        let w = (terms.ct[k] * step.z_norm_sq / scale).max(0.0).sqrt();
        u.set_column(k, &(&terms.b2[k] * cr(w)));
    }
    let lin = &step.lin / cr(scale) + &st.lambda1 * cr(0.5) + &st.phi * cr(0.5 / st.rho);
    let prep = prepare_low_rank(0.5 / st.rho, &u, &CMat::zeros(m, 0))?;
    Ok(prep.solve(&lin, &step.cons_lin, step.cons_scalar, SUBPROBLEM_TOL)?.x)
}

/// `ψ2 = exp(j∠(φ + ρλ2))`.
pub fn update_psi2(phi: &CVec, lambda2: &CVec, rho: f64) -> CVec {
    unit_modulus(&(phi + lambda2 * cr(rho)))
}

/// Dual ascent when the consensus residual is below `η`, otherwise a
/// stronger penalty. Returns whether the dual step was taken.
pub fn pdd_outer_step(st: &mut PddState, cfg: &PddConfig) -> bool {
    let (r1, r2) = st.residual_inf();
    if r1.max(r2) <= st.eta {
        st.lambda1 += (&st.phi - &st.psi1) / cr(st.rho);
        st.lambda2 += (&st.phi - &st.psi2) / cr(st.rho);
        st.eta *= cfg.eta_decay;
        true
    } else {
        st.rho *= cfg.penalty_shrink_c;
        false
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PddTraceRow {
    pub outer: usize,
    pub inner_iters: usize,
    pub residual1_inf: f64,
    pub residual2_inf: f64,
    pub augmented_lagrangian: f64,
    pub rho: f64,
    pub eta: f64,
    pub dual_step: bool,
}

#[derive(Debug, Clone)]
pub struct PddOutcome {
    pub state: PddState,
    pub outer_iters: usize,
    pub converged: bool,
    /// Inner-loop augmented Lagrangian increases beyond rounding; expected
    /// to stay zero.
    pub al_increases: usize,
    pub warnings: Vec<String>,
    pub trace: Vec<PddTraceRow>,
}

/// Run the two-layer PDD loop from `phi0` on fixed phase terms.
pub fn pdd_solve(terms: &PhaseTerms, phi0: &CVec, cfg: &PddConfig) -> Result<PddOutcome> {
    pdd_solve_from(terms, PddState::new(phi0, cfg), cfg)
}

/// Run the two-layer PDD loop from an explicit splitting state.
pub fn pdd_solve_from(terms: &PhaseTerms, start: PddState, cfg: &PddConfig) -> Result<PddOutcome> {
    cfg.validate()?;
    let mut st = start;
    let scale = objective_scale(terms, &st.phi);
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut al_increases = 0;
    let mut converged = false;
    let mut outer_iters = 0;
    for outer in 0..cfg.outer_max_iters {
        outer_iters = outer + 1;
        let mut al = augmented_lagrangian(terms, &st, scale);
        let mut inner_iters = 0;
        for _ in 0..cfg.inner_max_iters {
            inner_iters += 1;
            let al_start = al;
            // MM anchors refresh at the latest feasible iterate.
            let step = terms.phi_step(&st.psi1, &st.phi);
            match update_phi_lean(terms, &step, &st, scale) {
                Ok(phi) => st.phi = phi,
                Err(e) => warnings.push(format!("outer {outer}: phi step kept previous iterate ({e})")),
            }
            let step = terms.psi1_step(&st.phi, &st.psi1);
            match update_psi1_lean(terms, &step, &st, scale) {
                Ok(psi1) => st.psi1 = psi1,
                Err(e) => warnings.push(format!("outer {outer}: psi1 step kept previous iterate ({e})")),
            }
            st.psi2 = update_psi2(&st.phi, &st.lambda2, st.rho);
            al = augmented_lagrangian(terms, &st, scale);
            if al > al_start + 1e-9 * al_start.abs().max(1.0) {
                al_increases += 1;
            }
            if (al_start - al).abs() <= cfg.inner_tol * al_start.abs().max(1.0) {
                break;
            }
        }
        let (r1, r2) = st.residual_inf();
        let (n1, n2) = st.residual_2();
        let done = n1.max(n2) <= cfg.outer_tol;
        let dual_step = if done { false } else { pdd_outer_step(&mut st, cfg) };
        log::trace!("pdd outer {outer}: inner {inner_iters} residuals {r1:.3e} {r2:.3e} al {al:.6e} rho {:.3e}", st.rho);
        trace.push(PddTraceRow {
            outer,
            inner_iters,
            residual1_inf: r1,
            residual2_inf: r2,
            augmented_lagrangian: al,
            rho: st.rho,
            eta: st.eta,
            dual_step,
        });
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("PDD stopped after {outer_iters} outer iterations without reaching consensus"));
    }
    Ok(PddOutcome {
        state: st,
        outer_iters,
        converged,
        al_increases,
        warnings,
        trace,
    })
}

/// Which candidate the acceptance test kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseChoice {
    /// Unit-modulus copy `ψ2`.
    Psi2,
    /// `φ` projected onto the unit circle.
    ProjectedPhi,
    /// Neither improved the sum rate feasibly; previous phases kept.
    Previous,
}

#[derive(Debug, Clone)]
pub struct PhaseUpdate {
    pub phi: CVec,
    pub choice: PhaseChoice,
    /// Step toward the chosen candidate (1 is the candidate itself).
    pub step: f64,
    pub rate_before: f64,
    pub rate_after: f64,
    pub pdd: PddOutcome,
}

/// Steps tried between the previous phases and each candidate.
const ACCEPT_STEPS: [f64; 8] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125];

/// Full phase update: PDD on the current design, then a unit-modulus
/// candidate accepted only if it keeps the radar constraint and does not
/// lower the true sum rate.
///
/// Candidates are `ψ2` and the projection of `φ`, each also tried along the
/// unit-circle path `exp(j∠(φ_prev + t(cand − φ_prev)))` for shrinking `t`.
/// The PDD state is written back into `aux`.
pub fn pdd_optimize_phase(inst: &Instance, dv: &DesignVariables, aux: &mut AuxState, cfg: &PddConfig) -> Result<PhaseUpdate> {
    let terms = PhaseTerms::new(inst, dv, aux)?;
    let start = match cfg.warm_start {
        true => PddState::from_aux(&dv.phi, aux).unwrap_or_else(|| PddState::new(&dv.phi, cfg)),
        false => PddState::new(&dv.phi, cfg),
    };
    let pdd = pdd_solve_from(&terms, start, cfg)?;
    let rate_before = sum_rate(inst, dv)?;
    let radar_floor = inst.gamma_r * (1.0 - 1e-8);
    let mut best: Option<(f64, CVec, PhaseChoice, f64)> = None;
    let mut trial = dv.clone();
    for (choice, cand) in [
        (PhaseChoice::Psi2, pdd.state.psi2.clone()),
        (PhaseChoice::ProjectedPhi, unit_modulus(&pdd.state.phi)),
    ] {
        for t in ACCEPT_STEPS {
            trial.phi = unit_modulus(&(&dv.phi + (&cand - &dv.phi) * cr(t)));
            let (Ok(rate), Ok(sinr)) = (sum_rate(inst, &trial), sinr_radar(inst, &trial)) else {
                continue;
            };
            if sinr >= radar_floor && rate >= rate_before && best.as_ref().map_or(true, |b| rate > b.0) {
                best = Some((rate, trial.phi.clone(), choice, t));
            }
            if best.as_ref().is_some_and(|b| b.2 == choice) {
                // Longest admissible step along this path found.
                break;
            }
        }
    }
    let (rate_after, phi, choice, step) = best.unwrap_or((rate_before, dv.phi.clone(), PhaseChoice::Previous, 0.0));
    let st = &pdd.state;
    aux.psi1 = st.psi1.clone();
    aux.psi2 = st.psi2.clone();
    aux.lambda1 = st.lambda1.clone();
    aux.lambda2 = st.lambda2.clone();
    aux.rho = st.rho;
    aux.eta_threshold = st.eta;
    Ok(PhaseUpdate {
        phi,
        choice,
        step,
        rate_before,
        rate_after,
        pdd,
    })
}
