//! Beamformer update: MM over the linearized radar constraint, each
//! surrogate solved by consensus ADMM over `(w, f, τ)`.

use serde::{Deserialize, Serialize};

use crate::coeffs::{build_w_problem, WProblemData};
use crate::error::{Error, Result};
use crate::linalg::{cr, hermitian_eigen, kron_eye, lambda_max, norm_sq, quad_form, unvec, vec_of, CMat, CVec};
use crate::metrics::{AuxState, DesignVariables, Instance};
use crate::qcqp::PreparedQcqp;

/// Root tolerance handed to the closed-form subproblem solvers.
const SUBPROBLEM_TOL: f64 = 1e-12;
/// Relative slack on the linearized radar constraint when arbitrating.
const CONSTRAINT_SLACK: f64 = 1e-10;
/// Eigenvalue floor of the whitening preconditioner, relative to `λmax`.
const WHITENING_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub upsilon: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iters: usize,
    pub precondition: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            upsilon: 1.0,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iters: 200,
            precondition: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MmConfig {
    /// Stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            rel_tol: 1e-6,
            max_iters: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct BeamformerConfig {
    pub admm: AdmmConfig,
    pub mm: MmConfig,
}

/// Linearized beamformer problem in solver coordinates `w = (I ⊗ P) y`:
/// `min y^H D1 y` s.t. the power budget `‖(I ⊗ P) y‖² ≤ P_BS` and
/// `y^H D2 y − 2Re{d3^H y} + ĉ4 ≤ 0`.
///
/// With preconditioning, `P` whitens the per-column objective block and
/// scales the anchor to unit norm, and both quadratic coefficients are
/// rescaled to unit spectral norm. Without it `P = I` and the data is used
/// as given, so the power constraint is the plain ball.
#[derive(Debug, Clone)]
pub struct AdmmProblem {
    pub n_tx: usize,
    /// Per-column change of variables `P` and its inverse.
    pub precond: CMat,
    pub precond_inv: CMat,
    pub d1: CMat,
    pub d2: CMat,
    /// `D2 = F F^H` with `F = I ⊗ (P^H G^H u0)`.
    pub d2_factor: CMat,
    pub d3: CVec,
    pub c4: f64,
    pub c4_hat: f64,
    /// Power constraint `y^H (I ⊗ P^H P) y ≤ P_BS` through `F = I ⊗ P^H`.
    pub power_factor: CMat,
    pub p_bs: f64,
}

/// Rank-one factor `g` of a PSD block `g g^H`, up to a phase.
fn rank_one_factor(block: &CMat) -> CVec {
    let n = block.nrows();
    let (j, djj) = (0..n)
        .map(|j| (j, block[(j, j)].re))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if djj <= 0.0 {
        return CVec::zeros(n);
    }
    block.column(j) / cr(djj.sqrt())
}

/// Apply a per-column block `B` to `vec(W)`, giving `vec(B W)`.
fn apply_block(b: &CMat, v: &CVec) -> CVec {
    let n = b.ncols();
    vec_of(&(b * unvec(v, n, v.len() / n)))
}

/// Whitening block for `D1` with a relative eigenvalue floor.
fn whitening_block(d1_block: &CMat) -> (CMat, CMat) {
    let n = d1_block.nrows();
    let eig = hermitian_eigen(d1_block);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return (CMat::identity(n, n), CMat::identity(n, n));
    }
    let floor = WHITENING_FLOOR * lmax;
    let v = &eig.eigenvectors;
    let mut p = v.clone();
    let mut p_inv = v.adjoint();
    for i in 0..n {
        let l = eig.eigenvalues[i].max(0.0) + floor;
        p.column_mut(i).scale_mut(1.0 / l.sqrt());
        p_inv.row_mut(i).scale_mut(l.sqrt());
    }
    (p, p_inv)
}

impl AdmmProblem {
    pub fn new(wp: &WProblemData, p_bs: f64, precondition: bool) -> Self {
        let nt = wp.n_tx;
        let (mut p, mut p_inv) = if precondition {
            whitening_block(&wp.d1_block)
        } else {
            (CMat::identity(nt, nt), CMat::identity(nt, nt))
        };
        if precondition {
            // Unit-norm anchor in solver coordinates, so absolute ADMM
            // tolerances are relative to the anchor.
            let y0 = apply_block(&p_inv, &wp.w0).norm();
            let c = if y0 > 0.0 { y0 } else { p_bs.sqrt() };
            p *= cr(c);
            p_inv /= cr(c);
        }
        let d1_block = p.adjoint() * &wp.d1_block * &p;
        let g = p.adjoint() * rank_one_factor(&wp.d2_block);
        let (alpha, gamma) = if precondition {
            let l1 = lambda_max(&d1_block);
            let l2 = g.norm_squared();
            let alpha = if l1 > 0.0 { 1.0 / l1 } else { 1.0 };
            let gamma = if l2 > 0.0 {
                1.0 / l2
            } else {
                let m = apply_block(&p.adjoint(), &wp.d3).norm().max(wp.c4_hat.abs());
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            };
            (alpha, gamma)
        } else {
            (1.0, 1.0)
        };
        let g = g * cr(gamma.sqrt());
        let d2_block = &g * g.adjoint();
        let g = CMat::from_column_slice(nt, 1, g.as_slice());
        AdmmProblem {
            n_tx: nt,
            d1: kron_eye(nt, &(d1_block * cr(alpha))),
            d2: kron_eye(nt, &d2_block),
            d2_factor: kron_eye(nt, &g),
            d3: apply_block(&p.adjoint(), &wp.d3) * cr(gamma),
            c4: gamma * wp.c4,
            c4_hat: gamma * wp.c4_hat,
            power_factor: kron_eye(nt, &p.adjoint()),
            p_bs,
            precond: p,
            precond_inv: p_inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.d3.len()
    }

    pub fn to_original(&self, y: &CVec) -> CVec {
        apply_block(&self.precond, y)
    }

    pub fn from_original(&self, w: &CVec) -> CVec {
        apply_block(&self.precond_inv, w)
    }

    pub fn objective(&self, y: &CVec) -> f64 {
        quad_form(&self.d1, y)
    }

    pub fn constraint(&self, y: &CVec) -> f64 {
        quad_form(&self.d2, y) - 2.0 * self.d3.dotc(y).re + self.c4_hat
    }

    pub fn power(&self, y: &CVec) -> f64 {
        norm_sq(&self.to_original(y))
    }

    /// Both constraints hold: the power budget to rounding, the radar
    /// surrogate to a relative slack of its interference-plus-noise part.
    pub fn is_feasible(&self, y: &CVec) -> bool {
        let rest = quad_form(&self.d2, y) + self.c4;
        self.power(y) <= self.p_bs * (1.0 + 1e-12) && self.constraint(y) <= CONSTRAINT_SLACK * rest.abs()
    }
}

/// Cached `f`-step: projection onto the radar surrogate set.
#[derive(Debug, Clone)]
pub struct FStep {
    qcqp: PreparedQcqp,
    d3: CVec,
    c4_hat: f64,
    upsilon: f64,
}

impl FStep {
    pub fn new(ap: &AdmmProblem, upsilon: f64) -> Result<Self> {
        let n = ap.dim();
        Ok(FStep {
            qcqp: PreparedQcqp::new(&CMat::identity(n, n), &ap.d2_factor)?,
            d3: ap.d3.clone(),
            c4_hat: ap.c4_hat,
            upsilon,
        })
    }

    /// Projection of `d1 = w + τ/υ`.
    pub fn solve(&self, w: &CVec, tau: &CVec) -> Result<CVec> {
        let d1 = w + tau / cr(self.upsilon);
        Ok(self.qcqp.solve(&d1, &self.d3, self.c4_hat, SUBPROBLEM_TOL)?.x)
    }
}

/// `f`-step: `min ‖f − d1‖²` over the radar surrogate set, `d1 = w + τ/υ`.
pub fn update_f(ap: &AdmmProblem, w: &CVec, tau: &CVec, upsilon: f64) -> Result<CVec> {
    FStep::new(ap, upsilon)?.solve(w, tau)
}

/// Cached `w`-step for a fixed penalty.
#[derive(Debug, Clone)]
pub struct WStep {
    qcqp: PreparedQcqp,
    upsilon: f64,
    p_bs: f64,
}

impl WStep {
    /// Factor `D̄1 = D1 + (υ/2) I` once.
    pub fn new(ap: &AdmmProblem, upsilon: f64) -> Result<Self> {
        let n = ap.dim();
        let d_bar = &ap.d1 + CMat::identity(n, n) * cr(0.5 * upsilon);
        Ok(WStep {
            qcqp: PreparedQcqp::new(&d_bar, &ap.power_factor)?,
            upsilon,
            p_bs: ap.p_bs,
        })
    }

    /// Power-constrained minimizer with `d̄1 = (υ f − τ)/2`.
    pub fn solve(&self, f: &CVec, tau: &CVec) -> Result<CVec> {
        let d_bar1 = (f * cr(self.upsilon) - tau) * cr(0.5);
        let zero = CVec::zeros(d_bar1.len());
        Ok(self.qcqp.solve(&d_bar1, &zero, -self.p_bs, SUBPROBLEM_TOL)?.x)
    }
}

/// `w`-step: `min w^H D̄1 w − 2Re{d̄1^H w}` over the power budget.
pub fn update_w(ap: &AdmmProblem, f: &CVec, tau: &CVec, upsilon: f64) -> Result<CVec> {
    WStep::new(ap, upsilon)?.solve(f, tau)
}

/// Dual ascent `τ + υ(w − f)`.
pub fn update_tau(tau: &CVec, w: &CVec, f: &CVec, upsilon: f64) -> CVec {
    tau + (w - f) * cr(upsilon)
}

/// Augmented Lagrangian `w^H D1 w + Re{τ^H(w − f)} + (υ/2)‖w − f‖²`.
pub fn augmented_lagrangian(ap: &AdmmProblem, w: &CVec, f: &CVec, tau: &CVec, upsilon: f64) -> f64 {
    let r = w - f;
    ap.objective(w) + tau.dotc(&r).re + 0.5 * upsilon * norm_sq(&r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmTraceRow {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Returned beamformer in original units.
    pub w: CVec,
    /// Final dual in solver units.
    pub tau: CVec,
    pub iters: usize,
    pub converged: bool,
    /// Set when no arbitrated iterate was feasible and an earlier one was
    /// returned instead.
    pub fallback: bool,
    pub trace: Vec<AdmmTraceRow>,
}

/// Largest step from a feasible `x0` toward `x` that keeps both constraints.
fn feasible_segment(ap: &AdmmProblem, x0: &CVec, x: &CVec) -> Option<CVec> {
    if !ap.is_feasible(x0) {
        return None;
    }
    let point = |t: f64| x0 + (x - x0) * cr(t);
    let (mut lo, mut hi) = (0.0, 1.0);
    if ap.is_feasible(&point(1.0)) {
        return Some(point(1.0));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ap.is_feasible(&point(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(point(lo))
}

/// Pick the returned copy: `w` when it also meets the radar surrogate,
/// else `f` pulled into the power ball, else the feasible point nearest
/// to `f` on the segment from the anchor.
fn arbitrate(ap: &AdmmProblem, x0: &CVec, w: &CVec, f: &CVec) -> Option<CVec> {
    if ap.is_feasible(w) {
        return Some(w.clone());
    }
    let nf = ap.power(f);
    let scaled = if nf > ap.p_bs { f * cr((ap.p_bs / nf).sqrt()) } else { f.clone() };
    if ap.is_feasible(&scaled) {
        return Some(scaled);
    }
    feasible_segment(ap, x0, f)
}

/// Consensus ADMM on the linearized beamformer problem, started at `w_init`
/// (original units) with `τ = 0`.
pub fn admm_solve(wp: &WProblemData, w_init: &CVec, p_bs: f64, cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    if cfg.upsilon <= 0.0 {
        return Err(Error::Config {
            field: "admm.upsilon".into(),
            reason: format!("must be positive, got {}", cfg.upsilon),
        });
    }
    let ap = AdmmProblem::new(wp, p_bs, cfg.precondition);
    let ups = cfg.upsilon;
    let x0 = ap.from_original(w_init);
    let fstep = FStep::new(&ap, ups)?;
    let wstep = WStep::new(&ap, ups)?;
    let mut x = x0.clone();
    let mut f = x0.clone();
    let mut tau = CVec::zeros(ap.dim());
    let mut best: Option<(f64, CVec)> = ap.is_feasible(&x0).then(|| (ap.objective(&x0), x0.clone()));
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    for t in 1..=cfg.max_iters {
        iters = t;
        let f_new = fstep.solve(&x, &tau)?;
        x = wstep.solve(&f_new, &tau)?;
        tau = update_tau(&tau, &x, &f_new, ups);
        let primal = (&x - &f_new).norm();
        let dual = (&f_new - &f).norm();
        f = f_new;
        let objective = ap.objective(&x);
        log::trace!("admm iter {t}: primal {primal:.3e} dual {dual:.3e} objective {objective:.6e}");
        trace.push(AdmmTraceRow {
            iter: t,
            primal,
            dual,
            objective,
        });
        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            converged = true;
            break;
        }
        if let Some(c) = arbitrate(&ap, &x0, &x, &f) {
            let o = ap.objective(&c);
            if best.as_ref().map_or(true, |(b, _)| o < *b) {
                best = Some((o, c));
            }
        }
    }
    let (out, fallback) = match arbitrate(&ap, &x0, &x, &f) {
        Some(c) if converged => (c, false),
        other => {
            // Not converged, or the final copies are unusable: keep the best
            // feasible iterate seen so far.
            let cand = other.map(|c| (ap.objective(&c), c));
            let pick = match (cand, best) {
                (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
                (a, b) => a.or(b),
            };
            match pick {
                Some((_, c)) => (c, !converged),
                None => {
                    return Err(Error::Infeasible(
                        "ADMM produced no iterate meeting both the power and radar constraints".into(),
                    ))
                }
            }
        }
    };
    if !converged {
        log::warn!("ADMM stopped after {iters} iterations without meeting its tolerances");
    }
    Ok(AdmmOutcome {
        w: ap.to_original(&out),
        tau,
        iters,
        converged,
        fallback,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct BeamformerOutcome {
    pub w: CMat,
    pub mm_iters: usize,
    pub admm_iters: usize,
    /// Surrogate objective `w^H D1 w − c3` after each accepted MM step,
    /// starting at the input beamformer.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// True radar constraint holds up to a relative slack.
fn radar_ok(wp: &WProblemData, w: &CVec, slack: f64) -> bool {
    let rest = quad_form(&wp.d2, w) + wp.c4;
    wp.constraint(w) <= slack * rest
}

/// MM loop on the beamformer with `(β, ω, u, u0, φ, q)` fixed.
///
/// Each step linearizes the radar constraint at the current `w`, solves the
/// surrogate by ADMM and keeps the result only if it meets the power budget
/// and the exact radar constraint and does not raise the objective.
pub fn optimize_beamformer(
    inst: &Instance,
    dv: &DesignVariables,
    aux: &mut AuxState,
    cfg: &BeamformerConfig,
) -> Result<BeamformerOutcome> {
    let nt = inst.n_tx();
    let mut w_cur = vec_of(&dv.w);
    let mut wp = build_w_problem(inst, dv, aux, &w_cur)?;
    let mut obj = wp.objective(&w_cur);
    let mut trace = vec![obj];
    let mut warnings = Vec::new();
    let mut admm_iters = 0;
    let mut mm_iters = 0;
    for m in 0..cfg.mm.max_iters {
        let out = match admm_solve(&wp, &w_cur, inst.p_bs, &cfg.admm) {
            Ok(o) => o,
            Err(e) => {
                warnings.push(format!("MM step {m}: ADMM failed ({e}); keeping the current beamformer"));
                break;
            }
        };
        admm_iters += out.iters;
        if !out.converged {
            warnings.push(format!("MM step {m}: ADMM hit its iteration cap"));
        }
        let w_new = out.w;
        let obj_new = wp.objective(&w_new);
        let power_ok = norm_sq(&w_new) <= inst.p_bs * (1.0 + 1e-9);
        let improves = obj_new <= obj + 1e-12 * obj.abs();
        if !(power_ok && radar_ok(&wp, &w_new, 1e-9) && improves) {
            break;
        }
        mm_iters = m + 1;
        aux.tau = out.tau;
        let rel = (obj - obj_new) / obj.abs().max(f64::MIN_POSITIVE);
        w_cur = w_new;
        wp.reanchor(&w_cur);
        obj = obj_new;
        trace.push(obj);
        if rel < cfg.mm.rel_tol {
            break;
        }
    }
    Ok(BeamformerOutcome {
        w: unvec(&w_cur, nt, nt),
        mm_iters,
        admm_iters,
        objective_trace: trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eye;
    use num_complex::Complex64;
    use crate::metrics::sinr_radar;
    use crate::oracle::{pg_w_problem, random_problem};
    use crate::qcqp::{solve_ball_qp, solve_qcqp, QcqpProblem};

    /// Random instance whose current beamformer meets the radar constraint
    /// with `Γ` set to `frac` of its achieved SINR.
    fn feasible_problem(seed: u64, frac: f64) -> (Instance, DesignVariables, AuxState) {
        let (mut inst, dv, aux) = random_problem(seed, 4, 3, 3, 2);
        inst.gamma_r = frac * sinr_radar(&inst, &dv).unwrap();
        (inst, dv, aux)
    }

    fn w_problem(seed: u64, frac: f64) -> (Instance, DesignVariables, WProblemData) {
        let (inst, dv, aux) = feasible_problem(seed, frac);
        let w0 = vec_of(&dv.w);
        let wp = build_w_problem(&inst, &dv, &aux, &w0).unwrap();
        (inst, dv, wp)
    }

    #[test]
    fn tau_update_is_exact() {
        let t = CVec::from_vec(vec![cr(1.0), cr(2.0)]);
        let w = CVec::from_vec(vec![cr(3.0), cr(0.0)]);
        assert_eq!(update_tau(&t, &w, &w, 1.0), t);
        let f = CVec::from_vec(vec![cr(2.0), cr(0.0)]);
        assert_eq!(update_tau(&t, &w, &f, 1.0), CVec::from_vec(vec![cr(2.0), cr(2.0)]));
    }

    #[test]
    fn tau_direction_matches_lagrangian_gradient() {
        let (inst, _, wp) = w_problem(3, 0.5);
        let ap = AdmmProblem::new(&wp, inst.p_bs, true);
        let n = ap.dim();
        let w = CVec::from_fn(n, |i, _| c64(0.1 * i as f64, -0.05));
        let f = CVec::from_fn(n, |i, _| c64(0.02, 0.01 * i as f64));
        let tau = CVec::zeros(n);
        // ∂L/∂τ (real-imag stacked) is (w − f)/2 under Re{τ^H r}; step by h along it.
        let h = 1e-6;
        let step = (&w - &f) * cr(h);
        let l0 = augmented_lagrangian(&ap, &w, &f, &tau, 1.0);
        let l1 = augmented_lagrangian(&ap, &w, &f, &(&tau + &step), 1.0);
        assert!(((l1 - l0) / h - norm_sq(&(&w - &f))).abs() < 1e-8);
        let next = update_tau(&tau, &w, &f, 0.7);
        assert!(((&next - &tau) - (&w - &f) * cr(0.7)).norm() < 1e-15);
    }

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn f_step_slack_returns_target() {
        let (inst, dv, wp) = w_problem(5, 0.5);
        let ap = AdmmProblem::new(&wp, inst.p_bs, true);
        let x0 = ap.from_original(&vec_of(&dv.w));
        assert!(ap.constraint(&x0) < 0.0);
        let f = update_f(&ap, &x0, &CVec::zeros(ap.dim()), 1.0).unwrap();
        assert!((&f - &x0).norm() <= 1e-12 * x0.norm());
    }

    #[test]
    fn f_step_active_kkt() {
        for seed in 0..10 {
            let (inst, _, wp) = w_problem(seed, 0.5);
            let ap = AdmmProblem::new(&wp, inst.p_bs, true);
            let target = CVec::zeros(ap.dim());
            let f = update_f(&ap, &target, &CVec::zeros(ap.dim()), 1.0).unwrap();
            let p = QcqpProblem::new(eye(ap.dim()), target.clone(), ap.d2.clone(), ap.d3.clone(), ap.c4_hat);
            let sol = solve_qcqp(&p, 1e-14).unwrap();
            assert!(ap.constraint(&f).abs() <= 1e-9 * ap.c4_hat.abs().max(1.0));
            assert!(p.stationarity_residual(&sol.x, sol.multiplier) <= 1e-8 * (1.0 + sol.multiplier));
            // Oracle projection onto the same set.
            let oracle = crate::oracle::pg_qcqp(&p, 2000, None);
            assert!((p.objective(&f) - p.objective(&oracle)).abs() <= 1e-6 * (1.0 + p.objective(&f).abs()));
        }
    }

    #[test]
    fn w_step_degenerate_cases() {
        let (inst, _, wp) = w_problem(7, 0.5);
        let mut ap = AdmmProblem::new(&wp, inst.p_bs, false);
        let n = ap.dim();
        ap.d1 = CMat::zeros(n, n);
        let r = inst.p_bs.sqrt();
        let f = CVec::from_fn(n, |i, _| c64(0.01 * r * i as f64, 0.02 * r));
        let w = update_w(&ap, &f, &CVec::zeros(n), 1.0).unwrap();
        assert!((&w - &f).norm() < 1e-12 * r);
        let big = &f * cr(100.0);
        let w = update_w(&ap, &big, &CVec::zeros(n), 1.0).unwrap();
        assert!((norm_sq(&w) - inst.p_bs).abs() <= 1e-9 * inst.p_bs);
    }

    #[test]
    fn w_step_matches_ball_solvers() {
        let (inst, _, wp) = w_problem(8, 0.5);
        let ap = AdmmProblem::new(&wp, inst.p_bs, true);
        let n = ap.dim();
        let f = CVec::from_fn(n, |i, _| c64(3.0 * (i as f64).sin(), 2.0));
        let tau = CVec::from_fn(n, |i, _| c64(0.05, -0.01 * i as f64));
        let ups = 1.2;
        let y = update_w(&ap, &f, &tau, ups).unwrap();
        let d_bar = &ap.d1 + eye(n) * cr(0.5 * ups);
        let lin = (&f * cr(ups) - &tau) * cr(0.5);
        let m = &ap.power_factor * ap.power_factor.adjoint();
        let p = QcqpProblem::new(d_bar, lin, m, CVec::zeros(n), -inst.p_bs);
        assert!((ap.power(&y) - inst.p_bs).abs() <= 1e-9 * inst.p_bs);
        let oracle = crate::oracle::pg_qcqp(&p, 20_000, None);
        let (a, o) = (p.objective(&y), p.objective(&oracle));
        assert!(a <= o + 1e-8 * o.abs(), "{a} vs {o}");

        // Without preconditioning the step is the plain ball QP.
        let raw = AdmmProblem::new(&wp, inst.p_bs, false);
        let f = &f * cr(inst.p_bs.sqrt());
        let w = update_w(&raw, &f, &tau, ups).unwrap();
        let d_bar = &raw.d1 + eye(n) * cr(0.5 * ups);
        let lin = (&f * cr(ups) - &tau) * cr(0.5);
        let (ball, _) = solve_ball_qp(&d_bar, &lin, inst.p_bs, 1e-14).unwrap();
        assert!((&w - &ball).norm() <= 1e-8 * ball.norm());
    }

    #[test]
    fn admm_matches_oracle() {
        for seed in 0..5 {
            let (inst, dv, wp) = w_problem(seed, 0.5);
            let out = admm_solve(&wp, &vec_of(&dv.w), inst.p_bs, &AdmmConfig::default()).unwrap();
            assert!(out.converged, "seed {seed}");
            let oracle = pg_w_problem(&wp, inst.p_bs, 20_000);
            let (a, o) = (quad_form(&wp.d1, &out.w), quad_form(&wp.d1, &oracle));
            assert!((a - o).abs() <= 1e-3 * o.abs(), "seed {seed}: {a} vs {o}");
            assert!(norm_sq(&out.w) <= inst.p_bs * (1.0 + 1e-9));
            assert!(radar_ok(&wp, &out.w, 1e-9));
        }
    }

    #[test]
    fn preconditioning_is_a_reparameterization() {
        for seed in 0..3 {
            let (inst, dv, wp) = w_problem(seed + 20, 0.5);
            let tight = AdmmConfig {
                tol_primal: 1e-10,
                tol_dual: 1e-10,
                max_iters: 20_000,
                ..AdmmConfig::default()
            };
            let with = admm_solve(&wp, &vec_of(&dv.w), inst.p_bs, &tight).unwrap();
            // The unpreconditioned run needs tolerances in raw units.
            let s = inst.p_bs.sqrt();
            let raw = AdmmConfig {
                precondition: false,
                tol_primal: 1e-10 * s,
                tol_dual: 1e-10 * s,
                upsilon: tight.upsilon * lambda_max(&wp.d1_block),
                ..tight
            };
            let without = admm_solve(&wp, &vec_of(&dv.w), inst.p_bs, &raw).unwrap();
            assert!((&with.w - &without.w).norm() <= 1e-6 * s, "seed {seed}");
        }
    }

    #[test]
    fn beamformer_mm_is_monotone_and_feasible() {
        for seed in 0..5 {
            let (inst, dv, mut aux) = feasible_problem(seed, 0.5);
            let out = optimize_beamformer(&inst, &dv, &mut aux, &BeamformerConfig::default()).unwrap();
            for pair in out.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs());
            }
            let next = DesignVariables { w: out.w.clone(), ..dv.clone() };
            assert!(next.w.norm_squared() <= inst.p_bs * (1.0 + 1e-9));
            assert!(sinr_radar(&inst, &next).unwrap() >= inst.gamma_r - 1e-6);
            assert!(out.mm_iters >= 1);
        }
    }

    #[test]
    fn slack_instance_single_step_is_ridge() {
        // With a tiny radar requirement the interference-minimizing
        // beamformer shrinks toward the unconstrained minimizer w = 0.
        let (inst, dv, mut aux) = feasible_problem(9, 1e-6);
        let out = optimize_beamformer(&inst, &dv, &mut aux, &BeamformerConfig::default()).unwrap();
        let before = quad_form(&build_w_problem(&inst, &dv, &aux, &vec_of(&dv.w)).unwrap().d1, &vec_of(&dv.w));
        let after = quad_form(
            &build_w_problem(&inst, &dv, &aux, &vec_of(&out.w)).unwrap().d1,
            &vec_of(&out.w),
        );
        assert!(after < 1e-3 * before);
    }
}
