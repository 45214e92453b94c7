//! Closed-form WMMSE auxiliaries and receive filter updates.

use num_complex::Complex64;

use crate::coeffs::FilterProblemData;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, norm_sq, quad_form, solve_hpd, CVec};
use crate::metrics::{sinr_user_with, AuxState, DesignVariables, Effective, Instance, Received};

/// MMSE scaling `β_k = √q_k u_k^H h_k / (total power at u_k)`.
pub fn update_beta(inst: &Instance, eff: &Effective, dv: &DesignVariables, k: usize) -> Complex64 {
    let r = Received::new(inst, eff, &dv.w, &dv.u[k]);
    let total = r.total(&dv.q);
    if total <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    dv.u[k].dotc(&eff.h_u[k]) * (dv.q[k].sqrt() / total)
}

/// Rate weight `ω_k = 1 + SINR_k`.
pub fn update_omega(inst: &Instance, eff: &Effective, dv: &DesignVariables, k: usize) -> f64 {
    1.0 + sinr_user_with(inst, eff, dv, k)
}

/// Refresh every `β_k` and `ω_k` at the current design point.
pub fn update_wmmse_aux(inst: &Instance, dv: &DesignVariables, aux: &mut AuxState) -> Result<()> {
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let k_users = inst.n_users();
    aux.beta = (0..k_users).map(|k| update_beta(inst, &eff, dv, k)).collect();
    aux.omega = (0..k_users).map(|k| update_omega(inst, &eff, dv, k)).collect();
    Ok(())
}

/// `u_k = F_k⁻¹ h̃_k`.
///
/// When the weight `ω_k|β_k|²` vanishes `F_k` is singular; the filter then
/// falls back to the MMSE direction `R⁻¹ h_k`, which the weighted solution
/// is parallel to whenever it exists.
pub fn update_user_filters(fp: &FilterProblemData) -> Result<Vec<CVec>> {
    let mut out = Vec::with_capacity(fp.f.len());
    for k in 0..fp.f.len() {
        let u = match cholesky(&fp.f[k], "user filter matrix") {
            Ok(ch) if fp.h_tilde[k].norm() > 0.0 => ch.solve(&fp.h_tilde[k]),
            _ => solve_hpd(&fp.r_total, &fp.h_u[k], "received covariance")?,
        };
        out.push(u);
    }
    Ok(out)
}

/// Radar filter by the MM fixed point `û ← E1⁻¹ E2 û`, normalized each step.
///
/// Stops when the direction changes by less than `tol` (sine of the angle
/// between successive iterates) or after `max_iters` steps.
pub fn update_radar_filter(fp: &FilterProblemData, u0_init: &CVec, tol: f64, max_iters: usize) -> Result<CVec> {
    let n0 = u0_init.norm();
    if n0 == 0.0 {
        return Err(Error::ZeroFilter("radar"));
    }
    let chol = cholesky(&fp.e1, "radar interference covariance")?;
    let margin = |u: &CVec| quad_form(&fp.e2, u) / quad_form(&fp.e1, u);
    let mut u = u0_init / Complex64::new(n0, 0.0);
    for _ in 0..max_iters {
        let next = chol.solve(&(&fp.e2 * &u));
        let n = next.norm();
        if n == 0.0 || !n.is_finite() {
            break;
        }
        let next = next / Complex64::new(n, 0.0);
        let overlap = next.dotc(&u).norm_sqr().min(1.0);
        let change = (1.0 - overlap).max(0.0).sqrt();
        if margin(&next) < margin(&u) {
            break;
        }
        u = next;
        if change < tol {
            break;
        }
    }
    Ok(u)
}

/// Unit-norm MMSE receive filter of user `k`.
pub fn mmse_filter(fp: &FilterProblemData, k: usize) -> Result<CVec> {
    let u = solve_hpd(&fp.r_total, &fp.h_u[k], "received covariance")?;
    let n = norm_sq(&u).sqrt();
    if n == 0.0 {
        return Ok(u);
    }
    Ok(u / Complex64::new(n, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::build_filter_problems;
    use crate::linalg::{c, cr, eye, CMat};
    use crate::metrics::{sinr_radar, sinr_user, sum_rate, surrogate_rate, mse_with};
    use crate::oracle::{finite_diff, random_problem};
    use crate::scenario::cn_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fp_from(e1: CMat, e2: CMat) -> FilterProblemData {
        let n = e1.nrows();
        FilterProblemData {
            f: vec![],
            h_tilde: vec![],
            r_total: eye(n),
            h_u: vec![],
            e1,
            e2,
            c6: 0.0,
        }
    }

    #[test]
    fn beta_and_omega_zero_power() {
        let (inst, mut dv, _) = random_problem(1, 4, 2, 2, 2);
        dv.q[0] = 0.0;
        let eff = Effective::new(&inst.ch, &dv.phi).unwrap();
        assert_eq!(update_beta(&inst, &eff, &dv, 0), c(0.0, 0.0));
        assert_eq!(update_omega(&inst, &eff, &dv, 0), 1.0);
    }

    #[test]
    fn beta_scalar_hand_formula() {
        let (mut inst, mut dv, _) = random_problem(2, 1, 1, 1, 1);
        inst.ch.h_self_interference.fill(cr(0.0));
        inst.ch.g_bs_tx_ris.fill(cr(0.0));
        dv.w.fill(cr(0.0));
        let eff = Effective::new(&inst.ch, &dv.phi).unwrap();
        let (h, u, q) = (eff.h_u[0][0], dv.u[0][0], dv.q[0]);
        let expect = q.sqrt() * h * u.conj() / (q * (u.conj() * h).norm_sqr() + inst.noise * u.norm_sqr());
        assert!((update_beta(&inst, &eff, &dv, 0) - expect).norm() < 1e-12 * expect.norm());
    }

    #[test]
    fn beta_is_stationary_for_mse() {
        for seed in 0..10 {
            let (inst, dv, _) = random_problem(seed, 4, 2, 3, 2);
            let eff = Effective::new(&inst.ch, &dv.phi).unwrap();
            let b = update_beta(&inst, &eff, &dv, 1);
            let f = |x: &[f64]| mse_with(&inst, &eff, &dv, c(x[0], x[1]), 1);
            let g = finite_diff(f, &[b.re, b.im], 1e-6 * b.norm().max(1e-6));
            let curvature = 2.0 * Received::new(&inst, &eff, &dv.w, &dv.u[1]).total(&dv.q);
            assert!(g[0].hypot(g[1]) < 1e-6 * curvature * b.norm().max(1e-12), "seed {seed}: {g:?}");
        }
    }

    #[test]
    fn wmmse_tightness() {
        for seed in 0..100 {
            let (inst, dv, mut aux) = random_problem(seed, 8, 4, 4, 4);
            update_wmmse_aux(&inst, &dv, &mut aux).unwrap();
            let r = sum_rate(&inst, &dv).unwrap();
            let s = surrogate_rate(&inst, &dv, &aux).unwrap();
            assert!((r - s).abs() <= 1e-9, "seed {seed}: {r} vs {s}");
            for k in 0..4 {
                let sinr = sinr_user(&inst, &dv, k).unwrap();
                assert!((aux.omega[k] - 1.0 - sinr).abs() <= 1e-12 * aux.omega[k]);
            }
        }
    }

    #[test]
    fn surrogate_lower_bounds_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..100 {
            let (inst, dv, mut aux) = random_problem(seed, 4, 2, 2, 2);
            for k in 0..2 {
                aux.beta[k] = cn_vector(1, &mut rng)[0] * aux.beta[k].norm() * 3.0;
                aux.omega[k] = rand::Rng::random_range(&mut rng, 0.1..10.0);
            }
            let r = sum_rate(&inst, &dv).unwrap();
            let s = surrogate_rate(&inst, &dv, &aux).unwrap();
            assert!(s <= r + 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn user_filter_identity_and_optimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..10 {
            let (inst, dv, mut aux) = random_problem(seed, 4, 2, 3, 2);
            update_wmmse_aux(&inst, &dv, &mut aux).unwrap();
            let fp = build_filter_problems(&inst, &dv, &aux).unwrap();
            let us = update_user_filters(&fp).unwrap();
            for k in 0..2 {
                let res = (&fp.f[k] * &us[k] - &fp.h_tilde[k]).norm();
                assert!(res <= 1e-10 * fp.h_tilde[k].norm());
                let best = fp.user_objective(k, &us[k]);
                for _ in 0..100 {
                    let d = cn_vector(3, &mut rng) * cr(1e-3 * us[k].norm());
                    assert!(fp.user_objective(k, &(&us[k] + d)) >= best);
                }
                // parallel to the MMSE receiver
                let mmse = mmse_filter(&fp, k).unwrap();
                let cos = us[k].dotc(&mmse).norm() / us[k].norm();
                assert!((cos - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn user_filter_fallback_when_weight_vanishes() {
        let (inst, dv, mut aux) = random_problem(3, 4, 2, 3, 2);
        aux.beta[0] = c(0.0, 0.0);
        let fp = build_filter_problems(&inst, &dv, &aux).unwrap();
        let us = update_user_filters(&fp).unwrap();
        assert!(us[0].norm() > 0.0);
        let mut d = dv.clone();
        d.u = us;
        assert!(sinr_user(&inst, &d, 0).unwrap() >= sinr_user(&inst, &dv, 0).unwrap() - 1e-12);
    }

    #[test]
    fn user_filter_identity_matrix() {
        let fp = FilterProblemData {
            f: vec![eye(2)],
            h_tilde: vec![CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])],
            r_total: eye(2),
            h_u: vec![CVec::zeros(2)],
            e1: eye(2),
            e2: eye(2),
            c6: 0.0,
        };
        assert_eq!(update_user_filters(&fp).unwrap()[0], fp.h_tilde[0]);
    }

    #[test]
    fn radar_filter_trivial_and_rank_one() {
        let u = CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let out = update_radar_filter(&fp_from(eye(2), eye(2)), &u, 1e-8, 100).unwrap();
        assert!((out - &u).norm() < 1e-15);
        let v = CVec::from_vec(vec![c(1.0, 1.0), c(-2.0, 0.5), c(0.0, 1.0)]);
        let e2 = &v * v.adjoint();
        let out = update_radar_filter(&fp_from(eye(3), e2), &CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]), 1e-8, 100).unwrap();
        assert!((out.dotc(&v).norm() / v.norm() - 1.0).abs() < 1e-12);
        assert!(update_radar_filter(&fp_from(eye(2), eye(2)), &CVec::zeros(2), 1e-8, 10).is_err());
    }

    #[test]
    fn radar_filter_improves_sinr() {
        for seed in 0..20 {
            let (inst, dv, aux) = random_problem(seed, 4, 2, 4, 2);
            let fp = build_filter_problems(&inst, &dv, &aux).unwrap();
            let u0 = update_radar_filter(&fp, &dv.u0, 1e-8, 100).unwrap();
            let mut d = dv.clone();
            d.u0 = u0;
            assert!(sinr_radar(&inst, &d).unwrap() >= sinr_radar(&inst, &dv).unwrap() * (1.0 - 1e-12));
            // E2 is rank one along the radar receive factor, so the dominant
            // generalized eigenvector is E1⁻¹ times that factor
            let best = {
                let x = solve_hpd(&fp.e1, &crate::scenario::radar_rx_factor(&inst.ch, &dv.phi), "e1").unwrap();
                quad_form(&fp.e2, &x) / quad_form(&fp.e1, &x)
            };
            let got = quad_form(&fp.e2, &d.u0) / quad_form(&fp.e1, &d.u0);
            assert!((got / best - 1.0).abs() < 1e-9, "seed {seed}");
        }
    }
}
