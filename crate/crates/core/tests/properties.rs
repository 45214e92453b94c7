//! Property tests for the invariants every module must keep.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ris_fdisac::beamformer::update_tau;
use ris_fdisac::coeffs::{build_filter_problems, PhaseTerms};
use ris_fdisac::config::ScenarioConfig;
use ris_fdisac::filters::{update_radar_filter, update_wmmse_aux};
use ris_fdisac::linalg::{c, cr, diag, eye, CMat, CVec};
use ris_fdisac::metrics::{sinr_radar, sinr_user, sum_rate, surrogate_rate, AuxState};
use ris_fdisac::oracle::{random_power_problem, random_problem, random_qcqp};
use ris_fdisac::orchestrator::{run, RunOptions};
use ris_fdisac::power::solve_power;
use ris_fdisac::qcqp::{solve_ball_qp, solve_qcqp, QcqpProblem};
use ris_fdisac::ris_pdd::update_psi2;
use ris_fdisac::scenario::{effective_radar_channel, generate_channels, random_phase, steering_vector_ris, steering_vector_ula};

fn cvec(parts: &[(f64, f64)]) -> CVec {
    CVec::from_iterator(parts.len(), parts.iter().map(|&(a, b)| c(a, b)))
}

fn complex_vec(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n).prop_map(|v| cvec(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_vectors_have_unit_modulus(
        n in 1usize..16,
        m1 in 1usize..8,
        m2 in 1usize..8,
        spacing in 0.1..1.0f64,
        a in -3.2..3.2f64,
        b in -3.2..3.2f64,
    ) {
        for z in steering_vector_ula(n, spacing, a).iter().chain(steering_vector_ris(m1, m2, spacing, a, b).iter()) {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn channels_are_a_pure_function_of_the_seed(seed in any::<u64>(), m in 1usize..9) {
        let s = ScenarioConfig::default().with_ris(m).validate().unwrap();
        prop_assert_eq!(generate_channels(&s, seed).unwrap(), generate_channels(&s, seed).unwrap());
    }

    #[test]
    fn radar_channel_matches_diagonal_product(seed in any::<u64>(), m in 1usize..9, phase_seed in any::<u64>()) {
        let s = ScenarioConfig::default().with_ris(m).validate().unwrap();
        let ch = generate_channels(&s, seed).unwrap();
        let phi = random_phase(m, &mut ChaCha8Rng::seed_from_u64(phase_seed));
        let d = diag(&phi);
        let rx = &ch.g_bs_rx_target + ch.g_bs_rx_ris.adjoint() * &d * &ch.g_ris_target;
        let tx = ch.g_bs_tx_target.adjoint() + ch.g_ris_target.transpose() * &d * &ch.g_bs_tx_ris;
        let expect: CMat = rx * tx;
        let got = effective_radar_channel(&ch, &phi, &phi).unwrap();
        let scale = expect.norm().max(1e-300);
        for (x, y) in got.iter().zip(expect.iter()) {
            prop_assert!((x - y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn surrogate_never_exceeds_rate(seed in 0u64..10_000, m in 1usize..6, k in 1usize..4, br in -2.0..2.0f64, bi in -2.0..2.0f64, w in 0.1..5.0f64) {
        let (inst, dv, mut aux) = random_problem(seed, m, 3, 3, k);
        let rate = sum_rate(&inst, &dv).unwrap();
        update_wmmse_aux(&inst, &dv, &mut aux).unwrap();
        let tight = surrogate_rate(&inst, &dv, &aux).unwrap();
        prop_assert!((tight - rate).abs() <= 1e-9 * rate.max(1.0));
        let perturbed = AuxState {
            beta: aux.beta.iter().map(|b| b * c(1.0 + 0.1 * br, 0.1 * bi)).collect(),
            omega: aux.omega.iter().map(|o| o * w).collect(),
            ..aux.clone()
        };
        prop_assert!(surrogate_rate(&inst, &dv, &perturbed).unwrap() <= rate + 1e-9 * rate.max(1.0));
    }

    #[test]
    fn sinr_is_invariant_to_filter_scaling(seed in 0u64..10_000, re in -4.0..4.0f64, im in -4.0..4.0f64) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let (inst, dv, _) = random_problem(seed, 3, 2, 3, 2);
        let mut scaled = dv.clone();
        let factor = c(re, im);
        scaled.u0 *= factor;
        for u in &mut scaled.u {
            *u *= factor;
        }
        let (a, b) = (sinr_radar(&inst, &dv).unwrap(), sinr_radar(&inst, &scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a);
        for k in 0..2 {
            let (a, b) = (sinr_user(&inst, &dv, k).unwrap(), sinr_user(&inst, &scaled, k).unwrap());
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn phase_surrogates_touch_and_bound(seed in 0u64..10_000, draw in any::<u64>()) {
        let (inst, dv, aux) = random_problem(seed, 3, 2, 2, 2);
        let t = PhaseTerms::new(&inst, &dv, &aux).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let (psi, anchor, x) = (random_phase(3, &mut rng), random_phase(3, &mut rng), random_phase(3, &mut rng));
        let scale = t.c20.abs();
        let p5 = t.p5(&psi, &anchor);
        prop_assert!((p5.linearized_constraint(&anchor) - p5.constraint(&anchor)).abs() <= 1e-9 * scale);
        prop_assert!(p5.linearized_constraint(&x) >= p5.constraint(&x) - 1e-9 * scale);
        let p7 = t.p7(&psi, &anchor);
        prop_assert!((p7.linearized_constraint(&anchor) - p7.constraint(&anchor)).abs() <= 1e-9 * scale);
        prop_assert!(p7.linearized_constraint(&x) >= p7.constraint(&x) - 1e-9 * scale);
    }

    #[test]
    fn qcqp_complementary_slackness(seed in any::<u64>(), n in 1usize..7) {
        let p = random_qcqp(seed, n);
        let sol = solve_qcqp(&p, 1e-13).unwrap();
        let scale = 1.0 + p.cons_scalar.abs();
        prop_assert!(sol.multiplier >= 0.0);
        prop_assert!(p.constraint(&sol.x) <= 1e-8 * scale);
        prop_assert!(sol.multiplier * p.constraint(&sol.x).abs() <= 1e-7 * scale * (1.0 + sol.multiplier));
    }

    #[test]
    fn ball_solver_agrees_with_general_solver(d in complex_vec(3), diag_entries in prop::collection::vec(0.1..4.0f64, 3), r2 in 0.05..5.0f64) {
        let mut d_bar = eye(3);
        for (i, v) in diag_entries.iter().enumerate() {
            d_bar[(i, i)] = cr(*v);
        }
        d_bar[(0, 1)] = c(0.05, 0.02);
        d_bar[(1, 0)] = c(0.05, -0.02);
        let (x, _) = solve_ball_qp(&d_bar, &d, r2, 1e-14).unwrap();
        let general = solve_qcqp(&QcqpProblem::new(d_bar.clone(), d.clone(), eye(3), CVec::zeros(3), -r2), 1e-14).unwrap();
        prop_assert!((&x - &general.x).norm() <= 1e-9 * (1.0 + x.norm()));
    }

    #[test]
    fn psi2_update_is_unit_modulus(phi in complex_vec(6), lambda in complex_vec(6), rho in 0.01..10.0f64) {
        prop_assume!(phi.iter().zip(lambda.iter()).all(|(p, l)| (p + l * rho).norm() > 1e-9));
        for z in update_psi2(&phi, &lambda, rho).iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tau_step_is_the_scaled_residual(tau in complex_vec(4), w in complex_vec(4), f in complex_vec(4), ups in 0.1..2.0f64) {
        let next = update_tau(&tau, &w, &f, ups);
        let expect = &tau + (&w - &f) * Complex64::new(ups, 0.0);
        prop_assert!((next - &expect).norm() <= 1e-12 * (1.0 + expect.norm()));
    }

    #[test]
    fn power_allocation_respects_box_and_budget(seed in any::<u64>(), k in 1usize..5) {
        let pd = random_power_problem(seed, k);
        let s = solve_power(&pd, 1e-12).unwrap();
        let used: f64 = s.q.iter().zip(&pd.d).map(|(q, d)| q * d).sum();
        prop_assert!(used <= pd.c5_hat * (1.0 + 1e-9));
        for (q, pb) in s.q.iter().zip(&pd.p_bar) {
            prop_assert!(*q >= 0.0 && *q <= pb * pb * (1.0 + 1e-12));
        }
        prop_assert!(s.nu >= 0.0);
        prop_assert!(s.nu * (used - pd.c5_hat).abs() <= 1e-8 * pd.c5_hat * (1.0 + s.nu));
    }

    #[test]
    fn radar_filter_never_lowers_radar_sinr(seed in 0u64..10_000) {
        let (inst, dv, aux) = random_problem(seed, 3, 2, 4, 2);
        let fp = build_filter_problems(&inst, &dv, &aux).unwrap();
        let mut next = dv.clone();
        next.u0 = update_radar_filter(&fp, &dv.u0, 1e-10, 200).unwrap();
        prop_assert!(sinr_radar(&inst, &next).unwrap() >= sinr_radar(&inst, &dv).unwrap() * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn alternating_design_is_monotone_and_feasible(seed in 0u64..1_000, gamma_db in -5.0..5.0f64) {
        let mut cfg = ScenarioConfig::default().with_ris(8);
        cfg.n_users = 2;
        cfg.radar_threshold_db = gamma_db;
        let s = cfg.validate().unwrap();
        let ch = generate_channels(&s, seed).unwrap();
        let opts = RunOptions { seed, max_outer: 4, ..RunOptions::default() };
        if let Ok(rep) = run(&s, &ch, &opts) {
            prop_assert!(rep.max_rate_drop() <= 1e-8);
            prop_assert!(rep.final_margins.holds(1e-6));
            for r in &rep.records {
                prop_assert!(r.margins.holds(1e-6));
            }
        }
    }
}
