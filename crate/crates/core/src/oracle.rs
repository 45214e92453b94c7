//! Slow, independent reference implementations used to check the fast
//! solvers: projected gradient for quadratic programs, exhaustive grids and
//! finite differences, plus fixtures that draw random problem instances.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coeffs::{PowerProblemData, WProblemData};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{c, cr, hermitian_eigen, lambda_max, norm_sq, quad_form, CMat, CVec};
use crate::metrics::{AuxState, DesignVariables, Effective, Instance, Received};
use crate::qcqp::QcqpProblem;
use crate::scenario::{cn_matrix, cn_vector, generate_channels, random_phase};

/// Convex quadratic set `{x : x^H A x − 2Re{b^H x} + s ≤ 0}` with `A ⪰ 0`.
#[derive(Debug, Clone)]
pub struct QuadSet {
    pub a: CMat,
    pub b: CVec,
    pub s: f64,
}

impl QuadSet {
    pub fn value(&self, x: &CVec) -> f64 {
        quad_form(&self.a, x) - 2.0 * self.b.dotc(x).re + self.s
    }

    /// Euclidean projection. The multiplier of the projection problem is
    /// found by plain bisection in the eigenbasis of `A`.
    pub fn project(&self, y: &CVec) -> CVec {
        if self.value(y) <= 0.0 {
            return y.clone();
        }
        let eig = hermitian_eigen(&self.a);
        let v = &eig.eigenvectors;
        let yt = v.ad_mul(y);
        let bt = v.ad_mul(&self.b);
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        let point = |mu: f64| -> CVec {
            CVec::from_iterator(
                yt.len(),
                (0..yt.len()).map(|i| (yt[i] + bt[i] * mu) / (1.0 + mu * lam[i])),
            )
        };
        let h = |mu: f64| -> f64 {
            let x = point(mu);
            (0..x.len())
                .map(|i| lam[i] * x[i].norm_sqr() - 2.0 * (bt[i].conj() * x[i]).re)
                .sum::<f64>()
                + self.s
        };
        let mut hi = 1.0;
        while h(hi) > 0.0 && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        v * point(hi)
    }
}

/// Projected gradient with backtracking for a single-constraint QCQP.
///
/// `step` is the initial step; `None` uses `1/λmax(Q)`.
pub fn pg_qcqp(p: &QcqpProblem, iters: usize, step: Option<f64>) -> CVec {
    let set = QuadSet {
        a: p.cons_matrix.clone(),
        b: p.cons_vector.clone(),
        s: p.cons_scalar,
    };
    projected_gradient(&p.q_matrix, &p.q_vector, |y| set.project(y), iters, step)
}

fn projected_gradient(
    q: &CMat,
    lin: &CVec,
    project: impl Fn(&CVec) -> CVec,
    iters: usize,
    step: Option<f64>,
) -> CVec {
    let f = |x: &CVec| quad_form(q, x) - 2.0 * lin.dotc(x).re;
    let lmax = lambda_max(q);
    let mut t = step.unwrap_or(if lmax > 0.0 { 1.0 / lmax } else { 1.0 });
    let mut x = project(&CVec::zeros(lin.len()));
    let mut fx = f(&x);
    for _ in 0..iters {
        let g = q * &x - lin;
        let (xn, fxn) = loop {
            let xn = project(&(&x - &g * cr(t)));
            let d = &xn - &x;
            let fxn = f(&xn);
            let model = fx + 2.0 * g.dotc(&d).re + norm_sq(&d) / t;
            if fxn <= model + 1e-15 * fx.abs() || t < 1e-300 {
                break (xn, fxn);
            }
            t *= 0.5;
        };
        let moved = (&xn - &x).norm();
        x = xn;
        fx = fxn;
        if moved <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

/// Projection onto the intersection of convex sets by Dykstra's algorithm.
pub fn dykstra(y: &CVec, projections: &[&dyn Fn(&CVec) -> CVec], iters: usize) -> CVec {
    let mut x = y.clone();
    let mut incs: Vec<CVec> = projections.iter().map(|_| CVec::zeros(y.len())).collect();
    for _ in 0..iters {
        let prev = x.clone();
        for (proj, inc) in projections.iter().zip(incs.iter_mut()) {
            let z = &x + &*inc;
            let p = proj(&z);
            *inc = z - &p;
            x = p;
        }
        if (&x - &prev).norm() <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

/// Projected gradient on the linearized beamformer problem: objective
/// `w^H D1 w`, power ball `‖w‖² ≤ p_bs`, linearized radar constraint.
pub fn pg_w_problem(wp: &WProblemData, p_bs: f64, iters: usize) -> CVec {
    let set = QuadSet {
        a: wp.d2.clone(),
        b: wp.d3.clone(),
        s: wp.c4_hat,
    };
    let ball = move |y: &CVec| -> CVec {
        let n = y.norm();
        if n * n <= p_bs {
            y.clone()
        } else {
            y * cr(p_bs.sqrt() / n)
        }
    };
    let quad = |y: &CVec| set.project(y);
    let project = |y: &CVec| dykstra(y, &[&ball, &quad], 10_000);
    projected_gradient(&wp.d1, &CVec::zeros(wp.w0.len()), project, iters, None)
}

/// Exhaustive power search in amplitude form.
///
/// Every user but the last is swept over `{0, step, 2·step, …, p̄}`; the
/// last amplitude is then chosen optimally on its feasible interval, so the
/// search is exact along the radar-budget boundary. Two finer sweeps
/// (spacing divided by 50 each time) around the best cell remove the
/// first-order discretization error of the coarse pass.
pub fn grid_power(pd: &PowerProblemData, step: f64) -> Result<Vec<f64>> {
    let k = pd.n_users();
    if k == 0 || k > 3 {
        return Err(Error::Unsupported(format!("grid search supports 1 to 3 users, got {k}")));
    }
    let axis = |lo: f64, hi: f64, h: f64| -> Vec<f64> {
        let n = ((hi - lo) / h).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        if v.last().map_or(true, |x| *x < hi) {
            v.push(hi);
        }
        v
    };
    let axes: Vec<Vec<f64>> = (0..k - 1).map(|i| axis(0.0, pd.p_bar[i], step)).collect();
    let (mut obj, mut p) =
        grid_pass(pd, &axes).ok_or_else(|| Error::Infeasible("no grid point meets the radar budget".into()))?;
    let mut h = step;
    for _ in 0..2 {
        let fine = h / 50.0;
        let axes: Vec<Vec<f64>> = (0..k - 1)
            .map(|i| axis((p[i] - h).max(0.0), (p[i] + h).min(pd.p_bar[i]), fine))
            .collect();
        if let Some((o, q)) = grid_pass(pd, &axes) {
            if o <= obj {
                obj = o;
                p = q;
            }
        }
        h = fine;
    }
    Ok(p.iter().map(|x| x * x).collect())
}

/// One sweep over the given axes with the last amplitude solved exactly.
fn grid_pass(pd: &PowerProblemData, axes: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    let last = axes.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; axes.len()];
    loop {
        let mut p: Vec<f64> = idx.iter().enumerate().map(|(i, j)| axes[i][*j]).collect();
        let used: f64 = p.iter().zip(&pd.d).map(|(x, d)| d * x * x).sum();
        let rem = pd.c5_hat - used;
        if rem >= 0.0 {
            let mut ub = pd.p_bar[last];
            if pd.d[last] > 0.0 {
                ub = ub.min((rem / pd.d[last]).sqrt());
            }
            let (a, b) = (pd.a[last], pd.b[last]);
            let f = |x: f64| a * x * x + b * x;
            let mut cands = vec![0.0, ub];
            if a > 0.0 {
                cands.push((-b / (2.0 * a)).clamp(0.0, ub));
            }
            let x = cands.into_iter().fold(0.0, |acc, x| if f(x) < f(acc) { x } else { acc });
            p.push(x);
            let obj = pd.objective(&p);
            if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                best = Some((obj, p));
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == idx.len() {
                return best;
            }
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Central-difference gradient of a real function of a real vector.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Received covariance terms assembled directly from the channel matrices.
pub struct CovarianceTerms {
    pub users: Vec<CMat>,
    pub target: CMat,
    pub si: CMat,
    pub noise: CMat,
}

pub fn covariance_terms(inst: &Instance, dv: &DesignVariables) -> CovarianceTerms {
    let ch = &inst.ch;
    let phi = CMat::from_diagonal(&dv.phi);
    let users = (0..inst.n_users())
        .map(|k| {
            let h = &ch.h_bs_user[k] + ch.g_bs_rx_ris.adjoint() * &phi * &ch.h_ris_user[k];
            &h * h.adjoint() * cr(dv.q[k])
        })
        .collect();
    let left = &ch.g_bs_rx_target + ch.g_bs_rx_ris.adjoint() * &phi * &ch.g_ris_target;
    let right = ch.g_bs_tx_target.adjoint() + ch.g_ris_target.transpose() * &phi * &ch.g_bs_tx_ris;
    let hw = left * right * &dv.w;
    let g = ch.g_bs_rx_ris.adjoint() * &phi * &ch.g_bs_tx_ris + ch.h_self_interference.adjoint();
    let gw = g * &dv.w;
    let nr = inst.n_rx();
    CovarianceTerms {
        users,
        target: &hw * hw.adjoint() * cr(inst.sigma_t2),
        si: &gw * gw.adjoint(),
        noise: CMat::identity(nr, nr) * cr(inst.noise),
    }
}

pub fn covariance_sinr_user(inst: &Instance, dv: &DesignVariables, k: usize) -> f64 {
    let t = covariance_terms(inst, dv);
    let u = &dv.u[k];
    let mut interference = &t.target + &t.si + &t.noise;
    for (i, r) in t.users.iter().enumerate() {
        if i != k {
            interference += r;
        }
    }
    quad_form(&t.users[k], u) / quad_form(&interference, u)
}

pub fn covariance_sinr_radar(inst: &Instance, dv: &DesignVariables) -> f64 {
    let t = covariance_terms(inst, dv);
    let mut interference = &t.si + &t.noise;
    for r in &t.users {
        interference += r;
    }
    quad_form(&t.target, &dv.u0) / quad_form(&interference, &dv.u0)
}

/// Scenario with the requested dimensions and default physics.
pub fn small_config(m: usize, nt: usize, nr: usize, k: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default().with_ris(m);
    cfg.n_tx = nt;
    cfg.n_rx = nr;
    cfg.n_users = k;
    cfg
}

/// A random unit-noise instance with a random design point and random
/// auxiliaries near their optimal values.
pub fn random_problem(seed: u64, m: usize, nt: usize, nr: usize, k: usize) -> (Instance, DesignVariables, AuxState) {
    let s = small_config(m, nt, nr, k).validate().expect("valid test config");
    let inst = Instance::new(&s, generate_channels(&s, seed).expect("channels")).normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut w = cn_matrix(nt, nt, &mut rng);
    let scale = (0.5 * inst.p_bs).sqrt() / w.norm();
    w *= cr(scale);
    let dv = DesignVariables {
        w,
        phi: random_phase(m, &mut rng),
        q: inst.p_user.iter().map(|p| p * rng.random_range(0.05..1.0)).collect(),
        u: (0..k).map(|_| cn_vector(nr, &mut rng)).collect(),
        u0: cn_vector(nr, &mut rng),
    };
    let eff = Effective::new(&inst.ch, &dv.phi).expect("shapes");
    let beta = (0..k)
        .map(|j| {
            let r = Received::new(&inst, &eff, &dv.w, &dv.u[j]);
            let opt = dv.q[j].sqrt() * dv.u[j].dotc(&eff.h_u[j]) / r.total(&dv.q);
            opt * c(1.0 + 0.3 * rng.random::<f64>(), 0.3 * rng.random::<f64>() - 0.15)
        })
        .collect();
    let omega = (0..k).map(|_| rng.random_range(1.0..3.0)).collect();
    let aux = AuxState {
        beta,
        omega,
        ..AuxState::new(k, &dv.phi, nt)
    };
    (inst, dv, aux)
}

/// [`random_problem`] with the radar threshold set to `frac` times the
/// radar SINR of the design point and optimal WMMSE auxiliaries.
pub fn feasible_problem(
    seed: u64,
    m: usize,
    nt: usize,
    nr: usize,
    k: usize,
    frac: f64,
) -> (Instance, DesignVariables, AuxState) {
    let (mut inst, dv, mut aux) = random_problem(seed, m, nt, nr, k);
    inst.gamma_r = frac * crate::metrics::sinr_radar(&inst, &dv).expect("valid design");
    crate::filters::update_wmmse_aux(&inst, &dv, &mut aux).expect("valid design");
    (inst, dv, aux)
}

/// Random strictly convex QCQP with a Slater point, of dimension `n`.
pub fn random_qcqp(seed: u64, n: usize) -> QcqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = cn_matrix(n, n, &mut rng);
    let q_matrix = a.ad_mul(&a) + CMat::identity(n, n) * cr(0.5);
    let rank = rng.random_range(1..=n);
    let f = cn_matrix(n, rank, &mut rng);
    let cons_matrix = &f * f.adjoint();
    let q_vector = cn_vector(n, &mut rng) * cr(3.0);
    let cons_vector = cn_vector(n, &mut rng);
    // Strictly feasible at a random center.
    let center = cn_vector(n, &mut rng) * cr(0.3);
    let at_center = quad_form(&cons_matrix, &center) - 2.0 * cons_vector.dotc(&center).re;
    let cons_scalar = -at_center - rng.random_range(0.1..2.0);
    QcqpProblem {
        q_matrix,
        q_vector,
        q_scalar: 0.0,
        cons_matrix,
        cons_vector,
        cons_scalar,
        cons_factor: None,
    }
}

/// Random power problem with `a_k > 0`, mixed-sign `b_k` and `d_k > 0`.
pub fn random_power_problem(seed: u64, k: usize) -> PowerProblemData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
    let b: Vec<f64> = (0..k)
        .map(|_| if rng.random::<f64>() < 0.85 { -rng.random_range(0.1..4.0) } else { rng.random_range(0.0..1.0) })
        .collect();
    let d: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
    let p_bar: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..1.2)).collect();
    let full: f64 = d.iter().zip(&p_bar).map(|(d, p)| d * p * p).sum();
    let c5_hat = full * rng.random_range(0.05..1.3);
    PowerProblemData {
        a,
        b,
        d,
        c5: 0.0,
        c5_hat,
        p_bar,
    }
}

pub fn complex_from_reals(x: &[f64]) -> CVec {
    CVec::from_iterator(x.len() / 2, x.chunks(2).map(|p| Complex64::new(p[0], p[1])))
}

pub fn reals_from_complex(x: &CVec) -> Vec<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}
