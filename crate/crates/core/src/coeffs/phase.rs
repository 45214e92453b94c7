use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, kron, norm_sq, quad_form, vec_outer_t, CMat, CVec};
use crate::metrics::{AuxState, DesignVariables, Instance};

/// Largest RIS size for which the dense Kronecker blocks are assembled.
pub const MAX_FULL_P2_RIS: usize = 32;

/// Per-iteration intermediates of the phase subproblem.
///
/// Everything here is fixed while `φ` and `ψ1` move, so one build serves a
/// whole phase optimization. With `s_k(ψ) = b1_k* + b2_k^H ψ` and
/// `z(φ) = b3* + B^T φ`, the target term seen by filter `k` is
/// `σ_t² |s_k(ψ1)|² ‖z(φ)‖²`.
#[derive(Debug, Clone)]
pub struct PhaseTerms {
    /// `P_k = G_r^H diag(h_RU,k)`.
    pub p: Vec<CMat>,
    /// `r_k = G_r u_k`, with `r_0` last.
    pub r: Vec<CVec>,
    /// `(u_k^H H_s^H W)^T`, with `v_0` last.
    pub v: Vec<CVec>,
    /// `S_k = W^H G_t^H diag(r_k)`, with `S_0` last.
    pub s: Vec<CMat>,
    /// `b1_k = g_r^H u_k`.
    pub b1: Vec<Complex64>,
    /// `b2_k = diag(g_RT*) G_r u_k`.
    pub b2: Vec<CVec>,
    pub b01: Complex64,
    pub b02: CVec,
    /// `b3 = W^H g_t`.
    pub b3: CVec,
    /// `B = diag(g_RT) G_t W`.
    pub b: CMat,
    /// `B* B^T`.
    pub bbt: CMat,
    /// `B* b3*`.
    pub bb3: CVec,
    /// `c_t,k = ω_k |β_k|² σ_t²`.
    pub ct: Vec<f64>,
    /// `c_r = σ_t² / Γ_r`.
    pub cr: f64,
    /// Interference part of the objective: `φ^H T10 φ − 2Re{t10^H φ} + c10`.
    pub t10: CMat,
    /// `T10 = F F^H` with `F = [√w_k S_k^T, √(w_k q_i) P_i^H u_k …]`.
    pub t10_factor: CMat,
    pub t10_lin: CVec,
    pub c10: f64,
    /// Interference part of the radar constraint.
    pub t0: CMat,
    /// `T0 = F F^H` with `F = [√q_i P_i^H u0 …, S_0^T]`.
    pub t0_factor: CMat,
    pub t00_lin: CVec,
    pub c20: f64,
}

fn interference_quadratic(
    inst: &Instance,
    dv: &DesignVariables,
    p: &[CMat],
    u: &CVec,
    s: &CMat,
    v: &CVec,
) -> (CMat, CVec, f64) {
    let m = inst.n_ris();
    let mut t = s.ad_mul(s).map(|z| z.conj());
    let mut lin = -s.tr_mul(v);
    let mut c = norm_sq(v) + inst.noise * norm_sq(u);
    for (i, pi) in p.iter().enumerate() {
        let a = pi.ad_mul(u);
        let direct = u.dotc(&inst.ch.h_bs_user[i]);
        t.ger(Complex64::new(dv.q[i], 0.0), &a, &a.conjugate(), Complex64::new(1.0, 0.0));
        lin -= &a * (direct * dv.q[i]);
        c += dv.q[i] * direct.norm_sqr();
    }
    debug_assert_eq!(t.nrows(), m);
    (t, lin, c)
}

impl PhaseTerms {
    pub fn new(inst: &Instance, dv: &DesignVariables, aux: &AuxState) -> Result<Self> {
        dv.check(inst)?;
        let ch = &inst.ch;
        let k_users = inst.n_users();
        let gr = &ch.g_bs_rx_ris;
        let grt = &ch.g_ris_target;
        let gtw = &ch.g_bs_tx_ris * &dv.w;
        let hsw = ch.h_self_interference.adjoint() * &dv.w;

        let p: Vec<CMat> = ch
            .h_ris_user
            .iter()
            .map(|h| {
                let mut pk = gr.adjoint();
                for (mut col, hm) in pk.column_iter_mut().zip(h.iter()) {
                    col *= *hm;
                }
                pk
            })
            .collect();

        let filters: Vec<&CVec> = dv.u.iter().chain(std::iter::once(&dv.u0)).collect();
        let mut r = Vec::with_capacity(k_users + 1);
        let mut v = Vec::with_capacity(k_users + 1);
        let mut s = Vec::with_capacity(k_users + 1);
        let mut b1 = Vec::with_capacity(k_users + 1);
        let mut b2 = Vec::with_capacity(k_users + 1);
        for u in &filters {
            let rk = gr * *u;
            let mut sk = gtw.adjoint();
            for (mut col, rm) in sk.column_iter_mut().zip(rk.iter()) {
                col *= *rm;
            }
            v.push(hsw.ad_mul(u).map(|z| z.conj()));
            b1.push(ch.g_bs_rx_target.dotc(u));
            b2.push(grt.map(|z| z.conj()).component_mul(&rk));
            r.push(rk);
            s.push(sk);
        }
        let b01 = b1.pop().unwrap();
        let b02 = b2.pop().unwrap();

        let b3 = dv.w.ad_mul(&ch.g_bs_tx_target);
        let mut b = gtw.clone();
        for (mut row, g) in b.row_iter_mut().zip(grt.iter()) {
            row *= *g;
        }
        let bc = b.map(|z| z.conj());
        let bbt = &bc * b.transpose();
        let bb3 = &bc * b3.map(|z| z.conj());

        let ct: Vec<f64> = (0..k_users)
            .map(|k| aux.omega[k] * aux.beta[k].norm_sqr() * inst.sigma_t2)
            .collect();
        let cr = inst.sigma_t2 / inst.gamma_r;

        let m = inst.n_ris();
        let nt = inst.n_tx();
        let mut t10_factor = CMat::zeros(m, k_users * (nt + k_users));
        let mut t10 = CMat::zeros(m, m);
        let mut t10_lin = CVec::zeros(m);
        let mut c10 = 0.0;
        for k in 0..k_users {
            let (omega, beta, q) = (aux.omega[k], aux.beta[k], dv.q[k]);
            let wk = omega * beta.norm_sqr();
            let (t, lin, c) = interference_quadratic(inst, dv, &p, &dv.u[k], &s[k], &v[k]);
            t10 += t * Complex64::new(wk, 0.0);
            let base = k * (nt + k_users);
            t10_factor
                .columns_mut(base, nt)
                .copy_from(&(s[k].transpose() * Complex64::new(wk.sqrt(), 0.0)));
            for (i, pi) in p.iter().enumerate() {
                let a = pi.ad_mul(&dv.u[k]) * Complex64::new((wk * dv.q[i]).sqrt(), 0.0);
                t10_factor.set_column(base + nt + i, &a);
            }
            t10_lin += lin * Complex64::new(wk, 0.0);
            t10_lin += p[k].ad_mul(&dv.u[k]) * (beta * omega * q.sqrt());
            let direct = dv.u[k].dotc(&ch.h_bs_user[k]);
            c10 += -omega.ln() + omega - 1.0 - 2.0 * omega * (beta.conj() * q.sqrt() * direct).re + wk * c;
        }
        hermitize(&mut t10);
        let (mut t0, t00_lin, c20) = interference_quadratic(inst, dv, &p, &dv.u0, &s[k_users], &v[k_users]);
        hermitize(&mut t0);
        let s0t = s[k_users].transpose();
        let mut t0_factor = CMat::zeros(m, k_users + s0t.ncols());
        for (i, pi) in p.iter().enumerate() {
            t0_factor.set_column(i, &(pi.ad_mul(&dv.u0) * Complex64::new(dv.q[i].sqrt(), 0.0)));
        }
        t0_factor.columns_mut(k_users, s0t.ncols()).copy_from(&s0t);

        Ok(PhaseTerms {
            p,
            r,
            v,
            s,
            b1,
            b2,
            b01,
            b02,
            b3,
            b,
            bbt,
            bb3,
            ct,
            cr,
            t10,
            t10_factor,
            t10_lin,
            c10,
            t0,
            t0_factor,
            t00_lin,
            c20,
        })
    }

    pub fn n_ris(&self) -> usize {
        self.b.nrows()
    }

    /// `‖z(φ)‖² = ‖b3* + B^T φ‖²`.
    pub fn z_norm_sq(&self, phi: &CVec) -> f64 {
        norm_sq(&(self.b3.map(|z| z.conj()) + self.b.tr_mul(phi)))
    }

    /// `s_k(ψ) = b1_k* + b2_k^H ψ`.
    pub fn s_user(&self, k: usize, psi: &CVec) -> Complex64 {
        self.b1[k].conj() + self.b2[k].dotc(psi)
    }

    pub fn s_radar(&self, psi: &CVec) -> Complex64 {
        self.b01.conj() + self.b02.dotc(psi)
    }

    fn quad(t: &CMat, lin: &CVec, c: f64, x: &CVec) -> f64 {
        quad_form(t, x) - 2.0 * lin.dotc(x).re + c
    }

    /// `−Σ R̃_k` with the target path's receive side reflected by `psi1`.
    pub fn objective(&self, phi: &CVec, psi1: &CVec) -> f64 {
        let zn = self.z_norm_sq(phi);
        let target: f64 = (0..self.ct.len())
            .map(|k| self.ct[k] * self.s_user(k, psi1).norm_sqr())
            .sum();
        Self::quad(&self.t10, &self.t10_lin, self.c10, phi) + target * zn
    }

    /// Radar constraint in `≤ 0` form.
    pub fn constraint(&self, phi: &CVec, psi1: &CVec) -> f64 {
        Self::quad(&self.t0, &self.t00_lin, self.c20, phi)
            - self.cr * self.s_radar(psi1).norm_sqr() * self.z_norm_sq(phi)
    }

    /// Vector data of the `φ`-subproblem; agrees with [`Self::p5`] without
    /// forming any `M × M` matrix. The objective matrix is
    /// `T10 + weight · B* B^T`.
    pub fn phi_step(&self, psi1: &CVec, anchor: &CVec) -> PhiStep {
        let weight: f64 = (0..self.ct.len())
            .map(|k| self.ct[k] * self.s_user(k, psi1).norm_sqr())
            .sum();
        let radar = self.cr * self.s_radar(psi1).norm_sqr();
        let bt_anchor = self.b.tr_mul(anchor);
        let bc = self.b.map(|z| z.conj());
        let lin = &self.t10_lin - &self.bb3 * Complex64::new(weight, 0.0);
        let cons_lin = &self.t00_lin + (&self.bb3 + &bc * &bt_anchor) * Complex64::new(radar, 0.0);
        let cons_scalar = self.c20 - radar * norm_sq(&self.b3) + radar * norm_sq(&bt_anchor);
        PhiStep {
            weight,
            lin,
            cons_lin,
            cons_scalar,
        }
    }

    /// Vector data of the `ψ1`-subproblem; agrees with [`Self::p7`]. The
    /// objective matrix is `Σ_k c_t,k ‖z(φ)‖² b2_k b2_k^H`.
    pub fn psi1_step(&self, phi: &CVec, anchor: &CVec) -> Psi1Step {
        let zn = self.z_norm_sq(phi);
        let m = self.n_ris();
        let mut lin = CVec::zeros(m);
        for k in 0..self.ct.len() {
            lin -= &self.b2[k] * (self.b1[k].conj() * (self.ct[k] * zn));
        }
        let rw = self.cr * zn;
        let t0_phi = norm_sq(&self.t0_factor.ad_mul(phi));
        let c2_tilde = t0_phi - 2.0 * self.t00_lin.dotc(phi).re + self.c20 - rw * self.b01.norm_sqr();
        let proj = self.b02.dotc(anchor);
        let cons_lin = &self.b02 * ((self.b01.conj() + proj) * rw);
        let cons_scalar = c2_tilde + rw * proj.norm_sqr();
        Psi1Step {
            z_norm_sq: zn,
            lin,
            cons_lin,
            cons_scalar,
        }
    }

    /// Coefficients of the `φ`-subproblem at fixed `ψ1`, with the concave
    /// part of the constraint linearized at `anchor`.
    pub fn p5(&self, psi1: &CVec, anchor: &CVec) -> P5CoeffSet {
        let b3n = norm_sq(&self.b3);
        let weight: f64 = (0..self.ct.len())
            .map(|k| self.ct[k] * self.s_user(k, psi1).norm_sqr())
            .sum();
        let w = Complex64::new(weight, 0.0);
        let t19 = &self.bbt * w;
        let t13 = -&self.bb3 * w;
        let c12 = weight * b3n;
        let radar = self.cr * self.s_radar(psi1).norm_sqr();
        let rw = Complex64::new(radar, 0.0);
        let t09 = &self.bbt * rw;
        let t03 = &self.bb3 * rw;
        let c22 = -radar * b3n;
        let mut t1_hat = &self.t10 + &t19;
        hermitize(&mut t1_hat);
        let t1_lin_hat = &self.t10_lin + &t13;
        let t0_lin_hat = &self.t00_lin + &t03;
        let c2_hat = self.c20 + c22;
        let t0_lin_acute = &t0_lin_hat + &t09 * anchor;
        let c2_acute = c2_hat + quad_form(&t09, anchor);
        P5CoeffSet {
            t19,
            t13,
            c12,
            t09,
            t03,
            c22,
            t1_hat,
            t1_lin_hat,
            c1_hat: self.c10 + c12,
            t0: self.t0.clone(),
            t0_factor: self.t0_factor.clone(),
            t0_lin_hat,
            c2_hat,
            anchor: anchor.clone(),
            t0_lin_acute,
            c2_acute,
        }
    }

    /// Coefficients of the `ψ1`-subproblem at fixed `φ`, with the concave
    /// constraint term linearized at `anchor`.
    pub fn p7(&self, phi: &CVec, anchor: &CVec) -> P7CoeffSet {
        let m = self.n_ris();
        let zn = self.z_norm_sq(phi);
        let mut t110 = CMat::zeros(m, m);
        let mut t14 = CVec::zeros(m);
        let mut c13 = 0.0;
        for k in 0..self.ct.len() {
            let w = self.ct[k] * zn;
            t110.ger(Complex64::new(w, 0.0), &self.b2[k], &self.b2[k].conjugate(), Complex64::new(1.0, 0.0));
            t14 -= &self.b2[k] * (self.b1[k].conj() * w);
            c13 += w * self.b1[k].norm_sqr();
        }
        hermitize(&mut t110);
        let rw = self.cr * zn;
        let t010 = &self.b02 * self.b02.adjoint() * Complex64::new(rw, 0.0);
        let t04 = &self.b02 * (self.b01.conj() * rw);
        let c23 = -rw * self.b01.norm_sqr();
        let c1_tilde = Self::quad(&self.t10, &self.t10_lin, self.c10, phi) + c13;
        let c2_tilde = Self::quad(&self.t0, &self.t00_lin, self.c20, phi) + c23;
        let t04_tilde = &t04 + &t010 * anchor;
        let c2_grave = c2_tilde + quad_form(&t010, anchor);
        P7CoeffSet {
            z_norm_sq: zn,
            c13,
            t14,
            t110,
            c23,
            t04,
            t010,
            c1_tilde,
            c2_tilde,
            anchor: anchor.clone(),
            t04_tilde,
            c2_grave,
        }
    }
}

/// `φ`-step vectors: objective `φ^H (T10 + weight·B*B^T) φ − 2Re{lin^H φ}`,
/// linearized constraint `φ^H T0 φ − 2Re{cons_lin^H φ} + cons_scalar ≤ 0`.
#[derive(Debug, Clone)]
pub struct PhiStep {
    pub weight: f64,
    pub lin: CVec,
    pub cons_lin: CVec,
    pub cons_scalar: f64,
}

/// `ψ1`-step vectors: objective `ψ^H T110 ψ − 2Re{lin^H ψ}`, affine
/// linearized constraint `−2Re{cons_lin^H ψ} + cons_scalar ≤ 0`.
#[derive(Debug, Clone)]
pub struct Psi1Step {
    pub z_norm_sq: f64,
    pub lin: CVec,
    pub cons_lin: CVec,
    pub cons_scalar: f64,
}

/// `φ`-subproblem data at fixed `ψ1`.
///
/// Objective `φ^H T̂1 φ − 2Re{t̂1^H φ} + ĉ1`; exact constraint
/// `φ^H T0 φ − 2Re{t̂0^H φ} + ĉ2 − φ^H T09 φ ≤ 0`; linearized constraint
/// `φ^H T0 φ − 2Re{t́0^H φ} + ć2 ≤ 0`.
#[derive(Debug, Clone)]
pub struct P5CoeffSet {
    pub t19: CMat,
    pub t13: CVec,
    pub c12: f64,
    pub t09: CMat,
    pub t03: CVec,
    pub c22: f64,
    pub t1_hat: CMat,
    pub t1_lin_hat: CVec,
    pub c1_hat: f64,
    pub t0: CMat,
    pub t0_factor: CMat,
    pub t0_lin_hat: CVec,
    pub c2_hat: f64,
    pub anchor: CVec,
    pub t0_lin_acute: CVec,
    pub c2_acute: f64,
}

impl P5CoeffSet {
    pub fn objective(&self, phi: &CVec) -> f64 {
        quad_form(&self.t1_hat, phi) - 2.0 * self.t1_lin_hat.dotc(phi).re + self.c1_hat
    }

    pub fn constraint(&self, phi: &CVec) -> f64 {
        quad_form(&self.t0, phi) - 2.0 * self.t0_lin_hat.dotc(phi).re + self.c2_hat - quad_form(&self.t09, phi)
    }

    pub fn linearized_constraint(&self, phi: &CVec) -> f64 {
        quad_form(&self.t0, phi) - 2.0 * self.t0_lin_acute.dotc(phi).re + self.c2_acute
    }
}

/// `ψ1`-subproblem data at fixed `φ`.
///
/// Objective `ψ^H T110 ψ − 2Re{t14^H ψ} + c̃1`; exact constraint
/// `−ψ^H T010 ψ − 2Re{t04^H ψ} + c̃2 ≤ 0`; linearized constraint
/// `−2Re{t̃04^H ψ} + c̀2 ≤ 0`.
#[derive(Debug, Clone)]
pub struct P7CoeffSet {
    pub z_norm_sq: f64,
    pub c13: f64,
    pub t14: CVec,
    pub t110: CMat,
    pub c23: f64,
    pub t04: CVec,
    pub t010: CMat,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
    pub anchor: CVec,
    pub t04_tilde: CVec,
    pub c2_grave: f64,
}

impl P7CoeffSet {
    pub fn objective(&self, psi: &CVec) -> f64 {
        quad_form(&self.t110, psi) - 2.0 * self.t14.dotc(psi).re + self.c1_tilde
    }

    pub fn constraint(&self, psi: &CVec) -> f64 {
        -quad_form(&self.t010, psi) - 2.0 * self.t04.dotc(psi).re + self.c2_tilde
    }

    pub fn linearized_constraint(&self, psi: &CVec) -> f64 {
        -2.0 * self.t04_tilde.dotc(psi).re + self.c2_grave
    }
}

/// Dense quartic representation of the phase subproblem.
///
/// Objective:
/// `φ^H T1 φ − 2Re{t1^H φ} + c1 + 2Re{φ^H T15 φ* + vec(φφ^T)^H T167 φ}
///  + vec(φφ^T)^H T18 vec(φφ^T)`,
/// and the constraint has the same shape with the target blocks subtracted.
/// The Kronecker blocks grow as `M⁴`, so this is only built for small
/// surfaces; the solvers work from [`PhaseTerms`].
#[derive(Debug, Clone)]
pub struct P2CoeffSet {
    /// `T_{1,0} … T_{1,8}`.
    pub t1_blocks: Vec<CMat>,
    pub t1_67: CMat,
    pub t1: CMat,
    /// `t_{1,0}, t_{1,1}, t_{1,2}`.
    pub t1_lins: [CVec; 3],
    pub t1_lin: CVec,
    pub c1_0: f64,
    pub c1_1: f64,
    pub c1: f64,
    pub ct: Vec<f64>,
    /// `T_0` (interference).
    pub t0: CMat,
    /// `T_{0,0} … T_{0,8}`; `T_{0,0}` is the sum of `T_{0,1..4}`.
    pub t0_blocks: Vec<CMat>,
    pub t0_67: CMat,
    /// `t_{0,0}, t_{0,1}, t_{0,2}`.
    pub t0_lins: [CVec; 3],
    pub t0_lin: CVec,
    pub c2_0: f64,
    pub c2_1: f64,
    pub c2: f64,
    pub cr: f64,
    /// `a_{1,k} = b1_k b3`.
    pub a1: Vec<CVec>,
    /// `a_0 = b01 b3`.
    pub a0: CVec,
    pub terms: PhaseTerms,
}

/// Target-path blocks for one filter: `(T1..T4, T5, T6, T7, T8, lin1, lin2, c)`
/// built from `c·|s(φ)|²‖z(φ)‖²`.
struct TargetBlocks {
    quad: [CMat; 4],
    t5: CMat,
    t6: CMat,
    t7: CMat,
    t8: CMat,
    lin1: CVec,
    lin2: CVec,
    c: f64,
}

fn target_blocks(t: &PhaseTerms, b1: Complex64, b2: &CVec, weight: f64) -> TargetBlocks {
    let w = Complex64::new(weight, 0.0);
    let b3n = norm_sq(&t.b3);
    let bb3 = &t.bb3;
    let b2b2h = b2 * b2.adjoint();
    let t1 = &t.bbt * (w * b1.norm_sqr());
    let t2 = b2 * (&t.b * &t.b3).transpose() * (w * b1.conj());
    let t3 = bb3 * b2.adjoint() * (w * b1);
    let t4 = &b2b2h * (w * b3n);
    let t5 = b2 * (t.b.conjugate() * t.b3.conjugate()).transpose() * (w * b1.conj());
    let t6 = kron(&t.bbt, &CMat::from_column_slice(b2.len(), 1, b2.as_slice())) * (w * b1.conj());
    let t7 = kron(&CMat::from_column_slice(bb3.len(), 1, bb3.as_slice()), &b2b2h) * w;
    let t8 = kron(&t.bbt, &b2b2h) * w;
    TargetBlocks {
        quad: [t1, t2, t3, t4],
        t5,
        t6,
        t7,
        t8,
        lin1: -bb3 * (w * b1.norm_sqr()),
        lin2: -b2 * (w * b1.conj() * b3n),
        c: weight * b1.norm_sqr() * b3n,
    }
}

/// Assemble the dense quartic coefficients of the phase subproblem.
pub fn build_p2_coeffs(inst: &Instance, dv: &DesignVariables, aux: &AuxState) -> Result<P2CoeffSet> {
    let m = inst.n_ris();
    if m > MAX_FULL_P2_RIS {
        return Err(Error::Unsupported(format!(
            "dense quartic coefficients need M ≤ {MAX_FULL_P2_RIS}, got {m}"
        )));
    }
    let terms = PhaseTerms::new(inst, dv, aux)?;
    let z = |r, c| CMat::zeros(r, c);
    let mut t1_blocks = vec![terms.t10.clone(), z(m, m), z(m, m), z(m, m), z(m, m), z(m, m), z(m * m, m), z(m * m, m), z(m * m, m * m)];
    let mut lin1 = CVec::zeros(m);
    let mut lin2 = CVec::zeros(m);
    let mut c1_1 = 0.0;
    for k in 0..inst.n_users() {
        let tb = target_blocks(&terms, terms.b1[k], &terms.b2[k], terms.ct[k]);
        for (i, q) in tb.quad.iter().enumerate() {
            t1_blocks[i + 1] += q;
        }
        t1_blocks[5] += tb.t5;
        t1_blocks[6] += tb.t6;
        t1_blocks[7] += tb.t7;
        t1_blocks[8] += tb.t8;
        lin1 += tb.lin1;
        lin2 += tb.lin2;
        c1_1 += tb.c;
    }
    let mut t1 = &t1_blocks[0] + &t1_blocks[1] + &t1_blocks[2] + &t1_blocks[3] + &t1_blocks[4];
    hermitize(&mut t1);
    let t1_67 = &t1_blocks[6] + &t1_blocks[7];
    let t1_lin = &terms.t10_lin + &lin1 + &lin2;

    let tb = target_blocks(&terms, terms.b01, &terms.b02, terms.cr);
    let mut t00 = &tb.quad[0] + &tb.quad[1] + &tb.quad[2] + &tb.quad[3];
    hermitize(&mut t00);
    let [q1, q2, q3, q4] = tb.quad;
    let t0_blocks = vec![t00, q1, q2, q3, q4, tb.t5, tb.t6.clone(), tb.t7.clone(), tb.t8];
    let t0_67 = &tb.t6 + &tb.t7;
    // Radar terms enter the constraint with a negative sign.
    let t0_lins = [terms.t00_lin.clone(), -tb.lin1, -tb.lin2];
    let t0_lin = &t0_lins[0] + &t0_lins[1] + &t0_lins[2];
    let c2_1 = -tb.c;

    let a1 = terms.b1.iter().map(|b| &terms.b3 * *b).collect();
    let a0 = &terms.b3 * terms.b01;
    Ok(P2CoeffSet {
        t1_blocks,
        t1_67,
        t1,
        t1_lins: [terms.t10_lin.clone(), lin1, lin2],
        t1_lin,
        c1_0: terms.c10,
        c1_1,
        c1: terms.c10 + c1_1,
        ct: terms.ct.clone(),
        t0: terms.t0.clone(),
        t0_blocks,
        t0_67,
        t0_lins,
        t0_lin,
        c2_0: terms.c20,
        c2_1,
        c2: terms.c20 + c2_1,
        cr: terms.cr,
        a1,
        a0,
        terms,
    })
}

fn quartic_tail(phi: &CVec, t5: &CMat, t67: &CMat, t8: &CMat) -> f64 {
    let vv = vec_outer_t(phi, phi);
    let conj = phi.map(|z| z.conj());
    let cross = phi.dotc(&(t5 * conj)) + vv.dotc(&(t67 * phi));
    2.0 * cross.re + vv.dotc(&(t8 * &vv)).re
}

impl P2CoeffSet {
    /// `−Σ R̃_k` as a quartic in `φ`.
    pub fn eval_objective(&self, phi: &CVec) -> f64 {
        quad_form(&self.t1, phi) - 2.0 * self.t1_lin.dotc(phi).re
            + self.c1
            + quartic_tail(phi, &self.t1_blocks[5], &self.t1_67, &self.t1_blocks[8])
    }

    /// Radar constraint value (`≤ 0` feasible) as a quartic in `φ`.
    pub fn eval_constraint(&self, phi: &CVec) -> f64 {
        quad_form(&self.t0, phi) - 2.0 * self.t0_lin.dotc(phi).re + self.c2
            - quad_form(&self.t0_blocks[0], phi)
            - quartic_tail(phi, &self.t0_blocks[5], &self.t0_67, &self.t0_blocks[8])
    }
}
