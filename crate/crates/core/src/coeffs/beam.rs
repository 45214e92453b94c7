use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{hermitize, kron_eye, norm_sq, quad_form, CMat, CVec};
use crate::metrics::{AuxState, DesignVariables, Effective, Instance};

/// Beamformer subproblem over `w = vec(W)`.
///
/// Objective `w^H D1 w − c3`; exact radar constraint
/// `w^H D2 w + c4 − w^H D3 w ≤ 0`; linearized at `w0` as
/// `w^H D2 w − 2Re{d3^H w} + ĉ4 ≤ 0`.
#[derive(Debug, Clone)]
pub struct WProblemData {
    pub n_tx: usize,
    /// Per-column blocks: `D_i = I ⊗ blocks.i`.
    pub d1_block: CMat,
    pub d2_block: CMat,
    pub d3_block: CMat,
    pub d1: CMat,
    pub d2: CMat,
    pub d3_mat: CMat,
    pub c3: f64,
    pub c4: f64,
    pub w0: CVec,
    pub d3: CVec,
    pub c4_hat: f64,
}

pub fn build_w_problem(inst: &Instance, dv: &DesignVariables, aux: &AuxState, w_anchor: &CVec) -> Result<WProblemData> {
    dv.check(inst)?;
    let nt = inst.n_tx();
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let one = Complex64::new(1.0, 0.0);
    let mut d1_block = CMat::zeros(nt, nt);
    let mut c3 = 0.0;
    for k in 0..inst.n_users() {
        let u = &dv.u[k];
        let (omega, beta, q) = (aux.omega[k], aux.beta[k], dv.q[k]);
        let wk = omega * beta.norm_sqr();
        let hu = eff.h.ad_mul(u);
        let gu = eff.g.ad_mul(u);
        d1_block.ger(Complex64::new(wk * inst.sigma_t2, 0.0), &hu, &hu.conjugate(), one);
        d1_block.ger(Complex64::new(wk, 0.0), &gu, &gu.conjugate(), one);
        let users: f64 = eff.h_u.iter().zip(&dv.q).map(|(h, qi)| qi * u.dotc(h).norm_sqr()).sum();
        let cross = (beta.conj() * q.sqrt() * u.dotc(&eff.h_u[k])).re;
        let e_rest = 1.0 - 2.0 * cross + beta.norm_sqr() * (users + inst.noise * norm_sq(u));
        c3 -= -omega.ln() + omega * e_rest - 1.0;
    }
    hermitize(&mut d1_block);
    let u0 = &dv.u0;
    let gu0 = eff.g.ad_mul(u0);
    let hu0 = eff.h.ad_mul(u0);
    let d2_block = &gu0 * gu0.adjoint();
    let d3_block = &hu0 * hu0.adjoint() * Complex64::new(inst.sigma_t2 / inst.gamma_r, 0.0);
    let c4 = eff.h_u.iter().zip(&dv.q).map(|(h, q)| q * u0.dotc(h).norm_sqr()).sum::<f64>() + inst.noise * norm_sq(u0);
    let d3_mat = kron_eye(nt, &d3_block);
    let d3 = &d3_mat * w_anchor;
    let c4_hat = c4 + quad_form(&d3_mat, w_anchor);
    Ok(WProblemData {
        n_tx: nt,
        d1: kron_eye(nt, &d1_block),
        d2: kron_eye(nt, &d2_block),
        d3_mat,
        d1_block,
        d2_block,
        d3_block,
        c3,
        c4,
        w0: w_anchor.clone(),
        d3,
        c4_hat,
    })
}

impl WProblemData {
    /// `w^H D1 w − c3`, equal to `−Σ R̃_k`.
    pub fn objective(&self, w: &CVec) -> f64 {
        quad_form(&self.d1, w) - self.c3
    }

    pub fn constraint(&self, w: &CVec) -> f64 {
        quad_form(&self.d2, w) + self.c4 - quad_form(&self.d3_mat, w)
    }

    pub fn linearized_constraint(&self, w: &CVec) -> f64 {
        quad_form(&self.d2, w) - 2.0 * self.d3.dotc(w).re + self.c4_hat
    }

    /// Re-anchor the linearization at `w0`.
    pub fn reanchor(&mut self, w0: &CVec) {
        self.d3 = &self.d3_mat * w0;
        self.c4_hat = self.c4 + quad_form(&self.d3_mat, w0);
        self.w0 = w0.clone();
    }
}
