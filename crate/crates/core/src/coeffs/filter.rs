use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{eye, hermitize, quad_form, CMat, CVec};
use crate::metrics::{AuxState, DesignVariables, Effective, Instance};

/// Receive filter subproblems.
///
/// User filters minimize `u^H F_k u − 2Re{u^H h̃_k}`; the radar filter must
/// satisfy `u0^H E1 u0 − u0^H E2 u0 ≤ 0`.
#[derive(Debug, Clone)]
pub struct FilterProblemData {
    pub f: Vec<CMat>,
    pub h_tilde: Vec<CVec>,
    /// Total received covariance `R` shared by every user filter.
    pub r_total: CMat,
    /// Effective user channels, kept for the zero-weight fallback.
    pub h_u: Vec<CVec>,
    pub e1: CMat,
    pub e2: CMat,
    pub c6: f64,
}

pub fn build_filter_problems(inst: &Instance, dv: &DesignVariables, aux: &AuxState) -> Result<FilterProblemData> {
    dv.check(inst)?;
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let nr = inst.n_rx();
    let one = Complex64::new(1.0, 0.0);
    let mut users = CMat::zeros(nr, nr);
    for (h, q) in eff.h_u.iter().zip(&dv.q) {
        users.ger(Complex64::new(*q, 0.0), h, &h.conjugate(), one);
    }
    let gw = &eff.g * &dv.w;
    let hw = &eff.h * &dv.w;
    let si = &gw * gw.adjoint();
    let target = &hw * hw.adjoint();
    let noise = eye(nr) * Complex64::new(inst.noise, 0.0);
    let mut e1 = &users + &si + &noise;
    hermitize(&mut e1);
    let mut e2 = &target * Complex64::new(inst.sigma_t2 / inst.gamma_r, 0.0);
    hermitize(&mut e2);
    let mut r_total = &e1 + &target * Complex64::new(inst.sigma_t2, 0.0);
    hermitize(&mut r_total);
    let mut f = Vec::with_capacity(inst.n_users());
    let mut h_tilde = Vec::with_capacity(inst.n_users());
    let mut c6 = 0.0;
    for k in 0..inst.n_users() {
        let (omega, beta) = (aux.omega[k], aux.beta[k]);
        f.push(&r_total * Complex64::new(omega * beta.norm_sqr(), 0.0));
        h_tilde.push(&eff.h_u[k] * (beta.conj() * omega * dv.q[k].sqrt()));
        c6 += omega.ln() - omega + 1.0;
    }
    Ok(FilterProblemData {
        f,
        h_tilde,
        r_total,
        h_u: eff.h_u,
        e1,
        e2,
        c6,
    })
}

impl FilterProblemData {
    pub fn user_objective(&self, k: usize, u: &CVec) -> f64 {
        quad_form(&self.f[k], u) - 2.0 * u.dotc(&self.h_tilde[k]).re
    }

    /// `u0^H E1 u0 − u0^H E2 u0`.
    pub fn radar_constraint(&self, u0: &CVec) -> f64 {
        quad_form(&self.e1, u0) - quad_form(&self.e2, u0)
    }
}
