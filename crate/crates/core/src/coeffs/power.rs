use crate::error::Result;
use crate::metrics::{AuxState, DesignVariables, Effective, Instance, Received};

/// User power subproblem over `p_k = √q_k`.
///
/// Objective `Σ a_k p_k² + Σ b_k p_k − c5`; radar budget
/// `Σ d_k p_k² ≤ ĉ5`; box `0 ≤ p_k ≤ p̄_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProblemData {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub c5: f64,
    pub c5_hat: f64,
    pub p_bar: Vec<f64>,
}

pub fn build_power_problem(inst: &Instance, dv: &DesignVariables, aux: &AuxState) -> Result<PowerProblemData> {
    dv.check(inst)?;
    let eff = Effective::new(&inst.ch, &dv.phi)?;
    let k_users = inst.n_users();
    let mut a = vec![0.0; k_users];
    let mut b = vec![0.0; k_users];
    let mut c5 = 0.0;
    for j in 0..k_users {
        let r = Received::new(inst, &eff, &dv.w, &dv.u[j]);
        let wj = aux.omega[j] * aux.beta[j].norm_sqr();
        for (ak, g) in a.iter_mut().zip(&r.user_gain) {
            *ak += wj * g;
        }
        b[j] = -2.0 * aux.omega[j] * (aux.beta[j].conj() * dv.u[j].dotc(&eff.h_u[j])).re;
        c5 -= -aux.omega[j].ln() + aux.omega[j] - 1.0 + wj * (r.target + r.si + r.noise);
    }
    let r0 = Received::new(inst, &eff, &dv.w, &dv.u0);
    Ok(PowerProblemData {
        a,
        b,
        d: r0.user_gain.clone(),
        c5,
        c5_hat: r0.target / inst.gamma_r - r0.si - r0.noise,
        p_bar: inst.p_user.iter().map(|p| p.sqrt()).collect(),
    })
}

impl PowerProblemData {
    pub fn n_users(&self) -> usize {
        self.a.len()
    }

    /// Objective in amplitude form.
    pub fn objective(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, pk)| self.a[k] * pk * pk + self.b[k] * pk)
            .sum::<f64>()
            - self.c5
    }

    /// `Σ d_k p_k² − ĉ5`.
    pub fn constraint(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.d).map(|(pk, dk)| dk * pk * pk).sum::<f64>() - self.c5_hat
    }
}
