//! Closed-form user power allocation.

use serde::{Deserialize, Serialize};

use crate::coeffs::PowerProblemData;
use crate::error::{Error, Result};
use crate::qcqp::find_root_monotone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerCase {
    /// Box optimum already meets the radar budget.
    Unconstrained,
    /// Radar budget active with multiplier `ν* > 0`.
    BudgetActive,
}

#[derive(Debug, Clone)]
pub struct PowerSolution {
    /// Powers `q_k = p_k²`.
    pub q: Vec<f64>,
    pub nu: f64,
    pub case: PowerCase,
}

/// Amplitude of user `k` for multiplier `nu`:
/// `min{−b/(2a + 2νd), p̄}`, or 0 when `b ≥ 0`.
fn amplitude(pd: &PowerProblemData, k: usize, nu: f64) -> f64 {
    let b = pd.b[k];
    if b >= 0.0 {
        return 0.0;
    }
    let denom = 2.0 * (pd.a[k] + nu * pd.d[k]);
    if denom <= 0.0 {
        return pd.p_bar[k];
    }
    (-b / denom).min(pd.p_bar[k])
}

/// Box-constrained minimizer `p̂`.
pub fn box_optimum(pd: &PowerProblemData) -> Vec<f64> {
    (0..pd.n_users()).map(|k| amplitude(pd, k, 0.0)).collect()
}

fn budget_used(pd: &PowerProblemData, p: &[f64]) -> f64 {
    p.iter().zip(&pd.d).map(|(p, d)| d * p * p).sum()
}

/// Upper bound on the budget multiplier from any strictly feasible point:
/// `(obj(p̃) − obj(p̂)) / (ĉ5 − Σ d_k p̃_k²)`.
pub fn nu_upper_bound(pd: &PowerProblemData, p_interior: &[f64]) -> Result<f64> {
    let slack = pd.c5_hat - budget_used(pd, p_interior);
    if slack <= 0.0 {
        return Err(Error::Infeasible(format!(
            "point is not strictly inside the radar budget (slack {slack:.3e})"
        )));
    }
    let p_hat = box_optimum(pd);
    Ok(((pd.objective(p_interior) - pd.objective(&p_hat)) / slack).max(0.0))
}

/// Optimal powers for the amplitude-form problem.
///
/// Users with `b_k ≥ 0` are switched off. If the box optimum fits the radar
/// budget it is returned; otherwise the multiplier solving
/// `Σ d_k p_k(ν)² = ĉ5` is found on `[0, ν̄]` with `ν̄` from
/// [`nu_upper_bound`] at `p̃ = 0`.
pub fn solve_power(pd: &PowerProblemData, tol: f64) -> Result<PowerSolution> {
    let k_users = pd.n_users();
    if pd.c5_hat < 0.0 {
        return Err(Error::Infeasible(format!(
            "radar budget is negative ({:.3e}); restore radar feasibility first",
            pd.c5_hat
        )));
    }
    let p_hat = box_optimum(pd);
    let square = |p: Vec<f64>| p.into_iter().map(|x| x * x).collect::<Vec<_>>();
    if budget_used(pd, &p_hat) <= pd.c5_hat {
        return Ok(PowerSolution {
            q: square(p_hat),
            nu: 0.0,
            case: PowerCase::Unconstrained,
        });
    }
    if pd.c5_hat == 0.0 {
        // No budget: only users invisible to the radar filter may transmit.
        let p = (0..k_users).map(|k| if pd.d[k] > 0.0 { 0.0 } else { p_hat[k] }).collect();
        return Ok(PowerSolution {
            q: square(p),
            nu: f64::INFINITY,
            case: PowerCase::BudgetActive,
        });
    }
    let g = |nu: f64| -> (f64, f64) {
        let mut value = -pd.c5_hat;
        let mut slope = 0.0;
        for k in 0..k_users {
            let p = amplitude(pd, k, nu);
            value += pd.d[k] * p * p;
            let unclamped = pd.b[k] < 0.0 && p < pd.p_bar[k];
            if unclamped {
                let s = pd.a[k] + nu * pd.d[k];
                slope += 2.0 * pd.d[k] * p * pd.b[k] * pd.d[k] / (2.0 * s * s);
            }
        }
        (value, slope)
    };
    let mut hi = nu_upper_bound(pd, &vec![0.0; k_users])?;
    // Guard against roundoff in the bound.
    let mut guard = 0;
    while g(hi).0 > 0.0 {
        hi = if hi > 0.0 { hi * 2.0 } else { 1.0 };
        guard += 1;
        if guard > 200 {
            return Err(Error::Infeasible("radar budget cannot be met by any multiplier".into()));
        }
    }
    let nu = find_root_monotone(g, [0.0, hi], tol * pd.c5_hat)?;
    let mut p: Vec<f64> = (0..k_users).map(|k| amplitude(pd, k, nu)).collect();
    let used = budget_used(pd, &p);
    if used > pd.c5_hat {
        let s = (pd.c5_hat / used).sqrt();
        p.iter_mut().for_each(|x| *x *= s);
    }
    Ok(PowerSolution {
        q: square(p),
        nu,
        case: PowerCase::BudgetActive,
    })
}
