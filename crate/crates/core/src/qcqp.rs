//! Closed-form KKT solvers for convex quadratic programs with one quadratic
//! constraint or a norm ball, and the scalar root finder they share.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, hermitian_eigen, norm_sq, quad_form, CMat, CVec};

/// Largest normalized multiplier tried before declaring infeasibility;
/// well-posed but badly conditioned constraints can need very large ones.
const MAX_MULTIPLIER: f64 = 1e30;

/// `min x^H Q x − 2Re{q^H x} + q_s`
/// s.t. `x^H Q̄ x − 2Re{q̄^H x} + q̄_s ≤ 0`.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub q_matrix: CMat,
    pub q_vector: CVec,
    pub q_scalar: f64,
    pub cons_matrix: CMat,
    pub cons_vector: CVec,
    pub cons_scalar: f64,
    /// Optional factor `F` with `Q̄ = F F^H`; lets low-rank constraints be
    /// solved without an eigendecomposition.
    pub cons_factor: Option<CMat>,
}

impl QcqpProblem {
    pub fn new(q_matrix: CMat, q_vector: CVec, cons_matrix: CMat, cons_vector: CVec, cons_scalar: f64) -> Self {
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

    pub fn with_factor(mut self, f: CMat) -> Self {
        self.cons_factor = Some(f);
        self
    }

    pub fn dim(&self) -> usize {
        self.q_vector.len()
    }

    pub fn objective(&self, x: &CVec) -> f64 {
        quad_form(&self.q_matrix, x) - 2.0 * self.q_vector.dotc(x).re + self.q_scalar
    }

    pub fn constraint(&self, x: &CVec) -> f64 {
        quad_form(&self.cons_matrix, x) - 2.0 * self.cons_vector.dotc(x).re + self.cons_scalar
    }

    /// `‖Qx − q + ς(Q̄x − q̄)‖`.
    pub fn stationarity_residual(&self, x: &CVec, multiplier: f64) -> f64 {
        let g = &self.q_matrix * x - &self.q_vector;
        let c = &self.cons_matrix * x - &self.cons_vector;
        (g + c * Complex64::new(multiplier, 0.0)).norm()
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        let dims = [
            ("objective matrix rows", self.q_matrix.nrows()),
            ("objective matrix cols", self.q_matrix.ncols()),
            ("constraint matrix rows", self.cons_matrix.nrows()),
            ("constraint matrix cols", self.cons_matrix.ncols()),
            ("constraint vector", self.cons_vector.len()),
        ];
        for (context, got) in dims {
            if got != n {
                return Err(Error::Dimension { context, expected: n, got });
            }
        }
        if let Some(f) = &self.cons_factor {
            if f.nrows() != n {
                return Err(Error::Dimension {
                    context: "constraint factor rows",
                    expected: n,
                    got: f.nrows(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QcqpCase {
    /// Unconstrained minimizer is feasible.
    Interior,
    /// Constraint active with a positive multiplier.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub x: CVec,
    pub multiplier: f64,
    pub case: QcqpCase,
}

/// Low-rank factor of a PSD matrix from its eigendecomposition.
fn psd_factor(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let eig = hermitian_eigen(a);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-14 * lmax && lmax > 0.0).collect();
    let mut f = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        f.set_column(j, &(eig.eigenvectors.column(i) * Complex64::new(s, 0.0)));
    }
    f
}

/// Solver state in whitened coordinates `y = L^H x` with `Q = L L^H`:
/// objective `‖y‖² − 2Re{a^H y}`, constraint `‖Y^H y‖² − 2Re{b^H y} + s`.
struct Whitened {
    a: CVec,
    b: CVec,
    s: f64,
    /// `Y V`, columns orthogonal with squared norms `lambda`.
    yv: CMat,
    lambda: Vec<f64>,
}

impl Whitened {
    /// `y(ς) = (I + ς Y Y^H)^{-1}(a + ς b)`.
    fn y(&self, sigma: f64) -> CVec {
        let z = &self.a + &self.b * Complex64::new(sigma, 0.0);
        self.apply_inverse(&z, sigma)
    }

    fn apply_inverse(&self, z: &CVec, sigma: f64) -> CVec {
        let mut out = z.clone();
        if self.lambda.is_empty() {
            return out;
        }
        let coeff = self.yv.ad_mul(z);
        for (j, l) in self.lambda.iter().enumerate() {
            if *l > 0.0 {
                let w = coeff[j] * (sigma / (1.0 + sigma * l));
                out.axpy(-w, &self.yv.column(j), Complex64::new(1.0, 0.0));
            }
        }
        out
    }

    fn cons_quad(&self, y: &CVec) -> CVec {
        if self.lambda.is_empty() {
            return CVec::zeros(y.len());
        }
        let coeff = self.yv.ad_mul(y);
        &self.yv * coeff
    }

    /// Constraint value and its derivative in `ς`.
    fn g(&self, sigma: f64) -> (f64, f64) {
        let y = self.y(sigma);
        let qy = self.cons_quad(&y);
        let value = y.dotc(&qy).re - 2.0 * self.b.dotc(&y).re + self.s;
        let r = qy - &self.b;
        let slope = -2.0 * r.dotc(&self.apply_inverse(&r, sigma)).re;
        (value, slope)
    }
}

/// Minimize a strictly convex quadratic subject to one convex quadratic
/// constraint.
///
/// If the unconstrained minimizer `Q⁻¹q` is feasible it is returned;
/// otherwise the multiplier `ς* > 0` solving `g(ς) = 0` is found by
/// safeguarded Newton iterations and `(Q + ς*Q̄)⁻¹(q + ς*q̄)` is returned.
pub fn solve_qcqp(p: &QcqpProblem, tol: f64) -> Result<QcqpSolution> {
    p.check()?;
    let factor = match &p.cons_factor {
        Some(f) => f.clone(),
        None => psd_factor(&p.cons_matrix),
    };
    PreparedQcqp::new(&p.q_matrix, &factor)?.solve(&p.q_vector, &p.cons_vector, p.cons_scalar, tol)
}

/// A factor `L` of the objective matrix, `Q = L L^H`.
#[derive(Debug, Clone)]
enum Whitener {
    /// Lower Cholesky factor.
    Cholesky(CMat),
    /// Symmetric square root of `αI + U U^H`, stored through an orthonormal
    /// basis `V` of `range(U)` with `U U^H = V diag(s) V^H`.
    LowRank {
        n: usize,
        inv_sqrt_alpha: f64,
        basis: CMat,
        /// `1/√(α + s_j) − 1/√α` per basis column.
        correction: Vec<f64>,
    },
}

impl Whitener {
    fn dim(&self) -> usize {
        match self {
            Whitener::Cholesky(l) => l.nrows(),
            Whitener::LowRank { n, .. } => *n,
        }
    }

    /// `L⁻¹ v`.
    fn solve(&self, v: &CVec) -> CVec {
        match self {
            Whitener::Cholesky(l) => l.solve_lower_triangular(v).expect("Cholesky factor is nonsingular"),
            Whitener::LowRank { .. } => self.apply_symmetric(v),
        }
    }

    /// `L^{-H} y`.
    fn back(&self, y: &CVec) -> CVec {
        match self {
            Whitener::Cholesky(l) => l.adjoint().solve_upper_triangular(y).expect("Cholesky factor is nonsingular"),
            Whitener::LowRank { .. } => self.apply_symmetric(y),
        }
    }

    fn apply_symmetric(&self, v: &CVec) -> CVec {
        let Whitener::LowRank {
            inv_sqrt_alpha,
            basis,
            correction,
            ..
        } = self
        else {
            unreachable!("only the low-rank whitener is symmetric")
        };
        let mut coeff = basis.ad_mul(v);
        for (c, k) in coeff.iter_mut().zip(correction) {
            *c *= *k;
        }
        v * Complex64::new(*inv_sqrt_alpha, 0.0) + basis * coeff
    }

    fn solve_columns(&self, f: &CMat) -> CMat {
        let mut y = f.clone();
        for j in 0..y.ncols() {
            let col = self.solve(&y.column(j).into_owned());
            y.set_column(j, &col);
        }
        y
    }
}

/// Matrix work of [`solve_qcqp`] done once for fixed `Q` and `Q̄ = F F^H`,
/// so problems differing only in their linear and constant terms are cheap.
#[derive(Debug, Clone)]
pub struct PreparedQcqp {
    l: Whitener,
    /// Whitened constraint factor rotated to orthogonal columns.
    yv: CMat,
    lambda: Vec<f64>,
}

impl PreparedQcqp {
    pub fn new(q_matrix: &CMat, cons_factor: &CMat) -> Result<Self> {
        let n = q_matrix.nrows();
        if q_matrix.ncols() != n || cons_factor.nrows() != n {
            return Err(Error::Dimension {
                context: "prepared QCQP factor rows",
                expected: n,
                got: cons_factor.nrows(),
            });
        }
        let l = Whitener::Cholesky(cholesky(q_matrix, "QCQP objective matrix")?.l());
        Ok(Self::with_whitener(l, cons_factor))
    }

    /// Objective matrix `Q = αI + U U^H` with `α > 0` and `U` thin.
    ///
    /// Costs `O(n r²)` for `r` columns of `U` instead of the `O(n³)` of a
    /// dense factorization.
    pub fn identity_plus_low_rank(alpha: f64, u: &CMat, cons_factor: &CMat) -> Result<Self> {
        let n = u.nrows();
        if cons_factor.nrows() != n {
            return Err(Error::Dimension {
                context: "prepared QCQP factor rows",
                expected: n,
                got: cons_factor.nrows(),
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::NotPositiveDefinite("QCQP objective matrix"));
        }
        let gram = u.ad_mul(u);
        let (basis, s) = if gram.nrows() > 0 {
            let eig = hermitian_eigen(&gram);
            let smax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..gram.nrows())
                .filter(|&j| eig.eigenvalues[j] > 1e-13 * smax && eig.eigenvalues[j] > 0.0)
                .collect();
            let mut basis = CMat::zeros(n, keep.len());
            let mut s = Vec::with_capacity(keep.len());
            for (c, &j) in keep.iter().enumerate() {
                let sj = eig.eigenvalues[j];
                let col = u * eig.eigenvectors.column(j) / Complex64::new(sj.sqrt(), 0.0);
                basis.set_column(c, &col);
                s.push(sj);
            }
            (basis, s)
        } else {
            (CMat::zeros(n, 0), vec![])
        };
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        let correction = s.iter().map(|sj| 1.0 / (alpha + sj).sqrt() - inv_sqrt_alpha).collect();
        let l = Whitener::LowRank {
            n,
            inv_sqrt_alpha,
            basis,
            correction,
        };
        Ok(Self::with_whitener(l, cons_factor))
    }

    fn with_whitener(l: Whitener, cons_factor: &CMat) -> Self {
        let y = l.solve_columns(cons_factor);
        let c = y.ad_mul(&y);
        let (yv, lambda) = if c.nrows() > 0 {
            let eig = hermitian_eigen(&c);
            let lambda: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
            (&y * &eig.eigenvectors, lambda)
        } else {
            (y, vec![])
        };
        PreparedQcqp { l, yv, lambda }
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    fn solve_l(&self, v: &CVec) -> CVec {
        self.l.solve(v)
    }

    fn back(&self, y: &CVec) -> CVec {
        self.l.back(y)
    }

    /// Solve with objective vector `q` and constraint terms `q̄`, `s`.
    pub fn solve(&self, q_vector: &CVec, cons_vector: &CVec, cons_scalar: f64, tol: f64) -> Result<QcqpSolution> {
        let n = self.dim();
        for (context, got) in [("objective vector", q_vector.len()), ("constraint vector", cons_vector.len())] {
            if got != n {
                return Err(Error::Dimension { context, expected: n, got });
            }
        }
        let a = self.solve_l(q_vector);
        let b = self.solve_l(cons_vector);
        // Normalize the constraint so its curvature (or slope) is O(1).
        let lmax = self.lambda.iter().cloned().fold(0.0, f64::max);
        let gamma = if lmax > 0.0 { lmax } else { b.norm() };
        if gamma == 0.0 {
            // Constant constraint: either void or unsatisfiable.
            if cons_scalar <= 0.0 {
                return Ok(QcqpSolution {
                    x: self.back(&a),
                    multiplier: 0.0,
                    case: QcqpCase::Interior,
                });
            }
            return Err(Error::Infeasible(format!("constant constraint {cons_scalar:.3e} ≤ 0 cannot hold")));
        }
        let a_norm = a.norm();
        let scale = (cons_scalar.abs() + b.norm() * a_norm + lmax * a_norm * a_norm) / gamma;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let w = Whitened {
            a,
            b: b / Complex64::new(gamma, 0.0),
            s: cons_scalar / gamma,
            yv: &self.yv / Complex64::new(gamma.sqrt(), 0.0),
            lambda: self.lambda.iter().map(|v| v / gamma).collect(),
        };

        let (g0, _) = w.g(0.0);
        if g0 <= tol * scale {
            return Ok(QcqpSolution {
                x: self.back(&w.a),
                multiplier: 0.0,
                case: QcqpCase::Interior,
            });
        }
        let mut hi = 1.0;
        let mut g_hi = w.g(hi).0;
        while g_hi > 0.0 {
            hi *= 2.0;
            if hi > MAX_MULTIPLIER {
                return Err(Error::Infeasible(format!(
                    "constraint value stays positive ({:.3e}) for multipliers up to {MAX_MULTIPLIER:.0e}",
                    g_hi * gamma
                )));
            }
            g_hi = w.g(hi).0;
        }
        let sigma = find_root_monotone(|s| w.g(s), [0.0, hi], tol * scale)?;
        Ok(QcqpSolution {
            x: self.back(&w.y(sigma)),
            multiplier: sigma / gamma,
            case: QcqpCase::Boundary,
        })
    }
}

/// `min x^H D̄ x − 2Re{d̄^H x}` s.t. `‖x‖² ≤ radius_sq`.
///
/// Returns the minimizer and the ball multiplier `κ*`.
pub fn solve_ball_qp(d_bar: &CMat, d_vec: &CVec, radius_sq: f64, tol: f64) -> Result<(CVec, f64)> {
    BallQp::new(d_bar)?.solve(d_vec, radius_sq, tol)
}

/// Ball-constrained QP with a cached eigendecomposition of `D̄`, for
/// repeated solves with a changing linear term.
#[derive(Debug, Clone)]
pub struct BallQp {
    vectors: CMat,
    lam: Vec<f64>,
}

impl BallQp {
    pub fn new(d_bar: &CMat) -> Result<Self> {
        if d_bar.nrows() != d_bar.ncols() {
            return Err(Error::Dimension {
                context: "ball QP matrix",
                expected: d_bar.nrows(),
                got: d_bar.ncols(),
            });
        }
        let eig = hermitian_eigen(d_bar);
        let lam: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        if lam.iter().any(|l| *l <= 0.0) {
            return Err(Error::NotPositiveDefinite("ball QP matrix"));
        }
        Ok(BallQp {
            vectors: eig.eigenvectors,
            lam,
        })
    }

    pub fn solve(&self, d_vec: &CVec, radius_sq: f64, tol: f64) -> Result<(CVec, f64)> {
        if radius_sq <= 0.0 {
            return Err(Error::Config {
                field: "radius_sq".into(),
                reason: format!("must be positive, got {radius_sq}"),
            });
        }
        let n = self.lam.len();
        if d_vec.len() != n {
            return Err(Error::Dimension {
                context: "ball QP vector",
                expected: n,
                got: d_vec.len(),
            });
        }
        let lam = &self.lam;
        let c = self.vectors.ad_mul(d_vec);
        let c2: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let h = |k: f64| -> (f64, f64) {
            let mut v = -radius_sq;
            let mut dv = 0.0;
            for (ci, li) in c2.iter().zip(lam) {
                let d = li + k;
                v += ci / (d * d);
                dv -= 2.0 * ci / (d * d * d);
            }
            (v, dv)
        };
        let build = |k: f64| -> CVec {
            let z = CVec::from_iterator(n, c.iter().zip(lam).map(|(ci, li)| ci / (li + k)));
            &self.vectors * z
        };
        if h(0.0).0 <= 0.0 {
            return Ok((build(0.0), 0.0));
        }
        // ‖x(κ)‖ ≤ ‖d̄‖/(λmin + κ), so this bracket always holds a sign change.
        let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = (d_vec.norm() / radius_sq.sqrt() - lmin).max(0.0) * 1.01 + f64::MIN_POSITIVE;
        let kappa = find_root_monotone(h, [0.0, hi], tol * radius_sq)?;
        let x = build(kappa);
        // Pull onto the ball exactly; the correction is at the tolerance level.
        let nx = norm_sq(&x);
        let x = if nx > radius_sq { x * Complex64::new((radius_sq / nx).sqrt(), 0.0) } else { x };
        Ok((x, kappa))
    }
}

/// Root of a monotone function on a sign-changing bracket.
///
/// `g` returns the value and derivative. Newton steps are taken when they
/// stay inside the bracket and at least halve `|g|`; otherwise the bracket
/// is bisected.
pub fn find_root_monotone(mut g: impl FnMut(f64) -> (f64, f64), bracket: [f64; 2], tol: f64) -> Result<f64> {
    let [mut lo, mut hi] = bracket;
    let (g_lo, _) = g(lo);
    if g_lo.abs() <= tol {
        return Ok(lo);
    }
    let (g_hi, _) = g(hi);
    if g_hi.abs() <= tol {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, g_lo, g_hi });
    }
    let lo_positive = g_lo > 0.0;
    let mut x = 0.5 * (lo + hi);
    let (mut gx, mut dx) = g(x);
    for _ in 0..500 {
        if gx.abs() <= tol {
            return Ok(x);
        }
        if (gx > 0.0) == lo_positive {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let mut next = None;
        if dx != 0.0 && dx.is_finite() {
            let cand = x - gx / dx;
            if cand > lo && cand < hi {
                let (gc, dc) = g(cand);
                if gc.abs() <= 0.5 * gx.abs() {
                    next = Some((cand, gc, dc));
                }
            }
        }
        let (nx, ng, nd) = match next {
            Some(v) => v,
            None => {
                let mid = 0.5 * (lo + hi);
                let (gm, dm) = g(mid);
                (mid, gm, dm)
            }
        };
        x = nx;
        gx = ng;
        dx = nd;
    }
    Ok(x)
}
