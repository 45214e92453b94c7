//! Geometry, steering vectors and random channel realizations.
//!
//! The BS transmit and receive ULAs lie along the y axis; a ULA angle is the
//! angle between the propagation direction and the array broadside, so
//! `sin θ` is the y component of the unit direction vector. The RIS is a
//! uniform planar array; for a direction leaving the RIS the elevation is the
//! polar angle from +z and the azimuth is measured in the x–y plane from +x.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::linalg::{c, cr, CMat, CVec, ONE};

/// ULA response `[1, e^{-j2π d sinθ}, …]`.
pub fn steering_vector_ula(n: usize, spacing_ratio: f64, angle: f64) -> CVec {
    let step = -2.0 * PI * spacing_ratio * angle.sin();
    CVec::from_fn(n, |i, _| Complex64::cis(step * i as f64))
}

fn ula_positive(n: usize, spacing_ratio: f64, g: f64) -> CVec {
    let step = 2.0 * PI * spacing_ratio * g;
    CVec::from_fn(n, |i, _| Complex64::cis(step * i as f64))
}

/// UPA response `a_{M1}(½ sinθe cosθz) ⊗ a_{M2}(½ cosθe)`.
pub fn steering_vector_ris(m1: usize, m2: usize, spacing_ratio: f64, elev: f64, azim: f64) -> CVec {
    let g1 = 0.5 * elev.sin() * azim.cos();
    let g2 = 0.5 * elev.cos();
    let a1 = ula_positive(m1, spacing_ratio, g1);
    let a2 = ula_positive(m2, spacing_ratio, g2);
    a1.kronecker(&a2)
}

pub type Point = [f64; 3];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Angle of `to` seen from a y-axis ULA at `from`.
pub fn ula_angle(from: Point, to: Point) -> f64 {
    let d = sub(to, from);
    (d[1] / norm3(d)).clamp(-1.0, 1.0).asin()
}

/// (elevation, azimuth) of `to` seen from the RIS at `from`.
pub fn ris_angles(from: Point, to: Point) -> (f64, f64) {
    let d = sub(to, from);
    let r = norm3(d);
    ((d[2] / r).clamp(-1.0, 1.0).acos(), d[1].atan2(d[0]))
}

/// Large-scale attenuation `C0 (d/d0)^{-α}` with `d0 = 1 m`.
pub fn path_loss(c0: f64, distance: f64, exponent: f64) -> f64 {
    c0 * distance.powf(-exponent)
}

fn cn01(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cn_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn01(rng))
}

pub fn cn_vector(n: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(n, |_, _| cn01(rng))
}

/// `√(κ/(1+κ)) LoS + √(1/(1+κ)) NLoS` with unit-variance NLoS entries.
pub fn rician(los: &CMat, kappa: f64, rng: &mut impl Rng) -> CMat {
    let nlos = cn_matrix(los.nrows(), los.ncols(), rng);
    los * cr((kappa / (1.0 + kappa)).sqrt()) + nlos * cr((1.0 / (1.0 + kappa)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Point,
    pub ris: Point,
    pub target: Point,
    pub users: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    /// AoD of the target at the BS TX array.
    pub theta_t: f64,
    /// AoA of the target at the BS RX array.
    pub theta_r: f64,
    /// Elevation / azimuth of the target seen from the RIS.
    pub ris_elev: f64,
    pub ris_azim: f64,
}

/// One realization of every propagation link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS TX → RIS, `M × N_t`.
    pub g_bs_tx_ris: CMat,
    /// BS RX → RIS, `M × N_r`.
    pub g_bs_rx_ris: CMat,
    /// User k → BS RX, `N_r`.
    pub h_bs_user: Vec<CVec>,
    /// User k → RIS, `M`.
    pub h_ris_user: Vec<CVec>,
    /// RIS → target, `M`.
    pub g_ris_target: CVec,
    /// BS TX → target, `N_t`.
    pub g_bs_tx_target: CVec,
    /// BS RX → target, `N_r`.
    pub g_bs_rx_target: CVec,
    /// Self interference, `N_t × N_r`.
    pub h_self_interference: CMat,
    /// `(α_t, α_r, α_RT)`.
    pub fading_coeffs: [Complex64; 3],
    pub angles: Angles,
    pub geometry: Geometry,
}

fn sample_geometry(s: &Scenario, rng: &mut impl Rng) -> Result<Geometry> {
    let p = &s.cfg.positions;
    let uni = |rng: &mut dyn rand::RngCore, r: [f64; 2]| -> f64 {
        if r[1] > r[0] {
            r[0] + (r[1] - r[0]) * rng.random::<f64>()
        } else {
            r[0]
        }
    };
    let target = [uni(rng, p.target_x), uni(rng, p.target_y), uni(rng, p.target_z)];
    let users = (0..s.n_users())
        .map(|_| {
            let r = p.user_radius * rng.random::<f64>().sqrt();
            let ang = PI * (rng.random::<f64>() - 0.5);
            [p.ris[0] + r * ang.cos(), p.ris[1] + r * ang.sin(), p.user_altitude]
        })
        .collect();
    let geo = Geometry {
        bs: p.bs,
        ris: p.ris,
        target,
        users,
    };
    check_geometry(&geo)?;
    Ok(geo)
}

fn check_geometry(geo: &Geometry) -> Result<()> {
    let too_close = |a: Point, b: Point| norm3(sub(a, b)) < 1e-9;
    if too_close(geo.bs, geo.ris) {
        return Err(Error::Config {
            field: "positions.ris".into(),
            reason: "RIS coincides with the BS".into(),
        });
    }
    for (name, anchor) in [("BS", geo.bs), ("RIS", geo.ris)] {
        if too_close(geo.target, anchor) {
            return Err(Error::Config {
                field: "positions.target".into(),
                reason: format!("target coincides with the {name}"),
            });
        }
        for (k, u) in geo.users.iter().enumerate() {
            if too_close(*u, anchor) {
                return Err(Error::Config {
                    field: "positions.users".into(),
                    reason: format!("user {k} coincides with the {name}"),
                });
            }
        }
    }
    Ok(())
}

/// Draw a channel realization. Deterministic in `(scenario, seed)`.
pub fn generate_channels(s: &Scenario, seed: u64) -> Result<ChannelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = sample_geometry(s, &mut rng)?;
    channels_for_geometry(s, geo, &mut rng)
}

/// Draw the small-scale fading for a fixed geometry.
pub fn channels_for_geometry(s: &Scenario, geo: Geometry, rng: &mut impl Rng) -> Result<ChannelSet> {
    check_geometry(&geo)?;
    let cfg = &s.cfg;
    let (nt, nr, m) = (cfg.n_tx, cfg.n_rx, cfg.n_ris);
    let (m1, m2) = (cfg.ris_rows, cfg.ris_cols);
    let d = cfg.antenna_spacing_ratio;
    let ex = &cfg.pathloss_exponents;
    let dist = |a: Point, b: Point| norm3(sub(a, b));

    // BS <-> RIS, Rician.
    let theta_bs_ris = ula_angle(geo.bs, geo.ris);
    let (e_rb, z_rb) = ris_angles(geo.ris, geo.bs);
    let a_ris_bs = steering_vector_ris(m1, m2, d, e_rb, z_rb);
    let d_br = dist(geo.bs, geo.ris);
    let los_t = &a_ris_bs * steering_vector_ula(nt, d, theta_bs_ris).adjoint();
    let los_r = &a_ris_bs * steering_vector_ula(nr, d, theta_bs_ris).adjoint();
    let g_bs_tx_ris = rician(&los_t, s.kappa_bs_ris, rng) * cr(path_loss(s.c0, d_br, ex.btr).sqrt());
    let g_bs_rx_ris = rician(&los_r, s.kappa_bs_ris, rng) * cr(path_loss(s.c0, d_br, ex.brr).sqrt());

    // Users, Rayleigh.
    let mut h_bs_user = Vec::with_capacity(geo.users.len());
    let mut h_ris_user = Vec::with_capacity(geo.users.len());
    for u in &geo.users {
        h_bs_user.push(cn_vector(nr, rng) * cr(path_loss(s.c0, dist(geo.bs, *u), ex.bu).sqrt()));
        h_ris_user.push(cn_vector(m, rng) * cr(path_loss(s.c0, dist(geo.ris, *u), ex.ru).sqrt()));
    }

    // Target, line of sight with known random-phase fading coefficients.
    let theta_t = ula_angle(geo.bs, geo.target);
    let theta_r = theta_t;
    let (ris_elev, ris_azim) = ris_angles(geo.ris, geo.target);
    let mut phase = || c(0.0, 2.0 * PI * rng.random::<f64>()).exp();
    let alpha_t = phase() * path_loss(s.c0, dist(geo.bs, geo.target), ex.bt).sqrt();
    let alpha_r = phase() * path_loss(s.c0, dist(geo.bs, geo.target), ex.tb).sqrt();
    let alpha_rt = phase() * path_loss(s.c0, dist(geo.ris, geo.target), ex.rt).sqrt();
    let g_bs_tx_target = steering_vector_ula(nt, d, theta_t) * alpha_t;
    let g_bs_rx_target = steering_vector_ula(nr, d, theta_r) * alpha_r;
    let g_ris_target = steering_vector_ris(m1, m2, d, ris_elev, ris_azim) * alpha_rt;

    // Self interference: Rician around the broadside TX/RX coupling.
    let los_si = steering_vector_ula(nt, d, 0.0) * steering_vector_ula(nr, d, 0.0).adjoint();
    let h_self_interference = rician(&los_si, s.kappa_si, rng) * cr(s.si_gain.sqrt());

    Ok(ChannelSet {
        g_bs_tx_ris,
        g_bs_rx_ris,
        h_bs_user,
        h_ris_user,
        g_ris_target,
        g_bs_tx_target,
        g_bs_rx_target,
        h_self_interference,
        fading_coeffs: [alpha_t, alpha_r, alpha_rt],
        angles: Angles {
            theta_t,
            theta_r,
            ris_elev,
            ris_azim,
        },
        geometry: geo,
    })
}

impl ChannelSet {
    pub fn n_tx(&self) -> usize {
        self.g_bs_tx_target.len()
    }
    pub fn n_rx(&self) -> usize {
        self.g_bs_rx_target.len()
    }
    pub fn n_ris(&self) -> usize {
        self.g_ris_target.len()
    }
    pub fn n_users(&self) -> usize {
        self.h_bs_user.len()
    }

    /// Scale every receive-side factor (`G_r`, `h_BU`, `g_r`, `H_s`) by `s`.
    ///
    /// All SINR terms are quadratic in the receive side, so scaling by
    /// `1/σ_r` yields an equivalent system with unit noise power.
    pub fn scale_receive(&self, s: f64) -> ChannelSet {
        let mut out = self.clone();
        let s = cr(s);
        out.g_bs_rx_ris *= s;
        for h in &mut out.h_bs_user {
            *h *= s;
        }
        out.g_bs_rx_target *= s;
        out.h_self_interference *= s;
        out
    }

    /// The same realization with every RIS link removed.
    pub fn without_ris(&self) -> ChannelSet {
        let mut out = self.clone();
        out.g_bs_tx_ris.fill(cr(0.0));
        out.g_bs_rx_ris.fill(cr(0.0));
        for h in &mut out.h_ris_user {
            h.fill(cr(0.0));
        }
        out.g_ris_target.fill(cr(0.0));
        out
    }

    fn check_phase(&self, phi: &CVec, context: &'static str) -> Result<()> {
        if phi.len() != self.n_ris() {
            return Err(Error::Dimension {
                context,
                expected: self.n_ris(),
                got: phi.len(),
            });
        }
        Ok(())
    }
}

/// `h_{U,k} = h_{BU,k} + G_r^H diag(φ) h_{RU,k}`.
pub fn effective_user_channel(ch: &ChannelSet, phi: &CVec, k: usize) -> Result<CVec> {
    ch.check_phase(phi, "effective_user_channel")?;
    if k >= ch.n_users() {
        return Err(Error::Dimension {
            context: "effective_user_channel user index",
            expected: ch.n_users(),
            got: k,
        });
    }
    let reflected = ch.h_ris_user[k].component_mul(phi);
    Ok(&ch.h_bs_user[k] + ch.g_bs_rx_ris.ad_mul(&reflected))
}

/// `G = G_r^H diag(φ) G_t + H_s^H`, `N_r × N_t`.
pub fn effective_si_channel(ch: &ChannelSet, phi: &CVec) -> Result<CMat> {
    ch.check_phase(phi, "effective_si_channel")?;
    let mut scaled = ch.g_bs_tx_ris.clone();
    for (mut row, p) in scaled.row_iter_mut().zip(phi.iter()) {
        row *= *p;
    }
    Ok(ch.g_bs_rx_ris.ad_mul(&scaled) + ch.h_self_interference.adjoint())
}

/// Receive-side factor `g_r + G_r^H diag(ψ) g_RT`.
pub fn radar_rx_factor(ch: &ChannelSet, psi: &CVec) -> CVec {
    &ch.g_bs_rx_target + ch.g_bs_rx_ris.ad_mul(&ch.g_ris_target.component_mul(psi))
}

/// Transmit-side factor as a column: `(g_t^H + g_RT^T diag(φ) G_t)^T`.
pub fn radar_tx_factor_t(ch: &ChannelSet, phi: &CVec) -> CVec {
    let weighted = ch.g_ris_target.component_mul(phi);
    ch.g_bs_tx_target.map(|z| z.conj()) + ch.g_bs_tx_ris.tr_mul(&weighted)
}

/// `H(φ, ψ1) = (g_r + G_r^H diag(ψ1) g_RT)(g_t^H + g_RT^T diag(φ) G_t)`.
pub fn effective_radar_channel(ch: &ChannelSet, phi: &CVec, psi1: &CVec) -> Result<CMat> {
    ch.check_phase(phi, "effective_radar_channel")?;
    ch.check_phase(psi1, "effective_radar_channel")?;
    Ok(radar_rx_factor(ch, psi1) * radar_tx_factor_t(ch, phi).transpose())
}

/// Uniformly random unit-modulus vector.
pub fn random_phase(m: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(m, |_, _| c(0.0, 2.0 * PI * rng.random::<f64>()).exp())
}

pub fn ones(m: usize) -> CVec {
    CVec::from_element(m, ONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    fn small() -> Scenario {
        let mut cfg = ScenarioConfig::default().with_ris(6);
        cfg.n_tx = 3;
        cfg.n_rx = 2;
        cfg.n_users = 2;
        cfg.validate().unwrap()
    }

    #[test]
    fn ula_examples() {
        assert_eq!(steering_vector_ula(1, 0.5, 1.234)[0], ONE);
        let v = steering_vector_ula(4, 0.5, 0.0);
        assert!(v.iter().all(|z| (z - ONE).norm() < 1e-15));
        let v = steering_vector_ula(2, 0.5, PI / 2.0);
        assert!((v[1] - cr(-1.0)).norm() < 1e-12);
    }

    #[test]
    fn ris_examples() {
        assert_eq!(steering_vector_ris(1, 1, 0.5, 0.3, 0.2)[0], ONE);
        let v = steering_vector_ris(2, 2, 0.5, PI / 2.0, 0.0);
        let expect = [ONE, ONE, c(0.0, 1.0), c(0.0, 1.0)];
        for (a, b) in v.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        // index-by-index evaluation
        let (m1, m2, d, e, z) = (2, 3, 0.5, 0.7, 1.1);
        let v = steering_vector_ris(m1, m2, d, e, z);
        let g1 = 0.5 * f64::sin(e) * f64::cos(z);
        let g2 = 0.5 * f64::cos(e);
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                let ph = 2.0 * PI * d * (g1 * i1 as f64 + g2 * i2 as f64);
                assert!((v[i1 * m2 + i2] - c(ph.cos(), ph.sin())).norm() < 1e-12);
            }
        }
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn generation_is_deterministic() {
        let s = small();
        let a = generate_channels(&s, 7).unwrap();
        let b = generate_channels(&s, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_channels(&s, 8).unwrap();
        assert_ne!(a.g_bs_tx_ris, c.g_bs_tx_ris);
        assert_eq!(a.g_bs_tx_ris.shape(), (6, 3));
        assert_eq!(a.g_bs_rx_ris.shape(), (6, 2));
        assert_eq!(a.h_self_interference.shape(), (3, 2));
        assert_eq!(a.h_bs_user.len(), 2);
    }

    #[test]
    fn los_links_have_constant_magnitude() {
        let s = small();
        let ch = generate_channels(&s, 3).unwrap();
        let [at, ar, art] = ch.fading_coeffs;
        assert!(ch.g_bs_tx_target.iter().all(|z| (z.norm() - at.norm()).abs() < 1e-12 * at.norm()));
        assert!(ch.g_bs_rx_target.iter().all(|z| (z.norm() - ar.norm()).abs() < 1e-12 * ar.norm()));
        assert!(ch.g_ris_target.iter().all(|z| (z.norm() - art.norm()).abs() < 1e-12 * art.norm()));
    }

    #[test]
    fn rician_large_kappa_suppresses_nlos() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let los = CMat::from_element(2, 2, ONE);
        for (kappa, expect) in [(1.0, 0.5), (1e6, 1.0 / (1.0 + 1e6))] {
            let mut acc = 0.0;
            for _ in 0..1000 {
                let h = rician(&los, kappa, &mut rng);
                let nlos = h - &los * cr((kappa / (1.0 + kappa)).sqrt());
                acc += nlos.iter().map(|z| z.norm_sqr()).sum::<f64>() / 4.0;
            }
            let var = acc / 1000.0;
            assert!((var - expect).abs() < 0.1 * expect, "kappa {kappa}: {var} vs {expect}");
        }
    }

    #[test]
    fn pathloss_law() {
        let a = path_loss(1e-3, 10.0, 2.0);
        let b = path_loss(1e-3, 20.0, 2.0);
        assert!((b / a - 0.25).abs() < 1e-12);
    }

    #[test]
    fn coincident_positions_rejected() {
        let mut cfg = ScenarioConfig::default().with_ris(4);
        cfg.positions.target_x = [0.0, 0.0];
        cfg.positions.target_y = [0.0, 0.0];
        cfg.positions.target_z = [5.0, 5.0];
        let s = cfg.validate().unwrap();
        let err = generate_channels(&s, 1).unwrap_err().to_string();
        assert!(err.contains("target"), "{err}");
    }

    #[test]
    fn effective_channels() {
        let s = small();
        let mut ch = generate_channels(&s, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_phase(6, &mut rng);

        // naive triple product for G
        let g = effective_si_channel(&ch, &phi).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let mut acc = ch.h_self_interference[(j, i)].conj();
                for m in 0..6 {
                    acc += ch.g_bs_rx_ris[(m, i)].conj() * phi[m] * ch.g_bs_tx_ris[(m, j)];
                }
                assert!((g[(i, j)] - acc).norm() < 1e-12 * (1.0 + acc.norm()));
            }
        }
        let g0 = effective_si_channel(&ch, &CVec::zeros(6)).unwrap();
        assert_eq!(g0, ch.h_self_interference.adjoint());

        // linear in h_RU
        let h1 = effective_user_channel(&ch, &phi, 0).unwrap();
        let direct = ch.h_bs_user[0].clone();
        ch.h_ris_user[0] *= cr(2.0);
        let h2 = effective_user_channel(&ch, &phi, 0).unwrap();
        assert!(((&h2 - &direct) - (&h1 - &direct) * cr(2.0)).norm() < 1e-12 * h1.norm());
        ch.h_ris_user[0].fill(cr(0.0));
        assert_eq!(effective_user_channel(&ch, &phi, 0).unwrap(), direct);

        assert!(effective_user_channel(&ch, &CVec::zeros(5), 0).is_err());
    }

    #[test]
    fn radar_channel_is_rank_one_and_split_consistent() {
        let s = small();
        let ch = generate_channels(&s, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_phase(6, &mut rng);
        let psi = random_phase(6, &mut rng);
        let h = effective_radar_channel(&ch, &phi, &psi).unwrap();
        let sv = h.clone().svd(false, false).singular_values;
        assert!(sv[1] < 1e-10 * sv[0]);

        // direct H(Φ) with ψ = φ
        let big_phi = CMat::from_diagonal(&phi);
        let left = &ch.g_bs_rx_target + ch.g_bs_rx_ris.adjoint() * &big_phi * &ch.g_ris_target;
        let right = ch.g_bs_tx_target.adjoint() + ch.g_ris_target.transpose() * &big_phi * &ch.g_bs_tx_ris;
        let direct = left * right;
        let split = effective_radar_channel(&ch, &phi, &phi).unwrap();
        assert!((direct - split).norm() < 1e-12 * h.norm().max(1e-300));

        let mut no_rt = ch.clone();
        no_rt.g_ris_target.fill(cr(0.0));
        let h = effective_radar_channel(&no_rt, &phi, &psi).unwrap();
        let expect = &ch.g_bs_rx_target * ch.g_bs_tx_target.adjoint();
        assert!((h - expect).norm() < 1e-25);
    }
}
