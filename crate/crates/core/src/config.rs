//! Scenario configuration.
//!
//! Field names mirror the TOML file layout. Every logarithmic quantity is
//! converted once by [`ScenarioConfig::validate`], which produces the
//! linear-domain [`Scenario`] used by all numerical code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathlossExponents {
    /// BS – user.
    pub bu: f64,
    /// BS TX – RIS.
    pub btr: f64,
    /// BS RX – RIS.
    pub brr: f64,
    /// RIS – user.
    pub ru: f64,
    /// RIS – target.
    pub rt: f64,
    /// BS TX – target.
    pub bt: f64,
    /// target – BS RX.
    pub tb: f64,
}

impl Default for PathlossExponents {
    fn default() -> Self {
        Self {
            bu: 3.6,
            btr: 2.7,
            brr: 2.7,
            ru: 2.4,
            rt: 2.2,
            bt: 2.2,
            tb: 2.2,
        }
    }
}

impl PathlossExponents {
    fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("pathloss_exponents.bu", self.bu),
            ("pathloss_exponents.btr", self.btr),
            ("pathloss_exponents.brr", self.brr),
            ("pathloss_exponents.ru", self.ru),
            ("pathloss_exponents.rt", self.rt),
            ("pathloss_exponents.bt", self.bt),
            ("pathloss_exponents.tb", self.tb),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RicianFactors {
    /// Both BS–RIS links, dB.
    pub bs_ris_db: f64,
    /// Self-interference link, dB.
    pub si_db: f64,
}

impl Default for RicianFactors {
    fn default() -> Self {
        Self {
            bs_ris_db: 3.0,
            si_db: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Positions {
    pub bs: [f64; 3],
    pub ris: [f64; 3],
    /// Target sampled uniformly in `[x0,x1] × [y0,y1] × [z0,z1]`.
    pub target_x: [f64; 2],
    pub target_y: [f64; 2],
    pub target_z: [f64; 2],
    /// Users sampled uniformly in the `x ≥ 0` half disc around the RIS.
    pub user_radius: f64,
    pub user_altitude: f64,
}

impl Default for Positions {
    fn default() -> Self {
        Self {
            bs: [0.0, 0.0, 5.0],
            ris: [0.0, -50.0, 4.0],
            target_x: [-1.0, 1.0],
            target_y: [10.0, 40.0],
            target_z: [7.0, 10.0],
            user_radius: 10.0,
            user_altitude: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ris: usize,
    /// Elevation rows `M1`; `ris_rows * ris_cols` must equal `n_ris`.
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub n_users: usize,
    pub antenna_spacing_ratio: f64,
    pub bs_power_dbm: f64,
    /// One entry per user, or a single entry shared by all users.
    pub user_power_dbm: Vec<f64>,
    pub noise_dbm: f64,
    pub radar_threshold_db: f64,
    pub rcs_variance: f64,
    pub si_path_loss_db: f64,
    /// Path loss at the 1 m reference distance.
    pub pathloss_ref_db: f64,
    pub pathloss_exponents: PathlossExponents,
    pub rician_k_db: RicianFactors,
    pub positions: Positions,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_tx: 4,
            n_rx: 4,
            n_ris: 100,
            ris_rows: 10,
            ris_cols: 10,
            n_users: 4,
            antenna_spacing_ratio: 0.5,
            bs_power_dbm: 30.0,
            user_power_dbm: vec![20.0],
            noise_dbm: -90.0,
            radar_threshold_db: 5.0,
            rcs_variance: 1.0,
            si_path_loss_db: -110.0,
            pathloss_ref_db: -30.0,
            pathloss_exponents: PathlossExponents::default(),
            rician_k_db: RicianFactors::default(),
            positions: Positions::default(),
            rng_seed: 1,
        }
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// dBm to watts.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

/// Near-square factorization `rows × cols = m` with `rows ≤ cols`.
pub fn ris_factorization(m: usize) -> (usize, usize) {
    let mut rows = (m as f64).sqrt().floor() as usize;
    while rows > 1 && m % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, m / rows)
}

fn field(name: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: name.to_string(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Set the RIS size, picking a near-square `M1 × M2` layout.
    pub fn with_ris(mut self, m: usize) -> Self {
        let (rows, cols) = ris_factorization(m);
        self.n_ris = m;
        self.ris_rows = rows;
        self.ris_cols = cols;
        self
    }

    pub fn validate(&self) -> Result<Scenario> {
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_ris", self.n_ris),
            ("ris_rows", self.ris_rows),
            ("ris_cols", self.ris_cols),
            ("n_users", self.n_users),
        ] {
            if v == 0 {
                return Err(field(name, "must be at least 1"));
            }
        }
        if self.ris_rows * self.ris_cols != self.n_ris {
            return Err(field(
                "ris_rows",
                format!(
                    "ris_rows * ris_cols = {} but n_ris = {}",
                    self.ris_rows * self.ris_cols,
                    self.n_ris
                ),
            ));
        }
        let finite = [
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
            ("bs_power_dbm", self.bs_power_dbm),
            ("noise_dbm", self.noise_dbm),
            ("radar_threshold_db", self.radar_threshold_db),
            ("rcs_variance", self.rcs_variance),
            ("si_path_loss_db", self.si_path_loss_db),
            ("pathloss_ref_db", self.pathloss_ref_db),
            ("rician_k_db.bs_ris_db", self.rician_k_db.bs_ris_db),
            ("rician_k_db.si_db", self.rician_k_db.si_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(field(name, "must be finite"));
            }
        }
        if self.antenna_spacing_ratio <= 0.0 {
            return Err(field("antenna_spacing_ratio", "must be positive"));
        }
        if self.rcs_variance <= 0.0 {
            return Err(field("rcs_variance", "must be positive"));
        }
        for (name, a) in self.pathloss_exponents.entries() {
            if !(a > 1.0 && a < 6.0) {
                return Err(field(name, format!("{a} outside (1, 6)")));
            }
        }
        let user_power_dbm = match self.user_power_dbm.len() {
            1 => vec![self.user_power_dbm[0]; self.n_users],
            n if n == self.n_users => self.user_power_dbm.clone(),
            n => {
                return Err(field(
                    "user_power_dbm",
                    format!("expected 1 or {} entries, got {n}", self.n_users),
                ))
            }
        };
        if user_power_dbm.iter().any(|p| !p.is_finite()) {
            return Err(field("user_power_dbm", "must be finite"));
        }
        let p = &self.positions;
        for (name, r) in [
            ("positions.target_x", p.target_x),
            ("positions.target_y", p.target_y),
            ("positions.target_z", p.target_z),
        ] {
            if !(r[0] <= r[1]) {
                return Err(field(name, "lower bound exceeds upper bound"));
            }
        }
        if !(p.user_radius > 0.0) {
            return Err(field("positions.user_radius", "must be positive"));
        }
        Ok(Scenario {
            cfg: self.clone(),
            p_bs: dbm_to_watt(self.bs_power_dbm),
            p_user: user_power_dbm.iter().map(|&d| dbm_to_watt(d)).collect(),
            noise: dbm_to_watt(self.noise_dbm),
            gamma_r: db_to_lin(self.radar_threshold_db),
            sigma_t2: self.rcs_variance,
            si_gain: db_to_lin(self.si_path_loss_db),
            c0: db_to_lin(self.pathloss_ref_db),
            kappa_bs_ris: db_to_lin(self.rician_k_db.bs_ris_db),
            kappa_si: db_to_lin(self.rician_k_db.si_db),
        })
    }
}

/// A validated configuration with all quantities in the linear domain
/// (watts, power ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub p_bs: f64,
    pub p_user: Vec<f64>,
    /// Receiver noise power `σ_r²`.
    pub noise: f64,
    pub gamma_r: f64,
    /// Second moment of the target reflection coefficient.
    pub sigma_t2: f64,
    pub si_gain: f64,
    pub c0: f64,
    pub kappa_bs_ris: f64,
    pub kappa_si: f64,
}

impl Scenario {
    pub fn n_tx(&self) -> usize {
        self.cfg.n_tx
    }
    pub fn n_rx(&self) -> usize {
        self.cfg.n_rx
    }
    pub fn n_ris(&self) -> usize {
        self.cfg.n_ris
    }
    pub fn n_users(&self) -> usize {
        self.cfg.n_users
    }
}
