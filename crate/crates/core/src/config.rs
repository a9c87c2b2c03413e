//! Experiment configuration.
//!
//! A config file is a flat TOML document; every key is optional and
//! defaults to the reference simulation parameters. Unknown keys are
//! rejected with the offending key named in the error.

use crate::error::{Error, Result};
use crate::lattice::{cp_samples, DdGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Otfs,
    Ofdm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed.
    pub seed: u64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    pub symbols: usize,
    pub region_m: f64,
    pub paths: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub antennas: usize,
    pub users: usize,
    pub v_max_kmh: f64,
    pub tau_max_s: f64,
    pub gamma_s_db: f64,
    pub noise_figure_db: f64,
    /// Target-free (clutter) channel gain scaling `s`.
    pub clutter_scale: f64,
    pub rcs_var_dbsm: f64,
    pub uplink_eta: f64,
    pub pilot_power_w: f64,
    pub uplink_data_power_w: f64,
    pub ap_power_w: f64,
    pub hotspot_side_m: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub target_height_m: f64,
    pub shadowing: bool,
    pub shadow_std_db: f64,
    /// Exponential spatial-correlation coefficient `r` in `[0, 1)`.
    pub corr_coeff: f64,
    /// Half-width of the uniform per-path azimuth spread around the link direction.
    pub angle_spread_deg: f64,
    /// Extra fractional-Doppler guard of the embedded pilot.
    pub k_hat: usize,
    pub min_distance_m: f64,
    pub gain_tx_dbi: f64,
    pub gain_rx_dbi: f64,
    pub perfect_csi: bool,
    pub sensing_beam: bool,
    /// Share of each AP budget given to the sensing beam under equal power.
    pub sensing_beam_fraction: f64,
    pub signal: SignalKind,
    pub distinct_delays: bool,
    /// Evaluate sensing at the hotspot center instead of a sampled target point.
    pub target_at_center: bool,
    pub realizations: usize,
    pub scenarios: usize,
    pub threads: usize,
    pub gamma_sweep_db: Vec<f64>,
    pub delta_f_sweep_hz: Vec<f64>,
    pub ofdm_pilot_lengths: Vec<usize>,
    pub ofdm_pilot_length: usize,
    pub tau_max_evb_s: f64,
    pub solver_epsilon: f64,
    pub solver_max_outer: usize,
    pub solver_feasibility_tol: f64,
    pub solver_optimality_tol: f64,
    pub solver_eta_floor: f64,
    /// Sensing-beam share of the starting point when a sensing constraint is active.
    pub initial_sensing_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            carrier_hz: 4e9,
            subcarrier_spacing_hz: 15e3,
            subcarriers: 512,
            symbols: 128,
            region_m: 1000.0,
            paths: 9,
            n_tx: 100,
            n_rx: 2,
            antennas: 4,
            users: 15,
            v_max_kmh: 300.0,
            tau_max_s: 2.5e-6,
            gamma_s_db: 3.0,
            noise_figure_db: 7.0,
            clutter_scale: 0.3,
            rcs_var_dbsm: 0.0,
            uplink_eta: 1.0,
            pilot_power_w: 0.2,
            uplink_data_power_w: 0.2,
            ap_power_w: 1.0,
            hotspot_side_m: 15.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            target_height_m: 1.5,
            shadowing: true,
            shadow_std_db: 7.82,
            corr_coeff: 0.5,
            angle_spread_deg: 10.0,
            k_hat: 1,
            min_distance_m: 10.0,
            gain_tx_dbi: 0.0,
            gain_rx_dbi: 0.0,
            perfect_csi: false,
            sensing_beam: true,
            sensing_beam_fraction: 0.0,
            signal: SignalKind::Otfs,
            distinct_delays: true,
            target_at_center: false,
            realizations: 500,
            scenarios: 100,
            threads: 0,
            gamma_sweep_db: (0..12).map(|i| -40.0 + 5.0 * i as f64).collect(),
            delta_f_sweep_hz: vec![15e3, 45e3, 75e3, 105e3, 135e3],
            ofdm_pilot_lengths: vec![14, 4, 2, 2, 1],
            ofdm_pilot_length: 14,
            tau_max_evb_s: 10e-6,
            solver_epsilon: 1e-4,
            solver_max_outer: 100,
            solver_feasibility_tol: 1e-9,
            solver_optimality_tol: 1e-9,
            solver_eta_floor: 1e-12,
            initial_sensing_fraction: 0.1,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("{key}: {why}")));
        if self.subcarriers == 0 {
            return bad("subcarriers", "must be >= 1");
        }
        if self.symbols == 0 {
            return bad("symbols", "must be >= 1");
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return bad("subcarrier_spacing_hz", "must be positive");
        }
        if !(self.carrier_hz > 0.0) {
            return bad("carrier_hz", "must be positive");
        }
        if self.paths == 0 {
            return bad("paths", "must be >= 1");
        }
        if self.antennas == 0 {
            return bad("antennas", "must be >= 1");
        }
        if self.users == 0 {
            return bad("users", "must be >= 1");
        }
        if self.n_tx == 0 {
            return bad("n_tx", "need at least one transmitting AP");
        }
        if !(0.0..1.0).contains(&self.corr_coeff) {
            return bad("corr_coeff", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.sensing_beam_fraction) {
            return bad("sensing_beam_fraction", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.initial_sensing_fraction) {
            return bad("initial_sensing_fraction", "must lie in [0, 1)");
        }
        if self.clutter_scale < 0.0 {
            return bad("clutter_scale", "must be nonnegative");
        }
        if self.region_m <= 0.0 || self.hotspot_side_m < 0.0 || self.hotspot_side_m > self.region_m {
            return bad("region_m", "region must be positive and contain the hotspot");
        }
        if self.ofdm_pilot_length == 0 || self.ofdm_pilot_lengths.contains(&0) {
            return bad("ofdm_pilot_length", "pilot lengths must be >= 1");
        }
        if self.solver_epsilon <= 0.0 || self.solver_feasibility_tol <= 0.0 || self.solver_optimality_tol <= 0.0 {
            return bad("solver_epsilon", "tolerances must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<DdGrid> {
        DdGrid::new(
            self.subcarriers,
            self.symbols,
            self.subcarrier_spacing_hz,
            cp_samples(self.tau_max_s, self.subcarriers, self.subcarrier_spacing_hz),
        )
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn max_doppler_hz(&self) -> f64 {
        self.carrier_hz * (self.v_max_kmh / 3.6) / SPEED_OF_LIGHT
    }

    pub fn gamma_s(&self) -> f64 {
        db_to_linear(self.gamma_s_db)
    }

    pub fn rcs_var(&self) -> f64 {
        db_to_linear(self.rcs_var_dbsm)
    }
}

/// Reads and validates a config file. An empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text)
}
