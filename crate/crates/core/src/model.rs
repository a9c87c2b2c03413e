//! Second-order statistics of one deployment: per-path correlations of every
//! AP-user link, the sensing beams and the target/target-free sensing links.

use crate::channel::{derive_index_bounds, sample_paths, IndexBounds};
use crate::config::{db_to_linear, ExperimentConfig};
use crate::error::Result;
use crate::geometry::{
    array_response, comm_correlation, radar_link_gain, sensing_correlations, steering_covariance, umi_pathloss,
    Scenario,
};
use crate::lattice::{DdGrid, PathDd};
use crate::linalg::{CMat, CVec};
use crate::rng::{stream, tag};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const BOLTZMANN: f64 = 1.381e-23;
pub const NOISE_TEMPERATURE: f64 = 290.0;

/// Thermal noise power over `M` subcarriers.
pub fn noise_variance(m: usize, delta_f: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * NOISE_TEMPERATURE * m as f64 * delta_f * db_to_linear(noise_figure_db)
}

#[derive(Debug, Clone)]
pub struct Link {
    pub beta: f64,
    pub paths: Vec<PathDd>,
    pub r: Vec<CMat>,
}

impl Link {
    pub fn r_sum(&self) -> CMat {
        self.r.iter().fold(CMat::zeros(self.r[0].nrows(), self.r[0].ncols()), |acc, x| acc + x)
    }
}

#[derive(Debug, Clone)]
pub struct SensingLink {
    /// Radar range-equation gain of the echo.
    pub radar_gain: f64,
    pub rcs_var: f64,
    /// Array response of the transmitter toward the target.
    pub h_pt: CVec,
    /// Array response of the receiver toward the target.
    pub h_tr: CVec,
    pub r_tx: CMat,
    pub r_rx: CMat,
}

impl SensingLink {
    /// `V = h_tr h_pt^T`.
    pub fn v(&self) -> CMat {
        &self.h_tr * self.h_pt.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub grid: DdGrid,
    pub bounds: IndexBounds,
    pub n_tx: usize,
    pub n_rx: usize,
    pub users: usize,
    pub antennas: usize,
    /// AP-user links in `p`-major order.
    pub links: Vec<Link>,
    /// Rank-one sensing-beam covariance of every transmitting AP.
    pub beam: Vec<CMat>,
    /// Sensing links in `p`-major order over receivers.
    pub sensing: Vec<SensingLink>,
    pub noise_var: f64,
    pub rho_d: f64,
}

impl SystemModel {
    pub fn build(config: &ExperimentConfig, scenario: &Scenario) -> Result<Self> {
        config.validate()?;
        let bounds = derive_index_bounds(config)?;
        let grid = DdGrid::new(config.subcarriers, config.symbols, config.subcarrier_spacing_hz, bounds.n_cp)?;
        let m_t = config.antennas;
        let seed = scenario.seed;
        let shadow = Normal::new(0.0, config.shadow_std_db.max(0.0)).expect("finite std");
        let spread = config.angle_spread_deg.to_radians();
        let shadow_db = |kind: u64, a: usize, b: usize| -> f64 {
            if config.shadowing && config.shadow_std_db > 0.0 {
                shadow.sample(&mut stream(seed, &[tag::SHADOWING, kind, a as u64, b as u64]))
            } else {
                0.0
            }
        };

        let mut links = Vec::with_capacity(scenario.tx_aps.len() * scenario.users.len());
        for (p, ap) in scenario.tx_aps.iter().enumerate() {
            for (q, ue) in scenario.users.iter().enumerate() {
                let d = ap.distance(ue).max(config.min_distance_m);
                let beta = umi_pathloss(d, config.carrier_hz, shadow_db(0, p, q), config.ue_height_m)?;
                let paths =
                    sample_paths(seed, p, q, config.paths, bounds.ell_max, bounds.k_max, config.distinct_delays)?;
                let azimuth = ap.angle_to(ue).azimuth;
                let mut arng = stream(seed, &[tag::ANGLES, p as u64, q as u64]);
                let r = (0..config.paths)
                    .map(|_| {
                        let offset = if spread > 0.0 { arng.random_range(-spread..spread) } else { 0.0 };
                        comm_correlation(beta, config.paths, azimuth + offset, m_t, config.corr_coeff)
                            .map(|c| c.entries)
                    })
                    .collect::<Result<Vec<_>>>()?;
                links.push(Link { beta, paths, r });
            }
        }

        let beam = scenario
            .tx_aps
            .iter()
            .map(|ap| steering_covariance(ap.angle_to(&scenario.hotspot_center), m_t))
            .collect();

        let mut sensing = Vec::with_capacity(scenario.tx_aps.len() * scenario.rx_aps.len());
        for (p, tx) in scenario.tx_aps.iter().enumerate() {
            for (r, rx) in scenario.rx_aps.iter().enumerate() {
                let floor = config.min_distance_m;
                let d_pt = tx.distance(&scenario.target).max(floor);
                let d_tr = rx.distance(&scenario.target).max(floor);
                let radar_gain =
                    radar_link_gain(d_pt, d_tr, config.carrier_hz, config.gain_tx_dbi, config.gain_rx_dbi)?;
                let d_pr = tx.distance(rx).max(floor);
                let beta_ap_ap = umi_pathloss(d_pr, config.carrier_hz, shadow_db(1, p, r), config.ap_height_m)?;
                let (r_tx, r_rx) = sensing_correlations(
                    beta_ap_ap,
                    config.clutter_scale,
                    tx.angle_to(rx).azimuth,
                    rx.angle_to(tx).azimuth,
                    m_t,
                    config.corr_coeff,
                )?;
                sensing.push(SensingLink {
                    radar_gain,
                    rcs_var: config.rcs_var(),
                    h_pt: array_response(tx.angle_to(&scenario.target), m_t),
                    h_tr: array_response(rx.angle_to(&scenario.target), m_t),
                    r_tx: r_tx.entries,
                    r_rx: r_rx.entries,
                });
            }
        }

        let noise_var = noise_variance(config.subcarriers, config.subcarrier_spacing_hz, config.noise_figure_db);
        Ok(SystemModel {
            grid,
            bounds,
            n_tx: scenario.tx_aps.len(),
            n_rx: scenario.rx_aps.len(),
            users: scenario.users.len(),
            antennas: m_t,
            links,
            beam,
            sensing,
            noise_var,
            rho_d: config.ap_power_w / noise_var,
        })
    }

    pub fn link(&self, p: usize, q: usize) -> &Link {
        &self.links[p * self.users + q]
    }

    pub fn sensing_link(&self, p: usize, r: usize) -> &SensingLink {
        &self.sensing[p * self.n_rx + r]
    }
}
