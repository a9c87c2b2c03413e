//! Deployment geometry: node placement, large-scale gains, array responses
//! and spatial correlation.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::linalg::{cis, outer, CMat, CVec, C64};
use crate::rng::{stream, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position3 { x, y, z }
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    /// Direction from `self` toward `other`.
    pub fn angle_to(&self, other: &Position3) -> AnglePair {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        let dz = other.z - self.z;
        let horizontal = dx.hypot(dy);
        let mut azimuth = dy.atan2(dx);
        if azimuth <= -PI {
            azimuth += 2.0 * PI;
        }
        AnglePair { azimuth, elevation: dz.atan2(horizontal) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tx_aps: Vec<Position3>,
    /// Receiving APs, nearest to the hotspot first.
    pub rx_aps: Vec<Position3>,
    pub users: Vec<Position3>,
    pub hotspot_center: Position3,
    pub hotspot_side: f64,
    /// Point used for the target echo; the hotspot center unless sampled.
    pub target: Position3,
    pub seed: u64,
}

/// Places APs and users uniformly over the square region and picks the
/// `n_rx` APs nearest the hotspot center as sensing receivers.
pub fn place_scenario(config: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    let total = config.n_tx + config.n_rx;
    if config.n_rx >= total {
        return Err(Error::Config(format!("n_rx: {} receivers leave no transmitting AP", config.n_rx)));
    }
    let side = config.region_m;
    let mut rng = stream(seed, &[tag::PLACEMENT]);
    let mut aps: Vec<Position3> = (0..total)
        .map(|_| Position3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), config.ap_height_m))
        .collect();
    let users: Vec<Position3> = (0..config.users)
        .map(|_| Position3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), config.ue_height_m))
        .collect();
    let center = Position3::new(side / 2.0, side / 2.0, config.target_height_m);

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| aps[a].distance(&center).total_cmp(&aps[b].distance(&center)).then(a.cmp(&b)));
    let mut is_rx = vec![false; total];
    let rx_aps: Vec<Position3> = order[..config.n_rx]
        .iter()
        .map(|&i| {
            is_rx[i] = true;
            aps[i]
        })
        .collect();
    let tx_aps: Vec<Position3> = aps.drain(..).enumerate().filter(|(i, _)| !is_rx[*i]).map(|(_, p)| p).collect();

    let target = if config.target_at_center || config.hotspot_side_m == 0.0 {
        center
    } else {
        let mut trng = stream(seed, &[tag::TARGET]);
        let h = config.hotspot_side_m / 2.0;
        Position3::new(center.x + trng.random_range(-h..h), center.y + trng.random_range(-h..h), center.z)
    };

    Ok(Scenario { tx_aps, rx_aps, users, hotspot_center: center, hotspot_side: config.hotspot_side_m, target, seed })
}

/// UMi NLOS large-scale gain (linear) at 3-D distance `d3d`.
pub fn umi_pathloss(d3d: f64, fc: f64, shadow_db: f64, h_ue: f64) -> Result<f64> {
    if !(d3d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d3d}")));
    }
    let pl = 35.3 * d3d.log10() + 22.4 + 21.3 * (fc / 1e9).log10() - 0.3 * (h_ue - 1.5) + shadow_db;
    Ok(10f64.powf(-pl / 10.0))
}

/// Unit-norm uniform linear array response.
pub fn array_response(angle: AnglePair, m_t: usize) -> CVec {
    let phase = PI * angle.azimuth.sin() * angle.elevation.cos();
    let scale = 1.0 / (m_t as f64).sqrt();
    CVec::from_iterator(m_t, (0..m_t).map(|m| cis(phase * m as f64) * scale))
}

/// Radar range equation for the AP-target-AP echo.
pub fn radar_link_gain(d_pt: f64, d_tr: f64, fc: f64, gain_tx_dbi: f64, gain_rx_dbi: f64) -> Result<f64> {
    if !(d_pt > 0.0 && d_tr > 0.0) {
        return Err(Error::Domain(format!("radar distances must be positive, got {d_pt}, {d_tr}")));
    }
    let lambda = crate::config::SPEED_OF_LIGHT / fc;
    let g = 10f64.powf((gain_tx_dbi + gain_rx_dbi) / 10.0);
    Ok(lambda * lambda * g / ((4.0 * PI).powi(3) * d_pt * d_pt * d_tr * d_tr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationRole {
    CommPath,
    SensingTx,
    SensingRx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: CMat,
    pub role: CorrelationRole,
}

/// Unit-diagonal exponential correlation `[C]_{mn} = (r e^{j pi sin phi})^(m-n)`.
pub fn exp_correlation(m_t: usize, r: f64, azimuth: f64) -> Result<CMat> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Config(format!("corr_coeff: {r} outside [0, 1)")));
    }
    let base = C64::from_polar(r, PI * azimuth.sin());
    Ok(CMat::from_fn(m_t, m_t, |a, b| {
        if a >= b {
            base.powi((a - b) as i32)
        } else {
            base.powi((b - a) as i32).conj()
        }
    }))
}

/// Per-path correlation `(beta / L) C(phi)`.
pub fn comm_correlation(beta: f64, paths: usize, azimuth: f64, m_t: usize, r: f64) -> Result<CorrelationMatrix> {
    let c = exp_correlation(m_t, r, azimuth)?;
    Ok(CorrelationMatrix { entries: c * C64::from(beta / paths as f64), role: CorrelationRole::CommPath })
}

/// Target-free link statistics `(R_tx, R_rx)`. `az_tx` points from the
/// transmitter toward the receiver, `az_rx` the other way.
pub fn sensing_correlations(
    beta_ap_ap: f64,
    clutter_scale: f64,
    az_tx: f64,
    az_rx: f64,
    m_t: usize,
    r: f64,
) -> Result<(CorrelationMatrix, CorrelationMatrix)> {
    let tx = exp_correlation(m_t, r, az_tx)? * C64::from(clutter_scale * beta_ap_ap);
    let rx = exp_correlation(m_t, r, az_rx)?;
    Ok((
        CorrelationMatrix { entries: tx, role: CorrelationRole::SensingTx },
        CorrelationMatrix { entries: rx, role: CorrelationRole::SensingRx },
    ))
}

/// Rank-one conjugate-beam covariance toward `angle`: the beam is the
/// conjugate array response, so `h^T w` adds coherently for `h` along `angle`.
pub fn steering_covariance(angle: AnglePair, m_t: usize) -> CMat {
    outer(&array_response(angle, m_t).conjugate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, trace_re};

    fn cfg(n_tx: usize, n_rx: usize) -> ExperimentConfig {
        ExperimentConfig { n_tx, n_rx, users: 3, ..ExperimentConfig::default() }
    }

    #[test]
    fn single_receiver_is_nearest_ap() {
        for seed in 0..20 {
            let c = cfg(2, 1);
            let s = place_scenario(&c, seed).unwrap();
            let d_rx = s.rx_aps[0].distance(&s.hotspot_center);
            for ap in &s.tx_aps {
                assert!(ap.distance(&s.hotspot_center) >= d_rx);
            }
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let c = cfg(10, 2);
        let a = serde_json::to_string(&place_scenario(&c, 7).unwrap()).unwrap();
        let b = serde_json::to_string(&place_scenario(&c, 7).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn receivers_are_two_smallest_of_many() {
        let c = cfg(100, 2);
        let s = place_scenario(&c, 3).unwrap();
        let mut all: Vec<f64> =
            s.tx_aps.iter().chain(s.rx_aps.iter()).map(|p| p.distance(&s.hotspot_center)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(s.rx_aps.len(), 2);
        assert_eq!(s.tx_aps.len(), 100);
        assert_eq!(s.rx_aps[0].distance(&s.hotspot_center), all[0]);
        assert_eq!(s.rx_aps[1].distance(&s.hotspot_center), all[1]);
    }

    #[test]
    fn placement_rejects_no_transmitters() {
        let mut c = cfg(1, 1);
        c.n_tx = 0;
        assert!(matches!(place_scenario(&c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn pathloss_examples() {
        let g1 = umi_pathloss(100.0, 4e9, 0.0, 1.5).unwrap();
        let pl = 22.4 + 35.3 * 2.0 + 21.3 * 4f64.log10();
        assert!((pl - 105.823878).abs() < 1e-5);
        assert!((-10.0 * g1.log10() - pl).abs() < 1e-9);
        let g2 = umi_pathloss(200.0, 4e9, 0.0, 1.5).unwrap();
        assert!((10.0 * (g1 / g2).log10() - 35.3 * 2f64.log10()).abs() < 1e-9);
        let g3 = umi_pathloss(100.0, 4e9, 10.0, 1.5).unwrap();
        assert!((g1 / g3 - 10.0).abs() < 1e-9);
        assert!(umi_pathloss(0.0, 4e9, 0.0, 1.5).is_err());
    }

    #[test]
    fn array_response_examples() {
        let a = array_response(AnglePair { azimuth: 1.0, elevation: 0.3 }, 1);
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let a = array_response(AnglePair { azimuth: 0.0, elevation: 0.7 }, 4);
        assert!(a.iter().all(|z| (z - C64::new(0.5, 0.0)).norm() < 1e-15));
        let a = array_response(AnglePair { azimuth: PI / 2.0, elevation: 0.0 }, 2);
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - C64::new(s, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn radar_gain_examples() {
        let g = radar_link_gain(100.0, 100.0, 4e9, 0.0, 0.0).unwrap();
        assert!((g - 2.8306e-14).abs() / 2.8306e-14 < 1e-3, "{g}");
        let g2 = radar_link_gain(200.0, 200.0, 4e9, 0.0, 0.0).unwrap();
        assert!((g / g2 - 16.0).abs() < 1e-9);
        let g3 = radar_link_gain(100.0, 100.0, 4e9, 3.0, 3.0).unwrap();
        assert!((g3 / g - 10f64.powf(0.6)).abs() < 1e-9);
        assert!(radar_link_gain(-1.0, 1.0, 4e9, 0.0, 0.0).is_err());
    }

    #[test]
    fn correlation_examples() {
        let r = comm_correlation(2e-9, 3, 0.4, 4, 0.0).unwrap();
        assert!((r.entries.clone() - CMat::identity(4, 4) * C64::from(2e-9 / 3.0)).norm() < 1e-24);
        let r = comm_correlation(1.0, 1, 0.0, 2, 0.5).unwrap();
        assert!((r.entries[(0, 1)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        let ev = hermitian_eigenvalues(&r.entries);
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 1.5).abs() < 1e-12);
        let r = comm_correlation(3.0, 9, 1.1, 4, 0.8).unwrap();
        assert!((trace_re(&r.entries) - 4.0 * 3.0 / 9.0).abs() < 1e-12);
        assert!(exp_correlation(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn sensing_correlation_examples() {
        let (tx, rx) = sensing_correlations(1e-8, 0.0, 0.3, -0.3, 4, 0.5).unwrap();
        assert_eq!(tx.entries.norm(), 0.0);
        assert!((trace_re(&rx.entries) - 4.0).abs() < 1e-12);
        let beta = umi_pathloss(250.0, 4e9, 0.0, 10.0).unwrap();
        let (tx, rx) = sensing_correlations(beta, 0.3, 0.3, -0.3, 4, 0.0).unwrap();
        assert!((trace_re(&tx.entries) - 0.3 * beta * 4.0).abs() < 1e-12 * beta);
        assert!((rx.entries - CMat::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn steering_covariance_is_rank_one() {
        let b = steering_covariance(AnglePair { azimuth: 0.0, elevation: 0.0 }, 4);
        assert!(b.iter().all(|z| (z - C64::new(0.25, 0.0)).norm() < 1e-15));
        let b = steering_covariance(AnglePair { azimuth: 0.77, elevation: -0.2 }, 4);
        let ev = hermitian_eigenvalues(&b);
        assert!((ev[3] - 1.0).abs() < 1e-12);
        assert!(ev[..3].iter().all(|e| e.abs() < 1e-12));
    }
}
