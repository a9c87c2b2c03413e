//! Embedded-pilot MMSE estimation statistics.

use crate::error::{Error, Result};
use crate::geometry::{steering_covariance, AnglePair};
use crate::lattice::DdGrid;
use crate::linalg::{hermitize, min_eigenvalue, psd_sqrt, scaled_identity, CMat, CVec, C64};
use crate::model::SystemModel;
use crate::rng::correlated_normal;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkPowers {
    pub pilot_w: f64,
    pub data_w: f64,
    /// Uplink power-control coefficient, shared by all users.
    pub eta: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpLayout {
    pub k_max: usize,
    pub ell_max: usize,
    pub k_hat: usize,
}

impl EpLayout {
    /// Doppler extent `4 k_max + 4 k_hat + 1` of the pilot plus guard region.
    pub fn doppler_extent(&self) -> usize {
        4 * self.k_max + 4 * self.k_hat + 1
    }

    pub fn delay_extent(&self) -> usize {
        2 * self.ell_max + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpOverhead {
    pub cp_overhead: f64,
    /// Grid points taken by one user's pilot and guard.
    pub footprint: usize,
    pub footprint_fraction: f64,
    pub users: usize,
}

pub fn ep_overhead(grid: &DdGrid, ep: &EpLayout, users: usize) -> Result<EpOverhead> {
    if ep.doppler_extent() > grid.n {
        return Err(Error::Config(format!(
            "k_hat: pilot guard spans {} Doppler bins but N = {}",
            ep.doppler_extent(),
            grid.n
        )));
    }
    if ep.delay_extent() > grid.m {
        return Err(Error::Config(format!(
            "tau_max_s: pilot guard spans {} delay bins but M = {}",
            ep.delay_extent(),
            grid.m
        )));
    }
    let footprint = ep.doppler_extent() * ep.delay_extent();
    Ok(EpOverhead {
        cp_overhead: grid.n_cp as f64 / grid.mn() as f64,
        footprint,
        footprint_fraction: footprint as f64 / grid.mn() as f64,
        users,
    })
}

/// Per-link, per-path `Psi` and `B`, plus the sensing-beam covariances.
#[derive(Debug, Clone)]
pub struct EstimatorStats {
    pub psi: Vec<Vec<CMat>>,
    pub b: Vec<Vec<CMat>>,
    pub beam: Vec<CMat>,
}

impl EstimatorStats {
    pub fn perfect(model: &SystemModel) -> Self {
        EstimatorStats {
            psi: Vec::new(),
            b: model.links.iter().map(|l| l.r.clone()).collect(),
            beam: model.beam.clone(),
        }
    }

    pub fn b_sum(&self, link: usize) -> CMat {
        let b = &self.b[link];
        b.iter().skip(1).fold(b[0].clone(), |acc, x| acc + x)
    }
}

/// `Psi_{pq,i}` of the embedded-pilot receiver. `q` is a zero-based user index.
pub fn compute_psi(
    model: &SystemModel,
    p: usize,
    q: usize,
    i: usize,
    powers: &UplinkPowers,
    ep: &EpLayout,
) -> Result<CMat> {
    let n = model.grid.n as f64;
    let m_t = model.antennas;
    let link = model.link(p, q);
    let mut psi = &link.r[i] * C64::from(powers.pilot_w * powers.eta);
    let mut data = CMat::zeros(m_t, m_t);
    for qq in 0..model.users {
        data += model.link(p, qq).r_sum();
    }
    psi += data * C64::from(powers.eta * powers.data_w / n);
    let leak = ep.doppler_extent() as f64 / (n * n);
    psi -= link.r_sum() * C64::from(powers.eta * powers.data_w * leak);
    psi += scaled_identity(m_t, powers.noise_var);
    let psi = hermitize(&psi);
    let scale = psi.norm().max(f64::MIN_POSITIVE);
    if min_eigenvalue(&psi) <= 1e-14 * scale {
        return Err(Error::EstimatorDegenerate(format!("Psi for link ({p}, {q}) path {i} is not positive definite")));
    }
    Ok(psi)
}

/// `B = P eta R Psi^{-1} R`.
pub fn compute_b(r: &CMat, psi: &CMat, pilot_w: f64, eta: f64) -> Result<CMat> {
    let chol = psi
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EstimatorDegenerate("Psi is singular or indefinite".into()))?;
    let x = chol.solve(r);
    Ok(hermitize(&(r * x * C64::from(pilot_w * eta))))
}

pub fn estimator_stats(model: &SystemModel, powers: &UplinkPowers, ep: &EpLayout) -> Result<EstimatorStats> {
    ep_overhead(&model.grid, ep, model.users)?;
    let mut psi = Vec::with_capacity(model.links.len());
    let mut b = Vec::with_capacity(model.links.len());
    for p in 0..model.n_tx {
        for q in 0..model.users {
            let link = model.link(p, q);
            let mut psi_link = Vec::with_capacity(link.r.len());
            let mut b_link = Vec::with_capacity(link.r.len());
            for (i, r) in link.r.iter().enumerate() {
                let s = compute_psi(model, p, q, i, powers, ep)?;
                b_link.push(compute_b(r, &s, powers.pilot_w, powers.eta)?);
                psi_link.push(s);
            }
            psi.push(psi_link);
            b.push(b_link);
        }
    }
    Ok(EstimatorStats { psi, b, beam: model.beam.clone() })
}

/// Block-type OFDM pilots: users share `pilot_len` orthogonal sequences
/// round-robin and co-pilot users contaminate each other's estimates.
pub fn bt_pilot_model(model: &SystemModel, powers: &UplinkPowers, pilot_len: usize) -> Result<EstimatorStats> {
    if pilot_len == 0 {
        return Err(Error::Config("ofdm_pilot_length: must be >= 1".into()));
    }
    let m_t = model.antennas;
    let mut psi = Vec::with_capacity(model.links.len());
    let mut b = Vec::with_capacity(model.links.len());
    for p in 0..model.n_tx {
        for q in 0..model.users {
            let link = model.link(p, q);
            let mut psi_link = Vec::with_capacity(link.r.len());
            let mut b_link = Vec::with_capacity(link.r.len());
            for (i, r) in link.r.iter().enumerate() {
                let mut s = scaled_identity(m_t, powers.noise_var);
                for qq in (0..model.users).filter(|qq| qq % pilot_len == q % pilot_len) {
                    let other = &model.link(p, qq).r;
                    s += &other[i.min(other.len() - 1)] * C64::from(powers.pilot_w * powers.eta);
                }
                let s = hermitize(&s);
                b_link.push(compute_b(r, &s, powers.pilot_w, powers.eta)?);
                psi_link.push(s);
            }
            psi.push(psi_link);
            b.push(b_link);
        }
    }
    Ok(EstimatorStats { psi, b, beam: model.beam.clone() })
}

/// Rank-one sensing beam covariance `a a^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingBeamCov {
    pub b: CMat,
}

pub fn sensing_beam_cov(angle: AnglePair, m_t: usize) -> SensingBeamCov {
    SensingBeamCov { b: steering_covariance(angle, m_t) }
}

/// Draws `(h_hat, h)` with `h_hat ~ CN(0, B)` and `h - h_hat ~ CN(0, R - B)` independent.
#[derive(Debug, Clone)]
pub struct EstimateSampler {
    sqrt_b: CMat,
    sqrt_err: CMat,
}

impl EstimateSampler {
    pub fn new(r: &CMat, b: &CMat) -> Result<Self> {
        let err = hermitize(&(r - b));
        let scale = r.norm().max(f64::MIN_POSITIVE);
        if min_eigenvalue(&err) < -1e-10 * scale {
            return Err(Error::EstimatorDegenerate("R - B is indefinite".into()));
        }
        Ok(EstimateSampler { sqrt_b: psd_sqrt(b), sqrt_err: psd_sqrt(&err) })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (CVec, CVec) {
        let h_hat = correlated_normal(rng, &self.sqrt_b);
        let eps = correlated_normal(rng, &self.sqrt_err);
        let h = &h_hat + eps;
        (h_hat, h)
    }
}

pub fn sample_estimate_pair<R: Rng + ?Sized>(rng: &mut R, r: &CMat, b: &CMat) -> Result<(CVec, CVec)> {
    Ok(EstimateSampler::new(r, b)?.sample(rng))
}
