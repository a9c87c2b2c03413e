//! Closed-form downlink spectral efficiency and sensing SINR.
//!
//! Stream index 0 is the dedicated sensing beam; user `q` (zero-based) is
//! stream `q + 1`. All SINR expressions are linear in the second-order
//! statistics, so they are evaluated from small tables of aggregated traces.

use crate::channel::DENSE_LIMIT;
use crate::config::SignalKind;
use crate::error::{Error, Result};
use crate::estimation::EstimatorStats;
use crate::lattice::{DdGrid, PathPair};
use crate::linalg::{trace_product, trace_re, CMat};
use crate::model::SystemModel;
use serde::{Deserialize, Serialize};

/// Power-control coefficients, `n_tx x (users + 1)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAlloc {
    pub n_tx: usize,
    pub users: usize,
    pub eta: Vec<f64>,
}

impl PowerAlloc {
    pub fn zeros(n_tx: usize, users: usize) -> Self {
        PowerAlloc { n_tx, users, eta: vec![0.0; n_tx * (users + 1)] }
    }

    #[inline]
    pub fn get(&self, p: usize, stream: usize) -> f64 {
        self.eta[p * (self.users + 1) + stream]
    }

    #[inline]
    pub fn set(&mut self, p: usize, stream: usize, value: f64) {
        self.eta[p * (self.users + 1) + stream] = value;
    }

    pub fn scaled(&self, t: f64) -> Self {
        PowerAlloc { eta: self.eta.iter().map(|x| x * t).collect(), ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        if self.eta.len() != self.n_tx * (self.users + 1) {
            return Err(Error::DimensionMismatch("power allocation has the wrong size".into()));
        }
        if let Some(x) = self.eta.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::Domain(format!("power coefficient {x} is negative or NaN")));
        }
        Ok(())
    }
}

pub fn prelog(grid: &DdGrid, kind: SignalKind) -> Result<f64> {
    let frame = match kind {
        SignalKind::Otfs => grid.mn(),
        SignalKind::Ofdm => grid.m,
    };
    if grid.n_cp >= frame {
        return Err(Error::Config(format!("tau_max_s: cyclic prefix of {} samples fills the frame", grid.n_cp)));
    }
    Ok(1.0 - grid.n_cp as f64 / frame as f64)
}

/// Which matrix fills the channel slot of the interference traces: the true
/// correlation `R` for evaluation or the estimate covariance `B` for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstSlot {
    Channel,
    Estimate,
}

/// Aggregated traces of one deployment.
#[derive(Debug, Clone)]
pub struct TraceTables {
    pub n_tx: usize,
    pub users: usize,
    pub n_rx: usize,
    pub antennas: usize,
    pub omega: f64,
    /// `sum_i Tr(B_{p,s,i})` per `(p, stream)`.
    pub signal: Vec<f64>,
    /// `sum_i sum_j Tr(X_{pq,i} B_{p,s,j})` per `(p, q, stream)`.
    pub cross: Vec<f64>,
    /// `sum_i Tr(X_{pq,i} B_{pq,i})` per `(p, q)`.
    pub own_diag: Vec<f64>,
    /// `sum_r sigma^2 beta Tr(V B_{p,s} V^H)` per `(p, stream)`.
    pub sense_num: Vec<f64>,
    /// `sum_r Tr(R_rx) Tr(R_tx B_{p,s})` per `(p, stream)`.
    pub sense_clutter: Vec<f64>,
}

impl TraceTables {
    pub fn new(model: &SystemModel, stats: &EstimatorStats, slot: FirstSlot, kind: SignalKind) -> Result<Self> {
        let (n_tx, users) = (model.n_tx, model.users);
        let s = users + 1;
        let b_sum: Vec<CMat> = (0..model.links.len()).map(|l| stats.b_sum(l)).collect();
        let stream_cov = |p: usize, st: usize| -> &CMat {
            if st == 0 {
                &stats.beam[p]
            } else {
                &b_sum[p * users + st - 1]
            }
        };
        let mut signal = vec![0.0; n_tx * s];
        let mut sense_num = vec![0.0; n_tx * s];
        let mut sense_clutter = vec![0.0; n_tx * s];
        let mut cross = vec![0.0; n_tx * users * s];
        let mut own_diag = vec![0.0; n_tx * users];
        for p in 0..n_tx {
            for st in 0..s {
                let b = stream_cov(p, st);
                signal[p * s + st] = trace_re(b);
                for r in 0..model.n_rx {
                    let link = model.sensing_link(p, r);
                    let v = link.v();
                    sense_num[p * s + st] += link.rcs_var * link.radar_gain * trace_product(&(&v * b), &v.adjoint());
                    sense_clutter[p * s + st] += trace_re(&link.r_rx) * trace_product(&link.r_tx, b);
                }
            }
            for q in 0..users {
                let l = p * users + q;
                let first: &[CMat] = match slot {
                    FirstSlot::Channel => &model.links[l].r,
                    FirstSlot::Estimate => &stats.b[l],
                };
                let first_sum = first.iter().skip(1).fold(first[0].clone(), |acc, x| acc + x);
                for st in 0..s {
                    cross[l * s + st] = trace_product(&first_sum, stream_cov(p, st));
                }
                own_diag[l] = first.iter().zip(&stats.b[l]).map(|(x, b)| trace_product(x, b)).sum();
            }
        }
        Ok(TraceTables {
            n_tx,
            users,
            n_rx: model.n_rx,
            antennas: model.antennas,
            omega: prelog(&model.grid, kind)?,
            signal,
            cross,
            own_diag,
            sense_num,
            sense_clutter,
        })
    }

    #[inline]
    pub fn signal(&self, p: usize, stream: usize) -> f64 {
        self.signal[p * (self.users + 1) + stream]
    }

    #[inline]
    pub fn cross(&self, p: usize, q: usize, stream: usize) -> f64 {
        self.cross[(p * self.users + q) * (self.users + 1) + stream]
    }

    #[inline]
    pub fn own_diag(&self, p: usize, q: usize) -> f64 {
        self.own_diag[p * self.users + q]
    }

    /// `sum_p sqrt(eta_pq) b_pq`.
    pub fn amplitude(&self, q: usize, eta: &PowerAlloc) -> f64 {
        (0..self.n_tx).map(|p| eta.get(p, q + 1).sqrt() * self.signal(p, q + 1)).sum()
    }

    /// Interference power of user `q` from every stream of every AP with `chi + kappa = 1`.
    pub fn interference(&self, q: usize, eta: &PowerAlloc) -> f64 {
        let mut acc = 0.0;
        for p in 0..self.n_tx {
            for st in 0..=self.users {
                acc += eta.get(p, st) * self.cross(p, q, st);
            }
        }
        acc
    }
}

pub fn sinr_lower_bound(q: usize, eta: &PowerAlloc, tables: &TraceTables, rho_d: f64) -> Result<f64> {
    eta.check()?;
    let a = tables.amplitude(q, eta);
    Ok(rho_d * a * a / (rho_d * tables.interference(q, eta) + 1.0))
}

/// `(SE, SINR)` of user `q` with every same-link path pair weighted by one.
pub fn se_lower_bound(q: usize, eta: &PowerAlloc, tables: &TraceTables, rho_d: f64) -> Result<(f64, f64)> {
    let sinr = sinr_lower_bound(q, eta, tables, rho_d)?;
    Ok((tables.omega * (1.0 + sinr).log2(), sinr))
}

/// Per-symbol `chi`/`kappa`-weighted own-link traces.
#[derive(Debug, Clone)]
pub struct LinkWeights {
    /// `sum_{i != j} chi_v Tr(X_i B_j)` per symbol.
    pub chi: Vec<f64>,
    /// `sum_{i != j} kappa_v Tr(X_i B_j)` per symbol.
    pub kappa: Vec<f64>,
}

/// Cached per-symbol weights for the full SE of every link.
#[derive(Debug, Clone)]
pub struct FullSeTables {
    pub mn: usize,
    pub links: Vec<LinkWeights>,
}

impl FullSeTables {
    pub fn new(model: &SystemModel, stats: &EstimatorStats, slot: FirstSlot) -> Result<Self> {
        let grid = &model.grid;
        let mn = grid.mn();
        if mn > DENSE_LIMIT {
            return Err(Error::UseLowerBound(mn));
        }
        let links = model
            .links
            .iter()
            .enumerate()
            .map(|(l, link)| {
                let first: &[CMat] = match slot {
                    FirstSlot::Channel => &link.r,
                    FirstSlot::Estimate => &stats.b[l],
                };
                let mut chi = vec![0.0; mn];
                let mut kappa = vec![0.0; mn];
                for (i, pi) in link.paths.iter().enumerate() {
                    for (j, pj) in link.paths.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        let t = trace_product(&first[i], &stats.b[l][j]);
                        let pair = PathPair::new(grid, pi, pj);
                        for v in 0..mn {
                            let (c, k) = pair.chi_kappa(v);
                            chi[v] += c * t;
                            kappa[v] += k * t;
                        }
                    }
                }
                LinkWeights { chi, kappa }
            })
            .collect();
        Ok(FullSeTables { mn, links })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullSe {
    pub se: f64,
    pub sinr: Vec<f64>,
}

/// Per-symbol SE of user `q` with the exact `chi`/`kappa` weights.
pub fn se_full(q: usize, eta: &PowerAlloc, tables: &TraceTables, full: &FullSeTables, rho_d: f64) -> Result<FullSe> {
    eta.check()?;
    let a = tables.amplitude(q, eta);
    let num = rho_d * a * a;
    let mut base = 0.0;
    for p in 0..tables.n_tx {
        for st in 0..=tables.users {
            if st != q + 1 {
                base += eta.get(p, st) * tables.cross(p, q, st);
            }
        }
        base += eta.get(p, q + 1) * tables.own_diag(p, q);
    }
    let mut sinr = Vec::with_capacity(full.mn);
    let mut se = 0.0;
    for v in 0..full.mn {
        let mut own = 0.0;
        for p in 0..tables.n_tx {
            let w = &full.links[p * tables.users + q];
            own += eta.get(p, q + 1) * (w.chi[v] + w.kappa[v]);
        }
        let s = num / (rho_d * (base + own) + 1.0);
        se += (1.0 + s).log2();
        sinr.push(s);
    }
    Ok(FullSe { se: tables.omega * se / full.mn as f64, sinr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub ds2: f64,
    pub bu: f64,
    pub isi: f64,
    pub iui: f64,
}

pub enum ComponentMode<'a> {
    /// `chi = 0`, `kappa = 1` for every off-diagonal path pair.
    Bound,
    /// Exact weights averaged over the lattice.
    Full(&'a FullSeTables),
}

/// The four received-power components of user `q`, without the `rho_d` factor.
pub fn component_powers(q: usize, eta: &PowerAlloc, tables: &TraceTables, mode: ComponentMode) -> Result<Components> {
    eta.check()?;
    let a = tables.amplitude(q, eta);
    let mut bu = 0.0;
    let mut isi = 0.0;
    let mut iui = 0.0;
    for p in 0..tables.n_tx {
        let e = eta.get(p, q + 1);
        for st in 0..=tables.users {
            if st != q + 1 {
                iui += eta.get(p, st) * tables.cross(p, q, st);
            }
        }
        let diag = tables.own_diag(p, q);
        match mode {
            ComponentMode::Bound => {
                bu += e * diag;
                isi += e * (tables.cross(p, q, q + 1) - diag);
            }
            ComponentMode::Full(full) => {
                let w = &full.links[p * tables.users + q];
                let n = full.mn as f64;
                bu += e * (diag + w.chi.iter().sum::<f64>() / n);
                isi += e * w.kappa.iter().sum::<f64>() / n;
            }
        }
    }
    Ok(Components { ds2: a * a, bu, isi, iui })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingReport {
    pub numerator: f64,
    pub denominator: f64,
    pub sinr: f64,
    pub sinr_db: f64,
}

pub fn sensing_sinr(eta: &PowerAlloc, tables: &TraceTables, rho_d: f64) -> Result<SensingReport> {
    eta.check()?;
    let mut num = 0.0;
    let mut clutter = 0.0;
    for p in 0..tables.n_tx {
        for st in 0..=tables.users {
            let e = eta.get(p, st);
            num += e * tables.sense_num[p * (tables.users + 1) + st];
            clutter += e * tables.sense_clutter[p * (tables.users + 1) + st];
        }
    }
    let numerator = rho_d * num;
    let denominator = rho_d * clutter + (tables.n_rx * tables.antennas) as f64;
    let sinr = numerator / denominator;
    Ok(SensingReport { numerator, denominator, sinr, sinr_db: 10.0 * sinr.log10() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub se_full: Option<f64>,
    pub se_lower: f64,
    pub sinr_lower: f64,
    pub components: Components,
}

/// Lower-bound SE (and the full SE when `full` is given) of every user.
pub fn se_report(eta: &PowerAlloc, tables: &TraceTables, full: Option<&FullSeTables>, rho_d: f64) -> Result<Vec<UserReport>> {
    (0..tables.users)
        .map(|q| {
            let (se_lower, sinr_lower) = se_lower_bound(q, eta, tables, rho_d)?;
            let se_full = match full {
                Some(f) => Some(se_full(q, eta, tables, f, rho_d)?.se),
                None => None,
            };
            let mode = full.map_or(ComponentMode::Bound, ComponentMode::Full);
            Ok(UserReport { se_full, se_lower, sinr_lower, components: component_powers(q, eta, tables, mode)? })
        })
        .collect()
}
