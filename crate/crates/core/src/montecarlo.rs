//! Monte Carlo check of the closed-form SE.
//!
//! Each realization draws `(h_hat, h)` for every path of every link and forms
//! the per-symbol entries of `G_qs = sum_p sqrt(eta_ps) sum_ij (h_i^T conj(w_j)) T_i T_j^H`
//! without materializing any `MN x MN` matrix. Every `T_i T_j^H` shares the
//! outer `F_N (x) I_M` factor, so `G_qs` is that factor around a sum of
//! monomial matrices stored by diagonal offset.

use crate::error::{Error, Result};
use crate::estimation::{EstimateSampler, EstimatorStats};
use crate::lattice::{DdGrid, PathDd};
use crate::linalg::{cis, CVec, C64};
use crate::model::SystemModel;
use crate::performance::{component_powers, se_full, ComponentMode, Components, FirstSlot, FullSeTables, PowerAlloc, TraceTables};
use crate::config::SignalKind;
use crate::rng::{stream, tag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest lattice accepted by the Monte Carlo validator.
pub const MC_LIMIT: usize = 512;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl McEstimate {
    fn from_samples(x: &[f64]) -> Self {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        McEstimate { mean, std_err: (var / n as f64).sqrt(), count: n }
    }

    /// `|mean - reference|` in standard errors.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if self.std_err > 0.0 {
            d / self.std_err
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McUserReport {
    pub user: usize,
    pub mc_se: f64,
    pub closed_se: f64,
    pub rel_error: f64,
    pub ds2: McEstimate,
    pub bu: McEstimate,
    pub isi: McEstimate,
    pub iui: McEstimate,
    pub closed: Components,
}

/// Sum of monomial matrices grouped by diagonal offset: entry `(a, (a + o) mod MN)`.
struct Banded {
    mn: usize,
    diagonals: Vec<(usize, Vec<C64>)>,
}

impl Banded {
    fn new(mn: usize) -> Self {
        Banded { mn, diagonals: Vec::new() }
    }

    fn diagonal(&mut self, offset: usize) -> &mut Vec<C64> {
        let pos = match self.diagonals.iter().position(|(o, _)| *o == offset) {
            Some(pos) => pos,
            None => {
                self.diagonals.push((offset, vec![C64::new(0.0, 0.0); self.mn]));
                self.diagonals.len() - 1
            }
        };
        &mut self.diagonals[pos].1
    }

    /// Adds `c Pi^(ell_i) Delta^(dnu) Pi^(-ell_j)` using the precomputed phase ramp.
    fn add_pair(&mut self, c: C64, ell_i: usize, ell_j: usize, ramp: &[C64]) {
        let mn = self.mn;
        let offset = (ell_j + mn - ell_i % mn) % mn;
        let diag = self.diagonal(offset);
        for (a, d) in diag.iter_mut().enumerate() {
            let n = (a + mn - ell_i % mn) % mn;
            *d += c * ramp[n];
        }
    }
}

/// Per-symbol diagonal entry and row power of `U A U^H`, `U = F_N (x) I_M`.
fn row_stats(grid: &DdGrid, a: &Banded, dft: &[C64], scratch: &mut [C64]) -> (Vec<C64>, Vec<f64>) {
    let (m, n, mn) = (grid.m, grid.n, grid.mn());
    let mut diag = vec![C64::new(0.0, 0.0); mn];
    let mut power = vec![0.0; mn];
    let mut touched: Vec<usize> = Vec::with_capacity(a.diagonals.len() * n);
    for v in 0..mn {
        let (kv, lv) = grid.split(v);
        for (offset, values) in &a.diagonals {
            for ka in 0..n {
                let row = ka * m + lv;
                let col = (row + offset) % mn;
                if scratch[col] == C64::new(0.0, 0.0) {
                    touched.push(col);
                }
                scratch[col] += dft[(kv * ka) % n] * values[row];
            }
        }
        let mut d = C64::new(0.0, 0.0);
        let mut p = 0.0;
        for &col in &touched {
            let x = scratch[col];
            p += x.norm_sqr();
            let (kb, lb) = grid.split(col);
            if lb == lv {
                d += x * dft[(kv * kb) % n].conj();
            }
            scratch[col] = C64::new(0.0, 0.0);
        }
        touched.clear();
        diag[v] = d;
        power[v] = p;
    }
    (diag, power)
}

/// One realization: per user, the desired diagonal, own-stream row power
/// and the summed row power of every other stream, per symbol.
struct Draw {
    x: Vec<Vec<C64>>,
    own: Vec<Vec<f64>>,
    iui: Vec<Vec<f64>>,
}

struct Prepared<'a> {
    model: &'a SystemModel,
    eta: &'a PowerAlloc,
    samplers: Vec<Vec<EstimateSampler>>,
    beams: Vec<CVec>,
    /// `cis(2 pi dnu n / MN)` per link, stream and path pair.
    ramps: Vec<Vec<Vec<Vec<C64>>>>,
    dft: Vec<C64>,
}

fn phase_ramp(grid: &DdGrid, pi: &PathDd, pj: &PathDd) -> Vec<C64> {
    let mn = grid.mn() as f64;
    let dnu = pi.nu() - pj.nu();
    (0..grid.mn()).map(|n| cis(2.0 * PI * dnu * n as f64 / mn)).collect()
}

/// Unit-norm-free generator `a` with `a a^H = B` for a rank-one PSD `B`.
fn rank_one_factor(b: &crate::linalg::CMat) -> CVec {
    let j = (0..b.nrows()).max_by(|&x, &y| b[(x, x)].re.total_cmp(&b[(y, y)].re)).unwrap_or(0);
    let d = b[(j, j)].re;
    if d <= 0.0 {
        return CVec::zeros(b.nrows());
    }
    b.column(j) / C64::new(d.sqrt(), 0.0)
}

impl<'a> Prepared<'a> {
    fn new(model: &'a SystemModel, stats: &EstimatorStats, eta: &'a PowerAlloc) -> Result<Self> {
        let grid = &model.grid;
        let identity = PathDd::new(0, 0, 0.0);
        let mut samplers = Vec::with_capacity(model.links.len());
        let mut ramps = Vec::with_capacity(model.links.len());
        for (l, link) in model.links.iter().enumerate() {
            samplers.push(link.r.iter().zip(&stats.b[l]).map(|(r, b)| EstimateSampler::new(r, b)).collect::<Result<Vec<_>>>()?);
            let p = l / model.users;
            let mut per_stream = Vec::with_capacity(model.users + 1);
            per_stream.push(link.paths.iter().map(|pi| phase_ramp(grid, pi, &identity)).collect::<Vec<_>>());
            for qq in 0..model.users {
                let right = &model.link(p, qq).paths;
                per_stream.push(link.paths.iter().flat_map(|pi| right.iter().map(move |pj| phase_ramp(grid, pi, pj))).collect());
            }
            ramps.push(per_stream);
        }
        let n = grid.n;
        let dft = (0..n).map(|k| cis(-2.0 * PI * k as f64 / n as f64) / (n as f64).sqrt()).collect();
        Ok(Prepared { model, eta, samplers, beams: stats.beam.iter().map(rank_one_factor).collect(), ramps, dft })
    }

    fn ramp(&self, link: usize, stream: usize, i: usize, j: usize) -> &[C64] {
        let right = if stream == 0 { 1 } else { self.model.link(link / self.model.users, stream - 1).paths.len() };
        &self.ramps[link][stream][i * right + j]
    }

    fn draw(&self, seed: u64, r: usize) -> Draw {
        let model = self.model;
        let grid = &model.grid;
        let (n_tx, users, mn) = (model.n_tx, model.users, grid.mn());
        let mut rng = stream(seed, &[tag::REALIZATION, r as u64]);
        let pairs: Vec<(Vec<CVec>, Vec<CVec>)> = self
            .samplers
            .iter()
            .map(|per_path| {
                let (hat, true_h): (Vec<_>, Vec<_>) = per_path.iter().map(|s| s.sample(&mut rng)).unzip();
                (hat, true_h)
            })
            .collect();
        let mut scratch = vec![C64::new(0.0, 0.0); mn];
        let mut out = Draw { x: Vec::with_capacity(users), own: Vec::with_capacity(users), iui: Vec::with_capacity(users) };
        for q in 0..users {
            let mut iui = vec![0.0; mn];
            let mut own_x = Vec::new();
            let mut own_pow = Vec::new();
            for st in 0..=users {
                let mut acc = Banded::new(mn);
                let mut any = false;
                for p in 0..n_tx {
                    let e = self.eta.get(p, st);
                    if e <= 0.0 {
                        continue;
                    }
                    any = true;
                    let amp = e.sqrt();
                    let l = p * users + q;
                    let h = &pairs[l].1;
                    let paths = &model.links[l].paths;
                    if st == 0 {
                        let w = &self.beams[p];
                        for (i, hi) in h.iter().enumerate() {
                            let c = hi.iter().zip(w.iter()).map(|(a, b)| a * b.conj()).sum::<C64>() * amp;
                            acc.add_pair(c, paths[i].ell, 0, self.ramp(l, 0, i, 0));
                        }
                    } else {
                        let hat = &pairs[p * users + st - 1].0;
                        let right = &model.link(p, st - 1).paths;
                        for (i, hi) in h.iter().enumerate() {
                            for (j, wj) in hat.iter().enumerate() {
                                let c = hi.iter().zip(wj.iter()).map(|(a, b)| a * b.conj()).sum::<C64>() * amp;
                                acc.add_pair(c, paths[i].ell, right[j].ell, self.ramp(l, st, i, j));
                            }
                        }
                    }
                }
                let (diag, power) = if any {
                    row_stats(grid, &acc, &self.dft, &mut scratch)
                } else {
                    (vec![C64::new(0.0, 0.0); mn], vec![0.0; mn])
                };
                if st == q + 1 {
                    own_x = diag;
                    own_pow = power;
                } else {
                    for (t, pw) in iui.iter_mut().zip(power) {
                        *t += pw;
                    }
                }
            }
            out.x.push(own_x);
            out.own.push(own_pow);
            out.iui.push(iui);
        }
        out
    }
}

/// Monte Carlo estimates of the per-user components and SE at allocation `eta`.
pub fn mc_validate(
    model: &SystemModel,
    stats: &EstimatorStats,
    eta: &PowerAlloc,
    seed: u64,
    n_real: usize,
) -> Result<Vec<McUserReport>> {
    let mn = model.grid.mn();
    if mn > MC_LIMIT {
        return Err(Error::Domain(format!("Monte Carlo validation needs MN <= {MC_LIMIT}, got {mn}")));
    }
    if n_real == 0 {
        return Err(Error::Domain("realization count must be positive".into()));
    }
    eta.check()?;
    let prepared = Prepared::new(model, stats, eta)?;
    let draws: Vec<Draw> = (0..n_real).into_par_iter().map(|r| prepared.draw(seed, r)).collect();

    let tables = TraceTables::new(model, stats, FirstSlot::Channel, SignalKind::Otfs)?;
    let full = FullSeTables::new(model, stats, FirstSlot::Channel)?;
    let rho = model.rho_d;
    let nf = n_real as f64;
    let mnf = mn as f64;
    (0..model.users)
        .map(|q| {
            let mut mean_x = vec![C64::new(0.0, 0.0); mn];
            let mut mean_own = vec![0.0; mn];
            let mut mean_iui = vec![0.0; mn];
            for d in &draws {
                for v in 0..mn {
                    mean_x[v] += d.x[q][v] / nf;
                    mean_own[v] += d.own[q][v] / nf;
                    mean_iui[v] += d.iui[q][v] / nf;
                }
            }
            let ds_samples: Vec<f64> = draws
                .iter()
                .map(|d| {
                    let lin: f64 = (0..mn).map(|v| 2.0 * (mean_x[v].conj() * d.x[q][v]).re).sum::<f64>() / mnf;
                    lin - mean_x.iter().map(|m| m.norm_sqr()).sum::<f64>() / mnf
                })
                .collect();
            let bu_samples: Vec<f64> =
                draws.iter().map(|d| (0..mn).map(|v| (d.x[q][v] - mean_x[v]).norm_sqr()).sum::<f64>() / mnf * nf / (nf - 1.0).max(1.0)).collect();
            let isi_samples: Vec<f64> =
                draws.iter().map(|d| (0..mn).map(|v| d.own[q][v] - d.x[q][v].norm_sqr()).sum::<f64>() / mnf).collect();
            let iui_samples: Vec<f64> = draws.iter().map(|d| d.iui[q].iter().sum::<f64>() / mnf).collect();

            let mut se = 0.0;
            for v in 0..mn {
                let ds = mean_x[v].norm_sqr();
                let rest = mean_own[v] - ds + mean_iui[v];
                se += (1.0 + rho * ds / (rho * rest + 1.0)).log2();
            }
            let mc_se = tables.omega * se / mnf;
            let closed_se = se_full(q, eta, &tables, &full, rho)?.se;
            Ok(McUserReport {
                user: q,
                mc_se,
                closed_se,
                rel_error: (mc_se - closed_se).abs() / closed_se,
                ds2: McEstimate::from_samples(&ds_samples),
                bu: McEstimate::from_samples(&bu_samples),
                isi: McEstimate::from_samples(&isi_samples),
                iui: McEstimate::from_samples(&iui_samples),
                closed: component_powers(q, eta, &tables, ComponentMode::Full(&full))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PathPair;

    #[test]
    fn banded_row_stats_match_dense_rows() {
        let grid = DdGrid::new(4, 4, 15e3, 0).unwrap();
        let pi = PathDd::new(1, 1, 0.3);
        let pj = PathDd::new(2, -1, -0.2);
        let pk = PathDd::new(1, 0, 0.1);
        let c1 = C64::new(0.7, -0.2);
        let c2 = C64::new(-0.4, 0.9);
        let mut acc = Banded::new(grid.mn());
        acc.add_pair(c1, pi.ell, pj.ell, &phase_ramp(&grid, &pi, &pj));
        acc.add_pair(c2, pk.ell, pi.ell, &phase_ramp(&grid, &pk, &pi));
        let n = grid.n;
        let dft: Vec<C64> = (0..n).map(|k| cis(-2.0 * PI * k as f64 / n as f64) / (n as f64).sqrt()).collect();
        let mut scratch = vec![C64::new(0.0, 0.0); grid.mn()];
        let (diag, power) = row_stats(&grid, &acc, &dft, &mut scratch);
        let a = PathPair::new(&grid, &pi, &pj);
        let b = PathPair::new(&grid, &pk, &pi);
        for v in 0..grid.mn() {
            let row: Vec<C64> = a.row(v).iter().zip(b.row(v)).map(|(x, y)| c1 * x + c2 * y).collect();
            assert!((row[v] - diag[v]).norm() < 1e-12);
            let p: f64 = row.iter().map(|x| x.norm_sqr()).sum();
            assert!((p - power[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_standard_error() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_err - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(e.z_score(2.5), 0.0);
    }
}
