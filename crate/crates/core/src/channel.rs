//! Multipath sampling and effective delay-Doppler channels.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::lattice::{build_t, cp_samples, DdGrid, PathDd};
use crate::linalg::{CMat, CVec, C64};
use crate::rng::{complex_normal, standard_complex_vector, stream, tag};
use rand::seq::index::sample;
use rand::Rng;

/// Largest `MN` for which dense operators are assembled.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBounds {
    pub ell_max: usize,
    pub k_max: usize,
    pub n_cp: usize,
}

pub fn derive_index_bounds(config: &ExperimentConfig) -> Result<IndexBounds> {
    let m = config.subcarriers;
    let n = config.symbols;
    let ell_max = cp_samples(config.tau_max_s, m, config.subcarrier_spacing_hz);
    let doppler_bins = config.max_doppler_hz() * n as f64 / config.subcarrier_spacing_hz;
    let k_max = ceil_robust(doppler_bins);
    if ell_max >= m {
        return Err(Error::GridTooSmall(format!("ell_max = {ell_max} needs more than M = {m} delay bins")));
    }
    if 2 * k_max >= n && k_max > 0 {
        return Err(Error::GridTooSmall(format!("k_max = {k_max} needs more than N = {n} Doppler bins")));
    }
    Ok(IndexBounds { ell_max, k_max, n_cp: ell_max })
}

fn ceil_robust(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Draws `L` delay-Doppler taps for link `(p, q)`.
pub fn sample_paths(
    seed: u64,
    p: usize,
    q: usize,
    paths: usize,
    ell_max: usize,
    k_max: usize,
    distinct_delays: bool,
) -> Result<Vec<PathDd>> {
    if distinct_delays && paths > ell_max + 1 {
        return Err(Error::Config(format!(
            "paths: {paths} distinct delays do not fit in {} delay bins",
            ell_max + 1
        )));
    }
    let mut rng = stream(seed, &[tag::PATHS, p as u64, q as u64]);
    let delays: Vec<usize> = if distinct_delays {
        sample(&mut rng, ell_max + 1, paths).into_vec()
    } else {
        (0..paths).map(|_| rng.random_range(0..=ell_max)).collect()
    };
    let k_max = k_max as i64;
    Ok(delays
        .into_iter()
        .map(|ell| {
            let k = rng.random_range(-k_max..=k_max);
            let kappa = loop {
                let x: f64 = rng.random_range(-0.5..0.5);
                if x > -0.5 {
                    break x;
                }
            };
            PathDd::new(ell, k, kappa)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRealization {
    pub dd: PathDd,
    pub gain: CVec,
}

/// `H = sum_i h_i^T (x) T_i`, an `MN x (M_t MN)` matrix.
pub fn assemble_effective_channel(paths: &[PathRealization], grid: &DdGrid) -> Result<CMat> {
    let mn = grid.mn();
    if mn > DENSE_LIMIT {
        return Err(Error::UseFactoredForm(mn));
    }
    let m_t = paths.first().map(|p| p.gain.len()).unwrap_or(1);
    let mut h = CMat::zeros(mn, m_t * mn);
    for path in paths {
        if path.gain.len() != m_t {
            return Err(Error::DimensionMismatch("path gains have different lengths".into()));
        }
        let t = build_t(grid, &path.dd)?;
        for (s, g) in path.gain.iter().enumerate() {
            let mut block = h.view_mut((0, s * mn), (mn, mn));
            block += &t.entries * *g;
        }
    }
    Ok(h)
}

/// Swerling-I amplitudes, one per `(p, r)` pair in `p`-major order.
pub fn sample_rcs(seed: u64, sigma2: f64, n_tx: usize, n_rx: usize) -> Vec<C64> {
    let mut rng = stream(seed, &[tag::RCS]);
    (0..n_tx * n_rx).map(|_| complex_normal(&mut rng, sigma2)).collect()
}

/// I.i.d. `CN(0, 1)` factor of the target-free channel between `p` and `r`.
pub fn sample_target_free_factor(seed: u64, p: usize, r: usize, m_t: usize) -> CMat {
    let mut rng = stream(seed, &[tag::CLUTTER, p as u64, r as u64]);
    let v = standard_complex_vector(&mut rng, m_t * m_t);
    CMat::from_column_slice(m_t, m_t, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    #[test]
    fn index_bounds_examples() {
        let cfg = ExperimentConfig::default();
        let b = derive_index_bounds(&cfg).unwrap();
        assert_eq!((b.ell_max, b.n_cp, b.k_max), (20, 20, 10));
        let evb = ExperimentConfig { tau_max_s: 10e-6, ..cfg.clone() };
        assert_eq!(derive_index_bounds(&evb).unwrap().n_cp, 77);
        let still = ExperimentConfig { v_max_kmh: 0.0, ..cfg.clone() };
        assert_eq!(derive_index_bounds(&still).unwrap().k_max, 0);
        let tiny = ExperimentConfig { subcarriers: 16, tau_max_s: 2e-3, ..cfg };
        assert!(matches!(derive_index_bounds(&tiny), Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn desk_grid_bounds() {
        let cfg = ExperimentConfig { subcarriers: 16, symbols: 8, tau_max_s: 5e-6, ..ExperimentConfig::default() };
        let b = derive_index_bounds(&cfg).unwrap();
        assert_eq!((b.ell_max, b.k_max), (2, 1));
    }

    #[test]
    fn single_path_without_delay_spread() {
        let p = sample_paths(1, 0, 0, 1, 0, 3, true).unwrap();
        assert_eq!(p[0].ell, 0);
    }

    #[test]
    fn distinct_delays_are_distinct() {
        for seed in 0..50 {
            let p = sample_paths(seed, 1, 2, 9, 20, 10, true).unwrap();
            let mut d: Vec<usize> = p.iter().map(|x| x.ell).collect();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 9);
            assert!(p.iter().all(|x| x.k.abs() <= 10 && x.kappa > -0.5 && x.kappa < 0.5));
        }
        assert!(matches!(sample_paths(0, 0, 0, 4, 2, 1, true), Err(Error::Config(_))));
        assert!(sample_paths(0, 0, 0, 4, 2, 1, false).is_ok());
    }

    #[test]
    fn single_identity_path_gives_identity() {
        let grid = DdGrid::new(4, 2, 15e3, 0).unwrap();
        let path = PathRealization { dd: PathDd::new(0, 0, 0.0), gain: CVec::from_element(1, C64::new(1.0, 0.0)) };
        let h = assemble_effective_channel(&[path], &grid).unwrap();
        assert!((h - identity(8)).norm() < 1e-12);
    }

    #[test]
    fn kronecker_block_layout() {
        let grid = DdGrid::new(4, 2, 15e3, 0).unwrap();
        let dd = PathDd::new(1, 1, 0.2);
        let a = C64::new(0.3, -1.0);
        let b = C64::new(-0.7, 0.4);
        let path = PathRealization { dd, gain: CVec::from_vec(vec![a, b]) };
        let h = assemble_effective_channel(std::slice::from_ref(&path), &grid).unwrap();
        let t = build_t(&grid, &dd).unwrap().entries;
        assert!((h.columns(0, 8) - &t * a).norm() < 1e-12);
        assert!((h.columns(8, 8) - &t * b).norm() < 1e-12);

        let other = PathRealization { dd: PathDd::new(2, -1, -0.1), gain: CVec::from_vec(vec![b, a]) };
        let both = assemble_effective_channel(&[path.clone(), other.clone()], &grid).unwrap();
        let sum = h + assemble_effective_channel(&[other], &grid).unwrap();
        assert!((both - sum).norm() < 1e-12);
    }

    #[test]
    fn assembly_guard() {
        let grid = DdGrid::new(128, 64, 15e3, 0).unwrap();
        let path = PathRealization { dd: PathDd::new(0, 0, 0.0), gain: CVec::from_element(1, C64::new(1.0, 0.0)) };
        assert!(matches!(assemble_effective_channel(&[path], &grid), Err(Error::UseFactoredForm(8192))));
    }

    #[test]
    fn rcs_moments() {
        assert!(sample_rcs(3, 0.0, 4, 2).iter().all(|z| z.norm() == 0.0));
        let draws = sample_rcs(5, 1.0, 100_000, 1);
        let n = draws.len() as f64;
        let var = draws.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let re = draws.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let im = draws.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.03);
        assert!((re - 0.5).abs() < 0.02 && (im - 0.5).abs() < 0.02);
    }

    #[test]
    fn target_free_factor_moments() {
        let a = sample_target_free_factor(9, 1, 0, 4);
        assert_eq!(a, sample_target_free_factor(9, 1, 0, 4));
        let draws = 10_000;
        let mut energy = 0.0;
        let mut mean = CMat::zeros(4, 4);
        for s in 0..draws {
            let w = sample_target_free_factor(s, 0, 0, 4);
            energy += w.norm_squared();
            mean += w;
        }
        energy /= draws as f64;
        mean /= C64::from(draws as f64);
        assert!((energy - 16.0).abs() / 16.0 < 0.03);
        assert!(mean.iter().all(|z| z.norm() < 0.05));
    }
}
