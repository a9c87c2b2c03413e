//! Delay-Doppler lattice operators.
//!
//! The effective per-path operator on an `M x N` delay-Doppler grid is
//! `T = (F_N (x) I_M) Pi^ell Delta^(k + kappa) (F_N^H (x) I_M)`, where `Pi` is the
//! `MN x MN` cyclic forward shift and `Delta = diag(z^0, ..., z^(MN-1))` with
//! `z = e^{j 2 pi / MN}`. Symbols are vectorized as `v = k M + ell`
//! (column-major over an `M x N` array indexed by delay, then Doppler).
//!
//! Dense builders are the ground truth. [`PathPair`] gives row access to
//! `T_i T_j^H` in `O(N)` per entry without forming either operator, which is
//! what the per-symbol SE and the Monte Carlo harness use.

use crate::error::{Error, Result};
use crate::linalg::{cis, dft, identity, kron, max_abs, CMat, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The `(M, N, delta_f, T, N_cp)` lattice description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdGrid {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub t_sym: f64,
    pub n_cp: usize,
}

impl DdGrid {
    pub fn new(m: usize, n: usize, delta_f: f64, n_cp: usize) -> Result<Self> {
        let grid = DdGrid { m, n, delta_f, t_sym: 1.0 / delta_f, n_cp };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid whose CP covers the delay spread: `N_cp = ceil(tau_max M delta_f)`.
    pub fn with_delay_spread(m: usize, n: usize, delta_f: f64, tau_max: f64) -> Result<Self> {
        let n_cp = cp_samples(tau_max, m, delta_f);
        Self::new(m, n, delta_f, n_cp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config(format!("grid needs M, N >= 1 (got M={}, N={})", self.m, self.n)));
        }
        if !(self.delta_f > 0.0) || !self.delta_f.is_finite() {
            return Err(Error::Config(format!("subcarrier spacing must be positive, got {}", self.delta_f)));
        }
        if (self.t_sym * self.delta_f - 1.0).abs() > 1e-12 {
            return Err(Error::Config("symbol duration must equal 1/delta_f".into()));
        }
        Ok(())
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// `(k, ell)` of a vectorized index.
    #[inline]
    pub fn split(&self, v: usize) -> (usize, usize) {
        (v / self.m, v % self.m)
    }
}

/// `ceil(tau_max M delta_f)`, robust to round-off on exact products.
pub fn cp_samples(tau_max: f64, m: usize, delta_f: f64) -> usize {
    let x = tau_max * m as f64 * delta_f;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// One propagation path on the lattice: delay index, Doppler index and
/// fractional Doppler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDd {
    pub ell: usize,
    pub k: i64,
    pub kappa: f64,
}

impl PathDd {
    pub fn new(ell: usize, k: i64, kappa: f64) -> Self {
        PathDd { ell, k, kappa }
    }

    /// Total (signed) Doppler exponent `k + kappa`.
    #[inline]
    pub fn nu(&self) -> f64 {
        self.k as f64 + self.kappa
    }

    pub fn check(&self, grid: &DdGrid) -> Result<()> {
        if self.ell >= grid.m {
            return Err(Error::IndexOutOfBounds(format!("delay index {} >= M = {}", self.ell, grid.m)));
        }
        if self.k.unsigned_abs() as usize >= grid.n.max(1) && grid.n > 1 {
            return Err(Error::IndexOutOfBounds(format!("Doppler index {} outside grid of N = {}", self.k, grid.n)));
        }
        if !(self.kappa > -0.5 && self.kappa < 0.5) {
            return Err(Error::IndexOutOfBounds(format!("fractional Doppler {} not in (-0.5, 0.5)", self.kappa)));
        }
        Ok(())
    }
}

/// A dense `MN x MN` (or `M x M`) lattice operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DdOperator {
    pub entries: CMat,
}

impl DdOperator {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `max |T T^H - I|`
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        max_abs(&(&self.entries * self.entries.adjoint() - identity(n)))
    }
}

/// Cyclic forward shift: `Pi[i][j] = 1` iff `i = (j + 1) mod MN`.
pub fn build_permutation(grid: &DdGrid) -> DdOperator {
    let mn = grid.mn();
    let mut p = CMat::zeros(mn, mn);
    for j in 0..mn {
        p[((j + 1) % mn, j)] = C64::new(1.0, 0.0);
    }
    DdOperator { entries: p }
}

/// `Delta^exponent = diag(z^(exponent n))`, `z = e^{j 2 pi / MN}`.
pub fn build_delta(grid: &DdGrid, exponent: f64) -> DdOperator {
    let mn = grid.mn();
    let mut d = CMat::zeros(mn, mn);
    for i in 0..mn {
        d[(i, i)] = cis(2.0 * PI * exponent * i as f64 / mn as f64);
    }
    DdOperator { entries: d }
}

fn permutation_power(grid: &DdGrid, shift: usize) -> CMat {
    let mn = grid.mn();
    let mut p = CMat::zeros(mn, mn);
    for j in 0..mn {
        p[((j + shift) % mn, j)] = C64::new(1.0, 0.0);
    }
    p
}

/// Dense effective operator of one path.
pub fn build_t(grid: &DdGrid, path: &PathDd) -> Result<DdOperator> {
    grid.validate()?;
    path.check(grid)?;
    let u = kron(&dft(grid.n), &identity(grid.m));
    let inner = permutation_power(grid, path.ell) * build_delta(grid, path.nu()).entries;
    Ok(DdOperator { entries: &u * inner * u.adjoint() })
}

/// OFDM per-symbol operator `Q` and its frequency-domain form `Qbar = F_M Q F_M^H`.
#[derive(Debug, Clone)]
pub struct OfdmOperator {
    pub q: DdOperator,
    pub q_bar: DdOperator,
}

/// `[Q]_{m,n} = delta((m - n - tau M / T) mod M) e^{j 2 pi n nu T / M}` with
/// zero-based `m, n`. At `nu = 0` this is the pure cyclic shift by the
/// delay in samples.
pub fn build_q_ofdm(m: usize, tau: f64, nu: f64, t_sym: f64) -> Result<OfdmOperator> {
    if m == 0 {
        return Err(Error::Config("OFDM operator needs M >= 1".into()));
    }
    let shift = tau * m as f64 / t_sym;
    let rounded = shift.round();
    if (shift - rounded).abs() > 1e-9 || rounded < 0.0 {
        return Err(Error::OffGridDelay(shift));
    }
    let shift = rounded as usize % m;
    let mut q = CMat::zeros(m, m);
    for n in 0..m {
        let row = (n + shift) % m;
        q[(row, n)] = cis(2.0 * PI * n as f64 * nu * t_sym / m as f64);
    }
    let f = dft(m);
    let q_bar = &f * &q * f.adjoint();
    Ok(OfdmOperator { q: DdOperator { entries: q }, q_bar: DdOperator { entries: q_bar } })
}

/// `(chi, kappa)` at row `v` of `P = T_i T_j^H`, from the dense product:
/// `chi = |P_vv|^2`, `kappa = |sum_{v' != v} P_vv'|^2`.
pub fn chi_kappa(ti: &DdOperator, tj: &DdOperator, v: usize) -> Result<(f64, f64)> {
    if ti.entries.shape() != tj.entries.shape() || ti.entries.nrows() != ti.entries.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            ti.entries.shape(),
            tj.entries.shape()
        )));
    }
    if v >= ti.dim() {
        return Err(Error::IndexOutOfBounds(format!("row {v} of {}", ti.dim())));
    }
    let ti_row = ti.entries.row(v);
    let p_row = ti_row * tj.entries.adjoint();
    let diag = p_row[v];
    let off: C64 = p_row.iter().enumerate().filter(|(c, _)| *c != v).map(|(_, z)| *z).sum();
    Ok((diag.norm_sqr(), off.norm_sqr()))
}

/// Factored view of `T_i T_j^H = U Pi^(ell_i) Delta^(nu_i - nu_j) Pi^(-ell_j) U^H`
/// with `U = F_N (x) I_M`. The inner matrix has exactly one nonzero per row.
#[derive(Debug, Clone, Copy)]
pub struct PathPair {
    grid: DdGrid,
    ell_i: usize,
    ell_j: usize,
    dnu: f64,
}

impl PathPair {
    pub fn new(grid: &DdGrid, pi: &PathDd, pj: &PathDd) -> Self {
        PathPair { grid: *grid, ell_i: pi.ell, ell_j: pj.ell, dnu: pi.nu() - pj.nu() }
    }

    /// Sensing-stream pair: user path `pi` against the identity operator.
    pub fn against_identity(grid: &DdGrid, pi: &PathDd) -> Self {
        PathPair::new(grid, pi, &PathDd::new(0, 0, 0.0))
    }

    pub fn same_delay(&self) -> bool {
        self.ell_i % self.grid.m == self.ell_j % self.grid.m
    }

    /// Row `a` of the inner matrix: `(column, value)`.
    #[inline]
    pub fn inner_entry(&self, a: usize) -> (usize, C64) {
        let mn = self.grid.mn();
        let n = (a + mn - self.ell_i % mn) % mn;
        let b = (n + self.ell_j) % mn;
        (b, cis(2.0 * PI * self.dnu * n as f64 / mn as f64))
    }

    #[inline]
    fn f(&self, k: usize, n: usize) -> C64 {
        let nn = self.grid.n;
        cis(-2.0 * PI * ((k * n) % nn) as f64 / nn as f64) / (nn as f64).sqrt()
    }

    /// Diagonal entry and full row sum of row `v`.
    pub fn diag_and_rowsum(&self, v: usize) -> (C64, C64) {
        let (kv, lv) = self.grid.split(v);
        let m = self.grid.m;
        let mut diag = C64::new(0.0, 0.0);
        let mut rowsum = C64::new(0.0, 0.0);
        for ka in 0..self.grid.n {
            let a = ka * m + lv;
            let (b, x) = self.inner_entry(a);
            let (kb, lb) = self.grid.split(b);
            let c = self.f(kv, ka) * x;
            if lb == lv {
                diag += c * self.f(kv, kb).conj();
            }
            if kb == 0 {
                rowsum += c * (self.grid.n as f64).sqrt();
            }
        }
        (diag, rowsum)
    }

    pub fn chi_kappa(&self, v: usize) -> (f64, f64) {
        let (d, s) = self.diag_and_rowsum(v);
        (d.norm_sqr(), (s - d).norm_sqr())
    }

    /// Full row `v` of the product as a dense vector (test and debug use).
    pub fn row(&self, v: usize) -> Vec<C64> {
        let (kv, lv) = self.grid.split(v);
        let m = self.grid.m;
        let mut out = vec![C64::new(0.0, 0.0); self.grid.mn()];
        for ka in 0..self.grid.n {
            let a = ka * m + lv;
            let (b, x) = self.inner_entry(a);
            let (kb, lb) = self.grid.split(b);
            let c = self.f(kv, ka) * x;
            for kp in 0..self.grid.n {
                out[kp * m + lb] += c * self.f(kp, kb).conj();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, n: usize) -> DdGrid {
        DdGrid::new(m, n, 15e3, 0).unwrap()
    }

    fn random_path<R: Rng>(rng: &mut R, g: &DdGrid) -> PathDd {
        let kmax = (g.n as i64 - 1) / 2;
        PathDd::new(
            rng.random_range(0..g.m),
            rng.random_range(-kmax..=kmax),
            rng.random_range(-0.499..0.499),
        )
    }

    /// Oracle: `Pi[i][j] = 1` iff `i = (j+1) mod n`, built entry by entry.
    fn circulant_oracle(n: usize) -> CMat {
        CMat::from_fn(n, n, |i, j| if i == (j + 1) % n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(build_permutation(&grid(1, 1)).entries, identity(1));
        let p = build_permutation(&grid(2, 1)).entries;
        assert_eq!(p, CMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(|x| C64::new(x, 0.0))));
        assert_eq!(build_permutation(&grid(2, 2)).entries, circulant_oracle(4));
    }

    #[test]
    fn delta_examples() {
        let g = grid(2, 2);
        assert!(max_abs(&(build_delta(&g, 0.0).entries - identity(4))) < 1e-15);
        let d = build_delta(&g, 1.0).entries;
        let expect = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        for (i, e) in expect.iter().enumerate() {
            assert!((d[(i, i)] - e).norm() < 1e-15);
        }
        let d = build_delta(&g, 0.5).entries;
        for i in 0..4 {
            let z = C64::new(0.0, 2.0 * PI / 4.0).exp();
            assert!((d[(i, i)] - z.powf(0.5 * i as f64)).norm() < 1e-14);
        }
    }

    #[test]
    fn t_identity_for_trivial_path() {
        let g = grid(3, 4);
        let t = build_t(&g, &PathDd::new(0, 0, 0.0)).unwrap();
        assert!(max_abs(&(t.entries - identity(12))) < 1e-12);
    }

    #[test]
    fn t_matches_dense_product_oracle() {
        let g = grid(2, 2);
        let f2 = CMat::from_fn(2, 2, |k, n| {
            C64::new(0.0, -2.0 * PI * (k * n) as f64 / 2.0).exp() / 2f64.sqrt()
        });
        let u = f2.kronecker(&CMat::identity(2, 2));
        let expect = &u * circulant_oracle(4) * u.adjoint();
        let t = build_t(&g, &PathDd::new(1, 0, 0.0)).unwrap();
        assert!(max_abs(&(t.entries - expect)) < 1e-12);
    }

    #[test]
    fn t_rejects_out_of_range_indices() {
        let g = grid(4, 4);
        assert!(matches!(build_t(&g, &PathDd::new(4, 0, 0.0)), Err(Error::IndexOutOfBounds(_))));
        assert!(matches!(build_t(&g, &PathDd::new(0, 0, 0.5)), Err(Error::IndexOutOfBounds(_))));
    }

    #[test]
    fn t_unitary_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(m, n) in &[(2, 2), (4, 4), (8, 4), (4, 8)] {
            let g = grid(m, n);
            for _ in 0..5 {
                let t = build_t(&g, &random_path(&mut rng, &g)).unwrap();
                assert!(t.unitarity_residual() <= 1e-10);
            }
        }
    }

    #[test]
    fn q_ofdm_examples() {
        let q = build_q_ofdm(4, 0.0, 0.0, 1.0).unwrap();
        assert!(max_abs(&(q.q.entries.clone() - identity(4))) < 1e-15);
        // One-sample delay: index-arithmetic oracle.
        let q = build_q_ofdm(4, 0.25, 0.0, 1.0).unwrap();
        let oracle = CMat::from_fn(4, 4, |i, j| if i == (j + 1) % 4 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        assert!(max_abs(&(q.q.entries.clone() - oracle)) < 1e-15);
        let q = build_q_ofdm(4, 0.5, 123.4, 1e-3).unwrap();
        assert!(q.q_bar.unitarity_residual() <= 1e-10);
        assert!(matches!(build_q_ofdm(4, 0.3, 0.0, 1.0), Err(Error::OffGridDelay(_))));
    }

    #[test]
    fn q_bar_zero_diagonal_for_integer_doppler_separation() {
        let t = 1.0 / 15e3;
        let a = build_q_ofdm(8, t / 8.0, 2.0 / t, t).unwrap();
        let b = build_q_ofdm(8, t / 8.0, -1.0 / t, t).unwrap();
        let p = &a.q_bar.entries * b.q_bar.entries.adjoint();
        for v in 0..8 {
            assert!(p[(v, v)].norm() <= 1e-10);
        }
    }

    #[test]
    fn q_bar_diagonal_has_unit_modulus_for_distinct_delays_without_doppler() {
        let t = 1.0 / 15e3;
        let a = build_q_ofdm(8, t / 8.0, 0.0, t).unwrap();
        let b = build_q_ofdm(8, 3.0 * t / 8.0, 0.0, t).unwrap();
        let p = &a.q_bar.entries * b.q_bar.entries.adjoint();
        for v in 0..8 {
            assert!((p[(v, v)].norm() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn chi_kappa_identical_operators() {
        let g = grid(4, 4);
        let t = build_t(&g, &PathDd::new(2, 1, 0.2)).unwrap();
        for v in 0..16 {
            let (c, k) = chi_kappa(&t, &t, v).unwrap();
            assert!((c - 1.0).abs() < 1e-10 && k < 1e-10);
        }
    }

    #[test]
    fn chi_kappa_distinct_delays() {
        let g = grid(4, 4);
        let ti = build_t(&g, &PathDd::new(0, 1, 0.3)).unwrap();
        let tj = build_t(&g, &PathDd::new(2, -1, -0.1)).unwrap();
        for v in 0..16 {
            let (c, k) = chi_kappa(&ti, &tj, v).unwrap();
            assert!(c < 1e-10);
            assert!((k - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chi_kappa_dimension_mismatch() {
        let a = build_t(&grid(2, 2), &PathDd::new(0, 0, 0.0)).unwrap();
        let b = build_t(&grid(2, 4), &PathDd::new(0, 0, 0.0)).unwrap();
        assert!(matches!(chi_kappa(&a, &b, 0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn same_delay_integer_doppler_offset_matches_brute_force() {
        let g = grid(4, 4);
        let pi = PathDd::new(1, 0, 0.0);
        let pj = PathDd::new(1, 1, 0.0);
        let ti = build_t(&g, &pi).unwrap();
        let tj = build_t(&g, &pj).unwrap();
        let p = &ti.entries * tj.entries.adjoint();
        let diag = p[(0, 0)];
        let off: C64 = (1..16).map(|c| p[(0, c)]).sum();
        let (c, k) = chi_kappa(&ti, &tj, 0).unwrap();
        assert!((c - diag.norm_sqr()).abs() < 1e-12);
        assert!((k - off.norm_sqr()).abs() < 1e-12);
        assert!((c + k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn factored_rows_match_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, n) in &[(2, 2), (4, 4), (8, 2), (2, 8), (4, 8)] {
            let g = grid(m, n);
            for _ in 0..4 {
                let pi = random_path(&mut rng, &g);
                let pj = random_path(&mut rng, &g);
                let ti = build_t(&g, &pi).unwrap();
                let tj = build_t(&g, &pj).unwrap();
                let p = &ti.entries * tj.entries.adjoint();
                let pair = PathPair::new(&g, &pi, &pj);
                for v in 0..g.mn() {
                    let row = pair.row(v);
                    for c in 0..g.mn() {
                        assert!((row[c] - p[(v, c)]).norm() < 1e-10);
                    }
                    let (cd, kd) = chi_kappa(&ti, &tj, v).unwrap();
                    let (cf, kf) = pair.chi_kappa(v);
                    assert!((cd - cf).abs() < 1e-9 && (kd - kf).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn same_delay_fractional_offset_exceeds_unit_sum() {
        // chi + kappa is not bounded by one when the fractional Dopplers differ.
        let g = grid(4, 8);
        let pair = PathPair::new(&g, &PathDd::new(1, 0, 0.25), &PathDd::new(1, 0, -0.25));
        let (c, k) = pair.chi_kappa(5);
        assert!(c + k > 1.2);
    }

    #[test]
    fn cp_samples_exact_products() {
        assert_eq!(cp_samples(2.5e-6, 512, 15e3), 20);
        assert_eq!(cp_samples(10e-6, 512, 15e3), 77);
        assert_eq!(cp_samples(5e-6, 16, 15e3), 2);
        assert_eq!(cp_samples(2.5e-6, 512, 135e3), 173);
    }
}
