//! Max-min fair power allocation with a sensing SINR constraint.
//!
//! The outer loop alternates the quadratic-transform auxiliaries `y` with a
//! convex subproblem in the power coefficients. The subproblem is solved by
//! a log-barrier interior-point method in the normalized variables
//! `u_ps = eta_ps b_ps`, which turn the per-AP power constraints into
//! simplices `sum_s u_ps <= 1`.

use crate::error::{Error, Result};
use crate::estimation::EstimatorStats;
use crate::model::SystemModel;
use crate::performance::{FirstSlot, PowerAlloc, TraceTables};
use crate::config::SignalKind;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients {
    pub n_tx: usize,
    pub users: usize,
    /// Interference coefficients per `(p, q, stream)`.
    pub a: Vec<f64>,
    /// Signal coefficients per `(p, stream)`; stream 0 is the sensing beam.
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub rho_d: f64,
    pub gamma_s: f64,
    pub noise_const: f64,
    pub sensing_beam: bool,
}

impl SinrCoefficients {
    pub fn from_tables(tables: &TraceTables, rho_d: f64, gamma_s: f64, sensing_beam: bool) -> Self {
        SinrCoefficients {
            n_tx: tables.n_tx,
            users: tables.users,
            a: tables.cross.clone(),
            b: tables.signal.clone(),
            c: tables.sense_num.clone(),
            d: tables.sense_clutter.clone(),
            rho_d,
            gamma_s,
            noise_const: (tables.n_rx * tables.antennas) as f64,
            sensing_beam,
        }
    }

    #[inline]
    fn s(&self) -> usize {
        self.users + 1
    }

    #[inline]
    pub fn a(&self, p: usize, q: usize, stream: usize) -> f64 {
        self.a[(p * self.users + q) * self.s() + stream]
    }

    #[inline]
    pub fn b(&self, p: usize, stream: usize) -> f64 {
        self.b[p * self.s() + stream]
    }

    pub fn sinr(&self, q: usize, eta: &PowerAlloc) -> f64 {
        let mut amp = 0.0;
        let mut interference = 0.0;
        for p in 0..self.n_tx {
            amp += eta.get(p, q + 1).sqrt() * self.b(p, q + 1);
            for st in 0..self.s() {
                interference += eta.get(p, st) * self.a(p, q, st);
            }
        }
        self.rho_d * amp * amp / (self.rho_d * interference + 1.0)
    }

    pub fn min_sinr(&self, eta: &PowerAlloc) -> f64 {
        (0..self.users).map(|q| self.sinr(q, eta)).fold(f64::INFINITY, f64::min)
    }

    pub fn sensing_sinr(&self, eta: &PowerAlloc) -> f64 {
        let (num, den) = self.sensing_terms(eta);
        num / den
    }

    fn sensing_terms(&self, eta: &PowerAlloc) -> (f64, f64) {
        let mut num = 0.0;
        let mut clutter = 0.0;
        for (i, e) in eta.eta.iter().enumerate() {
            num += e * self.c[i];
            clutter += e * self.d[i];
        }
        (self.rho_d * num, self.rho_d * clutter + self.noise_const)
    }

    /// Sensing slack `NUM - gamma_s DEN`; nonnegative when the constraint holds.
    pub fn sensing_slack(&self, eta: &PowerAlloc) -> f64 {
        let (num, den) = self.sensing_terms(eta);
        num - self.gamma_s * den
    }

    pub fn ap_power(&self, eta: &PowerAlloc, p: usize) -> f64 {
        (0..self.s()).map(|st| eta.get(p, st) * self.b(p, st)).sum()
    }

    pub fn max_ap_power(&self, eta: &PowerAlloc) -> f64 {
        (0..self.n_tx).map(|p| self.ap_power(eta, p)).fold(0.0, f64::max)
    }

    fn active(&self, stream: usize) -> bool {
        stream > 0 || self.sensing_beam
    }

    /// Largest sensing SINR reachable under the per-AP constraints.
    pub fn max_sensing_sinr(&self) -> f64 {
        let achievable = |gamma: f64| -> f64 {
            let mut best = 0.0;
            for p in 0..self.n_tx {
                let mut top = 0.0f64;
                for st in (0..self.s()).filter(|&st| self.active(st)) {
                    let b = self.b(p, st);
                    if b > 0.0 {
                        let i = p * self.s() + st;
                        top = top.max(self.rho_d * (self.c[i] - gamma * self.d[i]) / b);
                    }
                }
                best += top;
            }
            best - gamma * self.noise_const
        };
        let mut hi = achievable(0.0) / self.noise_const;
        if !(hi > 0.0) {
            return 0.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if achievable(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub fn extract_coefficients(
    model: &SystemModel,
    stats: &EstimatorStats,
    gamma_s: f64,
    sensing_beam: bool,
) -> Result<SinrCoefficients> {
    let tables = TraceTables::new(model, stats, FirstSlot::Estimate, SignalKind::Otfs)?;
    Ok(SinrCoefficients::from_tables(&tables, model.rho_d, gamma_s, sensing_beam))
}

/// Equal power: every user stream of an AP gets the same `eta`, together
/// filling `1 - sensing_fraction` of the budget; the sensing beam takes the rest.
pub fn equal_power(coeffs: &SinrCoefficients, sensing_fraction: f64) -> Result<PowerAlloc> {
    let mut eta = PowerAlloc::zeros(coeffs.n_tx, coeffs.users);
    let f = if coeffs.sensing_beam { sensing_fraction } else { 0.0 };
    for p in 0..coeffs.n_tx {
        let total: f64 = (1..=coeffs.users).map(|st| coeffs.b(p, st)).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateScenario(format!("AP {p} has no usable channel estimate")));
        }
        for st in 1..=coeffs.users {
            eta.set(p, st, (1.0 - f) / total);
        }
        if f > 0.0 {
            eta.set(p, 0, f / coeffs.b(p, 0));
        }
    }
    Ok(eta)
}

/// Quadratic-transform auxiliaries for fixed `eta`.
pub fn update_y(eta: &PowerAlloc, coeffs: &SinrCoefficients) -> Vec<f64> {
    (0..coeffs.users)
        .map(|q| {
            let mut amp = 0.0;
            let mut interference = 0.0;
            for p in 0..coeffs.n_tx {
                amp += eta.get(p, q + 1).sqrt() * coeffs.b(p, q + 1);
                for st in 0..=coeffs.users {
                    interference += eta.get(p, st) * coeffs.a(p, q, st);
                }
            }
            coeffs.rho_d.sqrt() * amp / (coeffs.rho_d * interference + 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub epsilon: f64,
    pub max_outer: usize,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub eta_floor: f64,
    pub initial_sensing_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1e-4,
            max_outer: 100,
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            eta_floor: 1e-12,
            initial_sensing_fraction: 0.1,
        }
    }
}

impl SolverOptions {
    pub fn from_config(cfg: &crate::config::ExperimentConfig) -> Self {
        SolverOptions {
            epsilon: cfg.solver_epsilon,
            max_outer: cfg.solver_max_outer,
            feasibility_tol: cfg.solver_feasibility_tol,
            optimality_tol: cfg.solver_optimality_tol,
            eta_floor: cfg.solver_eta_floor,
            initial_sensing_fraction: cfg.initial_sensing_fraction,
        }
    }
}

/// Fixed-`y` subproblem in normalized variables.
struct Subproblem<'a> {
    coeffs: &'a SinrCoefficients,
    /// `(p, stream)` of every variable.
    vars: Vec<(usize, usize)>,
    /// Variable ranges of each AP.
    blocks: Vec<std::ops::Range<usize>>,
    /// `2 y_q sqrt(rho b)` for the signal variable of user `q`, else 0.
    gain: Vec<f64>,
    /// Owner user of the signal variable.
    owner: Vec<Option<usize>>,
    /// `y_q^2 rho a / b` per user and variable.
    penalty: DMatrix<f64>,
    y2: Vec<f64>,
    /// Normalized sensing weights; the constraint reads `w.u - 1 >= 0`.
    sensing: Option<DVector<f64>>,
}

impl<'a> Subproblem<'a> {
    fn new(y: &[f64], coeffs: &'a SinrCoefficients) -> Self {
        let mut vars = Vec::new();
        let mut blocks = Vec::new();
        for p in 0..coeffs.n_tx {
            let start = vars.len();
            for st in 0..=coeffs.users {
                if coeffs.active(st) && coeffs.b(p, st) > 0.0 {
                    vars.push((p, st));
                }
            }
            blocks.push(start..vars.len());
        }
        let n = vars.len();
        let k = coeffs.users;
        let rho = coeffs.rho_d;
        let mut gain = vec![0.0; n];
        let mut owner = vec![None; n];
        let mut penalty = DMatrix::zeros(k, n);
        for (i, &(p, st)) in vars.iter().enumerate() {
            let b = coeffs.b(p, st);
            if st > 0 {
                gain[i] = 2.0 * y[st - 1] * (rho * b).sqrt();
                owner[i] = Some(st - 1);
            }
            for q in 0..k {
                penalty[(q, i)] = y[q] * y[q] * rho * coeffs.a(p, q, st) / b;
            }
        }
        let sensing = (coeffs.gamma_s > 0.0).then(|| {
            let scale = coeffs.gamma_s * coeffs.noise_const;
            DVector::from_iterator(
                n,
                vars.iter().map(|&(p, st)| {
                    let i = p * (coeffs.users + 1) + st;
                    rho * (coeffs.c[i] - coeffs.gamma_s * coeffs.d[i]) / (coeffs.b(p, st) * scale)
                }),
            )
        });
        Subproblem { coeffs, vars, blocks, gain, owner, penalty, y2: y.iter().map(|v| v * v).collect(), sensing }
    }

    fn n(&self) -> usize {
        self.vars.len()
    }

    fn users(&self) -> usize {
        self.coeffs.users
    }

    /// `f_q(u)` for every user.
    fn values(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut f: Vec<f64> = self.y2.iter().map(|y2| -y2).collect();
        let pen = &self.penalty * u;
        for q in 0..self.users() {
            f[q] -= pen[q];
        }
        for i in 0..self.n() {
            if let Some(q) = self.owner[i] {
                f[q] += self.gain[i] * u[i].max(0.0).sqrt();
            }
        }
        f
    }

    fn min_value(&self, u: &DVector<f64>) -> f64 {
        self.values(u).into_iter().fold(f64::INFINITY, f64::min)
    }

    fn ap_slack(&self, u: &DVector<f64>) -> Vec<f64> {
        self.blocks.iter().map(|r| 1.0 - r.clone().map(|i| u[i]).sum::<f64>()).collect()
    }

    fn sensing_slack(&self, u: &DVector<f64>) -> Option<f64> {
        self.sensing.as_ref().map(|w| w.dot(u) - 1.0)
    }

    fn strictly_feasible(&self, u: &DVector<f64>) -> bool {
        u.iter().all(|x| *x > 0.0)
            && self.ap_slack(u).iter().all(|s| *s > 0.0)
            && self.sensing_slack(u).is_none_or(|g| g > 0.0)
    }

    /// Feasible up to rounding; used only to keep a warm start as a candidate.
    fn feasible(&self, u: &DVector<f64>) -> bool {
        u.iter().all(|x| *x >= 0.0)
            && self.ap_slack(u).iter().all(|s| *s >= -1e-12)
            && self.sensing_slack(u).is_none_or(|g| g >= -1e-9)
    }

    fn to_eta(&self, u: &DVector<f64>, floor: f64) -> PowerAlloc {
        let mut eta = PowerAlloc::zeros(self.coeffs.n_tx, self.coeffs.users);
        for (i, &(p, st)) in self.vars.iter().enumerate() {
            eta.set(p, st, (u[i] / self.coeffs.b(p, st)).max(floor));
        }
        eta
    }

    fn from_eta(&self, eta: &PowerAlloc) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.vars.iter().map(|&(p, st)| eta.get(p, st) * self.coeffs.b(p, st)))
    }

    /// A strictly feasible point, or `None` when the sensing constraint has
    /// no interior.
    fn interior_start(&self) -> Option<DVector<f64>> {
        let n = self.n();
        let mut uniform = DVector::zeros(n);
        for r in &self.blocks {
            let len = r.len() as f64;
            for i in r.clone() {
                uniform[i] = 0.5 / len;
            }
        }
        let Some(w) = &self.sensing else {
            return Some(uniform);
        };
        let g_uniform = w.dot(&uniform) - 1.0;
        if g_uniform > 0.0 {
            return Some(uniform);
        }
        let mut vertex = DVector::zeros(n);
        for r in &self.blocks {
            let len = r.len() as f64;
            let best = r.clone().max_by(|&a, &b| w[a].total_cmp(&w[b]));
            let eps = 1e-6 / len;
            for i in r.clone() {
                vertex[i] = eps;
            }
            if let Some(b) = best {
                if w[b] > 0.0 {
                    vertex[b] = 1.0 - 1e-6 - eps * (len - 1.0);
                }
            }
        }
        let g_vertex = w.dot(&vertex) - 1.0;
        if !(g_vertex > 0.0) {
            return None;
        }
        let theta = (0.5 * g_vertex - g_uniform) / (g_vertex - g_uniform);
        let u = vertex * theta + uniform * (1.0 - theta);
        self.strictly_feasible(&u).then_some(u)
    }

    /// Barrier objective at `(u, z)`; `+inf` outside the strict interior.
    fn barrier(&self, u: &DVector<f64>, z: f64, t: f64) -> f64 {
        if u.iter().any(|x| *x <= 0.0) {
            return f64::INFINITY;
        }
        let mut phi = -t * z;
        for f in self.values(u) {
            let h = f - z;
            if h <= 0.0 {
                return f64::INFINITY;
            }
            phi -= h.ln();
        }
        for s in self.ap_slack(u) {
            if s <= 0.0 {
                return f64::INFINITY;
            }
            phi -= s.ln();
        }
        if let Some(g) = self.sensing_slack(u) {
            if g <= 0.0 {
                return f64::INFINITY;
            }
            phi -= g.ln();
        }
        phi - u.iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Newton direction for the barrier at `(u, z)`.
    fn newton_step(&self, u: &DVector<f64>, z: f64, t: f64) -> Option<(DVector<f64>, f64, f64)> {
        let n = self.n();
        let k = self.users();
        let f = self.values(u);
        let h: Vec<f64> = f.iter().map(|fq| fq - z).collect();
        let slack = self.ap_slack(u);

        // Gradient of each user's constraint scaled by 1/h_q (u-part).
        let mut v = DMatrix::<f64>::zeros(n, k);
        for q in 0..k {
            for i in 0..n {
                v[(i, q)] = -self.penalty[(q, i)] / h[q];
            }
        }
        let mut diag = DVector::<f64>::zeros(n);
        for i in 0..n {
            diag[i] = 1.0 / (u[i] * u[i]);
            if let Some(q) = self.owner[i] {
                let s = u[i].sqrt();
                v[(i, q)] += 0.5 * self.gain[i] / s / h[q];
                diag[i] += 0.25 * self.gain[i] / (u[i] * s) / h[q];
            }
        }
        let zc: Vec<f64> = h.iter().map(|hq| -1.0 / hq).collect();

        let mut grad_u = DVector::<f64>::zeros(n);
        for q in 0..k {
            grad_u -= v.column(q);
        }
        for (p, r) in self.blocks.iter().enumerate() {
            for i in r.clone() {
                grad_u[i] += 1.0 / slack[p];
            }
        }
        for i in 0..n {
            grad_u[i] -= 1.0 / u[i];
        }
        let mut low_rank = v.clone();
        if let Some(w) = &self.sensing {
            let g = w.dot(u) - 1.0;
            grad_u -= w / g;
            low_rank = low_rank.insert_column(k, 0.0);
            low_rank.set_column(k, &(w / g));
        }
        let grad_z = -t + h.iter().map(|hq| 1.0 / hq).sum::<f64>();
        let hzz: f64 = zc.iter().map(|c| c * c).sum();
        let hzu = &v * DVector::from_vec(zc.clone());
        let block_weight: Vec<f64> = slack.iter().map(|s| 1.0 / (s * s)).collect();

        let solve = |rhs: &DMatrix<f64>| -> Option<DMatrix<f64>> {
            if n <= 32 {
                let mut hess = DMatrix::<f64>::from_diagonal(&diag);
                for (p, r) in self.blocks.iter().enumerate() {
                    for i in r.clone() {
                        for j in r.clone() {
                            hess[(i, j)] += block_weight[p];
                        }
                    }
                }
                hess += &low_rank * low_rank.transpose();
                hess.cholesky().map(|c| c.solve(rhs))
            } else {
                let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
                    let mut y = DMatrix::<f64>::zeros(n, x.ncols());
                    for c in 0..x.ncols() {
                        for (p, r) in self.blocks.iter().enumerate() {
                            let sum: f64 = r.clone().map(|i| x[(i, c)]).sum::<f64>() * block_weight[p];
                            for i in r.clone() {
                                y[(i, c)] = diag[i] * x[(i, c)] + sum;
                            }
                        }
                    }
                    y + &low_rank * (low_rank.transpose() * x)
                };
                let mut x = structured_solve(&diag, &self.blocks, &block_weight, &low_rank, rhs)?;
                // Iterative refinement against the structured product.
                for _ in 0..3 {
                    let resid = rhs - apply(&x);
                    if resid.norm() <= 1e-14 * rhs.norm() {
                        break;
                    }
                    x += structured_solve(&diag, &self.blocks, &block_weight, &low_rank, &resid)?;
                }
                Some(x)
            }
        };
        let mut rhs = DMatrix::<f64>::zeros(n, 2);
        rhs.set_column(0, &(-&grad_u));
        rhs.set_column(1, &hzu);
        let sol = solve(&rhs)?;
        let a_g = sol.column(0).into_owned();
        let a_h = sol.column(1).into_owned();
        let schur = hzz - hzu.dot(&a_h);
        if !(schur > 0.0) {
            return None;
        }
        let dz = (-grad_z - hzu.dot(&a_g)) / schur;
        let du = a_g - a_h * dz;
        let decrement = -(grad_u.dot(&du) + grad_z * dz);
        Some((du, dz, decrement))
    }

    /// Maximizes `min_q f_q` over the feasible set starting from `u0`.
    fn solve(&self, u0: DVector<f64>, tol: f64) -> (DVector<f64>, f64) {
        let n = self.n();
        let m = (self.users() + self.blocks.len() + n + usize::from(self.sensing.is_some())) as f64;
        let mut u = u0;
        let f0 = self.min_value(&u);
        let scale = f0.abs().max(1e-6);
        let mut z = f0 - 0.1 * scale;
        let mut t = m / scale;
        let target = tol * scale.max(1.0).min(f0.abs().max(tol));
        for _stage in 0..60 {
            for _ in 0..200 {
                let Some((du, dz, decrement)) = self.newton_step(&u, z, t) else { break };
                if !(decrement > 0.0) || decrement / 2.0 <= 1e-11 {
                    break;
                }
                let phi = self.barrier(&u, z, t);
                let mut step = 1.0;
                let mut moved = false;
                for _ in 0..80 {
                    let un = &u + &du * step;
                    let zn = z + dz * step;
                    let phin = self.barrier(&un, zn, t);
                    if phin.is_finite() && phin <= phi - 0.01 * step * decrement {
                        u = un;
                        z = zn;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if m / t <= target.max(1e-14) {
                break;
            }
            t *= 20.0;
        }
        let value = self.min_value(&u);
        (u, value)
    }
}

/// Solves `(A + V V^T) X = R` with `A` block-diagonal, each block a
/// diagonal plus a constant rank-one term.
fn structured_solve(
    diag: &DVector<f64>,
    blocks: &[std::ops::Range<usize>],
    block_weight: &[f64],
    v: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let a_inv = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = x.clone();
        for (p, r) in blocks.iter().enumerate() {
            let inv_d: Vec<f64> = r.clone().map(|i| 1.0 / diag[i]).collect();
            let denom = 1.0 + block_weight[p] * inv_d.iter().sum::<f64>();
            for c in 0..x.ncols() {
                let mut dot = 0.0;
                for (o, i) in r.clone().enumerate() {
                    out[(i, c)] = x[(i, c)] * inv_d[o];
                    dot += out[(i, c)];
                }
                let corr = block_weight[p] * dot / denom;
                for (o, i) in r.clone().enumerate() {
                    out[(i, c)] -= inv_d[o] * corr;
                }
            }
        }
        out
    };
    let ainv_r = a_inv(rhs);
    let ainv_v = a_inv(v);
    let cap = DMatrix::<f64>::identity(v.ncols(), v.ncols()) + v.transpose() * &ainv_v;
    let small = cap.lu().solve(&(v.transpose() * &ainv_r))?;
    Some(ainv_r - ainv_v * small)
}

/// One subproblem solve at fixed `y`. A warm start that is strictly
/// feasible is kept when the barrier result is not better.
pub fn inner_solve(
    y: &[f64],
    coeffs: &SinrCoefficients,
    options: &SolverOptions,
    warm: Option<&PowerAlloc>,
) -> Result<(PowerAlloc, f64)> {
    let sub = Subproblem::new(y, coeffs);
    if coeffs.gamma_s > 0.0 {
        let best = coeffs.max_sensing_sinr();
        if !(best > coeffs.gamma_s) {
            return Err(Error::Infeasible { required: coeffs.gamma_s, achievable: best });
        }
    }
    let fresh = sub.interior_start().ok_or(Error::Infeasible {
        required: coeffs.gamma_s,
        achievable: coeffs.max_sensing_sinr(),
    })?;
    let warm_raw = warm.map(|e| sub.from_eta(e)).filter(|w| sub.feasible(w));
    let warm_u = warm.and_then(|e| {
        let w = sub.from_eta(e);
        if sub.strictly_feasible(&w) {
            return Some(w);
        }
        // Pull a boundary point slightly toward the interior.
        [1e-9, 1e-6, 1e-3].iter().map(|&th| &w * (1.0 - th) + &fresh * th).find(|u| sub.strictly_feasible(u))
    });
    let start = match &warm_u {
        Some(w) => {
            let blended = w * 0.9 + &fresh * 0.1;
            if sub.strictly_feasible(&blended) {
                blended
            } else {
                fresh
            }
        }
        None => fresh,
    };
    let (mut u, mut z) = sub.solve(start, options.optimality_tol);
    for w in warm_u.into_iter().chain(warm_raw) {
        let zw = sub.min_value(&w);
        if zw > z {
            u = w;
            z = zw;
        }
    }
    let floored = sub.to_eta(&u, options.eta_floor);
    if sub.feasible(&sub.from_eta(&floored)) {
        Ok((floored, z))
    } else {
        Ok((sub.to_eta(&u, 0.0), z))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub z: f64,
    pub min_sinr: f64,
    pub sensing_sinr: f64,
    pub max_ap_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterState {
    pub eta: PowerAlloc,
    pub y: Vec<f64>,
    pub z: f64,
    pub t: usize,
    pub trace: Vec<TraceRecord>,
}

/// Alternates `y` and `eta` updates until the subproblem value settles.
pub fn maxmin_allocate(coeffs: &SinrCoefficients, options: &SolverOptions) -> Result<(PowerAlloc, IterState)> {
    maxmin_allocate_from(coeffs, options, None)
}

/// As [`maxmin_allocate`], starting from `initial` instead of equal power.
/// The result is never worse than a feasible `initial`.
pub fn maxmin_allocate_from(
    coeffs: &SinrCoefficients,
    options: &SolverOptions,
    initial: Option<&PowerAlloc>,
) -> Result<(PowerAlloc, IterState)> {
    if coeffs.gamma_s > 0.0 {
        let best = coeffs.max_sensing_sinr();
        if !(best > coeffs.gamma_s) {
            return Err(Error::Infeasible { required: coeffs.gamma_s, achievable: best });
        }
    }
    let fraction = if coeffs.gamma_s > 0.0 { options.initial_sensing_fraction } else { 0.0 };
    let mut eta = match initial {
        Some(e) => e.clone(),
        None => equal_power(coeffs, fraction)?,
    };
    let mut state = IterState { eta: eta.clone(), y: Vec::new(), z: f64::NEG_INFINITY, t: 0, trace: Vec::new() };
    let mut previous: Option<f64> = None;
    for t in 1..=options.max_outer {
        let y = update_y(&eta, coeffs);
        let (next, z) = inner_solve(&y, coeffs, options, Some(&eta))?;
        if let Some(prev) = previous {
            if z < prev - 1e-8 {
                return Err(Error::NonMonotone { previous: prev, current: z });
            }
        }
        eta = next;
        state.trace.push(TraceRecord {
            t,
            z,
            min_sinr: coeffs.min_sinr(&eta),
            sensing_sinr: coeffs.sensing_sinr(&eta),
            max_ap_power: coeffs.max_ap_power(&eta),
        });
        state.y = y;
        state.z = z;
        state.t = t;
        let done = previous.is_some_and(|prev| (z - prev).abs() <= options.epsilon);
        previous = Some(z);
        if done {
            break;
        }
    }
    state.eta = eta.clone();
    Ok((eta, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built coefficients: `b[p][s]`, `a[p][q][s]`, no sensing.
    pub(crate) fn manual(n_tx: usize, users: usize, b: &[f64], a: &[f64], rho: f64) -> SinrCoefficients {
        let s = users + 1;
        assert_eq!(b.len(), n_tx * s);
        assert_eq!(a.len(), n_tx * users * s);
        SinrCoefficients {
            n_tx,
            users,
            a: a.to_vec(),
            b: b.to_vec(),
            c: vec![0.0; n_tx * s],
            d: vec![0.0; n_tx * s],
            rho_d: rho,
            gamma_s: 0.0,
            noise_const: 1.0,
            sensing_beam: false,
        }
    }

    #[test]
    fn equal_power_examples() {
        let c = manual(1, 1, &[1.0, 4.0], &[0.0, 1.0], 1.0);
        let e = equal_power(&c, 0.0).unwrap();
        assert!((e.get(0, 1) - 0.25).abs() < 1e-15);
        assert!((c.ap_power(&e, 0) - 1.0).abs() < 1e-15);
        let c = manual(1, 2, &[1.0, 2.0, 3.0], &[0.0; 6], 1.0);
        let e = equal_power(&c, 0.0).unwrap();
        assert!((e.get(0, 1) - 0.2).abs() < 1e-15 && (e.get(0, 2) - 0.2).abs() < 1e-15);
        assert!((c.ap_power(&e, 0) - 1.0).abs() < 1e-15);
        let mut cb = c.clone();
        cb.sensing_beam = true;
        let e = equal_power(&cb, 0.1).unwrap();
        assert!((e.get(0, 1) - 0.18).abs() < 1e-15);
        assert!((cb.ap_power(&e, 0) - 1.0).abs() < 1e-15);
        let z = manual(1, 1, &[1.0, 0.0], &[0.0, 0.0], 1.0);
        assert!(matches!(equal_power(&z, 0.0), Err(Error::DegenerateScenario(_))));
    }

    #[test]
    fn update_y_examples() {
        let c = manual(1, 1, &[1.0, 1.0], &[0.0, 1.0], 1.0);
        assert_eq!(update_y(&PowerAlloc::zeros(1, 1), &c), vec![0.0]);
        let mut e = PowerAlloc::zeros(1, 1);
        e.set(0, 1, 1.0);
        assert!((update_y(&e, &c)[0] - 0.5).abs() < 1e-15);
        let c3 = manual(1, 1, &[1.0, 3.0], &[0.0, 1.0], 1.0);
        assert!((update_y(&e, &c3)[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn inner_single_user_full_power() {
        let c = manual(1, 1, &[1.0, 1.0], &[0.0, 1.0], 1.0);
        let (eta, z) = inner_solve(&[0.5], &c, &SolverOptions::default(), None).unwrap();
        assert!((eta.get(0, 1) - 1.0).abs() < 1e-6, "{}", eta.get(0, 1));
        assert!((z - 0.5).abs() < 1e-8);
        let grid_best = (0..=10_000)
            .map(|i| {
                let e = i as f64 / 1e4;
                2.0 * 0.5 * e.sqrt() - 0.25 * (e + 1.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((z - grid_best).abs() < 1e-4);
    }

    #[test]
    fn inner_symmetric_users_share_equally() {
        let c = manual(1, 2, &[1.0, 1.0, 1.0], &[0.0, 1.0, 0.2, 0.0, 0.2, 1.0], 5.0);
        let (eta, _) = inner_solve(&[0.3, 0.3], &c, &SolverOptions::default(), None).unwrap();
        assert!((eta.get(0, 1) - eta.get(0, 2)).abs() < 1e-6);
    }

    #[test]
    fn maxmin_single_user_reaches_full_power() {
        let c = manual(1, 1, &[1.0, 2.0], &[0.0, 0.5], 3.0);
        let (eta, state) = maxmin_allocate(&c, &SolverOptions::default()).unwrap();
        let mut full = PowerAlloc::zeros(1, 1);
        full.set(0, 1, 0.5);
        assert!((c.min_sinr(&eta) - c.min_sinr(&full)).abs() < 1e-4);
        assert!(state.trace.windows(2).all(|w| w[1].z >= w[0].z - 1e-8));
    }

    #[test]
    fn maxmin_equalizes_symmetric_users() {
        let c = manual(2, 2, &[1.0, 1.0, 0.5, 1.0, 0.5, 1.0], &[0.0, 1.0, 0.1, 0.0, 0.1, 0.25, 0.0, 0.25, 0.1, 0.0, 0.1, 1.0], 10.0);
        let (eta, _) = maxmin_allocate(&c, &SolverOptions::default()).unwrap();
        assert!((c.sinr(0, &eta) - c.sinr(1, &eta)).abs() < 1e-4);
        let eq = equal_power(&c, 0.0).unwrap();
        assert!(c.min_sinr(&eta) >= c.min_sinr(&eq) - 1e-6);
    }

    #[test]
    fn structured_solver_matches_dense() {
        let n = 7;
        let diag = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        let blocks = vec![0..3, 3..7];
        let weights = vec![2.0, 0.5];
        let v = DMatrix::from_fn(n, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.3);
        let rhs = DMatrix::from_fn(n, 2, |i, j| (i as f64 - j as f64).sin());
        let mut dense = DMatrix::from_diagonal(&diag);
        for (p, r) in blocks.iter().enumerate() {
            for i in r.clone() {
                for j in r.clone() {
                    dense[(i, j)] += weights[p];
                }
            }
        }
        dense += &v * v.transpose();
        let expect = dense.lu().solve(&rhs).unwrap();
        let got = structured_solve(&diag, &blocks, &weights, &v, &rhs).unwrap();
        assert!((expect - got).norm() < 1e-10);
    }

    #[test]
    fn sensing_without_rcs_is_infeasible() {
        let mut c = manual(1, 1, &[1.0, 1.0], &[0.0, 1.0], 1.0);
        c.gamma_s = 1e-3;
        c.sensing_beam = true;
        assert!(matches!(maxmin_allocate(&c, &SolverOptions::default()), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn sensing_constraint_holds_at_exit() {
        let mut c = manual(2, 1, &[1.0, 1.0, 1.0, 1.0], &[0.5, 1.0, 0.5, 1.0], 10.0);
        c.c = vec![1.0, 0.1, 0.5, 0.05];
        c.d = vec![0.1, 0.1, 0.1, 0.1];
        c.sensing_beam = true;
        let best = c.max_sensing_sinr();
        c.gamma_s = 0.8 * best;
        let (eta, _) = maxmin_allocate(&c, &SolverOptions::default()).unwrap();
        assert!(c.sensing_slack(&eta) >= -1e-6);
        assert!(c.max_ap_power(&eta) <= 1.0 + 1e-6);
        c.gamma_s = 1.01 * best;
        assert!(matches!(maxmin_allocate(&c, &SolverOptions::default()), Err(Error::Infeasible { .. })));
    }
}
