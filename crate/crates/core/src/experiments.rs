//! Experiment drivers. Every driver is a pure function of the config:
//! scenarios are keyed by `(seed, index)` and parallel maps collect in
//! index order, so thread count never changes a result.

use crate::allocator::{equal_power, extract_coefficients, maxmin_allocate, maxmin_allocate_from, IterState, SinrCoefficients, SolverOptions};
use crate::config::{linear_to_db, ExperimentConfig, SignalKind};
use crate::error::{Error, Result};
use crate::estimation::{bt_pilot_model, estimator_stats, EpLayout, EstimatorStats, UplinkPowers};
use crate::geometry::{place_scenario, Scenario};
use crate::model::SystemModel;
use crate::montecarlo::{mc_validate, McUserReport};
use crate::ofdm::{overhead_table, OverheadRow};
use crate::performance::{se_lower_bound, FirstSlot, PowerAlloc, TraceTables};
use crate::rng::{derive_seed, tag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed of scenario `index` under master seed `seed`.
pub fn scenario_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[tag::SCENARIO, index as u64])
}

pub fn uplink_powers(config: &ExperimentConfig, model: &SystemModel) -> UplinkPowers {
    UplinkPowers {
        pilot_w: config.pilot_power_w,
        data_w: config.uplink_data_power_w,
        eta: config.uplink_eta,
        noise_var: model.noise_var,
    }
}

/// A placed scenario with its channel model and OTFS estimator statistics.
pub struct Instance {
    pub scenario: Scenario,
    pub model: SystemModel,
    pub stats: EstimatorStats,
}

impl Instance {
    pub fn build(config: &ExperimentConfig, index: usize) -> Result<Self> {
        let scenario = place_scenario(config, scenario_seed(config.seed, index))?;
        let model = SystemModel::build(config, &scenario)?;
        let stats = if config.perfect_csi {
            EstimatorStats::perfect(&model)
        } else {
            match config.signal {
                SignalKind::Otfs => otfs_stats(config, &model)?,
                SignalKind::Ofdm => ofdm_stats(config, &model, config.ofdm_pilot_length)?,
            }
        };
        Ok(Instance { scenario, model, stats })
    }
}

pub fn otfs_stats(config: &ExperimentConfig, model: &SystemModel) -> Result<EstimatorStats> {
    let ep = EpLayout { k_max: model.bounds.k_max, ell_max: model.bounds.ell_max, k_hat: config.k_hat };
    estimator_stats(model, &uplink_powers(config, model), &ep)
}

pub fn ofdm_stats(config: &ExperimentConfig, model: &SystemModel, pilot_len: usize) -> Result<EstimatorStats> {
    bt_pilot_model(model, &uplink_powers(config, model), pilot_len)
}

/// Per-user lower-bound SE against the true channel statistics.
pub fn evaluate_se(model: &SystemModel, stats: &EstimatorStats, eta: &PowerAlloc, kind: SignalKind) -> Result<Vec<f64>> {
    let tables = TraceTables::new(model, stats, FirstSlot::Channel, kind)?;
    (0..model.users).map(|q| Ok(se_lower_bound(q, eta, &tables, model.rho_d)?.0)).collect()
}

fn min_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mean_of(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Equal-power and max-min allocations of one instance.
pub struct Allocation {
    pub coeffs: SinrCoefficients,
    pub equal: PowerAlloc,
    /// `None` when the sensing constraint cannot be met.
    pub optimized: Option<(PowerAlloc, IterState)>,
}

pub fn allocate(config: &ExperimentConfig, model: &SystemModel, stats: &EstimatorStats) -> Result<Allocation> {
    let coeffs = extract_coefficients(model, stats, config.gamma_s(), config.sensing_beam)?;
    let equal = equal_power(&coeffs, config.sensing_beam_fraction)?;
    let optimized = match maxmin_allocate(&coeffs, &SolverOptions::from_config(config)) {
        Ok(r) => Some(r),
        Err(Error::Infeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Allocation { coeffs, equal, optimized })
}

/// Runs `f` on a pool of `threads` workers; zero means the rayon default.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn run_scenario(config: &ExperimentConfig, index: usize) -> Result<Scenario> {
    config.validate()?;
    place_scenario(config, scenario_seed(config.seed, index))
}

/// Monte Carlo check of scenario 0 at equal power.
pub fn mc_validate_se(config: &ExperimentConfig, seed: u64, n_real: usize) -> Result<Vec<McUserReport>> {
    let inst = Instance::build(config, 0)?;
    let coeffs = extract_coefficients(&inst.model, &inst.stats, 0.0, config.sensing_beam)?;
    let eta = equal_power(&coeffs, config.sensing_beam_fraction)?;
    mc_validate(&inst.model, &inst.stats, &eta, derive_seed(seed, &[tag::REALIZATION]), n_real)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub scenario: usize,
    pub user: usize,
    pub otfs_equal: f64,
    pub otfs_optimized: f64,
    pub otfs_optimized_perfect: f64,
    pub ofdm_equal: f64,
    pub ofdm_optimized: f64,
    /// Smallest OTFS equal-power SE of the scenario.
    pub otfs_equal_min: f64,
    /// Min-user SE in the optimizer's own estimate-based metric.
    pub otfs_equal_model_min: f64,
    pub otfs_optimized_model_min: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    pub column: String,
    /// 5th percentile of the per-user SE.
    pub likely_95: f64,
    pub mean: f64,
}

struct VariantSe {
    equal: Vec<f64>,
    optimized: Vec<f64>,
    /// Min-user SE of equal power and of the optimum in the optimizer's own metric.
    model_min: (f64, Option<f64>),
}

fn variant_se(config: &ExperimentConfig, model: &SystemModel, stats: &EstimatorStats, kind: SignalKind) -> Result<VariantSe> {
    let alloc = allocate(config, model, stats)?;
    let omega = TraceTables::new(model, stats, FirstSlot::Channel, kind)?.omega;
    let model_se = |eta: &PowerAlloc| omega * (1.0 + alloc.coeffs.min_sinr(eta)).log2();
    let equal = evaluate_se(model, stats, &alloc.equal, kind)?;
    let (optimized, own) = match &alloc.optimized {
        Some((eta, _)) => (evaluate_se(model, stats, eta, kind)?, Some(model_se(eta))),
        None => (vec![f64::NAN; model.users], None),
    };
    Ok(VariantSe { equal, optimized, model_min: (model_se(&alloc.equal), own) })
}

/// Per-user SE of every scenario under all allocation and waveform variants.
pub fn run_cdf_experiment(config: &ExperimentConfig) -> Result<Vec<CdfRow>> {
    config.validate()?;
    let per_scenario: Vec<Result<Vec<CdfRow>>> = (0..config.scenarios)
        .into_par_iter()
        .map(|s| {
            let scenario = place_scenario(config, scenario_seed(config.seed, s))?;
            let model = SystemModel::build(config, &scenario)?;
            let est = otfs_stats(config, &model)?;
            let otfs = variant_se(config, &model, &est, SignalKind::Otfs)?;
            let perfect = variant_se(config, &model, &EstimatorStats::perfect(&model), SignalKind::Otfs)?;
            let ofdm = ofdm_stats(config, &model, config.ofdm_pilot_length)?;
            let (ofdm_equal, ofdm_opt) = match variant_se(config, &model, &ofdm, SignalKind::Ofdm) {
                Ok(v) => (v.equal, v.optimized),
                Err(Error::Config(_)) => (vec![f64::NAN; model.users], vec![f64::NAN; model.users]),
                Err(e) => return Err(e),
            };
            let equal_min = min_of(&otfs.equal);
            Ok((0..model.users)
                .map(|q| CdfRow {
                    scenario: s,
                    user: q,
                    otfs_equal: otfs.equal[q],
                    otfs_optimized: otfs.optimized[q],
                    otfs_optimized_perfect: perfect.optimized[q],
                    ofdm_equal: ofdm_equal[q],
                    ofdm_optimized: ofdm_opt[q],
                    otfs_equal_min: equal_min,
                    otfs_equal_model_min: otfs.model_min.0,
                    otfs_optimized_model_min: otfs.model_min.1.unwrap_or(f64::NAN),
                    feasible: otfs.model_min.1.is_some(),
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_scenario {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Linear-interpolated percentile of the finite values, `pct` in `[0, 100]`.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn cdf_summary(rows: &[CdfRow]) -> Vec<CdfSummary> {
    let columns: [(&str, fn(&CdfRow) -> f64); 5] = [
        ("otfs_equal", |r| r.otfs_equal),
        ("otfs_optimized", |r| r.otfs_optimized),
        ("otfs_optimized_perfect", |r| r.otfs_optimized_perfect),
        ("ofdm_equal", |r| r.ofdm_equal),
        ("ofdm_optimized", |r| r.ofdm_optimized),
    ];
    columns
        .iter()
        .map(|(name, get)| {
            let v: Vec<f64> = rows.iter().map(get).filter(|x| x.is_finite()).collect();
            CdfSummary {
                column: name.to_string(),
                likely_95: percentile(&v, 5.0),
                mean: if v.is_empty() { f64::NAN } else { mean_of(&v) },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub scenario: usize,
    pub antennas: usize,
    pub sensing_beam: bool,
    pub gamma_db: f64,
    pub feasible: bool,
    /// Optimizer's min-user SE.
    pub min_se: f64,
    /// Min-user SE of the same allocation against the true channel statistics.
    pub min_se_eval: f64,
    pub sensing_sinr_db: f64,
    pub max_sensing_sinr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSummary {
    pub antennas: usize,
    pub sensing_beam: bool,
    pub gamma_db: f64,
    pub feasible_fraction: f64,
    /// Mean over scenarios feasible at every swept level up to this one.
    pub avg_min_se: f64,
}

/// Sweeps the sensing requirement with and without the dedicated beam.
/// Levels are solved from the strictest down, each warm-started from the
/// previous solution, which stays feasible as the requirement relaxes.
pub fn run_tradeoff_sweep(config: &ExperimentConfig, gammas_db: &[f64]) -> Result<Vec<TradeoffRow>> {
    config.validate()?;
    if gammas_db.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("gamma_sweep_db: levels must be ascending".into()));
    }
    let options = SolverOptions::from_config(config);
    let per_scenario: Vec<Result<Vec<TradeoffRow>>> = (0..config.scenarios)
        .into_par_iter()
        .map(|s| {
            let inst = Instance::build(config, s)?;
            let omega = TraceTables::new(&inst.model, &inst.stats, FirstSlot::Channel, SignalKind::Otfs)?.omega;
            let mut rows = Vec::new();
            for beam in [false, true] {
                let mut coeffs = extract_coefficients(&inst.model, &inst.stats, 0.0, beam)?;
                let best = coeffs.max_sensing_sinr();
                let mut previous: Option<PowerAlloc> = None;
                let mut block = Vec::with_capacity(gammas_db.len());
                for &g_db in gammas_db.iter().rev() {
                    let gamma = crate::config::db_to_linear(g_db);
                    coeffs.gamma_s = gamma;
                    let mut row = TradeoffRow {
                        scenario: s,
                        antennas: config.antennas,
                        sensing_beam: beam,
                        gamma_db: g_db,
                        feasible: false,
                        min_se: f64::NAN,
                        min_se_eval: f64::NAN,
                        sensing_sinr_db: f64::NAN,
                        max_sensing_sinr_db: linear_to_db(best),
                    };
                    match maxmin_allocate_from(&coeffs, &options, previous.as_ref()) {
                        Ok((eta, _)) => {
                            row.feasible = true;
                            row.min_se = omega * (1.0 + coeffs.min_sinr(&eta)).log2();
                            row.min_se_eval = min_of(&evaluate_se(&inst.model, &inst.stats, &eta, SignalKind::Otfs)?);
                            row.sensing_sinr_db = linear_to_db(coeffs.sensing_sinr(&eta));
                            previous = Some(eta);
                        }
                        Err(Error::Infeasible { .. }) => {}
                        Err(e) => return Err(e),
                    }
                    block.push(row);
                }
                block.reverse();
                rows.extend(block);
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_scenario {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn tradeoff_summary(rows: &[TradeoffRow], gammas_db: &[f64]) -> Vec<TradeoffSummary> {
    let mut out = Vec::new();
    let mut variants: Vec<(usize, bool)> = rows.iter().map(|r| (r.antennas, r.sensing_beam)).collect();
    variants.dedup();
    variants.sort();
    variants.dedup();
    for (antennas, beam) in variants {
        let sel: Vec<&TradeoffRow> = rows.iter().filter(|r| r.antennas == antennas && r.sensing_beam == beam).collect();
        let scenarios: Vec<usize> = {
            let mut s: Vec<usize> = sel.iter().map(|r| r.scenario).collect();
            s.dedup();
            s
        };
        for (i, &g) in gammas_db.iter().enumerate() {
            let at: Vec<&&TradeoffRow> = sel.iter().filter(|r| r.gamma_db == g).collect();
            let feasible = at.iter().filter(|r| r.feasible).count();
            let kept: Vec<f64> = scenarios
                .iter()
                .filter(|&&s| sel.iter().filter(|r| r.scenario == s && gammas_db[..=i].contains(&r.gamma_db)).all(|r| r.feasible))
                .filter_map(|&s| at.iter().find(|r| r.scenario == s).map(|r| r.min_se))
                .collect();
            out.push(TradeoffSummary {
                antennas,
                sensing_beam: beam,
                gamma_db: g,
                feasible_fraction: feasible as f64 / at.len().max(1) as f64,
                avg_min_se: if kept.is_empty() { f64::NAN } else { mean_of(&kept) },
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub delta_f_hz: f64,
    pub n_cp: usize,
    pub pilot_len: usize,
    pub otfs_se: f64,
    pub ofdm_se: f64,
    /// `(otfs_se - ofdm_se) / otfs_se`.
    pub gap_ratio: f64,
    pub ofdm_infeasible: bool,
}

/// Average per-user equal-power SE of OTFS and OFDM for each subcarrier spacing.
pub fn run_bandwidth_sweep(config: &ExperimentConfig, delta_f: &[f64]) -> Result<Vec<BandwidthRow>> {
    config.validate()?;
    delta_f
        .iter()
        .enumerate()
        .map(|(i, &df)| {
            let mut cfg = config.clone();
            cfg.subcarrier_spacing_hz = df;
            cfg.ofdm_pilot_length = config.ofdm_pilot_lengths.get(i).copied().unwrap_or(config.ofdm_pilot_length);
            cfg.validate()?;
            let grid = cfg.grid()?;
            let ofdm_infeasible = grid.n_cp >= grid.m;
            let per: Vec<Result<(f64, f64)>> = (0..cfg.scenarios)
                .into_par_iter()
                .map(|s| {
                    let scenario = place_scenario(&cfg, scenario_seed(cfg.seed, s))?;
                    let model = SystemModel::build(&cfg, &scenario)?;
                    let otfs = otfs_stats(&cfg, &model)?;
                    let coeffs = extract_coefficients(&model, &otfs, 0.0, cfg.sensing_beam)?;
                    let eta = equal_power(&coeffs, cfg.sensing_beam_fraction)?;
                    let otfs_se = mean_of(&evaluate_se(&model, &otfs, &eta, SignalKind::Otfs)?);
                    let ofdm_se = if ofdm_infeasible {
                        f64::NAN
                    } else {
                        let ofdm = ofdm_stats(&cfg, &model, cfg.ofdm_pilot_length)?;
                        let coeffs = extract_coefficients(&model, &ofdm, 0.0, cfg.sensing_beam)?;
                        let eta = equal_power(&coeffs, cfg.sensing_beam_fraction)?;
                        mean_of(&evaluate_se(&model, &ofdm, &eta, SignalKind::Ofdm)?)
                    };
                    Ok((otfs_se, ofdm_se))
                })
                .collect();
            let pairs = per.into_iter().collect::<Result<Vec<_>>>()?;
            let otfs_se = mean_of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let ofdm_se = mean_of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            Ok(BandwidthRow {
                delta_f_hz: df,
                n_cp: grid.n_cp,
                pilot_len: cfg.ofdm_pilot_length,
                otfs_se,
                ofdm_se,
                gap_ratio: (otfs_se - ofdm_se) / otfs_se,
                ofdm_infeasible,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table4Row {
    pub profile: String,
    pub delta_f_hz: f64,
    pub n_cp: usize,
    pub otfs_overhead_pct: f64,
    pub ofdm_overhead_pct: f64,
    pub pilot_len: Option<usize>,
    pub ofdm_infeasible: bool,
}

impl Table4Row {
    fn new(profile: &str, r: OverheadRow) -> Self {
        Table4Row {
            profile: profile.to_string(),
            delta_f_hz: r.delta_f_hz,
            n_cp: r.n_cp,
            otfs_overhead_pct: r.otfs_overhead_pct,
            ofdm_overhead_pct: r.ofdm_overhead_pct,
            pilot_len: r.pilot_len,
            ofdm_infeasible: r.ofdm_infeasible,
        }
    }
}

/// CP overhead of both waveforms for the short and long delay-spread profiles.
pub fn run_table4(config: &ExperimentConfig) -> Result<Vec<Table4Row>> {
    config.validate()?;
    let (m, n) = (config.subcarriers, config.symbols);
    let mut out = Vec::new();
    for (profile, tau) in [("EVA", config.tau_max_s), ("EVB", config.tau_max_evb_s)] {
        let lens: &[usize] = if profile == "EVA" { &config.ofdm_pilot_lengths } else { &[] };
        out.extend(
            overhead_table(tau, &config.delta_f_sweep_hz, m, n, lens)
                .into_iter()
                .map(|row| Table4Row::new(profile, row)),
        );
    }
    Ok(out)
}
