//! OFDM baseline: cyclic-prefix accounting and the block-pilot SE.

use crate::config::SignalKind;
use crate::error::Result;
use crate::estimation::{bt_pilot_model, EstimatorStats, UplinkPowers};
use crate::lattice::cp_samples;
use crate::model::SystemModel;
use crate::performance::{se_lower_bound, FirstSlot, PowerAlloc, TraceTables};
use serde::{Deserialize, Serialize};

/// Statistics and trace tables of the OFDM system with block-type pilots.
pub fn ofdm_tables(model: &SystemModel, powers: &UplinkPowers, pilot_len: usize, perfect: bool) -> Result<(EstimatorStats, TraceTables)> {
    let stats = if perfect { EstimatorStats::perfect(model) } else { bt_pilot_model(model, powers, pilot_len)? };
    let tables = TraceTables::new(model, &stats, FirstSlot::Channel, SignalKind::Ofdm)?;
    Ok((stats, tables))
}

/// Lower-bound SE of user `q`; `tables` must carry the OFDM pre-log.
pub fn ofdm_se_lower(q: usize, eta: &PowerAlloc, tables: &TraceTables, rho_d: f64) -> Result<f64> {
    Ok(se_lower_bound(q, eta, tables, rho_d)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub delta_f_hz: f64,
    pub n_cp: usize,
    pub otfs_overhead_pct: f64,
    pub ofdm_overhead_pct: f64,
    pub pilot_len: Option<usize>,
    /// The cyclic prefix does not fit in one OFDM symbol.
    pub ofdm_infeasible: bool,
}

pub fn overhead_table(tau_max: f64, delta_f: &[f64], m: usize, n: usize, pilot_lens: &[usize]) -> Vec<OverheadRow> {
    delta_f
        .iter()
        .enumerate()
        .map(|(i, &df)| {
            let n_cp = cp_samples(tau_max, m, df);
            OverheadRow {
                delta_f_hz: df,
                n_cp,
                otfs_overhead_pct: 100.0 * n_cp as f64 / (m * n) as f64,
                ofdm_overhead_pct: 100.0 * n_cp as f64 / m as f64,
                pilot_len: pilot_lens.get(i).copied(),
                ofdm_infeasible: n_cp >= m,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: [f64; 5] = [15e3, 45e3, 75e3, 105e3, 135e3];

    fn rounded(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn eva_rows() {
        let rows = overhead_table(2.5e-6, &SWEEP, 512, 128, &[14, 4, 2, 2, 1]);
        let otfs: Vec<f64> = rows.iter().map(|r| rounded(r.otfs_overhead_pct)).collect();
        let ofdm: Vec<f64> = rows.iter().map(|r| rounded(r.ofdm_overhead_pct)).collect();
        assert_eq!(otfs, vec![0.03, 0.09, 0.15, 0.21, 0.26]);
        assert_eq!(ofdm, vec![3.91, 11.33, 18.75, 26.37, 33.79]);
        assert_eq!(rows[4].n_cp, 173);
        assert!(rows.iter().all(|r| !r.ofdm_infeasible));
        assert_eq!(rows[0].pilot_len, Some(14));
    }

    #[test]
    fn evb_rows() {
        let rows = overhead_table(10e-6, &SWEEP, 512, 128, &[]);
        let otfs: Vec<f64> = rows.iter().map(|r| rounded(r.otfs_overhead_pct)).collect();
        assert_eq!(otfs, vec![0.12, 0.35, 0.59, 0.82, 1.06]);
        let ofdm: Vec<f64> = rows[..3].iter().map(|r| rounded(r.ofdm_overhead_pct)).collect();
        assert_eq!(ofdm, vec![15.04, 45.12, 75.0]);
        let flags: Vec<bool> = rows.iter().map(|r| r.ofdm_infeasible).collect();
        assert_eq!(flags, vec![false, false, false, true, true]);
    }

    #[test]
    fn ofdm_overhead_grows_with_spacing() {
        let rows = overhead_table(2.5e-6, &SWEEP, 512, 128, &[]);
        for w in rows.windows(2) {
            assert!(w[1].ofdm_overhead_pct > w[0].ofdm_overhead_pct);
        }
        assert!(rows.iter().all(|r| r.otfs_overhead_pct < 1.1));
    }
}
