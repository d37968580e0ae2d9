//! N-scans, cutoff scans, residual tables and power-law fits.
//!
//! A scan solves the full many-body problem at each particle number and
//! lines the exact energy up against the three-level prediction ladder:
//! level 0 is the mean-field constant `N ŵ(0)/2`, level 1 adds the
//! quadratic-theory constant, and level 2 replaces it with the vacuum
//! expectation of the doubly rotated excitation Hamiltonian, which
//! carries the cubic and quartic corrections.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bogoliubov::BogoliubovData;
use crate::error::{Error, Result};
use crate::expm::Unitary;
use crate::fock::{ExcitationMap, SectorBasis};
use crate::model::ModelConfig;
use crate::operators::{conjugate, unitary_from_generator, OperatorRecipe};
use crate::solver::{
    expectation_moment, ground_state, one_body_density_matrix, trace_norm_diff,
    transformed_residuals,
};

/// One experiment record per particle number.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub n_particles: usize,
    pub e_exact: f64,
    pub e_level0: f64,
    pub e_level1: f64,
    pub e_level2: f64,
    pub depletion_exact: f64,
    pub depletion_pred: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub phi_number: f64,
    pub norm_gap: f64,
    pub dm_trace_dist: f64,
    /// Largest off-diagonal density-matrix entry; not part of the CSV
    /// contract, kept for the selection-rule check.
    pub dm_off_diag_max: f64,
    /// Ground-state weight dropped by the excitation cutoff.
    pub tail_weight: f64,
}

/// CSV column order of a scan table.
pub const SCAN_COLUMNS: [&str; 14] = [
    "N",
    "E_exact",
    "E_level0",
    "E_level1",
    "E_level2",
    "depletion_exact",
    "depletion_pred",
    "m1",
    "m2",
    "m3",
    "m4",
    "phi_number",
    "norm_gap",
    "dm_trace_dist",
];

impl ScanRow {
    pub fn csv_values(&self) -> [f64; 13] {
        [
            self.e_exact,
            self.e_level0,
            self.e_level1,
            self.e_level2,
            self.depletion_exact,
            self.depletion_pred,
            self.m1,
            self.m2,
            self.m3,
            self.m4,
            self.phi_number,
            self.norm_gap,
            self.dm_trace_dist,
        ]
    }
}

/// Scan result with per-row failures kept as marked gaps instead of
/// aborting the whole sweep.
#[derive(Debug)]
pub struct ScanOutcome {
    pub rows: Vec<ScanRow>,
    pub failures: Vec<(usize, Error)>,
}

impl ScanOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Shared per-configuration state reused across scan points.
struct ScanContext {
    config: ModelConfig,
    bog: BogoliubovData,
    excitation: Arc<SectorBasis>,
    u_quadratic: Arc<Unitary>,
}

impl ScanContext {
    fn new(config: &ModelConfig) -> Result<Self> {
        let bog = BogoliubovData::coefficients(&config.potential)?;
        let excitation = Arc::new(SectorBasis::excitation_zero_momentum(
            config.mode_set.clone(),
            config.excitation_cutoff,
        ));
        let b = OperatorRecipe::quadratic_generator(&bog).assemble(&excitation)?;
        let u_quadratic = Arc::new(unitary_from_generator(&b, config.expm_tol)?);
        Ok(ScanContext {
            config: config.clone(),
            bog,
            excitation,
            u_quadratic,
        })
    }

    fn point(&self, n: usize) -> Result<ScanRow> {
        let config = &self.config;
        let canonical = SectorBasis::canonical_zero_momentum(config.mode_set.clone(), n);
        if canonical.is_empty() {
            return Err(Error::Config(format!("empty canonical sector at N = {n}")));
        }
        let h = OperatorRecipe::hamiltonian(&config.potential, n)?.assemble(&canonical)?;
        let reference = canonical
            .condensate_index()
            .ok_or_else(|| Error::Operator("sector lacks the condensate state".into()))?;
        let gs = ground_state(&h, config.eigensolver_tol, config.rng_seed, reference)?;

        let m1 = expectation_moment(&gs.vector, &canonical, 1);
        let m2 = expectation_moment(&gs.vector, &canonical, 2);
        let m3 = expectation_moment(&gs.vector, &canonical, 3);
        let m4 = expectation_moment(&gs.vector, &canonical, 4);

        let dm = one_body_density_matrix(&gs, &canonical)?;
        let prediction = self.bog.predicted_density_matrix(n);
        let pred_matrix = DMatrix::from_diagonal(&DVector::from_vec(prediction.weights.clone()));
        let dm_trace_dist = trace_norm_diff(&dm.matrix, &pred_matrix)?;

        let w0 = config.potential.w_hat(config.mode_set.zero_index());
        let e_level0 = n as f64 / 2.0 * w0;
        let e_level1 = e_level0 + self.bog.e_bog();

        let g = OperatorRecipe::excitation_hamiltonian(&config.potential, n)?
            .assemble(&self.excitation)?;
        let s = OperatorRecipe::cubic_generator(&self.bog, &config.potential, n)
            .assemble(&self.excitation)?;
        let u_cubic = unitary_from_generator(&s, config.expm_tol)?;
        let vac = self
            .excitation
            .vacuum_index()
            .expect("excitation basis contains the vacuum");
        let mut e_vac = DVector::zeros(self.excitation.len());
        e_vac[vac] = 1.0;
        let rotated_vac = self
            .u_quadratic
            .apply_inverse(&u_cubic.apply_inverse(&e_vac)?)?;
        let e_level2 = e_level0 + rotated_vac.dot(&g.matvec(&rotated_vac));

        let map = ExcitationMap::new(&canonical, &self.excitation)?;
        let residuals =
            transformed_residuals(&gs, &map, &self.excitation, &self.u_quadratic, &u_cubic)?;
        if !residuals.tail_ok {
            return Err(Error::TruncationTail {
                tail: residuals.tail_weight,
                gate: crate::solver::TAIL_GATE,
            });
        }

        Ok(ScanRow {
            n_particles: n,
            e_exact: gs.energy,
            e_level0,
            e_level1,
            e_level2,
            depletion_exact: m1,
            depletion_pred: self.bog.depletion(),
            m1,
            m2,
            m3,
            m4,
            phi_number: residuals.phi_number,
            norm_gap: residuals.norm_gap,
            dm_trace_dist,
            dm_off_diag_max: dm.off_diagonal_max(),
            tail_weight: residuals.tail_weight,
        })
    }
}

/// Solve one scan point in isolation.
pub fn scan_point(config: &ModelConfig, n: usize) -> Result<ScanRow> {
    ScanContext::new(config)?.point(n)
}

/// Run the configured N list. Points execute on the current rayon pool;
/// results are keyed by `N`, so the row order is independent of the
/// worker schedule.
pub fn run_scan(config: &ModelConfig) -> Result<ScanOutcome> {
    let context = ScanContext::new(config)?;
    let mut results: Vec<(usize, Result<ScanRow>)> = config
        .n_list
        .par_iter()
        .map(|&n| (n, context.point(n)))
        .collect();
    results.sort_by_key(|(n, _)| *n);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, outcome) in results {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((n, e)),
        }
    }
    Ok(ScanOutcome { rows, failures })
}

/// Least-squares power law `value = amplitude · x^exponent` fitted on
/// log-log coordinates.
#[derive(Debug, Clone)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 3 {
        return Err(Error::FitInput(pairs.len()));
    }
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if pairs.iter().any(|&(x, y)| !positive(x) || !positive(y)) {
        return Err(Error::FitInput(pairs.len()));
    }
    let n = pairs.len() as f64;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::FitInput(pairs.len()));
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let intercept = (sy - exponent * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(lx, ly) in &logs {
        let fit = exponent * lx + intercept;
        ss_res += (ly - fit) * (ly - fit);
        ss_tot += (ly - mean_y) * (ly - mean_y);
    }
    // a flat series has no variance to explain: count it as a perfect fit
    let r_squared = if ss_tot > 1e-20 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit {
        exponent,
        amplitude: intercept.exp(),
        r_squared,
        points: pairs.to_vec(),
    })
}

/// The top half of a scan (larger `N`), where preasymptotic effects
/// have died down.
pub fn top_half(rows: &[ScanRow]) -> &[ScanRow] {
    &rows[rows.len() / 2..]
}

/// Fit a derived residual column of the scan over given rows.
pub fn fit_rows(rows: &[ScanRow], value: impl Fn(&ScanRow) -> f64) -> Result<PowerLawFit> {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.n_particles as f64, value(r)))
        .collect();
    fit_power_law(&pairs)
}

/// One row of the quadratic-rotation cutoff study.
#[derive(Debug, Clone)]
pub struct CutoffRow {
    pub cutoff: usize,
    /// Vacuum expectation of the rotated quadratic Hamiltonian.
    pub vacuum_energy: f64,
    /// Distance to the closed-form energy constant.
    pub gap: f64,
    /// Spectral-norm residual against the diagonal form on the
    /// `N_+ <= 2` block.
    pub diag_residual: f64,
}

/// Rotate the quadratic Hamiltonian at each cutoff and measure how fast
/// the vacuum energy and the low-sector diagonalization converge.
pub fn cutoff_convergence(config: &ModelConfig, m_list: &[usize]) -> Result<Vec<CutoffRow>> {
    let bog = BogoliubovData::coefficients(&config.potential)?;
    let mut out = Vec::with_capacity(m_list.len());
    for &cutoff in m_list {
        let basis = SectorBasis::excitation_zero_momentum(config.mode_set.clone(), cutoff);
        let hb = OperatorRecipe::bogoliubov_hamiltonian(&config.potential).assemble(&basis)?;
        let b = OperatorRecipe::quadratic_generator(&bog).assemble(&basis)?;
        let u = unitary_from_generator(&b, config.expm_tol)?;
        let rotated = conjugate(&hb, &u)?;
        let vac = basis
            .vacuum_index()
            .ok_or_else(|| Error::Operator("excitation basis lacks the vacuum".into()))?;
        let vacuum_energy = rotated[(vac, vac)];
        let gap = (vacuum_energy - bog.e_bog()).abs();
        let dg = OperatorRecipe::dispersion_diagonal(&bog)
            .assemble(&basis)?
            .to_dense();
        let low: Vec<usize> = (0..basis.len())
            .filter(|&i| basis.excitation_number(i) <= 2)
            .collect();
        let k = low.len();
        let mut block = DMatrix::zeros(k, k);
        for (a, &i) in low.iter().enumerate() {
            for (b2, &j) in low.iter().enumerate() {
                let target = dg[(i, j)] + if i == j { bog.e_bog() } else { 0.0 };
                block[(a, b2)] = rotated[(i, j)] - target;
            }
        }
        let eig = block.symmetric_eigen();
        let diag_residual = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        out.push(CutoffRow {
            cutoff,
            vacuum_energy,
            gap,
            diag_residual,
        });
    }
    Ok(out)
}

/// Uniform-boundedness report for the excitation-number moments.
#[derive(Debug, Clone)]
pub struct MomentReport {
    /// Per order `s = 1..=s_max`: (max over N, max/min ratio).
    pub per_order: Vec<(u32, f64, f64)>,
    /// Largest ratio across orders.
    pub worst_ratio: f64,
}

pub fn moment_boundedness(rows: &[ScanRow], s_max: u32) -> Result<MomentReport> {
    if rows.len() < 3 {
        return Err(Error::FitInput(rows.len()));
    }
    let mut per_order = Vec::new();
    let mut worst: f64 = 1.0;
    for s in 1..=s_max.min(4) {
        let values: Vec<f64> = rows
            .iter()
            .map(|r| match s {
                1 => r.m1,
                2 => r.m2,
                3 => r.m3,
                _ => r.m4,
            })
            .collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        // all-zero moments (free gas) are trivially uniform
        let ratio = if max <= 1e-14 { 1.0 } else { max / min };
        worst = worst.max(ratio);
        per_order.push((s, max, ratio));
    }
    Ok(MomentReport {
        per_order,
        worst_ratio: worst,
    })
}

/// Render scan rows in the exact CSV column contract. Floats use the
/// shortest round-trip scientific form, so equal inputs give
/// byte-identical files.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::new();
    out.push_str(&SCAN_COLUMNS.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.n_particles.to_string());
        for v in row.csv_values() {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    out
}

pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:e}")
    }
}

/// Parse a headered numeric CSV (as written by `scan_csv`).
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let values: Result<Vec<f64>> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {}: bad number {s:?}: {e}", i + 2)))
            })
            .collect();
        let values = values?;
        if values.len() != header.len() {
            return Err(Error::Config(format!(
                "row {} has {} fields, header has {}",
                i + 2,
                values.len(),
                header.len()
            )));
        }
        rows.push(values);
    }
    Ok((header, rows))
}

/// Extract `(x = first column, value)` pairs for a fit target: either a
/// plain column name or the absolute difference `colA-colB`.
pub fn column_pairs(
    header: &[String],
    rows: &[Vec<f64>],
    expr: &str,
) -> Result<Vec<(f64, f64)>> {
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name.trim())
            .ok_or_else(|| Error::Config(format!("no column named {name:?}")))
    };
    type ColumnValue = Box<dyn Fn(&[f64]) -> f64>;
    let value: ColumnValue = if let Some((a, b)) = expr.split_once('-') {
        let (ia, ib) = (find(a)?, find(b)?);
        Box::new(move |row: &[f64]| (row[ia] - row[ib]).abs())
    } else {
        let i = find(expr)?;
        Box::new(move |row: &[f64]| row[i])
    };
    Ok(rows.iter().map(|r| (r[0], value(r))).collect())
}
