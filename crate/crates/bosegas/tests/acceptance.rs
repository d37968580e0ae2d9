//! Acceptance suite: every criterion of the verification plan as one
//! test, each printing a single pass line with the measured margin.
//!
//! The standard instance is d = 1, n_max = 2, ŵ ≡ 1 on the whole mode
//! set, scanned over N = 6..16 with excitation cutoff M = 10. The
//! cutoff-convergence criterion uses a strongly coupled variant
//! (ŵ ≡ 40) so that every M-step stays far above the double-precision
//! floor of the vacuum-energy gap.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use bosegas::bogoliubov::BogoliubovData;
use bosegas::experiments::{
    cutoff_convergence, fit_rows, moment_boundedness, run_scan, scan_csv, top_half, ScanRow,
};
use bosegas::fock::SectorBasis;
use bosegas::model::{ModeSet, ModelConfig, Potential};
use bosegas::operators::{onsager_check, OperatorRecipe};
use bosegas::solver::ground_state;

fn standard_config(w_value: f64, n_list: Vec<usize>, cutoff: usize) -> ModelConfig {
    let mode_set = Arc::new(ModeSet::build(1, 2).unwrap());
    let potential = Potential::uniform(mode_set.clone(), w_value).unwrap();
    ModelConfig {
        mode_set,
        potential,
        n_list,
        excitation_cutoff: cutoff,
        eigensolver_tol: 1e-10,
        expm_tol: 1e-12,
        rng_seed: 42,
    }
}

fn scan_n_list() -> Vec<usize> {
    vec![6, 8, 10, 12, 14, 16]
}

/// The standard interacting scan, shared across criteria.
fn standard_scan() -> &'static Vec<ScanRow> {
    static SCAN: OnceLock<Vec<ScanRow>> = OnceLock::new();
    SCAN.get_or_init(|| {
        let config = standard_config(1.0, scan_n_list(), 10);
        let outcome = run_scan(&config).expect("scan runs");
        assert!(
            outcome.is_complete(),
            "scan points failed: {:?}",
            outcome.failures
        );
        outcome.rows
    })
}

fn pass(number: u32, name: &str, detail: String) {
    println!("criterion {number:02} PASS — {name}: {detail}");
}

#[test]
fn criterion_01_free_gas_exactness() {
    let config = standard_config(0.0, scan_n_list(), 10);
    let outcome = run_scan(&config).expect("free scan runs");
    assert!(outcome.is_complete());
    let mut worst = 0.0f64;
    for row in &outcome.rows {
        for value in [
            row.e_exact,
            row.e_level0,
            row.e_level1,
            row.e_level2,
            row.depletion_exact,
            row.depletion_pred,
            row.m1,
            row.m2,
            row.m3,
            row.m4,
            row.phi_number,
            row.norm_gap,
            row.dm_trace_dist,
        ] {
            worst = worst.max(value.abs());
        }
        assert!(row.dm_off_diag_max <= 1e-12);
    }
    assert!(worst <= 1e-10, "free-gas residual {worst}");
    pass(1, "free-gas exactness", format!("max |residual| = {worst:.2e}"));
}

// Independent check of the interacting 2x2 sector: a from-scratch
// second-quantized enumerator over occupation maps, sharing no code
// with the library's basis or operator assembly.
mod brute {
    use std::collections::BTreeMap;

    pub type State = BTreeMap<i64, u32>;

    pub fn annihilate(state: &State, mode: i64) -> Option<(State, f64)> {
        let n = *state.get(&mode).unwrap_or(&0);
        if n == 0 {
            return None;
        }
        let mut out = state.clone();
        if n == 1 {
            out.remove(&mode);
        } else {
            out.insert(mode, n - 1);
        }
        Some((out, (n as f64).sqrt()))
    }

    pub fn create(state: &State, mode: i64) -> (State, f64) {
        let n = *state.get(&mode).unwrap_or(&0);
        let mut out = state.clone();
        out.insert(mode, n + 1);
        (out, (n as f64 + 1.0).sqrt())
    }

    /// `<bra| a*_{p-k} a*_{q+k} a_p a_q |ket>`
    pub fn quartic_element(bra: &State, ket: &State, p: i64, q: i64, k: i64) -> f64 {
        let Some((s1, a1)) = annihilate(ket, q) else { return 0.0 };
        let Some((s2, a2)) = annihilate(&s1, p) else { return 0.0 };
        let (s3, a3) = create(&s2, q + k);
        let (s4, a4) = create(&s3, p - k);
        if &s4 == bra {
            a1 * a2 * a3 * a4
        } else {
            0.0
        }
    }
}

#[test]
fn criterion_02_tiny_sector_oracle() {
    use brute::State;
    let p2 = |l: i64| (2.0 * std::f64::consts::PI * l as f64).powi(2);

    // enumerate 2-particle zero-momentum states over modes {-1, 0, 1}
    let mut states: Vec<State> = Vec::new();
    for a in -1i64..=1 {
        for b in a..=1 {
            if a + b == 0 {
                let mut s = State::new();
                *s.entry(a).or_insert(0) += 1;
                *s.entry(b).or_insert(0) += 1;
                states.push(s);
            }
        }
    }
    states.sort();
    assert_eq!(states.len(), 2);

    let mut h = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut v = 0.0;
            if i == j {
                v += states[i].iter().map(|(&l, &n)| p2(l) * n as f64).sum::<f64>();
            }
            for p in -1i64..=1 {
                for q in -1i64..=1 {
                    for k in -1i64..=1 {
                        if (p - k).abs() > 1 || (q + k).abs() > 1 {
                            continue;
                        }
                        // ŵ ≡ 1 on the set, N = 2 so 1/(2(N-1)) = 1/2
                        v += 0.5 * brute::quartic_element(&states[i], &states[j], p, q, k);
                    }
                }
            }
            h[(i, j)] = v;
        }
    }
    let a = 8.0 * std::f64::consts::PI * std::f64::consts::PI;
    // the enumerated matrix is [[1, √2], [√2, 8π² + 1]]
    let cond = if states[0].contains_key(&0) { 0 } else { 1 };
    let pair = 1 - cond;
    assert!((h[(cond, cond)] - 1.0).abs() < 1e-12);
    assert!((h[(pair, pair)] - (a + 1.0)).abs() < 1e-12);
    assert!((h[(cond, pair)] - 2.0f64.sqrt()).abs() < 1e-12);
    assert!((h[(cond, pair)] - h[(pair, cond)]).abs() < 1e-12);

    let closed_form = (a + 2.0) / 2.0 - (a * a / 4.0 + 2.0).sqrt();
    // frozen high-precision evaluation of the closed form
    assert!((closed_form - 0.9746778251411002).abs() < 1e-12);
    let tr = h.trace();
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    let brute_ground = tr / 2.0 - (tr * tr / 4.0 - det).sqrt();
    assert!((brute_ground - closed_form).abs() < 1e-9);

    // the library must reproduce the same sector and energy
    let mode_set = Arc::new(ModeSet::build(1, 1).unwrap());
    let w = Potential::uniform(mode_set.clone(), 1.0).unwrap();
    let basis = SectorBasis::canonical_zero_momentum(mode_set, 2);
    let op = OperatorRecipe::hamiltonian(&w, 2)
        .unwrap()
        .assemble(&basis)
        .unwrap();
    let gs = ground_state(&op, 1e-10, 1, basis.condensate_index().unwrap()).unwrap();
    let gap = (gs.energy - closed_form).abs();
    assert!(gap < 1e-9, "energy gap {gap}");
    pass(
        2,
        "tiny-sector oracle",
        format!("|E - closed form| = {gap:.2e}"),
    );
}

#[test]
fn criterion_03_closed_form_identities() {
    let config = standard_config(1.0, vec![6], 10);
    let modes = &config.mode_set;
    let w = &config.potential;
    let bog = BogoliubovData::coefficients(w).unwrap();
    let mut worst = 0.0f64;
    for p in modes.nonzero_modes() {
        let s = bog.sigma(p);
        let g = bog.gamma(p);
        worst = worst.max((s * s - g * g - 1.0).abs());
        worst = worst.max(((2.0 * bog.beta(p)).tanh() - bog.alpha(p)).abs());
        let p2 = modes.p_squared(p);
        let e = bog.dispersion(p);
        worst = worst.max((p2 - e).max(0.0));
        worst = worst.max((e - p2 - w.w_hat(p)).max(0.0));
    }
    let direct: f64 = modes
        .nonzero_modes()
        .map(|i| -0.5 * (modes.p_squared(i) + w.w_hat(i) - bog.dispersion(i)))
        .sum();
    worst = worst.max((bog.e_bog() - direct).abs());
    assert!(worst <= 1e-12, "identity defect {worst}");
    pass(3, "closed-form identities", format!("max defect = {worst:.2e}"));
}

#[test]
fn criterion_04_quadratic_rotation_cutoff_convergence() {
    let config = standard_config(40.0, vec![6], 10);
    let rows = cutoff_convergence(&config, &[4, 6, 8, 10]).unwrap();
    let mut worst_ratio = 0.0f64;
    for pair in rows.windows(2) {
        assert!(
            pair[1].diag_residual < pair[0].diag_residual,
            "diagonalization residual must decrease: {} -> {}",
            pair[0].diag_residual,
            pair[1].diag_residual
        );
        let ratio = pair[1].gap / pair[0].gap;
        worst_ratio = worst_ratio.max(ratio);
        assert!(ratio <= 0.5, "gap ratio {ratio} exceeds 0.5");
    }
    // regression bound on the standard coupling, frozen from a
    // measured run: the low-sector residual is at numerical noise
    let standard = standard_config(1.0, vec![6], 10);
    let srows = cutoff_convergence(&standard, &[4, 6, 8, 10]).unwrap();
    assert!(srows.last().unwrap().diag_residual < 1e-3);
    pass(
        4,
        "quadratic-rotation cutoff convergence",
        format!(
            "worst gap ratio = {worst_ratio:.3}, final residuals {:.2e} (strong) / {:.2e} (standard)",
            rows.last().unwrap().diag_residual,
            srows.last().unwrap().diag_residual
        ),
    );
}

#[test]
fn criterion_05_cubic_generator_relation() {
    // [S, dGamma(e)] + C_N = 0 entrywise on the block where the
    // particle cutoff is inert (the whole basis, since M <= N here)
    let config = standard_config(1.0, vec![12], 8);
    let n = 12usize;
    let bog = BogoliubovData::coefficients(&config.potential).unwrap();
    let basis = SectorBasis::excitation_zero_momentum(config.mode_set.clone(), 8);
    let s = OperatorRecipe::cubic_generator(&bog, &config.potential, n)
        .assemble(&basis)
        .unwrap()
        .to_dense();
    let dg = OperatorRecipe::dispersion_diagonal(&bog)
        .assemble(&basis)
        .unwrap()
        .to_dense();
    let c = OperatorRecipe::cubic_term(&bog, &config.potential, n)
        .assemble(&basis)
        .unwrap()
        .to_dense();
    let residual = (&s * &dg - &dg * &s + c).abs().max();
    assert!(residual <= 1e-10, "commutator residual {residual}");
    pass(
        5,
        "cubic generator relation",
        format!("max |[S, dGamma(e)] + C| = {residual:.2e}"),
    );
}

#[test]
fn criterion_06_energy_ladder() {
    let rows = standard_scan();
    let top = top_half(rows);
    let fit = fit_rows(top, |r| (r.e_exact - r.e_level1).abs()).unwrap();
    assert!(
        fit.exponent <= -0.8,
        "level-1 residual exponent {} too shallow",
        fit.exponent
    );
    for row in top {
        let l1 = (row.e_exact - row.e_level1).abs();
        let l2 = (row.e_exact - row.e_level2).abs();
        assert!(
            l2 <= l1,
            "level 2 must not lose to level 1 at N = {}",
            row.n_particles
        );
    }
    pass(
        6,
        "energy ladder",
        format!("level-1 exponent = {:.3} (<= -0.8), level-2 tighter on the top half", fit.exponent),
    );
}

#[test]
fn criterion_07_refined_smallness() {
    let rows = standard_scan();
    let top = top_half(rows);
    let phi = fit_rows(top, |r| r.phi_number).unwrap();
    let gap = fit_rows(top, |r| r.norm_gap).unwrap();
    assert!(phi.exponent <= -1.0, "phi_number exponent {}", phi.exponent);
    assert!(gap.exponent <= -1.0, "norm_gap exponent {}", gap.exponent);
    pass(
        7,
        "refined smallness",
        format!(
            "phi_number exponent = {:.3}, norm_gap exponent = {:.3} (both <= -1.0)",
            phi.exponent, gap.exponent
        ),
    );
}

#[test]
fn criterion_08_density_matrix_convergence() {
    let rows = standard_scan();
    let top = top_half(rows);
    for pair in top.windows(2) {
        assert!(
            pair[1].dm_trace_dist < pair[0].dm_trace_dist,
            "trace distance must decrease on the top half"
        );
    }
    let last = rows.last().unwrap();
    let rel = (last.depletion_exact - last.depletion_pred).abs() / last.depletion_pred;
    assert!(rel <= 0.15, "final depletion gap {rel}");
    pass(
        8,
        "density-matrix convergence",
        format!(
            "trace distance decreasing, final depletion gap = {:.1}%",
            rel * 100.0
        ),
    );
}

#[test]
fn criterion_09_momentum_selection_rule() {
    let rows = standard_scan();
    let worst = rows
        .iter()
        .map(|r| r.dm_off_diag_max)
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-12, "off-diagonal entry {worst}");
    pass(
        9,
        "momentum selection rule",
        format!("max off-diagonal = {worst:.2e}"),
    );
}

#[test]
fn criterion_10_interaction_energy_floor() {
    let mode_set = Arc::new(ModeSet::build(1, 1).unwrap());
    let w = Potential::from_pairs(mode_set, &[(vec![0], 1.0), (vec![1], 1.0)]).unwrap();
    let report = onsager_check(&w, 5, 10_000, 42).unwrap();
    assert!(
        report.min_slack >= -1e-9,
        "minimum slack {}",
        report.min_slack
    );
    assert_eq!(report.violations, 0);
    pass(
        10,
        "interaction-energy floor",
        format!("min slack over 10^4 samples = {:.3e}", report.min_slack),
    );
}

#[test]
fn criterion_11_moment_boundedness() {
    let rows = standard_scan();
    let report = moment_boundedness(rows, 4).unwrap();
    assert!(
        report.worst_ratio <= 3.0,
        "moment ratio {}",
        report.worst_ratio
    );
    pass(
        11,
        "moment boundedness",
        format!("worst max/min ratio = {:.3} (<= 3)", report.worst_ratio),
    );
}

#[test]
fn criterion_12_scan_determinism() {
    // library level: identical rows from repeated runs
    let config = standard_config(1.0, vec![6, 8, 10], 8);
    let a = scan_csv(&run_scan(&config).unwrap().rows);
    let b = scan_csv(&run_scan(&config).unwrap().rows);
    assert_eq!(a, b);

    // binary level: byte-identical files from two process invocations
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        r#"
dimension = 1
n_max = 2
w_hat = [[[0], 1.0], [[1], 1.0], [[2], 1.0]]
N = [6, 8, 10]
excitation_cutoff = 8
eigensolver_tol = 1e-10
expm_tol = 1e-12
rng_seed = 42
"#,
    )
    .unwrap();
    let mut outputs: Vec<Vec<u8>> = Vec::new();
    for (sub, workers) in [("one", "1"), ("two", "3")] {
        let out = dir.path().join(sub);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_bosegas"))
            .args([
                "scan",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--workers",
                workers,
            ])
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "scan failed: {status:?}");
        outputs.push(std::fs::read(out.join("scan.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], a.as_bytes());
    pass(
        12,
        "scan determinism",
        format!("byte-identical CSV across runs and worker counts ({} bytes)", a.len()),
    );
}

#[test]
fn scan_tail_weights_stay_gated() {
    // supporting check: the excitation-cutoff tail of every scan point
    // is far below the gate
    let rows = standard_scan();
    let worst = rows.iter().map(|r| r.tail_weight).fold(0.0f64, f64::max);
    assert!(worst <= 1e-10, "tail weight {worst}");
}
