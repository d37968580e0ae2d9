//! Command-line entry point: `predict`, `exact`, `scan`, `fit`,
//! `compare` and `selftest`, all file-based and deterministic. Every
//! output file is accompanied by a JSON manifest echoing the resolved
//! configuration, the tool version and the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bogoliubov::BogoliubovData;
use crate::error::{Error, Result};
use crate::experiments::{
    self, column_pairs, fit_power_law, moment_boundedness, parse_csv, run_scan, scan_csv, ScanRow,
};
use crate::fock::{
    ExcitationMap, Factor, Monomial, NumberWeight, OperatorBuilder, SectorBasis,
};
use crate::model::{ModelConfig, RawConfig};
use crate::operators::{onsager_check, unitary_from_generator, vacuum_expectation, OperatorRecipe};
use crate::solver::{ground_state, one_body_density_matrix};

/// Exit codes of the binary.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const ASSERTION: i32 = 4;
}

#[derive(Parser)]
#[command(
    name = "bosegas",
    version,
    about = "Bogoliubov theory with cubic corrections, checked against exact diagonalization"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for output files; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mirror every table as JSON.
    #[arg(long)]
    json: bool,
    /// Worker threads for scan execution (default: all cores, or the
    /// BOSEGAS_WORKERS environment variable).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    /// Scan CSV to fit.
    #[arg(long)]
    csv: PathBuf,
    /// Column name, or `colA-colB` for an absolute difference.
    #[arg(long)]
    column: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Use only the top half of the rows (largest N).
    #[arg(long)]
    top_half: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form theory table: per-mode coefficients plus the energy
    /// constant, depletion and density-matrix weights.
    Predict(CommonArgs),
    /// Exact diagonalization at the first configured N.
    Exact(CommonArgs),
    /// Full N-scan: exact energies against the prediction ladder.
    Scan(CommonArgs),
    /// Power-law fit of one scan column against N.
    Fit(FitArgs),
    /// Exact versus predicted observables for every configured N.
    Compare(CommonArgs),
    /// Internal identity checks; nonzero exit on any failure.
    Selftest(CommonArgs),
}

/// Parse arguments and run. Returns the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage message; its exit code for bad
            // usage matches the config-error contract
            let _ = e.print();
            return if e.use_stderr() {
                exit_code::CONFIG
            } else {
                exit_code::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::SolverConvergence { .. }
        | Error::Expm(_)
        | Error::NotAntiHermitian { .. }
        | Error::TruncationTail { .. } => exit_code::SOLVER,
        _ => exit_code::CONFIG,
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Predict(args) => cmd_predict(&args),
        Command::Exact(args) => cmd_exact(&args),
        Command::Scan(args) => cmd_scan(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Selftest(args) => cmd_selftest(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<ModelConfig> {
    let mut config = ModelConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    Ok(config)
}

fn worker_count(args: &CommonArgs) -> Option<usize> {
    args.workers.or_else(|| {
        std::env::var("BOSEGAS_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_path: String,
    resolved_config: RawConfig,
    seed: u64,
    workers: Option<usize>,
    timestamp_unix: u64,
    outputs: Vec<String>,
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    args: &CommonArgs,
    config: &ModelConfig,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = RunManifest {
        tool: "bosegas",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_path: args.config.display().to_string(),
        resolved_config: RawConfig::from(config),
        seed: config.rng_seed,
        workers: worker_count(args),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = out_dir.join(format!("{command}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_output(
    out: &Option<PathBuf>,
    name: &str,
    content: &str,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, content.as_bytes())?;
        written.push(path);
    }
    Ok(())
}

fn mode_label(config: &ModelConfig, i: usize) -> String {
    config
        .mode_set
        .label(i)
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

fn fmt(v: f64) -> String {
    experiments::format_float(v)
}

// ---------------------------------------------------------------- predict

fn cmd_predict(args: &CommonArgs) -> Result<i32> {
    let config = load_config(args)?;
    let bog = BogoliubovData::coefficients(&config.potential)?;
    let n = config.n_particles();
    let prediction = bog.predicted_density_matrix(n);
    if !prediction.regime_valid {
        eprintln!(
            "warning: predicted depletion {} reaches N = {n}; the expansion is not meaningful here",
            bog.depletion()
        );
    }

    let mut csv = String::from("mode,p_squared,w_hat,alpha,beta,sigma,gamma,e_p,dm_weight\n");
    for i in 0..config.mode_set.len() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            mode_label(&config, i),
            fmt(config.mode_set.p_squared(i)),
            fmt(config.potential.w_hat(i)),
            fmt(bog.alpha(i)),
            fmt(bog.beta(i)),
            fmt(bog.sigma(i)),
            fmt(bog.gamma(i)),
            fmt(bog.dispersion(i)),
            fmt(prediction.weights[i]),
        ));
    }
    csv.push_str(&format!("E_Bog,{},,,,,,,\n", fmt(bog.e_bog())));
    csv.push_str(&format!("depletion,{},,,,,,,\n", fmt(bog.depletion())));
    csv.push_str(&format!(
        "kernel_l1,{},,,,,,,\n",
        fmt(bog.kernel_l1_norm(&config.potential))
    ));

    let mut text = String::new();
    text.push_str(&format!(
        "closed-form theory, {} modes, N = {n}\n",
        config.mode_set.len()
    ));
    text.push_str(&format!("E_Bog          = {}\n", fmt(bog.e_bog())));
    text.push_str(&format!("depletion      = {}\n", fmt(bog.depletion())));
    text.push_str(&format!(
        "kernel l1 norm = {}\n",
        fmt(bog.kernel_l1_norm(&config.potential))
    ));
    text.push_str(&format!("sup sigma      = {}\n", fmt(bog.sigma_sup())));
    text.push_str(&format!("sum gamma      = {}\n", fmt(bog.gamma_sum())));
    print!("{text}");

    let mut written = Vec::new();
    write_output(&args.out, "predict.csv", &csv, &mut written)?;
    write_output(&args.out, "predict.txt", &text, &mut written)?;
    if args.json {
        let per_mode: Vec<serde_json::Value> = (0..config.mode_set.len())
            .map(|i| {
                serde_json::json!({
                    "mode": config.mode_set.label(i),
                    "p_squared": config.mode_set.p_squared(i),
                    "w_hat": config.potential.w_hat(i),
                    "alpha": bog.alpha(i),
                    "beta": bog.beta(i),
                    "sigma": bog.sigma(i),
                    "gamma": bog.gamma(i),
                    "e_p": bog.dispersion(i),
                    "dm_weight": prediction.weights[i],
                })
            })
            .collect();
        let json = serde_json::json!({
            "modes": per_mode,
            "e_bog": bog.e_bog(),
            "depletion": bog.depletion(),
            "kernel_l1_norm": bog.kernel_l1_norm(&config.potential),
            "regime_valid": prediction.regime_valid,
        });
        write_output(
            &args.out,
            "predict.json",
            &serde_json::to_string_pretty(&json)?,
            &mut written,
        )?;
    }
    if let Some(dir) = &args.out {
        write_manifest(dir, "predict", args, &config, &written)?;
    }
    Ok(exit_code::SUCCESS)
}

// ------------------------------------------------------------------ exact

fn cmd_exact(args: &CommonArgs) -> Result<i32> {
    let config = load_config(args)?;
    let n = config.n_particles();
    let row = experiments::scan_point(&config, n)?;
    let canonical = SectorBasis::canonical_zero_momentum(config.mode_set.clone(), n);
    let h = OperatorRecipe::hamiltonian(&config.potential, n)?.assemble(&canonical)?;
    let gs = ground_state(
        &h,
        config.eigensolver_tol,
        config.rng_seed,
        canonical.condensate_index().unwrap(),
    )?;
    let dm = one_body_density_matrix(&gs, &canonical)?;

    let mut pairs: Vec<(String, f64)> = vec![
        ("E_N".into(), row.e_exact),
        ("depletion".into(), row.depletion_exact),
        ("m1".into(), row.m1),
        ("m2".into(), row.m2),
        ("m3".into(), row.m3),
        ("m4".into(), row.m4),
    ];
    for (i, g) in dm.diagonal().iter().enumerate() {
        pairs.push((format!("gamma[{}]", mode_label(&config, i)), *g));
    }

    let mut csv = String::from("key,value\n");
    let mut text = format!("exact diagonalization, N = {n}, sector dimension {}\n", canonical.len());
    for (k, v) in &pairs {
        csv.push_str(&format!("{k},{}\n", fmt(*v)));
        text.push_str(&format!("{k:<12} = {}\n", fmt(*v)));
    }
    print!("{text}");

    let mut written = Vec::new();
    write_output(&args.out, "exact.csv", &csv, &mut written)?;
    write_output(&args.out, "exact.txt", &text, &mut written)?;
    if args.json {
        let map: BTreeMap<String, f64> = pairs.into_iter().collect();
        write_output(
            &args.out,
            "exact.json",
            &serde_json::to_string_pretty(&map)?,
            &mut written,
        )?;
    }
    if let Some(dir) = &args.out {
        write_manifest(dir, "exact", args, &config, &written)?;
    }
    Ok(exit_code::SUCCESS)
}

// ------------------------------------------------------------------- scan

fn with_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

type RowValue = Box<dyn Fn(&ScanRow) -> f64>;

fn scan_summary(rows: &[ScanRow]) -> String {
    let mut text = String::new();
    text.push_str(&format!("scan over {} particle numbers\n", rows.len()));
    let top = experiments::top_half(rows);
    let fits: [(&str, RowValue); 4] = [
        ("|E - level1|", Box::new(|r: &ScanRow| (r.e_exact - r.e_level1).abs())),
        ("|E - level2|", Box::new(|r: &ScanRow| (r.e_exact - r.e_level2).abs())),
        ("phi_number", Box::new(|r: &ScanRow| r.phi_number)),
        ("norm_gap", Box::new(|r: &ScanRow| r.norm_gap)),
    ];
    for (name, f) in &fits {
        match experiments::fit_rows(top, f) {
            Ok(fit) => text.push_str(&format!(
                "{name:<14} top-half exponent {:+.4}  amplitude {:.4e}  R^2 {:.6}\n",
                fit.exponent, fit.amplitude, fit.r_squared
            )),
            Err(_) => text.push_str(&format!("{name:<14} not fittable (zero residuals?)\n")),
        }
    }
    if let Ok(report) = moment_boundedness(rows, 4) {
        text.push_str(&format!(
            "moment max/min ratios (s=1..4): {}\n",
            report
                .per_order
                .iter()
                .map(|(_, _, r)| format!("{r:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let last = rows.last().unwrap();
    text.push_str(&format!(
        "final N = {}: |E-l1| = {:.3e}, |E-l2| = {:.3e}, depletion gap = {:.3e}\n",
        last.n_particles,
        (last.e_exact - last.e_level1).abs(),
        (last.e_exact - last.e_level2).abs(),
        (last.depletion_exact - last.depletion_pred).abs()
    ));
    text
}

fn cmd_scan(args: &CommonArgs) -> Result<i32> {
    let config = load_config(args)?;
    let outcome = with_pool(worker_count(args), || run_scan(&config))??;
    for (n, e) in &outcome.failures {
        eprintln!("scan point N = {n} failed: {e}");
    }
    if outcome.rows.is_empty() {
        return Err(Error::SolverConvergence {
            iterations: 0,
            best_residual: f64::NAN,
            tol: config.eigensolver_tol,
        });
    }
    let csv = scan_csv(&outcome.rows);
    let summary = scan_summary(&outcome.rows);
    print!("{summary}");

    let mut written = Vec::new();
    write_output(&args.out, "scan.csv", &csv, &mut written)?;
    write_output(&args.out, "scan.txt", &summary, &mut written)?;
    if args.json {
        let rows: Vec<serde_json::Value> = outcome
            .rows
            .iter()
            .map(|r| {
                let mut map = serde_json::Map::new();
                map.insert("N".into(), serde_json::json!(r.n_particles));
                for (name, value) in experiments::SCAN_COLUMNS[1..]
                    .iter()
                    .zip(r.csv_values().iter())
                {
                    map.insert((*name).into(), serde_json::json!(value));
                }
                serde_json::Value::Object(map)
            })
            .collect();
        write_output(
            &args.out,
            "scan.json",
            &serde_json::to_string_pretty(&rows)?,
            &mut written,
        )?;
    }
    if let Some(dir) = &args.out {
        write_manifest(dir, "scan", args, &config, &written)?;
    }
    if outcome.is_complete() {
        Ok(exit_code::SUCCESS)
    } else {
        Ok(exit_code::SOLVER)
    }
}

// -------------------------------------------------------------------- fit

fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.csv.display())))?;
    let (header, rows) = parse_csv(&text)?;
    let mut pairs = column_pairs(&header, &rows, &args.column)?;
    if args.top_half {
        pairs = pairs.split_off(pairs.len() / 2);
    }
    let fit = fit_power_law(&pairs)?;
    let line = format!(
        "column {}: exponent {:+.6}, amplitude {:.6e}, R^2 {:.6} ({} points)\n",
        args.column,
        fit.exponent,
        fit.amplitude,
        fit.r_squared,
        fit.points.len()
    );
    print!("{line}");
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        std::fs::write(dir.join("fit.txt"), line.as_bytes())?;
        if args.json {
            let json = serde_json::json!({
                "column": args.column,
                "exponent": fit.exponent,
                "amplitude": fit.amplitude,
                "r_squared": fit.r_squared,
                "points": fit.points,
            });
            std::fs::write(
                dir.join("fit.json"),
                serde_json::to_string_pretty(&json)?.as_bytes(),
            )?;
        }
    }
    Ok(exit_code::SUCCESS)
}

// ---------------------------------------------------------------- compare

fn cmd_compare(args: &CommonArgs) -> Result<i32> {
    let config = load_config(args)?;
    let outcome = with_pool(worker_count(args), || run_scan(&config))??;
    for (n, e) in &outcome.failures {
        eprintln!("compare point N = {n} failed: {e}");
    }
    let mut csv = String::from(
        "N,E_exact,E_level0,E_level1,E_level2,abs_err_l1,abs_err_l2,depletion_exact,depletion_pred,dm_trace_dist\n",
    );
    let mut text = format!(
        "{:>4} {:>14} {:>12} {:>12} {:>12} {:>12}\n",
        "N", "E_exact", "|E-l0|", "|E-l1|", "|E-l2|", "dm_dist"
    );
    for r in &outcome.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n_particles,
            fmt(r.e_exact),
            fmt(r.e_level0),
            fmt(r.e_level1),
            fmt(r.e_level2),
            fmt((r.e_exact - r.e_level1).abs()),
            fmt((r.e_exact - r.e_level2).abs()),
            fmt(r.depletion_exact),
            fmt(r.depletion_pred),
            fmt(r.dm_trace_dist),
        ));
        text.push_str(&format!(
            "{:>4} {:>14.9} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}\n",
            r.n_particles,
            r.e_exact,
            (r.e_exact - r.e_level0).abs(),
            (r.e_exact - r.e_level1).abs(),
            (r.e_exact - r.e_level2).abs(),
            r.dm_trace_dist,
        ));
    }
    print!("{text}");
    let mut written = Vec::new();
    write_output(&args.out, "compare.csv", &csv, &mut written)?;
    write_output(&args.out, "compare.txt", &text, &mut written)?;
    if args.json {
        let rows: Vec<serde_json::Value> = outcome
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "N": r.n_particles,
                    "E_exact": r.e_exact,
                    "E_level0": r.e_level0,
                    "E_level1": r.e_level1,
                    "E_level2": r.e_level2,
                    "depletion_exact": r.depletion_exact,
                    "depletion_pred": r.depletion_pred,
                    "dm_trace_dist": r.dm_trace_dist,
                })
            })
            .collect();
        write_output(
            &args.out,
            "compare.json",
            &serde_json::to_string_pretty(&rows)?,
            &mut written,
        )?;
    }
    if let Some(dir) = &args.out {
        write_manifest(dir, "compare", args, &config, &written)?;
    }
    if outcome.is_complete() {
        Ok(exit_code::SUCCESS)
    } else {
        Ok(exit_code::SOLVER)
    }
}

// --------------------------------------------------------------- selftest

struct Check {
    name: &'static str,
    defect: f64,
    limit: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.defect <= self.limit
    }
}

fn cmd_selftest(args: &CommonArgs) -> Result<i32> {
    let config = load_config(args)?;
    let checks = run_selftest(&config)?;
    let mut all_ok = true;
    let mut text = String::new();
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        all_ok &= c.passed();
        text.push_str(&format!(
            "{status}  {:<44} defect {:>12.3e}  limit {:>9.1e}\n",
            c.name, c.defect, c.limit
        ));
    }
    print!("{text}");
    let mut written = Vec::new();
    write_output(&args.out, "selftest.txt", &text, &mut written)?;
    if let Some(dir) = &args.out {
        write_manifest(dir, "selftest", args, &config, &written)?;
    }
    Ok(if all_ok {
        exit_code::SUCCESS
    } else {
        exit_code::ASSERTION
    })
}

fn run_selftest(config: &ModelConfig) -> Result<Vec<Check>> {
    use rand::Rng;
    use rand::SeedableRng;

    let mut checks = Vec::new();
    let modes = &config.mode_set;
    let potential = &config.potential;

    // potential evenness at random torus points
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut defect = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..modes.dimension()).map(|_| rng.gen::<f64>()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        defect = defect.max((potential.evaluate_w(&x) - potential.evaluate_w(&neg)).abs());
    }
    checks.push(Check {
        name: "potential evenness w(x) = w(-x)",
        defect,
        limit: 1e-12,
    });
    checks.push(Check {
        name: "w(0) equals the coefficient sum",
        defect: (potential.evaluate_w(&vec![0.0; modes.dimension()]) - potential.l1_norm()).abs(),
        limit: 1e-12,
    });

    // closed-form identities
    let bog = BogoliubovData::coefficients(potential)?;
    let mut hyperbolic = 0.0f64;
    let mut angle = 0.0f64;
    let mut window = 0.0f64;
    for p in modes.nonzero_modes() {
        let s = bog.sigma(p);
        let g = bog.gamma(p);
        hyperbolic = hyperbolic.max((s * s - g * g - 1.0).abs());
        angle = angle.max(((2.0 * bog.beta(p)).tanh() - bog.alpha(p)).abs());
        let p2 = modes.p_squared(p);
        let e = bog.dispersion(p);
        window = window
            .max((p2 - e).max(0.0))
            .max((e - p2 - potential.w_hat(p)).max(0.0));
    }
    checks.push(Check {
        name: "hyperbolic identity sigma^2 - gamma^2 = 1",
        defect: hyperbolic,
        limit: 1e-12,
    });
    checks.push(Check {
        name: "mixing angle tanh(2 beta) = alpha",
        defect: angle,
        limit: 1e-12,
    });
    checks.push(Check {
        name: "dispersion window p^2 <= e_p <= p^2 + w",
        defect: window,
        limit: 1e-12,
    });
    let direct: f64 = modes
        .nonzero_modes()
        .map(|i| -0.5 * (modes.p_squared(i) + potential.w_hat(i) - bog.dispersion(i)))
        .sum();
    checks.push(Check {
        name: "energy constant: rationalized vs direct form",
        defect: (bog.e_bog() - direct).abs(),
        limit: 1e-12,
    });

    // CCR on a small momentum-unrestricted excitation space
    let ccr_basis = SectorBasis::excitation(modes.clone(), 4, None);
    let p = modes.nonzero_modes().next().expect("nonzero mode");
    let q = modes.negate(p);
    let mut ccr = 0.0f64;
    for (pp, qq) in [(p, p), (p, q)] {
        let mut builder = OperatorBuilder::new(&ccr_basis);
        builder.add(&Monomial::new(
            1.0,
            vec![Factor::Annihilate(pp), Factor::Create(qq)],
        ))?;
        builder.add(&Monomial::new(
            -1.0,
            vec![Factor::Create(qq), Factor::Annihilate(pp)],
        ))?;
        let commutator = builder.build();
        let delta = if pp == qq { 1.0 } else { 0.0 };
        for j in 0..ccr_basis.len() {
            if ccr_basis.particle_count(j) + 2 <= 4 {
                for i in 0..ccr_basis.len() {
                    let expected = if i == j { delta } else { 0.0 };
                    ccr = ccr.max((commutator.entry(i, j) - expected).abs());
                }
            }
        }
    }
    checks.push(Check {
        name: "canonical commutation relation with headroom",
        defect: ccr,
        limit: 1e-12,
    });

    // excitation-map conjugation identities on the full space, N = 3
    {
        let n = 3usize;
        let canonical = SectorBasis::canonical(modes.clone(), n, None);
        let excitation = SectorBasis::excitation(modes.clone(), n, None);
        let map = ExcitationMap::new(&canonical, &excitation)?;
        let mut defect = 0.0f64;

        let mono = Monomial::new(1.0, vec![Factor::Create(p), Factor::Annihilate(q)]);
        let mut b = OperatorBuilder::new(&canonical);
        b.add(&mono)?;
        let lhs = map.conjugate_forward(&b.build())?;
        let mut b2 = OperatorBuilder::new(&excitation);
        b2.add(&mono)?;
        defect = defect.max((lhs.to_dense() - b2.build().to_dense()).abs().max());

        let zero = modes.zero_index();
        let mono = Monomial::new(1.0, vec![Factor::Create(p), Factor::Annihilate(zero)]);
        let mut b = OperatorBuilder::new(&canonical);
        b.add(&mono)?;
        let lhs = map.conjugate_forward(&b.build())?;
        let nf = n as f64;
        let weight: NumberWeight = Arc::new(move |k| (nf - k as f64).max(0.0).sqrt());
        let mono = Monomial::new(1.0, vec![Factor::Create(p), Factor::Weight(weight)]);
        let mut b2 = OperatorBuilder::new(&excitation);
        b2.add(&mono)?;
        defect = defect.max((lhs.to_dense() - b2.build().to_dense()).abs().max());
        checks.push(Check {
            name: "excitation-map conjugation identities",
            defect,
            limit: 1e-12,
        });
    }

    // exact transport of the Hamiltonian at M = N
    {
        let n = config.n_particles().min(6);
        let canonical = SectorBasis::canonical_zero_momentum(modes.clone(), n);
        let excitation = SectorBasis::excitation_zero_momentum(modes.clone(), n);
        let map = ExcitationMap::new(&canonical, &excitation)?;
        let h = OperatorRecipe::hamiltonian(potential, n)?.assemble(&canonical)?;
        let transported = map.conjugate_forward(&h)?.to_dense();
        let substituted = OperatorRecipe::substituted_hamiltonian(potential, n)?
            .assemble(&excitation)?
            .to_dense();
        let constant = n as f64 / 2.0 * potential.w_hat(modes.zero_index());
        let dim = excitation.len();
        let diff = transported
            - substituted
            - nalgebra::DMatrix::identity(dim, dim) * constant;
        checks.push(Check {
            name: "exact zero-mode substitution at M = N",
            defect: diff.abs().max(),
            limit: 1e-10,
        });
    }

    // assembled-operator structure on the scan instance
    let n = config.n_particles();
    let excitation =
        SectorBasis::excitation_zero_momentum(modes.clone(), config.excitation_cutoff);
    let g = OperatorRecipe::excitation_hamiltonian(potential, n)?.assemble(&excitation)?;
    checks.push(Check {
        name: "expanded excitation Hamiltonian hermiticity",
        defect: g.hermiticity_defect(),
        limit: 1e-12,
    });
    let b_gen = OperatorRecipe::quadratic_generator(&bog).assemble(&excitation)?;
    let s_gen = OperatorRecipe::cubic_generator(&bog, potential, n).assemble(&excitation)?;
    checks.push(Check {
        name: "generator antisymmetry (quadratic and cubic)",
        defect: b_gen.antisymmetry_defect().max(s_gen.antisymmetry_defect()),
        limit: 1e-12,
    });
    let canonical_full = SectorBasis::canonical(modes.clone(), 3, None);
    let h_full = OperatorRecipe::hamiltonian(potential, 3)?.assemble(&canonical_full)?;
    checks.push(Check {
        name: "momentum conservation of assembled operators",
        defect: h_full.momentum_defect(&canonical_full),
        limit: 0.0,
    });

    // defining relation of the cubic generator where the cutoff is inert
    {
        let m_inert = config.excitation_cutoff.min(n);
        let basis = SectorBasis::excitation_zero_momentum(modes.clone(), m_inert);
        let s = OperatorRecipe::cubic_generator(&bog, potential, n)
            .assemble(&basis)?
            .to_dense();
        let dg = OperatorRecipe::dispersion_diagonal(&bog)
            .assemble(&basis)?
            .to_dense();
        let c = OperatorRecipe::cubic_term(&bog, potential, n)
            .assemble(&basis)?
            .to_dense();
        let residual = (&s * &dg - &dg * &s + c).abs().max();
        checks.push(Check {
            name: "cubic generator relation [S, dGamma(e)] + C = 0",
            defect: residual,
            limit: 1e-10,
        });
    }

    // quadratic rotation unitarity and vacuum energy
    {
        let u = unitary_from_generator(&b_gen, config.expm_tol)?;
        checks.push(Check {
            name: "quadratic rotation unitarity",
            defect: u.unitarity_defect()?,
            limit: 10.0 * config.expm_tol,
        });
        let hb = OperatorRecipe::bogoliubov_hamiltonian(potential).assemble(&excitation)?;
        checks.push(Check {
            name: "quadratic Hamiltonian vacuum diagonal",
            defect: vacuum_expectation(&hb, &excitation)?.abs(),
            limit: 0.0,
        });
    }

    // interaction-energy floor
    let report = onsager_check(potential, n.max(2), 10_000, config.rng_seed)?;
    checks.push(Check {
        name: "interaction-energy floor over 10^4 samples",
        defect: (-report.min_slack).max(0.0),
        limit: 1e-9,
    });

    // momentum selection rule of the one-body density matrix
    {
        let canonical = SectorBasis::canonical_zero_momentum(modes.clone(), n);
        let h = OperatorRecipe::hamiltonian(potential, n)?.assemble(&canonical)?;
        let gs = ground_state(
            &h,
            config.eigensolver_tol,
            config.rng_seed,
            canonical.condensate_index().unwrap(),
        )?;
        let dm = one_body_density_matrix(&gs, &canonical)?;
        checks.push(Check {
            name: "density-matrix momentum selection rule",
            defect: dm.off_diagonal_max(),
            limit: 1e-12,
        });
        checks.push(Check {
            name: "density-matrix trace = N",
            defect: (dm.trace() - n as f64).abs(),
            limit: 1e-10,
        });
        checks.push(Check {
            name: "variational bound E_N <= N w0/2",
            defect: (gs.energy - n as f64 / 2.0 * potential.w_hat(modes.zero_index()))
                .max(0.0),
            limit: 1e-9,
        });
    }

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("cfg.toml");
        std::fs::write(
            &path,
            r#"
dimension = 1
n_max = 1
w_hat = [[[0], 1.0], [[1], 1.0]]
N = [4, 6, 8]
excitation_cutoff = 6
eigensolver_tol = 1e-10
expm_tol = 1e-12
rng_seed = 7
"#,
        )
        .unwrap();
        path
    }

    #[test]
    fn selftest_passes_on_small_instance() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path());
        let code = dispatch([
            "bosegas",
            "selftest",
            "--config",
            cfg.to_str().unwrap(),
        ]);
        assert_eq!(code, exit_code::SUCCESS);
    }

    #[test]
    fn unknown_subcommand_is_config_error() {
        let code = dispatch(["bosegas", "frobnicate"]);
        assert_eq!(code, exit_code::CONFIG);
    }

    #[test]
    fn missing_config_is_config_error() {
        let code = dispatch(["bosegas", "predict", "--config", "/nonexistent.toml"]);
        assert_eq!(code, exit_code::CONFIG);
    }

    #[test]
    fn scan_writes_deterministic_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path());
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        for out in [&out1, &out2] {
            let code = dispatch([
                "bosegas",
                "scan",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--workers",
                "2",
            ]);
            assert_eq!(code, exit_code::SUCCESS);
        }
        let a = std::fs::read(out1.join("scan.csv")).unwrap();
        let b = std::fs::read(out2.join("scan.csv")).unwrap();
        assert_eq!(a, b);
        assert!(out1.join("scan.manifest.json").exists());
    }

    #[test]
    fn fit_subcommand_reads_scan_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path());
        let out = dir.path().join("scan");
        assert_eq!(
            dispatch([
                "bosegas",
                "scan",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]),
            exit_code::SUCCESS
        );
        let csv = out.join("scan.csv");
        let code = dispatch([
            "bosegas",
            "fit",
            "--csv",
            csv.to_str().unwrap(),
            "--column",
            "E_exact-E_level1",
        ]);
        assert_eq!(code, exit_code::SUCCESS);
    }
}
