//! Command-line front end for the discrete div-div complexes: identity
//! suites, degree-of-freedom accounting, stability constants, convergence
//! studies, and a mixed plate solve.
//!
//! Exit codes: 0 when every executed check passes, 1 when at least one
//! check fails, 2 on usage or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use divdiv::mesh::{family_mesh, MeshFile, DEFAULT_THETA};
use divdiv::verify::{
    self, convergence_study, dof_report, estimate_poincare, hybrid_poincare_korn,
    plate_study, polynomial_zero_checks, run_cohomology_suite, run_identity_suite, Check,
    HybridCase, PoincareCase, Report, StabilitySweep, SuiteMode, DEFAULT_DRAWS,
    DEFAULT_SUP_DRAWS,
};
use divdiv::Mesh;

#[derive(Parser)]
#[command(
    name = "divdiv",
    version,
    about = "Discrete div-div complexes on polygonal meshes: verification suites and studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the algebraic identity, cohomology, and counting suites.
    Check(CheckArgs),
    /// Degree-of-freedom accounting for the serendipity reduction.
    Dof(DofArgs),
    /// Poincaré and hybrid Poincaré-Korn constants across refinements.
    Poincare(PoincareArgs),
    /// Consistency-functional convergence rates on a refinement sequence.
    Converge(ConvergeArgs),
    /// Mixed plate solves with manufactured-solution errors.
    Plate(PlateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Polynomial degree of the complex.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Serendipity edge-selection angle threshold.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Seed for all random draws.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the report here as JSON (a CSV twin is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size of the worker thread pool (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct MeshSource {
    /// Path to a JSON mesh file (object with `vertices` and `cells`).
    #[arg(long, conflicts_with = "family")]
    mesh: Option<PathBuf>,
    /// Built-in mesh family: tri | square | hex.
    #[arg(long, default_value = "square")]
    family: String,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    source: MeshSource,
    /// Number of refinement levels to run the suites on.
    #[arg(long, default_value_t = 1)]
    levels: usize,
    /// Random degree-of-freedom draws per identity.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    /// Override the acceptance threshold of residual-type checks.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct DofArgs {
    /// Cell shape: tri | square | hex.
    #[arg(long, default_value = "square")]
    shape: String,
    /// Polynomial degree of the complex.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Serendipity edge-selection angle threshold.
    #[arg(long, default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Write the accounting row here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoincareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    source: MeshSource,
    /// Number of refinement levels in the stability sweep.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Maximal admissible relative variation across the sweep.
    #[arg(long, default_value_t = 0.25)]
    tol: f64,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in mesh family: tri | square | hex.
    #[arg(long, default_value = "square")]
    family: String,
    /// Number of refinement levels (level i uses 2^(i+1) divisions).
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Random test fields per sampled dual-norm lower bound.
    #[arg(long, default_value_t = DEFAULT_SUP_DRAWS)]
    draws: usize,
}

#[derive(Args)]
struct PlateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Built-in mesh family: tri | square | hex.
    #[arg(long, default_value = "square")]
    family: String,
    /// Number of refinement levels (level i uses 2^i divisions).
    #[arg(long, default_value_t = 3)]
    levels: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Dof(args) => cmd_dof(args),
        Command::Poincare(args) => cmd_poincare(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Plate(args) => cmd_plate(args),
    }
}

fn validate_k(k: usize) -> anyhow::Result<()> {
    anyhow::ensure!(
        k >= 3,
        "the polynomial degree k must be at least 3 (the discrete div-div complexes \
         are defined only for k >= 3); got k = {k}"
    );
    Ok(())
}

fn init_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers {
        anyhow::ensure!(n >= 1, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("worker pool: {e}"))?;
    }
    Ok(())
}

/// Meshes for `levels` refinement levels: either the single mesh from
/// `--mesh` or a doubling family sequence starting at `base` divisions.
fn mesh_sequence(
    source: &MeshSource,
    levels: usize,
    base: usize,
) -> anyhow::Result<(String, Vec<Mesh>)> {
    anyhow::ensure!(levels >= 1, "--levels must be at least 1");
    if let Some(path) = &source.mesh {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        let mesh = MeshFile::from_json(&text)
            .and_then(MeshFile::into_mesh)
            .map_err(|e| anyhow::anyhow!("mesh file {}: {e}", path.display()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mesh".to_string());
        return Ok((name, vec![mesh]));
    }
    let meshes = (0..levels)
        .map(|i| {
            family_mesh(&source.family, base << i).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown mesh family `{}` (built-ins: tri, square, hex)",
                    source.family
                )
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok((source.family.clone(), meshes))
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!(
            "[{}] {} [{}]: {:.3e} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.anchor,
            c.value,
            c.criterion
        );
    }
}

fn summarize(checks: &[Check]) -> bool {
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        println!("all {} checks passed", checks.len());
        true
    } else {
        println!("{failed} of {} checks FAILED", checks.len());
        false
    }
}

fn write_report(report: &Report, out: &Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(path) = out {
        report.write_json(path)?;
        report.write_csv(&csv_twin(path))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn csv_twin(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

fn cmd_check(args: CheckArgs) -> anyhow::Result<bool> {
    validate_k(args.common.k)?;
    init_workers(args.common.workers)?;
    let (family, meshes) = mesh_sequence(&args.source, args.levels, 2)?;
    let mut report = Report::new("check", &family, args.common.k, args.common.theta, args.common.seed);
    for (level, mesh) in meshes.iter().enumerate() {
        println!(
            "level {level}: {} elements, h = {:.4}",
            mesh.elements.len(),
            mesh.mesh_size()
        );
        for mode in [SuiteMode::Full, SuiteMode::Serendipity, SuiteMode::Cross] {
            let sub = run_identity_suite(
                mesh,
                &family,
                args.common.k,
                mode,
                args.common.theta,
                args.common.seed,
                args.draws,
            );
            for mut c in sub.checks {
                c.name = format!("L{level}: {}", c.name);
                report.push(c);
            }
        }
        let coh = run_cohomology_suite(mesh, &family, args.common.k, args.common.theta);
        for mut c in coh.checks {
            c.name = format!("L{level}: {}", c.name);
            report.push(c);
        }
        for mut c in polynomial_zero_checks(mesh, args.common.k) {
            c.name = format!("L{level}: {}", c.name);
            report.push(c);
        }
    }
    if let Some(tol) = args.tol {
        for c in &mut report.checks {
            if c.criterion.starts_with("<=") {
                c.criterion = format!("<= {tol:.1e}");
                c.pass = c.value.is_finite() && c.value <= tol;
            }
        }
    }
    print_checks(&report.checks);
    write_report(&report, &args.common.out)?;
    Ok(summarize(&report.checks))
}

fn cmd_dof(args: DofArgs) -> anyhow::Result<bool> {
    validate_k(args.k)?;
    let row = dof_report(&args.shape, args.k, args.theta).ok_or_else(|| {
        anyhow::anyhow!("unknown cell shape `{}` (built-ins: tri, square, hex)", args.shape)
    })?;
    println!("{}, k = {}: {} (per cell)", row.shape, row.k, row.headline());
    println!(
        "assembled family mesh: {} → {}, {:.1}%",
        row.global_full, row.global_reduced, row.global_gain_percent
    );
    if let Some(path) = &args.out {
        verify::write_atomic(path, &serde_json::to_string_pretty(&row)?)?;
        println!("report written to {}", path.display());
    }
    Ok(true)
}

fn cmd_poincare(args: PoincareArgs) -> anyhow::Result<bool> {
    validate_k(args.common.k)?;
    init_workers(args.common.workers)?;
    if args.source.mesh.is_some() {
        // Single mesh: report the constants and their certificates.
        let (name, meshes) = mesh_sequence(&args.source, 1, 3)?;
        let mesh = &meshes[0];
        let mut checks = Vec::new();
        for case_ in [PoincareCase::SymCurlV, PoincareCase::DivDivSigma] {
            let est = estimate_poincare(mesh, args.common.k, case_);
            let (anchor, cert_name) = match case_ {
                PoincareCase::SymCurlV => ("poincare.V", "kernel dimension certificate"),
                PoincareCase::DivDivSigma => ("poincare.Sigma", "surjectivity margin"),
            };
            println!(
                "{name}: {anchor} constant {:.4} (eigenvalue {:.4e}, subspace {})",
                est.constant, est.eigenvalue, est.subspace_dim
            );
            checks.push(Check::at_least(
                &format!("{anchor} eigenvalue is positive"),
                anchor,
                est.eigenvalue,
                f64::MIN_POSITIVE,
            ));
            checks.push(Check::at_least(cert_name, anchor, est.certificate, match case_ {
                PoincareCase::SymCurlV => 3.0,
                PoincareCase::DivDivSigma => f64::MIN_POSITIVE,
            }));
        }
        for case_ in [HybridCase::Grad, HybridCase::SymCurl, HybridCase::SymGrad] {
            let est = hybrid_poincare_korn(mesh, args.common.k, case_);
            println!(
                "{name}: {} constant {:.4} (eigenvalue {:.4e})",
                case_.anchor(),
                est.constant,
                est.eigenvalue
            );
            checks.push(Check::at_least(
                &format!("{} eigenvalue is positive", case_.anchor()),
                case_.anchor(),
                est.eigenvalue,
                f64::MIN_POSITIVE,
            ));
        }
        print_checks(&checks);
        let mut report = Report::new("poincare", &name, args.common.k, args.common.theta, args.common.seed);
        report.checks = checks;
        write_report(&report, &args.common.out)?;
        return Ok(summarize(&report.checks));
    }

    anyhow::ensure!(args.levels >= 1, "--levels must be at least 1");
    let divisions: Vec<usize> = (0..args.levels).map(|i| 3 << i).collect();
    family_mesh(&args.source.family, divisions[0]).ok_or_else(|| {
        anyhow::anyhow!(
            "unknown mesh family `{}` (built-ins: tri, square, hex)",
            args.source.family
        )
    })?;
    let sweep = divdiv::verify::stability_sweep(
        &args.source.family,
        args.common.k,
        args.common.theta,
        &divisions,
    );
    print_sweep(&sweep);
    let checks = sweep.checks(args.tol);
    print_checks(&checks);
    if let Some(path) = &args.common.out {
        verify::write_atomic(path, &sweep.to_json())?;
        verify::write_atomic(&csv_twin(path), &sweep.to_csv())?;
        println!("report written to {}", path.display());
    }
    Ok(summarize(&checks))
}

fn print_sweep(sweep: &StabilitySweep) {
    println!(
        "family {}, k = {}, divisions {:?}:",
        sweep.family, sweep.k, sweep.divisions
    );
    for row in &sweep.series {
        let vals: Vec<String> = row.values.iter().map(|v| format!("{v:.4e}")).collect();
        println!(
            "  {} [{}]: {} (variation {:.3}, growth {:.3})",
            row.name,
            row.anchor,
            vals.join(" "),
            row.variation,
            row.growth
        );
    }
}

fn cmd_converge(args: ConvergeArgs) -> anyhow::Result<bool> {
    validate_k(args.common.k)?;
    init_workers(args.common.workers)?;
    anyhow::ensure!(args.levels >= 1, "--levels must be at least 1");
    let divisions: Vec<usize> = (0..args.levels).map(|i| 4 << i).collect();
    family_mesh(&args.family, divisions[0]).ok_or_else(|| {
        anyhow::anyhow!("unknown mesh family `{}` (built-ins: tri, square, hex)", args.family)
    })?;
    let study = convergence_study(
        &args.family,
        args.common.k,
        &divisions,
        args.common.theta,
        args.common.seed,
        args.draws,
    );
    for row in &study.rows {
        println!("{} [{}]: slope {:+.3}", row.name, row.anchor, row.slope);
        for i in 0..row.h.len() {
            println!(
                "  h = {:.4}: dual norm {:.4e} (sampled lower bound {:.4e})",
                row.h[i], row.value[i], row.sampled[i]
            );
        }
    }
    let checks = study.rate_checks();
    print_checks(&checks);
    if let Some(path) = &args.common.out {
        verify::write_atomic(path, &study.to_json())?;
        verify::write_atomic(&csv_twin(path), &study.to_csv())?;
        println!("report written to {}", path.display());
    }
    Ok(summarize(&checks))
}

fn cmd_plate(args: PlateArgs) -> anyhow::Result<bool> {
    validate_k(args.common.k)?;
    init_workers(args.common.workers)?;
    anyhow::ensure!(args.levels >= 1, "--levels must be at least 1");
    let divisions: Vec<usize> = (0..args.levels).map(|i| 2 << i).collect();
    family_mesh(&args.family, divisions[0]).ok_or_else(|| {
        anyhow::anyhow!("unknown mesh family `{}` (built-ins: tri, square, hex)", args.family)
    })?;
    let (results, slope_sigma, slope_u) = plate_study(&args.family, args.common.k, &divisions);
    for r in &results {
        println!(
            "h = {:.4}: moment error {:.4e}, deflection error {:.4e}, residual {:.2e}",
            r.h, r.sigma_error, r.u_error, r.residual
        );
    }
    println!("slopes: moment {slope_sigma:+.3}, deflection {slope_u:+.3}");
    let max_residual = results.iter().map(|r| r.residual).fold(0.0, f64::max);
    let checks = vec![
        Check::below("plate saddle solves are accurate", "plate.residual", max_residual, 1e-9),
        Check::at_least("moment error converges", "plate.rate.sigma", slope_sigma, 1.0),
        Check::at_least("deflection error converges", "plate.rate.u", slope_u, 1.0),
    ];
    print_checks(&checks);
    if let Some(path) = &args.common.out {
        let payload = serde_json::json!({
            "family": args.family,
            "k": args.common.k,
            "divisions": divisions,
            "results": results,
            "slope_sigma": slope_sigma,
            "slope_u": slope_u,
        });
        verify::write_atomic(path, &serde_json::to_string_pretty(&payload)?)?;
        println!("report written to {}", path.display());
    }
    Ok(summarize(&checks))
}
