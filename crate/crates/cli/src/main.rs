//! `interfms`: design, verify and simulate interferometric mass sorters.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible or invalid
//! design.

mod manifest;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use interfms::constants::ELEMENTARY_CHARGE;
use interfms::error_model::{self, LinearRange};
use interfms::sorter::{self, MmiGeometry, SolveOptions, SorterDesign, Species, SpeciesInput};
use interfms::spectrometry::{self, ExperimentConfig};
use interfms::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::manifest::RunManifest;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "interfms",
    version,
    about = "Interferometric mass spectrometry: sorter design and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the perfect-sorting conditions for a species list.
    ///
    /// Writes the design (path lengths in m, integer windings) as JSON and
    /// prints a summary. Exits 2 if no design exists within the bounds; the
    /// residual report is still written.
    Design(DesignArgs),
    /// Check a design file: phase residuals per species and arm (rad).
    Verify(VerifyArgs),
    /// Grid sweep of the leakage matrix over phase errors on arms 1 and 2 (rad).
    Sweep(SweepArgs),
    /// Monte-Carlo sorting fidelity under Gaussian arm-length noise (m).
    Montecarlo(MonteCarloArgs),
    /// End-to-end counting experiment and spectrum reconstruction.
    Simulate(SimulateArgs),
    /// Compare magnetic-sector (AMS) separation with interferometric sorting.
    AmsCompare(AmsArgs),
}

#[derive(Args, Debug, Serialize)]
struct DesignArgs {
    /// JSON array of {"name", "mass_kg"} or {"name", "mass_u"} (kg or unified atomic mass units).
    species_file: PathBuf,
    /// Common particle velocity in m/s.
    #[arg(long)]
    velocity: f64,
    /// Largest allowed |winding| n_{k,s} (dimensionless integer).
    #[arg(long, default_value_t = sorter::DEFAULT_MAX_WINDING)]
    max_winding: u64,
    /// Denominator bound for rationalizing mass ratios m_k/m_0.
    #[arg(long, default_value_t = sorter::DEFAULT_DENOM_BOUND)]
    denom_bound: u64,
    /// Phase tolerance in rad for accepting a design.
    #[arg(long, default_value_t = sorter::DEFAULT_PHASE_TOL)]
    phase_tol: f64,
    /// MMI coupler width in m; adds the coupler length D_N = 4W²/(λ_0 N) in m.
    #[arg(long)]
    mmi_width: Option<f64>,
    /// Output JSON path (design, or residual report if infeasible).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// Design JSON as written by `design` (lengths in m, velocity in m/s, masses in kg).
    design_file: PathBuf,
    /// Phase tolerance in rad.
    #[arg(long, default_value_t = sorter::DEFAULT_PHASE_TOL)]
    phase_tol: f64,
    /// Output JSON path for the residual table (rad).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Number of paths/species (>= 3).
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Mass ratios m_k/m_0, comma-separated (dimensionless, first is 1). Defaults to all 1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ratios: Option<Vec<f64>>,
    /// Range of δ1 in rad as "start,end".
    #[arg(long, allow_hyphen_values = true, default_value = "0,0")]
    delta1_range: String,
    /// Range of δ2 in rad as "start,end".
    #[arg(long, allow_hyphen_values = true, default_value = "0,0")]
    delta2_range: String,
    /// Grid points per axis (both ends included).
    #[arg(long, default_value_t = 101)]
    steps: usize,
    /// Emit every p_{ks} column instead of p00 only.
    #[arg(long)]
    all_columns: bool,
    /// Output CSV path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MonteCarloArgs {
    /// Design JSON as written by `design`.
    design_file: PathBuf,
    /// Standard deviation of each arm-length error in m.
    #[arg(long)]
    sigma_l: f64,
    /// Number of noisy realisations.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Experiment config JSON: {species, velocity_mps (m/s), abundances, total_particles,
    /// seed, errors: {delta_phi_rad: [rad...]} | {sigma_L_m: m}}.
    config_file: PathBuf,
    /// Output results JSON path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AmsArgs {
    /// Species list JSON (mass_kg in kg or mass_u in u); species 0 is the reference.
    species_file: PathBuf,
    /// Ion velocity in the magnetic sector, m/s.
    #[arg(long, default_value_t = 1e5)]
    ams_velocity: f64,
    /// Magnetic field in T.
    #[arg(long, default_value_t = 1.0)]
    field: f64,
    /// Ion charge in units of the elementary charge (all species).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    charge: f64,
    /// Particle velocity for the interferometer, m/s.
    #[arg(long, default_value_t = 1.0)]
    interf_velocity: f64,
    /// Output JSON path (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::from(EXIT_OK)
            };
        }
    };
    let result = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::AmsCompare(a) => cmd_ams_compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_species(path: &Path) -> Result<(Vec<SpeciesInput>, Vec<Species>)> {
    let entries: Vec<SpeciesInput> = read_json(path)?;
    let species = entries
        .iter()
        .map(SpeciesInput::to_species)
        .collect::<interfms::Result<Vec<_>>>()?;
    Ok((entries, species))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn params<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn finish_manifest(
    manifest: RunManifest,
    out: Option<&Path>,
    start: Instant,
    code: u8,
) -> Result<()> {
    if let Some(p) = out {
        manifest.finish(p, start.elapsed(), code.into())?;
    }
    Ok(())
}

/// Formats a length with an SI prefix.
fn si_length(m: f64) -> String {
    let a = m.abs();
    let (scale, unit) = if a == 0.0 {
        (1.0, "m")
    } else if a < 1e-9 {
        (1e12, "pm")
    } else if a < 1e-6 {
        (1e9, "nm")
    } else if a < 1e-3 {
        (1e6, "µm")
    } else if a < 1.0 {
        (1e3, "mm")
    } else {
        (1.0, "m")
    };
    format!("{:.4} {unit}", m * scale)
}

fn cmd_design(args: DesignArgs) -> Result<u8> {
    let start = Instant::now();
    let (entries, species) = read_species(&args.species_file)?;
    let opts = SolveOptions {
        max_winding: args.max_winding,
        denom_bound: args.denom_bound,
        phase_tol: args.phase_tol,
    };
    let manifest = RunManifest::new("design", params(&args), json!({ "species": entries }), None);

    match sorter::solve_n_path(&species, args.velocity, opts) {
        Ok(mut design) => {
            let lambdas = design.wavelengths()?;
            if let Some(w) = args.mmi_width {
                design.coupler = Some(MmiGeometry::new(w, lambdas[0], design.n)?);
            }
            let check = sorter::verify_design(&design, args.phase_tol)?;
            print_design_summary(&design, &lambdas, check.max_abs);
            if let Some(out) = args.out.as_deref() {
                write_json(&design, Some(out))?;
            }
            finish_manifest(manifest, args.out.as_deref(), start, EXIT_OK)?;
            Ok(EXIT_OK)
        }
        Err(Error::Infeasible { residuals }) => {
            println!(
                "no design for {} species at v = {} m/s within the bounds",
                species.len(),
                args.velocity
            );
            println!(
                "{:>5}  {:>18}  {:>14}",
                "arm", "min residual (cyc)", "best ΔL"
            );
            for r in &residuals {
                println!(
                    "{:>5}  {:>18.6e}  {:>14}",
                    r.path,
                    r.min_residual_cycles,
                    si_length(r.best_delta_l)
                );
            }
            let report = json!({ "feasible": false, "reason": "no path length within bounds", "residuals": residuals });
            write_report(&report, args.out.as_deref())?;
            finish_manifest(manifest, args.out.as_deref(), start, EXIT_INFEASIBLE)?;
            Ok(EXIT_INFEASIBLE)
        }
        Err(e @ Error::NonCommensurableMasses { .. }) => {
            println!("no design: {e}");
            let report = json!({ "feasible": false, "reason": e.to_string(), "residuals": [] });
            write_report(&report, args.out.as_deref())?;
            finish_manifest(manifest, args.out.as_deref(), start, EXIT_INFEASIBLE)?;
            Ok(EXIT_INFEASIBLE)
        }
        Err(e) => Err(e.into()),
    }
}

fn write_report(report: &Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(report, Some(p)),
        None => Ok(()),
    }
}

fn print_design_summary(design: &SorterDesign, lambdas: &[f64], max_residual: f64) {
    println!(
        "sorter for {} species at v = {} m/s",
        design.n, design.velocity_mps
    );
    println!(
        "{:>3}  {:<12} {:>14}  {:>14}",
        "k", "species", "mass (kg)", "λ"
    );
    for (k, (sp, l)) in design.species.iter().zip(lambdas).enumerate() {
        println!(
            "{k:>3}  {:<12} {:>14.6e}  {:>14}",
            sp.name,
            sp.mass_kg,
            si_length(*l)
        );
    }
    println!();
    println!(
        "{:>3}  {:>14}  {:>16}  windings n_(k,s)",
        "s", "ΔL_s", "ΔL_s (m)"
    );
    for s in 0..design.n {
        let w: Vec<String> = design
            .windings
            .iter()
            .map(|row| row[s].to_string())
            .collect();
        println!(
            "{s:>3}  {:>14}  {:>16.9e}  [{}]",
            si_length(design.delta_l_m[s]),
            design.delta_l_m[s],
            w.join(", ")
        );
    }
    if let Some(c) = &design.coupler {
        println!();
        println!(
            "MMI coupler: W = {}, D_{} = {}",
            si_length(c.width_m),
            c.ports,
            si_length(c.length_m)
        );
    }
    println!();
    println!("max phase residual: {max_residual:.3e} rad");
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let start = Instant::now();
    let design: SorterDesign = read_json(&args.design_file)?;
    let manifest = RunManifest::new("verify", params(&args), json!({ "design": design }), None);
    let check = sorter::verify_design(&design, args.phase_tol)?;

    println!("phase residuals (rad), rows k = species, columns s = arms");
    for (k, row) in check.residuals.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|r| format!("{r:>11.3e}")).collect();
        println!("{k:>3}  {}", cells.join(" "));
    }
    println!(
        "max |residual| = {:.3e} rad, tolerance {:.1e} rad: {}",
        check.max_abs,
        check.phase_tol,
        if check.valid { "VALID" } else { "INVALID" }
    );
    if let Some(out) = args.out.as_deref() {
        write_json(&check, Some(out))?;
    }
    let code = if check.valid {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    };
    finish_manifest(manifest, args.out.as_deref(), start, code)?;
    Ok(code)
}

fn parse_range(text: &str, steps: usize) -> Result<LinearRange> {
    let (a, b) = text
        .split_once([',', ':'])
        .ok_or_else(|| anyhow!("range {text:?} must look like start,end"))?;
    let a: f64 = a
        .trim()
        .parse()
        .with_context(|| format!("bad range start in {text:?}"))?;
    let b: f64 = b
        .trim()
        .parse()
        .with_context(|| format!("bad range end in {text:?}"))?;
    Ok(LinearRange::new(a, b, steps)?)
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let start = Instant::now();
    let ratios = args.ratios.clone().unwrap_or_else(|| vec![1.0; args.n]);
    if ratios.len() != args.n {
        bail!(
            "--ratios has {} entries but --n is {}",
            ratios.len(),
            args.n
        );
    }
    let d1 = parse_range(&args.delta1_range, args.steps)?;
    let d2 = parse_range(&args.delta2_range, args.steps)?;
    let points = error_model::sweep_leakage(&d1, &d2, &ratios)?;

    let mut buf = Vec::new();
    error_model::write_sweep_csv(&points, args.all_columns, &mut buf)?;
    match args.out.as_deref() {
        Some(p) => {
            fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?;
            let min = points
                .iter()
                .map(|p| p.leakage.get(0, 0))
                .fold(f64::INFINITY, f64::min);
            eprintln!("{} grid points, min p00 = {min:.6}", points.len());
        }
        None => io::stdout().write_all(&buf)?,
    }
    let manifest = RunManifest::new("sweep", params(&args), json!({ "ratios": ratios }), None);
    finish_manifest(manifest, args.out.as_deref(), start, EXIT_OK)?;
    Ok(EXIT_OK)
}

fn cmd_montecarlo(args: MonteCarloArgs) -> Result<u8> {
    let start = Instant::now();
    let design: SorterDesign = read_json(&args.design_file)?;
    let summary = error_model::monte_carlo_leakage(&design, args.sigma_l, args.trials, args.seed)?;
    let budget = sorter::path_error_budget(&design.wavelengths()?, design.n)?;
    eprintln!(
        "{} trials, sigma_L = {} (rule-of-thumb budget λ_min/N = {})",
        args.trials,
        si_length(args.sigma_l),
        si_length(budget)
    );
    for (k, (m, s)) in summary
        .mean_diagonal
        .iter()
        .zip(&summary.std_diagonal)
        .enumerate()
    {
        eprintln!("  p_{k}{k}: mean {m:.6}  std {s:.6}");
    }
    write_json(&summary, args.out.as_deref())?;
    let manifest = RunManifest::new(
        "montecarlo",
        params(&args),
        json!({ "design": design }),
        Some(args.seed),
    );
    finish_manifest(manifest, args.out.as_deref(), start, EXIT_OK)?;
    Ok(EXIT_OK)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let start = Instant::now();
    let config: ExperimentConfig = read_json(&args.config_file)?;
    let result = spectrometry::run_experiment(&config)?;
    let rec = &result.reconstruction;
    eprintln!(
        "{} particles, channel counts {:?}",
        result.counts.total_particles, result.counts.counts
    );
    for (k, sp) in result.species.iter().enumerate() {
        eprintln!(
            "  {:<10} true {:.6}  reconstructed {:.6} ± {:.6}",
            sp.name,
            result.true_abundances.as_slice()[k],
            rec.abundances.as_slice()[k],
            rec.uncertainty[k]
        );
    }
    write_json(&result, args.out.as_deref())?;
    let manifest = RunManifest::new(
        "simulate",
        params(&args),
        json!({ "config": config }),
        Some(config.seed),
    );
    finish_manifest(manifest, args.out.as_deref(), start, EXIT_OK)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct AmsRow {
    name: String,
    mass_kg: f64,
    charge_c: f64,
    radius_m: f64,
    delta_r_vs_reference_m: f64,
    beam_separation_m: f64,
    de_broglie_wavelength_m: f64,
}

#[derive(Debug, Serialize)]
struct AmsComparison {
    ams_velocity_mps: f64,
    field_t: f64,
    interf_velocity_mps: f64,
    rows: Vec<AmsRow>,
    /// Two-species interferometer arm difference, when exactly two species are given.
    interf_delta_l_m: Option<f64>,
}

fn cmd_ams_compare(args: AmsArgs) -> Result<u8> {
    let start = Instant::now();
    let (entries, species) = read_species(&args.species_file)?;
    if species.is_empty() {
        bail!("species list is empty");
    }
    let q = args.charge * ELEMENTARY_CHARGE;
    let m0 = species[0].mass_kg;
    let rows = species
        .iter()
        .map(|sp| {
            let delta_r =
                spectrometry::ams_separation(m0, q, sp.mass_kg, q, args.ams_velocity, args.field)?;
            Ok(AmsRow {
                name: sp.name.clone(),
                mass_kg: sp.mass_kg,
                charge_c: q,
                radius_m: spectrometry::ams_radius(sp.mass_kg, args.ams_velocity, q, args.field)?,
                delta_r_vs_reference_m: delta_r,
                beam_separation_m: 2.0 * delta_r,
                de_broglie_wavelength_m: sorter::de_broglie_wavelength(
                    sp.mass_kg,
                    args.interf_velocity,
                )?,
            })
        })
        .collect::<interfms::Result<Vec<_>>>()?;
    let interf_delta_l_m = if species.len() == 2 {
        sorter::solve_two_species(
            species[0].mass_kg,
            species[1].mass_kg,
            args.interf_velocity,
            1000,
        )
        .ok()
        .map(|s| s.delta_l_m)
    } else {
        None
    };

    eprintln!(
        "magnetic sector: v = {} m/s, B = {} T (separation grows with v)",
        args.ams_velocity, args.field
    );
    eprintln!(
        "interferometer:  v = {} m/s (arm lengths shrink with v)",
        args.interf_velocity
    );
    for r in &rows {
        eprintln!(
            "  {:<10} R = {:<12} 2ΔR = {:<12} λ = {}",
            r.name,
            si_length(r.radius_m),
            si_length(r.beam_separation_m),
            si_length(r.de_broglie_wavelength_m)
        );
    }
    if let Some(dl) = interf_delta_l_m {
        eprintln!("  two-species interferometer ΔL = {}", si_length(dl));
    }
    let report = AmsComparison {
        ams_velocity_mps: args.ams_velocity,
        field_t: args.field,
        interf_velocity_mps: args.interf_velocity,
        rows,
        interf_delta_l_m,
    };
    write_json(&report, args.out.as_deref())?;
    let manifest = RunManifest::new(
        "ams-compare",
        params(&args),
        json!({ "species": entries }),
        None,
    );
    finish_manifest(manifest, args.out.as_deref(), start, EXIT_OK)?;
    Ok(EXIT_OK)
}
