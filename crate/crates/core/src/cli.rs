//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::asymptotics::{error_order_fit, laplace_ratio_estimate, named_field, quadrature_ratio_oracle, Domain};
use crate::brillouin::{commensurate_grid, lattice_gamma_centered, lattice_monkhorst_pack, KPointGrid};
use crate::config::{ConfigMap, GridChoice, PotentialChoice, RunConfig};
use crate::error::{Error, Result};
use crate::lattice::{build_primitive_supercell, build_supercell, BravaisLattice};
use crate::md::{init_state, run_sampling};
use crate::potential::{third_derivative_jump, Potential};
use crate::stress::{
    csv_header, csv_row, format_float, max_relative_deviation, realspace_oracle_pbc, QhOptions, QuasiHarmonic,
};

#[derive(Debug, Parser)]
#[command(name = "qhstress", version, about = "Quasi-harmonic stress of deformed Bravais crystals")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output CSV path (standard output when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed for molecular dynamics.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Quasi-harmonic stress and free energy over the temperature list.
    Stress,
    /// Quasi-harmonic free energy density over the temperature list.
    FreeEnergy,
    /// Finite-temperature correction against k-grid size.
    KgridStudy,
    /// k-space stress against the real-space periodic oracle.
    OracleCheck,
    /// Time-averaged MD virial against the quasi-harmonic stress.
    MdValidate,
    /// Laplace estimate against quadrature for a named test field.
    LaplaceDemo,
    /// C^2 against C^3 pair cutoffs: smoothness detector and QH-versus-MD discrepancy.
    SmoothnessStudy,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Io(_) => 3,
        Error::InvalidArgument(_)
        | Error::InvalidField(_)
        | Error::DegenerateCell { .. }
        | Error::CellTooSmall { .. }
        | Error::Aliasing { .. }
        | Error::DomainTooSmall { .. }
        | Error::DegenerateFit { .. } => 4,
        Error::SoftMode { .. } | Error::Instability(_) => 5,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut map = match &cli.config {
        Some(p) => ConfigMap::read(p)?,
        None => ConfigMap::default(),
    };
    for o in &cli.overrides {
        map.set_pair(o)?;
    }
    let mut c = RunConfig::from_map(&map)?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.output = Some(o.clone());
    }
    Ok(c)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let body = || -> Result<()> {
        let mut out: Box<dyn Write> = match &config.output {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        };
        match cli.command {
            Command::Stress => stress(&config, &mut out),
            Command::FreeEnergy => free_energy(&config, &mut out),
            Command::KgridStudy => kgrid_study(&config, &mut out),
            Command::OracleCheck => oracle_check(&config, &mut out),
            Command::MdValidate => md_validate(&config, &mut out),
            Command::LaplaceDemo => laplace_demo(&config, &mut out),
            Command::SmoothnessStudy => smoothness_study(&config, &mut out),
        }?;
        out.flush()?;
        Ok(())
    };
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(body)
        }
        None => body(),
    }
}

fn grid_for(config: &RunConfig, lattice: &BravaisLattice, sizes: [usize; 3]) -> Result<KPointGrid> {
    match config.grid {
        GridChoice::MonkhorstPack => lattice_monkhorst_pack(lattice, sizes),
        GridChoice::GammaCentered => lattice_gamma_centered(lattice, sizes),
    }
}

fn quasi_harmonic(config: &RunConfig, pot: &dyn Potential, lattice: &BravaisLattice) -> Result<QuasiHarmonic> {
    QuasiHarmonic::with_options(
        &config.deformation,
        pot,
        lattice,
        QhOptions {
            shell_radius: config.shell_radius,
            ..QhOptions::default()
        },
    )
}

fn stress(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pot = config.potential.build();
    let lattice = config.lattice(pot.as_ref())?;
    let qh = quasi_harmonic(config, pot.as_ref(), &lattice)?;
    let grid = grid_for(config, &lattice, config.grid_size)?;
    let sum = qh.correction_sum(&grid)?;
    writeln!(out, "{}", csv_header())?;
    for &t in &config.temperatures {
        let p = qh.stress_from_sum(t, &sum, qh.grid_volume(&grid));
        let f = qh.free_energy_density(t, &grid)?;
        writeln!(out, "{}", csv_row(t, &config.deformation, &p, f))?;
    }
    Ok(())
}

fn free_energy(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pot = config.potential.build();
    let lattice = config.lattice(pot.as_ref())?;
    let qh = quasi_harmonic(config, pot.as_ref(), &lattice)?;
    let grid = grid_for(config, &lattice, config.grid_size)?;
    writeln!(out, "T,F")?;
    for &t in &config.temperatures {
        writeln!(out, "{},{}", format_float(t), format_float(qh.free_energy_density(t, &grid)?))?;
    }
    Ok(())
}

fn kgrid_study(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pot = config.potential.build();
    let lattice = config.lattice(pot.as_ref())?;
    let qh = quasi_harmonic(config, pot.as_ref(), &lattice)?;
    let t = config.temperatures.iter().cloned().fold(0.0, f64::max);
    let mut cols = vec!["n".to_string(), "points".to_string(), "T".to_string()];
    for a in 1..=3 {
        for b in 1..=3 {
            cols.push(format!("C{a}{b}"));
        }
    }
    cols.push("rel_change".into());
    writeln!(out, "{}", cols.join(","))?;
    let mut previous: Option<crate::lattice::Mat3> = None;
    for &n in &config.grid_sizes {
        let grid = grid_for(config, &lattice, [n; 3])?;
        let c = qh.stress(t, &grid)?.0 - qh.zero_t.0;
        let change = previous.map_or(f64::NAN, |p| (c - p).amax() / c.amax());
        let mut row = vec![n.to_string(), grid.len().to_string(), format_float(t)];
        row.extend(c.transpose().iter().map(|x| format_float(*x)));
        row.push(format_float(change));
        writeln!(out, "{}", row.join(","))?;
        previous = Some(c);
    }
    Ok(())
}

/// Tolerance for agreement between the k-space stress and the real-space oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

fn oracle_check(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pot = config.potential.build();
    let lattice = config.lattice(pot.as_ref())?;
    let n = config.oracle_cells;
    let supercell = build_primitive_supercell(&lattice, [n; 3])?;
    let grid = commensurate_grid(&supercell)?;
    let qh = quasi_harmonic(config, pot.as_ref(), &lattice)?;
    writeln!(out, "T,component,kspace,realspace,rel_dev")?;
    let mut worst: f64 = 0.0;
    for &t in &config.temperatures {
        let k = qh.stress(t, &grid)?;
        let r = realspace_oracle_pbc(&config.deformation, t, pot.as_ref(), &supercell)?;
        for a in 0..3 {
            for b in 0..3 {
                let (kv, rv) = (k.get(a, b), r.get(a, b));
                let dev = if rv.abs() > 1e-10 { ((kv - rv) / rv).abs() } else { 0.0 };
                writeln!(
                    out,
                    "{},P{}{},{},{},{}",
                    format_float(t),
                    a + 1,
                    b + 1,
                    format_float(kv),
                    format_float(rv),
                    format_float(dev)
                )?;
            }
        }
        worst = worst.max(max_relative_deviation(k.matrix(), r.matrix(), 1e-10));
    }
    eprintln!("max relative deviation {worst:e} ({n}^3 cell, {} k-points)", grid.len());
    if worst < ORACLE_TOLERANCE {
        Ok(())
    } else {
        Err(Error::Instability(format!(
            "k-space and real-space stresses differ by {worst:e} (tolerance {ORACLE_TOLERANCE:e})"
        )))
    }
}

/// MD mean and QH stress for one potential.
struct Comparison {
    qh: f64,
    md: f64,
    se: f64,
    zero_t: f64,
}

fn compare_md(config: &RunConfig, pot: &dyn Potential, lattice: &BravaisLattice) -> Result<(Comparison, crate::md::SamplingResult, crate::stress::StressTensor)> {
    let supercell = build_supercell(lattice, [config.md_cells; 3])?;
    let grid = commensurate_grid(&supercell)?;
    let qh = quasi_harmonic(config, pot, lattice)?;
    let p = qh.stress(config.md.temperature, &grid)?;
    let mut state = init_state(supercell, config.deformation, &config.md, pot, config.seed)?;
    let result = match &config.trajectory {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            let r = run_sampling(&mut state, &config.md, pot, Some(&mut w))?;
            w.flush()?;
            r
        }
        None => run_sampling(&mut state, &config.md, pot, None)?,
    };
    Ok((
        Comparison {
            qh: p.get(0, 0),
            md: result.mean.get(0, 0),
            se: result.standard_error[(0, 0)],
            zero_t: qh.zero_t.get(0, 0),
        },
        result,
        p,
    ))
}

fn md_validate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pot = config.potential.build();
    let lattice = config.lattice(pot.as_ref())?;
    let (_, result, p) = compare_md(config, pot.as_ref(), &lattice)?;
    writeln!(out, "component,md_mean,md_se,qh,rel_dev,n_se")?;
    for a in 0..3 {
        for b in 0..3 {
            let (m, s, q) = (result.mean.get(a, b), result.standard_error[(a, b)], p.get(a, b));
            writeln!(
                out,
                "P{}{},{},{},{},{},{}",
                a + 1,
                b + 1,
                format_float(m),
                format_float(s),
                format_float(q),
                format_float(((q - m) / m).abs()),
                format_float(if s > 0.0 { (q - m).abs() / s } else { f64::NAN })
            )?;
        }
    }
    eprintln!(
        "{} samples, mean temperature {:.3} K, conserved-energy drift {:e} eV/atom",
        result.samples, result.mean_temperature, result.conserved_drift
    );
    Ok(())
}

fn laplace_demo(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let field = named_field(&config.laplace_field)?;
    writeln!(out, "lambda,estimate,oracle,error")?;
    for &lambda in &config.laplace_lambdas {
        let e = laplace_ratio_estimate(&field, lambda)?;
        let o = quadrature_ratio_oracle(&field, lambda, &Domain::around(&field, lambda))?;
        writeln!(
            out,
            "{},{},{},{}",
            format_float(lambda),
            format_float(e),
            format_float(o),
            format_float(e - o)
        )?;
    }
    match error_order_fit(&field, &config.laplace_lambdas) {
        Ok(slope) => eprintln!("fitted error slope {slope:.4}"),
        Err(e) => eprintln!("no error slope: {e}"),
    }
    Ok(())
}

/// Step of the one-sided third-derivative detector, Angstrom.
pub const SMOOTHNESS_STEP: f64 = 1e-5;

/// Jump in the third derivative above which a cutoff counts as non-smooth, eV/A^3.
pub const SMOOTHNESS_THRESHOLD: f64 = 1e-3;

fn smoothness_study(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "potential,a0,third_derivative_jump,flagged,T,P0_11,qh_P11,md_P11,md_se,abs_discrepancy,rel_discrepancy")?;
    for choice in [PotentialChoice::MorseSmooth, PotentialChoice::MorseC2] {
        let mut c = config.clone();
        c.potential = choice;
        c.md.temperature = config.study_temperature;
        let pot = choice.build();
        let lattice = c.lattice(pot.as_ref())?;
        let jump = third_derivative_jump(|r| pot.pair(r).v, pot.cutoff(), SMOOTHNESS_STEP);
        let (cmp, _, _) = compare_md(&c, pot.as_ref(), &lattice)?;
        let name = match choice {
            PotentialChoice::MorseSmooth => "morse-smooth",
            PotentialChoice::MorseC2 => "morse-c2",
            PotentialChoice::Cu => "cu",
        };
        writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{},{},{}",
            format_float(lattice.a0()),
            format_float(jump),
            jump > SMOOTHNESS_THRESHOLD,
            format_float(c.md.temperature),
            format_float(cmp.zero_t),
            format_float(cmp.qh),
            format_float(cmp.md),
            format_float(cmp.se),
            format_float((cmp.qh - cmp.md).abs()),
            format_float(((cmp.qh - cmp.md) / cmp.md).abs())
        )?;
    }
    Ok(())
}
