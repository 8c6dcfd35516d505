//! Command-line front end: `run`, `scan`, and `scale` experiments driven by
//! a JSON config file with flag overrides.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use helmsweep::harness::{self, ExperimentConfig};
use helmsweep::Result;

#[derive(Parser)]
#[command(
    name = "helmsweep",
    version,
    about = "Frequency-domain Helmholtz solver with a moving-PML sweeping preconditioner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble, precondition, and solve for each configured forcing.
    Run(RunArgs),
    /// Solve once per candidate PML amplitude and report the best one.
    Scan(ScanArgs),
    /// Fit flop-count exponents over a list of cubic grid sizes.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// Candidate PML amplitudes, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    amps: Vec<f64>,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    common: Common,
    /// Cubic grid sizes, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
}

#[derive(Args)]
struct Common {
    /// JSON config file; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Velocity model: uniform, barrier, wedge, two-layer, waveguide, gridded.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    /// Angular frequency; clears a configured wavelength count.
    #[arg(long, conflicts_with = "wavelengths")]
    omega: Option<f64>,
    /// Wavelengths per unit box edge; clears a configured omega.
    #[arg(long)]
    wavelengths: Option<f64>,
    /// Points per wavelength used when no frequency is given.
    #[arg(long)]
    ppw: Option<f64>,
    /// PML thickness in grid points.
    #[arg(long)]
    gamma: Option<usize>,
    /// PML peak amplitude.
    #[arg(long = "pml-amp")]
    pml_amp: Option<f64>,
    /// PML takeoff exponent.
    #[arg(long = "pml-exponent")]
    pml_exponent: Option<u32>,
    /// Artificial damping inside the preconditioner.
    #[arg(long)]
    alpha: Option<f64>,
    /// Planes per sweep panel.
    #[arg(long = "panel-planes")]
    panel_planes: Option<usize>,
    /// GMRES restart length.
    #[arg(long)]
    restart: Option<usize>,
    /// GMRES relative residual target.
    #[arg(long)]
    tol: Option<f64>,
    /// Cap on total GMRES steps.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Forcing names f0..f3; repeat the flag or comma-separate.
    #[arg(long = "forcing", value_delimiter = ',')]
    forcing: Vec<String>,
    /// Replace panel triangular factors by their inverses.
    #[arg(long = "selective-inversion")]
    selective_inversion: bool,
    /// Simulated process grid, e.g. 2x2.
    #[arg(long = "sim-grid", value_parser = parse_grid)]
    sim_grid: Option<[usize; 2]>,
    /// Nested-dissection leaf size.
    #[arg(long = "leaf-cutoff")]
    leaf_cutoff: Option<usize>,
    /// Seed for the simulated solve's right-hand side.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for gnuplot residual-history files.
    #[arg(long = "plot-dir")]
    plot_dir: Option<PathBuf>,
    /// Record wall-clock seconds (breaks bitwise CSV reproducibility).
    #[arg(long)]
    timing: bool,
    /// Raw little-endian f32 samples for the gridded model.
    #[arg(long = "velocity-data")]
    velocity_data: Option<PathBuf>,
    /// Text header `n1 n2 n3 e1 e2 e3` for the gridded model.
    #[arg(long = "velocity-header")]
    velocity_header: Option<PathBuf>,
}

fn parse_grid(text: &str) -> std::result::Result<[usize; 2], String> {
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected RxC, got {text:?}"))?;
    let rows = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let cols = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    Ok([rows, cols])
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(model) = &self.model {
            config.model = model.clone();
        }
        if let Some(n) = self.nx {
            config.dims[0] = n;
        }
        if let Some(n) = self.ny {
            config.dims[1] = n;
        }
        if let Some(n) = self.nz {
            config.dims[2] = n;
        }
        if self.omega.is_some() {
            config.omega = self.omega;
            config.wavelengths = None;
        }
        if self.wavelengths.is_some() {
            config.wavelengths = self.wavelengths;
            config.omega = None;
        }
        if let Some(ppw) = self.ppw {
            config.points_per_wavelength = ppw;
        }
        if let Some(gamma) = self.gamma {
            config.gamma = gamma;
        }
        if self.pml_amp.is_some() {
            config.pml_amplitude = self.pml_amp;
        }
        if let Some(exponent) = self.pml_exponent {
            config.pml_exponent = exponent;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(b) = self.panel_planes {
            config.planes_per_panel = b;
        }
        if let Some(restart) = self.restart {
            config.restart = restart;
        }
        if let Some(tol) = self.tol {
            config.tol = tol;
        }
        if let Some(max_iters) = self.max_iters {
            config.max_iters = max_iters;
        }
        if !self.forcing.is_empty() {
            config.forcings = self.forcing.clone();
        }
        if self.selective_inversion {
            config.selective_inversion = true;
        }
        if self.sim_grid.is_some() {
            config.sim_grid = self.sim_grid;
        }
        if let Some(cutoff) = self.leaf_cutoff {
            config.leaf_cutoff = cutoff;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.out.is_some() {
            config.out = self.out.clone();
        }
        if self.plot_dir.is_some() {
            config.plot_dir = self.plot_dir.clone();
        }
        if self.timing {
            config.timing = true;
        }
        if self.velocity_data.is_some() {
            config.velocity_data = self.velocity_data.clone();
        }
        if self.velocity_header.is_some() {
            config.velocity_header = self.velocity_header.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

struct StderrLog;

impl log::Log for StderrLog {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLog = StderrLog;

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.common.config()?;
            let output = harness::run(&config)?;
            print!("{}", output.summary);
            if config.out.is_none() {
                print!("{}", output.csv);
            }
        }
        Command::Scan(args) => {
            let config = args.common.config()?;
            let scan = harness::pml_amplitude_scan(&config, &args.amps)?;
            println!("amplitude iterations converged");
            for row in &scan.rows {
                println!("{} {} {}", row.amplitude, row.iterations, row.converged);
            }
            let best = &scan.rows[scan.best];
            println!(
                "best: amplitude {} ({} iterations)",
                best.amplitude, best.iterations
            );
            if let Some(out) = &config.out {
                let mut csv = String::from("amplitude,iterations,converged\n");
                for row in &scan.rows {
                    csv.push_str(&format!(
                        "{:?},{},{}\n",
                        row.amplitude, row.iterations, row.converged
                    ));
                }
                fs::write(out, csv)?;
            }
        }
        Command::Scale(args) => {
            let config = args.common.config()?;
            let study = harness::scaling_study(&config, &args.sizes)?;
            println!("n points setup_flops apply_flops iterations");
            for row in &study.rows {
                println!(
                    "{} {} {} {} {}",
                    row.n, row.points, row.setup_flops, row.apply_flops, row.iterations
                );
            }
            println!("setup exponent {:.3}", study.setup_exponent);
            println!("apply exponent {:.3}", study.apply_exponent);
            if let Some(out) = &config.out {
                let mut csv = String::from("n,points,setup_flops,apply_flops,iterations\n");
                for row in &study.rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        row.n, row.points, row.setup_flops, row.apply_flops, row.iterations
                    ));
                }
                fs::write(out, csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let _ = log::set_logger(&LOGGER).map(|()| log::set_max_level(log::LevelFilter::Warn));
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
