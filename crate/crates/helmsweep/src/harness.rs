//! Experiment configuration, orchestration, and result emission.
//!
//! An [`ExperimentConfig`] names a velocity model, a grid, preconditioner
//! knobs, and solver settings. [`run`] assembles the undamped operator `A`
//! and the damped operator `J`, builds the sweeping preconditioner from `J`,
//! solves one GMRES system per requested forcing, and renders the results as
//! CSV plus a human-readable summary. [`pml_amplitude_scan`] and
//! [`scaling_study`] repeat `run` over parameter lists.
//!
//! With the same config and seed, two runs produce bitwise-identical CSV
//! text: all numeric work is deterministic, and wall-clock columns stay zero
//! unless `timing` is set.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble, DampingSpec, GridSpec, SparseOperator};
use crate::distsim::{simulated_multifrontal_solve, subtree_to_subteam, CommLedger, SolvePath};
use crate::error::{Error, Result};
use crate::krylov::{gmres, SolveConfig, SolveReport};
use crate::sweep::{partition_panels, SweepConfig, SweepPreconditioner};
use crate::velocity::{Forcing, ForcingKind, PmlProfile, VelocityModel};

/// One experiment: model, grid, preconditioner knobs, solver settings, and
/// output destinations. Every field has a default; unknown keys in a config
/// document are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Velocity model name: `uniform`, `barrier`, `wedge`, `two-layer`,
    /// `waveguide`, or `gridded`.
    pub model: String,
    /// Interior grid points per axis.
    pub dims: [usize; 3],
    /// Diagnostic resolution used when deriving a default frequency.
    pub points_per_wavelength: f64,
    /// Angular frequency; exclusive with `wavelengths`.
    pub omega: Option<f64>,
    /// Wavelengths per unit box edge at the slowest speed; sets
    /// `omega = 2 pi c_min * wavelengths`. When neither this nor `omega` is
    /// given, defaults to `dims[0] / points_per_wavelength`.
    pub wavelengths: Option<f64>,
    /// PML thickness in grid points.
    pub gamma: usize,
    /// PML peak amplitude; defaults to `1.5 * omega` when absent.
    pub pml_amplitude: Option<f64>,
    /// PML takeoff exponent.
    pub pml_exponent: u32,
    /// Artificial damping used only inside the preconditioner.
    pub alpha: f64,
    /// Planes per sweep panel.
    pub planes_per_panel: usize,
    /// Forcing names, `f0` through `f3`.
    pub forcings: Vec<String>,
    /// Arnoldi steps per GMRES restart cycle.
    pub restart: usize,
    /// Relative residual target.
    pub tol: f64,
    /// Cap on total GMRES steps.
    pub max_iters: usize,
    /// Replace each panel's triangular factors by their inverses.
    pub selective_inversion: bool,
    /// Simulate a distributed solve of the first panel on `r * c` ranks and
    /// report its communication ledger.
    pub sim_grid: Option<[usize; 2]>,
    /// Nested-dissection leaf size.
    pub leaf_cutoff: usize,
    /// Seed for the simulated solve's right-hand side.
    pub seed: u64,
    /// CSV destination; results stay in memory when absent.
    pub out: Option<PathBuf>,
    /// Directory for per-forcing residual-history plot data.
    pub plot_dir: Option<PathBuf>,
    /// Record wall-clock seconds instead of zeros. Breaks bitwise CSV
    /// reproducibility.
    pub timing: bool,
    /// Raw little-endian `f32` samples for the `gridded` model.
    pub velocity_data: Option<PathBuf>,
    /// Text header `n1 n2 n3 e1 e2 e3` for the `gridded` model.
    pub velocity_header: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "uniform".into(),
            dims: [16, 16, 16],
            points_per_wavelength: 10.0,
            omega: None,
            wavelengths: None,
            gamma: 3,
            pml_amplitude: None,
            pml_exponent: 3,
            alpha: 2.0 * std::f64::consts::PI,
            planes_per_panel: 4,
            forcings: vec!["f0".into()],
            restart: 20,
            tol: 1e-5,
            max_iters: 200,
            selective_inversion: false,
            sim_grid: None,
            leaf_cutoff: 32,
            seed: 0,
            out: None,
            plot_dir: None,
            timing: false,
            velocity_data: None,
            velocity_header: None,
        }
    }
}

/// Keeps whole configs comfortably below desk scale.
pub const MAX_POINTS: usize = 2_000_000;

impl ExperimentConfig {
    /// Parses a JSON config document and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "grid dims must be positive: {:?}",
                self.dims
            )));
        }
        let points: usize = self.dims.iter().product();
        if points > MAX_POINTS {
            return Err(Error::Config(format!(
                "grid has {points} points, above the desk-scale cap of {MAX_POINTS}"
            )));
        }
        if !(self.points_per_wavelength > 0.0) || !self.points_per_wavelength.is_finite() {
            return Err(Error::Config(format!(
                "points_per_wavelength must be positive: {}",
                self.points_per_wavelength
            )));
        }
        if self.omega.is_some() && self.wavelengths.is_some() {
            return Err(Error::Config(
                "set omega or wavelengths, not both".into(),
            ));
        }
        for (name, value) in [("omega", self.omega), ("wavelengths", self.wavelengths)] {
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("{name} must be positive: {v}")));
                }
            }
        }
        if self.gamma == 0 {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        if let Some(c) = self.pml_amplitude {
            if c < 0.0 || !c.is_finite() {
                return Err(Error::Config(format!(
                    "pml_amplitude must be finite and non-negative: {c}"
                )));
            }
        }
        if self.pml_exponent == 0 {
            return Err(Error::Config("pml_exponent must be at least 1".into()));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be finite and non-negative: {}",
                self.alpha
            )));
        }
        if self.planes_per_panel == 0 {
            return Err(Error::Config("planes_per_panel must be at least 1".into()));
        }
        if self.forcings.is_empty() {
            return Err(Error::Config("at least one forcing is required".into()));
        }
        for name in &self.forcings {
            ForcingKind::from_name(name)?;
        }
        if self.restart == 0 || self.max_iters == 0 {
            return Err(Error::Config(
                "restart and max_iters must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::Config(format!("tol must be positive: {}", self.tol)));
        }
        if self.leaf_cutoff == 0 {
            return Err(Error::Config("leaf_cutoff must be at least 1".into()));
        }
        if let Some([r, c]) = self.sim_grid {
            if r == 0 || c == 0 {
                return Err(Error::Config(format!(
                    "sim_grid sides must be positive: {r}x{c}"
                )));
            }
        }
        match self.model.as_str() {
            "uniform" | "barrier" | "wedge" | "two-layer" | "waveguide" => {}
            "gridded" => {
                if self.velocity_data.is_none() || self.velocity_header.is_none() {
                    return Err(Error::Config(
                        "the gridded model needs velocity_data and velocity_header paths".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!("unknown model {other:?}")));
            }
        }
        Ok(())
    }

    /// Builds the configured velocity model.
    pub fn build_model(&self) -> Result<VelocityModel> {
        match self.model.as_str() {
            "uniform" => VelocityModel::uniform(1.0),
            "barrier" => Ok(VelocityModel::barrier()),
            "wedge" => Ok(VelocityModel::wedge()),
            "two-layer" => Ok(VelocityModel::two_layer()),
            "waveguide" => Ok(VelocityModel::waveguide()),
            "gridded" => {
                let (data, header) = match (&self.velocity_data, &self.velocity_header) {
                    (Some(d), Some(h)) => (d, h),
                    _ => {
                        return Err(Error::Config(
                            "the gridded model needs velocity_data and velocity_header paths"
                                .into(),
                        ))
                    }
                };
                VelocityModel::load_gridded(data, header)
            }
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }

    /// Angular frequency implied by the config for `model`.
    pub fn resolve_omega(&self, model: &VelocityModel) -> Result<f64> {
        match (self.omega, self.wavelengths) {
            (Some(_), Some(_)) => Err(Error::Config(
                "set omega or wavelengths, not both".into(),
            )),
            (Some(omega), None) => Ok(omega),
            (None, Some(waves)) => Ok(2.0 * std::f64::consts::PI * model.c_min() * waves),
            (None, None) => {
                let waves = self.dims[0] as f64 / self.points_per_wavelength;
                Ok(2.0 * std::f64::consts::PI * model.c_min() * waves)
            }
        }
    }

    fn forcing_kinds(&self) -> Result<Vec<ForcingKind>> {
        self.forcings
            .iter()
            .map(|name| ForcingKind::from_name(name))
            .collect()
    }
}

/// Outcome of one (config, forcing) solve.
#[derive(Clone, Debug)]
pub struct RunRecord {
    /// Echo of the config that produced this record.
    pub config: ExperimentConfig,
    pub model: String,
    pub forcing: ForcingKind,
    pub report: SolveReport,
    /// Multiply-adds spent factoring the panels.
    pub setup_flops: u64,
    pub setup_seconds: f64,
    /// Operator plus preconditioner multiply-adds per GMRES iteration.
    pub apply_flops_per_iteration: u64,
    pub apply_seconds_per_iteration: f64,
    /// Rough resident-set bound: operators, factors, couplers, and GMRES
    /// workspace.
    pub peak_memory_bytes: u64,
}

/// Everything [`run`] produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub csv: String,
    pub summary: String,
}

fn stage_error(stage: &'static str, source: Error) -> Error {
    Error::Stage {
        stage,
        source: Box::new(source),
    }
}

/// Runs the configured experiment end to end.
///
/// Assembles `A` (undamped) and `J` (damped by `alpha`), builds the sweeping
/// preconditioner from `J`, and solves `A x = b` with right-preconditioned
/// GMRES from the zero guess, once per forcing. Forcings solve concurrently;
/// records keep the configured order. Errors name the failing stage.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config
        .validate()
        .map_err(|e| stage_error("configuration", e))?;
    let model = config.build_model().map_err(|e| stage_error("model", e))?;
    let omega = config
        .resolve_omega(&model)
        .map_err(|e| stage_error("configuration", e))?;
    let amplitude = config.pml_amplitude.unwrap_or(1.5 * omega);
    let extents = model.extents();
    let h3 = extents[2] / (config.dims[2] as f64 + 1.0);
    let profile = PmlProfile::new(config.gamma, amplitude, config.pml_exponent, h3);
    let grid = GridSpec::new(config.dims, extents, [true; 6], profile)
        .map_err(|e| stage_error("assembly", e))?
        .with_points_per_wavelength(config.points_per_wavelength);
    let a = assemble(&grid, &model, &DampingSpec::new(omega, 0.0))
        .map_err(|e| stage_error("assembly", e))?;
    let j = assemble(&grid, &model, &DampingSpec::new(omega, config.alpha))
        .map_err(|e| stage_error("assembly", e))?;

    let partition = partition_panels(config.dims[2], config.planes_per_panel, config.gamma)
        .map_err(|e| stage_error("setup", e))?;
    let sweep_config = SweepConfig {
        selective_inversion: config.selective_inversion,
        leaf_cutoff: config.leaf_cutoff,
    };
    let setup_start = Instant::now();
    let precond = SweepPreconditioner::setup(
        &j,
        &grid,
        &model,
        partition,
        &DampingSpec::new(omega, config.alpha),
        &sweep_config,
    )
    .map_err(|e| stage_error("setup", e))?;
    let setup_seconds = if config.timing {
        setup_start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let setup_flops = precond.setup_flop_count();
    let apply_flops = a.matvec_flops() + precond.apply_flop_count();
    let peak_memory = peak_memory_estimate(&a, &precond, config.restart);

    let kinds = config.forcing_kinds()?;
    let solve_config = SolveConfig {
        restart: config.restart,
        tol: config.tol,
        max_iters: config.max_iters,
    };
    let records = kinds
        .par_iter()
        .map(|&kind| -> Result<RunRecord> {
            let forcing = Forcing::new(kind, config.dims[0] as f64, extents)?;
            let mut b = vec![Complex64::ZERO; grid.n_points()];
            for (i, v) in b.iter_mut().enumerate() {
                *v = forcing.amplitude_at(grid.position(grid.coords_of(i)?), omega);
            }
            let (_, report) = gmres(&a, &precond, &b, &solve_config)?;
            let apply_seconds = if config.timing && report.iterations > 0 {
                report.seconds / report.iterations as f64
            } else {
                0.0
            };
            Ok(RunRecord {
                config: config.clone(),
                model: model.name().to_string(),
                forcing: kind,
                report,
                setup_flops,
                setup_seconds,
                apply_flops_per_iteration: apply_flops,
                apply_seconds_per_iteration: apply_seconds,
                peak_memory_bytes: peak_memory,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| stage_error("solve", e))?;

    let csv = render_csv(&records);
    let mut summary = render_summary(config, &model, omega, amplitude, precond.partition().len(), &records);

    if let Some([r, c]) = config.sim_grid {
        let ledger =
            simulate_panel_solve(&precond, r * c, config).map_err(|e| stage_error("simulation", e))?;
        summary.push_str(&format!(
            "sim {r}x{c}: {} entries sent, {} messages\n",
            ledger.total_sent(),
            ledger.total_messages()
        ));
        if let Some(out) = &config.out {
            fs::write(comm_path(out), ledger.csv_string())
                .map_err(|e| stage_error("output", e.into()))?;
        }
    }
    if let Some(out) = &config.out {
        fs::write(out, &csv).map_err(|e| stage_error("output", e.into()))?;
    }
    if let Some(dir) = &config.plot_dir {
        write_plot_files(dir, &records).map_err(|e| stage_error("output", e))?;
    }

    Ok(RunOutput {
        records,
        csv,
        summary,
    })
}

/// Renders records in the fixed schema
/// `stage,model,forcing,iteration,rel_residual,flops,seconds`: one setup row,
/// then one row per GMRES iteration per forcing.
pub fn render_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("stage,model,forcing,iteration,rel_residual,flops,seconds\n");
    if let Some(first) = records.first() {
        out.push_str(&format!(
            "setup,{},-,0,{:?},{},{:?}\n",
            first.model, 1.0, first.setup_flops, first.setup_seconds
        ));
    }
    for record in records {
        for (i, &residual) in record.report.history.iter().enumerate() {
            out.push_str(&format!(
                "solve,{},{},{},{:?},{},{:?}\n",
                record.model,
                record.forcing.name(),
                i + 1,
                residual,
                record.apply_flops_per_iteration,
                record.apply_seconds_per_iteration
            ));
        }
    }
    out
}

fn render_summary(
    config: &ExperimentConfig,
    model: &VelocityModel,
    omega: f64,
    amplitude: f64,
    panels: usize,
    records: &[RunRecord],
) -> String {
    let [n1, n2, n3] = config.dims;
    let mut s = format!(
        "{} model, {n1}x{n2}x{n3} grid, {} points\n",
        model.name(),
        n1 * n2 * n3
    );
    s.push_str(&format!(
        "omega {omega:.6}, gamma {}, pml amplitude {amplitude:.6}, alpha {:.6}\n",
        config.gamma, config.alpha
    ));
    s.push_str(&format!(
        "panels: {panels} of {} planes, selective inversion {}\n",
        config.planes_per_panel,
        if config.selective_inversion { "on" } else { "off" }
    ));
    if let Some(first) = records.first() {
        s.push_str(&format!("setup: {} multiply-adds", first.setup_flops));
        if config.timing {
            s.push_str(&format!(", {:.3} s", first.setup_seconds));
        }
        s.push('\n');
        s.push_str(&format!(
            "peak memory estimate: {:.1} MB\n",
            first.peak_memory_bytes as f64 / (1 << 20) as f64
        ));
    }
    for record in records {
        let status = if record.report.converged {
            "converged"
        } else {
            "stalled"
        };
        let last = record.report.history.last().copied().unwrap_or(0.0);
        s.push_str(&format!(
            "{}: {} iterations, {status}, final residual {:.2e}",
            record.forcing.name(),
            record.report.iterations
        , last));
        if config.timing {
            s.push_str(&format!(", {:.4} s/iteration", record.apply_seconds_per_iteration));
        }
        s.push('\n');
    }
    s
}

fn comm_path(out: &Path) -> PathBuf {
    out.with_extension("comm.csv")
}

fn write_plot_files(dir: &Path, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for record in records {
        let mut text = String::from("# iteration rel_residual\n");
        for (i, &residual) in record.report.history.iter().enumerate() {
            text.push_str(&format!("{} {residual:?}\n", i + 1));
        }
        let name = format!("{}_{}.dat", record.model, record.forcing.name());
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}

/// Replays the first panel's factored solve on `ranks` simulated processes
/// and returns the communication ledger.
fn simulate_panel_solve(
    precond: &SweepPreconditioner,
    ranks: usize,
    config: &ExperimentConfig,
) -> Result<CommLedger> {
    let tree = precond.problems()[0].tree();
    let assignment = subtree_to_subteam(tree.tree(), ranks)?;
    let path = if config.selective_inversion {
        SolvePath::InvertedMultiply
    } else {
        SolvePath::TriangularSolve
    };
    let b = seeded_vector(tree.n(), config.seed);
    let (_, ledger) = simulated_multifrontal_solve(tree, &assignment, path, &b)?;
    Ok(ledger)
}

fn seeded_vector(n: usize, seed: u64) -> Vec<Complex64> {
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    if state == 0 {
        state = 0x2545_F491_4F6C_DD1D;
    }
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n)
        .map(|_| Complex64::new(next(), next()))
        .collect()
}

fn operator_bytes(op: &SparseOperator) -> u64 {
    (op.nnz() * 24 + op.nrows() * 8) as u64
}

fn peak_memory_estimate(a: &SparseOperator, precond: &SweepPreconditioner, restart: usize) -> u64 {
    let mut bytes = 2 * operator_bytes(a);
    for problem in precond.problems() {
        bytes += operator_bytes(problem.operator());
        let tree = problem.tree();
        for sid in 0..tree.tree().supernodes.len() {
            let front = tree.front(sid);
            let entries =
                front.tl.rows() * front.tl.cols() + front.bl.rows() * front.bl.cols() + front.d.len();
            bytes += 16 * entries as u64;
        }
    }
    for i in 0..precond.partition().len().saturating_sub(1) {
        bytes += operator_bytes(precond.coupler(i));
    }
    bytes + ((restart + 4) * a.nrows() * 16) as u64
}

/// One candidate amplitude's outcome in a scan.
#[derive(Clone, Copy, Debug)]
pub struct ScanRow {
    pub amplitude: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Scan outcome: one row per candidate, `best` indexing the winner.
#[derive(Clone, Debug)]
pub struct AmplitudeScan {
    pub rows: Vec<ScanRow>,
    pub best: usize,
}

/// Runs the first configured forcing once per candidate PML amplitude and
/// picks the one with the fewest iterations. Ties keep the earlier
/// candidate; runs that stall rank after any that converge.
pub fn pml_amplitude_scan(config: &ExperimentConfig, amplitudes: &[f64]) -> Result<AmplitudeScan> {
    if amplitudes.is_empty() {
        return Err(Error::Config(
            "amplitude scan needs at least one candidate".into(),
        ));
    }
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &amplitude in amplitudes {
        let mut candidate = config.clone();
        candidate.pml_amplitude = Some(amplitude);
        candidate.forcings.truncate(1);
        candidate.out = None;
        candidate.plot_dir = None;
        candidate.sim_grid = None;
        let output =
            run(&candidate).map_err(|e| Error::Config(format!("pml amplitude {amplitude}: {e}")))?;
        let record = &output.records[0];
        rows.push(ScanRow {
            amplitude,
            iterations: record.report.iterations,
            converged: record.report.converged,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .min_by_key(|(_, row)| (!row.converged, row.iterations))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(AmplitudeScan { rows, best })
}

/// One grid size's counters in a scaling study.
#[derive(Clone, Copy, Debug)]
pub struct ScaleRow {
    pub n: usize,
    pub points: usize,
    pub setup_flops: u64,
    pub apply_flops: u64,
    pub iterations: usize,
}

/// Log-log fit of the flop counters against the point count.
#[derive(Clone, Debug)]
pub struct ScalingStudy {
    pub rows: Vec<ScaleRow>,
    pub setup_exponent: f64,
    pub apply_exponent: f64,
}

/// Runs a cubic grid at each `n`, holding resolution fixed by scaling the
/// frequency with `n / points_per_wavelength`, and fits log-log exponents of
/// the setup and per-iteration apply flop counts in the point count.
pub fn scaling_study(config: &ExperimentConfig, sizes: &[usize]) -> Result<ScalingStudy> {
    if sizes.len() < 3 {
        return Err(Error::Config(format!(
            "scaling study needs at least 3 sizes, got {}",
            sizes.len()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut candidate = config.clone();
        candidate.dims = [n, n, n];
        candidate.omega = None;
        candidate.wavelengths = Some(n as f64 / config.points_per_wavelength);
        candidate.forcings.truncate(1);
        candidate.out = None;
        candidate.plot_dir = None;
        candidate.sim_grid = None;
        let output = run(&candidate)?;
        let record = &output.records[0];
        rows.push(ScaleRow {
            n,
            points: n * n * n,
            setup_flops: record.setup_flops,
            apply_flops: record.apply_flops_per_iteration,
            iterations: record.report.iterations,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.points as f64).ln()).collect();
    let setup: Vec<f64> = rows.iter().map(|r| (r.setup_flops as f64).ln()).collect();
    let apply: Vec<f64> = rows.iter().map(|r| (r.apply_flops as f64).ln()).collect();
    Ok(ScalingStudy {
        rows,
        setup_exponent: slope(&xs, &setup),
        apply_exponent: slope(&xs, &apply),
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dims: [8, 8, 8],
            gamma: 1,
            wavelengths: Some(0.8),
            planes_per_panel: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_defaults_round_trip() {
        let parsed = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        let reparsed = ExperimentConfig::from_json(&parsed.to_json()).unwrap();
        assert_eq!(reparsed, parsed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json("{\"frequency\": 3.0}").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn conflicting_frequency_settings_are_rejected() {
        let config = ExperimentConfig {
            omega: Some(10.0),
            wavelengths: Some(1.6),
            ..ExperimentConfig::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn oversized_grids_are_rejected() {
        let config = ExperimentConfig {
            dims: [128, 128, 128],
            ..ExperimentConfig::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn csv_is_bitwise_deterministic_across_runs() {
        let config = ExperimentConfig {
            forcings: vec!["f0".into(), "f2".into()],
            sim_grid: Some([2, 2]),
            ..small_config()
        };
        let first = run(&config).unwrap();
        let second = run(&config).unwrap();
        assert_eq!(first.csv, second.csv);
        assert_eq!(first.summary, second.summary);
        let mut lines = first.csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "stage,model,forcing,iteration,rel_residual,flops,seconds"
        );
        let rows: usize = first
            .records
            .iter()
            .map(|r| r.report.history.len())
            .sum();
        assert_eq!(first.csv.lines().count(), 1 + 1 + rows);
        assert!(first.summary.contains("sim 2x2:"));
        assert!(first.records[0].peak_memory_bytes > 0);
        assert_eq!(first.records[0].forcing, ForcingKind::SingleShot);
        assert_eq!(first.records[1].forcing, ForcingKind::GaussianBeam);
    }

    #[test]
    fn one_panel_preconditioner_converges_in_one_iteration() {
        let config = ExperimentConfig {
            model: "waveguide".into(),
            dims: [6, 6, 6],
            gamma: 1,
            wavelengths: Some(0.6),
            alpha: 0.0,
            planes_per_panel: 6,
            forcings: vec!["f0".into(), "f1".into(), "f2".into(), "f3".into()],
            ..ExperimentConfig::default()
        };
        let output = run(&config).unwrap();
        assert_eq!(output.records.len(), 4);
        for record in &output.records {
            assert!(record.report.converged);
            assert_eq!(record.report.iterations, 1);
        }
    }

    #[test]
    fn scan_reports_the_best_candidate() {
        let config = ExperimentConfig {
            dims: [6, 6, 6],
            wavelengths: Some(0.6),
            ..small_config()
        };
        let single = pml_amplitude_scan(&config, &[3.0]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.best, 0);

        let scan = pml_amplitude_scan(&config, &[0.0, 20.0]).unwrap();
        assert_eq!(scan.rows.len(), 2);
        let best = &scan.rows[scan.best];
        for row in &scan.rows {
            assert!(best.iterations <= row.iterations);
        }
        assert!(matches!(
            pml_amplitude_scan(&config, &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scaling_study_fits_positive_exponents() {
        let study = scaling_study(&small_config(), &[6, 8, 10]).unwrap();
        assert_eq!(study.rows.len(), 3);
        assert!(study.rows.windows(2).all(|w| w[0].points < w[1].points));
        assert!(study.setup_exponent > 0.5 && study.setup_exponent < 3.0);
        assert!(study.apply_exponent > 0.5 && study.apply_exponent < 2.0);
    }

    #[test]
    fn scaling_study_requires_three_sizes() {
        let err = scaling_study(&small_config(), &[8, 12]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn stage_errors_name_the_failing_stage() {
        let config = ExperimentConfig {
            dims: [4, 4, 4],
            gamma: 4,
            wavelengths: Some(0.4),
            ..ExperimentConfig::default()
        };
        let err = run(&config).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "assembly",
                ..
            }
        ));
    }

    #[test]
    fn run_writes_the_requested_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            dims: [6, 6, 6],
            wavelengths: Some(0.6),
            sim_grid: Some([2, 1]),
            out: Some(dir.path().join("results.csv")),
            plot_dir: Some(dir.path().join("plots")),
            ..small_config()
        };
        let output = run(&config).unwrap();
        let written = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(written, output.csv);
        let comm = std::fs::read_to_string(dir.path().join("results.comm.csv")).unwrap();
        assert!(comm.starts_with("rank,class,entries_sent,messages\n"));
        let plot = std::fs::read_to_string(dir.path().join("plots/uniform_f0.dat")).unwrap();
        assert!(plot.starts_with("# iteration rel_residual\n"));
        assert_eq!(
            plot.lines().count(),
            1 + output.records[0].report.history.len()
        );
    }
}
