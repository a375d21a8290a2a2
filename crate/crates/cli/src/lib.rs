//! Command-line front end: single solves, parameter sweeps, spectra, the
//! convergence tables and the inflow Froude number histogram.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use swe_nmgm::analysis::{fit_rate_law, smoother_spectrum, SpectralReport};
use swe_nmgm::driver::{run_blusgs_baseline, run_nmgm, NmgmSolver, RunOutcome, SolverConfig, Status};
use swe_nmgm::physics::FluxKind;
use swe_nmgm::problems::{by_name, load_custom, CycleKind, Geometry, ProblemSpec};

/// Largest 1D mesh accepted by the spectrum report (dense eigensolve).
pub const MAX_SPECTRUM_CELLS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FluxArg {
    Hll,
    Hllc,
    Llf,
    Roe,
}

impl From<FluxArg> for FluxKind {
    fn from(f: FluxArg) -> Self {
        match f {
            FluxArg::Hll => FluxKind::Hll,
            FluxArg::Hllc => FluxKind::Hllc,
            FluxArg::Llf => FluxKind::Llf,
            FluxArg::Roe => FluxKind::Roe,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CycleArg {
    V,
    W,
}

impl From<CycleArg> for CycleKind {
    fn from(c: CycleArg) -> Self {
        match c {
            CycleArg::V => CycleKind::V,
            CycleArg::W => CycleKind::W,
        }
    }
}

fn cycle_name(c: CycleKind) -> &'static str {
    match c {
        CycleKind::V => "v",
        CycleKind::W => "w",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Solve,
    Sweep,
    Spectrum,
    Table1,
    Table2,
    Table3,
    FroudeHistogram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Newton multigrid.
    Nmgm,
    /// Nonlinear block LU-SGS passes only.
    Blusgs,
}

#[derive(Debug, Parser)]
#[command(name = "nmgm", version, about = "Steady shallow water solver (Newton multigrid)")]
pub struct Cli {
    /// Problem name (ex1, ex2-i, ex2-ii, ex3, ex4-i, ex4-ii, ex5[:F], ex6,
    /// ex7, uniform) or a path to a TOML problem file.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_enum)]
    pub flux: Option<FluxArg>,
    #[arg(long, value_enum)]
    pub cycle: Option<CycleArg>,
    /// Number of coarse levels N_L.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Multigrid cycles per Newton step.
    #[arg(long)]
    pub nmg: Option<usize>,
    /// Cells of a 1D mesh.
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub cells_x: Option<usize>,
    #[arg(long)]
    pub cells_y: Option<usize>,
    /// Regularization weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Newton relaxation.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eps_stop: Option<f64>,
    /// Initialization tolerance.
    #[arg(long)]
    pub eps_p: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "solve")]
    pub report: ReportKind,
    #[arg(long, value_enum, default_value = "nmgm")]
    pub method: Method,
    /// Mesh sizes for sweeps, spectra and tables (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Fluxes swept over (sweep and spectrum reports).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub fluxes: Vec<FluxArg>,
    /// Cycle kinds swept over.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub cycles: Vec<CycleArg>,
    /// Level counts swept over.
    #[arg(long, value_delimiter = ',')]
    pub sweep_levels: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub froude_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub froude_max: f64,
    #[arg(long, default_value_t = 20)]
    pub froude_points: usize,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown problem, unusable output directory.
    Config(String),
    /// The solver did not converge.
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failed(m) => write!(f, "flux-incompatible-or-diverged: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<swe_nmgm::Error> for CliError {
    fn from(e: swe_nmgm::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Everything a report needs, resolved from the flags and problem defaults.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub problem: ProblemSpec,
    pub config: SolverConfig,
    pub nx: usize,
    pub ny: usize,
    pub sizes: Vec<usize>,
    pub fluxes: Vec<FluxKind>,
    pub cycles: Vec<CycleKind>,
    pub level_counts: Vec<usize>,
    pub method: Method,
    pub out: PathBuf,
    pub report: ReportKind,
}

fn load_problem(name: &str) -> Result<ProblemSpec, CliError> {
    let path = Path::new(name);
    if path.is_file() {
        Ok(load_custom(path)?)
    } else {
        Ok(by_name(name)?)
    }
}

fn default_problem(report: ReportKind) -> Option<&'static str> {
    match report {
        ReportKind::Table1 => Some("ex1"),
        ReportKind::Table2 => Some("ex2-i"),
        ReportKind::Table3 => Some("ex2-ii"),
        ReportKind::FroudeHistogram => Some("ex5"),
        ReportKind::Spectrum => Some("ex1"),
        _ => None,
    }
}

impl RunManifest {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let name = match (&cli.problem, default_problem(cli.report)) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.to_string(),
            (None, None) => return Err(CliError::Config("--problem is required for this report".into())),
        };
        let problem = load_problem(&name)?;
        let mut config = SolverConfig::for_problem(&problem);
        if let Some(f) = cli.flux {
            config.flux = f.into();
        }
        if let Some(c) = cli.cycle {
            config.cycle = c.into();
        }
        if let Some(l) = cli.levels {
            config.levels = l;
        }
        if let Some(n) = cli.nmg {
            config.n_mg = n;
        }
        if let Some(a) = cli.alpha {
            config.alpha = a;
        }
        if let Some(t) = cli.tau {
            config.tau = t;
        }
        if let Some(e) = cli.eps_stop {
            config.eps_stop = e;
        }
        if let Some(e) = cli.eps_p {
            config.eps_p = e;
        }
        config.validate()?;

        let (nx, ny) = match problem.dim() {
            1 => {
                if cli.cells_y.is_some() {
                    return Err(CliError::Config("--cells-y only applies to 2D problems".into()));
                }
                if cli.cells.is_some() && cli.cells_x.is_some() {
                    return Err(CliError::Config("give --cells or --cells-x, not both".into()));
                }
                (cli.cells.or(cli.cells_x).unwrap_or(problem.defaults.nx), 1)
            }
            _ => {
                if cli.cells.is_some() {
                    return Err(CliError::Config("2D problems take --cells-x and --cells-y".into()));
                }
                (
                    cli.cells_x.unwrap_or(problem.defaults.nx),
                    cli.cells_y.unwrap_or(problem.defaults.ny),
                )
            }
        };
        let table = matches!(cli.report, ReportKind::Table1 | ReportKind::Table2 | ReportKind::Table3);
        let sizes = if !cli.sizes.is_empty() {
            cli.sizes.clone()
        } else if table || cli.report == ReportKind::Spectrum {
            vec![64, 128, 256, 512, 1024]
        } else {
            vec![nx]
        };
        let fluxes: Vec<FluxKind> = if !cli.fluxes.is_empty() {
            cli.fluxes.iter().map(|&f| f.into()).collect()
        } else if table || (cli.report == ReportKind::Spectrum && cli.flux.is_none()) {
            vec![FluxKind::Hll, FluxKind::Llf, FluxKind::Roe]
        } else {
            vec![config.flux]
        };
        let cycles = if cli.cycles.is_empty() {
            vec![config.cycle]
        } else {
            cli.cycles.iter().map(|&c| c.into()).collect()
        };
        let level_counts = if cli.sweep_levels.is_empty() {
            vec![config.levels]
        } else {
            cli.sweep_levels.clone()
        };
        let m = RunManifest {
            problem,
            config,
            nx,
            ny,
            sizes,
            fluxes,
            cycles,
            level_counts,
            method: cli.method,
            out: cli.out.clone(),
            report: cli.report,
        };
        m.validate(cli)?;
        Ok(m)
    }

    fn validate(&self, cli: &Cli) -> Result<(), CliError> {
        if self.sizes.contains(&0) || self.level_counts.is_empty() || self.cycles.is_empty() || self.fluxes.is_empty() {
            return Err(CliError::Config("sweep axes must be non-empty with positive sizes".into()));
        }
        match self.report {
            ReportKind::Spectrum => {
                if self.problem.dim() != 1 {
                    return Err(CliError::Config("spectra are computed for 1D problems only".into()));
                }
                if let Some(&n) = self.sizes.iter().find(|&&n| n > MAX_SPECTRUM_CELLS) {
                    return Err(CliError::Config(format!(
                        "spectrum size {n} exceeds the dense limit of {MAX_SPECTRUM_CELLS} cells"
                    )));
                }
            }
            ReportKind::Table1 | ReportKind::Table2 | ReportKind::Table3 => {
                if self.problem.dim() != 1 {
                    return Err(CliError::Config("tables are built from 1D problems".into()));
                }
                if let Some(&n) = self.sizes.iter().find(|&&n| n > MAX_SPECTRUM_CELLS) {
                    return Err(CliError::Config(format!("table size {n} exceeds {MAX_SPECTRUM_CELLS} cells")));
                }
            }
            ReportKind::FroudeHistogram => {
                if !self.problem.name.starts_with("ex5") {
                    return Err(CliError::Config("the Froude histogram runs on ex5".into()));
                }
                let (lo, hi) = (cli.froude_min, cli.froude_max);
                if cli.froude_points == 0 || !(lo > 0.0) || !(hi >= lo) {
                    return Err(CliError::Config("need a positive Froude range and at least one point".into()));
                }
            }
            ReportKind::Sweep if self.problem.dim() == 2 && self.sizes.len() > 1 => {
                return Err(CliError::Config("2D sweeps take a single --cells-x/--cells-y mesh".into()));
            }
            _ => {}
        }
        Ok(())
    }

    fn prepare_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))
    }
}

/// Writes through a temporary file and a rename so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn run_one(m: &RunManifest, config: &SolverConfig, method: Method, nx: usize, ny: usize) -> Result<RunOutcome, CliError> {
    Ok(match method {
        Method::Nmgm => run_nmgm(&m.problem, config, nx, ny)?,
        Method::Blusgs => run_blusgs_baseline(&m.problem, config, nx, ny)?,
    })
}

/// Runs the report selected in `cli`. Returns the text printed on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let m = RunManifest::from_cli(cli)?;
    m.prepare_out()?;
    match m.report {
        ReportKind::Solve => cmd_solve(&m),
        ReportKind::Sweep => cmd_sweep(&m),
        ReportKind::Spectrum => cmd_spectrum(&m),
        ReportKind::Table1 | ReportKind::Table2 | ReportKind::Table3 => cmd_table(&m),
        ReportKind::FroudeHistogram => cmd_froude(&m, cli),
    }
}

pub fn cmd_solve(m: &RunManifest) -> Result<String, CliError> {
    let started = Instant::now();
    let out = run_one(m, &m.config, m.method, m.nx, m.ny)?;
    let seconds = started.elapsed().as_secs_f64();
    let mut sol = Vec::new();
    out.write_solution(&mut sol).map_err(|e| io_err(&m.out, e))?;
    write_atomic(&m.out.join("solution.txt"), &sol)?;
    let mut csv = Vec::new();
    out.history.write_csv(&mut csv).map_err(|e| io_err(&m.out, e))?;
    write_atomic(&m.out.join("convergence.csv"), &csv)?;
    let h = &out.history;
    let mesh = if m.problem.dim() == 1 {
        format!("N={}", m.nx)
    } else {
        format!("N={}x{}", m.nx, m.ny)
    };
    let summary = format!(
        "{} {mesh} flux={} cycle={} levels={}: status={} steps={} residual={:.3e} time={seconds:.2}s",
        m.problem.name,
        m.config.flux,
        cycle_name(m.config.cycle),
        m.config.levels,
        h.status,
        h.n_steps(),
        h.final_residual(),
    );
    if h.status == Status::Converged {
        Ok(summary)
    } else {
        let why = h.message.clone().unwrap_or_else(|| h.status.to_string());
        Err(CliError::Failed(format!("{summary} ({why})")))
    }
}

pub fn cmd_sweep(m: &RunManifest) -> Result<String, CliError> {
    let mut points = Vec::new();
    for &n in &m.sizes {
        for &flux in &m.fluxes {
            for &cycle in &m.cycles {
                for &levels in &m.level_counts {
                    points.push((n, flux, cycle, levels));
                }
            }
        }
    }
    let rows: Vec<String> = points
        .par_iter()
        .map(|&(n, flux, cycle, levels)| {
            let cfg = SolverConfig {
                flux,
                cycle,
                levels,
                ..m.config.clone()
            };
            let (nx, ny) = if m.problem.dim() == 1 { (n, 1) } else { (m.nx, m.ny) };
            let (status, steps, residual) = match run_one(m, &cfg, m.method, nx, ny) {
                Ok(o) => (o.history.status.to_string(), o.history.n_steps().to_string(), format!("{:.6e}", o.history.final_residual())),
                Err(e) => (format!("error: {e}").replace(',', ";"), String::new(), String::new()),
            };
            format!("{n},{flux},{},{levels},{status},{steps},{residual}", cycle_name(cycle))
        })
        .collect();
    let mut csv = String::from("n,flux,cycle,levels,status,steps,residual\n");
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    write_atomic(&m.out.join("sweep.csv"), csv.as_bytes())?;
    let failed = rows.iter().filter(|r| !r.contains(",converged,")).count();
    let text = format!("sweep: {} points, {failed} not converged", rows.len());
    if failed == 0 {
        Ok(text)
    } else {
        Err(CliError::Failed(text))
    }
}

fn spacing(p: &ProblemSpec, n: usize) -> f64 {
    match p.geometry {
        Geometry::Interval { x_min, x_max } => (x_max - x_min) / n as f64,
        Geometry::Channel { .. } => f64::NAN,
    }
}

/// Smoother spectrum at the converged NMGM state.
fn converged_spectrum(p: &ProblemSpec, config: &SolverConfig, n: usize) -> Result<SpectralReport, String> {
    let out = run_nmgm(p, config, n, 1).map_err(|e| e.to_string())?;
    if out.history.status != Status::Converged {
        return Err(out.history.status.to_string());
    }
    let mut s = NmgmSolver::new(p, config, n, 1).map_err(|e| e.to_string())?;
    s.states = out.states;
    smoother_spectrum(&s).map_err(|e| e.to_string())
}

pub fn cmd_spectrum(m: &RunManifest) -> Result<String, CliError> {
    let points: Vec<(FluxKind, usize)> = m.fluxes.iter().flat_map(|&f| m.sizes.iter().map(move |&n| (f, n))).collect();
    let results: Vec<Result<SpectralReport, String>> = points
        .par_iter()
        .map(|&(flux, n)| converged_spectrum(&m.problem, &SolverConfig { flux, ..m.config.clone() }, n))
        .collect();
    let mut csv = String::from("flux,n,dx,rho,r_inf,status\n");
    let mut fits = String::from("flux,c,rms\n");
    let mut summary = Vec::new();
    for &flux in &m.fluxes {
        let mut samples = Vec::new();
        for ((f, n), r) in points.iter().zip(&results) {
            if *f != flux {
                continue;
            }
            let dx = spacing(&m.problem, *n);
            match r {
                Ok(rep) => {
                    let mut scatter = Vec::new();
                    rep.write_scatter(&mut scatter).map_err(|e| io_err(&m.out, e))?;
                    write_atomic(&m.out.join(format!("eigenvalues_{flux}_{n}.txt")), &scatter)?;
                    writeln!(csv, "{flux},{n},{dx:.6e},{:.8},{:.6e},ok", rep.rho, rep.r_inf).unwrap();
                    samples.push((dx, rep.rho));
                }
                Err(e) => writeln!(csv, "{flux},{n},{dx:.6e},,,{}", e.replace(',', ";")).unwrap(),
            }
        }
        match fit_rate_law(&samples) {
            Ok(fit) => {
                writeln!(fits, "{flux},{:.6},{:.3e}", fit.c, fit.residual).unwrap();
                summary.push(format!("{flux} C={:.4}", fit.c));
            }
            Err(_) => summary.push(format!("{flux} C=n/a")),
        }
    }
    write_atomic(&m.out.join("spectrum.csv"), csv.as_bytes())?;
    write_atomic(&m.out.join("rate_fit.csv"), fits.as_bytes())?;
    Ok(format!("spectrum: {}", summary.join(", ")))
}

#[derive(Clone, Copy, Debug)]
enum Variant {
    Blusgs,
    Cycle(CycleKind, usize),
}

impl Variant {
    fn label(&self) -> String {
        match self {
            Variant::Blusgs => "BLU-SGS N_step".into(),
            Variant::Cycle(c, l) => format!("{}-cycle N_L={l} N_step", cycle_name(*c).to_uppercase()),
        }
    }
}

const TABLE_VARIANTS: [Variant; 5] = [
    Variant::Blusgs,
    Variant::Cycle(CycleKind::V, 1),
    Variant::Cycle(CycleKind::V, 3),
    Variant::Cycle(CycleKind::V, 5),
    Variant::Cycle(CycleKind::W, 5),
];

fn table_entry(m: &RunManifest, flux: FluxKind, variant: Variant, n: usize) -> String {
    let (method, cfg) = match variant {
        Variant::Blusgs => (Method::Blusgs, SolverConfig { flux, ..m.config.clone() }),
        Variant::Cycle(cycle, levels) => (
            Method::Nmgm,
            SolverConfig {
                flux,
                cycle,
                levels,
                ..m.config.clone()
            },
        ),
    };
    match run_one(m, &cfg, method, n, 1) {
        Ok(o) if o.history.status == Status::Converged => o.history.n_steps().to_string(),
        Ok(o) => format!("{}({})", o.history.status, o.history.n_steps()),
        Err(_) => "error".into(),
    }
}

pub fn cmd_table(m: &RunManifest) -> Result<String, CliError> {
    let kind = match m.report {
        ReportKind::Table1 => "table1",
        ReportKind::Table2 => "table2",
        _ => "table3",
    };
    let mut jobs = Vec::new();
    for (fi, &flux) in m.fluxes.iter().enumerate() {
        for (vi, &v) in TABLE_VARIANTS.iter().enumerate() {
            for (ni, &n) in m.sizes.iter().enumerate() {
                jobs.push((fi, Some((vi, v)), ni, flux, n));
            }
        }
        for (ni, &n) in m.sizes.iter().enumerate() {
            jobs.push((fi, None, ni, flux, n));
        }
    }
    let entries: Vec<(String, String)> = jobs
        .par_iter()
        .map(|&(_, v, _, flux, n)| match v {
            Some((_, variant)) => (table_entry(m, flux, variant, n), String::new()),
            None => match converged_spectrum(&m.problem, &SolverConfig { flux, ..m.config.clone() }, n) {
                Ok(r) => (format!("{:.5}", r.rho), format!("{:.4e}", r.r_inf)),
                Err(_) => ("n/a".into(), "n/a".into()),
            },
        })
        .collect();

    let n_sizes = m.sizes.len();
    let mut rows: Vec<(String, String, Vec<String>)> = Vec::new();
    for (fi, &flux) in m.fluxes.iter().enumerate() {
        let base = fi * (TABLE_VARIANTS.len() + 1) * n_sizes;
        for (vi, v) in TABLE_VARIANTS.iter().enumerate() {
            let start = base + vi * n_sizes;
            rows.push((flux.name().to_uppercase(), v.label(), entries[start..start + n_sizes].iter().map(|e| e.0.clone()).collect()));
        }
        let start = base + TABLE_VARIANTS.len() * n_sizes;
        let spec = &entries[start..start + n_sizes];
        rows.push((flux.name().to_uppercase(), "rho".into(), spec.iter().map(|e| e.0.clone()).collect()));
        rows.push((flux.name().to_uppercase(), "R_inf".into(), spec.iter().map(|e| e.1.clone()).collect()));
    }

    let mut csv = String::from("flux,row");
    for n in &m.sizes {
        write!(csv, ",{n}").unwrap();
    }
    csv.push('\n');
    for (f, r, vals) in &rows {
        writeln!(csv, "{f},{r},{}", vals.join(",")).unwrap();
    }
    write_atomic(&m.out.join(format!("{kind}.csv")), csv.as_bytes())?;

    let label_w = rows.iter().map(|r| r.0.len() + r.1.len() + 1).max().unwrap_or(1).max(1);
    let col_w = rows.iter().flat_map(|r| r.2.iter().map(|v| v.len())).max().unwrap_or(4).max(6);
    let mut text = format!("{kind}: {}\n{:label_w$}", m.problem.name, "N");
    for n in &m.sizes {
        write!(text, "  {n:>col_w$}").unwrap();
    }
    text.push('\n');
    for (f, r, vals) in &rows {
        write!(text, "{:label_w$}", format!("{f} {r}")).unwrap();
        for v in vals {
            write!(text, "  {v:>col_w$}").unwrap();
        }
        text.push('\n');
    }
    write_atomic(&m.out.join(format!("{kind}.txt")), text.as_bytes())?;
    Ok(text.trim_end().to_string())
}

/// Uniform grid of inflow Froude numbers; the critical value 1 is kept in
/// the list but has no well-posed inflow data.
pub fn froude_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

pub fn cmd_froude(m: &RunManifest, cli: &Cli) -> Result<String, CliError> {
    let grid = froude_grid(cli.froude_min, cli.froude_max, cli.froude_points);
    let rows: Vec<String> = grid
        .par_iter()
        .map(|&f| {
            // Round so grid points such as 0.30000000000000004 read cleanly.
            let f = (f * 1e9).round() / 1e9;
            let problem = match swe_nmgm::problems::example5(f) {
                Ok(p) => p,
                Err(e) => return format!("{f},,{},,", e.to_string().replace(',', ";")),
            };
            let local = RunManifest {
                problem,
                ..m.clone()
            };
            match run_one(&local, &m.config, m.method, m.nx, m.ny) {
                Ok(o) => {
                    let phys = local.problem.physics();
                    let sub = o.states.iter().filter(|s| s.h > 0.0 && s.froude(&phys) < 1.0).count();
                    let sup = o.states.iter().filter(|s| s.froude(&phys) > 1.0).count();
                    format!("{f},{},{},{sub},{sup}", o.history.n_steps(), o.history.status)
                }
                Err(e) => format!("{f},,{},,", e.to_string().replace(',', ";")),
            }
        })
        .collect();
    let mut csv = String::from("f_in,steps,status,subcritical_cells,supercritical_cells\n");
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    write_atomic(&m.out.join("froude_histogram.csv"), csv.as_bytes())?;
    Ok(format!("froude_histogram: {} points", rows.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("nmgm").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn froude_grid_is_uniform() {
        assert_eq!(froude_grid(0.5, 0.5, 1), vec![0.5]);
        let g = froude_grid(0.1, 2.0, 20);
        assert_eq!(g.len(), 20);
        assert!((g[19] - 2.0).abs() < 1e-15 && (g[1] - g[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn flags_override_problem_defaults() {
        let m = RunManifest::from_cli(&parse(&["--problem", "ex3", "--flux", "hll", "--levels", "2", "--tau", "0.5"])).unwrap();
        assert_eq!(m.config.flux, FluxKind::Hll);
        assert_eq!(m.config.cycle, CycleKind::W);
        assert_eq!((m.config.levels, m.config.tau, m.nx, m.ny), (2, 0.5, 512, 1));
        let m = RunManifest::from_cli(&parse(&["--problem", "ex7", "--cells-x", "32"])).unwrap();
        assert_eq!((m.nx, m.ny), (32, 64));
    }

    #[test]
    fn tables_pick_their_problem() {
        let m = RunManifest::from_cli(&parse(&["--report", "table3"])).unwrap();
        assert_eq!(m.problem.name, "ex2-ii");
        assert_eq!(m.sizes, vec![64, 128, 256, 512, 1024]);
        assert_eq!(m.fluxes.len(), 3);
        assert!(RunManifest::from_cli(&parse(&["--report", "table1", "--problem", "ex7"])).is_err());
        assert!(RunManifest::from_cli(&parse(&["--report", "solve"])).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"x\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Failed(String::new()).exit_code(), 1);
    }
}
