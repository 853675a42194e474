use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlsw::ansatz::{self, AnsatzSpec, AnsatzBoundsRow};
use nlsw::config::RunConfig;
use nlsw::io::{self, FieldFile};
use nlsw::regularize::{g_audit, g_minimize, RegularizeAudit, RegularizeConfig};
use nlsw::variational::{self, TraceRow};
use nlsw::{verify, CutoffPhi, Error, FunctionalReport, Physics};

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "nlsw", version, about = "Traveling waves of nonlinear Schrödinger equations")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Worker threads (overrides the configuration and NLSW_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the vortex-ring test field and check its momentum bracket.
    Ansatz {
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "A")]
        a: Option<f64>,
        /// Points per axis (overrides the configured grid).
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        half_width: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bounds CSV; also evaluates the configured (R, eps) sweep.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Functional report of a field as CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact x1 dilation onto the Pohozaev set.
    Project {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constrained minimization from a seed field.
    Minimize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Penalized Ginzburg-Landau regularization of a field.
    Regularize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Run the invariant suite; one JSON line per check.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Error(Error),
    NotConverged(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ProjectionInfeasible(_) => EXIT_NOT_CONVERGED,
        Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::NotConverged(m)) => {
            eprintln!("not converged: {m}");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}

fn init_threads(cli: Option<usize>, cfg: usize) -> Outcome {
    let env = std::env::var("NLSW_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    let n = cli.filter(|&n| n > 0).or(Some(cfg).filter(|&n| n > 0)).or(env).unwrap_or(0);
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let (cfg, base) = match &cli.config {
        Some(p) => (RunConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no command given; see --help".into()).into());
    };
    init_threads(cli.threads, cfg.threads)?;
    let physics = Physics::new(cfg.model.build(&base)?);
    match command {
        Command::Ansatz { r, eps, a, grid, half_width, out, csv } => {
            cmd_ansatz(&cfg, &physics, r, eps, a, grid, half_width, out.as_deref(), csv.as_deref())
        }
        Command::Report { input, c, out } => cmd_report(&cfg, &physics, &input, c, out.as_deref()),
        Command::Project { input, c, out } => cmd_project(&cfg, &physics, &input, c, &out),
        Command::Minimize { input, c, out, trace } => cmd_minimize(&cfg, &physics, &input, c, &out, trace.as_deref()),
        Command::Regularize { input, h, out, audit } => cmd_regularize(&cfg, &physics, &input, h, &out, audit.as_deref()),
        Command::Verify { out } => cmd_verify(&cfg, &physics, out.as_deref()),
    }
}

fn speed(cfg: &RunConfig, physics: &Physics, c: Option<f64>) -> Result<f64, Error> {
    let mut cfg = cfg.clone();
    if c.is_some() {
        cfg.c = c;
    }
    cfg.speed(&physics.model)
}

fn load_field(path: &Path, physics: &Physics) -> Result<nlsw::ComplexField, Error> {
    let f = io::load(path)?;
    if f.phi_id != CutoffPhi::CONSTRUCTION_ID {
        return Err(Error::Format(format!("unknown cutoff construction id {}", f.phi_id)));
    }
    if (f.r0 - physics.r0()).abs() > 1e-12 * physics.r0() {
        return Err(Error::Config(format!("field has r0 = {} but the model has r0 = {}", f.r0, physics.r0())));
    }
    Ok(f.field)
}

fn save_field(path: &Path, field: nlsw::ComplexField, physics: &Physics) -> Result<(), Error> {
    io::save(path, &FieldFile::new(field, physics.r0()))
}

fn sink(path: Option<&Path>) -> std::io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_ansatz(
    cfg: &RunConfig,
    physics: &Physics,
    r: Option<f64>,
    eps: Option<f64>,
    a: Option<f64>,
    n: Option<usize>,
    half_width: Option<f64>,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Outcome {
    let r = r.unwrap_or(cfg.ansatz.r);
    let eps = eps.unwrap_or(cfg.ansatz.eps);
    let a = a.or(cfg.ansatz.a).unwrap_or(r);
    let spec = AnsatzSpec::new(a, r, eps, physics.r0())?;
    let mut gc = cfg.grid.clone();
    if let Some(n) = n {
        gc.sizes = vec![n];
    }
    if let Some(w) = half_width {
        gc.half_width = vec![w];
        gc.spacing = None;
    }
    let grid = gc.build()?;
    let c = cfg.speed(&physics.model)?;
    let row = ansatz::bounds_row(&spec, &grid, c, physics)?;
    let mut rows = vec![row];
    if csv.is_some() {
        let h = cfg.ansatz.sweep_spacing;
        let dim = grid.dim();
        let rep = ansatz::verify_bounds(&cfg.ansatz.sweep(), dim, c, physics, |s| ansatz::fitted_grid(s, dim, h, 2.0))?;
        rows.extend(rep.rows);
    }
    if let Some(p) = out {
        save_field(p, ansatz::vortex_field(&spec, &grid)?, physics)?;
    }
    let mut w = sink(csv)?;
    writeln!(w, "{}", AnsatzBoundsRow::csv_header())?;
    for row in &rows {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()?;
    match rows.iter().find(|r| !r.q_in_bounds) {
        None => Ok(()),
        Some(bad) => Err(Failure::Invariant(format!(
            "Q = {} outside [{}, {}] for R = {}, eps = {}",
            bad.q, bad.q_lo, bad.q_hi, bad.r, bad.eps
        ))),
    }
}

fn cmd_report(cfg: &RunConfig, physics: &Physics, input: &Path, c: Option<f64>, out: Option<&Path>) -> Outcome {
    let u = load_field(input, physics)?;
    let c = speed(cfg, physics, c)?;
    let rep = physics.report(&u, c)?;
    let mut w = sink(out)?;
    writeln!(w, "{}", FunctionalReport::csv_header())?;
    writeln!(w, "{}", rep.csv_row(u.grid()))?;
    w.flush()?;
    Ok(())
}

fn cmd_project(cfg: &RunConfig, physics: &Physics, input: &Path, c: Option<f64>, out: &Path) -> Outcome {
    let u = load_field(input, physics)?;
    let c = speed(cfg, physics, c)?;
    let before = physics.report(&u, c)?;
    let sigma = variational::project_sigma(&before)?;
    let v = variational::apply_projection(&u, sigma);
    let after = physics.report(&v, c)?;
    println!("sigma0,{}", FunctionalReport::csv_header());
    println!("{sigma},{}", after.csv_row(v.grid()));
    save_field(out, v, physics)?;
    Ok(())
}

fn cmd_minimize(
    cfg: &RunConfig,
    physics: &Physics,
    input: &Path,
    c: Option<f64>,
    out: &Path,
    trace: Option<&Path>,
) -> Outcome {
    let u0 = load_field(input, physics)?;
    let mut mc = cfg.minimize.clone();
    mc.c = speed(cfg, physics, c)?;
    let (u, tr) = variational::minimize(&u0, &mc, physics)?;
    save_field(out, u, physics)?;
    if let Some(p) = trace {
        let mut w = sink(Some(p))?;
        writeln!(w, "{}", TraceRow::csv_header())?;
        for row in &tr.rows {
            writeln!(w, "{}", row.csv_row())?;
        }
        w.flush()?;
    }
    println!(
        "{}",
        serde_json::json!({
            "converged": tr.converged,
            "iterations": tr.iterations,
            "residual": tr.residual,
            "alpha": tr.alpha,
            "sigma_final": tr.sigma_final,
            "t_c_estimate": tr.t_c_estimate,
            "pohozaev": tr.pohozaev,
            "lower_bound_warnings": tr.lower_bound_warnings,
        })
    );
    if tr.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("{} iterations, residual {:e}", tr.iterations, tr.residual)))
    }
}

fn cmd_regularize(
    cfg: &RunConfig,
    physics: &Physics,
    input: &Path,
    h: Option<f64>,
    out: &Path,
    audit: Option<&Path>,
) -> Outcome {
    let u = load_field(input, physics)?;
    let rc = RegularizeConfig { h: h.unwrap_or(cfg.regularize.run.h), ..cfg.regularize.run.clone() };
    let (v, outcome) = g_minimize(&u, &rc, physics)?;
    let a = g_audit(&u, &v, &rc, physics)?;
    save_field(out, v, physics)?;
    let mut w = sink(audit)?;
    writeln!(w, "{}", RegularizeAudit::csv_header())?;
    writeln!(w, "{}", a.csv_row())?;
    w.flush()?;
    if a.e_gl_drop < -1e-12 * a.e_gl_u.max(1.0) {
        return Err(Failure::Invariant(format!("E_GL rose from {} to {}", a.e_gl_u, a.e_gl_v)));
    }
    if outcome.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "{} iterations, gradient ratio {:e}",
            outcome.iterations, outcome.gradient_ratio
        )))
    }
}

fn cmd_verify(cfg: &RunConfig, physics: &Physics, out: Option<&Path>) -> Outcome {
    let c = cfg.speed(&physics.model)?;
    let verdicts = verify::run_suite(cfg, physics, c)?;
    let mut w = sink(out)?;
    for v in &verdicts {
        writeln!(w, "{}", v.json_line())?;
    }
    w.flush()?;
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(failed.join(", ")))
    }
}
