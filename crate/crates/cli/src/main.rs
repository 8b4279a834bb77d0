//! `aeroflex` command-line driver.
//!
//! Every failure prints one machine-parseable line first,
//! `error kind=<config|usage|analysis|io> message="<text>"`, and exits with
//! 2 for configuration/usage errors and 1 for analysis failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aeroflex::analysis::{flutter_speed, gust_response, sigma_sweep, trim_solve};
use aeroflex::beam::{modal_frequencies, static_solve, static_solve_linear, BeamMesh, StaticOptions, UniformLoad};
use aeroflex::output::{self, StaticProfile};
use aeroflex::{parse_config, Error, FlutterBasis, RunConfig};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

/// Environment variable overriding the output directory.
const OUT_ENV: &str = "AEROFLEX_OUT";

#[derive(Parser, Debug)]
#[command(name = "aeroflex", version, about = "Coupled aeroelastic and flight-dynamics analysis of very flexible wings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file (`{}` selects the baseline aircraft).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (AEROFLEX_OUT takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Natural frequencies of the clamped semi-span wing.
    Modal,
    /// Linear and nonlinear static deflection under a uniform vertical load.
    Static,
    /// Trim of the free-flying aircraft at the configured speed.
    Trim,
    /// Flutter speed of the clamped semi-span wing.
    Flutter {
        /// Linearization basis (overrides `analysis.flutter.basis`).
        #[arg(long, value_enum)]
        basis: Option<BasisArg>,
    },
    /// Time-domain gust encounter from trim.
    Gust,
    /// Trim, stability, flutter and gust over `sigma_list`.
    Sweep,
    /// Modal and flutter benchmark suite.
    Validate,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BasisArg {
    Undeformed,
    Prestressed,
}

impl From<BasisArg> for FlutterBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Undeformed => FlutterBasis::Undeformed,
            BasisArg::Prestressed => FlutterBasis::Prestressed,
        }
    }
}

/// A failure classified for reporting.
struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = match &e {
            // configuration values are validated up front, so any other
            // input error arises inside an analysis
            Error::Config { .. } => ("config", 2),
            Error::Io { .. } => ("io", 1),
            _ => ("analysis", 1),
        };
        Failure {
            kind,
            message: e.to_string(),
            code,
        }
    }
}

fn analysis_failure(message: impl Into<String>) -> Failure {
    Failure {
        kind: "analysis",
        message: message.into(),
        code: 1,
    }
}

/// Single-line rendering: newlines folded, quotes escaped.
fn error_line(kind: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message=\"{}\"", flat.replace('\\', "\\\\").replace('"', "\\\""))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            eprint!("{text}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", error_line(f.kind, &f.message));
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    match &cli.config {
        Some(p) => Ok(parse_config(p)?),
        None => Err(Failure {
            kind: "usage",
            message: "missing required option --config <path>".into(),
            code: 2,
        }),
    }
}

/// Output directory: `AEROFLEX_OUT`, then `--out`, then the configured
/// `output_dir`, then `./out`.
fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    output::write_file(path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| analysis_failure(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

fn write_plots(plots: &[(output::LinePlot, &str)], dir: &Path) -> Result<(), Failure> {
    let written = output::write_plots(plots, dir)?;
    if written.is_empty() {
        eprintln!("warning: no data to plot; no SVG files written");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let out = output_dir(cli, &cfg);
    match cli.command {
        Command::Modal => modal(&cfg, &out),
        Command::Static => static_deflection(&cfg, &out),
        Command::Trim => trim(&cfg, &out),
        Command::Flutter { basis } => flutter(&cfg, &out, basis.map(Into::into)),
        Command::Gust => gust(&cfg, &out),
        Command::Sweep => sweep(&cfg, &out, cli.jobs),
        Command::Validate => validate(&cfg),
    }
}

fn cantilever(cfg: &RunConfig) -> Result<BeamMesh, Failure> {
    let a = &cfg.aircraft;
    Ok(BeamMesh::cantilever(a.semi_span, a.elements_per_side + 1, &a.section())?)
}

fn modal(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mesh = cantilever(cfg)?;
    let modes = modal_frequencies(&mesh, cfg.sigma, cfg.analysis.n_modes)?;
    println!("{:>4}  {:>12}  label", "mode", "omega [rad/s]");
    for (i, m) in modes.iter().enumerate() {
        println!("{:>4}  {:>12.4}  {}", i + 1, m.omega, m.label);
    }
    write(&out.join("modal.csv"), &output::modal_csv(&modes))
}

fn static_deflection(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mesh = cantilever(cfg)?;
    // body axes are z down: an upward load is negative z
    let load = UniformLoad {
        force: Vector3::new(0.0, 0.0, -cfg.analysis.static_load),
        follower: false,
    };
    let nonlinear = static_solve(&mesh, &load, cfg.sigma, &StaticOptions::default())?;
    let linear = static_solve_linear(&mesh, &load, cfg.sigma)?;
    let profile = StaticProfile {
        s: mesh.nodes.iter().map(|p| p.y).collect(),
        linear: linear.iter().map(|n| [n.u.x, n.u.y, n.u.z]).collect(),
        nonlinear: nonlinear.states.iter().map(|n| [n.u.x, n.u.y, n.u.z]).collect(),
    };
    let tip = mesh.n_nodes() - 1;
    println!(
        "tip deflection: linear {:.4} m, nonlinear {:.4} m ({} Newton iterations)",
        -linear[tip].u.z,
        -nonlinear.states[tip].u.z,
        nonlinear.iterations
    );
    write(&out.join("static.csv"), &output::static_csv(&profile))
}

fn trim(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let t = trim_solve(cfg, cfg.flight.u, cfg.sigma, cfg.analysis.trim_mode)?;
    let report = t.report(cfg.sigma);
    println!(
        "alpha_trim {:.6} rad, thrust {:.4} N, tail load {:.4} N, tip deflection {:.4} m, converged {}",
        report.alpha_trim, report.thrust_trim, report.tail_load, report.tip_deflection, report.converged
    );
    write_json(&out.join("trim.json"), &report)?;
    if !t.converged {
        return Err(analysis_failure(format!(
            "trim did not converge (residuals {:.3e}, {:.3e})",
            t.residuals.0, t.residuals.1
        )));
    }
    Ok(())
}

fn flutter(cfg: &RunConfig, out: &Path, basis: Option<FlutterBasis>) -> Result<(), Failure> {
    let basis = basis.unwrap_or(cfg.analysis.flutter.basis);
    let start = Instant::now();
    let f = flutter_speed(cfg, cfg.sigma, basis)?;
    println!(
        "{basis} basis, sigma {}: V_f = {:.3} m/s, frequency {:.3} rad/s ({:.1} s)",
        cfg.sigma,
        f.v_f,
        f.flutter_frequency,
        start.elapsed().as_secs_f64()
    );
    write_json(&out.join("flutter.json"), &f)?;
    write(&out.join("flutter_trace.csv"), &output::damping_trace_csv(&f))
}

fn gust(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let (_, history, failure) = gust_response(cfg, cfg.sigma)?;
    if history.rows.is_empty() {
        eprintln!("warning: empty time history; nothing written");
    } else {
        write(&out.join("gust.csv"), &output::timehistory_csv(&history))?;
        write_plots(&output::gust_plots(&history), out)?;
        println!(
            "peak change: root moment {:.4} N·m, tip deflection {:.4} m",
            history.peak_change(2),
            history.peak_change(1)
        );
    }
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn sweep(cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    use std::io::Write;
    let jobs = jobs
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let path = out.join("sweep.csv");
    output::write_file(&path, &format!("{}\n", output::SWEEP_COLUMNS.join(",")))?;
    let mut file = std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut io_error = None;
    let records = sigma_sweep(cfg, &cfg.sigma_list, jobs, |r| {
        // rows are flushed as soon as they are complete
        let line = format!("{}\n", output::sweep_row(r));
        if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
            io_error.get_or_insert(e);
        }
        println!(
            "sigma {}: {}",
            r.sigma,
            if r.failures.is_empty() { "ok".to_string() } else { r.failures.join("; ") }
        );
    });
    if let Some(e) = io_error {
        return Err(Error::io(&path, e).into());
    }
    println!("wrote {}", path.display());
    write_plots(&output::sweep_plots(&records), out)?;
    let failed = records.iter().filter(|r| !r.failures.is_empty()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} sweep points had failed stages", records.len());
    }
    Ok(())
}

/// Reference natural frequencies of the clamped wing [rad/s].
const MODAL_REFERENCE: [(f64, &str); 4] = [
    (2.24, "1st out-of-plane bending"),
    (14.07, "2nd out-of-plane bending"),
    (31.04, "1st torsion"),
    (31.71, "1st in-plane bending"),
];
const MODAL_TOLERANCE: f64 = 0.01;
const FLUTTER_REFERENCE: f64 = 31.2;
const FLUTTER_TOLERANCE: f64 = 0.05;
const FLUTTER_FREQUENCY: f64 = 22.0;
const FLUTTER_FREQUENCY_TOLERANCE: f64 = 3.0;

/// The benchmarks are defined for the baseline stiffness, so `sigma` is
/// ignored here.
fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    const SIGMA: f64 = 1.0;
    let mut all = true;
    let mut check = |name: String, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        all &= ok;
    };
    let mesh = cantilever(cfg)?;
    let modes = modal_frequencies(&mesh, SIGMA, MODAL_REFERENCE.len())?;
    for (i, ((reference, name), m)) in MODAL_REFERENCE.iter().zip(&modes).enumerate() {
        let err = (m.omega - reference).abs() / reference;
        check(
            format!(
                "mode {} ({name}): {:.4} rad/s vs {reference} rad/s, error {:.2}% (limit {:.0}%)",
                i + 1,
                m.omega,
                100.0 * err,
                100.0 * MODAL_TOLERANCE
            ),
            err <= MODAL_TOLERANCE,
        );
    }
    match flutter_speed(cfg, SIGMA, FlutterBasis::Undeformed) {
        Ok(f) => {
            let err = (f.v_f - FLUTTER_REFERENCE).abs() / FLUTTER_REFERENCE;
            check(
                format!(
                    "flutter speed: {:.3} m/s vs {FLUTTER_REFERENCE} m/s, error {:.2}% (limit {:.0}%)",
                    f.v_f,
                    100.0 * err,
                    100.0 * FLUTTER_TOLERANCE
                ),
                err <= FLUTTER_TOLERANCE,
            );
            check(
                format!(
                    "flutter frequency: {:.3} rad/s vs {FLUTTER_FREQUENCY} ± {FLUTTER_FREQUENCY_TOLERANCE} rad/s",
                    f.flutter_frequency
                ),
                (f.flutter_frequency - FLUTTER_FREQUENCY).abs() <= FLUTTER_FREQUENCY_TOLERANCE,
            );
        }
        Err(e) => check(format!("flutter speed: {e}"), false),
    }
    if all {
        Ok(())
    } else {
        Err(analysis_failure("benchmark suite failed"))
    }
}
