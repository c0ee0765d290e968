//! `sparse-pr`: command-line front end for sparse phase retrieval.
//!
//! Exit codes: 0 success, 1 usage error or malformed input, 2 a negative
//! result (not certified, collision found), 3 a fragile rank decision under
//! `--strict`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sparse_pr::distance::{certify_unique, distance_with, DistanceCriterion};
use sparse_pr::experiments::{emit_results, exhibit_ambiguity, render, run_sweep, OutputFormat, SweepConfig};
use sparse_pr::format;
use sparse_pr::solution::sparse_vector_json;
use sparse_pr::solver_complex::{collision_probe_complex, solve_l0_complex_with, ComplexSolveOptions, ProbeVerdict};
use sparse_pr::solver_real::{self, solve_l0_real};
use sparse_pr::{measure, Field, MeasurementEnsemble};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;
const EXIT_FRAGILE: u8 = 3;

#[derive(Parser)]
#[command(name = "sparse-pr", version, about = "Uniqueness certification and l0 recovery for sparse phase retrieval")]
struct Cli {
    /// Suppress the timestamped log line on stderr.
    #[arg(long, global = true)]
    no_log: bool,
    /// Exit with code 3 when a rank decision was fragile.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Self {
        match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    /// Null vectors must give two non-equivalent signals.
    Ambiguous,
    /// Any rank deficiency counts.
    Rank,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Gnuplot,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Gnuplot => OutputFormat::Gnuplot,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded Gaussian measurement matrix.
    Gen {
        #[arg(long, value_enum)]
        field: FieldArg,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Output file (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute y = |Ax| for a sparse vector file.
    Measure {
        matrix: PathBuf,
        signal: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Phase-generalized minimum distance of a real matrix.
    Dist {
        matrix: PathBuf,
        /// Largest side of a support pair (defaults to m).
        #[arg(long)]
        max_support: Option<usize>,
        #[arg(long, value_enum, default_value = "ambiguous")]
        criterion: CriterionArg,
    },
    /// Certify that every k-sparse real signal is recoverable up to sign.
    Certify {
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Recover all sparsest signals consistent with the measurements.
    Solve {
        matrix: PathBuf,
        measurements: PathBuf,
        #[arg(long)]
        kmax: usize,
        #[arg(long, default_value_t = solver_real::DEFAULT_TOL)]
        tol: f64,
        /// Complex only: search levels with m < k^2 by Gauss-Newton restarts.
        #[arg(long)]
        heuristic: bool,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Look for two non-equivalent k-sparse signals with equal measurements.
    Collide {
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        /// Complex probe restarts per support pair.
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a recovery-rate sweep from a JSON config.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Also write the result into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Measure { .. } => "measure",
            Command::Dist { .. } => "dist",
            Command::Certify { .. } => "certify",
            Command::Solve { .. } => "solve",
            Command::Collide { .. } => "collide",
            Command::Sweep { .. } => "sweep",
        }
    }
}

struct Outcome {
    stdout: String,
    code: u8,
    summary: String,
}

impl Outcome {
    fn ok(stdout: String, summary: impl Into<String>) -> Self {
        Self {
            stdout,
            code: EXIT_OK,
            summary: summary.into(),
        }
    }
}

/// A failure that maps to exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn in_file<T>(path: &Path, r: sparse_pr::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> Result<MeasurementEnsemble, Failure> {
    let text = format::read_to_string(path)?;
    in_file(path, format::parse_matrix(&text))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn write_or_return(output: Option<&Path>, contents: String) -> Result<String, Failure> {
    match output {
        Some(path) => {
            format::write_file(path, &contents)?;
            Ok(String::new())
        }
        None => Ok(contents),
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Gen {
            field,
            m,
            n,
            seed,
            output,
        } => {
            let a = MeasurementEnsemble::generate((*field).into(), *m, *n, *seed)?;
            let text = write_or_return(output.as_deref(), format::write_matrix(&a))?;
            Ok(Outcome::ok(text, format!("{m}x{n} seed {seed}")))
        }
        Command::Measure { matrix, signal, output } => {
            let a = read_matrix(matrix)?;
            let text = format::read_to_string(signal)?;
            let x = in_file(signal, format::parse_sparse_vector(&text, Some(a.field())))?;
            let y = measure(&a, &x)?;
            let text = write_or_return(output.as_deref(), format::write_measurements(&y))?;
            Ok(Outcome::ok(text, format!("{} measurements", y.len())))
        }
        Command::Dist {
            matrix,
            max_support,
            criterion,
        } => {
            let a = read_matrix(matrix)?;
            let criterion = match criterion {
                CriterionArg::Ambiguous => DistanceCriterion::Ambiguous,
                CriterionArg::Rank => DistanceCriterion::RankDeficient,
            };
            let report = distance_with(&a, max_support.unwrap_or(a.m()), criterion)?;
            let code = if cli.strict && report.fragile { EXIT_FRAGILE } else { EXIT_OK };
            Ok(Outcome {
                stdout: pretty(&report.to_json()),
                code,
                summary: format!("d = {}, fragile = {}", report.d, report.fragile),
            })
        }
        Command::Certify { matrix, k } => {
            let a = read_matrix(matrix)?;
            let cert = certify_unique(&a, *k)?;
            let code = if cli.strict && cert.fragile() {
                EXIT_FRAGILE
            } else if cert.certified {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            };
            Ok(Outcome {
                stdout: pretty(&cert.to_json()),
                code,
                summary: format!("k = {k}, d = {}, certified = {}", cert.distance.d, cert.certified),
            })
        }
        Command::Solve {
            matrix,
            measurements,
            kmax,
            tol,
            heuristic,
            restarts,
            seed,
        } => {
            let a = read_matrix(matrix)?;
            let text = format::read_to_string(measurements)?;
            let y = in_file(measurements, format::parse_measurements(&text))?;
            let sol = match a.field() {
                Field::Real => solve_l0_real(&a, &y, *kmax, *tol)?,
                Field::Complex => solve_l0_complex_with(
                    &a,
                    &y,
                    *kmax,
                    &ComplexSolveOptions {
                        tol: *tol,
                        allow_heuristic: *heuristic,
                        restarts: *restarts,
                        seed: *seed,
                    },
                )?,
            };
            Ok(Outcome::ok(
                pretty(&sol.to_json()),
                format!("k_star = {:?}, classes = {}", sol.k_star, sol.classes.len()),
            ))
        }
        Command::Collide {
            matrix,
            k,
            restarts,
            seed,
        } => {
            let a = read_matrix(matrix)?;
            let (found, body) = match a.field() {
                Field::Real => collide_real(&a, *k)?,
                Field::Complex => collide_complex(&a, *k, *restarts, *seed)?,
            };
            Ok(Outcome {
                stdout: pretty(&body),
                code: if found { EXIT_NEGATIVE } else { EXIT_OK },
                summary: format!("k = {k}, collision found = {found}"),
            })
        }
        Command::Sweep { config, format, out } => {
            let text = format::read_to_string(config)?;
            let cfg = in_file(config, SweepConfig::from_json_str(&text))?;
            let result = run_sweep(&cfg)?;
            let written = match out {
                Some(dir) => format!(", wrote {}", emit_results(&result, (*format).into(), dir)?.display()),
                None => String::new(),
            };
            Ok(Outcome::ok(
                render(&result, (*format).into()),
                format!("{} rows{written}", result.rows.len()),
            ))
        }
    }
}

fn collide_real(a: &MeasurementEnsemble, k: usize) -> Result<(bool, Value), Failure> {
    let amb = exhibit_ambiguity(a, k)?;
    let body = match &amb {
        Some(amb) => json!({
            "field": Field::Real,
            "k": k,
            "verdict": ProbeVerdict::CollisionFound,
            "method": amb.source,
            "x": sparse_vector_json(&amb.x),
            "z": sparse_vector_json(&amb.z),
            "solver_classes": amb.solver_classes,
        }),
        None => json!({
            "field": Field::Real,
            "k": k,
            "verdict": ProbeVerdict::NoCollisionFound,
        }),
    };
    Ok((amb.is_some(), body))
}

fn collide_complex(a: &MeasurementEnsemble, k: usize, restarts: usize, seed: u64) -> Result<(bool, Value), Failure> {
    let probe = collision_probe_complex(a, k, restarts, seed)?;
    let found = probe.verdict == ProbeVerdict::CollisionFound;
    let mut body = json!({
        "field": Field::Complex,
        "k": k,
        "verdict": probe.verdict,
        "method": "probe",
        "objective": if probe.objective.is_finite() { json!(probe.objective) } else { Value::Null },
        "restarts": probe.restarts,
        "support_pairs": probe.support_pairs,
    });
    if let Some((u, v)) = &probe.pair {
        body["x"] = sparse_vector_json(u);
        body["z"] = sparse_vector_json(v);
    }
    Ok((found, body))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SPARSE_PR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure(format!("SPARSE_PR_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn log_line(command: &str, code: u8, summary: &str) {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    eprintln!(
        "[{}.{:03}] sparse-pr {command}: exit {code}, {summary}",
        now.as_secs(),
        now.subsec_millis()
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let outcome = configure_threads().and_then(|()| run(&cli));
    let (code, summary) = match outcome {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.stdout.as_bytes()).and_then(|()| stdout.flush()).is_err() {
                return ExitCode::from(EXIT_USAGE);
            }
            (out.code, out.summary)
        }
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            (EXIT_USAGE, msg)
        }
    };
    if !cli.no_log {
        log_line(cli.command.name(), code, &summary);
    }
    ExitCode::from(code)
}
