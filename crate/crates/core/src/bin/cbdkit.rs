use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use cbdkit::bmo::{bmo_norm, BmoKind, BmoRequest, BmoSymbols};
use cbdkit::commutator::GridOperator;
use cbdkit::domination::{build_p1_certificate, verify_certificate};
use cbdkit::grid::GridFunction;
use cbdkit::harness::{run_audit, AuditConfig};
use cbdkit::tuples::{SymbolVector, Tuple};
use cbdkit::weights::{ap_characteristic, MatrixWeight};
use cbdkit::Error;

/// Kernel arrays above this many numbers are left out of `dominate` output unless asked for.
const KERNEL_GATE: usize = 4096;

#[derive(Parser)]
#[command(name = "cbdkit", version, about = "Matrix-weighted commutator and convex-body domination audits on dyadic grids")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the audit suites and write the report.
    Audit {
        /// Audit config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// [W]_{A_p}, or [U,V]_{A_p} with --pair.
    Weights {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One BMO-type norm of a symbol vector (or scalar symbol).
    Bmo {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        symbols: PathBuf,
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        v: PathBuf,
        #[arg(long)]
        p: f64,
        /// Comma-separated sub-tuple of 1..m; all of 1..m when absent.
        #[arg(long, conflicts_with = "j")]
        sigma: Option<String>,
        #[arg(long)]
        j: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and verify a sparse domination certificate for T applied to f.
    Dominate {
        #[arg(long)]
        op: PathBuf,
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        r: f64,
        /// Always include kernels, whatever their size.
        #[arg(long)]
        kernels: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    body: Value,
}

impl Failure {
    fn input(flag: &str, e: Error) -> Self {
        let body = match &e {
            Error::Invalid { path, msg } => json!({ "error": msg, "input": flag, "path": path }),
            other => json!({ "error": other.to_string(), "input": flag }),
        };
        Failure { code: 2, body }
    }

    fn plain(e: Error) -> Self {
        let body = match &e {
            Error::Invalid { path, msg } => json!({ "error": msg, "path": path }),
            other => json!({ "error": other.to_string() }),
        };
        Failure { code: 2, body }
    }
}

fn read(flag: &str, path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure { code: 2, body: json!({ "error": format!("cannot read {}: {e}", path.display()), "input": flag }) })
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    match out {
        Some(p) => std::fs::write(p, text + "\n")
            .map_err(|e| Failure { code: 2, body: json!({ "error": format!("cannot write {}: {e}", p.display()) }) }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn weight(flag: &str, path: &Path) -> Result<MatrixWeight, Failure> {
    MatrixWeight::from_json_str(&read(flag, path)?).map_err(|e| Failure::input(flag, e))
}

fn parse_sigma(text: &str, m: usize) -> Result<Tuple, Failure> {
    let elems = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::input("--sigma", Error::Invalid { path: "/".into(), msg: e.to_string() }))?;
    Tuple::new(elems, m).map_err(|e| Failure::input("--sigma", e))
}

fn symbol_vector(text: &str) -> Result<SymbolVector, Failure> {
    let flag = "--symbols";
    let v: Value = cbdkit::grid::parse_json(text).map_err(|e| Failure::input(flag, e))?;
    let items: Vec<(Value, String)> = match v {
        Value::Array(xs) => xs.into_iter().enumerate().map(|(i, x)| (x, format!("/{i}"))).collect(),
        other => vec![(other, String::new())],
    };
    let fields = items
        .into_iter()
        .map(|(x, path)| {
            GridFunction::from_json_value(x, &path)
                .and_then(GridFunction::into_matrix)
                .map_err(|e| Failure::input(flag, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    SymbolVector::new(fields).map_err(|e| Failure::input(flag, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Audit { config, out } => {
            let cfg = match &config {
                Some(p) => AuditConfig::from_json_str(&read("--config", p)?).map_err(|e| Failure::input("--config", e))?,
                None => AuditConfig::default(),
            };
            let report = run_audit(&cfg).map_err(Failure::plain)?;
            emit(&serde_json::to_value(&report).expect("report serializes"), out.as_deref())?;
            if !report.exact_pass {
                let names: Vec<&str> = report.exact_failures().iter().map(|c| c.name.as_str()).collect();
                return Err(Failure { code: 3, body: json!({ "error": "exact checks failed", "checks": names }) });
            }
            Ok(())
        }
        Cmd::Weights { input, p, pair, out } => {
            let u = weight("--in", &input)?;
            let v = pair.as_deref().map(|p| weight("--pair", p)).transpose()?;
            let cv = ap_characteristic(&u, v.as_ref(), p).map_err(|e| Failure::input("--p", e))?;
            emit(&json!({ "ap": cv.value, "cube": cv.cube }), out.as_deref())
        }
        Cmd::Bmo { kind, symbols, u, v, p, sigma, j, out } => {
            let kind: BmoKind = kind.parse().map_err(|e| Failure::input("--kind", e))?;
            let (u, v) = (weight("--u", &u)?, weight("--v", &v)?);
            let text = read("--symbols", &symbols)?;
            let value = if kind.is_scalar() {
                if sigma.is_some() {
                    return Err(Failure::input("--sigma", Error::Invalid { path: "/".into(), msg: format!("{kind} takes --j, not --sigma") }));
                }
                let b = GridFunction::from_json_str(&text).and_then(GridFunction::into_scalar).map_err(|e| Failure::input("--symbols", e))?;
                bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Scalar { b: &b, j: j.unwrap_or(1) }, u: &u, v: &v, p })
            } else {
                if j.is_some() {
                    return Err(Failure::input("--j", Error::Invalid { path: "/".into(), msg: format!("{kind} takes --sigma, not --j") }));
                }
                let b = symbol_vector(&text)?;
                let sigma = match &sigma {
                    Some(s) => parse_sigma(s, b.m())?,
                    None => Tuple::full(b.m()),
                };
                bmo_norm(&BmoRequest { kind, symbols: BmoSymbols::Matrix { b: &b, sigma: &sigma }, u: &u, v: &v, p })
            }
            .map_err(Failure::plain)?;
            emit(&serde_json::to_value(value).expect("value serializes"), out.as_deref())
        }
        Cmd::Dominate { op, f, eps, r, kernels, out } => {
            let op = GridOperator::from_json_str(&read("--op", &op)?).map_err(|e| Failure::input("--op", e))?;
            let f = GridFunction::from_json_str(&read("--f", &f)?).and_then(GridFunction::into_vector).map_err(|e| Failure::input("--f", e))?;
            let cert = build_p1_certificate(&op, &f, eps, r).map_err(Failure::plain)?;
            let report = verify_certificate(&cert, &op, &f).map_err(Failure::plain)?;
            let size: usize = cert.model.terms().iter().map(|t| t.kernel.len() * cert.model.matrix_dim().map_or(1, |n| n * n)).sum();
            let with_kernels = kernels || size <= KERNEL_GATE;
            let mut body = cert.to_json(with_kernels);
            body["kernels_included"] = json!(with_kernels);
            body["report"] = serde_json::to_value(&report).expect("report serializes");
            emit(&body, out.as_deref())?;
            if !report.pass {
                return Err(Failure { code: 3, body: json!({ "error": "certificate failed verification" }) });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f.body).expect("JSON values serialize"));
            ExitCode::from(f.code)
        }
    }
}
