//! Configuration, command dispatch, and artifact persistence.
//!
//! Runs are driven by a flat key=value config file (dotted keys, `#`
//! comments), hashed so every artifact can name the exact configuration it
//! came from. Reruns with the same config produce byte-identical JSON: all
//! randomness is seeded, iteration order is fixed, and nothing
//! time-dependent is written.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//!   fields/*.csv      barrier, eigenfunction, and solution fields
//!   summary/*.json    per-step machine-readable summaries
//!   report.json       the verification report, one record per check
//! ```

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::barriers::BarrierSet;
use crate::grid::{Domain, Field, Grid};
use crate::nonlinearity::Exponents;
use crate::operator::EllipticOperator;
use crate::solver::{
    self, assess_fields, continuation, solve_branch, Branch, SolveConfig, SolveResult,
};
use crate::verify::{
    check_bounds, check_convergence_data, check_distinctness, check_synchronous_sign,
    check_uniqueness, check_weak_form, VerificationReport,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, key `{key}`: {msg}")]
    Config {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Grid {
        context: String,
        #[source]
        source: crate::grid::GridError,
    },
    #[error("{context}: {source}")]
    Barriers {
        context: String,
        #[source]
        source: crate::barriers::BarrierError,
    },
    #[error("{context}: {source}")]
    Operator {
        context: String,
        #[source]
        source: crate::operator::OperatorError,
    },
    #[error("{context}: {source}")]
    Nonlinearity {
        context: String,
        #[source]
        source: crate::nonlinearity::NonlinearityError,
    },
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: solver::SolverError,
    },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Barriers,
    Eigen,
    Solve,
    Continuation,
    Verify,
    All,
}

impl std::str::FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Command, String> {
        match s {
            "barriers" => Ok(Command::Barriers),
            "eigen" => Ok(Command::Eigen),
            "solve" => Ok(Command::Solve),
            "continuation" => Ok(Command::Continuation),
            "verify" => Ok(Command::Verify),
            "all" => Ok(Command::All),
            other => Err(format!(
                "unknown command `{other}` (expected barriers|eigen|solve|continuation|verify|all)"
            )),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Barriers => "barriers",
            Command::Eigen => "eigen",
            Command::Solve => "solve",
            Command::Continuation => "continuation",
            Command::Verify => "verify",
            Command::All => "all",
        };
        f.write_str(s)
    }
}

/// Fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub n: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Layer width; defaults to 4h when absent.
    pub delta: Option<f64>,
    /// Regularization for the constant-sign solves (0 = singular).
    pub eps: f64,
    pub omega: f64,
    pub tol_update: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
    pub eps_schedule: Vec<f64>,
    pub early_stop_h1: Option<f64>,
    pub n_starts: usize,
    pub seed: u64,
    pub branches: Vec<Branch>,
    pub out_dir: PathBuf,
    /// SHA-256 of the raw config text.
    pub config_hash: String,
}

struct KeyValue {
    line: usize,
    value: String,
    used: std::cell::Cell<bool>,
}

fn parse_schedule(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    // power-range form: 2^-a..2^-b
    if let Some((lo, hi)) = spec.split_once("..") {
        let parse_pow =
            |s: &str| -> Option<i32> { s.trim().strip_prefix("2^")?.trim().parse::<i32>().ok() };
        if let (Some(a), Some(b)) = (parse_pow(lo), parse_pow(hi)) {
            if a >= 0 || b >= 0 || b > a {
                return Err("power range must be of the form 2^-a..2^-b with a <= b".into());
            }
            return Ok((-a..=-b).map(|k| (2.0f64).powi(-k)).collect());
        }
        return Err("could not parse power range".into());
    }
    let vals: Result<Vec<f64>, _> = spec.split(',').map(|t| t.trim().parse::<f64>()).collect();
    vals.map_err(|e| e.to_string())
}

/// Parses the flat key=value config format. Unknown keys, missing required
/// keys, and malformed values are reported with their key and line.
pub fn parse_config(text: &str, out_override: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut map: std::collections::BTreeMap<String, KeyValue> = Default::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| CliError::Config {
            line,
            key: t.to_string(),
            msg: "expected key = value".into(),
        })?;
        let key = k.trim().to_string();
        if map.contains_key(&key) {
            return Err(CliError::Config {
                line,
                key,
                msg: "duplicate key".into(),
            });
        }
        map.insert(
            key,
            KeyValue {
                line,
                value: v.trim().to_string(),
                used: std::cell::Cell::new(false),
            },
        );
    }

    let get = |key: &str| -> Option<&KeyValue> {
        let kv = map.get(key);
        if let Some(kv) = kv {
            kv.used.set(true);
        }
        kv
    };
    let require = |key: &str| -> Result<&KeyValue, CliError> {
        get(key).ok_or_else(|| CliError::Config {
            line: 0,
            key: key.to_string(),
            msg: "required key missing".into(),
        })
    };
    fn parsed<T: std::str::FromStr>(key: &str, kv: &KeyValue) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        kv.value.parse::<T>().map_err(|e| CliError::Config {
            line: kv.line,
            key: key.to_string(),
            msg: format!("bad value `{}`: {e}", kv.value),
        })
    }

    let kind_kv = require("domain.kind")?;
    let domain = match kind_kv.value.as_str() {
        "interval" => Domain::Interval {
            length: parsed("domain.length", require("domain.length")?)?,
        },
        "rectangle" => Domain::Rectangle {
            lx: parsed("domain.lx", require("domain.lx")?)?,
            ly: parsed("domain.ly", require("domain.ly")?)?,
        },
        other => {
            return Err(CliError::Config {
                line: kind_kv.line,
                key: "domain.kind".into(),
                msg: format!("expected interval or rectangle, got `{other}`"),
            })
        }
    };
    let n: usize = parsed("grid.n", require("grid.n")?)?;
    let alpha1: f64 = parsed("exponents.alpha1", require("exponents.alpha1")?)?;
    let alpha2: f64 = parsed("exponents.alpha2", require("exponents.alpha2")?)?;
    let beta1: f64 = parsed("exponents.beta1", require("exponents.beta1")?)?;
    let beta2: f64 = parsed("exponents.beta2", require("exponents.beta2")?)?;

    let delta = match get("barriers.delta") {
        Some(kv) => Some(parsed::<f64>("barriers.delta", kv)?),
        None => None,
    };
    let eps = match get("solver.eps") {
        Some(kv) => parsed::<f64>("solver.eps", kv)?,
        None => 0.0,
    };
    let omega = match get("solver.omega") {
        Some(kv) => parsed::<f64>("solver.omega", kv)?,
        None => 0.5,
    };
    let tol_update = match get("solver.tol_update") {
        Some(kv) => parsed::<f64>("solver.tol_update", kv)?,
        None => 1e-10,
    };
    let tol_residual = match get("solver.tol_residual") {
        Some(kv) => parsed::<f64>("solver.tol_residual", kv)?,
        None => 1e-10,
    };
    let max_iter = match get("solver.max_iter") {
        Some(kv) => parsed::<usize>("solver.max_iter", kv)?,
        None => 5000,
    };
    let eps_schedule = match get("solver.eps_schedule") {
        Some(kv) => parse_schedule(&kv.value).map_err(|msg| CliError::Config {
            line: kv.line,
            key: "solver.eps_schedule".into(),
            msg,
        })?,
        None => solver::default_schedule(),
    };
    let early_stop_h1 = match get("solver.early_stop_h1") {
        Some(kv) => Some(parsed::<f64>("solver.early_stop_h1", kv)?),
        None => Some(1e-8),
    };
    let n_starts = match get("verify.n_starts") {
        Some(kv) => parsed::<usize>("verify.n_starts", kv)?,
        None => 10,
    };
    let seed = match get("run.seed") {
        Some(kv) => parsed::<u64>("run.seed", kv)?,
        None => 42,
    };
    let branches = match get("run.branches") {
        Some(kv) => {
            let mut out = Vec::new();
            for tok in kv.value.split(',') {
                out.push(match tok.trim() {
                    "positive" => Branch::Positive,
                    "negative" => Branch::Negative,
                    "nodal" => Branch::Nodal,
                    other => {
                        return Err(CliError::Config {
                            line: kv.line,
                            key: "run.branches".into(),
                            msg: format!("unknown branch `{other}`"),
                        })
                    }
                });
            }
            out
        }
        None => vec![Branch::Positive, Branch::Negative, Branch::Nodal],
    };
    let out_dir = match out_override {
        Some(d) => {
            get("output.dir"); // consume the key if present
            d
        }
        None => get("output.dir")
            .map(|kv| PathBuf::from(&kv.value))
            .unwrap_or_else(|| PathBuf::from("out")),
    };

    if let Some((key, kv)) = map.iter().find(|(_, kv)| !kv.used.get()) {
        return Err(CliError::Config {
            line: kv.line,
            key: key.clone(),
            msg: "unknown key".into(),
        });
    }

    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let config_hash = hex_digest(hasher);

    Ok(RunConfig {
        domain,
        n,
        alpha1,
        alpha2,
        beta1,
        beta2,
        delta,
        eps,
        omega,
        tol_update,
        tol_residual,
        max_iter,
        eps_schedule,
        early_stop_h1,
        n_starts,
        seed,
        branches,
        out_dir,
        config_hash,
    })
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything the pipeline steps share.
pub struct Pipeline {
    pub grid: Arc<Grid>,
    pub op: EllipticOperator,
    pub exps: Exponents,
    pub barriers: BarrierSet,
    pub delta: f64,
}

impl Pipeline {
    pub fn build(cfg: &RunConfig) -> Result<Pipeline, CliError> {
        let grid = Grid::build_shared(cfg.domain, cfg.n).map_err(|source| CliError::Grid {
            context: "building grid".into(),
            source,
        })?;
        let op = EllipticOperator::assemble(&grid);
        let exps = Exponents::validate(cfg.alpha1, cfg.alpha2, cfg.beta1, cfg.beta2).map_err(
            |source| CliError::Nonlinearity {
                context: "validating exponents".into(),
                source,
            },
        )?;
        let delta = cfg.delta.unwrap_or(4.0 * grid.hx);
        let barriers =
            BarrierSet::build(&op, &exps, delta).map_err(|source| CliError::Barriers {
                context: "building barriers".into(),
                source,
            })?;
        Ok(Pipeline {
            grid,
            op,
            exps,
            barriers,
            delta,
        })
    }

    pub fn solve_config(&self, cfg: &RunConfig, branch: Branch) -> SolveConfig {
        let mut sc = SolveConfig::new(branch);
        sc.omega = cfg.omega;
        sc.tol_update = cfg.tol_update;
        sc.tol_residual = cfg.tol_residual;
        sc.max_iter = cfg.max_iter;
        sc.eps = match branch {
            Branch::Nodal => {
                if cfg.eps > 0.0 {
                    cfg.eps
                } else {
                    cfg.eps_schedule.first().copied().unwrap_or(0.5)
                }
            }
            _ => cfg.eps,
        };
        sc
    }
}

#[derive(Serialize)]
struct BarrierSummary<'a> {
    c: f64,
    big_c: f64,
    delta: f64,
    worst_node_slack: f64,
    worst_node: usize,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct EigenSummary<'a> {
    lambda1: f64,
    iterations: usize,
    config_hash: &'a str,
}

#[derive(Serialize, Deserialize)]
struct SolveSummary {
    branch: String,
    eps: f64,
    iterations: usize,
    residual_sup: f64,
    strong_residual_sup: f64,
    classification: String,
    synchronous_fraction: f64,
    near_zero_nodes: usize,
    box_check: serde_json::Value,
    big_c: f64,
    c: f64,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ContinuationSummary {
    eps_schedule: Vec<f64>,
    iterations: Vec<usize>,
    residuals: Vec<f64>,
    h1_diffs_u: Vec<f64>,
    h1_diffs_v: Vec<f64>,
    stopped_early: bool,
    failure: Option<String>,
    config_hash: String,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_field_csv(dir: &Path, name: &str, f: &Field, hash: &str) -> Result<(), CliError> {
    let path = dir.join(format!("{name}.csv"));
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    f.write_csv(&mut w, Some(hash)).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))
}

fn read_field_csv(dir: &Path, name: &str, grid: &Arc<Grid>) -> Result<Field, CliError> {
    let path = dir.join(format!("{name}.csv"));
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut r = std::io::BufReader::new(file);
    Field::read_csv(grid, &mut r).map_err(|source| CliError::Grid {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Positive => "positive",
        Branch::Negative => "negative",
        Branch::Nodal => "nodal",
    }
}

fn solve_summary(res: &SolveResult, pl: &Pipeline, hash: &str) -> SolveSummary {
    SolveSummary {
        branch: branch_name(res.branch).to_string(),
        eps: res.eps,
        iterations: res.iterations,
        residual_sup: res.residual_sup,
        strong_residual_sup: res.strong_residual_sup,
        classification: format!("{:?}", res.classification).to_lowercase(),
        synchronous_fraction: res.synchronous_fraction,
        near_zero_nodes: res.near_zero_nodes,
        box_check: serde_json::to_value(&res.box_check).unwrap_or(serde_json::Value::Null),
        big_c: pl.barriers.big_c,
        c: pl.barriers.c,
        config_hash: hash.to_string(),
    }
}

/// Runs a command against a parsed config; returns whether the run (and,
/// when applicable, the verification report) passed.
pub fn run(command: Command, cfg: &RunConfig) -> Result<bool, CliError> {
    let fields_dir = cfg.out_dir.join("fields");
    let summary_dir = cfg.out_dir.join("summary");
    fs::create_dir_all(&fields_dir).map_err(io_err(&fields_dir))?;
    fs::create_dir_all(&summary_dir).map_err(io_err(&summary_dir))?;
    let hash = cfg.config_hash.clone();

    let pl = Pipeline::build(cfg)?;

    let emit_barriers = |pl: &Pipeline| -> Result<(), CliError> {
        for (name, f) in [
            ("y1", &pl.barriers.y1),
            ("y2", &pl.barriers.y2),
            ("z1", &pl.barriers.z1),
            ("z2", &pl.barriers.z2),
        ] {
            write_field_csv(&fields_dir, name, f, &hash)?;
        }
        let (worst_node_slack, worst_node) = pl.barriers.ordering_slack();
        write_json(
            &summary_dir.join("barriers.json"),
            &BarrierSummary {
                c: pl.barriers.c,
                big_c: pl.barriers.big_c,
                delta: pl.delta,
                worst_node_slack,
                worst_node,
                config_hash: &hash,
            },
        )
    };

    let emit_eigen = |pl: &Pipeline| -> Result<(), CliError> {
        let pair = pl
            .op
            .principal_eigenpair(1e-12)
            .map_err(|source| CliError::Operator {
                context: "principal eigenpair".into(),
                source,
            })?;
        write_field_csv(&fields_dir, "phi1", &pair.phi1, &hash)?;
        write_json(
            &summary_dir.join("eigen.json"),
            &EigenSummary {
                lambda1: pair.lambda1,
                iterations: pair.iterations,
                config_hash: &hash,
            },
        )
    };

    let emit_solve = |pl: &Pipeline, res: &SolveResult| -> Result<(), CliError> {
        let b = branch_name(res.branch);
        write_field_csv(&fields_dir, &format!("u_{b}"), &res.u, &hash)?;
        write_field_csv(&fields_dir, &format!("v_{b}"), &res.v, &hash)?;
        write_json(
            &summary_dir.join(format!("solve_{b}.json")),
            &solve_summary(res, pl, &hash),
        )
    };

    let run_branch = |pl: &Pipeline, branch: Branch| -> Result<SolveResult, CliError> {
        let sc = pl.solve_config(cfg, branch);
        solve_branch(&sc, &pl.op, &pl.barriers, &pl.exps).map_err(|source| CliError::Solver {
            context: format!("{} branch", branch_name(branch)),
            source,
        })
    };

    let run_continuation = |pl: &Pipeline| -> Result<solver::ContinuationTrace, CliError> {
        let sc = pl.solve_config(cfg, Branch::Nodal);
        let trace = continuation(
            &cfg.eps_schedule,
            &sc,
            &pl.op,
            &pl.barriers,
            &pl.exps,
            cfg.early_stop_h1,
        )
        .map_err(|source| CliError::Solver {
            context: "continuation".into(),
            source,
        })?;
        let summary = ContinuationSummary {
            eps_schedule: trace.eps_schedule.clone(),
            iterations: trace.results.iter().map(|r| r.iterations).collect(),
            residuals: trace.results.iter().map(|r| r.residual_sup).collect(),
            h1_diffs_u: trace.h1_diffs.iter().map(|d| d.0).collect(),
            h1_diffs_v: trace.h1_diffs.iter().map(|d| d.1).collect(),
            stopped_early: trace.stopped_early,
            failure: trace
                .failure
                .as_ref()
                .map(|(k, m)| format!("stage {k}: {m}")),
            config_hash: hash.clone(),
        };
        write_json(&summary_dir.join("continuation.json"), &summary)?;
        if let Some(res) = trace.final_result() {
            emit_solve(pl, res)?;
        }
        Ok(trace)
    };

    match command {
        Command::Barriers => {
            emit_barriers(&pl)?;
            Ok(true)
        }
        Command::Eigen => {
            emit_eigen(&pl)?;
            Ok(true)
        }
        Command::Solve => {
            emit_barriers(&pl)?;
            for &branch in &cfg.branches {
                let res = run_branch(&pl, branch)?;
                emit_solve(&pl, &res)?;
            }
            Ok(true)
        }
        Command::Continuation => {
            emit_barriers(&pl)?;
            let trace = run_continuation(&pl)?;
            Ok(trace.completed())
        }
        Command::All => {
            emit_barriers(&pl)?;
            emit_eigen(&pl)?;
            let pos = run_branch(&pl, Branch::Positive)?;
            emit_solve(&pl, &pos)?;
            let neg = run_branch(&pl, Branch::Negative)?;
            emit_solve(&pl, &neg)?;
            let trace = run_continuation(&pl)?;
            if let Some((stage, msg)) = &trace.failure {
                return Err(CliError::Other(format!(
                    "continuation failed at stage {stage}: {msg}"
                )));
            }
            let nodal = trace.final_result().expect("continuation produced stages");

            let report = build_report_parts(
                cfg,
                &pl,
                &pos,
                &neg,
                nodal,
                &trace.h1_diffs,
                trace.results.len(),
            );
            print!("{}", report.render_table());
            write_json(
                &cfg.out_dir.join("report.json"),
                &ReportFile {
                    config_hash: &hash,
                    report: &report,
                },
            )?;
            Ok(report.overall_pass)
        }
        Command::Verify => {
            // reload fields from a previous run and re-check them
            let load = |branch: Branch, eps: f64| -> Result<SolveResult, CliError> {
                let b = branch_name(branch);
                let u = read_field_csv(&fields_dir, &format!("u_{b}"), &pl.grid)?;
                let v = read_field_csv(&fields_dir, &format!("v_{b}"), &pl.grid)?;
                assess_fields(
                    u,
                    v,
                    eps,
                    branch,
                    cfg.tol_residual,
                    &pl.op,
                    &pl.barriers,
                    &pl.exps,
                )
                .map_err(|source| CliError::Solver {
                    context: format!("re-assessing {b} fields"),
                    source,
                })
            };
            let cont_path = summary_dir.join("continuation.json");
            let cont_text = fs::read_to_string(&cont_path).map_err(io_err(&cont_path))?;
            let cont: ContinuationSummary = serde_json::from_str(&cont_text)
                .map_err(|e| CliError::Other(format!("parsing continuation.json: {e}")))?;
            let nodal_eps = *cont.eps_schedule.last().ok_or_else(|| {
                CliError::Other("continuation.json carries an empty schedule".into())
            })?;
            let pos = load(Branch::Positive, cfg.eps)?;
            let neg = load(Branch::Negative, cfg.eps)?;
            let nodal = load(Branch::Nodal, nodal_eps)?;
            let diffs: Vec<(f64, f64)> = cont
                .h1_diffs_u
                .iter()
                .zip(&cont.h1_diffs_v)
                .map(|(&a, &b)| (a, b))
                .collect();
            let report = build_report_parts(
                cfg,
                &pl,
                &pos,
                &neg,
                &nodal,
                &diffs,
                cont.eps_schedule.len(),
            );
            print!("{}", report.render_table());
            write_json(
                &cfg.out_dir.join("report.json"),
                &ReportFile {
                    config_hash: &hash,
                    report: &report,
                },
            )?;
            Ok(report.overall_pass)
        }
    }
}

fn build_report_parts(
    cfg: &RunConfig,
    pl: &Pipeline,
    pos: &SolveResult,
    neg: &SolveResult,
    nodal: &SolveResult,
    h1_diffs: &[(f64, f64)],
    stages: usize,
) -> VerificationReport {
    let mut checks = Vec::new();
    checks.push(check_bounds(pos, &pl.barriers, Branch::Positive));
    checks.push(check_bounds(neg, &pl.barriers, Branch::Negative));
    checks.push(check_bounds(nodal, &pl.barriers, Branch::Nodal));
    let base = pl.solve_config(cfg, Branch::Positive);
    checks.push(check_uniqueness(
        Branch::Positive,
        cfg.n_starts,
        cfg.seed,
        &pl.op,
        &pl.barriers,
        &pl.exps,
        &base,
    ));
    checks.push(check_uniqueness(
        Branch::Negative,
        cfg.n_starts,
        cfg.seed.wrapping_add(1),
        &pl.op,
        &pl.barriers,
        &pl.exps,
        &base,
    ));
    let tol_sign = solver::tol_sign_for(&nodal.u, &nodal.v);
    checks.push(check_synchronous_sign(nodal, tol_sign));
    checks.push(check_convergence_data(h1_diffs, stages));
    checks.push(check_distinctness(pos, neg, nodal));
    checks.push(check_weak_form(pos, &pl.op, &pl.exps));
    checks.push(check_weak_form(nodal, &pl.op, &pl.exps));
    VerificationReport::new(checks)
}
