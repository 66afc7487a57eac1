//! Config-driven runner for the mwlab verification suites.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for
//! configuration and input errors.

pub mod config;
pub mod report;
pub mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use mwlab::characteristics::{characteristic_with, counterexample_scan, CharOptions};
use mwlab::exponent::ExponentPair;
use mwlab::ledger::{Check, Ledger};
use mwlab::maximal::kp_lower_bound;
use rayon::prelude::*;
use serde_json::{json, Value};

use config::{Experiment, Format, Suite};
use report::{fmt_num, num, Entry, OutDir};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "RDF_LAB_OUT";
const DEFAULT_OUT: &str = "mwlab-out";

#[derive(Debug, Parser)]
#[command(name = "mwlab", version, about = "Matrix-weight characteristic and extrapolation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides RDF_LAB_OUT and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate characteristics over weights, bases and exponents.
    Characteristic(Common),
    /// Run verification suites and write the check ledger.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Restrict to one suite (repeatable); the config decides otherwise.
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<Suite>,
    },
    /// Refinement trends of the counterexample scan.
    Scan(Common),
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown suite '{s}'"))
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError { code: 2, message: message.into() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Stable name of a library error kind, as printed in messages.
pub fn error_name(e: &mwlab::Error) -> &'static str {
    match e {
        mwlab::Error::Domain(_) => "DomainError",
        mwlab::Error::Singular(_) => "SingularMatrixError",
        mwlab::Error::Construction(_) => "ConstructionError",
        mwlab::Error::DegenerateWeight(_) => "DegenerateWeightError",
        mwlab::Error::Config(_) => "ConfigError",
    }
}

/// Whether every check passed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(o) => o.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Characteristic(c) | Command::Scan(c) => c,
        Command::Verify { common, .. } => common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let t = Instant::now();
    let ex = Experiment::load(&common.config)?;
    stage("load", t);
    let mut out = OutDir::create(&out_dir(common.out.as_deref(), &ex))?;
    match &cli.command {
        Command::Characteristic(_) => cmd_characteristic(&ex, &mut out),
        Command::Verify { suite, .. } => {
            let suites = if suite.is_empty() { ex.suites() } else { suite.clone() };
            cmd_verify(&ex, &suites, &mut out)
        }
        Command::Scan(_) => cmd_scan(&ex, &mut out),
    }
}

/// `--out`, then `RDF_LAB_OUT`, then the config, then `mwlab-out`.
fn out_dir(flag: Option<&Path>, ex: &Experiment) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    ex.config.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Wall-clock timings go to stderr so report files stay reproducible.
fn stage(name: &str, t: Instant) {
    eprintln!("[{name}] {:.3} s", t.elapsed().as_secs_f64());
}

fn box_coords(c: &[usize]) -> String {
    c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn cmd_characteristic(ex: &Experiment, out: &mut OutDir) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let opts = CharOptions { pair_cap: ex.config.pair_cap, seed: ex.seed(), keep_per_box: false };
    let jobs: Vec<(usize, usize, ExponentPair)> =
        ex.cells.iter().flat_map(|&(w, b)| ex.pairs.iter().map(move |e| (w, b, *e))).collect();
    let reports = jobs
        .par_iter()
        .map(|&(w, b, e)| {
            characteristic_with(&ex.weights[w].1, &ex.bases[b].1, &e, &opts)
                .map_err(|err| CliError::config(format!("{}: {} {}: {err}", error_name(&err), ex.cell_id(w, b), e)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    stage("characteristic", t);

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "weight",
        "basis",
        "kind",
        "mode",
        "p",
        "q",
        "value",
        "infinite",
        "extremal_box",
        "box_lo",
        "box_hi",
        "extremal_point",
        "subsampled_boxes",
    ])?;
    let mut rows = Vec::new();
    for (&(w, b, e), r) in jobs.iter().zip(&reports) {
        let basis = &ex.bases[b].1;
        let kind = serde_json::to_value(basis.kind()).expect("plain enum");
        let mode = serde_json::to_value(basis.mode()).expect("plain enum");
        let (lo, hi) = r
            .extremal_box_coords
            .as_ref()
            .map_or((String::new(), String::new()), |g| (box_coords(&g.lo), box_coords(&g.hi)));
        let opt = |x: Option<usize>| x.map_or(String::new(), |x| x.to_string());
        csv.write_record([
            ex.weights[w].0.as_str(),
            ex.bases[b].0.as_str(),
            kind.as_str().unwrap_or_default(),
            mode.as_str().unwrap_or_default(),
            &e.p.to_string(),
            &e.q.to_string(),
            &fmt_num(r.value),
            if r.infinite { "true" } else { "false" },
            &opt(r.extremal_box),
            &lo,
            &hi,
            &opt(r.extremal_point),
            &r.meta.subsampled_boxes.to_string(),
        ])?;
        rows.push(json!({
            "weight": ex.weights[w].0,
            "basis": ex.bases[b].0,
            "kind": kind,
            "mode": mode,
            "p": e.p.to_string(),
            "q": e.q.to_string(),
            "value": num(r.value),
            "infinite": r.infinite,
            "extremal_box": r.extremal_box,
            "extremal_box_coords": r.extremal_box_coords.as_ref().map(|g| json!({"lo": g.lo, "hi": g.hi})),
            "extremal_point": r.extremal_point,
            "basis_size": r.meta.basis_size,
            "subsampled_boxes": r.meta.subsampled_boxes,
        }));
    }
    if ex.writes(Format::Csv) {
        out.write("characteristics.csv", &report::finish(csv)?)?;
    }
    if ex.writes(Format::Json) {
        out.write_json(
            "summary.json",
            &json!({
                "command": "characteristic",
                "config": ex.echo,
                "rows": rows,
                "summary": {"rows": rows.len(), "infinite": reports.iter().filter(|r| r.infinite).count()},
            }),
        )?;
    }
    println!("{} characteristic rows written to {}", rows.len(), out.root.display());
    Ok(Outcome::Pass)
}

pub fn cmd_verify(ex: &Experiment, suites: &[Suite], out: &mut OutDir) -> Result<Outcome, CliError> {
    ex.require_seed(suites)?;
    let mut entries = Vec::new();
    let mut per_suite = serde_json::Map::new();
    for &s in suites {
        let t = Instant::now();
        let found = suites::run(ex, s);
        stage(s.name(), t);
        let failed = found.iter().filter(|e| !e.check.pass).count();
        per_suite.insert(s.name().into(), json!({"checks": found.len(), "failed": failed}));
        entries.extend(found);
    }
    report::failures_first(&mut entries);
    let failed = entries.iter().filter(|e| !e.check.pass).count();
    let outcome = if failed == 0 { Outcome::Pass } else { Outcome::Fail };
    let table = report::ledger_table(&entries);
    if ex.writes(Format::Json) {
        out.write_json(
            "ledger.json",
            &json!({
                "command": "verify",
                "config": ex.echo,
                "suites": suites.iter().map(|s| s.name()).collect::<Vec<_>>(),
                "summary": {"checks": entries.len(), "failed": failed, "pass": failed == 0, "per_suite": per_suite},
                "checks": entries.iter().map(Entry::to_json).collect::<Vec<_>>(),
            }),
        )?;
    }
    if ex.writes(Format::Csv) {
        out.write("ledger.csv", &report::ledger_csv(&entries)?)?;
    }
    out.write("ledger.txt", &table)?;
    if failed > 0 {
        for line in table.lines().take(1 + failed.min(50)) {
            println!("{line}");
        }
    }
    if failed > 50 {
        println!("... {} more failures in ledger.txt", failed - 50);
    }
    for (name, v) in &per_suite {
        println!("{name}: {} checks, {} failed", v["checks"], v["failed"]);
    }
    println!("{}: {} checks, {failed} failed", if failed == 0 { "PASS" } else { "FAIL" }, entries.len());
    Ok(outcome)
}

pub fn cmd_scan(ex: &Experiment, out: &mut OutDir) -> Result<Outcome, CliError> {
    let scan = ex.config.scan.as_ref().ok_or_else(|| CliError::config("scan needs a scan section"))?;
    let pair = ExponentPair::new(scan.p, scan.q).map_err(|e| CliError::config(format!("scan exponents: {e}")))?;
    let t = Instant::now();
    let rows =
        counterexample_scan(&scan.spec(), &pair).map_err(|e| CliError::config(format!("{}: {e}", error_name(&e))))?;
    stage("scan", t);

    let mut ledger = Ledger::new();
    for r in rows.iter().filter(|r| r.family == "control_d1") {
        let id = format!("control.a{}.L{}", r.a, r.level);
        ledger.push(Check::eq(format!("{id}.ratio"), "scalar-identity", r.ratio, 1.0, 1e-10));
        ledger.push(Check::holds(format!("{id}.unflagged"), "scalar-identity", !r.flagged));
    }

    let mut trend = csv::Writer::from_writer(Vec::new());
    trend.write_record(["family", "kappa", "a", "level", "apq", "ws_ar", "ratio", "flagged"])?;
    let mut long = csv::Writer::from_writer(Vec::new());
    long.write_record(["family", "kappa", "a", "level", "variable", "value"])?;
    for r in &rows {
        let key = [r.family.clone(), fmt_num(r.kappa), fmt_num(r.a), r.level.to_string()];
        let flag = if r.flagged { "true" } else { "false" };
        trend.write_record(key.iter().map(String::as_str).chain([
            fmt_num(r.apq).as_str(),
            fmt_num(r.ws_ar).as_str(),
            fmt_num(r.ratio).as_str(),
            flag,
        ]))?;
        for (var, v) in
            [("apq", r.apq), ("ws_ar", r.ws_ar), ("ratio", r.ratio), ("flagged", f64::from(r.flagged as u8))]
        {
            long.write_record(key.iter().map(String::as_str).chain([var, fmt_num(v).as_str()]))?;
        }
    }

    let mut kp_rows = Vec::new();
    if let Some(kp) = &scan.kp {
        let t = Instant::now();
        let probes = kp.probes.clone().unwrap_or_default();
        let jobs: Vec<(usize, usize, f64)> =
            ex.cells.iter().flat_map(|&(w, b)| kp.p.iter().map(move |&p| (w, b, p))).collect();
        let recs = jobs
            .par_iter()
            .map(|&(w, b, p)| {
                kp_lower_bound(&ex.weights[w].1, &ex.bases[b].1, p, &probes)
                    .map_err(|e| CliError::config(format!("{}: {} p={p}: {e}", error_name(&e), ex.cell_id(w, b))))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (&(w, b, p), r) in jobs.iter().zip(recs) {
            kp_rows.push(json!({
                "weight": ex.weights[w].0, "basis": ex.bases[b].0, "p": num(p),
                "bound": num(r.bound), "witness": r.witness, "probes": r.probes,
            }));
        }
        stage("kp", t);
    }

    if ex.writes(Format::Csv) {
        out.write("trend.csv", &report::finish(trend)?)?;
        out.write("trend_long.csv", &report::finish(long)?)?;
        if scan.kp.is_some() {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["weight", "basis", "p", "bound", "witness", "probes"])?;
            for r in &kp_rows {
                let s = |k: &str| match &r[k] {
                    Value::String(s) => s.clone(),
                    v => v.to_string(),
                };
                w.write_record([s("weight"), s("basis"), s("p"), s("bound"), s("witness"), s("probes")])?;
            }
            out.write("kp.csv", &report::finish(w)?)?;
        }
    }
    let flagged: Vec<Value> = rows
        .iter()
        .filter(|r| r.flagged)
        .map(|r| json!({"family": r.family, "kappa": num(r.kappa), "a": num(r.a), "level": r.level}))
        .collect();
    let pass = ledger.all_pass();
    if ex.writes(Format::Json) {
        out.write_json(
            "summary.json",
            &json!({
                "command": "scan",
                "config": ex.echo,
                "rows": rows.len(),
                "flagged": flagged,
                "kp": kp_rows,
                "checks": Entry::from_ledger("scan", "control", ledger.clone()).iter().map(Entry::to_json).collect::<Vec<_>>(),
                "pass": pass,
            }),
        )?;
    }
    println!("{} trend rows, {} flagged points written to {}", rows.len(), flagged.len(), out.root.display());
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}
