mod config;
mod experiments;
mod report;

use clap::{Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use experiments::RunError;
use hardy_lab::funcalc::ContourQuadrature;
use hardy_lab::ledger::{now, ConstantsLedger, LedgerEntry, LedgerKey, Recorded};
use hardy_lab::operator::assemble_operator;
use hardy_lab::riesz::{region_contains, OperatorRegionParams, RegionPoint, RegionVariant};
use report::Outcome;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const PASS: u8 = 0;
const FAILURE: u8 = 2;
const CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "hardy-lab", version, about = "Experiments on divergence-form operators with complex coefficients")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML or JSON config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "hardy-lab-ledger.json")]
        ledger: PathBuf,
        /// Overwrite ledger constants that changed.
        #[arg(long)]
        refit: bool,
    },
    /// Inspect or refresh the constants ledger.
    Ledger {
        #[arg(value_enum)]
        action: LedgerAction,
        /// Substrings every selected key label must contain.
        filters: Vec<String>,
        #[arg(long, default_value = "hardy-lab-ledger.json")]
        ledger: PathBuf,
        /// Override the contour density of the rerun configs.
        #[arg(long)]
        quadrature_density: Option<usize>,
    },
    /// Membership of a point (s, 1/p) in a Riesz-transform region.
    Region {
        #[arg(long, value_enum, ignore_case = true)]
        variant: Variant,
        #[arg(long)]
        n: usize,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long)]
        inv_p: f64,
        #[arg(long)]
        p_minus: Option<f64>,
        #[arg(long)]
        p_minus_adj: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        eps_adj: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LedgerAction {
    Show,
    Refit,
    Diff,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    R1,
    R2,
    R1OfL,
    R2OfL,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(CONFIG);
        }
    }
    let code = match cli.command {
        Command::Run { config, ledger, refit } => cmd_run(&config, &ledger, refit),
        Command::Ledger { action, filters, ledger, quadrature_density } => cmd_ledger(action, &filters, &ledger, quadrature_density),
        Command::Region { variant, n, s, inv_p, p_minus, p_minus_adj, eps, eps_adj } => {
            cmd_region(variant, n, s, inv_p, [p_minus, p_minus_adj, eps, eps_adj])
        }
    };
    ExitCode::from(code)
}

fn report_error(e: &RunError) -> u8 {
    match e {
        RunError::Config(m) => {
            eprintln!("config error: {m}");
            CONFIG
        }
        RunError::Failure(m) => {
            eprintln!("experiment failed: {m}");
            FAILURE
        }
    }
}

/// Grid, ladder, quadrature and seed, enough to rerun the experiment.
fn context(cfg: &ExperimentConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("operator".into(), serde_json::to_value(&cfg.operator).unwrap());
    m.insert("grid".into(), serde_json::to_value(&cfg.grid).unwrap());
    if let Ok(grid) = cfg.grid() {
        m.insert("ladder".into(), serde_json::to_value(cfg.ladder_for(&grid)).unwrap());
        let quad = cfg.operator.build(grid).and_then(assemble_operator).map(|op| {
            let q = ContourQuadrature::for_angle(op.sector_angle);
            cfg.quadrature_density.map_or(q, |d| q.with_density(d))
        });
        if let Ok(q) = quad {
            m.insert("quadrature".into(), serde_json::to_value(q).unwrap());
        }
    }
    m.insert("config".into(), serde_json::to_value(cfg).unwrap());
    m
}

fn execute(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    experiments::run(cfg)
}

fn key_for(cfg: &ExperimentConfig, module: &str, invariant: &str) -> LedgerKey {
    LedgerKey::new(module, invariant, cfg.grid.dim, cfg.grid.points, cfg.operator.kind())
}

fn cmd_run(path: &Path, ledger_path: &Path, refit: bool) -> u8 {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return CONFIG;
        }
    };
    let out = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => return report_error(&e),
    };
    let doc = out.verdict_json(&cfg.experiment, context(&cfg));
    let dir = PathBuf::from(cfg.output_dir());
    match out.write(&dir, &cfg.experiment, &doc) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("experiment failed: cannot write reports to {}: {e}", dir.display());
            return FAILURE;
        }
    }
    let mut code = if out.passed() { PASS } else { FAILURE };
    if !out.constants.is_empty() {
        let mut ledger = match ConstantsLedger::open(ledger_path) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("config error: {e}");
                return CONFIG;
            }
        };
        let config = serde_json::to_value(&cfg).unwrap();
        for (name, value, tolerance) in &out.constants {
            let entry = LedgerEntry { key: key_for(&cfg, &out.module, name), value: *value, tolerance: *tolerance, timestamp: now(), config: config.clone() };
            let label = entry.key.label();
            if ledger.record(entry, refit) == Recorded::Refused {
                eprintln!("ledger: {label} changed; rerun with --refit to overwrite");
                code = FAILURE;
            }
        }
        if let Err(e) = ledger.save() {
            eprintln!("experiment failed: cannot save ledger: {e}");
            return FAILURE;
        }
    }
    println!("verdict: {}", out.verdict());
    for name in out.failed() {
        println!("failed: {name}");
    }
    code
}

/// Reruns every distinct config behind the selected entries.
fn rerun(entries: &[&LedgerEntry], density: Option<usize>) -> Result<BTreeMap<String, f64>, RunError> {
    let mut configs: Vec<&Value> = Vec::new();
    for e in entries {
        if !configs.contains(&&e.config) {
            configs.push(&e.config);
        }
    }
    let mut values = BTreeMap::new();
    for c in configs {
        let mut cfg: ExperimentConfig = serde_json::from_value(c.clone()).map_err(|e| RunError::Config(format!("stored config: {e}")))?;
        if density.is_some() {
            cfg.quadrature_density = density;
        }
        let out = execute(&cfg)?;
        for (name, v, _) in &out.constants {
            values.insert(key_for(&cfg, &out.module, name).label(), *v);
        }
    }
    Ok(values)
}

fn cmd_ledger(action: LedgerAction, filters: &[String], path: &Path, density: Option<usize>) -> u8 {
    if density == Some(0) {
        eprintln!("config error: --quadrature-density must be positive");
        return CONFIG;
    }
    let mut ledger = match ConstantsLedger::load(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return CONFIG;
        }
    };
    match action {
        LedgerAction::Show => {
            print!("{}", ledger.table(filters));
            PASS
        }
        LedgerAction::Refit => {
            let selected: Vec<LedgerEntry> = ledger.select(filters).into_iter().cloned().collect();
            let values = match rerun(&selected.iter().collect::<Vec<_>>(), density) {
                Ok(v) => v,
                Err(e) => return report_error(&e),
            };
            for mut entry in selected {
                if let Some(v) = values.get(&entry.key.label()) {
                    entry.value = *v;
                    entry.timestamp = now();
                    ledger.record(entry, true);
                }
            }
            if let Err(e) = ledger.save() {
                eprintln!("experiment failed: cannot save ledger: {e}");
                return FAILURE;
            }
            print!("{}", ledger.table(filters));
            PASS
        }
        LedgerAction::Diff => {
            let selected = ledger.select(filters);
            let values = match rerun(&selected, density) {
                Ok(v) => v,
                Err(e) => return report_error(&e),
            };
            println!("key,recorded,current,drift,tolerance,status");
            let mut code = PASS;
            for e in selected {
                let label = e.key.label();
                let (current, drift) = match values.get(&label) {
                    Some(v) => (*v, e.drift(*v)),
                    None => (f64::NAN, f64::INFINITY),
                };
                let ok = drift <= e.tolerance;
                if !ok {
                    code = FAILURE;
                }
                println!("{label},{:.10e},{current:.10e},{drift:.3e},{},{}", e.value, e.tolerance, if ok { "ok" } else { "drift" });
            }
            code
        }
    }
}

fn cmd_region(variant: Variant, n: usize, s: f64, inv_p: f64, op: [Option<f64>; 4]) -> u8 {
    let variant = match variant {
        Variant::R1 => RegionVariant::R1,
        Variant::R2 => RegionVariant::R2,
        Variant::R1OfL => RegionVariant::R1OfL,
        Variant::R2OfL => RegionVariant::R2OfL,
    };
    let params = match op {
        [None, None, None, None] => None,
        [Some(p_minus), Some(p_minus_adj), Some(eps), Some(eps_adj)] => Some(OperatorRegionParams { p_minus, p_minus_adj, eps, eps_adj }),
        _ => {
            eprintln!("config error: --p-minus, --p-minus-adj, --eps and --eps-adj go together");
            return CONFIG;
        }
    };
    match region_contains(variant, RegionPoint { s, inv_p }, n, params.as_ref()) {
        Ok(inside) => {
            println!("{}", if inside { "inside" } else { "outside" });
            PASS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            CONFIG
        }
    }
}
