mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use trunc_auction::error::{DataError, DistributionError, EquilibriumError, IdentificationError};
use trunc_auction::identification::{identify, AlphaStar, DerivativeFactor, IdentificationResult};
use trunc_auction::io::{format_sig17, write_dataset, DatasetMeta};
use trunc_auction::simulator::{observe, simulate_from_types, Simulator};
use trunc_auction::verify::{run_suite, Suite, SuiteSizes, VerifyReport};
use trunc_auction::{AuctionDesign, ObservedDataset};

use config::{ConfigError, EstimatorChoice, RunConfig};

/// Simulate truncated auction data, identify primitives from it, and run the
/// verification suites.
#[derive(Parser, Debug)]
#[command(name = "trunc-auction", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate datasets and write CSV files with JSON sidecars.
    Simulate {
        /// JSON array of per-auction bidder value lists, replayed instead of random draws.
        #[arg(long)]
        types_file: Option<PathBuf>,
    },
    /// Identify primitives from datasets (simulated on the fly when none are given).
    Identify {
        /// Dataset CSV; repeat for two-sample estimators.
        #[arg(long = "data")]
        data: Vec<PathBuf>,
    },
    /// Run an acceptance suite: lemma1, roundtrip, counterexamples or table.
    Verify { suite: Suite },
    /// Print a human summary of a JSON output file.
    Report { path: PathBuf },
}

/// Flags that override the configuration file.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `auto` or prop1..prop10.
    #[arg(long, global = true)]
    estimator: Option<EstimatorChoice>,
    #[arg(long, global = true)]
    mass_eps: Option<f64>,
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// One-dimensional grid step of the set estimators.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    #[arg(long, global = true)]
    grid_step_2d: Option<f64>,
    /// Use `1 - a^N` in the first-price derivative factor (the default).
    #[arg(long, global = true, conflicts_with = "prop2_printed")]
    prop2_chainrule: bool,
    /// Use `1 - a` in the first-price derivative factor.
    #[arg(long, global = true)]
    prop2_printed: bool,
    #[arg(long, global = true)]
    l_total: Option<u64>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if let Some(e) = self.estimator {
            cfg.estimator = e;
        }
        if let Some(m) = self.mass_eps {
            cfg.tuning.mass_eps = Some(m);
        }
        if let Some(b) = self.bandwidth {
            cfg.tuning.bandwidth = Some(b);
        }
        if let Some(g) = self.grid_step {
            cfg.tuning.grid_step_1d = g;
        }
        if let Some(g) = self.grid_step_2d {
            cfg.tuning.grid_step_2d = g;
        }
        if self.prop2_chainrule {
            cfg.tuning.derivative_factor = DerivativeFactor::ChainRule;
        }
        if self.prop2_printed {
            cfg.tuning.derivative_factor = DerivativeFactor::Printed;
        }
        if let Some(l) = self.l_total {
            cfg.l_total = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 config, 3 not identified, 4 inconsistent, 5 I/O, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<IdentificationError>() {
            return match e {
                IdentificationError::NotIdentified { .. } => 3,
                IdentificationError::Precondition(_) => 2,
                _ => 4,
            };
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 5;
        }
        if cause.is::<EquilibriumError>() || cause.is::<DistributionError>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Report { path } = &cli.command {
        return report(path);
    }
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Simulate { types_file } => simulate(&cfg, types_file.as_deref()),
        Command::Identify { data } => identify_cmd(&cfg, &data),
        Command::Verify { suite } => verify(&cfg, suite),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_types(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values: Vec<Vec<f64>> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(values)
}

/// Simulated datasets and any warnings raised while producing them.
fn simulate_datasets(cfg: &RunConfig, types_file: Option<&Path>) -> Result<(Vec<ObservedDataset>, Vec<String>)> {
    let dist = cfg.value_distribution()?;
    let design = AuctionDesign::new(cfg.design.format, cfg.design.truncation, &dist)?;
    let mut warnings = Vec::new();
    let datasets = match types_file {
        Some(path) => {
            let types: Vec<Vec<f64>> =
                read_types(path)?.iter().map(|a| a.iter().map(|&v| dist.type_of_value(v)).collect()).collect();
            if types.is_empty() {
                warnings.push("types file lists no auctions; writing an empty dataset".to_string());
            }
            let sim = simulate_from_types(&dist, &design, &types, cfg.bid_rule)?;
            vec![observe(&sim, cfg.info)]
        }
        None => {
            if cfg.l_total == 0 {
                warnings.push("L_total = 0; writing empty datasets".to_string());
            }
            cfg.populations
                .iter()
                .enumerate()
                .map(|(i, pop)| {
                    Ok(Simulator::new(&dist, &design, pop, cfg.bid_rule)?.simulate_observed(
                        cfg.l_total,
                        cfg.seed + i as u64,
                        cfg.info,
                    ))
                })
                .collect::<Result<_, EquilibriumError>>()?
        }
    };
    Ok((datasets, warnings))
}

fn nobs_shares(ds: &ObservedDataset) -> Option<Vec<(u32, f64)>> {
    if !ds.info.observe_nobs || ds.is_empty() {
        return None;
    }
    let mut counts = std::collections::BTreeMap::new();
    for r in &ds.rows {
        *counts.entry(r.n_obs?).or_insert(0u64) += 1;
    }
    Some(counts.into_iter().map(|(k, c)| (k, c as f64 / ds.len() as f64)).collect())
}

fn simulate(cfg: &RunConfig, types_file: Option<&Path>) -> Result<()> {
    let (datasets, warnings) = simulate_datasets(cfg, types_file)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let mut entries = Vec::new();
    for (i, ds) in datasets.iter().enumerate() {
        let path = dir.join(format!("dataset_{}.csv", i + 1));
        let seed = types_file.is_none().then_some(cfg.seed + i as u64);
        write_dataset(ds, &path, seed)?;
        let shares = nobs_shares(ds);
        let meta = DatasetMeta::of(ds, seed);
        print!("{}: L = {}", path.display(), meta.l);
        if let Some(inv) = meta.l_invalid {
            print!(", L_invalid = {inv}");
        }
        println!();
        if let Some(s) = &shares {
            for (k, p) in s {
                println!("  P(n_obs = {k}) = {p:.4}");
            }
        }
        entries.push(json!({ "path": path, "meta": meta, "nobs_shares": shares }));
    }
    write_json(
        &dir.join("run.json"),
        &json!({ "command": "simulate", "config": cfg, "datasets": entries, "warnings": warnings }),
    )
}

fn load_datasets(paths: &[PathBuf]) -> Result<Vec<ObservedDataset>> {
    paths
        .iter()
        .map(|p| {
            let (ds, _) = trunc_auction::io::read_dataset(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ds)
        })
        .collect()
}

fn identify_cmd(cfg: &RunConfig, data: &[PathBuf]) -> Result<()> {
    let (datasets, warnings) = if data.is_empty() {
        cfg.resolve_estimator(&cfg.dataset_shapes())?;
        simulate_datasets(cfg, None)?
    } else {
        (load_datasets(data)?, Vec::new())
    };
    let estimator = cfg.resolve_estimator(&datasets)?;
    let result = identify(estimator, &datasets, &cfg.analyst_view(), &cfg.tuning)?;
    print_result(&result);
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    write_v_grid(&dir.join("v_grid.csv"), &result)?;
    write_json(
        &dir.join("identification.json"),
        &json!({ "command": "identify", "config": cfg, "datasets": data, "warnings": warnings, "result": result }),
    )
}

fn write_v_grid(path: &Path, r: &IdentificationResult) -> Result<()> {
    let mut out = String::from("alpha,value");
    if r.v_band.is_some() {
        out.push_str(",value_lo,value_hi");
    }
    out.push('\n');
    match &r.v_band {
        Some(band) => {
            for (&(a, v), &(_, lo, hi)) in r.v_grid.iter().zip(band) {
                out.push_str(&format!("{},{},{},{}\n", format_sig17(a), format_sig17(v), format_sig17(lo), format_sig17(hi)));
            }
        }
        None => {
            for &(a, v) in &r.v_grid {
                out.push_str(&format!("{},{}\n", format_sig17(a), format_sig17(v)));
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn describe_alpha(a: &AlphaStar) -> String {
    match a {
        AlphaStar::Point(x) => format!("{x:.6}"),
        AlphaStar::Set(iv) => iv.iter().map(|i| format!("[{:.4}, {:.4}]", i.lo, i.hi)).collect::<Vec<_>>().join(" u "),
        AlphaStar::Region(r) => format!(
            "region of {} cells, {} in [{:.4}, {:.4}], {} in [{:.4}, {:.4}]",
            r.cells.len(),
            r.axes[0],
            r.bounds[0].lo,
            r.bounds[0].hi,
            r.axes[1],
            r.bounds[1].lo,
            r.bounds[1].hi
        ),
    }
}

fn print_result(r: &IdentificationResult) {
    println!("estimator: {}", r.proposition);
    println!("screening level: {}", describe_alpha(&r.alpha_star));
    if let Some(n) = r.n {
        println!("bidders: {n}");
    }
    if let Some(f) = r.f {
        println!("entry cost: {f:.6}");
    }
    for (a, v) in &r.v_grid {
        println!("  V({a:.3}) = {v:.5}");
    }
    for w in &r.diagnostics.warnings {
        println!("warning: {w}");
    }
}

fn print_report(r: &VerifyReport) {
    for c in &r.checks {
        println!("{} {} observed={:.6} target={:.6} tol={}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.observed, c.target, c.tolerance);
    }
    for c in &r.cells {
        let est = c.estimator.map_or("-".to_string(), |e| e.to_string());
        println!("{} {} [{est}] expected {:?}, observed {:?}", if c.pass { "PASS" } else { "FAIL" }, c.cell, c.expected, c.observed);
        for k in c.checks.iter().filter(|k| !k.pass) {
            println!("    {} observed={:.6} target={:.6} tol={}", k.name, k.observed, k.target, k.tolerance);
        }
    }
    if let Some(a) = &r.arbitration {
        for t in &a.trials {
            println!("derivative factor {}: chain rule {:.4}, printed {:.4} (tol {})", t.cell, t.chain_rule_error, t.printed_error, a.tolerance);
        }
        println!("meeting tolerance: {:?}", a.meets);
    }
    if let Some(t) = &r.table {
        print!("{t}");
    }
    println!("suite {:?}: {}", r.suite, if r.pass { "PASS" } else { "FAIL" });
}

fn verify(cfg: &RunConfig, suite: Suite) -> Result<()> {
    let report = run_suite(suite, cfg.seed, SuiteSizes::default(), &cfg.tuning)?;
    print_report(&report);
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    let name = serde_json::to_value(suite)?.as_str().unwrap_or("suite").to_string();
    write_json(&dir.join(format!("verify_{name}.json")), &json!({ "command": "verify", "config": cfg, "report": report }))
}

fn report(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match v["command"].as_str() {
        Some("simulate") => {
            for d in v["datasets"].as_array().into_iter().flatten() {
                println!("{}: L = {}, L_invalid = {}", d["path"], d["meta"]["L"], d["meta"]["L_invalid"]);
            }
        }
        Some("identify") => {
            let r = &v["result"];
            println!("estimator: {}", r["proposition"]);
            println!("screening level: {}", r["alpha_star"]);
            for w in r["diagnostics"]["warnings"].as_array().into_iter().flatten() {
                println!("warning: {w}");
            }
        }
        Some("verify") => {
            let r = &v["report"];
            let checks = r["checks"].as_array().map_or(0, Vec::len);
            let cells = r["cells"].as_array().map_or(0, Vec::len);
            let failed: Vec<&str> = r["checks"]
                .as_array()
                .into_iter()
                .flatten()
                .chain(r["cells"].as_array().into_iter().flatten())
                .filter(|c| c["pass"] == false)
                .filter_map(|c| c["name"].as_str().or(c["cell"].as_str()))
                .collect();
            println!("suite {}: {} ({checks} checks, {cells} cells)", r["suite"], if r["pass"] == true { "PASS" } else { "FAIL" });
            for f in failed {
                println!("  failed: {f}");
            }
            if let Some(t) = r["table"].as_str() {
                print!("{t}");
            }
        }
        _ => return Err(ConfigError(format!("{} is not a simulate, identify or verify output", path.display())).into()),
    }
    Ok(())
}
