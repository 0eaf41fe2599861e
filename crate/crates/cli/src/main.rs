use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cofact::corpus::{load_dataset, DatasetFormat, Label};
use cofact::error::Error;
use cofact::evaluation::{self, compare, metrics_table, Table};
use cofact::orchestrator::{render_report, Features, RunResult, FINAL_LABELS_FILE};
use cofact::retrieval::VocabPreset;
use cofact::runtime::{self, AppConfig};
use cofact::sim::{generate, write_bundle, SimulationSpec, SyntheticSpec};
use cofact::sources::{FetchMode, ResponseCache};

#[derive(Parser)]
#[command(name = "cofact", version, about = "LLM/SLM co-labeling of emergent news")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a config file.
    Run(RunArgs),
    /// Continue an interrupted run from its run directory.
    Resume {
        run_dir: PathBuf,
        #[arg(long)]
        stop_after_round: Option<u32>,
    },
    /// Run an oracle simulation, or an (omega, rounds) sweep.
    Simulate(SimulateArgs),
    /// Score a label file against gold labels.
    Evaluate {
        /// `final_labels.jsonl` or a run directory containing one.
        #[arg(long)]
        pred: PathBuf,
        /// Dataset JSONL with gold labels.
        #[arg(long)]
        gold: PathBuf,
    },
    /// Diff the final labels of two runs against gold labels.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Run the config once as is and once per disabled feature.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
        /// Features to ablate; all by default.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Provider response cache maintenance.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Write a synthetic dataset with matching search and knowledge files.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_items: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drift: Option<f64>,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Fetch and record every round-1 provider response for the dataset.
    Warm {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check every record against its stored hash.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Delete records fetched before a cutoff (seconds since epoch).
    Gc {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        before: i64,
    },
}

/// Command-line overrides of config-file values.
#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_fetch_mode)]
    fetch_mode: Option<FetchMode>,
    #[arg(long, value_parser = parse_vocab)]
    vocab: Option<VocabPreset>,
    /// Disable a feature (repeatable).
    #[arg(long)]
    ablate: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Stop after checkpointing this round.
    #[arg(long)]
    stop_after_round: Option<u32>,
    /// Write the final metrics as JSON to this file.
    #[arg(long)]
    metrics_json: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation spec; built-in defaults otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    sweep: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Write the result (report list or sweep grid) as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_json_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_fetch_mode(s: &str) -> std::result::Result<FetchMode, String> {
    parse_json_enum(s)
}

fn parse_vocab(s: &str) -> std::result::Result<VocabPreset, String> {
    parse_json_enum(s)
}

impl Overrides {
    fn load(&self) -> Result<AppConfig> {
        let mut app = AppConfig::load(&self.config).map_err(|e| match e {
            Error::Io { path, source } => Error::Config {
                field: "config".into(),
                message: format!("cannot read {}: {source}", path.display()),
            },
            other => other,
        })?;
        self.apply(&mut app)?;
        app.validate()?;
        Ok(app)
    }

    fn apply(&self, app: &mut AppConfig) -> Result<()> {
        if let Some(v) = self.seed {
            app.run.seed = v;
        }
        if let Some(v) = self.omega {
            app.run.selection.omega = v;
        }
        if let Some(v) = self.rounds {
            app.run.rounds = v;
        }
        if let Some(v) = self.k {
            app.run.retrieval.k = v;
        }
        if let Some(v) = &self.dataset {
            app.dataset.path = v.clone();
        }
        if let Some(v) = &self.run_dir {
            app.run_dir = Some(v.clone());
        }
        if let Some(v) = &self.cache_dir {
            app.cache.dir = Some(v.clone());
        }
        if let Some(v) = self.fetch_mode {
            app.cache.mode = v;
        }
        if let Some(v) = self.vocab {
            app.vocab_preset = Some(v);
            app.apply_preset();
        }
        for name in &self.ablate {
            app.run.features.disable(name)?;
        }
        if !app.run.features.multi_round && self.rounds.is_none() {
            app.run.rounds = 1;
        }
        Ok(())
    }
}

fn print_result(res: &RunResult) {
    print!("{}", render_report(&res.reports, res.metrics.as_ref()));
    if !res.complete {
        println!("stopped early; resume with `cofact resume <run_dir>`");
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let app = args.overrides.load()?;
    let res = runtime::execute(&app, args.stop_after_round).map_err(|e| {
        let hint = app
            .run_dir
            .as_ref()
            .map(|d| format!(" (checkpoint in {})", d.display()))
            .unwrap_or_default();
        anyhow::Error::new(e).context(format!("run failed{hint}"))
    })?;
    print_result(&res);
    if let (Some(path), Some(m)) = (&args.metrics_json, &res.metrics) {
        fs::write(path, serde_json::to_vec_pretty(m)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => SimulationSpec::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SimulationSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.run.seed = s;
        spec.data.seed = s;
    }
    if let Some(o) = args.omega {
        spec.run.selection.omega = o;
    }
    if let Some(n) = args.rounds {
        spec.run.rounds = n;
    }
    let json = if args.sweep {
        let grid = spec.sweep()?;
        print!("{}", grid.render());
        let (n, o, a) = grid.best();
        println!("best: rounds {n}, omega {o:.2}, accuracy {a:.4}");
        serde_json::to_vec_pretty(&grid)?
    } else {
        spec.run.validate()?;
        let res = spec.simulate()?;
        print_result(&res);
        serde_json::to_vec_pretty(&res.reports)?
    };
    if let Some(path) = &args.out {
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let file = if path.is_dir() { path.join(FINAL_LABELS_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        #[derive(serde::Deserialize)]
        struct Row {
            id: String,
            label: Label,
        }
        let row: Row = serde_json::from_str(line).with_context(|| format!("{}:{}", file.display(), i + 1))?;
        out.insert(row.id, row.label);
    }
    Ok(out)
}

fn read_gold(path: &Path) -> Result<BTreeMap<String, Label>> {
    Ok(load_dataset(path, DatasetFormat::Jsonl, i64::MIN)?.gold())
}

fn cmd_ablate(overrides: &Overrides, features: &[String]) -> Result<()> {
    let base = overrides.load()?;
    let names: Vec<String> = if features.is_empty() {
        Features::NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        features.to_vec()
    };
    let mut variants = vec![("full".to_string(), base.clone())];
    for name in names {
        let mut app = base.clone();
        app.run.features.disable(&name)?;
        if name == "multi_round" {
            app.run.rounds = 1;
        }
        variants.push((format!("w/o {name}"), app));
    }
    let mut t = Table::new(["variant", "acc", "macro_f1", "delta_acc"]);
    let mut baseline_acc = None;
    for (name, mut app) in variants {
        if let Some(dir) = &base.run_dir {
            app.run_dir = Some(dir.join(name.replace(' ', "_").replace('/', "")));
        }
        let res = runtime::execute(&app, None)?;
        let m = res.metrics.context("ablation needs gold labels for the unlabeled items")?;
        let base_acc = *baseline_acc.get_or_insert(m.accuracy);
        t.row([
            name,
            evaluation::fmt_metric(m.accuracy),
            evaluation::fmt_metric(m.macro_f1),
            format!("{:+.4}", m.accuracy - base_acc),
        ]);
    }
    print!("{}", t.render());
    Ok(())
}

/// Returns false when verification found corrupt records.
fn cmd_cache(action: &CacheAction) -> Result<bool> {
    match action {
        CacheAction::Warm { overrides } => {
            let app = overrides.load()?;
            let s = runtime::warm_cache(&app)?;
            println!("search queries: {}, knowledge entries: {}, failures: {}", s.search_queries, s.lookups, s.failures.len());
            for (k, v) in &s.failures {
                println!("  {k}: {v}");
            }
        }
        CacheAction::Verify { dir } => {
            let cache = ResponseCache::open(dir)?;
            let bad = cache.verify()?;
            if !bad.is_empty() {
                for p in &bad {
                    eprintln!("corrupt: {}", p.display());
                }
                eprintln!("{} corrupt record(s)", bad.len());
                return Ok(false);
            }
            println!("{} record(s) ok", cache.len()?);
        }
        CacheAction::Gc { dir, before } => {
            let removed = ResponseCache::open(dir)?.gc(*before)?;
            println!("removed {removed} record(s)");
        }
    }
    Ok(true)
}

fn cmd_generate(out: &Path, spec: Option<&Path>, n: Option<usize>, seed: Option<u64>, drift: Option<f64>) -> Result<()> {
    let mut s = match spec {
        Some(p) => toml::from_str::<SyntheticSpec>(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config {
                field: "spec".into(),
                message: e.message().to_string(),
            })?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = n {
        s.n_items = v;
    }
    if let Some(v) = seed {
        s.seed = v;
    }
    if let Some(v) = drift {
        s.drift = v;
    }
    let bundle = generate(&s)?;
    write_bundle(out, &bundle)?;
    println!(
        "wrote {} items (split_cutoff {}) to {}",
        bundle.dataset.items.len(),
        bundle.dataset.split_cutoff,
        out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => cmd_run(&args)?,
        Command::Resume { run_dir, stop_after_round } => print_result(&runtime::resume(&run_dir, stop_after_round)?),
        Command::Simulate(args) => cmd_simulate(&args)?,
        Command::Evaluate { pred, gold } => {
            let m = evaluation::evaluate(&read_labels(&pred)?, &read_gold(&gold)?)?;
            print!("{}", metrics_table(&[("labels".to_string(), m)]));
        }
        Command::Compare { baseline, candidate, gold } => {
            let (a, b) = (read_labels(&baseline)?, read_labels(&candidate)?);
            let name = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            let c = compare((&name(&baseline), &a), (&name(&candidate), &b), &read_gold(&gold)?)?;
            print!("{}", c.render());
        }
        Command::Ablate { overrides, features } => cmd_ablate(&overrides, &features)?,
        Command::Cache { action } => {
            if !cmd_cache(&action)? {
                return Ok(ExitCode::from(4));
            }
        }
        Command::Generate { out, spec, n_items, seed, drift } => {
            cmd_generate(&out, spec.as_deref(), n_items, seed, drift)?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config { .. } | Error::Validation(_)) => 2,
        Some(
            Error::Backend { .. }
            | Error::ProviderUnavailable { .. }
            | Error::ProviderResponse { .. }
            | Error::Retrieval { .. },
        ) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
