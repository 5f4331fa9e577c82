use clap::{Args, Parser, Subcommand};
use logsynth::config::{parse_ratio, Config, RatioValue};
use logsynth::pipeline::{run, Stage};
use logsynth::{reasoner, Error};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "logsynth", version, about = "Synthesize labeled log sequences from source code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse sources, extract templates, build and prune the call graph.
    Analyze,
    /// Build log-oriented control-flow graphs and export them as dot.
    Lcfg,
    /// Assemble, verify and parameterize candidate sequences.
    Generate,
    /// Label sequences and package them as sessions.
    Label,
    /// Inject synthetic sessions into the training split.
    Augment,
    /// Compare source templates with observed ones.
    AuditCoverage,
    /// Run every stage.
    Pipeline,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true, default_value = "logsynth.toml")]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the deterministic rule-based reasoner.
    #[arg(long, global = true)]
    mock: bool,
    /// Synthetic-to-real ratio, decimal or fraction.
    #[arg(long, global = true, value_parser = parse_ratio_arg)]
    ratio: Option<RatioValue>,
    /// Number of entry subgraphs.
    #[arg(long, global = true)]
    entries: Option<usize>,
    /// Call depth explored from each entry.
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn parse_ratio_arg(s: &str) -> Result<RatioValue, String> {
    parse_ratio(s).map(RatioValue)
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> Result<(), Error> {
        let mut applied = Vec::new();
        if let Some(s) = self.seed {
            cfg.pipeline.seed = Some(s);
            applied.push(format!("seed={s}"));
        }
        if self.mock {
            cfg.pipeline.mock = true;
            applied.push("mock".into());
        }
        if let Some(r) = self.ratio {
            cfg.dataset.ratio = r;
            applied.push(format!("ratio={}", r.0));
        }
        if let Some(n) = self.entries {
            cfg.pipeline.t_entry = n;
            applied.push(format!("entries={n}"));
        }
        if let Some(d) = self.depth {
            cfg.pipeline.t_depth = d;
            applied.push(format!("depth={d}"));
        }
        if let Some(o) = &self.out {
            // Where results go does not change them, so the hash ignores it.
            cfg.pipeline.out = std::path::absolute(o).map_err(|e| Error::io(o, e))?;
        }
        if let Some(t) = self.threads {
            cfg.pipeline.threads = t;
        }
        if !applied.is_empty() {
            let mut h = Sha256::new();
            h.update(cfg.hash.as_bytes());
            h.update(applied.join("\n").as_bytes());
            cfg.hash = hex::encode(h.finalize());
        }
        Ok(())
    }
}

fn stage(c: Command) -> Stage {
    match c {
        Command::Analyze => Stage::Analyze,
        Command::Lcfg => Stage::Lcfg,
        Command::Generate => Stage::Generate,
        Command::Label => Stage::Label,
        Command::Augment => Stage::Augment,
        Command::AuditCoverage => Stage::AuditCoverage,
        Command::Pipeline => Stage::Pipeline,
    }
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let mut cfg = Config::load_unvalidated(&cli.opts.config)?;
    cli.opts.apply(&mut cfg)?;
    cfg.validate()?;
    let stage = stage(cli.command);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.pipeline.threads)
        .build()
        .map_err(|e| Error::Config(format!("pipeline.threads: {e}")))?;
    let needs_reasoner = !matches!(stage, Stage::Analyze | Stage::Lcfg | Stage::AuditCoverage);
    let reasoner = if needs_reasoner { Some(reasoner::from_config(&cfg)?) } else { None };
    let manifest = pool.install(|| run(&cfg, stage, reasoner.as_deref()))?;
    if manifest.stages.get("analyze").and_then(|a| a.get("no_logging")).and_then(|v| v.as_bool()) == Some(true) {
        println!("no logging detected");
    }
    for (name, counts) in &manifest.stages {
        println!("{name}: {counts}");
    }
    println!("wrote {} artifacts to {}", manifest.artifacts.len(), cfg.resolve(&cfg.pipeline.out).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.root() {
                Error::Config(_) => 1,
                Error::Guard(_) => 3,
                _ => 2,
            })
        }
    }
}
