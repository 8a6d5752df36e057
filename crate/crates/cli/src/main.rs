use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autopriv::cash::Optimizer;
use autopriv::linkattack::{self, DEFAULT_K};
use autopriv::pipeline::{self, PipelineConfig, RecommendOptions};
use autopriv::riskprofile::QiSet;
use autopriv::tabular;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "autopriv",
    version,
    about = "Recommend privacy configurations for tabular data"
)]
struct Cli {
    /// Flat `key = value` pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config file.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Corpus directory; overrides the config file.
    #[arg(long, global = true)]
    corpus_dir: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Equivalence-class risk profile of one CSV, as JSON.
    Profile {
        csv: PathBuf,
        /// Comma-separated QI columns; sampled from the config when absent.
        #[arg(long, value_delimiter = ',')]
        qi: Option<Vec<String>>,
    },
    /// Split, sample QI sets and write the protected variants.
    Protect,
    /// Learner search on every variant and on the originals.
    Evaluate {
        #[arg(long)]
        optimizer: Option<Optimizer>,
    },
    /// Linkage attack on every variant, or on one pair of files.
    Attack {
        #[arg(long, requires_all = ["variant", "control", "qi"])]
        original: Option<PathBuf>,
        #[arg(long)]
        variant: Option<PathBuf>,
        #[arg(long)]
        control: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        qi: Option<Vec<String>>,
        #[arg(long)]
        n_targets: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Join meta-features, utility and risk into meta.csv.
    MetaBuild,
    /// Fit the performance and linkability meta-models.
    MetaFit {
        #[arg(long)]
        exclude_dataset: Option<String>,
    },
    /// Rank the configuration grid for a new dataset.
    Recommend {
        csv: PathBuf,
        #[arg(long)]
        top_n: Option<usize>,
        /// Refit the models leaving this dataset out.
        #[arg(long)]
        exclude_dataset: Option<String>,
        /// Refit even when persisted models exist.
        #[arg(long)]
        refit: bool,
    },
    /// Bayesian sign test between two evaluation files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "cv_auc_mean")]
        metric: String,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::parse("", Path::new("."))?,
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.worker_count = Some(w);
    }
    if let Some(d) = &cli.corpus_dir {
        cfg.corpus_dir = d.clone();
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_phase(name: &str, rec: &pipeline::PhaseRecord) {
    let counts: Vec<String> = rec.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{name}: {} ({:.1}s) {}", rec.status, rec.seconds, counts.join(" "));
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Profile { csv, qi } => {
            let reports = pipeline::profile_dataset(&cfg, &csv, qi)?;
            if reports.len() == 1 {
                print_json(&reports[0])?;
            } else {
                print_json(&reports)?;
            }
        }
        Cmd::Protect => print_phase("protect", &pipeline::run_protect(&cfg)?),
        Cmd::Evaluate { optimizer } => {
            if let Some(o) = optimizer {
                cfg.optimizer = o;
            }
            print_phase("evaluate", &pipeline::run_evaluate(&cfg)?);
        }
        Cmd::Attack {
            original: Some(original),
            variant,
            control,
            qi,
            n_targets,
            k,
        } => {
            let (Some(variant), Some(control), Some(qi)) = (variant, control, qi) else {
                bail!("--original needs --variant, --control and --qi");
            };
            let orig = tabular::load_csv(&original, &cfg.target)?;
            let var = tabular::load_csv(&variant, &cfg.target)?;
            let ctrl = tabular::load_csv(&control, &cfg.target)?;
            let n = n_targets.unwrap_or_else(|| linkattack::default_n_targets(orig.n_rows()));
            let report = linkattack::linkability(
                &orig,
                &var,
                &QiSet::new(0, qi),
                &ctrl,
                n.min(orig.n_rows()),
                k.unwrap_or(DEFAULT_K),
                cfg.master_seed,
            )?;
            print_json(&report)?;
        }
        Cmd::Attack { n_targets, k, .. } => {
            if n_targets.is_some() {
                cfg.n_targets = n_targets;
            }
            if let Some(k) = k {
                cfg.link_k = k;
            }
            print_phase("attack", &pipeline::run_attack(&cfg)?);
        }
        Cmd::MetaBuild => {
            let s = pipeline::build_metadataset(&cfg)?;
            println!(
                "meta-build: {} rows, {} excluded ({})",
                s.rows, s.excluded, s.mf_version
            );
        }
        Cmd::MetaFit { exclude_dataset } => {
            let (perf, link) = pipeline::fit_models(&cfg, exclude_dataset.as_deref())?;
            println!(
                "meta-fit: performance intercept {:.6}, linkability intercept {:.6}, {} features",
                perf.intercept,
                link.intercept,
                perf.n_features()
            );
        }
        Cmd::Recommend {
            csv,
            top_n,
            exclude_dataset,
            refit,
        } => {
            let opts = RecommendOptions {
                top_n,
                exclude_dataset,
                refit,
            };
            let rec = pipeline::cmd_recommend(&cfg, &csv, &opts)?;
            print!("{}", rec.table());
        }
        Cmd::Compare { a, b, metric } => {
            let r = pipeline::compare_evaluations(&a, &b, &metric, cfg.master_seed)?;
            print_json(&r)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
