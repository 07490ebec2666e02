use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hsim_core::corpus::{read_records, read_tree, write_records, Corpus, CorpusConfig, TopicTree};
use hsim_core::eval::{emit_report, evaluate, ReportFormat};
use hsim_core::service::{serve, AppState, LabelLog, ServiceConfig};
use hsim_core::simcore::{rank_leaves_hsim, rank_leaves_topdown};
use hsim_core::snapshot::{Snapshot, TrainMethod};
use hsim_core::sparse::SparseVec;
use hsim_core::synth::{self, SynthConfig};
use hsim_core::train::{train, TrainConfig, VbPrior};

#[derive(Parser)]
#[command(
    name = "hsim",
    version,
    about = "Rank the leaves of a topic tree for documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, prune the dictionary and vectorize a JSON-lines corpus.
    BuildCorpus {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_df: usize,
        #[arg(long, default_value_t = 0.5)]
        max_df_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write a snapshot.
    Train(TrainArgs),
    /// Rank a labeled split and write the report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, value_enum, default_value_t = Ranker::Hsim)]
        ranker: Ranker,
        /// `.csv` (with a summary beside it) or `.json`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Label log; created when missing.
        #[arg(long, default_value = "labels.log")]
        log: PathBuf,
        /// Where retrained snapshots go.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
        /// Built review console to serve at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Write a planted synthetic corpus and its tree.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tree_out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        docs_per_leaf: usize,
        /// Fraction of documents written without a label.
        #[arg(long, default_value_t = 0.0)]
        unlabeled: f64,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Method::Greedy)]
    method: Method,
    #[arg(long)]
    corpus: PathBuf,
    /// Needed when `--corpus` is a raw JSON-lines file.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Extra unlabeled documents (JSON lines) for the VB queue.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    /// Candidate α values: `a,b,c` for every level or `a,b;c,d;…` per level.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    psi: Option<f64>,
    /// Outer iterations of the greedy trainer.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_enum, default_value_t = Prior::Scaled)]
    prior: Prior,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Greedy,
    Vb,
    Untrained,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    /// Precisions grow with the number of training documents.
    Scaled,
    /// a = b = 1, ν = h + 1.
    Unit,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Split {
    Test,
    V0,
    V1,
    V2,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ranker {
    Hsim,
    TopDown,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::BuildCorpus {
            docs,
            tree,
            min_df,
            max_df_ratio,
            out,
        } => {
            let config = CorpusConfig {
                min_df,
                max_df_ratio,
                ..CorpusConfig::default()
            };
            let corpus = Corpus::build(&read_records(&docs)?, read_tree(&tree)?, config)?;
            for id in corpus.empty_documents() {
                log::warn!("document {id} has no dictionary words");
            }
            corpus.save(&out)?;
            println!(
                "{} documents ({} labeled), {} words -> {}",
                corpus.len(),
                corpus.labeled().len(),
                corpus.dictionary.len(),
                out.display()
            );
        }
        Command::Train(args) => run_train(args)?,
        Command::Eval {
            model,
            corpus,
            tree,
            split,
            ranker,
            report,
        } => {
            let snap =
                Snapshot::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let corpus = load_corpus(&corpus, tree.as_deref())?;
            let ids = split_ids(&snap, &corpus, split)?;
            let labeled = corpus.labeled_vectors(&ids)?;
            let docs: Vec<_> = ids
                .iter()
                .zip(&labeled)
                .map(|(id, (x, k))| (id.as_str(), *x, *k))
                .collect();
            let m = &snap.model;
            let r = match ranker {
                Ranker::Hsim => evaluate(
                    &|x: &SparseVec| rank_leaves_hsim(x, m),
                    &docs,
                    m.leaf_count(),
                )?,
                Ranker::TopDown => evaluate(
                    &|x: &SparseVec| rank_leaves_topdown(x, m),
                    &docs,
                    m.leaf_count(),
                )?,
            };
            emit_report(&r, ReportFormat::from_path(&report), &report)?;
            println!("documents {}  AUCH {:.4}", r.documents(), r.auch);
            for (k, v) in &r.dcg_at {
                println!("DCG@{k} {v:.4}  p@{k} {:.4}", r.p_at[k]);
            }
        }
        Command::Serve {
            model,
            corpus,
            tree,
            port,
            host,
            log,
            snapshot_dir,
            ui,
        } => {
            let snap =
                Snapshot::load(&model).with_context(|| format!("loading {}", model.display()))?;
            let corpus = load_corpus(&corpus, tree.as_deref())?;
            if snap.model.dictionary != corpus.dictionary || snap.model.tree != corpus.tree {
                bail!("the model was trained on a different dictionary or tree than this corpus");
            }
            let label_log =
                LabelLog::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let state = AppState::new(
                corpus,
                label_log,
                ServiceConfig {
                    snapshot_dir,
                    ui_dir: ui,
                },
            )?;
            state.register(snap, Some(model))?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .context("bad --host or --port")?;
            tokio::runtime::Runtime::new()?.block_on(serve(Arc::new(state), addr))?;
        }
        Command::Synth {
            out,
            tree_out,
            seed,
            docs_per_leaf,
            unlabeled,
        } => {
            if !(0.0..=1.0).contains(&unlabeled) {
                bail!("--unlabeled must lie in [0, 1]");
            }
            let config = SynthConfig {
                seed,
                docs_per_leaf,
                ..SynthConfig::default()
            };
            let mut records = synth::generate(&config);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            for r in &mut records {
                if rng.random::<f64>() < unlabeled {
                    r.leaf = None;
                }
            }
            write_records(&out, &records)?;
            std::fs::write(
                &tree_out,
                serde_json::to_string_pretty(&synth::tree_spec(&config))?,
            )?;
            println!(
                "{} documents -> {}, tree -> {}",
                records.len(),
                out.display(),
                tree_out.display()
            );
        }
    }
    Ok(())
}

fn load_corpus(path: &Path, tree: Option<&Path>) -> anyhow::Result<Corpus> {
    let tree: Option<TopicTree> = tree.map(read_tree).transpose()?;
    Corpus::load_or_build(path, tree, CorpusConfig::default())
        .with_context(|| format!("loading {}", path.display()))
}

fn split_ids(snap: &Snapshot, corpus: &Corpus, split: Split) -> anyhow::Result<Vec<String>> {
    if split == Split::All {
        return Ok(corpus.labeled().into_iter().map(|(id, _)| id).collect());
    }
    let Some(p) = snap.meta.partition.as_ref() else {
        bail!("the snapshot records no partition; use --split all");
    };
    Ok(match split {
        Split::Test => p.test.clone(),
        Split::V0 => p.v0.clone(),
        Split::V1 => p.v1.clone(),
        Split::V2 => p.v2.clone(),
        Split::All => unreachable!(),
    })
}

/// `a,b,c` for every level, or one `;`-separated list per level.
fn parse_grid(spec: &str, height: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    let rows = spec
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad grid value {v:?}"))
                })
                .collect::<anyhow::Result<Vec<f64>>>()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    match rows.len() {
        1 => Ok(vec![rows[0].clone(); height]),
        n if n == height => Ok(rows),
        n => bail!("grid has {n} levels, the tree has {height}"),
    }
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&args.corpus, args.tree.as_deref())?;
    let h = corpus.tree.height();
    let method = match args.method {
        Method::Greedy => TrainMethod::Greedy,
        Method::Vb => TrainMethod::Vb,
        Method::Untrained => TrainMethod::Untrained,
    };
    let mut config = TrainConfig::new(method, h);
    config.seed = args.seed;
    if let Some(g) = &args.grid {
        config.greedy.alpha_grid = parse_grid(g, h)?;
    }
    config.greedy.psi = args.psi.or(config.greedy.psi);
    config.greedy.max_outer_iters = args.iters.unwrap_or(config.greedy.max_outer_iters);
    config.vb.prior = match args.prior {
        Prior::Scaled => VbPrior::Scaled,
        Prior::Unit => VbPrior::Unit,
    };
    config.vb.a = args.a;
    config.vb.b = args.b;
    config.vb.nu = args.nu;
    config.em.tol = args.tol.unwrap_or(config.em.tol);
    config.em.max_iters = args.max_iters.unwrap_or(config.em.max_iters);

    let extra: Vec<(String, SparseVec)> = match &args.unlabeled {
        Some(p) => read_records(p)?
            .into_iter()
            .map(|r| {
                let x = corpus.vectorize_text(&r.text);
                (r.id, x)
            })
            .collect(),
        None => Vec::new(),
    };
    let started = std::time::Instant::now();
    let snap = train(&corpus, &extra, &config)?;
    snap.save(&args.out)?;
    println!(
        "trained {:?} in {:.2}s, alpha {:?}{} -> {}",
        snap.meta.method,
        started.elapsed().as_secs_f64(),
        snap.model.weights.alpha,
        snap.meta
            .validation_auch
            .map_or_else(String::new, |a| format!(", validation AUCH {a:.4}")),
        args.out.display()
    );
    Ok(())
}
