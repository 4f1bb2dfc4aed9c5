use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hincrec::config::{parse_synth_config, RunConfig};
use hincrec::data::{DataError, Dataset};
use hincrec::graph::{NodeRef, NodeType};
use hincrec::metapath::PathCorpus;
use hincrec::metrics::{EvalReport, ModelScorer, PopularityScorer, RandomScorer};
use hincrec::model::Model;
use hincrec::pipeline::Prepared;
use hincrec::policy::{top_k, ActionSet};
use hincrec::synth::{generate_synthetic, SynthConfig};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "hincrec", version, about = "Concept recommendation over a heterogeneous MOOC graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample meta-path walks over the training graph.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Supervised pretraining only.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Pretraining followed by policy-gradient fine-tuning.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ckpt: PathBuf,
        /// Start RL from this checkpoint instead of pretraining.
        #[arg(long, conflicts_with = "no_pretrain")]
        init: Option<PathBuf>,
        /// Start RL from random parameters.
        #[arg(long)]
        no_pretrain: bool,
    },
    /// Rank held-out clicks and print metrics.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, required_unless_present = "scorer")]
        ckpt: Option<PathBuf>,
        /// Reference scorer to evaluate instead of a checkpoint.
        #[arg(long, value_enum)]
        scorer: Option<Reference>,
        #[arg(long)]
        pretty: bool,
    },
    /// Print the greedy top-K concepts for one user.
    Recommend {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 20)]
        topk: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    Random,
    Popularity,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding nodes.tsv and edges.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Train/test split timestamp.
    #[arg(long)]
    cutoff: Option<i64>,
    /// Suppress per-episode progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
struct Failure(String);

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::parse(&read(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if self.cutoff.is_some() {
            cfg.cutoff = self.cutoff;
        }
        Ok(cfg)
    }

    fn prepare(&self, cfg: &RunConfig) -> Result<Prepared, Failure> {
        let ds = Dataset::load_dir(&self.data)?;
        let p = Prepared::new(ds, cfg);
        let r = &p.split.report;
        if !self.quiet {
            eprintln!(
                "split at {}: {} train clicks, {} test positives ({} duplicate, {} cold, {} already clicked dropped)",
                r.cutoff, r.train_clicks, r.positives, r.duplicates, r.dropped_cold, r.dropped_seen
            );
        }
        Ok(p)
    }
}

fn load_model(path: &Path, ds: &Dataset) -> Result<Model, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let model = Model::from_blob(&bytes)?;
    let rows = |id| model.store.get(id).shape().dims()[0];
    let counts: Vec<usize> = model.embed.features.iter().map(|&id| rows(id)).collect();
    if counts != ds.graph.counts() || model.concepts() != ds.graph.counts()[3] {
        return Err(Failure(format!(
            "{}: checkpoint node counts {counts:?} do not match the dataset {:?}",
            path.display(),
            ds.graph.counts()
        )));
    }
    Ok(model)
}

/// Evaluation and recommendation must walk the meta-paths the model was
/// trained with.
fn align_metapaths(cfg: &mut RunConfig, model: &Model) {
    cfg.train.metapaths = model.embed.metapath_ids();
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let mut cfg = match config {
                Some(p) => parse_synth_config(&read(&p)?)?,
                None => SynthConfig { seed: DEFAULT_SEED, ..SynthConfig::default() },
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ds = generate_synthetic(&cfg)?;
            ds.save_dir(&out)?;
            eprintln!("wrote {} nodes, {} edges to {}", ds.graph.total_nodes(), ds.graph.edge_count(), out.display());
        }
        Command::Sample { run, out } => {
            let cfg = run.config()?;
            let p = run.prepare(&cfg)?;
            write(&out, p.eval_corpus.to_text())?;
            eprintln!("wrote {} walks to {}", p.eval_corpus.len(), out.display());
        }
        Command::Pretrain { run, ckpt } => {
            let cfg = run.config()?;
            let p = run.prepare(&cfg)?;
            let mut model = p.init_model(&cfg);
            let quiet = run.quiet;
            p.pretrain(&mut model, &cfg, &mut |e, loss| {
                if !quiet {
                    eprintln!("pretrain\t{e}\t{loss:.6}");
                }
            })?;
            write(&ckpt, model.to_blob())?;
        }
        Command::Train { run, ckpt, init, no_pretrain } => {
            let cfg = run.config()?;
            let p = run.prepare(&cfg)?;
            let quiet = run.quiet;
            let mut model = match init {
                Some(path) => load_model(&path, &p.full)?,
                None => {
                    let mut m = p.init_model(&cfg);
                    if !no_pretrain {
                        p.pretrain(&mut m, &cfg, &mut |e, loss| {
                            if !quiet {
                                eprintln!("pretrain\t{e}\t{loss:.6}");
                            }
                        })?;
                    }
                    m
                }
            };
            p.train_rl(&mut model, &cfg, &mut |log| {
                if !quiet {
                    eprintln!("episode\t{}\tuser {}\tlen {}\treward {}", log.episode, log.user, log.length, log.total_reward);
                }
            })?;
            write(&ckpt, model.to_blob())?;
        }
        Command::Eval { run, ckpt, scorer, pretty } => {
            let mut cfg = run.config()?;
            let report: EvalReport = match (scorer, ckpt) {
                (Some(Reference::Random), _) => {
                    let p = run.prepare(&cfg)?;
                    p.evaluate_with(&mut RandomScorer::new(cfg.train.seed), &cfg)?
                }
                (Some(Reference::Popularity), _) => {
                    let p = run.prepare(&cfg)?;
                    let mut s = PopularityScorer(p.split.train.concept_popularity());
                    p.evaluate_with(&mut s, &cfg)?
                }
                (None, Some(path)) => {
                    let probe = Dataset::load_dir(&run.data)?;
                    let model = load_model(&path, &probe)?;
                    align_metapaths(&mut cfg, &model);
                    let p = run.prepare(&cfg)?;
                    p.evaluate(&model, &cfg)?
                }
                (None, None) => unreachable!("clap requires --ckpt or --scorer"),
            };
            if pretty {
                println!("{report}");
            } else {
                println!("{}", report.to_tsv());
            }
        }
        Command::Recommend { run, ckpt, user, topk } => {
            let mut cfg = run.config()?;
            let probe = Dataset::load_dir(&run.data)?;
            let model = load_model(&ckpt, &probe)?;
            align_metapaths(&mut cfg, &model);
            let p = run.prepare(&cfg)?;
            let u = match p.full.ids.get(&user) {
                Some(n) if n.ty == NodeType::User => n,
                _ => return Err(Failure(DataError::ConfigInvalid(format!("no user with id {user:?}")).to_string())),
            };
            let corpus: &PathCorpus = &p.eval_corpus;
            let mut scorer = ModelScorer::new(&model, corpus, &cfg.train.embed, cfg.train.seed);
            let logits = scorer.logits(u.index)?.to_vec();
            let actions = ActionSet::full(model.concepts());
            for (c, score) in top_k(&logits, &actions, topk) {
                println!("{}\t{score:.6}", p.full.ids.name(NodeRef::concept(c as u32)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
