use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use protolatent::commands::{self, AdaptInputs, ExtractOutputs, LatentSource, Overrides};
use protolatent::config::ExperimentConfig;
use protolatent::{CliError, Result};

/// Latent prototype experiments on synthetic dual-modality data.
#[derive(Parser)]
#[command(name = "protolatent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// The experiment config plus the scalar fields a flag may replace.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    /// Number of clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Weight of the output loss in adapt.
    #[arg(long)]
    lambda: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let o = Overrides {
            seed: self.seed,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            clusters: self.clusters,
            lambda: self.lambda,
        };
        commands::load_config(&self.config, &o)
    }
}

/// A single network or a chain manifest.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
}

impl SourceArgs {
    fn source(&self) -> LatentSource {
        match (&self.net, &self.chain) {
            (Some(n), _) => LatentSource::Net(n.clone()),
            (None, Some(c)) => LatentSource::Chain(c.clone()),
            (None, None) => unreachable!("clap requires one of --net and --chain"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate, split and balance a synthetic dataset.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for train/valid/test files and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured network on a gen-data directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV: epoch, f1, f2, total, train_acc, valid_acc.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Accuracy of a stored network on one dataset file.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Cluster latents into a labeled prototype set.
    ExtractCluster {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        data: PathBuf,
        /// Prototype file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the latents (plus a `.header` file).
        #[arg(long)]
        latents: Option<PathBuf>,
        /// Also write the cluster model (plus a `.header` file).
        #[arg(long = "clusters-out")]
        clusters_out: Option<PathBuf>,
        /// Text file with one annotation per cluster.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Train a back network on a frozen front network's latents.
    Chain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        front: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Chain manifest to write; the two networks go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Merge two prototype sets into one.
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Latents of the higher-dimensional set, for the PCA map.
        #[arg(long = "pca-from")]
        pca_from: Option<PathBuf>,
        #[arg(long = "pca-dim")]
        pca_dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the PCA map; defaults to `<out>.pca`.
        #[arg(long = "pca-out")]
        pca_out: Option<PathBuf>,
    },
    /// Nearest-prototype prediction with a per-subject report.
    Predict {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        set: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        data: PathBuf,
        /// PCA map applied to the latents first.
        #[arg(long)]
        pca: Option<PathBuf>,
    },
    /// Train a volume-only network with the prototype-guided loss.
    Adapt {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Prototype set of the dual-modality network.
        #[arg(long)]
        reference: PathBuf,
        /// The dual-modality network itself (needed for reference targets).
        #[arg(long = "reference-net")]
        reference_net: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Prototype centers and their 3-D projection as CSV.
    ReportCenters {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::GenData { cfg, out } => commands::gen_data(&cfg.load()?, &out),
        Command::Train { cfg, data, out, history } => commands::train_cmd(&cfg.load()?, &data, &out, history.as_deref()),
        Command::Eval { cfg, net, data } => commands::eval_cmd(&cfg.load()?, &net, &data),
        Command::ExtractCluster {
            cfg,
            source,
            data,
            out,
            latents,
            clusters_out,
            annotations,
        } => commands::extract_cluster(
            &cfg.load()?,
            &source.source(),
            &data,
            &ExtractOutputs {
                prototypes: &out,
                latents: latents.as_deref(),
                clusters: clusters_out.as_deref(),
                annotations: annotations.as_deref(),
            },
        ),
        Command::Chain {
            cfg,
            front,
            data,
            out,
            history,
        } => commands::chain_cmd(&cfg.load()?, &front, &data, &out, history.as_deref()),
        Command::Merge {
            a,
            b,
            pca_from,
            pca_dim,
            out,
            pca_out,
        } => commands::merge_cmd(&a, &b, pca_from.as_deref(), pca_dim, &out, pca_out.as_deref()),
        Command::Predict {
            cfg,
            set,
            source,
            data,
            pca,
        } => Ok(commands::predict_cmd(&cfg.load()?, &set, &source.source(), &data, pca.as_deref())?.0),
        Command::Adapt {
            cfg,
            data,
            reference,
            reference_net,
            out,
            history,
        } => commands::adapt_cmd(
            &cfg.load()?,
            &AdaptInputs {
                data: &data,
                reference: &reference,
                reference_net: reference_net.as_deref(),
                out: &out,
                history: history.as_deref(),
            },
        ),
        Command::ReportCenters { set, out } => commands::report_centers(&set, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
