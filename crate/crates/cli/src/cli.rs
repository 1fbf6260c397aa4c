//! Command-line surface. Every option is also a key of the flat config file
//! (dashes become underscores); flags override file values.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tvgnn", version, about = "GNN vertex clustering and graph pooling driven by graph total variation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic graph (ring, grid or sbm) as edge list, features and labels.
    Gen(GenArgs),
    /// Train the clustering model on one graph for each seed.
    Cluster(ClusterArgs),
    /// Stratified k-fold graph classification with pooling.
    Classify(ClassifyArgs),
    /// Score saved assignments against labels.
    Eval(EvalArgs),
    /// Compare every analytic gradient against central differences.
    Gradcheck(GradcheckArgs),
}

/// `(key, value)` for each listed field, keyed by the field name.
macro_rules! pairs {
    ($self:ident; $($field:ident),* $(,)?) => {
        vec![$((stringify!($field), $self.$field.clone())),*]
    };
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Comma-separated seed list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub jobs: Option<String>,
    #[arg(long, hide = true)]
    pub task: Option<String>,
}

impl Common {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        pairs!(self; out, seed, seeds, jobs, task)
    }
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub rows: Option<String>,
    #[arg(long)]
    pub cols: Option<String>,
    /// Comma-separated SBM block sizes.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub p_in: Option<String>,
    #[arg(long)]
    pub p_out: Option<String>,
    /// SBM seed; falls back to --seed.
    #[arg(long)]
    pub graph_seed: Option<String>,
}

impl GeneratorArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        pairs!(self; n, rows, cols, sizes, p_in, p_out, graph_seed)
    }
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// tvgnn, mincut or dmon.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub alpha1: Option<String>,
    #[arg(long)]
    pub alpha2: Option<String>,
    /// Balance asymmetry; defaults to K − 1.
    #[arg(long)]
    pub rho: Option<String>,
    /// frozen or routed.
    #[arg(long)]
    pub quantile_gradient: Option<String>,
    #[arg(long)]
    pub dmon_reg: Option<String>,
    #[arg(long)]
    pub dmon_normalized: Option<String>,
}

impl LossArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        pairs!(self; loss, alpha1, alpha2, rho, quantile_gradient, dmon_reg, dmon_normalized)
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long, alias = "lr")]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    /// gtvconv or gcn.
    #[arg(long)]
    pub mp: Option<String>,
    /// Comma-separated message-passing widths.
    #[arg(long)]
    pub mp_channels: Option<String>,
    #[arg(long)]
    pub mp_activation: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    /// simplified or degree-weighted.
    #[arg(long)]
    pub variant: Option<String>,
}

impl ModelArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        pairs!(self; epochs, learning_rate, l2, mp, mp_channels, mp_activation, delta, epsilon, variant)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// ring, grid or sbm.
    #[arg(long)]
    pub kind: Option<String>,
    #[command(flatten)]
    pub graph: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<String>,
    /// Synthetic input graph: ring, grid or sbm.
    #[arg(long)]
    pub generator: Option<String>,
    #[command(flatten)]
    pub graph: GeneratorArgs,
    #[arg(long)]
    pub edges: Option<String>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub mlp_channels: Option<String>,
    #[arg(long)]
    pub mlp_activation: Option<String>,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Order of profile.csv: vertex or ascending.
    #[arg(long)]
    pub profile: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Graph collection in JSON lines.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[arg(long)]
    pub split_seed: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub post_mp_channels: Option<String>,
    #[arg(long)]
    pub post_mp_activation: Option<String>,
    #[arg(long)]
    pub pool_channels: Option<String>,
    #[arg(long)]
    pub pool_activation: Option<String>,
    #[arg(long)]
    pub k_pool: Option<String>,
    #[arg(long)]
    pub blocks: Option<String>,
    /// mean or sum.
    #[arg(long)]
    pub readout: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// assignments.csv from `cluster`, or one cluster id per line.
    #[arg(long)]
    pub assignments: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    /// Edge list, for cut values.
    #[arg(long)]
    pub edges: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, hide = true)]
    pub task: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Central-difference step.
    #[arg(long)]
    pub h: Option<String>,
    /// Random points per op.
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
    #[arg(long, hide = true)]
    pub task: Option<String>,
}

impl Command {
    /// Config file path and every accepted key with its flag value.
    pub fn settings_input(&self) -> (Option<PathBuf>, Vec<(&'static str, Option<String>)>) {
        match self {
            Command::Gen(a) => {
                let mut v = a.common.pairs();
                v.extend(pairs!(a; kind));
                v.extend(a.graph.pairs());
                (a.common.config.clone(), v)
            }
            Command::Cluster(a) => {
                let mut v = a.common.pairs();
                v.extend(pairs!(a; k, generator, edges, features, labels, mlp_channels, mlp_activation, profile));
                v.extend(a.graph.pairs());
                v.extend(a.model.pairs());
                v.extend(a.loss.pairs());
                (a.common.config.clone(), v)
            }
            Command::Classify(a) => {
                let mut v = a.common.pairs();
                v.extend(pairs!(a; data, folds, split_seed, post_mp_channels, post_mp_activation, pool_channels,
                    pool_activation, k_pool, blocks, readout, patience, batch_size));
                v.extend(a.model.pairs());
                v.extend(a.loss.pairs());
                (a.common.config.clone(), v)
            }
            Command::Eval(a) => (a.config.clone(), pairs!(a; assignments, labels, edges, k, out, task)),
            Command::Gradcheck(a) => (a.config.clone(), pairs!(a; h, points, seed, out, inject_fault, task)),
        }
    }
}
