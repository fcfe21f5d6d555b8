use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use homophily::features::{build_feature_table, default_axes, FeatureTable, ScoreTable};
use homophily::inference::{fit, FitResult};
use homophily::ingest::{ingest_files, open_buffered, ActivityTable, InteractionGraph, SelectionConfig, SliceFiles};
use homophily::sampler::{build_balanced_dataset_streams, LabeledDataset, Mode, Proclivity};
use homophily::study::{emit_tables, run_study, StudyConfig};
use homophily::synth::{generate, write_outputs, PlantedConfig};

#[derive(Parser)]
#[command(name = "homophily", version, about = "Attribute-pair effects on directed reply networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select users and build the reply graph of one slice.
    Ingest {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        activity: PathBuf,
        #[arg(long)]
        botlist: Option<PathBuf>,
        #[arg(long)]
        slice: String,
        #[arg(long, default_value_t = 25)]
        min_messages: u64,
        #[arg(long, default_value_t = 5)]
        min_subreddits: usize,
        #[arg(long, default_value_t = 50.0)]
        max_subreddits_per_month: f64,
        #[arg(long, default_value_t = 12)]
        months: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project subreddit scores onto graph users and binarize by quantile.
    Features {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        activity: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        q: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a balanced labeled dataset: arcs plus null-model negatives.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = Mode::Sd)]
        mode: Mode,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        streams: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the logistic model and write coefficients with Wald statistics.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Defaults to the mode recorded with the dataset.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 1e-6)]
        ridge: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every slice of a study config and write the report tables.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with planted coefficients.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            posts,
            comments,
            activity,
            botlist,
            slice,
            min_messages,
            min_subreddits,
            max_subreddits_per_month,
            months,
            out,
        } => {
            let config = SelectionConfig {
                min_messages,
                min_subreddits,
                max_subreddits_per_month,
                months_in_slice: months,
                ..Default::default()
            };
            let files = SliceFiles { posts: &posts, comments: &comments, activity: &activity, bot_list: botlist.as_deref() };
            let ing = ingest_files(files, &slice, config)?;
            ing.graph.write(&out)?;
            println!(
                "slice {}: {} users selected, {} excluded; {} nodes, {} distinct arcs, {} reply events",
                slice,
                ing.users.selected.len(),
                ing.users.excluded.len(),
                ing.graph.n_nodes(),
                ing.graph.n_arcs(),
                ing.graph.n_reply_events()
            );
            if ing.users.monthly_rule_approximated {
                println!("note: monthly subreddit rule approximated over {months} months");
            }
        }
        Command::Features { graph, activity, scores, q, out } => {
            let g = InteractionGraph::read(&graph)?;
            let act = ActivityTable::parse(open_buffered(&activity)?)?;
            let sc = ScoreTable::parse(open_buffered(&scores)?)?;
            let table = build_feature_table(&g.nodes, &act, &sc, default_axes(), q)?;
            table.write_csv(&out)?;
            for (axis, n) in table.axes.iter().zip(&table.population) {
                println!("{}: {} of {} users scored", axis.name, n, table.rows.len());
            }
        }
        Command::Sample { graph, mode, seed, streams, out } => {
            let g = InteractionGraph::read(&graph)?;
            let d = build_balanced_dataset_streams(&g, &Proclivity::from_graph(&g), mode, seed, streams)?;
            d.write(&out)?;
            println!(
                "{} examples ({} positive); acceptance {:.6}, {} self and {} link rejections",
                d.len(),
                d.n_positive(),
                d.rejection_stats.acceptance_probability,
                d.rejection_stats.rejected_self,
                d.rejection_stats.rejected_link
            );
        }
        Command::Fit { dataset, features, mode, ridge, out } => {
            let d = LabeledDataset::read(&dataset)?;
            let f = FeatureTable::read_csv(&features)?;
            let r: FitResult = fit(&d, &f, mode.unwrap_or(d.mode), ridge)?;
            r.write(&out)?;
            println!(
                "loglik {:.6} after {} iterations (converged: {}); {} of {} W entries with p < 0.05",
                r.loglik,
                r.n_iter,
                r.converged,
                r.w.iter().flatten().filter(|c| c.is_significant(0.05)).count(),
                r.w.iter().flatten().count()
            );
        }
        Command::Study { config, out } => {
            let c = StudyConfig::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let result = run_study(&c)?;
            let files = emit_tables(&result, &out)?;
            let robust = result.aggregates.values().filter(|a| a.robust).count();
            println!("{} slices; {} robust coefficients; wrote {} files", result.slices.len(), robust, files.len());
        }
        Command::Synth { config, out_dir } => {
            let c = PlantedConfig::read(&config)?;
            let o = generate(&c)?;
            write_outputs(&c, &o, &out_dir)?;
            println!("{} users, {} candidates, {} examples", c.n_users, o.candidates.len(), o.dataset.len());
        }
    }
    Ok(())
}
