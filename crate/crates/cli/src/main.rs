//! Command-line front end: ingest data, fit a staged tree, contract it into
//! a chain event graph, reduce by evidence and render DOT, either step by
//! step or as one pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 contradictory evidence.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};

use ceg_core::ceg::ChainEventGraph;
use ceg_core::error::Error;
use ceg_core::evidence::{reduce, reduce_exact, EvidenceSpec};
use ceg_core::io::{self, Model};
use ceg_core::prior::{
    default_alpha, default_hyperstage, mass_conservation_prior, validate_user_prior, Hyperstage,
};
use ceg_core::rational::parse_rat;
use ceg_core::render::{to_dot, RenderStyle};
use ceg_core::staging::{assign_colours, default_palette, run_ahc, StagedTree};
use ceg_core::table::{add_sampling_zeros, ingest, RecordTable};
use ceg_core::tree::EventTree;

#[derive(Parser)]
#[command(
    name = "ceg",
    version,
    about = "Staged trees and chain event graphs for categorical event data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV/TSV file and build the event tree.
    Build(BuildArgs),
    /// Select stages by agglomerative hierarchical clustering.
    Fit(FitArgs),
    /// Contract a staged tree into a chain event graph.
    Toceg(TocegArgs),
    /// Reduce a chain event graph by evidence and update probabilities.
    Reduce(ReduceArgs),
    /// Render a saved model as DOT text.
    Render(RenderArgs),
    /// Run build, fit, toceg and render in one go.
    Pipeline(PipelineArgs),
}

#[derive(clap::Args)]
struct BuildArgs {
    /// Input table with a header row (.tsv/.tab for tab-separated).
    #[arg(long)]
    data: PathBuf,
    /// Cell value marking a structurally missing entry.
    #[arg(long, default_value = "")]
    struct_missing_label: String,
    /// Cell value marking a sampling-missing entry; kept as an edge label.
    #[arg(long, default_value = "missing")]
    missing_label: String,
    /// JSON file with unobserved-but-possible paths (list of string lists).
    #[arg(long)]
    sampling_zeros: Option<PathBuf>,
    /// Output event tree JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Event tree JSON produced by `build`.
    #[arg(long)]
    tree: PathBuf,
    /// Root imaginary sample size, e.g. "4" or "7/2". Defaults to the
    /// maximum out-degree.
    #[arg(long, conflicts_with = "prior")]
    alpha: Option<String>,
    /// JSON prior file: situation id -> list of rational strings.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// JSON hyperstage file: list of lists of situation ids.
    #[arg(long)]
    hyperstage: Option<PathBuf>,
    /// JSON palette file: list of colours for multi-member stages.
    #[arg(long)]
    palette: Option<PathBuf>,
    /// Cap on scoring threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output staged tree JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct TocegArgs {
    /// Staged tree JSON produced by `fit`.
    #[arg(long)]
    staged: PathBuf,
    /// Output chain event graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ReduceArgs {
    /// Chain event graph JSON produced by `toceg`.
    #[arg(long)]
    ceg: PathBuf,
    /// Evidence JSON file.
    #[arg(long)]
    evidence: PathBuf,
    /// Propagate with exact rational arithmetic as well as doubles.
    #[arg(long, action = ArgAction::SetTrue)]
    exact: bool,
    /// Output reduced graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RenderArgs {
    /// Any model JSON (event tree, staged tree, ceg, reduced ceg).
    #[arg(long)]
    model: PathBuf,
    /// Palette file; staged trees are re-coloured with it.
    #[arg(long)]
    palette: Option<PathBuf>,
    /// Decimal places for probabilities.
    #[arg(long, default_value_t = 2)]
    precision: usize,
    /// Output DOT file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "")]
    struct_missing_label: String,
    #[arg(long, default_value = "missing")]
    missing_label: String,
    #[arg(long)]
    sampling_zeros: Option<PathBuf>,
    #[arg(long, conflicts_with = "prior")]
    alpha: Option<String>,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long)]
    hyperstage: Option<PathBuf>,
    #[arg(long)]
    palette: Option<PathBuf>,
    /// Optional evidence to reduce the fitted graph.
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long, action = ArgAction::SetTrue)]
    exact: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 2)]
    precision: usize,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            err.print().ok();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        let code = match err {
            Error::ContradictoryEvidence(_) => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Build(args) => {
            let tree = build_tree(&args)?;
            io::save(&Model::EventTree(tree), &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Fit(args) => {
            let tree = io::load(&args.tree)?.into_event_tree()?;
            let staged = fit_tree(
                &tree,
                args.alpha.as_deref(),
                args.prior.as_deref(),
                args.hyperstage.as_deref(),
                args.palette.as_deref(),
                args.threads,
            )?;
            io::save(&Model::StagedTree(staged), &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Toceg(args) => {
            let staged = io::load(&args.staged)?.into_staged_tree()?;
            let ceg = ChainEventGraph::from_staged(&staged)?;
            io::save(&Model::Ceg(ceg), &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Reduce(args) => {
            let ceg = io::load(&args.ceg)?.into_ceg()?;
            let evidence = io::load_evidence(&args.evidence)?;
            let reduced = reduce_ceg(&ceg, &evidence, args.exact)?;
            io::save(&Model::ReducedCeg(reduced), &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Render(args) => {
            let mut model = io::load(&args.model)?;
            let style = render_style(args.palette.as_deref(), args.precision)?;
            if args.palette.is_some() {
                if let Model::StagedTree(staged) = &mut model {
                    assign_colours(staged, &style.palette)?;
                }
            }
            let dot = to_dot(&model, &style)?;
            std::fs::write(&args.out, dot)
                .map_err(|e| Error::io(args.out.display().to_string(), e))?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Pipeline(args) => pipeline(&args),
    }
}

fn build_tree(args: &BuildArgs) -> Result<EventTree, Error> {
    let records = RecordTable::from_path(&args.data)?;
    let mut table = ingest(&records, &args.struct_missing_label, &args.missing_label)?;
    if let Some(path) = &args.sampling_zeros {
        let zeros = io::load_sampling_zeros(path)?;
        table = add_sampling_zeros(&table, &zeros)?;
    }
    EventTree::from_path_table(&table)
}

fn fit_tree(
    tree: &EventTree,
    alpha: Option<&str>,
    prior: Option<&Path>,
    hyperstage: Option<&Path>,
    palette: Option<&Path>,
    threads: Option<usize>,
) -> Result<StagedTree, Error> {
    let spec = match prior {
        Some(path) => validate_user_prior(tree, io::load_prior(path)?)?,
        None => {
            let alpha = match alpha {
                Some(text) => parse_rat(text)?,
                None => default_alpha(tree),
            };
            mass_conservation_prior(tree, &alpha)?
        }
    };
    let hyperstage = match hyperstage {
        Some(path) => Hyperstage::from_user(tree, io::load_hyperstage(path)?)?,
        None => default_hyperstage(tree),
    };
    let mut staged = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_ahc(tree, &spec, &hyperstage))?
        }
        None => run_ahc(tree, &spec, &hyperstage)?,
    };
    let palette = match palette {
        Some(path) => io::load_palette(path)?,
        None => default_palette(),
    };
    assign_colours(&mut staged, &palette)?;
    Ok(staged)
}

fn reduce_ceg(
    ceg: &ChainEventGraph,
    evidence: &EvidenceSpec,
    exact: bool,
) -> Result<ceg_core::evidence::ReducedCeg, Error> {
    if exact {
        reduce_exact(ceg, evidence)
    } else {
        reduce(ceg, evidence)
    }
}

fn render_style(palette: Option<&Path>, precision: usize) -> Result<RenderStyle, Error> {
    let mut style = RenderStyle {
        precision,
        ..Default::default()
    };
    if let Some(path) = palette {
        style.palette = io::load_palette(path)?;
    }
    style.validate()?;
    Ok(style)
}

fn pipeline(args: &PipelineArgs) -> Result<(), Error> {
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let style = render_style(args.palette.as_deref(), args.precision)?;

    let tree = build_tree(&BuildArgs {
        data: args.data.clone(),
        struct_missing_label: args.struct_missing_label.clone(),
        missing_label: args.missing_label.clone(),
        sampling_zeros: args.sampling_zeros.clone(),
        out: PathBuf::new(),
    })?;
    write_artifact(&args.out, "tree", &Model::EventTree(tree.clone()), &style)?;

    let staged = fit_tree(
        &tree,
        args.alpha.as_deref(),
        args.prior.as_deref(),
        args.hyperstage.as_deref(),
        args.palette.as_deref(),
        args.threads,
    )?;
    write_artifact(&args.out, "staged", &Model::StagedTree(staged.clone()), &style)?;

    let ceg = ChainEventGraph::from_staged(&staged)?;
    write_artifact(&args.out, "ceg", &Model::Ceg(ceg.clone()), &style)?;

    if let Some(path) = &args.evidence {
        let evidence = io::load_evidence(path)?;
        let reduced = reduce_ceg(&ceg, &evidence, args.exact)?;
        write_artifact(&args.out, "reduced", &Model::ReducedCeg(reduced), &style)?;
    }
    Ok(())
}

fn write_artifact(dir: &Path, name: &str, model: &Model, style: &RenderStyle) -> Result<(), Error> {
    let json_path = dir.join(format!("{name}.json"));
    io::save(model, &json_path)?;
    eprintln!("wrote {}", json_path.display());
    let dot_path = dir.join(format!("{name}.dot"));
    std::fs::write(&dot_path, to_dot(model, style)?)
        .map_err(|e| Error::io(dot_path.display().to_string(), e))?;
    eprintln!("wrote {}", dot_path.display());
    Ok(())
}
