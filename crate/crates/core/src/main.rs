use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xlingua::analogy_bench::parse_dictionary;
use xlingua::linear_maps::fit;
use xlingua::pipeline::SynthParams;
use xlingua::{
    apply_map, build_aligned, generate_synthetic, load_space, Error, Experiment, ExperimentConfig, ExperimentTag,
    LinearMap, LoadOptions, Method, Mode, PostProcessing, Result,
};

#[derive(Parser)]
#[command(name = "xlingua", version, about = "Cross-lingual embedding maps and word analogy evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear map between two semantic spaces from a bilingual dictionary.
    Fit(FitArgs),
    /// Apply a fitted map to a semantic space and write the mapped space.
    Transform(TransformArgs),
    /// Evaluate one ordered language pair of one experiment cell.
    Eval(EvalArgs),
    /// Run experiment cells and write per-pair and summary reports.
    Grid(GridArgs),
    /// Measure accuracy as the dictionary size varies.
    SweepDict(SweepArgs),
    /// Generate a synthetic multilingual fixture with a ready-to-run config.
    Synth(SynthArgs),
}

/// Settings that override the values of the experiment config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Mapping methods (LS, OT, CCA).
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<Method>,
    /// Evaluation modes (B, M).
    #[arg(long = "mode", value_delimiter = ',')]
    modes: Vec<Mode>,
    /// Post-processing variants (none, c, u, cu).
    #[arg(long = "post", value_delimiter = ',')]
    post: Vec<PostProcessing>,
    #[arg(long)]
    dict_size: Option<usize>,
    #[arg(long)]
    search_limit: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    pivot: Option<String>,
    /// Output directory for reports and cached maps.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    cca_epsilon: Option<f64>,
    /// Read at most this many words from each space.
    #[arg(long)]
    space_limit: Option<usize>,
    /// Always refit maps instead of reusing cached ones.
    #[arg(long)]
    no_cache: bool,
}

impl Overrides {
    fn apply(self, config: &mut ExperimentConfig) {
        if !self.methods.is_empty() {
            config.methods = self.methods;
        }
        if !self.modes.is_empty() {
            config.modes = self.modes;
        }
        if !self.post.is_empty() {
            config.postprocessing = self.post;
        }
        if let Some(v) = self.dict_size {
            config.dictionary_size = v;
        }
        if let Some(v) = self.search_limit {
            config.search_limit = v;
        }
        if let Some(v) = self.top_k {
            config.top_k = v;
        }
        if let Some(v) = self.pivot {
            config.pivot = v;
        }
        if let Some(v) = self.output {
            config.output_dir = v;
        }
        if let Some(v) = self.cca_epsilon {
            config.cca_epsilon = v;
        }
        if self.space_limit.is_some() {
            config.space_limit = self.space_limit;
        }
        if self.no_cache {
            config.cache = false;
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Source space in word2vec text format.
    #[arg(long)]
    source: PathBuf,
    /// Target space in word2vec text format.
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    source_lang: String,
    #[arg(long)]
    target_lang: String,
    /// Bilingual dictionary, one `source<TAB>target` pair per line.
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "OT")]
    method: Method,
    #[arg(long, default_value = "cu")]
    post: PostProcessing,
    #[arg(long, default_value_t = xlingua::analogy_bench::DEFAULT_DICTIONARY_SIZE)]
    dict_size: usize,
    #[arg(long, default_value_t = xlingua::linear_maps::DEFAULT_CCA_EPSILON)]
    cca_epsilon: f64,
    /// Read at most this many words from each space.
    #[arg(long)]
    limit: Option<usize>,
    /// Where to write the map.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    map: PathBuf,
    /// Raw source space; it is post-processed to match the map first.
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Experiment cell, e.g. B-OT-cu.
    #[arg(long)]
    tag: ExperimentTag,
    #[arg(long)]
    source_lang: String,
    #[arg(long)]
    target_lang: String,
    /// Print the report as JSON instead of TSV.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: PathBuf,
    /// Cells to run; defaults to every configured combination.
    #[arg(long = "tag", value_delimiter = ',')]
    tags: Vec<ExperimentTag>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "B-OT-cu")]
    tag: ExperimentTag,
    #[arg(long, value_delimiter = ',', default_value = "1000,5000,10000,20000,50000")]
    sizes: Vec<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    words: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    languages: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    categories: usize,
    /// Maximum planted pairs per category.
    #[arg(long, default_value_t = 8)]
    pairs: usize,
}

fn load_config(path: &Path, overrides: Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run_fit(args: FitArgs) -> Result<bool> {
    let options = LoadOptions {
        limit: args.limit,
        ..LoadOptions::default()
    };
    let source = load_space(&args.source, &args.source_lang, &options)?.postprocess(args.post)?;
    let target = load_space(&args.target, &args.target_lang, &options)?.postprocess(args.post)?;
    let dict = parse_dictionary(&args.dict, &args.source_lang, &args.target_lang, Some(args.dict_size))?;
    let aligned = build_aligned(&source, &target, &dict)?;
    let map = fit(&aligned, args.method, args.cca_epsilon)?;
    map.save(&args.out)?;
    log::info!(
        "fitted {} map on {} pairs ({} skipped), written to {}",
        args.method,
        aligned.pairs_used.len(),
        aligned.skipped,
        args.out.display()
    );
    Ok(true)
}

fn run_transform(args: TransformArgs) -> Result<bool> {
    let map = LinearMap::load(&args.map)?;
    let options = LoadOptions {
        limit: args.limit,
        ..LoadOptions::default()
    };
    let space = load_space(&args.space, &map.source_language, &options)?.postprocess(map.postprocessing)?;
    let mapped = apply_map(&map, &space)?;
    mapped.save(&args.out)?;
    log::info!("wrote {} mapped vectors to {}", mapped.len(), args.out.display());
    Ok(true)
}

fn run_eval(args: EvalArgs) -> Result<bool> {
    let config = load_config(&args.config, args.overrides)?;
    let experiment = Experiment::load(config)?;
    let report = experiment.evaluate_pair(args.tag, &args.source_lang, &args.target_lang)?;
    if args.json {
        println!("{}", report.to_json()?);
    } else {
        print!("{}", report.to_tsv());
    }
    Ok(true)
}

fn run_grid(args: GridArgs) -> Result<bool> {
    let config = load_config(&args.config, args.overrides)?;
    let experiment = Experiment::load(config)?;
    let summary = experiment.run_grid(&args.tags)?;
    for cell in &summary.cells {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"));
        println!(
            "{}\tmono {}\tcross {}\tfailed {}",
            cell.tag,
            fmt(cell.monolingual_acc1),
            fmt(cell.cross_lingual_acc1),
            cell.pairs_failed
        );
    }
    println!("reports written to {}", experiment.config().output_dir.display());
    Ok(summary.failed_pairs() == 0)
}

fn run_sweep(args: SweepArgs) -> Result<bool> {
    let config = load_config(&args.config, args.overrides)?;
    let experiment = Experiment::load(config)?;
    let points = experiment.sweep_dictionary(args.tag, &args.sizes)?;
    for p in &points {
        println!("{}\t{}\t{:.1}\t{:.1}", p.dictionary_size, p.target, p.acc1, p.acck);
    }
    Ok(true)
}

fn run_synth(args: SynthArgs) -> Result<bool> {
    let params = SynthParams {
        n_words: args.words,
        dim: args.dim,
        n_languages: args.languages,
        noise: args.noise,
        seed: args.seed,
        categories: args.categories,
        max_pairs: args.pairs,
    };
    let out = generate_synthetic(&args.out, &params)?;
    println!(
        "{} languages, {} words each, {} pairs per category; config at {}",
        out.languages.len(),
        out.n_words,
        out.pairs_per_category,
        out.config_path.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome: Result<bool, Error> = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Transform(a) => run_transform(a),
        Command::Eval(a) => run_eval(a),
        Command::Grid(a) => run_grid(a),
        Command::SweepDict(a) => run_sweep(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some experiment cells failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
