//! `recmia`: staged and end-to-end membership inference experiments.
//!
//! The staged subcommands pass plain files between each other: ratings as
//! `user,item,score` rows, recommendation lists as `user_id,rank,item_id`
//! rows, feature tables as `label,z1..zl` rows, and models as JSON.

mod config;
mod io;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use recmia_core::attack::{
    attack_auc, generate_labeled_dataset, kmeans_auc, restore_held_out, serve_profiles, train_attack, AttackDataset,
    AttackMlp, FeatureMethod, MlpTrainConfig, NonMemberPath, Provenance, RecSource, UserProfile, WeightScheme,
};
use recmia_core::cache::{Cache, CACHE_DIR_ENV};
use recmia_core::data::{
    filter_min_interactions, hold_out_one, parse_ratings, split_member_nonmember, split_three_way, to_implicit,
    Delimiter, RatingDataset, SplitManifest, SplitPlan,
};
use recmia_core::defense::{popularity_randomization, DefenseConfig};
use recmia_core::experiment::{grid_specs, run_grid, DatasetSource, ExperimentSpec, Lab};
use recmia_core::mf::{embed_dataset, LatentFactorization, MfConfig};
use recmia_core::recommender::{hit_rate, popularity_rank, train, Algorithm, RecommenderConfig, RecommenderModel};
use recmia_core::seed;
use recmia_core::synthetic::SyntheticConfig;

use crate::io::Lists;

#[derive(Parser)]
#[command(
    name = "recmia",
    version,
    about = "Membership inference auditing for recommender systems"
)]
struct Cli {
    /// Artifact cache directory.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    /// Recompute every stage instead of using the cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating file (or generate synthetic data) into normalized CSV.
    Ingest(IngestArgs),
    /// Split ratings into shadow, target and item-feature partitions.
    Split(SplitArgs),
    /// Learn item embeddings from the feature partition.
    Embed(EmbedArgs),
    /// Pick members and train a recommender on them.
    TrainRec(TrainRecArgs),
    /// Serve top-k lists: personalized for members, popular for non-members.
    Recommend(RecommendArgs),
    /// Build labeled attack features from interactions and lists.
    GenFeatures(GenFeaturesArgs),
    /// Train the MLP attack model on shadow features.
    TrainAttack(TrainAttackArgs),
    /// Score target features and report AUC.
    Evaluate(EvaluateArgs),
    /// Run one full experiment from a config file.
    Run(RunArgs),
    /// Run every shadow/target combination and print the AUC matrix.
    Grid(GridArgs),
    /// Serve defended (popularity-randomized) lists to the given users.
    Defend(DefendArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Rating file: `user,item,score[,timestamp]` with any supported delimiter.
    #[arg(long, required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    delimiter: DelimiterArg,
    /// Generate the synthetic dataset instead of reading a file.
    #[arg(long, conflicts_with = "input")]
    synthetic: bool,
    /// TOML generator settings for `--synthetic`.
    #[arg(long, requires = "synthetic")]
    synthetic_config: Option<PathBuf>,
    /// Drop users with fewer interactions.
    #[arg(long)]
    min_interactions: Option<usize>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelimiterArg {
    Auto,
    Comma,
    Tab,
    DoubleColon,
}

impl From<DelimiterArg> for Delimiter {
    fn from(d: DelimiterArg) -> Self {
        match d {
            DelimiterArg::Auto => Delimiter::Auto,
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Tab => Delimiter::Tab,
            DelimiterArg::DoubleColon => Delimiter::DoubleColon,
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// Receives shadow.csv, target.csv, feature.csv and manifest.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    shadow: f64,
    #[arg(long, default_value_t = 0.4)]
    target: f64,
    #[arg(long, default_value_t = 0.2)]
    feature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay a previous split instead of drawing a new one.
    #[arg(long, conflicts_with = "seed")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Feature-partition ratings.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, short = 'l', default_value_t = 100)]
    latent_dim: usize,
    #[arg(long, default_value_t = MfConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = MfConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = MfConfig::default().regularization)]
    regularization: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainRecArgs {
    /// Shadow or target partition ratings.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 20)]
    min_interactions: usize,
    #[arg(long, default_value_t = 0.5)]
    member_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML `RecommenderConfig` overrides (`[lfm]`, `[ncf]` tables).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Receives members.csv, nonmembers.csv, holdout.csv and model.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    model: PathBuf,
    /// The member ratings the model was trained on.
    #[arg(long)]
    members: PathBuf,
    #[arg(long)]
    nonmembers: PathBuf,
    #[arg(long, short, default_value_t = 100)]
    k: usize,
    #[command(flatten)]
    defense: DefenseArgs,
    /// Held-out items; when given, HR@k is printed for both groups.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct DefenseArgs {
    /// Defense applied to non-member lists.
    #[arg(long, value_enum)]
    defense: Option<DefenseKind>,
    /// List length over candidate pool size.
    #[arg(long, requires = "defense")]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    defense_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefenseKind {
    PopularityRandomization,
}

impl DefenseArgs {
    fn path(&self, k: usize) -> Result<NonMemberPath> {
        Ok(match self.defense {
            None => NonMemberPath::Popularity,
            Some(DefenseKind::PopularityRandomization) => {
                let alpha = self.alpha.context("--alpha is required with --defense")?;
                NonMemberPath::Defended(DefenseConfig::new(alpha, k, self.defense_seed)?)
            }
        })
    }
}

#[derive(Args)]
struct GenFeaturesArgs {
    #[arg(long)]
    members: PathBuf,
    #[arg(long)]
    nonmembers: PathBuf,
    #[arg(long)]
    recommendations: PathBuf,
    #[arg(long)]
    embedding: PathBuf,
    /// Held-out items from `train-rec`, added back to user histories.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long, value_parser = parse_scheme, default_value = "positional")]
    scheme: WeightScheme,
    #[arg(long, value_parser = parse_method, default_value = "origin")]
    method: FeatureMethod,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainAttackArgs {
    /// Shadow feature table.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = MlpTrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = MlpTrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = MlpTrainConfig::default().momentum)]
    momentum: f64,
    #[arg(long, default_value_t = MlpTrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Target feature table.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, required_unless_present = "kmeans")]
    model: Option<PathBuf>,
    /// Score with the unsupervised K-Means baseline instead.
    #[arg(long, conflicts_with = "model")]
    kmeans: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the notation (and sides) of the config.
    #[arg(long)]
    notation: Option<String>,
    /// Report destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the shadow and target feature tables here.
    #[arg(long)]
    export_dir: Option<PathBuf>,
    /// Leave out stage timings so reports compare byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated two-letter side codes; overrides `[grid] sides`.
    #[arg(long, value_delimiter = ',')]
    sides: Vec<String>,
    #[arg(long, value_enum, default_value = "tab")]
    delimiter: TableDelimiter,
    /// Table destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// One JSON report per successful cell, one per line.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableDelimiter {
    Tab,
    Comma,
}

#[derive(Args)]
struct DefendArgs {
    /// Ratings that define popularity, normally the recommender's members.csv.
    #[arg(long)]
    ratings: PathBuf,
    /// Users to serve; only their ids are read.
    #[arg(long)]
    users: PathBuf,
    #[arg(long, short, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: recmia_core::Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<WeightScheme, String> {
    s.parse().map_err(|e: recmia_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<FeatureMethod, String> {
    s.parse().map_err(|e: recmia_core::Error| e.to_string())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cache = match (&cli.cache_dir, cli.no_cache) {
        (_, true) => Cache::disabled(),
        (Some(dir), false) => Cache::at(dir),
        (None, false) => Cache::from_env(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Embed(a) => embed(a),
        Command::TrainRec(a) => train_rec(a),
        Command::Recommend(a) => recommend(a),
        Command::GenFeatures(a) => gen_features(a),
        Command::TrainAttack(a) => train_attack_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a, cache),
        Command::Grid(a) => grid(a, cache),
        Command::Defend(a) => defend(a),
    }
}

/// One JSON object on stdout per command, for scripting.
fn emit(value: serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, &value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (mut ds, summary) = if a.synthetic {
        let cfg: SyntheticConfig = match &a.synthetic_config {
            Some(p) => toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("in {}", p.display()))?,
            None => SyntheticConfig::default(),
        };
        let ds = DatasetSource::Synthetic(cfg).load()?;
        (ds, serde_json::json!({ "source": "synthetic" }))
    } else {
        let path = a.input.as_deref().expect("clap requires --input");
        let parsed = parse_ratings(io::open(path)?, a.delimiter.into())?;
        for r in parsed.report.rejected.iter().take(10) {
            log::warn!("{}:{}: {}", path.display(), r.line, r.reason);
        }
        let r = &parsed.report;
        let summary = serde_json::json!({
            "source": path,
            "lines": r.lines,
            "accepted": r.accepted,
            "duplicates": r.duplicates,
            "rejected": r.rejected.len(),
        });
        (parsed.dataset, summary)
    };
    if let Some(min) = a.min_interactions {
        ds = filter_min_interactions(&ds, min)?;
    }
    io::save_ratings(&ds, &a.output)?;
    let mut summary = summary;
    summary["users"] = ds.n_users().into();
    summary["items"] = ds.n_items().into();
    summary["ratings"] = ds.len().into();
    emit(summary)
}

fn split(a: SplitArgs) -> Result<()> {
    let ds = io::load_ratings(&a.ratings)?;
    let parts = match &a.manifest {
        Some(p) => SplitManifest::read_json(io::open(p)?)?.replay(&ds)?,
        None => split_three_way(
            &ds,
            &SplitPlan {
                shadow: a.shadow,
                target: a.target,
                feature: a.feature,
                seed: a.seed,
                ..SplitPlan::default()
            },
        )?,
    };
    let dir = &a.out_dir;
    io::save_ratings(&parts.shadow, &dir.join("shadow.csv"))?;
    io::save_ratings(&parts.target, &dir.join("target.csv"))?;
    io::save_ratings(&parts.feature, &dir.join("feature.csv"))?;
    let mut out = io::create(&dir.join("manifest.json"))?;
    parts.manifest.write_json(&mut out)?;
    out.flush()?;
    emit(serde_json::json!({
        "shadow_users": parts.shadow.n_users(),
        "target_users": parts.target.n_users(),
        "feature_users": parts.feature.n_users(),
        "coverage_moves": parts.manifest.coverage_moves.len(),
    }))
}

fn embed(a: EmbedArgs) -> Result<()> {
    let ds = io::load_ratings(&a.ratings)?;
    let cfg = MfConfig {
        latent_dim: a.latent_dim,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        regularization: a.regularization,
        seed: a.seed,
        ..MfConfig::default()
    };
    let emb = embed_dataset(&ds, &cfg)?;
    let mut out = io::create(&a.output)?;
    emb.write_json(&mut out)?;
    out.flush()?;
    emit(serde_json::json!({ "items": emb.n_items(), "latent_dim": emb.latent_dim(), "final_loss": emb.final_loss() }))
}

fn train_rec(a: TrainRecArgs) -> Result<()> {
    let ds = io::load_ratings(&a.ratings)?;
    let filtered = filter_min_interactions(&ds, a.min_interactions)?;
    let (members, nonmembers) = split_member_nonmember(&filtered, a.member_fraction, a.seed)?;
    let (member_train, member_held) = hold_out_one(&members, seed::derive(a.seed, "members"));
    let (nonmember_rest, nonmember_held) = hold_out_one(&nonmembers, seed::derive(a.seed, "non-members"));
    let held: Vec<(String, String)> = member_train
        .user_ids()
        .iter()
        .zip(member_held)
        .chain(nonmember_rest.user_ids().iter().zip(nonmember_held))
        .filter_map(|(u, h)| h.map(|h| (u.clone(), h)))
        .collect();
    let member_train = io::canonical(&member_train)?;

    let mut cfg: RecommenderConfig = match &a.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("in {}", p.display()))?,
        None => RecommenderConfig::default(),
    };
    cfg.seed = a.seed;
    info!("training {} on {} members", a.algorithm, member_train.n_users());
    let model = train(a.algorithm, &to_implicit(&member_train), &cfg)?;

    let dir = &a.out_dir;
    io::save_ratings(&member_train, &dir.join("members.csv"))?;
    io::save_ratings(&nonmembers, &dir.join("nonmembers.csv"))?;
    io::write_holdout(&held, io::create(&dir.join("holdout.csv"))?)?;
    let mut out = io::create(&dir.join("model.json"))?;
    model.write_json(&mut out)?;
    out.flush()?;
    emit(serde_json::json!({
        "algorithm": a.algorithm.to_string(),
        "members": member_train.n_users(),
        "nonmembers": nonmembers.n_users(),
        "items": model.n_items(),
    }))
}

fn load_model(path: &Path) -> Result<RecommenderModel> {
    RecommenderModel::read_json(io::open(path)?).with_context(|| format!("reading model {}", path.display()))
}

fn recommend(a: RecommendArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let members = io::load_ratings(&a.members)?;
    let nonmembers = io::load_ratings(&a.nonmembers)?;
    let profiles = serve_profiles(&members, &model, &nonmembers, &a.defense.path(a.k)?, a.k)
        .context("members file must be the exact training data of the model")?;
    let mut lists = Lists::default();
    for p in &profiles {
        lists.push(&p.user, p.recommendations.clone());
    }
    io::write_lists(&lists, io::create(&a.output)?)?;

    let mut summary = serde_json::json!({ "members": members.n_users(), "nonmembers": nonmembers.n_users(), "k": a.k });
    if let Some(path) = &a.holdout {
        let held = io::read_holdout(io::open(path)?)?;
        for (group, member) in [("member_hit_rate", true), ("nonmember_hit_rate", false)] {
            let cases = profiles
                .iter()
                .filter(|p| p.member == member)
                .map(|p| (p.recommendations.as_slice(), held.get(&p.user).cloned()));
            summary[group] = hit_rate(cases)?.into();
        }
    }
    emit(summary)
}

fn interaction_map(ds: &RatingDataset) -> Vec<(String, Vec<String>)> {
    ds.items_by_user()
        .into_iter()
        .enumerate()
        .map(|(u, items)| {
            (
                ds.user_id(u).to_owned(),
                items.into_iter().map(|i| ds.item_id(i).to_owned()).collect(),
            )
        })
        .collect()
}

fn gen_features(a: GenFeaturesArgs) -> Result<()> {
    let members = io::load_ratings(&a.members)?;
    let nonmembers = io::load_ratings(&a.nonmembers)?;
    let lists = io::read_lists(io::open(&a.recommendations)?)?;
    let emb = LatentFactorization::read_json(io::open(&a.embedding)?)?;

    let mut profiles = Vec::new();
    for (ds, member) in [(&members, true), (&nonmembers, false)] {
        for (user, interactions) in interaction_map(ds) {
            let Some(recs) = lists.get(&user) else {
                bail!("no recommendation list for user {user}");
            };
            profiles.push(UserProfile {
                recommendations: recs.to_vec(),
                source: if member {
                    RecSource::Personalized
                } else {
                    RecSource::Popularity
                },
                user,
                member,
                interactions,
            });
        }
    }
    if let Some(path) = &a.holdout {
        restore_held_out(&mut profiles, &io::read_holdout(io::open(path)?)?);
    }
    // provenance only matters in memory; the table is the same either way
    let data = generate_labeled_dataset(&profiles, &emb, a.method, a.scheme, Provenance::TargetTest)?;
    let mut out = io::create(&a.output)?;
    data.write_csv(&mut out)?;
    out.flush()?;
    emit(serde_json::json!({ "samples": data.len(), "members": data.n_members(), "dim": data.dim() }))
}

fn read_features(path: &Path, provenance: Provenance) -> Result<AttackDataset> {
    AttackDataset::read_csv(
        io::open(path)?,
        provenance,
        FeatureMethod::Origin,
        WeightScheme::Positional,
    )
    .with_context(|| format!("reading features {}", path.display()))
}

fn train_attack_cmd(a: TrainAttackArgs) -> Result<()> {
    let shadow = read_features(&a.features, Provenance::ShadowTrain)?;
    let cfg = MlpTrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        batch_size: a.batch_size,
        seed: a.seed,
        ..MlpTrainConfig::default()
    };
    let model = train_attack(&shadow, &cfg)?;
    let mut out = io::create(&a.output)?;
    model.write_json(&mut out)?;
    out.flush()?;
    emit(serde_json::json!({ "samples": shadow.len(), "final_loss": model.final_loss() }))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let target = read_features(&a.features, Provenance::TargetTest)?;
    let auc = match &a.model {
        Some(path) => attack_auc(&AttackMlp::read_json(io::open(path)?)?, &target)?,
        None => kmeans_auc(&target, a.seed)?,
    };
    emit(serde_json::json!({
        "attack": if a.kmeans { "k-means" } else { "mlp" },
        "samples": target.len(),
        "members": target.n_members(),
        "auc": auc,
    }))
}

fn load_config(path: Option<&Path>) -> Result<config::ExperimentFile> {
    match path {
        Some(p) => config::load(p),
        None => config::parse("", None),
    }
}

fn run(a: RunArgs, cache: Cache) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let mut spec = file.spec;
    if let Some(code) = &a.notation {
        let from = ExperimentSpec::from_notation(code)?;
        spec.notation = from.notation;
        spec.shadow = from.shadow;
        spec.target = from.target;
    }
    let mut lab = Lab::new(file.catalog, cache);
    if let Some(dir) = a.export_dir {
        lab = lab.with_export_dir(dir);
    }
    let report = lab.run(&spec)?;
    let text = if a.no_timing {
        report.to_json_without_timing()?
    } else {
        report.to_json()?
    };
    match &a.output {
        Some(p) => {
            let mut out = io::create(p)?;
            writeln!(out, "{text}")?;
            out.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn grid(a: GridArgs, cache: Cache) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let codes = if a.sides.is_empty() {
        file.grid.sides.clone()
    } else {
        a.sides.clone()
    };
    let codes = if codes.is_empty() {
        vec!["SI".into(), "SL".into(), "SN".into()]
    } else {
        codes
    };
    let sides = codes
        .iter()
        .map(|c| config::parse_side(c))
        .collect::<Result<Vec<_>>>()?;
    let mut base = file.spec;
    base.notation = None;
    let specs = grid_specs(&base, &sides);
    let lab = Lab::new(file.catalog, cache);
    let report = run_grid(&lab, &specs)?;

    let delimiter = match a.delimiter {
        TableDelimiter::Tab => '\t',
        TableDelimiter::Comma => ',',
    };
    let table = report.to_table(delimiter);
    match &a.output {
        Some(p) => {
            let mut out = io::create(p)?;
            out.write_all(table.as_bytes())?;
            out.flush()?;
        }
        None => print!("{table}"),
    }
    if let Some(p) = &a.reports {
        let mut out = io::create(p)?;
        for r in &report.reports {
            serde_json::to_writer(&mut out, r)?;
            writeln!(out)?;
        }
        out.flush()?;
    }
    for (cell, err) in &report.failures {
        eprintln!("cell {cell} failed: {err}");
    }
    if !report.failures.is_empty() {
        bail!("{} of {} cells failed", report.failures.len(), specs.len());
    }
    Ok(())
}

fn defend(a: DefendArgs) -> Result<()> {
    let ds = io::load_ratings(&a.ratings)?;
    let ranking = popularity_rank(&to_implicit(&ds))?;
    let users = io::load_ratings(&a.users)?;
    let cfg = DefenseConfig::new(a.alpha, a.k, a.seed)?;
    let mut lists = Lists::default();
    for user in users.user_ids() {
        let items = popularity_randomization(&ranking, &cfg, user)?;
        lists.push(user, items.into_iter().map(|i| ds.item_id(i).to_owned()).collect());
    }
    io::write_lists(&lists, io::create(&a.output)?)?;
    emit(serde_json::json!({ "users": users.n_users(), "k": a.k, "candidates": cfg.n_candidates() }))
}
