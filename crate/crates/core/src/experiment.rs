//! Experiment specification, orchestration and reports.
//!
//! A cell runs: three-way split, item embeddings on the feature partition,
//! shadow recommender and labeled data, attack training, target recommender
//! and target features, then AUC. Intermediate stages are memoized in a
//! [`Lab`] by content key, and embeddings and recommender models are also
//! written to the on-disk [`Cache`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, PoisonError};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    attack_auc, generate_labeled_dataset, kmeans_auc, restore_held_out, serve_profiles, train_attack, AttackDataset,
    FeatureMethod, MlpTrainConfig, NonMemberPath, Provenance, UserProfile, WeightScheme,
};
use crate::cache::{content_key, digest_bytes, Cache};
use crate::data::{
    filter_min_interactions, hold_out_one, parse_ratings, split_member_nonmember, split_three_way, to_implicit,
    write_ratings, Delimiter, RatingDataset, SplitPlan, ThreeWaySplit,
};
use crate::defense::DefenseConfig;
use crate::error::StageExt;
use crate::mf::{embed_dataset, LatentFactorization, MfConfig};
use crate::recommender::{hit_rate, train, Algorithm, LfmConfig, NcfConfig, RecommenderConfig, RecommenderModel};
use crate::seed;
use crate::synthetic::{self, SyntheticConfig};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Datasets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "ADM")]
    Adm,
    #[serde(rename = "lf-2k")]
    Lf2k,
    #[serde(rename = "ml-1m")]
    Ml1m,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [DatasetId::Adm, DatasetId::Lf2k, DatasetId::Ml1m, DatasetId::Synthetic];

    pub fn letter(self) -> char {
        match self {
            DatasetId::Adm => 'A',
            DatasetId::Lf2k => 'L',
            DatasetId::Ml1m => 'M',
            DatasetId::Synthetic => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        DatasetId::ALL.into_iter().find(|d| d.letter() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Adm => "ADM",
            DatasetId::Lf2k => "lf-2k",
            DatasetId::Ml1m => "ml-1m",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s) || (s.len() == 1 && s.starts_with(d.letter())))
            .ok_or_else(|| Error::config(format!("unknown dataset `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    File {
        path: PathBuf,
        #[serde(default)]
        delimiter: Delimiter,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<RatingDataset> {
        match self {
            DatasetSource::Synthetic(cfg) => synthetic::generate(cfg),
            DatasetSource::File { path, delimiter } => {
                let file = fs::File::open(path)?;
                let parsed = parse_ratings(std::io::BufReader::new(file), *delimiter)?;
                if !parsed.report.rejected.is_empty() {
                    log::warn!("{}: {} lines rejected", path.display(), parsed.report.rejected.len());
                }
                Ok(parsed.dataset)
            }
        }
    }
}

/// Where each dataset letter comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Catalog {
    pub sources: BTreeMap<DatasetId, DatasetSource>,
}

impl Default for Catalog {
    fn default() -> Self {
        let mut sources = BTreeMap::new();
        sources.insert(
            DatasetId::Synthetic,
            DatasetSource::Synthetic(SyntheticConfig::default()),
        );
        Catalog { sources }
    }
}

impl Catalog {
    pub fn with(mut self, id: DatasetId, source: DatasetSource) -> Self {
        self.sources.insert(id, source);
        self
    }

    pub fn source(&self, id: DatasetId) -> Result<&DatasetSource> {
        self.sources
            .get(&id)
            .ok_or_else(|| Error::config(format!("dataset {id} has no source configured")))
    }
}

// ---------------------------------------------------------------------------
// Specification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SideSpec {
    pub dataset: DatasetId,
    pub algorithm: Algorithm,
}

impl SideSpec {
    pub fn code(&self) -> String {
        format!("{}{}", self.dataset.letter(), self.algorithm.letter())
    }
}

/// Expand a four-letter code: shadow dataset, shadow algorithm, target
/// dataset, target algorithm.
pub fn parse_notation(code: &str) -> Result<(SideSpec, SideSpec)> {
    let bad = |reason: String| Error::Notation {
        code: code.to_owned(),
        reason,
    };
    let chars: Vec<char> = code.chars().collect();
    if chars.len() != 4 {
        return Err(bad(format!("expected 4 letters, got {}", chars.len())));
    }
    let dataset =
        |c: char| DatasetId::from_letter(c).ok_or_else(|| bad(format!("`{c}` is not a dataset letter (A, L, M, S)")));
    let algorithm =
        |c: char| Algorithm::from_letter(c).ok_or_else(|| bad(format!("`{c}` is not an algorithm letter (I, L, N)")));
    Ok((
        SideSpec {
            dataset: dataset(chars[0])?,
            algorithm: algorithm(chars[1])?,
        },
        SideSpec {
            dataset: dataset(chars[2])?,
            algorithm: algorithm(chars[3])?,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Same data distribution and algorithm.
    I,
    /// Same data distribution only.
    II,
    /// Neither.
    III,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub mf: u64,
    pub recommender: u64,
    pub attack: u64,
    pub defense: u64,
}

impl Seeds {
    pub fn from_base(base: u64) -> Self {
        Seeds {
            split: seed::derive(base, "split"),
            mf: seed::derive(base, "mf"),
            recommender: seed::derive(base, "recommender"),
            attack: seed::derive(base, "attack"),
            defense: seed::derive(base, "defense"),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    #[default]
    Mlp,
    KMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseSpec {
    pub alpha: f64,
}

/// Stage hyperparameters that rarely change between cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Ratios only; the seed comes from [`Seeds::split`].
    pub split: SplitPlan,
    pub min_interactions: usize,
    /// `latent_dim` and `seed` are overridden by the spec.
    pub mf: MfConfig,
    pub lfm: LfmConfig,
    pub ncf: NcfConfig,
    /// `seed` is overridden by [`Seeds::attack`].
    pub attack: MlpTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split: SplitPlan::default(),
            min_interactions: 20,
            mf: MfConfig::default(),
            lfm: LfmConfig::default(),
            ncf: NcfConfig::default(),
            attack: MlpTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub notation: Option<String>,
    pub shadow: SideSpec,
    pub target: SideSpec,
    /// Recommendation list length.
    pub k: usize,
    /// Item embedding dimension.
    pub l: usize,
    pub scheme: WeightScheme,
    pub method: FeatureMethod,
    pub attack: AttackKind,
    pub defense: Option<DefenseSpec>,
    pub seeds: Seeds,
    pub pipeline: PipelineConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let side = SideSpec {
            dataset: DatasetId::Synthetic,
            algorithm: Algorithm::Item,
        };
        ExperimentSpec {
            notation: None,
            shadow: side,
            target: side,
            k: 100,
            l: 100,
            scheme: WeightScheme::Positional,
            method: FeatureMethod::Origin,
            attack: AttackKind::Mlp,
            defense: None,
            seeds: Seeds::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl ExperimentSpec {
    /// Default spec for a notation code.
    pub fn from_notation(code: &str) -> Result<Self> {
        let (shadow, target) = parse_notation(code)?;
        Ok(ExperimentSpec {
            notation: Some(code.to_owned()),
            shadow,
            target,
            ..Default::default()
        })
    }

    /// The notation code implied by the two sides.
    pub fn code(&self) -> String {
        format!("{}{}", self.shadow.code(), self.target.code())
    }

    pub fn assumption(&self) -> Assumption {
        if self.shadow.dataset != self.target.dataset {
            Assumption::III
        } else if self.shadow.algorithm != self.target.algorithm {
            Assumption::II
        } else {
            Assumption::I
        }
    }

    pub fn validate(&self) -> Result<()> {
        for side in [self.shadow, self.target] {
            if !Algorithm::PERSONALIZED.contains(&side.algorithm) {
                return Err(Error::config(format!(
                    "{} is not an attackable algorithm",
                    side.algorithm
                )));
            }
        }
        if let Some(code) = &self.notation {
            let (s, t) = parse_notation(code)?;
            if s != self.shadow || t != self.target {
                return Err(Error::Notation {
                    code: code.clone(),
                    reason: format!("disagrees with configured sides {}", self.code()),
                });
            }
        }
        if self.k == 0 || self.l == 0 {
            return Err(Error::config("k and l must be >= 1"));
        }
        if self.pipeline.min_interactions == 0 {
            return Err(Error::config("min_interactions must be >= 1"));
        }
        if let Some(d) = &self.defense {
            DefenseConfig::new(d.alpha, self.k, 0)?;
        }
        self.pipeline.split.validate()?;
        self.mf_config().validate()?;
        self.attack_config().validate()
    }

    pub fn mf_config(&self) -> MfConfig {
        MfConfig {
            latent_dim: self.l,
            seed: self.seeds.mf,
            ..self.pipeline.mf.clone()
        }
    }

    pub fn attack_config(&self) -> MlpTrainConfig {
        MlpTrainConfig {
            seed: self.seeds.attack,
            ..self.pipeline.attack.clone()
        }
    }

    fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            seed: self.seeds.split,
            ..self.pipeline.split.clone()
        }
    }

    fn recommender_config(&self, role: Role) -> RecommenderConfig {
        RecommenderConfig {
            k: self.k,
            seed: seed::derive(self.seeds.recommender, role.label()),
            lfm: self.pipeline.lfm.clone(),
            ncf: self.pipeline.ncf.clone(),
        }
    }

    fn non_member_path(&self, role: Role) -> Result<NonMemberPath> {
        Ok(match &self.defense {
            None => NonMemberPath::Popularity,
            Some(d) => NonMemberPath::Defended(DefenseConfig::new(
                d.alpha,
                self.k,
                seed::derive(self.seeds.defense, role.label()),
            )?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Shadow,
    Target,
}

impl Role {
    fn label(self) -> &'static str {
        match self {
            Role::Shadow => "shadow",
            Role::Target => "target",
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub dataset: DatasetId,
    pub algorithm: Algorithm,
    pub members: usize,
    pub nonmembers: usize,
    /// HR@k of the personalized lists on one held-out interaction per member.
    pub member_hit_rate: f64,
    /// HR@k of the non-member lists (popularity or defended).
    pub nonmember_hit_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub code: String,
    pub assumption: Assumption,
    pub shadow: SideReport,
    pub target: SideReport,
    pub auc: f64,
    pub attack_final_loss: Option<f64>,
    pub exports: Vec<PathBuf>,
    /// Wall-clock timing; the only field that varies between identical runs.
    pub timing: Vec<StageTiming>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON without the timing field; identical specs give identical bytes.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

// ---------------------------------------------------------------------------
// Orchestration

/// Per-key memo; a key is computed at most once even under contention.
struct Memo<T> {
    slots: Mutex<HashMap<String, Arc<Mutex<Option<Arc<T>>>>>>,
}

impl<T> Memo<T> {
    fn new() -> Self {
        Memo {
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn get_or_try(&self, key: &str, compute: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let slot = self
            .slots
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .entry(key.to_owned())
            .or_default()
            .clone();
        let mut guard = slot.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let v = Arc::new(compute()?);
        *guard = Some(v.clone());
        Ok(v)
    }
}

struct LoadedDataset {
    data: RatingDataset,
    digest: String,
}

struct SplitStage {
    split: ThreeWaySplit,
    key: String,
}

/// One side of an experiment: the member/non-member split and the
/// recommender deployed on it.
pub struct PreparedSide {
    pub member_train: RatingDataset,
    pub nonmembers: RatingDataset,
    /// Held-out item per member, aligned with `member_train` users.
    pub member_holdout: Vec<Option<String>>,
    /// Held-out item per non-member id.
    pub nonmember_holdout: HashMap<String, String>,
    pub model: RecommenderModel,
}

impl PreparedSide {
    /// Lists for every member and non-member. Member histories include the
    /// held-out item, so both groups are profiled on complete histories.
    pub fn serve(&self, path: &NonMemberPath, k: usize) -> Result<Vec<UserProfile>> {
        let mut profiles = serve_profiles(&self.member_train, &self.model, &self.nonmembers, path, k)?;
        let held: HashMap<String, String> = self
            .member_train
            .user_ids()
            .iter()
            .zip(&self.member_holdout)
            .filter_map(|(u, h)| h.clone().map(|h| (u.clone(), h)))
            .collect();
        restore_held_out(&mut profiles, &held);
        Ok(profiles)
    }
}

/// Runs experiments and shares stage results between them.
pub struct Lab {
    catalog: Catalog,
    cache: Cache,
    export_dir: Option<PathBuf>,
    datasets: Memo<LoadedDataset>,
    splits: Memo<SplitStage>,
    sides: Memo<PreparedSide>,
    embeddings: Memo<LatentFactorization>,
}

impl Lab {
    pub fn new(catalog: Catalog, cache: Cache) -> Self {
        Lab {
            catalog,
            cache,
            export_dir: None,
            datasets: Memo::new(),
            splits: Memo::new(),
            sides: Memo::new(),
            embeddings: Memo::new(),
        }
    }

    /// Write shadow and target feature tables for every run into `dir`.
    pub fn with_export_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.export_dir = Some(dir.into());
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn dataset(&self, id: DatasetId) -> Result<Arc<LoadedDataset>> {
        let source = self.catalog.source(id)?;
        self.datasets.get_or_try(&content_key(source)?, || {
            let data = source.load()?;
            let mut bytes = Vec::new();
            write_ratings(&data, &mut bytes)?;
            info!(
                "loaded {id}: {} users, {} items, {} ratings",
                data.n_users(),
                data.n_items(),
                data.len()
            );
            Ok(LoadedDataset {
                digest: digest_bytes(&bytes),
                data,
            })
        })
    }

    fn split(&self, id: DatasetId, spec: &ExperimentSpec) -> Result<Arc<SplitStage>> {
        let ds = self.dataset(id)?;
        let plan = spec.split_plan();
        let key = content_key(&(&ds.digest, &plan))?;
        self.splits.get_or_try(&key, || {
            Ok(SplitStage {
                split: split_three_way(&ds.data, &plan)?,
                key: key.clone(),
            })
        })
    }

    /// Item embeddings from the feature partition of `id`.
    pub fn embedding(&self, id: DatasetId, spec: &ExperimentSpec) -> Result<Arc<LatentFactorization>> {
        let split = self.split(id, spec)?;
        let cfg = spec.mf_config();
        let key = content_key(&(&split.key, &cfg))?;
        self.embeddings.get_or_try(&key, || {
            let emb = self
                .cache
                .get_or_compute("embedding", &key, || embed_dataset(&split.split.feature, &cfg))?;
            LatentFactorization::read_json(serde_json::to_vec(&emb)?.as_slice())
        })
    }

    fn side(&self, spec: &ExperimentSpec, role: Role) -> Result<Arc<PreparedSide>> {
        let side = match role {
            Role::Shadow => spec.shadow,
            Role::Target => spec.target,
        };
        let split = self.split(side.dataset, spec)?;
        let rec_cfg = spec.recommender_config(role);
        let algo_cfg = match side.algorithm {
            Algorithm::Lfm => serde_json::to_value(&rec_cfg.lfm)?,
            Algorithm::Ncf => serde_json::to_value(&rec_cfg.ncf)?,
            _ => serde_json::Value::Null,
        };
        let key = content_key(&(
            &split.key,
            role.label(),
            spec.pipeline.min_interactions,
            side.algorithm,
            algo_cfg,
            rec_cfg.seed,
        ))?;
        self.sides.get_or_try(&key, || {
            let partition = match role {
                Role::Shadow => &split.split.shadow,
                Role::Target => &split.split.target,
            };
            let filtered = filter_min_interactions(partition, spec.pipeline.min_interactions)?;
            let split_seed = seed::derive(spec.seeds.split, role.label());
            let (members, nonmembers) =
                split_member_nonmember(&filtered, spec.pipeline.split.member_fraction, split_seed)?;
            let (member_train, member_holdout) = hold_out_one(&members, seed::derive(split_seed, "members"));
            let (held_train, held) = hold_out_one(&nonmembers, seed::derive(split_seed, "non-members"));
            let nonmember_holdout = held_train
                .user_ids()
                .iter()
                .zip(held)
                .filter_map(|(u, h)| h.map(|h| (u.clone(), h)))
                .collect();
            let model = self.cache.get_or_compute("recommender", &key, || {
                info!(
                    "training {} {} recommender on {} members",
                    role.label(),
                    side.algorithm,
                    member_train.n_users()
                );
                train(side.algorithm, &to_implicit(&member_train), &rec_cfg)
            })?;
            let model = match model {
                // the similarity matrix is not serialized
                RecommenderModel::Item(m) => RecommenderModel::Item(m.rebuilt()),
                other => other,
            };
            Ok(PreparedSide {
                member_train,
                nonmembers,
                member_holdout,
                nonmember_holdout,
                model,
            })
        })
    }

    pub fn run(&self, spec: &ExperimentSpec) -> Result<ExperimentReport> {
        spec.validate()?;
        let mut timing = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |stage: &str, timing: &mut Vec<StageTiming>| {
            timing.push(StageTiming {
                stage: stage.to_owned(),
                seconds: clock.elapsed().as_secs_f64(),
            });
            clock = Instant::now();
        };

        self.split(spec.shadow.dataset, spec).stage("split")?;
        self.split(spec.target.dataset, spec).stage("split")?;
        lap("split", &mut timing);
        let shadow_emb = self.embedding(spec.shadow.dataset, spec).stage("embeddings")?;
        let target_emb = self.embedding(spec.target.dataset, spec).stage("embeddings")?;
        lap("embeddings", &mut timing);

        let shadow = self.side(spec, Role::Shadow).stage("shadow recommender")?;
        let shadow_profiles = shadow
            .serve(&spec.non_member_path(Role::Shadow)?, spec.k)
            .stage("shadow recommendations")?;
        let shadow_data = generate_labeled_dataset(
            &shadow_profiles,
            &shadow_emb,
            spec.method,
            spec.scheme,
            Provenance::ShadowTrain,
        )
        .stage("labeled data generation")?;
        lap("shadow", &mut timing);

        let target = self.side(spec, Role::Target).stage("target recommender")?;
        let target_profiles = target
            .serve(&spec.non_member_path(Role::Target)?, spec.k)
            .stage("target recommendations")?;
        let target_data = generate_labeled_dataset(
            &target_profiles,
            &target_emb,
            spec.method,
            spec.scheme,
            Provenance::TargetTest,
        )
        .stage("target features")?;
        lap("target", &mut timing);

        let (auc, attack_final_loss) = match spec.attack {
            AttackKind::Mlp => {
                let model = train_attack(&shadow_data, &spec.attack_config()).stage("attack training")?;
                (
                    attack_auc(&model, &target_data).stage("evaluation")?,
                    model.final_loss(),
                )
            }
            AttackKind::KMeans => (kmeans_auc(&target_data, spec.seeds.attack).stage("evaluation")?, None),
        };
        lap("attack", &mut timing);

        let exports = self.export(spec, &shadow_data, &target_data).stage("export")?;
        let report = ExperimentReport {
            spec: spec.clone(),
            code: spec.code(),
            assumption: spec.assumption(),
            shadow: side_report(spec.shadow, &shadow, &shadow_profiles)?,
            target: side_report(spec.target, &target, &target_profiles)?,
            auc,
            attack_final_loss,
            exports,
            timing,
        };
        info!("{} auc {:.4}", report.code, report.auc);
        Ok(report)
    }

    fn export(&self, spec: &ExperimentSpec, shadow: &AttackDataset, target: &AttackDataset) -> Result<Vec<PathBuf>> {
        let Some(dir) = &self.export_dir else {
            return Ok(Vec::new());
        };
        fs::create_dir_all(dir)?;
        let tag = &content_key(spec)?[..12];
        let mut out = Vec::new();
        for (data, name) in [(shadow, "shadow"), (target, "target")] {
            let path = dir.join(format!("{}-{tag}-{name}.csv", spec.code()));
            data.write_csv(std::io::BufWriter::new(fs::File::create(&path)?))?;
            out.push(path);
        }
        Ok(out)
    }
}

fn side_report(side: SideSpec, prepared: &PreparedSide, profiles: &[UserProfile]) -> Result<SideReport> {
    let (members, nonmembers): (Vec<&UserProfile>, Vec<&UserProfile>) = profiles.iter().partition(|p| p.member);
    let member_hit_rate = hit_rate(
        members
            .iter()
            .zip(&prepared.member_holdout)
            .map(|(p, h)| (p.recommendations.as_slice(), h.clone())),
    )?;
    let nonmember_hit_rate = hit_rate(nonmembers.iter().map(|p| {
        (
            p.recommendations.as_slice(),
            prepared.nonmember_holdout.get(&p.user).cloned(),
        )
    }))?;
    Ok(SideReport {
        dataset: side.dataset,
        algorithm: side.algorithm,
        members: members.len(),
        nonmembers: nonmembers.len(),
        member_hit_rate,
        nonmember_hit_rate,
    })
}

/// Run one experiment with a fresh [`Lab`].
pub fn run_experiment(spec: &ExperimentSpec, catalog: &Catalog, cache: &Cache) -> Result<ExperimentReport> {
    Lab::new(catalog.clone(), cache.clone()).run(spec)
}

// ---------------------------------------------------------------------------
// Grids

/// Every (shadow, target) combination of `sides`, on top of `base`.
pub fn grid_specs(base: &ExperimentSpec, sides: &[SideSpec]) -> Vec<ExperimentSpec> {
    sides
        .iter()
        .flat_map(|&shadow| {
            sides.iter().map(move |&target| {
                let mut spec = ExperimentSpec {
                    shadow,
                    target,
                    ..base.clone()
                };
                spec.notation = Some(spec.code());
                spec
            })
        })
        .collect()
}

/// AUC matrix: rows are shadow configurations, columns target ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `None` marks a failed or absent cell.
    pub cells: Vec<Vec<Option<f64>>>,
    pub failures: Vec<(String, String)>,
    pub reports: Vec<ExperimentReport>,
}

impl GridReport {
    /// Delimiter-separated table with a header row; failed cells read `FAILED`
    /// and absent ones are empty.
    pub fn to_table(&self, delimiter: char) -> String {
        let mut out = String::from("shadow\\target");
        for c in &self.columns {
            out.push(delimiter);
            out.push_str(c);
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(r);
            for (c, cell) in self.columns.iter().zip(row) {
                out.push(delimiter);
                match cell {
                    Some(v) => out.push_str(&format!("{v:.4}")),
                    None if self.failures.iter().any(|(code, _)| *code == format!("{r}{c}")) => out.push_str("FAILED"),
                    None => {}
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, shadow: &str, target: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == shadow)?;
        let c = self.columns.iter().position(|x| x == target)?;
        self.cells[r][c]
    }
}

/// Run every spec (concurrently) and arrange the AUCs as a matrix.
pub fn run_grid(lab: &Lab, specs: &[ExperimentSpec]) -> Result<GridReport> {
    if specs.is_empty() {
        return Err(Error::Empty("grid specification"));
    }
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    for s in specs {
        for (list, code) in [(&mut rows, s.shadow.code()), (&mut columns, s.target.code())] {
            if !list.contains(&code) {
                list.push(code);
            }
        }
    }
    let results: Vec<Result<ExperimentReport>> = specs.par_iter().map(|s| lab.run(s)).collect();
    let mut cells = vec![vec![None; columns.len()]; rows.len()];
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for (spec, result) in specs.iter().zip(results) {
        let r = rows.iter().position(|x| *x == spec.shadow.code()).expect("row exists");
        let c = columns
            .iter()
            .position(|x| *x == spec.target.code())
            .expect("column exists");
        match result {
            Ok(report) => {
                cells[r][c] = Some(report.auc);
                reports.push(report);
            }
            Err(e) => {
                log::error!("cell {} failed: {e}", spec.code());
                failures.push((spec.code(), e.to_string()));
            }
        }
    }
    Ok(GridReport {
        rows,
        columns,
        cells,
        failures,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notation_examples() {
        let (s, t) = parse_notation("AIMN").unwrap();
        assert_eq!((s.dataset, s.algorithm), (DatasetId::Adm, Algorithm::Item));
        assert_eq!((t.dataset, t.algorithm), (DatasetId::Ml1m, Algorithm::Ncf));
        let (s, t) = parse_notation("MIMI").unwrap();
        assert_eq!(s, t);
        assert_eq!(s.dataset, DatasetId::Ml1m);
        assert!(matches!(parse_notation("XZQQ"), Err(Error::Notation { .. })));
        assert!(parse_notation("AIM").is_err());
        assert!(parse_notation("AIMP").is_err());
    }

    #[test]
    fn notation_round_trip_and_assumptions() {
        for code in ["AIMN", "MIMI", "SLSN", "LNAL"] {
            assert_eq!(ExperimentSpec::from_notation(code).unwrap().code(), code);
        }
        assert_eq!(
            ExperimentSpec::from_notation("SISI").unwrap().assumption(),
            Assumption::I
        );
        assert_eq!(
            ExperimentSpec::from_notation("SISN").unwrap().assumption(),
            Assumption::II
        );
        assert_eq!(
            ExperimentSpec::from_notation("AISI").unwrap().assumption(),
            Assumption::III
        );
    }

    #[test]
    fn inconsistent_notation_is_rejected() {
        let mut spec = ExperimentSpec::from_notation("SISI").unwrap();
        spec.target.algorithm = Algorithm::Ncf;
        assert!(matches!(spec.validate(), Err(Error::Notation { .. })));
        spec.notation = None;
        spec.validate().unwrap();
        spec.target.algorithm = Algorithm::Popularity;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ExperimentSpec {
            defense: Some(DefenseSpec { alpha: 0.1 }),
            seeds: Seeds::from_base(3),
            ..ExperimentSpec::from_notation("SLSN").unwrap()
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), spec);
        let partial: ExperimentSpec = serde_json::from_str(r#"{"k": 20}"#).unwrap();
        assert_eq!(partial.k, 20);
        assert_eq!(partial.l, 100);
    }

    #[test]
    fn dataset_names() {
        for id in DatasetId::ALL {
            assert_eq!(id.name().parse::<DatasetId>().unwrap(), id);
            assert_eq!(DatasetId::from_letter(id.letter()), Some(id));
        }
        assert!("imdb".parse::<DatasetId>().is_err());
    }

    #[test]
    fn grid_shapes() {
        let sides: Vec<SideSpec> = Algorithm::PERSONALIZED
            .iter()
            .map(|&algorithm| SideSpec {
                dataset: DatasetId::Synthetic,
                algorithm,
            })
            .collect();
        let specs = grid_specs(&ExperimentSpec::default(), &sides);
        assert_eq!(specs.len(), 9);
        let diagonal: Vec<_> = specs.iter().filter(|s| s.assumption() == Assumption::I).collect();
        assert_eq!(diagonal.len(), 3);
        let two: Vec<SideSpec> = [DatasetId::Synthetic, DatasetId::Adm]
            .iter()
            .flat_map(|&dataset| sides.iter().map(move |s| SideSpec { dataset, ..*s }))
            .collect();
        assert_eq!(grid_specs(&ExperimentSpec::default(), &two).len(), 36);
    }

    #[test]
    fn table_marks_failures() {
        let grid = GridReport {
            rows: vec!["SI".into(), "SL".into()],
            columns: vec!["SI".into()],
            cells: vec![vec![Some(0.91234)], vec![None]],
            failures: vec![("SLSI".into(), "boom".into())],
            reports: Vec::new(),
        };
        assert_eq!(grid.to_table(','), "shadow\\target,SI\nSI,0.9123\nSL,FAILED\n");
        assert_eq!(grid.get("SI", "SI"), Some(0.91234));
    }

    #[test]
    fn memo_computes_once() {
        let memo: Memo<u32> = Memo::new();
        let mut calls = 0;
        for _ in 0..3 {
            let v = memo
                .get_or_try("k", || {
                    calls += 1;
                    Ok(5)
                })
                .unwrap();
            assert_eq!(*v, 5);
        }
        assert_eq!(calls, 1);
        assert!(memo.get_or_try("e", || Err(Error::Empty("x"))).is_err());
        assert_eq!(*memo.get_or_try("e", || Ok(1)).unwrap(), 1);
    }

    #[test]
    fn missing_dataset_source_fails_with_stage() {
        let lab = Lab::new(Catalog::default(), Cache::disabled());
        let err = lab.run(&ExperimentSpec::from_notation("AIAI").unwrap()).unwrap_err();
        assert!(err.to_string().contains("split"), "{err}");
    }
}
