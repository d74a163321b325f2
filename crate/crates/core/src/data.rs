//! Rating ingestion, user-level partitioning and implicit-feedback matrices.
//!
//! A [`RatingDataset`] owns its own dense reindexing of users and items.
//! Partitions produced by the split functions are reindexed independently,
//! so code that needs to relate items across partitions (feature lookup,
//! popularity for non-members) goes through the external string ids.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 5.0;

/// One `(user, item, score)` record with dataset-local indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub score: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RatingDataset {
    triples: Vec<RatingTriple>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl RatingDataset {
    /// Build a dataset from records keyed by external ids.
    ///
    /// Users and items are indexed in order of first appearance. A repeated
    /// `(user, item)` pair keeps its first score. Scores outside `[1, 5]`
    /// are an error here; [`parse_ratings`] filters them before this point.
    pub fn from_records<I, U, T>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut ds = RatingDataset::default();
        let mut seen = HashSet::new();
        for (u, i, score) in records {
            if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
                return Err(Error::config(format!(
                    "score {score} for ({}, {}) outside [1, 5]",
                    u.as_ref(),
                    i.as_ref()
                )));
            }
            ds.push(u.as_ref(), i.as_ref(), score, &mut seen);
        }
        Ok(ds)
    }

    fn push(&mut self, user: &str, item: &str, score: f64, seen: &mut HashSet<(usize, usize)>) -> bool {
        let u = intern(&mut self.user_ids, &mut self.user_index, user);
        let i = intern(&mut self.item_ids, &mut self.item_index, item);
        if seen.insert((u, i)) {
            self.triples.push(RatingTriple {
                user: u,
                item: i,
                score,
            });
            true
        } else {
            false
        }
    }

    /// Rebuild a dataset from a subset of this one's triples (by position),
    /// reindexing users and items densely.
    fn from_positions(&self, positions: impl IntoIterator<Item = usize>) -> RatingDataset {
        let mut ds = RatingDataset::default();
        let mut seen = HashSet::new();
        for p in positions {
            let t = self.triples[p];
            ds.push(&self.user_ids[t.user], &self.item_ids[t.item], t.score, &mut seen);
        }
        ds
    }

    /// Keep every triple whose user satisfies `keep`.
    pub fn retain_users(&self, mut keep: impl FnMut(usize) -> bool) -> RatingDataset {
        let positions: Vec<usize> = (0..self.triples.len())
            .filter(|&p| keep(self.triples[p].user))
            .collect();
        self.from_positions(positions)
    }

    /// Concatenate two datasets by external id. Pairs already present in
    /// `self` keep their score.
    pub fn union(&self, other: &RatingDataset) -> RatingDataset {
        let mut ds = self.clone();
        let mut seen: HashSet<(usize, usize)> = ds.triples.iter().map(|t| (t.user, t.item)).collect();
        for t in &other.triples {
            ds.push(&other.user_ids[t.user], &other.item_ids[t.item], t.score, &mut seen);
        }
        ds
    }

    /// Prefix every user and item id with `namespace:`.
    pub fn namespaced(&self, namespace: &str) -> RatingDataset {
        let mut ds = RatingDataset::default();
        let mut seen = HashSet::new();
        for t in &self.triples {
            ds.push(
                &format!("{namespace}:{}", self.user_ids[t.user]),
                &format!("{namespace}:{}", self.item_ids[t.item]),
                t.score,
                &mut seen,
            );
        }
        ds
    }

    pub fn triples(&self) -> &[RatingTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    /// Item indices per user, in triple order.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for t in &self.triples {
            out[t.user].push(t.item);
        }
        out
    }

    pub fn interactions_per_user(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_users()];
        for t in &self.triples {
            out[t.user] += 1;
        }
        out
    }
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = index.get(id) {
        return i;
    }
    let i = ids.len();
    ids.push(id.to_owned());
    index.insert(id.to_owned(), i);
    i
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    Comma,
    Tab,
    /// `::`, as used by the MovieLens `.dat` files.
    DoubleColon,
    /// Pick per line: `::`, then tab, then comma.
    #[default]
    Auto,
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        let sep = match self {
            Delimiter::Comma => ",",
            Delimiter::Tab => "\t",
            Delimiter::DoubleColon => "::",
            Delimiter::Auto => {
                if line.contains("::") {
                    "::"
                } else if line.contains('\t') {
                    "\t"
                } else {
                    ","
                }
            }
        };
        line.split(sep).map(str::trim).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseReport {
    pub lines: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub header_skipped: bool,
    pub rejected: Vec<Rejection>,
}

#[derive(Clone, Debug)]
pub struct ParsedRatings {
    pub dataset: RatingDataset,
    pub report: ParseReport,
}

/// Parse delimiter-separated `user,item,score[,timestamp]` records.
///
/// A first row whose score column is not numeric is treated as a header.
/// Malformed rows and out-of-range scores are rejected and reported; the
/// parse only fails when the stream cannot be read or nothing survives.
pub fn parse_ratings<R: BufRead>(source: R, delimiter: Delimiter) -> Result<ParsedRatings> {
    let mut ds = RatingDataset::default();
    let mut seen = HashSet::new();
    let mut report = ParseReport::default();
    let mut first = true;

    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        report.lines += 1;
        let cols = delimiter.split(trimmed);
        let is_first = std::mem::replace(&mut first, false);
        if cols.len() < 3 {
            report.rejected.push(Rejection {
                line: lineno,
                reason: format!("expected at least 3 columns, found {}", cols.len()),
            });
            continue;
        }
        let score = match cols[2].parse::<f64>() {
            Ok(s) => s,
            Err(_) if is_first => {
                report.header_skipped = true;
                continue;
            }
            Err(_) => {
                report.rejected.push(Rejection {
                    line: lineno,
                    reason: format!("score `{}` is not a number", cols[2]),
                });
                continue;
            }
        };
        if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
            report.rejected.push(Rejection {
                line: lineno,
                reason: format!("score {score} outside [1, 5]"),
            });
            continue;
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            report.rejected.push(Rejection {
                line: lineno,
                reason: "empty user or item id".into(),
            });
            continue;
        }
        if ds.push(cols[0], cols[1], score, &mut seen) {
            report.accepted += 1;
        } else {
            report.duplicates += 1;
        }
    }

    if ds.is_empty() {
        return Err(Error::NoRecords {
            rejected: report.rejected.len(),
        });
    }
    Ok(ParsedRatings { dataset: ds, report })
}

/// Write `user,item,score` rows.
pub fn write_ratings<W: Write>(ds: &RatingDataset, mut out: W) -> Result<()> {
    for t in ds.triples() {
        writeln!(out, "{},{},{}", ds.user_id(t.user), ds.item_id(t.item), t.score)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub shadow: f64,
    pub target: f64,
    pub feature: f64,
    pub member_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            shadow: 0.4,
            target: 0.4,
            feature: 0.2,
            member_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let ratios = [self.shadow, self.target, self.feature];
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r) || !r.is_finite()) {
            return Err(Error::config("split ratios must lie in [0, 1]"));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must sum to 1"));
        }
        validate_fraction(self.member_fraction)
    }
}

fn validate_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("member fraction {f} must lie in (0, 1)")))
    }
}

/// `floor(ratio * n)` with a small guard against representation error.
fn portion(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// User-id membership of each partition plus the triples moved into the
/// feature partition for item coverage; enough to replay a split exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub shadow_users: Vec<String>,
    pub target_users: Vec<String>,
    pub feature_users: Vec<String>,
    /// `(user, item)` pairs moved from shadow/target into the feature partition.
    pub coverage_moves: Vec<(String, String)>,
}

impl SplitManifest {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }

    /// Rebuild the three partitions of `ds` recorded by this manifest.
    pub fn replay(&self, ds: &RatingDataset) -> Result<ThreeWaySplit> {
        let role: HashMap<&str, Partition> = self
            .shadow_users
            .iter()
            .map(|u| (u.as_str(), Partition::Shadow))
            .chain(self.target_users.iter().map(|u| (u.as_str(), Partition::Target)))
            .chain(self.feature_users.iter().map(|u| (u.as_str(), Partition::Feature)))
            .collect();
        let moved: HashSet<(&str, &str)> = self
            .coverage_moves
            .iter()
            .map(|(u, i)| (u.as_str(), i.as_str()))
            .collect();
        let mut buckets = [Vec::new(), Vec::new(), Vec::new()];
        for (p, t) in ds.triples().iter().enumerate() {
            let uid = ds.user_id(t.user);
            let Some(&part) = role.get(uid) else {
                return Err(Error::Format(format!("user `{uid}` missing from manifest")));
            };
            let part = if moved.contains(&(uid, ds.item_id(t.item))) {
                Partition::Feature
            } else {
                part
            };
            buckets[part as usize].push(p);
        }
        finish_split(ds, buckets, self.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Partition {
    Shadow = 0,
    Target = 1,
    Feature = 2,
}

#[derive(Clone, Debug)]
pub struct ThreeWaySplit {
    pub shadow: RatingDataset,
    pub target: RatingDataset,
    pub feature: RatingDataset,
    pub manifest: SplitManifest,
}

/// Partition users into shadow, target and item-feature sets, then move one
/// random triple into the feature partition for every shadow/target item it
/// would otherwise lack.
pub fn split_three_way(ds: &RatingDataset, plan: &SplitPlan) -> Result<ThreeWaySplit> {
    plan.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let n = ds.n_users();
    let mut rng = seed::rng(seed::derive(plan.seed, "three-way"));
    let mut users: Vec<usize> = (0..n).collect();
    users.shuffle(&mut rng);

    let n_shadow = portion(plan.shadow, n);
    let n_target = portion(plan.target, n);
    let mut role = vec![Partition::Feature; n];
    for &u in &users[..n_shadow] {
        role[u] = Partition::Shadow;
    }
    for &u in &users[n_shadow..(n_shadow + n_target).min(n)] {
        role[u] = Partition::Target;
    }

    let mut assigned: Vec<Partition> = ds.triples().iter().map(|t| role[t.user]).collect();
    let mut feature_items = vec![false; ds.n_items()];
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); ds.n_items()];
    for (p, t) in ds.triples().iter().enumerate() {
        if assigned[p] == Partition::Feature {
            feature_items[t.item] = true;
        } else {
            candidates[t.item].push(p);
        }
    }
    let mut coverage_moves = Vec::new();
    for item in 0..ds.n_items() {
        if feature_items[item] || candidates[item].is_empty() {
            continue;
        }
        let p = candidates[item][rng.gen_range(0..candidates[item].len())];
        assigned[p] = Partition::Feature;
        let t = ds.triples()[p];
        coverage_moves.push((ds.user_id(t.user).to_owned(), ds.item_id(t.item).to_owned()));
    }

    let mut buckets = [Vec::new(), Vec::new(), Vec::new()];
    for (p, part) in assigned.into_iter().enumerate() {
        buckets[part as usize].push(p);
    }
    let users_of = |part: Partition| -> Vec<String> {
        users
            .iter()
            .filter(|&&u| role[u] == part)
            .map(|&u| ds.user_id(u).to_owned())
            .collect()
    };
    let manifest = SplitManifest {
        seed: plan.seed,
        shadow_users: users_of(Partition::Shadow),
        target_users: users_of(Partition::Target),
        feature_users: users_of(Partition::Feature),
        coverage_moves,
    };
    finish_split(ds, buckets, manifest)
}

fn finish_split(ds: &RatingDataset, buckets: [Vec<usize>; 3], manifest: SplitManifest) -> Result<ThreeWaySplit> {
    let [s, t, f] = buckets;
    let out = ThreeWaySplit {
        shadow: ds.from_positions(s),
        target: ds.from_positions(t),
        feature: ds.from_positions(f),
        manifest,
    };
    for (name, part) in [
        ("shadow", &out.shadow),
        ("target", &out.target),
        ("feature", &out.feature),
    ] {
        if part.is_empty() {
            return Err(Error::EmptyPartition(name.into()));
        }
    }
    Ok(out)
}

/// Split users into members (`floor(fraction * n)` of them) and non-members.
pub fn split_member_nonmember(
    ds: &RatingDataset,
    member_fraction: f64,
    seed_value: u64,
) -> Result<(RatingDataset, RatingDataset)> {
    validate_fraction(member_fraction)?;
    let n = ds.n_users();
    let mut users: Vec<usize> = (0..n).collect();
    users.shuffle(&mut seed::rng(seed::derive(seed_value, "membership")));
    let n_members = portion(member_fraction, n);
    let mut is_member = vec![false; n];
    for &u in &users[..n_members] {
        is_member[u] = true;
    }
    let members = ds.retain_users(|u| is_member[u]);
    let nonmembers = ds.retain_users(|u| !is_member[u]);
    if members.is_empty() {
        return Err(Error::EmptyPartition("members".into()));
    }
    if nonmembers.is_empty() {
        return Err(Error::EmptyPartition("non-members".into()));
    }
    Ok((members, nonmembers))
}

/// Drop users with fewer than `threshold` interactions.
pub fn filter_min_interactions(ds: &RatingDataset, threshold: usize) -> Result<RatingDataset> {
    if threshold == 0 {
        return Err(Error::config("interaction threshold must be at least 1"));
    }
    let counts = ds.interactions_per_user();
    let out = ds.retain_users(|u| counts[u] >= threshold);
    if out.is_empty() {
        return Err(Error::EmptyPartition(format!("users with >= {threshold} interactions")));
    }
    Ok(out)
}

/// Hold out one random interaction per user with at least two interactions.
///
/// Returns the remaining training data and, per training-user index, the
/// external id of the held-out item (`None` for users that kept everything).
pub fn hold_out_one(ds: &RatingDataset, seed_value: u64) -> (RatingDataset, Vec<Option<String>>) {
    let mut rng = seed::rng(seed::derive(seed_value, "leave-one-out"));
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); ds.n_users()];
    for (p, t) in ds.triples().iter().enumerate() {
        by_user[t.user].push(p);
    }
    let mut dropped = vec![false; ds.len()];
    let mut held = HashMap::new();
    for (u, ps) in by_user.iter().enumerate() {
        if ps.len() >= 2 {
            let p = ps[rng.gen_range(0..ps.len())];
            dropped[p] = true;
            held.insert(ds.user_id(u).to_owned(), ds.item_id(ds.triples()[p].item).to_owned());
        }
    }
    let train = ds.from_positions((0..ds.len()).filter(|&p| !dropped[p]));
    let holdout = train.user_ids().iter().map(|u| held.get(u).cloned()).collect();
    (train, holdout)
}

// ---------------------------------------------------------------------------
// Matrices

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feedback {
    /// Entries are 1 where an interaction exists.
    Implicit,
    /// Entries carry the rating in `[1, 5]`.
    Explicit,
}

/// Sparse user x item matrix in compressed-row form. Absent entries are 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    feedback: Feedback,
}

impl InteractionMatrix {
    pub fn from_dataset(ds: &RatingDataset, feedback: Feedback) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ds.n_users()];
        for t in ds.triples() {
            let v = match feedback {
                Feedback::Implicit => 1.0,
                Feedback::Explicit => t.score,
            };
            rows[t.user].push((t.item, v));
        }
        Self::from_rows(rows, ds.n_items(), feedback)
    }

    /// Build from per-row `(column, value)` lists. Zero values are dropped.
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>, n_cols: usize, feedback: Feedback) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            row.dedup_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                assert!(c < n_cols, "column {c} out of range {n_cols}");
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        InteractionMatrix {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
            feedback,
        }
    }

    /// Build from a dense row-major matrix.
    pub fn from_dense(dense: &[Vec<f64>], feedback: Feedback) -> Self {
        let n_cols = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|r| r.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect())
            .collect();
        Self::from_rows(rows, n_cols, feedback)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn feedback(&self) -> Feedback {
        self.feedback
    }

    /// Column indices (ascending) of row `r`.
    pub fn row_indices(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self.row_indices(r).binary_search(&c) {
            Ok(p) => self.row_values(r)[p],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_indices(r).binary_search(&c).is_ok()
    }

    /// All stored `(row, col, value)` entries, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            self.row_indices(r)
                .iter()
                .zip(self.row_values(r))
                .map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Number of stored entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        counts
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.entries() {
            out[r][c] = v;
        }
        out
    }
}

/// Binarize a dataset: 1 where the user interacted with the item, else 0.
pub fn to_implicit(ds: &RatingDataset) -> InteractionMatrix {
    InteractionMatrix::from_dataset(ds, Feedback::Implicit)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingPair {
    pub user: usize,
    pub item: usize,
    pub label: f64,
}

/// Every observed pair as a positive plus `ratio` sampled zero-pairs per
/// positive for each user. Users without enough zero entries get all of
/// them and a warning.
pub fn sample_negatives(m: &InteractionMatrix, ratio: usize, seed_value: u64) -> Result<Vec<TrainingPair>> {
    if m.nnz() == 0 {
        return Err(Error::Empty("positive interactions"));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "negatives"));
    let mut out = Vec::with_capacity(m.nnz() * (ratio + 1));
    let mut capped = 0usize;
    for u in 0..m.n_rows() {
        let pos = m.row_indices(u);
        for &i in pos {
            out.push(TrainingPair {
                user: u,
                item: i,
                label: 1.0,
            });
        }
        let zeros = m.n_cols() - pos.len();
        let wanted = ratio * pos.len();
        let take = wanted.min(zeros);
        if take < wanted {
            capped += 1;
        }
        if take == 0 {
            continue;
        }
        if take * 2 <= zeros {
            let mut chosen = HashSet::with_capacity(take);
            while chosen.len() < take {
                let i = rng.gen_range(0..m.n_cols());
                if pos.binary_search(&i).is_err() && chosen.insert(i) {
                    out.push(TrainingPair {
                        user: u,
                        item: i,
                        label: 0.0,
                    });
                }
            }
        } else {
            let free: Vec<usize> = (0..m.n_cols()).filter(|i| pos.binary_search(i).is_err()).collect();
            for p in index::sample(&mut rng, free.len(), take) {
                out.push(TrainingPair {
                    user: u,
                    item: free[p],
                    label: 0.0,
                });
            }
        }
    }
    if capped > 0 {
        warn!("{capped} users had fewer zero entries than {ratio} x positives; sampled all available");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> ParsedRatings {
        parse_ratings(Cursor::new(s), Delimiter::Auto).unwrap()
    }

    fn grid_dataset(users: usize, per_user: usize, items: usize) -> RatingDataset {
        let mut recs = Vec::new();
        for u in 0..users {
            for k in 0..per_user {
                recs.push((
                    format!("u{u}"),
                    format!("i{}", (u * 7 + k * 3) % items),
                    1.0 + (k % 5) as f64,
                ));
            }
        }
        RatingDataset::from_records(recs).unwrap()
    }

    #[test]
    fn parses_simple_records() {
        let p = parse("u1,i1,5\nu1,i2,3");
        assert_eq!(p.dataset.len(), 2);
        assert_eq!(p.dataset.n_users(), 1);
        assert_eq!(p.dataset.n_items(), 2);
    }

    #[test]
    fn duplicate_pair_is_kept_once() {
        let p = parse("u1,i1,5\nu1,i1,5");
        assert_eq!(p.dataset.len(), 1);
        assert_eq!(p.report.duplicates, 1);
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let p = parse("u1,i1,9\nu1,i2,4");
        assert_eq!(p.report.rejected.len(), 1);
        assert_eq!(p.report.rejected[0].line, 1);
        assert_eq!(p.dataset.len(), 1);
    }

    #[test]
    fn header_and_timestamps() {
        let p = parse("user\titem\trating\tts\nu1\ti1\t4\t978300760\n");
        assert!(p.report.header_skipped);
        assert_eq!(p.dataset.len(), 1);
        let p = parse("1::1193::5::978300760\n1::661::3::978302109\n");
        assert_eq!(p.dataset.len(), 2);
        assert_eq!(p.dataset.item_id(1), "661");
    }

    #[test]
    fn nothing_valid_is_an_error() {
        let err = parse_ratings(Cursor::new("a,b,7\n"), Delimiter::Comma).unwrap_err();
        assert!(matches!(err, Error::NoRecords { rejected: 1 }));
        assert!(parse_ratings(Cursor::new(""), Delimiter::Comma).is_err());
    }

    #[test]
    fn three_way_split_counts() {
        let ds = grid_dataset(100, 5, 30);
        let split = split_three_way(&ds, &SplitPlan::default()).unwrap();
        let m = &split.manifest;
        assert_eq!(
            (m.shadow_users.len(), m.target_users.len(), m.feature_users.len()),
            (40, 40, 20)
        );
        assert_eq!(split.shadow.n_users(), 40);
        assert_eq!(split.target.n_users(), 40);
    }

    #[test]
    fn three_way_split_is_seeded() {
        let ds = grid_dataset(60, 4, 25);
        let a = split_three_way(&ds, &SplitPlan::default()).unwrap();
        let b = split_three_way(&ds, &SplitPlan::default()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        let c = split_three_way(
            &ds,
            &SplitPlan {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.manifest.shadow_users, c.manifest.shadow_users);
    }

    #[test]
    fn coverage_moves_rare_items_into_feature_partition() {
        // Item "rare" is rated by a single user; whichever partition that
        // user lands in, the feature partition must end up with it.
        let mut recs: Vec<(String, String, f64)> = Vec::new();
        for u in 0..50 {
            recs.push((format!("u{u}"), format!("i{}", u % 5), 3.0));
        }
        recs.push(("u0".into(), "rare".into(), 4.0));
        let ds = RatingDataset::from_records(recs).unwrap();
        for s in 0..10 {
            let split = split_three_way(
                &ds,
                &SplitPlan {
                    seed: s,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(split.feature.item_index("rare").is_some());
        }
    }

    #[test]
    fn manifest_replays_split() {
        let ds = grid_dataset(50, 6, 40);
        let split = split_three_way(
            &ds,
            &SplitPlan {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        split.manifest.write_json(&mut buf).unwrap();
        let manifest = SplitManifest::read_json(buf.as_slice()).unwrap();
        let again = manifest.replay(&ds).unwrap();
        assert_eq!(again.shadow.triples(), split.shadow.triples());
        assert_eq!(again.target.triples(), split.target.triples());
        assert_eq!(again.feature.triples(), split.feature.triples());
    }

    #[test]
    fn bad_plans_are_rejected() {
        let ds = grid_dataset(10, 2, 5);
        let plan = SplitPlan {
            shadow: 0.5,
            ..Default::default()
        };
        assert!(split_three_way(&ds, &plan).is_err());
        let plan = SplitPlan {
            shadow: 0.0,
            target: 0.8,
            feature: 0.2,
            ..Default::default()
        };
        assert!(matches!(split_three_way(&ds, &plan), Err(Error::EmptyPartition(_))));
    }

    #[test]
    fn member_split_sizes() {
        let ds = grid_dataset(40, 3, 10);
        let (m, n) = split_member_nonmember(&ds, 0.5, 3).unwrap();
        assert_eq!((m.n_users(), n.n_users()), (20, 20));
        let ds = grid_dataset(41, 3, 10);
        let (m, n) = split_member_nonmember(&ds, 0.5, 3).unwrap();
        assert_eq!((m.n_users(), n.n_users()), (20, 21));
        assert!(split_member_nonmember(&ds, 1.0, 3).is_err());
        assert!(split_member_nonmember(&ds, 0.0, 3).is_err());
        let tiny = grid_dataset(1, 3, 10);
        assert!(split_member_nonmember(&tiny, 0.5, 3).is_err());
    }

    #[test]
    fn filter_boundary() {
        let mut recs = Vec::new();
        for k in 0..19 {
            recs.push(("short".to_string(), format!("i{k}"), 3.0));
        }
        for k in 0..20 {
            recs.push(("ok".to_string(), format!("j{k}"), 3.0));
        }
        let ds = RatingDataset::from_records(recs).unwrap();
        let f = filter_min_interactions(&ds, 20).unwrap();
        assert_eq!(f.user_ids(), &["ok".to_string()]);
        // items only the removed user touched are gone
        assert_eq!(f.n_items(), 20);
        assert!(f.item_index("i0").is_none());
        assert!(filter_min_interactions(&ds, 21).is_err());
        assert!(filter_min_interactions(&ds, 0).is_err());
    }

    #[test]
    fn implicit_matrix() {
        let ds = RatingDataset::from_records([("u", "a", 5.0), ("v", "b", 2.0), ("v", "a", 4.0)]).unwrap();
        let m = to_implicit(&ds);
        assert_eq!(m.to_dense(), vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(m.nnz(), ds.len());
        let one = InteractionMatrix::from_rows(vec![vec![(0, 1.0)]], 2, Feedback::Implicit);
        assert_eq!(one.to_dense(), vec![vec![1.0, 0.0]]);
        let empty_row = InteractionMatrix::from_rows(vec![vec![], vec![(1, 1.0)]], 2, Feedback::Implicit);
        assert_eq!(empty_row.to_dense()[0], vec![0.0, 0.0]);
    }

    #[test]
    fn negative_sampling_ratios() {
        let m = InteractionMatrix::from_rows(
            (0..10)
                .map(|u| (0..4).map(|k| ((u + k * 5) % 50, 1.0)).collect())
                .collect(),
            50,
            Feedback::Implicit,
        );
        for ratio in [1, 4] {
            let pairs = sample_negatives(&m, ratio, 11).unwrap();
            let pos = pairs.iter().filter(|p| p.label == 1.0).count();
            let neg = pairs.iter().filter(|p| p.label == 0.0).count();
            assert_eq!(pos, m.nnz());
            assert_eq!(neg, ratio * pos);
            assert!(pairs
                .iter()
                .filter(|p| p.label == 0.0)
                .all(|p| !m.contains(p.user, p.item)));
            assert_eq!(pairs, sample_negatives(&m, ratio, 11).unwrap());
        }
    }

    #[test]
    fn negative_sampling_caps_dense_rows() {
        let m = InteractionMatrix::from_rows(vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)]], 5, Feedback::Implicit);
        let pairs = sample_negatives(&m, 4, 0).unwrap();
        let mut neg: Vec<usize> = pairs.iter().filter(|p| p.label == 0.0).map(|p| p.item).collect();
        neg.sort();
        assert_eq!(neg, vec![3, 4]);
        let empty = InteractionMatrix::from_rows(vec![vec![]], 5, Feedback::Implicit);
        assert!(sample_negatives(&empty, 1, 0).is_err());
    }

    #[test]
    fn hold_out_keeps_one_per_user() {
        let ds = grid_dataset(10, 5, 40);
        let (train, held) = hold_out_one(&ds, 4);
        assert_eq!(train.len(), ds.len() - 10);
        for (u, h) in held.iter().enumerate() {
            let h = h.as_ref().unwrap();
            let uid = train.user_id(u);
            let orig = ds.user_index(uid).unwrap();
            let items = &ds.items_by_user()[orig];
            assert!(items.iter().any(|&i| ds.item_id(i) == h));
            assert!(train.items_by_user()[u].iter().all(|&i| train.item_id(i) != h));
        }
    }
}
