use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{method_feature, vectorize_items, FeatureMethod, WeightScheme};
use crate::data::RatingDataset;
use crate::defense::{popularity_randomization, DefenseConfig};
use crate::mf::LatentFactorization;
use crate::recommender::{recommend_popular, recommend_top_k, RecommenderModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Labels come from the adversary's own shadow split.
    ShadowTrain,
    /// Labels are ground truth used only for scoring.
    TargetTest,
}

/// Which path produced a user's recommendation list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecSource {
    Personalized,
    Popularity,
    Defended,
}

/// How non-members are served.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NonMemberPath {
    Popularity,
    Defended(DefenseConfig),
}

/// A user's interactions and the list a recommender returned, as external
/// item ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: String,
    pub member: bool,
    pub interactions: Vec<String>,
    pub recommendations: Vec<String>,
    pub source: RecSource,
}

fn interaction_ids(ds: &RatingDataset) -> Vec<Vec<String>> {
    ds.items_by_user()
        .into_iter()
        .map(|items| items.into_iter().map(|i| ds.item_id(i).to_owned()).collect())
        .collect()
}

/// Query a deployed recommender. Members (`member_train`, the exact data
/// `model` was fitted on, same indexing) get personalized lists; non-members
/// get the popularity list or its defended variant.
pub fn serve_profiles(
    member_train: &RatingDataset,
    model: &RecommenderModel,
    nonmembers: &RatingDataset,
    path: &NonMemberPath,
    k: usize,
) -> Result<Vec<UserProfile>> {
    if model.n_users() != member_train.n_users() || model.n_items() != member_train.n_items() {
        return Err(Error::DimensionMismatch {
            expected: member_train.n_users(),
            actual: model.n_users(),
        });
    }
    let to_ids =
        |items: &[usize]| -> Vec<String> { items.iter().map(|&i| member_train.item_id(i).to_owned()).collect() };

    let member_lists = (0..member_train.n_users())
        .into_par_iter()
        .map(|u| recommend_top_k(model, u, k).map(|l| to_ids(&l.items)))
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<UserProfile> = interaction_ids(member_train)
        .into_iter()
        .zip(member_lists)
        .enumerate()
        .map(|(u, (interactions, recommendations))| UserProfile {
            user: member_train.user_id(u).to_owned(),
            member: true,
            interactions,
            recommendations,
            source: RecSource::Personalized,
        })
        .collect();

    let ranking = model.popularity();
    let popular = to_ids(&recommend_popular(&ranking, k)?);
    for (u, interactions) in interaction_ids(nonmembers).into_iter().enumerate() {
        let user = nonmembers.user_id(u).to_owned();
        let (recommendations, source) = match path {
            NonMemberPath::Popularity => (popular.clone(), RecSource::Popularity),
            NonMemberPath::Defended(cfg) => {
                if cfg.n_rec != k {
                    return Err(Error::config(format!("defense N_rec {} differs from k {k}", cfg.n_rec)));
                }
                (
                    to_ids(&popularity_randomization(&ranking, cfg, &user)?),
                    RecSource::Defended,
                )
            }
        };
        out.push(UserProfile {
            user,
            member: false,
            interactions,
            recommendations,
            source,
        });
    }
    Ok(out)
}

/// Append each user's held-out item (keyed by user id) to their
/// interactions. The adversary observes whole histories, including items a
/// recommender was not fitted on.
pub fn restore_held_out(profiles: &mut [UserProfile], held: &HashMap<String, String>) {
    for p in profiles {
        if let Some(item) = held.get(&p.user) {
            if !p.interactions.contains(item) {
                p.interactions.push(item.clone());
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub user: String,
    pub z: Vec<f64>,
    pub member: bool,
    pub source: RecSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackDataset {
    pub provenance: Provenance,
    pub method: FeatureMethod,
    pub scheme: WeightScheme,
    pub samples: Vec<LabeledFeature>,
}

/// One labeled feature per profile.
pub fn generate_labeled_dataset(
    profiles: &[UserProfile],
    emb: &LatentFactorization,
    method: FeatureMethod,
    scheme: WeightScheme,
    provenance: Provenance,
) -> Result<AttackDataset> {
    let samples = profiles
        .par_iter()
        .map(|p| {
            if p.interactions.is_empty() {
                return Err(Error::EmptyPartition(format!("interactions of user {}", p.user)));
            }
            let ints = vectorize_items(&p.interactions, emb)?;
            let recs = vectorize_items(&p.recommendations, emb)?;
            Ok(LabeledFeature {
                user: p.user.clone(),
                z: method_feature(method, scheme, &ints, &recs)?,
                member: p.member,
                source: p.source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackDataset {
        provenance,
        method,
        scheme,
        samples,
    })
}

impl AttackDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_members(&self) -> usize {
        self.samples.iter().filter(|s| s.member).count()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.z.len())
    }

    pub fn as_pairs(&self) -> Vec<(&[f64], bool)> {
        self.samples.iter().map(|s| (s.z.as_slice(), s.member)).collect()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.z.clone()).collect()
    }

    /// Header `label,z1,..,zl`, then one row per sample (1 = member).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "label")?;
        for d in 1..=self.dim() {
            write!(out, ",z{d}")?;
        }
        writeln!(out)?;
        for s in &self.samples {
            write!(out, "{}", u8::from(s.member))?;
            for v in &s.z {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Inverse of [`AttackDataset::write_csv`]; user ids become row numbers.
    pub fn read_csv<R: BufRead>(
        input: R,
        provenance: Provenance,
        method: FeatureMethod,
        scheme: WeightScheme,
    ) -> Result<Self> {
        let mut samples = Vec::new();
        let mut width = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if n == 0 && line.starts_with("label") || line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let member = match fields.next().map(str::trim) {
                Some("1") => true,
                Some("0") => false,
                other => return Err(Error::Format(format!("line {}: bad label {other:?}", n + 1))),
            };
            let z = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            if *width.get_or_insert(z.len()) != z.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} values",
                    n + 1,
                    width.unwrap_or(0)
                )));
            }
            samples.push(LabeledFeature {
                user: samples.len().to_string(),
                z,
                member,
                source: if member {
                    RecSource::Personalized
                } else {
                    RecSource::Popularity
                },
            });
        }
        Ok(AttackDataset {
            provenance,
            method,
            scheme,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::to_implicit;
    use crate::mf::{embed_dataset, MfConfig};
    use crate::recommender::{train, Algorithm, RecommenderConfig};

    fn ratings(users: std::ops::Range<usize>, items: usize) -> RatingDataset {
        RatingDataset::from_records(users.flat_map(|u| {
            (0..6).map(move |j| {
                (
                    format!("u{u}"),
                    format!("i{}", (u * 3 + j * 5) % items),
                    1.0 + ((u + j) % 5) as f64,
                )
            })
        }))
        .unwrap()
    }

    fn fixture() -> (RatingDataset, RecommenderModel, RatingDataset, LatentFactorization) {
        let members = ratings(0..10, 30);
        let nonmembers = ratings(10..20, 30);
        let feature = ratings(20..60, 30);
        let model = train(Algorithm::Item, &to_implicit(&members), &RecommenderConfig::default()).unwrap();
        let emb = embed_dataset(
            &feature,
            &MfConfig {
                latent_dim: 4,
                epochs: 5,
                ..Default::default()
            },
        )
        .unwrap();
        (members, model, nonmembers, emb)
    }

    #[test]
    fn ten_and_ten_users() {
        let (members, model, nonmembers, emb) = fixture();
        let profiles = serve_profiles(&members, &model, &nonmembers, &NonMemberPath::Popularity, 5).unwrap();
        let ds = generate_labeled_dataset(
            &profiles,
            &emb,
            FeatureMethod::Origin,
            WeightScheme::Positional,
            Provenance::ShadowTrain,
        )
        .unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.n_members(), 10);
        assert_eq!(ds.dim(), 4);
        for s in &ds.samples {
            assert_eq!(s.member, s.source == RecSource::Personalized);
        }
        let again = generate_labeled_dataset(
            &profiles,
            &emb,
            FeatureMethod::Origin,
            WeightScheme::Positional,
            Provenance::ShadowTrain,
        )
        .unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn member_lists_skip_training_items() {
        let (members, model, nonmembers, _) = fixture();
        let profiles = serve_profiles(&members, &model, &nonmembers, &NonMemberPath::Popularity, 5).unwrap();
        for p in profiles.iter().filter(|p| p.member) {
            assert!(p.recommendations.iter().all(|r| !p.interactions.contains(r)));
        }
        let popular = &profiles.iter().find(|p| !p.member).unwrap().recommendations;
        assert!(profiles
            .iter()
            .filter(|p| !p.member)
            .all(|p| &p.recommendations == popular));
    }

    #[test]
    fn defended_lists_are_flagged() {
        let (members, model, nonmembers, _) = fixture();
        let cfg = DefenseConfig::new(0.5, 5, 1).unwrap();
        let profiles = serve_profiles(&members, &model, &nonmembers, &NonMemberPath::Defended(cfg), 5).unwrap();
        assert!(profiles
            .iter()
            .filter(|p| !p.member)
            .all(|p| p.source == RecSource::Defended));
        let bad = DefenseConfig::new(0.5, 4, 1).unwrap();
        assert!(serve_profiles(&members, &model, &nonmembers, &NonMemberPath::Defended(bad), 5).is_err());
    }

    #[test]
    fn unknown_item_is_named() {
        let (_, _, _, emb) = fixture();
        let p = UserProfile {
            user: "x".into(),
            member: true,
            interactions: vec!["i1".into()],
            recommendations: vec!["missing".into()],
            source: RecSource::Personalized,
        };
        let err = generate_labeled_dataset(
            &[p],
            &emb,
            FeatureMethod::Origin,
            WeightScheme::Uniform,
            Provenance::TargetTest,
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn vectorize_preserves_order() {
        let (_, _, _, emb) = fixture();
        let rows = vectorize_items(&["i2", "i0"], &emb).unwrap();
        assert_eq!(rows[0], emb.item_vector_by_id("i2").unwrap());
        assert_eq!(rows[1], emb.item_vector_by_id("i0").unwrap());
        assert!(vectorize_items::<&str>(&[], &emb).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (members, model, nonmembers, emb) = fixture();
        let profiles = serve_profiles(&members, &model, &nonmembers, &NonMemberPath::Popularity, 5).unwrap();
        let ds = generate_labeled_dataset(
            &profiles,
            &emb,
            FeatureMethod::Origin,
            WeightScheme::Uniform,
            Provenance::TargetTest,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("label,z1,z2,z3,z4\n"));
        let back = AttackDataset::read_csv(
            &buf[..],
            Provenance::TargetTest,
            FeatureMethod::Origin,
            WeightScheme::Uniform,
        )
        .unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            assert_eq!(a.z, b.z);
            assert_eq!(a.member, b.member);
        }
        assert!(AttackDataset::read_csv(
            &b"label,z1\n2,0.5\n"[..],
            Provenance::TargetTest,
            FeatureMethod::Origin,
            WeightScheme::Uniform
        )
        .is_err());
    }
}
