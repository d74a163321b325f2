use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mf::{dot, LatentFactorization};
use crate::{Error, Result};

/// Embedding rows for `items` (external ids), in input order.
pub fn vectorize_items<'a, S: AsRef<str>>(items: &[S], emb: &'a LatentFactorization) -> Result<Vec<&'a [f64]>> {
    items.iter().map(|id| emb.item_vector_by_id(id.as_ref())).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    Uniform,
    /// Rank `i` (1-based) of `k` gets `(k - i + 1) / (k (k + 1) / 2)`.
    #[default]
    Positional,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Positional => "positional",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(WeightScheme::Uniform),
            "positional" => Ok(WeightScheme::Positional),
            _ => Err(Error::config(format!("unknown weight scheme {s:?}"))),
        }
    }
}

/// Nonnegative weights summing to 1 for a list of length `k`.
pub fn make_weights(scheme: WeightScheme, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::config("weight list length must be >= 1"));
    }
    Ok(match scheme {
        WeightScheme::Uniform => vec![1.0 / k as f64; k],
        WeightScheme::Positional => {
            let total = (k * (k + 1) / 2) as f64;
            (0..k).map(|i| (k - i) as f64 / total).collect()
        }
    })
}

/// `sum_j weights[j] * vectors[j]`.
pub fn center_vector(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if vectors.is_empty() {
        return Err(Error::Empty("vector list"));
    }
    if vectors.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: weights.len(),
        });
    }
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// `z = u_center - v_center`.
pub fn user_feature(u_center: &[f64], v_center: &[f64]) -> Result<Vec<f64>> {
    if u_center.len() != v_center.len() {
        return Err(Error::DimensionMismatch {
            expected: u_center.len(),
            actual: v_center.len(),
        });
    }
    Ok(u_center.iter().zip(v_center).map(|(u, v)| u - v).collect())
}

/// How a user's interaction and recommendation vectors become one feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMethod {
    /// Difference of center vectors.
    #[default]
    Origin,
    Concat10,
    Concat20,
    /// First 20 interactions and every recommendation.
    Concat100,
    Hadamard,
    Similarity,
}

impl FeatureMethod {
    pub const BASELINES: [FeatureMethod; 5] = [
        FeatureMethod::Concat10,
        FeatureMethod::Concat20,
        FeatureMethod::Concat100,
        FeatureMethod::Hadamard,
        FeatureMethod::Similarity,
    ];

    /// Feature length for embedding dimension `l` and list length `k`.
    pub fn width(self, l: usize, k: usize) -> usize {
        match self {
            FeatureMethod::Origin | FeatureMethod::Hadamard => l,
            FeatureMethod::Concat10 => 20 * l,
            FeatureMethod::Concat20 => 40 * l,
            FeatureMethod::Concat100 => (20 + k) * l,
            FeatureMethod::Similarity => k,
        }
    }
}

impl fmt::Display for FeatureMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMethod::Origin => "origin",
            FeatureMethod::Concat10 => "concat10",
            FeatureMethod::Concat20 => "concat20",
            FeatureMethod::Concat100 => "concat100",
            FeatureMethod::Hadamard => "hadamard",
            FeatureMethod::Similarity => "similarity",
        })
    }
}

impl FromStr for FeatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "origin" => FeatureMethod::Origin,
            "concat10" => FeatureMethod::Concat10,
            "concat20" => FeatureMethod::Concat20,
            "concat100" => FeatureMethod::Concat100,
            "hadamard" => FeatureMethod::Hadamard,
            "similarity" => FeatureMethod::Similarity,
            _ => return Err(Error::config(format!("unknown feature method {s:?}"))),
        })
    }
}

/// Feature vector for one user. Interactions are averaged uniformly; the
/// recommendation center of `Origin` uses `scheme`.
pub fn method_feature(
    method: FeatureMethod,
    scheme: WeightScheme,
    interactions: &[&[f64]],
    recommendations: &[&[f64]],
) -> Result<Vec<f64>> {
    match method {
        FeatureMethod::Origin => {
            let u = center_vector(
                interactions,
                &make_weights(WeightScheme::Uniform, interactions.len().max(1))?,
            )?;
            let v = center_vector(recommendations, &make_weights(scheme, recommendations.len().max(1))?)?;
            user_feature(&u, &v)
        }
        _ => baseline_feature(method, interactions, recommendations),
    }
}

/// Aggregation baselines.
pub fn baseline_feature(
    method: FeatureMethod,
    interactions: &[&[f64]],
    recommendations: &[&[f64]],
) -> Result<Vec<f64>> {
    let (n_int, n_rec) = match method {
        FeatureMethod::Concat10 => (10, 10),
        FeatureMethod::Concat20 => (20, 20),
        FeatureMethod::Concat100 => (20, recommendations.len()),
        FeatureMethod::Hadamard => return hadamard(interactions, recommendations),
        FeatureMethod::Similarity => return similarity(interactions, recommendations),
        FeatureMethod::Origin => return Err(Error::config("origin is not an aggregation baseline")),
    };
    for (have, need) in [(interactions.len(), n_int), (recommendations.len(), n_rec)] {
        if have < need || need == 0 {
            return Err(Error::NotEnoughItems {
                needed: need.max(1),
                available: have,
            });
        }
    }
    Ok(interactions[..n_int]
        .iter()
        .chain(&recommendations[..n_rec])
        .flat_map(|v| v.iter().copied())
        .collect())
}

fn product(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::Empty("vector list"))?;
    let mut out = first.to_vec();
    for v in &vectors[1..] {
        if v.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                actual: v.len(),
            });
        }
        out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o *= x);
    }
    Ok(out)
}

fn hadamard(interactions: &[&[f64]], recommendations: &[&[f64]]) -> Result<Vec<f64>> {
    user_feature(&product(interactions)?, &product(recommendations)?)
}

/// Per recommendation, the mean dot product with every interaction.
fn similarity(interactions: &[&[f64]], recommendations: &[&[f64]]) -> Result<Vec<f64>> {
    if interactions.is_empty() {
        return Err(Error::Empty("interaction list"));
    }
    if recommendations.is_empty() {
        return Err(Error::Empty("recommendation list"));
    }
    let n = interactions.len() as f64;
    recommendations
        .iter()
        .map(|r| {
            let mut total = 0.0;
            for u in interactions {
                if u.len() != r.len() {
                    return Err(Error::DimensionMismatch {
                        expected: r.len(),
                        actual: u.len(),
                    });
                }
                total += dot(u, r);
            }
            Ok(total / n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights() {
        assert_eq!(
            make_weights(WeightScheme::Positional, 4).unwrap(),
            vec![0.4, 0.3, 0.2, 0.1]
        );
        assert_eq!(make_weights(WeightScheme::Uniform, 3).unwrap(), vec![1.0 / 3.0; 3]);
        assert_eq!(make_weights(WeightScheme::Uniform, 1).unwrap(), vec![1.0]);
        assert_eq!(make_weights(WeightScheme::Positional, 1).unwrap(), vec![1.0]);
        assert!(make_weights(WeightScheme::Uniform, 0).is_err());
    }

    #[test]
    fn centers() {
        let v = [1.0, -2.0, 0.5];
        assert_eq!(center_vector(&[&v], &[1.0]).unwrap(), v.to_vec());
        let neg = [-1.0, 2.0, -0.5];
        assert_eq!(center_vector(&[&v, &neg], &[0.5, 0.5]).unwrap(), vec![0.0; 3]);
        assert!(center_vector(&[], &[]).is_err());
        assert!(center_vector(&[&v], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn positional_center_matches_weighted_sum() {
        let a = [0.3, -1.2];
        let b = [2.0, 0.7];
        let c = [-0.4, 0.1];
        let w = make_weights(WeightScheme::Positional, 3).unwrap();
        let got = center_vector(&[&a, &b, &c], &w).unwrap();
        for d in 0..2 {
            let expect = dot(&[a[d], b[d], c[d]], &[3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
            assert!((got[d] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_difference() {
        assert_eq!(user_feature(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(user_feature(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), vec![0.0, 0.0]);
        assert!(user_feature(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn concat_shapes() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64; 50]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let f = baseline_feature(FeatureMethod::Concat10, &refs, &refs).unwrap();
        assert_eq!(f.len(), 1000);
        assert_eq!(f[9 * 50], 9.0);
        assert_eq!(f[10 * 50], 0.0);
        assert_eq!(
            baseline_feature(FeatureMethod::Concat20, &refs, &refs).unwrap().len(),
            2000
        );
        let c100 = baseline_feature(FeatureMethod::Concat100, &refs, &refs[..25]).unwrap();
        assert_eq!(c100.len(), FeatureMethod::Concat100.width(50, 25));
        assert!(matches!(
            baseline_feature(FeatureMethod::Concat20, &refs[..19], &refs),
            Err(Error::NotEnoughItems {
                needed: 20,
                available: 19
            })
        ));
    }

    #[test]
    fn hadamard_of_identical_singletons_is_zero() {
        let v = [0.5, -2.0, 3.0];
        assert_eq!(
            baseline_feature(FeatureMethod::Hadamard, &[&v], &[&v]).unwrap(),
            vec![0.0; 3]
        );
        let w = [2.0, 1.0, 1.0];
        // (v * w) - (w)
        assert_eq!(
            baseline_feature(FeatureMethod::Hadamard, &[&v, &w], &[&w]).unwrap(),
            vec![-1.0, -3.0, 2.0]
        );
    }

    #[test]
    fn similarity_on_orthonormal_interactions() {
        let e: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let ints: Vec<&[f64]> = e.iter().map(|r| r.as_slice()).collect();
        let other = [1.0, 2.0, 0.0];
        let recs: Vec<&[f64]> = vec![&e[1], &other];
        let f = baseline_feature(FeatureMethod::Similarity, &ints, &recs).unwrap();
        assert_eq!(f.len(), 2);
        assert!((f[0] - 1.0 / 3.0).abs() < 1e-15);
        // brute force: (1 + 2 + 0) / 3
        assert!((f[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn origin_is_zero_for_permuted_lists_under_uniform() {
        let rows: Vec<Vec<f64>> = vec![vec![0.1, 0.7], vec![-0.3, 0.2], vec![0.9, -0.4]];
        let ints: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let recs: Vec<&[f64]> = vec![ints[2], ints[0], ints[1]];
        let z = method_feature(FeatureMethod::Origin, WeightScheme::Uniform, &ints, &recs).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-15), "{z:?}");
    }

    #[test]
    fn method_names_round_trip() {
        for m in std::iter::once(FeatureMethod::Origin).chain(FeatureMethod::BASELINES) {
            assert_eq!(m.to_string().parse::<FeatureMethod>().unwrap(), m);
        }
        assert!("bogus".parse::<FeatureMethod>().is_err());
        assert_eq!("Positional".parse::<WeightScheme>().unwrap(), WeightScheme::Positional);
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(k in 1usize..=1000, positional in any::<bool>()) {
            let scheme = if positional { WeightScheme::Positional } else { WeightScheme::Uniform };
            let w = make_weights(scheme, k).unwrap();
            prop_assert_eq!(w.len(), k);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if positional {
                prop_assert!(w.windows(2).all(|p| p[0] > p[1]));
            }
        }

        #[test]
        fn feature_is_antisymmetric(u in prop::collection::vec(-10.0f64..10.0, 4), v in prop::collection::vec(-10.0f64..10.0, 4)) {
            let a = user_feature(&u, &v).unwrap();
            let b = user_feature(&v, &u).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
        }
    }
}
