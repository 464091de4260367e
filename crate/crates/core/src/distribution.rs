use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A discrete probability distribution over ordered outcomes.
///
/// An empty distribution marks a sink (no observed successors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution<K: Ord> {
    pub probs: BTreeMap<K, f64>,
    pub sink: bool,
}

impl<K: Ord> Default for Distribution<K> {
    fn default() -> Self {
        Distribution { probs: BTreeMap::new(), sink: true }
    }
}

impl<K: Ord + Clone> Distribution<K> {
    /// Normalizes non-negative masses; repeated keys accumulate.
    pub fn from_weights<I: IntoIterator<Item = (K, f64)>>(weights: I) -> Self {
        let mut probs: BTreeMap<K, f64> = BTreeMap::new();
        for (k, w) in weights {
            if w > 0.0 {
                *probs.entry(k).or_insert(0.0) += w;
            }
        }
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Self::default();
        }
        for v in probs.values_mut() {
            *v /= total;
        }
        Distribution { probs, sink: false }
    }

    pub fn get(&self, k: &K) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs
            .values()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum::<f64>()
            .max(0.0)
    }

    pub fn map_keys<J: Ord + Clone>(&self, mut f: impl FnMut(&K) -> J) -> Distribution<J> {
        if self.sink {
            return Distribution::default();
        }
        Distribution::from_weights(self.probs.iter().map(|(k, &p)| (f(k), p)))
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("outcome {outcome} has probability {p} but is absent from the reference distribution")]
pub struct SupportError {
    pub outcome: String,
    pub p: f64,
}

/// Kullback-Leibler divergence `D(p || q)` in bits.
///
/// Fails when `p` puts mass on an outcome outside the support of `q`.
pub fn kl_divergence<K: Ord + Clone + std::fmt::Debug>(
    p: &Distribution<K>,
    q: &Distribution<K>,
) -> Result<f64, SupportError> {
    let mut d = 0.0;
    for (k, &pk) in &p.probs {
        if pk <= 0.0 {
            continue;
        }
        let qk = q.get(k);
        if qk <= 0.0 {
            return Err(SupportError { outcome: format!("{k:?}"), p: pk });
        }
        d += pk * (pk / qk).log2();
    }
    Ok(d.max(0.0))
}
