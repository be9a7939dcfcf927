//! The global learned dissimilarity used to pick a memory inside a leaf.
//!
//! A scorer maps a pair of keys to a feature vector `z` and returns the
//! clipped linear score `max(0, <w, z>)`. With the [`PairFeaturizer::AbsDiff`]
//! featurizer `z` is the coordinate-wise absolute difference, so identical keys
//! always score exactly zero whatever the weights are. This is what makes an
//! exact match the preferred memory on query.
//!
//! Weights are trained with a pairwise ranking loss: of the memory the scorer
//! would currently retrieve and the memory whose value best matches the
//! observed reward, the better predictor is pushed towards score 0 and the
//! other towards score 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// How a pair of keys is turned into scorer features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFeaturizer {
    /// `z_i = |a_i - b_i|`. Self-consistent: identical keys score 0.
    #[default]
    AbsDiff,
    /// `z_i = a_i * b_i`. The ablation without the self-consistency guarantee.
    Interaction,
}

impl PairFeaturizer {
    #[inline]
    fn component(self, a: f64, b: f64) -> f64 {
        match self {
            PairFeaturizer::AbsDiff => (a - b).abs(),
            PairFeaturizer::Interaction => a * b,
        }
    }
}

/// Builds the pair feature vector for two keys of equal length.
pub fn featurize_pair(variant: PairFeaturizer, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>> {
    check_dim(x1.len(), x2.len())?;
    Ok(x1
        .iter()
        .zip(x2)
        .map(|(&a, &b)| variant.component(a, b))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Learning rate for the ranking-loss step.
    pub eta: f64,
    pub featurizer: PairFeaturizer,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            eta: 0.01,
            featurizer: PairFeaturizer::AbsDiff,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scorer learning rate must be positive and finite, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Outcome of a single ranking-loss update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScorerUpdate {
    /// Fewer than two candidates, so there is no alternative to rank against.
    TooFewCandidates,
    /// The retrieved and the alternative memory predict the reward equally well.
    Tie,
    /// A gradient step was taken; holds the loss before the step.
    Stepped { loss: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scorer {
    weights: Vec<f64>,
    eta: f64,
    featurizer: PairFeaturizer,
}

impl Scorer {
    /// Creates a scorer over `dim`-dimensional keys with weights drawn uniform
    /// on `[0, 1) / dim`.
    pub fn new<R: Rng + ?Sized>(dim: usize, config: ScorerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("key dimension must be positive".into()));
        }
        let scale = 1.0 / dim as f64;
        let weights = (0..dim).map(|_| rng.random::<f64>() * scale).collect();
        Ok(Scorer {
            weights,
            eta: config.eta,
            featurizer: config.featurizer,
        })
    }

    pub fn with_weights(weights: Vec<f64>, config: ScorerConfig) -> Result<Self> {
        config.validate()?;
        check_finite(&weights, "scorer weights")?;
        if weights.is_empty() {
            return Err(Error::InvalidConfig("key dimension must be positive".into()));
        }
        Ok(Scorer {
            weights,
            eta: config.eta,
            featurizer: config.featurizer,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn featurizer(&self) -> PairFeaturizer {
        self.featurizer
    }

    /// `<w, z>` before clipping. Callers guarantee equal lengths.
    #[inline]
    fn raw_score(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let f = self.featurizer;
        self.weights
            .iter()
            .zip(x1.iter().zip(x2))
            .map(|(w, (&a, &b))| w * f.component(a, b))
            .sum()
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let raw = self.raw_score(x1, x2);
        // `raw > 0` also maps -0.0 and NaN to +0.0
        if raw > 0.0 {
            raw
        } else {
            0.0
        }
    }

    /// `max(0, <w, featurize(x1, x2)>)`.
    pub fn predict_score(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x1.len())?;
        check_dim(self.dim(), x2.len())?;
        Ok(self.score_unchecked(x1, x2))
    }

    /// Index of the candidate the scorer retrieves for `query`: minimum score,
    /// then an exact key match, then the earliest position.
    pub(crate) fn best_match<'a, I>(&self, query: &[f64], candidates: I) -> Option<usize>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut best: Option<(usize, f64, bool)> = None;
        for (i, key) in candidates.into_iter().enumerate() {
            let score = self.score_unchecked(query, key);
            let exact = key == query;
            let better = match best {
                None => true,
                Some((_, s, e)) => score < s || (score == s && exact && !e),
            };
            if better {
                best = Some((i, score, exact));
            }
        }
        best.map(|(i, _, _)| i)
    }

    /// Ranking loss `s(query, near)^2 + (1 - s(query, far))^2` and its gradient
    /// with respect to the weights. A clipped score contributes no gradient.
    pub fn ranking_loss(&self, query: &[f64], near: &[f64], far: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), query.len())?;
        check_dim(self.dim(), near.len())?;
        check_dim(self.dim(), far.len())?;
        let mut grad = vec![0.0; self.dim()];
        let mut loss = 0.0;
        for (key, target) in [(near, 0.0), (far, 1.0)] {
            let raw = self.raw_score(query, key);
            let s = if raw > 0.0 { raw } else { 0.0 };
            loss += (s - target) * (s - target);
            if raw > 0.0 {
                let coeff = 2.0 * (s - target);
                for ((g, &a), &b) in grad.iter_mut().zip(query).zip(key) {
                    *g += coeff * self.featurizer.component(a, b);
                }
            }
        }
        Ok((loss, grad))
    }

    /// One ranking-loss step for an observation `(x, y)` about to be inserted
    /// into a leaf holding `candidates` (key, value) pairs.
    pub fn update(&mut self, candidates: &[(&[f64], f64)], x: &[f64], y: f64) -> Result<ScorerUpdate> {
        check_dim(self.dim(), x.len())?;
        if candidates.len() < 2 {
            return Ok(ScorerUpdate::TooFewCandidates);
        }
        for (key, _) in candidates {
            check_dim(self.dim(), key.len())?;
        }
        let best = self
            .best_match(x, candidates.iter().map(|(k, _)| *k))
            .expect("non-empty candidates");
        let mut alt: Option<(usize, f64)> = None;
        for (i, (_, value)) in candidates.iter().enumerate() {
            if i == best {
                continue;
            }
            let err = (y - value).abs();
            if alt.is_none_or(|(_, e)| err < e) {
                alt = Some((i, err));
            }
        }
        let (alt, alt_err) = alt.expect("at least two candidates");
        let best_err = (y - candidates[best].1).abs();

        let (near, far) = if best_err < alt_err {
            (candidates[best].0, candidates[alt].0)
        } else if best_err > alt_err {
            (candidates[alt].0, candidates[best].0)
        } else {
            return Ok(ScorerUpdate::Tie);
        };
        let (loss, grad) = self.ranking_loss(x, near, far)?;
        for (w, g) in self.weights.iter_mut().zip(&grad) {
            *w -= self.eta * g;
        }
        debug_assert!(self.weights.iter().all(|w| w.is_finite()));
        Ok(ScorerUpdate::Stepped { loss })
    }
}
