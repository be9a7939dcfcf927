//! Eigen Memory Trees for online learning.
//!
//! An [`Emt`] is an episodic memory: it stores `(key, value)` pairs in the
//! leaves of a binary tree routed by approximate principal components, and
//! answers queries with the stored value of the memory its learned
//! [`Scorer`] ranks most similar. Querying with a key that was inserted
//! returns that key's value.
//!
//! On top of the tree the crate provides contextual-bandit learners
//! ([`bandit`]), a supervised-to-bandit data pipeline ([`datasets`]), and a
//! progressive-validation harness with multi-seed aggregation and Welch
//! significance tests ([`eval`], [`experiment`]).
//!
//! ```
//! use emt::{Emt, ScorerConfig, TreeConfig};
//!
//! let mut tree = Emt::new(2, TreeConfig::default(), ScorerConfig::default())?;
//! tree.learn(&[0.25, 0.5], 1.0)?;
//! tree.learn(&[0.75, 0.0], 0.0)?;
//! assert_eq!(tree.query(&[0.25, 0.5])?.unwrap().value, 1.0);
//! # Ok::<(), emt::Error>(())
//! ```

pub mod bandit;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod rng;
pub mod scorer;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
pub use scorer::{featurize_pair, PairFeaturizer, Scorer, ScorerConfig};
pub use tree::{Emt, Memory, MemoryKey, Recall, Router, Side, TreeConfig};
