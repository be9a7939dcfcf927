//! Parametric, memory and stacked learners side by side on two streams:
//! one where contexts repeat exactly and one with a linear decision rule.

use emt::datasets::{BanditEnv, SupervisedDataset};
use emt::eval::{run, RunConfig};
use emt::experiment::{build_learner, LearnerKind, LearnerSettings};
use emt::synth::{linear_classes, recurring_contexts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_final(kind: LearnerKind, make: &dyn Fn(u64) -> emt::Result<SupervisedDataset>) -> emt::Result<f64> {
    let seeds = 5;
    let mut total = 0.0;
    for seed in 0..seeds {
        let data = make(seed)?;
        let horizon = data.len();
        let mut learner = build_learner(kind, &LearnerSettings::default(), data.dim(), data.classes(), seed)?;
        total += run(learner.as_mut(), &mut BanditEnv::new(data), &RunConfig::new(horizon, seed))?.final_reward;
    }
    Ok(total / seeds as f64)
}

fn main() -> emt::Result<()> {
    let repeat = |s: u64| recurring_contexts(50, 5, 5, 4000, &mut ChaCha8Rng::seed_from_u64(100 + s));
    let linear = |s: u64| linear_classes(10, 2, 4000, &mut ChaCha8Rng::seed_from_u64(200 + s));
    println!("{:<12} {:>8} {:>8}", "learner", "repeat", "linear");
    for kind in [LearnerKind::Parametric, LearnerKind::Emt, LearnerKind::Pemt] {
        println!("{:<12} {:>8.4} {:>8.4}", kind.name(), mean_final(kind, &repeat)?, mean_final(kind, &linear)?);
    }
    Ok(())
}
