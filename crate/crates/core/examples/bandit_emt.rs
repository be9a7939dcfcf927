//! EMT-CB on a stream of recurring contexts, reporting progressive reward.

use emt::bandit::{EmtCb, EpsilonGreedy};
use emt::datasets::BanditEnv;
use emt::eval::{run, RunConfig};
use emt::rng::{derive, Stream};
use emt::synth::recurring_contexts;
use emt::{ScorerConfig, TreeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emt::Result<()> {
    let seed = 1;
    let data = recurring_contexts(50, 5, 5, 4000, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let policy = EpsilonGreedy::new(0.1, derive(seed, Stream::Exploration))?;
    let mut learner = EmtCb::new(data.dim(), data.classes(), TreeConfig::default(), ScorerConfig::default(), policy)?;

    let mut env = BanditEnv::new(data);
    let result = run(&mut learner, &mut env, &RunConfig::new(4000, seed).with_stride(500))?;
    for c in &result.checkpoints {
        println!("t = {:>4}  progressive reward {:.4}", c.t, c.progressive_reward);
    }
    println!(
        "explored {} of {} decisions; tree holds {} memories",
        learner.policy().explored(),
        learner.policy().decisions(),
        learner.tree().len()
    );
    Ok(())
}
