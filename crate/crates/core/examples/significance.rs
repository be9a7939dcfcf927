//! Multi-seed runs of two learners, aggregated with standard errors and
//! compared with Welch's t-test.

use emt::datasets::BanditEnv;
use emt::eval::{aggregate, run, welch_test, RunConfig, RunResult};
use emt::experiment::{build_learner, LearnerKind, LearnerSettings};
use emt::synth::recurring_contexts;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn runs(kind: LearnerKind) -> emt::Result<Vec<RunResult>> {
    (0..10)
        .map(|seed| {
            let data = recurring_contexts(50, 5, 5, 2000, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let mut learner = build_learner(kind, &LearnerSettings::default(), data.dim(), data.classes(), seed)?;
            run(learner.as_mut(), &mut BanditEnv::new(data), &RunConfig::new(2000, seed))
        })
        .collect()
}

fn main() -> emt::Result<()> {
    let emt_runs = runs(LearnerKind::Emt)?;
    let par_runs = runs(LearnerKind::Parametric)?;
    for (name, rs) in [("emt", &emt_runs), ("parametric", &par_runs)] {
        let agg = aggregate(rs)?;
        println!("{name:<11} final {:.4} ± {:.4} over {} seeds", agg.final_mean, agg.final_stderr, agg.seeds);
    }
    let finals = |rs: &[RunResult]| rs.iter().map(|r| r.final_reward).collect::<Vec<_>>();
    let w = welch_test(&finals(&emt_runs), &finals(&par_runs), 0.05)?;
    println!(
        "welch t = {:.3}, df = {:.1}, p = {:.2e}, winner {:?}",
        w.t_statistic, w.degrees_of_freedom, w.p_value, w.winner
    );
    Ok(())
}
