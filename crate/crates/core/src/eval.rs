//! Progressive validation, multi-seed aggregation and significance testing.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bandit::Learner;
use crate::datasets::BanditEnv;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub horizon: usize,
    pub seed: u64,
    pub stride: usize,
}

impl RunConfig {
    /// Uses the default checkpoint stride of `horizon / 100`, at least 1.
    pub fn new(horizon: usize, seed: u64) -> Self {
        RunConfig {
            horizon,
            seed,
            stride: (horizon / 100).max(1),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("checkpoint stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: usize,
    pub progressive_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub final_reward: f64,
    /// Rounds actually played; less than the horizon when truncated.
    pub rounds: usize,
    pub truncated: bool,
}

/// Plays up to `cfg.horizon` rounds: predict, observe the chosen action's
/// reward, learn. The progressive reward at `t` is the mean of the first `t`
/// observed rewards; it is recorded every `cfg.stride` rounds and at the end.
pub fn run(learner: &mut dyn Learner, env: &mut BanditEnv, cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    if env.actions() != learner.actions() {
        return Err(Error::InvalidConfig(format!(
            "environment has {} actions, learner has {}",
            env.actions(),
            learner.actions()
        )));
    }
    let mut total = 0.0;
    let mut t = 0;
    let mut checkpoints = Vec::with_capacity(cfg.horizon / cfg.stride + 1);
    while t < cfg.horizon {
        let Some(round) = env.step() else { break };
        let action = learner.predict(round.context)?;
        let reward = round.reward(action);
        learner.learn(round.context, action, reward)?;
        total += reward;
        t += 1;
        if t % cfg.stride == 0 || t == cfg.horizon {
            checkpoints.push(Checkpoint {
                t,
                progressive_reward: total / t as f64,
            });
        }
    }
    let truncated = t < cfg.horizon;
    if truncated {
        log::warn!("environment exhausted after {t} of {} rounds", cfg.horizon);
        if t > 0 && checkpoints.last().map(|c| c.t) != Some(t) {
            checkpoints.push(Checkpoint {
                t,
                progressive_reward: total / t as f64,
            });
        }
    }
    Ok(RunResult {
        seed: cfg.seed,
        final_reward: if t > 0 { total / t as f64 } else { 0.0 },
        checkpoints,
        rounds: t,
        truncated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AggregatePoint {
    pub t: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub points: Vec<AggregatePoint>,
    pub final_mean: f64,
    pub final_stderr: f64,
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_variance(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Per-checkpoint mean and standard error across seeds. Results are sorted
/// by seed first so the input order never changes the sums.
pub fn aggregate(results: &[RunResult]) -> Result<Aggregate> {
    if results.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: results.len(),
        });
    }
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let grid: Vec<usize> = sorted[0].checkpoints.iter().map(|c| c.t).collect();
    if sorted
        .iter()
        .any(|r| !r.checkpoints.iter().map(|c| c.t).eq(grid.iter().copied()))
    {
        return Err(Error::MismatchedCheckpoints);
    }
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let xs: Vec<f64> = sorted.iter().map(|r| r.checkpoints[i].progressive_reward).collect();
            let (mean, stderr) = mean_stderr(&xs);
            AggregatePoint { t, mean, stderr }
        })
        .collect();
    let finals: Vec<f64> = sorted.iter().map(|r| r.final_reward).collect();
    let (final_mean, final_stderr) = mean_stderr(&finals);
    Ok(Aggregate {
        seeds: sorted.len(),
        points,
        final_mean,
        final_stderr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignificanceOutcome {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub winner: Winner,
}

/// Welch's two-sided unequal-variance t-test. The larger-mean side wins iff
/// `p < alpha`.
pub fn welch_test(a: &[f64], b: &[f64], alpha: f64) -> Result<SignificanceOutcome> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: xs.len(),
            });
        }
        crate::error::check_finite(xs, "significance sample")?;
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let (qa, qb) = (sample_variance(a, mean_a) / na, sample_variance(b, mean_b) / nb);
    let se2 = qa + qb;

    let (t_statistic, degrees_of_freedom, p_value) = if se2 == 0.0 {
        if mean_a == mean_b {
            (0.0, f64::NAN, 1.0)
        } else {
            let t = if mean_a > mean_b { f64::INFINITY } else { f64::NEG_INFINITY };
            (t, f64::INFINITY, 0.0)
        }
    } else {
        let t = (mean_a - mean_b) / se2.sqrt();
        let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidConfig(format!("t distribution: {e}")))?;
        let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
        (t, df, p)
    };
    let winner = if p_value < alpha {
        if mean_a > mean_b {
            Winner::A
        } else {
            Winner::B
        }
    } else {
        Winner::Tie
    };
    Ok(SignificanceOutcome {
        mean_a,
        mean_b,
        t_statistic,
        degrees_of_freedom,
        p_value,
        winner,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::datasets::{Example, SupervisedDataset};
    use proptest::prelude::*;

    /// Two-sided Student-t p-value by quadrature. With `x = sqrt(df) tan(theta)`
    /// the density is proportional to `cos(theta)^(df - 1)` on `(-pi/2, pi/2)`.
    pub(crate) fn t_two_sided_oracle(t: f64, df: f64) -> f64 {
        fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            s * h / 3.0
        }
        let g = |th: f64| th.cos().max(0.0).powf(df - 1.0);
        let upper = (t.abs() / df.sqrt()).atan();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let tail = simpson(g, upper, half_pi, 200_000);
        let whole = simpson(g, 0.0, half_pi, 200_000);
        tail / whole
    }

    /// Plays a fixed action; handy for exercising the runner.
    struct Constant(usize, usize);

    impl Learner for Constant {
        fn actions(&self) -> usize {
            self.1
        }
        fn predict(&mut self, _: &[f64]) -> Result<usize> {
            Ok(self.0)
        }
        fn learn(&mut self, _: &[f64], _: usize, _: f64) -> Result<()> {
            Ok(())
        }
    }

    fn env_with_labels(labels: &[usize]) -> BanditEnv {
        let examples = labels
            .iter()
            .map(|&label| Example { features: vec![0.0], label })
            .collect();
        BanditEnv::new(SupervisedDataset::new(examples, 2).unwrap())
    }

    fn result(seed: u64, finals: &[(usize, f64)]) -> RunResult {
        RunResult {
            seed,
            checkpoints: finals
                .iter()
                .map(|&(t, progressive_reward)| Checkpoint { t, progressive_reward })
                .collect(),
            final_reward: finals.last().unwrap().1,
            rounds: finals.last().unwrap().0,
            truncated: false,
        }
    }

    #[test]
    fn progressive_reward_examples() {
        let mut env = env_with_labels(&[1, 0, 1, 1]);
        let r = run(&mut Constant(1, 2), &mut env, &RunConfig::new(4, 0)).unwrap();
        assert_eq!(r.final_reward, 0.75);
        assert_eq!(
            r.checkpoints.iter().map(|c| c.progressive_reward).collect::<Vec<_>>(),
            vec![1.0, 0.5, 2.0 / 3.0, 0.75]
        );
        let mut env = env_with_labels(&[1; 250]);
        let r = run(&mut Constant(1, 2), &mut env, &RunConfig::new(250, 0)).unwrap();
        assert!(r.checkpoints.iter().all(|c| c.progressive_reward == 1.0));
        assert_eq!(r.checkpoints.len(), 125);
        assert_eq!(r.checkpoints.last().unwrap().t, 250);
    }

    #[test]
    fn truncated_run_is_flagged() {
        let mut env = env_with_labels(&[1, 0, 1]);
        let r = run(&mut Constant(1, 2), &mut env, &RunConfig::new(10, 0).with_stride(2)).unwrap();
        assert!(r.truncated);
        assert_eq!(r.rounds, 3);
        assert_eq!(r.checkpoints.last().unwrap().t, 3);
        assert!(run(&mut Constant(0, 3), &mut env_with_labels(&[0]), &RunConfig::new(1, 0)).is_err());
        assert!(RunConfig::new(0, 0).validate().is_err());
        assert!(RunConfig::new(5, 0).with_stride(0).validate().is_err());
    }

    #[test]
    fn aggregate_examples() {
        let agg = aggregate(&[result(0, &[(1, 0.5)]), result(1, &[(1, 0.7)])]).unwrap();
        assert!((agg.final_mean - 0.6).abs() < 1e-12);
        assert!((agg.final_stderr - 0.1).abs() < 1e-12);
        let same = aggregate(&[result(0, &[(1, 0.4)]), result(1, &[(1, 0.4)])]).unwrap();
        assert_eq!(same.final_stderr, 0.0);
        assert!(matches!(aggregate(&[result(0, &[(1, 0.4)])]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(
            aggregate(&[result(0, &[(1, 0.4)]), result(1, &[(2, 0.4)])]),
            Err(Error::MismatchedCheckpoints)
        ));
    }

    #[test]
    fn aggregate_ignores_order() {
        let rs = vec![result(2, &[(1, 0.1)]), result(0, &[(1, 0.3)]), result(1, &[(1, 0.7)])];
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(aggregate(&rs).unwrap(), aggregate(&rev).unwrap());
    }

    #[test]
    fn welch_examples() {
        let a = [0.5, 0.6, 0.7];
        let tie = welch_test(&a, &a, 0.05).unwrap();
        assert_eq!((tie.t_statistic, tie.winner), (0.0, Winner::Tie));
        assert_eq!(tie.p_value, 1.0);

        let hi = [1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1.0];
        let lo = [0.0, 1e-9, 0.0, -1e-9];
        let sep = welch_test(&hi, &lo, 0.05).unwrap();
        assert_eq!(sep.winner, Winner::A);
        assert!(sep.p_value < 1e-6);

        let b: Vec<f64> = a.iter().map(|x| x + 0.001).collect();
        let w = welch_test(&a, &b, 0.05).unwrap();
        let oracle = t_two_sided_oracle(w.t_statistic, w.degrees_of_freedom);
        assert!((w.p_value - oracle).abs() < 1e-6, "{} vs {oracle}", w.p_value);
        assert_eq!(w.winner, Winner::Tie);

        let flat = welch_test(&[0.3, 0.3], &[0.3, 0.3], 0.05).unwrap();
        assert_eq!((flat.p_value, flat.winner), (1.0, Winner::Tie));
        let flat = welch_test(&[0.3, 0.3], &[0.2, 0.2], 0.05).unwrap();
        assert_eq!((flat.p_value, flat.winner), (0.0, Winner::A));
        assert!(welch_test(&[0.3], &[0.2, 0.2], 0.05).is_err());
    }

    #[test]
    fn welch_matches_oracle_on_varied_samples() {
        let cases: [(&[f64], &[f64]); 3] = [
            (&[0.61, 0.64, 0.59, 0.70, 0.66], &[0.55, 0.60, 0.58, 0.57]),
            (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[2.5, 2.9, 3.1]),
            (&[0.2, 0.9], &[0.4, 0.45, 0.5, 0.55, 0.6, 0.65]),
        ];
        for (a, b) in cases {
            let w = welch_test(a, b, 0.05).unwrap();
            let oracle = t_two_sided_oracle(w.t_statistic, w.degrees_of_freedom);
            assert!((w.p_value - oracle).abs() < 1e-6, "{} vs {oracle}", w.p_value);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn welch_is_symmetric(
            a in prop::collection::vec(0.0f64..1.0, 2..12),
            b in prop::collection::vec(0.0f64..1.0, 2..12),
        ) {
            let ab = welch_test(&a, &b, 0.05).unwrap();
            let ba = welch_test(&b, &a, 0.05).unwrap();
            prop_assert_eq!(ab.t_statistic, -ba.t_statistic);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn trace_is_stride_invariant(labels in prop::collection::vec(0usize..2, 1..200), s1 in 1usize..20, s2 in 1usize..20) {
            let n = labels.len();
            let a = run(&mut Constant(1, 2), &mut env_with_labels(&labels), &RunConfig::new(n, 0).with_stride(s1)).unwrap();
            let b = run(&mut Constant(1, 2), &mut env_with_labels(&labels), &RunConfig::new(n, 0).with_stride(s2)).unwrap();
            for ca in &a.checkpoints {
                if let Some(cb) = b.checkpoints.iter().find(|c| c.t == ca.t) {
                    prop_assert_eq!(ca.progressive_reward, cb.progressive_reward);
                }
            }
            prop_assert_eq!(a.final_reward, b.final_reward);
        }
    }
}
