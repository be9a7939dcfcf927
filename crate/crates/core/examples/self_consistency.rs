//! Store random memories, then recall each one by its own key.

use emt::{Emt, ScorerConfig, TreeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> emt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = TreeConfig { leaf_capacity: 16, ..TreeConfig::default() };
    let mut tree = Emt::new(10, config, ScorerConfig::default())?;

    let memories: Vec<(Vec<f64>, f64)> = (0..1000)
        .map(|_| ((0..10).map(|_| rng.random()).collect(), rng.random()))
        .collect();
    for (key, value) in &memories {
        tree.learn(key, *value)?;
    }

    let recalled = memories
        .iter()
        .filter(|(key, value)| tree.query(key).ok().flatten().map(|r| r.value) == Some(*value))
        .count();
    println!("recalled {recalled}/{} stored values exactly", memories.len());

    let stats = tree.stats();
    println!(
        "{} memories in {} leaves, {} routers, max depth {}, largest leaf {}",
        stats.memories, stats.leaves, stats.internal_nodes, stats.max_depth, stats.max_leaf_size
    );

    // A nearby but unseen key falls back to the most similar memory.
    let mut probe = memories[0].0.clone();
    probe[0] += 0.01;
    let near = tree.query(&probe)?.expect("tree is not empty");
    println!("perturbed key recalls value {:.4} (original {:.4})", near.value, memories[0].1);
    Ok(())
}
