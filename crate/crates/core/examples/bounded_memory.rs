//! A memory budget with least-recently-used eviction: queried memories
//! survive, untouched ones are evicted first.

use emt::{Emt, ScorerConfig, TreeConfig};

fn main() -> emt::Result<()> {
    let config = TreeConfig { leaf_capacity: 4, memory_budget: Some(3), seed: 0 };
    let mut tree = Emt::new(1, config, ScorerConfig::default())?;
    tree.learn(&[0.1], 1.0)?;
    tree.learn(&[0.2], 2.0)?;
    tree.learn(&[0.3], 3.0)?;

    // Touch the oldest memory so it is no longer the eviction candidate.
    tree.query(&[0.1])?;
    tree.learn(&[0.4], 4.0)?;

    let mut resident: Vec<(f64, u64)> = tree.iter().map(|(_, m)| (m.key.as_slice()[0], m.last_access)).collect();
    resident.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("budget 3, after 4 learns and 1 query:");
    for (key, tick) in resident {
        println!("  key {key:.1}  last access {tick}");
    }

    let oldest = tree.evict_lru()?;
    println!("manual eviction removed key {:.1}", oldest.key.as_slice()[0]);
    Ok(())
}
