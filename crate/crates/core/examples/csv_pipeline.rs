//! The full file-based pipeline: export a CSV, diagnose it, then run a
//! seeded experiment that writes JSON-lines records.

use emt::datasets::LabelColumn;
use emt::experiment::{cmd_diagnose, cmd_run, ExperimentConfig, LearnerKind};
use emt::synth::recurring_contexts;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emt::Result<()> {
    let dir = std::env::temp_dir().join("emt-csv-pipeline");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("repeat.csv");
    recurring_contexts(40, 4, 3, 1500, &mut ChaCha8Rng::seed_from_u64(5))?.write_csv(&path)?;

    let mut stdout = std::io::stdout().lock();
    cmd_diagnose(&path, &LabelColumn::Name("label".into()), true, &mut stdout)?;

    let config = ExperimentConfig {
        seeds: 3,
        take: 1000,
        ..ExperimentConfig::new(vec![path], "label", vec![LearnerKind::Emt, LearnerKind::Pemt])
    };
    let mut records = Vec::new();
    let cells = cmd_run(&config, &mut records)?;
    println!("{} JSON-lines records written", records.iter().filter(|&&b| b == b'\n').count());
    for cell in cells {
        let finals: Vec<String> = cell.runs.iter().map(|r| format!("{:.3}", r.final_reward)).collect();
        println!("{:<5} finals by seed: {}", cell.learner.name(), finals.join(", "));
    }
    Ok(())
}
