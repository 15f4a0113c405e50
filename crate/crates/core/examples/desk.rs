//! Runs the desk-scale recipe for a few seeds and prints both overall scores.

use std::time::Instant;

use l2lab::experiment::{run_desk, DeskRecipe};

fn main() {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0, 1, 2, 3] } else { seeds };
    let recipe = DeskRecipe::default();
    for seed in seeds {
        let t = Instant::now();
        let run = run_desk(&recipe, seed).expect("desk run");
        let last = |log: &[l2lab::curriculum::MetricRow]| {
            log.iter().filter(|r| r.split.as_str() == "dev").last().map(|r| r.loss).unwrap_or(f64::NAN)
        };
        println!(
            "seed {seed}: pretrained {:.1} scratch {:.1} | l1 dev {:.3} l2 dev {:.3}/{:.3} | {:.1}s",
            run.pretrained.overall,
            run.scratch.overall,
            last(&run.l1_log),
            last(&run.pretrained_log),
            last(&run.scratch_log),
            t.elapsed().as_secs_f64()
        );
        for (a, b) in run.pretrained.suites.iter().zip(&run.scratch.suites) {
            println!("  {:<28} {:5.1} {:5.1}", a.suite_id, a.accuracy, b.accuracy);
        }
    }
}
