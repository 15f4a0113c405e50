use std::path::Path;

use l2lab::synth::{SynthConfig, SynthLang, SynthWorld};

use crate::error::{CliError, Result};
use crate::files;

#[derive(Debug, Clone, clap::Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Seed of the lexicons and sentences.
    #[arg(long, default_value_t = 2024)]
    pub world_seed: u64,
    #[arg(long, default_value_t = 5000)]
    pub l1_sentences: usize,
    #[arg(long, default_value_t = 2500)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1000)]
    pub suite_pairs: usize,
}

fn jsonl(suite: &l2lab::eval::TestSuite) -> Result<String> {
    let mut out = String::new();
    for p in &suite.pairs {
        let mut v = serde_json::to_value(p).map_err(|e| CliError::runtime(e.to_string()))?;
        if let Some(c) = suite.category {
            v["category"] = serde_json::Value::String(c.to_string());
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Writes the synthetic corpora, L2 suites and a chance suite.
pub fn run(args: &SynthArgs) -> Result<()> {
    let world = SynthWorld::new(SynthConfig::default(), args.world_seed);
    let out = &args.out;
    let lines = |v: Vec<String>| v.join("\n") + "\n";
    files::write(&out.join("l1.txt"), lines(world.mono(SynthLang::L1, args.l1_sentences)))?;
    let (p1, p2) = world.parallel(args.pairs);
    files::write(&out.join("parallel.l1.txt"), lines(p1))?;
    files::write(&out.join("parallel.l2.txt"), lines(p2))?;
    for suite in world.l2_suites(args.suite_pairs) {
        files::write(&out.join("suites").join(format!("{}.jsonl", suite.suite_id)), jsonl(&suite)?)?;
    }
    files::write(
        &out.join("chance").join("chance.jsonl"),
        jsonl(&world.chance_suite(args.suite_pairs, 0))?,
    )?;
    files::write_json(&out.join("lexicon.json"), &(&world.l1, &world.l2))?;
    write_readme(out, args)
}

fn write_readme(out: &Path, args: &SynthArgs) -> Result<()> {
    files::write(
        &out.join("README.md"),
        format!(
            "Generated by `l2lab synth --world-seed {} --l1-sentences {} --pairs {} --suite-pairs {}`.\n",
            args.world_seed, args.l1_sentences, args.pairs, args.suite_pairs
        ),
    )
}
