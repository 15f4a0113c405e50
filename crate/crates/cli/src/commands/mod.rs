pub mod eval;
pub mod recipe;
pub mod report;
pub mod stats;
pub mod synth;
pub mod tokenize;
pub mod train;
