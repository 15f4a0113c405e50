pub mod tensor;
pub mod tokenizer;
pub mod rng;
pub mod model;
pub mod checkpoint;
pub mod curriculum;
pub mod eval;
pub mod stats;
pub mod report;
pub mod synth;
pub mod experiment;
