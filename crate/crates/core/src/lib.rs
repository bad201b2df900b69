pub mod ablation;
pub mod block;
pub mod cli;
pub mod embedding;
pub mod eval;
pub mod io;
pub mod pose;
pub mod synth;

pub use embedding::Embedding;
