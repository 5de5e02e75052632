pub mod cli;
pub mod data;
pub mod detect;
pub mod elm;
pub mod error;
pub mod features;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod selection;
pub mod spectral;
pub mod synth;
