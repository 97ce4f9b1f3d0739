pub mod fit;
pub mod periodic;
pub mod sample;
pub mod simulate;
pub mod size;
pub mod synth;
