pub mod dse;
pub mod profile;
pub mod report;
pub mod simulate;
pub mod sweep;
pub mod synth;
