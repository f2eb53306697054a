pub mod analysis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod neuro;
pub mod pipeline;
pub mod prosody;
pub mod signal_io;
pub mod vawgan;
