//! Static identification of the system calls an x86-64 ELF program can make.
//!
//! The pipeline: [`loader`] parses the ELF image, [`cfg`] recovers the
//! control-flow graph (with the active-addresses-taken fixpoint for indirect
//! calls), [`syscall_id`] resolves each `syscall` site with directed
//! symbolic execution ([`symexec`]) over lifted micro-ops ([`lifter`]),
//! [`iface`] links executables against per-library interfaces, [`phases`]
//! builds the phase automaton and [`report`] emits filter profiles.
//! [`pipeline`] strings it all together.

pub mod cfg;
pub mod decoder;
pub mod fixtures;
pub mod graph;
pub mod iface;
pub mod lifter;
pub mod loader;
pub mod phases;
pub mod pipeline;
pub mod report;
pub mod symexec;
pub mod syscall_id;

pub use pipeline::{analyze_program, AnalysisConfig, ProgramAnalysis};
