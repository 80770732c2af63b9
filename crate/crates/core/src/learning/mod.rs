//! Intensity-depth dictionary learning: preprocessing, patch sampling,
//! alternating sparse inference and dictionary updates, and evaluation of
//! learned atoms against a planted pair.

mod learn;
mod matching;
mod patches;
mod update;
mod whiten;

pub use learn::{
    learn, learn_from, sparse_codes, Codes, Inference, IterationRecord, LearnConfig, LearnHistory, TrainingSet,
};
pub use matching::{match_atoms, AtomMatch};
pub use patches::{sample_patches, PatchBatch};
pub use update::{update_dictionaries, update_modality, CgOptions};
pub use whiten::{radial_power, whiten, WhiteningFilter};
