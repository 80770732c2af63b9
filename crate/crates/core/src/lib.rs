//! Joint sparse coding of two signal modalities (image intensity and scene
//! depth) over paired dictionaries that share one atom index set.
//!
//! * [`model`]: data types, synthetic instances, coherence and RIP estimates.
//! * [`jbp`]: the joint basis pursuit conic program and its interior-point solver.
//! * [`baselines`]: group lasso over atom pairs and TV inpainting.
//! * [`learning`]: preprocessing, dictionary updates, alternating learning, atom matching.
//! * [`theory`]: the coefficient recovery bound and the cone-constraint check.

pub mod baselines;
pub mod error;
pub mod jbp;
pub mod learning;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use model::{DictionaryPair, GroundTruth, JointCode, Mask, Matrix, SignalPair, Vector};
