//! Training primitives for studying layer rotation: the cosine distance each
//! layer's weights travel from their initialization.
//!
//! - [`tensor`]: dense `f64` arrays, products, norms, seeded randomness.
//! - [`nn`]: MLP forward/backward with softmax cross-entropy.
//! - [`optim`]: SGD, SGD with Adam-style momentum, Adam, RMSProp, Adagrad.
//! - [`layca`]: Layca and LARS update transforms.
//! - [`schedules`]: global rate decay/warmup and depth multipliers.
//! - [`rotation`]: rotation curves, per-step angles and replay.

pub mod layca;
pub mod nn;
pub mod optim;
pub mod rotation;
pub mod schedules;
pub mod tensor;

pub use layca::{LaycaConfig, LaycaVariant};
pub use nn::{Activation, GradientSet, LayerState, Mlp, ModelSpec};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, StepUpdate};
pub use rotation::{ReplaySchedule, RotationRecord};
pub use schedules::ScheduleConfig;
pub use tensor::{Dense, SeededRng};
