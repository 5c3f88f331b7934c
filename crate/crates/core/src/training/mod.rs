//! Supervised end-to-end training and self-supervised instance adaptation.

mod adam;
mod adapt;
mod dataset;
mod group;
mod supervised;

pub use adam::{adam_step, AdamState};
pub use adapt::{adapt_instance, adaptation_objective, AdaptConfig, AdaptResult, AdaptationObjective};
pub use dataset::{DataItem, Dataset};
pub use group::{rotate90, rotate90_values, shift_angles, shift_angles_values};
pub use supervised::{evaluate, supervised_loss, train, LossRecord, TrainConfig, TrainResult};
