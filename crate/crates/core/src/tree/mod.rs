//! Gradient-boosted regression tree ensembles and the geometry they induce
//! on the search domain.

pub mod bounds;
pub mod ensemble;
pub mod grid;
pub mod io;
pub mod train;

#[cfg(test)]
pub(crate) mod testing;

pub use bounds::{GriddedEnsemble, DEFAULT_REFINE_BUDGET};
pub use ensemble::{Node, Tree, TreeEnsemble};
pub use grid::{CellBox, DimGrid, IntervalGrid, THRESHOLD_TOLERANCE};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use train::{train, GbrtParams};
