//! Interactive multi-object segmentation with hedgehog shape priors.
//!
//! Each constrained label carries a vector field (by default the normalized
//! gradient of the distance map of its scribble) and an angle `theta`. The
//! label's segment may only have boundary normals within `theta` of the
//! field. The constraint is realized as directed infinite-cost edges and
//! optimized jointly with a Potts segmentation energy by alpha-expansion.

pub mod appearance;
pub mod distance;
pub mod error;
pub mod grid;
pub mod hedgehog;
pub mod io;
pub mod maxflow;
pub mod metrics;
pub mod optimizer;
pub mod synthetic;

pub use error::{Error, Result, Violation};
pub use grid::{Grid, GridImage, LabelId, Labeling, NeighborhoodSystem, ScribbleSet};
