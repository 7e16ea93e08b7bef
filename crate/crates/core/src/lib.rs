//! Point-annotated object detection in 3D volumes.
//!
//! The pipeline runs object centers → voxel labels → voxel classifier →
//! averaged predictions → non-maximum suppression → distance-matched
//! precision/recall. Each stage lives in its own module and works on the
//! shared [`Volume3`] and [`PointSet`] types.

pub mod classifier;
pub mod error;
pub mod eval;
pub mod io;
pub mod labeling;
mod par;
pub mod pipeline;
pub mod points;
pub mod postproc;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
pub use points::{Point, PointSet};
pub use volume::{euclidean_distance, Coordinate, Dims, Volume3};
