pub mod error;
pub mod geometry;

pub use error::{Error, Result};
pub mod image;
pub mod labeling;
pub mod matchfile;
pub mod maxflow;
pub mod metrics;
pub mod multifit;
pub mod segmentation;
pub mod stitch;
pub mod synthscene;
pub mod warping;
