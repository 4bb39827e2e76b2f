pub mod colmap;
pub mod fixtures;
pub mod geometry;
pub mod image_io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod nss;
pub mod pipeline;
pub mod pnsg;
pub mod pointwise;
pub mod tensor;
pub mod train;
pub mod viewwise;
