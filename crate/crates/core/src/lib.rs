//! Text-guided, handle-based triangle mesh deformation.

pub mod deform;
pub mod handles;
pub mod linalg;
pub mod maxflow;
pub mod mesh;
pub mod oracle;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod service;
pub mod shapes;

pub use mesh::{MeshError, MeshFormat, Normalization, TriMesh};
