//! Language-embedding registration for 3D Gaussian scenes.
//!
//! The crate covers the full pipeline: CPU alpha compositing ([`raster`]),
//! Top-k feature registration onto splats ([`registration`]), product
//! quantization with lookup-table scoring ([`pq`]), text-query style
//! inference ([`query`]), a volume-aware evaluation protocol with a voxel
//! oracle ([`eval`]), and synthetic data generators plus binary file formats
//! used by the command-line driver ([`synth`], [`io`], [`bench`]).

pub mod bench;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod io;
pub mod pq;
pub mod query;
pub mod raster;
pub mod registration;
pub mod synth;

pub use error::{Error, Result};
pub use gaussian::{build_covariance, Camera, Gaussian3D, Label, Scene};
pub use raster::{
    composite_pixel, effective_alpha, project_gaussian, topk_select, PixelComposite, PreparedView,
    Projected2D, RasterConfig, RayContribution,
};
