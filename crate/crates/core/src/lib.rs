//! Strand-based braid reconstruction.
//!
//! A procedural braid made of sinusoidal center curves is fitted to a coarse
//! strand point cloud and a 2D edge image, then used to rebuild the coarse
//! strands into clean, interwoven bunches:
//!
//! 1. [`synth`] generates braid geometry from [`BraidParams`].
//! 2. [`raster`] projects it to edge images and extracts Canny edges.
//! 3. [`losses`] scores a candidate (Chamfer, cross-entropy, depth smoothness).
//! 4. [`fit`] optimizes the parameters with Adam over finite-difference gradients.
//! 5. [`refine`] allocates, snaps, reattaches and smooths the coarse strands.
//!
//! [`io`], [`config`] and [`simulate`] cover file formats, run configuration
//! and synthetic test data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod losses;
pub mod raster;
pub mod refine;
pub mod simulate;
pub mod synth;
pub mod types;

pub use config::RunConfig;
pub use error::{BraidError, Result};
pub use fit::{adjust_radius, fit, fit_from, initialize, FitConfig, FitTrace, Param};
pub use losses::{chamfer, depth_regularizer, projection_bce, LossReport, LossWeights};
pub use raster::{canny, edge_image_synthetic, mask_strands, rasterize_tube, CannyConfig, ProjectionSpec};
pub use refine::{allocate, downsample_smooth, reconstruct_bunch, refine_all, replace_and_attach, Allocation, RefineConfig};
pub use simulate::{simulate_coarse, Simulation};
pub use synth::{centerline_distance, generate, midlines_eq1, BraidParams, SyntheticBraid};
pub use types::{arc_length, validate, GeometryError, GrayImage, MidLineAnnotation, Point2, Point3, Strand, StrandId, StrandSet};
