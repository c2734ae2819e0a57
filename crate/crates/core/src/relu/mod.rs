//! Explicit ReLU constructions with exact width/depth/size accounting.

mod construct;
mod network;

pub use construct::{
    build_clipper, build_identity, build_time_approximant, build_time_pou, build_time_skeleton, max_error_1d,
    max_slope_1d, trapezoid,
};
pub use network::{write_stats_csv, Layer, NetworkStats, ReluNetwork};
