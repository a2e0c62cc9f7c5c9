//! Vehicle presence detection on lane blocks of grayscale traffic video.
//!
//! Each lane is cut into rectangular blocks. Every block of every frame is
//! reduced to eight texture statistics, a two-component Gaussian mixture
//! learned without labels separates "lane" from "vehicle", and the per-lane
//! occupancy bitmap yields the queue length at the stop line. The mixture is
//! seeded with K-means and batch EM and then tracks slow appearance changes
//! with online EM.

pub mod classifier;
pub mod clustering;
pub mod features;
pub mod geometry;
pub mod gmm;
pub mod pipeline;

pub use classifier::{assign_class_tags, classify, discriminant, posterior, ClassDecision, Label};
pub use clustering::{kmeans, KmeansParams, KmeansResult};
pub use features::{extract_features, fisher_score, FeatureParams, FeatureVector, Patch};
pub use geometry::{parse_lane_config, rasterize_blocks, BlockRect, LaneLayout, StopLineEnd};
pub use gmm::{fit_em, online_update, ClassTag, EmOptions, GaussianComponent, GmmModel};
pub use pipeline::{Detector, DetectorConfig, Frame, TrafficStatusReport};
