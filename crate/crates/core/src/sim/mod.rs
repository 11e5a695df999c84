//! Deterministic desk-scale self-training simulator.
//!
//! A balanced class tree stands in for the language hierarchy, noisy
//! prototype draws stand in for proposal features, and a per-class sigmoid
//! linear model stands in for the detector. Weak images carry only a coarse
//! ancestor label. Fine-class accuracy on held-out samples is the proxy
//! metric for pseudo-label quality.

mod config;
pub mod model;
pub mod train;
pub mod world;

pub use config::{SimConfig, KEYS as CONFIG_KEYS};
pub use model::ToyModel;
pub use train::{
    compare_methods, fine_accuracy, threshold_sweep, train, train_observed, ImageTargets, Method,
    SimResult, TrainConfig,
};
pub use world::{generate_world, Dataset, Sample, SynthWorld, WeakImage, WorldConfig};
