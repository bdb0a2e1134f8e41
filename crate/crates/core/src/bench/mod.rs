//! Synthetic pose graphs, outlier injection and trajectory metrics.

mod inject;
mod metrics;
mod synthetic;

pub use inject::{dead_reckoning, inject_outliers, InjectionSpec};
pub use metrics::{compute_are, compute_ate, outlier_detection_scores, MetricsReport};
pub use synthetic::{generate_synthetic, Layout, SyntheticSpec, NOMINAL_SIGMA};
