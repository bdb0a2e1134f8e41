//! Outlier-robust planar pose-graph optimization.
//!
//! Loop closures are screened by two truncated-least-squares problems solved
//! with graduated non-convexity: first an angle-only rotation averaging whose
//! wrap-around ambiguity is removed up front ([`regularization`]), then a
//! translation averaging with the rotations held fixed. Both are linear in
//! their unknowns, so every inner solve of the continuation is a sparse
//! weighted least-squares problem ([`linear`]). The surviving edges feed a
//! coupled Gauss-Newton refinement ([`pipeline`]).
//!
//! ```
//! use planar_gnc::bench::{generate_synthetic, inject_outliers, InjectionSpec, Layout, SyntheticSpec};
//! use planar_gnc::pipeline::{decoupled_robust_pgo, PipelineConfig};
//!
//! let spec = SyntheticSpec::new(Layout::Grid { rows: 6, cols: 6, step: 1.0 }, 0.0, 0.0, 0.3, 1);
//! let (graph, _truth) = generate_synthetic(&spec).unwrap();
//! let (noisy, injected) = inject_outliers(&graph, &InjectionSpec { outlier_rate: 0.2, rng_seed: 3 }).unwrap();
//! let report = decoupled_robust_pgo(&noisy, &PipelineConfig::default()).unwrap();
//! assert!(injected.iter().all(|e| !report.inlier_set.contains(e)));
//! ```

pub mod angle;
pub mod bench;
pub mod error;
pub mod g2o;
pub mod gnc;
pub mod graph;
pub mod linear;
pub mod pipeline;
pub mod regularization;
pub mod trajectory;

pub use angle::{canonicalize_angle, rotation_from_angle, Angle, PlanarPose};
pub use error::{Error, Result};
pub use graph::{EdgeKind, PoseGraph, RelativeMeasurement};
pub use trajectory::TrajectoryEstimate;
