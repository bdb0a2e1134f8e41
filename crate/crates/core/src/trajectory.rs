use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::angle::{canonicalize_angle, wrap, Angle, PlanarPose};
use crate::error::{Error, Result};

/// Per-vertex poses expressed in the gauge where vertex 0 is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    poses: Vec<PlanarPose>,
}

impl TrajectoryEstimate {
    /// Fails unless the first pose is the identity (to 1e-12).
    pub fn new(poses: Vec<PlanarPose>) -> Result<Self> {
        match poses.first() {
            None => Err(Error::InvalidArgument("trajectory has no poses".into())),
            Some(p0) if p0.theta.radians().abs() > 1e-12 || p0.t.norm() > 1e-12 => Err(
                Error::InvalidArgument("first pose of an estimate must be the identity".into()),
            ),
            Some(_) => Ok(Self { poses }),
        }
    }

    /// Re-expresses arbitrary poses relative to the first one.
    pub fn anchored(poses: &[PlanarPose]) -> Result<Self> {
        let first = poses
            .first()
            .ok_or_else(|| Error::InvalidArgument("trajectory has no poses".into()))?;
        let inv = first.inverse();
        let mut out: Vec<PlanarPose> = poses.iter().map(|p| inv.compose(p)).collect();
        out[0] = PlanarPose::IDENTITY;
        Ok(Self { poses: out })
    }

    /// Builds an estimate from possibly unwrapped angles and positions
    /// already expressed in the anchored gauge.
    pub fn from_parts(theta: &[f64], t: &[Vector2<f64>]) -> Result<Self> {
        if theta.len() != t.len() {
            return Err(Error::InvalidArgument(format!(
                "{} angles but {} positions",
                theta.len(),
                t.len()
            )));
        }
        let poses = theta
            .iter()
            .zip(t)
            .map(|(&th, &p)| {
                Ok(PlanarPose {
                    theta: canonicalize_angle(th)?,
                    t: p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[PlanarPose] {
        &self.poses
    }

    pub fn pose(&self, i: usize) -> &PlanarPose {
        &self.poses[i]
    }

    pub fn angles(&self) -> Vec<Angle> {
        self.poses.iter().map(|p| p.theta).collect()
    }

    pub fn positions(&self) -> Vec<Vector2<f64>> {
        self.poses.iter().map(|p| p.t).collect()
    }

    /// Largest per-vertex difference (angle on the circle, or position
    /// coordinate) between two estimates.
    pub fn max_difference(&self, other: &TrajectoryEstimate) -> f64 {
        self.poses
            .iter()
            .zip(&other.poses)
            .map(|(a, b)| {
                let dth = wrap(a.theta.radians() - b.theta.radians()).abs();
                dth.max((a.t - b.t).amax())
            })
            .fold(0.0, f64::max)
    }
}
