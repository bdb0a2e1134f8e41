//! Planar angles and poses.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An angle in radians, always stored in the half-open interval (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Canonicalizes `radians`. Fails on NaN or infinities.
    pub fn new(radians: f64) -> Result<Self> {
        canonicalize_angle(radians)
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    pub fn rotation(self) -> Matrix2<f64> {
        rotation_matrix(self.0)
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        canonicalize_angle(value)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Maps `a` onto (-pi, pi]; the result differs from `a` by a whole number of
/// turns.
pub fn canonicalize_angle(a: f64) -> Result<Angle> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("angle must be finite, got {a}")));
    }
    Ok(Angle(wrap(a)))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a - TAU * ((a - PI) / TAU).ceil();
    // the subtraction above can land one ulp outside the interval
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// `[[cos, -sin], [sin, cos]]`.
pub fn rotation_from_angle(theta: Angle) -> Matrix2<f64> {
    rotation_matrix(theta.0)
}

#[inline]
pub(crate) fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// A 2D pose: heading plus position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub theta: Angle,
    pub t: Vector2<f64>,
}

impl PlanarPose {
    pub const IDENTITY: PlanarPose = PlanarPose {
        theta: Angle::ZERO,
        t: Vector2::new(0.0, 0.0),
    };

    pub fn new(theta: f64, x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "position must be finite, got ({x}, {y})"
            )));
        }
        Ok(Self {
            theta: canonicalize_angle(theta)?,
            t: Vector2::new(x, y),
        })
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        self.theta.rotation()
    }

    /// `self * other`.
    pub fn compose(&self, other: &PlanarPose) -> PlanarPose {
        PlanarPose {
            theta: Angle(wrap(self.theta.0 + other.theta.0)),
            t: self.t + self.rotation() * other.t,
        }
    }

    pub fn inverse(&self) -> PlanarPose {
        let rt = self.rotation().transpose();
        PlanarPose {
            theta: Angle(wrap(-self.theta.0)),
            t: -(rt * self.t),
        }
    }

    /// `self^-1 * other`: `other` expressed in the frame of `self`.
    pub fn between(&self, other: &PlanarPose) -> PlanarPose {
        self.inverse().compose(other)
    }
}
