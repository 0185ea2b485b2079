//! Geometry helpers: polar/Cartesian conversion and inter-row gradients.
//!
//! The sensor sits at the origin of a right-handed frame with z up; the
//! ideal ground plane is `z = -sensor_height`. Azimuth rotates around z,
//! elevation is measured from the horizontal plane.

use crate::model::PolarDepth;
use crate::scalar::Scalar;
use thiserror::Error;

/// Cartesian position of a valid measurement, meters, sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> CartesianPoint<T> {
    /// Distance to the sensor origin.
    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Horizontal distance to the sensor axis.
    pub fn ground_distance(&self) -> T {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("invalid measurement has no Cartesian position")]
    InvalidMeasurement,
}

/// Converts a valid polar measurement to Cartesian coordinates.
pub fn polar_to_cartesian<T: Scalar>(
    d: &PolarDepth<T>,
) -> Result<CartesianPoint<T>, ProjectionError> {
    let r = d.range.ok_or(ProjectionError::InvalidMeasurement)?;
    let (ce, se) = (d.elevation.cos(), d.elevation.sin());
    let (ca, sa) = (d.azimuth.cos(), d.azimuth.sin());
    Ok(CartesianPoint { x: r * ce * ca, y: r * ce * sa, z: r * se })
}

/// Horizontal ground distance `sqrt(x^2 + y^2)` of a valid measurement.
pub fn ground_distance<T: Scalar>(d: &PolarDepth<T>) -> Option<T> {
    d.range.map(|r| r * d.elevation.cos())
}

/// Height of a valid measurement above the sensor's horizontal plane.
pub fn height<T: Scalar>(d: &PolarDepth<T>) -> Option<T> {
    d.range.map(|r| r * d.elevation.sin())
}

/// Vertical surface gradient between two measurements, oriented from the
/// lower measurement to the upper one.
///
/// Returns the two-argument arctangent of the height difference over the
/// horizontal-distance difference, both taken `to - from`. Flat ground gives
/// 0, a vertical face gives pi/2, and overhangs (the upper point closer
/// than the lower one) exceed pi/2 in magnitude. `None` when either
/// measurement is invalid or when both differences are exactly zero.
pub fn gradient<T: Scalar>(from: &PolarDepth<T>, to: &PolarDepth<T>) -> Option<T> {
    let (rf, rt) = (from.range?, to.range?);
    let dz = rt * to.elevation.sin() - rf * from.elevation.sin();
    let dg = rt * to.elevation.cos() - rf * from.elevation.cos();
    if dz == T::zero() && dg == T::zero() {
        return None;
    }
    Some(dz.atan2(dg))
}
