//! Keyframe poses and trajectories.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{data_err, Result};

/// Sensor pose in the map frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub timestamp: f64,
}

impl Pose {
    /// Builds a pose from a raw `(w, x, y, z)` quaternion, which must already be unit length.
    pub fn new(position: Vector3<f64>, q: Quaternion<f64>, timestamp: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) || !timestamp.is_finite() {
            return data_err("non-finite pose");
        }
        if (q.norm() - 1.0).abs() > 1e-9 {
            return data_err(format!("quaternion norm {} is not 1", q.norm()));
        }
        Ok(Pose {
            position,
            orientation: UnitQuaternion::new_unchecked(q),
            timestamp,
        })
    }

    pub fn from_yaw(position: Vector3<f64>, yaw: f64, timestamp: f64) -> Self {
        Pose {
            position,
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            timestamp,
        }
    }

    /// Rotation about +z, in radians.
    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    /// Map-frame point expressed in the sensor frame.
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }
}

/// Time-ordered sequence of poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        for w in poses.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return data_err(format!(
                    "timestamps must strictly increase ({} then {})",
                    w[0].timestamp, w[1].timestamp
                ));
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn into_poses(self) -> Vec<Pose> {
        self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Largest distance between consecutive positions.
    pub fn max_step(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance(&w[1])).fold(0.0, f64::max)
    }

    /// Total path length.
    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_quaternion() {
        let q = Quaternion::new(1.0, 0.1, 0.0, 0.0);
        assert!(Pose::new(Vector3::zeros(), q, 0.0).is_err());
        assert!(Pose::new(Vector3::zeros(), Quaternion::identity(), 0.0).is_ok());
    }

    #[test]
    fn rejects_unordered_timestamps() {
        let p = |t| Pose::from_yaw(Vector3::zeros(), 0.0, t);
        assert!(Trajectory::new(vec![p(0.0), p(1.0)]).is_ok());
        assert!(Trajectory::new(vec![p(1.0), p(1.0)]).is_err());
    }

    #[test]
    fn local_frame_undoes_yaw() {
        let pose = Pose::from_yaw(Vector3::new(1.0, 2.0, 0.0), std::f64::consts::FRAC_PI_2, 0.0);
        let local = pose.to_local(&Vector3::new(1.0, 5.0, 0.0));
        assert!((local - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
    }
}
