use super::{PrerenderError, Result};
use crate::geometry::CameraIntrinsics;
use crate::viewsampler::normalize_azimuth;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Orbit radius for a unit-diagonal scaffold.
pub const DEFAULT_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub theta: f64,
    pub phi: f64,
    pub radius: f64,
    pub look_at: Vec3,
}

/// Orthonormal camera basis in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub right: Vec3,
    pub down: Vec3,
    pub forward: Vec3,
}

impl CameraFrame {
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(&self.right), d.dot(&self.down), d.dot(&self.forward))
    }

    pub fn to_world_dir(&self, c: &Vec3) -> Vec3 {
        self.right * c.x + self.down * c.y + self.forward * c.z
    }
}

impl CameraPose {
    /// Pose looking at the origin; `theta` is wrapped into `[0, 360)`.
    pub fn new(theta: f64, phi: f64, radius: f64) -> Self {
        Self {
            theta: normalize_azimuth(theta),
            phi,
            radius,
            look_at: Vec3::zeros(),
        }
    }

    pub fn with_look_at(mut self, look_at: Vec3) -> Self {
        self.look_at = look_at;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(PrerenderError::InvalidPose(format!("radius {}", self.radius)));
        }
        if !(-90.0..=90.0).contains(&self.phi) || !(0.0..360.0).contains(&self.theta) {
            return Err(PrerenderError::InvalidPose(format!(
                "angles ({}, {}) out of range",
                self.theta, self.phi
            )));
        }
        Ok(())
    }

    /// Unit vector from `look_at` toward the camera.
    pub fn direction(&self) -> Vec3 {
        let (t, p) = (self.theta.to_radians(), self.phi.to_radians());
        Vec3::new(p.cos() * t.cos(), -p.sin(), -p.cos() * t.sin())
    }

    pub fn position(&self) -> Vec3 {
        self.look_at + self.radius * self.direction()
    }

    pub fn frame(&self) -> CameraFrame {
        let forward = -self.direction();
        let t = self.theta.to_radians();
        // Horizontal tangent of the orbit; stays defined at the poles.
        let right = Vec3::new(t.sin(), 0.0, t.cos());
        let down = forward.cross(&right);
        CameraFrame {
            origin: self.position(),
            right,
            down,
            forward,
        }
    }

    /// Unit world-space direction through pixel center `(u, v)`.
    pub fn pixel_ray(&self, k: &CameraIntrinsics, u: f64, v: f64) -> Vec3 {
        let c = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        self.frame().to_world_dir(&c).normalize()
    }
}
