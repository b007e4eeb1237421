//! Constant-curvature deployment kinematics.
//!
//! Base frame: origin at the distal opening of the straight outer tube, `z`
//! along the insertion axis, and the guide bending in the `x`-`z` plane when
//! the axial rotation is zero. The exposed part of the pre-curved guide is a
//! circular arc of the guide's radius; the cutter is a rigid straight
//! extension along the tip tangent.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// A pre-curved superelastic guide tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringGuide {
    pub name: String,
    pub curve_radius_mm: f64,
    /// Maximum insertion arc length.
    pub deployable_length_mm: f64,
}

impl SteeringGuide {
    pub fn new(name: impl Into<String>, curve_radius_mm: f64, deployable_length_mm: f64) -> Result<Self> {
        let guide = Self { name: name.into(), curve_radius_mm, deployable_length_mm };
        guide.validate()?;
        Ok(guide)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.curve_radius_mm.is_finite() && self.curve_radius_mm > 0.0) {
            return Err(Error::Domain(format!("guide curve radius must be positive, got {}", self.curve_radius_mm)));
        }
        if !(self.deployable_length_mm.is_finite() && self.deployable_length_mm > 0.0) {
            return Err(Error::Domain(format!(
                "guide deployable length must be positive, got {}",
                self.deployable_length_mm
            )));
        }
        if self.deployable_length_mm / self.curve_radius_mm > TAU {
            return Err(Error::Domain(format!(
                "guide arc of {} mm on radius {} mm overlaps itself",
                self.deployable_length_mm, self.curve_radius_mm
            )));
        }
        Ok(())
    }

    pub fn curvature(&self) -> f64 {
        1.0 / self.curve_radius_mm
    }
}

/// Ball-nose cutter carried on a flexible torque coil.
///
/// Only the cutter diameter and length take part in geometry; the shank,
/// coil and spindle speed are carried for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrillTool {
    pub cutter_diameter_mm: f64,
    /// Rigid extension beyond the guide tip, hemispherical cap included.
    pub cutter_length_mm: f64,
    pub shank_length_mm: f64,
    pub shank_diameter_mm: f64,
    pub torque_coil_length_mm: f64,
    pub spindle_rpm: f64,
}

impl Default for DrillTool {
    fn default() -> Self {
        Self {
            cutter_diameter_mm: 6.75,
            cutter_length_mm: 10.0,
            shank_length_mm: 8.0,
            shank_diameter_mm: 1.75,
            torque_coil_length_mm: 115.0,
            spindle_rpm: 8250.0,
        }
    }
}

impl DrillTool {
    pub fn validate(&self) -> Result<()> {
        let d = self.cutter_diameter_mm;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Domain(format!("cutter diameter must be positive, got {d}")));
        }
        if !(self.cutter_length_mm.is_finite() && self.cutter_length_mm >= d / 2.0) {
            return Err(Error::Domain(format!(
                "cutter length {} mm cannot hold a {} mm hemispherical cap",
                self.cutter_length_mm,
                d / 2.0
            )));
        }
        for (name, v) in [
            ("shank_length_mm", self.shank_length_mm),
            ("shank_diameter_mm", self.shank_diameter_mm),
            ("torque_coil_length_mm", self.torque_coil_length_mm),
            ("spindle_rpm", self.spindle_rpm),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("tool.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn cutter_radius(&self) -> f64 {
        self.cutter_diameter_mm / 2.0
    }
}

/// Robot configuration: exposed guide arc length and axial rotation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub s_mm: f64,
    pub phi_deg: f64,
}

impl Config {
    pub const fn new(s_mm: f64, phi_deg: f64) -> Self {
        Self { s_mm, phi_deg }
    }

    /// Returns the configuration with `s` clamped into the guide's range.
    pub fn clamped(self, guide: &SteeringGuide) -> Self {
        Self { s_mm: self.s_mm.clamp(0.0, guide.deployable_length_mm), ..self }
    }

    fn check(&self, guide: &SteeringGuide) -> Result<()> {
        if !self.phi_deg.is_finite() {
            return Err(Error::Domain(format!("rotation must be finite, got {}", self.phi_deg)));
        }
        if !(self.s_mm >= 0.0 && self.s_mm <= guide.deployable_length_mm) {
            return Err(Error::Domain(format!(
                "insertion {} mm outside [0, {}] mm",
                self.s_mm, guide.deployable_length_mm
            )));
        }
        Ok(())
    }
}

/// Position and unit drilling direction in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub tangent: Vector3<f64>,
}

fn rotate_z(v: Vector3<f64>, phi_deg: f64) -> Vector3<f64> {
    let (sin, cos) = phi_deg.to_radians().sin_cos();
    Vector3::new(cos * v.x - sin * v.y, sin * v.x + cos * v.y, v.z)
}

/// Arc tip in the bending plane before rotation.
fn planar_tip(radius: f64, s: f64) -> (Vector3<f64>, Vector3<f64>) {
    let theta = s / radius;
    let (sin, cos) = theta.sin_cos();
    let half = (theta / 2.0).sin();
    // 1 - cos(θ) = 2 sin²(θ/2) avoids cancellation for nearly straight guides.
    let position = Vector3::new(2.0 * radius * half * half, 0.0, radius * sin);
    (position, Vector3::new(sin, 0.0, cos))
}

pub fn guide_tip_pose(guide: &SteeringGuide, q: Config) -> Result<Pose> {
    guide.validate()?;
    q.check(guide)?;
    let (position, tangent) = planar_tip(guide.curve_radius_mm, q.s_mm);
    Ok(Pose { position: rotate_z(position, q.phi_deg), tangent: rotate_z(tangent, q.phi_deg) })
}

/// Distal extremity of the cutter: guide tip plus the cutter length along the tangent.
pub fn cutter_pose(guide: &SteeringGuide, tool: &DrillTool, q: Config) -> Result<Pose> {
    let tip = guide_tip_pose(guide, q)?;
    Ok(Pose { position: tip.position + tool.cutter_length_mm * tip.tangent, tangent: tip.tangent })
}

/// Distance of the pose position from the insertion axis.
pub fn lateral_reach(pose: &Pose) -> f64 {
    pose.position.x.hypot(pose.position.y)
}

/// Angle in degrees, in `[0, 180]`, between the tip tangents of two configurations.
pub fn tip_angle_change(q0: Config, q1: Config, guide: &SteeringGuide) -> Result<f64> {
    let a = guide_tip_pose(guide, q0)?.tangent;
    let b = guide_tip_pose(guide, q1)?.tangent;
    Ok(a.cross(&b).norm().atan2(a.dot(&b)).to_degrees())
}
