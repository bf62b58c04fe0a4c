//! Procedural 2D occupancy worlds: scene generation, SE(2) kinematics with
//! collision gating, clearance-aware geodesic planning, and a panoramic
//! scanline renderer with a multiplicative illumination model.

mod gen;
mod plan;
mod render;
mod scene;
mod sim;

pub use gen::generate_scene;
pub use plan::{geodesic_distance, shortest_path, polyline_length};
pub use render::{render, Camera, Observation};
pub use scene::{OccupancyScene, SceneCategory, NUM_CELL_CLASSES, NO_HIT_CLASS, SEM_CHANNELS};
pub use sim::{is_collision, step_kinematic};

use std::f64::consts::PI;
use thiserror::Error;

/// Default grid resolution in meters per cell.
pub const DEFAULT_CELL_SIZE: f32 = 0.1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("scene size {0} is below the minimum of {1} cells per side")]
    SceneTooSmall(u32, u32),
    #[error("scene generation for {category:?} at size {size} failed after {attempts} attempts")]
    GenerationFailed {
        category: SceneCategory,
        size: u32,
        attempts: u32,
    },
    #[error("twist is not finite (v={v}, omega={omega})")]
    NonFiniteTwist { v: f64, omega: f64 },
    #[error("pose ({x:.3}, {y:.3}) is in collision or outside the grid")]
    PoseInCollision { x: f64, y: f64 },
    #[error("no clearance-respecting path between start and goal")]
    NoPath,
    #[error("scene file is malformed: {reason} at byte offset {offset}")]
    MalformedScene { reason: String, offset: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wraps an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// An SE(2) element: absolute agent state or a relative action target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Euclidean distance between positions, ignoring heading.
    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses `other` (absolute) in this pose's frame.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        let (s, c) = self.theta.sin_cos();
        Pose {
            x: c * dx + s * dy,
            y: -s * dx + c * dy,
            theta: wrap_angle(other.theta - self.theta),
        }
    }

    /// Composes this pose with a relative pose, returning the absolute result.
    /// Inverse of [`Pose::relative_to`].
    pub fn compose(&self, rel: &Pose) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose {
            x: self.x + c * rel.x - s * rel.y,
            y: self.y + s * rel.x + c * rel.y,
            theta: wrap_angle(self.theta + rel.theta),
        }
    }
}

/// A velocity command: forward speed and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const STOP: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }

    /// Clamps both components to the embodiment's limits.
    pub fn clamped(&self, emb: &Embodiment) -> Twist {
        Twist {
            v: self.v.clamp(-emb.v_max, emb.v_max),
            omega: self.omega.clamp(-emb.omega_max, emb.omega_max),
        }
    }
}

/// Kinematic envelope of the simulated robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embodiment {
    /// Collision disc radius in meters.
    pub radius: f64,
    /// Maximum forward speed in m/s.
    pub v_max: f64,
    /// Maximum yaw rate in rad/s.
    pub omega_max: f64,
    /// Control period in seconds.
    pub dt: f64,
}

impl Default for Embodiment {
    fn default() -> Self {
        Self {
            radius: 0.1,
            v_max: 0.3,
            omega_max: 1.0,
            dt: 0.25,
        }
    }
}
