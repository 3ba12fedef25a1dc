//! Planar vectors and bearing construction.
//!
//! The global frame is x-right, y-up. A clockwise quarter turn therefore maps
//! `[x, y]` to `[y, -x]`, which fixes the direction the agent orbits in.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separation (m) at or below which a bearing is considered undefined.
pub const MIN_RANGE: f64 = 1e-9;

/// A 2D vector. Used for positions (m), velocities (m/s) and bearings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counter-clockwise by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A unit vector pointing from the agent towards the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing(Vec2);

impl Bearing {
    /// Normalise `v`, failing when it is too short to carry a direction.
    pub fn from_vector(v: Vec2) -> Result<Bearing> {
        let n = v.norm();
        if n <= MIN_RANGE || !n.is_finite() {
            return Err(Error::DegenerateBearing { norm: n });
        }
        Ok(Bearing(v / n))
    }

    pub fn dir(self) -> Vec2 {
        self.0
    }
}

/// Unit vector from `agent_pos` to `target_pos`.
pub fn unit_bearing(target_pos: Vec2, agent_pos: Vec2) -> Result<Bearing> {
    let d = displacement(target_pos, agent_pos);
    let separation = d.norm();
    if separation <= MIN_RANGE {
        return Err(Error::CoincidentPositions { separation });
    }
    Ok(Bearing(d / separation))
}

/// The tangential direction: `b` rotated clockwise by a quarter turn.
pub fn perpendicular_cw(b: Bearing) -> Bearing {
    let v = b.0;
    Bearing(Vec2::new(v.y, -v.x))
}

/// `target_pos - agent_pos`, the agent-to-target vector.
pub fn displacement(target_pos: Vec2, agent_pos: Vec2) -> Vec2 {
    target_pos - agent_pos
}
