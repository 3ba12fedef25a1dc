//! Two-phase circumnavigation law.
//!
//! Before the estimator window fills (`step < l`) the agent moves purely
//! tangentially at speed `k_t`. Afterwards it adds a radial correction on the
//! estimated range and feeds forward the estimated target velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{perpendicular_cw, Bearing, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Tangential gain (m/s).
    pub k_t: f64,
    /// Radial gain (1/s).
    pub k_r: f64,
    /// Desired orbit radius (m).
    pub d_star: f64,
    /// Estimator window length in steps; the radial term is gated on it.
    pub window: usize,
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k_t > 0.0 && self.k_r > 0.0 && self.d_star > 0.0 && self.window >= 1;
        if !ok || !self.k_t.is_finite() || !self.k_r.is_finite() || !self.d_star.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "controller gains must satisfy k_t>0, k_r>0, d_star>0, window>=1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Estimated agent-to-target displacement and target velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TargetEstimate {
    pub d_hat: Vec2,
    pub v_hat: Vec2,
}

impl TargetEstimate {
    pub fn is_finite(&self) -> bool {
        self.d_hat.is_finite() && self.v_hat.is_finite()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.d_hat.x, self.d_hat.y, self.v_hat.x, self.v_hat.y]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            d_hat: Vec2::new(a[0], a[1]),
            v_hat: Vec2::new(a[2], a[3]),
        }
    }
}

/// Velocity command for control step `step`.
pub fn control(step: usize, bearing: Bearing, estimate: Option<&TargetEstimate>, gains: &ControllerGains) -> Result<Vec2> {
    let phi = bearing.dir();
    let tangential = perpendicular_cw(bearing).dir() * gains.k_t;
    if step < gains.window {
        return Ok(tangential);
    }
    let est = estimate.ok_or(Error::MissingEstimate { step })?;
    if !est.is_finite() {
        return Err(Error::NonFiniteEstimate);
    }
    let radial = phi * (gains.k_r * (est.d_hat.norm() - gains.d_star));
    Ok(tangential + radial + est.v_hat)
}

/// Scale `u` down to at most `max_speed` (optional actuator limit).
pub fn saturate(u: Vec2, max_speed: f64) -> Vec2 {
    let n = u.norm();
    if n > max_speed && n > 0.0 {
        u * (max_speed / n)
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAINS: ControllerGains = ControllerGains {
        k_t: 60.0,
        k_r: 10.0,
        d_star: 10.0,
        window: 60,
    };

    fn west() -> Bearing {
        Bearing::from_vector(Vec2::new(-1.0, 0.0)).unwrap()
    }

    #[test]
    fn tangential_phase() {
        let u = control(0, west(), None, &GAINS).unwrap();
        assert_eq!(u, Vec2::new(0.0, 60.0));
    }

    #[test]
    fn on_radius_stationary_target_is_pure_orbit() {
        let est = TargetEstimate {
            d_hat: Vec2::new(-10.0, 0.0),
            v_hat: Vec2::ZERO,
        };
        let u = control(60, west(), Some(&est), &GAINS).unwrap();
        assert_eq!(u, Vec2::new(0.0, 60.0));
    }

    #[test]
    fn full_law_substitution() {
        let est = TargetEstimate {
            d_hat: Vec2::new(-12.0, 0.0),
            v_hat: Vec2::new(9.0, 0.0),
        };
        let u = control(61, west(), Some(&est), &GAINS).unwrap();
        assert!((u - Vec2::new(-11.0, 60.0)).norm() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            control(60, west(), None, &GAINS),
            Err(Error::MissingEstimate { step: 60 })
        ));
        let bad = TargetEstimate {
            d_hat: Vec2::new(f64::NAN, 0.0),
            v_hat: Vec2::ZERO,
        };
        assert!(matches!(
            control(60, west(), Some(&bad), &GAINS),
            Err(Error::NonFiniteEstimate)
        ));
    }

    #[test]
    fn radial_gain_only_scales_radial_component() {
        let b = Bearing::from_vector(Vec2::new(0.3, -0.7)).unwrap();
        let perp = perpendicular_cw(b).dir();
        let est = TargetEstimate {
            d_hat: Vec2::new(4.0, -13.0),
            v_hat: Vec2::new(1.5, 2.5),
        };
        let mut g2 = GAINS;
        g2.k_r *= 3.0;
        let u1 = control(100, b, Some(&est), &GAINS).unwrap() - est.v_hat;
        let u2 = control(100, b, Some(&est), &g2).unwrap() - est.v_hat;
        assert!((u1.dot(perp) - u2.dot(perp)).abs() < 1e-12);
        assert!((u2.dot(b.dir()) - 3.0 * u1.dot(b.dir())).abs() < 1e-9);
    }

    #[test]
    fn saturation() {
        assert_eq!(saturate(Vec2::new(3.0, 4.0), 10.0), Vec2::new(3.0, 4.0));
        assert!((saturate(Vec2::new(30.0, 40.0), 10.0).norm() - 10.0).abs() < 1e-12);
    }
}
