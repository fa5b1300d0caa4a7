//! Physical and imaging parameters of the synthetic bouncing-ball setup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation and imaging configuration.
///
/// Defaults reproduce the reference setup: a 224 px square image at
/// 0.02 m/px (a 4.48 m domain), 25 frames per second, Earth gravity,
/// restitution 0.75, a 2 px ball and launch speeds up to 11.1 m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Image height and width in pixels.
    pub image_size: u32,
    /// Meters per pixel.
    pub scale: f64,
    /// Seconds per frame.
    pub dt: f64,
    /// Gravitational acceleration in m/s², positive pointing down-screen.
    pub gravity: f64,
    pub restitution: f64,
    pub radius_px: f64,
    /// Maximum initial speed per axis in m/s.
    pub v_max: f64,
    pub frames_per_video: usize,
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            image_size: 224,
            scale: 0.02,
            dt: 0.04,
            gravity: 9.81,
            restitution: 0.75,
            radius_px: 2.0,
            v_max: 11.1,
            frames_per_video: 40,
            noise_sigma: 0.0,
            n_train: 100,
            n_val: 50,
            n_test: 100,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn width(&self) -> usize {
        self.image_size as usize
    }

    pub fn height(&self) -> usize {
        self.image_size as usize
    }

    /// Lowest admissible ball-center coordinate in pixels.
    pub fn min_center_px(&self) -> f64 {
        self.radius_px
    }

    /// Highest admissible ball-center coordinate in pixels (`W - 1 - r`).
    pub fn max_center_px(&self) -> f64 {
        f64::from(self.image_size) - 1.0 - self.radius_px
    }

    /// Width in meters of the band the ball center may occupy.
    pub fn center_range_m(&self) -> f64 {
        (self.max_center_px() - self.min_center_px()) * self.scale
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.image_size == 0 {
            return fail("image_size must be positive".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail(format!("scale must be positive, got {}", self.scale));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.gravity > 0.0 && self.gravity.is_finite()) {
            return fail(format!("gravity must be positive, got {}", self.gravity));
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return fail(format!("restitution must lie in (0, 1], got {}", self.restitution));
        }
        if !(self.radius_px > 0.0 && self.radius_px < f64::from(self.image_size) / 2.0) {
            return fail(format!(
                "radius must lie in (0, {}), got {}",
                f64::from(self.image_size) / 2.0,
                self.radius_px
            ));
        }
        if self.max_center_px() <= self.min_center_px() {
            return fail("image too small for the ball radius".into());
        }
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return fail(format!("v_max must be non-negative, got {}", self.v_max));
        }
        if self.frames_per_video < 3 {
            return fail(format!(
                "frames_per_video must be at least 3, got {}",
                self.frames_per_video
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        // One step may move the ball by at most v_max·dt plus whatever gravity adds
        // during the video; the simulator re-checks per step.
        if self.v_max * self.dt > self.center_range_m() {
            return fail(format!(
                "v_max·dt = {} m exceeds the domain width {} m",
                self.v_max * self.dt,
                self.center_range_m()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.image_size, 224);
        assert_eq!(cfg.scale, 0.02);
        assert_eq!(cfg.dt, 0.04);
        assert_eq!(cfg.gravity, 9.81);
        assert_eq!(cfg.restitution, 0.75);
        assert_eq!(cfg.radius_px, 2.0);
        assert_eq!(cfg.v_max, 11.1);
        assert_eq!(cfg.frames_per_video, 40);
        assert_eq!((cfg.n_train, cfg.n_val, cfg.n_test), (100, 50, 100));
        assert_eq!(cfg.seed, 42);
        assert!((f64::from(cfg.image_size) * cfg.scale - 4.48).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_invalid_fields() {
        let bad = [
            SimConfig { frames_per_video: 2, ..Default::default() },
            SimConfig { restitution: 0.0, ..Default::default() },
            SimConfig { restitution: 1.5, ..Default::default() },
            SimConfig { radius_px: 112.0, ..Default::default() },
            SimConfig { scale: 0.0, ..Default::default() },
            SimConfig { gravity: -9.81, ..Default::default() },
            SimConfig { v_max: 1e4, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: SimConfig = serde_json::from_str(r#"{"gravity": 1.62, "seed": 7}"#).unwrap();
        assert_eq!(cfg.gravity, 1.62);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.image_size, 224);
    }
}
