//! Ground-truth ball trajectories under constant gravity with inelastic
//! wall reflections.
//!
//! Integration runs in meters and seconds. Each step advances the exact
//! constant-acceleration kinematics by one frame; when the new center lies
//! beyond a wall, the overshoot is mirrored back about the wall and the
//! post-step velocity component is reversed and scaled by the restitution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallState {
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Per-frame ground truth in pixel/frame units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions_px: Vec<Vec2>,
    /// Velocities in px/frame (`v * dt / S`).
    pub velocities_fu: Vec<Vec2>,
    /// `true` when a reflection happened during the step ending at that frame.
    pub bounce_flags: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions_px.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions_px.is_empty()
    }
}

/// Wall positions (ball-center limits) in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walls {
    pub lo: f64,
    pub hi: f64,
}

impl Walls {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Walls {
            lo: cfg.min_center_px() * cfg.scale,
            hi: cfg.max_center_px() * cfg.scale,
        }
    }
}

pub fn sample_initial_conditions<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> BallState {
    let walls = Walls::from_config(cfg);
    let mut uniform = |lo: f64, hi: f64| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let x = uniform(walls.lo, walls.hi);
    let y = uniform(walls.lo, walls.hi);
    let vx = uniform(-cfg.v_max, cfg.v_max);
    let vy = uniform(-cfg.v_max, cfg.v_max);
    BallState {
        position: Vec2::new(x, y),
        velocity: Vec2::new(vx, vy),
    }
}

/// Mirror `raw` back inside `walls`; returns the new coordinate and whether
/// a wall was crossed.
fn reflect(raw: f64, walls: Walls) -> (f64, bool) {
    if raw > walls.hi {
        ((2.0 * walls.hi - raw).max(walls.lo), true)
    } else if raw < walls.lo {
        ((2.0 * walls.lo - raw).min(walls.hi), true)
    } else {
        (raw, false)
    }
}

/// Advance one frame. Returns the new state and per-axis bounce flags.
pub fn step_physical(state: BallState, cfg: &SimConfig) -> Result<(BallState, [bool; 2])> {
    let walls = Walls::from_config(cfg);
    let width = walls.hi - walls.lo;
    let dt = cfg.dt;
    let dx = state.velocity.x * dt;
    let dy = state.velocity.y * dt + 0.5 * cfg.gravity * dt * dt;
    for d in [dx, dy] {
        if d.abs() > width {
            return Err(Error::UnrecoverableState {
                displacement: d.abs(),
                width,
            });
        }
    }

    let vx = state.velocity.x;
    let vy = state.velocity.y + cfg.gravity * dt;
    let (x, bx) = reflect(state.position.x + dx, walls);
    let (y, by) = reflect(state.position.y + dy, walls);
    let e = cfg.restitution;
    let velocity = Vec2::new(if bx { -e * vx } else { vx }, if by { -e * vy } else { vy });
    Ok((
        BallState {
            position: Vec2::new(x, y),
            velocity,
        },
        [bx, by],
    ))
}

pub fn project_to_pixels(p: Vec2, cfg: &SimConfig) -> Vec2 {
    Vec2::new(p.x / cfg.scale, p.y / cfg.scale)
}

/// Meters-per-second to pixels-per-frame.
pub fn velocity_to_frame_units(v: Vec2, cfg: &SimConfig) -> Vec2 {
    let k = cfg.dt / cfg.scale;
    Vec2::new(v.x * k, v.y * k)
}

pub fn simulate_trajectory<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Trajectory> {
    let n = cfg.frames_per_video;
    let mut state = sample_initial_conditions(cfg, rng);
    let mut traj = Trajectory {
        positions_px: Vec::with_capacity(n),
        velocities_fu: Vec::with_capacity(n),
        bounce_flags: Vec::with_capacity(n),
    };
    for t in 0..n {
        let mut bounced = false;
        if t > 0 {
            let (next, flags) = step_physical(state, cfg)?;
            state = next;
            bounced = flags[0] || flags[1];
        }
        traj.positions_px.push(project_to_pixels(state.position, cfg));
        traj.velocities_fu.push(velocity_to_frame_units(state.velocity, cfg));
        traj.bounce_flags.push(bounced);
    }
    Ok(traj)
}
