//! Differentiable ballistic refinement of three-frame landmark windows.
//!
//! Everything runs in frame units: time in frames (`dt = 1`) and lengths in
//! pixels, so gravity becomes `g_frame = g * dt² / S`. A window
//! `(p_{t-1}, p_t, p_{t+1})` is integrated forward from `p_{t-1}` with a
//! left-difference velocity and two Velocity-Verlet steps that detect and
//! reflect wall contacts. When no contact is detected the integrated
//! positions are replaced by the exact constant-gravity parabola through the
//! two endpoints.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::config::SimConfig;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameUnitParams {
    /// px/frame².
    pub g_frame: f64,
    pub e: f64,
    /// Always one frame.
    pub dt: f64,
    pub bounds: Bounds,
    pub v_max_frame: f64,
}

pub fn to_frame_units(cfg: &SimConfig) -> FrameUnitParams {
    let (lo, hi) = (cfg.min_center_px(), cfg.max_center_px());
    FrameUnitParams {
        g_frame: cfg.gravity * cfg.dt * cfg.dt / cfg.scale,
        e: cfg.restitution,
        dt: 1.0,
        bounds: Bounds {
            x_min: lo,
            x_max: hi,
            y_min: lo,
            y_max: hi,
        },
        v_max_frame: cfg.v_max * cfg.dt / cfg.scale,
    }
}

/// Left difference `(p_cur - p_prev) / dt`.
pub fn init_velocity<T: Scalar>(p_prev: Vec2<T>, p_cur: Vec2<T>, params: &FrameUnitParams) -> Vec2<T> {
    let inv = T::cst(1.0 / params.dt);
    Vec2::new((p_cur.x - p_prev.x) * inv, (p_cur.y - p_prev.y) * inv)
}

/// Mirror `raw` into `[lo, hi]` and reflect `v` when a bound was crossed.
fn reflect_axis<T: Scalar>(raw: T, v: T, lo: f64, hi: f64, e: f64) -> (T, T, bool) {
    let r = raw.value();
    let over = r > hi;
    let under = r < lo;
    let bound = if over { hi } else { lo };
    let crossed = over || under;
    let pos = T::select(crossed, T::cst(2.0 * bound) - raw, raw);
    let vel = T::select(crossed, -(T::cst(e) * v), v);
    (pos.clamp_to(lo, hi), vel, crossed)
}

/// One Velocity-Verlet step with wall reflection.
///
/// Returns the new position, the new velocity and per-axis contact flags.
pub fn verlet_step_with_bounce<T: Scalar>(
    p: Vec2<T>,
    v: Vec2<T>,
    params: &FrameUnitParams,
) -> (Vec2<T>, Vec2<T>, [bool; 2]) {
    let dt = T::cst(params.dt);
    let half_g = T::cst(0.5 * params.g_frame * params.dt);
    let b = params.bounds;

    let x_raw = p.x + v.x * dt;
    let (x, vx, bx) = reflect_axis(x_raw, v.x, b.x_min, b.x_max, params.e);

    let vy_half = v.y + half_g;
    let y_raw = p.y + vy_half * dt;
    let (y, vy_half, by) = reflect_axis(y_raw, vy_half, b.y_min, b.y_max, params.e);

    (Vec2::new(x, y), Vec2::new(vx, vy_half + half_g), [bx, by])
}

/// Exact parabola through `p_tm1` and `p_tp1` under constant vertical gravity.
pub fn smooth_correction<T: Scalar>(
    p_tm1: Vec2<T>,
    p_tp1: Vec2<T>,
    params: &FrameUnitParams,
) -> ([Vec2<T>; 3], [Vec2<T>; 3]) {
    let dt = params.dt;
    let g = params.g_frame;
    let inv = T::cst(1.0 / (2.0 * dt));
    let v_mid = Vec2::new((p_tp1.x - p_tm1.x) * inv, (p_tp1.y - p_tm1.y) * inv);
    let v0 = Vec2::new(v_mid.x, v_mid.y - T::cst(g * dt));
    let at = |k: f64| {
        Vec2::new(
            p_tm1.x + v0.x * T::cst(k * dt),
            p_tm1.y + v0.y * T::cst(k * dt) + T::cst(0.5 * g * k * k * dt * dt),
        )
    };
    let vel = |k: f64| Vec2::new(v0.x, v0.y + T::cst(k * g * dt));
    ([p_tm1, at(1.0), at(2.0)], [v0, vel(1.0), vel(2.0)])
}

/// Physics output for one window, in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsWindow<T = f64> {
    pub positions: [Vec2<T>; 3],
    pub velocities: [Vec2<T>; 3],
    /// `bounces[0]` is always false.
    pub bounces: [bool; 3],
}

impl<T: Scalar> PhysicsWindow<T> {
    pub fn value(&self) -> PhysicsWindow {
        PhysicsWindow {
            positions: self.positions.map(Vec2::value),
            velocities: self.velocities.map(Vec2::value),
            bounces: self.bounces,
        }
    }

    pub fn any_bounce(&self) -> bool {
        self.bounces.iter().any(|&b| b)
    }
}

pub fn physics_refine_window<T: Scalar>(landmarks: &[Vec2<T>; 3], params: &FrameUnitParams) -> PhysicsWindow<T> {
    let [p0, p1, p2] = *landmarks;
    let v0 = init_velocity(p0, p1, params);
    let (q1, v1, b1) = verlet_step_with_bounce(p0, v0, params);
    let (q2, v2, b2) = verlet_step_with_bounce(q1, v1, params);
    let bounces = [false, b1[0] || b1[1], b2[0] || b2[1]];
    if bounces[1] || bounces[2] {
        PhysicsWindow {
            positions: [p0, q1, q2],
            velocities: [v0, v1, v2],
            bounces,
        }
    } else {
        let (positions, velocities) = smooth_correction(p0, p2, params);
        PhysicsWindow {
            positions,
            velocities,
            bounces,
        }
    }
}

/// Smallest distance between a raw (pre-reflection) Verlet coordinate and
/// the bound it is compared against. Derivatives are only well defined when
/// this is positive; finite-difference probes want it comfortably so.
pub fn branch_margin(landmarks: &[Vec2; 3], params: &FrameUnitParams) -> f64 {
    let b = params.bounds;
    let margin = |raw: f64, lo: f64, hi: f64| (raw - lo).abs().min((raw - hi).abs());
    let [p0, p1, _] = *landmarks;
    let mut p = p0;
    let mut v = init_velocity(p0, p1, params);
    let mut m = f64::INFINITY;
    for _ in 0..2 {
        let x_raw = p.x + v.x * params.dt;
        let y_raw = p.y + (v.y + 0.5 * params.g_frame * params.dt) * params.dt;
        m = m.min(margin(x_raw, b.x_min, b.x_max));
        m = m.min(margin(y_raw, b.y_min, b.y_max));
        let (q, w, _) = verlet_step_with_bounce(p, v, params);
        m = m.min(margin(q.x, b.x_min, b.x_max)).min(margin(q.y, b.y_min, b.y_max));
        p = q;
        v = w;
    }
    m
}
