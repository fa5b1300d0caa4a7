//! Reconstruction, heatmap and physics-consistency losses with their epoch
//! ramps.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::physics::{physics_refine_window, FrameUnitParams, PhysicsWindow};
use crate::sim::Trajectory;
use crate::vec2::Vec2;

/// Probability clamp for the focal and bounce-BCE terms.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_min_pill: f64,
    pub t_pill: f64,
    pub w_min_pills: f64,
    pub t_pills: f64,
    pub bounce_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_min_pill: 0.01,
            t_pill: 10.0,
            w_min_pills: 0.001,
            t_pills: 20.0,
            bounce_weight: 0.01,
        }
    }
}

/// Which window frames enter the unsupervised physics loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PillMode {
    #[default]
    AllFrames,
    LastFrame,
}

/// Form of the bounce term in the supervised physics loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BounceTerm {
    #[default]
    WeightedL1,
    Bce,
}

/// Target image for the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconTarget {
    #[default]
    CleanRender,
    NoisyFrame,
}

impl ReconTarget {
    pub fn pick<'a>(self, clean: &'a [f64], noisy: &'a [f64]) -> &'a [f64] {
        match self {
            ReconTarget::CleanRender => clean,
            ReconTarget::NoisyFrame => noisy,
        }
    }
}

fn check_len(context: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            context: context.into(),
            expected: vec![a as u64],
            found: vec![b as u64],
        });
    }
    Ok(())
}

/// `ln(1 + exp(-|z|))`, never overflowing.
fn log1p_exp_neg_abs<T: Scalar>(z: T) -> T {
    (T::cst(1.0) + (-z.abs()).exp()).ln()
}

/// Mean binary cross-entropy of sigmoid(logits) against `target`, in the
/// form `max(z, 0) - z t + ln(1 + e^{-|z|})`.
pub fn bce_reconstruction<T: Scalar>(logits: &[T], target: &[f64]) -> Result<T> {
    check_len("reconstruction target", logits.len(), target.len())?;
    let mut sum = T::cst(0.0);
    for (&z, &t) in logits.iter().zip(target) {
        sum += z.relu() - z * T::cst(t) + log1p_exp_neg_abs(z);
    }
    Ok(sum / T::cst(logits.len().max(1) as f64))
}

/// Unit-peak Gaussian mask of width `3 r` around `center`.
pub fn cone_mask(width: usize, height: usize, center: Vec2, r: f64) -> Vec<f64> {
    let sigma = 3.0 * r;
    let inv = 1.0 / (2.0 * sigma * sigma);
    (0..height)
        .flat_map(|i| {
            (0..width).map(move |j| {
                let (dx, dy) = (j as f64 - center.x, i as f64 - center.y);
                (-(dx * dx + dy * dy) * inv).exp()
            })
        })
        .collect()
}

/// Mean of `|recon - target|` weighted by [`cone_mask`].
pub fn cone_loss<T: Scalar>(
    recon: &[T],
    target: &[f64],
    width: usize,
    height: usize,
    center: Vec2,
    r: f64,
) -> Result<T> {
    check_len("cone target", recon.len(), target.len())?;
    check_len("cone grid", width * height, recon.len())?;
    let mask = cone_mask(width, height, center, r);
    let mut sum = T::cst(0.0);
    for ((&p, &t), &m) in recon.iter().zip(target).zip(&mask) {
        sum += (p - T::cst(t)).abs() * T::cst(m);
    }
    Ok(sum / T::cst(recon.len().max(1) as f64))
}

/// Penalty-reduced focal loss normalized by the number of positive pixels.
pub fn focal_heatmap_loss<T: Scalar>(h: &Heatmap<T>, target: &Heatmap) -> Result<T> {
    if (h.width, h.height) != (target.width, target.height) {
        return Err(Error::ShapeMismatch {
            context: "focal target".into(),
            expected: vec![h.height as u64, h.width as u64],
            found: vec![target.height as u64, target.width as u64],
        });
    }
    let one = T::cst(1.0);
    let mut sum = T::cst(0.0);
    let mut positives = 0usize;
    for (&raw, &t) in h.values.iter().zip(&target.values) {
        let p = raw.clamp_to(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if t > 0.5 {
            positives += 1;
            sum += (one - p).square() * p.ln();
        }
        sum += T::cst((1.0 - t).powi(4)) * p.square() * (one - p).ln();
    }
    Ok(-sum / T::cst(positives.max(1) as f64))
}

/// L1 distance between heatmap landmarks (scaled by `a` into image
/// coordinates) and their physics refinement, averaged over the window.
pub fn pill_loss<T: Scalar>(landmarks: &[Vec2<T>; 3], params: &FrameUnitParams, a: f64, mode: PillMode) -> T {
    let scaled = landmarks.map(|p| p.scale(a));
    let out = physics_refine_window(&scaled, params);
    let term = |k: usize| (out.positions[k] - scaled[k]).l1();
    match mode {
        PillMode::AllFrames => (term(0) + term(1) + term(2)) / T::cst(3.0),
        PillMode::LastFrame => term(2),
    }
}

/// Ground-truth window centered on frame `t`.
pub fn ground_truth_window(tr: &Trajectory, t: usize) -> PhysicsWindow {
    let k = [t - 1, t, t + 1];
    PhysicsWindow {
        positions: k.map(|i| tr.positions_px[i]),
        velocities: k.map(|i| tr.velocities_fu[i]),
        bounces: [false, tr.bounce_flags[t], tr.bounce_flags[t + 1]],
    }
}

fn mean_l1<T: Scalar>(a: &[Vec2<T>; 3], b: &[Vec2; 3]) -> T {
    let mut s = T::cst(0.0);
    for (p, q) in a.iter().zip(b) {
        s += (*p - Vec2::constant(*q)).l1();
    }
    s / T::cst(6.0)
}

/// Supervised physics loss: position, velocity and weighted bounce terms.
pub fn pills_loss<T: Scalar>(
    pred: &PhysicsWindow<T>,
    gt: &PhysicsWindow,
    weights: &LossWeights,
    bounce: BounceTerm,
) -> T {
    let pos = mean_l1(&pred.positions, &gt.positions);
    let vel = mean_l1(&pred.velocities, &gt.velocities);
    let mut b = 0.0;
    for (&p, &g) in pred.bounces.iter().zip(&gt.bounces) {
        let (p, g) = (f64::from(u8::from(p)), f64::from(u8::from(g)));
        b += match bounce {
            BounceTerm::WeightedL1 => (p - g).abs(),
            BounceTerm::Bce => {
                let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(g * q.ln() + (1.0 - g) * (1.0 - q).ln())
            }
        };
    }
    pos + vel + T::cst(weights.bounce_weight * b / 3.0)
}

/// `w_min + (1 - w_min) * min(1, epoch / T)`.
pub fn ramp_weight(epoch: u32, w_min: f64, t: f64) -> f64 {
    w_min + (1.0 - w_min) * (f64::from(epoch) / t).min(1.0)
}

/// Per-batch loss components; inactive ones stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents<T = f64> {
    pub ae: T,
    pub cone: T,
    pub hm: T,
    pub pill: T,
    pub pills: T,
}

pub fn total_loss<T: Scalar>(c: &LossComponents<T>, epoch: u32, w: &LossWeights) -> T {
    let w_pill = ramp_weight(epoch, w.w_min_pill, w.t_pill);
    let w_pills = ramp_weight(epoch, w.w_min_pills, w.t_pills);
    c.ae + c.cone + c.hm + T::cst(w_pill) * c.pill + T::cst(w_pills) * c.pills
}
