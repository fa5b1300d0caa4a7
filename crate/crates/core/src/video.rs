//! Frame rendering and sequence generation.
//!
//! A frame is a binary disk (ball = 1, background = 0) plus a static
//! Gaussian noise image drawn once per sequence. Values are left unclamped.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::Result;
use crate::rng::{sequence_stream, Split};
use crate::sim::{simulate_trajectory, Trajectory};
use crate::vec2::Vec2;

/// Row-major single-channel image of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Frame {
    pub fn zeros(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<Frame>,
    pub noise: Frame,
    pub trajectory: Trajectory,
}

/// Filled disk: pixel `(i, j)` is 1 when `(j - x)² + (i - y)² <= r²`.
pub fn render_frame(center: Vec2, cfg: &SimConfig) -> Frame {
    let (w, h) = (cfg.width(), cfg.height());
    let mut frame = Frame::zeros(w, h);
    let r = cfg.radius_px;
    let r2 = r * r;
    let row_lo = (center.y - r).ceil().max(0.0) as usize;
    let row_hi = ((center.y + r).floor().max(0.0) as usize).min(h - 1);
    let col_lo = (center.x - r).ceil().max(0.0) as usize;
    let col_hi = ((center.x + r).floor().max(0.0) as usize).min(w - 1);
    for i in row_lo..=row_hi {
        let dy = i as f64 - center.y;
        for j in col_lo..=col_hi {
            let dx = j as f64 - center.x;
            if dx * dx + dy * dy <= r2 {
                frame.pixels[i * w + j] = 1.0;
            }
        }
    }
    frame
}

pub fn make_noise_image<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Frame {
    let (w, h) = (cfg.width(), cfg.height());
    let mut frame = Frame::zeros(w, h);
    if cfg.noise_sigma > 0.0 {
        for px in &mut frame.pixels {
            let z: f64 = rng.sample(StandardNormal);
            *px = (cfg.noise_sigma * z) as f32;
        }
    }
    frame
}

/// Trajectory first, then the noise image, from the same stream; the
/// trajectory therefore does not depend on the noise level.
pub fn generate_sequence<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<VideoSequence> {
    let trajectory = simulate_trajectory(cfg, rng)?;
    let noise = make_noise_image(cfg, rng);
    let frames = trajectory
        .positions_px
        .iter()
        .map(|&p| {
            let mut f = render_frame(p, cfg);
            for (px, n) in f.pixels.iter_mut().zip(&noise.pixels) {
                *px += *n;
            }
            f
        })
        .collect();
    Ok(VideoSequence {
        frames,
        noise,
        trajectory,
    })
}

pub fn split_len(cfg: &SimConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.n_train,
        Split::Val => cfg.n_val,
        Split::Test => cfg.n_test,
    }
}

/// All sequences of a split; sequence `i` uses stream `(seed, split, i)`.
pub fn generate_split(cfg: &SimConfig, split: Split) -> Result<Vec<VideoSequence>> {
    cfg.validate()?;
    (0..split_len(cfg, split))
        .into_par_iter()
        .map(|i| generate_sequence(cfg, &mut sequence_stream(cfg.seed, split, i as u32)))
        .collect()
}

/// Ground truth only, without rendering frames.
pub fn generate_trajectories(cfg: &SimConfig, split: Split) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..split_len(cfg, split))
        .into_par_iter()
        .map(|i| simulate_trajectory(cfg, &mut sequence_stream(cfg.seed, split, i as u32)))
        .collect()
}
