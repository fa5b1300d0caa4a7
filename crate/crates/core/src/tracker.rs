//! Non-learned tracking pipeline and its evaluation.
//!
//! A zero-mean disk template is correlated with each frame (zero-normalized
//! cross-correlation) to produce a full-resolution heatmap, which is average
//! pooled to the two coarser scales. Per three-frame window and scale the
//! pipeline extracts `B` (scale-specific expectation operator), `H` (hard
//! argmax) and `P` (physics refinement of `B`) landmarks in image
//! coordinates, together with velocities and bounce indicators.

use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::heatmap::{hard_argmax_landmark, Heatmap, Scale};
use crate::physics::{physics_refine_window, to_frame_units, FrameUnitParams};
use crate::sim::Trajectory;
use crate::vec2::Vec2;
use crate::video::{Frame, VideoSequence};

/// Patches with a variance below this are treated as flat.
const FLAT_VARIANCE: f64 = 1e-8;

/// Zero-mean, unit-norm disk template on a `(2r + 3)²` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub radius: f64,
    pub size: usize,
    pub values: Vec<f64>,
    /// `(row offset, first col offset, last col offset)` of each disk row,
    /// relative to the template center.
    spans: Vec<(isize, isize, isize)>,
    disk_count: usize,
    /// Value of disk pixels before normalization minus the mean, per unit norm.
    inside: f64,
    outside: f64,
}

/// Binary disk lattice of radius `r` centered on the middle cell.
pub fn disk_mask(r: f64) -> (usize, Vec<bool>) {
    let half = r.floor() as usize + 1;
    let size = 2 * half + 1;
    let mut mask = vec![false; size * size];
    for i in 0..size {
        for j in 0..size {
            let (dy, dx) = (i as f64 - half as f64, j as f64 - half as f64);
            mask[i * size + j] = dx * dx + dy * dy <= r * r;
        }
    }
    (size, mask)
}

pub fn disk_template(r: f64) -> Template {
    assert!(r >= 1.0, "template radius must be at least 1");
    let (size, mask) = disk_mask(r);
    let n = (size * size) as f64;
    let count = mask.iter().filter(|&&m| m).count();
    let mean = count as f64 / n;
    let norm = (count as f64 * (1.0 - mean).powi(2) + (n - count as f64) * mean * mean).sqrt();
    let (inside, outside) = ((1.0 - mean) / norm, -mean / norm);
    let values = mask.iter().map(|&m| if m { inside } else { outside }).collect();
    let half = (size / 2) as isize;
    let mut spans = Vec::new();
    for i in 0..size {
        let cols: Vec<usize> = (0..size).filter(|&j| mask[i * size + j]).collect();
        if let (Some(&a), Some(&b)) = (cols.first(), cols.last()) {
            spans.push((i as isize - half, a as isize - half, b as isize - half));
        }
    }
    Template {
        radius: r,
        size,
        values,
        spans,
        disk_count: count,
        inside,
        outside,
    }
}

/// Summed-area table with one row and column of zero padding.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &[f64], width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut sum = vec![0.0; stride * (height + 1)];
        let mut sq = vec![0.0; stride * (height + 1)];
        for i in 0..height {
            let (mut rs, mut rq) = (0.0, 0.0);
            for j in 0..width {
                let v = img[i * width + j];
                rs += v;
                rq += v * v;
                sum[(i + 1) * stride + j + 1] = sum[i * stride + j + 1] + rs;
                sq[(i + 1) * stride + j + 1] = sq[i * stride + j + 1] + rq;
            }
        }
        Integral { stride, sum, sq }
    }

    /// Sums over rows `[r0, r1)` and cols `[c0, c1)`.
    fn rect(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> (f64, f64) {
        let s = self.stride;
        let f = |t: &[f64]| t[r1 * s + c1] - t[r0 * s + c1] - t[r1 * s + c0] + t[r0 * s + c0];
        (f(&self.sum), f(&self.sq))
    }
}

/// Zero-normalized cross-correlation of `img` with the template at every
/// center where the template fits; other pixels and negative responses are 0.
pub fn ncc_response(img: &[f64], width: usize, height: usize, tpl: &Template) -> Heatmap {
    let half = tpl.size / 2;
    let mut out = Heatmap::zeros(width, height);
    if width < tpl.size || height < tpl.size {
        return out;
    }
    let integral = Integral::new(img, width, height);
    // Per-row prefix sums for the disk part of the template.
    let row_stride = width + 1;
    let mut rows = vec![0.0; row_stride * height];
    for i in 0..height {
        for j in 0..width {
            rows[i * row_stride + j + 1] = rows[i * row_stride + j] + img[i * width + j];
        }
    }
    let n = (tpl.size * tpl.size) as f64;
    for y in half..height - half {
        for x in half..width - half {
            let (s, q) = integral.rect(y - half, y + half + 1, x - half, x + half + 1);
            let var = q - s * s / n;
            if var <= FLAT_VARIANCE {
                continue;
            }
            let mut disk = 0.0;
            for &(dy, a, b) in &tpl.spans {
                let row = (y as isize + dy) as usize * row_stride;
                disk += rows[row + (x as isize + b + 1) as usize] - rows[row + (x as isize + a) as usize];
            }
            // Σ T·I with T = inside on the disk and outside elsewhere.
            let corr = tpl.inside * disk + tpl.outside * (s - disk);
            let v = corr / var.sqrt();
            out.values[y * width + x] = v.max(0.0);
        }
    }
    out
}

pub fn ncc_heatmap(frame: &Frame, tpl: &Template) -> Heatmap {
    ncc_response(&frame.to_f64(), frame.width, frame.height, tpl)
}

/// `k x k` average pooling; trailing rows and columns that do not fill a
/// block are dropped.
pub fn downscale_heatmap(h: &Heatmap, k: usize) -> Heatmap {
    let (w, ht) = (h.width / k, h.height / k);
    let inv = 1.0 / (k * k) as f64;
    let mut out = Heatmap::zeros(w, ht);
    for i in 0..ht {
        for j in 0..w {
            let mut s = 0.0;
            for di in 0..k {
                let row = (i * k + di) * h.width + j * k;
                s += h.values[row..row + k].iter().sum::<f64>();
            }
            out.values[i * w + j] = s * inv;
        }
    }
    out
}

/// Heatmaps at 56, 112 and 224 px from one full-resolution response.
pub fn pyramid(h224: Heatmap) -> [Heatmap; 3] {
    let h112 = downscale_heatmap(&h224, 2);
    let h56 = downscale_heatmap(&h224, 4);
    [h56, h112, h224]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackerOptions {
    /// Subtract the window's three-frame mean from each frame and keep the
    /// positive residual before correlation. A static background cancels
    /// exactly, and the other frames' balls (negative residuals) drop out.
    pub temporal_mean: bool,
}

/// Predictions for one window at one scale, in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowPrediction {
    pub scale: Scale,
    pub p_bilinear: [Vec2; 3],
    pub p_argmax: [Vec2; 3],
    pub p_physics: [Vec2; 3],
    pub v: [Vec2; 3],
    pub b: [bool; 3],
}

/// `windows[scale_index][w]` is the window centered on frame `w + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTrack {
    pub windows: [Vec<WindowPrediction>; 3],
}

#[derive(Debug, Clone, Copy)]
struct FrameLandmarks {
    b: [Vec2; 3],
    h: [Vec2; 3],
}

fn landmarks(h224: Heatmap) -> FrameLandmarks {
    let maps = pyramid(h224);
    let mut b = [Vec2::default(); 3];
    let mut h = [Vec2::default(); 3];
    for (k, s) in Scale::ALL.into_iter().enumerate() {
        let a = s.factor() as f64;
        b[k] = s.operator().apply(&maps[k]).scale(a);
        h[k] = hard_argmax_landmark(&maps[k]).scale(a);
    }
    FrameLandmarks { b, h }
}

fn window_prediction(lm: [&FrameLandmarks; 3], k: usize, params: &FrameUnitParams) -> WindowPrediction {
    let p_bilinear = lm.map(|l| l.b[k]);
    let out = physics_refine_window(&p_bilinear, params);
    WindowPrediction {
        scale: Scale::ALL[k],
        p_bilinear,
        p_argmax: lm.map(|l| l.h[k]),
        p_physics: out.positions,
        v: out.velocities,
        b: out.bounces,
    }
}

pub fn track_sequence(seq: &VideoSequence, cfg: &SimConfig, opts: &TrackerOptions) -> Result<SequenceTrack> {
    let n = seq.frames.len();
    if n < 3 {
        return Err(Error::SequenceTooShort { frames: n });
    }
    let params = to_frame_units(cfg);
    let tpl = disk_template(cfg.radius_px);
    let (w, h) = (seq.frames[0].width, seq.frames[0].height);
    let mut windows: [Vec<WindowPrediction>; 3] = Default::default();
    if opts.temporal_mean {
        let imgs: Vec<Vec<f64>> = seq.frames.iter().map(Frame::to_f64).collect();
        for t in 1..n - 1 {
            let mean: Vec<f64> = (0..w * h)
                .map(|p| (imgs[t - 1][p] + imgs[t][p] + imgs[t + 1][p]) / 3.0)
                .collect();
            let lm: Vec<FrameLandmarks> = (t - 1..=t + 1)
                .map(|f| {
                    let diff: Vec<f64> = imgs[f].iter().zip(&mean).map(|(a, m)| (a - m).max(0.0)).collect();
                    landmarks(ncc_response(&diff, w, h, &tpl))
                })
                .collect();
            for (k, list) in windows.iter_mut().enumerate() {
                list.push(window_prediction([&lm[0], &lm[1], &lm[2]], k, &params));
            }
        }
    } else {
        let lm: Vec<FrameLandmarks> = seq.frames.iter().map(|f| landmarks(ncc_heatmap(f, &tpl))).collect();
        for t in 1..n - 1 {
            for (k, list) in windows.iter_mut().enumerate() {
                list.push(window_prediction([&lm[t - 1], &lm[t], &lm[t + 1]], k, &params));
            }
        }
    }
    Ok(SequenceTrack { windows })
}

/// The fifteen reported tracking metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    B56,
    B112,
    B224,
    H56,
    H112,
    H224,
    P56,
    P112,
    P224,
    V56,
    V112,
    V224,
    Bounce56,
    Bounce112,
    Bounce224,
}

impl Metric {
    pub const ALL: [Metric; 15] = [
        Metric::B56,
        Metric::B112,
        Metric::B224,
        Metric::H56,
        Metric::H112,
        Metric::H224,
        Metric::P56,
        Metric::P112,
        Metric::P224,
        Metric::V56,
        Metric::V112,
        Metric::V224,
        Metric::Bounce56,
        Metric::Bounce112,
        Metric::Bounce224,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::B56 => "B56",
            Metric::B112 => "B112",
            Metric::B224 => "B224",
            Metric::H56 => "H56",
            Metric::H112 => "H112",
            Metric::H224 => "H224",
            Metric::P56 => "P56",
            Metric::P112 => "P112",
            Metric::P224 => "P224",
            Metric::V56 => "V56",
            Metric::V112 => "V112",
            Metric::V224 => "V224",
            Metric::Bounce56 => "bounce56",
            Metric::Bounce112 => "bounce112",
            Metric::Bounce224 => "bounce224",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric {s:?}")))
    }
}

pub type MetricValues = [f64; 15];

/// Per-frame view of a window list under the middle-frame convention.
fn frame_slot(t: usize, n: usize) -> (usize, usize) {
    if t == 0 {
        (0, 0)
    } else if t == n - 1 {
        (n - 3, 2)
    } else {
        (t - 1, 1)
    }
}

/// Mean per-frame errors of one sequence.
pub fn evaluate(track: &SequenceTrack, gt: &Trajectory) -> Result<MetricValues> {
    let n = gt.len();
    for list in &track.windows {
        if n < 3 || list.len() != n - 2 {
            return Err(Error::Misaligned(format!(
                "{} windows for {} frames",
                list.len(),
                n
            )));
        }
    }
    let mut out = [0.0; 15];
    let inv = 1.0 / n as f64;
    for (k, list) in track.windows.iter().enumerate() {
        for t in 0..n {
            let (w, s) = frame_slot(t, n);
            let wp = &list[w];
            let p = gt.positions_px[t];
            out[k] += (wp.p_bilinear[s] - p).l1() * inv;
            out[3 + k] += (wp.p_argmax[s] - p).l1() * inv;
            out[6 + k] += (wp.p_physics[s] - p).l1() * inv;
            out[9 + k] += (wp.v[s] - gt.velocities_fu[t]).l1() * inv;
            if wp.b[s] != gt.bounce_flags[t] {
                out[12 + k] += inv;
            }
        }
    }
    Ok(out)
}

/// Per-sequence metrics plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub per_sequence: Vec<MetricValues>,
    pub mean: MetricValues,
}

impl MetricTable {
    pub fn from_sequences(per_sequence: Vec<MetricValues>) -> Self {
        let mut mean = [0.0; 15];
        let n = per_sequence.len().max(1) as f64;
        for row in &per_sequence {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        MetricTable { per_sequence, mean }
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.mean[m.index()]
    }

    /// Median of the per-sequence values.
    pub fn median(&self, m: Metric) -> f64 {
        let mut v: Vec<f64> = self.per_sequence.iter().map(|r| r[m.index()]).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }
}

/// Tracks and evaluates a stream of sequences, a few at a time.
pub fn evaluate_stream<I>(sequences: I, cfg: &SimConfig, opts: &TrackerOptions) -> Result<(MetricTable, Vec<SequenceTrack>)>
where
    I: Iterator<Item = Result<VideoSequence>>,
{
    let chunk = 2 * rayon::current_num_threads();
    let mut per_seq = Vec::new();
    let mut tracks = Vec::new();
    let mut pending = Vec::with_capacity(chunk);
    let mut flush = |pending: &mut Vec<VideoSequence>| -> Result<()> {
        let done: Vec<(MetricValues, SequenceTrack)> = pending
            .par_iter()
            .map(|s| {
                let tr = track_sequence(s, cfg, opts)?;
                Ok((evaluate(&tr, &s.trajectory)?, tr))
            })
            .collect::<Result<_>>()?;
        for (m, t) in done {
            per_seq.push(m);
            tracks.push(t);
        }
        pending.clear();
        Ok(())
    };
    for s in sequences {
        pending.push(s?);
        if pending.len() == chunk {
            flush(&mut pending)?;
        }
    }
    flush(&mut pending)?;
    Ok((MetricTable::from_sequences(per_seq), tracks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config: String,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

/// `config,replicate,metric,value`, one row per metric.
pub fn write_metrics_csv<W: Write>(w: W, config: &str, replicate: usize, table: &MetricTable) -> Result<()> {
    let rows: Vec<MetricRow> = Metric::ALL
        .iter()
        .map(|m| MetricRow {
            config: config.to_string(),
            replicate,
            metric: m.name().to_string(),
            value: table.get(*m),
        })
        .collect();
    write_metric_rows(w, &rows)
}

pub fn write_metric_rows<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_metric_rows<R: Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    sequence: usize,
    frame: usize,
    scale: usize,
    bx: f64,
    by: f64,
    hx: f64,
    hy: f64,
    px: f64,
    py: f64,
    vx: f64,
    vy: f64,
    bounce: u8,
}

/// One row per sequence, frame and scale under the middle-frame convention.
pub fn write_predictions_csv<W: Write>(w: W, tracks: &[SequenceTrack]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, tr) in tracks.iter().enumerate() {
        for list in &tr.windows {
            let n = list.len() + 2;
            for t in 0..n {
                let (w, s) = frame_slot(t, n);
                let wp = &list[w];
                wr.serialize(PredictionRow {
                    sequence: i,
                    frame: t,
                    scale: wp.scale.size(),
                    bx: wp.p_bilinear[s].x,
                    by: wp.p_bilinear[s].y,
                    hx: wp.p_argmax[s].x,
                    hy: wp.p_argmax[s].y,
                    px: wp.p_physics[s].x,
                    py: wp.p_physics[s].y,
                    vx: wp.v[s].x,
                    vy: wp.v[s].y,
                    bounce: u8::from(wp.b[s]),
                })?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}
