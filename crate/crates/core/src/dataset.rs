//! On-disk dataset layout.
//!
//! A dataset is a directory holding `manifest.json` (format version plus
//! every [`SimConfig`] field) and, per split, three tensor files:
//!
//! * `{split}_frames.pitd`: `f32` frames, shape `[N, T, H, W]`
//! * `{split}_truth.pitd`: three tensors back to back: positions `f64`
//!   `[N, T, 2]`, velocities `f64` `[N, T, 2]`, bounce flags `u8` `[N, T]`
//! * `{split}_noise.pitd`: `f32` static noise images, shape `[N, H, W]`
//!
//! Every tensor starts with the header `b"PITD"`, `u32` version, `u32` rank,
//! then `rank` `u64` extents, all little-endian, followed by the row-major
//! little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::rng::{sequence_stream, Split};
use crate::sim::Trajectory;
use crate::vec2::Vec2;
use crate::video::{generate_sequence, split_len, Frame, VideoSequence};

pub const MAGIC: &[u8; 4] = b"PITD";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: SimConfig,
}

pub fn frames_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}_frames.pitd"))
}

pub fn truth_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}_truth.pitd"))
}

pub fn noise_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{split}_noise.pitd"))
}

pub fn write_manifest(dir: &Path, cfg: &SimConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let m = DatasetManifest {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
    };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedFormat {
            path,
            expected: format!("version {FORMAT_VERSION}"),
            found: format!("version {}", m.format_version),
        });
    }
    Ok(m)
}

fn write_header<W: Write>(w: &mut W, shape: &[u64]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for d in shape {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
fn header_len(rank: usize) -> u64 {
    12 + 8 * rank as u64
}

/// Reads tensor headers and payloads, reporting truncation against the
/// actual file length.
struct TensorReader {
    path: PathBuf,
    inner: BufReader<File>,
    len: u64,
    pos: u64,
}

impl TensorReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(TensorReader {
            path: path.to_path_buf(),
            inner: BufReader::new(file),
            len,
            pos: 0,
        })
    }

    fn need(&self, n: u64) -> Result<()> {
        if self.pos + n > self.len {
            return Err(Error::Truncated {
                path: self.path.clone(),
                needed: self.pos + n,
                available: self.len,
            });
        }
        Ok(())
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        self.need(n as u64)?;
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf)?;
        self.pos += n as u64;
        Ok(buf)
    }

    fn skip(&mut self, n: u64) -> Result<()> {
        self.need(n)?;
        self.inner.seek(SeekFrom::Current(n as i64))?;
        self.pos += n;
        Ok(())
    }

    fn header(&mut self) -> Result<Vec<u64>> {
        if self.len.saturating_sub(self.pos) < 4 {
            self.need(4)?;
        }
        let magic = self.bytes(4)?;
        if magic != MAGIC {
            return Err(Error::UnsupportedFormat {
                path: self.path.clone(),
                expected: format!("magic {:?} version {FORMAT_VERSION}", "PITD"),
                found: format!("magic {:?}", String::from_utf8_lossy(&magic)),
            });
        }
        let version = u32::from_le_bytes(self.bytes(4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat {
                path: self.path.clone(),
                expected: format!("version {FORMAT_VERSION}"),
                found: format!("version {version}"),
            });
        }
        let rank = u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()));
        }
        Ok(shape)
    }

    fn expect_shape(&mut self, context: &str, expected: &[u64]) -> Result<()> {
        let found = self.header()?;
        if found != expected {
            return Err(Error::ShapeMismatch {
                context: format!("{} ({context})", self.path.display()),
                expected: expected.to_vec(),
                found,
            });
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.bytes(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Incremental writer for one split, so sequences can be produced and
/// written one at a time. Call [`SplitWriter::finish`] after exactly the
/// declared number of sequences.
pub struct SplitWriter {
    frames: BufWriter<File>,
    noise: BufWriter<File>,
    trajectories: Vec<Trajectory>,
    truth_path: PathBuf,
    shape: (u64, u64, u64, u64),
}

impl SplitWriter {
    pub fn create(dir: &Path, split: Split, cfg: &SimConfig, count: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let shape = (
            count as u64,
            cfg.frames_per_video as u64,
            cfg.height() as u64,
            cfg.width() as u64,
        );
        let mut frames = BufWriter::new(File::create(frames_path(dir, split))?);
        write_header(&mut frames, &[shape.0, shape.1, shape.2, shape.3])?;
        let mut noise = BufWriter::new(File::create(noise_path(dir, split))?);
        write_header(&mut noise, &[shape.0, shape.2, shape.3])?;
        Ok(SplitWriter {
            frames,
            noise,
            trajectories: Vec::with_capacity(count),
            truth_path: truth_path(dir, split),
            shape,
        })
    }

    pub fn push(&mut self, seq: &VideoSequence) -> Result<()> {
        let (_, t, h, w) = self.shape;
        let dims = |f: &Frame| (f.height as u64, f.width as u64);
        if seq.frames.len() as u64 != t
            || seq.trajectory.len() as u64 != t
            || seq.frames.iter().any(|f| dims(f) != (h, w))
            || dims(&seq.noise) != (h, w)
        {
            return Err(Error::ShapeMismatch {
                context: "sequence written to split".into(),
                expected: vec![t, h, w],
                found: vec![
                    seq.frames.len() as u64,
                    seq.frames.first().map_or(0, |f| f.height as u64),
                    seq.frames.first().map_or(0, |f| f.width as u64),
                ],
            });
        }
        for f in &seq.frames {
            write_f32s(&mut self.frames, &f.pixels)?;
        }
        write_f32s(&mut self.noise, &seq.noise.pixels)?;
        self.trajectories.push(seq.trajectory.clone());
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        let (n, t, _, _) = self.shape;
        if self.trajectories.len() as u64 != n {
            return Err(Error::ShapeMismatch {
                context: "split sequence count".into(),
                expected: vec![n],
                found: vec![self.trajectories.len() as u64],
            });
        }
        self.frames.flush()?;
        self.noise.flush()?;
        let mut truth = BufWriter::new(File::create(&self.truth_path)?);
        write_header(&mut truth, &[n, t, 2])?;
        write_f64s(
            &mut truth,
            self.trajectories
                .iter()
                .flat_map(|tr| tr.positions_px.iter().flat_map(|p| [p.x, p.y])),
        )?;
        write_header(&mut truth, &[n, t, 2])?;
        write_f64s(
            &mut truth,
            self.trajectories
                .iter()
                .flat_map(|tr| tr.velocities_fu.iter().flat_map(|v| [v.x, v.y])),
        )?;
        write_header(&mut truth, &[n, t])?;
        let flags: Vec<u8> = self
            .trajectories
            .iter()
            .flat_map(|tr| tr.bounce_flags.iter().map(|&b| u8::from(b)))
            .collect();
        truth.write_all(&flags)?;
        truth.flush()?;
        Ok(())
    }
}

pub fn write_split(dir: &Path, split: Split, cfg: &SimConfig, sequences: &[VideoSequence]) -> Result<()> {
    let mut w = SplitWriter::create(dir, split, cfg, sequences.len())?;
    for s in sequences {
        w.push(s)?;
    }
    w.finish()
}

/// Writes the manifest and all three splits.
pub fn write_dataset(
    dir: &Path,
    cfg: &SimConfig,
    train: &[VideoSequence],
    val: &[VideoSequence],
    test: &[VideoSequence],
) -> Result<()> {
    write_manifest(dir, cfg)?;
    write_split(dir, Split::Train, cfg, train)?;
    write_split(dir, Split::Val, cfg, val)?;
    write_split(dir, Split::Test, cfg, test)
}

pub fn read_trajectories(dir: &Path, split: Split, cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    let n = split_len(cfg, split) as u64;
    let t = cfg.frames_per_video as u64;
    let mut r = TensorReader::open(&truth_path(dir, split))?;
    r.expect_shape("positions", &[n, t, 2])?;
    let pos = r.f64s((n * t * 2) as usize)?;
    r.expect_shape("velocities", &[n, t, 2])?;
    let vel = r.f64s((n * t * 2) as usize)?;
    r.expect_shape("bounces", &[n, t])?;
    let flags = r.bytes((n * t) as usize)?;
    let t = t as usize;
    Ok((0..n as usize)
        .map(|i| {
            let pairs = |xs: &[f64]| -> Vec<Vec2> {
                xs[i * t * 2..(i + 1) * t * 2]
                    .chunks_exact(2)
                    .map(|c| Vec2::new(c[0], c[1]))
                    .collect()
            };
            Trajectory {
                positions_px: pairs(&pos),
                velocities_fu: pairs(&vel),
                bounce_flags: flags[i * t..(i + 1) * t].iter().map(|&b| b != 0).collect(),
            }
        })
        .collect())
}

/// Streams the sequences of one split in index order.
pub struct SplitReader {
    frames: TensorReader,
    noise: TensorReader,
    trajectories: std::vec::IntoIter<Trajectory>,
    t: usize,
    h: usize,
    w: usize,
}

impl SplitReader {
    pub fn open(dir: &Path, split: Split) -> Result<(DatasetManifest, Self)> {
        let manifest = read_manifest(dir)?;
        let cfg = &manifest.config;
        let n = split_len(cfg, split) as u64;
        let (t, h, w) = (cfg.frames_per_video, cfg.height(), cfg.width());
        let trajectories = read_trajectories(dir, split, cfg)?;
        let mut frames = TensorReader::open(&frames_path(dir, split))?;
        frames.expect_shape("frames", &[n, t as u64, h as u64, w as u64])?;
        frames.need(n * (t * h * w) as u64 * 4)?;
        let mut noise = TensorReader::open(&noise_path(dir, split))?;
        noise.expect_shape("noise", &[n, h as u64, w as u64])?;
        noise.need(n * (h * w) as u64 * 4)?;
        Ok((
            manifest,
            SplitReader {
                frames,
                noise,
                trajectories: trajectories.into_iter(),
                t,
                h,
                w,
            },
        ))
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Skip `k` sequences without decoding them.
    pub fn skip_sequences(&mut self, k: usize) -> Result<()> {
        let k = k.min(self.len());
        self.frames.skip((k * self.t * self.h * self.w * 4) as u64)?;
        self.noise.skip((k * self.h * self.w * 4) as u64)?;
        for _ in 0..k {
            self.trajectories.next();
        }
        Ok(())
    }
}

impl Iterator for SplitReader {
    type Item = Result<VideoSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        let trajectory = self.trajectories.next()?;
        let mut read = || -> Result<VideoSequence> {
            let frames = (0..self.t)
                .map(|_| {
                    Ok(Frame {
                        width: self.w,
                        height: self.h,
                        pixels: self.frames.f32s(self.h * self.w)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let noise = Frame {
                width: self.w,
                height: self.h,
                pixels: self.noise.f32s(self.h * self.w)?,
            };
            Ok(VideoSequence {
                frames,
                noise,
                trajectory: trajectory.clone(),
            })
        };
        Some(read())
    }
}

/// Generates every split straight to disk, a few sequences at a time.
/// Output is identical to [`write_dataset`] on [`generate_split`] results.
///
/// [`generate_split`]: crate::video::generate_split
pub fn generate_dataset(dir: &Path, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    write_manifest(dir, cfg)?;
    let chunk = 2 * rayon::current_num_threads();
    for split in Split::ALL {
        let n = split_len(cfg, split);
        let mut w = SplitWriter::create(dir, split, cfg, n)?;
        for start in (0..n).step_by(chunk.max(1)) {
            let batch: Vec<VideoSequence> = (start..(start + chunk).min(n))
                .into_par_iter()
                .map(|i| generate_sequence(cfg, &mut sequence_stream(cfg.seed, split, i as u32)))
                .collect::<Result<_>>()?;
            for s in &batch {
                w.push(s)?;
            }
        }
        w.finish()?;
    }
    Ok(())
}

/// Loads a whole split into memory.
pub fn read_dataset(dir: &Path, split: Split) -> Result<Vec<VideoSequence>> {
    let (_, reader) = SplitReader::open(dir, split)?;
    reader.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::generate_split;

    fn small_cfg(sigma: f64) -> SimConfig {
        SimConfig {
            image_size: 32,
            scale: 0.1,
            frames_per_video: 5,
            v_max: 5.0,
            noise_sigma: sigma,
            n_train: 3,
            n_val: 2,
            n_test: 3,
            ..Default::default()
        }
    }

    fn write_all(dir: &Path, cfg: &SimConfig) -> [Vec<VideoSequence>; 3] {
        let splits = Split::ALL.map(|s| generate_split(cfg, s).unwrap());
        write_dataset(dir, cfg, &splits[0], &splits[1], &splits[2]).unwrap();
        splits
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for sigma in [0.0, 1.0] {
            let dir = tempfile::tempdir().unwrap();
            let cfg = small_cfg(sigma);
            let splits = write_all(dir.path(), &cfg);
            for (s, seqs) in Split::ALL.iter().zip(&splits) {
                let back = read_dataset(dir.path(), *s).unwrap();
                assert_eq!(&back, seqs);
            }
            assert_eq!(read_manifest(dir.path()).unwrap().config, cfg);
        }
    }

    #[test]
    fn streamed_generation_matches_in_memory_writer() {
        let cfg = SimConfig { n_train: 7, ..small_cfg(1.0) };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_all(a.path(), &cfg);
        generate_dataset(b.path(), &cfg).unwrap();
        for s in Split::ALL {
            for path in [frames_path, truth_path, noise_path] {
                assert_eq!(std::fs::read(path(a.path(), s)).unwrap(), std::fs::read(path(b.path(), s)).unwrap());
            }
        }
        assert_eq!(
            std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn header_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(0.0);
        write_all(dir.path(), &cfg);
        let bytes = std::fs::read(frames_path(dir.path(), Split::Val)).unwrap();
        assert_eq!(&bytes[0..4], b"PITD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        let dims: Vec<u64> = (0..4)
            .map(|k| u64::from_le_bytes(bytes[12 + 8 * k..20 + 8 * k].try_into().unwrap()))
            .collect();
        assert_eq!(dims, vec![2, 5, 32, 32]);
        assert_eq!(bytes.len() as u64, header_len(4) + 2 * 5 * 32 * 32 * 4);
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(0.0);
        write_all(dir.path(), &cfg);
        let p = frames_path(dir.path(), Split::Test);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Split::Test),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn wrong_version_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(0.0);
        write_all(dir.path(), &cfg);
        let p = truth_path(dir.path(), Split::Train);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[4] = 9;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Split::Train),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(1.0);
        write_all(dir.path(), &cfg);
        let p = frames_path(dir.path(), Split::Test);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Split::Test),
            Err(Error::Truncated { .. })
        ));
        std::fs::write(&p, &bytes[..7]).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Split::Test),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn manifest_shape_disagreement_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(0.0);
        write_all(dir.path(), &cfg);
        let other = SimConfig {
            frames_per_video: 6,
            ..cfg
        };
        write_manifest(dir.path(), &other).unwrap();
        assert!(matches!(
            read_dataset(dir.path(), Split::Val),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn reader_can_skip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(1.0);
        let splits = write_all(dir.path(), &cfg);
        let (_, mut r) = SplitReader::open(dir.path(), Split::Test).unwrap();
        r.skip_sequences(2).unwrap();
        assert_eq!(r.next().unwrap().unwrap(), splits[2][2]);
        assert!(r.next().is_none());
    }
}
