//! On-disk episode datasets.
//!
//! ```text
//! <root>/<split>/<episode_id>/meta.json
//! <root>/<split>/<episode_id>/frames.bin
//! ```
//!
//! `frames.bin` starts with the magic `EPW1` and six little-endian `u32`
//! dimensions (h, w, semantic channels, horizon, agent slots, frames).
//! Each frame record is little-endian `f32`: raster `h·w·c`, ego
//! `x y heading speed`, agent count, `slots × (x y heading speed length
//! width)`, gt_future `horizon × 2`, then the command as one `u8`.

use std::fs;
use std::path::{Path, PathBuf};

use echoplan_core::world::{
    generate_episode, AgentState, EgoState, Episode, Frame, GridSpec, NavigationCommand, Scenario,
    SemanticRaster, Trajectory, HORIZON, SEM_CHANNELS,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 4] = b"EPW1";
const AGENT_FIELDS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub grid: GridSpec,
    pub frames: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dims {
    h: usize,
    w: usize,
    channels: usize,
    horizon: usize,
    slots: usize,
    frames: usize,
}

impl Dims {
    fn record_len(&self) -> usize {
        4 * (self.h * self.w * self.channels + 4 + 1 + self.slots * AGENT_FIELDS + self.horizon * 2) + 1
    }
}

/// Episode seeds for a generated split: `seed·10⁶ + i`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_000).wrapping_add(index as u64)
}

/// `count` episodes cycling through `scenarios`.
pub fn generate_split(seed: u64, count: usize, scenarios: &[Scenario], grid: &GridSpec) -> Vec<Episode> {
    (0..count)
        .map(|i| generate_episode(episode_seed(seed, i), scenarios[i % scenarios.len()], grid))
        .collect()
}

fn put_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

pub fn encode_episode(ep: &Episode) -> Vec<u8> {
    let slots = ep.frames.iter().map(|f| f.agents.len()).max().unwrap_or(0);
    let dims = [ep.grid.h, ep.grid.w, SEM_CHANNELS, HORIZON, slots, ep.frames.len()];
    let mut buf = Vec::with_capacity(28 + ep.frames.len() * 4 * ep.grid.h * ep.grid.w * SEM_CHANNELS);
    buf.extend_from_slice(MAGIC);
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for f in &ep.frames {
        for v in &f.raster.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in [f.ego.x, f.ego.y, f.ego.heading, f.ego.speed] {
            put_f32(&mut buf, v);
        }
        put_f32(&mut buf, f.agents.len() as f64);
        for i in 0..slots {
            let a = f.agents.get(i);
            let fields = a.map_or([0.0; AGENT_FIELDS], |a| [a.x, a.y, a.heading, a.speed, a.length, a.width]);
            for v in fields {
                put_f32(&mut buf, v);
            }
        }
        for p in &f.gt_future.points {
            put_f32(&mut buf, p[0]);
            put_f32(&mut buf, p[1]);
        }
        buf.push(f.command.index() as u8);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn f32s(&mut self, n: usize, field: &'static str, frame: usize) -> Result<Vec<f32>> {
        let raw = self.take(4 * n).ok_or_else(|| FormatError::Truncated {
            path: self.path.to_path_buf(),
            field,
            frame,
        })?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_episode(bytes: &[u8], meta: &EpisodeMeta, path: &Path) -> Result<Episode> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            field: "magic",
        });
    }
    let mut dims = [0usize; 6];
    const NAMES: [&str; 6] = ["h", "w", "channels", "horizon", "agent_slots", "frames"];
    for (d, name) in dims.iter_mut().zip(NAMES) {
        let raw = r.take(4).ok_or(FormatError::MalformedHeader {
            path: path.to_path_buf(),
            field: name,
        })?;
        *d = u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize;
    }
    let dims = Dims {
        h: dims[0],
        w: dims[1],
        channels: dims[2],
        horizon: dims[3],
        slots: dims[4],
        frames: dims[5],
    };
    let expect = |field: &'static str, expected: usize, actual: usize| {
        if expected == actual {
            Ok(())
        } else {
            Err(FormatError::DimensionMismatch {
                path: path.to_path_buf(),
                field,
                expected: expected as u64,
                actual: actual as u64,
            })
        }
    };
    expect("h", meta.grid.h, dims.h)?;
    expect("w", meta.grid.w, dims.w)?;
    expect("channels", SEM_CHANNELS, dims.channels)?;
    expect("horizon", HORIZON, dims.horizon)?;
    expect("frames", meta.frames, dims.frames)?;

    let raster_len = dims.h * dims.w * dims.channels;
    let mut frames = Vec::with_capacity(dims.frames);
    for t in 0..dims.frames {
        if r.remaining() < 4 * raster_len {
            return Err(FormatError::RasterSizeMismatch {
                path: path.to_path_buf(),
                frame: t,
                expected: 4 * raster_len,
                available: r.remaining(),
            });
        }
        let values = r.f32s(raster_len, "raster", t)?;
        let ego = r.f32s(4, "ego", t)?;
        let count = r.f32s(1, "agent_count", t)?[0] as usize;
        if count > dims.slots {
            return Err(FormatError::InvalidValue {
                path: path.to_path_buf(),
                field: "agent_count",
                value: count.to_string(),
            });
        }
        let block = r.f32s(dims.slots * AGENT_FIELDS, "agents", t)?;
        let agents = block
            .chunks_exact(AGENT_FIELDS)
            .take(count)
            .map(|a| AgentState {
                x: a[0] as f64,
                y: a[1] as f64,
                heading: a[2] as f64,
                speed: a[3] as f64,
                length: a[4] as f64,
                width: a[5] as f64,
            })
            .collect();
        let gt = r.f32s(dims.horizon * 2, "gt_future", t)?;
        let command = r.take(1).ok_or_else(|| FormatError::Truncated {
            path: path.to_path_buf(),
            field: "command",
            frame: t,
        })?[0];
        let command = NavigationCommand::from_index(command as usize).ok_or_else(|| FormatError::InvalidValue {
            path: path.to_path_buf(),
            field: "command",
            value: command.to_string(),
        })?;
        frames.push(Frame {
            raster: SemanticRaster {
                h: dims.h,
                w: dims.w,
                values,
            },
            ego: EgoState {
                x: ego[0] as f64,
                y: ego[1] as f64,
                heading: ego[2] as f64,
                speed: ego[3] as f64,
            },
            agents,
            command,
            gt_future: Trajectory::new(gt.chunks_exact(2).map(|p| [p[0] as f64, p[1] as f64]).collect()),
        });
    }
    if r.remaining() != 0 {
        return Err(FormatError::TrailingBytes {
            path: path.to_path_buf(),
            extra: r.remaining(),
        });
    }
    debug_assert_eq!(bytes.len(), 28 + dims.frames * dims.record_len());
    Ok(Episode {
        scenario_id: meta.episode_id.clone(),
        scenario: meta.scenario,
        seed: meta.seed,
        grid: meta.grid,
        frames,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

/// Writes one episode directory under `split_dir`; returns the files written.
pub fn save_episode(ep: &Episode, split_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = split_dir.join(&ep.scenario_id);
    fs::create_dir_all(&dir).map_err(|e| FormatError::io(&dir, e))?;
    let meta = EpisodeMeta {
        episode_id: ep.scenario_id.clone(),
        scenario: ep.scenario,
        seed: ep.seed,
        grid: ep.grid,
        frames: ep.frames.len(),
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| FormatError::json(&meta_path, e))?;
    write(&meta_path, &json)?;
    let frames_path = dir.join("frames.bin");
    write(&frames_path, &encode_episode(ep))?;
    Ok(vec![meta_path, frames_path])
}

/// Writes `<root>/<split>/<episode_id>/…` for every episode.
pub fn save_dataset(episodes: &[Episode], root: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let split_dir = root.join(split);
    let mut files = Vec::new();
    for ep in episodes {
        files.extend(save_episode(ep, &split_dir)?);
    }
    Ok(files)
}

pub fn load_episode(dir: &Path) -> Result<Episode> {
    let meta_path = dir.join("meta.json");
    let raw = fs::read(&meta_path).map_err(|e| FormatError::io(&meta_path, e))?;
    let meta: EpisodeMeta = serde_json::from_slice(&raw).map_err(|e| FormatError::json(&meta_path, e))?;
    let frames_path = dir.join("frames.bin");
    let bytes = fs::read(&frames_path).map_err(|e| FormatError::io(&frames_path, e))?;
    decode_episode(&bytes, &meta, &frames_path)
}

fn episode_dirs(split_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(split_dir).map_err(|e| FormatError::io(split_dir, e))?;
    let mut dirs = Vec::new();
    for e in entries {
        let e = e.map_err(|e| FormatError::io(split_dir, e))?;
        if e.path().join("meta.json").exists() {
            dirs.push(e.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads every episode of a split directory, in episode-id order.
pub fn load_dataset(split_dir: &Path) -> Result<Vec<Episode>> {
    let dirs = episode_dirs(split_dir)?;
    if dirs.is_empty() {
        return Err(FormatError::NoEpisodes(split_dir.to_path_buf()));
    }
    dirs.iter().map(|d| load_episode(d)).collect()
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))?;
    for e in entries {
        let path = e.map_err(|e| FormatError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            let rel = path.strip_prefix(base).expect("under base").to_string_lossy().replace('\\', "/");
            out.push((rel, path));
        }
    }
    Ok(())
}

/// Hash of one file's contents, salted with its length like a git blob.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Content hash of a directory tree: the hash of every `blob path` line,
/// sorted by relative path. Independent of where the tree lives.
pub fn tree_hash(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for (rel, path) in files {
        let bytes = fs::read(&path).map_err(|e| FormatError::io(&path, e))?;
        h.update(format!("{} {rel}\n", blob_hash(&bytes)).as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}
