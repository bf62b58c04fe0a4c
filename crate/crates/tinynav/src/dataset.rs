//! Training-data persistence: triplet shards, trajectory logs, hindsight
//! relabeling for the offline pipeline, and waypoint normalization.

use crate::world::{Observation, Pose, Twist};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"TNTD";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("shard is malformed: {reason} at byte offset {offset}")]
    Malformed { reason: String, offset: usize },
    #[error("triplet {index} does not match shard dims: {reason}")]
    Inhomogeneous { index: usize, reason: String },
    #[error("normalization scale must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed per-shard dimensions recorded in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardDims {
    /// Past observations per triplet.
    pub p: u16,
    /// Waypoints per label.
    pub h: u16,
    /// Observation columns.
    pub w: u16,
    /// Semantic channels (incl. the no-hit class).
    pub c: u16,
}

/// One training example: a stack of past observations (oldest first), the
/// subgoal image, and the oracle waypoint labels relative to the newest
/// observation's pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub obs_stack: Vec<Observation>,
    pub goal_obs: Observation,
    pub waypoints: Vec<[f64; 3]>,
}

impl Triplet {
    fn check(&self, dims: &ShardDims, index: usize) -> Result<(), DatasetError> {
        let fail = |reason: String| DatasetError::Inhomogeneous { index, reason };
        if self.obs_stack.len() != dims.p as usize {
            return Err(fail(format!(
                "expected {} observations, found {}",
                dims.p,
                self.obs_stack.len()
            )));
        }
        if self.waypoints.len() != dims.h as usize {
            return Err(fail(format!(
                "expected {} waypoints, found {}",
                dims.h,
                self.waypoints.len()
            )));
        }
        for obs in self.obs_stack.iter().chain(std::iter::once(&self.goal_obs)) {
            if obs.width() != dims.w as u32 {
                return Err(fail(format!(
                    "expected width {}, found {}",
                    dims.w,
                    obs.width()
                )));
            }
            if obs.num_sem_channels() as u16 != dims.c {
                return Err(fail("semantic channel count mismatch".into()));
            }
        }
        let finite = self.waypoints.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(fail("non-finite waypoint".into()));
        }
        Ok(())
    }
}

fn push_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_observation(out: &mut Vec<u8>, obs: &Observation) {
    push_f32(out, obs.light_level);
    for &v in &obs.inv_depth {
        push_f32(out, v);
    }
    for &v in &obs.appearance {
        push_f32(out, v);
    }
    for col in 0..obs.width() as usize {
        for v in obs.semantic_onehot(col) {
            push_f32(out, v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], DatasetError> {
        if self.offset + len > self.bytes.len() {
            return Err(DatasetError::Malformed {
                reason: format!("truncated while reading {what}"),
                offset: self.offset,
            });
        }
        let s = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32, DatasetError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn decode_observation(r: &mut Reader, dims: &ShardDims) -> Result<Observation, DatasetError> {
    let w = dims.w as usize;
    let c = dims.c as usize;
    let light_level = r.f32("light level")?;
    let mut inv_depth = Vec::with_capacity(w);
    for _ in 0..w {
        inv_depth.push(r.f32("inv depth")?);
    }
    let mut appearance = Vec::with_capacity(w);
    for _ in 0..w {
        appearance.push(r.f32("appearance")?);
    }
    let mut semantic = Vec::with_capacity(w);
    for col in 0..w {
        let off = r.offset;
        let mut class = None;
        for ch in 0..c {
            let v = r.f32("semantic onehot")?;
            if v == 1.0 {
                if class.is_some() {
                    return Err(DatasetError::Malformed {
                        reason: format!("semantic one-hot of column {col} has two hot channels"),
                        offset: off,
                    });
                }
                class = Some(ch as u8);
            } else if v != 0.0 {
                return Err(DatasetError::Malformed {
                    reason: format!("semantic one-hot of column {col} has value {v}"),
                    offset: off,
                });
            }
        }
        semantic.push(class.ok_or_else(|| DatasetError::Malformed {
            reason: format!("semantic one-hot of column {col} has no hot channel"),
            offset: off,
        })?);
    }
    Ok(Observation::from_parts(
        dims.w as u32,
        inv_depth,
        appearance,
        semantic,
        light_level,
    ))
}

/// Appends one observation in the shard payload layout (f32 throughout).
pub(crate) fn encode_observation_bytes(out: &mut Vec<u8>, obs: &Observation) {
    encode_observation(out, obs)
}

/// Decodes one observation in the shard payload layout; returns the
/// observation and the number of bytes consumed.
pub(crate) fn decode_observation_bytes(
    bytes: &[u8],
    w: usize,
    c: usize,
) -> Result<(Observation, usize), DatasetError> {
    let mut r = Reader { bytes, offset: 0 };
    let dims = ShardDims {
        p: 0,
        h: 0,
        w: w as u16,
        c: c as u16,
    };
    let obs = decode_observation(&mut r, &dims)?;
    Ok((obs, r.offset))
}

/// Serializes triplets into a shard byte buffer. All payloads are f32.
pub fn encode_shard(dims: &ShardDims, triplets: &[Triplet]) -> Result<Vec<u8>, DatasetError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dims.p.to_le_bytes());
    out.extend_from_slice(&dims.h.to_le_bytes());
    out.extend_from_slice(&dims.w.to_le_bytes());
    out.extend_from_slice(&dims.c.to_le_bytes());
    out.extend_from_slice(&(triplets.len() as u64).to_le_bytes());
    for (i, t) in triplets.iter().enumerate() {
        t.check(dims, i)?;
        for obs in &t.obs_stack {
            encode_observation(&mut out, obs);
        }
        encode_observation(&mut out, &t.goal_obs);
        for wp in &t.waypoints {
            for &v in wp {
                push_f32(&mut out, v as f32);
            }
        }
    }
    Ok(out)
}

/// Parses a shard byte buffer.
pub fn decode_shard(bytes: &[u8]) -> Result<(ShardDims, Vec<Triplet>), DatasetError> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(DatasetError::Malformed {
            reason: "bad magic bytes".into(),
            offset: 0,
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(DatasetError::Malformed {
            reason: format!("unsupported version {version}"),
            offset: 4,
        });
    }
    let dims = ShardDims {
        p: r.u16("P")?,
        h: r.u16("H")?,
        w: r.u16("W")?,
        c: r.u16("C_s")?,
    };
    let count = r.u64("count")?;
    let mut triplets = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut obs_stack = Vec::with_capacity(dims.p as usize);
        for _ in 0..dims.p {
            obs_stack.push(decode_observation(&mut r, &dims)?);
        }
        let goal_obs = decode_observation(&mut r, &dims)?;
        let mut waypoints = Vec::with_capacity(dims.h as usize);
        for _ in 0..dims.h {
            let x = r.f32("waypoint x")? as f64;
            let y = r.f32("waypoint y")? as f64;
            let t = r.f32("waypoint theta")? as f64;
            waypoints.push([x, y, t]);
        }
        triplets.push(Triplet {
            obs_stack,
            goal_obs,
            waypoints,
        });
    }
    if r.offset != bytes.len() {
        return Err(DatasetError::Malformed {
            reason: "trailing bytes after last triplet".into(),
            offset: r.offset,
        });
    }
    Ok((dims, triplets))
}

pub fn write_shard(
    path: &Path,
    dims: &ShardDims,
    triplets: &[Triplet],
) -> Result<(), DatasetError> {
    let bytes = encode_shard(dims, triplets)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_shard(path: &Path) -> Result<(ShardDims, Vec<Triplet>), DatasetError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_shard(&bytes)
}

/// Writes a shard manifest: one `path count` line per shard.
pub fn write_manifest(path: &Path, entries: &[(String, u64)]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for (p, count) in entries {
        out.push_str(&format!("{p} {count}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, u64)>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let p = it
            .next()
            .ok_or_else(|| DatasetError::Malformed {
                reason: format!("manifest line {} missing path", i + 1),
                offset: 0,
            })?
            .to_string();
        let count = it
            .next()
            .and_then(|c| c.parse::<u64>().ok())
            .ok_or_else(|| DatasetError::Malformed {
                reason: format!("manifest line {} missing count", i + 1),
                offset: 0,
            })?;
        entries.push((p, count));
    }
    Ok(entries)
}

/// A recorded drive: per-step pose, observation, and commanded twist at a
/// fixed control period.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
    pub scene_seed: u64,
    pub light_level: f32,
}

#[derive(Debug, Clone)]
pub struct LogRecord {
    pub pose: Pose,
    pub observation: Observation,
    pub twist: Twist,
}

/// Offline (real-data analog) relabeling parameters.
#[derive(Debug, Clone, Copy)]
pub struct OfflineConfig {
    /// Minimum goal offset in frames.
    pub l_min: usize,
    /// Maximum goal offset in frames.
    pub l_max: usize,
    /// Per-dataset waypoint normalization scale, meters.
    pub normalization_scale: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            l_min: 0,
            l_max: 10,
            normalization_scale: 1.0,
        }
    }
}

/// Builds one hindsight-relabeled triplet at log index `t`: the observation
/// stack is frames t-p+1..=t, the goal is frame t+l with l drawn uniformly
/// from [l_min, l_max], and the labels are the h future poses expressed in
/// frame t. Returns None when history or future is insufficient (a
/// skip-sample signal, not a fault).
pub fn relabel_hindsight(
    log: &TrajectoryLog,
    t: usize,
    p: usize,
    horizon: usize,
    cfg: &OfflineConfig,
    seed: u64,
) -> Option<Triplet> {
    let n = log.records.len();
    if t + 1 < p {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = rng.gen_range(cfg.l_min..=cfg.l_max);
    if t + l >= n || t + horizon >= n {
        return None;
    }
    let obs_stack: Vec<Observation> = (t + 1 - p..=t)
        .map(|i| log.records[i].observation.clone())
        .collect();
    let goal_obs = log.records[t + l].observation.clone();
    let anchor = log.records[t].pose;
    let waypoints: Vec<[f64; 3]> = (t + 1..=t + horizon)
        .map(|i| {
            let rel = anchor.relative_to(&log.records[i].pose);
            [rel.x, rel.y, rel.theta]
        })
        .collect();
    Some(Triplet {
        obs_stack,
        goal_obs,
        waypoints,
    })
}

/// Divides waypoint positions by `scale`, leaving headings untouched.
pub fn normalize_waypoints(wps: &mut [[f64; 3]], scale: f64) -> Result<(), DatasetError> {
    if !(scale > 0.0) {
        return Err(DatasetError::BadScale(scale));
    }
    for wp in wps.iter_mut() {
        wp[0] /= scale;
        wp[1] /= scale;
    }
    Ok(())
}

/// Multiplies waypoint positions by `scale`; inverse of
/// [`normalize_waypoints`].
pub fn denormalize_waypoints(wps: &mut [[f64; 3]], scale: f64) -> Result<(), DatasetError> {
    if !(scale > 0.0) {
        return Err(DatasetError::BadScale(scale));
    }
    for wp in wps.iter_mut() {
        wp[0] *= scale;
        wp[1] *= scale;
    }
    Ok(())
}

/// Mean Euclidean distance of waypoints from their frame origin across a
/// dataset; the per-dataset normalization statistic.
pub fn average_waypoint_distance(triplets: &[Triplet]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in triplets {
        for wp in &t.waypoints {
            sum += wp[0].hypot(wp[1]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
