//! Occupancy grid scenes: storage, clearance maps, connectivity, and the
//! versioned binary file format.

use super::WorldError;
use std::io::{Read, Write};

/// Route archetypes the scene generator can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneCategory {
    OpenSpace,
    TightManeuver,
    Clutter,
}

impl SceneCategory {
    pub const ALL: [SceneCategory; 3] = [
        SceneCategory::OpenSpace,
        SceneCategory::TightManeuver,
        SceneCategory::Clutter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SceneCategory::OpenSpace => "open_space",
            SceneCategory::TightManeuver => "tight_maneuver",
            SceneCategory::Clutter => "clutter",
        }
    }

    pub fn from_name(s: &str) -> Option<SceneCategory> {
        match s {
            "open_space" => Some(SceneCategory::OpenSpace),
            "tight_maneuver" => Some(SceneCategory::TightManeuver),
            "clutter" => Some(SceneCategory::Clutter),
            _ => None,
        }
    }
}

/// Number of semantic classes assigned to cells (walls, dividers, boxes, pillars).
pub const NUM_CELL_CLASSES: u8 = 4;
/// Rendered class index used when a ray exits without hitting anything.
pub const NO_HIT_CLASS: u8 = NUM_CELL_CLASSES;
/// Total semantic channels in an observation, including the no-hit class.
pub const SEM_CHANNELS: u8 = NUM_CELL_CLASSES + 1;

const MAGIC: &[u8; 4] = b"TNLS";
const VERSION: u16 = 1;

/// A grid world with per-cell occupancy, albedo, and semantic id.
///
/// Immutable after construction; all derived maps (clearance) are computed
/// once so scenes can be shared freely across worker threads.
#[derive(Debug, Clone)]
pub struct OccupancyScene {
    width: u32,
    height: u32,
    cell_size: f32,
    occupancy: Vec<bool>,
    albedo: Vec<f32>,
    semantic_id: Vec<u8>,
    category: SceneCategory,
    /// Squared distance (in cell units, center-to-center) to the nearest
    /// occupied cell. Zero for occupied cells.
    clearance_sq: Vec<i64>,
}

impl OccupancyScene {
    pub fn from_parts(
        width: u32,
        height: u32,
        cell_size: f32,
        occupancy: Vec<bool>,
        albedo: Vec<f32>,
        semantic_id: Vec<u8>,
        category: SceneCategory,
    ) -> Self {
        let n = (width * height) as usize;
        assert_eq!(occupancy.len(), n);
        assert_eq!(albedo.len(), n);
        assert_eq!(semantic_id.len(), n);
        let clearance_sq = squared_distance_transform(&occupancy, width as usize, height as usize);
        Self {
            width,
            height,
            cell_size,
            occupancy,
            albedo,
            semantic_id,
            category,
            clearance_sq,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_size(&self) -> f32 {
        self.cell_size
    }

    pub fn category(&self) -> SceneCategory {
        self.category
    }

    pub fn num_cells(&self) -> usize {
        (self.width * self.height) as usize
    }

    #[inline]
    pub fn idx(&self, cx: u32, cy: u32) -> usize {
        (cy * self.width + cx) as usize
    }

    #[inline]
    pub fn occupied(&self, cx: u32, cy: u32) -> bool {
        self.occupancy[self.idx(cx, cy)]
    }

    pub fn albedo_at(&self, cx: u32, cy: u32) -> f32 {
        self.albedo[self.idx(cx, cy)]
    }

    pub fn semantic_at(&self, cx: u32, cy: u32) -> u8 {
        self.semantic_id[self.idx(cx, cy)]
    }

    /// World extent in meters along x.
    pub fn extent_x(&self) -> f64 {
        self.width as f64 * self.cell_size as f64
    }

    /// World extent in meters along y.
    pub fn extent_y(&self) -> f64 {
        self.height as f64 * self.cell_size as f64
    }

    /// Grid cell containing a world point, or None if outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let cx = (x / self.cell_size as f64).floor() as i64;
        let cy = (y / self.cell_size as f64).floor() as i64;
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            None
        } else {
            Some((cx as u32, cy as u32))
        }
    }

    /// World coordinates of a cell center.
    pub fn center_of(&self, cx: u32, cy: u32) -> (f64, f64) {
        let cs = self.cell_size as f64;
        ((cx as f64 + 0.5) * cs, (cy as f64 + 0.5) * cs)
    }

    /// Minimum squared clearance, in cell units, a cell must have to count
    /// as traversable at `clearance` meters.
    pub(crate) fn clearance_cells_sq(&self, clearance: f64) -> i64 {
        if clearance <= 0.0 {
            return 0;
        }
        let cells = clearance / self.cell_size as f64;
        (cells * cells - 1e-6).ceil() as i64
    }

    /// True when the cell is free and its center keeps at least `clearance`
    /// meters (center-to-center) from every occupied cell.
    pub fn traversable(&self, cx: u32, cy: u32, clearance: f64) -> bool {
        let i = self.idx(cx, cy);
        !self.occupancy[i] && self.clearance_sq[i] >= self.clearance_cells_sq(clearance)
    }

    /// Copy of the occupancy layer, row-major.
    pub fn occupancy_vec(&self) -> Vec<bool> {
        self.occupancy.clone()
    }

    pub fn free_fraction(&self) -> f64 {
        let free = self.occupancy.iter().filter(|o| !**o).count();
        free as f64 / self.num_cells() as f64
    }

    /// True when every free cell is reachable from every other free cell
    /// (4-connected flood fill).
    pub fn is_connected(&self) -> bool {
        let w = self.width as usize;
        let h = self.height as usize;
        let start = match self.occupancy.iter().position(|o| !*o) {
            Some(i) => i,
            None => return false,
        };
        let mut seen = vec![false; self.occupancy.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0usize;
        while let Some(i) = stack.pop() {
            count += 1;
            let (cx, cy) = (i % w, i / w);
            let push = |nx: usize, ny: usize, stack: &mut Vec<usize>, seen: &mut Vec<bool>| {
                let j = ny * w + nx;
                if !self.occupancy[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if cx > 0 {
                push(cx - 1, cy, &mut stack, &mut seen);
            }
            if cx + 1 < w {
                push(cx + 1, cy, &mut stack, &mut seen);
            }
            if cy > 0 {
                push(cx, cy - 1, &mut stack, &mut seen);
            }
            if cy + 1 < h {
                push(cx, cy + 1, &mut stack, &mut seen);
            }
        }
        count == self.occupancy.iter().filter(|o| !**o).count()
    }

    /// Serializes the scene in the versioned binary format. The category is
    /// generation metadata and travels in manifests, not in the file.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.num_cells() * 6);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.cell_size.to_le_bytes());
        for i in 0..self.num_cells() {
            out.push(self.occupancy[i] as u8);
            out.extend_from_slice(&self.albedo[i].to_le_bytes());
            out.push(self.semantic_id[i]);
        }
        out
    }

    /// Decodes a scene file. `category` comes from the surrounding manifest
    /// since the wire format does not carry it.
    pub fn decode(bytes: &[u8], category: SceneCategory) -> Result<Self, WorldError> {
        let need = |offset: usize, len: usize, what: &str| -> Result<(), WorldError> {
            if offset + len > bytes.len() {
                Err(WorldError::MalformedScene {
                    reason: format!("truncated while reading {what}"),
                    offset,
                })
            } else {
                Ok(())
            }
        };
        need(0, 4, "magic")?;
        if &bytes[0..4] != MAGIC {
            return Err(WorldError::MalformedScene {
                reason: "bad magic bytes".into(),
                offset: 0,
            });
        }
        need(4, 2, "version")?;
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(WorldError::MalformedScene {
                reason: format!("unsupported version {version}"),
                offset: 4,
            });
        }
        need(6, 12, "header")?;
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let cell_size = f32::from_le_bytes(bytes[14..18].try_into().unwrap());
        let n = (width as usize) * (height as usize);
        let mut occupancy = Vec::with_capacity(n);
        let mut albedo = Vec::with_capacity(n);
        let mut semantic_id = Vec::with_capacity(n);
        let mut off = 18usize;
        for _ in 0..n {
            need(off, 6, "cell record")?;
            occupancy.push(bytes[off] != 0);
            albedo.push(f32::from_le_bytes(bytes[off + 1..off + 5].try_into().unwrap()));
            semantic_id.push(bytes[off + 5]);
            off += 6;
        }
        if off != bytes.len() {
            return Err(WorldError::MalformedScene {
                reason: "trailing bytes after cell records".into(),
                offset: off,
            });
        }
        Ok(Self::from_parts(
            width, height, cell_size, occupancy, albedo, semantic_id, category,
        ))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), WorldError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, category: SceneCategory) -> Result<Self, WorldError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode(&bytes, category)
    }
}

/// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher),
/// distance in cell units from each cell center to the nearest occupied
/// cell center.
fn squared_distance_transform(occ: &[bool], w: usize, h: usize) -> Vec<i64> {
    const INF: f64 = 1e18;
    let mut grid = vec![INF; w * h];
    for i in 0..w * h {
        if occ[i] {
            grid[i] = 0.0;
        }
    }
    let mut buf = vec![0.0f64; w.max(h)];
    // columns
    for x in 0..w {
        for y in 0..h {
            buf[y] = grid[y * w + x];
        }
        let out = dt_1d(&buf[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    // rows
    for y in 0..h {
        buf[..w].copy_from_slice(&grid[y * w..y * w + w]);
        let out = dt_1d(&buf[..w]);
        grid[y * w..y * w + w].copy_from_slice(&out);
    }
    grid.iter()
        .map(|&d| if d >= INF { i64::MAX } else { d.round() as i64 })
        .collect()
}

fn dt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -1e20;
    z[1] = 1e20;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                break;
            }
        }
        if s > z[k] {
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = 1e20;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
    d
}
