//! Procedural scene generation for the three route archetypes.

use super::scene::{OccupancyScene, SceneCategory};
use super::{WorldError, DEFAULT_CELL_SIZE};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MIN_SIZE: u32 = 16;
const MAX_ATTEMPTS: u32 = 32;
/// Agent radius assumed by the generator when sizing corridors.
const GEN_AGENT_RADIUS: f64 = 0.1;

/// Corridor width limit in cells for tight-maneuver scenes:
/// 3 * radius + 2 * cell_size, measured in whole cells.
fn corridor_limit_cells() -> u32 {
    let limit = 3.0 * GEN_AGENT_RADIUS + 2.0 * DEFAULT_CELL_SIZE as f64;
    (limit / DEFAULT_CELL_SIZE as f64 + 1e-9).floor() as u32
}

/// Deterministic per-cell hash in [0, 1) used for wall texture.
fn hash01(x: u32, y: u32, seed: u64) -> f32 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    h = h.wrapping_add((x as u64) << 32 | y as u64);
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

struct Builder {
    size: u32,
    occ: Vec<bool>,
    albedo: Vec<f32>,
    sem: Vec<u8>,
    seed: u64,
}

impl Builder {
    fn new(size: u32, seed: u64) -> Self {
        let n = (size * size) as usize;
        let mut b = Self {
            size,
            occ: vec![false; n],
            albedo: vec![0.0; n],
            sem: vec![0; n],
            seed,
        };
        for y in 0..size {
            for x in 0..size {
                if x == 0 || y == 0 || x == size - 1 || y == size - 1 {
                    b.set_wall(x, y, 0);
                }
            }
        }
        b
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.size + x) as usize
    }

    fn set_wall(&mut self, x: u32, y: u32, sem: u8) {
        let i = self.idx(x, y);
        self.occ[i] = true;
        self.sem[i] = sem;
        self.albedo[i] = 0.25 + 0.7 * hash01(x, y, self.seed);
    }

    fn clear(&mut self, x: u32, y: u32) {
        let i = self.idx(x, y);
        self.occ[i] = false;
        self.sem[i] = 0;
        self.albedo[i] = 0.0;
    }

    fn fill_rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, sem: u8) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.set_wall(x, y, sem);
            }
        }
    }

    /// True when the rectangle (inclusive) contains no occupied cell and
    /// keeps a `margin`-cell free ring around it.
    fn region_free(&self, x0: i64, y0: i64, x1: i64, y1: i64, margin: i64) -> bool {
        for y in (y0 - margin)..=(y1 + margin) {
            for x in (x0 - margin)..=(x1 + margin) {
                if x < 0 || y < 0 || x >= self.size as i64 || y >= self.size as i64 {
                    return false;
                }
                if self.occ[self.idx(x as u32, y as u32)] {
                    return false;
                }
            }
        }
        true
    }

    fn build(self, category: SceneCategory) -> OccupancyScene {
        OccupancyScene::from_parts(
            self.size,
            self.size,
            DEFAULT_CELL_SIZE,
            self.occ,
            self.albedo,
            self.sem,
            category,
        )
    }
}

fn scatter_obstacles(
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
    count: usize,
    max_extent: u32,
    margin: i64,
) -> usize {
    let mut placed = 0;
    let mut tries = 0;
    while placed < count && tries < count * 40 {
        tries += 1;
        let ext_x = rng.gen_range(1..=max_extent);
        let ext_y = rng.gen_range(1..=max_extent);
        let x0 = rng.gen_range(2..b.size.saturating_sub(ext_x + 2));
        let y0 = rng.gen_range(2..b.size.saturating_sub(ext_y + 2));
        if !b.region_free(
            x0 as i64,
            y0 as i64,
            (x0 + ext_x - 1) as i64,
            (y0 + ext_y - 1) as i64,
            margin,
        ) {
            continue;
        }
        let sem = if ext_x == 1 && ext_y == 1 { 3 } else { 2 };
        b.fill_rect(x0, y0, x0 + ext_x - 1, y0 + ext_y - 1, sem);
        placed += 1;
    }
    placed
}

fn build_open_space(size: u32, seed: u64, rng: &mut ChaCha8Rng) -> OccupancyScene {
    let mut b = Builder::new(size, seed);
    let target = (size as usize * size as usize) / 400;
    scatter_obstacles(&mut b, rng, target.clamp(2, 6), 2, 5);
    b.build(SceneCategory::OpenSpace)
}

fn build_tight(size: u32, seed: u64, rng: &mut ChaCha8Rng) -> OccupancyScene {
    let mut b = Builder::new(size, seed);
    let corridor = corridor_limit_cells();
    let slabs = if size >= 48 { 2 } else { 1 };
    for s in 0..slabs {
        let thickness = rng.gen_range(3..=(size / 8).max(3));
        // slab x-position: spread slabs across distinct bands
        let band = (size - 2) / slabs as u32;
        let lo = 1 + s as u32 * band + band / 4;
        let hi = 1 + s as u32 * band + (3 * band) / 4;
        let x0 = rng.gen_range(lo..hi.max(lo + 1)).min(size - thickness - 2);
        let y0 = rng.gen_range(2..size - corridor - 2);
        b.fill_rect(x0, 1, x0 + thickness - 1, size - 2, 1);
        for y in y0..y0 + corridor {
            for x in x0..x0 + thickness {
                b.clear(x, y);
            }
        }
    }
    scatter_obstacles(&mut b, rng, 2, 1, 5);
    b.build(SceneCategory::TightManeuver)
}

fn build_clutter(size: u32, seed: u64, rng: &mut ChaCha8Rng) -> OccupancyScene {
    let mut b = Builder::new(size, seed);
    let count = rng.gen_range(15..=15 + size as usize / 8);
    scatter_obstacles(&mut b, rng, count, 2, 5);
    b.build(SceneCategory::Clutter)
}

/// Measured corridor width in cells: for each free cell, the smaller of the
/// contiguous free runs through it along x and along y; the scene-level
/// value is the minimum over free cells.
pub(crate) fn min_corridor_width_cells(scene: &OccupancyScene) -> Option<u32> {
    let w = scene.width();
    let h = scene.height();
    let mut best: Option<u32> = None;
    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            if scene.occupied(cx, cy) {
                continue;
            }
            let mut hrun = 1u32;
            let mut x = cx;
            while x > 0 && !scene.occupied(x - 1, cy) {
                hrun += 1;
                x -= 1;
            }
            x = cx;
            while x + 1 < w && !scene.occupied(x + 1, cy) {
                hrun += 1;
                x += 1;
            }
            let mut vrun = 1u32;
            let mut y = cy;
            while y > 0 && !scene.occupied(cx, y - 1) {
                vrun += 1;
                y -= 1;
            }
            y = cy;
            while y + 1 < h && !scene.occupied(cx, y + 1) {
                vrun += 1;
                y += 1;
            }
            let width = hrun.min(vrun);
            best = Some(best.map_or(width, |b: u32| b.min(width)));
        }
    }
    best
}

fn interior_free_fraction(scene: &OccupancyScene) -> f64 {
    let w = scene.width();
    let h = scene.height();
    let mut free = 0usize;
    let mut total = 0usize;
    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            total += 1;
            if !scene.occupied(cx, cy) {
                free += 1;
            }
        }
    }
    free as f64 / total as f64
}

fn count_obstacle_components(scene: &OccupancyScene) -> usize {
    // connected components of interior occupied cells (4-connected)
    let w = scene.width() as usize;
    let h = scene.height() as usize;
    let mut seen = vec![false; w * h];
    let mut comps = 0;
    for cy in 1..h - 1 {
        for cx in 1..w - 1 {
            let i = cy * w + cx;
            if seen[i] || !scene.occupied(cx as u32, cy as u32) {
                continue;
            }
            comps += 1;
            let mut stack = vec![i];
            seen[i] = true;
            while let Some(j) = stack.pop() {
                let (jx, jy) = (j % w, j / w);
                for (nx, ny) in [
                    (jx.wrapping_sub(1), jy),
                    (jx + 1, jy),
                    (jx, jy.wrapping_sub(1)),
                    (jx, jy + 1),
                ] {
                    if nx >= w - 1 || ny >= h - 1 || nx == 0 || ny == 0 {
                        continue;
                    }
                    let k = ny * w + nx;
                    if scene.occupied(nx as u32, ny as u32) && !seen[k] {
                        seen[k] = true;
                        stack.push(k);
                    }
                }
            }
        }
    }
    comps
}

fn satisfies_category(scene: &OccupancyScene) -> bool {
    if !scene.is_connected() {
        return false;
    }
    match scene.category() {
        SceneCategory::OpenSpace => interior_free_fraction(scene) >= 0.70,
        SceneCategory::TightManeuver => {
            min_corridor_width_cells(scene).is_some_and(|w| w <= corridor_limit_cells())
        }
        SceneCategory::Clutter => count_obstacle_components(scene) >= 15,
    }
}

/// Generates a connected scene of the requested category. Deterministic for
/// a given (category, size, seed); fails after bounded retries when the
/// constraints cannot be met at the given size.
pub fn generate_scene(
    category: SceneCategory,
    size: u32,
    seed: u64,
) -> Result<OccupancyScene, WorldError> {
    if size < MIN_SIZE {
        return Err(WorldError::SceneTooSmall(size, MIN_SIZE));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let attempt_seed = seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let scene = match category {
            SceneCategory::OpenSpace => build_open_space(size, attempt_seed, &mut rng),
            SceneCategory::TightManeuver => build_tight(size, attempt_seed, &mut rng),
            SceneCategory::Clutter => build_clutter(size, attempt_seed, &mut rng),
        };
        if satisfies_category(&scene) {
            return Ok(scene);
        }
    }
    Err(WorldError::GenerationFailed {
        category,
        size,
        attempts: MAX_ATTEMPTS,
    })
}
