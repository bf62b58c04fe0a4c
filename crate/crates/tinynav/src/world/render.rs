//! Panoramic scanline renderer: one ray per image column, DDA grid
//! traversal, inverse-depth + appearance + semantic channels.

use super::{OccupancyScene, Pose, WorldError, NO_HIT_CLASS, SEM_CHANNELS};

/// Scanline camera intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    /// Horizontal field of view in radians.
    pub fov: f64,
    /// Number of image columns.
    pub width: u32,
    /// Rays hitting nothing within this range report no hit.
    pub max_range: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fov: 110.0f64.to_radians(),
            width: 32,
            max_range: 10.0,
        }
    }
}

/// A rendered panoramic scanline image. Per column: inverse depth (1/m, 0
/// when nothing is hit), appearance (albedo times light level), and a
/// semantic class index (`NO_HIT_CLASS` when the ray exits).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    width: u32,
    pub inv_depth: Vec<f32>,
    pub appearance: Vec<f32>,
    pub semantic: Vec<u8>,
    pub light_level: f32,
}

impl Observation {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn num_sem_channels(&self) -> u8 {
        SEM_CHANNELS
    }

    /// One-hot semantic channels for a column; sums to exactly 1.
    pub fn semantic_onehot(&self, col: usize) -> [f32; SEM_CHANNELS as usize] {
        let mut out = [0.0f32; SEM_CHANNELS as usize];
        out[self.semantic[col] as usize] = 1.0;
        out
    }

    pub(crate) fn from_parts(
        width: u32,
        inv_depth: Vec<f32>,
        appearance: Vec<f32>,
        semantic: Vec<u8>,
        light_level: f32,
    ) -> Self {
        Self {
            width,
            inv_depth,
            appearance,
            semantic,
            light_level,
        }
    }
}

/// Casts one ray and returns (distance, cell) of the first occupied cell hit
/// within `max_range`, using Amanatides-Woo grid traversal.
fn raycast(
    scene: &OccupancyScene,
    x: f64,
    y: f64,
    angle: f64,
    max_range: f64,
) -> Option<(f64, (u32, u32))> {
    let cs = scene.cell_size() as f64;
    let (dy, dx) = angle.sin_cos();
    let (mut cx, mut cy) = match scene.cell_of(x, y) {
        Some(c) => (c.0 as i64, c.1 as i64),
        None => return None,
    };
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    // distance along the ray to the first vertical / horizontal cell border
    let mut t_max_x = if dx != 0.0 {
        let edge = if dx > 0.0 { (cx + 1) as f64 * cs } else { cx as f64 * cs };
        (edge - x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        let edge = if dy > 0.0 { (cy + 1) as f64 * cs } else { cy as f64 * cs };
        (edge - y) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { cs / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { cs / dy.abs() } else { f64::INFINITY };

    loop {
        let t;
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cy += step_y;
        }
        if t > max_range {
            return None;
        }
        if cx < 0 || cy < 0 || cx >= scene.width() as i64 || cy >= scene.height() as i64 {
            return None;
        }
        if scene.occupied(cx as u32, cy as u32) {
            return Some((t, (cx as u32, cy as u32)));
        }
    }
}

/// Renders a panoramic scanline observation: `camera.width` rays spread
/// uniformly across the field of view centered on the pose heading, column 0
/// leftmost. Pure and deterministic.
pub fn render(
    scene: &OccupancyScene,
    pose: &Pose,
    camera: &Camera,
    light_level: f32,
) -> Result<Observation, WorldError> {
    let in_wall = match scene.cell_of(pose.x, pose.y) {
        Some((cx, cy)) => scene.occupied(cx, cy),
        None => true,
    };
    if in_wall {
        return Err(WorldError::PoseInCollision {
            x: pose.x,
            y: pose.y,
        });
    }
    let w = camera.width as usize;
    let mut inv_depth = vec![0.0f32; w];
    let mut appearance = vec![0.0f32; w];
    let mut semantic = vec![NO_HIT_CLASS; w];
    for i in 0..w {
        let offset = camera.fov / 2.0 - (i as f64 + 0.5) * camera.fov / w as f64;
        let angle = pose.theta + offset;
        if let Some((t, (cx, cy))) = raycast(scene, pose.x, pose.y, angle, camera.max_range) {
            inv_depth[i] = (1.0 / t) as f32;
            appearance[i] = scene.albedo_at(cx, cy) * light_level;
            semantic[i] = scene.semantic_at(cx, cy);
        }
    }
    Ok(Observation::from_parts(
        camera.width,
        inv_depth,
        appearance,
        semantic,
        light_level,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::SceneCategory;

    fn room(w: u32, h: u32) -> OccupancyScene {
        let n = (w * h) as usize;
        let mut occ = vec![false; n];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    occ[(y * w + x) as usize] = true;
                }
            }
        }
        OccupancyScene::from_parts(
            w,
            h,
            0.1,
            occ,
            vec![0.5; n],
            vec![2; n],
            SceneCategory::OpenSpace,
        )
    }

    #[test]
    fn center_column_sees_inverse_distance() {
        // agent faces +x; the east wall's inner face is at x = 2.9; stand at
        // 0.9 so the center ray of an odd-width camera travels exactly 2 m.
        let s = room(30, 30);
        let wall_face = 29.0 * s.cell_size() as f64;
        let pose = Pose::new(wall_face - 2.0, 1.5, 0.0);
        let cam = Camera {
            fov: 110.0f64.to_radians(),
            width: 33,
            max_range: 10.0,
        };
        let obs = render(&s, &pose, &cam, 1.0).unwrap();
        let center = 16usize;
        assert!(
            (obs.inv_depth[center] as f64 - 0.5).abs() < 1e-6,
            "inv depth {}",
            obs.inv_depth[center]
        );
        assert_eq!(obs.semantic[center], 2);
    }

    #[test]
    fn appearance_is_exactly_linear_in_light_level() {
        let s = room(20, 20);
        let pose = Pose::new(1.0, 1.0, 0.7);
        let cam = Camera::default();
        let full = render(&s, &pose, &cam, 1.0).unwrap();
        let dim = render(&s, &pose, &cam, 0.2).unwrap();
        for i in 0..cam.width as usize {
            assert_eq!(dim.appearance[i], full.appearance[i] * 0.2);
            assert_eq!(dim.inv_depth[i], full.inv_depth[i]);
            assert_eq!(dim.semantic[i], full.semantic[i]);
        }
    }

    #[test]
    fn no_hit_yields_sentinel_channels() {
        let s = room(20, 20);
        let pose = Pose::new(1.0, 1.0, 0.0);
        let cam = Camera {
            fov: 110.0f64.to_radians(),
            width: 9,
            max_range: 0.5, // shorter than any wall distance
        };
        let obs = render(&s, &pose, &cam, 1.0).unwrap();
        for i in 0..9 {
            assert_eq!(obs.inv_depth[i], 0.0);
            assert_eq!(obs.appearance[i], 0.0);
            assert_eq!(obs.semantic[i], NO_HIT_CLASS);
            let onehot = obs.semantic_onehot(i);
            assert_eq!(onehot.iter().sum::<f32>(), 1.0);
            assert_eq!(onehot[NO_HIT_CLASS as usize], 1.0);
        }
    }

    #[test]
    fn render_is_pure_and_bit_identical() {
        let s = room(24, 24);
        let pose = Pose::new(1.1, 0.9, -2.1);
        let cam = Camera::default();
        let a = render(&s, &pose, &cam, 0.8).unwrap();
        let b = render(&s, &pose, &cam, 0.8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_inside_wall_is_error() {
        let s = room(20, 20);
        let pose = Pose::new(0.05, 0.05, 0.0);
        assert!(render(&s, &pose, &Camera::default(), 1.0).is_err());
    }
}
