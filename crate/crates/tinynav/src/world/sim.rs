//! Collision checking and kinematic stepping.

use super::{Embodiment, OccupancyScene, Pose, Twist, WorldError};

/// True iff the closed disc of `radius` at the pose position intersects any
/// occupied cell region. Positions outside the grid count as collisions.
pub fn is_collision(scene: &OccupancyScene, pose: &Pose, radius: f64) -> bool {
    if !pose.is_finite() {
        return true;
    }
    let (x, y) = (pose.x, pose.y);
    if x < 0.0 || y < 0.0 || x > scene.extent_x() || y > scene.extent_y() {
        return true;
    }
    let cs = scene.cell_size() as f64;
    // widen the scan window by one cell so grazing contact on a shared cell
    // boundary is still examined (closed-disc semantics)
    let x0 = (((x - radius) / cs).floor() as i64 - 1).max(0);
    let y0 = (((y - radius) / cs).floor() as i64 - 1).max(0);
    let x1 = (((x + radius) / cs).floor() as i64 + 1).min(scene.width() as i64 - 1);
    let y1 = (((y + radius) / cs).floor() as i64 + 1).min(scene.height() as i64 - 1);
    let r2 = radius * radius;
    for cy in y0..=y1 {
        for cx in x0..=x1 {
            if !scene.occupied(cx as u32, cy as u32) {
                continue;
            }
            // closest point of the cell's square region to the disc center
            let lx = cx as f64 * cs;
            let ly = cy as f64 * cs;
            let px = x.clamp(lx, lx + cs);
            let py = y.clamp(ly, ly + cs);
            let dx = px - x;
            let dy = py - y;
            if dx * dx + dy * dy <= r2 {
                return true;
            }
        }
    }
    false
}

/// Euler-integrates one control period and gates the result on collision:
/// a colliding candidate leaves the pose unchanged and reports `collided`.
pub fn step_kinematic(
    scene: &OccupancyScene,
    pose: &Pose,
    twist: &Twist,
    emb: &Embodiment,
) -> Result<(Pose, bool), WorldError> {
    if !twist.is_finite() {
        return Err(WorldError::NonFiniteTwist {
            v: twist.v,
            omega: twist.omega,
        });
    }
    let candidate = Pose::new(
        pose.x + twist.v * pose.theta.cos() * emb.dt,
        pose.y + twist.v * pose.theta.sin() * emb.dt,
        pose.theta + twist.omega * emb.dt,
    );
    if is_collision(scene, &candidate, emb.radius) {
        Ok((*pose, true))
    } else {
        Ok((candidate, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::SceneCategory;

    /// Room with power-of-two cell size so grazing-contact distances are
    /// exact in binary floating point.
    fn room(w: u32, h: u32, cell_size: f32) -> OccupancyScene {
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
            cell_size,
            occ,
            vec![0.5; n],
            vec![0; n],
            SceneCategory::OpenSpace,
        )
    }

    #[test]
    fn free_center_is_not_collision() {
        let s = room(10, 10, 0.1);
        let p = Pose::new(0.5, 0.5, 0.0);
        assert!(!is_collision(&s, &p, 0.1));
    }

    #[test]
    fn overlap_with_wall_is_collision() {
        let s = room(10, 10, 0.1);
        let p = Pose::new(0.05, 0.5, 0.0);
        assert!(is_collision(&s, &p, 0.1));
    }

    #[test]
    fn grazing_contact_at_exact_radius_is_collision() {
        // cell_size 0.125 keeps boundaries exact in binary; wall region ends
        // at x = 0.125, disc center at 0.25 with radius 0.125 touches it.
        let s = room(16, 16, 0.125);
        let p = Pose::new(0.25, 1.0, 0.0);
        assert!(is_collision(&s, &p, 0.125));
        assert!(!is_collision(&s, &p, 0.124));
    }

    #[test]
    fn outside_grid_is_collision() {
        let s = room(10, 10, 0.1);
        assert!(is_collision(&s, &Pose::new(-0.1, 0.5, 0.0), 0.05));
        assert!(is_collision(&s, &Pose::new(0.5, 99.0, 0.0), 0.05));
    }

    #[test]
    fn straight_step_integrates_euler() {
        let s = room(30, 30, 0.1);
        let emb = Embodiment::default();
        let p = Pose::new(1.5, 1.5, 0.0);
        let (q, collided) = step_kinematic(&s, &p, &Twist::new(0.3, 0.0), &emb).unwrap();
        assert!(!collided);
        assert!((q.x - 1.575).abs() < 1e-12);
        assert!((q.y - 1.5).abs() < 1e-12);
        assert_eq!(q.theta, 0.0);
    }

    #[test]
    fn pure_rotation_step() {
        let s = room(30, 30, 0.1);
        let emb = Embodiment::default();
        let p = Pose::new(1.5, 1.5, 0.0);
        let (q, collided) = step_kinematic(&s, &p, &Twist::new(0.0, 1.0), &emb).unwrap();
        assert!(!collided);
        assert_eq!(q.x, 1.5);
        assert_eq!(q.y, 1.5);
        assert!((q.theta - 0.25).abs() < 1e-12);
    }

    #[test]
    fn colliding_candidate_leaves_pose_unchanged() {
        let s = room(10, 10, 0.1);
        let emb = Embodiment::default();
        // facing the wall, one step ahead would overlap it
        let p = Pose::new(0.25, 0.5, std::f64::consts::PI);
        let (q, collided) = step_kinematic(&s, &p, &Twist::new(0.3, 0.0), &emb).unwrap();
        assert!(collided);
        assert_eq!(q, p);
    }

    #[test]
    fn non_finite_twist_is_an_error() {
        let s = room(10, 10, 0.1);
        let emb = Embodiment::default();
        let p = Pose::new(0.5, 0.5, 0.0);
        assert!(step_kinematic(&s, &p, &Twist::new(f64::NAN, 0.0), &emb).is_err());
    }
}
