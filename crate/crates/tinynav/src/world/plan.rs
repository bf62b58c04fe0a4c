//! Clearance-aware geodesic planning on the 8-connected cell graph.

use super::{OccupancyScene, Pose, WorldError};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, cell); cell index breaks ties deterministically
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct SearchResult {
    /// (straight, diagonal) step counts per settled cell.
    steps: Vec<(u32, u32)>,
    prev: Vec<u32>,
    settled: Vec<bool>,
}

/// Dijkstra from `start_cell` over cells traversable at `clearance`.
/// Diagonal moves are blocked when both adjacent orthogonal cells are
/// untraversable (no corner cutting through touching obstacles).
fn dijkstra(
    scene: &OccupancyScene,
    start_cell: (u32, u32),
    goal_cell: Option<(u32, u32)>,
    clearance: f64,
) -> SearchResult {
    let w = scene.width();
    let h = scene.height();
    let n = (w * h) as usize;
    let cs = scene.cell_size() as f64;
    let start = scene.idx(start_cell.0, start_cell.1) as u32;
    let goal = goal_cell.map(|(cx, cy)| scene.idx(cx, cy) as u32);

    let mut dist = vec![f64::INFINITY; n];
    let mut steps = vec![(0u32, 0u32); n];
    let mut prev = vec![u32::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[start as usize] = 0.0;
    heap.push(HeapEntry {
        cost: 0.0,
        cell: start,
    });

    const NEIGHBORS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];

    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        let i = cell as usize;
        if settled[i] {
            continue;
        }
        settled[i] = true;
        if Some(cell) == goal {
            break;
        }
        let cx = (cell % w) as i64;
        let cy = (cell / w) as i64;
        for (dx, dy) in NEIGHBORS {
            let nx = cx + dx;
            let ny = cy + dy;
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if !scene.traversable(nx as u32, ny as u32, clearance) {
                continue;
            }
            if diagonal
                && !scene.traversable(nx as u32, cy as u32, clearance)
                && !scene.traversable(cx as u32, ny as u32, clearance)
            {
                continue;
            }
            let j = (ny as u32 * w + nx as u32) as usize;
            let step = if diagonal { SQRT2 * cs } else { cs };
            let nd = cost + step;
            if nd < dist[j] {
                dist[j] = nd;
                steps[j] = if diagonal {
                    (steps[i].0, steps[i].1 + 1)
                } else {
                    (steps[i].0 + 1, steps[i].1)
                };
                prev[j] = cell;
                heap.push(HeapEntry {
                    cost: nd,
                    cell: j as u32,
                });
            }
        }
    }
    SearchResult {
        steps,
        prev,
        settled,
    }
}

fn endpoint_cell(
    scene: &OccupancyScene,
    pose: &Pose,
    clearance: f64,
) -> Result<(u32, u32), WorldError> {
    let (cx, cy) = scene
        .cell_of(pose.x, pose.y)
        .ok_or(WorldError::PoseInCollision {
            x: pose.x,
            y: pose.y,
        })?;
    if !scene.traversable(cx, cy, clearance) {
        return Err(WorldError::PoseInCollision {
            x: pose.x,
            y: pose.y,
        });
    }
    Ok((cx, cy))
}

/// Exact step-count distance: straight steps cost `cell_size`, diagonal
/// steps cost `sqrt(2) * cell_size`.
fn steps_to_meters(steps: (u32, u32), cell_size: f64) -> f64 {
    steps.0 as f64 * cell_size + steps.1 as f64 * (SQRT2 * cell_size)
}

/// Length of the shortest 8-connected grid path between the cells
/// containing `a` and `b`, restricted to cells with at least `clearance` to
/// obstacles. Returns infinity when the cells are disconnected.
pub fn geodesic_distance(
    scene: &OccupancyScene,
    a: &Pose,
    b: &Pose,
    clearance: f64,
) -> Result<f64, WorldError> {
    let ca = endpoint_cell(scene, a, clearance)?;
    let cb = endpoint_cell(scene, b, clearance)?;
    if ca == cb {
        return Ok(0.0);
    }
    let res = dijkstra(scene, ca, Some(cb), clearance);
    let j = scene.idx(cb.0, cb.1);
    if !res.settled[j] {
        return Ok(f64::INFINITY);
    }
    Ok(steps_to_meters(res.steps[j], scene.cell_size() as f64))
}

/// Shortest clearance-respecting polyline from `start` to `goal`. The first
/// point is `start`, the last is `goal`, intermediate points are cell
/// centers with headings along the local tangent.
pub fn shortest_path(
    scene: &OccupancyScene,
    start: &Pose,
    goal: &Pose,
    clearance: f64,
) -> Result<Vec<Pose>, WorldError> {
    let ca = endpoint_cell(scene, start, clearance)?;
    let cb = endpoint_cell(scene, goal, clearance)?;
    if ca == cb {
        return Ok(vec![*start]);
    }
    let res = dijkstra(scene, ca, Some(cb), clearance);
    let goal_idx = scene.idx(cb.0, cb.1) as u32;
    if !res.settled[goal_idx as usize] {
        return Err(WorldError::NoPath);
    }
    // walk predecessors back to the start cell
    let mut cells = vec![goal_idx];
    let mut cur = goal_idx;
    while res.prev[cur as usize] != u32::MAX {
        cur = res.prev[cur as usize];
        cells.push(cur);
    }
    cells.reverse();

    let w = scene.width();
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(cells.len() + 1);
    points.push((start.x, start.y));
    for &c in &cells[1..cells.len() - 1] {
        points.push(scene.center_of(c % w, c / w));
    }
    points.push((goal.x, goal.y));
    // drop duplicate consecutive points (start/goal may sit on a cell center)
    points.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);

    let mut poses = Vec::with_capacity(points.len());
    for (i, &(x, y)) in points.iter().enumerate() {
        let (tx, ty) = if i + 1 < points.len() {
            (points[i + 1].0 - x, points[i + 1].1 - y)
        } else {
            (x - points[i - 1].0, y - points[i - 1].1)
        };
        poses.push(Pose::new(x, y, ty.atan2(tx)));
    }
    Ok(poses)
}

/// Total arc length of a polyline.
pub fn polyline_length(path: &[Pose]) -> f64 {
    path.windows(2)
        .map(|w| w[0].distance(&w[1]))
        .sum()
}
