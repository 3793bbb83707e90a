//! Geodesic distances over the occupancy grid.

use super::{CellIndex, Scene, SceneError};
use crate::geometry::distance;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    /// Includes diagonals at cost sqrt(2); diagonal moves may not cut obstacle corners.
    Eight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<CellIndex>,
    /// Meters.
    pub length: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra over `free`, in cell units. Returns (distance, predecessor) fields.
fn dijkstra(
    width: usize,
    height: usize,
    free: &[bool],
    source: usize,
    connectivity: Connectivity,
    mut stop_at: impl FnMut(usize) -> bool,
) -> (Vec<f64>, Vec<usize>) {
    let n = width * height;
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry { cost: 0.0, idx: source });

    const STRAIGHT: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const DIAG: [(i64, i64); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
    let is_free = |i: i64, j: i64| {
        i >= 0 && j >= 0 && (i as usize) < width && (j as usize) < height && free[j as usize * width + i as usize]
    };

    while let Some(Entry { cost, idx }) = heap.pop() {
        if cost > dist[idx] {
            continue;
        }
        if stop_at(idx) {
            break;
        }
        let (i, j) = ((idx % width) as i64, (idx / width) as i64);
        let mut relax = |ni: i64, nj: i64, step: f64| {
            let nidx = nj as usize * width + ni as usize;
            let nc = cost + step;
            if nc < dist[nidx] {
                dist[nidx] = nc;
                prev[nidx] = idx;
                heap.push(Entry { cost: nc, idx: nidx });
            }
        };
        for (di, dj) in STRAIGHT {
            if is_free(i + di, j + dj) {
                relax(i + di, j + dj, 1.0);
            }
        }
        if connectivity == Connectivity::Eight {
            for (di, dj) in DIAG {
                if is_free(i + di, j + dj) && is_free(i + di, j) && is_free(i, j + dj) {
                    relax(i + di, j + dj, std::f64::consts::SQRT_2);
                }
            }
        }
    }
    (dist, prev)
}

fn endpoint_cell(
    scene: &Scene,
    free: &[bool],
    p: (f64, f64),
    clearance: f64,
) -> Result<CellIndex, SceneError> {
    let blocked = SceneError::EndpointBlocked {
        x: p.0,
        y: p.1,
        clearance,
    };
    let cell = scene.cell_at(p.0, p.1).ok_or(blocked.clone())?;
    if !free[scene.grid.index(cell)] {
        return Err(blocked);
    }
    Ok(cell)
}

fn backtrack(prev: &[usize], width: usize, target: usize) -> Vec<CellIndex> {
    let mut cells = vec![(target % width, target / width)];
    let mut cur = target;
    while prev[cur] != usize::MAX {
        cur = prev[cur];
        cells.push((cur % width, cur / width));
    }
    cells.reverse();
    cells
}

/// Minimal grid path between the cells containing `from` and `to`, over the grid
/// inflated by `clearance`. `Ok(None)` means unreachable.
pub fn shortest_path(
    scene: &Scene,
    from: (f64, f64),
    to: (f64, f64),
    clearance: f64,
    connectivity: Connectivity,
) -> Result<Option<GridPath>, SceneError> {
    let free = scene.inflated_free(clearance);
    let a = endpoint_cell(scene, &free, from, clearance)?;
    let b = endpoint_cell(scene, &free, to, clearance)?;
    let (w, h) = (scene.grid.width(), scene.grid.height());
    let target = scene.grid.index(b);
    let (dist, prev) = dijkstra(w, h, &free, scene.grid.index(a), connectivity, |i| i == target);
    if dist[target].is_infinite() {
        return Ok(None);
    }
    Ok(Some(GridPath {
        cells: backtrack(&prev, w, target),
        length: dist[target] * scene.cell_size,
    }))
}

pub fn shortest_path_length_with(
    scene: &Scene,
    from: (f64, f64),
    to: (f64, f64),
    clearance: f64,
    connectivity: Connectivity,
) -> Result<Option<f64>, SceneError> {
    Ok(shortest_path(scene, from, to, clearance, connectivity)?.map(|p| p.length))
}

/// 8-connected geodesic length in meters; `Ok(None)` when unreachable.
pub fn shortest_path_length(
    scene: &Scene,
    from: (f64, f64),
    to: (f64, f64),
    clearance: f64,
) -> Result<Option<f64>, SceneError> {
    shortest_path_length_with(scene, from, to, clearance, Connectivity::Eight)
}

fn line_of_sight(scene: &Scene, free: &[bool], a: (f64, f64), b: (f64, f64)) -> bool {
    let len = distance(a, b);
    let n = (len / (scene.cell_size * 0.25)).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        let (x, y) = (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        scene
            .cell_at(x, y)
            .is_some_and(|c| free[scene.grid.index(c)])
    })
}

/// Greedy string pulling: keeps only the waypoints needed to preserve line of sight.
fn smoothed_length(scene: &Scene, free: &[bool], start: (f64, f64), cells: &[CellIndex]) -> f64 {
    let pts: Vec<(f64, f64)> = std::iter::once(start)
        .chain(cells.iter().skip(1).map(|&c| scene.cell_center(c)))
        .collect();
    let mut length = 0.0;
    let mut anchor = 0;
    while anchor + 1 < pts.len() {
        let mut next = anchor + 1;
        for k in (anchor + 2..pts.len()).rev() {
            if line_of_sight(scene, free, pts[anchor], pts[k]) {
                next = k;
                break;
            }
        }
        length += distance(pts[anchor], pts[next]);
        anchor = next;
    }
    length
}

/// Geodesic distance from `start` to the nearest point at `radius` from any of `centers`.
///
/// Runs 8-connected Dijkstra over the grid inflated by `clearance`, shortens the resulting
/// cell path by line-of-sight smoothing, and adds the straight remainder from the final cell
/// to the success boundary. `Ok(None)` when no target region is reachable.
pub fn geodesic_to_targets(
    scene: &Scene,
    start: (f64, f64),
    centers: &[(f64, f64)],
    radius: f64,
    clearance: f64,
) -> Result<Option<f64>, SceneError> {
    if centers
        .iter()
        .any(|&c| distance(start, c) < radius)
    {
        return Ok(Some(0.0));
    }
    let free = scene.inflated_free(clearance);
    let a = endpoint_cell(scene, &free, start, clearance)?;
    let (w, h) = (scene.grid.width(), scene.grid.height());
    let (dist, prev) = dijkstra(w, h, &free, scene.grid.index(a), Connectivity::Eight, |_| false);

    let reach = radius + scene.cell_size;
    let mut best: Option<(f64, usize, f64)> = None;
    for (idx, &d) in dist.iter().enumerate() {
        if d.is_infinite() {
            continue;
        }
        let c = scene.cell_center((idx % w, idx / w));
        let gap = centers
            .iter()
            .map(|&t| distance(c, t))
            .fold(f64::INFINITY, f64::min);
        if gap >= reach {
            continue;
        }
        let residual = (gap - radius).max(0.0);
        let est = d * scene.cell_size + residual;
        if best.map_or(true, |(b, _, _)| est < b) {
            best = Some((est, idx, residual));
        }
    }
    let Some((_, idx, residual)) = best else {
        return Ok(None);
    };
    let cells = backtrack(&prev, w, idx);
    Ok(Some(smoothed_length(scene, &free, start, &cells) + residual))
}

/// Obstacle-respecting distance from `from` to the centre of object `k`.
///
/// Equals the straight-line distance when the object is in plain view. Otherwise the agent
/// walks over free cells to a cell within `max_leg` of the centre that sees the object and
/// finishes with a straight leg. `Ok(None)` when no such cell is reachable.
pub fn geodesic_to_object(
    scene: &Scene,
    from: (f64, f64),
    k: usize,
    max_leg: f64,
) -> Result<Option<f64>, SceneError> {
    let center = scene.objects[k].center;
    if scene.sees_object(from, k)? {
        return Ok(Some(distance(from, center)));
    }
    let free = scene.inflated_free(0.0);
    let a = endpoint_cell(scene, &free, from, 0.0)?;
    let (w, h) = (scene.grid.width(), scene.grid.height());
    let (dist, prev) = dijkstra(w, h, &free, scene.grid.index(a), Connectivity::Eight, |_| false);
    let mut best: Option<(f64, usize)> = None;
    for (idx, &d) in dist.iter().enumerate() {
        if d.is_infinite() {
            continue;
        }
        let c = scene.cell_center((idx % w, idx / w));
        let leg = distance(c, center);
        if leg > max_leg {
            continue;
        }
        let est = d * scene.cell_size + leg;
        if best.is_some_and(|(b, _)| est >= b) || !scene.sees_object(c, k)? {
            continue;
        }
        best = Some((est, idx));
    }
    let Some((_, idx)) = best else {
        return Ok(None);
    };
    let cells = backtrack(&prev, w, idx);
    let end = scene.cell_center(cells[cells.len() - 1]);
    Ok(Some(smoothed_length(scene, &free, from, &cells) + distance(end, center)))
}
