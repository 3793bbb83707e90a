//! The simulated world: occupancy grid, object instances and ray queries.

mod generate;
mod io;
mod path;

pub use generate::{generate_scene, GeneratedScene, GeneratorConfig, Template};
pub use io::{decode_grid, encode_grid, SceneFile};
pub use path::{
    geodesic_to_object, geodesic_to_targets, shortest_path, shortest_path_length, shortest_path_length_with,
    Connectivity, GridPath,
};

use crate::geometry::AgentPose;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CELL_SIZE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("point ({x:.3}, {y:.3}) lies inside an occupied cell")]
    OriginOccupied { x: f64, y: f64 },
    #[error("point ({x:.3}, {y:.3}) lies inside the obstacle region inflated by {clearance} m")]
    EndpointBlocked { x: f64, y: f64, clearance: f64 },
    #[error("generator parameters are infeasible: {0}")]
    Infeasible(String),
    #[error("scene json: {0}")]
    Json(String),
}

impl SceneError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Cell index as `(column, row)`; column grows with world `x`, row with world `y`.
pub type CellIndex = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            occupied: vec![false; width * height],
        }
    }

    pub fn from_cells(width: usize, height: usize, occupied: Vec<bool>) -> Self {
        assert_eq!(occupied.len(), width * height, "cell vector size mismatch");
        Self {
            width,
            height,
            occupied,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn index(&self, cell: CellIndex) -> usize {
        cell.1 * self.width + cell.0
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Out-of-bounds cells read as occupied.
    #[inline]
    pub fn is_occupied_signed(&self, i: i64, j: i64) -> bool {
        !self.in_bounds(i, j) || self.occupied[j as usize * self.width + i as usize]
    }

    #[inline]
    pub fn is_occupied(&self, cell: CellIndex) -> bool {
        self.occupied[self.index(cell)]
    }

    pub fn set(&mut self, cell: CellIndex, occupied: bool) {
        let idx = self.index(cell);
        self.occupied[idx] = occupied;
    }

    pub fn fill_rect(&mut self, i0: usize, j0: usize, i1: usize, j1: usize, occupied: bool) {
        for j in j0..=j1.min(self.height - 1) {
            for i in i0..=i1.min(self.width - 1) {
                self.set((i, j), occupied);
            }
        }
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: String,
    pub center: (f64, f64),
    pub footprint: Vec<CellIndex>,
    /// Category this object is easily mistaken for, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub cell_size: f64,
    pub grid: OccupancyGrid,
    pub objects: Vec<ObjectInstance>,
    pub start_pose: AgentPose,
    /// Cell index -> index into `objects` for footprint cells.
    owner: Vec<Option<u32>>,
}

/// Result of a ray query: distance travelled and the occupied cell that stopped the ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    /// `None` when the ray reached `max_range` without hitting anything.
    pub cell: Option<(i64, i64)>,
}

impl Scene {
    /// Assembles a scene and checks every invariant, using `agent_radius` for the start clearance.
    pub fn new(
        name: impl Into<String>,
        cell_size: f64,
        grid: OccupancyGrid,
        objects: Vec<ObjectInstance>,
        start_pose: AgentPose,
        agent_radius: f64,
    ) -> Result<Self, SceneError> {
        let mut scene = Self {
            name: name.into(),
            cell_size,
            grid,
            objects,
            start_pose,
            owner: Vec::new(),
        };
        scene.validate(agent_radius)?;
        scene.index_owners();
        Ok(scene)
    }

    fn index_owners(&mut self) {
        let mut owner = vec![None; self.grid.width * self.grid.height];
        for (k, obj) in self.objects.iter().enumerate() {
            for &cell in &obj.footprint {
                owner[self.grid.index(cell)] = Some(k as u32);
            }
        }
        self.owner = owner;
    }

    fn validate(&self, agent_radius: f64) -> Result<(), SceneError> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(SceneError::invalid("cell_size", "must be a positive finite number"));
        }
        if self.grid.width == 0 || self.grid.height == 0 {
            return Err(SceneError::invalid("grid", "grid must have at least one cell"));
        }
        for (k, obj) in self.objects.iter().enumerate() {
            let field = |f: &str| format!("objects[{k}].{f}");
            if obj.category.trim().is_empty() {
                return Err(SceneError::invalid(field("category"), "empty category"));
            }
            if obj.footprint.is_empty() {
                return Err(SceneError::invalid(field("footprint_cells"), "footprint is empty"));
            }
            let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
            for &(i, j) in &obj.footprint {
                if i >= self.grid.width || j >= self.grid.height {
                    return Err(SceneError::invalid(
                        field("footprint_cells"),
                        format!("cell ({i}, {j}) is outside the grid"),
                    ));
                }
                if !self.grid.is_occupied((i, j)) {
                    return Err(SceneError::invalid(
                        field("footprint_cells"),
                        format!("cell ({i}, {j}) is not marked occupied"),
                    ));
                }
                i0 = i0.min(i);
                j0 = j0.min(j);
                i1 = i1.max(i);
                j1 = j1.max(j);
            }
            let cs = self.cell_size;
            let (cx, cy) = obj.center;
            let inside = cx >= i0 as f64 * cs
                && cx <= (i1 + 1) as f64 * cs
                && cy >= j0 as f64 * cs
                && cy <= (j1 + 1) as f64 * cs;
            if !inside {
                return Err(SceneError::invalid(
                    field("center"),
                    "center lies outside the footprint bounding box",
                ));
            }
            if let Some(d) = &obj.decoy_of {
                if d.trim().is_empty() {
                    return Err(SceneError::invalid(field("decoy_of"), "empty category"));
                }
            }
        }
        let s = self.start_pose;
        if !(s.x.is_finite() && s.y.is_finite() && s.yaw.is_finite()) {
            return Err(SceneError::invalid("start_pose", "non-finite coordinates"));
        }
        if self.cell_at(s.x, s.y).map_or(true, |c| self.grid.is_occupied(c)) {
            return Err(SceneError::invalid("start_pose", "start cell is not free"));
        }
        if !self.is_clear(s.x, s.y, agent_radius) {
            return Err(SceneError::invalid(
                "start_pose",
                format!("start lacks {agent_radius} m clearance from obstacles"),
            ));
        }
        Ok(())
    }

    pub fn width_m(&self) -> f64 {
        self.grid.width as f64 * self.cell_size
    }

    pub fn height_m(&self) -> f64 {
        self.grid.height as f64 * self.cell_size
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellIndex> {
        let i = (x / self.cell_size).floor();
        let j = (y / self.cell_size).floor();
        if self.grid.in_bounds(i as i64, j as i64) && i >= 0.0 && j >= 0.0 {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            (cell.0 as f64 + 0.5) * self.cell_size,
            (cell.1 as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|c| !self.grid.is_occupied(c))
    }

    /// Index into `objects` of the object owning an occupied cell.
    pub fn object_at(&self, i: i64, j: i64) -> Option<usize> {
        if !self.grid.in_bounds(i, j) {
            return None;
        }
        self.owner[j as usize * self.grid.width + i as usize].map(|k| k as usize)
    }

    /// True when a disc of `radius` centred at `(x, y)` touches no occupied cell
    /// (cells outside the grid count as occupied).
    pub fn is_clear(&self, x: f64, y: f64, radius: f64) -> bool {
        let cs = self.cell_size;
        let i_lo = ((x - radius) / cs).floor() as i64;
        let i_hi = ((x + radius) / cs).floor() as i64;
        let j_lo = ((y - radius) / cs).floor() as i64;
        let j_hi = ((y + radius) / cs).floor() as i64;
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                if !self.grid.is_occupied_signed(i, j) {
                    continue;
                }
                let dx = (x - (x.clamp(i as f64 * cs, (i + 1) as f64 * cs))).abs();
                let dy = (y - (y.clamp(j as f64 * cs, (j + 1) as f64 * cs))).abs();
                let d2 = dx * dx + dy * dy;
                if d2 < radius * radius || (radius == 0.0 && dx == 0.0 && dy == 0.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from `origin` along `heading` (degrees) to the first occupied cell boundary,
    /// capped at `max_range`.
    pub fn raycast(&self, origin: (f64, f64), heading: f64, max_range: f64) -> Result<f64, SceneError> {
        self.raycast_hit(origin, heading, max_range).map(|h| h.distance)
    }

    /// Grid traversal (Amanatides–Woo) returning the stopping cell as well as the distance.
    pub fn raycast_hit(
        &self,
        origin: (f64, f64),
        heading: f64,
        max_range: f64,
    ) -> Result<RayHit, SceneError> {
        let cs = self.cell_size;
        let (ox, oy) = (origin.0 / cs, origin.1 / cs);
        let mut i = ox.floor() as i64;
        let mut j = oy.floor() as i64;
        if self.grid.is_occupied_signed(i, j) {
            return Err(SceneError::OriginOccupied {
                x: origin.0,
                y: origin.1,
            });
        }
        let max_t = max_range / cs;
        let rad = heading.to_radians();
        let (dy, dx) = rad.sin_cos();
        let step_i: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_j: i64 = if dy > 0.0 { 1 } else { -1 };
        let delta_i = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
        let delta_j = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
        let mut next_i = if dx > 0.0 {
            ((i + 1) as f64 - ox) * delta_i
        } else if dx < 0.0 {
            (ox - i as f64) * delta_i
        } else {
            f64::INFINITY
        };
        let mut next_j = if dy > 0.0 {
            ((j + 1) as f64 - oy) * delta_j
        } else if dy < 0.0 {
            (oy - j as f64) * delta_j
        } else {
            f64::INFINITY
        };
        loop {
            let t = if next_i < next_j {
                let t = next_i;
                next_i += delta_i;
                i += step_i;
                t
            } else {
                let t = next_j;
                next_j += delta_j;
                j += step_j;
                t
            };
            if t >= max_t {
                return Ok(RayHit {
                    distance: max_range,
                    cell: None,
                });
            }
            if self.grid.is_occupied_signed(i, j) {
                return Ok(RayHit {
                    distance: t * cs,
                    cell: Some((i, j)),
                });
            }
        }
    }

    /// Cells whose centres lie within the free space inflated by `clearance`.
    pub fn inflated_free(&self, clearance: f64) -> Vec<bool> {
        let (w, h) = (self.grid.width, self.grid.height);
        let mut free = vec![true; w * h];
        for j in 0..h {
            for i in 0..w {
                if self.grid.is_occupied((i, j)) {
                    free[j * w + i] = false;
                } else if clearance > 0.0 {
                    let (x, y) = self.cell_center((i, j));
                    free[j * w + i] = self.is_clear(x, y, clearance);
                }
            }
        }
        free
    }

    /// True when the straight segment from `origin` to the centre of object `k` meets no
    /// occupied cell before entering that object's footprint.
    pub fn sees_object(&self, origin: (f64, f64), k: usize) -> Result<bool, SceneError> {
        let obj = &self.objects[k];
        let range = crate::geometry::distance(origin, obj.center);
        let heading = crate::geometry::bearing(origin, obj.center);
        let hit = self.raycast_hit(origin, heading, range + self.cell_size)?;
        Ok(hit.cell.and_then(|(i, j)| self.object_at(i, j)) == Some(k))
    }

    /// Instances of a category that are real (not decoys).
    pub fn targets<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects
            .iter()
            .filter(move |o| o.category == category && o.decoy_of.is_none())
    }
}
