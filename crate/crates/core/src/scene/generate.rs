//! Seeded procedural floorplans: a central hall with rooms on both sides.
//!
//! Three templates share the same layout machinery:
//!
//! * `rooms` - rooms of random kinds, one of which holds the target.
//! * `dead_end` - the room closest to the start is furnished with everything that usually
//!   accompanies the target but not the target itself; the real target sits in the room
//!   farthest down the hall.
//! * `decoy` - a lookalike of the target stands in the hall a few meters from the start;
//!   the real target sits in the room farthest down the hall.

use super::{geodesic_to_targets, CellIndex, ObjectInstance, OccupancyGrid, Scene, SceneError};
use crate::geometry::AgentPose;
use crate::semantics::{cooccurring, footprint_cells, lookalike, RoomKind, TARGET_CATEGORIES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Rooms,
    DeadEnd,
    Decoy,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Rooms, Template::DeadEnd, Template::Decoy];

    pub fn as_str(self) -> &'static str {
        match self {
            Template::Rooms => "rooms",
            Template::DeadEnd => "dead_end",
            Template::Decoy => "decoy",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Template::Rooms => 0x5EED_0001,
            Template::DeadEnd => 0x5EED_0002,
            Template::Decoy => 0x5EED_0003,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Template {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Template::ALL.iter().map(|t| t.as_str()).collect();
                SceneError::invalid(
                    "template",
                    format!("unknown template `{s}`; valid templates: {}", valid.join(", ")),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub template: Template,
    pub rooms: usize,
    pub room_min_cells: usize,
    pub room_max_cells: usize,
    pub hall_width_cells: usize,
    pub door_width_cells: usize,
    pub cell_size: f64,
    pub agent_radius: f64,
    pub success_distance: f64,
    /// Fixed target category; drawn from the built-in target list when absent.
    pub target: Option<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            template: Template::Rooms,
            rooms: 4,
            room_min_cells: 38,
            room_max_cells: 50,
            hall_width_cells: 18,
            door_width_cells: 14,
            cell_size: super::DEFAULT_CELL_SIZE,
            agent_radius: 0.18,
            success_distance: 1.0,
            target: None,
        }
    }
}

impl GeneratorConfig {
    pub fn with_template(template: Template) -> Self {
        Self {
            template,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Infeasible(msg));
        if self.rooms == 0 {
            return bad("at least one room is required".into());
        }
        if self.template == Template::DeadEnd && self.rooms < 2 {
            return bad("the dead_end template needs at least two rooms".into());
        }
        if self.room_min_cells < 4 {
            return bad(format!("room_min_cells must be >= 4, got {}", self.room_min_cells));
        }
        if self.room_max_cells < self.room_min_cells {
            return bad("room_max_cells is smaller than room_min_cells".into());
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return bad("cell_size must be positive".into());
        }
        let agent_cells = (2.0 * self.agent_radius / self.cell_size).ceil() as usize + 1;
        if self.hall_width_cells < 4 || self.hall_width_cells < agent_cells {
            return bad(format!(
                "hall_width_cells = {} cannot fit an agent of radius {} m",
                self.hall_width_cells, self.agent_radius
            ));
        }
        if self.door_width_cells < agent_cells {
            return bad(format!(
                "door_width_cells = {} cannot fit an agent of radius {} m",
                self.door_width_cells, self.agent_radius
            ));
        }
        if self.door_width_cells + 2 > self.room_min_cells {
            return bad("doors do not fit in the smallest room".into());
        }
        if let Some(t) = &self.target {
            if RoomKind::of_category(t).is_none() {
                return bad(format!("target category `{t}` is not in the built-in vocabulary"));
            }
        }
        Ok(())
    }
}

/// Inclusive rectangle of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellRect {
    pub fn contains(&self, c: CellIndex) -> bool {
        c.0 >= self.i0 && c.0 <= self.i1 && c.1 >= self.j0 && c.1 <= self.j1
    }

    fn expanded(&self, by: usize) -> CellRect {
        CellRect {
            i0: self.i0.saturating_sub(by),
            j0: self.j0.saturating_sub(by),
            i1: self.i1 + by,
            j1: self.j1 + by,
        }
    }

    fn intersects(&self, o: &CellRect) -> bool {
        self.i0 <= o.i1 && o.i0 <= self.i1 && self.j0 <= o.j1 && o.j0 <= self.j1
    }

    fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (self.j0..=self.j1).flat_map(move |j| (self.i0..=self.i1).map(move |i| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomInfo {
    pub kind: String,
    pub interior: CellRect,
    pub door: CellRect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene: Scene,
    pub target_category: String,
    pub rooms: Vec<RoomInfo>,
    pub hall: CellRect,
    /// Index into `rooms` of the semantically attractive dead end.
    pub cul_de_sac: Option<usize>,
    /// Index into `scene.objects` of the lookalike object.
    pub decoy: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Top,
    Bottom,
}

struct RoomSlot {
    interior: CellRect,
    door: CellRect,
    side: Side,
}

enum Attempt {
    Retry,
    Fatal(SceneError),
}

impl From<SceneError> for Attempt {
    fn from(e: SceneError) -> Self {
        Attempt::Fatal(e)
    }
}

const ATTEMPTS: usize = 48;

/// Deterministic for a fixed `(cfg, seed)`.
pub fn generate_scene(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratedScene, SceneError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ cfg.template.salt().rotate_left(17));
    for _ in 0..ATTEMPTS {
        match build(cfg, seed, &mut rng) {
            Ok(g) => return Ok(g),
            Err(Attempt::Retry) => continue,
            Err(Attempt::Fatal(e)) => return Err(e),
        }
    }
    Err(SceneError::Infeasible(format!(
        "could not furnish a valid {} scene in {ATTEMPTS} attempts",
        cfg.template
    )))
}

struct Builder<'a> {
    grid: OccupancyGrid,
    objects: Vec<ObjectInstance>,
    reserved: Vec<CellRect>,
    cell_size: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn free_rect(&self, r: &CellRect) -> bool {
        r.cells().all(|c| !self.grid.is_occupied(c))
    }

    fn place(&mut self, category: &str, rect: CellRect, decoy_of: Option<String>) -> usize {
        for c in rect.cells() {
            self.grid.set(c, true);
        }
        let cs = self.cell_size;
        self.objects.push(ObjectInstance {
            category: category.to_string(),
            center: (
                (rect.i0 + rect.i1 + 1) as f64 * cs / 2.0,
                (rect.j0 + rect.j1 + 1) as f64 * cs / 2.0,
            ),
            footprint: rect.cells().collect(),
            decoy_of,
        });
        self.reserved.push(rect);
        self.objects.len() - 1
    }

    fn fits(&self, rect: &CellRect, gap: usize) -> bool {
        self.free_rect(rect) && !self.reserved.iter().any(|r| r.expanded(gap).intersects(rect))
    }

    /// Places an object flush against one of the walls of `room` other than the door wall.
    fn furnish(&mut self, room: &RoomSlot, category: &str, walls: &[Wall]) -> Option<usize> {
        let (a, b) = footprint_cells(category);
        let r = room.interior;
        for _ in 0..60 {
            let wall = *walls.choose(self.rng)?;
            let rect = match wall {
                Wall::Far => {
                    if r.i1 < r.i0 + a + 1 {
                        continue;
                    }
                    let i0 = self.rng.gen_range(r.i0 + 1..=r.i1 - a);
                    let against_top = room.side == Side::Top;
                    let j0 = if against_top { r.j1 + 1 - b } else { r.j0 };
                    CellRect { i0, j0, i1: i0 + a - 1, j1: j0 + b - 1 }
                }
                Wall::Left | Wall::Right => {
                    if r.j1 < r.j0 + a + 1 {
                        continue;
                    }
                    let j0 = self.rng.gen_range(r.j0 + 1..=r.j1 - a);
                    let i0 = if wall == Wall::Left { r.i0 } else { r.i1 + 1 - b };
                    CellRect { i0, j0, i1: i0 + b - 1, j1: j0 + a - 1 }
                }
            };
            if self.fits(&rect, 5) {
                return Some(self.place(category, rect, None));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wall {
    /// Opposite the door.
    Far,
    Left,
    Right,
}

fn build(cfg: &GeneratorConfig, seed: u64, rng: &mut ChaCha8Rng) -> Result<GeneratedScene, Attempt> {
    let n = cfg.rooms;
    let n_top = n.div_ceil(2);
    let dims: Vec<(usize, usize)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(cfg.room_min_cells..=cfg.room_max_cells),
                rng.gen_range(cfg.room_min_cells..=cfg.room_max_cells),
            )
        })
        .collect();
    let top: Vec<(usize, usize)> = dims[..n_top].to_vec();
    let bottom: Vec<(usize, usize)> = dims[n_top..].to_vec();
    let row_len = |row: &[(usize, usize)]| row.iter().map(|d| d.0 + 1).sum::<usize>();
    let width = 1 + row_len(&top).max(row_len(&bottom));
    let h_bottom = bottom.iter().map(|d| d.1).max().unwrap_or(0);
    let h_top = top.iter().map(|d| d.1).max().unwrap_or(0);
    let hall_wall_bottom = h_bottom + 1;
    let hall = CellRect {
        i0: 1,
        j0: hall_wall_bottom + 1,
        i1: width - 2,
        j1: hall_wall_bottom + cfg.hall_width_cells,
    };
    let hall_wall_top = hall.j1 + 1;
    let height = hall_wall_top + h_top + 2;

    let mut grid = OccupancyGrid::from_cells(width, height, vec![true; width * height]);
    grid.fill_rect(hall.i0, hall.j0, hall.i1, hall.j1, false);

    let dw = cfg.door_width_cells;
    let mut slots = Vec::with_capacity(n);
    for (row, side) in [(&top, Side::Top), (&bottom, Side::Bottom)] {
        let mut x = 1;
        for &(w, h) in row.iter() {
            let interior = match side {
                Side::Top => CellRect { i0: x, j0: hall_wall_top + 1, i1: x + w - 1, j1: hall_wall_top + h },
                Side::Bottom => CellRect { i0: x, j0: hall_wall_bottom - h, i1: x + w - 1, j1: hall_wall_bottom - 1 },
            };
            let door_i0 = rng.gen_range(interior.i0 + 1..=interior.i1 - dw);
            let wall_row = if side == Side::Top { hall_wall_top } else { hall_wall_bottom };
            let door = CellRect { i0: door_i0, j0: wall_row, i1: door_i0 + dw - 1, j1: wall_row };
            grid.fill_rect(interior.i0, interior.j0, interior.i1, interior.j1, false);
            grid.fill_rect(door.i0, door.j0, door.i1, door.j1, false);
            slots.push(RoomSlot { interior, door, side });
            x += w + 1;
        }
    }

    let target = match &cfg.target {
        Some(t) => t.clone(),
        None => TARGET_CATEGORIES.choose(rng).expect("non-empty").to_string(),
    };
    let home = RoomKind::of_category(&target).expect("validated target");
    let companions: Vec<&str> = cooccurring(&target).into_iter().collect();
    let neutral: Vec<RoomKind> = RoomKind::ROOMS.into_iter().filter(|k| *k != home).collect();

    // Rooms ordered by how far their door is from the western end of the hall.
    let mut by_distance: Vec<usize> = (0..n).collect();
    by_distance.sort_by_key(|&k| (slots[k].door.i0, k));
    let nearest = by_distance[0];
    let farthest = *by_distance.last().expect("non-empty");

    let start_cell_x = 7usize;
    let hall_mid_y = (hall.j0 + hall.j1 + 1) as f64 / 2.0;
    let start_pose = AgentPose::new(
        (start_cell_x as f64 + 0.5) * cfg.cell_size,
        hall_mid_y * cfg.cell_size,
        0.0,
    );

    let mut b = Builder {
        grid,
        objects: Vec::new(),
        reserved: Vec::new(),
        cell_size: cfg.cell_size,
        rng,
    };
    // Keep door approaches and the start area open.
    for s in &slots {
        let keep = match s.side {
            Side::Top => CellRect { i0: s.door.i0, j0: s.door.j0.saturating_sub(4), i1: s.door.i1, j1: s.door.j1 + 8 },
            Side::Bottom => CellRect { i0: s.door.i0, j0: s.door.j0.saturating_sub(8), i1: s.door.i1, j1: s.door.j1 + 4 },
        };
        b.reserved.push(keep);
    }
    b.reserved.push(CellRect { i0: 1, j0: hall.j0, i1: start_cell_x + 12, j1: hall.j1 });

    let (kinds, target_room, cul_de_sac): (Vec<RoomKind>, usize, Option<usize>) = match cfg.template {
        Template::Rooms => {
            let target_room = b.rng.gen_range(0..n);
            let kinds = (0..n)
                .map(|k| if k == target_room { home } else { *RoomKind::ROOMS.choose(b.rng).expect("non-empty") })
                .collect();
            (kinds, target_room, None)
        }
        Template::DeadEnd => {
            let kinds = (0..n)
                .map(|k| {
                    if k == farthest || k == nearest {
                        home
                    } else {
                        *neutral.choose(b.rng).expect("non-empty")
                    }
                })
                .collect();
            (kinds, farthest, Some(nearest))
        }
        Template::Decoy => {
            let kinds = (0..n)
                .map(|k| if k == farthest { home } else { *neutral.choose(b.rng).expect("non-empty") })
                .collect();
            (kinds, farthest, None)
        }
    };

    // Target goes against the wall facing the door so it can be seen on entry.
    if b.furnish(&slots[target_room], &target, &[Wall::Far]).is_none() {
        return Err(Attempt::Retry);
    }
    let all_walls = [Wall::Far, Wall::Left, Wall::Right];
    for (k, slot) in slots.iter().enumerate() {
        if Some(k) == cul_de_sac {
            for c in &companions {
                if b.furnish(slot, c, &all_walls).is_none() {
                    return Err(Attempt::Retry);
                }
            }
            continue;
        }
        let mut items: Vec<&str> = kinds[k]
            .furniture()
            .iter()
            .copied()
            .filter(|c| *c != target)
            .collect();
        items.shuffle(b.rng);
        let count = if k == target_room { 2 } else { b.rng.gen_range(2..=3) };
        for c in items.into_iter().take(count) {
            b.furnish(slot, c, &all_walls);
        }
    }

    let mut decoy = None;
    if cfg.template == Template::Decoy {
        let (a, d) = footprint_cells(lookalike(&target));
        let mut placed = None;
        for _ in 0..60 {
            let offset = b.rng.gen_range(22..=32);
            let i0 = start_cell_x + offset;
            let against_top = b.rng.gen_bool(0.5);
            let j0 = if against_top { hall.j1 + 1 - d } else { hall.j0 };
            let rect = CellRect { i0, j0, i1: i0 + a - 1, j1: j0 + d - 1 };
            if rect.i1 < hall.i1 && b.fits(&rect, 2) {
                placed = Some(b.place(lookalike(&target), rect, Some(target.clone())));
                break;
            }
        }
        match placed {
            Some(k) => decoy = Some(k),
            None => return Err(Attempt::Retry),
        }
    }

    // Hall clutter along the walls gives the corridor recognisable landmarks.
    let hall_items = RoomKind::Hallway.furniture();
    let clutter = (hall.i1 - hall.i0) / 30;
    for _ in 0..clutter {
        let cat = *hall_items.choose(b.rng).expect("non-empty");
        let (a, d) = footprint_cells(cat);
        for _ in 0..30 {
            let i0 = b.rng.gen_range(hall.i0..=hall.i1 - a);
            let against_top = b.rng.gen_bool(0.5);
            let j0 = if against_top { hall.j1 + 1 - d } else { hall.j0 };
            let rect = CellRect { i0, j0, i1: i0 + a - 1, j1: j0 + d - 1 };
            if b.fits(&rect, 6) {
                b.place(cat, rect, None);
                break;
            }
        }
    }

    let Builder { grid, objects, .. } = b;
    let name = format!("{}_{seed:06}", cfg.template);
    let scene = Scene::new(name, cfg.cell_size, grid, objects, start_pose, cfg.agent_radius)?;
    let centers: Vec<(f64, f64)> = scene.targets(&target).map(|o| o.center).collect();
    match geodesic_to_targets(&scene, start_pose.position(), &centers, cfg.success_distance, cfg.agent_radius)? {
        Some(l) if l > 0.0 => {}
        _ => return Err(Attempt::Retry),
    }
    let rooms = slots
        .iter()
        .zip(&kinds)
        .map(|(s, k)| RoomInfo {
            kind: k.name().to_string(),
            interior: s.interior,
            door: s.door,
        })
        .collect();
    Ok(GeneratedScene {
        scene,
        target_category: target,
        rooms,
        hall,
        cul_de_sac,
        decoy,
    })
}
