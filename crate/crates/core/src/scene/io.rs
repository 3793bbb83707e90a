//! JSON scene files.
//!
//! ```text
//! {
//!   "name": "dead_end_0007",
//!   "cell_size": 0.1,
//!   "grid": "12#/1#10.1#/...",
//!   "objects": [{"category": "sofa", "center": [1.2, 3.4], "footprint_cells": [[12, 34]], "decoy_of": null}],
//!   "start_pose": {"x": 1.0, "y": 1.0, "yaw": 0.0}
//! }
//! ```
//!
//! `grid` is row-major, starting at row 0 (smallest `y`). Each row is a sequence of runs
//! `<count><symbol>` with `.` for free and `#` for occupied; rows are separated by `/`.

use super::{ObjectInstance, OccupancyGrid, Scene, SceneError};
use crate::geometry::AgentPose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub category: String,
    pub center: [f64; 2],
    pub footprint_cells: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoy_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub name: String,
    pub cell_size: f64,
    pub grid: String,
    pub objects: Vec<ObjectRecord>,
    pub start_pose: PoseRecord,
}

pub fn encode_grid(grid: &OccupancyGrid) -> String {
    let mut out = String::new();
    for j in 0..grid.height() {
        if j > 0 {
            out.push('/');
        }
        let mut i = 0;
        while i < grid.width() {
            let occ = grid.is_occupied((i, j));
            let start = i;
            while i < grid.width() && grid.is_occupied((i, j)) == occ {
                i += 1;
            }
            out.push_str(&(i - start).to_string());
            out.push(if occ { '#' } else { '.' });
        }
    }
    out
}

pub fn decode_grid(s: &str) -> Result<OccupancyGrid, SceneError> {
    let mut width = None;
    let mut cells = Vec::new();
    let mut height = 0;
    for (j, row) in s.split('/').enumerate() {
        let mut count = String::new();
        let mut row_len = 0usize;
        for ch in row.chars() {
            match ch {
                '0'..='9' => count.push(ch),
                '.' | '#' => {
                    let n: usize = if count.is_empty() {
                        1
                    } else {
                        count.parse().map_err(|_| {
                            SceneError::invalid("grid", format!("row {j}: bad run length `{count}`"))
                        })?
                    };
                    if n == 0 {
                        return Err(SceneError::invalid("grid", format!("row {j}: zero-length run")));
                    }
                    cells.extend(std::iter::repeat_n(ch == '#', n));
                    row_len += n;
                    count.clear();
                }
                c => {
                    return Err(SceneError::invalid(
                        "grid",
                        format!("row {j}: unexpected character `{c}`"),
                    ))
                }
            }
        }
        if !count.is_empty() {
            return Err(SceneError::invalid("grid", format!("row {j}: dangling run length")));
        }
        match width {
            None => width = Some(row_len),
            Some(w) if w != row_len => {
                return Err(SceneError::invalid(
                    "grid",
                    format!("row {j} has {row_len} cells, expected {w}"),
                ))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.unwrap_or(0);
    if width == 0 {
        return Err(SceneError::invalid("grid", "grid is empty"));
    }
    Ok(OccupancyGrid::from_cells(width, height, cells))
}

impl SceneFile {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            name: scene.name.clone(),
            cell_size: scene.cell_size,
            grid: encode_grid(&scene.grid),
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    category: o.category.clone(),
                    center: [o.center.0, o.center.1],
                    footprint_cells: o.footprint.iter().map(|&(i, j)| [i, j]).collect(),
                    decoy_of: o.decoy_of.clone(),
                })
                .collect(),
            start_pose: PoseRecord {
                x: scene.start_pose.x,
                y: scene.start_pose.y,
                yaw: scene.start_pose.yaw,
            },
        }
    }

    pub fn into_scene(self, agent_radius: f64) -> Result<Scene, SceneError> {
        let grid = decode_grid(&self.grid)?;
        if !(self.start_pose.yaw.is_finite()) {
            return Err(SceneError::invalid("start_pose.yaw", "non-finite yaw"));
        }
        let objects = self
            .objects
            .into_iter()
            .map(|o| ObjectInstance {
                category: o.category,
                center: (o.center[0], o.center[1]),
                footprint: o.footprint_cells.into_iter().map(|[i, j]| (i, j)).collect(),
                decoy_of: o.decoy_of,
            })
            .collect();
        Scene::new(
            self.name,
            self.cell_size,
            grid,
            objects,
            AgentPose::new(self.start_pose.x, self.start_pose.y, self.start_pose.yaw),
            agent_radius,
        )
    }
}

impl Scene {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SceneFile::from_scene(self)).expect("scene serializes")
    }

    pub fn from_json(text: &str, agent_radius: f64) -> Result<Self, SceneError> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| SceneError::Json(e.to_string()))?;
        file.into_scene(agent_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decode_simple() {
        let g = decode_grid("3#/1#1.1#/3#").unwrap();
        assert_eq!((g.width(), g.height()), (3, 3));
        assert!(!g.is_occupied((1, 1)));
        assert!(g.is_occupied((0, 1)));
        assert_eq!(encode_grid(&g), "3#/1#1.1#/3#");
    }

    #[test]
    fn decode_errors() {
        assert!(decode_grid("").is_err());
        assert!(decode_grid("3#/2#").unwrap_err().to_string().contains("row 1"));
        assert!(decode_grid("3x").is_err());
        assert!(decode_grid("3#4").is_err());
        assert!(decode_grid("0#").is_err());
    }

    #[test]
    fn loader_reports_field() {
        let text = r#"{"name":"t","cell_size":0.1,"grid":"5#/1#3.1#/1#3.1#/1#3.1#/5#",
            "objects":[{"category":"tv","center":[0.25,0.25],"footprint_cells":[[2,2]]}],
            "start_pose":{"x":0.15,"y":0.15,"yaw":0}}"#;
        let err = Scene::from_json(text, 0.0).unwrap_err();
        assert!(err.to_string().contains("objects[0].footprint_cells"), "{err}");

        let text = r#"{"name":"t","cell_size":-1,"grid":"3.","objects":[],"start_pose":{"x":0.1,"y":0.1,"yaw":0}}"#;
        assert!(Scene::from_json(text, 0.0).unwrap_err().to_string().contains("cell_size"));
    }

    fn arb_grid() -> impl Strategy<Value = OccupancyGrid> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h)
                .prop_map(move |cells| OccupancyGrid::from_cells(w, h, cells))
        })
    }

    proptest! {
        #[test]
        fn rle_round_trip(g in arb_grid()) {
            prop_assert_eq!(decode_grid(&encode_grid(&g)).unwrap(), g);
        }
    }
}
