//! Small built-in vocabulary of room types and the object categories found in them.
//!
//! The scene generator furnishes rooms from this table and the scripted advisor derives its
//! object co-occurrence prior from the same table.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoomKind {
    LivingRoom,
    Bedroom,
    Kitchen,
    Bathroom,
    Office,
    Hallway,
}

impl RoomKind {
    pub const ROOMS: [RoomKind; 5] = [
        RoomKind::LivingRoom,
        RoomKind::Bedroom,
        RoomKind::Kitchen,
        RoomKind::Bathroom,
        RoomKind::Office,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RoomKind::LivingRoom => "living_room",
            RoomKind::Bedroom => "bedroom",
            RoomKind::Kitchen => "kitchen",
            RoomKind::Bathroom => "bathroom",
            RoomKind::Office => "office",
            RoomKind::Hallway => "hallway",
        }
    }

    pub fn furniture(self) -> &'static [&'static str] {
        match self {
            RoomKind::LivingRoom => &["sofa", "tv", "coffee_table", "armchair", "floor_lamp"],
            RoomKind::Bedroom => &["bed", "nightstand", "wardrobe", "dresser"],
            RoomKind::Kitchen => &["refrigerator", "oven", "counter", "dining_table"],
            RoomKind::Bathroom => &["toilet", "sink", "bathtub", "towel_rack"],
            RoomKind::Office => &["desk", "chair", "bookshelf", "plant"],
            RoomKind::Hallway => &["coat_stand", "shoe_rack", "cabinet", "umbrella_stand"],
        }
    }

    pub fn of_category(category: &str) -> Option<RoomKind> {
        Self::ROOMS
            .into_iter()
            .chain([RoomKind::Hallway])
            .find(|k| k.furniture().contains(&category))
    }
}

/// Categories episodes may ask the agent to find.
pub const TARGET_CATEGORIES: [&str; 6] = ["sofa", "tv", "bed", "toilet", "chair", "plant"];

/// Categories that typically share a room with `target` (excluding `target` itself).
pub fn cooccurring(target: &str) -> BTreeSet<&'static str> {
    RoomKind::of_category(target)
        .map(|k| k.furniture().iter().copied().filter(|c| *c != target).collect())
        .unwrap_or_default()
}

/// An object category that is easily mistaken for `target`.
pub fn lookalike(target: &str) -> &'static str {
    match target {
        "sofa" => "bench",
        "tv" => "mirror",
        "bed" => "massage_table",
        "toilet" => "trash_can",
        "chair" => "stool",
        "plant" => "plant_poster",
        _ => "statue",
    }
}

/// Footprint in cells (width, depth) for a category at 0.1 m cells.
pub fn footprint_cells(category: &str) -> (usize, usize) {
    match category {
        "sofa" | "bed" | "bathtub" | "dining_table" | "counter" | "desk" | "bench" | "massage_table" => (6, 4),
        "tv" | "mirror" | "wardrobe" | "bookshelf" | "dresser" | "shoe_rack" | "cabinet" => (5, 2),
        "coffee_table" | "refrigerator" | "oven" => (4, 3),
        "armchair" | "toilet" | "sink" | "chair" | "stool" | "trash_can" => (3, 3),
        _ => (2, 2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_are_disjoint() {
        let mut seen = BTreeSet::new();
        for k in RoomKind::ROOMS.into_iter().chain([RoomKind::Hallway]) {
            for c in k.furniture() {
                assert!(seen.insert(*c), "{c} appears in two room kinds");
            }
        }
    }

    #[test]
    fn cooccurrence() {
        let c = cooccurring("sofa");
        assert!(c.contains("tv") && c.contains("coffee_table"));
        assert!(!c.contains("sofa"));
        assert!(cooccurring("unknown_thing").is_empty());
        for t in TARGET_CATEGORIES {
            assert!(!cooccurring(t).is_empty());
            assert_ne!(lookalike(t), t);
        }
    }
}
