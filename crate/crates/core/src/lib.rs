pub mod geometry;
pub mod scene;
pub mod semantics;
pub mod perception;
pub mod memory;
pub mod action;
pub mod advisor;
pub mod rethink;
pub mod eval;
