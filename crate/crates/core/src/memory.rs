//! Bounded FIFO of past decisions: where the agent stood, which way it chose to go and
//! what it said about its surroundings at the time.

use crate::geometry::distance;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("memory node step {got} does not follow the newest stored step {newest}")]
    StepOrder { newest: u32, got: u32 },
    #[error("no memory nodes to choose from")]
    NoHits,
    #[error("hit index {0} is out of range")]
    BadIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryNode {
    pub position: (f64, f64),
    pub yaw: f64,
    /// Chosen relative view direction, degrees.
    pub direction: u16,
    pub explanation: String,
    pub description: String,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    capacity: usize,
    nodes: VecDeque<MemoryNode>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            nodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Oldest first.
    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &MemoryNode> {
        self.nodes.iter()
    }

    pub fn get(&self, index: usize) -> Option<&MemoryNode> {
        self.nodes.get(index)
    }

    /// Appends `node`, evicting the oldest entry once full. Steps must strictly increase.
    pub fn push(&mut self, node: MemoryNode) -> Result<(), MemoryError> {
        if let Some(newest) = self.nodes.back() {
            if node.step <= newest.step {
                return Err(MemoryError::StepOrder {
                    newest: newest.step,
                    got: node.step,
                });
            }
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.nodes.len() == self.capacity {
            self.nodes.pop_front();
        }
        self.nodes.push_back(node);
        Ok(())
    }

    /// Among the stored nodes at `hits`, the one farthest from `p`. Ties go to the oldest.
    pub fn furthest_hit(&self, hits: &[usize], p: (f64, f64)) -> Result<&MemoryNode, MemoryError> {
        let mut best: Option<(usize, f64)> = None;
        for &h in hits {
            let node = self.nodes.get(h).ok_or(MemoryError::BadIndex(h))?;
            let d = distance(node.position, p);
            match best {
                Some((b, bd)) if d < bd || (d == bd && b < h) => {}
                _ => best = Some((h, d)),
            }
        }
        best.map(|(h, _)| &self.nodes[h]).ok_or(MemoryError::NoHits)
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.nodes).expect("memory serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
