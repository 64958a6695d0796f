use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::config::MachineConfig;
use crate::deg::{Deg, EdgeKind, VertexId, WeightVector};
use crate::Result;

#[derive(Clone, Debug)]
struct Slot {
    /// Assignment stamp; 0 means never used.
    used: u64,
    occupant: Option<(VertexId, WeightVector)>,
    /// EC vertices of the newest occupants, oldest first.
    in_flight: VecDeque<(VertexId, u64)>,
}

#[derive(Clone, Debug)]
struct UnitClass {
    pipelined: bool,
    depth: Option<u32>,
    slots: Vec<Slot>,
}

/// Outcome of [`Scoreboard::assign`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotGrant {
    pub slot: usize,
    /// Structural edge source and weight, if the slot was used before.
    pub after: Option<(VertexId, WeightVector)>,
    /// Pipe-depth edge source, if the pipe was full.
    pub drain: Option<VertexId>,
}

/// Functional-unit slots per unit class. Slots are handed out in least
/// recently assigned order (never used slots first, lowest index first).
#[derive(Clone, Debug)]
pub struct Scoreboard {
    classes: Vec<UnitClass>,
    clock: u64,
}

impl Scoreboard {
    pub fn new(machine: &MachineConfig) -> Self {
        let classes = machine
            .units
            .iter()
            .map(|u| UnitClass {
                pipelined: u.pipelined,
                depth: if u.pipelined { u.pipe_depth } else { None },
                slots: (0..u.count)
                    .map(|_| Slot {
                        used: 0,
                        occupant: None,
                        in_flight: VecDeque::new(),
                    })
                    .collect(),
            })
            .collect();
        Scoreboard { classes, clock: 0 }
    }

    pub fn has_pipe_depth(&self, unit: usize) -> bool {
        self.classes[unit].depth.is_some()
    }

    /// Assigns the E vertex `e` (with per-lane latency `exec`, and EC
    /// vertex `ec` for depth-limited units) to a slot of `unit` and adds
    /// the structural edges to `g`.
    pub fn assign(
        &mut self,
        g: &mut Deg,
        unit: usize,
        e: VertexId,
        ec: Option<VertexId>,
        exec: &WeightVector,
    ) -> Result<SlotGrant> {
        self.clock += 1;
        let lanes = g.lanes();
        let class = &mut self.classes[unit];
        let slot_idx = class
            .slots
            .iter()
            .enumerate()
            .min_by_key(|(i, s)| (s.used, *i))
            .map(|(i, _)| i)
            .expect("unit classes have at least one slot");
        let slot = &mut class.slots[slot_idx];
        slot.used = self.clock;

        let mut grant = SlotGrant {
            slot: slot_idx,
            after: None,
            drain: None,
        };
        if let Some((prev, prev_lat)) = slot.occupant.take() {
            let w = if class.pipelined {
                WeightVector::splat(lanes, 1)
            } else {
                prev_lat
            };
            g.connect(prev, e, EdgeKind::ResourceFU, w.clone())?;
            g.unpin(prev);
            grant.after = Some((prev, w));
        }
        if let Some(depth) = class.depth {
            let depth = depth as usize;
            if slot.in_flight.len() == depth {
                let (oldest, oldest_lat) = slot.in_flight.pop_front().expect("full ring");
                if (depth as u64) < oldest_lat {
                    g.connect(
                        oldest,
                        e,
                        EdgeKind::ResourcePipeDepth,
                        WeightVector::zeros(lanes),
                    )?;
                    grant.drain = Some(oldest);
                }
                g.unpin(oldest);
            }
            if let Some(ec) = ec {
                g.pin(ec)?;
                slot.in_flight.push_back((ec, exec.max_lane()));
            }
        }
        g.pin(e)?;
        slot.occupant = Some((e, exec.clone()));
        Ok(grant)
    }
}
