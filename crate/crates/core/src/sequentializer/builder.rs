//! Temporary line allocation with provenance tracking.

use super::{LineOrigin, SyntheticReason};
use crate::minic::{Expr, LineId, Stmt, StmtKind};
use std::collections::HashMap;

/// Loop identity: thread ordinal, call path, loop line.
pub(crate) type LoopKey = (usize, Vec<LineId>, LineId);

#[derive(Debug, Clone, Copy)]
pub(crate) struct Prov {
    pub origin: LineOrigin,
    pub ineligible: bool,
}

#[derive(Debug, Clone)]
pub(crate) enum Marker {
    /// Place of an order guard: leave the segment when the loop counter matches.
    Guard { thread: usize, tag: i64, counter: Option<(LoopKey, u32)> },
    /// End of a loop body.
    LoopEnd(LoopKey),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Builder {
    next: u32,
    prov: HashMap<LineId, Prov>,
    /// Copy → node of the thread tree it was copied from.
    node: HashMap<LineId, LineId>,
    pub markers: HashMap<LineId, Marker>,
}

impl Builder {
    pub fn alloc(&mut self, origin: LineOrigin, ineligible: bool) -> LineId {
        self.next += 1;
        let id = LineId(self.next);
        self.prov.insert(id, Prov { origin, ineligible });
        id
    }

    pub fn stmt(&mut self, kind: StmtKind, origin: LineOrigin, ineligible: bool) -> Stmt {
        Stmt::new(self.alloc(origin, ineligible), kind)
    }

    pub fn synthetic(&mut self, kind: StmtKind, reason: SyntheticReason) -> Stmt {
        self.stmt(kind, LineOrigin::Synthetic(reason), true)
    }

    pub fn prov(&self, id: LineId) -> Prov {
        *self.prov.get(&id).unwrap_or_else(|| panic!("line {id} has no provenance"))
    }

    pub fn set_ineligible(&mut self, id: LineId) {
        if let Some(p) = self.prov.get_mut(&id) {
            p.ineligible = true;
        }
    }

    pub fn marker(&mut self, m: Marker) -> Stmt {
        let s = self.synthetic(StmtKind::Assume(Expr::Bool(true)), SyntheticReason::OrderControl);
        self.markers.insert(s.line, m);
        s
    }

    /// Tree node a statement was copied from (itself for tree nodes).
    pub fn node_of(&self, id: LineId) -> LineId {
        self.node.get(&id).copied().unwrap_or(id)
    }

    /// Deep copy with fresh lines, same provenance, markers carried over.
    pub fn copy(&mut self, s: &Stmt) -> Stmt {
        let mut c = s.clone();
        c.walk_mut(&mut |st| {
            let old = st.line;
            let prov = self.prov(old);
            let new = self.alloc(prov.origin, prov.ineligible);
            let node = self.node_of(old);
            self.node.insert(new, node);
            if let Some(m) = self.markers.get(&old).cloned() {
                self.markers.insert(new, m);
            }
            st.line = new;
        });
        c
    }
}
