//! Immutable, reachability-closed heap images: the persistent program state.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Heap, HeapObject, Pointer, PtrTag};

/// The control-register values that survive a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotRoots {
    /// Scheduler-state object; the primary root of the memory graph.
    pub sched_state: Pointer,
    /// Frame interrupted by the previous transition, or null.
    pub int_frame: Pointer,
    pub globals: Pointer,
    pub constants: Pointer,
    /// Code pointer of the installed fault handler, or null.
    pub fault_handler: Pointer,
}

impl SnapshotRoots {
    pub fn heap_roots(&self) -> impl Iterator<Item = Pointer> {
        [self.sched_state, self.int_frame, self.globals, self.constants].into_iter()
    }
}

/// Immutable image of the objects reachable from the root set. Object images
/// are structurally shared with the heap they were taken from.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub roots: SnapshotRoots,
    objects: BTreeMap<u32, Arc<HeapObject>>,
    next_id: u32,
    /// Edge flags of the transition that produced this state.
    pub error: bool,
    pub accept: bool,
}

impl Snapshot {
    /// Capture the heap: only objects reachable from the roots are included,
    /// freed objects are dropped, the allocation counter is preserved.
    pub fn capture(heap: &Heap, roots: SnapshotRoots, error: bool, accept: bool) -> Snapshot {
        let mut objects = BTreeMap::new();
        for id in heap.reachable(roots.heap_roots()) {
            objects.insert(id, heap.arc_object(id).unwrap());
        }
        Snapshot { roots, objects, next_id: heap.next_id(), error, accept }
    }

    /// Rebuild a mutable heap; allocation ids continue from the snapshot's
    /// counter, so ids stay stable along an execution path.
    pub fn restore(&self) -> Heap {
        Heap::from_parts(self.objects.clone(), self.next_id)
    }

    pub fn object(&self, id: u32) -> Option<&HeapObject> {
        self.objects.get(&id).map(|o| o.as_ref())
    }

    pub fn object_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.objects.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    /// DOT rendering of the object graph, for debugging.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("digraph heap {\n  node [shape=box];\n");
        let label = |p: Pointer| -> &'static str {
            match p {
                p if p == self.roots.sched_state => " (sched-state)",
                p if p == self.roots.globals => " (globals)",
                p if p == self.roots.constants => " (constants)",
                p if p == self.roots.int_frame => " (int-frame)",
                _ => "",
            }
        };
        for (&id, obj) in &self.objects {
            let _ = writeln!(
                out,
                "  o{} [label=\"#{}{} size={}{}\"];",
                id,
                id,
                label(Pointer::heap(id, 0)),
                obj.size(),
                if obj.shared { " shared" } else { "" }
            );
            for (slot, p) in obj.edges() {
                if p.tag == PtrTag::Heap && !p.is_null() && self.objects.contains_key(&p.id) {
                    let _ = writeln!(out, "  o{} -> o{} [label=\"+{}\"];", id, p.id, slot * 8);
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
