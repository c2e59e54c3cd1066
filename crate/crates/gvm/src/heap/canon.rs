//! Canonical forms for state comparison.
//!
//! The key is a byte serialization of the snapshot after renumbering object
//! ids to DFS pre-order indices; two isomorphic snapshots serialize to equal
//! byte strings, so state equality is a plain byte comparison. The live
//! snapshot keeps its original ids — only the serialized image is renumbered,
//! which keeps pointer-derived values stable along an execution.

use std::collections::BTreeMap;

use super::{Pointer, PtrTag, Snapshot, DANGLING_ID};

/// Versioned, bit-exact state key. Layout: header `GVM1`; canonically encoded
/// int-frame, globals and constants roots (the scheduler root is always
/// object 0); raw fault-handler pointer; `u32` object count; then per object
/// in canonical order `u32 size, bytes, def bitmap, ptrmap bitmap, u8 flags`;
/// final `u8` state flags (error, accept).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub Vec<u8>);

impl CanonicalKey {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// DFS pre-order numbering over the object graph. Roots are visited in the
/// fixed order scheduler state, interrupted frame, globals, constants; the
/// out-edges of each object are followed in ascending slot order.
fn preorder(s: &Snapshot) -> BTreeMap<u32, u32> {
    let mut order: BTreeMap<u32, u32> = BTreeMap::new();
    let mut next = 0u32;
    for root in s.roots.heap_roots() {
        if root.tag != PtrTag::Heap || root.is_null() {
            continue;
        }
        // explicit stack; entries are ids whose visit may still be pending
        let mut stack = vec![root.id];
        while let Some(id) = stack.pop() {
            if order.contains_key(&id) || s.object(id).is_none() {
                continue;
            }
            order.insert(id, next);
            next += 1;
            let obj = s.object(id).unwrap();
            let succs: Vec<u32> = obj
                .edges()
                .filter(|(_, p)| p.tag == PtrTag::Heap && !p.is_null())
                .map(|(_, p)| p.id)
                .collect();
            // push in reverse so the lowest slot is expanded first
            for id in succs.into_iter().rev() {
                stack.push(id);
            }
        }
    }
    order
}

fn renumber(p: Pointer, order: &BTreeMap<u32, u32>) -> Pointer {
    match p.tag {
        PtrTag::Heap if !p.is_null() => match order.get(&p.id) {
            Some(&n) => Pointer { tag: p.tag, id: n, offset: p.offset },
            None => Pointer { tag: p.tag, id: DANGLING_ID, offset: p.offset },
        },
        _ => p,
    }
}

fn serialize(s: &Snapshot, order: &BTreeMap<u32, u32>, ids: &[u32]) -> CanonicalKey {
    let mut out = Vec::new();
    out.extend_from_slice(b"GVM1");
    for root in [s.roots.int_frame, s.roots.globals, s.roots.constants] {
        out.extend_from_slice(&renumber(root, order).encode().to_le_bytes());
    }
    out.extend_from_slice(&s.roots.fault_handler.encode().to_le_bytes());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for &id in ids {
        let obj = s.object(id).unwrap();
        out.extend_from_slice(&(obj.size() as u32).to_le_bytes());
        let mut bytes = obj.bytes().to_vec();
        for (slot, p) in obj.edges() {
            let norm = renumber(p, order).encode();
            bytes[slot * 8..slot * 8 + 8].copy_from_slice(&norm.to_le_bytes());
        }
        out.extend_from_slice(&bytes);
        out.extend_from_slice(obj.def_bitmap());
        out.extend_from_slice(obj.ptrmap_bitmap());
        out.push(obj.shared as u8);
    }
    out.push(s.error as u8 | (s.accept as u8) << 1);
    CanonicalKey(out)
}

/// Canonical key: ids replaced by DFS pre-order indices in the serialized
/// image only.
pub fn canonical_key(s: &Snapshot) -> CanonicalKey {
    let order = preorder(s);
    let mut ids: Vec<u32> = order.keys().copied().collect();
    ids.sort_by_key(|id| order[id]);
    serialize(s, &order, &ids)
}

/// Identity key: same serialization without renumbering. Used when heap
/// symmetry reduction is disabled; never merges states the canonical key
/// would keep apart.
pub fn raw_key(s: &Snapshot) -> CanonicalKey {
    let identity: BTreeMap<u32, u32> = s.object_ids().map(|id| (id, id)).collect();
    let ids: Vec<u32> = s.object_ids().collect();
    serialize(s, &identity, &ids)
}
