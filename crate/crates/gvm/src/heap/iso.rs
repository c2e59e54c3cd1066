//! Brute-force labeled-graph isomorphism over snapshots.
//!
//! Decides isomorphism by trying every bijection between the object sets, so
//! it is only usable for very small heaps. It deliberately shares no code
//! with the canonical-key path; it exists as an independent reference check
//! for the canonicalizer.

use super::{HeapObject, Pointer, PtrTag, Snapshot};

/// Node label: everything except the identity of pointed-to heap objects.
fn label_matches(a: &HeapObject, b: &HeapObject) -> bool {
    if a.size() != b.size()
        || a.shared != b.shared
        || a.def_bitmap() != b.def_bitmap()
        || a.ptrmap_bitmap() != b.ptrmap_bitmap()
    {
        return false;
    }
    // non-pointer bytes must match exactly; pointer slots are compared
    // structurally by `edges_match`, except for tag and offset
    for i in 0..a.size() {
        let in_slot = a.slot_is_pointer(i / 8);
        if !in_slot && a.bytes()[i] != b.bytes()[i] {
            return false;
        }
    }
    for s in 0..a.size() / 8 {
        if let (Some(p), Some(q)) = (a.slot_pointer(s), b.slot_pointer(s)) {
            if p.tag != q.tag || p.offset != q.offset {
                return false;
            }
            if p.tag != PtrTag::Heap && p.id != q.id {
                return false;
            }
        }
    }
    true
}

fn edges_match(a: &Snapshot, b: &Snapshot, map: &[(u32, u32)]) -> bool {
    let image = |id: u32| map.iter().find(|(x, _)| *x == id).map(|(_, y)| *y);
    for &(ia, ib) in map {
        let oa = a.object(ia).unwrap();
        let ob = b.object(ib).unwrap();
        for s in 0..oa.size() / 8 {
            match (oa.slot_pointer(s), ob.slot_pointer(s)) {
                (None, None) => {}
                (Some(p), Some(q)) if p.is_null() != q.is_null() => return false,
                (Some(p), Some(q)) if p.tag == PtrTag::Heap && !p.is_null() => {
                    match (image(p.id), q.id) {
                        // both dangling: any pair of dead targets is considered equal,
                        // mirroring the canonical serialization
                        (None, qid) if b.object(qid).is_none() => {}
                        (Some(want), got) if want == got => {}
                        _ => return false,
                    }
                }
                (Some(_), Some(_)) => {}
                _ => return false,
            }
        }
    }
    true
}

fn root_pair(a: Pointer, b: Pointer) -> Option<Option<(u32, u32)>> {
    match (a.tag, b.tag) {
        (PtrTag::Heap, PtrTag::Heap) => {
            if a.is_null() != b.is_null() || a.offset != b.offset {
                None
            } else if a.is_null() {
                Some(None)
            } else {
                Some(Some((a.id, b.id)))
            }
        }
        _ => (a == b).then_some(None),
    }
}

/// True iff the two snapshots are isomorphic as labeled graphs with the
/// roots mapped onto each other.
pub fn isomorphic(a: &Snapshot, b: &Snapshot) -> bool {
    if a.len() != b.len() || a.error != b.error || a.accept != b.accept {
        return false;
    }
    if a.roots.fault_handler != b.roots.fault_handler {
        return false;
    }
    let mut forced: Vec<(u32, u32)> = Vec::new();
    for (ra, rb) in [
        (a.roots.sched_state, b.roots.sched_state),
        (a.roots.int_frame, b.roots.int_frame),
        (a.roots.globals, b.roots.globals),
        (a.roots.constants, b.roots.constants),
    ] {
        match root_pair(ra, rb) {
            None => return false,
            Some(Some(pair)) => {
                if let Some(&(_, prev)) = forced.iter().find(|(x, _)| *x == pair.0) {
                    if prev != pair.1 {
                        return false;
                    }
                } else {
                    forced.push(pair);
                }
            }
            Some(None) => {}
        }
    }
    for &(x, y) in &forced {
        match (a.object(x), b.object(y)) {
            (Some(oa), Some(ob)) if label_matches(oa, ob) => {}
            _ => return false,
        }
    }
    let rest_a: Vec<u32> = a.object_ids().filter(|id| !forced.iter().any(|(x, _)| x == id)).collect();
    let rest_b: Vec<u32> = b.object_ids().filter(|id| !forced.iter().any(|(_, y)| y == id)).collect();
    if rest_a.len() != rest_b.len() {
        return false;
    }
    assert!(rest_a.len() <= 8, "brute-force isomorphism is limited to tiny heaps");
    try_assign(a, b, &rest_a, &rest_b, &mut forced.clone(), 0)
}

fn try_assign(
    a: &Snapshot,
    b: &Snapshot,
    rest_a: &[u32],
    rest_b: &[u32],
    map: &mut Vec<(u32, u32)>,
    depth: usize,
) -> bool {
    if depth == rest_a.len() {
        return edges_match(a, b, map);
    }
    let x = rest_a[depth];
    for &y in rest_b {
        if map.iter().any(|(_, v)| *v == y) {
            continue;
        }
        if !label_matches(a.object(x).unwrap(), b.object(y).unwrap()) {
            continue;
        }
        map.push((x, y));
        if try_assign(a, b, rest_a, rest_b, map, depth + 1) {
            return true;
        }
        map.pop();
    }
    false
}
