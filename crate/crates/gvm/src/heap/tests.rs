use super::*;
use crate::fault::FaultKind;

fn roots_of(p: Pointer) -> SnapshotRoots {
    SnapshotRoots {
        sched_state: p,
        int_frame: Pointer::null(),
        globals: Pointer::null(),
        constants: Pointer::null(),
        fault_handler: Pointer::null(),
    }
}

fn snap(heap: &Heap, root: Pointer) -> Snapshot {
    Snapshot::capture(heap, roots_of(root), false, false)
}

#[test]
fn make_zero_length_object_faults_on_any_access() {
    let mut h = Heap::new();
    let p = h.obj_make(0);
    assert_eq!(h.obj_size(p), Ok(0));
    assert_eq!(h.read(&MemCtx::none(), p, 1), Err(FaultKind::OutOfBounds));
}

#[test]
fn make_and_size() {
    let mut h = Heap::new();
    let p = h.obj_make(16);
    assert_eq!(h.obj_size(p), Ok(16));
}

#[test]
fn ids_are_stable_across_snapshot_restore() {
    let mut h = Heap::new();
    let a = h.obj_make(8);
    let b = h.obj_make(8);
    assert_ne!(a.id, b.id);
    let s = snap(&h, a);
    let mut h2 = s.restore();
    let c = h2.obj_make(8);
    let mut h3 = s.restore();
    let c2 = h3.obj_make(8);
    assert_eq!(c.id, c2.id);
    assert!(c.id > b.id);
}

#[test]
fn use_after_free_and_double_free() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(8);
    h.obj_free(p).unwrap();
    assert_eq!(h.read(&ctx, p, 1), Err(FaultKind::UseAfterFree));
    assert_eq!(h.obj_free(p), Err(FaultKind::DoubleFree));
}

#[test]
fn free_of_non_heap_pointer_is_invalid() {
    let mut h = Heap::new();
    assert_eq!(h.obj_free(Pointer::global(0, 0)), Err(FaultKind::InvalidFree));
    let p = h.obj_make(8);
    assert_eq!(h.obj_free(p.gep(4)), Err(FaultKind::InvalidFree));
}

#[test]
fn resize_shrink_then_out_of_bounds() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(16);
    h.obj_resize(p, 8).unwrap();
    assert_eq!(h.read(&ctx, p.gep(8), 1), Err(FaultKind::OutOfBounds));
}

#[test]
fn resize_grow_preserves_prefix() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(8);
    h.write(&ctx, p, 8, 0x1122334455667788, true, false).unwrap();
    h.obj_resize(p, 16).unwrap();
    let r = h.read(&ctx, p, 8).unwrap();
    assert_eq!(r.bits, 0x1122334455667788);
    assert!(r.defined);
    assert!(!h.read(&ctx, p.gep(8), 8).unwrap().defined);
}

#[test]
fn resize_clears_slot_straddling_the_cut() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(16);
    let q = h.obj_make(4);
    h.write(&ctx, p.gep(8), 8, q.encode(), true, true).unwrap();
    h.obj_resize(p, 12).unwrap();
    h.obj_resize(p, 16).unwrap();
    assert!(!h.read(&ctx, p.gep(8), 8).unwrap().is_pointer);
}

#[test]
fn read_one_past_end_is_out_of_bounds() {
    let mut h = Heap::new();
    let p = h.obj_make(8);
    assert_eq!(h.read(&MemCtx::none(), p.gep(8), 1), Err(FaultKind::OutOfBounds));
}

#[test]
fn pointer_round_trips_through_memory() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(16);
    let q = h.obj_make(4);
    h.write(&ctx, p, 8, q.encode(), true, true).unwrap();
    let r = h.read(&ctx, p, 8).unwrap();
    assert!(r.is_pointer);
    assert_eq!(Pointer::decode(r.bits), q);
}

#[test]
fn partial_overwrite_destroys_the_edge() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(16);
    let q = h.obj_make(4);
    h.write(&ctx, p, 8, q.encode(), true, true).unwrap();
    h.write(&ctx, p.gep(3), 1, 0xaa, true, false).unwrap();
    let r = h.read(&ctx, p, 8).unwrap();
    assert!(!r.is_pointer);
    // misaligned 4-byte write over the middle of a slot also clears it
    h.write(&ctx, p.gep(8), 8, q.encode(), true, true).unwrap();
    h.write(&ctx, p.gep(10), 4, 0, true, false).unwrap();
    assert!(!h.read(&ctx, p.gep(8), 8).unwrap().is_pointer);
}

#[test]
fn writing_pointer_into_shared_object_shares_the_pointee_closure() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let shared = h.obj_make(8);
    h.mark_shared(shared);
    let a = h.obj_make(16);
    let b = h.obj_make(8);
    h.write(&ctx, a, 8, b.encode(), true, true).unwrap();
    assert!(!h.is_shared(a.id));
    h.write(&ctx, shared, 8, a.encode(), true, true).unwrap();
    assert!(h.is_shared(a.id));
    assert!(h.is_shared(b.id));
}

#[test]
fn mark_shared_handles_cycles_and_is_idempotent() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let a = h.obj_make(8);
    let b = h.obj_make(8);
    h.write(&ctx, a, 8, b.encode(), true, true).unwrap();
    h.write(&ctx, b, 8, a.encode(), true, true).unwrap();
    h.mark_shared(a);
    assert!(h.is_shared(a.id) && h.is_shared(b.id));
    let before = snap(&h, a);
    h.mark_shared(a);
    assert_eq!(canonical_key(&before), canonical_key(&snap(&h, a)));
}

#[test]
fn snapshot_excludes_unreachable_objects() {
    let mut h = Heap::new();
    let root = h.obj_make(8);
    let stray = h.obj_make(8);
    let s = snap(&h, root);
    assert!(s.object(root.id).is_some());
    assert!(s.object(stray.id).is_none());
}

#[test]
fn snapshot_restore_round_trip_and_immutability() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let root = h.obj_make(16);
    let leaf = h.obj_make(8);
    h.write(&ctx, root, 8, leaf.encode(), true, true).unwrap();
    h.write(&ctx, leaf, 4, 0xdead, true, false).unwrap();
    let s = snap(&h, root);
    let mut h2 = s.restore();
    assert_eq!(h2.read(&ctx, leaf, 4).unwrap().bits, 0xdead);
    h2.write(&ctx, leaf, 4, 0xbeef, true, false).unwrap();
    // the original snapshot is unchanged
    assert_eq!(s.restore().read(&ctx, leaf, 4).unwrap().bits, 0xdead);
    assert_eq!(canonical_key(&s), canonical_key(&snap(&s.restore(), root)));
}

#[test]
fn allocation_order_does_not_affect_the_canonical_key() {
    let build = |swap: bool| {
        let mut h = Heap::new();
        let ctx = MemCtx::none();
        let root = h.obj_make(16);
        let (x, y) = if swap {
            let y = h.obj_make(4);
            let x = h.obj_make(8);
            (x, y)
        } else {
            let x = h.obj_make(8);
            let y = h.obj_make(4);
            (x, y)
        };
        h.write(&ctx, root, 8, x.encode(), true, true).unwrap();
        h.write(&ctx, root.gep(8), 8, y.encode(), true, true).unwrap();
        canonical_key(&snap(&h, root))
    };
    assert_eq!(build(false), build(true));
}

#[test]
fn one_defined_byte_changes_the_key() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let root = h.obj_make(8);
    let k1 = canonical_key(&snap(&h, root));
    h.write(&ctx, root, 1, 1, true, false).unwrap();
    let k2 = canonical_key(&snap(&h, root));
    assert_ne!(k1, k2);
}

#[test]
fn gep_overflow_poisons_the_pointer() {
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let p = h.obj_make(8);
    let q = p.gep(4).gep(u32::MAX as i64);
    assert_eq!(q.id, POISON_ID);
    assert_eq!(h.read(&ctx, q, 1), Err(FaultKind::OutOfBounds));
    let neg = p.gep(-1);
    assert_eq!(neg.id, POISON_ID);
    assert_eq!(h.read(&ctx, neg, 1), Err(FaultKind::OutOfBounds));
    // poisoned pointers stay poisoned
    assert_eq!(q.gep(-(u32::MAX as i64)).id, POISON_ID);
}

#[test]
fn slot_boundaries_are_enforced_like_object_boundaries() {
    let mut h = Heap::new();
    let globals = build_slot_object(&mut h, &[(8, None), (4, Some(vec![1, 2, 3, 4]))]);
    let constants = build_slot_object(&mut h, &[(2, Some(vec![0xab, 0xcd]))]);
    let ctx = MemCtx { globals, constants };
    let g0 = Pointer::global(0, 0);
    let g1 = Pointer::global(1, 0);
    assert!(h.write(&ctx, g0, 8, 7, true, false).is_ok());
    assert_eq!(h.read(&ctx, g0, 8).unwrap().bits, 7);
    assert_eq!(h.read(&ctx, g1, 4).unwrap().bits, 0x04030201);
    // reading across the end of slot 1 faults even though the backing object continues
    assert_eq!(h.read(&ctx, g1.gep(1), 4), Err(FaultKind::OutOfBounds));
    assert_eq!(h.read(&ctx, Pointer::global(2, 0), 1), Err(FaultKind::BadPointer));
    let c0 = Pointer::constant(0, 0);
    assert_eq!(h.read(&ctx, c0, 2).unwrap().bits, 0xcdab);
    assert_eq!(h.write(&ctx, c0, 1, 0, true, false), Err(FaultKind::ReadOnly));
    // the constants backing object is immutable even through a raw heap pointer
    assert_eq!(h.write(&ctx, constants, 1, 0, true, false), Err(FaultKind::ReadOnly));
}

#[test]
fn edge_set_matches_pointer_reads() {
    // edge soundness, checked exhaustively on a small heap
    let mut h = Heap::new();
    let ctx = MemCtx::none();
    let a = h.obj_make(32);
    let b = h.obj_make(8);
    h.write(&ctx, a, 8, b.encode(), true, true).unwrap();
    h.write(&ctx, a.gep(8), 8, b.encode(), true, false).unwrap(); // same bits, not a pointer
    h.write(&ctx, a.gep(16), 8, a.encode(), true, true).unwrap();
    for id in h.object_ids().collect::<Vec<_>>() {
        let obj = h.object(id).unwrap();
        let from_edges: Vec<(usize, Pointer)> = obj.edges().collect();
        let mut from_reads = Vec::new();
        for s in 0..obj.size() / 8 {
            let r = h.read(&ctx, Pointer::heap(id, (s * 8) as u32), 8).unwrap();
            if r.is_pointer {
                from_reads.push((s, Pointer::decode(r.bits)));
            }
        }
        assert_eq!(from_edges, from_reads);
    }
}

#[test]
fn canonical_key_matches_brute_force_isomorphism() {
    // small deterministic sample; the acceptance suite runs the large sweep
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut snaps = Vec::new();
    for _ in 0..40 {
        let (h, root) = random_heap(&mut rng);
        snaps.push(snap(&h, root));
    }
    for i in 0..snaps.len() {
        for j in i + 1..snaps.len() {
            let key_eq = canonical_key(&snaps[i]) == canonical_key(&snaps[j]);
            assert_eq!(key_eq, iso::isomorphic(&snaps[i], &snaps[j]), "pair {i},{j}");
        }
    }
}

/// Random small heap builder shared with the acceptance sweep.
pub fn random_heap<R: rand::Rng>(rng: &mut R) -> (Heap, Pointer) {
    let ctx = MemCtx::none();
    let mut h = Heap::new();
    let n = rng.gen_range(1..=6);
    let mut ptrs = Vec::new();
    for _ in 0..n {
        let size = 8 * rng.gen_range(0..=4usize);
        ptrs.push(h.obj_make(size.min(32)));
    }
    let root = ptrs[0];
    for &p in &ptrs {
        let slots = h.object(p.id).unwrap().size() / 8;
        for s in 0..slots {
            match rng.gen_range(0..4) {
                0 => {
                    let q = ptrs[rng.gen_range(0..ptrs.len())];
                    h.write(&ctx, p.gep((s * 8) as i64), 8, q.encode(), true, true).unwrap();
                }
                1 => {
                    let v: u8 = rng.gen_range(0..3);
                    h.write(&ctx, p.gep((s * 8) as i64), 8, v as u64, true, false).unwrap();
                }
                _ => {}
            }
        }
    }
    if rng.gen_bool(0.3) && ptrs.len() > 1 {
        h.mark_shared(ptrs[1]);
    }
    (h, root)
}
