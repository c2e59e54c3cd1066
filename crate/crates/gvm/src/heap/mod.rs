//! Graph-organised memory: object store, shadow typing, pointer semantics,
//! shared-set maintenance and reachability-closed snapshots.
//!
//! The heap is a directed graph. Nodes are byte-array objects with shadow
//! metadata (per-byte definedness, per-slot pointer flags); edges are the
//! pointers stored at tracked 8-byte-aligned slots.

mod canon;
pub mod iso;
mod snapshot;

pub use canon::{canonical_key, raw_key, CanonicalKey};
pub use snapshot::{Snapshot, SnapshotRoots};

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::fault::FaultKind;

/// Object-id value produced when pointer offset arithmetic overflows 32 bits.
/// Never allocated; dereferencing it is always an out-of-bounds fault.
pub const POISON_ID: u32 = 0x3fff_ffff;

/// Canonical stand-in for dangling edges (target freed or never snapshotted).
pub const DANGLING_ID: u32 = 0x3fff_fffe;

const ID_MASK: u64 = 0x3fff_ffff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PtrTag {
    Heap = 0,
    Global = 1,
    Constant = 2,
    Code = 3,
}

/// Tagged pair of object id and byte offset, packed into 64 bits with the
/// offset in the least significant half and a 2-bit tag on top of the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pointer {
    pub tag: PtrTag,
    pub id: u32,
    pub offset: u32,
}

impl Pointer {
    pub fn heap(id: u32, offset: u32) -> Pointer {
        Pointer { tag: PtrTag::Heap, id, offset }
    }

    pub fn global(slot: u32, offset: u32) -> Pointer {
        Pointer { tag: PtrTag::Global, id: slot, offset }
    }

    pub fn constant(slot: u32, offset: u32) -> Pointer {
        Pointer { tag: PtrTag::Constant, id: slot, offset }
    }

    pub fn code(function: u32, instr: u32) -> Pointer {
        Pointer { tag: PtrTag::Code, id: function, offset: instr }
    }

    pub fn null() -> Pointer {
        Pointer::heap(0, 0)
    }

    pub fn is_null(&self) -> bool {
        self.encode() == 0
    }

    pub fn encode(&self) -> u64 {
        ((self.tag as u64) << 62) | ((self.id as u64 & ID_MASK) << 32) | self.offset as u64
    }

    pub fn decode(bits: u64) -> Pointer {
        let tag = match bits >> 62 {
            0 => PtrTag::Heap,
            1 => PtrTag::Global,
            2 => PtrTag::Constant,
            _ => PtrTag::Code,
        };
        Pointer { tag, id: ((bits >> 32) & ID_MASK) as u32, offset: bits as u32 }
    }

    /// Pointer + signed byte offset. Overflowing the 32-bit offset in either
    /// direction poisons the id so the result can never alias another object.
    pub fn gep(&self, delta: i64) -> Pointer {
        if self.id == POISON_ID {
            return *self;
        }
        let off = self.offset as i64 + delta;
        if (0..=u32::MAX as i64).contains(&off) {
            Pointer { tag: self.tag, id: self.id, offset: off as u32 }
        } else {
            Pointer { tag: self.tag, id: POISON_ID, offset: off as u32 }
        }
    }
}

/// A node of the memory graph: guest-visible bytes plus shadow metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapObject {
    bytes: Vec<u8>,
    /// Bit per byte: has this byte been written.
    def: Vec<u8>,
    /// Bit per aligned 8-byte slot: does the slot hold an intact pointer.
    ptrmap: Vec<u8>,
    pub valid: bool,
    pub shared: bool,
}

fn bitmap_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

fn get_bit(map: &[u8], i: usize) -> bool {
    map[i / 8] & (1 << (i % 8)) != 0
}

fn set_bit(map: &mut [u8], i: usize, v: bool) {
    if v {
        map[i / 8] |= 1 << (i % 8);
    } else {
        map[i / 8] &= !(1 << (i % 8));
    }
}

impl HeapObject {
    pub fn new(size: usize) -> HeapObject {
        HeapObject {
            bytes: vec![0; size],
            def: vec![0; bitmap_len(size)],
            ptrmap: vec![0; bitmap_len(size / 8)],
            valid: true,
            shared: false,
        }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn def_bitmap(&self) -> &[u8] {
        &self.def
    }

    pub fn ptrmap_bitmap(&self) -> &[u8] {
        &self.ptrmap
    }

    fn slot_count(&self) -> usize {
        self.bytes.len() / 8
    }

    pub fn slot_is_pointer(&self, slot: usize) -> bool {
        slot < self.slot_count() && get_bit(&self.ptrmap, slot)
    }

    pub fn slot_pointer(&self, slot: usize) -> Option<Pointer> {
        if !self.slot_is_pointer(slot) {
            return None;
        }
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&self.bytes[slot * 8..slot * 8 + 8]);
        Some(Pointer::decode(u64::from_le_bytes(raw)))
    }

    /// All pointer edges stored in this object, in ascending slot order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, Pointer)> + '_ {
        (0..self.slot_count()).filter_map(|s| self.slot_pointer(s).map(|p| (s, p)))
    }

    pub fn all_defined(&self, offset: usize, len: usize) -> bool {
        (offset..offset + len).all(|i| get_bit(&self.def, i))
    }

    fn write_raw(&mut self, offset: usize, data: &[u8], defined: bool, is_pointer: bool) {
        self.bytes[offset..offset + data.len()].copy_from_slice(data);
        for i in offset..offset + data.len() {
            set_bit(&mut self.def, i, defined);
        }
        // any write invalidates the pointerhood of slots it touches
        let first_slot = offset / 8;
        let last_slot = (offset + data.len() - 1) / 8;
        for s in first_slot..=last_slot.min(self.slot_count().saturating_sub(1)) {
            if s < self.slot_count() {
                set_bit(&mut self.ptrmap, s, false);
            }
        }
        if is_pointer && defined && data.len() == 8 && offset % 8 == 0 && offset / 8 < self.slot_count()
        {
            set_bit(&mut self.ptrmap, offset / 8, true);
        }
    }

    fn resize(&mut self, new_size: usize) {
        let old_size = self.bytes.len();
        self.bytes.resize(new_size, 0);
        let mut def = vec![0u8; bitmap_len(new_size)];
        for i in 0..old_size.min(new_size) {
            if get_bit(&self.def, i) {
                set_bit(&mut def, i, true);
            }
        }
        self.def = def;
        let old_slots = old_size / 8;
        let new_slots = new_size / 8;
        let mut ptrmap = vec![0u8; bitmap_len(new_slots)];
        for s in 0..old_slots.min(new_slots) {
            // slots straddling the cut were dropped by the min above
            if get_bit(&self.ptrmap, s) {
                set_bit(&mut ptrmap, s, true);
            }
        }
        self.ptrmap = ptrmap;
    }
}

/// Resolution context: which heap objects back global and constant pointers.
#[derive(Debug, Clone, Copy)]
pub struct MemCtx {
    pub globals: Pointer,
    pub constants: Pointer,
}

impl MemCtx {
    pub fn none() -> MemCtx {
        MemCtx { globals: Pointer::null(), constants: Pointer::null() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOut {
    pub bits: u64,
    pub defined: bool,
    pub is_pointer: bool,
}

/// Mutable object store. Cheap to fork: objects are copy-on-write behind `Arc`.
#[derive(Debug, Clone)]
pub struct Heap {
    objects: BTreeMap<u32, Arc<HeapObject>>,
    next_id: u32,
}

impl Default for Heap {
    fn default() -> Self {
        Heap::new()
    }
}

impl Heap {
    pub fn new() -> Heap {
        Heap { objects: BTreeMap::new(), next_id: 1 }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn object(&self, id: u32) -> Option<&HeapObject> {
        self.objects.get(&id).map(|o| o.as_ref())
    }

    pub fn object_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.objects.keys().copied()
    }

    fn object_mut(&mut self, id: u32) -> Option<&mut HeapObject> {
        self.objects.get_mut(&id).map(Arc::make_mut)
    }

    pub fn obj_make(&mut self, size: usize) -> Pointer {
        let id = self.next_id;
        assert!(id < DANGLING_ID, "object id space exhausted");
        self.next_id += 1;
        self.objects.insert(id, Arc::new(HeapObject::new(size)));
        Pointer::heap(id, 0)
    }

    pub fn obj_free(&mut self, p: Pointer) -> Result<(), FaultKind> {
        if p.tag != PtrTag::Heap || p.offset != 0 {
            return Err(FaultKind::InvalidFree);
        }
        match self.object_mut(p.id) {
            None => Err(FaultKind::InvalidFree),
            Some(obj) if !obj.valid => Err(FaultKind::DoubleFree),
            Some(obj) => {
                obj.valid = false;
                Ok(())
            }
        }
    }

    pub fn obj_size(&self, p: Pointer) -> Result<usize, FaultKind> {
        if p.tag != PtrTag::Heap {
            return Err(FaultKind::BadPointer);
        }
        match self.object(p.id) {
            None => Err(FaultKind::BadPointer),
            Some(obj) if !obj.valid => Err(FaultKind::UseAfterFree),
            Some(obj) => Ok(obj.size()),
        }
    }

    /// Resize in place. Prefix bytes, definedness and whole pointer slots up
    /// to `min(old, new)` survive; the new tail is undefined.
    pub fn obj_resize(&mut self, p: Pointer, new_size: usize) -> Result<(), FaultKind> {
        if p.tag != PtrTag::Heap || p.offset != 0 {
            return Err(FaultKind::BadPointer);
        }
        match self.object_mut(p.id) {
            None => Err(FaultKind::BadPointer),
            Some(obj) if !obj.valid => Err(FaultKind::UseAfterFree),
            Some(obj) => {
                obj.resize(new_size);
                Ok(())
            }
        }
    }

    /// Map a pointer to a concrete (object, byte offset) pair, enforcing
    /// object and slot boundaries. Global and constant pointers resolve
    /// through the designated slot object named by `ctx`.
    fn resolve(
        &self,
        ctx: &MemCtx,
        p: Pointer,
        width: usize,
        write: bool,
    ) -> Result<(u32, usize), FaultKind> {
        match p.tag {
            PtrTag::Code => Err(FaultKind::BadPointer),
            PtrTag::Heap => {
                if p.id == POISON_ID {
                    return Err(FaultKind::OutOfBounds);
                }
                let obj = self.object(p.id).ok_or(FaultKind::BadPointer)?;
                if !obj.valid {
                    return Err(FaultKind::UseAfterFree);
                }
                if p.offset as usize + width > obj.size() {
                    return Err(FaultKind::OutOfBounds);
                }
                Ok((p.id, p.offset as usize))
            }
            PtrTag::Global | PtrTag::Constant => {
                if p.id == POISON_ID {
                    return Err(FaultKind::OutOfBounds);
                }
                let base = if p.tag == PtrTag::Global { ctx.globals } else { ctx.constants };
                if base.tag != PtrTag::Heap || base.is_null() {
                    return Err(FaultKind::BadPointer);
                }
                if write && p.tag == PtrTag::Constant {
                    return Err(FaultKind::ReadOnly);
                }
                let obj = self.object(base.id).ok_or(FaultKind::BadPointer)?;
                if !obj.valid {
                    return Err(FaultKind::BadPointer);
                }
                let (slot_off, slot_len) = slot_entry(obj, p.id).ok_or(FaultKind::BadPointer)?;
                // slot boundaries are enforced just like object boundaries
                if p.offset as usize + width > slot_len {
                    return Err(FaultKind::OutOfBounds);
                }
                let off = slot_off + p.offset as usize;
                if off + width > obj.size() {
                    return Err(FaultKind::OutOfBounds);
                }
                Ok((base.id, off))
            }
        }
    }

    pub fn read(&self, ctx: &MemCtx, p: Pointer, width: usize) -> Result<ReadOut, FaultKind> {
        let (id, off) = self.resolve(ctx, p, width, false)?;
        let obj = self.object(id).unwrap();
        let mut raw = [0u8; 8];
        raw[..width].copy_from_slice(&obj.bytes()[off..off + width]);
        Ok(ReadOut {
            bits: u64::from_le_bytes(raw),
            defined: obj.all_defined(off, width),
            is_pointer: width == 8 && off % 8 == 0 && obj.slot_is_pointer(off / 8),
        })
    }

    pub fn write(
        &mut self,
        ctx: &MemCtx,
        p: Pointer,
        width: usize,
        bits: u64,
        defined: bool,
        is_pointer: bool,
    ) -> Result<(), FaultKind> {
        let (id, off) = self.resolve(ctx, p, width, true)?;
        if p.tag != PtrTag::Constant && id == ctx.constants.id && ctx.constants.tag == PtrTag::Heap
        {
            // direct heap-pointer writes into the constants object are also refused
            return Err(FaultKind::ReadOnly);
        }
        let data = bits.to_le_bytes();
        let target_shared = {
            let obj = self.object_mut(id).unwrap();
            obj.write_raw(off, &data[..width], defined, is_pointer);
            obj.shared
        };
        if target_shared && is_pointer && defined {
            let stored = Pointer::decode(bits);
            if stored.tag == PtrTag::Heap && !stored.is_null() {
                self.mark_shared(stored);
            }
        }
        Ok(())
    }

    /// Add the pointee and everything reachable from it to the shared set,
    /// which stays closed under reachability along pointer edges.
    pub fn mark_shared(&mut self, p: Pointer) {
        if p.tag != PtrTag::Heap {
            return;
        }
        let mut work = vec![p.id];
        while let Some(id) = work.pop() {
            let Some(obj) = self.object(id) else { continue };
            if obj.shared || !obj.valid {
                continue;
            }
            let succs: Vec<u32> = obj
                .edges()
                .filter(|(_, q)| q.tag == PtrTag::Heap && !q.is_null() && q.id != POISON_ID)
                .map(|(_, q)| q.id)
                .collect();
            self.object_mut(id).unwrap().shared = true;
            work.extend(succs);
        }
    }

    pub fn is_shared(&self, id: u32) -> bool {
        self.object(id).map(|o| o.shared).unwrap_or(false)
    }

    /// Ids of valid objects reachable from the given heap pointers.
    pub fn reachable(&self, roots: impl IntoIterator<Item = Pointer>) -> Vec<u32> {
        let mut seen = std::collections::BTreeSet::new();
        let mut work: Vec<u32> = roots
            .into_iter()
            .filter(|p| p.tag == PtrTag::Heap && !p.is_null() && p.id != POISON_ID)
            .map(|p| p.id)
            .collect();
        while let Some(id) = work.pop() {
            let Some(obj) = self.object(id) else { continue };
            if !obj.valid || !seen.insert(id) {
                continue;
            }
            for (_, q) in obj.edges() {
                if q.tag == PtrTag::Heap && !q.is_null() && q.id != POISON_ID {
                    work.push(q.id);
                }
            }
        }
        seen.into_iter().collect()
    }

    pub(crate) fn arc_object(&self, id: u32) -> Option<Arc<HeapObject>> {
        self.objects.get(&id).cloned()
    }

    pub(crate) fn from_parts(objects: BTreeMap<u32, Arc<HeapObject>>, next_id: u32) -> Heap {
        Heap { objects, next_id }
    }
}

/// Look up a slot-table entry in a globals/constants object.
/// Layout: `u32 nslots`, then `(u32 offset, u32 length)` per slot, then data.
pub fn slot_entry(obj: &HeapObject, slot: u32) -> Option<(usize, usize)> {
    let b = obj.bytes();
    if b.len() < 4 {
        return None;
    }
    let n = u32::from_le_bytes(b[0..4].try_into().unwrap());
    if slot >= n {
        return None;
    }
    let at = 4 + slot as usize * 8;
    if at + 8 > b.len() {
        return None;
    }
    let off = u32::from_le_bytes(b[at..at + 4].try_into().unwrap()) as usize;
    let len = u32::from_le_bytes(b[at + 4..at + 8].try_into().unwrap()) as usize;
    Some((off, len))
}

/// Build a slot object (globals or constants area) from per-slot contents.
/// `slots` supplies (size, initialiser) pairs; initialised bytes are defined.
pub fn build_slot_object(heap: &mut Heap, slots: &[(usize, Option<Vec<u8>>)]) -> Pointer {
    let header = 4 + slots.len() * 8;
    let total: usize = header + slots.iter().map(|(s, _)| *s).sum::<usize>();
    let p = heap.obj_make(total);
    let ctx = MemCtx::none();
    let write4 = |heap: &mut Heap, off: usize, v: u32| {
        for (i, byte) in v.to_le_bytes().iter().enumerate() {
            heap.write(&ctx, p.gep((off + i) as i64), 1, *byte as u64, true, false).unwrap();
        }
    };
    write4(heap, 0, slots.len() as u32);
    let mut data_off = header;
    for (i, (size, init)) in slots.iter().enumerate() {
        write4(heap, 4 + i * 8, data_off as u32);
        write4(heap, 4 + i * 8 + 4, *size as u32);
        if let Some(init) = init {
            for (j, byte) in init.iter().enumerate().take(*size) {
                heap.write(&ctx, p.gep((data_off + j) as i64), 1, *byte as u64, true, false)
                    .unwrap();
            }
        }
        data_off += size;
    }
    p
}

#[cfg(test)]
mod tests;
