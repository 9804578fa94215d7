//! Binary dumps.
//!
//! All integers and floats are little-endian.
//!
//! `RVOX1` (voxel grid):
//! ```text
//! "RVOX1" | u32 voxel_count | per voxel: i32 x, i32 y, i32 z, u32 count, u32 point_index * count
//! ```
//! `RWLK1` (single-resolution reconfiguration):
//! ```text
//! "RWLK1" | u32 voxel_count | per voxel: u32 id,
//!     4 x (u8 present, u32 final_id, u16 trace_len, u32 trace_id * trace_len)
//! ```
//! `RWLK2` (two-resolution reconfiguration):
//! ```text
//! "RWLK2" | u32 voxel_count | per voxel: u32 id,
//!     4 x (u8 present, u8 tag, u32 final_id, u16 trace_len, (u8 tag, u32 id) * trace_len)
//! | coarse grid as a complete RVOX1 block (resampled point indices)
//! ```
//! Tag 0 is the fine grid, 1 the coarse grid. Absent slots write zeros for
//! every field after `present`.
//!
//! `RFEA1` (voxel features):
//! ```text
//! "RFEA1" | u32 count | u32 width | per voxel: u32 id, f32 * width
//! ```

use crate::encoder::VoxelFeature;
use crate::error::{Error, Result};
use crate::grid::{Slot, VoxelGrid, VoxelRecord};
use crate::multires::{MultiResReconfiguration, Resolution, ResolutionTaggedSlot, TaggedWalk};
use crate::walk::Reconfiguration;

pub const RVOX1: &[u8; 5] = b"RVOX1";
pub const RWLK1: &[u8; 5] = b"RWLK1";
pub const RWLK2: &[u8; 5] = b"RWLK2";
pub const RFEA1: &[u8; 5] = b"RFEA1";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn trace_len(len: usize) -> Result<u16> {
    u16::try_from(len).map_err(|_| Error::Contract(format!("trace of length {len} exceeds u16")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Malformed(format!(
                "truncated dump: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 5]) -> Result<()> {
        let m = self.take(5)?;
        if m != magic {
            return Err(Error::Malformed(format!(
                "expected magic {}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(m)
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!("{} trailing bytes after dump", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Dumps voxel records in id order.
pub fn write_rvox1(records: &[VoxelRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + records.len() * 24);
    write_rvox1_into(&mut out, records);
    out
}

fn write_rvox1_into(out: &mut Vec<u8>, records: &[VoxelRecord]) {
    out.extend_from_slice(RVOX1);
    put_u32(out, records.len() as u32);
    for r in records {
        for c in r.cell {
            out.extend_from_slice(&c.to_le_bytes());
        }
        put_u32(out, r.count());
        for &i in &r.point_indices {
            put_u32(out, i);
        }
    }
}

fn read_rvox1_from(r: &mut Reader<'_>) -> Result<Vec<VoxelRecord>> {
    r.magic(RVOX1)?;
    let n = r.u32()? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let cell = [r.i32()?, r.i32()?, r.i32()?];
        let count = r.u32()? as usize;
        let point_indices = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        records.push(VoxelRecord { cell, point_indices });
    }
    Ok(records)
}

pub fn read_rvox1(bytes: &[u8]) -> Result<Vec<VoxelRecord>> {
    let mut r = Reader::new(bytes);
    let records = read_rvox1_from(&mut r)?;
    r.finish()?;
    Ok(records)
}

pub fn write_rwlk1(reconfig: &Reconfiguration) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(RWLK1);
    put_u32(&mut out, reconfig.len() as u32);
    for c in 0..reconfig.len() as u32 {
        put_u32(&mut out, c);
        for s in Slot::PLANAR {
            match reconfig.slot(c, s) {
                Some(v) => {
                    out.push(1);
                    put_u32(&mut out, v.final_id);
                    put_u16(&mut out, trace_len(v.trace.len())?);
                    for &t in v.trace {
                        put_u32(&mut out, t);
                    }
                }
                None => {
                    out.push(0);
                    put_u32(&mut out, 0);
                    put_u16(&mut out, 0);
                }
            }
        }
    }
    Ok(out)
}

/// Reads an `RWLK1` dump. The seed is not part of the format and is set to 0.
pub fn read_rwlk1(bytes: &[u8]) -> Result<Reconfiguration> {
    let mut r = Reader::new(bytes);
    r.magic(RWLK1)?;
    let n = r.u32()? as usize;
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for expect in 0..n as u32 {
        let id = r.u32()?;
        if id != expect {
            return Err(Error::Malformed(format!("voxel {id} out of order, expected {expect}")));
        }
        let mut row: [Option<Vec<u32>>; 4] = Default::default();
        for slot in row.iter_mut() {
            let present = r.u8()?;
            let final_id = r.u32()?;
            let len = r.u16()? as usize;
            let trace = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if present == 1 {
                if trace.last() != Some(&final_id) {
                    return Err(Error::Malformed(format!("voxel {id}: trace does not end at final id")));
                }
                *slot = Some(trace);
            } else if present != 0 {
                return Err(Error::Malformed(format!("voxel {id}: bad present flag {present}")));
            }
        }
        rows.push(row);
    }
    r.finish()?;
    Reconfiguration::from_traces(0, rows)
}

pub fn write_rwlk2(reconfig: &MultiResReconfiguration, coarse: &VoxelGrid) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(RWLK2);
    put_u32(&mut out, reconfig.slots.len() as u32);
    for (c, row) in reconfig.slots.iter().enumerate() {
        put_u32(&mut out, c as u32);
        for slot in row {
            match slot {
                Some(w) => {
                    let f = w.final_slot();
                    out.push(1);
                    out.push(f.resolution as u8);
                    put_u32(&mut out, f.id);
                    put_u16(&mut out, trace_len(w.trace.len())?);
                    for t in &w.trace {
                        out.push(t.resolution as u8);
                        put_u32(&mut out, t.id);
                    }
                }
                None => {
                    out.extend_from_slice(&[0, 0]);
                    put_u32(&mut out, 0);
                    put_u16(&mut out, 0);
                }
            }
        }
    }
    write_rvox1_into(&mut out, coarse.voxels());
    Ok(out)
}

/// Reads an `RWLK2` dump into the reconfiguration and the coarse records.
pub fn read_rwlk2(bytes: &[u8]) -> Result<(MultiResReconfiguration, Vec<VoxelRecord>)> {
    let mut r = Reader::new(bytes);
    r.magic(RWLK2)?;
    let n = r.u32()? as usize;
    let tag =
        |t: u8| Resolution::from_tag(t).ok_or_else(|| Error::Malformed(format!("bad resolution tag {t}")));
    let mut slots = Vec::with_capacity(n.min(1 << 20));
    for expect in 0..n as u32 {
        let id = r.u32()?;
        if id != expect {
            return Err(Error::Malformed(format!("voxel {id} out of order, expected {expect}")));
        }
        let mut row: [Option<TaggedWalk>; 4] = Default::default();
        for slot in row.iter_mut() {
            let present = r.u8()?;
            let final_tag = r.u8()?;
            let final_id = r.u32()?;
            let len = r.u16()? as usize;
            let mut trace = Vec::with_capacity(len);
            for _ in 0..len {
                let t = tag(r.u8()?)?;
                trace.push(ResolutionTaggedSlot { id: r.u32()?, resolution: t });
            }
            if present == 1 {
                let fin = ResolutionTaggedSlot { id: final_id, resolution: tag(final_tag)? };
                if trace.last() != Some(&fin) {
                    return Err(Error::Malformed(format!("voxel {id}: trace does not end at final slot")));
                }
                *slot = Some(TaggedWalk { trace });
            }
        }
        slots.push(row);
    }
    let coarse = read_rvox1_from(&mut r)?;
    r.finish()?;
    Ok((MultiResReconfiguration { seed: 0, slots }, coarse))
}

pub fn write_rfea1(features: &[VoxelFeature]) -> Result<Vec<u8>> {
    let width = features.first().map_or(0, |f| f.values.len());
    let mut out = Vec::with_capacity(13 + features.len() * (4 + 4 * width));
    out.extend_from_slice(RFEA1);
    put_u32(&mut out, features.len() as u32);
    put_u32(&mut out, width as u32);
    for f in features {
        if f.values.len() != width {
            return Err(Error::Contract("features of mixed width".into()));
        }
        put_u32(&mut out, f.voxel);
        for v in &f.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_rfea1(bytes: &[u8]) -> Result<Vec<VoxelFeature>> {
    let mut r = Reader::new(bytes);
    r.magic(RFEA1)?;
    let n = r.u32()? as usize;
    let width = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let voxel = r.u32()?;
        let values = (0..width).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        out.push(VoxelFeature { voxel, values });
    }
    r.finish()?;
    Ok(out)
}

/// `id,f0,f1,...` with shortest round-trip float formatting.
pub fn features_csv(features: &[VoxelFeature]) -> String {
    let width = features.first().map_or(0, |f| f.values.len());
    let mut s = String::from("id");
    for k in 0..width {
        s.push_str(&format!(",f{k}"));
    }
    s.push('\n');
    for f in features {
        s.push_str(&f.voxel.to_string());
        for v in &f.values {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

/// Reads the magic of a dump.
pub fn sniff(bytes: &[u8]) -> Option<&'static [u8; 5]> {
    [RVOX1, RWLK1, RWLK2, RFEA1].into_iter().find(|m| bytes.len() >= 5 && &bytes[..5] == *m)
}
