//! Event packet encoding: event id (16 bits), delay in ns (32 bits),
//! destination (32 bits), then each argument big-endian in whole bytes.

use crate::frontend::resolve::{mask, Resolved};

use super::{event_widths, GenDest};

pub const DEST_LOCAL: u32 = 0xFFFF_FFFF;
pub const DEST_GROUP: u32 = 0x8000_0000;
pub const HEADER_BYTES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireEvent {
    pub event: String,
    pub delay: u64,
    pub dest: GenDest,
    pub args: Vec<u64>,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("packet shorter than its layout ({0} bytes)")]
    Truncated(usize),
    #[error("unknown event id {0}")]
    UnknownEvent(u16),
    #[error("unknown group index {0}")]
    UnknownGroup(u32),
}

fn group_names(r: &Resolved) -> Vec<&String> {
    r.groups.keys().collect()
}

pub fn encode(r: &Resolved, e: &WireEvent) -> Vec<u8> {
    let info = r.event(&e.event).expect("declared event");
    let mut out = Vec::new();
    out.extend(info.id.to_be_bytes());
    out.extend((e.delay.min(u32::MAX as u64) as u32).to_be_bytes());
    let dest = match &e.dest {
        GenDest::Local => DEST_LOCAL,
        GenDest::Switch(s) => (*s as u32) & !DEST_GROUP,
        GenDest::Group(g) => {
            DEST_GROUP | group_names(r).iter().position(|n| *n == g).expect("declared group") as u32
        }
    };
    out.extend(dest.to_be_bytes());
    for (a, w) in e.args.iter().zip(event_widths(r, &e.event)) {
        let n = w.div_ceil(8) as usize;
        let bytes = (a & mask(w)).to_be_bytes();
        out.extend(&bytes[8 - n..]);
    }
    out
}

pub fn decode(r: &Resolved, b: &[u8]) -> Result<WireEvent, WireError> {
    if b.len() < HEADER_BYTES {
        return Err(WireError::Truncated(b.len()));
    }
    let id = u16::from_be_bytes([b[0], b[1]]);
    let delay = u32::from_be_bytes(b[2..6].try_into().unwrap()) as u64;
    let d = u32::from_be_bytes(b[6..10].try_into().unwrap());
    let info = r.events.iter().find(|e| e.id == id).ok_or(WireError::UnknownEvent(id))?;
    let dest = if d == DEST_LOCAL {
        GenDest::Local
    } else if d & DEST_GROUP != 0 {
        let k = d & !DEST_GROUP;
        let g = group_names(r).get(k as usize).copied().ok_or(WireError::UnknownGroup(k))?;
        GenDest::Group(g.clone())
    } else {
        GenDest::Switch(d as u64)
    };
    let mut pos = HEADER_BYTES;
    let mut args = Vec::new();
    for w in event_widths(r, &info.name) {
        let n = w.div_ceil(8) as usize;
        let chunk = b.get(pos..pos + n).ok_or(WireError::Truncated(b.len()))?;
        let mut buf = [0u8; 8];
        buf[8 - n..].copy_from_slice(chunk);
        args.push(u64::from_be_bytes(buf) & mask(w));
        pos += n;
    }
    Ok(WireEvent {
        event: info.name.clone(),
        delay,
        dest,
        args,
    })
}
