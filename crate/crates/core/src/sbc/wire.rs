//! Canonical wire encoding of SBC messages.
//!
//! Every message is `version: u8 | tag: u8 | body`. Integers are big-endian.
//!
//! | tag | message    | body                                                      |
//! |-----|------------|-----------------------------------------------------------|
//! | 1   | RBC-SEND   | round u64, set                                            |
//! | 2   | RBC-ECHO   | round u64, origin u16, set                                |
//! | 3   | RBC-READY  | round u64, origin u16, digest [32]                        |
//! | 4   | PROPOSE    | round u64, view u32, value, valid_view opt(u32)           |
//! | 5   | ECHO       | round u64, view u32, opt(digest [32])                     |
//! | 6   | COMMIT     | round u64, view u32, opt(value)                           |
//! | 7   | VIEWCHANGE | round u64, view u32                                       |
//! | 8   | DECIDED    | round u64, set                                            |
//!
//! `set` is `count: u32 | count × (len: u32 | request)` in ascending digest
//! order without repeats; `value` is `members: u16 | members × u16 | set`
//! with members strictly ascending; `opt(x)` is `0x00` or `0x01 | x`.

use super::{Element, ElementSet, SbcMessage, SetValue};
use crate::codec::{Reader, Writer};
use crate::error::DecodeError;
use crate::types::{ReplicaId, TransactionRequest};

pub const WIRE_VERSION: u8 = 1;

const RBC_SEND: u8 = 1;
const RBC_ECHO: u8 = 2;
const RBC_READY: u8 = 3;
const PROPOSE: u8 = 4;
const ECHO: u8 = 5;
const COMMIT: u8 = 6;
const VIEWCHANGE: u8 = 7;
const DECIDED: u8 = 8;

pub fn encode(msg: &SbcMessage) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(WIRE_VERSION);
    match msg {
        SbcMessage::RbcSend { round, set } => {
            w.u8(RBC_SEND).u64(*round);
            put_set(&mut w, set);
        }
        SbcMessage::RbcEcho { round, origin, set } => {
            w.u8(RBC_ECHO).u64(*round).u16(origin.0);
            put_set(&mut w, set);
        }
        SbcMessage::RbcReady {
            round,
            origin,
            digest,
        } => {
            w.u8(RBC_READY).u64(*round).u16(origin.0).digest(digest);
        }
        SbcMessage::Propose {
            round,
            view,
            value,
            valid_view,
        } => {
            w.u8(PROPOSE).u64(*round).u32(*view);
            put_value(&mut w, value);
            match valid_view {
                None => w.u8(0),
                Some(v) => w.u8(1).u32(*v),
            };
        }
        SbcMessage::Echo { round, view, value } => {
            w.u8(ECHO).u64(*round).u32(*view);
            match value {
                None => w.u8(0),
                Some(d) => w.u8(1).digest(d),
            };
        }
        SbcMessage::Commit { round, view, value } => {
            w.u8(COMMIT).u64(*round).u32(*view);
            match value {
                None => {
                    w.u8(0);
                }
                Some(v) => {
                    w.u8(1);
                    put_value(&mut w, v);
                }
            }
        }
        SbcMessage::ViewChange { round, view } => {
            w.u8(VIEWCHANGE).u64(*round).u32(*view);
        }
        SbcMessage::Decided { round, set } => {
            w.u8(DECIDED).u64(*round);
            put_set(&mut w, set);
        }
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<SbcMessage, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Empty);
    }
    let mut r = Reader::new(bytes);
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(DecodeError::Version(version));
    }
    let msg = match r.u8()? {
        RBC_SEND => SbcMessage::RbcSend {
            round: r.u64()?,
            set: get_set(&mut r)?,
        },
        RBC_ECHO => SbcMessage::RbcEcho {
            round: r.u64()?,
            origin: ReplicaId(r.u16()?),
            set: get_set(&mut r)?,
        },
        RBC_READY => SbcMessage::RbcReady {
            round: r.u64()?,
            origin: ReplicaId(r.u16()?),
            digest: r.digest()?,
        },
        PROPOSE => SbcMessage::Propose {
            round: r.u64()?,
            view: r.u32()?,
            value: get_value(&mut r)?,
            valid_view: match get_flag(&mut r)? {
                false => None,
                true => Some(r.u32()?),
            },
        },
        ECHO => SbcMessage::Echo {
            round: r.u64()?,
            view: r.u32()?,
            value: match get_flag(&mut r)? {
                false => None,
                true => Some(r.digest()?),
            },
        },
        COMMIT => SbcMessage::Commit {
            round: r.u64()?,
            view: r.u32()?,
            value: match get_flag(&mut r)? {
                false => None,
                true => Some(get_value(&mut r)?),
            },
        },
        VIEWCHANGE => SbcMessage::ViewChange {
            round: r.u64()?,
            view: r.u32()?,
        },
        DECIDED => SbcMessage::Decided {
            round: r.u64()?,
            set: get_set(&mut r)?,
        },
        other => return Err(DecodeError::UnknownTag(other)),
    };
    r.finish()?;
    Ok(msg)
}

fn put_set(w: &mut Writer, set: &ElementSet) {
    w.u32(set.len() as u32);
    for e in set.iter() {
        w.u32(e.tx.encoded_len() as u32);
        e.tx.encode_into(w);
    }
}

fn get_set(r: &mut Reader<'_>) -> Result<ElementSet, DecodeError> {
    let count = r.u32()? as usize;
    if count > r.remaining() / 4 {
        return Err(DecodeError::Malformed(format!(
            "set claims {count} elements in {} bytes",
            r.remaining()
        )));
    }
    let mut v: Vec<Element> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut inner = Reader::new(r.bytes()?);
        let tx = TransactionRequest::decode_from(&mut inner)?;
        inner.finish()?;
        let digest = tx.digest();
        if v.last().is_some_and(|p| p.digest >= digest) {
            return Err(DecodeError::Malformed(
                "set elements not in ascending digest order".into(),
            ));
        }
        v.push(Element { digest, tx });
    }
    Ok(ElementSet::from_sorted(v))
}

fn put_value(w: &mut Writer, v: &SetValue) {
    w.u16(v.members.len() as u16);
    for m in &v.members {
        w.u16(m.0);
    }
    put_set(w, &v.elements);
}

fn get_value(r: &mut Reader<'_>) -> Result<SetValue, DecodeError> {
    let count = r.u16()? as usize;
    let mut members = Vec::with_capacity(count);
    for _ in 0..count {
        let m = ReplicaId(r.u16()?);
        if members.last().is_some_and(|p| *p >= m) {
            return Err(DecodeError::Malformed("members not strictly ascending".into()));
        }
        members.push(m);
    }
    Ok(SetValue {
        members,
        elements: get_set(r)?,
    })
}

fn get_flag(r: &mut Reader<'_>) -> Result<bool, DecodeError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(DecodeError::Malformed(format!("option flag {b}"))),
    }
}
