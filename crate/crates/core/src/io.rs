//! Event and cluster file formats.
//!
//! CSV events: optional header `t_us,x,y,p`, then one `t,x,y,p` line per
//! event with `p` in {1, -1}.
//!
//! EVC1 events: the magic `EVC1` followed by 16-byte little-endian records
//! laid out as `t: u64 @0, x: u16 @8, y: u16 @10, p: i8 @12, 3 zero bytes @13`.
//!
//! Cluster CSV: header `root_t_us,root_x,root_y,end_t_us,event_count,pixel_count`.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::model::{ClusterRecord, Event, Polarity, SensorGeometry};

pub const EVENTS_CSV_HEADER: &str = "t_us,x,y,p";
pub const CLUSTERS_CSV_HEADER: &str = "root_t_us,root_x,root_y,end_t_us,event_count,pixel_count";
pub const EVC1_MAGIC: &[u8; 4] = b"EVC1";
pub const EVC1_RECORD_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum EventIoError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: polarity must be 1 or -1, got {value}")]
    InvalidPolarity { line: usize, value: String },
    #[error("missing EVC1 magic")]
    BadMagic,
    #[error("record {record} is truncated ({bytes} of 16 bytes)")]
    Truncated { record: usize, bytes: usize },
    #[error("record {record} has non-zero padding")]
    NonzeroPad { record: usize },
    #[error("record {record}: polarity byte {value} is not 1 or -1")]
    BadPolarityByte { record: usize, value: i8 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Evc1,
}

/// What is known about an event file before reading its body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFileHeaderInfo {
    pub format: EventFormat,
    pub geometry: Option<SensorGeometry>,
}

pub fn read_events_csv<R: BufRead>(reader: R) -> Result<Vec<Event>, EventIoError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line_no == 1 && line.trim() == EVENTS_CSV_HEADER {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_event_line(line, line_no)?);
    }
    Ok(events)
}

fn parse_event_line(line: &str, line_no: usize) -> Result<Event, EventIoError> {
    let malformed = |reason: String| EventIoError::Malformed { line: line_no, reason };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
    }
    let t: u64 = fields[0]
        .parse()
        .map_err(|_| malformed(format!("timestamp {:?} is not a non-negative integer", fields[0])))?;
    let x: u16 = fields[1]
        .parse()
        .map_err(|_| malformed(format!("x {:?} is not a 16-bit non-negative integer", fields[1])))?;
    let y: u16 = fields[2]
        .parse()
        .map_err(|_| malformed(format!("y {:?} is not a 16-bit non-negative integer", fields[2])))?;
    let p = match fields[3] {
        "1" => Polarity::Positive,
        "-1" => Polarity::Negative,
        other => {
            return Err(EventIoError::InvalidPolarity {
                line: line_no,
                value: other.to_string(),
            })
        }
    };
    Ok(Event::new(t, x, y, p))
}

pub fn write_events_csv<W: Write>(mut writer: W, events: &[Event]) -> io::Result<()> {
    writeln!(writer, "{EVENTS_CSV_HEADER}")?;
    for e in events {
        writeln!(writer, "{},{},{},{}", e.t, e.x, e.y, e.p.as_i8())?;
    }
    writer.flush()
}

pub fn encode_event(e: &Event) -> [u8; EVC1_RECORD_LEN] {
    let mut rec = [0u8; EVC1_RECORD_LEN];
    rec[0..8].copy_from_slice(&e.t.to_le_bytes());
    rec[8..10].copy_from_slice(&e.x.to_le_bytes());
    rec[10..12].copy_from_slice(&e.y.to_le_bytes());
    rec[12] = e.p.as_i8() as u8;
    rec
}

fn decode_event(rec: &[u8; EVC1_RECORD_LEN], record: usize) -> Result<Event, EventIoError> {
    if rec[13..].iter().any(|&b| b != 0) {
        return Err(EventIoError::NonzeroPad { record });
    }
    let t = u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes"));
    let x = u16::from_le_bytes([rec[8], rec[9]]);
    let y = u16::from_le_bytes([rec[10], rec[11]]);
    let p = match rec[12] as i8 {
        1 => Polarity::Positive,
        -1 => Polarity::Negative,
        value => return Err(EventIoError::BadPolarityByte { record, value }),
    };
    Ok(Event::new(t, x, y, p))
}

pub fn write_events_binary<W: Write>(mut writer: W, events: &[Event]) -> io::Result<()> {
    writer.write_all(EVC1_MAGIC)?;
    for e in events {
        writer.write_all(&encode_event(e))?;
    }
    writer.flush()
}

pub fn read_events_binary<R: Read>(mut reader: R) -> Result<Vec<Event>, EventIoError> {
    let mut magic = [0u8; 4];
    if read_full(&mut reader, &mut magic)? != 4 || &magic != EVC1_MAGIC {
        return Err(EventIoError::BadMagic);
    }
    let mut events = Vec::new();
    let mut rec = [0u8; EVC1_RECORD_LEN];
    loop {
        match read_full(&mut reader, &mut rec)? {
            0 => break,
            EVC1_RECORD_LEN => events.push(decode_event(&rec, events.len())?),
            bytes => {
                return Err(EventIoError::Truncated {
                    record: events.len(),
                    bytes,
                })
            }
        }
    }
    Ok(events)
}

/// Fills `buf` as far as the stream allows; returns the bytes read.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// `Err(i)` names the first event whose timestamp is below its predecessor's.
pub fn validate_monotonic(events: &[Event]) -> Result<(), usize> {
    match events.windows(2).position(|w| w[1].t < w[0].t) {
        Some(i) => Err(i + 1),
        None => Ok(()),
    }
}

/// Smallest geometry that contains every event, if any.
pub fn bounding_geometry(events: &[Event]) -> Option<SensorGeometry> {
    let w = events.iter().map(|e| u32::from(e.x)).max()? + 1;
    let h = events.iter().map(|e| u32::from(e.y)).max()? + 1;
    SensorGeometry::new(w, h).ok()
}

pub fn write_clusters_csv<W: Write>(mut writer: W, records: &[ClusterRecord]) -> io::Result<()> {
    writeln!(writer, "{CLUSTERS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            r.root_t, r.root_x, r.root_y, r.end_t, r.event_count, r.pixel_count
        )?;
    }
    writer.flush()
}
