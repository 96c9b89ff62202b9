//! Standard MIDI File reader, formats 0 and 1.
//!
//! Chunk-level parsing with running status. Only note events and two metas
//! (key signature, track name) contribute to the score; everything else is
//! skipped. Timing must be ticks-per-quarter; SMPTE divisions are rejected.

use num_rational::Ratio;

use super::{beats, KeyLabel, Note, Score, Voice};
use crate::Warning;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmfError {
    #[error("malformed file: {0}")]
    MalformedFile(String),
}

fn bad(msg: impl Into<String>) -> SmfError {
    SmfError::MalformedFile(msg.into())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, SmfError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| bad("unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn u16(&mut self) -> Result<u16, SmfError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn u32(&mut self) -> Result<u32, SmfError> {
        Ok(u32::from_be_bytes([
            self.u8()?,
            self.u8()?,
            self.u8()?,
            self.u8()?,
        ]))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        if self.remaining() < n {
            return Err(bad("chunk truncated"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, SmfError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(bad("variable-length quantity exceeds four bytes"))
    }
}

/// Key signature meta to a key label. `sf` counts sharps (negative: flats).
fn key_from_signature(sf: i8, minor: bool) -> KeyLabel {
    let tonic = if minor {
        (9 + 7 * sf as i32).rem_euclid(12)
    } else {
        (7 * sf as i32).rem_euclid(12)
    };
    KeyLabel::new(tonic as u8, if minor { super::Mode::Minor } else { super::Mode::Major })
}

struct TrackResult {
    notes: Vec<Note>,
    key: Option<KeyLabel>,
    name: Option<String>,
    warnings: Vec<Warning>,
}

fn parse_track(
    data: &[u8],
    track_index: usize,
    division: i64,
) -> Result<TrackResult, SmfError> {
    let mut c = Cursor::new(data);
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    // Per-pitch stacks so overlapping note-ons pair last-on/first-off.
    let mut open: Vec<Vec<(u64, u8)>> = vec![Vec::new(); 128];
    let mut notes: Vec<Note> = Vec::new();
    let mut key = None;
    let mut name = None;
    let mut warnings = Vec::new();
    let mut event_index = 0usize;

    let to_beats = |t: u64| Ratio::new(t as i64, division);

    let close = |pitch: u8,
                     start: u64,
                     end: u64,
                     velocity: u8,
                     notes: &mut Vec<Note>| {
        // Zero-length pairs still occupy one tick.
        let end = end.max(start + 1);
        notes.push(Note {
            onset: to_beats(start),
            duration: to_beats(end) - to_beats(start),
            pitch,
            velocity,
        });
    };

    while c.remaining() > 0 {
        let delta = c.vlq()?;
        tick += delta as u64;

        let status = match c.peek() {
            Some(b) if b >= 0x80 => {
                c.u8()?;
                if b < 0xf0 {
                    running = Some(b);
                }
                b
            }
            Some(_) => running.ok_or_else(|| bad("data byte without running status"))?,
            None => return Err(bad("track ends mid-event")),
        };

        match status & 0xf0 {
            0x80 | 0x90 => {
                let pitch = c.u8()? & 0x7f;
                let velocity = c.u8()? & 0x7f;
                let is_on = status & 0xf0 == 0x90 && velocity > 0;
                if is_on {
                    open[pitch as usize].push((tick, velocity));
                } else {
                    match open[pitch as usize].pop() {
                        Some((start, vel)) => close(pitch, start, tick, vel, &mut notes),
                        None => warnings.push(Warning::StrayNoteOff {
                            index: event_index,
                            pitch,
                        }),
                    }
                }
            }
            0xa0 | 0xb0 | 0xe0 => {
                c.bytes(2)?;
            }
            0xc0 | 0xd0 => {
                c.bytes(1)?;
            }
            0xf0 => match status {
                0xf0 | 0xf7 => {
                    running = None;
                    let len = c.vlq()? as usize;
                    c.bytes(len)?;
                }
                0xff => {
                    running = None;
                    let meta = c.u8()?;
                    let len = c.vlq()? as usize;
                    let payload = c.bytes(len)?;
                    match meta {
                        0x59 if len >= 2 => {
                            if key.is_none() {
                                key = Some(key_from_signature(payload[0] as i8, payload[1] != 0));
                            }
                        }
                        0x03 => {
                            if name.is_none() {
                                name = Some(String::from_utf8_lossy(payload).trim().to_string());
                            }
                        }
                        0x2f => break,
                        _ => {}
                    }
                }
                other => return Err(bad(format!("unsupported status byte {other:#04x}"))),
            },
            _ => unreachable!("status bytes are >= 0x80"),
        }
        event_index += 1;
    }

    for pitch in 0..128u8 {
        while let Some((start, vel)) = open[pitch as usize].pop() {
            warnings.push(Warning::UnmatchedNoteOn {
                track: track_index,
                pitch,
            });
            close(pitch, start, tick, vel, &mut notes);
        }
    }

    notes.sort_by_key(|n| (n.onset, n.pitch));
    Ok(TrackResult {
        notes,
        key,
        name,
        warnings,
    })
}

/// Parses a format 0 or 1 Standard MIDI File into a score: one voice per
/// track that contains notes. The first key-signature meta in the file sets
/// the key (C major plus a warning otherwise); the first track-name meta
/// sets the title.
pub fn parse_smf(bytes: &[u8]) -> Result<(Score, Vec<Warning>), SmfError> {
    let mut c = Cursor::new(bytes);
    if c.bytes(4).map_err(|_| bad("file shorter than a header"))? != b"MThd" {
        return Err(bad("missing MThd header"));
    }
    let header_len = c.u32()? as usize;
    if header_len < 6 {
        return Err(bad("MThd too short"));
    }
    let format = c.u16()?;
    if format > 1 {
        return Err(bad(format!("unsupported format {format}")));
    }
    let declared_tracks = c.u16()?;
    let division = c.u16()?;
    c.bytes(header_len - 6)?;
    if division & 0x8000 != 0 {
        return Err(bad("SMPTE timing is not supported"));
    }
    if division == 0 {
        return Err(bad("zero ticks-per-quarter division"));
    }
    if declared_tracks == 0 {
        return Err(bad("empty track list"));
    }

    let mut voices = Vec::new();
    let mut key = None;
    let mut title = None;
    let mut warnings = Vec::new();
    let mut track_index = 0usize;

    while c.remaining() > 0 {
        if c.remaining() < 8 {
            return Err(bad("trailing bytes after last chunk"));
        }
        let id = c.bytes(4)?.to_vec();
        let len = c.u32()? as usize;
        let chunk = c.bytes(len)?;
        if id != b"MTrk" {
            continue; // alien chunks are skipped per the SMF spec
        }
        let mut tr = parse_track(chunk, track_index, division as i64)?;
        if key.is_none() {
            key = tr.key;
        }
        if title.is_none() {
            title = tr.name;
        }
        warnings.append(&mut tr.warnings);
        if !tr.notes.is_empty() {
            voices.push(Voice { notes: tr.notes });
        }
        track_index += 1;
    }

    if track_index == 0 {
        return Err(bad("no track chunks"));
    }

    let key = match key {
        Some(k) => k,
        None => {
            warnings.push(Warning::MissingKey);
            KeyLabel::major(0)
        }
    };

    Ok((
        Score {
            title: title.unwrap_or_default(),
            key,
            resolution: beats(1, 4),
            voices,
        },
        warnings,
    ))
}
