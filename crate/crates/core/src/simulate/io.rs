//! Tag file formats.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic    8 bytes  "RRSTAG01"
//! version  u16      1 or 2
//! duration i64      ps
//! seed     u64
//! (version 2 only) annotation length u32, then that many UTF-8 bytes
//! records  repeated { channel: u8, time_ps: i64 }
//! ```
//!
//! Version 2 carries a free-form annotation, used for provenance such as a
//! configuration hash; [`write_binary`] writes version 1.
//!
//! The CSV form is a `channel,time_ps` header followed by one record per
//! line. A file may interleave several channels; records are written in time
//! order.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use super::stream::{StreamMetadata, TimeTagStream};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RRSTAG01";
pub const VERSION: u16 = 1;
pub const ANNOTATED_VERSION: u16 = 2;
const HEADER_LEN: usize = 8 + 2 + 8 + 8;
const RECORD_LEN: usize = 9;

/// Merge streams into time-ordered `(channel, time)` records.
fn merged_records(streams: &[TimeTagStream]) -> Vec<(u8, i64)> {
    let mut records: Vec<(u8, i64)> = streams
        .iter()
        .flat_map(|s| s.tags().iter().map(move |&t| (s.channel(), t)))
        .collect();
    records.sort_by_key(|&(c, t)| (t, c));
    records
}

fn common_header(streams: &[TimeTagStream]) -> (i64, u64) {
    let duration = streams.iter().map(|s| s.duration()).max().unwrap_or(0);
    let seed = streams.first().map(|s| s.metadata.seed).unwrap_or(0);
    (duration, seed)
}

pub fn write_binary<W: Write>(writer: W, streams: &[TimeTagStream]) -> Result<()> {
    write_records(writer, streams, None)
}

/// Writes the version-2 layout with `annotation` in the header.
pub fn write_binary_annotated<W: Write>(writer: W, streams: &[TimeTagStream], annotation: &str) -> Result<()> {
    write_records(writer, streams, Some(annotation))
}

fn write_records<W: Write>(writer: W, streams: &[TimeTagStream], annotation: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let (duration, seed) = common_header(streams);
    w.write_all(MAGIC)?;
    let version = if annotation.is_some() { ANNOTATED_VERSION } else { VERSION };
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&duration.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    if let Some(text) = annotation {
        let len = u32::try_from(text.len()).map_err(|_| Error::Format("annotation longer than 4 GiB".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(text.as_bytes())?;
    }
    for (channel, t) in merged_records(streams) {
        w.write_all(&[channel])?;
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of a tag file: header fields plus one stream per channel, in
/// ascending channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct TagFile {
    pub duration: i64,
    pub seed: u64,
    /// Header annotation; empty for version-1 and CSV files.
    pub annotation: String,
    pub streams: Vec<TimeTagStream>,
}

impl TagFile {
    pub fn channel(&self, channel: u8) -> Option<&TimeTagStream> {
        self.streams.iter().find(|s| s.channel() == channel)
    }
}

fn split_channels(
    records: Vec<(u8, i64)>,
    duration: i64,
    seed: u64,
    annotation: String,
    generator: &str,
) -> Result<TagFile> {
    let mut per_channel: std::collections::BTreeMap<u8, Vec<i64>> = Default::default();
    for (c, t) in records {
        per_channel.entry(c).or_default().push(t);
    }
    let streams = per_channel
        .into_iter()
        .map(|(c, tags)| {
            TimeTagStream::new(
                c,
                tags,
                duration,
                StreamMetadata {
                    seed,
                    generator: generator.to_string(),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TagFile {
        duration,
        seed,
        annotation,
        streams,
    })
}

pub fn read_binary<R: Read>(reader: R) -> Result<TagFile> {
    let mut bytes = Vec::new();
    BufReader::new(reader).read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION && version != ANNOTATED_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let duration = i64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let seed = u64::from_le_bytes(bytes[18..26].try_into().unwrap());
    let (annotation, body) = if version == ANNOTATED_VERSION {
        let rest = &bytes[HEADER_LEN..];
        if rest.len() < 4 {
            return Err(Error::Format("truncated annotation length".into()));
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let text = rest
            .get(4..4 + len)
            .ok_or_else(|| Error::Format("truncated annotation".into()))?;
        let text = std::str::from_utf8(text).map_err(|e| Error::Format(format!("annotation: {e}")))?;
        (text.to_string(), &rest[4 + len..])
    } else {
        (String::new(), &bytes[HEADER_LEN..])
    };
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last record",
            body.len() % RECORD_LEN
        )));
    }
    let records = body
        .chunks_exact(RECORD_LEN)
        .map(|r| (r[0], i64::from_le_bytes(r[1..9].try_into().unwrap())))
        .collect();
    split_channels(records, duration, seed, annotation, "binary")
}

pub fn write_csv<W: Write>(writer: W, streams: &[TimeTagStream]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "channel,time_ps")?;
    for (c, t) in merged_records(streams) {
        writeln!(w, "{c},{t}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV form. CSV carries no header fields, so `duration` is taken
/// from the caller (or the last tag when `None`).
pub fn read_csv<R: Read>(reader: R, duration: Option<i64>) -> Result<TagFile> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("channel")) {
            continue;
        }
        let (c, t) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {}: expected `channel,time_ps`", i + 1)))?;
        let c: u8 = c
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("line {}: channel: {e}", i + 1)))?;
        let t: i64 = t
            .trim()
            .parse()
            .map_err(|e| Error::Format(format!("line {}: time: {e}", i + 1)))?;
        records.push((c, t));
    }
    let duration = duration.unwrap_or_else(|| records.iter().map(|r| r.1).max().unwrap_or(0));
    split_channels(records, duration, 0, String::new(), "csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(channel: u8, tags: Vec<i64>, duration: i64) -> TimeTagStream {
        TimeTagStream::new(
            channel,
            tags,
            duration,
            StreamMetadata {
                seed: 77,
                generator: "test".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &[stream(2, vec![5, 1_000_000_000_000], 2_000_000_000_000)]).unwrap();
        assert_eq!(&buf[..8], b"RRSTAG01");
        assert_eq!(&buf[8..10], &[1, 0]);
        assert_eq!(i64::from_le_bytes(buf[10..18].try_into().unwrap()), 2_000_000_000_000);
        assert_eq!(u64::from_le_bytes(buf[18..26].try_into().unwrap()), 77);
        assert_eq!(buf.len(), HEADER_LEN + 2 * RECORD_LEN);
        assert_eq!(buf[26], 2);
        assert_eq!(i64::from_le_bytes(buf[27..35].try_into().unwrap()), 5);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(read_binary(&b"RRSTAG0"[..]).is_err());
        let mut buf = Vec::new();
        write_binary(&mut buf, &[stream(0, vec![1, 2], 10)]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(&bad[..]).is_err());
        buf.push(0);
        assert!(read_binary(&buf[..]).is_err());
        assert!(read_csv(&b"channel,time_ps\n0;5\n"[..], None).is_err());
    }

    #[test]
    fn annotation_round_trips() {
        let streams = [stream(1, vec![3, 9], 20), stream(2, vec![4], 20)];
        let mut buf = Vec::new();
        write_binary_annotated(&mut buf, &streams, "config=abc123").unwrap();
        assert_eq!(&buf[8..10], &[2, 0]);
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back.annotation, "config=abc123");
        assert_eq!(back.channel(1).unwrap().tags(), &[3, 9]);
        assert_eq!(back.channel(2).unwrap().tags(), &[4]);
        assert!(read_binary(&buf[..HEADER_LEN + 6]).is_err());

        let mut plain = Vec::new();
        write_binary(&mut plain, &streams).unwrap();
        assert_eq!(read_binary(&plain[..]).unwrap().annotation, "");
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(
            a in proptest::collection::btree_set(0i64..1_000_000, 0..200),
            b in proptest::collection::btree_set(0i64..1_000_000, 1..200),
        ) {
            let streams = vec![
                stream(0, a.into_iter().collect(), 1_000_000),
                stream(1, b.into_iter().collect(), 1_000_000),
            ];
            let mut buf = Vec::new();
            write_binary(&mut buf, &streams).unwrap();
            let back = read_binary(&buf[..]).unwrap();
            prop_assert_eq!(back.duration, 1_000_000);
            prop_assert_eq!(back.seed, 77);
            for s in &streams {
                if s.is_empty() { continue; }
                prop_assert_eq!(back.channel(s.channel()).unwrap().tags(), s.tags());
            }
            let mut csv = Vec::new();
            write_csv(&mut csv, &streams).unwrap();
            let back = read_csv(&csv[..], Some(1_000_000)).unwrap();
            for s in &streams {
                if s.is_empty() { continue; }
                prop_assert_eq!(back.channel(s.channel()).unwrap().tags(), s.tags());
            }
        }
    }
}
