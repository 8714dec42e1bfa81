//! Binary frame-sequence container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 8    | magic `VIDLAWSQ`                       |
//! | 8      | 4    | format version (`u32`, currently 1)    |
//! | 12     | 4    | height `H` (`u32`)                     |
//! | 16     | 4    | width `W` (`u32`)                      |
//! | 20     | 4    | frame count `N` (`u32`)                |
//! | 24     | 4    | channel count `C` (`u32`)              |
//! | 28     | 8    | `dt` (`f64`)                           |
//! | 36     | 4    | float precision in bytes (`u32`, 4)    |
//! | 40     | 4    | metadata length `M` (`u32`)            |
//! | 44     | M    | metadata, UTF-8 JSON                   |
//! | 44+M   | 4·N·C·H·W | `f32` intensities, frame-major, then channel, then row |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{FrameSequence, SequenceMeta};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VIDLAWSQ";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

pub fn save_sequence(seq: &FrameSequence, path: &Path) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let meta = serde_json::to_vec(&seq.meta)?;
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [seq.height, seq.width, seq.len(), seq.channel_count()] {
        header.extend_from_slice(&(v as u32).to_le_bytes());
    }
    header.extend_from_slice(&seq.dt.to_le_bytes());
    header.extend_from_slice(&4u32.to_le_bytes());
    header.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(ctx(), e))?;
    w.write_all(&meta).map_err(|e| Error::io(ctx(), e))?;
    let mut body = Vec::with_capacity(seq.frames.len() * 4);
    for v in &seq.frames {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&body).map_err(|e| Error::io(ctx(), e))?;
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn load_sequence(path: &Path) -> Result<FrameSequence> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |reason: &str| Error::BadHeader { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt { path: path.to_path_buf(), expected: HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("magic bytes do not match"));
    }
    let version = u32_at(&bytes, 8);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { path: path.to_path_buf(), found: version, supported: FORMAT_VERSION });
    }
    let (h, w, n, c) = (
        u32_at(&bytes, 12) as usize,
        u32_at(&bytes, 16) as usize,
        u32_at(&bytes, 20) as usize,
        u32_at(&bytes, 24) as usize,
    );
    let dt = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
    if u32_at(&bytes, 36) != 4 {
        return Err(bad("only 32-bit float frames are supported"));
    }
    let meta_len = u32_at(&bytes, 40) as usize;
    let expected = HEADER_LEN as u64 + meta_len as u64 + 4 * (n as u64) * (c as u64) * (h as u64) * (w as u64);
    if bytes.len() as u64 != expected {
        return Err(Error::Corrupt { path: path.to_path_buf(), expected, found: bytes.len() as u64 });
    }
    let meta: SequenceMeta = serde_json::from_slice(&bytes[HEADER_LEN..HEADER_LEN + meta_len])
        .map_err(|e| bad(&format!("metadata: {e}")))?;
    if meta.channels.len().max(1) != c {
        return Err(bad(&format!("header declares {c} channels, metadata lists {}", meta.channels.len())));
    }
    let frames = bytes[HEADER_LEN + meta_len..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FrameSequence::new(w, h, dt, frames, meta)
}

/// Writes each channel of each frame as an 8-bit PNG `frame_000001.png`
/// (1-based; a `_<channel>` suffix is added for multi-channel sequences).
pub fn export_png_dir(seq: &FrameSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let multi = seq.channel_count() > 1;
    for k in 0..seq.len() {
        for c in 0..seq.channel_count() {
            let px: Vec<u8> = seq.frame(k, c).iter().map(|v| (v * 255.0).round() as u8).collect();
            let img = image::GrayImage::from_raw(seq.width as u32, seq.height as u32, px)
                .expect("buffer matches dimensions");
            let name = if multi {
                format!("frame_{:06}_{}.png", k + 1, seq.meta.channels[c].name)
            } else {
                format!("frame_{:06}.png", k + 1)
            };
            let path = dir.join(name);
            img.save(&path).map_err(|e| Error::io(format!("writing {}", path.display()), std::io::Error::other(e)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::ChannelMeta;

    fn sample() -> FrameSequence {
        let frames: Vec<f32> = (0..3 * 2 * 4 * 5).map(|i| (i as f32 * 0.37).fract()).collect();
        let meta = SequenceMeta {
            source: "test".into(),
            kind: "field".into(),
            channels: vec![
                ChannelMeta { name: "u".into(), value_range: Some((-1.0 / 3.0, 2.0)) },
                ChannelMeta { name: "v".into(), value_range: Some((0.1, 0.7)) },
            ],
            ..Default::default()
        };
        FrameSequence::new(5, 4, 0.05, frames, meta).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.seq");
        let s = sample();
        save_sequence(&s, &p).unwrap();
        assert_eq!(load_sequence(&p).unwrap(), s);
    }

    #[test]
    fn truncated_file_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.seq");
        save_sequence(&sample(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        match load_sequence(&p) {
            Err(Error::Corrupt { expected, found, .. }) => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(found, bytes.len() as u64 - 7);
            }
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.seq");
        save_sequence(&sample(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_sequence(&p), Err(Error::UnsupportedVersion { found: 2, .. })));
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_sequence(&p), Err(Error::BadHeader { .. })));
    }

    #[test]
    fn png_export_names_frames() {
        let dir = tempfile::tempdir().unwrap();
        export_png_dir(&sample(), dir.path()).unwrap();
        assert!(dir.path().join("frame_000001_u.png").exists());
        assert!(dir.path().join("frame_000003_v.png").exists());
    }
}
