//! Text format of one keypoint sequence:
//!
//! ```text
//! HWGAT-SEQ 1 id=<id> label=<index|none> fps=<f32> size=<W>x<H> frames=<F>
//! x,y x,y NA ... (27 tokens per frame line)
//! ```
//!
//! Coordinates are written with the shortest representation that parses
//! back to the same `f32`, so a save/load round trip is bit-exact. `NA`
//! marks a missing landmark. Blank lines and lines starting with `#` are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::preprocess::SkeletonSequence;
use crate::schema::{build_default_selection_map, select_keypoints, MissingPolicy, FULL_FRAME_LANDMARKS, NUM_NODES};

pub const SEQUENCE_MAGIC: &str = "HWGAT-SEQ";
pub const POSE_MAGIC: &str = "HWGAT-POSE";
pub const FORMAT_VERSION: &str = "1";
pub const MISSING_TOKEN: &str = "NA";

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Header {
    id: String,
    label: Option<usize>,
    fps: f32,
    size: (u32, u32),
    frames: usize,
}

fn parse_header(line: &str, magic: &str, path: &Path, lineno: usize) -> Result<Header> {
    let err = |m: String| parse_err(path, lineno, m);
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(magic) {
        return Err(err(format!("expected header starting with {magic}")));
    }
    if tokens.next() != Some(FORMAT_VERSION) {
        return Err(err(format!("unsupported format version, expected {FORMAT_VERSION}")));
    }
    let (mut id, mut label, mut fps, mut size, mut frames) = (None, None, None, None, None);
    for tok in tokens {
        let (key, value) = tok.split_once('=').ok_or_else(|| err(format!("field {tok:?} is not key=value")))?;
        match key {
            "id" => id = Some(value.to_string()),
            "label" => {
                label = Some(if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| err(format!("label {value:?} is not an index")))?)
                })
            }
            "fps" => fps = Some(value.parse::<f32>().map_err(|_| err(format!("fps {value:?} is not a number")))?),
            "size" => {
                let (w, h) = value.split_once('x').ok_or_else(|| err(format!("size {value:?} is not WxH")))?;
                let p = |s: &str| s.parse::<u32>().map_err(|_| err(format!("size {value:?} is not WxH")));
                size = Some((p(w)?, p(h)?));
            }
            "frames" => frames = Some(value.parse().map_err(|_| err(format!("frames {value:?} is not a count")))?),
            _ => return Err(err(format!("unknown header field {key:?}"))),
        }
    }
    let missing = |f: &str| err(format!("header lacks field {f}"));
    Ok(Header {
        id: id.ok_or_else(|| missing("id"))?,
        label: label.ok_or_else(|| missing("label"))?,
        fps: fps.ok_or_else(|| missing("fps"))?,
        size: size.ok_or_else(|| missing("size"))?,
        frames: frames.ok_or_else(|| missing("frames"))?,
    })
}

fn parse_point(tok: &str, path: &Path, lineno: usize, field: usize) -> Result<(f32, f32)> {
    if tok == MISSING_TOKEN {
        return Ok((f32::NAN, f32::NAN));
    }
    let err = || parse_err(path, lineno, format!("field {} ({tok:?}) is not x,y or {MISSING_TOKEN}", field + 1));
    let (x, y) = tok.split_once(',').ok_or_else(err)?;
    let x: f32 = x.parse().map_err(|_| err())?;
    let y: f32 = y.parse().map_err(|_| err())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(parse_err(path, lineno, format!("field {} has a non-finite coordinate", field + 1)));
    }
    Ok((x, y))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses frames of `width` points each into an `F x width x 2` array.
fn parse_body<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    header: &Header,
    width: usize,
    path: &Path,
    header_line: usize,
) -> Result<Array3<f32>> {
    let mut frames = Array3::zeros((header.frames, width, 2));
    let mut count = 0;
    for (lineno, line) in lines {
        if count == header.frames {
            return Err(parse_err(path, lineno, format!("more than the declared {} frames", header.frames)));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != width {
            return Err(parse_err(path, lineno, format!("expected {width} keypoints, found {}", tokens.len())));
        }
        for (n, tok) in tokens.iter().enumerate() {
            let (x, y) = parse_point(tok, path, lineno, n)?;
            frames[[count, n, 0]] = x;
            frames[[count, n, 1]] = y;
        }
        count += 1;
    }
    if count != header.frames {
        return Err(parse_err(path, header_line, format!("declared {} frames, found {count}", header.frames)));
    }
    Ok(frames)
}

pub fn parse_sequence(text: &str, path: &Path) -> Result<SkeletonSequence> {
    let mut lines = content_lines(text);
    let (hl, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = parse_header(first, SEQUENCE_MAGIC, path, hl)?;
    let frames = parse_body(lines, &header, NUM_NODES, path, hl)?;
    SkeletonSequence::new(header.id, header.label, header.fps, header.size, frames)
}

pub fn load_sequence(path: &Path) -> Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text, path)
}

fn write_header(out: &mut String, magic: &str, seq_id: &str, label: Option<usize>, fps: f32, size: (u32, u32), frames: usize) {
    let label = label.map_or("none".to_string(), |l| l.to_string());
    let _ = writeln!(
        out,
        "{magic} {FORMAT_VERSION} id={seq_id} label={label} fps={fps} size={}x{} frames={frames}",
        size.0, size.1
    );
}

fn write_frames(out: &mut String, frames: &Array3<f32>) {
    for frame in frames.outer_iter() {
        let tokens: Vec<String> = frame
            .outer_iter()
            .map(|p| {
                if p[0].is_nan() {
                    MISSING_TOKEN.to_string()
                } else {
                    format!("{},{}", p[0], p[1])
                }
            })
            .collect();
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
}

pub fn format_sequence(seq: &SkeletonSequence) -> Result<String> {
    if seq.id.is_empty() || seq.id.chars().any(char::is_whitespace) {
        return Err(Error::Data(format!("sequence id {:?} must be non-empty without whitespace", seq.id)));
    }
    let mut out = String::new();
    write_header(&mut out, SEQUENCE_MAGIC, &seq.id, seq.label, seq.fps, seq.frame_size, seq.num_frames());
    write_frames(&mut out, &seq.frames);
    Ok(out)
}

pub fn save_sequence(seq: &SkeletonSequence, path: &Path) -> Result<()> {
    let text = format_sequence(seq)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a full pose-estimator dump (33 body + 21 left-hand + 21 right-hand
/// landmarks per frame, same token syntax, `HWGAT-POSE` header) and reduces
/// it to the 27-node skeleton.
pub fn parse_full_pose(text: &str, path: &Path) -> Result<SkeletonSequence> {
    let mut lines = content_lines(text);
    let (hl, first) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = parse_header(first, POSE_MAGIC, path, hl)?;
    let full = parse_body(lines, &header, FULL_FRAME_LANDMARKS, path, hl)?;
    let map = build_default_selection_map();
    let mut frames = Array3::zeros((header.frames, NUM_NODES, 2));
    for (t, frame) in full.outer_iter().enumerate() {
        let sel = select_keypoints(frame, &map, MissingPolicy::Propagate)?;
        frames.index_axis_mut(ndarray::Axis(0), t).assign(&sel);
    }
    SkeletonSequence::new(header.id, header.label, header.fps, header.size, frames)
}

pub fn load_full_pose(path: &Path) -> Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_full_pose(&text, path)
}

/// Writes a full-pose dump; used to produce converter fixtures.
pub fn format_full_pose(id: &str, label: Option<usize>, fps: f32, size: (u32, u32), frames: &Array3<f32>) -> String {
    let mut out = String::new();
    write_header(&mut out, POSE_MAGIC, id, label, fps, size, frames.dim().0);
    write_frames(&mut out, frames);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.seq")
    }

    fn one_frame_text(points: usize) -> String {
        let mut s = "HWGAT-SEQ 1 id=a label=2 fps=25 size=640x480 frames=1\n".to_string();
        let toks: Vec<String> = (0..points).map(|i| format!("{i}.5,{}", i * 2)).collect();
        s.push_str(&toks.join(" "));
        s.push('\n');
        s
    }

    #[test]
    fn minimal_file() {
        let seq = parse_sequence(&one_frame_text(27), p()).unwrap();
        assert_eq!(seq.num_frames(), 1);
        assert_eq!(seq.label, Some(2));
        assert_eq!(seq.frame_size, (640, 480));
        assert_eq!(seq.frames[[0, 3, 0]], 3.5);
    }

    #[test]
    fn wrong_keypoint_count() {
        let err = parse_sequence(&one_frame_text(26), p()).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("27"), "{msg}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_field_is_named() {
        let text = one_frame_text(27).replace("4.5,8", "4.5;8");
        let msg = parse_sequence(&text, p()).unwrap_err().to_string();
        assert!(msg.contains("field 5"), "{msg}");
        let text = one_frame_text(27).replace("4.5,8", "inf,8");
        assert!(parse_sequence(&text, p()).is_err());
    }

    #[test]
    fn missing_token_and_frame_count() {
        let text = one_frame_text(27).replace("0.5,0 ", "NA ");
        let seq = parse_sequence(&text, p()).unwrap();
        assert!(seq.is_missing(0, 0));
        let text = one_frame_text(27).replace("frames=1", "frames=2");
        assert!(parse_sequence(&text, p()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(-1e4f32..1e4, 27 * 2 * 3),
            missing in proptest::collection::vec(any::<bool>(), 27 * 3),
            label in proptest::option::of(0usize..100),
        ) {
            let mut frames = Array3::from_shape_vec((3, 27, 2), values).unwrap();
            for (i, &m) in missing.iter().enumerate() {
                if m {
                    frames[[i / 27, i % 27, 0]] = f32::NAN;
                    frames[[i / 27, i % 27, 1]] = f32::NAN;
                }
            }
            let seq = SkeletonSequence::new("s-1", label, 29.97, (1920, 1080), frames).unwrap();
            let back = parse_sequence(&format_sequence(&seq).unwrap(), p()).unwrap();
            prop_assert_eq!(&back.id, &seq.id);
            prop_assert_eq!(back.label, seq.label);
            prop_assert_eq!(back.fps.to_bits(), seq.fps.to_bits());
            for (a, b) in back.frames.iter().zip(seq.frames.iter()) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn full_pose_conversion() {
        let full = Array3::from_shape_fn((2, 75, 2), |(t, n, c)| (t * 1000 + n * 10 + c) as f32);
        let text = format_full_pose("v", Some(1), 30.0, (640, 480), &full);
        let seq = parse_full_pose(&text, p()).unwrap();
        assert_eq!(seq.frames.dim(), (2, 27, 2));
        // nose from body landmark 0, right-hand wrist from landmark 54
        assert_eq!(seq.frames[[1, 0, 0]], 1000.0);
        assert_eq!(seq.frames[[0, 17, 0]], 540.0);
    }
}
