//! ND-JSON file formats.
//!
//! * stream: a header line `{frame_w, frame_h, embedding_dim, format_version,
//!   n_frames?}` then one detection per line, sorted by `t`.
//! * truth: a header line `{frame_w, frame_h, format_version, n_frames?}` then
//!   one line per frame `{t, box | null, object_id | null}`.
//! * predictions: one line per frame `{t, box, confidence, present,
//!   object_id?, det_id?}`.
//!
//! Boxes are `[x, y, w, h]` in normalized center form. Reals are written with
//! the shortest representation that parses back to the same value.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use tdpa_core::metrics::PredictionRecord;
use tdpa_core::miner::GalleryEntry;
use tdpa_core::{BBox, Detection, Frame, FrameOutput};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub frame_w: f64,
    pub frame_h: f64,
    pub embedding_dim: usize,
    pub format_version: u32,
    /// Frames in the stream, including trailing frames without detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_frames: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthHeader {
    pub frame_w: f64,
    pub frame_h: f64,
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    t: Frame,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    ff_score: f64,
    embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_id: Option<i64>,
    det_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthLine {
    t: Frame,
    #[serde(rename = "box")]
    bbox: Option<[f64; 4]>,
    object_id: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    t: Frame,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
    present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_id: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    det_id: Option<u64>,
}

/// Detection stream grouped by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub header: StreamHeader,
    pub frames: Vec<Vec<Detection<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub header: TruthHeader,
    pub boxes: Vec<Option<BBox<f64>>>,
    pub ids: Vec<Option<i64>>,
}

fn put(w: &mut impl Write, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string(value).expect("plain data serializes");
    writeln!(w, "{text}")?;
    Ok(())
}

fn line_err(what: &str, line: usize, e: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("{what} line {line}: {e}"))
}

fn to_box(a: [f64; 4], what: &str, line: usize) -> CliResult<BBox<f64>> {
    BBox::from_array(a).map_err(|e| line_err(what, line, e))
}

/// Non-empty lines with their 1-based numbers.
fn lines(reader: impl BufRead) -> impl Iterator<Item = CliResult<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        Ok(s) => Some(Ok((i + 1, s))),
        Err(e) => Some(Err(e.into())),
    })
}

pub fn read_stream(reader: impl BufRead) -> CliResult<Stream> {
    const WHAT: &str = "stream";
    let mut it = lines(reader);
    let (n, first) = it.next().ok_or_else(|| CliError::validation("stream: empty file"))??;
    let header: StreamHeader = serde_json::from_str(&first).map_err(|e| line_err(WHAT, n, e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(line_err(WHAT, n, format!("unsupported format_version {}", header.format_version)));
    }
    let mut frames: Vec<Vec<Detection<f64>>> = Vec::new();
    let mut ids = HashSet::new();
    for item in it {
        let (n, text) = item?;
        let d: DetectionLine = serde_json::from_str(&text).map_err(|e| line_err(WHAT, n, e))?;
        if d.t + 1 < frames.len() {
            return Err(line_err(WHAT, n, format!("t={} after t={}", d.t, frames.len() - 1)));
        }
        if d.embedding.len() != header.embedding_dim {
            return Err(line_err(
                WHAT,
                n,
                format!("embedding has {} values, header says {}", d.embedding.len(), header.embedding_dim),
            ));
        }
        if !d.ff_score.is_finite() || d.embedding.iter().any(|v| !v.is_finite()) {
            return Err(line_err(WHAT, n, "non-finite value"));
        }
        if !ids.insert(d.det_id) {
            return Err(line_err(WHAT, n, format!("duplicate det_id {}", d.det_id)));
        }
        let bbox = to_box(d.bbox, WHAT, n)?;
        frames.resize_with(frames.len().max(d.t + 1), Vec::new);
        let mut det = Detection::new(d.t, bbox, d.ff_score, d.embedding, d.det_id);
        det.object_id = d.object_id;
        frames[d.t].push(det);
    }
    if let Some(total) = header.n_frames {
        if total < frames.len() {
            return Err(CliError::validation(format!(
                "stream: header n_frames={total} but detections reach t={}",
                frames.len() - 1
            )));
        }
        frames.resize_with(total, Vec::new);
    }
    if frames.first().map_or(true, |f| f.is_empty()) {
        return Err(CliError::validation("stream: no detection at t=0 to use as template"));
    }
    Ok(Stream { header, frames })
}

pub fn write_stream(mut w: impl Write, s: &Stream) -> CliResult<()> {
    let mut header = s.header;
    header.n_frames = Some(s.frames.len());
    put(&mut w, &header)?;
    for d in s.frames.iter().flatten() {
        let line = DetectionLine {
            t: d.t,
            bbox: d.bbox.to_array(),
            ff_score: d.ff_score,
            embedding: d.embedding.clone(),
            object_id: d.object_id,
            det_id: d.det_id,
        };
        put(&mut w, &line)?;
    }
    Ok(())
}

pub fn read_truth(reader: impl BufRead) -> CliResult<Truth> {
    const WHAT: &str = "truth";
    let mut it = lines(reader);
    let (n, first) = it.next().ok_or_else(|| CliError::validation("truth: empty file"))??;
    let header: TruthHeader = serde_json::from_str(&first).map_err(|e| line_err(WHAT, n, e))?;
    let mut truth = Truth { header, boxes: Vec::new(), ids: Vec::new() };
    for item in it {
        let (n, text) = item?;
        let l: TruthLine = serde_json::from_str(&text).map_err(|e| line_err(WHAT, n, e))?;
        if l.t != truth.boxes.len() {
            return Err(line_err(WHAT, n, format!("expected t={}, got t={}", truth.boxes.len(), l.t)));
        }
        truth.boxes.push(l.bbox.map(|b| to_box(b, WHAT, n)).transpose()?);
        truth.ids.push(l.bbox.and(l.object_id));
    }
    Ok(truth)
}

pub fn write_truth(mut w: impl Write, t: &Truth) -> CliResult<()> {
    let mut header = t.header;
    header.n_frames = Some(t.boxes.len());
    put(&mut w, &header)?;
    for (k, (b, id)) in t.boxes.iter().zip(&t.ids).enumerate() {
        let line = TruthLine { t: k, bbox: b.map(|b| b.to_array()), object_id: *id };
        put(&mut w, &line)?;
    }
    Ok(())
}

pub fn read_predictions(reader: impl BufRead) -> CliResult<Vec<PredictionRecord<f64>>> {
    const WHAT: &str = "predictions";
    let mut out = Vec::new();
    for item in lines(reader) {
        let (n, text) = item?;
        let l: PredictionLine = serde_json::from_str(&text).map_err(|e| line_err(WHAT, n, e))?;
        if l.t != out.len() {
            return Err(line_err(WHAT, n, format!("expected t={}, got t={}", out.len(), l.t)));
        }
        if !l.confidence.is_finite() {
            return Err(line_err(WHAT, n, "non-finite confidence"));
        }
        out.push(PredictionRecord {
            t: l.t,
            bbox: to_box(l.bbox, WHAT, n)?,
            confidence: l.confidence,
            present: l.present,
            object_id: l.object_id,
        });
    }
    Ok(out)
}

pub fn write_predictions(mut w: impl Write, preds: &[FrameOutput<f64>]) -> CliResult<()> {
    for p in preds {
        let line = PredictionLine {
            t: p.t,
            bbox: p.bbox.to_array(),
            confidence: p.confidence,
            present: p.present,
            object_id: p.object_id,
            det_id: p.det_id,
        };
        put(&mut w, &line)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GalleryLine {
    video_id: i64,
    frame: Frame,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    embedding: Vec<f64>,
    entry_id: u64,
}

/// Gallery file: one entry per line, no header.
pub fn read_gallery(reader: impl BufRead) -> CliResult<Vec<GalleryEntry<f64>>> {
    const WHAT: &str = "gallery";
    let mut out = Vec::new();
    for item in lines(reader) {
        let (n, text) = item?;
        let l: GalleryLine = serde_json::from_str(&text).map_err(|e| line_err(WHAT, n, e))?;
        out.push(GalleryEntry {
            video_id: l.video_id,
            frame: l.frame,
            bbox: to_box(l.bbox, WHAT, n)?,
            embedding: l.embedding,
            entry_id: l.entry_id,
        });
    }
    Ok(out)
}

pub fn write_gallery(mut w: impl Write, entries: &[GalleryEntry<f64>]) -> CliResult<()> {
    for e in entries {
        let line = GalleryLine {
            video_id: e.video_id,
            frame: e.frame,
            bbox: e.bbox.to_array(),
            embedding: e.embedding.clone(),
            entry_id: e.entry_id,
        };
        put(&mut w, &line)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Stream {
        let d = |t, id, x: f64| {
            Detection::new(t, BBox::new(x, 0.5, 0.1, 0.2).unwrap(), 0.1 + x, vec![x, 1.0 / 3.0], id).with_object(id as i64)
        };
        Stream {
            header: StreamHeader { frame_w: 640.0, frame_h: 480.0, embedding_dim: 2, format_version: 1, n_frames: None },
            frames: vec![vec![d(0, 0, 0.5)], vec![], vec![d(2, 1, 0.123456789012345), d(2, 2, 0.7)], vec![]],
        }
    }

    #[test]
    fn stream_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_stream(&mut buf, &s).unwrap();
        let back = read_stream(&buf[..]).unwrap();
        assert_eq!(back.frames, s.frames);
        assert_eq!(back.header.n_frames, Some(4));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"frame_w\":1,\"frame_h\":1,\"embedding_dim\":1,\"format_version\":1}\n\
                    {\"t\":0,\"box\":[0.5,0.5,0.1,0.1],\"ff_score\":1,\"embedding\":[1],\"det_id\":0}\n\
                    {\"t\":1,\"box\":[0.5,0.5,0.1],\"ff_score\":1,\"embedding\":[1],\"det_id\":1}\n";
        let err = read_stream(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let text = "{\"frame_w\":1,\"frame_h\":1,\"embedding_dim\":1,\"format_version\":1}\n\
                    {\"t\":2,\"box\":[0.5,0.5,0.1,0.1],\"ff_score\":1,\"embedding\":[1],\"det_id\":0}\n\
                    {\"t\":0,\"box\":[0.5,0.5,0.1,0.1],\"ff_score\":1,\"embedding\":[1],\"det_id\":1}\n";
        let err = read_stream(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn truth_round_trip() {
        let t = Truth {
            header: TruthHeader { frame_w: 640.0, frame_h: 480.0, format_version: 1, n_frames: None },
            boxes: vec![Some(BBox::new(0.5, 0.5, 0.1, 0.1).unwrap()), None],
            ids: vec![Some(1), None],
        };
        let mut buf = Vec::new();
        write_truth(&mut buf, &t).unwrap();
        let back = read_truth(&buf[..]).unwrap();
        assert_eq!(back.boxes, t.boxes);
        assert_eq!(back.ids, t.ids);
    }
}
