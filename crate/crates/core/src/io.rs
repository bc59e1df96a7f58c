//! Text formats for set models and curves.
//!
//! Segments and polylines are CSV (`x1,y1,x2,y2` and `x,y` per row; `#` starts a
//! comment line). Square sets are JSON `{"level": n, "cells": [[i, j], ...]}`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sets::{skeleton, DyadicSquareSet, Polyline, Segment, SegmentUnion, SetModel};
use crate::torus::Point;

fn rows(text: &str, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("`{f}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push((line, values));
    }
    Ok(out)
}

/// Parses `x1,y1,x2,y2` rows.
pub fn parse_segments(text: &str) -> Result<SegmentUnion> {
    let mut segments = Vec::new();
    for (line, v) in rows(text, 4)? {
        let seg = Segment::new(Point::new(v[0], v[1]), Point::new(v[2], v[3])).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        segments.push(seg);
    }
    if segments.is_empty() {
        return Err(Error::Precondition("input contains no segments".into()));
    }
    Ok(SegmentUnion::new(segments))
}

/// Parses `x,y` rows into a curve.
pub fn parse_polyline(text: &str) -> Result<Polyline> {
    let vertices: Vec<Point> = rows(text, 2)?.into_iter().map(|(_, v)| Point::new(v[0], v[1])).collect();
    Polyline::new(vertices)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SquaresFile {
    level: u32,
    cells: Vec<(u64, u64)>,
}

pub fn parse_squares(text: &str) -> Result<DyadicSquareSet> {
    let f: SquaresFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    DyadicSquareSet::new(f.level, f.cells)
}

pub fn segments_to_csv(s: &SegmentUnion) -> String {
    let mut out = String::from("# x1,y1,x2,y2\n");
    for seg in &s.segments {
        out.push_str(&format!("{},{},{},{}\n", seg.a.x1, seg.a.x2, seg.b.x1, seg.b.x2));
    }
    out
}

/// A set read from disk, with the bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedSet {
    pub model: SetModel,
    pub bytes: Vec<u8>,
}

impl LoadedSet {
    /// Segments as given, or the skeleton of a square set.
    pub fn segments(&self) -> SegmentUnion {
        match &self.model {
            SetModel::Segments(s) => s.clone(),
            SetModel::Squares(q) => skeleton(q),
        }
    }
}

/// Reads a `.json` file as a square set and anything else as segment CSV.
pub fn load_set(path: &Path) -> Result<LoadedSet> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let model = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        SetModel::Squares(parse_squares(&text)?)
    } else {
        SetModel::Segments(parse_segments(&text)?)
    };
    Ok(LoadedSet { model, bytes })
}
