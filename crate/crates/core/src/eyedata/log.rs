//! Fixation log CSV: `observer_id,image_id,group_id,index,x,y,duration_ms`.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{FixationPoint, FixationSequence, Geometry};

pub const LOG_COLUMNS: [&str; 7] =
    ["observer_id", "image_id", "group_id", "index", "x", "y", "duration_ms"];

/// One row of a fixation log, with the 1-based line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub line: u64,
    pub observer_id: String,
    pub image_id: String,
    pub group_id: String,
    pub point: FixationPoint,
}

/// Parses every row without grouping or filtering.
pub fn parse_records(text: &str) -> Result<Vec<FixationRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(LOG_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let [c_obs, c_img, c_grp, c_idx, c_x, c_y, c_dur] = cols;

    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str, raw: &str| Error::Parse {
            line,
            message: format!("invalid {what} `{raw}`"),
        };
        let index: u32 = field(c_idx).parse().map_err(|_| bad("index", field(c_idx)))?;
        let x: f64 = field(c_x).parse().map_err(|_| bad("x", field(c_x)))?;
        let y: f64 = field(c_y).parse().map_err(|_| bad("y", field(c_y)))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(bad("coordinate", &format!("{x},{y}")));
        }
        let dur_raw = field(c_dur);
        let duration_ms = if dur_raw.is_empty() {
            None
        } else {
            Some(dur_raw.parse::<f64>().map_err(|_| bad("duration_ms", dur_raw))?)
        };
        out.push(FixationRecord {
            line,
            observer_id: field(c_obs).to_string(),
            image_id: field(c_img).to_string(),
            group_id: field(c_grp).to_string(),
            point: FixationPoint { x, y, index, duration_ms },
        });
    }
    Ok(out)
}

/// Groups rows into per-(observer, image) trials ordered by `index`, and drops
/// the first fixation of every trial. Trials left empty are omitted. Output
/// order follows the first appearance of each trial in the file.
pub fn parse_fixation_log(text: &str, geometry: Geometry) -> Result<Vec<FixationSequence>> {
    let records = parse_records(text)?;
    let mut order: Vec<FixationSequence> = Vec::new();
    let mut lines: Vec<Vec<u64>> = Vec::new();
    let mut slot: HashMap<(String, String), usize> = HashMap::new();

    for r in records {
        if !geometry.contains(r.point.x, r.point.y) {
            return Err(Error::Validation(format!(
                "line {}: fixation ({}, {}) outside {}x{} image",
                r.line, r.point.x, r.point.y, geometry.width, geometry.height
            )));
        }
        let key = (r.observer_id.clone(), r.image_id.clone());
        let i = *slot.entry(key).or_insert_with(|| {
            order.push(FixationSequence {
                observer_id: r.observer_id.clone(),
                image_id: r.image_id.clone(),
                group_id: r.group_id.clone(),
                fixations: Vec::new(),
                width: geometry.width,
                height: geometry.height,
            });
            lines.push(Vec::new());
            order.len() - 1
        });
        if order[i].group_id != r.group_id {
            return Err(Error::Validation(format!(
                "line {}: trial ({}, {}) switches group from `{}` to `{}`",
                r.line, r.observer_id, r.image_id, order[i].group_id, r.group_id
            )));
        }
        order[i].fixations.push(r.point);
        lines[i].push(r.line);
    }

    for (seq, lines) in order.iter_mut().zip(&lines) {
        let mut paired: Vec<(FixationPoint, u64)> =
            seq.fixations.iter().copied().zip(lines.iter().copied()).collect();
        paired.sort_by_key(|(p, _)| p.index);
        if let Some(w) = paired.windows(2).find(|w| w[0].0.index == w[1].0.index) {
            return Err(Error::Validation(format!(
                "line {}: duplicate index {} in trial ({}, {})",
                w[1].1, w[1].0.index, seq.observer_id, seq.image_id
            )));
        }
        seq.fixations = paired.into_iter().skip(1).map(|(p, _)| p).collect();
    }
    order.retain(|s| !s.fixations.is_empty());
    Ok(order)
}

/// Serializes sequences back to the log format.
pub fn write_fixation_log(sequences: &[FixationSequence]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOG_COLUMNS)?;
    for s in sequences {
        for f in &s.fixations {
            let dur = f.duration_ms.map(|d| d.to_string()).unwrap_or_default();
            w.write_record([
                s.observer_id.as_str(),
                s.image_id.as_str(),
                s.group_id.as_str(),
                &f.index.to_string(),
                &f.x.to_string(),
                &f.y.to_string(),
                &dur,
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
