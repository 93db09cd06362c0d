use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{PairClass, TrajectoryPair, TrajectoryPoint, DT, DT_TOLERANCE};
use crate::error::{Error, Result};

/// Source column names. Accelerations are optional.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub pair_id: String,
    pub pair_type: String,
    pub t: String,
    pub lead_pos: String,
    pub foll_pos: String,
    pub lead_speed: String,
    pub foll_speed: String,
    pub lead_accel: Option<String>,
    pub foll_accel: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            pair_id: "pair_id".into(),
            pair_type: "pair_type".into(),
            t: "t".into(),
            lead_pos: "lead_pos".into(),
            foll_pos: "foll_pos".into(),
            lead_speed: "lead_speed".into(),
            foll_speed: "foll_speed".into(),
            lead_accel: Some("lead_accel".into()),
            foll_accel: Some("foll_accel".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: ColumnMap,
    /// Expected sampling interval, seconds.
    pub dt: f64,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            columns: ColumnMap::default(),
            dt: DT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPairs {
    /// Sorted by pair id.
    pub pairs: Vec<TrajectoryPair>,
    pub counts: BTreeMap<PairClass, usize>,
}

pub fn load_pairs(path: &Path, schema: &Schema) -> Result<LoadedPairs> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pairs(file, path, schema)
}

struct Columns {
    pair_id: usize,
    pair_type: usize,
    t: usize,
    lead_pos: usize,
    foll_pos: usize,
    lead_speed: usize,
    foll_speed: usize,
    accel: Option<(usize, usize)>,
}

fn resolve_columns(headers: &csv::StringRecord, map: &ColumnMap, source: &Path) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::Row {
            path: source.to_path_buf(),
            line: 1,
            message: format!("header is missing column {name:?}"),
        })
    };
    let accel = match (&map.lead_accel, &map.foll_accel) {
        (Some(l), Some(f)) => match (find(l), find(f)) {
            (Some(li), Some(fi)) => Some((li, fi)),
            _ => None,
        },
        _ => None,
    };
    Ok(Columns {
        pair_id: need(&map.pair_id)?,
        pair_type: need(&map.pair_type)?,
        t: need(&map.t)?,
        lead_pos: need(&map.lead_pos)?,
        foll_pos: need(&map.foll_pos)?,
        lead_speed: need(&map.lead_speed)?,
        foll_speed: need(&map.foll_speed)?,
        accel,
    })
}

/// Parses trajectory CSV from any reader; `source` is used in error messages.
pub fn read_pairs<R: Read>(reader: R, source: &Path, schema: &Schema) -> Result<LoadedPairs> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: cannot read header: {e}", source.display())))?
        .clone();
    let cols = resolve_columns(&headers, &schema.columns, source)?;

    let mut grouped: BTreeMap<String, (PairClass, Vec<TrajectoryPoint>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                path: source.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row {
            path: source.to_path_buf(),
            line,
            message,
        };
        let field = |idx: usize| {
            record
                .get(idx)
                .ok_or_else(|| row_err(format!("missing field {}", headers.get(idx).unwrap_or("?"))))
        };
        let num = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            let v: f64 = raw.parse().map_err(|_| {
                row_err(format!(
                    "column {}: cannot parse {raw:?} as a number",
                    headers.get(idx).unwrap_or("?")
                ))
            })?;
            if !v.is_finite() {
                return Err(row_err(format!("column {}: non-finite value", headers.get(idx).unwrap_or("?"))));
            }
            Ok(v)
        };

        let pair_id = field(cols.pair_id)?.to_string();
        let class: PairClass = field(cols.pair_type)?
            .parse()
            .map_err(|e: Error| row_err(e.to_string().trim_start_matches("data error: ").to_string()))?;
        let mut point = TrajectoryPoint::new(
            num(cols.t)?,
            num(cols.lead_pos)?,
            num(cols.foll_pos)?,
            num(cols.lead_speed)?,
            num(cols.foll_speed)?,
        );
        if point.lead_speed < 0.0 || point.foll_speed < 0.0 {
            return Err(row_err("negative speed".into()));
        }
        if let Some((li, fi)) = cols.accel {
            point.lead_accel = num(li)?;
            point.foll_accel = num(fi)?;
        }

        let entry = grouped.entry(pair_id.clone()).or_insert_with(|| (class, Vec::new()));
        if entry.0 != class {
            return Err(row_err(format!(
                "pair {pair_id} changes class from {} to {class}",
                entry.0
            )));
        }
        entry.1.push(point);
    }

    let mut pairs = Vec::with_capacity(grouped.len());
    let mut counts = BTreeMap::new();
    for (pair_id, (class, mut points)) in grouped {
        points.sort_by(|a, b| a.t.total_cmp(&b.t));
        for w in points.windows(2) {
            let step = w[1].t - w[0].t;
            if (step - schema.dt).abs() > DT_TOLERANCE {
                return Err(Error::Data(format!(
                    "pair {pair_id}: non-uniform timestep {step:.6} s at t = {} (expected {} s)",
                    w[0].t, schema.dt
                )));
            }
        }
        if let Some(p) = points.iter().find(|p| p.spacing < 0.0) {
            return Err(Error::Data(format!(
                "pair {pair_id}: negative spacing {} m at t = {}",
                p.spacing, p.t
            )));
        }
        *counts.entry(class).or_insert(0) += 1;
        let mut pair = TrajectoryPair::new(pair_id, class, points);
        pair.accel_observed = cols.accel.is_some();
        pairs.push(pair);
    }
    Ok(LoadedPairs { pairs, counts })
}

/// Writes pairs in the default column layout (no acceleration columns).
/// Floats use the shortest round-trip representation, so output is
/// byte-stable for identical inputs.
pub fn write_pairs_csv(path: &Path, pairs: &[TrajectoryPair]) -> Result<()> {
    let mut out = Vec::new();
    write_pairs_to(&mut out, pairs).map_err(|e| Error::io(PathBuf::from(path), e))?;
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_pairs_to<W: Write>(out: &mut W, pairs: &[TrajectoryPair]) -> std::io::Result<()> {
    writeln!(out, "pair_id,pair_type,t,lead_pos,foll_pos,lead_speed,foll_speed")?;
    for pair in pairs {
        for p in &pair.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                pair.pair_id, pair.class, p.t, p.lead_pos, p.foll_pos, p.lead_speed, p.foll_speed
            )?;
        }
    }
    Ok(())
}
