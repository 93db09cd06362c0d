use std::fmt;

use super::{PairClass, TrajectoryPair, TrajectoryPoint, CHANNELS, DT_TOLERANCE};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SPACING: f64 = 50.0;
/// Ten history steps plus the target step.
pub const MIN_SEGMENT_POINTS: usize = 11;

/// One supervised sample: a history of (spacing, lead speed, speed
/// difference) triples, oldest first, and the follower speed one step after
/// the last history step.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `steps * CHANNELS` values, time-major.
    pub features: Vec<f64>,
    /// Follower speed at `t_end + dt`, m/s.
    pub target: f64,
    pub pair_id: String,
    pub class: PairClass,
    pub segment: u32,
    /// Timestamp of the last history step.
    pub t_end: f64,
}

impl Window {
    pub fn steps(&self) -> usize {
        self.features.len() / CHANNELS
    }

    /// The `(spacing, lead speed, speed difference)` triple at `step`.
    pub fn step(&self, step: usize) -> [f64; 3] {
        let o = step * CHANNELS;
        [self.features[o], self.features[o + 1], self.features[o + 2]]
    }

    /// Follower speed at `step`, recovered as lead speed plus speed difference.
    pub fn follower_speed(&self, step: usize) -> f64 {
        let [_, lead, diff] = self.step(step);
        lead + diff
    }
}

/// Number of history steps for a history length; errors unless the history
/// is an integer multiple of `dt`.
pub fn history_steps(history: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(history > 0.0) {
        return Err(Error::Config(format!(
            "history ({history}) and dt ({dt}) must be positive"
        )));
    }
    let ratio = history / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "history {history} s is not an integer multiple of dt {dt} s"
        )));
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct FilterReport {
    pub pairs_in: usize,
    pub pairs_retained: usize,
    pub pairs_dropped: usize,
    pub segments_retained: usize,
    pub segments_dropped: usize,
    pub points_removed: usize,
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} pairs retained ({} dropped), {} segments kept, {} short segments dropped, {} points removed",
            self.pairs_retained,
            self.pairs_dropped,
            self.segments_retained,
            self.segments_dropped,
            self.points_removed
        )
    }
}

pub fn filter_spacing(pairs: &[TrajectoryPair], max_spacing: f64) -> (Vec<TrajectoryPair>, FilterReport) {
    filter_spacing_min(pairs, max_spacing, MIN_SEGMENT_POINTS)
}

/// Removes points with `spacing >= max_spacing`. Pairs are split into
/// contiguous segments around removed points; segments shorter than
/// `min_points` are dropped.
pub fn filter_spacing_min(
    pairs: &[TrajectoryPair],
    max_spacing: f64,
    min_points: usize,
) -> (Vec<TrajectoryPair>, FilterReport) {
    let mut out = Vec::new();
    let mut report = FilterReport {
        pairs_in: pairs.len(),
        ..Default::default()
    };
    for pair in pairs {
        let mut kept_any = false;
        let mut segment = pair.segment;
        let mut current: Vec<TrajectoryPoint> = Vec::new();
        let mut flush = |current: &mut Vec<TrajectoryPoint>, out: &mut Vec<TrajectoryPair>, report: &mut FilterReport| {
            if current.is_empty() {
                return;
            }
            if current.len() >= min_points {
                let mut seg = pair.clone();
                seg.points = std::mem::take(current);
                seg.segment = segment;
                segment += 1;
                out.push(seg);
                report.segments_retained += 1;
                kept_any = true;
            } else {
                report.segments_dropped += 1;
                current.clear();
            }
        };
        for p in &pair.points {
            if p.spacing < max_spacing {
                current.push(*p);
            } else {
                report.points_removed += 1;
                flush(&mut current, &mut out, &mut report);
            }
        }
        flush(&mut current, &mut out, &mut report);
        if kept_any {
            report.pairs_retained += 1;
        } else {
            report.pairs_dropped += 1;
        }
    }
    (out, report)
}

/// Sliding windows with stride one step. Windows never span a timestamp gap.
/// Output is ordered by pair id, segment, then time.
pub fn make_windows(pairs: &[TrajectoryPair], history: f64, dt: f64) -> Result<Vec<Window>> {
    let steps = history_steps(history, dt)?;
    let mut order: Vec<&TrajectoryPair> = pairs.iter().collect();
    order.sort_by(|a, b| a.pair_id.cmp(&b.pair_id).then(a.segment.cmp(&b.segment)));

    let mut windows = Vec::new();
    for pair in order {
        let pts = &pair.points;
        let mut start = 0;
        for end in 1..=pts.len() {
            let gap = end == pts.len() || (pts[end].t - pts[end - 1].t - dt).abs() > DT_TOLERANCE;
            if gap {
                emit_run(pair, &pts[start..end], steps, &mut windows);
                start = end;
            }
        }
    }
    Ok(windows)
}

fn emit_run(pair: &TrajectoryPair, run: &[TrajectoryPoint], steps: usize, out: &mut Vec<Window>) {
    if run.len() < steps + 1 {
        return;
    }
    for last in (steps - 1)..(run.len() - 1) {
        let mut features = Vec::with_capacity(steps * CHANNELS);
        for p in &run[last + 1 - steps..=last] {
            features.extend_from_slice(&[p.spacing, p.lead_speed, p.speed_diff]);
        }
        out.push(Window {
            features,
            target: run[last + 1].foll_speed,
            pair_id: pair.pair_id.clone(),
            class: pair.class,
            segment: pair.segment,
            t_end: run[last].t,
        });
    }
}
