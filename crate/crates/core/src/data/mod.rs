//! Trajectory data: ingestion, kinematics, spacing filter, windows,
//! normalization and dataset splits.

mod binary;
mod ingest;
mod kinematics;
mod normalize;
mod split;
mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binary::{read_windows, write_windows, WindowFile, WINDOW_MAGIC};
pub use ingest::{load_pairs, read_pairs, write_pairs_csv, ColumnMap, LoadedPairs, Schema};
pub use kinematics::derive_kinematics;
pub use normalize::{NormalizationSpec, CHANNEL_NAMES};
pub use split::{apply_assignment, split_dataset, DatasetSplit, SplitRole, SPLIT_FRACTIONS};
pub use window::{
    filter_spacing, filter_spacing_min, history_steps, make_windows, FilterReport, Window,
    DEFAULT_MAX_SPACING, MIN_SEGMENT_POINTS,
};

/// Nominal sampling interval of the trajectories, seconds.
pub const DT: f64 = 0.1;
/// Tolerance on timestamp spacing, seconds.
pub const DT_TOLERANCE: f64 = 1e-6;
/// Default input history, seconds.
pub const HISTORY_SECONDS: f64 = 1.0;

/// Feature channels per timestep: spacing, lead speed, speed difference.
pub const CHANNELS: usize = 3;
pub const CH_SPACING: usize = 0;
pub const CH_LEAD_SPEED: usize = 1;
pub const CH_SPEED_DIFF: usize = 2;

/// Vehicle pair class, named follower first: `HdvAv` is a human-driven
/// vehicle following an autonomous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairClass {
    #[serde(rename = "AV-HDV")]
    AvHdv,
    #[serde(rename = "HDV-AV")]
    HdvAv,
    #[serde(rename = "HDV-HDV")]
    HdvHdv,
}

impl PairClass {
    pub const ALL: [PairClass; 3] = [PairClass::AvHdv, PairClass::HdvAv, PairClass::HdvHdv];

    pub fn label(self) -> &'static str {
        match self {
            PairClass::AvHdv => "AV-HDV",
            PairClass::HdvAv => "HDV-AV",
            PairClass::HdvHdv => "HDV-HDV",
        }
    }

    pub fn follower_is_av(self) -> bool {
        matches!(self, PairClass::AvHdv)
    }

    pub fn lead_is_av(self) -> bool {
        matches!(self, PairClass::HdvAv)
    }

    pub fn code(self) -> u8 {
        match self {
            PairClass::AvHdv => 0,
            PairClass::HdvAv => 1,
            PairClass::HdvHdv => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        PairClass::ALL.get(usize::from(code)).copied()
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PairClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '_' { '-' } else { c.to_ascii_uppercase() })
            .collect();
        match norm.as_str() {
            "AV-HDV" => Ok(PairClass::AvHdv),
            "HDV-AV" => Ok(PairClass::HdvAv),
            "HDV-HDV" => Ok(PairClass::HdvHdv),
            "AV-AV" => Err(Error::Data(
                "AV-AV pairs are not supported (no AV following AV class)".into(),
            )),
            _ => Err(Error::Data(format!("unknown pair class {s:?}"))),
        }
    }
}

/// One sampled instant of a lead/follower pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub lead_pos: f64,
    pub foll_pos: f64,
    pub lead_speed: f64,
    pub foll_speed: f64,
    pub lead_accel: f64,
    pub foll_accel: f64,
    pub lead_jerk: f64,
    pub foll_jerk: f64,
    /// `lead_pos - foll_pos`, meters.
    pub spacing: f64,
    /// `foll_speed - lead_speed`; positive means the follower is closing in.
    pub speed_diff: f64,
}

impl TrajectoryPoint {
    /// A point with positions and speeds set and every derived field
    /// computed or marked missing (NaN).
    pub fn new(t: f64, lead_pos: f64, foll_pos: f64, lead_speed: f64, foll_speed: f64) -> Self {
        TrajectoryPoint {
            t,
            lead_pos,
            foll_pos,
            lead_speed,
            foll_speed,
            lead_accel: f64::NAN,
            foll_accel: f64::NAN,
            lead_jerk: f64::NAN,
            foll_jerk: f64::NAN,
            spacing: lead_pos - foll_pos,
            speed_diff: foll_speed - lead_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair {
    pub pair_id: String,
    pub class: PairClass,
    /// Contiguous segment index; non-zero only after the spacing filter
    /// split the pair.
    pub segment: u32,
    /// Whether accelerations came from the source instead of differencing.
    pub accel_observed: bool,
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectoryPair {
    pub fn new(pair_id: impl Into<String>, class: PairClass, points: Vec<TrajectoryPoint>) -> Self {
        TrajectoryPair {
            pair_id: pair_id.into(),
            class,
            segment: 0,
            accel_observed: false,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
