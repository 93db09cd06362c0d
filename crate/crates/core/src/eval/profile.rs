use std::fmt::Write as _;

use serde::Serialize;

use super::SpeedModel;
use crate::data::{make_windows, TrajectoryPair, DT, HISTORY_SECONDS};
use crate::error::{Error, Result};

/// Observed and one-step predicted follower speed for one pair and model, on
/// the pair's own time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedSeries {
    pub pair_id: String,
    pub segment: u32,
    pub model: String,
    pub t: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl SpeedSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,observed,predicted\n");
        for i in 0..self.t.len() {
            let _ = writeln!(out, "{},{},{}", self.t[i], self.observed[i], self.predicted[i]);
        }
        out
    }
}

/// One series per pair and model, pair-major.
pub fn speed_profile_export(models: &[&dyn SpeedModel], pairs: &[TrajectoryPair]) -> Result<Vec<SpeedSeries>> {
    let mut out = Vec::with_capacity(models.len() * pairs.len());
    for pair in pairs {
        let windows = make_windows(std::slice::from_ref(pair), HISTORY_SECONDS, DT)?;
        let mut t = Vec::with_capacity(windows.len());
        let mut observed = Vec::with_capacity(windows.len());
        for w in &windows {
            let i = pair
                .points
                .binary_search_by(|p| p.t.total_cmp(&w.t_end))
                .map_err(|_| Error::Data(format!("pair {}: window end {} off the time grid", pair.pair_id, w.t_end)))?;
            t.push(pair.points[i + 1].t);
            observed.push(pair.points[i + 1].foll_speed);
        }
        for m in models {
            out.push(SpeedSeries {
                pair_id: pair.pair_id.clone(),
                segment: pair.segment,
                model: m.name().to_string(),
                t: t.clone(),
                observed: observed.clone(),
                predicted: m.predict(&windows)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PairClass, Window};
    use crate::gipps::{generate_synthetic_dataset, ScenarioPreset};

    struct Constant(&'static str, f64);

    impl SpeedModel for Constant {
        fn name(&self) -> &str {
            self.0
        }

        fn predict(&self, windows: &[Window]) -> Result<Vec<f64>> {
            Ok(vec![self.1; windows.len()])
        }
    }

    #[test]
    fn series_count_and_alignment() {
        let pairs = generate_synthetic_dataset(&[ScenarioPreset::for_class(PairClass::HdvHdv)], 2, 1).unwrap();
        let ms = [Constant("a", 1.0), Constant("b", 2.0), Constant("c", 3.0), Constant("d", 4.0)];
        let refs: Vec<&dyn SpeedModel> = ms.iter().map(|m| m as &dyn SpeedModel).collect();
        let series = speed_profile_export(&refs, &pairs).unwrap();
        assert_eq!(series.len(), 8);
        for s in &series {
            let pair = pairs.iter().find(|p| p.pair_id == s.pair_id).unwrap();
            assert_eq!(s.t.len(), pair.len() - 10);
            for (k, t) in s.t.iter().enumerate() {
                assert_eq!(*t, pair.points[k + 10].t);
                assert_eq!(s.observed[k], pair.points[k + 10].foll_speed);
            }
        }
        assert!(series[1].to_csv().lines().nth(1).unwrap().ends_with(",2"));
    }
}
