use super::TrajectoryPair;
use crate::error::{Error, Result};

/// Central differences on a possibly non-uniform grid, one-sided at the ends.
fn difference(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let (lo, hi) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (y[hi] - y[lo]) / (t[hi] - t[lo])
        })
        .collect()
}

/// Fills spacing, speed difference, and (where not observed) acceleration;
/// jerk is always the difference of acceleration.
pub fn derive_kinematics(pair: &TrajectoryPair) -> Result<TrajectoryPair> {
    if pair.points.len() < 3 {
        return Err(Error::Data(format!(
            "pair {}: {} points, need at least 3 to difference",
            pair.pair_id,
            pair.points.len()
        )));
    }
    let mut out = pair.clone();
    let t: Vec<f64> = pair.points.iter().map(|p| p.t).collect();
    if !pair.accel_observed {
        let lead: Vec<f64> = pair.points.iter().map(|p| p.lead_speed).collect();
        let foll: Vec<f64> = pair.points.iter().map(|p| p.foll_speed).collect();
        let (la, fa) = (difference(&t, &lead), difference(&t, &foll));
        for (p, (l, f)) in out.points.iter_mut().zip(la.into_iter().zip(fa)) {
            p.lead_accel = l;
            p.foll_accel = f;
        }
    }
    let lead_a: Vec<f64> = out.points.iter().map(|p| p.lead_accel).collect();
    let foll_a: Vec<f64> = out.points.iter().map(|p| p.foll_accel).collect();
    let (lj, fj) = (difference(&t, &lead_a), difference(&t, &foll_a));
    for (p, (l, f)) in out.points.iter_mut().zip(lj.into_iter().zip(fj)) {
        p.lead_jerk = l;
        p.foll_jerk = f;
        p.spacing = p.lead_pos - p.foll_pos;
        p.speed_diff = p.foll_speed - p.lead_speed;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PairClass, TrajectoryPoint};

    fn pair_from_speeds(speeds: &[f64]) -> TrajectoryPair {
        let points = speeds
            .iter()
            .enumerate()
            .map(|(i, &v)| TrajectoryPoint::new(i as f64 * 0.1, 100.0, 0.0, 10.0, v))
            .collect();
        TrajectoryPair::new("p", PairClass::HdvHdv, points)
    }

    #[test]
    fn constant_speed_has_zero_accel_and_jerk() {
        let d = derive_kinematics(&pair_from_speeds(&[10.0; 20])).unwrap();
        for p in &d.points {
            assert_eq!(p.foll_accel, 0.0);
            assert_eq!(p.foll_jerk, 0.0);
            assert_eq!(p.lead_accel, 0.0);
        }
    }

    #[test]
    fn linear_ramp_has_unit_accel() {
        let speeds: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let d = derive_kinematics(&pair_from_speeds(&speeds)).unwrap();
        for p in &d.points[1..29] {
            assert!((p.foll_accel - 1.0).abs() < 1e-9, "{}", p.foll_accel);
        }
        for p in &d.points[2..28] {
            assert!(p.foll_jerk.abs() < 1e-6, "{}", p.foll_jerk);
        }
    }

    #[test]
    fn speed_difference_is_follower_minus_lead() {
        let mut pair = pair_from_speeds(&[8.0; 5]);
        for p in &mut pair.points {
            p.speed_diff = 0.0;
        }
        let d = derive_kinematics(&pair).unwrap();
        assert!(d.points.iter().all(|p| p.speed_diff == -2.0));
    }

    #[test]
    fn too_short_to_difference() {
        assert!(derive_kinematics(&pair_from_speeds(&[1.0, 2.0])).is_err());
    }
}
