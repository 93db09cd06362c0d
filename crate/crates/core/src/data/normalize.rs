use std::fmt::Write as _;
use std::path::Path;

use super::{Window, CHANNELS};
use crate::error::{Error, Result};

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["spacing", "lead_speed", "speed_diff"];

/// Per-channel min–max scaling to `[0, 1]`, fit on training windows only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    pub channels: [(f64, f64); CHANNELS],
    pub target: (f64, f64),
}

fn scale(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (x - lo) / (hi - lo)
}

fn unscale(y: f64, (lo, hi): (f64, f64)) -> f64 {
    y * (hi - lo) + lo
}

impl NormalizationSpec {
    pub fn fit(train: &[Window]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot fit normalization on an empty training set".into()));
        }
        let mut channels = [(f64::INFINITY, f64::NEG_INFINITY); CHANNELS];
        let mut target = (f64::INFINITY, f64::NEG_INFINITY);
        for w in train {
            for (i, &x) in w.features.iter().enumerate() {
                let c = &mut channels[i % CHANNELS];
                c.0 = c.0.min(x);
                c.1 = c.1.max(x);
            }
            target.0 = target.0.min(w.target);
            target.1 = target.1.max(w.target);
        }
        let spec = NormalizationSpec { channels, target };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        for (name, &(lo, hi)) in CHANNEL_NAMES.iter().zip(&self.channels) {
            if !(hi > lo) {
                return Err(Error::Data(format!("constant channel {name}: min {lo} = max {hi}")));
            }
        }
        let (lo, hi) = self.target;
        if !(hi > lo) {
            return Err(Error::Data(format!("constant channel target: min {lo} = max {hi}")));
        }
        Ok(())
    }

    pub fn apply_feature(&self, channel: usize, x: f64) -> f64 {
        scale(x, self.channels[channel])
    }

    pub fn invert_feature(&self, channel: usize, y: f64) -> f64 {
        unscale(y, self.channels[channel])
    }

    /// Scales a time-major feature row in place.
    pub fn apply_features(&self, row: &mut [f64]) {
        for (i, x) in row.iter_mut().enumerate() {
            *x = scale(*x, self.channels[i % CHANNELS]);
        }
    }

    pub fn apply_target(&self, v: f64) -> f64 {
        scale(v, self.target)
    }

    pub fn invert_target(&self, y: f64) -> f64 {
        unscale(y, self.target)
    }

    pub fn target_range(&self) -> f64 {
        self.target.1 - self.target.0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# dcf normalization (min,max per channel)\n");
        for (name, (lo, hi)) in CHANNEL_NAMES.iter().zip(&self.channels) {
            let _ = writeln!(s, "channel.{name} = {lo:e},{hi:e}");
        }
        let _ = writeln!(s, "target.foll_speed = {:e},{:e}", self.target.0, self.target.1);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut channels = [None; CHANNELS];
        let mut target = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad normalization line {line:?}")))?;
            let (lo, hi) = value
                .trim()
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad range {value:?}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number {s:?}")))
            };
            let range = (parse(lo)?, parse(hi)?);
            match key.trim() {
                "target.foll_speed" => target = Some(range),
                k => {
                    let name = k
                        .strip_prefix("channel.")
                        .ok_or_else(|| Error::Format(format!("unknown key {k:?}")))?;
                    let idx = CHANNEL_NAMES
                        .iter()
                        .position(|n| *n == name)
                        .ok_or_else(|| Error::Format(format!("unknown channel {name:?}")))?;
                    channels[idx] = Some(range);
                }
            }
        }
        let mut out = [(0.0, 0.0); CHANNELS];
        for (i, c) in channels.iter().enumerate() {
            out[i] = c.ok_or_else(|| Error::Format(format!("missing channel {}", CHANNEL_NAMES[i])))?;
        }
        let spec = NormalizationSpec {
            channels: out,
            target: target.ok_or_else(|| Error::Format("missing target range".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairClass;
    use proptest::prelude::*;

    fn window(features: Vec<f64>, target: f64) -> Window {
        Window {
            features,
            target,
            pair_id: "p".into(),
            class: PairClass::HdvHdv,
            segment: 0,
            t_end: 0.0,
        }
    }

    fn spec_0_20() -> NormalizationSpec {
        NormalizationSpec {
            channels: [(0.0, 20.0); 3],
            target: (0.0, 20.0),
        }
    }

    #[test]
    fn linear_map() {
        let s = spec_0_20();
        assert_eq!(s.apply_feature(0, 20.0), 1.0);
        assert_eq!(s.apply_feature(1, 5.0), 0.25);
        assert_eq!(s.apply_target(0.0), 0.0);
    }

    #[test]
    fn fit_uses_all_steps() {
        let w = vec![
            window(vec![1.0, 2.0, -1.0, 5.0, 3.0, 1.0], 4.0),
            window(vec![2.0, 0.0, 0.0, 3.0, 9.0, 2.0], 7.0),
        ];
        let s = NormalizationSpec::fit(&w).unwrap();
        assert_eq!(s.channels, [(1.0, 5.0), (0.0, 9.0), (-1.0, 2.0)]);
        assert_eq!(s.target, (4.0, 7.0));
    }

    #[test]
    fn constant_channel_is_named() {
        let w = vec![window(vec![1.0, 2.0, 3.0], 4.0), window(vec![2.0, 2.0, 1.0], 5.0)];
        let err = NormalizationSpec::fit(&w).unwrap_err().to_string();
        assert!(err.contains("lead_speed"), "{err}");
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = NormalizationSpec {
            channels: [(0.1, 49.99), (0.0, 1.0 / 3.0), (-7.25, 6.5)],
            target: (0.0, 19.123456789012345),
        };
        assert_eq!(NormalizationSpec::from_text(&s.to_text()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            lo in -100.0..100.0f64,
            width in 0.01..200.0f64,
            xs in proptest::collection::vec(-1.0..2.0f64, 1000)
        ) {
            let s = NormalizationSpec { channels: [(lo, lo + width); 3], target: (lo, lo + width) };
            for (i, u) in xs.iter().enumerate() {
                let x = lo + u * width;
                let back = s.invert_feature(i % 3, s.apply_feature(i % 3, x));
                prop_assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0));
                let back = s.invert_target(s.apply_target(x));
                prop_assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }
}
