use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate_mse, train_network, Encoded, TeacherSignal, TrainConfig};
use crate::data::Window;
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::seed;

/// One expanding-window fold over a time-ordered index sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// Expanding-window folds: the sequence is cut into `k + 1` slices and fold
/// `i` trains on slices `0..=i` and validates on slice `i + 1`. Leftover
/// items from an uneven division go to the first training slice.
pub fn timeseries_cv(n: usize, k: usize) -> Result<Vec<Fold>> {
    if k == 0 {
        return Err(Error::Config("cross-validation needs at least one fold".into()));
    }
    if n < k + 1 {
        return Err(Error::Data(format!("{n} windows cannot form {k} time-series folds")));
    }
    let size = n / (k + 1);
    Ok((0..k)
        .map(|i| {
            let end = n - (k - i - 1) * size;
            Fold {
                train: 0..end - size,
                validation: end - size..end,
            }
        })
        .collect())
}

/// Indices of `windows` sorted by end time, ties by pair and segment.
pub fn time_order(windows: &[Window]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.sort_by(|&a, &b| {
        let (wa, wb) = (&windows[a], &windows[b]);
        wa.t_end
            .total_cmp(&wb.t_end)
            .then_with(|| wa.pair_id.cmp(&wb.pair_id))
            .then(wa.segment.cmp(&wb.segment))
    });
    idx
}

/// Ranges sampled by random search. Integer ranges are inclusive; the
/// learning rate is sampled log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    pub epochs: (usize, usize),
    /// One range per hidden layer.
    pub widths: Vec<(usize, usize)>,
    pub learning_rate: (f64, f64),
    pub batch_size: (usize, usize),
    pub dropout: (f64, f64),
    pub budget: usize,
    pub folds: usize,
}

impl SearchSpace {
    pub fn teacher() -> Self {
        SearchSpace {
            epochs: (2, 12),
            widths: vec![(16, 512), (8, 128)],
            learning_rate: (1e-4, 1e-1),
            batch_size: (32, 256),
            dropout: (0.0, 0.5),
            budget: 20,
            folds: 3,
        }
    }

    pub fn student() -> Self {
        SearchSpace {
            epochs: (2, 10),
            widths: vec![(8, 128), (8, 128)],
            dropout: (0.0, 0.0),
            ..Self::teacher()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("search space: {what}")));
        if self.budget == 0 {
            return bad("budget must be >= 1");
        }
        if self.folds == 0 {
            return bad("folds must be >= 1");
        }
        if self.epochs.0 == 0 || self.epochs.0 > self.epochs.1 {
            return bad("invalid epoch range");
        }
        if self.widths.is_empty() || self.widths.iter().any(|&(lo, hi)| lo == 0 || lo > hi) {
            return bad("invalid width range");
        }
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
            return bad("invalid learning-rate range");
        }
        if self.batch_size.0 == 0 || self.batch_size.0 > self.batch_size.1 {
            return bad("invalid batch-size range");
        }
        let (dl, dh) = self.dropout;
        if !(0.0..1.0).contains(&dl) || !(0.0..1.0).contains(&dh) || dl > dh {
            return bad("dropout range must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Candidate {
        let (lo, hi) = self.learning_rate;
        let lr = if lo == hi { lo } else { (rng.random_range(lo.ln()..hi.ln())).exp() };
        let dropout = if self.dropout.0 == self.dropout.1 {
            self.dropout.0
        } else {
            rng.random_range(self.dropout.0..self.dropout.1)
        };
        Candidate {
            epochs: rng.random_range(self.epochs.0..=self.epochs.1),
            widths: self.widths.iter().map(|&(a, b)| rng.random_range(a..=b)).collect(),
            learning_rate: lr,
            batch_size: rng.random_range(self.batch_size.0..=self.batch_size.1),
            dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub epochs: usize,
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
}

impl Candidate {
    /// `base` with this candidate's widths and optimizer settings. Dropout
    /// only applies to recurrent networks.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match &mut cfg.spec {
            NetworkSpec::Mlp(m) => m.hidden = self.widths.clone(),
            NetworkSpec::Lstm(l) => {
                l.layers = self.widths.clone();
                l.dropout = self.dropout;
            }
        }
        cfg.optimizer.epochs = self.epochs;
        cfg.optimizer.learning_rate = self.learning_rate;
        cfg.optimizer.batch_size = self.batch_size;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub best: Candidate,
    pub best_score: f64,
    /// Every sampled candidate with its score, in sampling order.
    pub trials: Vec<(Candidate, f64)>,
}

/// Samples `space.budget` candidates and returns the one with the lowest
/// objective; ties keep the earlier sample. A candidate whose training
/// diverges scores `+inf`.
pub fn random_search<F>(space: &SearchSpace, seed_value: u64, objective: F) -> Result<SearchResult>
where
    F: Fn(&Candidate) -> Result<f64> + Sync,
{
    space.validate()?;
    let mut rng = seed::rng(seed::derive(seed_value, "search"));
    let candidates: Vec<Candidate> = (0..space.budget).map(|_| space.sample(&mut rng)).collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| match objective(c) {
            Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
            other => other,
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(SearchResult {
        best: candidates[best].clone(),
        best_score: scores[best],
        trials: candidates.into_iter().zip(scores).collect(),
    })
}

/// Mean validation MSE of `config` over expanding-window folds of `data`,
/// whose rows must already be in time order.
pub fn cv_score(config: &TrainConfig, data: &Encoded, folds: usize) -> Result<f64> {
    let splits = timeseries_cv(data.len(), folds)?;
    let mut total = 0.0;
    for fold in &splits {
        let train: Vec<usize> = fold.train.clone().collect();
        let val: Vec<usize> = fold.validation.clone().collect();
        let trained = train_network(config, &data.subset(&train), None, TeacherSignal::None, 1.0)?;
        total += evaluate_mse(&trained.weights, &data.subset(&val))?;
    }
    Ok(total / splits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PairClass;
    use crate::nn::MlpSpec;

    #[test]
    fn forty_windows_three_folds() {
        let folds = timeseries_cv(40, 3).unwrap();
        let bounds: Vec<(usize, usize)> = folds.iter().map(|f| (f.train.end, f.validation.end)).collect();
        assert_eq!(bounds, vec![(10, 20), (20, 30), (30, 40)]);
        assert!(folds.iter().all(|f| f.train.start == 0 && f.validation.start == f.train.end));
    }

    #[test]
    fn uneven_division_and_errors() {
        let folds = timeseries_cv(43, 3).unwrap();
        assert_eq!(folds[0].train, 0..13);
        assert_eq!(folds[2].validation, 33..43);
        assert!(timeseries_cv(3, 3).is_err());
        assert!(timeseries_cv(4, 3).is_ok());
        assert!(timeseries_cv(10, 0).is_err());
    }

    fn window(pair: &str, t: f64) -> Window {
        Window {
            features: vec![0.0; 30],
            target: 0.0,
            pair_id: pair.into(),
            class: PairClass::HdvHdv,
            segment: 0,
            t_end: t,
        }
    }

    #[test]
    fn validation_strictly_after_training() {
        let mut windows = Vec::new();
        for p in ["b", "a", "c"] {
            for i in 0..23 {
                windows.push(window(p, 0.9 + i as f64 * 0.1));
            }
        }
        let order = time_order(&windows);
        for f in timeseries_cv(order.len(), 3).unwrap() {
            let max_train = f.train.clone().max().unwrap();
            let min_val = f.validation.clone().min().unwrap();
            assert!(max_train < min_val);
            let last_train = &windows[order[max_train]];
            let first_val = &windows[order[min_val]];
            assert!(last_train.t_end <= first_val.t_end);
        }
    }

    #[test]
    fn samples_stay_in_range() {
        let space = SearchSpace::teacher();
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let c = space.sample(&mut rng);
            assert!((1e-4..=1e-1).contains(&c.learning_rate));
            assert!((16..=512).contains(&c.widths[0]) && (8..=128).contains(&c.widths[1]));
            assert!((0.0..0.5).contains(&c.dropout));
            assert!((32..=256).contains(&c.batch_size));
        }
    }

    #[test]
    fn budget_one_returns_the_sample() {
        let space = SearchSpace {
            budget: 1,
            ..SearchSpace::student()
        };
        let r = random_search(&space, 4, |c| Ok(c.learning_rate)).unwrap();
        let expected = space.sample(&mut seed::rng(seed::derive(4, "search")));
        assert_eq!(r.best, expected);
        assert_eq!(r.trials.len(), 1);
    }

    #[test]
    fn search_minimizes_objective() {
        let space = SearchSpace::student();
        let r = random_search(&space, 9, |c| Ok((c.learning_rate.ln() - 0.01f64.ln()).abs())).unwrap();
        let min = r.trials.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_score, min);
        assert_eq!(r.trials.len(), 20);
        let again = random_search(&space, 9, |c| Ok((c.learning_rate.ln() - 0.01f64.ln()).abs())).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn divergent_candidates_score_infinite() {
        let space = SearchSpace {
            budget: 3,
            ..SearchSpace::student()
        };
        let r = random_search(&space, 1, |_| Err(Error::Divergence { epoch: 1, batch: 1 })).unwrap();
        assert!(r.best_score.is_infinite());
        assert!(random_search(&space, 1, |_| Err(Error::Data("x".into()))).is_err());
    }

    #[test]
    fn cv_score_runs() {
        use ndarray::Array2;
        let x = Array2::from_shape_fn((80, 30), |(i, j)| ((i + j) % 7) as f64 / 7.0);
        let y = (0..80).map(|i| (i % 7) as f64 / 7.0).collect();
        let data = Encoded { x, y, target_scale: 1.0 };
        let cfg = TrainConfig {
            spec: NetworkSpec::Mlp(MlpSpec {
                hidden: vec![4],
                ..MlpSpec::student()
            }),
            optimizer: crate::nn::OptimizerSpec::adam(0.01, 16, 2),
            seed: 1,
        };
        let s = cv_score(&cfg, &data, 3).unwrap();
        assert!(s.is_finite() && s >= 0.0);
    }
}
