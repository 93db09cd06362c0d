use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{closed_loop_rollout, rmse, rmse_by_group, rmse_by_pair, Metering, SpeedModel, WARMUP_STEPS};
use crate::data::{PairClass, TrajectoryPair, Window};
use crate::error::Result;

/// Closed-loop minimum TTC over the pairs of one class. TTC values are in
/// seconds; `None` stands for +inf (the follower never closed in).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtcSummary {
    pub pairs: usize,
    pub collisions: usize,
    pub min: Option<f64>,
    /// Median over pairs of each pair's minimum TTC.
    pub median: Option<f64>,
}

impl TtcSummary {
    fn of(mut minima: Vec<f64>, collisions: usize) -> Self {
        minima.sort_by(f64::total_cmp);
        let finite = |x: f64| x.is_finite().then_some(x);
        let median = if minima.is_empty() {
            None
        } else {
            let n = minima.len();
            let m = if n % 2 == 1 {
                minima[n / 2]
            } else {
                0.5 * (minima[n / 2 - 1] + minima[n / 2])
            };
            finite(m)
        };
        TtcSummary {
            pairs: minima.len(),
            collisions,
            min: minima.first().copied().and_then(finite),
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub name: String,
    /// m/s.
    pub overall_rmse: f64,
    pub rmse_by_class: BTreeMap<String, Option<f64>>,
    pub min_ttc_by_class: BTreeMap<String, TtcSummary>,
    pub multiply_adds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub pair_id: String,
    pub class: PairClass,
    /// One RMSE per model, in report model order.
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputeRow {
    pub model: String,
    pub metering: Metering,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub models: Vec<ModelReport>,
    pub pairs: Vec<PairRow>,
    pub warnings: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    /// One-step RMSE on `windows` and closed-loop rollouts on `pairs` for
    /// every model.
    pub fn build(models: &[&dyn SpeedModel], windows: &[Window], pairs: &[TrajectoryPair]) -> Result<Self> {
        let mut warnings = Vec::new();
        let usable: Vec<&TrajectoryPair> = pairs
            .iter()
            .filter(|p| {
                let ok = p.len() > WARMUP_STEPS;
                if !ok {
                    warnings.push(format!("pair {} segment {}: too short for a rollout", p.pair_id, p.segment));
                }
                ok
            })
            .collect();

        let mut reports = Vec::with_capacity(models.len());
        let mut per_pair: Vec<BTreeMap<String, (PairClass, f64)>> = Vec::with_capacity(models.len());
        for m in models {
            let preds = m.predict(windows)?;
            let by_class = rmse_by_group(&preds, windows)?;
            for (class, v) in &by_class {
                if v.is_none() {
                    warnings.push(format!("{}: no {class} windows for RMSE", m.name()));
                }
            }
            let targets: Vec<f64> = windows.iter().map(|w| w.target).collect();
            let overall = rmse(&preds, &targets)?;
            per_pair.push(rmse_by_pair(&preds, windows)?);

            let rollouts: Vec<(PairClass, f64, bool)> = usable
                .par_iter()
                .map(|pair| {
                    let r = closed_loop_rollout(pair, None, |_, w| Ok(m.predict(std::slice::from_ref(w))?[0]))?;
                    Ok((pair.class, r.min_ttc, r.collision))
                })
                .collect::<Result<_>>()?;
            let mut ttc = BTreeMap::new();
            for class in PairClass::ALL {
                let of: Vec<&(PairClass, f64, bool)> = rollouts.iter().filter(|r| r.0 == class).collect();
                if of.is_empty() {
                    continue;
                }
                let collisions = of.iter().filter(|r| r.2).count();
                ttc.insert(class.label().to_string(), TtcSummary::of(of.iter().map(|r| r.1).collect(), collisions));
            }
            reports.push(ModelReport {
                name: m.name().to_string(),
                overall_rmse: overall,
                rmse_by_class: by_class.into_iter().map(|(c, v)| (c.label().to_string(), v)).collect(),
                min_ttc_by_class: ttc,
                multiply_adds: m.multiply_adds(),
            });
        }

        let mut rows = Vec::new();
        if let Some(first) = per_pair.first() {
            for (id, (class, _)) in first {
                rows.push(PairRow {
                    pair_id: id.clone(),
                    class: *class,
                    rmse: per_pair.iter().map(|m| m[id].1).collect(),
                });
            }
        }
        Ok(EvalReport {
            models: reports,
            pairs: rows,
            warnings,
        })
    }

    /// `model,class,rmse` rows.
    pub fn rmse_by_class_csv(&self) -> String {
        let mut out = String::from("model,class,rmse\n");
        for m in &self.models {
            for (c, v) in &m.rmse_by_class {
                let _ = writeln!(out, "{},{},{}", m.name, c, fmt_opt(*v));
            }
        }
        out
    }

    /// Per-pair RMSE, one column per model.
    pub fn pair_table_csv(&self) -> String {
        let mut out = String::from("pair,pair_group");
        for m in &self.models {
            out.push(',');
            out.push_str(&m.name);
        }
        out.push('\n');
        for r in &self.pairs {
            let _ = write!(out, "{},{}", r.pair_id, r.class);
            for v in &r.rmse {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }

    /// Minimum TTC per model and class; an empty cell is +inf.
    pub fn min_ttc_csv(&self) -> String {
        let mut out = String::from("model,class,pairs,collisions,min_ttc,median_min_ttc\n");
        for m in &self.models {
            for (c, s) in &m.min_ttc_by_class {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    m.name,
                    c,
                    s.pairs,
                    s.collisions,
                    fmt_opt(s.min),
                    fmt_opt(s.median)
                );
            }
        }
        out
    }
}

/// Compute metering rows as CSV.
pub fn compute_csv(rows: &[ComputeRow]) -> String {
    let mut out = String::from("model,multiply_adds,batch,repetitions,median_ms_per_10k,iqr_ms_per_10k\n");
    for r in rows {
        let m = &r.metering;
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6}",
            r.model, m.multiply_adds, m.batch, m.repetitions, m.median_ms_per_10k, m.iqr_ms_per_10k
        );
    }
    out
}
