//! Descriptive statistics of car-following behaviour: spacing-binned speed
//! variability, skewness and kurtosis, one-way ANOVA between pair classes,
//! and time-to-collision summaries.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::{PairClass, TrajectoryPair, TrajectoryPoint};
use crate::error::{Error, Result};

/// Default bin edges for the speed-variability and moment tables, meters.
pub const VARIABILITY_EDGES: [f64; 5] = [5.0, 15.0, 25.0, 35.0, 45.0];
/// Default spacing categories for the class comparison table, meters.
pub const CATEGORY_EDGES: [f64; 4] = [0.0, 10.0, 15.0, 30.0];

/// Spacing bins `(e[i], e[i+1]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingBins {
    edges: Vec<f64>,
}

impl SpacingBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("spacing bins need at least 2 edges".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!("spacing bin edges must increase strictly: {edges:?}")));
        }
        Ok(SpacingBins { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bin_of(&self, spacing: f64) -> Option<usize> {
        (0..self.len()).find(|&i| spacing > self.edges[i] && spacing <= self.edges[i + 1])
    }

    pub fn label(&self, bin: usize) -> String {
        format!("({},{}]", self.edges[bin], self.edges[bin + 1])
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Population central moments m2, m3, m4.
fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

fn degenerate_variance(xs: &[f64], m2: f64) -> bool {
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    m2 <= (scale * 1e-14).powi(2)
}

/// Fisher–Pearson skewness `m3 / m2^1.5`, no bias correction.
pub fn skewness(xs: &[f64]) -> Result<f64> {
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!("skewness needs n >= 3, got {}", xs.len())));
    }
    let (m2, m3, _) = central_moments(xs);
    if degenerate_variance(xs, m2) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

/// Excess kurtosis `m4 / m2^2 - 3`, no bias correction.
pub fn kurtosis(xs: &[f64]) -> Result<f64> {
    if xs.len() < 4 {
        return Err(Error::Degenerate(format!("kurtosis needs n >= 4, got {}", xs.len())));
    }
    let (m2, _, m4) = central_moments(xs);
    if degenerate_variance(xs, m2) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("ANOVA needs at least 2 groups, got {k}")));
    }
    if let Some(g) = groups.iter().find(|g| g.as_ref().len() < 2) {
        return Err(Error::Degenerate(format!(
            "every ANOVA group needs n >= 2, one has {}",
            g.as_ref().len()
        )));
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n <= k {
        return Err(Error::Degenerate("ANOVA needs more observations than groups".into()));
    }
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let g = g.as_ref();
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let (df_b, df_w) = (k - 1, n - k);
    let scale = groups
        .iter()
        .flat_map(|g| g.as_ref())
        .fold(0.0f64, |a, x| a.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let negligible = |ss: f64| ss <= n as f64 * (scale * 1e-14).powi(2);
    let (f, p) = match (negligible(ssb), negligible(ssw)) {
        (true, true) => (0.0, 1.0),
        (false, true) => (f64::INFINITY, 0.0),
        _ => {
            let f = (ssb / df_b as f64) / (ssw / df_w as f64);
            (f, f_upper_tail(f, df_b as f64, df_w as f64))
        }
    };
    Ok(AnovaResult {
        f,
        p,
        df_between: df_b,
        df_within: df_w,
    })
}

/// Time to collision: spacing over closing speed when the follower is
/// closing in (`speed_diff > 0`), otherwise infinite.
pub fn ttc(spacing: f64, speed_diff: f64) -> Result<f64> {
    if spacing < 0.0 || spacing.is_nan() {
        return Err(Error::Data(format!("negative spacing {spacing} m")));
    }
    if speed_diff > 0.0 {
        Ok(spacing / speed_diff)
    } else {
        Ok(f64::INFINITY)
    }
}

/// Per-(class, bin) statistics of one variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub class: PairClass,
    pub bin: usize,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

impl GroupSummary {
    pub fn of(class: PairClass, bin: usize, xs: &[f64]) -> Self {
        GroupSummary {
            class,
            bin,
            n: xs.len(),
            mean: mean(xs),
            std: sample_std(xs),
            skewness: skewness(xs).ok(),
            kurtosis: kurtosis(xs).ok(),
        }
    }
}

/// The variable whose higher moments are tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentVariable {
    SpeedDiff,
    FollowerAccel,
}

impl MomentVariable {
    pub fn value(self, p: &TrajectoryPoint) -> f64 {
        match self {
            MomentVariable::SpeedDiff => p.speed_diff,
            MomentVariable::FollowerAccel => p.foll_accel,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MomentVariable::SpeedDiff => "speed_diff",
            MomentVariable::FollowerAccel => "foll_accel",
        }
    }
}

fn collect_cells<F>(pairs: &[TrajectoryPair], bins: &SpacingBins, value: F) -> Vec<Vec<Vec<f64>>>
where
    F: Fn(&TrajectoryPoint) -> Option<f64>,
{
    let mut cells = vec![vec![Vec::new(); bins.len()]; PairClass::ALL.len()];
    for pair in pairs {
        let row = &mut cells[usize::from(pair.class.code())];
        for p in &pair.points {
            if let (Some(b), Some(v)) = (bins.bin_of(p.spacing), value(p)) {
                row[b].push(v);
            }
        }
    }
    cells
}

fn summaries(cells: Vec<Vec<Vec<f64>>>) -> Vec<GroupSummary> {
    let mut out = Vec::new();
    for class in PairClass::ALL {
        for (bin, xs) in cells[usize::from(class.code())].iter().enumerate() {
            out.push(GroupSummary::of(class, bin, xs));
        }
    }
    out
}

/// Follower speed statistics per (class, spacing bin); `std` is the
/// speed variability.
pub fn speed_variability(pairs: &[TrajectoryPair], bins: &SpacingBins) -> Vec<GroupSummary> {
    summaries(collect_cells(pairs, bins, |p| Some(p.foll_speed)))
}

pub fn moment_table(pairs: &[TrajectoryPair], bins: &SpacingBins, variable: MomentVariable) -> Vec<GroupSummary> {
    summaries(collect_cells(pairs, bins, |p| {
        let v = variable.value(p);
        v.is_finite().then_some(v)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryRow {
    pub category: usize,
    pub class: PairClass,
    pub n: usize,
    pub mean_speed: Option<f64>,
    pub mean_accel: Option<f64>,
    /// Mean over finite TTC values only.
    pub mean_ttc: Option<f64>,
    pub n_finite_ttc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAnova {
    pub category: usize,
    pub variable: &'static str,
    pub result: Option<AnovaResult>,
}

/// Mean follower speed, acceleration and TTC per spacing category and
/// class, with one-way ANOVA across classes for each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassComparison {
    pub categories: SpacingBins,
    pub rows: Vec<CategoryRow>,
    pub anova: Vec<CategoryAnova>,
}

pub fn summarize_table1(pairs: &[TrajectoryPair], categories: &SpacingBins) -> Result<ClassComparison> {
    for pair in pairs {
        if let Some(p) = pair.points.iter().find(|p| p.spacing < 0.0) {
            return Err(Error::Data(format!("pair {}: negative spacing {}", pair.pair_id, p.spacing)));
        }
    }
    let speed = collect_cells(pairs, categories, |p| Some(p.foll_speed));
    let accel = collect_cells(pairs, categories, |p| p.foll_accel.is_finite().then_some(p.foll_accel));
    let ttcs = collect_cells(pairs, categories, |p| {
        ttc(p.spacing, p.speed_diff).ok().filter(|t| t.is_finite())
    });

    let mut rows = Vec::new();
    let mut anova = Vec::new();
    for cat in 0..categories.len() {
        for class in PairClass::ALL {
            let c = usize::from(class.code());
            rows.push(CategoryRow {
                category: cat,
                class,
                n: speed[c][cat].len(),
                mean_speed: mean(&speed[c][cat]),
                mean_accel: mean(&accel[c][cat]),
                mean_ttc: mean(&ttcs[c][cat]),
                n_finite_ttc: ttcs[c][cat].len(),
            });
        }
        for (name, cells) in [("foll_speed", &speed), ("foll_accel", &accel), ("ttc", &ttcs)] {
            let groups: Vec<&[f64]> = cells.iter().map(|row| row[cat].as_slice()).collect();
            anova.push(CategoryAnova {
                category: cat,
                variable: name,
                result: one_way_anova(&groups).ok(),
            });
        }
    }
    Ok(ClassComparison {
        categories: categories.clone(),
        rows,
        anova,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

pub fn summaries_csv(bins: &SpacingBins, rows: &[GroupSummary]) -> String {
    let mut s = String::from("class,bin,n,mean,std,skewness,kurtosis\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.class,
            bins.label(r.bin),
            r.n,
            opt(r.mean),
            opt(r.std),
            opt(r.skewness),
            opt(r.kurtosis)
        );
    }
    s
}

/// Plot data: bin midpoint, class, statistic.
pub fn plot_data(bins: &SpacingBins, rows: &[GroupSummary], stat: fn(&GroupSummary) -> Option<f64>) -> String {
    let mut s = String::from("bin_mid,class,value\n");
    for r in rows {
        if let Some(v) = stat(r) {
            let _ = writeln!(s, "{},{},{v}", bins.midpoint(r.bin), r.class);
        }
    }
    s
}

impl ClassComparison {
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("category,class,n,mean_speed,mean_accel,mean_ttc,n_finite_ttc\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.categories.label(r.category),
                r.class,
                r.n,
                opt(r.mean_speed),
                opt(r.mean_accel),
                opt(r.mean_ttc),
                r.n_finite_ttc
            );
        }
        s
    }

    pub fn anova_csv(&self) -> String {
        let mut s = String::from("category,variable,f,p,df_between,df_within\n");
        for a in &self.anova {
            let label = self.categories.label(a.category);
            match a.result {
                Some(r) => {
                    let _ = writeln!(s, "{label},{},{},{},{},{}", a.variable, r.f, r.p, r.df_between, r.df_within);
                }
                None => {
                    let _ = writeln!(s, "{label},{},,,,", a.variable);
                }
            }
        }
        s
    }
}
