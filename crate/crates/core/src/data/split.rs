use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{PairClass, Window};
use crate::error::{Error, Result};
use crate::seed;

/// Train / validation / test fractions by window mass.
pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

impl SplitRole {
    pub fn label(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Validation => "validation",
            SplitRole::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train" => Some(SplitRole::Train),
            "validation" => Some(SplitRole::Validation),
            "test" => Some(SplitRole::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Window>,
    pub validation: Vec<Window>,
    pub test: Vec<Window>,
    /// Role of every pair id.
    pub assignment: BTreeMap<String, SplitRole>,
}

impl DatasetSplit {
    pub fn role(&self, role: SplitRole) -> &[Window] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Validation => &self.validation,
            SplitRole::Test => &self.test,
        }
    }
}

/// Partitions pairs (never windows) 60/20/20 by window mass, stratified by
/// class. Deterministic under `seed`.
pub fn split_dataset(windows: &[Window], seed: u64) -> Result<DatasetSplit> {
    let mut mass: BTreeMap<PairClass, BTreeMap<&str, usize>> = BTreeMap::new();
    for w in windows {
        *mass.entry(w.class).or_default().entry(&w.pair_id).or_insert(0) += 1;
    }
    for class in PairClass::ALL {
        let n = mass.get(&class).map_or(0, BTreeMap::len);
        if n < 3 {
            return Err(Error::Data(format!(
                "class {class} has {n} pairs with windows; at least 3 are needed to split"
            )));
        }
    }

    let (f_train, f_val, _) = SPLIT_FRACTIONS;
    let mut assignment = BTreeMap::new();
    for (class, pairs) in &mass {
        let mut ids: Vec<(&str, usize)> = pairs.iter().map(|(k, v)| (*k, *v)).collect();
        let mut rng = seed::rng(seed::derive(seed, class.label()));
        ids.shuffle(&mut rng);
        let total: usize = ids.iter().map(|(_, n)| n).sum();
        let mut roles = Vec::with_capacity(ids.len());
        let mut cum = 0usize;
        for (_, n) in &ids {
            let mid = (cum as f64 + *n as f64 / 2.0) / total as f64;
            cum += n;
            roles.push(if mid < f_train {
                SplitRole::Train
            } else if mid < f_train + f_val {
                SplitRole::Validation
            } else {
                SplitRole::Test
            });
        }
        fill_empty_roles(&mut roles);
        for ((id, _), role) in ids.iter().zip(roles) {
            assignment.insert(id.to_string(), role);
        }
    }
    apply_assignment(windows, assignment)
}

/// With at least three pairs every role gets one: an empty role takes the
/// last pair of the neighbouring role that has more than one.
fn fill_empty_roles(roles: &mut [SplitRole]) {
    let count = |roles: &[SplitRole], r| roles.iter().filter(|x| **x == r).count();
    for target in [SplitRole::Test, SplitRole::Validation] {
        if count(roles, target) == 0 {
            let donor = [SplitRole::Train, SplitRole::Validation, SplitRole::Test]
                .into_iter()
                .filter(|d| *d != target && count(roles, *d) > 1)
                .max_by_key(|d| count(roles, *d));
            if let Some(d) = donor {
                if let Some(pos) = roles.iter().rposition(|r| *r == d) {
                    roles[pos] = target;
                }
            }
        }
    }
    if count(roles, SplitRole::Train) == 0 {
        if let Some(pos) = roles.iter().position(|r| *r == SplitRole::Validation) {
            roles[pos] = SplitRole::Train;
        }
    }
}

/// Rebuilds a split from a stored pair-to-role assignment.
pub fn apply_assignment(windows: &[Window], assignment: BTreeMap<String, SplitRole>) -> Result<DatasetSplit> {
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        assignment,
    };
    for w in windows {
        let role = *split
            .assignment
            .get(&w.pair_id)
            .ok_or_else(|| Error::Data(format!("pair {} has no split assignment", w.pair_id)))?;
        match role {
            SplitRole::Train => split.train.push(w.clone()),
            SplitRole::Validation => split.validation.push(w.clone()),
            SplitRole::Test => split.test.push(w.clone()),
        }
    }
    Ok(split)
}
