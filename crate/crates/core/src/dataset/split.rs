use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split {other:?}"))),
        }
    }
}

/// Fire-level partition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, fire_id: &str) -> Option<Split> {
        Split::ALL
            .into_iter()
            .find(|s| self.ids(*s).iter().any(|f| f == fire_id))
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    /// Fire ids that appear in more than one split.
    pub fn leaks(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut dup: Vec<String> = Split::ALL
            .iter()
            .flat_map(|s| self.ids(*s))
            .filter(|id| !seen.insert(id.as_str()))
            .cloned()
            .collect();
        dup.sort();
        dup.dedup();
        dup
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRequest {
    /// Train/val/test fractions summing to one.
    Fractions([f64; 3]),
    Explicit(DatasetSplit),
}

/// Train/val/test fractions of 131/63/61 fires out of 255.
pub const REFERENCE_FRACTIONS: [f64; 3] = [0.514, 0.247, 0.239];

/// Largest-remainder apportionment; equal remainders go to the earlier split
/// in train, val, test order.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(-1e-12..=1.0 + 1e-12).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Dataset(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f.clamp(0.0, 1.0) * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    Ok(counts)
}

/// Deterministic split by fire. Ids are sorted, shuffled with `seed`, then
/// cut at the apportioned counts; each split is returned sorted.
pub fn make_splits(fire_ids: &[String], request: &SplitRequest, seed: u64) -> Result<DatasetSplit> {
    let mut ids: Vec<String> = fire_ids.to_vec();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Dataset("duplicate fire ids in manifest".into()));
    }
    match request {
        SplitRequest::Explicit(split) => {
            let leaks = split.leaks();
            if !leaks.is_empty() {
                return Err(Error::Dataset(format!("fires in more than one split: {}", leaks.join(", "))));
            }
            let listed: HashSet<&str> = Split::ALL.iter().flat_map(|s| split.ids(*s)).map(String::as_str).collect();
            let missing: Vec<&str> = ids.iter().map(String::as_str).filter(|i| !listed.contains(i)).collect();
            if !missing.is_empty() {
                return Err(Error::Dataset(format!("fires not assigned to a split: {}", missing.join(", "))));
            }
            let known: HashSet<&str> = ids.iter().map(String::as_str).collect();
            if let Some(extra) = listed.iter().find(|i| !known.contains(*i)) {
                return Err(Error::Dataset(format!("split lists unknown fire {extra}")));
            }
            Ok(split.clone())
        }
        SplitRequest::Fractions(f) => {
            let [a, b, _] = split_counts(ids.len(), *f)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ids.shuffle(&mut rng);
            let take = |r: std::ops::Range<usize>| {
                let mut v = ids[r].to_vec();
                v.sort();
                v
            };
            Ok(DatasetSplit {
                train: take(0..a),
                val: take(a..a + b),
                test: take(a + b..ids.len()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fires(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("fire{i:03}")).collect()
    }

    #[test]
    fn reference_corpus_counts() {
        let s = make_splits(&fires(255), &SplitRequest::Fractions(REFERENCE_FRACTIONS), 0).unwrap();
        assert_eq!(s.counts(), [131, 63, 61]);
        assert!(s.leaks().is_empty());
    }

    #[test]
    fn ten_fires_half_quarter_quarter() {
        // exact 5, 2.5, 2.5: floors 5, 2, 2; the one left over goes to val (tie, earlier split)
        assert_eq!(split_counts(10, [0.5, 0.25, 0.25]).unwrap(), [5, 3, 2]);
    }

    #[test]
    fn same_seed_same_split() {
        let r = SplitRequest::Fractions([0.6, 0.2, 0.2]);
        assert_eq!(make_splits(&fires(40), &r, 9).unwrap(), make_splits(&fires(40), &r, 9).unwrap());
        assert_ne!(make_splits(&fires(40), &r, 9).unwrap(), make_splits(&fires(40), &r, 10).unwrap());
    }

    #[test]
    fn explicit_lists() {
        let ok = DatasetSplit {
            train: vec!["fire000".into()],
            val: vec!["fire001".into()],
            test: vec!["fire002".into()],
        };
        assert_eq!(make_splits(&fires(3), &SplitRequest::Explicit(ok.clone()), 0).unwrap(), ok);
        let overlap = DatasetSplit {
            test: vec!["fire002".into(), "fire000".into()],
            ..ok
        };
        let err = make_splits(&fires(3), &SplitRequest::Explicit(overlap), 0).unwrap_err();
        assert!(err.to_string().contains("fire000"));
    }

    #[test]
    fn bad_fractions() {
        assert!(split_counts(10, [0.5, 0.5, 0.1]).is_err());
        assert!(split_counts(10, [1.2, -0.1, -0.1]).is_err());
    }

    proptest! {
        #[test]
        fn partition_without_leakage(n in 0usize..300, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
            let (fa, fb) = (a, (1.0 - a) * b);
            let fr = [fa, fb, 1.0 - fa - fb];
            let s = make_splits(&fires(n), &SplitRequest::Fractions(fr), seed).unwrap();
            prop_assert!(s.leaks().is_empty());
            prop_assert_eq!(s.counts().iter().sum::<usize>(), n);
            for (c, f) in s.counts().iter().zip(fr) {
                prop_assert!((*c as f64 - f * n as f64).abs() < 1.0 + 1e-9);
            }
            let mut all: Vec<String> = Split::ALL.iter().flat_map(|x| s.ids(*x).to_vec()).collect();
            all.sort();
            prop_assert_eq!(all, fires(n));
        }
    }
}
