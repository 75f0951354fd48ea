//! Bitemporal pair enumeration, time-difference labels and batching.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{BitemporalSample, FrequencyMap, TimeSeriesCube};
use crate::error::{Error, Result};
use crate::timestamp::{months_between, Timestamp};

/// Admissible month gaps between the two frames of a pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum GapSpec {
    /// Any gap in `0..=max_gap`.
    Range { max_gap: u32 },
    /// Exactly the listed gaps.
    Set { gaps: BTreeSet<u32> },
}

impl Default for GapSpec {
    fn default() -> Self {
        GapSpec::Range { max_gap: 3 }
    }
}

impl GapSpec {
    pub fn set(gaps: impl IntoIterator<Item = u32>) -> Self {
        GapSpec::Set {
            gaps: gaps.into_iter().collect(),
        }
    }

    pub fn accepts(&self, gap: i64) -> bool {
        if gap < 0 {
            return false;
        }
        match self {
            GapSpec::Range { max_gap } => gap <= *max_gap as i64,
            GapSpec::Set { gaps } => u32::try_from(gap).is_ok_and(|g| gaps.contains(&g)),
        }
    }

    /// Default number of time-difference classes: one per month up to the largest gap.
    pub fn default_classes(&self) -> usize {
        match self {
            GapSpec::Range { max_gap } => *max_gap as usize + 1,
            GapSpec::Set { gaps } => gaps.iter().max().map_or(1, |&g| g as usize + 1),
        }
    }

    /// Parse `"3,6,9"` into set mode.
    pub fn parse_set(s: &str) -> Result<Self> {
        let gaps = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::Config(format!("invalid gap `{p}` in `{s}`")))
            })
            .collect::<Result<BTreeSet<_>>>()?;
        if gaps.is_empty() {
            return Err(Error::Config("empty gap set".into()));
        }
        Ok(GapSpec::Set { gaps })
    }
}

/// Time-difference class of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TdLabel(pub usize);

/// `min(gap, classes − 1)`.
pub fn td_label(gap_months: i64, classes: usize) -> Result<TdLabel> {
    if gap_months < 0 {
        return Err(Error::Precondition(format!("negative gap {gap_months}")));
    }
    if classes == 0 {
        return Err(Error::Config("at least one time-difference class required".into()));
    }
    Ok(TdLabel((gap_months as usize).min(classes - 1)))
}

/// All index pairs `(i, j)`, `i <= j`, whose month gap `spec` accepts, in
/// ascending `(i, j)` order.
pub fn enumerate_pairs(timestamps: &[Timestamp], spec: &GapSpec) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..timestamps.len() {
        for j in i..timestamps.len() {
            if spec.accepts(months_between(timestamps[i], timestamps[j])) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Both presentation orders of a pair; they share one label.
pub fn symmetric_expand<'a>(sample: &BitemporalSample<'a>) -> [BitemporalSample<'a>; 2] {
    [*sample, sample.swapped()]
}

/// Deterministically shuffle and split pairs into `(train, held_out)`.
pub fn split_pairs(
    pairs: &[(usize, usize)],
    held_out_fraction: f64,
    seed: u64,
) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_held = ((pairs.len() as f64) * held_out_fraction).round() as usize;
    let held = shuffled.split_off(pairs.len() - n_held.min(pairs.len()));
    shuffled.sort_unstable();
    let mut held = held;
    held.sort_unstable();
    (shuffled, held)
}

/// One epoch of shuffled fixed-size batches over a cube's pairs.
pub struct PairBatches<'a> {
    cube: &'a TimeSeriesCube,
    freq_map: Option<&'a FrequencyMap>,
    order: Vec<(usize, usize)>,
    batch_size: usize,
    pos: usize,
}

impl<'a> PairBatches<'a> {
    /// The shuffled pair order for this epoch.
    pub fn order(&self) -> &[(usize, usize)] {
        &self.order
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<'a> Iterator for PairBatches<'a> {
    type Item = Vec<BitemporalSample<'a>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end]
            .iter()
            .map(|&(i, j)| {
                BitemporalSample::from_cube(self.cube, i, j, self.freq_map)
                    .expect("pairs are time ordered")
            })
            .collect();
        self.pos = end;
        Some(batch)
    }
}

/// Batches over an explicit pair list, shuffled with `seed`.
pub fn batches_from_pairs<'a>(
    cube: &'a TimeSeriesCube,
    pairs: &[(usize, usize)],
    batch_size: usize,
    seed: u64,
    freq_map: Option<&'a FrequencyMap>,
) -> Result<PairBatches<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Config("no admissible bitemporal pairs".into()));
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i > j || j >= cube.len()) {
        return Err(Error::Config(format!("pair ({i}, {j}) invalid for a {}-frame cube", cube.len())));
    }
    let mut order = pairs.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(PairBatches {
        cube,
        freq_map,
        order,
        batch_size,
        pos: 0,
    })
}

/// Enumerate the pairs admitted by `spec` and batch them with a seeded shuffle.
/// Pass the cube's frequency map when the frequency task is active.
pub fn make_batches<'a>(
    cube: &'a TimeSeriesCube,
    spec: &GapSpec,
    batch_size: usize,
    seed: u64,
    freq_map: Option<&'a FrequencyMap>,
) -> Result<PairBatches<'a>> {
    let pairs = enumerate_pairs(cube.timestamps(), spec);
    batches_from_pairs(cube, &pairs, batch_size, seed, freq_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::Band;
    use ndarray::Array4;
    use proptest::prelude::*;

    fn consecutive(n: usize) -> Vec<Timestamp> {
        let start = Timestamp::new(2018, 1).unwrap();
        (0..n).map(|i| start.add_months(i as i64).unwrap()).collect()
    }

    fn cube(n: usize) -> TimeSeriesCube {
        TimeSeriesCube::new(Array4::zeros((n, 4, 2, 2)), consecutive(n), Band::CANONICAL.to_vec())
            .unwrap()
    }

    #[test]
    fn range_counts_include_self_pairs() {
        let pairs = enumerate_pairs(&consecutive(5), &GapSpec::Range { max_gap: 3 });
        assert_eq!(pairs.len(), 14);
        assert_eq!(pairs[0], (0, 0));
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn set_counts() {
        assert_eq!(enumerate_pairs(&consecutive(13), &GapSpec::set([3, 6, 9])).len(), 21);
        assert!(enumerate_pairs(&consecutive(3), &GapSpec::set([3])).is_empty());
    }

    #[test]
    fn irregular_timestamps_use_month_gaps() {
        let ts: Vec<Timestamp> = ["2018-01", "2018-04", "2018-05"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(enumerate_pairs(&ts, &GapSpec::set([3])), vec![(0, 1)]);
    }

    #[test]
    fn labels_clamp() {
        assert_eq!(td_label(0, 4).unwrap(), TdLabel(0));
        assert_eq!(td_label(3, 4).unwrap(), TdLabel(3));
        assert_eq!(td_label(7, 4).unwrap(), TdLabel(3));
        assert!(td_label(-1, 4).is_err());
    }

    #[test]
    fn labels_monotone_and_surjective() {
        let c = 4;
        let labels: Vec<usize> = (0..10).map(|g| td_label(g, c).unwrap().0).collect();
        assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        let seen: BTreeSet<usize> = labels.into_iter().collect();
        assert_eq!(seen, (0..c).collect());
    }

    #[test]
    fn symmetric_expansion() {
        let cube = cube(4);
        let s = BitemporalSample::from_cube(&cube, 2, 2, None).unwrap();
        let [a, b] = symmetric_expand(&s);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.x1, b.x1);

        let s = BitemporalSample::from_cube(&cube, 0, 3, None).unwrap();
        let [a, b] = symmetric_expand(&s);
        assert_eq!((a.frames, b.frames), ((0, 3), (3, 0)));
        assert_eq!(a.gap_months, b.gap_months);

        let batch = make_batches(&cube, &GapSpec::default(), 64, 1, None).unwrap().next().unwrap();
        let expanded: Vec<_> = batch.iter().flat_map(symmetric_expand).collect();
        assert_eq!(expanded.len(), 2 * batch.len());
    }

    #[test]
    fn seeded_batches_are_deterministic() {
        let cube = cube(36);
        let spec = GapSpec::default();
        let a = make_batches(&cube, &spec, 16, 7, None).unwrap();
        let b = make_batches(&cube, &spec, 16, 7, None).unwrap();
        assert_eq!(a.order(), b.order());
        let c = make_batches(&cube, &spec, 16, 8, None).unwrap();
        assert!(a.order().len() >= 100);
        assert_ne!(a.order(), c.order());
    }

    #[test]
    fn oversized_batch_is_single_short_batch() {
        let cube = cube(5);
        let batches: Vec<_> = make_batches(&cube, &GapSpec::default(), 100, 0, None).unwrap().collect();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 14);
    }

    #[test]
    fn no_pairs_is_config_error() {
        let cube = cube(3);
        assert!(matches!(make_batches(&cube, &GapSpec::set([3]), 4, 0, None), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_a_partition() {
        let pairs = enumerate_pairs(&consecutive(20), &GapSpec::default());
        let (train, held) = split_pairs(&pairs, 0.2, 3);
        assert_eq!(train.len() + held.len(), pairs.len());
        let mut all: Vec<_> = train.iter().chain(&held).copied().collect();
        all.sort();
        assert_eq!(all, pairs);
    }

    #[test]
    fn gap_set_parsing() {
        assert_eq!(GapSpec::parse_set("3,6,9").unwrap(), GapSpec::set([3, 6, 9]));
        assert!(GapSpec::parse_set("3,x").is_err());
    }

    proptest! {
        #[test]
        fn epoch_is_bijection_and_respects_spec(
            n in 1usize..30,
            max_gap in 0u32..6,
            batch in 1usize..20,
            seed in any::<u64>(),
            use_set in any::<bool>(),
        ) {
            let spec = if use_set { GapSpec::set([max_gap, max_gap + 2]) } else { GapSpec::Range { max_gap } };
            let cube = cube(n);
            let expected = enumerate_pairs(cube.timestamps(), &spec);
            match make_batches(&cube, &spec, batch, seed, None) {
                Err(_) => prop_assert!(expected.is_empty()),
                Ok(batches) => {
                    let mut seen = Vec::new();
                    for b in batches {
                        prop_assert!(b.len() <= batch);
                        for s in b {
                            prop_assert!(spec.accepts(s.gap_months as i64));
                            seen.push(s.frames);
                        }
                    }
                    seen.sort();
                    prop_assert_eq!(seen, expected);
                }
            }
        }
    }
}
