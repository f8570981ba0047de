use super::{CorpusError, SentenceRecord};
use crate::labels::BinaryLabel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_RATIOS: [f64; 3] = [0.72, 0.08, 0.20];

const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SentenceRecord>,
    pub validation: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

/// Ids per split; the on-disk form of a [`DatasetSplit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn manifest(&self) -> SplitManifest {
        let ids = |v: &[SentenceRecord]| v.iter().map(|r| r.id.clone()).collect();
        SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            train: ids(&self.train),
            validation: ids(&self.validation),
            test: ids(&self.test),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[SentenceRecord]> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.validation.is_empty() && self.test.is_empty()
    }
}

impl SplitManifest {
    /// Rebuilds the split from records; every manifest id must be present.
    pub fn apply(&self, records: &[SentenceRecord]) -> Result<DatasetSplit, CorpusError> {
        let by_id: HashMap<&str, &SentenceRecord> =
            records.iter().map(|r| (r.id.as_str(), r)).collect();
        let pick = |ids: &[String]| -> Result<Vec<SentenceRecord>, CorpusError> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| CorpusError::MalformedInput(format!(
                            "split manifest references unknown id {id}"
                        )))
                })
                .collect()
        };
        Ok(DatasetSplit {
            train: pick(&self.train)?,
            validation: pick(&self.validation)?,
            test: pick(&self.test)?,
            ratios: self.ratios,
            seed: self.seed,
        })
    }
}

fn check_ratios(ratios: &[f64]) -> Result<(), CorpusError> {
    if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(CorpusError::Ratios(format!("ratios must be positive: {ratios:?}")));
    }
    let s: f64 = ratios.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Ratios(format!("ratios sum to {s}, expected 1")));
    }
    Ok(())
}

/// Floor of `ratio * n` per split, then the leftover items go one at a time
/// to the splits with the largest fractional remainders (earlier split wins
/// an exact tie).
pub fn split_sizes(n: usize, ratios: &[f64]) -> Result<Vec<usize>, CorpusError> {
    check_ratios(ratios)?;
    if n < ratios.len() {
        return Err(CorpusError::Size(format!(
            "{n} records cannot fill {} splits",
            ratios.len()
        )));
    }
    let ideal: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    Ok(largest_remainder(&ideal, n))
}

fn largest_remainder(ideal: &[f64], total: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = ideal.iter().map(|x| (x + FLOOR_EPS).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    let frac = |i: usize| ideal[i] - sizes[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

type StratumKey = (Option<BinaryLabel>, Option<BinaryLabel>);

/// Stratified split on the joint (bias, stereotype) label.
///
/// Split totals follow [`split_sizes`]. Within each stratum, members are
/// ordered by id and shuffled with `seed`, so the result depends only on the
/// record set and the seed, not on input order.
pub fn split(
    records: &[SentenceRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let n = records.len();
    let totals = split_sizes(n, &ratios)?;

    let mut strata: BTreeMap<StratumKey, Vec<&SentenceRecord>> = BTreeMap::new();
    for r in records {
        strata.entry((r.bias, r.stereotype)).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in strata.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
        members.shuffle(&mut rng);
    }

    let cells = allocate(&strata.values().map(Vec::len).collect::<Vec<_>>(), &ratios, &totals);

    let mut parts: [Vec<SentenceRecord>; 3] = Default::default();
    for (members, row) in strata.values().zip(&cells) {
        let mut offset = 0;
        for (split_idx, &count) in row.iter().enumerate() {
            parts[split_idx].extend(members[offset..offset + count].iter().map(|r| (*r).clone()));
            offset += count;
        }
    }
    let [train, validation, test] = parts;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        ratios,
        seed,
    })
}

/// Integer stratum x split allocation whose rows sum to the stratum sizes and
/// whose columns sum to `totals`, staying within one item of the proportional
/// share wherever the margins allow it.
fn allocate(strata: &[usize], ratios: &[f64], totals: &[usize]) -> Vec<Vec<usize>> {
    let k = ratios.len();
    let mut cells: Vec<Vec<usize>> = strata
        .iter()
        .map(|&m| ratios.iter().map(|r| (r * m as f64 + FLOOR_EPS).floor() as usize).collect())
        .collect();
    let mut row_left: Vec<usize> = strata
        .iter()
        .zip(&cells)
        .map(|(&m, row)| m - row.iter().sum::<usize>())
        .collect();
    let mut col_left: Vec<usize> = (0..k)
        .map(|j| totals[j] - cells.iter().map(|r| r[j]).sum::<usize>())
        .collect();

    // first pass: one extra item per cell, largest fractional part first
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (s, &m) in strata.iter().enumerate() {
        for j in 0..k {
            let frac = ratios[j] * m as f64 - cells[s][j] as f64;
            candidates.push((frac, s, j));
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    for &(_, s, j) in &candidates {
        if row_left[s] > 0 && col_left[j] > 0 {
            cells[s][j] += 1;
            row_left[s] -= 1;
            col_left[j] -= 1;
        }
    }
    // whatever the greedy pass could not place goes to any split with room
    for s in 0..strata.len() {
        for j in 0..k {
            let take = row_left[s].min(col_left[j]);
            cells[s][j] += take;
            row_left[s] -= take;
            col_left[j] -= take;
        }
    }
    debug_assert!(row_left.iter().all(|&x| x == 0) && col_left.iter().all(|&x| x == 0));
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn records(n: usize, seed: u64) -> Vec<SentenceRecord> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                SentenceRecord::new(format!("r{i:05}"), format!("text {i}"), Source::Synthetic)
                    .with_labels(
                        BinaryLabel::from(rng.random_bool(0.4)),
                        BinaryLabel::from(rng.random_bool(0.55)),
                    )
            })
            .collect()
    }

    #[test]
    fn full_corpus_split() {
        // 5012 * (.72, .08, .20) = (3608.64, 400.96, 1002.4); floors sum to 5010,
        // the two leftovers go to validation (.96) then train (.64)
        assert_eq!(split_sizes(5012, &DEFAULT_RATIOS).unwrap(), vec![3609, 401, 1002]);
        assert_eq!(split_sizes(100, &DEFAULT_RATIOS).unwrap(), vec![72, 8, 20]);
    }

    #[test]
    fn size_and_ratio_errors() {
        assert!(matches!(split_sizes(2, &DEFAULT_RATIOS), Err(CorpusError::Size(_))));
        assert!(split_sizes(10, &[0.5, 0.6, -0.1]).is_err());
        assert!(split_sizes(10, &[0.5, 0.4, 0.2]).is_err());
    }

    #[test]
    fn deterministic_and_order_free() {
        let recs = records(300, 1);
        let a = split(&recs, DEFAULT_RATIOS, 9).unwrap();
        let b = split(&recs, DEFAULT_RATIOS, 9).unwrap();
        assert_eq!(a, b);
        let mut reversed = recs.clone();
        reversed.reverse();
        let c = split(&reversed, DEFAULT_RATIOS, 9).unwrap();
        assert_eq!(a.manifest(), c.manifest());
        let d = split(&recs, DEFAULT_RATIOS, 10).unwrap();
        assert_ne!(a.manifest().train, d.manifest().train);
    }

    #[test]
    fn stratification_within_two_points_at_full_corpus_size() {
        let recs = records(5012, 3);
        let full = joint_props(&recs);
        for seed in 0..5 {
            let s = split(&recs, DEFAULT_RATIOS, seed).unwrap();
            assert_eq!(s.sizes(), (3609, 401, 1002));
            for part in [&s.train, &s.validation, &s.test] {
                let p = joint_props(part);
                for (a, b) in full.iter().zip(&p) {
                    assert!((a - b).abs() <= 0.02, "{a} vs {b}");
                }
            }
        }
    }

    fn joint_props(recs: &[SentenceRecord]) -> Vec<f64> {
        let mut c = [0usize; 4];
        for r in recs {
            c[r.class_index(crate::labels::TaskId::Joint).unwrap()] += 1;
        }
        c.iter().map(|&x| x as f64 / recs.len() as f64).collect()
    }

    #[test]
    fn manifest_roundtrip() {
        let recs = records(50, 2);
        let s = split(&recs, DEFAULT_RATIOS, 4).unwrap();
        assert_eq!(s.manifest().apply(&recs).unwrap(), s);
        let mut m = s.manifest();
        m.test.push("ghost".into());
        assert!(m.apply(&recs).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_size_bounds(n in 3usize..400, seed in any::<u64>(), data_seed in 0u64..50) {
            let recs = records(n, data_seed);
            let s = split(&recs, DEFAULT_RATIOS, seed).unwrap();
            let ids: Vec<&str> = s.train.iter().chain(&s.validation).chain(&s.test).map(|r| r.id.as_str()).collect();
            let set: BTreeSet<&str> = ids.iter().copied().collect();
            prop_assert_eq!(ids.len(), n);
            prop_assert_eq!(set.len(), n);
            let sizes = [s.train.len(), s.validation.len(), s.test.len()];
            for (size, r) in sizes.iter().zip(DEFAULT_RATIOS) {
                prop_assert!((*size as f64 - r * n as f64).abs() <= 3.0);
            }
            prop_assert_eq!(sizes.to_vec(), split_sizes(n, &DEFAULT_RATIOS).unwrap());
        }
    }
}
