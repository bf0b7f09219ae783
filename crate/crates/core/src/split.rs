//! Stratified train/validation/test assignment.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ClassCatalog;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Split::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split ratio {0} is outside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("split ratios sum to {0}, expected 1")]
    RatioSum(f64),
    #[error("class `{name}` has {count} samples; at least 3 are needed (one per split)")]
    TooFewSamples { name: alloc::string::String, count: usize },
    #[error("sample {sample} has class index {index}, catalog has {count} classes")]
    BadClassIndex { sample: usize, index: usize, count: usize },
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRatios")]
pub struct SplitRatios {
    train: f64,
    validation: f64,
    test: f64,
}

#[derive(Deserialize)]
struct RawRatios {
    train: f64,
    validation: f64,
    test: f64,
}

impl TryFrom<RawRatios> for SplitRatios {
    type Error = SplitError;
    fn try_from(r: RawRatios) -> Result<Self, SplitError> {
        SplitRatios::new(r.train, r.validation, r.test)
    }
}

impl Default for SplitRatios {
    /// 70:15:15.
    fn default() -> Self {
        Self { train: 0.70, validation: 0.15, test: 0.15 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, SplitError> {
        for r in [train, validation, test] {
            if !(r > 0.0 && r < 1.0) {
                return Err(SplitError::RatioOutOfRange(r));
            }
        }
        let sum = train + validation + test;
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(SplitError::RatioSum(sum));
        }
        Ok(Self { train, validation, test })
    }

    pub fn train(&self) -> f64 {
        self.train
    }

    pub fn validation(&self) -> f64 {
        self.validation
    }

    pub fn test(&self) -> f64 {
        self.test
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Number of samples each split receives out of `n`.
///
/// Each split first gets `floor(n * ratio)`; the leftover samples go to the
/// splits with the largest fractional remainders, earlier split first on
/// ties. With `n >= 3` every split is then guaranteed at least one sample,
/// taken from the currently largest split.
pub fn allocate(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let exact = ratios.as_array().map(|r| n as f64 * r);
    // tolerate representation error such as 0.7 * 100 = 70.00000000000001
    let mut counts = exact.map(|x| libm::floor(x + 1e-9) as usize);
    let mut order = [0usize, 1, 2];
    let frac = |i: usize| exact[i] - counts[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    if n >= 3 {
        for i in 0..3 {
            if counts[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], core::cmp::Reverse(j))).unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Assigns every sample to a split, stratified by class.
///
/// `class_of[i]` is the class index of sample `i`. Within a class, samples
/// are shuffled by the stream `(seed, "split", class)` and then cut into
/// consecutive runs sized by [`allocate`]. The result is a pure function of
/// the inputs.
pub fn stratified_assign(
    class_of: &[usize],
    catalog: &ClassCatalog,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<Vec<Split>, SplitError> {
    let k = catalog.count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (sample, &c) in class_of.iter().enumerate() {
        if c >= k {
            return Err(SplitError::BadClassIndex { sample, index: c, count: k });
        }
        members[c].push(sample);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < 3 {
            return Err(SplitError::TooFewSamples {
                name: catalog.name(c).unwrap_or_default().into(),
                count: m.len(),
            });
        }
    }

    let mut out = vec![Split::Train; class_of.len()];
    for (c, mut m) in members.into_iter().enumerate() {
        let counts = allocate(m.len(), ratios);
        seed::shuffle(&mut m, &mut seed::stream(seed, "split", &[c as u64]));
        let mut it = m.into_iter();
        for (split, n) in Split::ALL.into_iter().zip(counts) {
            for sample in it.by_ref().take(n) {
                out[sample] = split;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::String;
    use proptest::prelude::*;

    fn catalog(k: usize) -> ClassCatalog {
        ClassCatalog::new((0..k).map(|i| format!("class{i:02}"))).unwrap()
    }

    #[test]
    fn exact_divisibility() {
        assert_eq!(allocate(100, &SplitRatios::default()), [70, 15, 15]);
    }

    #[test]
    fn twenty_per_class() {
        // 14.0 / 3.0 / 3.0: no remainder to hand out
        assert_eq!(allocate(20, &SplitRatios::default()), [14, 3, 3]);
    }

    #[test]
    fn remainders_go_to_largest_fraction() {
        // 21 * (.7, .15, .15) = 14.7, 3.15, 3.15 -> floors 14,3,3, one left -> train
        assert_eq!(allocate(21, &SplitRatios::default()), [15, 3, 3]);
        // 10 -> 7, 1.5, 1.5 -> ties on .5 go to the earlier split
        assert_eq!(allocate(10, &SplitRatios::default()), [7, 2, 1]);
        // 3 -> 2.1, .45, .45 -> 2,1,0 -> every split needs one
        assert_eq!(allocate(3, &SplitRatios::default()), [1, 1, 1]);
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios::new(0.7, 0.15, 0.15).is_ok());
        assert_eq!(SplitRatios::new(0.0, 0.5, 0.5), Err(SplitError::RatioOutOfRange(0.0)));
        assert!(matches!(SplitRatios::new(0.7, 0.2, 0.2), Err(SplitError::RatioSum(_))));
    }

    #[test]
    fn too_few_samples_names_class() {
        let cat = catalog(2);
        let err = stratified_assign(&[0, 0, 0, 1, 1], &cat, &SplitRatios::default(), 46).unwrap_err();
        assert_eq!(err, SplitError::TooFewSamples { name: String::from("class01"), count: 2 });
    }

    #[test]
    fn seventeen_classes_of_twenty() {
        let cat = catalog(17);
        let class_of: Vec<usize> = (0..17 * 20).map(|i| i % 17).collect();
        let a = stratified_assign(&class_of, &cat, &SplitRatios::default(), 46).unwrap();
        let b = stratified_assign(&class_of, &cat, &SplitRatios::default(), 46).unwrap();
        assert_eq!(a, b);
        for c in 0..17 {
            let count = |s| (0..class_of.len()).filter(|&i| class_of[i] == c && a[i] == s).count();
            assert_eq!([count(Split::Train), count(Split::Validation), count(Split::Test)], [14, 3, 3]);
        }
        let other = stratified_assign(&class_of, &cat, &SplitRatios::default(), 47).unwrap();
        assert_ne!(a, other);
    }

    proptest! {
        #[test]
        fn stratification_bound(sizes in proptest::collection::vec(3usize..60, 1..6), seed in any::<u64>(),
                                t in 0.3f64..0.8, v in 0.05f64..0.15) {
            let ratios = SplitRatios::new(t, v, 1.0 - t - v).unwrap();
            let cat = catalog(sizes.len());
            let class_of: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| core::iter::repeat(c).take(n)).collect();
            let splits = stratified_assign(&class_of, &cat, &ratios, seed).unwrap();
            prop_assert_eq!(splits.len(), class_of.len());
            for (c, &n) in sizes.iter().enumerate() {
                // the one-per-split minimum can break the 1/n bound only when some n*r < 1
                let unforced = ratios.as_array().iter().all(|r| n as f64 * r >= 1.0);
                for (s, r) in Split::ALL.into_iter().zip(ratios.as_array()) {
                    let got = (0..class_of.len()).filter(|&i| class_of[i] == c && splits[i] == s).count();
                    prop_assert!(got >= 1);
                    if unforced {
                        prop_assert!(libm::fabs(got as f64 / n as f64 - r) <= 1.0 / n as f64 + 1e-12);
                    }
                }
            }
        }
    }
}
