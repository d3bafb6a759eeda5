//! Fleiss' kappa over annotation bins.

use std::collections::BTreeMap;

use super::{AnnotationRecord, Bin, PrefError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KappaMode {
    /// Correct / Misplaced / Implausible.
    ThreeWay,
    /// Correct vs everything else.
    MergedIncorrect,
}

impl KappaMode {
    fn categories(self) -> usize {
        match self {
            KappaMode::ThreeWay => 3,
            KappaMode::MergedIncorrect => 2,
        }
    }

    fn category(self, bin: Bin) -> usize {
        match (self, bin) {
            (KappaMode::ThreeWay, b) => b.index(),
            (KappaMode::MergedIncorrect, Bin::Correct) => 0,
            (KappaMode::MergedIncorrect, _) => 1,
        }
    }
}

/// Per-item category counts, one item per `(object, room, receptacle)` key
/// in key order.
pub fn rating_counts<'a>(records: impl IntoIterator<Item = &'a AnnotationRecord>, mode: KappaMode) -> Vec<Vec<usize>> {
    let mut items: BTreeMap<(&str, &str, &str), Vec<usize>> = BTreeMap::new();
    for rec in records {
        let counts = items.entry((&rec.object, &rec.room, &rec.receptacle)).or_insert_with(|| vec![0; mode.categories()]);
        counts[mode.category(rec.bin)] += 1;
    }
    items.into_values().collect()
}

/// Fleiss' kappa from an items × categories count matrix.
pub fn fleiss_kappa_counts(counts: &[Vec<usize>]) -> Result<f64, PrefError> {
    let Some(first) = counts.first() else {
        return Err(PrefError::UndefinedKappa("no items".into()));
    };
    let n: usize = first.iter().sum();
    for row in counts {
        let m: usize = row.iter().sum();
        if m != n {
            return Err(PrefError::UnequalRaterCounts(n, m));
        }
    }
    if n < 2 {
        return Err(PrefError::UndefinedKappa(format!("{n} rater(s) per item")));
    }
    // Integer counts make kappa a rational number. With
    // P̄ = a / d1 and P_e = b / d2 it is (a·d2 − b·d1) / (d1·(d2 − b)),
    // reduced before the single rounding division.
    let (items, n) = (counts.len() as i128, n as i128);
    let a: i128 = counts.iter().map(|row| row.iter().map(|&x| (x * x) as i128).sum::<i128>() - n).sum();
    let d1 = items * n * (n - 1);
    let b: i128 = (0..first.len())
        .map(|j| {
            let col: i128 = counts.iter().map(|row| row[j] as i128).sum();
            col * col
        })
        .sum();
    let d2 = (items * n) * (items * n);
    if b == d2 {
        return Err(PrefError::UndefinedKappa("every rating falls in one category (P_e = 1)".into()));
    }
    let (num, den) = (a * d2 - b * d1, d1 * (d2 - b));
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
    Ok((num / g) as f64 / (den / g) as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn fleiss_kappa(records: &[AnnotationRecord], mode: KappaMode) -> Result<f64, PrefError> {
    fleiss_kappa_counts(&rating_counts(records, mode))
}

/// Kappa per object category over that object's keys.
pub fn fleiss_kappa_by_object(records: &[AnnotationRecord], mode: KappaMode) -> BTreeMap<String, Result<f64, PrefError>> {
    let mut by_object: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for rec in records {
        by_object.entry(&rec.object).or_default().push(rec);
    }
    by_object
        .into_iter()
        .map(|(object, recs)| (object.to_string(), fleiss_kappa_counts(&rating_counts(recs, mode))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_is_one() {
        let counts = vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]];
        assert!((fleiss_kappa_counts(&counts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn even_split_two_categories() {
        let counts = vec![vec![5, 5]; 20];
        let kappa = fleiss_kappa_counts(&counts).unwrap();
        assert_eq!(kappa, -1.0 / 9.0);
    }

    #[test]
    fn single_category_is_undefined() {
        let counts = vec![vec![4, 0]; 3];
        assert!(matches!(fleiss_kappa_counts(&counts), Err(PrefError::UndefinedKappa(_))));
    }

    #[test]
    fn unequal_raters_rejected() {
        let counts = vec![vec![4, 1], vec![2, 2]];
        assert!(matches!(fleiss_kappa_counts(&counts), Err(PrefError::UnequalRaterCounts(5, 4))));
    }

    #[test]
    fn merged_mode_folds_misplaced_into_incorrect() {
        let mk = |a: &str, bin| AnnotationRecord {
            annotator: a.into(),
            object: "cup".into(),
            room: "kitchen".into(),
            receptacle: "sink".into(),
            bin,
            rank: None,
        };
        let recs = vec![mk("a", Bin::Misplaced), mk("b", Bin::Implausible), mk("c", Bin::Correct)];
        assert_eq!(rating_counts(&recs, KappaMode::MergedIncorrect), vec![vec![1, 2]]);
        assert_eq!(rating_counts(&recs, KappaMode::ThreeWay), vec![vec![1, 1, 1]]);
    }
}
