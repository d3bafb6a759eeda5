use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RankerError, ScoreModel};
use crate::preferences::{PlacementClass, PreferenceTable};

/// Average precision of a ranked list of relevance labels; `None` when
/// nothing is relevant.
pub fn average_precision(ranked: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, rel) in ranked.iter().enumerate() {
        if *rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

fn ranked_labels<K: Ord>(mut scored: Vec<(f64, K, bool)>) -> Vec<bool> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, _, l)| l).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub orr: f64,
    pub or: f64,
    /// Objects with at least one positive, i.e. those averaged.
    pub objects: usize,
}

/// ORR AP of an object is the mean, over rooms holding at least one of its
/// Correct receptacles, of the AP of that room's receptacle ranking. OR AP
/// ranks its rooms, a room being positive when it holds a Correct
/// receptacle. Objects without any Correct key are skipped.
pub fn eval_map<M: ScoreModel + ?Sized>(model: &M, table: &PreferenceTable, objects: &BTreeSet<String>) -> Result<MapReport, RankerError> {
    if objects.is_empty() {
        return Err(RankerError::EmptySplit("no objects to evaluate".into()));
    }
    let per_object: Vec<(f64, f64)> = objects
        .par_iter()
        .filter_map(|object| {
            let mut rooms: BTreeMap<&str, Vec<(f64, &str, bool)>> = BTreeMap::new();
            for ((_, room, rec), e) in table.keys_for(object) {
                let correct = e.class() == PlacementClass::Correct;
                rooms.entry(room).or_default().push((model.score_orr(object, room, rec), rec.as_str(), correct));
            }
            let mut or = Vec::with_capacity(rooms.len());
            let mut orr_aps = Vec::new();
            for (room, recs) in rooms {
                let positive = recs.iter().any(|r| r.2);
                or.push((model.score_or(object, room), room, positive));
                orr_aps.extend(average_precision(&ranked_labels(recs)));
            }
            let orr = orr_aps.iter().sum::<f64>() / orr_aps.len() as f64;
            Some((orr, average_precision(&ranked_labels(or))?))
        })
        .collect();
    if per_object.is_empty() {
        return Err(RankerError::EmptySplit("no object has a Correct placement".into()));
    }
    let n = per_object.len() as f64;
    Ok(MapReport {
        orr: per_object.iter().map(|p| p.0).sum::<f64>() / n,
        or: per_object.iter().map(|p| p.1).sum::<f64>() / n,
        objects: per_object.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub s_l: f64,
    pub step: f64,
    pub f1: f64,
}

/// Grid search over `s_L ∈ {0, 0.01, .., 1}` for the best F1 of the rule
/// `score_orr > s_L ⇒ Correct` on the keys of `objects`. Ties go to the
/// smallest threshold.
pub fn calibrate_threshold<M: ScoreModel + ?Sized>(
    model: &M,
    table: &PreferenceTable,
    objects: &BTreeSet<String>,
) -> Result<ThresholdCalibration, RankerError> {
    let scored: Vec<(f64, bool)> = objects
        .iter()
        .flat_map(|o| table.keys_for(o).map(move |((_, r, c), e)| (o, r, c, e.class() == PlacementClass::Correct)))
        .map(|(o, r, c, pos)| (model.score_orr(o, r, c), pos))
        .collect();
    if !scored.iter().any(|s| s.1) {
        return Err(RankerError::EmptySplit("no Correct keys to calibrate on".into()));
    }
    const STEPS: usize = 100;
    let mut best = ThresholdCalibration { s_l: 0.0, step: 1.0 / STEPS as f64, f1: -1.0 };
    for k in 0..=STEPS {
        let s = k as f64 / STEPS as f64;
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for &(score, pos) in &scored {
            match (score > s, pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        if f1 > best.f1 {
            best.s_l = s;
            best.f1 = f1;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::{key, PreferenceEntry};
    use crate::ranker::{ExternalScores, OracleScores};

    fn entry(c: f64) -> PreferenceEntry {
        PreferenceEntry { c_or: c, m_or: 1.0 - c, i_or: 0.0, mean_correct_rank: (c > 0.5).then_some(1.0), n_annotators: 10 }
    }

    fn table(keys: &[(&str, &str, &str, f64)]) -> PreferenceTable {
        PreferenceTable::from_entries(keys.iter().map(|(o, r, c, v)| (key(o, r, c), entry(*v))).collect())
    }

    #[test]
    fn ap_formula() {
        assert_eq!(average_precision(&[false, false, false, true]), Some(0.25));
        assert_eq!(average_precision(&[true, false, true]), Some((1.0 + 2.0 / 3.0) / 2.0));
        assert_eq!(average_precision(&[false]), None);
    }

    #[test]
    fn oracle_has_perfect_map() {
        let t = table(&[("cup", "k", "a", 0.9), ("cup", "k", "b", 0.2), ("cup", "b", "c", 0.7), ("mop", "b", "c", 0.1), ("mop", "k", "b", 0.8)]);
        let objects = t.objects();
        let r = eval_map(&OracleScores::new(&t), &t, &objects).unwrap();
        assert_eq!((r.orr, r.or, r.objects), (1.0, 1.0, 2));
    }

    #[test]
    fn objects_without_positives_are_skipped() {
        let t = table(&[("cup", "k", "a", 0.9), ("cup", "k", "b", 0.2), ("rock", "k", "a", 0.1)]);
        let r = eval_map(&OracleScores::new(&t), &t, &t.objects()).unwrap();
        assert_eq!(r.objects, 1);
        let rock: BTreeSet<String> = ["rock".to_string()].into();
        assert!(eval_map(&OracleScores::new(&t), &t, &rock).is_err());
        assert!(eval_map(&OracleScores::new(&t), &t, &BTreeSet::new()).is_err());
    }

    #[test]
    fn separable_scores_pick_the_smallest_strict_threshold() {
        let t = table(&[("cup", "k", "a", 0.9), ("cup", "k", "b", 0.1)]);
        let c = calibrate_threshold(&OracleScores::new(&t), &t, &t.objects()).unwrap();
        assert_eq!(c.f1, 1.0);
        assert_eq!(c.s_l, 0.10);
    }

    #[test]
    fn constant_scores_give_all_positive_f1() {
        let t = table(&[("cup", "k", "a", 0.9), ("cup", "k", "b", 0.1), ("cup", "k", "c", 0.2)]);
        let flat = ExternalScores::from_json(r#"{"cup|k|a": 0.4, "cup|k|b": 0.4, "cup|k|c": 0.4}"#).unwrap();
        let c = calibrate_threshold(&flat, &t, &t.objects()).unwrap();
        assert_eq!(c.s_l, 0.0);
        assert!((c.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn anti_correlated_scores_hit_the_boundary() {
        let t = table(&[("cup", "k", "a", 0.9), ("cup", "k", "b", 0.1), ("cup", "k", "c", 0.2)]);
        let anti = ExternalScores::from_json(r#"{"cup|k|a": 0.1, "cup|k|b": 0.9, "cup|k|c": 0.8}"#).unwrap();
        let c = calibrate_threshold(&anti, &t, &t.objects()).unwrap();
        // Everything positive is the best the rule can do here.
        assert_eq!(c.s_l, 0.0);
        assert!((c.f1 - 0.5).abs() < 1e-12);
    }
}
