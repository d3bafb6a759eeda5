use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{RankerError, ScoreModel};
use crate::episodes::Episode;
use crate::preferences::{PlacementClass, PreferenceTable};
use crate::rng::unit_hash;
use crate::world::GridScene;

/// Scores straight from the aggregated human ratios: ORR is `c_or`, OR is
/// the best `c_or` among the room's receptacles.
#[derive(Clone, Copy, Debug)]
pub struct OracleScores<'a> {
    table: &'a PreferenceTable,
}

impl<'a> OracleScores<'a> {
    /// Threshold matching the Correct classification of the table.
    pub const THRESHOLD: f64 = 0.5;

    pub fn new(table: &'a PreferenceTable) -> Self {
        Self { table }
    }
}

fn best_in_room(table: &PreferenceTable, object: &str, room: &str) -> f64 {
    table.keys_for(object).filter(|((_, r, _), _)| r == room).map(|(_, e)| e.c_or).fold(0.0, f64::max)
}

impl ScoreModel for OracleScores<'_> {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        best_in_room(self.table, object, room)
    }

    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        self.table.c_or(object, room, receptacle)
    }
}

/// Oracle whose decision for each initially misplaced object is corrupted
/// with probability `1 - p`. A corrupted category scores its Correct pairs 0
/// and one other pair present in the scene (the decoy) 0.99, so the agent
/// still moves the object but to a wrong receptacle. Draws are keyed by
/// episode id and category, so a run is reproducible.
#[derive(Clone, Debug)]
pub struct NoisyOracle<'a> {
    table: &'a PreferenceTable,
    decoys: BTreeMap<String, (String, String)>,
}

impl<'a> NoisyOracle<'a> {
    pub const DECOY_SCORE: f64 = 0.99;

    pub fn for_episode(table: &'a PreferenceTable, scene: &GridScene, episode: &Episode, p: f64, seed: u64) -> Self {
        let mut free: BTreeMap<(String, String), i64> = BTreeMap::new();
        for (i, rec) in scene.receptacles().iter().enumerate() {
            let load = episode.objects.iter().filter(|o| o.on == rec.id).count() as i64;
            *free.entry((scene.receptacle_room_category(i).to_string(), rec.category.clone())).or_default() += rec.capacity as i64 - load;
        }
        let mut decoys = BTreeMap::new();
        for obj in episode.objects.iter().filter(|o| o.misplaced) {
            if unit_hash(seed, &format!("noisy:{}:{}", episode.id, obj.category)) < p {
                continue;
            }
            let start = scene.receptacle_index(&obj.on).map(|i| (scene.receptacle_room_category(i).to_string(), scene.receptacles()[i].category.clone()));
            let correct: BTreeSet<(String, String)> = table.correct_pairs(&obj.category).into_iter().collect();
            let decoy = free
                .iter()
                .filter(|(pair, n)| **n > 0 && !correct.contains(*pair) && Some(*pair) != start.as_ref())
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(pair, _)| pair.clone());
            if let Some(d) = decoy {
                decoys.insert(obj.category.clone(), d);
            }
        }
        Self { table, decoys }
    }

    /// Categories whose decisions are corrupted in this episode.
    pub fn corrupted(&self) -> impl Iterator<Item = &str> + '_ {
        self.decoys.keys().map(String::as_str)
    }
}

impl ScoreModel for NoisyOracle<'_> {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        match self.decoys.get(object) {
            None => best_in_room(self.table, object, room),
            Some((r, _)) if r == room => Self::DECOY_SCORE,
            Some(_) => 0.0,
        }
    }

    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        let c = self.table.c_or(object, room, receptacle);
        match self.decoys.get(object) {
            None => c,
            Some((r, k)) if r == room && k == receptacle => Self::DECOY_SCORE,
            Some(_) => match self.table.get(object, room, receptacle).map(|e| e.class()) {
                Some(PlacementClass::Correct) => 0.0,
                _ => c,
            },
        }
    }
}

/// Uniform pseudo-random scores, a pure function of the seed and key.
#[derive(Clone, Copy, Debug)]
pub struct RandomScores {
    seed: u64,
}

impl RandomScores {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl ScoreModel for RandomScores {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        unit_hash(self.seed, &format!("or|{object}|{room}"))
    }

    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        unit_hash(self.seed, &format!("orr|{object}|{room}|{receptacle}"))
    }
}

/// Precomputed scores from a JSON object mapping `"object|room"` and
/// `"object|room|receptacle"` to numbers. Missing keys score 0.
#[derive(Clone, Debug, Default)]
pub struct ExternalScores {
    scores: BTreeMap<String, f64>,
}

impl ExternalScores {
    pub fn from_json(text: &str) -> Result<Self, RankerError> {
        let scores: BTreeMap<String, f64> = serde_json::from_str(text).map_err(|e| RankerError::Parse(e.to_string()))?;
        for (k, v) in &scores {
            let parts = k.split('|').count();
            if !(2..=3).contains(&parts) {
                return Err(RankerError::Parse(format!("bad score key {k:?}")));
            }
            if !v.is_finite() {
                return Err(RankerError::Parse(format!("non-finite score for {k:?}")));
            }
        }
        Ok(Self { scores })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RankerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RankerError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl ScoreModel for ExternalScores {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        self.scores.get(&format!("{object}|{room}")).copied().unwrap_or(0.0)
    }

    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        self.scores.get(&format!("{object}|{room}|{receptacle}")).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preferences::{key, PreferenceEntry};

    fn entry(c: f64, m: f64) -> PreferenceEntry {
        PreferenceEntry { c_or: c, m_or: m, i_or: 1.0 - c - m, mean_correct_rank: (c > 0.0).then_some(1.0), n_annotators: 10 }
    }

    fn table() -> PreferenceTable {
        PreferenceTable::from_entries(
            [
                (key("cup", "kitchen", "cabinet"), entry(0.9, 0.0)),
                (key("cup", "kitchen", "sink"), entry(0.3, 0.6)),
                (key("cup", "bath", "shelf"), entry(0.6, 0.1)),
            ]
            .into(),
        )
    }

    #[test]
    fn oracle_room_score_is_best_receptacle() {
        let t = table();
        let o = OracleScores::new(&t);
        assert_eq!(o.score_or("cup", "kitchen"), 0.9);
        assert_eq!(o.score_or("cup", "garage"), 0.0);
        assert_eq!(o.score_orr("cup", "kitchen", "sink"), 0.3);
    }

    #[test]
    fn external_scores_parse_and_default() {
        let e = ExternalScores::from_json(r#"{"cup|kitchen": 0.4, "cup|kitchen|sink": 0.7}"#).unwrap();
        assert_eq!(e.score_or("cup", "kitchen"), 0.4);
        assert_eq!(e.score_orr("cup", "kitchen", "sink"), 0.7);
        assert_eq!(e.score_orr("cup", "kitchen", "cabinet"), 0.0);
        assert!(ExternalScores::from_json(r#"{"cup": 1.0}"#).is_err());
    }

    #[test]
    fn random_scores_are_stable() {
        let r = RandomScores::new(3);
        assert_eq!(r.score_orr("a", "b", "c"), r.score_orr("a", "b", "c"));
        assert_ne!(r.score_orr("a", "b", "c"), r.score_orr("a", "b", "d"));
    }
}
