use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_episode, EpisodeSpec};
use super::{Episode, EpisodeError, DEFAULT_MAX_STEPS, MISPLACED_RANGE, TOTAL_RANGE};
use crate::preferences::PreferenceTable;
use crate::rng::{mix_seed, rng_for};
use crate::world::{Catalog, GridScene, ObjectSplit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneSplit {
    Train,
    Val,
    Test,
}

/// Episode split: a scene split crossed with an object split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeSplit {
    Train,
    ValSeen,
    ValUnseen,
    TestSeen,
    TestUnseen,
}

impl EpisodeSplit {
    pub const ALL: [EpisodeSplit; 5] =
        [EpisodeSplit::Train, EpisodeSplit::ValSeen, EpisodeSplit::ValUnseen, EpisodeSplit::TestSeen, EpisodeSplit::TestUnseen];

    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeSplit::Train => "train",
            EpisodeSplit::ValSeen => "val-seen",
            EpisodeSplit::ValUnseen => "val-unseen",
            EpisodeSplit::TestSeen => "test-seen",
            EpisodeSplit::TestUnseen => "test-unseen",
        }
    }

    pub fn scenes(self) -> SceneSplit {
        match self {
            EpisodeSplit::Train => SceneSplit::Train,
            EpisodeSplit::ValSeen | EpisodeSplit::ValUnseen => SceneSplit::Val,
            EpisodeSplit::TestSeen | EpisodeSplit::TestUnseen => SceneSplit::Test,
        }
    }

    pub fn objects(self) -> ObjectSplit {
        match self {
            EpisodeSplit::Train | EpisodeSplit::ValSeen | EpisodeSplit::TestSeen => ObjectSplit::Seen,
            EpisodeSplit::ValUnseen => ObjectSplit::ValUnseen,
            EpisodeSplit::TestUnseen => ObjectSplit::TestUnseen,
        }
    }
}

impl fmt::Display for EpisodeSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EpisodeSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EpisodeSplit::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| format!("unknown episode split {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitConfig {
    pub scene_splits: BTreeMap<String, SceneSplit>,
    pub counts: BTreeMap<EpisodeSplit, usize>,
    pub max_steps: usize,
}

impl SplitConfig {
    /// Assigns scenes to train/val/test in an 8:2:4 ratio (each split gets
    /// at least one scene when there are three or more) with the default
    /// 100/20/20/20/20 episode counts.
    pub fn desk_scale(scene_ids: &[String]) -> Self {
        let n = scene_ids.len();
        let (mut n_val, mut n_test) = ((n as f64 * 2.0 / 14.0).round() as usize, (n as f64 * 4.0 / 14.0).round() as usize);
        if n >= 3 {
            n_val = n_val.max(1);
            n_test = n_test.max(1);
        }
        let n_train = n.saturating_sub(n_val + n_test);
        let mut scene_splits = BTreeMap::new();
        for (i, id) in scene_ids.iter().enumerate() {
            let split = if i < n_train {
                SceneSplit::Train
            } else if i < n_train + n_val {
                SceneSplit::Val
            } else {
                SceneSplit::Test
            };
            scene_splits.insert(id.clone(), split);
        }
        let counts = [
            (EpisodeSplit::Train, 100),
            (EpisodeSplit::ValSeen, 20),
            (EpisodeSplit::ValUnseen, 20),
            (EpisodeSplit::TestSeen, 20),
            (EpisodeSplit::TestUnseen, 20),
        ]
        .into();
        Self { scene_splits, counts, max_steps: DEFAULT_MAX_STEPS }
    }
}

/// Attempts per episode, each with a fresh scene and counts, before an
/// exhaustion error propagates.
const EPISODE_ATTEMPTS: usize = 8;

fn one_episode(
    scenes: &[&GridScene],
    table: &PreferenceTable,
    categories: &[String],
    max_steps: usize,
    seed: u64,
    id: &str,
) -> Result<Episode, EpisodeError> {
    let mut last = None;
    for attempt in 0..EPISODE_ATTEMPTS {
        let mut rng = rng_for(seed, &format!("split:{id}:{attempt}"));
        let scene = scenes[rng.gen_range(0..scenes.len())];
        let n_m = rng.gen_range(MISPLACED_RANGE.0..=MISPLACED_RANGE.1);
        let total = rng.gen_range(TOTAL_RANGE.0..=TOTAL_RANGE.1);
        let spec = EpisodeSpec { n_misplaced: n_m, n_correct: total - n_m, max_steps };
        match generate_episode(scene, table, categories, &spec, mix_seed(seed, &format!("{attempt}")), id) {
            Ok(ep) => return Ok(ep),
            Err(e @ EpisodeError::GenerationExhausted(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Generates every split in `config.counts`. Episode ids are
/// `{split}-{k:04}`; output is independent of thread count.
pub fn generate_split(
    config: &SplitConfig,
    scenes: &[GridScene],
    table: &PreferenceTable,
    catalog: &Catalog,
    seed: u64,
) -> Result<BTreeMap<EpisodeSplit, Vec<Episode>>, EpisodeError> {
    let mut out = BTreeMap::new();
    for (&split, &count) in &config.counts {
        if count == 0 {
            out.insert(split, Vec::new());
            continue;
        }
        let pool: Vec<&GridScene> =
            scenes.iter().filter(|s| config.scene_splits.get(s.id()) == Some(&split.scenes())).collect();
        if pool.is_empty() {
            return Err(EpisodeError::GenerationExhausted(format!("split {split} has no {:?} scenes", split.scenes())));
        }
        let objects = catalog.names_in(split.objects());
        let categories: Vec<String> = table.objects().into_iter().filter(|o| objects.contains(o)).collect();
        let episodes: Result<Vec<Episode>, EpisodeError> = (0..count)
            .into_par_iter()
            .map(|k| one_episode(&pool, table, &categories, config.max_steps, seed, &format!("{split}-{k:04}")))
            .collect();
        out.insert(split, episodes?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_partitions_scenes() {
        let ids: Vec<String> = (0..7).map(|i| format!("s{i}")).collect();
        let cfg = SplitConfig::desk_scale(&ids);
        let count = |s| cfg.scene_splits.values().filter(|v| **v == s).count();
        assert_eq!((count(SceneSplit::Train), count(SceneSplit::Val), count(SceneSplit::Test)), (4, 1, 2));
        let three = SplitConfig::desk_scale(&ids[..3]);
        assert_eq!(three.scene_splits.values().copied().collect::<Vec<_>>(), vec![SceneSplit::Train, SceneSplit::Val, SceneSplit::Test]);
    }

    #[test]
    fn split_names_round_trip() {
        for s in EpisodeSplit::ALL {
            assert_eq!(s.as_str().parse::<EpisodeSplit>().unwrap(), s);
        }
    }
}
