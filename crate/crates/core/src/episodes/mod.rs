//! Episodes: an initial object placement in a scene plus the agent's start.

mod generate;
mod solvable;
mod split;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embodiment::{ObjectInstance, Pose, WorldState};
use crate::world::GridScene;

pub use generate::{generate_episode, placement_class, EpisodeSpec, RETRY_BUDGET};
pub use solvable::{check_solvable, interactable_receptacles, reachable_poses};
pub use split::{generate_split, EpisodeSplit, SceneSplit, SplitConfig};

pub const DEFAULT_MAX_STEPS: usize = 1000;
pub const MISPLACED_RANGE: (usize, usize) = (3, 5);
pub const TOTAL_RANGE: (usize, usize) = (7, 10);

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid counts: {misplaced} misplaced of {total} objects (need 3-5 misplaced, 7-10 total)")]
    InvalidCounts { misplaced: usize, total: usize },
    #[error("generation exhausted its retry budget: {0}")]
    GenerationExhausted(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid episode {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeObject {
    pub id: String,
    pub category: String,
    /// Receptacle id.
    pub on: String,
    pub misplaced: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// Optional in input files; readers fill it from the line position.
    #[serde(default)]
    pub id: String,
    pub scene_id: String,
    pub max_steps: usize,
    pub agent_start: Pose,
    pub objects: Vec<EpisodeObject>,
}

impl Episode {
    pub fn misplaced_ids(&self) -> BTreeSet<&str> {
        self.objects.iter().filter(|o| o.misplaced).map(|o| o.id.as_str()).collect()
    }

    pub fn misplaced_count(&self) -> usize {
        self.objects.iter().filter(|o| o.misplaced).count()
    }

    /// Seed used for everything random inside this episode's run.
    pub fn run_seed(&self, base: u64) -> u64 {
        crate::rng::mix_seed(base, &format!("run:{}", self.id))
    }

    /// Instantiates the object layout in `scene`.
    pub fn world_state(&self, scene: &GridScene) -> Result<WorldState, EpisodeError> {
        let invalid = |reason: String| EpisodeError::Invalid { id: self.id.clone(), reason };
        if scene.id() != self.scene_id {
            return Err(invalid(format!("scene {} does not match {}", scene.id(), self.scene_id)));
        }
        if !scene.is_free(self.agent_start.cell) {
            return Err(invalid(format!("agent start {} is not a free cell", self.agent_start.cell)));
        }
        let mut ids = BTreeSet::new();
        let mut placements = Vec::with_capacity(self.objects.len());
        for obj in &self.objects {
            if !ids.insert(&obj.id) {
                return Err(invalid(format!("duplicate object id {}", obj.id)));
            }
            let rec = scene.receptacle_index(&obj.on).ok_or_else(|| invalid(format!("unknown receptacle {}", obj.on)))?;
            placements.push((ObjectInstance { id: obj.id.clone(), category: obj.category.clone() }, rec));
        }
        WorldState::new(scene, placements).map_err(|e| invalid(e.to_string()))
    }
}

/// Reads a JSON-lines episode file. Missing ids become `ep{line:04}`.
pub fn read_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>, EpisodeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EpisodeError::Io { path: path.to_path_buf(), source })?;
    parse_episodes(&text)
}

pub fn parse_episodes(text: &str) -> Result<Vec<Episode>, EpisodeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut ep: Episode = serde_json::from_str(line).map_err(|e| EpisodeError::Parse(format!("line {}: {e}", i + 1)))?;
        if ep.id.is_empty() {
            ep.id = format!("ep{i:04}");
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn episodes_to_jsonl(episodes: &[Episode]) -> String {
    let mut s = String::new();
    for ep in episodes {
        s.push_str(&serde_json::to_string(ep).expect("episode serializes"));
        s.push('\n');
    }
    s
}

pub fn write_episodes(path: impl AsRef<Path>, episodes: &[Episode]) -> Result<(), EpisodeError> {
    let path = path.as_ref();
    let io = |source| EpisodeError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(episodes_to_jsonl(episodes).as_bytes()).map_err(io)
}
