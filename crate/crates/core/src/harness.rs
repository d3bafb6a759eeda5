//! Batch execution of episodes with a chosen ranker and explorer, and the
//! JSON-lines result format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episodes::Episode;
use crate::exploration::ExplorationKind;
use crate::metrics::{EpisodeResult, MetricsReport};
use crate::planner::{run_episode, PlannerConfig, RunError, TrajectoryLine};
use crate::preferences::PreferenceTable;
use crate::ranker::{EmbeddingRanker, ExternalScores, NoisyOracle, OracleScores, RandomScores, ScoreModel};
use crate::world::GridScene;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("episode {episode:?} references unknown scene {scene:?}")]
    UnknownScene { episode: String, scene: String },
    #[error("episode {episode} failed")]
    Run { episode: String, source: RunError },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("results file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerKind {
    Oracle,
    Embedding,
    External,
    Random,
    /// Oracle with per-object corruption; see [`NoisyOracle`].
    Noisy,
}

impl RankerKind {
    pub const ALL: [RankerKind; 5] = [RankerKind::Oracle, RankerKind::Embedding, RankerKind::External, RankerKind::Random, RankerKind::Noisy];

    pub fn as_str(self) -> &'static str {
        match self {
            RankerKind::Oracle => "oracle",
            RankerKind::Embedding => "embedding",
            RankerKind::External => "external",
            RankerKind::Random => "random",
            RankerKind::Noisy => "noisy",
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RankerKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown ranker {s:?}"))
    }
}

/// Scorer shared by every episode of a batch. Noisy and random scorers are
/// instantiated per episode from the batch seed.
pub enum RankerSource<'a> {
    Oracle,
    Embedding(&'a EmbeddingRanker),
    External(&'a ExternalScores),
    Random,
    Noisy { p: f64 },
}

impl RankerSource<'_> {
    pub fn kind(&self) -> RankerKind {
        match self {
            RankerSource::Oracle => RankerKind::Oracle,
            RankerSource::Embedding(_) => RankerKind::Embedding,
            RankerSource::External(_) => RankerKind::External,
            RankerSource::Random => RankerKind::Random,
            RankerSource::Noisy { .. } => RankerKind::Noisy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub explore: ExplorationKind,
    pub planner: PlannerConfig,
    pub seed: u64,
    /// Worker threads; 1 runs serially on the caller's thread.
    pub jobs: usize,
    pub keep_trajectories: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { explore: ExplorationKind::Frontier, planner: PlannerConfig::default(), seed: 0, jobs: 1, keep_trajectories: false }
    }
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub id: String,
    pub metrics: MetricsReport,
    pub result: EpisodeResult,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub line: ResultLine,
    pub trajectory: Vec<TrajectoryLine>,
}

fn run_one(
    scenes: &BTreeMap<String, GridScene>,
    episode: &Episode,
    table: &PreferenceTable,
    ranker: &RankerSource<'_>,
    config: &RunConfig,
) -> Result<EpisodeOutput, HarnessError> {
    let scene = scenes
        .get(&episode.scene_id)
        .ok_or_else(|| HarnessError::UnknownScene { episode: episode.id.clone(), scene: episode.scene_id.clone() })?;
    let go = |model: &dyn ScoreModel| run_episode(scene, episode, model, config.explore, &config.planner, config.seed, config.keep_trajectories);
    let run = match ranker {
        RankerSource::Oracle => go(&OracleScores::new(table)),
        RankerSource::Embedding(m) => go(*m),
        RankerSource::External(m) => go(*m),
        RankerSource::Random => go(&RandomScores::new(episode.run_seed(config.seed))),
        RankerSource::Noisy { p } => go(&NoisyOracle::for_episode(table, scene, episode, *p, config.seed)),
    }
    .map_err(|source| HarnessError::Run { episode: episode.id.clone(), source })?;
    let metrics = MetricsReport::compute(&run.result, table);
    log::debug!("{}: ES={} OS={} steps={}", episode.id, metrics.es, metrics.os, metrics.steps);
    Ok(EpisodeOutput { line: ResultLine { id: episode.id.clone(), metrics, result: run.result }, trajectory: run.trajectory })
}

/// Runs every episode; output order follows `episodes` whatever `jobs` is.
pub fn run_batch(
    scenes: &BTreeMap<String, GridScene>,
    episodes: &[Episode],
    table: &PreferenceTable,
    ranker: &RankerSource<'_>,
    config: &RunConfig,
) -> Result<Vec<EpisodeOutput>, HarnessError> {
    if config.jobs <= 1 {
        return episodes.iter().map(|ep| run_one(scenes, ep, table, ranker, config)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| episodes.par_iter().map(|ep| run_one(scenes, ep, table, ranker, config)).collect())
}

pub fn results_to_jsonl(lines: &[ResultLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("results serialize"));
        out.push('\n');
    }
    out
}

pub fn trajectory_to_jsonl(lines: &[TrajectoryLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("trajectory serializes"));
        out.push('\n');
    }
    out
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultLine>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| HarnessError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
