//! Explore/rearrange control loop: decide which discovered objects are
//! misplaced, where each should go, and in which order to move them.

mod runner;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embodiment::Pose;
use crate::exploration::AlloMap;
use crate::ranker::{score_joint, ScoreModel};
use crate::world::Cell;

pub use runner::{run_episode, EpisodeRun, PlannerEvent, RunError, TrajectoryLine};

pub const DEFAULT_BURST: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    #[default]
    DiscoveryTime,
    ScoreGain,
    AgentObjectDist,
    ObjectReceptacleDist,
}

impl Ordering {
    pub const ALL: [Ordering; 4] = [Ordering::DiscoveryTime, Ordering::ScoreGain, Ordering::AgentObjectDist, Ordering::ObjectReceptacleDist];

    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::DiscoveryTime => "discovery-time",
            Ordering::ScoreGain => "score-gain",
            Ordering::AgentObjectDist => "agent-object-dist",
            Ordering::ObjectReceptacleDist => "object-receptacle-dist",
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ordering::ALL.into_iter().find(|o| o.as_str() == s).ok_or_else(|| format!("unknown ordering {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Exploration burst length.
    pub n_e: usize,
    /// Step budget; `None` uses the episode's own.
    pub max_steps: Option<usize>,
    pub ordering: Ordering,
    /// A receptacle is Correct for an object when its ORR score exceeds this.
    pub s_l: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { n_e: DEFAULT_BURST, max_steps: None, ordering: Ordering::DiscoveryTime, s_l: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedMove {
    pub object: usize,
    pub target: usize,
    /// Joint probability of the target minus that of the current receptacle.
    pub gain: f64,
}

/// Objects the planner must not touch, or not move to a given receptacle.
#[derive(Clone, Debug, Default)]
pub struct Exclusions {
    pub blacklist: BTreeSet<(usize, usize)>,
    pub deferred: BTreeSet<usize>,
}

/// Receptacle indices per (room, receptacle category) pair.
type Instances = BTreeMap<(String, String), Vec<usize>>;

/// Candidate pairs and per-pair instances from the map.
fn discovered_pairs(map: &AlloMap) -> (Vec<(String, String)>, Instances) {
    let mut instances: Instances = BTreeMap::new();
    for (&idx, rec) in map.receptacles() {
        instances.entry((rec.room.clone(), rec.category.clone())).or_default().push(idx);
    }
    (instances.keys().cloned().collect(), instances)
}

fn dist_or_max(field: &crate::world::Grid<Option<usize>>, c: Cell) -> usize {
    field.get(c).copied().flatten().unwrap_or(usize::MAX / 4)
}

/// Best receptacle for `object` (category `category`, currently on
/// `current`, if any) among discovered receptacles scoring above `s_l`,
/// with the joint probabilities of the target and the current placement.
fn best_target<M: ScoreModel + ?Sized>(
    map: &AlloMap,
    model: &M,
    s_l: f64,
    object: usize,
    category: &str,
    current: Option<usize>,
    excluded: &BTreeSet<(usize, usize)>,
) -> Option<(usize, f64, f64)> {
    let (pairs, instances) = discovered_pairs(map);
    if pairs.is_empty() {
        return None;
    }
    let joint = score_joint(model, category, &pairs);
    let current_pair = current.and_then(|r| map.receptacles().get(&r)).map(|k| (k.room.clone(), k.category.clone()));
    let current_joint = joint
        .iter()
        .find(|j| current_pair.as_ref().is_some_and(|(r, c)| &j.room == r && &j.receptacle == c))
        .map_or(0.0, |j| j.joint);
    let origin = current.and_then(|r| map.receptacles().get(&r)).map(|k| k.cell);
    let field = origin.map(|c| map.distance_field(c));
    for j in joint.iter().filter(|j| j.orr > s_l) {
        let options = &instances[&(j.room.clone(), j.receptacle.clone())];
        let best = options
            .iter()
            .copied()
            .filter(|&r| Some(r) != current && !excluded.contains(&(object, r)))
            .min_by_key(|&r| (field.as_ref().map_or(0, |f| dist_or_max(f, map.receptacles()[&r].cell)), r));
        if let Some(r) = best {
            return Some((r, j.joint, current_joint));
        }
    }
    None
}

/// Whether the object's current receptacle classifies as incorrect.
fn is_misplaced<M: ScoreModel + ?Sized>(map: &AlloMap, model: &M, s_l: f64, category: &str, rec: usize) -> bool {
    match map.receptacles().get(&rec) {
        Some(k) => model.score_orr(category, &k.room, &k.category) <= s_l,
        None => false,
    }
}

/// Target for the held object: the best above-threshold receptacle, else
/// `fallback` (where it was picked), else the nearest known receptacle.
pub fn held_target<M: ScoreModel + ?Sized>(
    map: &AlloMap,
    model: &M,
    s_l: f64,
    object: usize,
    agent: Pose,
    fallback: Option<usize>,
    excluded: &Exclusions,
) -> Option<usize> {
    let category = &map.objects().get(&object)?.category;
    if let Some((r, _, _)) = best_target(map, model, s_l, object, category, None, &excluded.blacklist) {
        return Some(r);
    }
    if let Some(f) = fallback.filter(|f| map.receptacles().contains_key(f) && !excluded.blacklist.contains(&(object, *f))) {
        return Some(f);
    }
    let field = map.distance_field(agent.cell);
    map.receptacles()
        .iter()
        .filter(|(r, _)| !excluded.blacklist.contains(&(object, **r)))
        .min_by_key(|(r, k)| (dist_or_max(&field, k.cell), **r))
        .map(|(r, _)| *r)
}

/// Discovered objects whose current receptacle scores at or below `s_l`
/// and that have an above-threshold discovered target, sorted by
/// `config.ordering` (ties by object index).
pub fn pending_rearrangements<M: ScoreModel + ?Sized>(
    map: &AlloMap,
    agent: Pose,
    model: &M,
    config: &PlannerConfig,
    excluded: &Exclusions,
) -> Vec<PlannedMove> {
    let mut plan = Vec::new();
    for (&o, known) in map.objects() {
        let Some(rec) = known.on else { continue };
        if excluded.deferred.contains(&o) || !is_misplaced(map, model, config.s_l, &known.category, rec) {
            continue;
        }
        if let Some((target, best, current)) = best_target(map, model, config.s_l, o, &known.category, Some(rec), &excluded.blacklist) {
            plan.push(PlannedMove { object: o, target, gain: best - current });
        }
    }
    let agent_field = map.distance_field(agent.cell);
    let object_cell = |m: &PlannedMove| map.receptacles()[&map.objects()[&m.object].on.expect("planned objects are placed")].cell;
    let key = |m: &PlannedMove| -> (f64, usize) {
        match config.ordering {
            Ordering::DiscoveryTime => (map.objects()[&m.object].t_discovered as f64, m.object),
            Ordering::ScoreGain => (-m.gain, m.object),
            Ordering::AgentObjectDist => (dist_or_max(&agent_field, object_cell(m)) as f64, m.object),
            Ordering::ObjectReceptacleDist => {
                let from_object = map.distance_field(object_cell(m));
                let leg = dist_or_max(&from_object, map.receptacles()[&m.target].cell);
                ((dist_or_max(&agent_field, object_cell(m)) + leg) as f64, m.object)
            }
        }
    };
    let mut keyed: Vec<((f64, usize), PlannedMove)> = plan.into_iter().map(|m| (key(&m), m)).collect();
    keyed.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.cmp(&b.0 .1)));
    keyed.into_iter().map(|(_, m)| m).collect()
}
