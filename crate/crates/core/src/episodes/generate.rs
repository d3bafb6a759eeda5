use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::solvable::{check_solvable, interactable_receptacles, reachable_poses};
use super::{Episode, EpisodeError, EpisodeObject, DEFAULT_MAX_STEPS, MISPLACED_RANGE, TOTAL_RANGE};
use crate::embodiment::{interact_range_cells, Pose};
use crate::preferences::{PlacementClass, PreferenceTable};
use crate::rng::rng_for;
use crate::world::{Cell, GridScene, Heading};

/// Rejection-sampling attempts per object before giving up.
pub const RETRY_BUDGET: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub n_misplaced: usize,
    pub n_correct: usize,
    pub max_steps: usize,
}

impl EpisodeSpec {
    pub fn new(n_misplaced: usize, n_correct: usize) -> Self {
        Self { n_misplaced, n_correct, max_steps: DEFAULT_MAX_STEPS }
    }

    fn validate(&self) -> Result<(), EpisodeError> {
        let total = self.n_misplaced + self.n_correct;
        let ok = (MISPLACED_RANGE.0..=MISPLACED_RANGE.1).contains(&self.n_misplaced) && (TOTAL_RANGE.0..=TOTAL_RANGE.1).contains(&total);
        if ok {
            Ok(())
        } else {
            Err(EpisodeError::InvalidCounts { misplaced: self.n_misplaced, total })
        }
    }
}

/// Class of an object category resting on receptacle instance `rec`.
/// Keys missing from the table count as Neutral.
pub fn placement_class(scene: &GridScene, table: &PreferenceTable, category: &str, rec: usize) -> PlacementClass {
    let room = scene.receptacle_room_category(rec);
    table.get(category, room, &scene.receptacles()[rec].category).map_or(PlacementClass::Neutral, |e| e.class())
}

fn start_pose(scene: &GridScene, rng: &mut impl Rng) -> Pose {
    let rec_cells: Vec<Cell> = scene.receptacles().iter().map(|r| r.cell).collect();
    let far: Vec<Cell> = scene.free_cells().filter(|c| rec_cells.iter().all(|r| r.manhattan(*c) >= 2)).collect();
    let pool = if far.is_empty() { scene.free_cells().filter(|c| scene.receptacle_at(*c).is_none()).collect() } else { far };
    let pool = if pool.is_empty() { scene.free_cells().collect() } else { pool };
    let cell = pool[rng.gen_range(0..pool.len())];
    Pose::new(cell, Heading::ALL[rng.gen_range(0..4)])
}

struct Placed {
    category: String,
    receptacle: usize,
    misplaced: bool,
}

/// Samples one episode: `n_misplaced` objects on receptacles of their
/// Misplaced class and `n_correct` on receptacles of their Correct class,
/// each object a distinct category from `categories`. Deterministic in
/// `seed`.
///
/// Besides per-object solvability, every misplaced object keeps at least
/// `n_misplaced` free slots across its Correct receptacles, so each can
/// still be rehomed after all the others have been.
pub fn generate_episode(
    scene: &GridScene,
    table: &PreferenceTable,
    categories: &[String],
    spec: &EpisodeSpec,
    seed: u64,
    id: &str,
) -> Result<Episode, EpisodeError> {
    spec.validate()?;
    let mut rng = rng_for(seed, &format!("episode:{id}"));
    let range = interact_range_cells(scene.cell_size_m());
    let start = start_pose(scene, &mut rng);
    let reach = reachable_poses(scene, &[start]);
    let graspable = interactable_receptacles(scene, &reach, range);

    let n_recs = scene.receptacles().len();
    let mut by_class: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for cat in categories {
        let correct: Vec<usize> = (0..n_recs).filter(|&r| placement_class(scene, table, cat, r) == PlacementClass::Correct).collect();
        if correct.is_empty() {
            continue;
        }
        let misplaced = (0..n_recs).filter(|&r| placement_class(scene, table, cat, r) == PlacementClass::Misplaced).collect();
        by_class.insert(cat.as_str(), (correct, misplaced));
    }

    let mut loads = vec![0u32; n_recs];
    let mut placed: Vec<Placed> = Vec::new();
    let capacity = |r: usize| scene.receptacles()[r].capacity;
    let slack_ok = |placed: &[Placed], loads: &[u32]| {
        placed.iter().filter(|p| p.misplaced).all(|p| {
            let free: u32 = by_class[p.category.as_str()].0.iter().map(|&r| capacity(r) - loads[r]).sum();
            free as usize >= spec.n_misplaced
        })
    };

    for slot in 0..spec.n_misplaced + spec.n_correct {
        let misplaced = slot < spec.n_misplaced;
        let used: BTreeSet<&str> = placed.iter().map(|p| p.category.as_str()).collect();
        let total_correct = |c: &[usize]| c.iter().map(|&r| capacity(r) as usize).sum::<usize>();
        let pool: Vec<&str> = by_class
            .iter()
            .filter(|(c, (ok, m))| !used.contains(*c) && (!misplaced || (!m.is_empty() && total_correct(ok) >= spec.n_misplaced)))
            .map(|(c, _)| *c)
            .collect();
        if pool.is_empty() {
            return Err(EpisodeError::GenerationExhausted(format!(
                "scene {} has no unused category with a {} receptacle",
                scene.id(),
                if misplaced { "misplaced" } else { "correct" }
            )));
        }
        let mut accepted = false;
        for _ in 0..RETRY_BUDGET {
            let cat = pool[rng.gen_range(0..pool.len())];
            let (correct, misplaced_recs) = &by_class[cat];
            let options: Vec<usize> = if misplaced { misplaced_recs } else { correct }
                .iter()
                .copied()
                .filter(|&r| loads[r] < capacity(r) && graspable.contains(&r))
                .collect();
            let Some(&rec) = options.choose(&mut rng) else { continue };
            loads[rec] += 1;
            placed.push(Placed { category: cat.to_string(), receptacle: rec, misplaced });
            if slack_ok(&placed, &loads) && (!misplaced || check_solvable(scene, table, start, &loads, cat, rec, range)) {
                accepted = true;
                break;
            }
            placed.pop();
            loads[rec] -= 1;
        }
        if !accepted {
            return Err(EpisodeError::GenerationExhausted(format!(
                "no valid placement for object slot {slot} in scene {} after {RETRY_BUDGET} attempts",
                scene.id()
            )));
        }
    }

    placed.shuffle(&mut rng);
    let objects = placed
        .into_iter()
        .enumerate()
        .map(|(k, p)| EpisodeObject {
            id: format!("obj_{k}"),
            category: p.category,
            on: scene.receptacles()[p.receptacle].id.clone(),
            misplaced: p.misplaced,
        })
        .collect();
    Ok(Episode { id: id.to_string(), scene_id: scene.id().to_string(), max_steps: spec.max_steps, agent_start: start, objects })
}
