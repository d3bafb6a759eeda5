use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AlloMap, MapCell};
use crate::embodiment::{plan_actions, Action, Pose};
use crate::rng::{rng_for, DetRng};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ExplorationError {
    #[error("no reachable frontier remains")]
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationKind {
    Frontier,
    Random,
    ForwardRight,
    /// Map handed over complete at t = 0; never explores.
    Oracle,
}

impl ExplorationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplorationKind::Frontier => "frontier",
            ExplorationKind::Random => "random",
            ExplorationKind::ForwardRight => "forward-right",
            ExplorationKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ExplorationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplorationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frontier" => Ok(ExplorationKind::Frontier),
            "random" => Ok(ExplorationKind::Random),
            "forward-right" => Ok(ExplorationKind::ForwardRight),
            "oracle" => Ok(ExplorationKind::Oracle),
            other => Err(format!("unknown exploration strategy {other:?}")),
        }
    }
}

/// Stateful exploration policy. All strategies report `Exhausted` once the
/// map has no frontier left.
#[derive(Clone, Debug)]
pub struct Explorer {
    kind: ExplorationKind,
    rng: DetRng,
}

impl Explorer {
    pub fn new(kind: ExplorationKind, seed: u64) -> Self {
        Self { kind, rng: rng_for(seed, "explore") }
    }

    pub fn kind(&self) -> ExplorationKind {
        self.kind
    }

    /// Next exploration action. `last_collision` is the collision flag of
    /// the previous step.
    pub fn next_action(&mut self, map: &AlloMap, pose: Pose, last_collision: bool) -> Result<Action, ExplorationError> {
        let frontiers = map.frontiers(pose.cell);
        if frontiers.is_empty() {
            return Err(ExplorationError::Exhausted);
        }
        match self.kind {
            ExplorationKind::Oracle => Err(ExplorationError::Exhausted),
            ExplorationKind::Random => Ok([Action::Forward, Action::TurnLeft, Action::TurnRight][self.rng.gen_range(0..3)]),
            ExplorationKind::ForwardRight => Ok(if last_collision { Action::TurnRight } else { Action::Forward }),
            ExplorationKind::Frontier => {
                let dist = map.distance_field(pose.cell);
                for target in frontiers.into_iter().take_while(|f| dist[*f].is_some()) {
                    let faces_unknown = |p: Pose| {
                        p.cell == target && p.cell.step(p.heading).is_some_and(|n| map.cells().get(n) == Some(&MapCell::Unknown))
                    };
                    if let Some(actions) = plan_actions(map, pose, faces_unknown) {
                        if let Some(&first) = actions.first() {
                            return Ok(first);
                        }
                    }
                }
                Err(ExplorationError::Exhausted)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embodiment::test_scenes::scene;
    use crate::embodiment::{Sim, SensorConfig, WorldState};
    use crate::world::{Cell, Heading};

    #[test]
    fn no_frontiers_is_exhausted() {
        let s = scene(&["...", "..."]);
        let world = WorldState::new(&s, vec![]).unwrap();
        let map = AlloMap::fully_revealed(&s, &world, 0);
        let mut ex = Explorer::new(ExplorationKind::Frontier, 1);
        assert_eq!(ex.next_action(&map, Pose::new(Cell::new(0, 0), Heading::East), false), Err(ExplorationError::Exhausted));
    }

    #[test]
    fn forward_right_turns_after_collision() {
        let s = scene(&["...", "..."]);
        let map = AlloMap::new(&s);
        let mut map = map;
        let world = WorldState::new(&s, vec![]).unwrap();
        map.update(&s, &world, &crate::embodiment::observe(&s, &world, Pose::new(Cell::new(0, 0), Heading::East), &SensorConfig::for_scene(&s)), 0);
        let mut ex = Explorer::new(ExplorationKind::ForwardRight, 1);
        let pose = Pose::new(Cell::new(0, 0), Heading::East);
        assert_eq!(ex.next_action(&map, pose, true), Ok(Action::TurnRight));
        assert_eq!(ex.next_action(&map, pose, false), Ok(Action::Forward));
    }

    #[test]
    fn frontier_covers_open_room_within_four_area_steps() {
        let rows: Vec<String> = (0..10).map(|_| ".".repeat(10)).collect();
        let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
        let s = scene(&rows);
        let world = WorldState::new(&s, vec![]).unwrap();
        let budget = 4 * s.navigable_area();
        let mut sim = Sim::new(&s, world, Pose::new(Cell::new(4, 4), Heading::North), budget, SensorConfig::for_scene(&s)).unwrap();
        let mut map = AlloMap::new(&s);
        map.update(&s, sim.world(), &sim.observe(), 0);
        let mut ex = Explorer::new(ExplorationKind::Frontier, 0);
        let mut collision = false;
        while let Ok(action) = ex.next_action(&map, sim.agent().pose, collision) {
            let out = sim.step(action).unwrap();
            collision = out.collision;
            map.update(&s, sim.world(), &out.observation, sim.agent().step_count);
        }
        assert_eq!(map.known_free(), s.navigable_area());
        assert!(sim.agent().step_count <= budget);
    }

    #[test]
    fn random_is_seed_deterministic() {
        let s = scene(&["....", "...."]);
        let map = AlloMap::new(&s);
        let mut map2 = map.clone();
        let world = WorldState::new(&s, vec![]).unwrap();
        let obs = crate::embodiment::observe(&s, &world, Pose::new(Cell::new(0, 0), Heading::East), &SensorConfig { depth: 1, interact_range: 6 });
        map2.update(&s, &world, &obs, 0);
        let pose = Pose::new(Cell::new(0, 0), Heading::East);
        let seq = |seed| {
            let mut ex = Explorer::new(ExplorationKind::Random, seed);
            (0..20).map(|_| ex.next_action(&map2, pose, false).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(seq(4), seq(4));
        assert_ne!(seq(4), seq(5));
    }
}
