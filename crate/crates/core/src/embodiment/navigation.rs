//! Shortest action sequences over `(cell, heading)` states.

use std::collections::VecDeque;

use super::{Action, EmbodimentError, Pose};
use crate::world::{Cell, GridScene, Heading};

/// What a planner may assume about the grid.
pub trait Traversable {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// The agent may stand on `cell`.
    fn passable(&self, cell: Cell) -> bool;
    /// The interaction ray passes through `cell` without stopping.
    fn ray_clear(&self, cell: Cell) -> bool;
}

impl Traversable for GridScene {
    fn rows(&self) -> usize {
        GridScene::rows(self)
    }

    fn cols(&self) -> usize {
        GridScene::cols(self)
    }

    fn passable(&self, cell: Cell) -> bool {
        self.is_free(cell)
    }

    fn ray_clear(&self, cell: Cell) -> bool {
        self.is_free(cell) && self.receptacle_at(cell).is_none()
    }
}

/// Whether the interaction ray from `pose` reaches `target` within `range`.
pub fn facing_within_range<T: Traversable + ?Sized>(map: &T, pose: Pose, target: Cell, range: usize) -> bool {
    let mut cell = pose.cell;
    for _ in 0..range {
        let Some(next) = cell.step(pose.heading) else {
            return false;
        };
        if next == target {
            return true;
        }
        if !map.ray_clear(next) {
            return false;
        }
        cell = next;
    }
    false
}

/// Breadth-first search over poses; Forward and both turns cost one action.
/// Expansion order Forward, TurnLeft, TurnRight makes the result
/// deterministic. Returns the actions to the first pose satisfying `goal`.
pub fn plan_actions<T: Traversable + ?Sized>(map: &T, start: Pose, goal: impl Fn(Pose) -> bool) -> Option<Vec<Action>> {
    if goal(start) {
        return Some(Vec::new());
    }
    let (rows, cols) = (map.rows(), map.cols());
    let idx = |p: Pose| (p.cell.r * cols + p.cell.c) * 4 + p.heading.index();
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; rows * cols * 4];
    let mut seen = vec![false; rows * cols * 4];
    let mut queue = VecDeque::new();
    seen[idx(start)] = true;
    queue.push_back(start);
    let decode = |i: usize| {
        let h = Heading::ALL[i % 4];
        let cell = i / 4;
        Pose::new(Cell::new(cell / cols, cell % cols), h)
    };
    while let Some(pose) = queue.pop_front() {
        let moves = [
            (Action::Forward, pose.cell.step(pose.heading).filter(|c| c.r < rows && c.c < cols && map.passable(*c)).map(|c| Pose::new(c, pose.heading))),
            (Action::TurnLeft, Some(Pose::new(pose.cell, pose.heading.left()))),
            (Action::TurnRight, Some(Pose::new(pose.cell, pose.heading.right()))),
        ];
        for (action, next) in moves {
            let Some(next) = next else { continue };
            let i = idx(next);
            if seen[i] {
                continue;
            }
            seen[i] = true;
            parent[i] = Some((idx(pose), action));
            if goal(next) {
                let mut actions = vec![action];
                let mut cur = idx(pose);
                while let Some((prev, a)) = parent[cur] {
                    actions.push(a);
                    cur = prev;
                }
                debug_assert_eq!(decode(cur), start);
                actions.reverse();
                return Some(actions);
            }
            queue.push_back(next);
        }
    }
    None
}

/// Shortest action sequence ending at a pose whose interaction ray reaches
/// `target` within `range`.
pub fn navigate_to<T: Traversable + ?Sized>(map: &T, start: Pose, target: Cell, range: usize) -> Result<Vec<Action>, EmbodimentError> {
    plan_actions(map, start, |p| facing_within_range(map, p, target, range)).ok_or(EmbodimentError::NoPath(target))
}
