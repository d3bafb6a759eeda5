use std::collections::{BTreeSet, VecDeque};

use super::generate::placement_class;
use crate::embodiment::{ray_hit, Pose};
use crate::preferences::{PlacementClass, PreferenceTable};
use crate::world::{Cell, GridScene, Heading};

fn pose_index(scene: &GridScene, p: Pose) -> usize {
    (p.cell.r * scene.cols() + p.cell.c) * 4 + p.heading.index()
}

/// Poses reachable from any of `sources` on the ground-truth grid,
/// indexed `(r·cols + c)·4 + heading`.
pub fn reachable_poses(scene: &GridScene, sources: &[Pose]) -> Vec<bool> {
    let mut seen = vec![false; scene.rows() * scene.cols() * 4];
    let mut queue = VecDeque::new();
    for &s in sources {
        if scene.is_free(s.cell) && !seen[pose_index(scene, s)] {
            seen[pose_index(scene, s)] = true;
            queue.push_back(s);
        }
    }
    while let Some(p) = queue.pop_front() {
        let mut next = vec![Pose::new(p.cell, p.heading.left()), Pose::new(p.cell, p.heading.right())];
        if let Some(c) = p.cell.step(p.heading).filter(|c| scene.is_free(*c)) {
            next.push(Pose::new(c, p.heading));
        }
        for n in next {
            let i = pose_index(scene, n);
            if !seen[i] {
                seen[i] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

fn poses(scene: &GridScene, reach: &[bool]) -> Vec<Pose> {
    let cols = scene.cols();
    reach
        .iter()
        .enumerate()
        .filter(|(_, r)| **r)
        .map(|(i, _)| Pose::new(Cell::new(i / 4 / cols, i / 4 % cols), Heading::ALL[i % 4]))
        .collect()
}

/// Receptacles the interaction ray can hit from some reachable pose.
pub fn interactable_receptacles(scene: &GridScene, reach: &[bool], range: usize) -> BTreeSet<usize> {
    poses(scene, reach).into_iter().filter_map(|p| ray_hit(scene, p, range)).collect()
}

/// Whether an object of `category` resting on `receptacle` can be picked
/// from `start` and then placed on some Correct receptacle with spare
/// capacity. `loads` are the current per-receptacle object counts.
pub fn check_solvable(
    scene: &GridScene,
    table: &PreferenceTable,
    start: Pose,
    loads: &[u32],
    category: &str,
    receptacle: usize,
    range: usize,
) -> bool {
    let reach = reachable_poses(scene, &[start]);
    let pick_poses: Vec<Pose> = poses(scene, &reach).into_iter().filter(|p| ray_hit(scene, *p, range) == Some(receptacle)).collect();
    if pick_poses.is_empty() {
        return false;
    }
    let after = reachable_poses(scene, &pick_poses);
    let placeable = interactable_receptacles(scene, &after, range);
    placeable.into_iter().any(|r| {
        r != receptacle
            && loads[r] < scene.receptacles()[r].capacity
            && placement_class(scene, table, category, r) == PlacementClass::Correct
    })
}
