use std::collections::BTreeMap;

use super::{Pose, WorldState};
use crate::world::{Cell, CellKind, GridScene};

/// Field-of-view cone depth in cells (3 m at 0.25 m cells).
pub const DEFAULT_VIEW_DEPTH: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorConfig {
    pub depth: usize,
    pub interact_range: usize,
}

impl SensorConfig {
    pub fn for_scene(scene: &GridScene) -> Self {
        Self { depth: DEFAULT_VIEW_DEPTH, interact_range: super::interact_range_cells(scene.cell_size_m()) }
    }
}

/// Ground-truth perception for one pose. Instances are scene/world indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation {
    /// Sorted row-major.
    pub visible_cells: Vec<Cell>,
    pub visible_receptacles: Vec<usize>,
    pub visible_objects: Vec<usize>,
    /// `(object, receptacle)` pairs among visible instances.
    pub on_top: Vec<(usize, usize)>,
    pub receptacle_rooms: BTreeMap<usize, String>,
}

/// Grid line from `a` to `b`, both ends included. Along the major axis every
/// cell is visited; the minor offset at step `i` of `n` is `d·i/n` rounded
/// half away from zero.
pub fn line_cells(a: Cell, b: Cell) -> Vec<Cell> {
    let (dr, dc) = (b.r as isize - a.r as isize, b.c as isize - a.c as isize);
    let (n, m) = (dr.unsigned_abs().max(dc.unsigned_abs()), dr.unsigned_abs().min(dc.unsigned_abs()));
    let rows_major = dr.unsigned_abs() >= dc.unsigned_abs();
    let (s_major, s_minor) = if rows_major { (dr.signum(), dc.signum()) } else { (dc.signum(), dr.signum()) };
    let mut out = Vec::with_capacity(n + 1);
    out.push(a);
    // Incremental form of floor((2·i·m + n) / 2n).
    let mut num = n;
    let mut minor = 0isize;
    for i in 1..=n as isize {
        num += 2 * m;
        while num >= 2 * n {
            num -= 2 * n;
            minor += 1;
        }
        let (or, oc) = if rows_major { (i * s_major, minor * s_minor) } else { (minor * s_minor, i * s_major) };
        out.push(a.offset(or, oc).expect("line stays between its endpoints"));
    }
    out
}

/// Cells inside the view cone: forward distance `a ∈ [1, depth]`, lateral
/// offset `|b| ≤ a`, plus the agent's own cell.
pub fn cone_cells(scene: &GridScene, pose: Pose, depth: usize) -> Vec<Cell> {
    let (fr, fc) = pose.heading.delta();
    let (lr, lc) = pose.heading.right().delta();
    let mut out = vec![pose.cell];
    for a in 1..=depth as isize {
        for b in -a..=a {
            if let Some(cell) = pose.cell.offset(a * fr + b * lr, a * fc + b * lc) {
                if scene.grid().contains(cell) {
                    out.push(cell);
                }
            }
        }
    }
    out
}

pub fn line_of_sight(scene: &GridScene, from: Cell, to: Cell) -> bool {
    let line = line_cells(from, to);
    if line.len() <= 2 {
        return true;
    }
    line[1..line.len() - 1].iter().all(|c| scene.grid()[*c] != CellKind::Obstacle)
}

pub fn observe(scene: &GridScene, world: &WorldState, pose: Pose, sensor: &SensorConfig) -> Observation {
    let mut visible_cells: Vec<Cell> = cone_cells(scene, pose, sensor.depth).into_iter().filter(|c| line_of_sight(scene, pose.cell, *c)).collect();
    visible_cells.sort_unstable();
    let mut obs = Observation::default();
    for &cell in &visible_cells {
        if let Some(rec) = scene.receptacle_at(cell) {
            obs.visible_receptacles.push(rec);
            obs.receptacle_rooms.insert(rec, scene.receptacle_room_category(rec).to_string());
            for o in world.objects_on(rec) {
                obs.visible_objects.push(o);
                obs.on_top.push((o, rec));
            }
        }
    }
    obs.visible_cells = visible_cells;
    obs
}
