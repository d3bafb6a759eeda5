//! Allocentric map built from observations, frontier extraction, and the
//! exploration strategies.

mod strategy;

use std::collections::BTreeMap;

use crate::embodiment::{InteractOutcome, Observation, Traversable, WorldState};
use crate::world::{bfs_distances, Cell, CellKind, Grid, GridScene};

pub use strategy::{ExplorationError, ExplorationKind, Explorer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapCell {
    Unknown,
    Free,
    Obstacle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnownReceptacle {
    pub cell: Cell,
    pub category: String,
    pub room: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnownObject {
    pub category: String,
    /// Last known receptacle; `None` while held.
    pub on: Option<usize>,
    pub t_discovered: usize,
}

/// The agent's top-down map. Cells never revert to Unknown and discovered
/// instances are never forgotten.
#[derive(Clone, Debug)]
pub struct AlloMap {
    cells: Grid<MapCell>,
    receptacle_at: Grid<Option<usize>>,
    receptacles: BTreeMap<usize, KnownReceptacle>,
    objects: BTreeMap<usize, KnownObject>,
    known_free: usize,
}

impl AlloMap {
    pub fn new(scene: &GridScene) -> Self {
        Self {
            cells: Grid::filled(scene.rows(), scene.cols(), MapCell::Unknown),
            receptacle_at: Grid::filled(scene.rows(), scene.cols(), None),
            receptacles: BTreeMap::new(),
            objects: BTreeMap::new(),
            known_free: 0,
        }
    }

    /// Map with every cell and instance already known, all discovered at `t`.
    pub fn fully_revealed(scene: &GridScene, world: &WorldState, t: usize) -> Self {
        let mut map = Self::new(scene);
        let all_cells: Vec<Cell> = scene.grid().cells().collect();
        for &cell in &all_cells {
            map.mark(scene, cell);
        }
        for (rec, _) in scene.receptacles().iter().enumerate() {
            map.add_receptacle(scene, rec);
        }
        for (o, obj) in world.objects().iter().enumerate() {
            map.objects.insert(o, KnownObject { category: obj.category.clone(), on: world.receptacle_of(o), t_discovered: t });
        }
        map
    }

    fn mark(&mut self, scene: &GridScene, cell: Cell) {
        let slot = self.cells.get_mut(cell).expect("cell in bounds");
        if *slot == MapCell::Unknown {
            *slot = match scene.grid()[cell] {
                CellKind::Free => {
                    self.known_free += 1;
                    MapCell::Free
                }
                CellKind::Obstacle => MapCell::Obstacle,
            };
        }
    }

    fn add_receptacle(&mut self, scene: &GridScene, rec: usize) {
        let r = &scene.receptacles()[rec];
        self.receptacles.entry(rec).or_insert_with(|| KnownReceptacle {
            cell: r.cell,
            category: r.category.clone(),
            room: scene.receptacle_room_category(rec).to_string(),
        });
        if let Some(slot) = self.receptacle_at.get_mut(r.cell) {
            *slot = Some(rec);
        }
    }

    /// Folds one observation taken at step `t` into the map.
    pub fn update(&mut self, scene: &GridScene, world: &WorldState, obs: &Observation, t: usize) {
        for &cell in &obs.visible_cells {
            self.mark(scene, cell);
        }
        for &rec in &obs.visible_receptacles {
            self.add_receptacle(scene, rec);
            // Anything mapped on a visible receptacle but not seen there has moved.
            for (&o, known) in self.objects.iter_mut() {
                if known.on == Some(rec) && !obs.on_top.contains(&(o, rec)) {
                    known.on = None;
                }
            }
        }
        for &(o, rec) in &obs.on_top {
            let entry = self.objects.entry(o).or_insert_with(|| KnownObject {
                category: world.objects()[o].category.clone(),
                on: Some(rec),
                t_discovered: t,
            });
            entry.on = Some(rec);
        }
    }

    pub fn apply_interaction(&mut self, outcome: &InteractOutcome) {
        match *outcome {
            InteractOutcome::Picked { object, .. } => {
                if let Some(k) = self.objects.get_mut(&object) {
                    k.on = None;
                }
            }
            InteractOutcome::Placed { object, receptacle } => {
                if let Some(k) = self.objects.get_mut(&object) {
                    k.on = Some(receptacle);
                }
            }
            InteractOutcome::PlaceFailed { .. } | InteractOutcome::NoTarget => {}
        }
    }

    pub fn cell(&self, cell: Cell) -> MapCell {
        self.cells.get(cell).copied().unwrap_or(MapCell::Obstacle)
    }

    pub fn cells(&self) -> &Grid<MapCell> {
        &self.cells
    }

    pub fn receptacles(&self) -> &BTreeMap<usize, KnownReceptacle> {
        &self.receptacles
    }

    pub fn objects(&self) -> &BTreeMap<usize, KnownObject> {
        &self.objects
    }

    pub fn known_receptacle_at(&self, cell: Cell) -> Option<usize> {
        self.receptacle_at.get(cell).copied().flatten()
    }

    pub fn known_free(&self) -> usize {
        self.known_free
    }

    /// Percentage of the scene's free cells that are mapped Free.
    pub fn coverage(&self, scene: &GridScene) -> f64 {
        100.0 * self.known_free as f64 / scene.navigable_area() as f64
    }

    pub fn is_frontier(&self, cell: Cell) -> bool {
        self.cell(cell) == MapCell::Free && self.cells.neighbours(cell).any(|n| self.cells[n] == MapCell::Unknown)
    }

    /// Geodesic distances over mapped Free cells.
    pub fn distance_field(&self, from: Cell) -> Grid<Option<usize>> {
        bfs_distances(&self.cells, from, |c| self.cells[c] == MapCell::Free)
    }

    /// Free cells bordering Unknown space, nearest first (unreachable last),
    /// ties row-major.
    pub fn frontiers(&self, agent: Cell) -> Vec<Cell> {
        let dist = self.distance_field(agent);
        let mut out: Vec<(usize, Cell)> =
            self.cells.cells().filter(|c| self.is_frontier(*c)).map(|c| (dist[c].unwrap_or(usize::MAX), c)).collect();
        out.sort_unstable();
        out.into_iter().map(|(_, c)| c).collect()
    }

    /// Text rendering: `?` unknown, `.` free, `#` obstacle, `R` receptacle.
    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.cells.rows() * (self.cells.cols() + 1));
        for r in 0..self.cells.rows() {
            for c in 0..self.cells.cols() {
                let cell = Cell::new(r, c);
                s.push(match (self.cells[cell], self.known_receptacle_at(cell)) {
                    (_, Some(_)) => 'R',
                    (MapCell::Unknown, _) => '?',
                    (MapCell::Free, _) => '.',
                    (MapCell::Obstacle, _) => '#',
                });
            }
            s.push('\n');
        }
        s
    }
}

impl Traversable for AlloMap {
    fn rows(&self) -> usize {
        self.cells.rows()
    }

    fn cols(&self) -> usize {
        self.cells.cols()
    }

    fn passable(&self, cell: Cell) -> bool {
        self.cell(cell) == MapCell::Free
    }

    fn ray_clear(&self, cell: Cell) -> bool {
        self.cell(cell) == MapCell::Free && self.known_receptacle_at(cell).is_none()
    }
}
