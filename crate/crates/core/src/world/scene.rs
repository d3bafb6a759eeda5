use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{bfs_distances, Cell, CellKind, Grid};

pub const DEFAULT_CELL_SIZE_M: f64 = 0.25;
pub const DEFAULT_CAPACITY: u32 = 4;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid cell {0}: out of bounds or not free")]
    InvalidCell(Cell),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Room {
    pub id: String,
    pub category: String,
    /// Sorted row-major.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Receptacle {
    pub id: String,
    pub category: String,
    pub room: String,
    pub cell: Cell,
    pub capacity: u32,
}

/// On-disk scene layout. Field names are the wire format.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub id: String,
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    pub grid: Vec<String>,
    pub rooms: Vec<RoomFile>,
    pub receptacles: Vec<ReceptacleFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomFile {
    pub id: String,
    pub category: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptacleFile {
    pub id: String,
    pub category: String,
    pub room: String,
    pub cell: Cell,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE_M
}

fn default_capacity() -> u32 {
    DEFAULT_CAPACITY
}

/// Immutable scene: occupancy grid, labelled rooms, and single-cell
/// receptacles.
#[derive(Clone, Debug)]
pub struct GridScene {
    id: String,
    cell_size_m: f64,
    grid: Grid<CellKind>,
    rooms: Vec<Room>,
    receptacles: Vec<Receptacle>,
    room_of_cell: Grid<Option<usize>>,
    receptacle_at: Grid<Option<usize>>,
    room_index: BTreeMap<String, usize>,
}

impl GridScene {
    /// Builds and validates a scene.
    pub fn from_file(file: SceneFile) -> Result<Self, WorldError> {
        let scene = Self::assemble(file)?;
        scene.validate()?;
        Ok(scene)
    }

    /// Builds a scene checking only structural consistency (grid shape,
    /// id references, bounds) and skipping the connectivity, labelling and
    /// receptacle-placement invariants. Used to probe solvability checks
    /// against deliberately broken layouts.
    pub fn from_file_unchecked(file: SceneFile) -> Result<Self, WorldError> {
        Self::assemble(file)
    }

    fn assemble(file: SceneFile) -> Result<Self, WorldError> {
        let rows = file.grid.len();
        if rows == 0 {
            return Err(WorldError::Parse("grid has no rows".into()));
        }
        let cols = file.grid[0].chars().count();
        if cols == 0 {
            return Err(WorldError::Parse("grid has empty rows".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for (r, line) in file.grid.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(WorldError::Parse(format!("grid row {r} has length {} (expected {cols})", line.chars().count())));
            }
            for (c, ch) in line.chars().enumerate() {
                data.push(match ch {
                    '.' => CellKind::Free,
                    '#' => CellKind::Obstacle,
                    other => return Err(WorldError::Parse(format!("unknown grid symbol {other:?} at ({r}, {c})"))),
                });
            }
        }
        let grid = Grid::from_rows(rows, cols, data);
        if !(file.cell_size_m.is_finite() && file.cell_size_m > 0.0) {
            return Err(WorldError::Parse(format!("cell_size_m must be positive, got {}", file.cell_size_m)));
        }

        let mut room_index = BTreeMap::new();
        let mut room_of_cell = Grid::filled(rows, cols, None);
        let mut rooms = Vec::with_capacity(file.rooms.len());
        for (idx, room) in file.rooms.into_iter().enumerate() {
            if room_index.insert(room.id.clone(), idx).is_some() {
                return Err(WorldError::Validation(format!("duplicate room id {:?}", room.id)));
            }
            let mut cells = room.cells;
            cells.sort();
            cells.dedup();
            for &cell in &cells {
                match room_of_cell.get_mut(cell) {
                    None => return Err(WorldError::Validation(format!("room {:?} cell {cell} out of bounds", room.id))),
                    Some(slot @ None) => *slot = Some(idx),
                    Some(Some(other)) => {
                        return Err(WorldError::Validation(format!(
                            "cell {cell} labelled by both room {:?} and room {:?}",
                            rooms.get(*other).map(|r: &Room| r.id.as_str()).unwrap_or("?"),
                            room.id
                        )))
                    }
                }
            }
            rooms.push(Room { id: room.id, category: room.category, cells });
        }

        let mut receptacle_at = Grid::filled(rows, cols, None);
        let mut receptacles = Vec::with_capacity(file.receptacles.len());
        let mut seen_ids = BTreeSet::new();
        for (idx, rec) in file.receptacles.into_iter().enumerate() {
            if !seen_ids.insert(rec.id.clone()) {
                return Err(WorldError::Validation(format!("duplicate receptacle id {:?}", rec.id)));
            }
            if !room_index.contains_key(&rec.room) {
                return Err(WorldError::Validation(format!("receptacle {:?} references unknown room {:?}", rec.id, rec.room)));
            }
            match receptacle_at.get_mut(rec.cell) {
                None => return Err(WorldError::Validation(format!("receptacle {:?} cell {} out of bounds", rec.id, rec.cell))),
                Some(slot @ None) => *slot = Some(idx),
                Some(Some(_)) => {
                    return Err(WorldError::Validation(format!("receptacle {:?} shares cell {} with another receptacle", rec.id, rec.cell)))
                }
            }
            if rec.capacity == 0 {
                return Err(WorldError::Validation(format!("receptacle {:?} has zero capacity", rec.id)));
            }
            receptacles.push(Receptacle {
                id: rec.id,
                category: rec.category,
                room: rec.room,
                cell: rec.cell,
                capacity: rec.capacity,
            });
        }

        Ok(Self {
            id: file.id,
            cell_size_m: file.cell_size_m,
            grid,
            rooms,
            receptacles,
            room_of_cell,
            receptacle_at,
            room_index,
        })
    }

    fn validate(&self) -> Result<(), WorldError> {
        for (cell, kind) in self.grid.iter() {
            let labelled = self.room_of_cell[cell];
            match (kind, labelled) {
                (CellKind::Free, None) => return Err(WorldError::Validation(format!("free cell {cell} has no room label"))),
                (CellKind::Obstacle, Some(room)) => {
                    return Err(WorldError::Validation(format!("room {:?} labels obstacle cell {cell}", self.rooms[room].id)))
                }
                _ => {}
            }
        }
        for room in &self.rooms {
            let Some(&first) = room.cells.first() else {
                return Err(WorldError::Validation(format!("room {:?} has no cells", room.id)));
            };
            let members: BTreeSet<Cell> = room.cells.iter().copied().collect();
            let dist = bfs_distances(&self.grid, first, |c| members.contains(&c));
            if let Some(cut) = room.cells.iter().find(|c| dist[**c].is_none()) {
                return Err(WorldError::Validation(format!("room {:?} is not connected: cell {cut} unreachable from {first}", room.id)));
            }
        }
        let free: Vec<Cell> = self.free_cells().collect();
        if let Some(&first) = free.first() {
            let dist = self.distance_field(first);
            if let Some(cut) = free.iter().find(|c| dist[**c].is_none()) {
                return Err(WorldError::Validation(format!("free space is disconnected: cell {cut} unreachable from {first}")));
            }
        } else {
            return Err(WorldError::Validation("scene has no free cells".into()));
        }
        for rec in &self.receptacles {
            if !self.is_free(rec.cell) {
                return Err(WorldError::Validation(format!("receptacle {:?} sits on obstacle cell {}", rec.id, rec.cell)));
            }
            let room_here = self.room_of_cell[rec.cell].map(|i| self.rooms[i].id.as_str());
            if room_here != Some(rec.room.as_str()) {
                return Err(WorldError::Validation(format!(
                    "receptacle {:?} declares room {:?} but cell {} belongs to {:?}",
                    rec.id, rec.room, rec.cell, room_here
                )));
            }
            if !self.grid.neighbours(rec.cell).any(|n| self.is_free(n)) {
                return Err(WorldError::Validation(format!("receptacle {:?} at {} has no free neighbour", rec.id, rec.cell)));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> SceneFile {
        let grid = (0..self.grid.rows())
            .map(|r| {
                (0..self.grid.cols())
                    .map(|c| match self.grid[Cell::new(r, c)] {
                        CellKind::Free => '.',
                        CellKind::Obstacle => '#',
                    })
                    .collect()
            })
            .collect();
        SceneFile {
            id: self.id.clone(),
            cell_size_m: self.cell_size_m,
            grid,
            rooms: self
                .rooms
                .iter()
                .map(|r| RoomFile { id: r.id.clone(), category: r.category.clone(), cells: r.cells.clone() })
                .collect(),
            receptacles: self
                .receptacles
                .iter()
                .map(|r| ReceptacleFile {
                    id: r.id.clone(),
                    category: r.category.clone(),
                    room: r.room.clone(),
                    cell: r.cell,
                    capacity: r.capacity,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn grid(&self) -> &Grid<CellKind> {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn receptacles(&self) -> &[Receptacle] {
        &self.receptacles
    }

    pub fn room(&self, id: &str) -> Option<&Room> {
        self.room_index.get(id).map(|&i| &self.rooms[i])
    }

    pub fn room_of(&self, cell: Cell) -> Option<&Room> {
        self.room_of_cell.get(cell).copied().flatten().map(|i| &self.rooms[i])
    }

    pub fn receptacle_index(&self, id: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r.id == id)
    }

    pub fn receptacle_at(&self, cell: Cell) -> Option<usize> {
        self.receptacle_at.get(cell).copied().flatten()
    }

    /// Room category of receptacle `idx`.
    pub fn receptacle_room_category(&self, idx: usize) -> &str {
        let rec = &self.receptacles[idx];
        &self.rooms[self.room_index[&rec.room]].category
    }

    /// Distinct `(room category, receptacle category)` pairs present.
    pub fn category_pairs(&self) -> BTreeSet<(String, String)> {
        (0..self.receptacles.len())
            .map(|i| (self.receptacle_room_category(i).to_string(), self.receptacles[i].category.clone()))
            .collect()
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        matches!(self.grid.get(cell), Some(CellKind::Free))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.grid.iter().filter(|(_, k)| **k == CellKind::Free).map(|(c, _)| c)
    }

    /// Number of free cells, the denominator of map coverage.
    pub fn navigable_area(&self) -> usize {
        self.free_cells().count()
    }

    pub fn distance_field(&self, from: Cell) -> Grid<Option<usize>> {
        bfs_distances(&self.grid, from, |c| self.is_free(c))
    }

    /// Shortest 4-connected path length in cells, `Ok(None)` when the
    /// cells are not connected.
    pub fn geodesic_distance(&self, from: Cell, to: Cell) -> Result<Option<usize>, WorldError> {
        for cell in [from, to] {
            if !self.is_free(cell) {
                return Err(WorldError::InvalidCell(cell));
            }
        }
        Ok(self.distance_field(from)[to])
    }

    pub fn geodesic_distance_m(&self, from: Cell, to: Cell) -> Result<Option<f64>, WorldError> {
        Ok(self.geodesic_distance(from, to)?.map(|d| d as f64 * self.cell_size_m))
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GridScene, WorldError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| WorldError::Io { path: path.to_path_buf(), source })?;
    GridScene::from_json(&text)
}

pub fn write_scene(scene: &GridScene, path: impl AsRef<Path>) -> Result<(), WorldError> {
    let path = path.as_ref();
    fs::write(path, scene.to_json() + "\n").map_err(|source| WorldError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_room(grid: &[&str], receptacles: &[(&str, [usize; 2])]) -> SceneFile {
        let cells = grid
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.chars().enumerate().filter(|(_, ch)| *ch == '.').map(move |(c, _)| Cell::new(r, c)))
            .collect();
        SceneFile {
            id: "t".into(),
            cell_size_m: DEFAULT_CELL_SIZE_M,
            grid: grid.iter().map(|s| s.to_string()).collect(),
            rooms: vec![RoomFile { id: "r0".into(), category: "kitchen".into(), cells }],
            receptacles: receptacles
                .iter()
                .map(|(id, cell)| ReceptacleFile {
                    id: id.to_string(),
                    category: "counter".into(),
                    room: "r0".into(),
                    cell: Cell::from(*cell),
                    capacity: DEFAULT_CAPACITY,
                })
                .collect(),
        }
    }

    #[test]
    fn minimal_scene_is_valid() {
        let scene = GridScene::from_file(single_room(&["...", "...", "..."], &[("a", [1, 1])])).unwrap();
        assert_eq!(scene.navigable_area(), 9);
        assert_eq!(scene.receptacle_at(Cell::new(1, 1)), Some(0));
    }

    #[test]
    fn receptacle_on_obstacle_rejected() {
        let mut file = single_room(&["...", ".#.", "..."], &[]);
        file.rooms[0].cells.retain(|c| *c != Cell::new(1, 1));
        file.receptacles.push(ReceptacleFile {
            id: "bad".into(),
            category: "counter".into(),
            room: "r0".into(),
            cell: Cell::new(1, 1),
            capacity: 1,
        });
        let err = GridScene::from_file(file).unwrap_err();
        assert!(matches!(&err, WorldError::Validation(m) if m.contains("bad") && m.contains("obstacle")), "{err}");
    }

    #[test]
    fn wall_splitting_free_space_rejected() {
        let mut file = single_room(&["..#..", "..#..", "..#.."], &[]);
        let (left, right): (Vec<Cell>, Vec<Cell>) = file.rooms[0].cells.iter().partition(|c| c.c < 2);
        file.rooms = vec![
            RoomFile { id: "a".into(), category: "kitchen".into(), cells: left },
            RoomFile { id: "b".into(), category: "office".into(), cells: right },
        ];
        let err = GridScene::from_file(file).unwrap_err();
        assert!(matches!(&err, WorldError::Validation(m) if m.contains("disconnected") && m.contains("(0, 3)")), "{err}");
    }

    #[test]
    fn unlabelled_free_cell_rejected() {
        let mut file = single_room(&["...", "..."], &[]);
        file.rooms[0].cells.pop();
        let err = GridScene::from_file(file).unwrap_err();
        assert!(matches!(&err, WorldError::Validation(m) if m.contains("(1, 2)")), "{err}");
    }

    #[test]
    fn missing_capacity_defaults_to_four() {
        let json = r#"{"id":"s","cell_size_m":0.25,"grid":["..",".."],
            "rooms":[{"id":"r","category":"kitchen","cells":[[0,0],[0,1],[1,0],[1,1]]}],
            "receptacles":[{"id":"x","category":"counter","room":"r","cell":[0,0]}]}"#;
        let scene = GridScene::from_json(json).unwrap();
        assert_eq!(scene.receptacles()[0].capacity, 4);
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let json = r#"{"id":"s","grid":[".."],"rooms":[],"receptacles":[],"extra":1}"#;
        assert!(matches!(GridScene::from_json(json), Err(WorldError::Parse(_))));
    }

    #[test]
    fn corridor_distance() {
        let scene = GridScene::from_file(single_room(&["....."], &[])).unwrap();
        let d = scene.geodesic_distance(Cell::new(0, 0), Cell::new(0, 4)).unwrap();
        assert_eq!(d, Some(4));
        assert_eq!(scene.geodesic_distance_m(Cell::new(0, 0), Cell::new(0, 4)).unwrap(), Some(1.0));
        assert_eq!(scene.geodesic_distance(Cell::new(0, 2), Cell::new(0, 2)).unwrap(), Some(0));
    }

    #[test]
    fn distance_to_obstacle_is_invalid() {
        let mut file = single_room(&["...", ".#.", "..."], &[]);
        file.rooms[0].cells.retain(|c| *c != Cell::new(1, 1));
        let scene = GridScene::from_file(file).unwrap();
        assert_eq!(scene.navigable_area(), 8);
        assert!(matches!(scene.geodesic_distance(Cell::new(0, 0), Cell::new(1, 1)), Err(WorldError::InvalidCell(_))));
        assert!(matches!(scene.geodesic_distance(Cell::new(0, 0), Cell::new(9, 9)), Err(WorldError::InvalidCell(_))));
    }
}
