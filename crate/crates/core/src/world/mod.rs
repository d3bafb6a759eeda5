//! Static world model: occupancy grid, rooms, receptacles, object catalog.

mod catalog;
mod grid;
mod scene;

pub use catalog::{Catalog, ObjectCategory, ObjectSplit};
pub use grid::{bfs_distances, Cell, CellKind, Grid, Heading};
pub use scene::{
    load_scene, write_scene, GridScene, Receptacle, ReceptacleFile, Room, RoomFile, SceneFile, WorldError,
    DEFAULT_CAPACITY, DEFAULT_CELL_SIZE_M,
};
