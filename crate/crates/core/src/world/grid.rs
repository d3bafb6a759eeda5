//! Grid primitives: cells, headings, and breadth-first distance fields.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell addressed by `(row, col)`. Row 0 is the top row.
///
/// Serialized as a two-element array `[r, c]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub r: usize,
    pub c: usize,
}

impl Cell {
    pub const fn new(r: usize, c: usize) -> Self {
        Self { r, c }
    }

    /// Cell one step along `heading`, or `None` when that leaves the
    /// non-negative quadrant. Upper bounds are the caller's concern.
    pub fn step(self, heading: Heading) -> Option<Cell> {
        let (dr, dc) = heading.delta();
        self.offset(dr, dc)
    }

    pub fn offset(self, dr: isize, dc: isize) -> Option<Cell> {
        let r = self.r.checked_add_signed(dr)?;
        let c = self.c.checked_add_signed(dc)?;
        Some(Cell { r, c })
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.r.abs_diff(other.r) + self.c.abs_diff(other.c)
    }

    /// The four 4-connected neighbours that do not underflow.
    pub fn neighbours(self) -> impl Iterator<Item = Cell> {
        Heading::ALL.into_iter().filter_map(move |h| self.step(h))
    }
}

impl From<[usize; 2]> for Cell {
    fn from([r, c]: [usize; 2]) -> Self {
        Cell { r, c }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(cell: Cell) -> Self {
        [cell.r, cell.c]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.r, self.c)
    }
}

/// Cardinal heading. North decreases the row index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "W")]
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub const fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub const fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub const fn right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub const fn index(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    pub const fn letter(self) -> char {
        match self {
            Heading::North => 'N',
            Heading::East => 'E',
            Heading::South => 'S',
            Heading::West => 'W',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Free,
    Obstacle,
}

/// Dense row-major 2D array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }
}

impl<T> Grid<T> {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "grid data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.r < self.rows && cell.c < self.cols
    }

    pub fn get(&self, cell: Cell) -> Option<&T> {
        self.contains(cell).then(|| &self.data[cell.r * self.cols + cell.c])
    }

    pub fn get_mut(&mut self, cell: Cell) -> Option<&mut T> {
        if self.contains(cell) {
            Some(&mut self.data[cell.r * self.cols + cell.c])
        } else {
            None
        }
    }

    pub fn index_of(&self, cell: Cell) -> usize {
        cell.r * self.cols + cell.c
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, &T)> + '_ {
        self.cells().zip(self.data.iter())
    }

    /// In-bounds 4-neighbours of `cell`.
    pub fn neighbours(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        cell.neighbours().filter(move |n| self.contains(*n))
    }
}

impl<T> std::ops::Index<Cell> for Grid<T> {
    type Output = T;

    fn index(&self, cell: Cell) -> &T {
        assert!(self.contains(cell), "cell {cell} out of bounds");
        &self.data[cell.r * self.cols + cell.c]
    }
}

impl<T> std::ops::IndexMut<Cell> for Grid<T> {
    fn index_mut(&mut self, cell: Cell) -> &mut T {
        assert!(self.contains(cell), "cell {cell} out of bounds");
        let cols = self.cols;
        &mut self.data[cell.r * cols + cell.c]
    }
}

/// Breadth-first distance field from `source` over cells accepted by
/// `passable`. Unreached cells hold `None`.
pub fn bfs_distances<T>(grid: &Grid<T>, source: Cell, passable: impl Fn(Cell) -> bool) -> Grid<Option<usize>> {
    let mut dist = Grid::filled(grid.rows(), grid.cols(), None);
    if !grid.contains(source) || !passable(source) {
        return dist;
    }
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell].expect("queued cells have a distance");
        for n in grid.neighbours(cell) {
            if dist[n].is_none() && passable(n) {
                dist[n] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}
