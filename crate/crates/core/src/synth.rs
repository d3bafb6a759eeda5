//! Desk-scale synthetic data: multi-room scenes, an object catalog, word
//! vectors with group structure, and a preference table whose Correct
//! placements are shared within object groups.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::preferences::{key, PreferenceEntry, PreferenceTable, SceneVocabulary};
use crate::ranker::EmbeddingTable;
use crate::rng::rng_for;
use crate::world::{Catalog, Cell, GridScene, ObjectCategory, ObjectSplit, ReceptacleFile, RoomFile, SceneFile, WorldError};

/// Room categories with the receptacle categories that may appear in them.
pub const ROOM_TYPES: &[(&str, &[&str])] = &[
    ("kitchen", &["counter", "fridge", "cabinet", "sink", "stove", "shelf"]),
    ("bathroom", &["sink", "bathtub", "cabinet", "shelf", "toilet"]),
    ("bedroom", &["bed", "dresser", "nightstand", "shelf", "desk"]),
    ("lounge", &["sofa", "bookcase", "cabinet", "shelf", "table"]),
    ("office", &["desk", "bookcase", "cabinet", "shelf", "chair"]),
    ("laundry", &["washer", "dryer", "shelf", "basket", "cabinet"]),
    ("garage", &["workbench", "shelf", "cabinet", "rack", "floor"]),
    ("dining", &["table", "cabinet", "chair", "shelf", "counter"]),
];

/// High-level object groups with single-word member names.
pub const OBJECT_GROUPS: &[(&str, &[&str])] = &[
    ("tableware", &["mug", "plate", "bowl", "glass", "fork", "spoon", "teapot", "saucer"]),
    ("food", &["apple", "bread", "cereal", "banana", "cheese", "pasta", "rice", "honey"]),
    ("toiletry", &["soap", "toothbrush", "shampoo", "razor", "lotion", "comb", "towel", "sponge"]),
    ("clothing", &["shirt", "sock", "sweater", "scarf", "jeans", "hat", "glove", "jacket"]),
    ("toy", &["ball", "doll", "puzzle", "robot", "kite", "blocks", "yoyo", "teddy"]),
    ("stationery", &["pen", "notebook", "stapler", "pencil", "folder", "scissors", "tape", "envelope"]),
    ("tool", &["hammer", "wrench", "screwdriver", "pliers", "drill", "saw", "level", "chisel"]),
    ("cleaning", &["detergent", "bleach", "duster", "mop", "brush", "bucket", "cloth", "spray"]),
];

pub fn full_vocabulary() -> SceneVocabulary {
    let rooms = ROOM_TYPES.iter().map(|(room, recs)| (room.to_string(), recs.iter().map(|r| r.to_string()).collect())).collect();
    SceneVocabulary { rooms }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGenConfig {
    pub rows: usize,
    pub cols: usize,
    pub rooms: usize,
    /// Inclusive bounds on receptacles per room.
    pub receptacles_per_room: (usize, usize),
    pub capacity: u32,
    /// Smallest room side, in cells.
    pub min_side: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self { rows: 30, cols: 30, rooms: 6, receptacles_per_room: (3, 5), capacity: 4, min_side: 5 }
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    r0: usize,
    c0: usize,
    r1: usize,
    c1: usize,
}

impl Rect {
    fn h(&self) -> usize {
        self.r1 - self.r0
    }
    fn w(&self) -> usize {
        self.c1 - self.c0
    }
    fn contains(&self, c: Cell) -> bool {
        (self.r0..self.r1).contains(&c.r) && (self.c0..self.c1).contains(&c.c)
    }
}

/// Door cell and the index of the room that owns it.
type Door = (Cell, usize);

/// Binary space partition of the interior into `rooms` rectangles separated
/// by one-cell walls, each wall pierced by a single door. Door columns and
/// rows are never reused by later walls, so every door stays open.
fn partition(config: &SceneGenConfig, rng: &mut impl Rng) -> Option<(Vec<Rect>, Vec<Door>)> {
    let mut rects = vec![Rect { r0: 1, c0: 1, r1: config.rows - 1, c1: config.cols - 1 }];
    let mut doors: Vec<Door> = Vec::new();
    let min = config.min_side;
    while rects.len() < config.rooms {
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(rects[i].h() * rects[i].w()));
        let mut split = None;
        for i in order {
            let rect = rects[i];
            let horizontal = if rect.h() == rect.w() { rng.gen_bool(0.5) } else { rect.h() > rect.w() };
            for horizontal in [horizontal, !horizontal] {
                let (lo, hi) = if horizontal { (rect.r0, rect.r1) } else { (rect.c0, rect.c1) };
                if hi - lo < 2 * min + 1 {
                    continue;
                }
                let blocked = |p: usize| {
                    doors.iter().any(|(d, _)| {
                        if horizontal {
                            d.r == p && (d.c + 1 == rect.c0 || d.c == rect.c1)
                        } else {
                            d.c == p && (d.r + 1 == rect.r0 || d.r == rect.r1)
                        }
                    })
                };
                let options: Vec<usize> = (lo + min..=hi - min - 1).filter(|&p| !blocked(p)).collect();
                if let Some(&p) = options.choose(rng) {
                    split = Some((i, horizontal, p));
                    break;
                }
            }
            if split.is_some() {
                break;
            }
        }
        let (i, horizontal, p) = split?;
        let rect = rects.swap_remove(i);
        let (a, b, door) = if horizontal {
            let c = rng.gen_range(rect.c0..rect.c1);
            (Rect { r1: p, ..rect }, Rect { r0: p + 1, ..rect }, Cell::new(p, c))
        } else {
            let r = rng.gen_range(rect.r0..rect.r1);
            (Rect { c1: p, ..rect }, Rect { c0: p + 1, ..rect }, Cell::new(r, p))
        };
        rects.push(a);
        rects.push(b);
        doors.push((door, usize::MAX));
    }
    for (door, owner) in doors.iter_mut() {
        *owner = door.neighbours().find_map(|n| rects.iter().position(|r| r.contains(n)))?;
    }
    Some((rects, doors))
}

/// Multi-room scene: a walled rectangle split into rooms of distinct
/// categories (cycling through [`ROOM_TYPES`] when there are more rooms
/// than types), each with receptacles along its walls. Deterministic in
/// `seed`.
pub fn synth_scene(id: &str, config: &SceneGenConfig, seed: u64) -> Result<GridScene, WorldError> {
    let mut last = WorldError::Validation(format!("cannot fit {} rooms into {}x{}", config.rooms, config.rows, config.cols));
    for attempt in 0..64 {
        let mut rng = rng_for(seed, &format!("scene:{id}:{attempt}"));
        let Some((rects, doors)) = partition(config, &mut rng) else { continue };
        let mut grid = vec![vec!['#'; config.cols]; config.rows];
        let mut room_cells: Vec<Vec<Cell>> = rects
            .iter()
            .map(|r| (r.r0..r.r1).flat_map(|row| (r.c0..r.c1).map(move |c| Cell::new(row, c))).collect())
            .collect();
        for cell in room_cells.iter().flatten() {
            grid[cell.r][cell.c] = '.';
        }
        let door_cells: BTreeSet<Cell> = doors.iter().map(|(d, _)| *d).collect();
        for &(door, owner) in &doors {
            grid[door.r][door.c] = '.';
            room_cells[owner].push(door);
        }

        let mut types: Vec<&(&str, &[&str])> = ROOM_TYPES.iter().collect();
        types.shuffle(&mut rng);
        let mut rooms = Vec::new();
        let mut receptacles = Vec::new();
        let mut used: BTreeMap<String, usize> = BTreeMap::new();
        for (k, rect) in rects.iter().enumerate() {
            let (category, recs) = *types[k % types.len()];
            let room_id = format!("room{k}");
            let near_door = |c: Cell| door_cells.iter().any(|d| d.manhattan(c) <= 1);
            let mut border: Vec<Cell> = room_cells[k]
                .iter()
                .copied()
                .filter(|c| rect.contains(*c) && (c.r == rect.r0 || c.r + 1 == rect.r1 || c.c == rect.c0 || c.c + 1 == rect.c1))
                .filter(|c| !near_door(*c))
                .collect();
            border.shuffle(&mut rng);
            let mut cats: Vec<&str> = recs.to_vec();
            cats.shuffle(&mut rng);
            let n = rng.gen_range(config.receptacles_per_room.0..=config.receptacles_per_room.1).min(cats.len());
            let mut chosen: Vec<Cell> = Vec::new();
            for cell in border {
                if chosen.len() == n {
                    break;
                }
                if chosen.iter().all(|c| c.manhattan(cell) >= 2) {
                    chosen.push(cell);
                }
            }
            for (cat, cell) in cats.iter().zip(chosen) {
                let n_used = used.entry(cat.to_string()).or_default();
                receptacles.push(ReceptacleFile {
                    id: format!("{cat}_{n_used}"),
                    category: cat.to_string(),
                    room: room_id.clone(),
                    cell,
                    capacity: config.capacity,
                });
                *n_used += 1;
            }
            rooms.push(RoomFile { id: room_id, category: category.to_string(), cells: std::mem::take(&mut room_cells[k]) });
        }
        let file = SceneFile {
            id: id.to_string(),
            cell_size_m: crate::world::DEFAULT_CELL_SIZE_M,
            grid: grid.into_iter().map(|row| row.into_iter().collect()).collect(),
            rooms,
            receptacles,
        };
        match GridScene::from_file(file) {
            Ok(scene) => return Ok(scene),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Catalog of `n` objects drawn round-robin from [`OBJECT_GROUPS`]. Within
/// each group, a `seen_fraction` share is Seen and the rest is split evenly
/// between the two unseen splits, so every split covers every group.
pub fn synth_catalog(n: usize, seen_fraction: f64, seed: u64) -> Catalog {
    let cap: usize = OBJECT_GROUPS.iter().map(|(_, names)| names.len()).sum();
    let n = n.min(cap);
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut taken = 0;
    'outer: for k in 0.. {
        for (group, names) in OBJECT_GROUPS {
            if taken == n {
                break 'outer;
            }
            if let Some(name) = names.get(k) {
                members.entry(group).or_default().push(name);
                taken += 1;
            }
        }
    }
    let mut objects = Vec::new();
    for (group, _) in OBJECT_GROUPS {
        let Some(names) = members.get_mut(group) else { continue };
        names.shuffle(&mut rng_for(seed, &format!("catalog:{group}")));
        let len = names.len();
        let n_seen = ((len as f64 * seen_fraction).round() as usize).clamp(1.min(len), len);
        let n_val = (len - n_seen).div_ceil(2);
        for (i, name) in names.iter().enumerate() {
            let split = if i < n_seen {
                ObjectSplit::Seen
            } else if i < n_seen + n_val {
                ObjectSplit::ValUnseen
            } else {
                ObjectSplit::TestUnseen
            };
            objects.push(ObjectCategory { name: name.to_string(), high_level: group.to_string(), split });
        }
    }
    objects.sort_by(|a, b| a.name.cmp(&b.name));
    Catalog { objects }
}

/// Preference table in which every object of a group shares the group's
/// Correct placements: `correct_rooms` distinct rooms, one Correct
/// receptacle in each. Of the remaining keys about 40% are Misplaced and
/// the rest Implausible, re-drawn per object. Votes are unanimous.
pub fn structured_preferences(catalog: &Catalog, vocab: &SceneVocabulary, correct_rooms: usize, seed: u64) -> PreferenceTable {
    let pairs = vocab.pairs();
    let rooms: Vec<&String> = vocab.rooms.keys().collect();
    let mut correct: BTreeMap<&str, BTreeSet<(String, String)>> = BTreeMap::new();
    let mut entries = BTreeMap::new();
    for obj in &catalog.objects {
        let group_correct = correct.entry(&obj.high_level).or_insert_with(|| {
            let mut rng = rng_for(seed, &format!("structured:{}", obj.high_level));
            let mut picks = rooms.clone();
            picks.shuffle(&mut rng);
            picks
                .iter()
                .take(correct_rooms.max(1))
                .map(|room| {
                    let recs: Vec<&String> = vocab.rooms[*room].iter().collect();
                    ((*room).clone(), recs[rng.gen_range(0..recs.len())].clone())
                })
                .collect()
        });
        let mut rng = rng_for(seed, &format!("structured-object:{}", obj.name));
        let mut any_misplaced = false;
        for (room, rec) in &pairs {
            let pair = (room.clone(), rec.clone());
            let entry = if group_correct.contains(&pair) {
                PreferenceEntry { c_or: 1.0, m_or: 0.0, i_or: 0.0, mean_correct_rank: Some(1.0), n_annotators: 10 }
            } else if rng.gen_bool(0.4) {
                any_misplaced = true;
                PreferenceEntry { c_or: 0.0, m_or: 1.0, i_or: 0.0, mean_correct_rank: None, n_annotators: 10 }
            } else {
                PreferenceEntry { c_or: 0.0, m_or: 0.0, i_or: 1.0, mean_correct_rank: None, n_annotators: 10 }
            };
            entries.insert(key(&obj.name, room, rec), entry);
        }
        if !any_misplaced {
            let free: Vec<&(String, String)> = pairs.iter().filter(|p| !group_correct.contains(*p)).collect();
            if let Some((room, rec)) = free.choose(&mut rng) {
                entries.insert(key(&obj.name, room, rec), PreferenceEntry { c_or: 0.0, m_or: 1.0, i_or: 0.0, mean_correct_rank: None, n_annotators: 10 });
            }
        }
    }
    PreferenceTable::from_entries(entries)
}

/// Word vectors for every catalog object, room and receptacle token. Object
/// vectors are their group's random direction plus Gaussian noise of scale
/// `noise`; room and receptacle vectors are independent random directions.
pub fn structured_embeddings(catalog: &Catalog, vocab: &SceneVocabulary, dim: usize, noise: f64, seed: u64) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dim);
    let vector = |tag: &str| -> Vec<f64> {
        let mut rng = rng_for(seed, &format!("embedding:{tag}"));
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    for obj in &catalog.objects {
        let base = vector(&format!("group:{}", obj.high_level));
        let mut rng = rng_for(seed, &format!("embedding-noise:{}", obj.name));
        let scale = noise / (dim as f64).sqrt();
        let v: Vec<f64> = base.iter().map(|b| b + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        for token in crate::ranker::tokenize(&obj.name) {
            table.insert(&token, v.clone()).expect("dimension matches");
        }
    }
    let mut words: BTreeSet<String> = BTreeSet::new();
    for (room, recs) in &vocab.rooms {
        words.extend(crate::ranker::tokenize(room));
        for rec in recs {
            words.extend(crate::ranker::tokenize(rec));
        }
    }
    for word in words {
        if table.get(&word).is_none() {
            table.insert(&word, vector(&format!("word:{word}"))).expect("dimension matches");
        }
    }
    table
}
