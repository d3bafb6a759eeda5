//! Synthetic annotations with a latent preference structure.
//!
//! Every high-level object group gets a latent assignment of each
//! `(room, receptacle)` pair to a bin plus a latent priority order.
//! Objects inherit their group's assignment with small per-object edits.
//! Each annotator reports the latent bin with probability `agreement` and a
//! uniformly random bin otherwise, so `agreement = 1` yields unanimous keys
//! and `agreement = 0` yields chance-level agreement.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{AnnotationRecord, Bin};
use crate::rng::rng_for;
use crate::world::{Catalog, GridScene};

/// Room categories and the receptacle categories that occur in them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SceneVocabulary {
    pub rooms: BTreeMap<String, BTreeSet<String>>,
}

impl SceneVocabulary {
    pub fn from_scenes<'a>(scenes: impl IntoIterator<Item = &'a GridScene>) -> Self {
        let mut rooms: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for scene in scenes {
            for (room, rec) in scene.category_pairs() {
                rooms.entry(room).or_default().insert(rec);
            }
        }
        Self { rooms }
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.rooms.iter().flat_map(|(room, recs)| recs.iter().map(move |r| (room.clone(), r.clone()))).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPrefsConfig {
    pub annotators: usize,
    /// Probability that an annotator reports the latent bin.
    pub agreement: f64,
    /// Forces unanimous votes on one latent Correct and one latent Misplaced
    /// key per object, so every object is placeable and misplaceable
    /// whatever the agreement level.
    pub guarantee_placements: bool,
}

impl Default for SynthPrefsConfig {
    fn default() -> Self {
        Self { annotators: 10, agreement: 0.9, guarantee_placements: true }
    }
}

struct Latent {
    bins: BTreeMap<(String, String), Bin>,
    /// Position of each pair in the latent preference order.
    priority: BTreeMap<(String, String), usize>,
}

impl Latent {
    fn first_in(&self, bin: Bin) -> Option<&(String, String)> {
        self.bins.iter().filter(|(_, b)| **b == bin).map(|(k, _)| k).min_by_key(|k| self.priority[*k])
    }
}

fn group_latent(vocab: &SceneVocabulary, group: &str, seed: u64) -> Latent {
    let mut rng = rng_for(seed, &format!("group:{group}"));
    let pairs = vocab.pairs();
    let rooms: Vec<&String> = vocab.rooms.keys().collect();
    let mut bins: BTreeMap<(String, String), Bin> = pairs.iter().map(|p| (p.clone(), Bin::Implausible)).collect();

    let home = rooms[rng.gen_range(0..rooms.len())];
    let mut home_recs: Vec<&String> = vocab.rooms[home].iter().collect();
    home_recs.shuffle(&mut rng);
    let n_home = rng.gen_range(1..=2).min(home_recs.len());
    for rec in &home_recs[..n_home] {
        bins.insert((home.clone(), (*rec).clone()), Bin::Correct);
    }
    if rng.gen_bool(0.5) {
        let away: Vec<&(String, String)> = pairs.iter().filter(|(r, _)| r != home).collect();
        if let Some(p) = away.choose(&mut rng) {
            bins.insert((*p).clone(), Bin::Correct);
        }
    }
    for p in &pairs {
        if bins[p] == Bin::Implausible && rng.gen_bool(0.35) {
            bins.insert(p.clone(), Bin::Misplaced);
        }
    }
    if !bins.values().any(|b| *b == Bin::Misplaced) {
        let rest: Vec<&(String, String)> = pairs.iter().filter(|p| bins[*p] == Bin::Implausible).collect();
        if let Some(p) = rest.choose(&mut rng) {
            bins.insert((*p).clone(), Bin::Misplaced);
        }
    }

    let mut order = pairs.clone();
    order.shuffle(&mut rng);
    let priority = order.into_iter().enumerate().map(|(i, p)| (p, i)).collect();
    Latent { bins, priority }
}

fn object_latent(group: &Latent, object: &str, seed: u64) -> Latent {
    let mut rng = rng_for(seed, &format!("object:{object}"));
    let mut bins = group.bins.clone();
    let implausible: Vec<(String, String)> = bins.iter().filter(|(_, b)| **b == Bin::Implausible).map(|(k, _)| k.clone()).collect();
    if rng.gen_bool(0.3) {
        if let Some(p) = implausible.choose(&mut rng) {
            bins.insert(p.clone(), Bin::Misplaced);
        }
    }
    Latent { bins, priority: group.priority.clone() }
}

/// Generates one record per (object, room, receptacle, annotator), in
/// catalog order, deterministic given `seed`.
pub fn synth_preferences(catalog: &Catalog, vocab: &SceneVocabulary, config: &SynthPrefsConfig, seed: u64) -> Vec<AnnotationRecord> {
    if vocab.rooms.is_empty() {
        return Vec::new();
    }
    let mut groups: BTreeMap<&str, Latent> = BTreeMap::new();
    let mut out = Vec::new();
    for obj in &catalog.objects {
        let group = groups.entry(&obj.high_level).or_insert_with(|| group_latent(vocab, &obj.high_level, seed));
        let latent = object_latent(group, &obj.name, seed);
        let anchors: BTreeSet<(String, String)> = if config.guarantee_placements {
            [Bin::Correct, Bin::Misplaced].into_iter().filter_map(|b| latent.first_in(b).cloned()).collect()
        } else {
            BTreeSet::new()
        };
        let mut rng = rng_for(seed, &format!("votes:{}", obj.name));
        let n_pairs = latent.priority.len() as f64;
        for (room, recs) in &vocab.rooms {
            for a in 0..config.annotators {
                let annotator = format!("ann{a:02}");
                let mut chosen: Vec<(String, Bin, f64)> = Vec::with_capacity(recs.len());
                for rec in recs {
                    let pair = (room.clone(), rec.clone());
                    let truth = latent.bins[&pair];
                    let bin = if anchors.contains(&pair) || rng.gen::<f64>() < config.agreement {
                        truth
                    } else {
                        Bin::ALL[rng.gen_range(0..3)]
                    };
                    let jitter = rng.gen::<f64>() * 2.0 * (1.0 - config.agreement) * n_pairs;
                    chosen.push((rec.clone(), bin, latent.priority[&pair] as f64 + jitter));
                }
                for bin in [Bin::Correct, Bin::Misplaced] {
                    let mut group: Vec<&(String, Bin, f64)> = chosen.iter().filter(|c| c.1 == bin).collect();
                    group.sort_by(|x, y| x.2.total_cmp(&y.2).then_with(|| x.0.cmp(&y.0)));
                    for (i, (rec, _, _)) in group.into_iter().enumerate() {
                        out.push(AnnotationRecord {
                            annotator: annotator.clone(),
                            object: obj.name.clone(),
                            room: room.clone(),
                            receptacle: rec.clone(),
                            bin,
                            rank: Some(i as u32 + 1),
                        });
                    }
                }
                for (rec, bin, _) in &chosen {
                    if *bin == Bin::Implausible {
                        out.push(AnnotationRecord {
                            annotator: annotator.clone(),
                            object: obj.name.clone(),
                            room: room.clone(),
                            receptacle: rec.clone(),
                            bin: Bin::Implausible,
                            rank: None,
                        });
                    }
                }
            }
        }
    }
    out
}
