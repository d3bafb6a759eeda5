//! Episode metrics computed from an [`EpisodeResult`] and the preference
//! table: ES, OS, SOS, RQ, MC, MOC, PPE, plus ES@K and aggregation.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preferences::{correct_rank, PreferenceTable};

pub use report::{aggregate, es_at_k, AggregateRow, MetricSummary, METRIC_NAMES};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty set of reports")]
    EmptySet,
}

/// A receptacle instance with the categories the preference table is keyed on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub receptacle: String,
    /// Room category.
    pub room: String,
    /// Receptacle category.
    pub category: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Pick,
    Place,
}

/// A successful pick or place.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub t: usize,
    pub object: String,
    pub kind: InteractionKind,
    pub at: Placement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultObject {
    pub id: String,
    pub category: String,
    pub initial: Placement,
    pub misplaced: bool,
}

/// Everything the metrics need about one finished episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub scene_id: String,
    pub objects: Vec<ResultObject>,
    pub interactions: Vec<InteractionEvent>,
    /// Final receptacle per object id; `None` if still held.
    pub final_placement: BTreeMap<String, Option<Placement>>,
    pub explored_cells: usize,
    pub navigable_area: usize,
    /// Discovery step per object id that entered the agent's view.
    pub discovered: BTreeMap<String, usize>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectSets {
    pub misplaced: BTreeSet<String>,
    pub interacted: BTreeSet<String>,
    pub union: BTreeSet<String>,
}

pub fn object_sets(result: &EpisodeResult) -> ObjectSets {
    let misplaced: BTreeSet<String> = result.objects.iter().filter(|o| o.misplaced).map(|o| o.id.clone()).collect();
    let interacted: BTreeSet<String> = result.interactions.iter().map(|i| i.object.clone()).collect();
    let union = misplaced.union(&interacted).cloned().collect();
    ObjectSets { misplaced, interacted, union }
}

fn category_of<'a>(result: &'a EpisodeResult, id: &str) -> &'a str {
    result.objects.iter().find(|o| o.id == id).map_or("", |o| o.category.as_str())
}

/// `c_{o,Φ(o)}`; a held object has no placement and scores 0.
pub fn final_c(result: &EpisodeResult, table: &PreferenceTable, id: &str) -> f64 {
    match result.final_placement.get(id) {
        Some(Some(p)) => table.c_or(category_of(result, id), &p.room, &p.category),
        _ => 0.0,
    }
}

fn mean_over(ids: &BTreeSet<String>, f: impl Fn(&str) -> f64) -> f64 {
    if ids.is_empty() {
        return 1.0;
    }
    ids.iter().map(|id| f(id)).sum::<f64>() / ids.len() as f64
}

pub fn episode_success(result: &EpisodeResult, table: &PreferenceTable) -> f64 {
    let all = result.objects.iter().all(|o| final_c(result, table, &o.id) > 0.5);
    if all {
        1.0
    } else {
        0.0
    }
}

pub fn object_success(result: &EpisodeResult, table: &PreferenceTable) -> f64 {
    mean_over(&object_sets(result).union, |id| if final_c(result, table, id) > 0.5 { 1.0 } else { 0.0 })
}

pub fn soft_object_success(result: &EpisodeResult, table: &PreferenceTable) -> f64 {
    mean_over(&object_sets(result).union, |id| final_c(result, table, id))
}

/// Reciprocal rank of each correct final placement among the object's
/// Correct receptacles in the whole table.
pub fn rearrange_quality(result: &EpisodeResult, table: &PreferenceTable) -> f64 {
    mean_over(&object_sets(result).union, |id| match result.final_placement.get(id) {
        Some(Some(p)) if final_c(result, table, id) > 0.5 => {
            correct_rank(table, category_of(result, id), &p.room, &p.category, None).map_or(0.0, |r| 1.0 / r as f64)
        }
        _ => 0.0,
    })
}

pub fn map_coverage(result: &EpisodeResult) -> f64 {
    if result.navigable_area == 0 {
        return 0.0;
    }
    100.0 * result.explored_cells as f64 / result.navigable_area as f64
}

pub fn misplaced_object_coverage(result: &EpisodeResult) -> f64 {
    let sets = object_sets(result);
    if sets.misplaced.is_empty() {
        return 1.0;
    }
    sets.misplaced.iter().filter(|id| result.discovered.contains_key(*id)).count() as f64 / sets.misplaced.len() as f64
}

/// Minimum over actual pick/place counts for objects left Correct; an
/// initially correct object needs none, so touching it contributes 0.
pub fn pick_place_efficiency(result: &EpisodeResult, table: &PreferenceTable) -> f64 {
    let sets = object_sets(result);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for i in &result.interactions {
        *counts.entry(i.object.as_str()).or_default() += 1;
    }
    mean_over(&sets.interacted, |id| {
        let n_min = if sets.misplaced.contains(id) { 2.0 } else { 0.0 };
        if final_c(result, table, id) > 0.5 {
            n_min / counts[id] as f64
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "ES")]
    pub es: f64,
    #[serde(rename = "OS")]
    pub os: f64,
    #[serde(rename = "SOS")]
    pub sos: f64,
    #[serde(rename = "RQ")]
    pub rq: f64,
    #[serde(rename = "MC")]
    pub mc: f64,
    #[serde(rename = "MOC")]
    pub moc: f64,
    #[serde(rename = "PPE")]
    pub ppe: f64,
    pub steps: usize,
}

impl MetricsReport {
    pub fn compute(result: &EpisodeResult, table: &PreferenceTable) -> Self {
        Self {
            es: episode_success(result, table),
            os: object_success(result, table),
            sos: soft_object_success(result, table),
            rq: rearrange_quality(result, table),
            mc: map_coverage(result),
            moc: misplaced_object_coverage(result),
            ppe: pick_place_efficiency(result, table),
            steps: result.steps,
        }
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 8] {
        [self.es, self.os, self.sos, self.rq, self.mc, self.moc, self.ppe, self.steps as f64]
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::preferences::{key, PreferenceEntry};

    pub fn entry(c: f64, rank: Option<f64>) -> PreferenceEntry {
        PreferenceEntry { c_or: c, m_or: (1.0 - c) / 2.0, i_or: (1.0 - c) / 2.0, mean_correct_rank: rank, n_annotators: 10 }
    }

    pub fn at(rec: &str) -> Placement {
        Placement { receptacle: format!("{rec}_0"), room: "kitchen".into(), category: rec.into() }
    }

    /// `cup` prefers shelf (rank 1) then cabinet (rank 2); sink 0.3, floor 0.
    pub fn table() -> PreferenceTable {
        PreferenceTable::from_entries(
            [
                (key("cup", "kitchen", "shelf"), entry(0.9, Some(1.0))),
                (key("cup", "kitchen", "cabinet"), entry(0.7, Some(2.0))),
                (key("cup", "kitchen", "sink"), entry(0.3, None)),
                (key("cup", "kitchen", "floor"), entry(0.0, None)),
            ]
            .into(),
        )
    }

    pub fn result(objects: &[(&str, &str, bool)], moves: &[(&str, &str)], finals: &[(&str, Option<&str>)]) -> EpisodeResult {
        let mut interactions = Vec::new();
        let mut t = 0;
        for (obj, rec) in moves {
            let from = objects.iter().find(|o| o.0 == *obj).unwrap().1;
            t += 1;
            interactions.push(InteractionEvent { t, object: obj.to_string(), kind: InteractionKind::Pick, at: at(from) });
            t += 1;
            interactions.push(InteractionEvent { t, object: obj.to_string(), kind: InteractionKind::Place, at: at(rec) });
        }
        let mut final_placement: BTreeMap<String, Option<Placement>> =
            objects.iter().map(|(id, rec, _)| (id.to_string(), Some(at(rec)))).collect();
        for (id, rec) in finals {
            final_placement.insert(id.to_string(), rec.map(at));
        }
        EpisodeResult {
            episode_id: "e".into(),
            scene_id: "s".into(),
            objects: objects
                .iter()
                .map(|(id, rec, m)| ResultObject { id: id.to_string(), category: "cup".into(), initial: at(rec), misplaced: *m })
                .collect(),
            interactions,
            final_placement,
            explored_cells: 30,
            navigable_area: 120,
            discovered: objects.iter().map(|o| (o.0.to_string(), 0)).collect(),
            steps: t,
        }
    }
}
