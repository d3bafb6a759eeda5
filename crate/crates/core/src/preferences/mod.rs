//! Human placement preferences: annotation records, their aggregation into
//! per-key vote ratios, majority classification, and correct-receptacle
//! ranking.
//!
//! Keys are category triples `(object, room, receptacle)`. An object is
//! correctly placed on a key when more than half of that key's annotators
//! binned it `correct`, and misplaced when more than half binned it
//! `misplaced`. Both inequalities are strict.

mod agreement;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{fleiss_kappa, fleiss_kappa_by_object, fleiss_kappa_counts, rating_counts, KappaMode};
pub use synth::{synth_preferences, SceneVocabulary, SynthPrefsConfig};

#[derive(Debug, Error)]
pub enum PrefError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("annotator {annotator:?} classified {receptacle:?} for ({object:?}, {room:?}) more than once")]
    DuplicateClassification { annotator: String, object: String, room: String, receptacle: String },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid rank: {0}")]
    InvalidRank(String),
    #[error("no preference entry for ({0}, {1}, {2})")]
    MissingKey(String, String, String),
    #[error("({0}, {1}, {2}) is not a correct placement")]
    NotCorrect(String, String, String),
    #[error("items are rated by different numbers of annotators ({0} vs {1})")]
    UnequalRaterCounts(usize, usize),
    #[error("Fleiss' kappa undefined: {0}")]
    UndefinedKappa(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bin {
    Correct,
    Misplaced,
    Implausible,
}

impl Bin {
    pub const ALL: [Bin; 3] = [Bin::Correct, Bin::Misplaced, Bin::Implausible];

    pub fn index(self) -> usize {
        match self {
            Bin::Correct => 0,
            Bin::Misplaced => 1,
            Bin::Implausible => 2,
        }
    }
}

/// One annotator's verdict on one receptacle for an `(object, room)` prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator: String,
    pub object: String,
    pub room: String,
    pub receptacle: String,
    pub bin: Bin,
    pub rank: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlacementClass {
    Correct,
    Misplaced,
    Neutral,
}

/// `(object, room, receptacle)` category triple.
pub type PrefKey = (String, String, String);

pub fn key(object: &str, room: &str, receptacle: &str) -> PrefKey {
    (object.to_string(), room.to_string(), receptacle.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEntry {
    pub c_or: f64,
    pub m_or: f64,
    pub i_or: f64,
    pub mean_correct_rank: Option<f64>,
    pub n_annotators: u32,
}

impl PreferenceEntry {
    pub fn class(&self) -> PlacementClass {
        if self.c_or > 0.5 {
            PlacementClass::Correct
        } else if self.m_or > 0.5 {
            PlacementClass::Misplaced
        } else {
            PlacementClass::Neutral
        }
    }
}

/// Restricts the categories `aggregate` accepts. `None` admits anything.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    pub objects: Option<BTreeSet<String>>,
    pub rooms: Option<BTreeSet<String>>,
    pub receptacles: Option<BTreeSet<String>>,
}

impl Vocabulary {
    pub fn any() -> Self {
        Self::default()
    }

    fn check(&self, rec: &AnnotationRecord) -> Result<(), PrefError> {
        let pairs = [(&self.objects, &rec.object), (&self.rooms, &rec.room), (&self.receptacles, &rec.receptacle)];
        for (set, name) in pairs {
            if let Some(set) = set {
                if !set.contains(name) {
                    return Err(PrefError::UnknownCategory(name.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRow {
    object: String,
    room: String,
    receptacle: String,
    c_or: f64,
    m_or: f64,
    i_or: f64,
    mean_correct_rank: Option<f64>,
    n_annotators: u32,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    entries: Vec<EntryRow>,
}

/// Aggregated vote ratios per `(object, room, receptacle)` key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreferenceTable {
    entries: BTreeMap<PrefKey, PreferenceEntry>,
}

impl PreferenceTable {
    pub fn from_entries(entries: BTreeMap<PrefKey, PreferenceEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&PrefKey, &PreferenceEntry)> + '_ {
        self.entries.iter()
    }

    pub fn get(&self, object: &str, room: &str, receptacle: &str) -> Option<&PreferenceEntry> {
        // BTreeMap lookups on tuple keys need owned keys; the table is small
        // enough that the allocation is irrelevant next to the callers' work.
        self.entries.get(&key(object, room, receptacle))
    }

    /// `c_or` for the key, 0 when the key is absent.
    pub fn c_or(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        self.get(object, room, receptacle).map_or(0.0, |e| e.c_or)
    }

    pub fn objects(&self) -> BTreeSet<String> {
        self.entries.keys().map(|(o, _, _)| o.clone()).collect()
    }

    /// All keys of `object`, in key order.
    pub fn keys_for<'a>(&'a self, object: &'a str) -> impl Iterator<Item = (&'a PrefKey, &'a PreferenceEntry)> + 'a {
        let lo = key(object, "", "");
        self.entries.range(lo..).take_while(move |((o, _, _), _)| o == object)
    }

    /// `(room, receptacle)` pairs classified Correct for `object`.
    pub fn correct_pairs(&self, object: &str) -> Vec<(String, String)> {
        self.keys_for(object)
            .filter(|(_, e)| e.class() == PlacementClass::Correct)
            .map(|((_, r, c), _)| (r.clone(), c.clone()))
            .collect()
    }

    pub fn misplaced_pairs(&self, object: &str) -> Vec<(String, String)> {
        self.keys_for(object)
            .filter(|(_, e)| e.class() == PlacementClass::Misplaced)
            .map(|((_, r, c), _)| (r.clone(), c.clone()))
            .collect()
    }

    /// Keeps only keys whose object is in `objects`.
    pub fn restrict_objects(&self, objects: &BTreeSet<String>) -> PreferenceTable {
        PreferenceTable {
            entries: self.entries.iter().filter(|((o, _, _), _)| objects.contains(o)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            entries: self
                .entries
                .iter()
                .map(|((object, room, receptacle), e)| EntryRow {
                    object: object.clone(),
                    room: room.clone(),
                    receptacle: receptacle.clone(),
                    c_or: e.c_or,
                    m_or: e.m_or,
                    i_or: e.i_or,
                    mean_correct_rank: e.mean_correct_rank,
                    n_annotators: e.n_annotators,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PrefError> {
        let file: TableFile = serde_json::from_str(text).map_err(|e| PrefError::Parse(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for row in file.entries {
            let sum = row.c_or + row.m_or + row.i_or;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(PrefError::Parse(format!("ratios for ({}, {}, {}) sum to {sum}", row.object, row.room, row.receptacle)));
            }
            entries.insert(
                (row.object, row.room, row.receptacle),
                PreferenceEntry {
                    c_or: row.c_or,
                    m_or: row.m_or,
                    i_or: row.i_or,
                    mean_correct_rank: row.mean_correct_rank,
                    n_annotators: row.n_annotators,
                },
            );
        }
        Ok(Self { entries })
    }

    /// Loads a table from JSON, or aggregates an annotation CSV when the
    /// path ends in `.csv`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PrefError> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            return aggregate(&read_annotations(path)?, &Vocabulary::any());
        }
        let text = fs::read_to_string(path).map_err(|source| PrefError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }
}

impl fmt::Display for PlacementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PlacementClass::Correct => "correct",
            PlacementClass::Misplaced => "misplaced",
            PlacementClass::Neutral => "neutral",
        };
        f.write_str(s)
    }
}

fn validate_ranks(records: &[AnnotationRecord]) -> Result<(), PrefError> {
    let mut groups: BTreeMap<(&str, &str, &str, Bin), Vec<u32>> = BTreeMap::new();
    for rec in records {
        match (rec.bin, rec.rank) {
            (Bin::Implausible, Some(_)) => {
                return Err(PrefError::InvalidRank(format!(
                    "annotator {:?} ranked implausible receptacle {:?} for ({:?}, {:?})",
                    rec.annotator, rec.receptacle, rec.object, rec.room
                )))
            }
            (Bin::Correct | Bin::Misplaced, None) => {
                return Err(PrefError::InvalidRank(format!(
                    "annotator {:?} left {:?} unranked for ({:?}, {:?})",
                    rec.annotator, rec.receptacle, rec.object, rec.room
                )))
            }
            (Bin::Implausible, None) => {}
            (bin, Some(rank)) => groups.entry((&rec.annotator, &rec.object, &rec.room, bin)).or_default().push(rank),
        }
    }
    for ((annotator, object, room, bin), mut ranks) in groups {
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(i, &r)| r as usize != i + 1) {
            return Err(PrefError::InvalidRank(format!(
                "annotator {annotator:?} ranks for ({object:?}, {room:?}, {bin:?}) are {ranks:?}, expected 1..{}",
                ranks.len()
            )));
        }
    }
    Ok(())
}

/// Aggregates raw annotations into per-key vote ratios.
pub fn aggregate(records: &[AnnotationRecord], vocab: &Vocabulary) -> Result<PreferenceTable, PrefError> {
    #[derive(Default)]
    struct Tally {
        counts: [u32; 3],
        rank_sum: u64,
    }

    let mut seen = BTreeSet::new();
    for rec in records {
        vocab.check(rec)?;
        if !seen.insert((&rec.annotator, &rec.object, &rec.room, &rec.receptacle)) {
            return Err(PrefError::DuplicateClassification {
                annotator: rec.annotator.clone(),
                object: rec.object.clone(),
                room: rec.room.clone(),
                receptacle: rec.receptacle.clone(),
            });
        }
    }
    validate_ranks(records)?;

    let mut tallies: BTreeMap<PrefKey, Tally> = BTreeMap::new();
    for rec in records {
        let t = tallies.entry(key(&rec.object, &rec.room, &rec.receptacle)).or_default();
        t.counts[rec.bin.index()] += 1;
        if rec.bin == Bin::Correct {
            t.rank_sum += u64::from(rec.rank.unwrap_or(0));
        }
    }
    let entries = tallies
        .into_iter()
        .map(|(k, t)| {
            let n: u32 = t.counts.iter().sum();
            let nf = f64::from(n);
            let entry = PreferenceEntry {
                c_or: f64::from(t.counts[0]) / nf,
                m_or: f64::from(t.counts[1]) / nf,
                i_or: f64::from(t.counts[2]) / nf,
                mean_correct_rank: (t.counts[0] > 0).then(|| t.rank_sum as f64 / f64::from(t.counts[0])),
                n_annotators: n,
            };
            (k, entry)
        })
        .collect();
    Ok(PreferenceTable { entries })
}

pub fn classify(table: &PreferenceTable, object: &str, room: &str, receptacle: &str) -> Result<PlacementClass, PrefError> {
    table
        .get(object, room, receptacle)
        .map(PreferenceEntry::class)
        .ok_or_else(|| PrefError::MissingKey(object.into(), room.into(), receptacle.into()))
}

/// 1-based rank of `(room, receptacle)` among the object's Correct pairs,
/// ordered by ascending mean correct rank, ties by `(room, receptacle)`.
/// `available` limits the candidates to pairs present in a scene; `None`
/// considers every Correct key in the table.
pub fn correct_rank(
    table: &PreferenceTable,
    object: &str,
    room: &str,
    receptacle: &str,
    available: Option<&BTreeSet<(String, String)>>,
) -> Result<usize, PrefError> {
    let not_correct = || PrefError::NotCorrect(object.into(), room.into(), receptacle.into());
    let entry = table.get(object, room, receptacle).ok_or_else(not_correct)?;
    if entry.class() != PlacementClass::Correct {
        return Err(not_correct());
    }
    let mut candidates: Vec<(f64, &str, &str)> = table
        .keys_for(object)
        .filter(|(_, e)| e.class() == PlacementClass::Correct)
        .filter(|((_, r, c), _)| available.is_none_or(|set| set.contains(&(r.clone(), c.clone()))))
        .map(|((_, r, c), e)| (e.mean_correct_rank.unwrap_or(f64::INFINITY), r.as_str(), c.as_str()))
        .collect();
    if available.is_some_and(|set| !set.contains(&(room.to_string(), receptacle.to_string()))) {
        candidates.push((entry.mean_correct_rank.unwrap_or(f64::INFINITY), room, receptacle));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
    let pos = candidates.iter().position(|&(_, r, c)| r == room && c == receptacle).expect("target is a candidate");
    Ok(pos + 1)
}

/// Keeps, per `(object, room)` prompt, the `k` annotators whose bins most
/// often match the per-key majority bin (ties broken by annotator name).
pub fn keep_top_agreeing(records: &[AnnotationRecord], k: usize) -> Vec<AnnotationRecord> {
    let mut votes: BTreeMap<(&str, &str, &str), [u32; 3]> = BTreeMap::new();
    for rec in records {
        votes.entry((&rec.object, &rec.room, &rec.receptacle)).or_default()[rec.bin.index()] += 1;
    }
    let majority = |counts: &[u32; 3]| -> Bin {
        Bin::ALL.into_iter().max_by_key(|b| (counts[b.index()], std::cmp::Reverse(b.index()))).expect("non-empty")
    };
    let mut agree: BTreeMap<(&str, &str), BTreeMap<&str, u32>> = BTreeMap::new();
    for rec in records {
        let m = majority(&votes[&(rec.object.as_str(), rec.room.as_str(), rec.receptacle.as_str())]);
        *agree.entry((&rec.object, &rec.room)).or_default().entry(&rec.annotator).or_default() += u32::from(rec.bin == m);
    }
    let kept: BTreeSet<(&str, &str, &str)> = agree
        .iter()
        .flat_map(|(&(o, r), per_annotator)| {
            let mut ranked: Vec<(&str, u32)> = per_annotator.iter().map(|(a, n)| (*a, *n)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            ranked.into_iter().take(k).map(move |(a, _)| (o, r, a))
        })
        .collect();
    records
        .iter()
        .filter(|rec| kept.contains(&(rec.object.as_str(), rec.room.as_str(), rec.annotator.as_str())))
        .cloned()
        .collect()
}

#[derive(Deserialize, Serialize)]
struct CsvRow {
    annotator: String,
    object: String,
    room: String,
    receptacle: String,
    bin: Bin,
    rank: Option<u32>,
}

pub fn parse_annotations(reader: impl std::io::Read) -> Result<Vec<AnnotationRecord>, PrefError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PrefError::Parse(e.to_string()))?.clone();
    let expected = ["annotator", "object", "room", "receptacle", "bin", "rank"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(PrefError::Parse(format!("annotation header must be {:?}, got {:?}", expected.join(","), headers)));
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| PrefError::Parse(e.to_string()))?;
            Ok(AnnotationRecord {
                annotator: row.annotator,
                object: row.object,
                room: row.room,
                receptacle: row.receptacle,
                bin: row.bin,
                rank: row.rank,
            })
        })
        .collect()
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>, PrefError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| PrefError::Io { path: path.to_path_buf(), source })?;
    parse_annotations(std::io::BufReader::new(file))
}

pub fn annotations_to_csv(records: &[AnnotationRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for rec in records {
        wtr.serialize(CsvRow {
            annotator: rec.annotator.clone(),
            object: rec.object.clone(),
            room: rec.room.clone(),
            receptacle: rec.receptacle.clone(),
            bin: rec.bin,
            rank: rec.rank,
        })
        .expect("in-memory csv write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf8")
}
