//! Placement scoring. A model gives raw compatibility scores for
//! `(object, room)` (OR) and `(object, room, receptacle)` (ORR); softmax
//! over the candidates turns them into `P(room | object)` and
//! `P(receptacle | object, room)`, whose product ranks placements.

mod embedding;
mod eval;
mod mlp;
mod oracle;
mod train;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

pub use embedding::{embed_prompt, or_key, or_query, orr_key, orr_query, tokenize, EmbeddingTable};
pub use eval::{average_precision, calibrate_threshold, eval_map, MapReport, ThresholdCalibration};
pub use mlp::{Adam, Linear, Mlp};
pub use oracle::{ExternalScores, NoisyOracle, OracleScores, RandomScores};
pub use train::{
    bce_loss_and_grad, info_nce_loss_and_grad, or_examples, orr_examples, train_cm, EmbeddingRanker, OrExample,
    OrrExample, TrainConfig, TrainLog,
};

/// Softmax temperature applied to raw scores in `[0, 1]`.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Error)]
pub enum RankerError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("out of vocabulary: {0:?}")]
    OutOfVocabulary(Vec<String>),
    #[error("no positive training pairs")]
    NoPositivePairs,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Raw placement scores in `[0, 1]`. Implementations must be pure.
pub trait ScoreModel: Send + Sync {
    fn score_or(&self, object: &str, room: &str) -> f64;
    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64;
    /// Softmax temperature used when normalizing raw scores.
    fn temperature(&self) -> f64 {
        DEFAULT_TEMPERATURE
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for &T {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        (**self).score_or(object, room)
    }
    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        (**self).score_orr(object, room, receptacle)
    }
    fn temperature(&self) -> f64 {
        (**self).temperature()
    }
}

impl<T: ScoreModel + ?Sized> ScoreModel for Box<T> {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        (**self).score_or(object, room)
    }
    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        (**self).score_orr(object, room, receptacle)
    }
    fn temperature(&self) -> f64 {
        (**self).temperature()
    }
}

/// Numerically stable softmax of `xs / temperature`.
pub fn softmax(xs: &[f64], temperature: f64) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| ((x - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointScore {
    pub room: String,
    pub receptacle: String,
    pub p_room: f64,
    pub p_receptacle: f64,
    pub joint: f64,
    /// Raw ORR score, compared against the correctness threshold.
    pub orr: f64,
}

fn grouped(candidates: &[(String, String)]) -> BTreeMap<&str, Vec<&str>> {
    let mut rooms: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (room, rec) in candidates {
        let recs = rooms.entry(room).or_default();
        if !recs.contains(&rec.as_str()) {
            recs.push(rec);
        }
    }
    for recs in rooms.values_mut() {
        recs.sort_unstable();
    }
    rooms
}

/// Joint `P(room | object) · P(receptacle | object, room)` over the distinct
/// candidate pairs, normalized over the candidates given. Sorted by joint
/// probability descending, ties by `(room, receptacle)`.
pub fn score_joint<M: ScoreModel + ?Sized>(model: &M, object: &str, candidates: &[(String, String)]) -> Vec<JointScore> {
    let rooms = grouped(candidates);
    let tau = model.temperature();
    let room_names: Vec<&str> = rooms.keys().copied().collect();
    let or_raw: Vec<f64> = room_names.iter().map(|r| model.score_or(object, r)).collect();
    let p_rooms = softmax(&or_raw, tau);
    let mut out = Vec::with_capacity(candidates.len());
    for (room, p_room) in room_names.iter().zip(p_rooms) {
        let recs = &rooms[room];
        let orr_raw: Vec<f64> = recs.iter().map(|rec| model.score_orr(object, room, rec)).collect();
        let p_recs = softmax(&orr_raw, tau);
        for ((rec, p_rec), orr) in recs.iter().zip(p_recs).zip(orr_raw) {
            out.push(JointScore {
                room: room.to_string(),
                receptacle: rec.to_string(),
                p_room,
                p_receptacle: p_rec,
                joint: p_room * p_rec,
                orr,
            });
        }
    }
    out.sort_by(|a, b| b.joint.total_cmp(&a.joint).then_with(|| (&a.room, &a.receptacle).cmp(&(&b.room, &b.receptacle))));
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RankedPlacements {
    pub correct: Vec<(String, String)>,
    pub incorrect: Vec<(String, String)>,
}

/// Rooms by descending OR score; inside each room, receptacles whose raw
/// ORR score exceeds `s_l` by descending ORR. Sub-threshold receptacles
/// follow all above-threshold ones in the same room-then-score order.
/// Ties break lexicographically.
pub fn ranked_placements<M: ScoreModel + ?Sized>(model: &M, object: &str, candidates: &[(String, String)], s_l: f64) -> RankedPlacements {
    let rooms = grouped(candidates);
    let mut room_order: Vec<(&str, f64)> = rooms.keys().map(|r| (*r, model.score_or(object, r))).collect();
    room_order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = RankedPlacements::default();
    for (room, _) in room_order {
        let mut recs: Vec<(&str, f64)> = rooms[room].iter().map(|rec| (*rec, model.score_orr(object, room, rec))).collect();
        recs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (rec, score) in recs {
            let entry = (room.to_string(), rec.to_string());
            if score > s_l {
                out.correct.push(entry);
            } else {
                out.incorrect.push(entry);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        or: BTreeMap<String, f64>,
        orr: BTreeMap<(String, String), f64>,
    }

    impl ScoreModel for Fixed {
        fn score_or(&self, _: &str, room: &str) -> f64 {
            self.or[room]
        }
        fn score_orr(&self, _: &str, room: &str, rec: &str) -> f64 {
            self.orr[&(room.to_string(), rec.to_string())]
        }
        fn temperature(&self) -> f64 {
            1.0
        }
    }

    fn pairs(xs: &[(&str, &str)]) -> Vec<(String, String)> {
        xs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn fixed() -> Fixed {
        Fixed {
            or: [("kitchen".to_string(), 0.9), ("bath".to_string(), 0.1)].into(),
            orr: [
                (("kitchen".to_string(), "cabinet".to_string()), 0.8),
                (("kitchen".to_string(), "sink".to_string()), 0.3),
                (("bath".to_string(), "shelf".to_string()), 0.95),
            ]
            .into(),
        }
    }

    #[test]
    fn single_candidate_has_probability_one() {
        let m = fixed();
        let s = score_joint(&m, "cup", &pairs(&[("kitchen", "sink")]));
        assert_eq!(s.len(), 1);
        assert!((s[0].joint - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_sums_to_one_and_matches_product() {
        let m = fixed();
        let cands = pairs(&[("kitchen", "cabinet"), ("bath", "shelf"), ("kitchen", "sink"), ("kitchen", "sink")]);
        let s = score_joint(&m, "cup", &cands);
        assert_eq!(s.len(), 3);
        let total: f64 = s.iter().map(|j| j.joint).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let pr = softmax(&[0.1, 0.9], 1.0);
        let pk = softmax(&[0.8, 0.3], 1.0);
        let want = pr[1] * pk[0];
        let cab = s.iter().find(|j| j.receptacle == "cabinet").unwrap();
        assert!((cab.joint - want).abs() < 1e-12);
    }

    #[test]
    fn ranked_placements_respects_room_order_and_threshold() {
        let m = fixed();
        let cands = pairs(&[("kitchen", "cabinet"), ("bath", "shelf"), ("kitchen", "sink")]);
        let r = ranked_placements(&m, "cup", &cands, 0.5);
        assert_eq!(r.correct, pairs(&[("kitchen", "cabinet"), ("bath", "shelf")]));
        assert_eq!(r.incorrect, pairs(&[("kitchen", "sink")]));
        let none = ranked_placements(&m, "cup", &cands, 0.99);
        assert!(none.correct.is_empty());
        assert_eq!(none.incorrect.len(), 3);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0], 0.5);
        let b = softmax(&[11.0, 12.0, 13.0], 0.5);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
