use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::embedding::{embed_prompt, or_key, or_query, orr_key, orr_query, EmbeddingTable};
use super::eval::eval_map;
use super::mlp::{Adam, Mlp};
use super::{RankerError, ScoreModel, DEFAULT_TEMPERATURE};
use crate::preferences::{PlacementClass, PreferenceTable};
use crate::rng::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub hidden_layers: usize,
    pub output: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub temperature: f64,
    /// Validation mAP is computed every this many epochs and at the end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            hidden_layers: 2,
            output: 512,
            batch_size: 64,
            learning_rate: 0.01,
            weight_decay: 0.2,
            epochs: 1000,
            temperature: DEFAULT_TEMPERATURE,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), RankerError> {
        let positive = self.hidden > 0
            && self.output > 0
            && self.batch_size > 1
            && self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.epochs > 0
            && self.temperature > 0.0
            && self.eval_every > 0;
        if positive {
            Ok(())
        } else {
            Err(RankerError::InvalidConfig(format!("{self:?}")))
        }
    }

    fn dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        dims.push(self.output);
        dims
    }
}

/// One ORR pair: an `object in room` prompt and its best-ranked Correct
/// receptacle in that room.
#[derive(Clone, Debug)]
pub struct OrrExample {
    pub object: String,
    pub room: String,
    pub receptacle: String,
    pub query: Vec<f64>,
    pub key: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OrExample {
    pub object: String,
    pub room: String,
    pub label: f64,
    pub query: Vec<f64>,
    pub key: Vec<f64>,
}

/// ORR training pairs for `objects`. Prompts with no known token are
/// skipped with a warning.
pub fn orr_examples(table: &PreferenceTable, emb: &EmbeddingTable, objects: &BTreeSet<String>) -> Result<Vec<OrrExample>, RankerError> {
    let mut out = Vec::new();
    for object in objects {
        let mut best: BTreeMap<&str, (f64, &str)> = BTreeMap::new();
        for ((_, room, rec), e) in table.keys_for(object) {
            if e.class() != PlacementClass::Correct {
                continue;
            }
            let rank = e.mean_correct_rank.unwrap_or(f64::INFINITY);
            let slot = best.entry(room).or_insert((rank, rec));
            if rank < slot.0 || (rank == slot.0 && rec.as_str() < slot.1) {
                *slot = (rank, rec);
            }
        }
        for (room, (_, rec)) in best {
            let (q, k) = match (embed_prompt(emb, &orr_query(object, room)), embed_prompt(emb, &orr_key(rec, room))) {
                (Ok(q), Ok(k)) => (q, k),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("skipping ORR pair {object}/{room}/{rec}: {e}");
                    continue;
                }
            };
            out.push(OrrExample { object: object.clone(), room: room.to_string(), receptacle: rec.to_string(), query: q, key: k });
        }
    }
    if out.is_empty() {
        return Err(RankerError::NoPositivePairs);
    }
    Ok(out)
}

/// OR pairs: every room the table lists for each object, labelled 1 when
/// the room holds a Correct receptacle.
pub fn or_examples(table: &PreferenceTable, emb: &EmbeddingTable, objects: &BTreeSet<String>) -> Result<Vec<OrExample>, RankerError> {
    let mut out = Vec::new();
    for object in objects {
        let mut rooms: BTreeMap<&str, bool> = BTreeMap::new();
        for ((_, room, _), e) in table.keys_for(object) {
            *rooms.entry(room).or_default() |= e.class() == PlacementClass::Correct;
        }
        for (room, positive) in rooms {
            match (embed_prompt(emb, &or_query(object)), embed_prompt(emb, &or_key(room))) {
                (Ok(q), Ok(k)) => out.push(OrExample {
                    object: object.clone(),
                    room: room.to_string(),
                    label: if positive { 1.0 } else { 0.0 },
                    query: q,
                    key: k,
                }),
                (Err(e), _) | (_, Err(e)) => log::warn!("skipping OR pair {object}/{room}: {e}"),
            }
        }
    }
    if !out.iter().any(|e| e.label > 0.0) {
        return Err(RankerError::NoPositivePairs);
    }
    Ok(out)
}

fn normalize_rows(z: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; n * d];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let row = &z[i * d..(i + 1) * d];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        norms[i] = norm;
        for (dst, v) in u[i * d..(i + 1) * d].iter_mut().zip(row) {
            *dst = v / norm;
        }
    }
    (u, norms)
}

/// Back through `u = z / |z|`.
fn normalize_backward(u: &[f64], norms: &[f64], du: &[f64], d: usize) -> Vec<f64> {
    let mut dz = vec![0.0; du.len()];
    for (i, norm) in norms.iter().enumerate() {
        let ui = &u[i * d..(i + 1) * d];
        let gi = &du[i * d..(i + 1) * d];
        let dot: f64 = ui.iter().zip(gi).map(|(a, b)| a * b).sum();
        for ((dst, a), g) in dz[i * d..(i + 1) * d].iter_mut().zip(ui).zip(gi) {
            *dst = (g - a * dot) / norm;
        }
    }
    dz
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// InfoNCE over a batch of `n` (query, key) pairs, both encoded by `mlp`.
/// Row `i` treats key `i` as positive and every other key as negative
/// unless `mask[i·n + j]` is set. Returns the mean loss and the flat
/// parameter gradient.
pub fn info_nce_loss_and_grad(mlp: &Mlp, queries: &[f64], keys: &[f64], n: usize, mask: &[bool], tau: f64) -> (f64, Vec<f64>) {
    let mut x = queries.to_vec();
    x.extend_from_slice(keys);
    let trace = mlp.forward(&x, 2 * n);
    let d = mlp.output_dim();
    let (u, norms) = normalize_rows(trace.output(), 2 * n, d);
    let (uq, uk) = u.split_at(n * d);
    let mut du = vec![0.0; 2 * n * d];
    let mut loss = 0.0;
    for i in 0..n {
        let qi = &uq[i * d..(i + 1) * d];
        let logits: Vec<Option<f64>> =
            (0..n).map(|j| (j == i || !mask[i * n + j]).then(|| dot(qi, &uk[j * d..(j + 1) * d]) / tau)).collect();
        let max = logits.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().flatten().map(|s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - logits[i].expect("positive logit");
        for (j, s) in logits.iter().enumerate() {
            let Some(s) = s else { continue };
            let p = (s - lse).exp();
            let ds = (p - if j == i { 1.0 } else { 0.0 }) / (n as f64 * tau);
            for k in 0..d {
                du[i * d + k] += ds * uk[j * d + k];
                du[(n + j) * d + k] += ds * qi[k];
            }
        }
    }
    let dz = normalize_backward(&u, &norms, &du, d);
    (loss / n as f64, mlp.backward(&trace, &dz))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on `cos(f(query), f(key)) / tau` logits.
pub fn bce_loss_and_grad(mlp: &Mlp, queries: &[f64], keys: &[f64], labels: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut x = queries.to_vec();
    x.extend_from_slice(keys);
    let trace = mlp.forward(&x, 2 * n);
    let d = mlp.output_dim();
    let (u, norms) = normalize_rows(trace.output(), 2 * n, d);
    let mut du = vec![0.0; 2 * n * d];
    let mut loss = 0.0;
    for (i, y) in labels.iter().enumerate() {
        let (qi, ki) = (&u[i * d..(i + 1) * d], &u[(n + i) * d..(n + i + 1) * d]);
        let logit = dot(qi, ki) / tau;
        // log(1 + e^-|x|) + max(x, 0) - x·y, stable for large |x|
        loss += (-logit.abs()).exp().ln_1p() + logit.max(0.0) - logit * y;
        let dc = (sigmoid(logit) - y) / (n as f64 * tau);
        for k in 0..d {
            du[i * d + k] += dc * ki[k];
            du[(n + i) * d + k] += dc * qi[k];
        }
    }
    let dz = normalize_backward(&u, &norms, &du, d);
    (loss / n as f64, mlp.backward(&trace, &dz))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    temperature: f64,
    or: Mlp,
    orr: Mlp,
}

/// Encoded prompts keyed by (is OR network, prompt); `None` when a token is
/// missing from the embedding table.
type EncodingCache = HashMap<(bool, String), Option<Vec<f64>>>;

/// Prompt embeddings pushed through the OR and ORR networks; raw scores
/// are `(1 + cos) / 2`.
#[derive(Debug)]
pub struct EmbeddingRanker {
    embeddings: Arc<EmbeddingTable>,
    or: Mlp,
    orr: Mlp,
    tau: f64,
    cache: Mutex<EncodingCache>,
}

impl Clone for EmbeddingRanker {
    fn clone(&self) -> Self {
        Self::new(self.embeddings.clone(), self.or.clone(), self.orr.clone(), self.tau)
    }
}

impl EmbeddingRanker {
    pub fn new(embeddings: Arc<EmbeddingTable>, or: Mlp, orr: Mlp, tau: f64) -> Self {
        Self { embeddings, or, orr, tau, cache: Mutex::new(HashMap::new()) }
    }

    pub fn or_mlp(&self) -> &Mlp {
        &self.or
    }

    pub fn orr_mlp(&self) -> &Mlp {
        &self.orr
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint { temperature: self.tau, or: self.or.clone(), orr: self.orr.clone() }).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, embeddings: Arc<EmbeddingTable>) -> Result<Self, RankerError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| RankerError::Parse(e.to_string()))?;
        for mlp in [&ck.or, &ck.orr] {
            if mlp.input_dim() != embeddings.dim() {
                return Err(RankerError::Parse(format!("checkpoint expects {}-d embeddings, file has {}", mlp.input_dim(), embeddings.dim())));
            }
            if mlp.layers.iter().any(|l| l.w.len() != l.inputs * l.outputs || l.b.len() != l.outputs) {
                return Err(RankerError::Parse("layer shape does not match its weights".into()));
            }
            if !mlp.params().all(|p| p.is_finite()) {
                return Err(RankerError::Parse("non-finite weight".into()));
            }
        }
        Ok(Self::new(embeddings, ck.or, ck.orr, ck.temperature))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RankerError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| RankerError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: impl AsRef<Path>, embeddings: Arc<EmbeddingTable>) -> Result<Self, RankerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RankerError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text, embeddings)
    }

    fn encode(&self, orr: bool, prompt: String) -> Option<Vec<f64>> {
        let key = (orr, prompt);
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return v.clone();
        }
        let v = match embed_prompt(&self.embeddings, &key.1) {
            Ok(x) => {
                let z = if orr { self.orr.apply(&x) } else { self.or.apply(&x) };
                let (u, _) = normalize_rows(&z, 1, z.len());
                Some(u)
            }
            Err(e) => {
                log::warn!("{e}; scoring as 0");
                None
            }
        };
        self.cache.lock().expect("cache lock").insert(key, v.clone());
        v
    }

    fn similarity(&self, orr: bool, query: String, key: String) -> f64 {
        match (self.encode(orr, query), self.encode(orr, key)) {
            (Some(q), Some(k)) => ((1.0 + dot(&q, &k)) / 2.0).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }
}

impl ScoreModel for EmbeddingRanker {
    fn score_or(&self, object: &str, room: &str) -> f64 {
        self.similarity(false, or_query(object), or_key(room))
    }

    fn score_orr(&self, object: &str, room: &str, receptacle: &str) -> f64 {
        self.similarity(true, orr_query(object, room), orr_key(receptacle, room))
    }

    /// Raw scores are cosines mapped to `[0, 1]`; halving the temperature
    /// makes the softmax equal to one over cosines at the configured τ.
    fn temperature(&self) -> f64 {
        self.tau / 2.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub orr_loss: Vec<f64>,
    pub or_loss: Vec<f64>,
    pub orr_best_epoch: usize,
    pub or_best_epoch: usize,
    pub orr_val_map: Option<f64>,
    pub or_val_map: Option<f64>,
}

struct Fitted {
    mlp: Mlp,
    losses: Vec<f64>,
    best_epoch: usize,
    best_map: Option<f64>,
}

fn fit(
    config: &TrainConfig,
    input: usize,
    n_examples: usize,
    tag: &str,
    mut loss_fn: impl FnMut(&Mlp, &[usize]) -> (f64, Vec<f64>),
    mut validate: impl FnMut(&Mlp) -> Option<f64>,
) -> Result<Fitted, RankerError> {
    let mut rng = rng_for(config.seed, tag);
    let mut mlp = Mlp::new(&config.dims(input), &mut rng);
    let mut opt = Adam::new(mlp.num_params(), config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..n_examples).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Mlp)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = loss_fn(&mlp, batch);
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(RankerError::DivergenceDetected { epoch, loss });
            }
            opt.step(&mut mlp, &grads);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("{tag} epoch {epoch}: loss {mean:.5}");
        losses.push(mean);
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            if let Some(score) = validate(&mlp) {
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, epoch, mlp.clone()));
                }
            }
        }
    }
    Ok(match best {
        Some((score, epoch, best)) => Fitted { mlp: best, losses, best_epoch: epoch, best_map: Some(score) },
        None => Fitted { mlp, losses, best_epoch: config.epochs, best_map: None },
    })
}

/// Trains the OR and ORR networks on `train_objects`. With validation
/// objects, each network keeps the weights with the best validation mAP
/// on its own task; otherwise the final weights.
pub fn train_cm(
    embeddings: Arc<EmbeddingTable>,
    table: &PreferenceTable,
    train_objects: &BTreeSet<String>,
    val_objects: Option<&BTreeSet<String>>,
    config: &TrainConfig,
) -> Result<(EmbeddingRanker, TrainLog), RankerError> {
    config.validate()?;
    let orr_ex = orr_examples(table, &embeddings, train_objects)?;
    let or_ex = or_examples(table, &embeddings, train_objects)?;
    let d = embeddings.dim();
    let tau = config.temperature;
    let correct: BTreeSet<(&str, &str, &str)> = table
        .entries()
        .filter(|(_, e)| e.class() == PlacementClass::Correct)
        .map(|((o, r, c), _)| (o.as_str(), r.as_str(), c.as_str()))
        .collect();

    let val = val_objects.filter(|v| !v.is_empty());

    let orr = fit(
        config,
        d,
        orr_ex.len(),
        "train-orr",
        |mlp, batch| {
            let n = batch.len();
            let q: Vec<f64> = batch.iter().flat_map(|&i| orr_ex[i].query.iter().copied()).collect();
            let k: Vec<f64> = batch.iter().flat_map(|&i| orr_ex[i].key.iter().copied()).collect();
            let mut mask = vec![false; n * n];
            for (a, &i) in batch.iter().enumerate() {
                for (b, &j) in batch.iter().enumerate() {
                    let (ei, ej) = (&orr_ex[i], &orr_ex[j]);
                    mask[a * n + b] = a != b
                        && ((ej.room == ei.room && ej.receptacle == ei.receptacle)
                            || correct.contains(&(ei.object.as_str(), ej.room.as_str(), ej.receptacle.as_str())));
                }
            }
            info_nce_loss_and_grad(mlp, &q, &k, n, &mask, tau)
        },
        |mlp| {
            let objects = val?;
            let view = EmbeddingRanker::new(embeddings.clone(), mlp.clone(), mlp.clone(), tau);
            eval_map(&view, table, objects).ok().map(|r| r.orr)
        },
    )?;
    let or = fit(
        config,
        d,
        or_ex.len(),
        "train-or",
        |mlp, batch| {
            let q: Vec<f64> = batch.iter().flat_map(|&i| or_ex[i].query.iter().copied()).collect();
            let k: Vec<f64> = batch.iter().flat_map(|&i| or_ex[i].key.iter().copied()).collect();
            let y: Vec<f64> = batch.iter().map(|&i| or_ex[i].label).collect();
            bce_loss_and_grad(mlp, &q, &k, &y, tau)
        },
        |mlp| {
            let objects = val?;
            let view = EmbeddingRanker::new(embeddings.clone(), mlp.clone(), mlp.clone(), tau);
            eval_map(&view, table, objects).ok().map(|r| r.or)
        },
    )?;
    let log = TrainLog {
        orr_loss: orr.losses,
        or_loss: or.losses,
        orr_best_epoch: orr.best_epoch,
        or_best_epoch: or.best_epoch,
        orr_val_map: orr.best_map,
        or_val_map: or.best_map,
    };
    Ok((EmbeddingRanker::new(embeddings, or.mlp, orr.mlp, tau), log))
}
