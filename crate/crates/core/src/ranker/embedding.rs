use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::RankerError;

/// Word vectors read from a whitespace-separated text file, one
/// `token v1 .. vd` per line. In phrase mode the whole prompt is looked up
/// as a single entry (spaces replaced by `_`) instead of averaging tokens.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    phrase_mode: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new(), phrase_mode: false }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), RankerError> {
        if vector.len() != self.dim {
            return Err(RankerError::Parse(format!("{token}: expected {} values, got {}", self.dim, vector.len())));
        }
        self.vectors.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, RankerError> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|e| RankerError::Parse(format!("line {}: {e}", i + 1)))?;
            if values.is_empty() {
                return Err(RankerError::Parse(format!("line {}: no vector for {token:?}", i + 1)));
            }
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            t.insert(token, values).map_err(|e| RankerError::Parse(format!("line {}: {e}", i + 1)))?;
        }
        table.ok_or_else(|| RankerError::Parse("empty embedding file".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RankerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RankerError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn with_phrase_mode(mut self, on: bool) -> Self {
        self.phrase_mode = on;
        self
    }

    pub fn phrase_mode(&self) -> bool {
        self.phrase_mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Text form accepted by [`EmbeddingTable::parse`], tokens sorted.
    pub fn to_text(&self) -> String {
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        let mut out = String::new();
        for t in tokens {
            out.push_str(t);
            for v in &self.vectors[t] {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Lowercased tokens split on whitespace and underscores.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt.split(|c: char| c.is_whitespace() || c == '_').filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Mean of the token vectors of `prompt`, skipping unknown tokens. Fails
/// only when no token is known.
pub fn embed_prompt(table: &EmbeddingTable, prompt: &str) -> Result<Vec<f64>, RankerError> {
    let tokens = tokenize(prompt);
    if table.phrase_mode {
        let phrase = tokens.join("_");
        return table.get(&phrase).map(<[f64]>::to_vec).ok_or(RankerError::OutOfVocabulary(vec![phrase]));
    }
    let mut sum = vec![0.0; table.dim];
    let mut n = 0usize;
    for t in &tokens {
        if let Some(v) = table.get(t) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(RankerError::OutOfVocabulary(tokens));
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

pub fn orr_query(object: &str, room: &str) -> String {
    format!("{object} in {room}")
}

pub fn orr_key(receptacle: &str, room: &str) -> String {
    format!("{receptacle} of {room}")
}

pub fn or_query(object: &str) -> String {
    object.to_string()
}

pub fn or_key(room: &str) -> String {
    room.to_string()
}
