//! Category knowledge base, word embeddings for shelf placement, and
//! orthographic rhyme correction of heard drink names.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("label '{0}' is in neither the knowledge base nor the embeddings")]
    UnknownLabel(String),
    #[error("label '{0}' has no embedding and no category match")]
    NoEmbedding(String),
    #[error("no shelves")]
    NoShelves,
}

/// Lowercase with spaces as underscores.
pub fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase().split_whitespace().collect::<Vec<_>>().join("_")
}

pub const DEFAULT_EMBEDDINGS: &str = include_str!("../data/embeddings.txt");
pub const DEFAULT_CATEGORIES: &str = include_str!("../data/categories.txt");

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Lines `word v1 ... vD`.
    pub fn parse(text: &str) -> Result<Self, SemanticsError> {
        let mut t = EmbeddingTable::default();
        for (line, l) in content_lines(text) {
            let mut it = l.split_whitespace();
            let word = it.next().expect("non-empty line");
            let v: Vec<f64> = it
                .map(|x| x.parse::<f64>().map_err(|e| SemanticsError::Parse { line, msg: format!("bad number '{x}': {e}") }))
                .collect::<Result<_, _>>()?;
            if v.is_empty() {
                return Err(SemanticsError::Parse { line, msg: "missing vector".into() });
            }
            if t.dim == 0 {
                t.dim = v.len();
            } else if v.len() != t.dim {
                return Err(SemanticsError::Parse { line, msg: format!("expected {} values, got {}", t.dim, v.len()) });
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(SemanticsError::Parse { line, msg: "zero vector".into() });
            }
            t.vectors.insert(normalize_label(word), v);
        }
        Ok(t)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&normalize_label(word)).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Multiplies every vector by a positive factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { dim: self.dim, vectors: self.vectors.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x * factor).collect())).collect() }
    }

    pub fn insert(&mut self, word: &str, v: Vec<f64>) {
        if self.dim == 0 {
            self.dim = v.len();
        }
        self.vectors.insert(normalize_label(word), v);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategoryKb {
    categories: BTreeMap<String, String>,
}

impl CategoryKb {
    /// Lines `label category`; duplicate labels are rejected.
    pub fn parse(text: &str) -> Result<Self, SemanticsError> {
        let mut kb = CategoryKb::default();
        for (line, l) in content_lines(text) {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(SemanticsError::Parse { line, msg: "expected 'label category'".into() });
            }
            if kb.categories.insert(normalize_label(parts[0]), parts[1].to_string()).is_some() {
                return Err(SemanticsError::Parse { line, msg: format!("duplicate label '{}'", parts[0]) });
            }
        }
        Ok(kb)
    }

    pub fn category(&self, label: &str) -> Option<&str> {
        self.categories.get(&normalize_label(label)).map(|s| s.as_str())
    }

    pub fn insert(&mut self, label: &str, category: &str) {
        self.categories.insert(normalize_label(label), category.to_string());
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, SemanticsError> {
    if u.len() != v.len() {
        return Err(SemanticsError::DimMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(SemanticsError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShelfScore {
    #[default]
    Mean,
    Max,
}

/// Picks a shelf for `grasped`. A shelf holding an item of the same KB
/// category wins outright (first by id). Otherwise shelves are scored by
/// mean (or max) cosine similarity; shelves with nothing scorable rank last.
pub fn choose_shelf(
    grasped: &str,
    shelves: &BTreeMap<String, Vec<String>>,
    kb: &CategoryKb,
    emb: &EmbeddingTable,
    mode: ShelfScore,
) -> Result<String, SemanticsError> {
    let first = shelves.keys().next().ok_or(SemanticsError::NoShelves)?;
    let cat = kb.category(grasped);
    let vec = emb.get(grasped);
    if cat.is_none() && vec.is_none() {
        return Err(SemanticsError::UnknownLabel(grasped.to_string()));
    }
    if let Some(c) = cat {
        if let Some((id, _)) = shelves.iter().find(|(_, items)| items.iter().any(|i| kb.category(i) == Some(c))) {
            return Ok(id.clone());
        }
    }
    let v = vec.ok_or_else(|| SemanticsError::NoEmbedding(grasped.to_string()))?;
    let mut best = (f64::NEG_INFINITY, first.clone());
    for (id, items) in shelves {
        let sims: Vec<f64> = items.iter().filter_map(|i| emb.get(i)).filter_map(|w| cosine_similarity(v, w).ok()).collect();
        let score = if sims.is_empty() {
            f64::NEG_INFINITY
        } else {
            match mode {
                ShelfScore::Mean => sims.iter().sum::<f64>() / sims.len() as f64,
                ShelfScore::Max => sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        };
        if score > best.0 {
            best = (score, id.clone());
        }
    }
    Ok(best.1)
}

fn is_vowel(chars: &[char], i: usize) -> bool {
    matches!(chars[i], 'a' | 'e' | 'i' | 'o' | 'u') || (chars[i] == 'y' && i > 0)
}

/// Suffix starting at the last vowel group that is followed by a consonant;
/// words without one use their first vowel group. "santa" -> "anta",
/// "coke" -> "oke", "tea" -> "ea".
pub fn rhyme_key(word: &str) -> String {
    let chars: Vec<char> = word.to_lowercase().chars().filter(|c| c.is_alphabetic()).collect();
    let mut groups = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if is_vowel(&chars, i) {
            let start = i;
            while i < chars.len() && is_vowel(&chars, i) {
                i += 1;
            }
            groups.push((start, i));
        } else {
            i += 1;
        }
    }
    let start = groups
        .iter()
        .rev()
        .find(|(_, end)| *end < chars.len())
        .or(groups.first())
        .map_or(0, |g| g.0);
    chars[start..].iter().collect()
}

/// Maps a heard word onto the menu. `None` means ask again.
pub fn rhyme_correct(heard: &str, menu: &[String]) -> Option<String> {
    let h = heard.trim().to_lowercase();
    if let Some(m) = menu.iter().find(|m| m.to_lowercase() == h) {
        return Some(m.clone());
    }
    let key = rhyme_key(&h);
    let sharers: Vec<&String> = menu.iter().filter(|m| rhyme_key(m) == key).collect();
    match sharers.len() {
        0 => {}
        1 => return Some(sharers[0].clone()),
        // Several items rhyme: guessing could pick the wrong one.
        _ => return None,
    }
    let dists: Vec<(usize, &String)> = menu.iter().map(|m| (strsim::levenshtein(&h, &m.to_lowercase()), m)).collect();
    let min = dists.iter().map(|d| d.0).min()?;
    let at_min: Vec<_> = dists.iter().filter(|d| d.0 == min).collect();
    (min <= 2 && at_min.len() == 1).then(|| at_min[0].1.clone())
}
