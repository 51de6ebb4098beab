//! Vocabulary, POS lexicon, word embeddings, and sentence embeddings.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Embedded stop-word list (~130 common English function words), used by the
/// semantic-similarity metric and the LSA diversity score.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no",
    "another", "one", "such", "own", "same", "other", "i", "you", "he", "she", "it", "we", "they",
    "me", "him", "her", "us", "them", "my", "your", "his", "its", "our", "their", "mine", "yours",
    "hers", "ours", "theirs", "himself", "herself", "itself", "themselves", "am", "is", "are",
    "was", "were", "be", "been", "being", "do", "does", "did", "doing", "have", "has", "had",
    "having", "will", "would", "shall", "should", "can", "could", "may", "might", "must", "and",
    "or", "but", "nor", "so", "yet", "for", "of", "in", "on", "at", "by", "with", "from", "to",
    "into", "onto", "over", "under", "above", "below", "between", "among", "through", "during",
    "before", "after", "behind", "beside", "near", "toward", "towards", "without", "within",
    "along", "across", "around", "about", "against", "up", "down", "out", "off", "as", "if",
    "than", "then", "because", "while", "until", "unless", "since", "although", "though",
    "whether", "not", "only", "just", "also", "very", "too", "quite", "rather", "what", "which",
    "who", "whom", "whose", "when", "where", "why", "how", "there", "here", "now", "again",
    "once", "more", "most", "much", "many", "few", "little", "both", "all",
];

pub fn is_stop_word(w: &str) -> bool {
    STOP_WORDS.contains(&w)
}

/// Word list with reserved indices and a POS-tag lexicon built from observed
/// (word, tag) pairs.
#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    pos_lexicon: BTreeMap<String, Vec<String>>,
}

impl Vocab {
    /// Build from tagged sentences. Word order is first-seen; the lexicon
    /// lists each (tag, word) pairing once, in first-seen order.
    pub fn build<'a, I>(tagged_sentences: I) -> Self
    where
        I: IntoIterator<Item = (&'a [String], &'a [String])>,
    {
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> =
            words.iter().cloned().zip(0..).collect();
        let mut pos_lexicon: BTreeMap<String, Vec<String>> = BTreeMap::new();

        for (sent, tags) in tagged_sentences {
            for (w, t) in sent.iter().zip(tags) {
                if !index.contains_key(w) {
                    index.insert(w.clone(), words.len());
                    words.push(w.clone());
                }
                let bucket = pos_lexicon.entry(t.clone()).or_default();
                if !bucket.contains(w) {
                    bucket.push(w.clone());
                }
            }
        }
        Vocab {
            words,
            index,
            pos_lexicon,
        }
    }

    /// Rebuild from a saved word list and lexicon (checkpoint loading).
    pub fn from_parts(words: Vec<String>, pos_lexicon: BTreeMap<String, Vec<String>>) -> Self {
        let index = words.iter().cloned().zip(0..).collect();
        Vocab {
            words,
            index,
            pos_lexicon,
        }
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, w: &str) -> bool {
        self.index.contains_key(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn pos_lexicon(&self) -> &BTreeMap<String, Vec<String>> {
        &self.pos_lexicon
    }

    pub fn ids(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }
}

/// A frozen word-embedding table (the shared semantic space for the cosine
/// metric and the sentence semantic encoder).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl EmbedTable {
    /// Random table for toy corpora: one fixed draw per word, frozen.
    pub fn random(words: &[String], dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = rand::distributions::Uniform::new(-1.0, 1.0);
        let mut rows = BTreeMap::new();
        for w in words {
            let row: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            rows.insert(w.clone(), row);
        }
        EmbedTable { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, w: &str) -> Option<&[f64]> {
        self.rows.get(w).map(|r| r.as_slice())
    }

    /// Text format: one `word v1 v2 ... v_d` line per word.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (w, row) in &self.rows {
            write!(f, "{w}")?;
            for v in row {
                write!(f, " {v}")?;
            }
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut rows = BTreeMap::new();
        let mut dim = None;
        for (lineno, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts
                .next()
                .ok_or_else(|| CoreError::data(format!("embeddings line {}: empty", lineno + 1)))?
                .to_string();
            let row: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|e| {
                        CoreError::data(format!("embeddings line {}: {e}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(CoreError::data(format!(
                        "embeddings line {}: dimension {} != {d}",
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            rows.insert(word, row);
        }
        let dim = dim.ok_or_else(|| CoreError::data("embeddings file is empty"))?;
        Ok(EmbedTable { dim, rows })
    }
}

/// Mean embedding of the non-stop words of a sentence.
///
/// If every word is a stop word, the mean is taken over all words instead.
/// Words without an embedding row contribute nothing; a sentence with no
/// embeddable words yields the zero vector.
pub fn sentence_embedding(words: &[String], table: &EmbedTable) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(CoreError::domain("sentence_embedding of empty sentence"));
    }
    let content: Vec<&String> = words.iter().filter(|w| !is_stop_word(w)).collect();
    let pool: Vec<&String> = if content.is_empty() {
        words.iter().collect()
    } else {
        content
    };
    let mut acc = vec![0.0; table.dim()];
    let mut n = 0usize;
    for w in pool {
        if let Some(row) = table.get(w) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
            n += 1;
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(acc)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na: f64 = a.iter().map(|&x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
