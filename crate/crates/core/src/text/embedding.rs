use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::TextError;

pub const EMBEDDING_DIM: usize = 300;
/// Tokens kept per utterance; longer utterances are trimmed, shorter ones
/// zero padded at the end.
pub const WINDOW: usize = 60;

/// Pretrained word vectors, `|V| × dim`, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocabulary: HashMap<String, usize>,
    matrix: Vec<f32>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn from_rows(rows: Vec<(String, Vec<f32>)>, dim: usize) -> Result<Self, TextError> {
        let mut vocabulary = HashMap::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for (token, row) in rows {
            if row.len() != dim {
                return Err(TextError::WrongDimension {
                    token,
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(TextError::NonFiniteEmbedding { token });
            }
            // first occurrence wins, as in the usual word-vector readers
            if vocabulary.contains_key(&token) {
                continue;
            }
            vocabulary.insert(token, vocabulary.len());
            matrix.extend_from_slice(&row);
        }
        Ok(Self { vocabulary, matrix, dim })
    }

    /// Reads the word-vector text format: one `token v1 … v300` line per
    /// entry, with an optional `count dim` header line. The header's
    /// dimension, when present, replaces the default of 300.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        Self::load_filtered(path, None)
    }

    /// As [`load`](Self::load), keeping only tokens in `keep`.
    pub fn load_filtered(path: &Path, keep: Option<&HashSet<String>>) -> Result<Self, TextError> {
        let file = std::fs::File::open(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut rows = Vec::new();
        let mut dim = EMBEDDING_DIM;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| TextError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                dim = rest[0].parse().expect("checked");
                continue;
            }
            if keep.is_some_and(|k| !k.contains(token)) {
                continue;
            }
            let values = rest
                .iter()
                .map(|v| v.parse::<f32>())
                .collect::<Result<Vec<f32>, _>>()
                .map_err(|e| TextError::EmbeddingFormat {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            rows.push((token.to_string(), values));
        }
        Self::from_rows(rows, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.vocabulary
            .get(token)
            .map(|&i| &self.matrix[i * self.dim..(i + 1) * self.dim])
    }
}

/// Fixed-shape utterance representation: `window × dim` values, rows past
/// the mask exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceTensorText {
    pub window: usize,
    pub dim: usize,
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl UtteranceTensorText {
    pub fn zeros(window: usize, dim: usize) -> Self {
        Self {
            window,
            dim,
            values: vec![0.0; window * dim],
            mask: vec![false; window],
        }
    }

    /// Packs up to `window` rows, marking them as real tokens.
    pub fn from_rows(rows: &[Vec<f32>], window: usize, dim: usize) -> Self {
        let mut t = Self::zeros(window, dim);
        for (i, row) in rows.iter().take(window).enumerate() {
            t.values[i * dim..(i + 1) * dim].copy_from_slice(&row[..dim]);
            t.mask[i] = true;
        }
        t
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows under the mask, in order, widened to `f64`.
    pub fn active_rows(&self) -> Vec<Vec<f64>> {
        (0..self.window)
            .filter(|&i| self.mask[i])
            .map(|i| self.row(i).iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.window, self.dim]
    }
}

/// Looks up the first `WINDOW` tokens; out-of-vocabulary tokens and padding
/// rows are zero. OOV tokens still count as real positions in the mask.
pub fn embed_sequence(tokens: &[String], table: &EmbeddingTable) -> UtteranceTensorText {
    let dim = table.dim();
    let mut t = UtteranceTensorText::zeros(WINDOW, dim);
    for (i, token) in tokens.iter().take(WINDOW).enumerate() {
        if let Some(v) = table.vector(token) {
            t.values[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
        t.mask[i] = true;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn table(words: &[&str]) -> EmbeddingTable {
        let rows = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), vec![i as f32 + 1.0; EMBEDDING_DIM]))
            .collect();
        EmbeddingTable::from_rows(rows, EMBEDDING_DIM).unwrap()
    }

    #[test]
    fn long_input_is_trimmed_to_window() {
        let t = table(&["w"]);
        let tokens = vec!["w".to_string(); 70];
        let e = embed_sequence(&tokens, &t);
        assert_eq!(e.shape(), [60, 300]);
        assert!(e.mask.iter().all(|m| *m));
    }

    #[test]
    fn empty_input_is_all_zero() {
        let e = embed_sequence(&[], &table(&["w"]));
        assert_eq!(e.shape(), [60, 300]);
        assert!(e.values.iter().all(|v| *v == 0.0));
        assert!(e.mask.iter().all(|m| !m));
    }

    #[test]
    fn single_known_token_fills_row_zero() {
        let t = table(&["a", "b"]);
        let e = embed_sequence(&["b".to_string()], &t);
        assert_eq!(e.row(0), t.vector("b").unwrap());
        assert!(e.values[300..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oov_maps_to_zero_vector() {
        let t = table(&["a"]);
        let e = embed_sequence(&["zzz".to_string(), "a".to_string()], &t);
        assert!(e.row(0).iter().all(|v| *v == 0.0));
        assert_eq!(e.row(1), t.vector("a").unwrap());
        assert_eq!(e.mask[..3], [true, true, false]);
    }

    #[test]
    fn loads_text_format_with_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2 300").unwrap();
        for (w, v) in [("خوب", 0.5f32), ("bad", -0.25)] {
            let vals: Vec<String> = (0..300).map(|_| v.to_string()).collect();
            writeln!(f, "{w} {}", vals.join(" ")).unwrap();
        }
        let t = EmbeddingTable::load(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.vector("خوب").unwrap()[299], 0.5);
        let keep: HashSet<String> = ["bad".to_string()].into();
        assert_eq!(EmbeddingTable::load_filtered(f.path(), Some(&keep)).unwrap().len(), 1);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "w 0.1 0.2 0.3").unwrap();
        assert!(matches!(
            EmbeddingTable::load(f.path()),
            Err(TextError::WrongDimension { expected: 300, found: 3, .. })
        ));
    }
}
