//! Unigram tokenization, vocabularies and sparse feature vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::SurveyRecord;
use crate::scoring::Scores;

/// Lowercases and splits on every character that is neither a letter nor a digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(v: &[f64]) -> Self {
        let (indices, values) = v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x != 0.0)
            .map(|(i, x)| (i as u32, *x))
            .unzip();
        Self { indices, values }
    }

    /// Builds from unsorted `(index, value)` pairs, summing duplicates.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut m: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *m.entry(i).or_default() += v;
        }
        let (indices, values) = m.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Self { indices, values }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(i, v)| (*i as usize, *v))
    }

    pub fn get(&self, index: u32) -> f64 {
        self.indices
            .binary_search(&index)
            .map(|p| self.values[p])
            .unwrap_or(0.0)
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.iter().map(|(i, v)| w.get(i).copied().unwrap_or(0.0) * v).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            if i < dim {
                out[i] = v;
            }
        }
        out
    }
}

/// Token to dense index map built from training texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pub min_doc_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    min_doc_freq: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_doc_freq)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            min_doc_freq: v.min_doc_freq,
        }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_doc_freq: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            index,
            min_doc_freq,
        }
    }

    /// Keeps tokens with document frequency at least `min_doc_freq`, ordered by
    /// frequency descending then token ascending. Tokens in `exclude` are dropped.
    pub fn from_texts<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        min_doc_freq: usize,
        exclude: &[String],
    ) -> Result<Self, ModelError> {
        let excluded: HashSet<String> = exclude.iter().map(|t| t.to_lowercase()).collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for text in texts {
            n_docs += 1;
            let unique: HashSet<String> = tokenize(text).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(ModelError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = df
            .into_iter()
            .filter(|(t, n)| *n >= min_doc_freq.max(1) && !excluded.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(
            kept.into_iter().map(|(t, _)| t).collect(),
            min_doc_freq,
        ))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// L2-normalized term frequencies over in-vocabulary tokens.
    pub fn featurize_text(&self, text: &str) -> SparseVec {
        let v = SparseVec::from_pairs(
            tokenize(text)
                .iter()
                .filter_map(|t| self.index_of(t))
                .map(|i| (i, 1.0)),
        );
        let norm = v.norm_sq().sqrt();
        if norm == 0.0 {
            return v;
        }
        SparseVec {
            indices: v.indices,
            values: v.values.into_iter().map(|x| x / norm).collect(),
        }
    }
}

/// Vocabulary over the texts of `train`.
pub fn build_vocabulary(train: &[SurveyRecord], min_doc_freq: usize) -> Result<Vocabulary, ModelError> {
    Vocabulary::from_texts(train.iter().map(|r| r.text.as_str()), min_doc_freq, &[])
}

pub fn featurize(r: &SurveyRecord, v: &Vocabulary) -> SparseVec {
    v.featurize_text(&r.text)
}

/// Scored quantifier phrases used as auxiliary features.
///
/// Each phrase is matched as a contiguous token sequence. A text gets three extra
/// features after the unigram block: whether any phrase matched, and the mean and
/// maximum score of the matched phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierLexicon {
    pub entries: Vec<(String, f64)>,
}

pub const LEXICON_FEATURES: usize = 3;

#[derive(Deserialize)]
struct LexiconRow {
    phrase: String,
    score: f64,
}

impl QuantifierLexicon {
    pub fn new(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let mut entries: Vec<(String, f64)> = entries
            .into_iter()
            .map(|(p, s)| (tokenize(&p).join(" "), s))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|a, b| a.0 == b.0);
        Self { entries }
    }

    /// Uses each scored record's text as a phrase and its normalized score as weight.
    pub fn from_scores(phrases: &[SurveyRecord], scores: &Scores) -> Self {
        Self::new(phrases.iter().filter_map(|r| {
            scores
                .get(&r.record_id)
                .map(|s| (r.text.clone(), s.norm_score))
        }))
    }

    /// Reads a CSV with `phrase,score` columns.
    pub fn read_csv(path: &Path) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| ModelError::Lexicon(e.to_string()))?;
        let rows: Result<Vec<LexiconRow>, _> = rdr.deserialize().collect();
        let rows = rows.map_err(|e| ModelError::Lexicon(e.to_string()))?;
        Ok(Self::new(rows.into_iter().map(|r| (r.phrase, r.score))))
    }

    pub fn features(&self, tokens: &[String]) -> [f64; LEXICON_FEATURES] {
        let joined = format!(" {} ", tokens.join(" "));
        let matched: Vec<f64> = self
            .entries
            .iter()
            .filter(|(p, _)| joined.contains(&format!(" {p} ")))
            .map(|(_, s)| *s)
            .collect();
        if matched.is_empty() {
            return [0.0; LEXICON_FEATURES];
        }
        let mean = matched.iter().sum::<f64>() / matched.len() as f64;
        let max = matched.iter().copied().fold(f64::MIN, f64::max);
        [1.0, mean, max]
    }
}

/// Turns texts into feature vectors: unigrams, optionally followed by lexicon features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub vocabulary: Vocabulary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<QuantifierLexicon>,
}

impl Featurizer {
    pub fn fit(
        train: &[SurveyRecord],
        min_doc_freq: usize,
        exclude: &[String],
        lexicon: Option<QuantifierLexicon>,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            vocabulary: Vocabulary::from_texts(
                train.iter().map(|r| r.text.as_str()),
                min_doc_freq,
                exclude,
            )?,
            lexicon,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len() + self.lexicon.as_ref().map_or(0, |_| LEXICON_FEATURES)
    }

    pub fn transform_text(&self, text: &str) -> SparseVec {
        let base = self.vocabulary.featurize_text(text);
        let Some(lex) = &self.lexicon else {
            return base;
        };
        let offset = self.vocabulary.len() as u32;
        let extra = lex.features(&tokenize(text));
        SparseVec::from_pairs(
            base.iter()
                .map(|(i, v)| (i as u32, v))
                .chain(extra.iter().enumerate().map(|(i, v)| (offset + i as u32, *v))),
        )
    }

    pub fn transform(&self, records: &[SurveyRecord]) -> Vec<SparseVec> {
        records.iter().map(|r| self.transform_text(&r.text)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(texts: &[&str], mdf: usize) -> Vocabulary {
        Vocabulary::from_texts(texts.iter().copied(), mdf, &[]).unwrap()
    }

    #[test]
    fn tokenizer_on_german() {
        assert_eq!(tokenize("Kommt nicht mehr vor."), ["kommt", "nicht", "mehr", "vor"]);
        assert_eq!(tokenize("Überall häufig, z.B. 1920!"), ["überall", "häufig", "z", "b", "1920"]);
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn min_doc_freq() {
        let v = vocab(&["a b", "a c"], 2);
        assert_eq!(v.tokens(), ["a"]);
        let v = vocab(&["a b", "a c"], 1);
        assert_eq!(v.tokens(), ["a", "b", "c"]);
    }

    #[test]
    fn doc_freq_counts_documents_not_occurrences() {
        let v = vocab(&["b b b", "a", "a"], 2);
        assert_eq!(v.tokens(), ["a"]);
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(
            Vocabulary::from_texts(std::iter::empty(), 1, &[]),
            Err(ModelError::EmptyCorpus)
        ));
    }

    #[test]
    fn exclusion_list() {
        let v = Vocabulary::from_texts(["a b", "a c"], 1, &["A".into()]).unwrap();
        assert_eq!(v.tokens(), ["b", "c"]);
    }

    #[test]
    fn featurize_single_token() {
        let v = vocab(&["a b"], 1);
        let f = v.featurize_text("b");
        assert_eq!(f.values, [1.0]);
    }

    #[test]
    fn featurize_term_frequency() {
        let v = vocab(&["a b"], 1);
        let f = v.featurize_text("a a b");
        let s5 = 5f64.sqrt();
        assert!((f.get(v.index_of("a").unwrap()) - 2.0 / s5).abs() < 1e-15);
        assert!((f.get(v.index_of("b").unwrap()) - 1.0 / s5).abs() < 1e-15);
        assert!((f.norm_sq() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn featurize_all_oov() {
        let v = vocab(&["a b"], 1);
        assert!(v.featurize_text("x y z").is_empty());
    }

    #[test]
    fn vocabulary_serde_rebuilds_index() {
        let v = vocab(&["a b", "a c"], 1);
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back.index_of("c"), v.index_of("c"));
        assert_eq!(back, v);
    }

    #[test]
    fn sparse_ops() {
        let a = SparseVec::from_dense(&[1.0, 0.0, 2.0, 3.0]);
        let b = SparseVec::from_pairs([(3, 1.0), (0, 2.0), (3, 1.0)]);
        assert_eq!(b.indices, [0, 3]);
        assert_eq!(a.dot(&b), 2.0 + 6.0);
        assert_eq!(a.dot_dense(&[1.0, 1.0, 1.0, 1.0]), 6.0);
        assert_eq!(a.to_dense(4), [1.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn lexicon_features() {
        let lex = QuantifierLexicon::new([("sehr häufig".to_string(), 0.9), ("selten".to_string(), 0.2)]);
        assert_eq!(lex.features(&tokenize("Ist sehr häufig.")), [1.0, 0.9, 0.9]);
        assert_eq!(lex.features(&tokenize("häufig")), [0.0; 3]);
        let f = lex.features(&tokenize("selten, stellenweise sehr häufig"));
        assert!((f[1] - 0.55).abs() < 1e-12);

        let fz = Featurizer {
            vocabulary: vocab(&["ist selten"], 1),
            lexicon: Some(lex),
        };
        assert_eq!(fz.dim(), 5);
        let x = fz.transform_text("ist selten");
        assert_eq!(x.get(2), 1.0);
        assert_eq!(x.get(3), 0.2);
    }
}
