//! Vocabulary construction and TF-IDF featurization.
//!
//! Each post is one document. The vocabulary keeps the top-K tokens by
//! document frequency (ties broken lexicographically) and must be built from
//! training-fold texts only.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::neural::TokenId;
use crate::tensor::Tensor2;

use super::tree::PropagationTree;

/// Lowercased alphanumeric tokenization; every non-alphanumeric character
/// separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, TokenId>,
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Top-K tokens by document frequency over every post of `trees`.
    pub fn build(trees: &[PropagationTree], cap: usize) -> Self {
        assert!(cap >= 1, "vocabulary cap must be at least 1");
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0usize;
        for tree in trees {
            for post in &tree.posts {
                n_docs += 1;
                let mut seen: Vec<String> = tokenize(&post.raw_text);
                seen.sort();
                seen.dedup();
                for tok in seen {
                    *df.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap);

        let mut token_to_id = BTreeMap::new();
        let mut tokens = Vec::with_capacity(ranked.len());
        let mut doc_freq = Vec::with_capacity(ranked.len());
        for (id, (tok, freq)) in ranked.into_iter().enumerate() {
            token_to_id.insert(tok.clone(), id);
            tokens.push(tok);
            doc_freq.push(freq);
        }
        Vocabulary {
            token_to_id,
            tokens,
            doc_freq,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    /// Smoothed inverse document frequency.
    pub fn idf(&self, id: TokenId) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[id] as f64)).ln() + 1.0
    }

    /// Maps a text to in-vocabulary token ids; out-of-vocabulary tokens are
    /// dropped.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        tokenize(text)
            .into_iter()
            .filter_map(|t| self.id_of(&t))
            .collect()
    }

    /// L2-normalized TF-IDF row for a token-id sequence; all-zero rows stay
    /// zero.
    pub fn feature_row(&self, token_ids: &[TokenId]) -> Vec<f64> {
        let mut row = vec![0.0f64; self.len()];
        for &id in token_ids {
            row[id] += 1.0;
        }
        for (id, v) in row.iter_mut().enumerate() {
            if *v > 0.0 {
                *v *= self.idf(id);
            }
        }
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        row
    }
}

/// Fills `tokens` on every post and the tree's TF-IDF feature matrix.
pub fn featurize(tree: &mut PropagationTree, vocab: &Vocabulary) {
    let mut x = Tensor2::zeros(0, 0);
    for post in &mut tree.posts {
        post.tokens = vocab.encode(&post.raw_text);
    }
    for post in &tree.posts {
        x.push_row(&vocab.feature_row(&post.tokens));
    }
    tree.features = x;
}

pub fn featurize_all(trees: &mut [PropagationTree], vocab: &Vocabulary) {
    for tree in trees {
        featurize(tree, vocab);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tree::Post;

    fn tree_of(texts: &[&str]) -> PropagationTree {
        let posts: Vec<Post> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Post {
                id: format!("p{i}"),
                parent_id: if i == 0 { None } else { Some("p0".to_string()) },
                time_offset_min: i as f64,
                raw_text: t.to_string(),
                tokens: vec![],
            })
            .collect();
        PropagationTree::from_posts("e", 0, posts).unwrap()
    }

    #[test]
    fn highest_df_wins_at_cap_one() {
        let trees = vec![tree_of(&["a b", "a c"])];
        let v = Vocabulary::build(&trees, 1);
        assert_eq!(v.len(), 1);
        assert!(v.id_of("a").is_some());
    }

    #[test]
    fn cap_larger_than_distinct_keeps_all() {
        let trees = vec![tree_of(&["a b", "a c"])];
        let v = Vocabulary::build(&trees, 100);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn ties_break_lexicographically() {
        // df(a)=2, df(b)=df(c)=1; K=2 keeps {a, b}
        let trees = vec![tree_of(&["a b", "a c"])];
        let v = Vocabulary::build(&trees, 2);
        assert!(v.id_of("a").is_some());
        assert!(v.id_of("b").is_some());
        assert!(v.id_of("c").is_none());
    }

    #[test]
    fn empty_corpus_is_a_valid_empty_vocabulary() {
        let v = Vocabulary::build(&[], 10);
        assert!(v.is_empty());
    }

    #[test]
    fn tfidf_matches_hand_oracle_on_single_doc() {
        // one document "a a b": df(a)=df(b)=1, N=1,
        // idf = ln(2/2) + 1 = 1 for both, row ~ [2, 1] / sqrt(5)
        let mut trees = vec![tree_of(&["a a b"])];
        let v = Vocabulary::build(&trees, 10);
        featurize_all(&mut trees, &v);
        let x = &trees[0].features;
        let a = v.id_of("a").unwrap();
        let b = v.id_of("b").unwrap();
        let norm = 5.0f64.sqrt();
        assert!((x.get(0, a) - 2.0 / norm).abs() < 1e-12);
        assert!((x.get(0, b) - 1.0 / norm).abs() < 1e-12);
    }

    #[test]
    fn out_of_vocab_post_gets_zero_row() {
        let mut trees = vec![tree_of(&["a a", "zzz qqq"])];
        let v = Vocabulary::build(&[tree_of(&["a a"])], 10);
        featurize_all(&mut trees, &v);
        assert!(trees[0].features.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rows_are_unit_or_zero_norm() {
        let mut trees = vec![tree_of(&["a b c", "", "b b b c"])];
        let v = Vocabulary::build(&trees, 10);
        featurize_all(&mut trees, &v);
        for i in 0..trees[0].features.rows() {
            let n: f64 = trees[0].features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n < 1e-12 || (n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("Hello, WORLD! x2"), vec!["hello", "world", "x2"]);
    }
}
