use std::hash::Hasher;

use fnv::FnvHasher;

use super::{EmbedError, EmbeddingMatrix};
use crate::corpus::Corpus;
use crate::tensor::Matrix;

/// Width of tweet vectors, shared by the hashed encoder and precomputed files.
pub const TWEET_DIM: usize = 768;

const MENTION_MARKER: &str = "@user";

/// Where tweet vectors come from.
#[derive(Debug, Clone)]
pub enum TweetSource {
    /// Signed feature hashing of the preprocessed text.
    Fallback,
    /// Externally computed sentence vectors, used verbatim.
    Precomputed(EmbeddingMatrix),
}

/// Lowercase, drop links, map mentions to `@user`, split on anything that is
/// not alphanumeric (which also drops `#` and emoji).
pub fn preprocess_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            continue;
        }
        if lower.len() > 1 && lower.starts_with('@') {
            out.push(MENTION_MARKER.to_string());
            continue;
        }
        out.extend(
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string),
        );
    }
    out
}

fn bucket(token: &str) -> (usize, f64) {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let v = h.finish();
    let sign = if (v >> 63) & 1 == 0 { 1.0 } else { -1.0 };
    ((v % TWEET_DIM as u64) as usize, sign)
}

/// Mean of signed one-hot bucket vectors, then l2-normalized. Empty or fully
/// cancelling text gives the zero vector.
pub fn encode_text(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; TWEET_DIM];
    let tokens = preprocess_tokens(text);
    if tokens.is_empty() {
        return v;
    }
    for t in &tokens {
        let (b, s) = bucket(t);
        v[b] += s;
    }
    let n = tokens.len() as f64;
    v.iter_mut().for_each(|x| *x /= n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// One 768-dim row per corpus tweet, in corpus order.
pub fn encode_tweets(corpus: &Corpus, source: &TweetSource) -> Result<EmbeddingMatrix, EmbedError> {
    let ids: Vec<String> = corpus.tweets().iter().map(|t| t.id.clone()).collect();
    let values = match source {
        TweetSource::Fallback => {
            let mut data = Vec::with_capacity(ids.len() * TWEET_DIM);
            for t in corpus.tweets() {
                data.extend(encode_text(&t.text));
            }
            Matrix::from_vec(ids.len(), TWEET_DIM, data)?
        }
        TweetSource::Precomputed(pre) => {
            if pre.dim() != TWEET_DIM {
                return Err(EmbedError::DimensionMismatch {
                    expected: TWEET_DIM,
                    found: pre.dim(),
                });
            }
            pre.select(ids.iter().map(String::as_str))?
        }
    };
    EmbeddingMatrix::new(ids, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticConfig};
    use proptest::prelude::*;

    #[test]
    fn preprocessing_rules() {
        assert_eq!(
            preprocess_tokens("Oh GREAT, @bob!! see https://x.co/a #Monday 😒"),
            vec!["oh", "great", "@user", "see", "monday"]
        );
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(encode_text("").iter().all(|&v| v == 0.0));
        assert!(encode_text("   http://t.co/x ").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synthetic_tweets_are_unit_or_zero() {
        let corpus = generate_synthetic(&SyntheticConfig {
            n_users: 100,
            n_conversations: 400,
            history_length: [1, 2],
            seed: 21,
            ..Default::default()
        })
        .unwrap();
        let m = encode_tweets(&corpus, &TweetSource::Fallback).unwrap();
        assert!(m.rows() >= 1000);
        for r in 0..m.rows() {
            let norm = m.values().row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6, "row {r} norm {norm}");
        }
    }

    #[test]
    fn precomputed_rows_must_cover_corpus() {
        let corpus = generate_synthetic(&SyntheticConfig {
            n_users: 20,
            n_conversations: 10,
            history_length: [1, 1],
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let partial = EmbeddingMatrix::new(
            vec![corpus.tweets()[0].id.clone()],
            Matrix::zeros(1, TWEET_DIM),
        )
        .unwrap();
        assert!(matches!(
            encode_tweets(&corpus, &TweetSource::Precomputed(partial)),
            Err(EmbedError::MissingEmbedding(_))
        ));
    }

    proptest! {
        #[test]
        fn bag_of_words_ignores_order(words in prop::collection::vec("[a-z]{1,6}", 0..12), seed in any::<u64>()) {
            let text = words.join(" ");
            let mut shuffled = words.clone();
            let k = shuffled.len().max(1);
            shuffled.rotate_left((seed as usize) % k);
            shuffled.reverse();
            prop_assert_eq!(encode_text(&text), encode_text(&text));
            prop_assert_eq!(encode_text(&text), encode_text(&shuffled.join(" ")));
        }
    }
}
