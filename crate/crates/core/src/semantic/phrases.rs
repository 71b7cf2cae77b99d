use std::collections::HashSet;

use super::vectors::WordVectorTable;
use crate::error::{FgpError, Result};
use crate::tensor::axpy;

/// A phrase and its mean-pooled word vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEmbedding {
    pub text: String,
    pub class_id: u32,
    pub vector: Vec<f64>,
}

/// Lowercase unigrams and adjacent bigrams, stopwords removed.
///
/// A bigram is only formed from two tokens that were adjacent in the text;
/// a stopword or punctuation between them breaks the pair. Output keeps the
/// order of first occurrence with duplicates dropped.
pub fn extract_phrases(description: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |p: String, out: &mut Vec<String>| {
        if seen.insert(p.clone()) {
            out.push(p);
        }
    };

    for clause in description.split([',', '.', ';', ':', '!', '?']) {
        let mut prev: Option<String> = None;
        for raw in clause.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-')) {
            let token = raw.trim_matches(|c| c == '\'' || c == '-').to_lowercase();
            if token.is_empty() {
                continue;
            }
            if stopwords.contains(&token) {
                prev = None;
                continue;
            }
            push(token.clone(), &mut out);
            if let Some(p) = prev.take() {
                push(format!("{p} {token}"), &mut out);
            }
            prev = Some(token);
        }
    }
    out
}

/// Mean of the in-vocabulary token vectors of `phrase`.
pub fn embed_phrase(
    phrase: &str,
    class_id: u32,
    table: &WordVectorTable,
) -> Result<PhraseEmbedding> {
    if phrase.trim().is_empty() {
        return Err(FgpError::domain("cannot embed an empty phrase"));
    }
    let mut sum = vec![0.0; table.dim()];
    let mut known = 0usize;
    for token in phrase.split_whitespace() {
        if let Some(v) = table.get(&token.to_lowercase()) {
            axpy(1.0, v, &mut sum);
            known += 1;
        }
    }
    if known == 0 {
        return Err(FgpError::OutOfVocabulary(phrase.to_string()));
    }
    let inv = 1.0 / known as f64;
    sum.iter_mut().for_each(|x| *x *= inv);
    Ok(PhraseEmbedding {
        text: phrase.to_string(),
        class_id,
        vector: sum,
    })
}

/// Embeds every phrase, dropping the all-OOV ones. Returns the kept
/// embeddings and the number dropped.
pub fn embed_phrases(
    phrases: &[String],
    class_id: u32,
    table: &WordVectorTable,
) -> Result<(Vec<PhraseEmbedding>, usize)> {
    let mut kept = Vec::with_capacity(phrases.len());
    let mut dropped = 0;
    for p in phrases {
        match embed_phrase(p, class_id, table) {
            Ok(e) => kept.push(e),
            Err(FgpError::OutOfVocabulary(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((kept, dropped))
}

pub fn default_stopwords() -> HashSet<String> {
    [
        "a", "an", "the", "and", "or", "of", "with", "in", "on", "at", "to", "for", "by", "is",
        "are", "was", "be", "as", "that", "this", "it", "its", "from", "has", "have", "which",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stop(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stopword_and_bigram() {
        let p = extract_phrases("the White Stripe", &stop(&["the"]));
        assert_eq!(p, vec!["white", "stripe", "white stripe"]);
    }

    #[test]
    fn empty_text() {
        assert!(extract_phrases("", &stop(&["the"])).is_empty());
    }

    #[test]
    fn stripes_bigram_present() {
        let p = extract_phrases("Black and white stripes", &stop(&["and"]));
        assert!(p.contains(&"white stripes".to_string()), "{p:?}");
        // "and" separates black from white
        assert!(!p.contains(&"black white".to_string()));
    }

    #[test]
    fn duplicates_removed_in_order() {
        let p = extract_phrases("red fox, red fox.", &stop(&[]));
        assert_eq!(p, vec!["red", "fox", "red fox"]);
    }

    fn table() -> WordVectorTable {
        WordVectorTable::parse("cat 0 2\ndog 2 0\nbird 1 1\n").unwrap()
    }

    #[test]
    fn singleton_mean() {
        let e = embed_phrase("bird", 0, &table()).unwrap();
        assert_eq!(e.vector, vec![1.0, 1.0]);
    }

    #[test]
    fn midpoint_and_oov_skip() {
        assert_eq!(
            embed_phrase("cat dog", 0, &table()).unwrap().vector,
            vec![1.0, 1.0]
        );
        assert_eq!(
            embed_phrase("cat dog unknowntoken", 0, &table())
                .unwrap()
                .vector,
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn all_oov_signalled() {
        assert!(matches!(
            embed_phrase("zzz qqq", 0, &table()),
            Err(FgpError::OutOfVocabulary(_))
        ));
        let (kept, dropped) = embed_phrases(&["zzz".into(), "cat".into()], 3, &table()).unwrap();
        assert_eq!((kept.len(), dropped), (1, 1));
        assert_eq!(kept[0].class_id, 3);
    }

    proptest::proptest! {
        #[test]
        fn unigram_reextraction_is_identity(text in "[a-zA-Z ,.]{0,60}") {
            let sw = stop(&["the", "and"]);
            for p in extract_phrases(&text, &sw) {
                if !p.contains(' ') {
                    proptest::prop_assert_eq!(extract_phrases(&p, &sw), vec![p.clone()]);
                }
            }
        }
    }
}
