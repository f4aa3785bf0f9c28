use std::fs;
use std::path::Path;

use super::vocab::{TokenSequence, Vocab};
use super::TextError;

pub fn read_corpus(path: &Path) -> Result<String, TextError> {
    let text = fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if text.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    Ok(text)
}

/// Fixed-length windows starting at `0, stride, 2·stride, …`; a trailing
/// window shorter than `seq_len` is dropped.
pub fn windows(ids: &[u32], seq_len: usize, stride: usize) -> Result<Vec<TokenSequence>, TextError> {
    if !seq_len.is_power_of_two() {
        return Err(TextError::BadWindow(format!("sequence length {seq_len} is not a power of two")));
    }
    if stride == 0 {
        return Err(TextError::BadWindow("stride must be at least 1".into()));
    }
    if ids.len() < seq_len {
        return Err(TextError::BadWindow(format!(
            "corpus has {} tokens, fewer than one window of {seq_len}",
            ids.len()
        )));
    }
    Ok((0..=ids.len() - seq_len)
        .step_by(stride)
        .map(|start| TokenSequence::new(ids[start..start + seq_len].to_vec()))
        .collect())
}

/// Reads, encodes and windows a UTF-8 corpus file.
pub fn ingest_corpus(path: &Path, vocab: &Vocab, seq_len: usize, stride: usize) -> Result<Vec<TokenSequence>, TextError> {
    let text = read_corpus(path)?;
    let ids = vocab.encode(&text)?;
    windows(&ids.ids, seq_len, stride)
}

/// Splits a token stream into a leading training part and a trailing
/// held-out part of `holdout_fraction` of the tokens.
pub fn split_holdout(ids: &[u32], holdout_fraction: f64) -> (&[u32], &[u32]) {
    let held = ((ids.len() as f64) * holdout_fraction.clamp(0.0, 1.0)).round() as usize;
    ids.split_at(ids.len() - held)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        let ids: Vec<u32> = (0..10).collect();
        assert_eq!(windows(&ids, 4, 4).unwrap().len(), 2);
        let w = windows(&ids, 4, 2).unwrap();
        assert_eq!(w.len(), 4);
        let starts: Vec<u32> = w.iter().map(|s| s.ids[0]).collect();
        assert_eq!(starts, [0, 2, 4, 6]);
    }

    #[test]
    fn short_corpus_and_bad_lengths_rejected() {
        assert!(windows(&[0, 1, 2], 4, 1).is_err());
        assert!(windows(&[0; 10], 3, 1).is_err());
        assert!(windows(&[0; 10], 4, 0).is_err());
    }

    #[test]
    fn missing_or_empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.txt");
        assert!(matches!(read_corpus(&missing), Err(TextError::Io { .. })));
        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(read_corpus(&empty), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn ingest_encodes_and_windows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "abcdabcdab").unwrap();
        let vocab = Vocab::build_char("abcd").unwrap();
        let w = ingest_corpus(&path, &vocab, 4, 4).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn holdout_takes_the_tail() {
        let ids: Vec<u32> = (0..10).collect();
        let (train, held) = split_holdout(&ids, 0.2);
        assert_eq!(train.len(), 8);
        assert_eq!(held, &[8, 9]);
    }
}
