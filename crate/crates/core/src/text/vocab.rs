use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextError;

/// Integer-encoded text; every id indexes the vocabulary it was encoded with.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.ids
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }
}

/// Token inventory: single characters plus, for BPE vocabularies, merged
/// strings in training order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
    merges: Vec<(String, String)>,
    /// `merges[i]` resolved to `(left id, right id, merged id)`.
    merge_ids: Vec<(u32, u32, u32)>,
    char_ids: HashMap<char, u32>,
    unk_id: Option<u32>,
}

/// On-disk form: `{"tokens": [...], "merges": [[l, r], ...]}`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    tokens: Vec<String>,
    merges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unk_id: Option<u32>,
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            tokens: v.id_to_token,
            merges: v.merges,
            unk_id: v.unk_id,
        }
    }
}

impl TryFrom<VocabFile> for Vocab {
    type Error = TextError;

    fn try_from(file: VocabFile) -> Result<Self, TextError> {
        Vocab::from_parts(file.tokens, file.merges, file.unk_id)
    }
}

impl Vocab {
    /// Builds a vocabulary from an explicit token list and merge list.
    /// Every merge must join two existing tokens into an existing token.
    pub fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>, unk_id: Option<u32>) -> Result<Self, TextError> {
        if tokens.is_empty() {
            return Err(TextError::InvalidVocab("no tokens".into()));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(TextError::InvalidVocab(format!("token {i} is empty")));
            }
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(TextError::InvalidVocab(format!("duplicate token {t:?}")));
            }
        }
        if let Some(u) = unk_id {
            if u as usize >= tokens.len() {
                return Err(TextError::InvalidVocab(format!("unk id {u} out of range")));
            }
        }
        let char_ids = tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let mut cs = t.chars();
                match (cs.next(), cs.next()) {
                    (Some(c), None) => Some((c, i as u32)),
                    _ => None,
                }
            })
            .collect();
        let lookup = |s: &str| {
            token_to_id
                .get(s)
                .copied()
                .ok_or_else(|| TextError::InvalidVocab(format!("merge refers to unknown token {s:?}")))
        };
        let mut merge_ids = Vec::with_capacity(merges.len());
        for (l, r) in &merges {
            merge_ids.push((lookup(l)?, lookup(r)?, lookup(&format!("{l}{r}"))?));
        }
        Ok(Vocab {
            id_to_token: tokens,
            token_to_id,
            merges,
            merge_ids,
            char_ids,
            unk_id,
        })
    }

    /// One token per distinct character, ordered by code point.
    pub fn build_char(corpus: &str) -> Result<Self, TextError> {
        if corpus.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let chars: BTreeSet<char> = corpus.chars().collect();
        Vocab::from_parts(chars.into_iter().map(String::from).collect(), Vec::new(), None)
    }

    /// Appends an `<unk>` token (if absent) and routes unknown characters to it.
    pub fn with_unk(self, token: &str) -> Result<Self, TextError> {
        let mut tokens = self.id_to_token;
        let id = match tokens.iter().position(|t| t == token) {
            Some(i) => i as u32,
            None => {
                tokens.push(token.to_string());
                (tokens.len() - 1) as u32
            }
        };
        Vocab::from_parts(tokens, self.merges, Some(id))
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.unk_id
    }

    /// Character lookup followed by each merge in training order, each merge
    /// applied left to right over the whole sequence.
    pub fn encode(&self, text: &str) -> Result<TokenSequence, TextError> {
        let mut ids = Vec::with_capacity(text.len());
        for (offset, c) in text.char_indices() {
            match self.char_ids.get(&c).copied().or(self.unk_id) {
                Some(id) => ids.push(id),
                None => return Err(TextError::UnknownChar { ch: c, offset }),
            }
        }
        for &(l, r, m) in &self.merge_ids {
            ids = apply_merge(&ids, l, r, m);
        }
        Ok(TokenSequence::new(ids))
    }

    pub fn decode(&self, seq: &TokenSequence) -> Result<String, TextError> {
        self.decode_ids(&seq.ids)
    }

    pub fn decode_ids(&self, ids: &[u32]) -> Result<String, TextError> {
        let mut out = String::new();
        for &id in ids {
            out.push_str(self.token(id).ok_or(TextError::UnknownId(id))?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TextError> {
        serde_json::from_str(json).map_err(|e| TextError::InvalidVocab(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        fs::write(path, self.to_json()).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let json = fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Vocab::from_json(&json)
    }
}

/// Replaces every non-overlapping `(l, r)` pair, scanning left to right.
pub(crate) fn apply_merge(ids: &[u32], l: u32, r: u32, merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
            out.push(merged);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_vocab_is_sorted_and_deduplicated() {
        let v = Vocab::build_char("abba").unwrap();
        assert_eq!(v.tokens(), &["a", "b"]);
        assert_eq!(Vocab::build_char("ba").unwrap(), Vocab::build_char("ab").unwrap());
    }

    #[test]
    fn char_vocab_handles_multibyte() {
        let v = Vocab::build_char("aβa").unwrap();
        assert_eq!(v.tokens(), &["a", "β"]);
        let enc = v.encode("βaβ").unwrap();
        assert_eq!(enc.ids, vec![1, 0, 1]);
        assert_eq!(v.decode(&enc).unwrap(), "βaβ");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(Vocab::build_char(""), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn direct_lookup_encoding() {
        let v = Vocab::build_char("ab").unwrap();
        assert_eq!(v.encode("ab").unwrap().ids, vec![0, 1]);
    }

    #[test]
    fn unknown_character_without_unk_is_an_error() {
        let v = Vocab::build_char("ab").unwrap();
        assert!(matches!(v.encode("abc"), Err(TextError::UnknownChar { ch: 'c', offset: 2 })));
        let v = v.with_unk("<unk>").unwrap();
        assert_eq!(v.encode("abc").unwrap().ids, vec![0, 1, 2]);
        assert_eq!(v.decode_ids(&[2]).unwrap(), "<unk>");
    }

    #[test]
    fn json_has_the_documented_fields() {
        let v = Vocab::from_parts(
            vec!["a".into(), "b".into(), "ab".into()],
            vec![("a".into(), "b".into())],
            None,
        )
        .unwrap();
        let value: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(value["tokens"], serde_json::json!(["a", "b", "ab"]));
        assert_eq!(value["merges"], serde_json::json!([["a", "b"]]));
        assert!(value.get("unk_id").is_none());
        assert_eq!(Vocab::from_json(&v.to_json()).unwrap(), v);
    }

    #[test]
    fn merges_must_reference_known_tokens() {
        let err = Vocab::from_parts(vec!["a".into()], vec![("a".into(), "a".into())], None);
        assert!(err.is_err());
    }

    #[test]
    fn merge_is_left_to_right_non_overlapping() {
        assert_eq!(apply_merge(&[0, 0, 0, 1], 0, 0, 9), vec![9, 0, 1]);
        assert_eq!(apply_merge(&[0, 0, 0, 0], 0, 0, 9), vec![9, 9]);
    }
}
