use std::collections::HashMap;

use super::vocab::{apply_merge, Vocab};
use super::TextError;

/// Greedy byte-pair-encoding trainer over the raw character stream.
///
/// Each round counts adjacent token pairs and merges the most frequent one;
/// ties go to the lexicographically smallest merged string, then to the
/// smallest left token. Training stops early once the sequence has no
/// adjacent pairs left. `num_merges == 0` yields the character vocabulary.
pub fn bpe_train(corpus: &str, num_merges: usize) -> Result<Vocab, TextError> {
    let base = Vocab::build_char(corpus)?;
    let mut tokens: Vec<String> = base.tokens().to_vec();
    let mut index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    let mut merges: Vec<(String, String)> = Vec::with_capacity(num_merges);
    let mut ids = base.encode(corpus)?.ids;

    for _ in 0..num_merges {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for w in ids.windows(2) {
            *counts.entry((w[0], w[1])).or_insert(0) += 1;
        }
        let best = counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                let ma = format!("{}{}", tokens[pa.0 as usize], tokens[pa.1 as usize]);
                let mb = format!("{}{}", tokens[pb.0 as usize], tokens[pb.1 as usize]);
                // Reversed: the smaller string must compare as "greater".
                mb.cmp(&ma)
                    .then_with(|| tokens[pb.0 as usize].cmp(&tokens[pa.0 as usize]))
            })
        });
        let Some(((l, r), _)) = best else { break };

        let left = tokens[l as usize].clone();
        let right = tokens[r as usize].clone();
        let merged = format!("{left}{right}");
        let merged_id = match index.get(&merged) {
            Some(&id) => id,
            None => {
                tokens.push(merged.clone());
                let id = (tokens.len() - 1) as u32;
                index.insert(merged, id);
                id
            }
        };
        ids = apply_merge(&ids, l, r, merged_id);
        merges.push((left, right));
    }

    Vocab::from_parts(tokens, merges, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_frequent_pair_wins() {
        let v = bpe_train("aaab", 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(v.id("aa"), Some(2));
        let enc = v.encode("aaab").unwrap();
        let parts: Vec<&str> = enc.ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(parts, ["aa", "a", "b"]);
    }

    #[test]
    fn abab_merges_ab() {
        let v = bpe_train("abab", 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn zero_merges_is_char_vocab() {
        let corpus = "the quick brown fox";
        assert_eq!(bpe_train(corpus, 0).unwrap(), Vocab::build_char(corpus).unwrap());
    }

    #[test]
    fn ties_go_to_smallest_merged_string() {
        // "ba", "ab", "bc" … every pair occurs once; "ab" is smallest.
        let v = bpe_train("abc", 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "b".to_string())]);
        let v = bpe_train("cba", 1).unwrap();
        assert_eq!(v.merges(), &[("b".to_string(), "a".to_string())]);
    }

    #[test]
    fn stops_when_no_pairs_remain() {
        let v = bpe_train("ab", 5).unwrap();
        assert_eq!(v.merges().len(), 1);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn merges_apply_in_training_order() {
        let corpus = "abcabcabc";
        let v = bpe_train(corpus, 3).unwrap();
        let enc = v.encode(corpus).unwrap();
        assert_eq!(v.decode(&enc).unwrap(), corpus);
        assert!(enc.len() < corpus.len());
    }
}
