//! Synthetic words: consonant-vowel syllables closed by a consonant and `a`.
//! Words ending in `a` carry no Porter suffix, so the text pipeline keeps them
//! as they are; ids whose word would be altered or dropped are skipped.

use std::sync::OnceLock;

use crate::textprep::{analyze, StopwordPolicy};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const CAPACITY: usize = 20_000;

fn raw_word(mut i: usize) -> String {
    let nc = CONSONANTS.len();
    let nv = VOWELS.len();
    let mut s = String::new();
    // two free syllables, then a closing consonant + 'a'
    for _ in 0..2 {
        s.push(CONSONANTS[i % nc] as char);
        i /= nc;
        s.push(VOWELS[i % nv] as char);
        i /= nv;
    }
    s.push(CONSONANTS[i % nc] as char);
    i /= nc;
    s.push('a');
    debug_assert_eq!(i, 0, "word index beyond the three-syllable space");
    s
}

fn table() -> &'static [String] {
    static TABLE: OnceLock<Vec<String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let policy = StopwordPolicy::default();
        let mut out = Vec::with_capacity(CAPACITY);
        let mut i = 0;
        while out.len() < CAPACITY {
            let w = raw_word(i);
            i += 1;
            if analyze(&w, &policy) == [w.as_str()] {
                out.push(w);
            }
        }
        out
    })
}

/// The `id`-th synthetic word; distinct ids give distinct words.
pub fn synthetic_word(id: usize) -> &'static str {
    let t = table();
    assert!(id < t.len(), "synthetic vocabulary exhausted at id {id}");
    &t[id]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_distinct_and_stable() {
        let policy = StopwordPolicy::default();
        let mut seen = std::collections::HashSet::new();
        for id in 0..3000 {
            let w = synthetic_word(id);
            assert!(seen.insert(w), "duplicate {w}");
            assert!(w.ends_with('a'));
            assert_eq!(analyze(w, &policy), [w]);
        }
    }
}
