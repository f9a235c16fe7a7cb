//! Porter (1980) suffix-stripping stemmer, original rule set.
//!
//! Words of one or two letters and words containing anything other than ASCII
//! lowercase letters are returned unchanged.

struct Word {
    b: Vec<u8>,
}

impl Word {
    fn cons(&self, i: usize) -> bool {
        match self.b[i] {
            b'a' | b'e' | b'i' | b'o' | b'u' => false,
            b'y' => i == 0 || !self.cons(i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in `b[..len]`.
    fn measure(&self, len: usize) -> usize {
        let mut m = 0;
        let mut i = 0;
        while i < len && self.cons(i) {
            i += 1;
        }
        loop {
            while i < len && !self.cons(i) {
                i += 1;
            }
            if i >= len {
                return m;
            }
            while i < len && self.cons(i) {
                i += 1;
            }
            m += 1;
        }
    }

    fn has_vowel(&self, len: usize) -> bool {
        (0..len).any(|i| !self.cons(i))
    }

    fn ends_double_cons(&self, len: usize) -> bool {
        len >= 2 && self.b[len - 1] == self.b[len - 2] && self.cons(len - 1)
    }

    /// `*o`: stem ends consonant-vowel-consonant, last not w, x or y.
    fn ends_cvc(&self, len: usize) -> bool {
        len >= 3
            && self.cons(len - 3)
            && !self.cons(len - 2)
            && self.cons(len - 1)
            && !matches!(self.b[len - 1], b'w' | b'x' | b'y')
    }

    fn ends(&self, suffix: &str) -> bool {
        self.b.ends_with(suffix.as_bytes())
    }

    fn stem_len(&self, suffix: &str) -> usize {
        self.b.len() - suffix.len()
    }

    fn replace(&mut self, suffix: &str, with: &str) {
        let n = self.stem_len(suffix);
        self.b.truncate(n);
        self.b.extend_from_slice(with.as_bytes());
    }

    /// The first rule whose suffix matches decides; its condition gates the rewrite.
    fn apply_rules(&mut self, rules: &[(&str, &str)], cond: impl Fn(&Word, usize) -> bool) -> bool {
        for &(suffix, with) in rules {
            if self.ends(suffix) {
                let stem = self.stem_len(suffix);
                if cond(self, stem) {
                    self.replace(suffix, with);
                    return true;
                }
                return false;
            }
        }
        false
    }

    fn step1a(&mut self) {
        for (suffix, with) in [("sses", "ss"), ("ies", "i"), ("ss", "ss"), ("s", "")] {
            if self.ends(suffix) {
                self.replace(suffix, with);
                return;
            }
        }
    }

    fn step1b(&mut self) {
        if self.ends("eed") {
            if self.measure(self.stem_len("eed")) > 0 {
                self.replace("eed", "ee");
            }
            return;
        }
        let mut stripped = false;
        for suffix in ["ed", "ing"] {
            if self.ends(suffix) && self.has_vowel(self.stem_len(suffix)) {
                self.replace(suffix, "");
                stripped = true;
                break;
            }
        }
        if !stripped {
            return;
        }
        for (suffix, with) in [("at", "ate"), ("bl", "ble"), ("iz", "ize")] {
            if self.ends(suffix) {
                self.replace(suffix, with);
                return;
            }
        }
        let n = self.b.len();
        if self.ends_double_cons(n) {
            if !matches!(self.b[n - 1], b'l' | b's' | b'z') {
                self.b.pop();
            }
            return;
        }
        if self.measure(n) == 1 && self.ends_cvc(n) {
            self.b.push(b'e');
        }
    }

    fn step1c(&mut self) {
        let n = self.b.len();
        if self.ends("y") && self.has_vowel(n - 1) {
            self.b[n - 1] = b'i';
        }
    }

    fn step2(&mut self) {
        const RULES: &[(&str, &str)] = &[
            ("ational", "ate"),
            ("tional", "tion"),
            ("enci", "ence"),
            ("anci", "ance"),
            ("izer", "ize"),
            ("abli", "able"),
            ("alli", "al"),
            ("entli", "ent"),
            ("eli", "e"),
            ("ousli", "ous"),
            ("ization", "ize"),
            ("ation", "ate"),
            ("ator", "ate"),
            ("alism", "al"),
            ("iveness", "ive"),
            ("fulness", "ful"),
            ("ousness", "ous"),
            ("aliti", "al"),
            ("iviti", "ive"),
            ("biliti", "ble"),
        ];
        self.apply_rules(RULES, |w, stem| w.measure(stem) > 0);
    }

    fn step3(&mut self) {
        const RULES: &[(&str, &str)] = &[
            ("icate", "ic"),
            ("ative", ""),
            ("alize", "al"),
            ("iciti", "ic"),
            ("ical", "ic"),
            ("ful", ""),
            ("ness", ""),
        ];
        self.apply_rules(RULES, |w, stem| w.measure(stem) > 0);
    }

    fn step4(&mut self) {
        const SUFFIXES: &[&str] = &[
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ion",
            "ou", "ism", "ate", "iti", "ous", "ive", "ize",
        ];
        for &suffix in SUFFIXES {
            if self.ends(suffix) {
                let stem = self.stem_len(suffix);
                let ok = self.measure(stem) > 1
                    && (suffix != "ion" || (stem > 0 && matches!(self.b[stem - 1], b's' | b't')));
                if ok {
                    self.b.truncate(stem);
                }
                return;
            }
        }
    }

    fn step5(&mut self) {
        if self.ends("e") {
            let stem = self.b.len() - 1;
            let m = self.measure(stem);
            if m > 1 || (m == 1 && !self.ends_cvc(stem)) {
                self.b.truncate(stem);
            }
        }
        let n = self.b.len();
        if self.ends("ll") && self.measure(n) > 1 {
            self.b.pop();
        }
    }
}

/// Stem a lowercase token.
pub fn stem(token: &str) -> String {
    if token.len() <= 2 || !token.bytes().all(|b| b.is_ascii_lowercase()) {
        return token.to_string();
    }
    let mut w = Word {
        b: token.as_bytes().to_vec(),
    };
    w.step1a();
    w.step1b();
    w.step1c();
    w.step2();
    w.step3();
    w.step4();
    w.step5();
    // only ASCII bytes were ever written
    String::from_utf8(w.b).expect("ascii")
}

#[cfg(test)]
mod tests {
    use super::stem;

    #[test]
    fn classic_vocabulary() {
        let cases = [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("tanned", "tan"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("fizzed", "fizz"),
            ("failing", "fail"),
            ("filing", "file"),
            ("happy", "happi"),
            ("sky", "sky"),
            ("relational", "relat"),
            ("generalization", "gener"),
            ("clustering", "cluster"),
            ("regression", "regress"),
            ("document", "document"),
            ("adjustment", "adjust"),
            ("controlling", "control"),
        ];
        for (w, s) in cases {
            assert_eq!(stem(w), s, "stem({w})");
        }
    }

    #[test]
    fn short_and_non_ascii_unchanged() {
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("as"), "as");
        assert_eq!(stem("café"), "café");
    }
}
