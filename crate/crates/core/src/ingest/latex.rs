//! Minimal LaTeX cleanup for bibliography text: math segments are removed,
//! accent macros collapse to their base letter, other macros lose their name
//! but keep their argument text.

const SYMBOL_ACCENTS: &[char] = &['\'', '`', '^', '"', '~', '=', '.'];
const LETTER_ACCENTS: &[&str] = &["u", "v", "H", "c", "k", "r", "d", "b", "t"];

fn special_letter(name: &str) -> Option<&'static str> {
    Some(match name {
        "ss" => "ss",
        "o" => "o",
        "O" => "O",
        "aa" => "a",
        "AA" => "A",
        "ae" => "ae",
        "AE" => "AE",
        "oe" => "oe",
        "OE" => "OE",
        "l" => "l",
        "L" => "L",
        "i" => "i",
        "j" => "j",
        _ => return None,
    })
}

fn remove_math(input: &str) -> String {
    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' && i + 1 < chars.len() && chars[i + 1] == '$' {
            // escaped dollar: drop, it carries no words
            i += 2;
            continue;
        }
        if c == '$' {
            let double = i + 1 < chars.len() && chars[i + 1] == '$';
            let open = if double { 2 } else { 1 };
            let mut j = i + open;
            let mut closed = None;
            while j < chars.len() {
                if chars[j] == '\\' {
                    j += 2;
                    continue;
                }
                if chars[j] == '$' {
                    if double {
                        if j + 1 < chars.len() && chars[j + 1] == '$' {
                            closed = Some(j + 2);
                            break;
                        }
                    } else {
                        closed = Some(j + 1);
                        break;
                    }
                }
                j += 1;
            }
            match closed {
                Some(end) => {
                    out.push(' ');
                    i = end;
                }
                None => i += open,
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Read one accent target: `{x}`, `{\i}`, or a bare character, skipping spaces.
fn accent_target(chars: &[char], mut i: usize) -> (Option<char>, usize) {
    while i < chars.len() && chars[i] == ' ' {
        i += 1;
    }
    if i >= chars.len() {
        return (None, i);
    }
    if chars[i] == '{' {
        let mut j = i + 1;
        let mut base = None;
        let mut depth = 1;
        while j < chars.len() && depth > 0 {
            match chars[j] {
                '{' => depth += 1,
                '}' => depth -= 1,
                '\\' => {}
                c if base.is_none() && c.is_alphabetic() => base = Some(c),
                _ => {}
            }
            j += 1;
        }
        return (base, j);
    }
    if chars[i] == '\\' {
        // \'\i
        let mut j = i + 1;
        while j < chars.len() && chars[j].is_ascii_alphabetic() {
            j += 1;
        }
        let name: String = chars[i + 1..j].iter().collect();
        let base = special_letter(&name).and_then(|s| s.chars().next());
        return (base, j);
    }
    (Some(chars[i]), i + 1)
}

/// Strip LaTeX markup from bibliography text.
pub fn strip_latex(input: &str) -> String {
    let text = remove_math(input);
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\\' if i + 1 < chars.len() => {
                let next = chars[i + 1];
                if SYMBOL_ACCENTS.contains(&next) {
                    let (base, end) = accent_target(&chars, i + 2);
                    if let Some(b) = base {
                        out.push(b);
                    }
                    i = end;
                } else if next.is_ascii_alphabetic() {
                    let mut j = i + 1;
                    while j < chars.len() && chars[j].is_ascii_alphabetic() {
                        j += 1;
                    }
                    let name: String = chars[i + 1..j].iter().collect();
                    if LETTER_ACCENTS.contains(&name.as_str())
                        && j < chars.len()
                        && (chars[j] == '{' || chars[j] == ' ')
                    {
                        let (base, end) = accent_target(&chars, j);
                        if let Some(b) = base {
                            out.push(b);
                        }
                        i = end;
                    } else if let Some(s) = special_letter(&name) {
                        out.push_str(s);
                        i = j;
                    } else {
                        // unknown macro: drop the name, keep its argument text
                        out.push(' ');
                        i = j;
                    }
                } else if next == '\\' {
                    out.push(' ');
                    i += 2;
                } else {
                    // \& \% \_ \# and friends
                    out.push(next);
                    i += 2;
                }
            }
            '{' | '}' => i += 1,
            '~' => {
                out.push(' ');
                i += 1;
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::strip_latex;

    #[test]
    fn accents_collapse_to_base_letter() {
        assert_eq!(strip_latex(r#"Erd\H{o}s and G\"{o}del"#), "Erdos and Godel");
        assert_eq!(strip_latex(r"{\'e}t{\'e}"), "ete");
        assert_eq!(strip_latex(r"Cram\'er"), "Cramer");
        assert_eq!(strip_latex(r#"na\"{\i}ve"#), "naive");
        assert_eq!(strip_latex(r"\v{S}id\'ak"), "Sidak");
        assert_eq!(strip_latex(r"Gau\ss"), "Gauss");
    }

    #[test]
    fn math_is_removed() {
        assert_eq!(strip_latex("rate $\\sqrt{n}$ consistency"), "rate consistency");
        assert_eq!(strip_latex("a $$x^2$$ b"), "a b");
        assert_eq!(strip_latex("costs \\$5"), "costs 5");
    }

    #[test]
    fn macros_keep_arguments() {
        assert_eq!(strip_latex(r"\emph{Bayesian} {Inference}"), "Bayesian Inference");
        assert_eq!(strip_latex(r"R \& D"), "R & D");
    }

    #[test]
    fn unmatched_dollar_is_dropped() {
        assert_eq!(strip_latex("price $ tag"), "price tag");
    }
}
