//! RIS reader: `TAG  - value` lines, records terminated by `ER  -`.

use super::{latex::strip_latex, parse_year, Diagnostic, EntryKind, Parsed, Record};

fn split_tag(line: &str) -> Option<(&str, &str)> {
    let b = line.as_bytes();
    if b.len() < 3 || !b[0].is_ascii_uppercase() || !(b[1].is_ascii_uppercase() || b[1].is_ascii_digit()) {
        return None;
    }
    let rest = line[2..].trim_start_matches([' ', '\t']);
    let value = rest.strip_prefix('-')?;
    if !(value.is_empty() || value.starts_with([' ', '\t'])) {
        return None;
    }
    Some((&line[..2], value.trim()))
}

#[derive(Default)]
struct Pending {
    offset: usize,
    id: Option<String>,
    ty: Option<String>,
    type_of_work: Option<String>,
    title: Option<String>,
    abstract_parts: Vec<String>,
    year: Option<i32>,
    journal: Option<String>,
    journal_alt: Option<String>,
    last_tag: Option<String>,
}

impl Pending {
    fn push(&mut self, tag: &str, value: &str) {
        self.last_tag = Some(tag.to_string());
        match tag {
            "TY" => self.ty = Some(value.to_string()),
            "ID" => {
                if !value.is_empty() {
                    self.id.get_or_insert_with(|| value.to_string());
                }
            }
            "TI" | "T1" => {
                if self.title.is_none() {
                    self.title = Some(value.to_string());
                }
            }
            "AB" | "N2" => self.abstract_parts.push(value.to_string()),
            "PY" | "Y1" | "DA" => {
                if self.year.is_none() {
                    self.year = parse_year(value);
                }
            }
            "JO" | "JF" => {
                if self.journal.is_none() && !value.is_empty() {
                    self.journal = Some(value.to_string());
                }
            }
            "JA" | "T2" => {
                if self.journal_alt.is_none() && !value.is_empty() {
                    self.journal_alt = Some(value.to_string());
                }
            }
            "M3" => self.type_of_work = Some(value.to_string()),
            _ => {}
        }
    }

    fn continue_line(&mut self, text: &str) {
        let text = text.trim();
        if text.is_empty() {
            return;
        }
        match self.last_tag.as_deref() {
            Some("AB" | "N2") => {
                if let Some(last) = self.abstract_parts.last_mut() {
                    last.push(' ');
                    last.push_str(text);
                }
            }
            Some("TI" | "T1") => {
                if let Some(t) = self.title.as_mut() {
                    t.push(' ');
                    t.push_str(text);
                }
            }
            _ => {}
        }
    }

    fn is_empty(&self) -> bool {
        self.ty.is_none() && self.title.is_none() && self.abstract_parts.is_empty()
    }

    fn finish(self, index: usize) -> Record {
        let mut kind = EntryKind::from_hint(self.ty.as_deref().unwrap_or(""));
        if let Some(m3) = self.type_of_work.as_deref() {
            let hinted = EntryKind::from_hint(m3);
            if hinted != EntryKind::Other {
                kind = hinted;
            }
        }
        let abs = strip_latex(&self.abstract_parts.join(" "));
        Record {
            entry_id: self.id.unwrap_or_else(|| format!("ris-{index}")),
            title: strip_latex(self.title.as_deref().unwrap_or("")),
            abstract_text: (!abs.is_empty()).then_some(abs),
            year: self.year,
            journal: strip_latex(self.journal.or(self.journal_alt).as_deref().unwrap_or("")),
            kind,
        }
    }
}

/// Parse an RIS byte stream. A record lacking its `ER` terminator is salvaged
/// and reported.
pub fn parse_ris(bytes: &[u8]) -> crate::Result<Parsed> {
    let src = std::str::from_utf8(bytes)
        .map_err(|e| crate::Error::Parse(format!("RIS input is not UTF-8: {e}")))?;
    let src_no_bom = src.strip_prefix('\u{feff}').unwrap_or(src);
    let bom = src.len() - src_no_bom.len();
    let mut parsed = Parsed::default();
    let mut current: Option<Pending> = None;
    let mut offset = bom;
    for raw_line in src_no_bom.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        match split_tag(line) {
            Some(("ER", _)) => match current.take() {
                Some(p) => {
                    let idx = parsed.records.len();
                    parsed.records.push(p.finish(idx));
                }
                None => parsed
                    .diagnostics
                    .push(Diagnostic::at(src, line_offset, "ER without a preceding record")),
            },
            Some(("TY", value)) => {
                if let Some(prev) = current.take() {
                    parsed.diagnostics.push(Diagnostic::at(
                        src,
                        prev.offset,
                        "record without ER terminator; fields salvaged",
                    ));
                    let idx = parsed.records.len();
                    parsed.records.push(prev.finish(idx));
                }
                let mut p = Pending {
                    offset: line_offset,
                    ..Pending::default()
                };
                p.push("TY", value);
                current = Some(p);
            }
            Some((tag, value)) => {
                let p = current.get_or_insert_with(|| Pending {
                    offset: line_offset,
                    ..Pending::default()
                });
                p.push(tag, value);
            }
            None => {
                if let Some(p) = current.as_mut() {
                    p.continue_line(line);
                }
            }
        }
    }
    if let Some(p) = current.take() {
        if !p.is_empty() {
            parsed.diagnostics.push(Diagnostic::at(
                src,
                p.offset,
                "record without ER terminator; fields salvaged",
            ));
            let idx = parsed.records.len();
            parsed.records.push(p.finish(idx));
        }
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_record() {
        let src = "TY  - JOUR\nTI  - A Title\nAB  - An abstract\nPY  - 1999\nJO  - Statistical Science\nER  - \n";
        let p = parse_ris(src.as_bytes()).unwrap();
        assert!(p.diagnostics.is_empty());
        let r = &p.records[0];
        assert_eq!(r.title, "A Title");
        assert_eq!(r.abstract_text.as_deref(), Some("An abstract"));
        assert_eq!(r.year, Some(1999));
        assert_eq!(r.journal, "Statistical Science");
        assert_eq!(r.kind, EntryKind::Article);
        assert_eq!(r.entry_id, "ris-0");
    }

    #[test]
    fn back_to_back_records() {
        let src = "TY  - JOUR\nTI  - One\nER  - \nTY  - JOUR\nTI  - Two\nER  -\n";
        let p = parse_ris(src.as_bytes()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[1].title, "Two");
    }

    #[test]
    fn year_prefix() {
        let p = parse_ris(b"TY  - JOUR\nTI  - X\nPY  - 1987/03//\nER  - \n").unwrap();
        assert_eq!(p.records[0].year, Some(1987));
    }

    #[test]
    fn missing_terminator_salvages() {
        let src = "TY  - JOUR\nTI  - Lost\nAB  - text\nTY  - JOUR\nTI  - Next\nER  - \nTY  - JOUR\nTI  - Tail\n";
        let p = parse_ris(src.as_bytes()).unwrap();
        let titles: Vec<_> = p.records.iter().map(|r| r.title.as_str()).collect();
        assert_eq!(titles, ["Lost", "Next", "Tail"]);
        assert_eq!(p.diagnostics.len(), 2);
        assert_eq!(p.diagnostics[0].offset, 0);
    }

    #[test]
    fn wrapped_abstract_lines_join() {
        let src = "TY  - JOUR\nAB  - first part\n  second part\nER  - \n";
        let p = parse_ris(src.as_bytes()).unwrap();
        assert_eq!(p.records[0].abstract_text.as_deref(), Some("first part second part"));
    }
}
