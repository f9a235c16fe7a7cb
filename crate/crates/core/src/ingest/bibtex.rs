//! Tolerant BibTeX reader.
//!
//! Supports `@type{key, field = value, ...}` entries with braced, quoted or
//! bare values, nested braces, `#` concatenation and `%` comment lines.
//! `@string` macros and `@preamble` are not expanded. Each entry is parsed in
//! isolation: an entry starts at an `@` that is the first non-blank character
//! of a line, so a broken entry cannot swallow its successors.

use std::collections::HashMap;

use super::{latex::strip_latex, parse_year, Diagnostic, EntryKind, Parsed, Record};

struct Cursor<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

type Fail = (usize, String);

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        (self.pos < self.end).then(|| self.bytes[self.pos])
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(b) = self.peek() {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b':' | b'.' | b'+' | b'/') {
                self.pos += 1;
            } else {
                break;
            }
        }
        &self.src[start..self.pos]
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, Fail> {
        Err((self.pos, msg.into()))
    }

    /// Content of a `{...}` group; the cursor sits on the opening brace.
    fn braced(&mut self) -> Result<&'a str, Fail> {
        let open = self.pos;
        self.pos += 1;
        let mut depth = 1usize;
        while let Some(b) = self.peek() {
            match b {
                b'\\' => self.pos += 1,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let s = &self.src[open + 1..self.pos];
                        self.pos += 1;
                        return Ok(s);
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err((open, "unbalanced braces".into()))
    }

    /// Content of a `"..."` value; braces inside protect quotes.
    fn quoted(&mut self) -> Result<&'a str, Fail> {
        let open = self.pos;
        self.pos += 1;
        let mut depth = 0usize;
        while let Some(b) = self.peek() {
            match b {
                b'\\' => self.pos += 1,
                b'{' => depth += 1,
                b'}' => {
                    if depth == 0 {
                        return Err((self.pos, "unbalanced braces in quoted value".into()));
                    }
                    depth -= 1;
                }
                b'"' if depth == 0 => {
                    let s = &self.src[open + 1..self.pos];
                    self.pos += 1;
                    return Ok(s);
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err((open, "unterminated quoted value".into()))
    }

    fn value(&mut self) -> Result<String, Fail> {
        let mut out = String::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'{') => out.push_str(self.braced()?),
                Some(b'"') => out.push_str(self.quoted()?),
                Some(b) if b.is_ascii_alphanumeric() => {
                    // bare number or an unexpanded macro name
                    out.push_str(self.ident());
                }
                _ => return self.fail("expected a field value"),
            }
            self.skip_ws();
            if self.peek() == Some(b'#') {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }
}

/// Byte offsets of entry starts: `@` as the first non-blank character of a line.
fn entry_starts(src: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut line_start = true;
    for (i, b) in src.bytes().enumerate() {
        match b {
            b'\n' => line_start = true,
            b'@' if line_start => {
                starts.push(i);
                line_start = false;
            }
            b' ' | b'\t' | b'\r' => {}
            _ => line_start = false,
        }
    }
    starts
}

enum Entry {
    Record(Record),
    Skipped,
}

fn parse_entry(src: &str, start: usize, end: usize) -> Result<Entry, Fail> {
    let mut c = Cursor {
        src,
        bytes: src.as_bytes(),
        pos: start + 1,
        end,
    };
    let entry_type = c.ident().to_ascii_lowercase();
    if entry_type.is_empty() {
        return c.fail("missing entry type after '@'");
    }
    c.skip_ws();
    let close = match c.peek() {
        Some(b'{') => b'}',
        Some(b'(') => b')',
        _ => return c.fail("expected '{' or '(' after entry type"),
    };
    match entry_type.as_str() {
        "comment" => return Ok(Entry::Skipped),
        "string" | "preamble" => {
            return Err((start, format!("@{entry_type} is not supported; entry ignored")))
        }
        _ => {}
    }
    c.pos += 1;
    c.skip_ws();
    let key = c.ident().to_string();
    if key.is_empty() {
        return c.fail("missing citation key");
    }
    let mut fields: HashMap<String, String> = HashMap::new();
    loop {
        c.skip_ws();
        match c.peek() {
            Some(b',') => {
                c.pos += 1;
                continue;
            }
            Some(b) if b == close => break,
            None => return Err((start, "unbalanced braces: entry is not closed".into())),
            _ => {}
        }
        let name = c.ident().to_ascii_lowercase();
        if name.is_empty() {
            return c.fail("expected a field name");
        }
        c.skip_ws();
        if c.peek() != Some(b'=') {
            return c.fail(format!("expected '=' after field {name}"));
        }
        c.pos += 1;
        let value = c.value()?;
        fields.insert(name, value);
        c.skip_ws();
        match c.peek() {
            Some(b',') => c.pos += 1,
            Some(b) if b == close => break,
            None => return Err((start, "unbalanced braces: entry is not closed".into())),
            _ => return c.fail("expected ',' or end of entry"),
        }
    }
    // anything but whitespace between the closing delimiter and the next entry is a sign of
    // an extra closing brace or leaked text
    let trailing = src[c.pos + 1..end].trim();
    if trailing.contains('}') {
        return Err((start, "unbalanced braces: stray '}' after entry".into()));
    }

    let clean = |k: &str| fields.get(k).map(|v| strip_latex(v));
    let kind_hint = fields
        .get("type")
        .map(|t| t.as_str())
        .unwrap_or(entry_type.as_str());
    let mut kind = EntryKind::from_hint(kind_hint);
    if kind == EntryKind::Other && fields.contains_key("type") {
        kind = EntryKind::from_hint(&entry_type);
    }
    let title = clean("title").unwrap_or_default();
    Ok(Entry::Record(Record {
        entry_id: key,
        title,
        abstract_text: clean("abstract").filter(|a| !a.is_empty()),
        year: fields.get("year").and_then(|y| parse_year(y)),
        journal: clean("journal")
            .or_else(|| clean("journaltitle"))
            .unwrap_or_default(),
        kind,
    }))
}

/// Parse a BibTeX byte stream. Malformed entries are skipped and reported by byte
/// offset; the rest of the file is still read.
pub fn parse_bibtex(bytes: &[u8]) -> crate::Result<Parsed> {
    let src = std::str::from_utf8(bytes)
        .map_err(|e| crate::Error::Parse(format!("BibTeX input is not UTF-8: {e}")))?;
    let starts = entry_starts(src);
    let mut parsed = Parsed::default();
    for (n, &start) in starts.iter().enumerate() {
        let end = starts.get(n + 1).copied().unwrap_or(src.len());
        match parse_entry(src, start, end) {
            Ok(Entry::Record(r)) => parsed.records.push(r),
            Ok(Entry::Skipped) => {}
            Err((_, msg)) => parsed.diagnostics.push(Diagnostic::at(src, start, msg)),
        }
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_article() {
        let src = br#"@article{smith1990,
  title = {On {Bayesian} Tests},
  abstract = "We study tests.",
  journal = {Biometrika},
  year = 1990
}"#;
        let p = parse_bibtex(src).unwrap();
        assert!(p.diagnostics.is_empty());
        assert_eq!(p.records.len(), 1);
        let r = &p.records[0];
        assert_eq!(r.entry_id, "smith1990");
        assert_eq!(r.title, "On Bayesian Tests");
        assert_eq!(r.abstract_text.as_deref(), Some("We study tests."));
        assert_eq!(r.year, Some(1990));
        assert_eq!(r.journal, "Biometrika");
        assert_eq!(r.kind, EntryKind::Article);
    }

    #[test]
    fn missing_abstract() {
        let p = parse_bibtex(b"@article{a, title={T}, year={1999}}").unwrap();
        assert_eq!(p.records[0].abstract_text, None);
    }

    #[test]
    fn unbalanced_entry_is_skipped_with_offset() {
        let src = "@article{a, title={One}, year=1990}\n\
                   @article{b, title={Two, year=1991}\n\
                   @article{c, title={Three}, year=1992}\n";
        let p = parse_bibtex(src.as_bytes()).unwrap();
        let ids: Vec<_> = p.records.iter().map(|r| r.entry_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].offset, src.find("@article{b").unwrap());
        assert_eq!(p.diagnostics[0].line, 2);
    }

    #[test]
    fn concatenation_comments_and_parens() {
        let src = "% exported\n@ARTICLE(k1,\n  % note\n  title = \"Part \" # {One},\n  year = {2001},\n)\n@comment{ignored}";
        let p = parse_bibtex(src.as_bytes()).unwrap();
        assert!(p.diagnostics.is_empty(), "{:?}", p.diagnostics);
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].title, "Part One");
    }

    #[test]
    fn string_macros_are_reported() {
        let p = parse_bibtex(b"@string{jasa = {JASA}}\n@article{x, title={T}}").unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn type_field_overrides_kind() {
        let p = parse_bibtex(b"@article{x, title={T}, type={Book Review}}").unwrap();
        assert_eq!(p.records[0].kind, EntryKind::Review);
    }

    #[test]
    fn rejects_invalid_utf8() {
        assert!(parse_bibtex(&[0xff, 0xfe]).is_err());
    }
}
