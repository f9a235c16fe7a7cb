//! Corpus interchange (JSON lines) and the input-path dispatcher.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{
    filter_records, parse_bibtex, parse_ris, to_documents, Corpus, Diagnostic, Document,
    EpochScheme, ExclusionRules, Parsed,
};
use crate::{Error, Result};

/// File extensions recognised when ingesting a directory.
pub const CORPUS_EXTENSIONS: &[&str] = &["bib", "ris", "txt"];

/// Name of the sidecar file mapping `.txt` documents to epochs.
const MANIFEST: &str = "manifest.tsv";

pub fn write_corpus_jsonl(documents: &[Document], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in documents {
        let line = serde_json::to_string(d).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a JSON-lines corpus; doc ids must be contiguous from 0 in file order.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<Document>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if doc.doc_id != docs.len() {
            return Err(Error::Parse(format!(
                "{}:{}: doc_id {} breaks the contiguous numbering (expected {})",
                path.display(),
                i + 1,
                doc.doc_id,
                docs.len()
            )));
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Read a directory of `.txt` documents (first line title, remainder abstract).
/// Epochs and journals come from `manifest.tsv` (`file<TAB>epoch[<TAB>journal]`).
pub fn read_text_dir(dir: &Path) -> Result<Vec<Document>> {
    let files = list_files(dir, &["txt"])?;
    let manifest = read_manifest(dir)?;
    let mut docs = Vec::with_capacity(files.len());
    for path in files {
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (epoch, journal) = manifest.get(&name).cloned().unwrap_or((None, None));
        docs.push(Document {
            doc_id: docs.len(),
            text,
            epoch,
            journal,
        });
    }
    Ok(docs)
}

type ManifestRow = (Option<String>, Option<String>);

fn read_manifest(dir: &Path) -> Result<HashMap<String, ManifestRow>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut map = HashMap::new();
    for line in raw.lines() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let file = cols.next().unwrap_or_default().trim().to_string();
        let nonempty = |s: Option<&str>| s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        let epoch = nonempty(cols.next());
        let journal = nonempty(cols.next());
        map.insert(file, (epoch, journal));
    }
    Ok(map)
}

fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_file() && exts.contains(&ext.as_str()) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_file(path: &Path) -> Result<Parsed> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "bib" => parse_bibtex(&bytes),
        "ris" => parse_ris(&bytes),
        other => Err(Error::InvalidArgument(format!(
            "{}: unsupported bibliography extension {other:?}",
            path.display()
        ))),
    }
}

/// Result of ingesting one or more input paths.
#[derive(Debug, Default)]
pub struct Ingested {
    pub corpus: Corpus,
    /// Parser diagnostics with the file they came from.
    pub diagnostics: Vec<(PathBuf, Diagnostic)>,
    pub records_parsed: usize,
    pub records_kept: usize,
}

/// Ingest `.bib`/`.ris` files and `.txt` directories into one corpus. Bibliography
/// records are filtered and epoch-tagged; text documents take epochs from the manifest.
pub fn ingest_path(inputs: &[PathBuf], rules: &ExclusionRules, epoching: &EpochScheme) -> Result<Ingested> {
    let mut bib_files = Vec::new();
    let mut text_dirs = Vec::new();
    for input in inputs {
        if input.is_dir() {
            bib_files.extend(list_files(input, &["bib", "ris"])?);
            if !list_files(input, &["txt"])?.is_empty() {
                text_dirs.push(input.clone());
            }
        } else if input.is_file() {
            bib_files.push(input.clone());
        } else {
            return Err(Error::io(
                input,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
            ));
        }
    }
    if bib_files.is_empty() && text_dirs.is_empty() {
        return Err(Error::InvalidArgument("no .bib, .ris or .txt inputs found".into()));
    }

    let parsed: Vec<Result<Parsed>> = bib_files.par_iter().map(|p| parse_file(p)).collect();
    let mut out = Ingested::default();
    let mut records = Vec::new();
    for (path, p) in bib_files.iter().zip(parsed) {
        let p = p?;
        out.diagnostics
            .extend(p.diagnostics.into_iter().map(|d| (path.clone(), d)));
        records.extend(p.records);
    }
    out.records_parsed = records.len();
    let kept = filter_records(records, rules);
    out.records_kept = kept.len();
    let mut corpus = to_documents(&kept, epoching);
    for dir in &text_dirs {
        for mut d in read_text_dir(dir)? {
            d.doc_id = corpus.documents.len();
            corpus.documents.push(d);
        }
    }
    out.corpus = corpus;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![
            Document {
                doc_id: 0,
                text: "alpha beta".into(),
                epoch: Some("1970-1979".into()),
                journal: None,
            },
            Document {
                doc_id: 1,
                text: "gamma \"quoted\"".into(),
                epoch: None,
                journal: Some("JASA".into()),
            },
        ];
        let p = dir.path().join("c.jsonl");
        write_corpus_jsonl(&docs, &p).unwrap();
        let raw = fs::read_to_string(&p).unwrap();
        assert!(raw.starts_with(r#"{"doc_id":0,"text":"alpha beta","epoch":"1970-1979","journal":null}"#));
        assert_eq!(read_corpus_jsonl(&p).unwrap(), docs);
    }

    #[test]
    fn non_contiguous_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        fs::write(&p, "{\"doc_id\":1,\"text\":\"x\",\"epoch\":null,\"journal\":null}\n").unwrap();
        assert!(read_corpus_jsonl(&p).is_err());
    }

    #[test]
    fn text_dir_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "Second\nbody two").unwrap();
        fs::write(dir.path().join("a.txt"), "First title\nbody  one").unwrap();
        fs::write(dir.path().join(MANIFEST), "a.txt\t1980-1989\tJASA\nb.txt\t1990-1999\n").unwrap();
        let docs = read_text_dir(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text, "First title body one");
        assert_eq!(docs[0].epoch.as_deref(), Some("1980-1989"));
        assert_eq!(docs[0].journal.as_deref(), Some("JASA"));
        assert_eq!(docs[1].journal, None);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest_path(
            &[dir.path().to_path_buf()],
            &ExclusionRules::default(),
            &EpochScheme::default(),
        );
        assert!(err.is_err());
    }
}
