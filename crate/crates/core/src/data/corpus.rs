use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::vocab::Vocab;
use super::ParallelPair;
use crate::error::{Error, Result};

/// A tokenised corpus with its vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<ParallelPair>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
}

/// Paths of an on-disk corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFiles {
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub align: Option<PathBuf>,
}

impl CorpusFiles {
    /// `<dir>/<name>.src`, `.tgt` and `.align`.
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        Self {
            src: dir.join(format!("{name}.src")),
            tgt: dir.join(format!("{name}.tgt")),
            align: Some(dir.join(format!("{name}.align"))),
        }
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Parses a Pharaoh alignment line (`src-tgt` pairs, 0-based) into one
/// 1-based source position per target token. A target token linked to
/// several source tokens depends on the rightmost of them.
pub fn parse_alignment_line(
    line: &str,
    src_len: usize,
    tgt_len: usize,
) -> Result<Vec<Option<usize>>> {
    let mut out: Vec<Option<usize>> = vec![None; tgt_len];
    for item in line.split_whitespace() {
        let (s, t) = item
            .split_once('-')
            .ok_or_else(|| Error::Data(format!("malformed alignment entry {item:?}")))?;
        let s: usize = s
            .parse()
            .map_err(|_| Error::Data(format!("malformed alignment entry {item:?}")))?;
        let t: usize = t
            .parse()
            .map_err(|_| Error::Data(format!("malformed alignment entry {item:?}")))?;
        if s >= src_len || t >= tgt_len {
            return Err(Error::Data(format!(
                "alignment entry {item:?} outside a {src_len}x{tgt_len} pair"
            )));
        }
        let slot = &mut out[t];
        *slot = Some(slot.map_or(s + 1, |prev| prev.max(s + 1)));
    }
    Ok(out)
}

/// Source lines, target lines and optional alignment lines.
type ParallelLines = (Vec<String>, Vec<String>, Option<Vec<String>>);

fn read_parallel(files: &CorpusFiles) -> Result<ParallelLines> {
    let src = read_lines(&files.src)?;
    let tgt = read_lines(&files.tgt)?;
    if src.len() != tgt.len() {
        return Err(Error::Data(format!(
            "{} has {} lines but {} has {}",
            files.src.display(),
            src.len(),
            files.tgt.display(),
            tgt.len()
        )));
    }
    let align = match &files.align {
        Some(p) => {
            let a = read_lines(p)?;
            if a.len() != src.len() {
                return Err(Error::Data(format!(
                    "{} has {} lines, expected {}",
                    p.display(),
                    a.len(),
                    src.len()
                )));
            }
            Some(a)
        }
        None => None,
    };
    Ok((src, tgt, align))
}

fn encode_pairs(
    src: &[String],
    tgt: &[String],
    align: Option<&[String]>,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<Vec<ParallelPair>> {
    let mut pairs = Vec::with_capacity(src.len());
    for (i, (s, t)) in src.iter().zip(tgt).enumerate() {
        let s_tok: Vec<&str> = s.split_whitespace().collect();
        let t_tok: Vec<&str> = t.split_whitespace().collect();
        if s_tok.is_empty() {
            return Err(Error::Data(format!(
                "line {}: empty source sentence",
                i + 1
            )));
        }
        let alignment = match align {
            Some(a) => Some(
                parse_alignment_line(&a[i], s_tok.len(), t_tok.len())
                    .map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?,
            ),
            None => None,
        };
        pairs.push(ParallelPair {
            src: src_vocab.encode(&s_tok),
            tgt: tgt_vocab.encode(&t_tok),
            alignment,
        });
    }
    Ok(pairs)
}

/// Loads whitespace-tokenised parallel files, building vocabularies that map
/// tokens seen fewer than `min_freq` times to `<unk>`.
pub fn load_corpus(files: &CorpusFiles, min_freq: usize) -> Result<Corpus> {
    let (src, tgt, align) = read_parallel(files)?;
    let src_vocab = Vocab::build(src.iter().flat_map(|l| l.split_whitespace()), min_freq);
    let tgt_vocab = Vocab::build(tgt.iter().flat_map(|l| l.split_whitespace()), min_freq);
    let pairs = encode_pairs(&src, &tgt, align.as_deref(), &src_vocab, &tgt_vocab)?;
    Ok(Corpus {
        pairs,
        src_vocab,
        tgt_vocab,
    })
}

/// Loads parallel files with existing vocabularies (e.g. from a checkpoint).
pub fn load_corpus_with_vocab(
    files: &CorpusFiles,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<Corpus> {
    let (src, tgt, align) = read_parallel(files)?;
    let pairs = encode_pairs(&src, &tgt, align.as_deref(), src_vocab, tgt_vocab)?;
    Ok(Corpus {
        pairs,
        src_vocab: src_vocab.clone(),
        tgt_vocab: tgt_vocab.clone(),
    })
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the corpus as source, target and (when every pair has one)
/// Pharaoh alignment files.
pub fn export_corpus(corpus: &Corpus, files: &CorpusFiles) -> Result<()> {
    let mut src = String::new();
    let mut tgt = String::new();
    let mut align = String::new();
    let all_aligned = corpus.pairs.iter().all(|p| p.alignment.is_some());
    for p in &corpus.pairs {
        src.push_str(&corpus.src_vocab.decode(&p.src).join(" "));
        src.push('\n');
        tgt.push_str(&corpus.tgt_vocab.decode(&p.tgt).join(" "));
        tgt.push('\n');
        if let Some(a) = &p.alignment {
            let links: Vec<String> = a
                .iter()
                .enumerate()
                .filter_map(|(t, s)| s.map(|s| format!("{}-{}", s - 1, t)))
                .collect();
            align.push_str(&links.join(" "));
            align.push('\n');
        }
    }
    write_file(&files.src, &src)?;
    write_file(&files.tgt, &tgt)?;
    if let (Some(path), true) = (&files.align, all_aligned) {
        write_file(path, &align)?;
    }
    Ok(())
}
