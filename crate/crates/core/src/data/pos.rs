//! Part-of-speech corpora: one sentence per line of `word/TAG` tokens.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::data::corpus::Corpus;
use crate::error::{DhmmError, Result};
use crate::hmm::{Family, ObservationSequence, Observations};

const DEFAULT_MERGE: &str = include_str!("../../assets/tag_merge.tsv");

/// Maps raw tags onto a reduced tag set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagMergeMap {
    map: BTreeMap<String, usize>,
    /// Raw tags of each group, in file order.
    groups: Vec<Vec<String>>,
}

impl TagMergeMap {
    /// Parses `RAW_TAG<TAB>index` lines; blank lines are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut groups: Vec<Vec<String>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let loc = || format!("{origin}:{}", i + 1);
            if line.trim().is_empty() {
                continue;
            }
            let (tag, idx) = line
                .split_once('\t')
                .ok_or_else(|| DhmmError::parse(loc(), "expected RAW_TAG<TAB>index"))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| DhmmError::parse(loc(), format!("bad index {:?}", idx.trim())))?;
            if map.insert(tag.to_string(), idx).is_some() {
                return Err(DhmmError::parse(loc(), format!("tag {tag:?} listed twice")));
            }
            if groups.len() <= idx {
                groups.resize(idx + 1, Vec::new());
            }
            groups[idx].push(tag.to_string());
        }
        if let Some(g) = groups.iter().position(Vec::is_empty) {
            return Err(DhmmError::parse(origin, format!("no tag maps to index {g}")));
        }
        Ok(Self { map, groups })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, tag: &str) -> Option<usize> {
        self.map.get(tag).copied()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_tags(&self) -> usize {
        self.map.len()
    }

    /// Group names: member tags joined by spaces.
    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.join(" ")).collect()
    }
}

impl Default for TagMergeMap {
    /// 46 Penn Treebank tags merged into 15 groups.
    fn default() -> Self {
        Self::parse(DEFAULT_MERGE, "tag_merge.tsv").expect("bundled tag map parses")
    }
}

struct Sentence {
    words: Vec<String>,
    tags: Vec<usize>,
}

fn parse_sentences(text: &str, origin: &str, merge: &TagMergeMap) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let loc = || format!("{origin}:{}", i + 1);
        if line.trim().is_empty() {
            log::warn!("{}: empty sentence skipped", loc());
            continue;
        }
        let mut words = Vec::new();
        let mut tags = Vec::new();
        for token in line.split_whitespace() {
            let (word, tag) = token
                .rsplit_once('/')
                .ok_or_else(|| DhmmError::parse(loc(), format!("token {token:?} has no /TAG")))?;
            let idx = merge
                .get(tag)
                .ok_or_else(|| DhmmError::parse(loc(), format!("unknown tag {tag:?}")))?;
            words.push(word.to_string());
            tags.push(idx);
        }
        out.push(Sentence { words, tags });
    }
    Ok(out)
}

/// Words by decreasing frequency, ties in byte order.
fn build_vocabulary(sentences: &[Sentence]) -> Vec<String> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for w in &s.words {
            *freq.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<(&str, usize)> = freq.into_iter().collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    words.into_iter().map(|(w, _)| w.to_string()).collect()
}

fn assemble(sentences: Vec<Sentence>, vocabulary: Vec<String>, merge: &TagMergeMap) -> Result<Corpus> {
    let index: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let unk = vocabulary.len();
    let mut sequences = Vec::with_capacity(sentences.len());
    for s in &sentences {
        let symbols = s
            .words
            .iter()
            .map(|w| index.get(w.as_str()).copied().unwrap_or(unk))
            .collect();
        sequences.push(ObservationSequence::new(Observations::Symbols(symbols), Some(s.tags.clone()))?);
    }
    let mut corpus = Corpus::new(Family::Categorical, sequences);
    corpus.n_symbols = Some(if vocabulary.is_empty() { 0 } else { vocabulary.len() + 1 });
    corpus.vocabulary = vocabulary;
    corpus.label_names = merge.group_names();
    Ok(corpus)
}

/// Reads a tagged corpus and builds its vocabulary. Symbol indices follow
/// word frequency; one extra index after the last word is reserved for
/// words unseen at training time.
pub fn read_pos_corpus(path: &Path, merge: &TagMergeMap) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
    parse_pos_corpus(&text, &path.display().to_string(), merge)
}

pub fn parse_pos_corpus(text: &str, origin: &str, merge: &TagMergeMap) -> Result<Corpus> {
    let sentences = parse_sentences(text, origin, merge)?;
    let vocabulary = build_vocabulary(&sentences);
    assemble(sentences, vocabulary, merge)
}

/// Reads a tagged corpus against an existing vocabulary; unseen words map to
/// the reserved unknown-word index.
pub fn read_pos_corpus_with_vocabulary(path: &Path, merge: &TagMergeMap, vocabulary: &[String]) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
    let sentences = parse_sentences(&text, &path.display().to_string(), merge)?;
    assemble(sentences, vocabulary.to_vec(), merge)
}
