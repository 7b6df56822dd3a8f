//! Handwritten-letter records: `id letter next_id word_id position fold p_0 .. p_127`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::data::corpus::Corpus;
use crate::error::{DhmmError, Result};
use crate::hmm::{Family, ObservationSequence, Observations};

/// 16×8 binary image.
pub const OCR_PIXELS: usize = 128;
const HEADER_FIELDS: usize = 6;

#[derive(Debug, Clone)]
struct Record {
    id: i64,
    letter: usize,
    next_id: i64,
    fold: usize,
    pixels: Vec<bool>,
}

fn parse_record(line: &str, loc: &str) -> Result<Record> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect();
    let id_hint = fields.first().copied().unwrap_or("?");
    let err = |msg: String| DhmmError::parse(format!("{loc} (record {id_hint})"), msg);
    if fields.len() != HEADER_FIELDS + OCR_PIXELS {
        return Err(err(format!(
            "expected {} fields, found {}",
            HEADER_FIELDS + OCR_PIXELS,
            fields.len()
        )));
    }
    let int = |s: &str, what: &str| s.parse::<i64>().map_err(|_| err(format!("bad {what} {s:?}")));
    let id = int(fields[0], "id")?;
    let letter = match fields[1].as_bytes() {
        [c @ b'a'..=b'z'] => (c - b'a') as usize,
        _ => return Err(err(format!("letter {:?} outside a-z", fields[1]))),
    };
    let next_id = int(fields[2], "next id")?;
    let fold = int(fields[5], "fold")?;
    if fold < 0 {
        return Err(err(format!("negative fold {fold}")));
    }
    let pixels = fields[HEADER_FIELDS..]
        .iter()
        .map(|p| match *p {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(err(format!("pixel value {other:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(Record {
        id,
        letter,
        next_id,
        fold: fold as usize,
        pixels,
    })
}

/// Reads the letter records and chains them into words via `next_id`
/// (−1 ends a word). Words appear in the order of their first letter in the
/// file and take that letter's fold.
pub fn read_ocr_dataset(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
    parse_ocr_dataset(&text, &path.display().to_string())
}

pub fn parse_ocr_dataset(text: &str, origin: &str) -> Result<Corpus> {
    let mut records = Vec::new();
    let mut by_id = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{origin}:{}", i + 1);
        let r = parse_record(line, &loc)?;
        if by_id.insert(r.id, records.len()).is_some() {
            return Err(DhmmError::parse(loc, format!("duplicate record id {}", r.id)));
        }
        records.push(r);
    }

    let mut successors = HashSet::new();
    for r in &records {
        if r.next_id != -1 {
            if !by_id.contains_key(&r.next_id) {
                return Err(DhmmError::parse(
                    format!("{origin} (record {})", r.id),
                    format!("broken chain: next id {} does not exist", r.next_id),
                ));
            }
            if !successors.insert(r.next_id) {
                return Err(DhmmError::parse(
                    format!("{origin} (record {})", r.id),
                    format!("broken chain: record {} has two predecessors", r.next_id),
                ));
            }
        }
    }

    let mut visited = vec![false; records.len()];
    let mut sequences = Vec::new();
    let mut folds = Vec::new();
    for (start, r) in records.iter().enumerate() {
        if successors.contains(&r.id) {
            continue;
        }
        let mut bits = Vec::new();
        let mut labels = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            bits.push(records[cur].pixels.clone());
            labels.push(records[cur].letter);
            match records[cur].next_id {
                -1 => break,
                next => cur = by_id[&next],
            }
        }
        sequences.push(ObservationSequence::new(Observations::Bits(bits), Some(labels))?);
        folds.push(r.fold);
    }
    if let Some(i) = visited.iter().position(|v| !v) {
        return Err(DhmmError::parse(
            format!("{origin} (record {})", records[i].id),
            "broken chain: record lies on a cycle",
        ));
    }

    let mut corpus = Corpus::new(Family::Bernoulli, sequences);
    corpus.dim = Some(OCR_PIXELS);
    corpus.label_names = (b'a'..=b'z').map(|c| (c as char).to_string()).collect();
    corpus.folds = Some(folds);
    corpus.validate()?;
    Ok(corpus)
}
