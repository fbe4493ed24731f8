//! Sequence alphabet, padding, one-hot embedding and dataset ingestion.
//!
//! Alphabet table (index: symbol):
//!
//! | 0 A | 1 C | 2 D | 3 E | 4 F | 5 G | 6 H | 7 I | 8 K | 9 L | 10 M |
//! | 11 N | 12 P | 13 Q | 14 R | 15 S | 16 T | 17 V | 18 W | 19 Y | 20 `-` |
//!
//! The twenty canonical residues are in alphabetical order of their one-letter
//! code and the gap/pad symbol `-` is always index 20.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHABET_SIZE: usize = 21;
pub const GAP_INDEX: u8 = 20;
pub const GAP_SYMBOL: u8 = b'-';
pub const SYMBOLS: [u8; ALPHABET_SIZE] = *b"ACDEFGHIKLMNPQRSTVWY-";

/// Heavy and light chain lengths after AHo-style padding.
pub const HEAVY_CHAIN_LENGTH: usize = 149;
pub const LIGHT_CHAIN_LENGTH: usize = 148;

/// Symbol/index lookups for the 21-letter alphabet.
pub struct Alphabet;

impl Alphabet {
    pub const fn len() -> usize {
        ALPHABET_SIZE
    }

    pub fn index_of(symbol: u8) -> Option<u8> {
        SYMBOLS.iter().position(|&s| s == symbol).map(|i| i as u8)
    }

    pub fn symbol(index: u8) -> Option<char> {
        SYMBOLS.get(index as usize).map(|&s| s as char)
    }
}

/// A token string over the alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sequence {
    tokens: Vec<u8>,
}

impl Sequence {
    pub fn new(tokens: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= ALPHABET_SIZE) {
            return Err(Error::Alphabet(format!("token index {bad} out of range 0..=20")));
        }
        Ok(Sequence { tokens })
    }

    pub fn tokens(&self) -> &[u8] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Residue letters with gaps removed.
    pub fn residues(&self) -> Vec<u8> {
        self.tokens
            .iter()
            .filter(|&&t| t != GAP_INDEX)
            .map(|&t| SYMBOLS[t as usize])
            .collect()
    }

    pub fn concat(&self, other: &Sequence) -> Sequence {
        let mut tokens = self.tokens.clone();
        tokens.extend_from_slice(&other.tokens);
        Sequence { tokens }
    }
}

impl FromStr for Sequence {
    type Err = Error;

    /// Parses uppercase residue letters and `-`. Lowercase is rejected.
    fn from_str(s: &str) -> Result<Self> {
        let tokens = s
            .bytes()
            .enumerate()
            .map(|(pos, b)| {
                Alphabet::index_of(b).ok_or_else(|| {
                    Error::Alphabet(format!(
                        "invalid residue '{}' at position {}",
                        b.escape_ascii(),
                        pos + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sequence { tokens })
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &t in &self.tokens {
            write!(f, "{}", SYMBOLS[t as usize] as char)?;
        }
        Ok(())
    }
}

/// Flattened one-hot (or relaxed) embedding of length `L * 21`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() % ALPHABET_SIZE != 0 {
            return Err(Error::DimensionMismatch {
                expected: (values.len() / ALPHABET_SIZE + 1) * ALPHABET_SIZE,
                found: values.len(),
            });
        }
        Ok(Embedding { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of sequence positions.
    pub fn positions(&self) -> usize {
        self.values.len() / ALPHABET_SIZE
    }
}

pub fn pad_to_length(seq: &Sequence, length: usize) -> Result<Sequence> {
    if seq.len() > length {
        return Err(Error::LengthOverflow {
            len: seq.len(),
            max: length,
        });
    }
    let mut tokens = seq.tokens.clone();
    tokens.resize(length, GAP_INDEX);
    Ok(Sequence { tokens })
}

pub fn encode_onehot(seq: &Sequence) -> Embedding {
    let mut values = vec![0.0; seq.len() * ALPHABET_SIZE];
    for (i, &t) in seq.tokens.iter().enumerate() {
        values[i * ALPHABET_SIZE + t as usize] = 1.0;
    }
    Embedding { values }
}

/// One-hot rows for a batch of equal-length sequences.
pub fn encode_batch(seqs: &[Sequence]) -> Result<Array2<f64>> {
    let length = seqs.first().map_or(0, Sequence::len);
    let dim = length * ALPHABET_SIZE;
    let mut out = Array2::zeros((seqs.len(), dim));
    for (row, seq) in seqs.iter().enumerate() {
        if seq.len() != length {
            return Err(Error::DimensionMismatch {
                expected: length,
                found: seq.len(),
            });
        }
        for (i, &t) in seq.tokens.iter().enumerate() {
            out[[row, i * ALPHABET_SIZE + t as usize]] = 1.0;
        }
    }
    Ok(out)
}

/// Per-block argmax. Ties go to the lowest index.
pub fn decode_argmax(values: &[f64]) -> Result<Sequence> {
    if values.len() % ALPHABET_SIZE != 0 {
        return Err(Error::DimensionMismatch {
            expected: (values.len() / ALPHABET_SIZE + 1) * ALPHABET_SIZE,
            found: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    let tokens = values
        .chunks_exact(ALPHABET_SIZE)
        .map(|block| {
            let mut best = 0;
            for (i, &v) in block.iter().enumerate().skip(1) {
                if v > block[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    Ok(Sequence { tokens })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Fasta,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(InputFormat::Csv),
            "fa" | "fasta" | "faa" => Some(InputFormat::Fasta),
            _ => None,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "fasta" => Ok(InputFormat::Fasta),
            other => Err(Error::invalid(format!("unknown input format `{other}`"))),
        }
    }
}

/// How raw records become fixed-length sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceLayout {
    /// One chain padded to `length`.
    Single { length: usize },
    /// Heavy chain padded to `heavy`, light chain to `light`, then concatenated.
    Paired { heavy: usize, light: usize },
}

impl SequenceLayout {
    pub fn antibody() -> Self {
        SequenceLayout::Paired {
            heavy: HEAVY_CHAIN_LENGTH,
            light: LIGHT_CHAIN_LENGTH,
        }
    }

    pub fn fixed_length(&self) -> usize {
        match *self {
            SequenceLayout::Single { length } => length,
            SequenceLayout::Paired { heavy, light } => heavy + light,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SequenceDataset {
    pub sequences: Vec<Sequence>,
    pub fixed_length: usize,
    pub source: PathBuf,
    pub split: String,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn embeddings(&self) -> Result<Array2<f64>> {
        encode_batch(&self.sequences)
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub layout: SequenceLayout,
    pub dedup: bool,
    pub split: String,
}

impl LoadOptions {
    pub fn single(length: usize) -> Self {
        LoadOptions {
            layout: SequenceLayout::Single { length },
            dedup: false,
            split: "train".into(),
        }
    }

    pub fn paired(heavy: usize, light: usize) -> Self {
        LoadOptions {
            layout: SequenceLayout::Paired { heavy, light },
            dedup: false,
            split: "train".into(),
        }
    }
}

fn parse_residues(text: &str, source: &Path, record: &str) -> Result<Sequence> {
    text.trim().parse::<Sequence>().map_err(|e| Error::Parse {
        source_name: source.display().to_string(),
        record: record.to_string(),
        message: e.to_string(),
    })
}

fn fit(seq: Sequence, length: usize, source: &Path, record: &str) -> Result<Sequence> {
    pad_to_length(&seq, length).map_err(|e| Error::Parse {
        source_name: source.display().to_string(),
        record: record.to_string(),
        message: e.to_string(),
    })
}

/// Reads a CSV (`sequence`, or `vh` + `vl` columns) or FASTA file.
///
/// Row order is preserved. With `dedup`, later duplicates are dropped.
pub fn load_dataset(path: &Path, format: InputFormat, opts: &LoadOptions) -> Result<SequenceDataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let raw = match format {
        InputFormat::Csv => read_csv_records(path, opts.layout)?,
        InputFormat::Fasta => read_fasta_records(path, opts.layout)?,
    };
    let mut seen = HashSet::new();
    let sequences = raw
        .into_iter()
        .filter(|s| !opts.dedup || seen.insert(s.clone()))
        .collect();
    Ok(SequenceDataset {
        sequences,
        fixed_length: opts.layout.fixed_length(),
        source: path.to_path_buf(),
        split: opts.split.clone(),
    })
}

fn read_csv_records(path: &Path, layout: SequenceLayout) -> Result<Vec<Sequence>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut out = Vec::new();
    match layout {
        SequenceLayout::Single { length } => {
            let col = column("sequence").ok_or_else(|| Error::Parse {
                source_name: path.display().to_string(),
                record: "header".into(),
                message: "missing `sequence` column".into(),
            })?;
            for (i, row) in reader.records().enumerate() {
                let row = row?;
                let record = format!("row {}", i + 2);
                let seq = parse_residues(row.get(col).unwrap_or(""), path, &record)?;
                out.push(fit(seq, length, path, &record)?);
            }
        }
        SequenceLayout::Paired { heavy, light } => {
            let (vh, vl) = match (column("vh"), column("vl")) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Parse {
                        source_name: path.display().to_string(),
                        record: "header".into(),
                        message: "paired layout needs `vh` and `vl` columns".into(),
                    })
                }
            };
            for (i, row) in reader.records().enumerate() {
                let row = row?;
                let record = format!("row {}", i + 2);
                let h = parse_residues(row.get(vh).unwrap_or(""), path, &record)?;
                let l = parse_residues(row.get(vl).unwrap_or(""), path, &record)?;
                let h = fit(h, heavy, path, &record)?;
                let l = fit(l, light, path, &record)?;
                out.push(h.concat(&l));
            }
        }
    }
    Ok(out)
}

struct FastaRecord {
    id: String,
    line: usize,
    residues: String,
}

fn parse_fasta(text: &str, path: &Path) -> Result<Vec<FastaRecord>> {
    let mut records: Vec<FastaRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            records.push(FastaRecord {
                id,
                line: i + 1,
                residues: String::new(),
            });
        } else {
            match records.last_mut() {
                Some(r) => r.residues.push_str(line.trim()),
                None => {
                    return Err(Error::Parse {
                        source_name: path.display().to_string(),
                        record: format!("line {}", i + 1),
                        message: "sequence data before the first header".into(),
                    })
                }
            }
        }
    }
    Ok(records)
}

fn read_fasta_records(path: &Path, layout: SequenceLayout) -> Result<Vec<Sequence>> {
    let text = fs::read_to_string(path)?;
    let records = parse_fasta(&text, path)?;
    let label = |r: &FastaRecord| format!("record `{}` (line {})", r.id, r.line);
    match layout {
        SequenceLayout::Single { length } => records
            .iter()
            .map(|r| {
                let seq = parse_residues(&r.residues, path, &label(r))?;
                fit(seq, length, path, &label(r))
            })
            .collect(),
        SequenceLayout::Paired { heavy, light } => {
            let unpaired = |r: &FastaRecord, why: &str| Error::Parse {
                source_name: path.display().to_string(),
                record: label(r),
                message: why.to_string(),
            };
            let mut out = Vec::with_capacity(records.len() / 2);
            let mut it = records.chunks(2);
            for pair in &mut it {
                let [h, l] = pair else {
                    return Err(unpaired(&pair[0], "heavy chain without a light chain"));
                };
                let h_base = h
                    .id
                    .strip_suffix("_H")
                    .ok_or_else(|| unpaired(h, "expected an `_H` record"))?;
                let l_base = l
                    .id
                    .strip_suffix("_L")
                    .ok_or_else(|| unpaired(l, "expected an `_L` record"))?;
                if h_base != l_base {
                    return Err(unpaired(l, "light chain id does not match heavy chain"));
                }
                let hs = fit(parse_residues(&h.residues, path, &label(h))?, heavy, path, &label(h))?;
                let ls = fit(parse_residues(&l.residues, path, &label(l))?, light, path, &label(l))?;
                out.push(hs.concat(&ls));
            }
            Ok(out)
        }
    }
}

/// Writes sequences as a FASTA file with ids `seq_<i>`.
pub fn write_fasta(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for (i, s) in seqs.iter().enumerate() {
        writeln!(f, ">seq_{i}\n{s}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(tokens: &[u8]) -> Sequence {
        Sequence::new(tokens.to_vec()).unwrap()
    }

    #[test]
    fn alphabet_layout() {
        assert_eq!(Alphabet::len(), 21);
        assert_eq!(Alphabet::index_of(b'-'), Some(GAP_INDEX));
        assert_eq!(Alphabet::index_of(b'A'), Some(0));
        assert_eq!(Alphabet::index_of(b'Y'), Some(19));
        let distinct: HashSet<_> = SYMBOLS.iter().collect();
        assert_eq!(distinct.len(), 21);
        let mut aa = SYMBOLS[..20].to_vec();
        aa.sort();
        assert_eq!(&aa[..], &SYMBOLS[..20]);
    }

    #[test]
    fn pad_appends_gaps() {
        let padded = pad_to_length(&seq(&[0, 1, 2]), 5).unwrap();
        assert_eq!(padded.tokens(), &[0, 1, 2, 20, 20]);
        let full = seq(&[3; 149]);
        assert_eq!(pad_to_length(&full, 149).unwrap(), full);
        assert!(matches!(
            pad_to_length(&seq(&[0; 6]), 5),
            Err(Error::LengthOverflow { len: 6, max: 5 })
        ));
    }

    #[test]
    fn paired_antibody_length() {
        let h = pad_to_length(&seq(&[0; 120]), HEAVY_CHAIN_LENGTH).unwrap();
        let l = pad_to_length(&seq(&[1; 110]), LIGHT_CHAIN_LENGTH).unwrap();
        let pair = h.concat(&l);
        assert_eq!(pair.len(), 297);
        assert_eq!(encode_onehot(&pair).len(), 6237);
    }

    #[test]
    fn onehot_positions() {
        let e = encode_onehot(&seq(&[0, 0, 0, 0]));
        let ones: Vec<usize> = e
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![0, 21, 42, 63]);
    }

    #[test]
    fn token_out_of_range() {
        assert!(matches!(Sequence::new(vec![0, 21]), Err(Error::Alphabet(_))));
    }

    #[test]
    fn argmax_tie_goes_low() {
        let s = decode_argmax(&[0.5; 21]).unwrap();
        assert_eq!(s.tokens(), &[0]);
        let mut v = vec![0.0; 42];
        v[21 + 20] = f64::NAN;
        assert!(matches!(decode_argmax(&v), Err(Error::NonFinite(_))));
        assert!(decode_argmax(&[0.0; 20]).is_err());
    }

    #[test]
    fn argmax_survives_bounded_noise() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from_seed(3);
        for _ in 0..200 {
            let tokens: Vec<u8> = (0..10).map(|_| rng.random_range(0..21)).collect();
            let s = seq(&tokens);
            // Perturbation in [-0.4, 0.4] keeps the one-hot winner ahead:
            // worst case 1 - 0.4 vs 0 + 0.4.
            let noisy: Vec<f64> = encode_onehot(&s)
                .values()
                .iter()
                .map(|v| v + rng.random_range(-0.4..=0.4))
                .collect();
            assert_eq!(decode_argmax(&noisy).unwrap(), s);
        }
    }

    #[test]
    fn parse_rejects_lowercase_and_unknown() {
        assert!("ACDX".parse::<Sequence>().is_err());
        assert!("acd".parse::<Sequence>().is_err());
        assert_eq!("AC-".parse::<Sequence>().unwrap().tokens(), &[0, 1, 20]);
    }

    fn write_tmp(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn fasta_three_peptides() {
        let f = write_tmp(">p1\nGIGKFLKKAKKF\n>p2\nKWKLFKKIGAVLKVL\n>p3\nFLPLIAGLAANFLPKIFCKITRKC\n", ".fasta");
        let ds = load_dataset(f.path(), InputFormat::Fasta, &LoadOptions::single(60)).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.sequences.iter().all(|s| s.len() == 60));
        assert_eq!(ds.sequences[0].residues(), b"GIGKFLKKAKKF");
    }

    #[test]
    fn csv_invalid_letter_names_row() {
        let f = write_tmp("sequence\nACDE\nACBE\n", ".csv");
        let err = load_dataset(f.path(), InputFormat::Csv, &LoadOptions::single(10)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains('B'), "{msg}");
    }

    #[test]
    fn csv_overflow_is_error() {
        let f = write_tmp("sequence\nACDEFG\n", ".csv");
        let err = load_dataset(f.path(), InputFormat::Csv, &LoadOptions::single(4)).unwrap_err();
        assert!(err.to_string().contains("exceeds"), "{err}");
    }

    #[test]
    fn csv_paired_concatenates() {
        let vh = "EVQLVESGGGLVQPGGSLRLSCAASGFTFS";
        let vl = "DIQMTQSPSSLSASVGDRVTITC";
        let f = write_tmp(&format!("id,vh,vl\nab1,{vh},{vl}\n"), ".csv");
        let ds = load_dataset(f.path(), InputFormat::Csv, &LoadOptions::paired(149, 148)).unwrap();
        assert_eq!(ds.fixed_length, 297);
        let s = &ds.sequences[0];
        assert_eq!(s.len(), 297);
        assert_eq!(s.tokens()[vh.len()], GAP_INDEX);
        assert_eq!(Alphabet::symbol(s.tokens()[149]), Some('D'));
    }

    #[test]
    fn fasta_pairing() {
        let f = write_tmp(">a_H\nEVQL\n>a_L\nDIQM\n>b_H\nQVQL\n>b_L\nEIVL\n", ".fa");
        let ds = load_dataset(f.path(), InputFormat::Fasta, &LoadOptions::paired(6, 5)).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sequences[1].to_string(), "QVQL--EIVL-");

        let bad = write_tmp(">a_H\nEVQL\n>b_L\nDIQM\n", ".fa");
        assert!(load_dataset(bad.path(), InputFormat::Fasta, &LoadOptions::paired(6, 5)).is_err());
        let odd = write_tmp(">a_H\nEVQL\n", ".fa");
        assert!(load_dataset(odd.path(), InputFormat::Fasta, &LoadOptions::paired(6, 5)).is_err());
    }

    #[test]
    fn dedup_keeps_first() {
        let f = write_tmp("sequence\nAAA\nCCC\nAAA\n", ".csv");
        let mut opts = LoadOptions::single(3);
        opts.dedup = true;
        let ds = load_dataset(f.path(), InputFormat::Csv, &opts).unwrap();
        assert_eq!(ds.len(), 2);
        opts.dedup = false;
        assert_eq!(load_dataset(f.path(), InputFormat::Csv, &opts).unwrap().len(), 3);
    }

    proptest! {
        #[test]
        fn roundtrip_and_one_count(tokens in proptest::collection::vec(0u8..21, 1..40)) {
            let s = seq(&tokens);
            let e = encode_onehot(&s);
            prop_assert_eq!(e.values().iter().filter(|&&v| v != 0.0).count(), s.len());
            prop_assert!(e.values().iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert_eq!(decode_argmax(e.values()).unwrap(), s);
        }

        #[test]
        fn pad_is_idempotent(tokens in proptest::collection::vec(0u8..21, 0..30), extra in 0usize..10) {
            let s = seq(&tokens);
            let len = tokens.len() + extra;
            let once = pad_to_length(&s, len).unwrap();
            prop_assert_eq!(pad_to_length(&once, len).unwrap(), once);
        }
    }
}
