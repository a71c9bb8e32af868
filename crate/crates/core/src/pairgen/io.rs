//! Pair files: one JSON object per line, preceded by a manifest record.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sha256_hex, MinimalPair, PairgenError, Phenomenon};

pub const FORMAT_VERSION: &str = "agreement-pairs/1";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSummary {
    pub total: usize,
    pub conditions: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub total: usize,
    pub counts: BTreeMap<Phenomenon, CountSummary>,
    /// Grammar file name -> sha256 of its bytes.
    pub grammars: BTreeMap<String, String>,
    /// sha256 over the pair lines (each terminated by `\n`).
    pub pairs_sha256: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<Phenomenon, String>,
}

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    manifest: Manifest,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    id: String,
    phenomenon: Phenomenon,
    condition: String,
    grammatical: String,
    ungrammatical: String,
    locus_index: usize,
}

impl From<&MinimalPair> for PairRecord {
    fn from(p: &MinimalPair) -> Self {
        PairRecord {
            id: p.id.clone(),
            phenomenon: p.phenomenon,
            condition: p.condition.clone(),
            grammatical: p.grammatical_text(),
            ungrammatical: p.ungrammatical_text(),
            locus_index: p.locus_index,
        }
    }
}

fn split(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

fn pair_line(p: &MinimalPair) -> String {
    serde_json::to_string(&PairRecord::from(p)).expect("pair record serializes")
}

fn count(pairs: &[MinimalPair]) -> BTreeMap<Phenomenon, CountSummary> {
    let mut counts: BTreeMap<Phenomenon, CountSummary> = BTreeMap::new();
    for p in pairs {
        let c = counts.entry(p.phenomenon).or_default();
        c.total += 1;
        *c.conditions.entry(p.condition.clone()).or_default() += 1;
    }
    counts
}

fn digest_lines<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl Manifest {
    pub fn describe(
        pairs: &[MinimalPair],
        grammars: BTreeMap<String, String>,
        notes: BTreeMap<Phenomenon, String>,
    ) -> Self {
        let lines: Vec<String> = pairs.iter().map(pair_line).collect();
        Manifest {
            format: FORMAT_VERSION.to_string(),
            total: pairs.len(),
            counts: count(pairs),
            grammars,
            pairs_sha256: digest_lines(lines.iter().map(String::as_str)),
            notes,
        }
    }

    pub fn count_of(&self, p: Phenomenon) -> usize {
        self.counts.get(&p).map_or(0, |c| c.total)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFile {
    pub manifest: Manifest,
    pub pairs: Vec<MinimalPair>,
}

pub fn write_pairs<W: Write>(
    mut w: W,
    manifest: &Manifest,
    pairs: &[MinimalPair],
) -> std::io::Result<()> {
    let header = ManifestRecord {
        manifest: manifest.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for p in pairs {
        w.write_all(pair_line(p).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_pairs_file(
    path: &Path,
    manifest: &Manifest,
    pairs: &[MinimalPair],
) -> Result<(), PairgenError> {
    let io = |source| PairgenError::Io {
        path: path.to_path_buf(),
        source,
    };
    let f = File::create(path).map_err(io)?;
    write_pairs(BufWriter::new(f), manifest, pairs).map_err(io)
}

/// Reads a pair file. In strict mode every pair is checked against the
/// single-locus invariant and the manifest's counts and checksum.
pub fn read_pairs<R: Read>(r: R, strict: bool) -> Result<PairFile, PairgenError> {
    let mut lines = BufReader::new(r).lines();
    let io = |source| PairgenError::Io {
        path: "<pairs>".into(),
        source,
    };
    let first = lines
        .next()
        .transpose()
        .map_err(io)?
        .ok_or(PairgenError::Malformed {
            line: 1,
            message: "missing manifest record".into(),
        })?;
    let header: ManifestRecord =
        serde_json::from_str(&first).map_err(|e| PairgenError::Malformed {
            line: 1,
            message: format!("manifest record: {e}"),
        })?;
    let manifest = header.manifest;

    let mut pairs = Vec::new();
    let mut digest = Sha256::new();
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| PairgenError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        digest.update(line.as_bytes());
        digest.update(b"\n");
        let pair = MinimalPair {
            id: rec.id,
            phenomenon: rec.phenomenon,
            condition: rec.condition,
            grammatical: split(&rec.grammatical),
            ungrammatical: split(&rec.ungrammatical),
            locus_index: rec.locus_index,
        };
        if strict {
            pair.check_single_locus()
                .map_err(|message| PairgenError::InvalidPair {
                    line: line_no,
                    id: pair.id.clone(),
                    message,
                })?;
            if !ids.insert(pair.id.clone()) {
                return Err(PairgenError::Malformed {
                    line: line_no,
                    message: format!("duplicate pair id {}", pair.id),
                });
            }
        }
        pairs.push(pair);
    }

    if strict {
        if manifest.format != FORMAT_VERSION {
            return Err(PairgenError::Malformed {
                line: 1,
                message: format!("unsupported format {}", manifest.format),
            });
        }
        let actual = hex::encode(digest.finalize());
        if actual != manifest.pairs_sha256 {
            return Err(PairgenError::ChecksumMismatch {
                what: "pair records".into(),
                expected: manifest.pairs_sha256.clone(),
                actual,
            });
        }
        check_counts(&manifest, &pairs)?;
    }
    Ok(PairFile { manifest, pairs })
}

fn check_counts(manifest: &Manifest, pairs: &[MinimalPair]) -> Result<(), PairgenError> {
    if manifest.total != pairs.len() {
        return Err(PairgenError::CountMismatch {
            what: "total".into(),
            expected: manifest.total,
            actual: pairs.len(),
        });
    }
    let actual = count(pairs);
    for p in Phenomenon::ALL {
        let want = manifest.counts.get(&p).cloned().unwrap_or_default();
        let got = actual.get(&p).cloned().unwrap_or_default();
        if want.total != got.total {
            return Err(PairgenError::CountMismatch {
                what: p.id().into(),
                expected: want.total,
                actual: got.total,
            });
        }
        for (cond, &n) in &want.conditions {
            let m = got.conditions.get(cond).copied().unwrap_or(0);
            if n != m {
                return Err(PairgenError::CountMismatch {
                    what: format!("{}/{cond}", p.id()),
                    expected: n,
                    actual: m,
                });
            }
        }
    }
    Ok(())
}

pub fn read_pairs_file(path: &Path, strict: bool) -> Result<PairFile, PairgenError> {
    let f = File::open(path).map_err(|source| PairgenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_pairs(f, strict)
}

/// Compares the manifest's grammar checksums with the files in `dir`.
pub fn verify_grammar_checksums(manifest: &Manifest, dir: &Path) -> Result<(), PairgenError> {
    for (file, expected) in &manifest.grammars {
        let path = dir.join(file);
        let bytes = fs::read(&path).map_err(|source| PairgenError::Io {
            path: path.clone(),
            source,
        })?;
        let actual = sha256_hex(&bytes);
        if &actual != expected {
            return Err(PairgenError::ChecksumMismatch {
                what: file.clone(),
                expected: expected.clone(),
                actual,
            });
        }
    }
    Ok(())
}
