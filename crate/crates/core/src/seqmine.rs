//! Frequent contiguous-subsequence mining over patient action sequences.
//!
//! A subsequence here is a contiguous n-gram. Support counts distinct patients;
//! occurrence counts include overlapping windows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActionLabel, DiagnosisRecord, PatientSequence};
use crate::matrix::DocTermMatrix;

/// Separator used in the textual form of a [`Subsequence`].
pub const STEP_SEPARATOR: &str = " -> ";

pub const DEFAULT_MAX_LEN: usize = 4;
pub const DEFAULT_MIN_SUPPORT_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subsequence(pub Vec<ActionLabel>);

impl Subsequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.0
    }

    /// Inverse of the `Display` form (`a -> b -> c`).
    pub fn parse(repr: &str) -> Self {
        Subsequence(
            repr.split(STEP_SEPARATOR)
                .map(|l| ActionLabel(l.to_string()))
                .collect(),
        )
    }
}

impl fmt::Display for Subsequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(STEP_SEPARATOR)?;
            }
            f.write_str(l.as_str())?;
        }
        Ok(())
    }
}

/// Minimum number of distinct patients a subsequence must appear in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinSupport {
    Count(usize),
    /// Fraction of patients, rounded up, never below 1.
    Fraction(f64),
}

impl Default for MinSupport {
    fn default() -> Self {
        MinSupport::Fraction(DEFAULT_MIN_SUPPORT_FRACTION)
    }
}

impl MinSupport {
    pub fn resolve(self, n_patients: usize) -> usize {
        match self {
            MinSupport::Count(c) => c,
            MinSupport::Fraction(f) => ((f * n_patients as f64).ceil() as usize).max(1),
        }
    }
}

impl fmt::Display for MinSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MinSupport::Count(c) => write!(f, "{c}"),
            MinSupport::Fraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

impl std::str::FromStr for MinSupport {
    type Err = Error;

    /// Accepts `12` (patients) or `2%` (fraction of patients).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("invalid min_support `{s}`"));
        if let Some(pct) = s.strip_suffix('%') {
            let v: f64 = pct.trim().parse().map_err(|_| bad())?;
            if !(v > 0.0 && v <= 100.0) {
                return Err(bad());
            }
            Ok(MinSupport::Fraction(v / 100.0))
        } else {
            let v: usize = s.parse().map_err(|_| bad())?;
            if v == 0 {
                return Err(bad());
            }
            Ok(MinSupport::Count(v))
        }
    }
}

/// Collapses runs of identical consecutive labels (`a a a b` becomes `a b`).
pub fn collapse_repeats(seq: &PatientSequence) -> PatientSequence {
    let mut labels = seq.labels.clone();
    labels.dedup();
    PatientSequence {
        patient_id: seq.patient_id.clone(),
        labels,
    }
}

/// Label interning with ids assigned in lexicographic label order, so comparing
/// id slices orders subsequences lexicographically.
struct Alphabet {
    ids: HashMap<ActionLabel, u32>,
    labels: Vec<ActionLabel>,
}

impl Alphabet {
    fn from_labels<'a>(labels: impl Iterator<Item = &'a ActionLabel>) -> Self {
        let sorted: BTreeSet<&ActionLabel> = labels.collect();
        let labels: Vec<ActionLabel> = sorted.into_iter().cloned().collect();
        let ids = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        Self { ids, labels }
    }

    fn encode(&self, seq: &PatientSequence) -> Vec<u32> {
        seq.labels
            .iter()
            .map(|l| self.ids.get(l).copied().unwrap_or(u32::MAX))
            .collect()
    }

    fn decode(&self, ids: &[u32]) -> Subsequence {
        Subsequence(ids.iter().map(|&i| self.labels[i as usize].clone()).collect())
    }
}

/// Every contiguous n-gram of length `1..=max_len` present in at least
/// `min_support` distinct sequences, sorted lexicographically.
pub fn mine_frequent_subsequences(
    sequences: &[PatientSequence],
    min_support: usize,
    max_len: usize,
) -> Result<Vec<Subsequence>> {
    Ok(mine_with_support(sequences, min_support, max_len)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}

/// As [`mine_frequent_subsequences`], also returning each term's patient support.
pub fn mine_with_support(
    sequences: &[PatientSequence],
    min_support: usize,
    max_len: usize,
) -> Result<Vec<(Subsequence, usize)>> {
    if min_support == 0 {
        return Err(Error::InvalidArgument("min_support must be >= 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be >= 1".into()));
    }
    let alphabet = Alphabet::from_labels(sequences.iter().flat_map(|s| s.labels.iter()));
    let encoded: Vec<Vec<u32>> = sequences.iter().map(|s| alphabet.encode(s)).collect();

    let mut frequent: BTreeMap<Box<[u32]>, usize> = BTreeMap::new();
    // Level-wise: a window of length n is a candidate only if both of its
    // (n-1)-long prefix and suffix were frequent.
    let mut previous: Option<HashMap<Box<[u32]>, usize>> = None;
    for n in 1..=max_len {
        // value: (support, last patient index counted)
        let mut level: HashMap<Box<[u32]>, (usize, usize)> = HashMap::new();
        for (p, seq) in encoded.iter().enumerate() {
            if seq.len() < n {
                continue;
            }
            for w in seq.windows(n) {
                if let Some(prev) = &previous {
                    if !prev.contains_key(&w[..n - 1]) || !prev.contains_key(&w[1..]) {
                        continue;
                    }
                }
                match level.get_mut(w) {
                    Some(entry) => {
                        if entry.1 != p {
                            entry.0 += 1;
                            entry.1 = p;
                        }
                    }
                    None => {
                        level.insert(w.into(), (1, p));
                    }
                }
            }
        }
        let kept: HashMap<Box<[u32]>, usize> = level
            .into_iter()
            .filter(|(_, (support, _))| *support >= min_support)
            .map(|(k, (support, _))| (k, support))
            .collect();
        if kept.is_empty() {
            break;
        }
        frequent.extend(kept.iter().map(|(k, &v)| (k.clone(), v)));
        previous = Some(kept);
    }

    Ok(frequent
        .into_iter()
        .map(|(ids, support)| (alphabet.decode(&ids), support))
        .collect())
}

/// Counts (overlapping) occurrences of each vocabulary term in each sequence.
/// Document order follows `sequences`.
pub fn count_occurrences(
    sequences: &[PatientSequence],
    vocabulary: &[Subsequence],
) -> Result<DocTermMatrix> {
    if vocabulary.is_empty() {
        return Err(Error::InvalidArgument("vocabulary is empty".into()));
    }
    if vocabulary.iter().any(Subsequence::is_empty) {
        return Err(Error::InvalidArgument("empty subsequence in vocabulary".into()));
    }
    let alphabet = Alphabet::from_labels(vocabulary.iter().flat_map(|s| s.labels().iter()));
    let mut lookup: HashMap<Vec<u32>, u32> = HashMap::with_capacity(vocabulary.len());
    let mut lengths = BTreeSet::new();
    for (j, term) in vocabulary.iter().enumerate() {
        let ids: Vec<u32> = term.labels().iter().map(|l| alphabet.ids[l]).collect();
        lengths.insert(ids.len());
        if lookup.insert(ids, j as u32).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate vocabulary term `{term}`")));
        }
    }

    let mut rows = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let ids = alphabet.encode(seq);
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &n in &lengths {
            if ids.len() < n {
                break;
            }
            for w in ids.windows(n) {
                if let Some(&j) = lookup.get(w) {
                    *counts.entry(j).or_insert(0) += 1;
                }
            }
        }
        rows.push(counts.into_iter().collect());
    }
    DocTermMatrix::from_rows(
        sequences.iter().map(|s| s.patient_id.clone()).collect(),
        vocabulary.iter().map(Subsequence::to_string).collect(),
        rows,
    )
}

/// Patient × code count matrix; patients and codes in sorted order.
pub fn bag_to_matrix(records: &[DiagnosisRecord]) -> Result<DocTermMatrix> {
    let patients: BTreeSet<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
    let codes: BTreeSet<&str> = records.iter().map(|r| r.code.as_str()).collect();
    let p_index: HashMap<&str, usize> = patients.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let c_index: HashMap<&str, u32> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i as u32))
        .collect();
    let mut rows = vec![Vec::new(); patients.len()];
    for r in records {
        rows[p_index[r.patient_id.as_str()]].push((c_index[r.code.as_str()], r.count));
    }
    DocTermMatrix::from_rows(
        patients.into_iter().map(str::to_string).collect(),
        codes.into_iter().map(str::to_string).collect(),
        rows,
    )
}
