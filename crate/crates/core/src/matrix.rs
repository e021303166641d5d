//! Sparse document-term count matrix and its triplet CSV persistence.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Patients × terms count matrix. Rows hold `(term index, count)` pairs sorted by
/// term index; zero counts are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocTermMatrix {
    doc_ids: Vec<String>,
    terms: Vec<String>,
    rows: Vec<Vec<(u32, u64)>>,
}

impl DocTermMatrix {
    /// Builds a matrix from explicit rows. Entries are merged per term and zeros removed.
    pub fn from_rows(
        doc_ids: Vec<String>,
        terms: Vec<String>,
        rows: Vec<Vec<(u32, u64)>>,
    ) -> Result<Self> {
        if rows.len() != doc_ids.len() {
            return Err(Error::LengthMismatch {
                expected: doc_ids.len(),
                found: rows.len(),
            });
        }
        check_unique(&doc_ids, "doc id")?;
        check_unique(&terms, "term")?;
        let n_terms = terms.len();
        let rows = rows
            .into_iter()
            .map(|mut row| {
                row.sort_unstable_by_key(|&(t, _)| t);
                let mut merged: Vec<(u32, u64)> = Vec::with_capacity(row.len());
                for (t, c) in row {
                    if t as usize >= n_terms {
                        return Err(Error::IndexOutOfRange {
                            index: t as usize,
                            len: n_terms,
                        });
                    }
                    match merged.last_mut() {
                        Some(last) if last.0 == t => last.1 += c,
                        _ => merged.push((t, c)),
                    }
                }
                merged.retain(|&(_, c)| c > 0);
                Ok(merged)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            doc_ids,
            terms,
            rows,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn row(&self, doc: usize) -> &[(u32, u64)] {
        &self.rows[doc]
    }

    pub fn get(&self, doc: usize, term: usize) -> u64 {
        let row = &self.rows[doc];
        row.binary_search_by_key(&(term as u32), |&(t, _)| t)
            .map(|i| row[i].1)
            .unwrap_or(0)
    }

    pub fn doc_length(&self, doc: usize) -> u64 {
        self.rows[doc].iter().map(|&(_, c)| c).sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.n_docs()).map(|d| self.doc_length(d)).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.n_terms()];
        for row in &self.rows {
            for &(t, c) in row {
                sums[t as usize] += c;
            }
        }
        sums
    }

    /// Number of documents in which each term occurs at least once.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0; self.n_terms()];
        for row in &self.rows {
            for &(t, _) in row {
                df[t as usize] += 1;
            }
        }
        df
    }

    /// Re-expresses the matrix over `doc_ids`; documents not present become empty rows
    /// and documents absent from `doc_ids` are dropped.
    pub fn align_docs(&self, doc_ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let rows = doc_ids
            .iter()
            .map(|d| index.get(d.as_str()).map(|&i| self.rows[i].clone()).unwrap_or_default())
            .collect();
        Self::from_rows(doc_ids.to_vec(), self.terms.clone(), rows)
    }

    /// Paths of the triplet, vocabulary and document sidecar files for `prefix`.
    pub fn file_paths(dir: &Path, prefix: &str) -> [PathBuf; 3] {
        [
            dir.join(format!("{prefix}.triplets.csv")),
            dir.join(format!("{prefix}.vocab.csv")),
            dir.join(format!("{prefix}.docs.csv")),
        ]
    }

    /// Writes `doc_id,term_id,count` triplets with `term_id,term_repr` and `doc_id` sidecars.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<()> {
        let [triplets, vocab, docs] = Self::file_paths(dir, prefix);

        let mut w = csv_writer(&triplets)?;
        w.write_record(["doc_id", "term_id", "count"])
            .map_err(|e| csv_io(&triplets, e))?;
        for (doc, row) in self.doc_ids.iter().zip(&self.rows) {
            for &(t, c) in row {
                w.write_record([doc.as_str(), &t.to_string(), &c.to_string()])
                    .map_err(|e| csv_io(&triplets, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&triplets, e))?;

        let mut w = csv_writer(&vocab)?;
        w.write_record(["term_id", "term_repr"])
            .map_err(|e| csv_io(&vocab, e))?;
        for (i, term) in self.terms.iter().enumerate() {
            w.write_record([i.to_string().as_str(), term])
                .map_err(|e| csv_io(&vocab, e))?;
        }
        w.flush().map_err(|e| Error::io(&vocab, e))?;

        let mut w = csv_writer(&docs)?;
        w.write_record(["doc_id"]).map_err(|e| csv_io(&docs, e))?;
        for doc in &self.doc_ids {
            w.write_record([doc]).map_err(|e| csv_io(&docs, e))?;
        }
        w.flush().map_err(|e| Error::io(&docs, e))
    }

    pub fn read(dir: &Path, prefix: &str) -> Result<Self> {
        let [triplets, vocab, docs] = Self::file_paths(dir, prefix);

        let mut terms = Vec::new();
        for (n, rec) in read_csv(&vocab, &["term_id", "term_repr"])?.into_iter().enumerate() {
            let id: usize = parse_field(&vocab, &rec, 0)?;
            if id != n {
                return Err(row_error(&vocab, &rec, "term ids must be dense and ordered"));
            }
            terms.push(rec.1[1].clone());
        }

        let doc_ids: Vec<String> = read_csv(&docs, &["doc_id"])?
            .into_iter()
            .map(|(_, r)| r[0].clone())
            .collect();
        let index: HashMap<&str, usize> = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();

        let mut rows = vec![Vec::new(); doc_ids.len()];
        for rec in read_csv(&triplets, &["doc_id", "term_id", "count"])? {
            let doc = *index
                .get(rec.1[0].as_str())
                .ok_or_else(|| row_error(&triplets, &rec, "doc_id missing from docs sidecar"))?;
            let term: u32 = parse_field(&triplets, &rec, 1)?;
            let count: u64 = parse_field(&triplets, &rec, 2)?;
            if count == 0 {
                return Err(row_error(&triplets, &rec, "explicit zero count"));
            }
            rows[doc].push((term, count));
        }
        Self::from_rows(doc_ids, terms, rows)
    }
}

fn check_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(items.len());
    for item in items {
        if !seen.insert(item.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate {what} `{item}`")));
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_io(path: &Path, err: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(err.to_string()))
}

type NumberedRecord = (u64, Vec<String>);

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<NumberedRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let label = path.display().to_string();
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Format {
            file: label.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::Format {
            file: label,
            line: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::Format {
                file: label.clone(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = r.position().map(|p| p.line()).unwrap_or(0);
            Ok((line, r.iter().map(str::to_string).collect()))
        })
        .collect()
}

fn row_error(path: &Path, rec: &NumberedRecord, message: &str) -> Error {
    Error::Row {
        file: path.display().to_string(),
        line: rec.0,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, rec: &NumberedRecord, col: usize) -> Result<T> {
    rec.1[col]
        .trim()
        .parse()
        .map_err(|_| row_error(path, rec, &format!("cannot parse `{}`", rec.1[col])))
}
