//! Event-log and diagnosis ingestion.
//!
//! Inputs are RFC 4180 CSV files with a header row. Events become per-patient
//! action sequences; diagnosis rows become per-patient code bags, optionally
//! regrouped through a [`CodeMap`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delimiter between actor role and access reason in an [`ActionLabel`].
pub const LABEL_DELIMITER: char = '|';

/// One chart-access event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    pub patient_id: String,
    /// Integer index, or a timestamp converted to nanoseconds since the epoch.
    pub order_key: i64,
    pub actor_role: String,
    pub action_reason: String,
}

/// Events of a single patient in input row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientEvents {
    pub patient_id: String,
    pub events: Vec<AccessEvent>,
}

/// Parsed event log, grouped by patient in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    pub patients: Vec<PatientEvents>,
}

impl EventLog {
    pub fn event_count(&self) -> usize {
        self.patients.iter().map(|p| p.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }
}

/// Which event fields make up the sequence alphabet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    #[default]
    RoleAndReason,
    RoleOnly,
    ReasonOnly,
}

impl LabelRule {
    pub fn compose(self, actor_role: &str, action_reason: &str) -> ActionLabel {
        match self {
            LabelRule::RoleAndReason => {
                ActionLabel(format!("{actor_role}{LABEL_DELIMITER}{action_reason}"))
            }
            LabelRule::RoleOnly => ActionLabel(actor_role.to_string()),
            LabelRule::ReasonOnly => ActionLabel(action_reason.to_string()),
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "role_and_reason" | "both" => Ok(LabelRule::RoleAndReason),
            "role_only" | "role" => Ok(LabelRule::RoleOnly),
            "reason_only" | "reason" => Ok(LabelRule::ReasonOnly),
            other => Err(Error::InvalidArgument(format!("unknown label rule `{other}`"))),
        }
    }
}

/// A sequence symbol: the composite of an actor role and an access reason.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionLabel(pub String);

impl ActionLabel {
    pub fn new(actor_role: &str, action_reason: &str) -> Self {
        LabelRule::RoleAndReason.compose(actor_role, action_reason)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientSequence {
    pub patient_id: String,
    pub labels: Vec<ActionLabel>,
}

/// Aggregated occurrences of one code for one patient.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagnosisRecord {
    pub patient_id: String,
    pub code: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeGroup {
    pub group_code: String,
    pub description: String,
}

/// Source code to group code translation table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeMap {
    entries: BTreeMap<String, CodeGroup>,
}

impl CodeMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry, refusing to remap an existing source code to another group.
    pub fn insert(&mut self, source: &str, group: &str, description: &str) -> Result<()> {
        if let Some(existing) = self.entries.get(source) {
            if existing.group_code != group {
                return Err(Error::CodeMapConflict(vec![format!(
                    "{source} -> {} vs {group}",
                    existing.group_code
                )]));
            }
            return Ok(());
        }
        self.entries.insert(
            source.to_string(),
            CodeGroup {
                group_code: group.to_string(),
                description: description.to_string(),
            },
        );
        Ok(())
    }

    pub fn get(&self, source: &str) -> Option<&CodeGroup> {
        self.entries.get(source)
    }

    /// Description of a group code, taken from the first source entry mapping to it.
    pub fn group_description(&self, group: &str) -> Option<&str> {
        self.entries
            .values()
            .find(|g| g.group_code == group && !g.description.is_empty())
            .map(|g| g.description.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CodeGroup)> {
        self.entries.iter()
    }
}

/// Treatment of diagnosis codes absent from the code map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmappedPolicy {
    #[default]
    Passthrough,
    Drop,
}

impl std::str::FromStr for UnmappedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passthrough" => Ok(UnmappedPolicy::Passthrough),
            "drop" => Ok(UnmappedPolicy::Drop),
            other => Err(Error::InvalidArgument(format!(
                "unknown unmapped policy `{other}` (expected passthrough|drop)"
            ))),
        }
    }
}

impl fmt::Display for UnmappedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnmappedPolicy::Passthrough => "passthrough",
            UnmappedPolicy::Drop => "drop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedDiagnoses {
    pub records: Vec<DiagnosisRecord>,
    /// (patient, code) records whose code was not in the map.
    pub unmapped_records: usize,
    /// Occurrences carried by those records.
    pub unmapped_occurrences: u64,
    /// Occurrences removed under [`UnmappedPolicy::Drop`].
    pub dropped_occurrences: u64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader)
}

fn csv_error(file: &str, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Format {
        file: file.to_string(),
        line,
        message: err.to_string(),
    }
}

/// Resolves the positions of the required columns in the header row.
fn column_indices(headers: &csv::StringRecord, required: &[&str], file: &str) -> Result<Vec<usize>> {
    let mut missing = Vec::new();
    let mut idx = Vec::with_capacity(required.len());
    for name in required {
        match headers.iter().position(|h| h.trim() == *name) {
            Some(i) => idx.push(i),
            None => missing.push(*name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Format {
            file: file.to_string(),
            line: 1,
            message: format!("missing column(s): {}", missing.join(", ")),
        });
    }
    Ok(idx)
}

/// Parses an order key: a non-negative integer or an ISO-8601 timestamp.
pub fn parse_order_key(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return (v >= 0).then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return dt.timestamp_nanos_opt();
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return dt.and_utc().timestamp_nanos_opt();
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .and_then(|dt| dt.and_utc().timestamp_nanos_opt())
}

pub fn parse_event_log(path: &Path) -> Result<EventLog> {
    parse_event_log_reader(open(path)?, &file_label(path))
}

/// Header: `patient_id,order_key,actor_role,action_reason`.
pub fn parse_event_log_reader<R: Read>(reader: R, file: &str) -> Result<EventLog> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let cols = column_indices(
        &headers,
        &["patient_id", "order_key", "actor_role", "action_reason"],
        file,
    )?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut log = EventLog::default();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(file, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row {
            file: file.to_string(),
            line,
            message,
        };
        let patient_id = record[cols[0]].trim();
        let raw_key = &record[cols[1]];
        let actor_role = record[cols[2]].trim();
        let action_reason = record[cols[3]].trim();
        if patient_id.is_empty() {
            return Err(row_err("empty patient_id".into()));
        }
        if actor_role.is_empty() {
            return Err(row_err("empty actor_role".into()));
        }
        let order_key = parse_order_key(raw_key)
            .ok_or_else(|| row_err(format!("unparsable order_key `{raw_key}`")))?;

        let slot = match index.get(patient_id) {
            Some(&i) => i,
            None => {
                index.insert(patient_id.to_string(), log.patients.len());
                log.patients.push(PatientEvents {
                    patient_id: patient_id.to_string(),
                    events: Vec::new(),
                });
                log.patients.len() - 1
            }
        };
        log.patients[slot].events.push(AccessEvent {
            patient_id: patient_id.to_string(),
            order_key,
            actor_role: actor_role.to_string(),
            action_reason: action_reason.to_string(),
        });
    }
    Ok(log)
}

pub fn parse_diagnosis_records(path: &Path) -> Result<Vec<DiagnosisRecord>> {
    parse_diagnosis_reader(open(path)?, &file_label(path))
}

/// Header: `patient_id,code`; one row per assignment. Output sorted by (patient, code).
pub fn parse_diagnosis_reader<R: Read>(reader: R, file: &str) -> Result<Vec<DiagnosisRecord>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let cols = column_indices(&headers, &["patient_id", "code"], file)?;

    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(file, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let patient_id = record[cols[0]].trim();
        let code = record[cols[1]].trim();
        if patient_id.is_empty() || code.is_empty() {
            return Err(Error::Row {
                file: file.to_string(),
                line,
                message: if code.is_empty() {
                    "empty code".into()
                } else {
                    "empty patient_id".into()
                },
            });
        }
        *counts
            .entry((patient_id.to_string(), code.to_string()))
            .or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((patient_id, code), count)| DiagnosisRecord {
            patient_id,
            code,
            count,
        })
        .collect())
}

pub fn load_code_map(path: &Path) -> Result<CodeMap> {
    let mut raw = String::new();
    open(path)?
        .read_to_string(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    load_code_map_str(&raw, &file_label(path))
}

/// Header: `source_code,group_code,description`. An empty document is an empty map.
pub fn load_code_map_str(raw: &str, file: &str) -> Result<CodeMap> {
    let mut map = CodeMap::new();
    if raw.trim().is_empty() {
        return Ok(map);
    }
    let mut rdr = csv_reader(raw.as_bytes());
    let headers = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    let cols = column_indices(&headers, &["source_code", "group_code", "description"], file)?;

    let mut conflicts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let source = rec[cols[0]].trim();
        let group = rec[cols[1]].trim();
        if source.is_empty() || group.is_empty() {
            return Err(Error::Row {
                file: file.to_string(),
                line,
                message: "empty source_code or group_code".into(),
            });
        }
        if let Err(Error::CodeMapConflict(mut c)) = map.insert(source, group, rec[cols[2]].trim()) {
            for msg in c.iter_mut() {
                msg.push_str(&format!(" (line {line})"));
            }
            conflicts.extend(c);
        }
    }
    if conflicts.is_empty() {
        Ok(map)
    } else {
        Err(Error::CodeMapConflict(conflicts))
    }
}

/// Translates source codes to group codes, summing counts that land on the same group.
pub fn map_codes(records: &[DiagnosisRecord], map: &CodeMap, policy: UnmappedPolicy) -> MappedDiagnoses {
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut unmapped_records = 0;
    let mut unmapped_occurrences = 0;
    let mut dropped_occurrences = 0;
    for rec in records {
        let code = match map.get(&rec.code) {
            Some(group) => group.group_code.as_str(),
            None => {
                unmapped_records += 1;
                unmapped_occurrences += rec.count;
                match policy {
                    UnmappedPolicy::Passthrough => rec.code.as_str(),
                    UnmappedPolicy::Drop => {
                        dropped_occurrences += rec.count;
                        continue;
                    }
                }
            }
        };
        *counts.entry((rec.patient_id.as_str(), code)).or_insert(0) += rec.count;
    }
    MappedDiagnoses {
        records: counts
            .into_iter()
            .map(|((patient_id, code), count)| DiagnosisRecord {
                patient_id: patient_id.to_string(),
                code: code.to_string(),
                count,
            })
            .collect(),
        unmapped_records,
        unmapped_occurrences,
        dropped_occurrences,
    }
}

/// Orders each patient's events by `order_key` (ties keep input order) and
/// composes their labels. Output is sorted by patient id.
pub fn build_sequences(log: &EventLog, rule: LabelRule) -> Vec<PatientSequence> {
    let mut sequences: Vec<PatientSequence> = log
        .patients
        .iter()
        .map(|p| {
            let mut order: Vec<&AccessEvent> = p.events.iter().collect();
            order.sort_by_key(|e| e.order_key);
            PatientSequence {
                patient_id: p.patient_id.clone(),
                labels: order
                    .into_iter()
                    .map(|e| rule.compose(&e.actor_role, &e.action_reason))
                    .collect(),
            }
        })
        .collect();
    sequences.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    sequences
}
