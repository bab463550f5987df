//! Annotation ingestion and cohort filtering.
//!
//! Column names, the raw-code → context mapping and the placeholder codes
//! that mark an unidentified emitter all come from a [`SchemaConfig`] file,
//! so nothing about the released table layout is hard-coded here.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::wav_duration_s;

/// Utterances longer than this are treated as annotation errors.
pub const MAX_DURATION_S: f64 = 3.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema config: {0}")]
    Schema(String),
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("unknown context label {0:?}")]
    UnknownLabel(String),
}

/// The eleven interaction contexts, in alphabetical order. The discriminant
/// doubles as the row/column index of confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextLabel {
    Biting,
    Feeding,
    Fighting,
    General,
    Grooming,
    Isolation,
    Kissing,
    Protesting,
    Separation,
    Sleeping,
    Threatening,
}

impl ContextLabel {
    pub const COUNT: usize = 11;

    pub const ALL: [ContextLabel; Self::COUNT] = [
        Self::Biting,
        Self::Feeding,
        Self::Fighting,
        Self::General,
        Self::Grooming,
        Self::Isolation,
        Self::Kissing,
        Self::Protesting,
        Self::Separation,
        Self::Sleeping,
        Self::Threatening,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Biting => "biting",
            Self::Feeding => "feeding",
            Self::Fighting => "fighting",
            Self::General => "general",
            Self::Grooming => "grooming",
            Self::Isolation => "isolation",
            Self::Kissing => "kissing",
            Self::Protesting => "protesting",
            Self::Separation => "separation",
            Self::Sleeping => "sleeping",
            Self::Threatening => "threatening",
        }
    }

    /// Two-letter code used in table and figure legends.
    pub fn abbreviation(self) -> &'static str {
        match self {
            Self::Biting => "Bi",
            Self::Feeding => "Fe",
            Self::Fighting => "Fi",
            Self::General => "Ge",
            Self::Grooming => "Gr",
            Self::Isolation => "Is",
            Self::Kissing => "Ki",
            Self::Protesting => "Pr",
            Self::Separation => "Se",
            Self::Sleeping => "Sl",
            Self::Threatening => "Th",
        }
    }
}

impl fmt::Display for ContextLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == lower)
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

/// Context as annotated, before exclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawContext {
    Known(ContextLabel),
    Landing,
    Unknown,
}

impl FromStr for RawContext {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "landing" => Ok(Self::Landing),
            "unknown" => Ok(Self::Unknown),
            other => other.parse().map(Self::Known),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub id: String,
    pub emitter: String,
    pub context: String,
    pub file: String,
    #[serde(default)]
    pub duration: Option<String>,
    #[serde(default)]
    pub start: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
}

/// Describes an annotation table. Loaded from TOML:
///
/// ```toml
/// delimiter = ","
/// emitter_placeholders = ["0", "?"]
/// time_unit_s = 1.0
///
/// [columns]
/// id = "id"
/// emitter = "emitter"
/// context = "context"
/// file = "file"
/// duration = "duration_s"
///
/// [context_codes]
/// "11" = "fighting"
/// "12" = "landing"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub emitter_placeholders: Vec<String>,
    /// Seconds per unit of the duration/start/end columns.
    #[serde(default = "default_time_unit")]
    pub time_unit_s: f64,
    pub columns: ColumnMap,
    pub context_codes: BTreeMap<String, String>,
}

fn default_delimiter() -> String {
    ",".into()
}

fn default_time_unit() -> f64 {
    1.0
}

impl SchemaConfig {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let schema: Self = toml::from_str(text).map_err(|e| CorpusError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serialises")
    }

    fn validate(&self) -> Result<(), CorpusError> {
        self.delimiter_byte()?;
        if !(self.time_unit_s.is_finite() && self.time_unit_s > 0.0) {
            return Err(CorpusError::Schema("time_unit_s must be positive".into()));
        }
        if self.columns.start.is_some() != self.columns.end.is_some() {
            return Err(CorpusError::Schema(
                "start and end columns must be given together".into(),
            ));
        }
        for (code, label) in &self.context_codes {
            label
                .parse::<RawContext>()
                .map_err(|_| CorpusError::Schema(format!("code {code:?} maps to {label:?}")))?;
        }
        Ok(())
    }

    pub fn delimiter_byte(&self) -> Result<u8, CorpusError> {
        match self.delimiter.as_str() {
            "\t" | "tab" | "\\t" => Ok(b'\t'),
            s if s.len() == 1 => Ok(s.as_bytes()[0]),
            s => Err(CorpusError::Schema(format!("unsupported delimiter {s:?}"))),
        }
    }

    pub fn map_context(&self, code: &str) -> RawContext {
        self.context_codes
            .get(code.trim())
            .and_then(|l| l.parse().ok())
            .unwrap_or(RawContext::Unknown)
    }

    pub fn is_placeholder_emitter(&self, emitter: &str) -> bool {
        let e = emitter.trim();
        e.is_empty() || self.emitter_placeholders.iter().any(|p| p.trim() == e)
    }
}

/// One annotation row before exclusions.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based data row number in the source file.
    pub row: usize,
    pub id: String,
    pub audio_path: PathBuf,
    pub emitter_id: String,
    pub context: RawContext,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: PathBuf,
    pub emitter_id: String,
    pub context: ContextLabel,
    pub duration_s: f64,
}

impl From<&Utterance> for RawRecord {
    fn from(u: &Utterance) -> Self {
        RawRecord {
            row: 0,
            id: u.id.clone(),
            audio_path: u.audio_path.clone(),
            emitter_id: u.emitter_id.clone(),
            context: RawContext::Known(u.context),
            duration_s: Some(u.duration_s),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CorpusError::SchemaMismatch(format!("required column {name:?} is absent")))
}

fn parse_time(row: usize, field: &str, value: &str, unit: f64) -> Result<f64, CorpusError> {
    value
        .trim()
        .parse::<f64>()
        .map(|v| v * unit)
        .map_err(|_| CorpusError::Parse {
            row,
            reason: format!("{field} {value:?} is not a number"),
        })
}

pub fn load_annotations(
    path: impl AsRef<Path>,
    schema: &SchemaConfig,
) -> Result<Vec<RawRecord>, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_annotations(file, schema)
}

pub fn read_annotations(
    input: impl std::io::Read,
    schema: &SchemaConfig,
) -> Result<Vec<RawRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::SchemaMismatch(format!("unreadable header: {e}")))?
        .clone();
    let cols = &schema.columns;
    let id_col = column_index(&headers, &cols.id)?;
    let emitter_col = column_index(&headers, &cols.emitter)?;
    let context_col = column_index(&headers, &cols.context)?;
    let file_col = column_index(&headers, &cols.file)?;
    let duration_col = cols
        .duration
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let span_cols = match (cols.start.as_deref(), cols.end.as_deref()) {
        (Some(s), Some(e)) => Some((column_index(&headers, s)?, column_index(&headers, e)?)),
        _ => None,
    };

    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| CorpusError::Parse {
            row,
            reason: e.to_string(),
        })?;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let id = field(id_col).to_string();
        if id.is_empty() {
            return Err(CorpusError::Parse {
                row,
                reason: "empty id".into(),
            });
        }
        let duration_s = match (duration_col, span_cols) {
            (Some(c), _) if !field(c).is_empty() => {
                Some(parse_time(row, "duration", field(c), schema.time_unit_s)?)
            }
            (_, Some((s, e))) if !field(s).is_empty() && !field(e).is_empty() => {
                let start = parse_time(row, "start", field(s), schema.time_unit_s)?;
                let end = parse_time(row, "end", field(e), schema.time_unit_s)?;
                Some(end - start)
            }
            _ => None,
        };
        records.push(RawRecord {
            row,
            id,
            audio_path: PathBuf::from(field(file_col)),
            emitter_id: field(emitter_col).to_string(),
            context: schema.map_context(field(context_col)),
            duration_s,
        });
    }
    Ok(records)
}

/// Fills missing durations from WAV headers under `audio_dir`. Returns the
/// number of records whose header could not be read; those keep `None`.
pub fn resolve_durations(records: &mut [RawRecord], audio_dir: &Path) -> usize {
    let mut failures = 0;
    for r in records.iter_mut().filter(|r| r.duration_s.is_none()) {
        match wav_duration_s(audio_dir.join(&r.audio_path)) {
            Ok(d) => r.duration_s = Some(d),
            Err(e) => {
                log::warn!("{}: cannot determine duration: {e}", r.id);
                failures += 1;
            }
        }
    }
    failures
}

/// Number of records removed by each exclusion rule. A record is counted
/// under the first rule it violates, in field order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub input: usize,
    pub retained: usize,
    pub unknown_context: usize,
    pub landing: usize,
    pub unidentified_emitter: usize,
    pub too_long: usize,
    pub invalid_duration: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.unknown_context
            + self.landing
            + self.unidentified_emitter
            + self.too_long
            + self.invalid_duration
    }

    pub fn rows(&self) -> [(&'static str, usize); 7] {
        [
            ("input", self.input),
            ("unknown_context", self.unknown_context),
            ("landing", self.landing),
            ("unidentified_emitter", self.unidentified_emitter),
            ("longer_than_3s", self.too_long),
            ("missing_or_nonpositive_duration", self.invalid_duration),
            ("retained", self.retained),
        ]
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "rule,count")?;
        for (rule, count) in self.rows() {
            writeln!(out, "{rule},{count}")?;
        }
        Ok(())
    }
}

/// Drops unknown and landing contexts, unidentified emitters, and utterances
/// longer than 3 s (exactly 3 s is kept). Records whose duration could not be
/// established, or is not positive, are dropped as well.
pub fn filter_cohort(
    records: &[RawRecord],
    schema: &SchemaConfig,
) -> (Vec<Utterance>, FilterReport) {
    let mut report = FilterReport {
        input: records.len(),
        ..Default::default()
    };
    let mut cohort = Vec::with_capacity(records.len());
    for r in records {
        let label = match r.context {
            RawContext::Unknown => {
                report.unknown_context += 1;
                continue;
            }
            RawContext::Landing => {
                report.landing += 1;
                continue;
            }
            RawContext::Known(l) => l,
        };
        if schema.is_placeholder_emitter(&r.emitter_id) {
            report.unidentified_emitter += 1;
            continue;
        }
        match r.duration_s {
            Some(d) if d > MAX_DURATION_S => {
                report.too_long += 1;
                continue;
            }
            Some(d) if d > 0.0 => cohort.push(Utterance {
                id: r.id.clone(),
                audio_path: r.audio_path.clone(),
                emitter_id: r.emitter_id.trim().to_string(),
                context: label,
                duration_s: d,
            }),
            _ => {
                report.invalid_duration += 1;
                continue;
            }
        }
    }
    report.retained = cohort.len();
    (cohort, report)
}
