//! File-based pipeline stages.
//!
//! Every stage reads its inputs from disk and writes its outputs to the run's
//! output directory; stages never hand data to each other in memory. Each
//! text artifact starts with a `#` provenance line carrying the tool
//! version, seed and a hash of the resolved configuration.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::load_wav;
use crate::classifier::{nested_select, ClassifierError, COST_GRID};
use crate::corpus::{
    filter_cohort, load_annotations, resolve_durations, ContextLabel, CorpusError, SchemaConfig,
    Utterance,
};
use crate::evaluation::{
    EvalError, EvaluationReport, PredictionRecord, PredictionSet, DEFAULT_REPLICATES,
};
use crate::fmt_sig6;
use crate::partition::{make_plan, FoldPlan, PartitionError, Role, Sample, FOLD_COUNT};
use crate::pitch::{extract_features, FeatureVector, PitchError, FEATURE_COUNT, FEATURE_NAMES};
use crate::spectral::export_spectrogram;
use crate::synth::{synth_corpus, CorpusSpec, SynthError};
use crate::tensor::write_tensor;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Fraction of per-file extraction failures tolerated before a stage fails.
pub const MAX_FAILURE_RATE: f64 = 0.01;

pub const FEATURES_FILE: &str = "features.csv";
pub const SKIPPED_FILE: &str = "extract_skipped.csv";
pub const FILTER_REPORT_FILE: &str = "filter_report.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const TABLE1_FILE: &str = "table1.csv";
pub const SPECTROGRAM_DIR: &str = "spectrograms";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{failed} of {total} files failed, above the {limit}% tolerance")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: f64,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Run configuration, read from TOML. Relative paths are resolved against the
/// directory containing the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub audio_dir: PathBuf,
    pub annotations: PathBuf,
    pub schema: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

impl RunConfig {
    pub fn new(
        audio_dir: impl Into<PathBuf>,
        annotations: impl Into<PathBuf>,
        schema: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            audio_dir: audio_dir.into(),
            annotations: annotations.into(),
            schema: schema.into(),
            out_dir: out_dir.into(),
            seed: 0,
            grid: None,
            replicates: DEFAULT_REPLICATES,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.audio_dir,
            &mut cfg.annotations,
            &mut cfg.schema,
            &mut cfg.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(grid) = &self.grid {
            if grid.is_empty() || grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(PipelineError::Config(
                    "grid must hold positive costs".into(),
                ));
            }
        }
        if self.replicates == 0 {
            return Err(PipelineError::Config("replicates must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| COST_GRID.to_vec())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> String {
        format!(
            "# usvctx {TOOL_VERSION} seed={} config={}",
            self.seed,
            self.hash()
        )
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.out_dir).map_err(io(&self.out_dir))
    }
}

/// Writes `body` to `path` behind the provenance line.
fn write_artifact(
    cfg: &RunConfig,
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), PipelineError> {
    let mut out = BufWriter::new(File::create(path).map_err(io(path))?);
    writeln!(out, "{}", cfg.provenance()).map_err(io(path))?;
    body(&mut out).map_err(io(path))?;
    out.flush().map_err(io(path))
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub emitter_id: String,
    pub context: ContextLabel,
    pub duration_s: f64,
    pub features: FeatureVector,
}

pub fn feature_header() -> String {
    let mut cols = vec!["utterance_id", "emitter_id", "context", "duration_s"];
    cols.extend(FEATURE_NAMES);
    cols.join(",")
}

pub fn write_feature_rows(rows: &[FeatureRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", feature_header())?;
    for r in rows {
        let values: Vec<String> = r.features.to_array().iter().map(|&v| fmt_sig6(v)).collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.id,
            r.emitter_id,
            r.context,
            fmt_sig6(r.duration_s),
            values.join(",")
        )?;
    }
    Ok(())
}

pub fn read_feature_rows(path: &Path) -> Result<Vec<FeatureRow>, PipelineError> {
    let file = File::open(path).map_err(io(path))?;
    if file.metadata().map_err(io(path))?.len() == 0 {
        return Ok(Vec::new());
    }
    let fmt_err = |reason: String| PipelineError::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| fmt_err(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().collect::<Vec<_>>().join(",") != feature_header() {
        return Err(fmt_err("unexpected feature header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| fmt_err(format!("row {}: {e}", i + 1)))?;
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| fmt_err(format!("row {}: bad number {:?}", i + 1, &rec[k])))
        };
        let mut values = [0.0; FEATURE_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(4 + k)?;
        }
        rows.push(FeatureRow {
            id: rec[0].to_string(),
            emitter_id: rec[1].to_string(),
            context: rec[2]
                .parse()
                .map_err(|e: CorpusError| fmt_err(e.to_string()))?,
            duration_s: num(3)?,
            features: FeatureVector::from_array(values),
        });
    }
    Ok(rows)
}

/// Loads annotations, resolves missing durations and applies the cohort
/// filter. The filter report is written to the output directory.
pub fn build_cohort(cfg: &RunConfig) -> Result<Vec<Utterance>, PipelineError> {
    let schema = SchemaConfig::load(&cfg.schema)?;
    let mut records = load_annotations(&cfg.annotations, &schema)?;
    resolve_durations(&mut records, &cfg.audio_dir);
    let (mut cohort, report) = filter_cohort(&records, &schema);
    cohort.sort_by(|a, b| a.id.cmp(&b.id));
    cfg.ensure_out_dir()?;
    write_artifact(cfg, &cfg.out(FILTER_REPORT_FILE), |out| {
        report.write_csv(out)
    })?;
    log::info!(
        "cohort: {} of {} annotated utterances retained",
        report.retained,
        report.input
    );
    Ok(cohort)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractSummary {
    pub cohort: usize,
    pub extracted: usize,
    pub unvoiced: usize,
    pub failed: usize,
}

enum Outcome {
    Row(FeatureRow),
    Unvoiced,
    Failed(String),
}

/// Pitch features for every cohort utterance. All-unvoiced utterances and
/// unreadable files go to the skip report; the stage fails if more than 1%
/// of files could not be processed (outputs are still written).
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary, PipelineError> {
    let cohort = build_cohort(cfg)?;
    let outcomes: Vec<Outcome> = cohort
        .par_iter()
        .map(|u| {
            let clip = match load_wav(cfg.audio_dir.join(&u.audio_path)) {
                Ok(c) => c,
                Err(e) => return Outcome::Failed(e.to_string()),
            };
            match extract_features(&clip) {
                Ok(stats) => Outcome::Row(FeatureRow {
                    id: u.id.clone(),
                    emitter_id: u.emitter_id.clone(),
                    context: u.context,
                    duration_s: u.duration_s,
                    features: stats.features,
                }),
                Err(PitchError::EmptyVoicedSet) => Outcome::Unvoiced,
                Err(e) => Outcome::Failed(e.to_string()),
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut failed = 0;
    let mut unvoiced = 0;
    for (u, o) in cohort.iter().zip(outcomes) {
        match o {
            Outcome::Row(r) => rows.push(r),
            Outcome::Unvoiced => {
                unvoiced += 1;
                skipped.push((u.id.clone(), "no_voiced_frames".to_string()));
            }
            Outcome::Failed(reason) => {
                log::error!("{}: {reason}", u.id);
                failed += 1;
                skipped.push((u.id.clone(), format!("error: {reason}")));
            }
        }
    }
    write_artifact(cfg, &cfg.out(FEATURES_FILE), |out| {
        write_feature_rows(&rows, out)
    })?;
    write_artifact(cfg, &cfg.out(SKIPPED_FILE), |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["utterance_id", "reason"])?;
        for (id, reason) in &skipped {
            w.write_record([id, reason])?;
        }
        w.flush()
    })?;
    let summary = ExtractSummary {
        cohort: cohort.len(),
        extracted: rows.len(),
        unvoiced,
        failed,
    };
    if failed as f64 > MAX_FAILURE_RATE * cohort.len() as f64 {
        return Err(PipelineError::TooManyFailures {
            failed,
            total: cohort.len(),
            limit: MAX_FAILURE_RATE * 100.0,
        });
    }
    Ok(summary)
}

/// Builds the fold plan over the utterances present in the feature table.
pub fn cmd_partition(cfg: &RunConfig) -> Result<FoldPlan, PipelineError> {
    let rows = read_feature_rows(&cfg.out(FEATURES_FILE))?;
    let samples: Vec<Sample> = rows
        .iter()
        .map(|r| Sample {
            id: r.id.clone(),
            emitter_id: r.emitter_id.clone(),
            context: r.context,
        })
        .collect();
    let plan = make_plan(&samples, cfg.seed)?;
    cfg.ensure_out_dir()?;
    write_artifact(cfg, &cfg.out(FOLDS_FILE), |out| plan.write_csv(out))?;
    Ok(plan)
}

pub fn read_fold_plan(cfg: &RunConfig) -> Result<FoldPlan, PipelineError> {
    let path = cfg.out(FOLDS_FILE);
    let file = File::open(&path).map_err(io(&path))?;
    Ok(FoldPlan::read_csv(BufReader::new(file), cfg.seed)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainEvalSummary {
    pub report: EvaluationReport,
    pub chosen_costs: Vec<f64>,
}

/// Nested model selection per fold, pooled test predictions and the
/// evaluation report.
pub fn cmd_train_eval(cfg: &RunConfig) -> Result<TrainEvalSummary, PipelineError> {
    let rows = read_feature_rows(&cfg.out(FEATURES_FILE))?;
    let plan = read_fold_plan(cfg)?;
    let by_id: HashMap<&str, &FeatureRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    if let Some((missing, _)) = plan.iter().find(|(id, _)| !by_id.contains_key(id)) {
        return Err(PipelineError::Format {
            path: cfg.out(FOLDS_FILE).display().to_string(),
            reason: format!("utterance {missing:?} has no feature row"),
        });
    }
    let grid = cfg.grid();
    cfg.ensure_out_dir()?;

    let mut records = Vec::new();
    let mut chosen_costs = Vec::new();
    let mut selection_rows = Vec::new();
    for fold in 0..FOLD_COUNT {
        let mut dev_x = Vec::new();
        let mut dev_y = Vec::new();
        let mut is_val = Vec::new();
        let mut test = Vec::new();
        for (id, roles) in plan.iter() {
            let row = by_id[id];
            match roles[fold] {
                Role::Test => test.push(row),
                role => {
                    dev_x.push(row.features.to_array().to_vec());
                    dev_y.push(row.context.index());
                    is_val.push(role == Role::Validation);
                }
            }
        }
        if dev_x.is_empty() {
            return Err(PipelineError::Classifier(ClassifierError::EmptyTrainingSet));
        }
        let selection = nested_select(
            &dev_x,
            &dev_y,
            &is_val,
            ContextLabel::COUNT,
            &grid,
            cfg.seed,
        )?;
        log::info!(
            "fold {fold}: chose C = {} from {:?}",
            selection.model.cost,
            selection.validation_uar
        );
        for (c, score) in &selection.validation_uar {
            selection_rows.push((fold, *c, *score, *c == selection.model.cost));
        }
        chosen_costs.push(selection.model.cost);
        let model_path = cfg.out(&format!("model_fold{fold}.txt"));
        write_artifact(cfg, &model_path, |out| selection.model.write_text(out))?;
        for row in test {
            let predicted = selection.model.predict(&row.features.to_array()).class;
            records.push(PredictionRecord {
                id: row.id.clone(),
                truth: row.context,
                predicted: ContextLabel::from_index(predicted).expect("11-class model"),
                fold,
            });
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let preds = PredictionSet::new(records)?;
    let report = EvaluationReport::compute(&preds, cfg.replicates, cfg.seed)?;

    write_artifact(cfg, &cfg.out(PREDICTIONS_FILE), |out| preds.write_csv(out))?;
    write_artifact(cfg, &cfg.out(CONFUSION_FILE), |out| {
        report.write_confusion_csv(out)
    })?;
    write_artifact(cfg, &cfg.out(SELECTION_FILE), |out| {
        writeln!(out, "fold,cost,validation_uar,chosen")?;
        for (fold, c, score, chosen) in &selection_rows {
            let score = score.map(|s| format!("{s:.6}")).unwrap_or_default();
            writeln!(out, "{fold},{c},{score},{}", u8::from(*chosen))?;
        }
        Ok(())
    })?;
    let report_path = cfg.out(REPORT_FILE);
    let mut json = serde_json::to_value(&report).expect("report serialises");
    json["provenance"] = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
    });
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&json).expect("json") + "\n",
    )
    .map_err(io(&report_path))?;
    Ok(TrainEvalSummary {
        report,
        chosen_costs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub written: usize,
    pub failed: Vec<(String, String)>,
}

/// One 3 s spectrogram tensor per cohort utterance, plus a manifest.
pub fn cmd_export_spectrograms(cfg: &RunConfig) -> Result<ExportSummary, PipelineError> {
    let cohort = build_cohort(cfg)?;
    let dir = cfg.out(SPECTROGRAM_DIR);
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let results: Vec<Result<(usize, usize), String>> = cohort
        .par_iter()
        .map(|u| {
            let clip = load_wav(cfg.audio_dir.join(&u.audio_path)).map_err(|e| e.to_string())?;
            let spec = export_spectrogram(&clip).map_err(|e| e.to_string())?;
            write_tensor(&spec, dir.join(format!("{}.usvt", u.id))).map_err(|e| e.to_string())?;
            Ok((spec.frames(), spec.bins()))
        })
        .collect();
    let mut failed = Vec::new();
    let mut manifest = Vec::new();
    for (u, r) in cohort.iter().zip(results) {
        match r {
            Ok((frames, bins)) => manifest.push(format!(
                "{},{}.usvt,{frames},{bins},{}",
                u.id, u.id, u.context
            )),
            Err(e) => {
                log::error!("{}: {e}", u.id);
                failed.push((u.id.clone(), e));
            }
        }
    }
    write_artifact(cfg, &dir.join("manifest.csv"), |out| {
        writeln!(out, "utterance_id,file,frames,bins,context")?;
        for line in &manifest {
            writeln!(out, "{line}")?;
        }
        Ok(())
    })?;
    if failed.len() as f64 > MAX_FAILURE_RATE * cohort.len() as f64 {
        return Err(PipelineError::TooManyFailures {
            failed: failed.len(),
            total: cohort.len(),
            limit: MAX_FAILURE_RATE * 100.0,
        });
    }
    Ok(ExportSummary {
        written: manifest.len(),
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub context: ContextLabel,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub slope: f64,
}

/// Per-context averages of the voiced-only statistics.
pub fn table1(rows: &[FeatureRow]) -> Vec<Table1Row> {
    let mut acc: BTreeMap<ContextLabel, (usize, [f64; 5])> = BTreeMap::new();
    for r in rows {
        let f = &r.features;
        let e = acc.entry(r.context).or_default();
        e.0 += 1;
        for (s, v) in e.1.iter_mut().zip([
            f.mean_voiced,
            f.std_voiced,
            f.max_voiced,
            f.min_voiced,
            f.slope_voiced,
        ]) {
            *s += v;
        }
    }
    acc.into_iter()
        .map(|(context, (n, s))| {
            let m = |k: usize| s[k] / n as f64;
            Table1Row {
                context,
                n,
                mean: m(0),
                std: m(1),
                max: m(2),
                min: m(3),
                slope: m(4),
            }
        })
        .collect()
}

pub fn cmd_table1(cfg: &RunConfig) -> Result<Vec<Table1Row>, PipelineError> {
    let rows = read_feature_rows(&cfg.out(FEATURES_FILE))?;
    let table = table1(&rows);
    cfg.ensure_out_dir()?;
    write_artifact(cfg, &cfg.out(TABLE1_FILE), |out| {
        writeln!(
            out,
            "context,abbreviation,n,mean_hz,std_hz,max_hz,min_hz,slope_hz_per_s"
        )?;
        for r in &table {
            writeln!(
                out,
                "{},{},{},{:.0},{:.0},{:.0},{:.0},{:.0}",
                r.context,
                r.context.abbreviation(),
                r.n,
                r.mean,
                r.std,
                r.max,
                r.min,
                r.slope
            )?;
        }
        Ok(())
    })?;
    Ok(table)
}

/// Generates a synthetic corpus under `out_dir` and a `config.toml` pointing
/// at it (pipeline outputs go to `out_dir/run`).
pub fn cmd_synth(spec: &CorpusSpec, out_dir: &Path) -> Result<RunConfig, PipelineError> {
    let corpus = synth_corpus(spec, out_dir)?;
    let mut cfg = RunConfig::new("audio", "annotations.csv", "schema.toml", "run");
    cfg.seed = spec.seed;
    let path = out_dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(io(&path))?;
    log::info!("wrote {} synthetic utterances", corpus.cohort.len());
    RunConfig::load(&path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, ctx: ContextLabel, mean: f64) -> FeatureRow {
        let mut v = [0.0; FEATURE_COUNT];
        v[5] = mean;
        v[7] = mean + 100.0;
        v[8] = mean - 100.0;
        FeatureRow {
            id: id.into(),
            emitter_id: "b".into(),
            context: ctx,
            duration_s: 0.5,
            features: FeatureVector::from_array(v),
        }
    }

    #[test]
    fn feature_header_is_exact() {
        assert_eq!(
            feature_header(),
            "utterance_id,emitter_id,context,duration_s,f0_mean_all,f0_std_all,f0_max_all,f0_min_all,f0_slope_all,f0_mean_voiced,f0_std_voiced,f0_max_voiced,f0_min_voiced,f0_slope_voiced"
        );
    }

    #[test]
    fn feature_rows_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let rows = vec![
            row("a", ContextLabel::Biting, 11_238.0),
            row("b", ContextLabel::Kissing, 9_999.5),
        ];
        let mut buf = b"# provenance\n".to_vec();
        write_feature_rows(&rows, &mut buf).unwrap();
        std::fs::write(&p, buf).unwrap();
        assert_eq!(read_feature_rows(&p).unwrap(), rows);
    }

    #[test]
    fn empty_feature_file_gives_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "").unwrap();
        assert!(read_feature_rows(&p).unwrap().is_empty());
        assert!(table1(&[]).is_empty());
    }

    #[test]
    fn table1_averages_per_context() {
        let rows = vec![
            row("a", ContextLabel::Isolation, 12_000.0),
            row("b", ContextLabel::Isolation, 13_000.0),
            row("c", ContextLabel::Separation, 10_000.0),
        ];
        let t = table1(&rows);
        assert_eq!(t.len(), 2);
        assert_eq!(
            (t[0].context, t[0].n, t[0].mean),
            (ContextLabel::Isolation, 2, 12_500.0)
        );
        assert_eq!(t[0].max, 12_600.0);
        assert_eq!(t[1].min, 9_900.0);
    }

    #[test]
    fn config_paths_resolve_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("config.toml");
        std::fs::write(
            &p,
            "audio_dir = \"audio\"\nannotations = \"a.csv\"\nschema = \"/abs/s.toml\"\nout_dir = \"out\"\nseed = 4\ngrid = [0.1, 1.0]\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.audio_dir, dir.path().join("audio"));
        assert_eq!(cfg.schema, PathBuf::from("/abs/s.toml"));
        assert_eq!(cfg.grid(), vec![0.1, 1.0]);
        assert_eq!(cfg.replicates, 1000);
        assert_eq!(cfg.hash().len(), 16);
        assert!(cfg.provenance().starts_with("# usvctx "));
    }

    #[test]
    fn invalid_grid_rejected() {
        let mut cfg = RunConfig::new("a", "b", "c", "d");
        cfg.grid = Some(vec![0.1, -1.0]);
        assert!(cfg.validate().is_err());
    }
}
