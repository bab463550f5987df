use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use usvctx_core::corpus::ContextLabel;
use usvctx_core::evaluation::{self, PredictionSet};
use usvctx_core::partition::{self, Sample, FOLD_COUNT};
use usvctx_core::pipeline::{self, RunConfig};
use usvctx_core::pitch::{self, FEATURE_NAMES};
use usvctx_core::synth::{self, CorpusSpec, SynthSpec};
use usvctx_core::{audio, classifier, spectral, tensor};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn labels(names: &[String]) -> PyResult<Vec<ContextLabel>> {
    names.iter().map(|n| n.parse().map_err(value_err)).collect()
}

fn prediction_set(truth: &[String], predicted: &[String]) -> PyResult<PredictionSet> {
    if truth.len() != predicted.len() {
        return Err(PyValueError::new_err(
            "truth and predicted differ in length",
        ));
    }
    if truth.is_empty() {
        return Err(value_err(evaluation::EvalError::EmptyPredictions));
    }
    Ok(PredictionSet::from_labels(
        &labels(truth)?,
        &labels(predicted)?,
    ))
}

/// Mono audio at a known sample rate.
#[pyclass(frozen)]
struct AudioClip {
    inner: audio::AudioClip,
}

#[pymethods]
impl AudioClip {
    #[new]
    #[pyo3(signature = (samples, sample_rate, source_id = "python"))]
    fn new(samples: Vec<f32>, sample_rate: u32, source_id: &str) -> PyResult<Self> {
        let inner = audio::AudioClip::new(samples, sample_rate, source_id).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn samples(&self) -> Vec<f32> {
        self.inner.samples().to_vec()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    #[getter]
    fn source_id(&self) -> &str {
        self.inner.source_id()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "AudioClip({:?}, {} samples at {} Hz)",
            self.inner.source_id(),
            self.inner.len(),
            self.inner.sample_rate()
        )
    }
}

/// One-vs-one linear SVM over the 11 contexts.
#[pyclass(frozen)]
struct OvoModel {
    inner: classifier::OvoModel,
}

#[pymethods]
impl OvoModel {
    #[staticmethod]
    #[pyo3(signature = (x, labels, cost = 1.0, seed = 0))]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        labels: Vec<String>,
        cost: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let y: Vec<usize> = self::labels(&labels)?.iter().map(|l| l.index()).collect();
        if y.len() != x.len() {
            return Err(PyValueError::new_err("x and labels differ in length"));
        }
        let inner = py
            .detach(|| classifier::OvoModel::fit(&x, &y, ContextLabel::COUNT, cost, seed))
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner =
            classifier::OvoModel::read_text(std::io::BufReader::new(file)).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner
            .write_text(std::io::BufWriter::new(file))
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }

    #[getter]
    fn n_machines(&self) -> usize {
        self.inner.machines.len()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<&'static str> {
        let dim = self.inner.standardiser.dim();
        if x.len() != dim {
            return Err(value_err(classifier::ClassifierError::DimensionMismatch {
                expected: dim,
                actual: x.len(),
            }));
        }
        let class = self.inner.predict(&x).class;
        Ok(ContextLabel::from_index(class)
            .expect("11-class model")
            .name())
    }

    fn predict_many(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<&'static str>> {
        x.into_iter().map(|row| self.predict(row)).collect()
    }
}

#[pyfunction]
fn load_wav(path: PathBuf) -> PyResult<AudioClip> {
    let inner = audio::load_wav(path).map_err(value_err)?;
    Ok(AudioClip { inner })
}

/// `(f0_hz, voiced, frame_times_s)` of the gated pitch contour.
#[pyfunction]
fn extract_f0(py: Python<'_>, clip: &AudioClip) -> PyResult<(Vec<f64>, Vec<bool>, Vec<f64>)> {
    let c = py
        .detach(|| pitch::extract_f0(&clip.inner))
        .map_err(value_err)?;
    Ok((c.f0_hz, c.voiced, c.frame_times_s))
}

/// The ten contour statistics keyed by feature column name.
#[pyfunction]
fn extract_features<'py>(py: Python<'py>, clip: &AudioClip) -> PyResult<Bound<'py, PyDict>> {
    let stats = py
        .detach(|| pitch::extract_features(&clip.inner))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    for (name, v) in FEATURE_NAMES.iter().zip(stats.features.to_array()) {
        out.set_item(name, v)?;
    }
    Ok(out)
}

/// Magnitude STFT as a list of frames.
#[pyfunction]
fn stft(py: Python<'_>, clip: &AudioClip, window_s: f64, hop_s: f64) -> PyResult<Vec<Vec<f32>>> {
    let s = py
        .detach(|| spectral::stft(&clip.inner, window_s, hop_s))
        .map_err(value_err)?;
    Ok((0..s.frames()).map(|t| s.frame(t).to_vec()).collect())
}

/// Writes the fixed-shape export tensor for `clip` and returns its shape.
#[pyfunction]
fn export_spectrogram(py: Python<'_>, clip: &AudioClip, path: PathBuf) -> PyResult<(usize, usize)> {
    py.detach(|| {
        let s = spectral::export_spectrogram(&clip.inner).map_err(value_err)?;
        tensor::write_tensor(&s, &path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok((s.frames(), s.bins()))
    })
}

/// `(dims, data)` of a tensor file.
#[pyfunction]
fn read_tensor(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let t = tensor::read_tensor(path).map_err(value_err)?;
    Ok((t.dims, t.data))
}

#[pyfunction]
#[pyo3(signature = (f0, duration_s, amplitude = 0.5, sample_rate = 250_000, slope = 0.0, f0_std = 0.0, seed = 0))]
fn synth_tone(
    f0: f64,
    duration_s: f64,
    amplitude: f64,
    sample_rate: u32,
    slope: f64,
    f0_std: f64,
    seed: u64,
) -> PyResult<AudioClip> {
    let spec = SynthSpec {
        f0_slope: slope,
        f0_std,
        seed,
        ..SynthSpec::tone(f0, duration_s, amplitude)
    };
    let inner = synth::synth_utterance(&spec, sample_rate).map_err(value_err)?;
    Ok(AudioClip { inner })
}

/// Writes the synthetic desk-scale corpus and returns its config path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 0, per_class = None, emitters = None))]
fn synth_corpus(
    py: Python<'_>,
    out_dir: PathBuf,
    seed: u64,
    per_class: Option<usize>,
    emitters: Option<usize>,
) -> PyResult<PathBuf> {
    let mut spec = CorpusSpec::desk_scale(seed);
    if let Some(n) = per_class {
        spec.per_class_count = n;
    }
    if let Some(n) = emitters {
        spec.n_emitters = n;
    }
    py.detach(|| pipeline::cmd_synth(&spec, &out_dir))
        .map_err(value_err)?;
    Ok(out_dir.join("config.toml"))
}

/// Runs one pipeline stage (`extract`, `partition`, `train-eval`,
/// `export-spectrograms`, `table1`) against a config file.
#[pyfunction]
fn run_stage(py: Python<'_>, stage: &str, config: PathBuf) -> PyResult<()> {
    let cfg = RunConfig::load(&config).map_err(value_err)?;
    py.detach(|| match stage {
        "extract" => pipeline::cmd_extract(&cfg).map(drop),
        "partition" => pipeline::cmd_partition(&cfg).map(drop),
        "train-eval" => pipeline::cmd_train_eval(&cfg).map(drop),
        "export-spectrograms" => pipeline::cmd_export_spectrograms(&cfg).map(drop),
        "table1" => pipeline::cmd_table1(&cfg).map(drop),
        other => Err(pipeline::PipelineError::Config(format!(
            "unknown stage {other:?}"
        ))),
    })
    .map_err(value_err)
}

/// `(utterance_id, test_fold, roles)` rows of the emitter-disjoint plan.
#[pyfunction]
#[pyo3(signature = (ids, emitters, contexts, seed = 0))]
fn make_plan(
    ids: Vec<String>,
    emitters: Vec<String>,
    contexts: Vec<String>,
    seed: u64,
) -> PyResult<Vec<(String, usize, Vec<&'static str>)>> {
    if ids.len() != emitters.len() || ids.len() != contexts.len() {
        return Err(PyValueError::new_err(
            "ids, emitters and contexts differ in length",
        ));
    }
    let samples: Vec<Sample> = ids
        .into_iter()
        .zip(emitters)
        .zip(labels(&contexts)?)
        .map(|((id, emitter_id), context)| Sample {
            id,
            emitter_id,
            context,
        })
        .collect();
    let plan = partition::make_plan(&samples, seed).map_err(value_err)?;
    Ok(plan
        .iter()
        .map(|(id, roles)| {
            let test = roles
                .iter()
                .position(|r| *r == partition::Role::Test)
                .unwrap_or(FOLD_COUNT);
            (
                id.to_string(),
                test,
                roles.iter().map(|r| r.as_str()).collect(),
            )
        })
        .collect())
}

#[pyfunction]
fn uar(truth: Vec<String>, predicted: Vec<String>) -> PyResult<f64> {
    evaluation::uar(&prediction_set(&truth, &predicted)?).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (truth, predicted, replicates = 1000, seed = 0))]
fn bootstrap_ci(
    truth: Vec<String>,
    predicted: Vec<String>,
    replicates: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    evaluation::bootstrap_ci(&prediction_set(&truth, &predicted)?, replicates, seed)
        .map_err(value_err)
}

/// Row-normalised 11 x 11 confusion matrix in `context_labels()` order.
#[pyfunction]
fn confusion(truth: Vec<String>, predicted: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
    evaluation::confusion(&prediction_set(&truth, &predicted)?).map_err(value_err)
}

#[pyfunction]
fn context_labels() -> Vec<&'static str> {
    ContextLabel::ALL.iter().map(|l| l.name()).collect()
}

#[pymodule]
fn usvctx(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", pipeline::TOOL_VERSION)?;
    m.add("FEATURE_NAMES", FEATURE_NAMES.to_vec())?;
    m.add_class::<AudioClip>()?;
    m.add_class::<OvoModel>()?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(extract_f0, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(export_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(synth_tone, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(make_plan, m)?)?;
    m.add_function(wrap_pyfunction!(uar, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(context_labels, m)?)?;
    Ok(())
}
