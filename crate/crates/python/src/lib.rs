use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::fmt::Display;
use stereomtl::corpus::io::read_dataset;
use stereomtl::corpus::{split, SplitManifest, DEFAULT_RATIOS};
use stereomtl::labels::{self, BinaryLabel, JointLabel, TaskId};
use stereomtl::promptlab::{
    self, pick_answer, score_candidates, LanguageModel, PromptSpec, Ranking, ScoreSpan, Shot, StubLmConfig,
};
use stereomtl::trainer::ExperimentConfig;

fn err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn label(positive: bool) -> BinaryLabel {
    if positive {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

/// Joint class index of a (bias, stereotype) pair.
#[pyfunction]
fn to_joint(bias: bool, stereotype: bool) -> usize {
    labels::to_joint(label(bias), label(stereotype)).index()
}

#[pyfunction]
fn from_joint(index: i64) -> PyResult<(bool, bool)> {
    let (b, s) = JointLabel::new(index).map(labels::from_joint).map_err(err)?;
    Ok((b.is_positive(), s.is_positive()))
}

/// Fleiss' kappa of an items x categories count matrix.
#[pyfunction]
fn fleiss_kappa(matrix: Vec<Vec<u32>>) -> PyResult<f64> {
    stereomtl::corpus::fleiss_kappa(&matrix).map_err(err)
}

#[pyfunction]
fn macro_f1(golds: Vec<usize>, preds: Vec<usize>, classes: usize) -> PyResult<f64> {
    stereomtl::evaluation::macro_f1(&golds, &preds, classes).map_err(err)
}

#[pyclass(frozen, get_all)]
struct TTestResult {
    t_statistic: f64,
    p_value: f64,
    n: usize,
    mean_difference: f64,
    significant: bool,
}

#[pymethods]
impl TTestResult {
    fn __repr__(&self) -> String {
        format!(
            "TTestResult(t_statistic={}, p_value={}, n={}, significant={})",
            self.t_statistic,
            self.p_value,
            self.n,
            if self.significant { "True" } else { "False" }
        )
    }
}

/// Two-sided paired t-test on aligned correctness vectors (differences b - a).
#[pyfunction]
fn paired_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<TTestResult> {
    let r = stereomtl::evaluation::paired_t_test(&a, &b).map_err(err)?;
    Ok(TTestResult {
        t_statistic: r.t_statistic,
        p_value: r.p_value,
        n: r.n,
        mean_difference: r.mean_difference,
        significant: r.significant,
    })
}

#[pyfunction]
fn split_sizes(n: usize, ratios: Vec<f64>) -> PyResult<Vec<usize>> {
    stereomtl::corpus::split_sizes(n, &ratios).map_err(err)
}

fn spec(instruction: &str, shots: Vec<(String, String)>, task: &str) -> PyResult<PromptSpec> {
    let task: TaskId = task.parse().map_err(err)?;
    Ok(PromptSpec::new("prompt", instruction, task)
        .with_shots(shots.into_iter().map(|(s, a)| Shot::new(s, a)).collect()))
}

/// Rendered candidate sequences, one per answer option.
#[pyfunction]
#[pyo3(signature = (instruction, sentence, shots = Vec::new(), task = "bias"))]
fn build_prompt(instruction: &str, sentence: &str, shots: Vec<(String, String)>, task: &str) -> PyResult<Vec<String>> {
    let cands = promptlab::build_prompt(&spec(instruction, shots, task)?, sentence).map_err(err)?;
    Ok(cands.into_iter().map(|c| c.text).collect())
}

/// The six standard prompt instructions.
#[pyfunction]
fn instructions() -> Vec<&'static str> {
    promptlab::STANDARD_INSTRUCTIONS.to_vec()
}

/// Table-driven scoring model; configured from TOML text.
#[pyclass(frozen)]
struct StubLM {
    inner: promptlab::StubLm,
}

#[pymethods]
impl StubLM {
    #[new]
    #[pyo3(signature = (config_toml = None))]
    fn new(config_toml: Option<&str>) -> PyResult<Self> {
        let config: StubLmConfig = match config_toml {
            Some(t) => toml::from_str(t).map_err(err)?,
            None => StubLmConfig::default(),
        };
        Ok(StubLM {
            inner: promptlab::StubLm::new(config),
        })
    }

    /// `(byte offset, nll)` per whitespace token.
    fn token_nlls(&self, text: &str) -> PyResult<Vec<(usize, f64)>> {
        Ok(self.inner.token_nlls(text).map_err(err)?.into_iter().map(|t| (t.start, t.nll)).collect())
    }

    /// Answer letter with the lowest full-sequence perplexity.
    #[pyo3(signature = (instruction, sentence, shots = Vec::new(), task = "bias"))]
    fn choose(&self, instruction: &str, sentence: &str, shots: Vec<(String, String)>, task: &str) -> PyResult<String> {
        let cands = promptlab::build_prompt(&spec(instruction, shots, task)?, sentence).map_err(err)?;
        let scores = score_candidates(&self.inner, &cands, ScoreSpan::FullSequence).map_err(err)?;
        let best = pick_answer(&scores, Ranking::Perplexity).ok_or_else(|| err("no candidates"))?;
        Ok(scores[best].letter.clone())
    }
}

/// Trains one configuration (TOML text) on a dataset CSV and returns the run
/// record and test Macro-F1 per task as JSON.
#[pyfunction]
#[pyo3(signature = (config_toml, dataset_csv, split_manifest = None))]
fn train(config_toml: &str, dataset_csv: &str, split_manifest: Option<&str>) -> PyResult<String> {
    let cfg: ExperimentConfig = toml::from_str(config_toml).map_err(err)?;
    cfg.validate().map_err(err)?;
    let recs = read_dataset(dataset_csv.as_ref()).map_err(err)?;
    let sp = match split_manifest {
        Some(p) => {
            let m: SplitManifest = serde_json::from_str(&std::fs::read_to_string(p).map_err(err)?).map_err(err)?;
            m.apply(&recs).map_err(err)?
        }
        None => split(&recs, DEFAULT_RATIOS, cfg.seed).map_err(err)?,
    };
    let out = stereomtl::trainer::train(&cfg, &sp).map_err(err)?;
    let test = stereomtl::evaluation::decompose_full_mtl(&out.test).unwrap_or(out.test);
    let mut f1 = serde_json::Map::new();
    for t in &test.tasks {
        f1.insert(t.to_string(), serde_json::json!(test.macro_f1(*t).map_err(err)?));
    }
    Ok(serde_json::json!({ "record": out.record, "test_macro_f1": f1 }).to_string())
}

/// Runs the command-line interface with `args` (without the program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| stereomtl::cli::main_with_args(std::iter::once("stereomtl".to_string()).chain(args)))
}

#[pymodule]
fn _stereomtl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(to_joint, m)?)?;
    m.add_function(wrap_pyfunction!(from_joint, m)?)?;
    m.add_function(wrap_pyfunction!(fleiss_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(split_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(instructions, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<TTestResult>()?;
    m.add_class::<StubLM>()?;
    Ok(())
}
