use super::{
    AdaptationConfig, BackendHandle, FeatureFileBackend, HiddenBatch, ModelError, StubBackend,
    StubConfig,
};
use ndarray::Array3;

/// Output of [`Backend::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub batch: HiddenBatch,
    /// Number of inputs cut at the backend's maximum length.
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterInfo {
    pub name: String,
    pub len: usize,
}

/// Adapter contract for a pretrained (or stub) text encoder. Tokenization is
/// owned by the backend.
///
/// Backends with no trainable parameters act as frozen feature extractors;
/// only the classification heads are then optimized.
pub trait Backend: Send + Sync {
    fn handle(&self) -> &BackendHandle;

    fn encode(&self, texts: &[&str]) -> Result<Encoded, ModelError>;

    fn configure_adaptation(&mut self, config: &AdaptationConfig) -> Result<(), ModelError> {
        config.validate()
    }

    fn trainable_parameters(&self) -> Vec<ParameterInfo> {
        Vec::new()
    }

    /// Applies one update given the loss gradient with respect to the last
    /// hidden states of `texts`.
    fn apply_gradient(
        &mut self,
        _texts: &[&str],
        _grad_states: &Array3<f64>,
        _learning_rate: f64,
    ) -> Result<(), ModelError> {
        Ok(())
    }
}

/// Resolves a backend id.
///
/// * `stub` - the built-in deterministic transformer
/// * `features:<family>:<path>` - precomputed last-layer states from a JSONL file
pub fn open_backend(
    backend_id: &str,
    adaptation: &AdaptationConfig,
) -> Result<Box<dyn Backend>, ModelError> {
    let mut backend: Box<dyn Backend> = if backend_id == "stub" {
        Box::new(StubBackend::new(StubConfig::default()))
    } else if let Some(rest) = backend_id.strip_prefix("features:") {
        let (family, path) = rest.split_once(':').ok_or_else(|| {
            ModelError::Backend(format!(
                "expected features:<family>:<path>, got {backend_id:?}"
            ))
        })?;
        Box::new(FeatureFileBackend::load(
            backend_id,
            family.parse()?,
            std::path::Path::new(path),
        )?)
    } else {
        return Err(ModelError::Backend(format!(
            "backend {backend_id:?} is not available in this build"
        )));
    };
    backend.configure_adaptation(adaptation)?;
    Ok(backend)
}
