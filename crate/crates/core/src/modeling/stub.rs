use super::{BackendHandle, Encoded, Family, HiddenBatch, ModelError};
use super::backend::Backend;
use crate::util::fnv1a64;
use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StubConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            hidden: 32,
            layers: 2,
            heads: 4,
            ffn: 64,
            vocab: 4096,
            max_len: 64,
            seed: 0x5EED,
        }
    }
}

struct Layer {
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

/// Small deterministic transformer encoder for tests and smoke runs.
///
/// Whitespace tokenization (lowercased, edge punctuation stripped) with FNV
/// hash buckets, sinusoidal positions, pre-norm bidirectional attention
/// layers with half-scaled residual branches. Weights are fixed by
/// `StubConfig::seed` and never trained.
pub struct StubBackend {
    config: StubConfig,
    handle: BackendHandle,
    embedding: Array2<f64>,
    positions: Array2<f64>,
    layers: Vec<Layer>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let a = (3.0 / fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.random_range(-a..a))
}

fn layer_norm(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.outer_iter_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + 1e-5).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x * x * x)).tanh())
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.outer_iter_mut() {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row /= s;
    }
}

impl StubBackend {
    pub fn new(config: StubConfig) -> Self {
        assert!(config.hidden % config.heads == 0, "hidden must divide into heads");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden;
        let embedding = Array2::from_shape_simple_fn((config.vocab, h), || rng.random_range(-1.0..1.0));
        let positions = Array2::from_shape_fn((config.max_len, h), |(p, i)| {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / h as f64);
            let angle = p as f64 * rate;
            0.1 * if i % 2 == 0 { angle.sin() } else { angle.cos() }
        });
        let layers = (0..config.layers)
            .map(|_| Layer {
                wq: uniform(&mut rng, (h, h), h),
                wk: uniform(&mut rng, (h, h), h),
                wv: uniform(&mut rng, (h, h), h),
                wo: uniform(&mut rng, (h, h), h),
                w1: uniform(&mut rng, (h, config.ffn), h),
                b1: Array1::zeros(config.ffn),
                w2: uniform(&mut rng, (config.ffn, h), config.ffn),
                b2: Array1::zeros(h),
            })
            .collect();
        let handle = BackendHandle {
            backend_id: "stub".into(),
            hidden_size: h,
            family: Family::Stub,
        };
        StubBackend {
            config,
            handle,
            embedding,
            positions,
            layers,
        }
    }

    pub fn config(&self) -> &StubConfig {
        &self.config
    }

    /// Token ids before truncation. Id 0 stands in for texts with no tokens.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        let ids: Vec<usize> = text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| !w.is_empty())
            .map(|w| 1 + (fnv1a64(w.as_bytes()) % (self.config.vocab as u64 - 1)) as usize)
            .collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }

    fn encode_one(&self, ids: &[usize]) -> Array2<f64> {
        let t = ids.len();
        let h = self.config.hidden;
        let dh = h / self.config.heads;
        let mut x = Array2::from_shape_fn((t, h), |(p, i)| {
            self.embedding[[ids[p], i]] + self.positions[[p, i]]
        });
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let n = layer_norm(&x);
            let q = n.dot(&layer.wq);
            let k = n.dot(&layer.wk);
            let v = n.dot(&layer.wv);
            let mut ctx = Array2::<f64>::zeros((t, h));
            for head in 0..self.config.heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut scores);
                ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            }
            x.scaled_add(0.5, &ctx.dot(&layer.wo));
            let n = layer_norm(&x);
            let f = (n.dot(&layer.w1) + &layer.b1).mapv(gelu).dot(&layer.w2) + &layer.b2;
            x.scaled_add(0.5, &f);
        }
        x
    }
}

impl Backend for StubBackend {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn encode(&self, texts: &[&str]) -> Result<Encoded, ModelError> {
        let mut truncated = 0;
        let seqs: Vec<Vec<usize>> = texts
            .iter()
            .map(|t| {
                let mut ids = self.tokenize(t);
                if ids.len() > self.config.max_len {
                    ids.truncate(self.config.max_len);
                    truncated += 1;
                }
                ids
            })
            .collect();
        if truncated > 0 {
            log::warn!("stub backend truncated {truncated} inputs to {} tokens", self.config.max_len);
        }
        let t_max = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let h = self.config.hidden;
        let mut states = Array3::<f64>::zeros((seqs.len(), t_max, h));
        let mut mask = Array2::from_elem((seqs.len(), t_max), false);
        for (i, ids) in seqs.iter().enumerate() {
            let out = self.encode_one(ids);
            states
                .index_axis_mut(Axis(0), i)
                .slice_mut(s![..ids.len(), ..])
                .assign(&out);
            mask.row_mut(i).slice_mut(s![..ids.len()]).fill(true);
        }
        Ok(Encoded {
            batch: HiddenBatch::new(states, mask)?,
            truncated,
        })
    }
}
