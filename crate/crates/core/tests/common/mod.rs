//! Reference computations used as oracles by the integration tests. They are
//! written from the textbook definitions and share no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use stereomtl::corpus::io::read_rows;
use stereomtl::corpus::{labeled_rows, SentenceRecord, Source};
use stereomtl::labels::{TaskId, TaskMode};
use stereomtl::modeling::{
    compute_loss, forward, loss_and_gradients, open_backend, pool, AdaptationConfig, Family, Gold, HeadSet,
    LossWeights, PoolingStrategy,
};
use stereomtl::promptlab::{build_prompt, PromptSpec, Shot, StubLm, StubLmConfig};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

/// Fleiss' kappa from rater-pair counts: for each item, the fraction of
/// ordered rater pairs that agree; chance agreement from pooled category shares.
pub fn kappa_oracle(counts: &[Vec<u32>]) -> f64 {
    let n_items = counts.len() as f64;
    let raters: u32 = counts[0].iter().sum();
    let pairs = (raters * (raters - 1)) as f64;
    let mut agree = 0.0;
    let mut pooled = vec![0u64; counts[0].len()];
    for row in counts {
        let mut same_pairs = 0u64;
        for (j, &c) in row.iter().enumerate() {
            same_pairs += (c as u64) * (c as u64).saturating_sub(1);
            pooled[j] += c as u64;
        }
        agree += same_pairs as f64 / pairs;
    }
    let p_obs = agree / n_items;
    let total: u64 = pooled.iter().sum();
    let p_chance: f64 = pooled.iter().map(|&c| (c as f64 / total as f64).powi(2)).sum();
    (p_obs - p_chance) / (1.0 - p_chance)
}

/// Macro-F1 by counting tp/fp/fn per class with nested loops; F1 of a class is
/// 0 when its precision or recall is undefined.
pub fn macro_f1_oracle(golds: &[usize], preds: &[usize], classes: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for i in 0..golds.len() {
            match (golds[i] == c, preds[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let f1 = if tp == 0 {
            0.0
        } else {
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / (tp + fn_) as f64;
            2.0 * p * r / (p + r)
        };
        total += f1;
    }
    total / classes as f64
}

fn t_pdf(x: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Two-sided Student-t p-value by adaptive Simpson integration of the density
/// over [0, |t|], split into unit pieces.
pub fn t_two_sided_p_oracle(t: f64, df: f64) -> f64 {
    let f = |x: f64| t_pdf(x, df);
    let end = t.abs();
    let mut mass = 0.0;
    let mut a = 0.0;
    while a < end {
        let b = (a + 1.0).min(end);
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        mass += simpson(&f, a, b, fa, fm, fb, whole, 1e-15, 50);
        a = b;
    }
    (1.0 - 2.0 * mass).clamp(0.0, 1.0)
}

/// Paired t statistic of `b - a` with two-pass variance.
pub fn paired_t_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
    }
    let t = mean / (var / n).sqrt();
    (t, t_two_sided_p_oracle(t, n - 1.0))
}

/// Mean softmax cross-entropy computed with plain exponentials.
pub fn cross_entropy_oracle(logits: &[Vec<f64>], gold: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(gold) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[y].exp() / z).ln();
    }
    total / gold.len() as f64
}

/// Central differences of the total loss against every head parameter.
pub fn gradient_check(mode: TaskMode, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let backend = open_backend("stub", &AdaptationConfig::default()).unwrap();
    let words = ["women", "lazy", "always", "engineers", "kind", "the", "are", "never", "smart", "poor"];
    let texts: Vec<String> = (0..6)
        .map(|_| (0..rng.random_range(2..9)).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" "))
        .collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let pooled = pool(&backend.encode(&refs).unwrap().batch, PoolingStrategy::Mean, Family::Stub).unwrap();
    let mut heads = HeadSet::init(mode, 32, rng.random());
    for l in heads.heads_mut().values_mut() {
        l.weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        l.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }
    let gold: Gold = mode
        .head_tasks()
        .into_iter()
        .map(|t| (t, (0..6).map(|_| Some(rng.random_range(0..t.num_classes()))).collect()))
        .collect();
    let w = LossWeights::default();
    let (_, grads, _) = loss_and_gradients(&heads, &pooled, &gold, &w).unwrap();
    let loss = |h: &HeadSet| compute_loss(mode, &forward(h, &pooled).unwrap(), &gold, &w).unwrap().total;
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let tasks: Vec<TaskId> = heads.heads().keys().copied().collect();
    for t in tasks {
        let (rows, cols) = heads.heads()[&t].weight.dim();
        let mut params: Vec<(Option<(usize, usize)>, usize)> = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                params.push((Some((r, c)), 0));
            }
            params.push((None, r));
        }
        for (wi, bi) in params {
            let nudge = |h: &mut HeadSet, d: f64| {
                let lin = h.heads_mut().get_mut(&t).unwrap();
                match wi {
                    Some(ix) => lin.weight[ix] += d,
                    None => lin.bias[bi] += d,
                }
            };
            let mut plus = heads.clone();
            nudge(&mut plus, eps);
            let mut minus = heads.clone();
            nudge(&mut minus, -eps);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let analytic = match wi {
                Some(ix) => grads[&t].weight[ix],
                None => grads[&t].bias[bi],
            };
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}


pub const ANALYSE: usize = 3;
/// Answers read off the fixture rules by hand: B wins when the `lazy`/`always`
/// discounts bring it below A's 2.0 (or 1.5 with the `kind` discount).
pub const HAND_LABELS: [&str; 8] = ["B", "A", "B", "A", "B", "A", "B", "A"];

pub fn lm() -> StubLm {
    let text = std::fs::read_to_string(fixture("prompt/stub_lm.toml")).unwrap();
    StubLm::new(toml::from_str::<StubLmConfig>(&text).unwrap())
}

pub fn sentences() -> Vec<SentenceRecord> {
    let rows = read_rows(&fixture("prompt/sentences.csv")).unwrap();
    labeled_rows(&rows, TaskId::Bias, Source::Synthetic, "q").unwrap()
}

pub fn manual_shots() -> Vec<Shot> {
    [
        ("Women are bad drivers.", "B"),
        ("The meeting starts at noon.", "A"),
        ("Old people cannot learn new things.", "B"),
        ("She planted tomatoes this spring.", "A"),
        ("Poor families do not value education.", "B"),
    ]
    .into_iter()
    .map(|(s, a)| Shot::new(s, a))
    .collect()
}

/// Sum of per-token NLLs, recomputed from the fixture table: whitespace
/// tokens, `a`/`b` from the table, 4.0 otherwise, and a token right after
/// `Answer:` discounted by the rules whose cues appear in the instruction and
/// in the nearest preceding sentence line.
pub fn oracle_nll(text: &str) -> (f64, usize) {
    let lines: Vec<&str> = text.split('\n').collect();
    let instruction = lines[0].to_lowercase();
    let mut total = 0.0;
    let mut count = 0;
    let mut sentence = String::new();
    for line in &lines {
        if let Some(s) = line.strip_prefix("Sentence: ") {
            sentence = s.to_lowercase();
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        for (i, tok) in toks.iter().enumerate() {
            let mut nll = match tok.to_lowercase().as_str() {
                "a" => 2.0,
                "b" => 2.5,
                _ => 4.0,
            };
            if i > 0 && toks[i - 1] == "Answer:" && instruction.contains("analyse") {
                if *tok == "B" && sentence.contains("lazy") {
                    nll -= 1.0;
                }
                if *tok == "B" && sentence.contains("always") {
                    nll -= 0.75;
                }
                if *tok == "A" && sentence.contains("kind") {
                    nll -= 0.5;
                }
            }
            total += f64::max(nll, 0.0);
            count += 1;
        }
    }
    (total, count)
}

pub fn oracle_pick(spec: &PromptSpec, sentence: &str) -> String {
    let cands = build_prompt(spec, sentence).unwrap();
    let mut best: Option<(f64, String)> = None;
    for c in cands {
        let (nll, n) = oracle_nll(&c.text);
        let ppl = (nll / n as f64).exp();
        if best.as_ref().is_none_or(|(b, _)| ppl < *b) {
            best = Some((ppl, c.letter));
        }
    }
    best.unwrap().1
}

