use crate::labels::TaskId;
use crate::modeling::{HeadGrads, HeadSet, Linear};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerInfo {
    pub name: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

/// Adam over classification-head parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: BTreeMap<TaskId, Linear>,
    v: BTreeMap<TaskId, Linear>,
}

impl Adam {
    pub fn new(lr: f64, heads: &HeadSet) -> Self {
        let zeros: BTreeMap<TaskId, Linear> = heads
            .heads()
            .iter()
            .map(|(t, l)| (*t, Linear::zeros(heads.hidden_size(), l.classes())))
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn info(&self) -> OptimizerInfo {
        OptimizerInfo {
            name: "adam".into(),
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.eps,
            weight_decay: 0.0,
        }
    }

    pub fn step(&mut self, heads: &mut HeadSet, grads: &HeadGrads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for (task, head) in heads.heads_mut() {
            let Some(g) = grads.get(task) else { continue };
            let m = self.m.get_mut(task).expect("moment per head");
            let v = self.v.get_mut(task).expect("moment per head");
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            ndarray::Zip::from(&mut head.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, g, m, v| update(p, *g, m, v));
            ndarray::Zip::from(&mut head.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, g, m, v| update(p, *g, m, v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::TaskMode;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut heads = HeadSet::zeros(TaskMode::stl_bias(), 2);
        let mut g = Linear::zeros(2, 2);
        g.weight[[0, 0]] = 3.0;
        g.weight[[1, 1]] = -0.5;
        let grads = HeadGrads::from([(TaskId::Bias, g)]);
        let mut opt = Adam::new(0.01, &heads);
        opt.step(&mut heads, &grads);
        let w = &heads.head(TaskId::Bias).unwrap().weight;
        assert!((w[[0, 0]] + 0.01).abs() < 1e-9);
        assert!((w[[1, 1]] - 0.01).abs() < 1e-9);
        assert_eq!(w[[0, 1]], 0.0);
    }
}
