//! Multinomial logistic regression and the one-step federated update.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::scalar::Real;

use super::data::{DataShard, Dataset};

/// Flat parameter vector. Row `c` holds `[w_c; b_c]`, i.e. the class
/// weights for the features augmented with a trailing constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub weights: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(model: &Model) -> Self {
        Self {
            weights: vec![T::zero(); model.param_len()],
        }
    }

    pub fn norm(&self) -> T {
        dot(&self.weights, &self.weights).sqrt()
    }
}

/// Shape of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Model {
    pub feature_dim: usize,
    pub classes: usize,
}

impl Model {
    pub fn for_dataset<T: Real>(data: &Dataset<T>) -> Self {
        Self {
            feature_dim: data.feature_dim(),
            classes: data.classes(),
        }
    }

    pub fn param_len(&self) -> usize {
        self.classes * (self.feature_dim + 1)
    }

    fn check<T: Real>(&self, w: &ModelParams<T>, data: &Dataset<T>) -> Result<()> {
        if w.weights.len() != self.param_len() {
            return Err(Error::Dimension {
                expected: self.param_len(),
                actual: w.weights.len(),
            });
        }
        if data.feature_dim() != self.feature_dim || data.classes() != self.classes {
            return Err(Error::Dimension {
                expected: self.param_len(),
                actual: data.classes() * (data.feature_dim() + 1),
            });
        }
        Ok(())
    }

    /// Softmax probabilities and the log-partition for one sample.
    fn probabilities<T: Real>(&self, w: &[T], x: &[T], probs: &mut [T]) -> T {
        let stride = self.feature_dim + 1;
        for (c, p) in probs.iter_mut().enumerate() {
            let row = &w[c * stride..(c + 1) * stride];
            *p = dot(&row[..self.feature_dim], x) + row[self.feature_dim];
        }
        let max = probs.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            z += *p;
        }
        for p in probs.iter_mut() {
            *p /= z;
        }
        max + z.ln()
    }

    /// Cross-entropy of one sample and its gradient added into `grad` with
    /// weight `scale`.
    fn accumulate<T: Real>(&self, w: &[T], x: &[T], y: usize, scale: T, probs: &mut [T], grad: &mut [T]) -> T {
        let stride = self.feature_dim + 1;
        let log_z = self.probabilities(w, x, probs);
        let row = &w[y * stride..(y + 1) * stride];
        let logit = dot(&row[..self.feature_dim], x) + row[self.feature_dim];
        for (c, &p) in probs.iter().enumerate() {
            let r = if c == y { p - T::one() } else { p };
            let coef = scale * r;
            if coef != T::zero() {
                let g = &mut grad[c * stride..(c + 1) * stride];
                axpy(coef, x, &mut g[..self.feature_dim]);
                g[self.feature_dim] += coef;
            }
        }
        log_z - logit
    }

    /// Mean cross-entropy and gradient over `indices` (all samples if `None`).
    pub fn loss_and_gradient<T: Real>(
        &self,
        w: &ModelParams<T>,
        data: &Dataset<T>,
        indices: Option<&[usize]>,
    ) -> Result<(T, Vec<T>)> {
        self.check(w, data)?;
        let all: Vec<usize>;
        let idx = match indices {
            Some(i) => i,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        if idx.is_empty() {
            return Err(Error::Data("no samples".into()));
        }
        let scale = T::one() / T::count(idx.len());
        let mut grad = vec![T::zero(); self.param_len()];
        let mut probs = vec![T::zero(); self.classes];
        let mut loss = T::zero();
        for &i in idx {
            let (x, y) = data.sample(i);
            loss += self.accumulate(&w.weights, x, y, scale, &mut probs, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    pub fn loss<T: Real>(&self, w: &ModelParams<T>, data: &Dataset<T>) -> Result<T> {
        Ok(self.loss_and_gradient(w, data, None)?.0)
    }

    /// `||grad f(w; xi)||^2` of a single sample.
    pub fn sample_gradient_norm_sq<T: Real>(&self, w: &ModelParams<T>, x: &[T], y: usize) -> T {
        let mut probs = vec![T::zero(); self.classes];
        self.probabilities(&w.weights, x, &mut probs);
        let xn = dot(x, x) + T::one();
        let r: T = probs
            .iter()
            .enumerate()
            .map(|(c, &p)| {
                let d = if c == y { p - T::one() } else { p };
                d * d
            })
            .sum();
        r * xn
    }

    /// Fraction of samples whose arg-max class equals the label.
    pub fn accuracy<T: Real>(&self, w: &ModelParams<T>, data: &Dataset<T>) -> Result<T> {
        self.check(w, data)?;
        let mut probs = vec![T::zero(); self.classes];
        let mut correct = 0usize;
        for i in 0..data.len() {
            let (x, y) = data.sample(i);
            self.probabilities(&w.weights, x, &mut probs);
            let best = (0..self.classes)
                .fold(0, |b, c| if probs[c] > probs[b] { c } else { b });
            if best == y {
                correct += 1;
            }
        }
        Ok(T::count(correct) / T::count(data.len().max(1)))
    }

    /// One full-batch gradient step on a shard.
    pub fn local_update<T: Real>(
        &self,
        w_prev: &ModelParams<T>,
        data: &Dataset<T>,
        shard: &DataShard<T>,
        eta: T,
    ) -> Result<ModelParams<T>> {
        if !(eta > T::zero()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {eta}")));
        }
        if shard.indices.is_empty() {
            return Err(Error::Data(format!("shard of device {} is empty", shard.owner)));
        }
        let (_, g) = self.loss_and_gradient(w_prev, data, Some(&shard.indices))?;
        Ok(step(w_prev, &g, eta))
    }
}

/// `w - eta g`
pub fn step<T: Real>(w: &ModelParams<T>, g: &[T], eta: T) -> ModelParams<T> {
    let mut out = w.clone();
    axpy(-eta, g, &mut out.weights);
    out
}

/// `sum_{k in S} alpha_k w_k / sum_{k in S} alpha_k`
pub fn aggregate<T: Real>(
    locals: &BTreeMap<usize, ModelParams<T>>,
    weights: &[T],
    set: &[usize],
) -> Result<ModelParams<T>> {
    let first = set.first().ok_or(Error::EmptySchedule)?;
    let len = locals
        .get(first)
        .ok_or_else(|| Error::Domain(format!("missing local model of device {first}")))?
        .weights
        .len();
    let mut acc = vec![T::zero(); len];
    let mut mass = T::zero();
    for &k in set {
        let w = locals
            .get(&k)
            .ok_or_else(|| Error::Domain(format!("missing local model of device {k}")))?;
        if w.weights.len() != len {
            return Err(Error::Dimension {
                expected: len,
                actual: w.weights.len(),
            });
        }
        axpy(weights[k], &w.weights, &mut acc);
        mass += weights[k];
    }
    if !(mass > T::zero()) {
        return Err(Error::Domain("scheduled weight mass must be positive".into()));
    }
    acc.iter_mut().for_each(|v| *v /= mass);
    Ok(ModelParams { weights: acc })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset<f64> {
        Dataset::new(
            3,
            3,
            vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5, -1.0, 1.0, 0.3, 0.2, 0.2, 0.2],
            vec![0, 2, 1, 2],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_log_classes() {
        let d = toy();
        let m = Model::for_dataset(&d);
        let w = ModelParams::zeros(&m);
        let (loss, _) = m.loss_and_gradient(&w, &d, None).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = toy();
        let m = Model::for_dataset(&d);
        let w = ModelParams {
            weights: (0..m.param_len()).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1).collect(),
        };
        let (_, g) = m.loss_and_gradient(&w, &d, None).unwrap();
        let h = 1e-6;
        for (i, &gi) in g.iter().enumerate() {
            let mut up = w.clone();
            up.weights[i] += h;
            let mut dn = w.clone();
            dn.weights[i] -= h;
            let fd = (m.loss(&up, &d).unwrap() - m.loss(&dn, &d).unwrap()) / (2.0 * h);
            assert!((fd - gi).abs() <= 1e-5 * gi.abs().max(1e-3), "{i}: {fd} vs {gi}");
        }
    }

    #[test]
    fn saturated_logit_has_vanishing_loss() {
        let d = Dataset::new(1, 2, vec![1.0], vec![1]).unwrap();
        let m = Model::for_dataset(&d);
        let w = ModelParams {
            weights: vec![0.0, 0.0, 40.0, 0.0],
        };
        assert!(m.loss(&w, &d).unwrap() < 1e-15);
    }

    #[test]
    fn local_update_by_hand() {
        // two samples, one feature, two classes: d = 2 * (1 + 1) = 4 parameters
        let d = Dataset::new(1, 2, vec![1.0, -2.0], vec![0, 1]).unwrap();
        let m = Model::for_dataset(&d);
        let shard = DataShard {
            owner: 0,
            indices: vec![0, 1],
            weight: 1.0,
        };
        let w = ModelParams::zeros(&m);
        let out = m.local_update(&w, &d, &shard, 0.1).unwrap();
        // p = (1/2, 1/2) for both samples; residuals r = p - y
        // sample 0: r = (-1/2, 1/2), x~ = (1, 1); sample 1: r = (1/2, -1/2), x~ = (-2, 1)
        // mean grad class 0: ((-1/2)(1) + (1/2)(-2)) / 2 = -0.75, bias: 0
        let expected = [0.075f64, 0.0, -0.075, 0.0];
        for (a, b) in out.weights.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", out.weights);
        }
        assert!(m.local_update(&w, &d, &shard, 0.0).is_err());
    }

    #[test]
    fn aggregate_by_hand() {
        let mut locals = BTreeMap::new();
        locals.insert(0, ModelParams { weights: vec![1.0f64, 0.0] });
        locals.insert(1, ModelParams { weights: vec![0.0, 2.0] });
        locals.insert(2, ModelParams { weights: vec![-1.0, 1.0] });
        let alpha = [0.5, 0.3, 0.2];
        let w = aggregate(&locals, &alpha, &[0, 1, 2]).unwrap();
        assert!((w.weights[0] - 0.3).abs() < 1e-15 && (w.weights[1] - 0.8).abs() < 1e-15);
        let single = aggregate(&locals, &alpha, &[1]).unwrap();
        assert_eq!(single.weights, vec![0.0, 2.0]);
        assert!(matches!(aggregate(&locals, &alpha, &[]), Err(Error::EmptySchedule)));
    }
}
