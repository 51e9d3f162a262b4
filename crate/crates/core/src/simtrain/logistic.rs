// SPDX-License-Identifier: Apache-2.0

//! Synthetic multinomial logistic regression over Gaussian blobs, with
//! per-device label skew drawn from a symmetric Dirichlet.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::algebra::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub features: usize,
    pub classes: usize,
    pub devices: u32,
    pub samples_per_device: usize,
    pub test_samples: usize,
    /// Dirichlet concentration for per-device label proportions.
    pub alpha: f64,
    /// Standard deviation of blob centers around the origin.
    pub separation: f64,
    /// Within-blob standard deviation.
    pub noise: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            features: 8,
            classes: 3,
            devices: 500,
            samples_per_device: 20,
            test_samples: 1000,
            alpha: 1.0,
            separation: 1.0,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major `n x features`.
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticTask {
    pub config: LogisticConfig,
    pub centers: Vec<Vec<f64>>,
    pub proportions: Vec<Vec<f64>>,
    pub local: Vec<Dataset>,
    pub test: Dataset,
}

/// One draw from `Dir(alpha, ..., alpha)` via normalized gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

impl LogisticTask {
    pub fn generate(config: LogisticConfig, seed: &[u8]) -> Self {
        assert!(config.features >= 1 && config.classes >= 2, "logistic task needs features and 2+ classes");
        let mut rng = seeded_rng(&[b"logistic", seed]);
        let center_dist = Normal::new(0.0, config.separation).expect("separation");
        let noise = Normal::new(0.0, config.noise).expect("noise");
        let centers: Vec<Vec<f64>> = (0..config.classes)
            .map(|_| (0..config.features).map(|_| center_dist.sample(&mut rng)).collect())
            .collect();
        let sample = |label: usize, rng: &mut rand_chacha::ChaCha20Rng, out: &mut Dataset| {
            out.x.extend(centers[label].iter().map(|c| c + noise.sample(rng)));
            out.y.push(label);
        };
        let mut proportions = Vec::with_capacity(config.devices as usize);
        let mut local = Vec::with_capacity(config.devices as usize);
        for _ in 0..config.devices {
            let p = dirichlet(config.alpha, config.classes, &mut rng);
            let mut d = Dataset { x: Vec::new(), y: Vec::new() };
            for _ in 0..config.samples_per_device {
                let label = categorical(&p, &mut rng);
                sample(label, &mut rng, &mut d);
            }
            proportions.push(p);
            local.push(d);
        }
        let mut test = Dataset { x: Vec::new(), y: Vec::new() };
        for i in 0..config.test_samples {
            sample(i % config.classes, &mut rng, &mut test);
        }
        Self { config, centers, proportions, local, test }
    }

    /// Parameter count: `classes x features` weights then `classes` biases.
    pub fn dim(&self) -> usize {
        self.config.classes * (self.config.features + 1)
    }

    fn logits(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let (k, f) = (self.config.classes, self.config.features);
        for c in 0..k {
            let row = &w[c * f..(c + 1) * f];
            out[c] = w[k * f + c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn softmax(z: &mut [f64]) {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in z.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in z.iter_mut() {
            *v /= s;
        }
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, w: &[f64], data: &Dataset) -> f64 {
        let (k, f) = (self.config.classes, self.config.features);
        let mut z = vec![0.0; k];
        let mut total = 0.0;
        for (i, &y) in data.y.iter().enumerate() {
            self.logits(w, &data.x[i * f..(i + 1) * f], &mut z);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[y];
        }
        if data.is_empty() {
            0.0
        } else {
            total / data.len() as f64
        }
    }

    /// Gradient of [`Self::loss`] with respect to `w`.
    pub fn gradient(&self, w: &[f64], data: &Dataset) -> Vec<f64> {
        let (k, f) = (self.config.classes, self.config.features);
        let mut g = vec![0.0; self.dim()];
        if data.is_empty() {
            return g;
        }
        let mut z = vec![0.0; k];
        for (i, &y) in data.y.iter().enumerate() {
            let x = &data.x[i * f..(i + 1) * f];
            self.logits(w, x, &mut z);
            Self::softmax(&mut z);
            for c in 0..k {
                let e = z[c] - if c == y { 1.0 } else { 0.0 };
                for (gj, xj) in g[c * f..(c + 1) * f].iter_mut().zip(x) {
                    *gj += e * xj;
                }
                g[k * f + c] += e;
            }
        }
        let n = data.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    /// `epochs` full-batch gradient steps on device `id`'s data; returns
    /// `w_local - w`.
    pub fn local_train(&self, id: u32, w: &[f64], epochs: u32, lr: f64) -> Vec<f64> {
        let data = &self.local[id as usize];
        let mut local = w.to_vec();
        for _ in 0..epochs {
            let g = self.gradient(&local, data);
            for (p, gi) in local.iter_mut().zip(g) {
                *p -= lr * gi;
            }
        }
        local.iter().zip(w).map(|(a, b)| a - b).collect()
    }

    /// `(accuracy, mean cross-entropy)` on the held-out split.
    pub fn evaluate(&self, w: &[f64]) -> (f64, f64) {
        let (k, f) = (self.config.classes, self.config.features);
        let mut z = vec![0.0; k];
        let mut correct = 0usize;
        for (i, &y) in self.test.y.iter().enumerate() {
            self.logits(w, &self.test.x[i * f..(i + 1) * f], &mut z);
            let pred = (0..k).fold(0, |best, c| if z[c] > z[best] { c } else { best });
            correct += usize::from(pred == y);
        }
        let acc = if self.test.is_empty() { 0.0 } else { correct as f64 / self.test.len() as f64 };
        (acc, self.loss(w, &self.test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> LogisticTask {
        LogisticTask::generate(
            LogisticConfig { features: 4, classes: 2, devices: 10, samples_per_device: 8, test_samples: 2000, ..Default::default() },
            b"t",
        )
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = small();
        let data = Dataset { x: t.local[0].x[..4].to_vec(), y: vec![t.local[0].y[0]] };
        let w: Vec<f64> = (0..t.dim()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let g = t.gradient(&w, &data);
        let h = 1e-6;
        for i in 0..t.dim() {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (t.loss(&up, &data) - t.loss(&dn, &data)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "coord {i}: {fd} vs {}", g[i]);
        }
        // one epoch on that single sample is exactly -lr * gradient
        let single = LogisticTask { local: vec![data.clone()], ..t.clone() };
        let v = single.local_train(0, &w, 1, 0.5);
        for (vi, gi) in v.iter().zip(&g) {
            assert!((vi + 0.5 * gi).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lr_or_epochs_gives_zero_update() {
        let t = small();
        let w = vec![0.3; t.dim()];
        assert!(t.local_train(1, &w, 3, 0.0).iter().all(|&x| x == 0.0));
        assert!(t.local_train(1, &w, 0, 0.1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn untrained_model_is_at_chance() {
        let t = small();
        let (acc, loss) = t.evaluate(&vec![0.0; t.dim()]);
        // ties resolve to class 0, and the test split is balanced
        assert!((acc - 0.5).abs() <= 0.05);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn partition_is_reproducible() {
        let a = small();
        let b = small();
        assert_eq!(a, b);
        for p in &a.proportions {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let c = LogisticTask::generate(a.config, b"other");
        assert_ne!(a.proportions, c.proportions);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn loss_is_non_negative(seed in any::<u64>(), scale in -3.0f64..3.0) {
            let t = small();
            let mut rng = seeded_rng(&[&seed.to_be_bytes()]);
            let w: Vec<f64> = (0..t.dim()).map(|_| scale * rand::Rng::random::<f64>(&mut rng)).collect();
            prop_assert!(t.evaluate(&w).1 >= 0.0);
        }

        #[test]
        fn dirichlet_sums_to_one(seed in any::<u64>(), k in 2usize..8, alpha in 0.1f64..5.0) {
            let p = dirichlet(alpha, k, &mut seeded_rng(&[&seed.to_be_bytes()]));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
