//! Diagonal-covariance Gaussian mixtures trained by EM with k-means
//! initialization and a variance floor.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

const VARIANCE_FLOOR_FRACTION: f64 = 1e-4;
const LOG_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    /// M×d component means.
    pub means: Vec<Vec<f64>>,
    /// M×d diagonal variances, floored.
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_component(&self, m: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..x.len() {
            let v = self.variances[m][j];
            let d = x[j] - self.means[m][j];
            s += LOG_2PI + v.ln() + d * d / v;
        }
        -0.5 * s
    }

    /// log Σ_m w_m N(x; μ_m, σ²_m)
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let logs: Vec<f64> = (0..self.n_components())
            .map(|m| {
                let l = self.weights[m].ln() + self.log_component(m, x);
                max = max.max(l);
                l
            })
            .collect();
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    pub fn total_log_likelihood(&self, frames: &Tensor) -> f64 {
        (0..frames.rows()).map(|t| self.log_likelihood(frames.row(t))).sum()
    }

    /// Responsibilities γ_m(x), written into `out` (length M).
    pub fn posteriors(&self, x: &[f64], out: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for m in 0..self.n_components() {
            out[m] = self.weights[m].ln() + self.log_component(m, x);
            max = max.max(out[m]);
        }
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut comp = self.n_components() - 1;
        for m in 0..self.n_components() {
            acc += self.weights[m];
            if u < acc {
                comp = m;
                break;
            }
        }
        (0..self.dim())
            .map(|j| self.means[comp][j] + self.variances[comp][j].sqrt() * rng.normal())
            .collect()
    }
}

fn kmeans_init(frames: &Tensor, m: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let (n, d) = (frames.rows(), frames.cols());
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut chosen = std::collections::BTreeSet::new();
    while centers.len() < m {
        let idx = rng.below(n);
        if chosen.insert(idx) || chosen.len() >= n {
            centers.push(frames.row(idx).to_vec());
        }
    }
    let mut assign = vec![0usize; n];
    for _ in 0..5 {
        for t in 0..n {
            let x = frames.row(t);
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let dist: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            assign[t] = best.1;
        }
        let mut sums = vec![vec![0.0; d]; m];
        let mut counts = vec![0usize; m];
        for t in 0..n {
            counts[assign[t]] += 1;
            for j in 0..d {
                sums[assign[t]][j] += frames.at(t, j);
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                for j in 0..d {
                    centers[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
    }
    centers
}

/// EM fit. The total log-likelihood is non-decreasing across iterations
/// (within numerical slack); empty components are re-seeded from the
/// highest-variance component.
pub fn gmm_fit(frames: &Tensor, m: usize, iters: usize, seed: u64) -> Result<GaussianMixture> {
    let (n, d) = (frames.rows(), frames.cols());
    if m == 0 {
        return Err(Error::Estimation("mixture needs at least one component".into()));
    }
    if n < 10 * m {
        return Err(Error::Estimation(format!(
            "need at least {} frames for {m} components, got {n}",
            10 * m
        )));
    }

    // per-dimension global variance sets the floor
    let mut global_mean = vec![0.0; d];
    for t in 0..n {
        for j in 0..d {
            global_mean[j] += frames.at(t, j);
        }
    }
    for g in global_mean.iter_mut() {
        *g /= n as f64;
    }
    let mut floor = vec![0.0; d];
    for t in 0..n {
        for j in 0..d {
            let delta = frames.at(t, j) - global_mean[j];
            floor[j] += delta * delta;
        }
    }
    for f in floor.iter_mut() {
        *f = (*f / n as f64) * VARIANCE_FLOOR_FRACTION;
        if *f <= 0.0 {
            *f = 1e-12;
        }
    }

    let mut rng = Rng::new(seed);
    let centers = kmeans_init(frames, m, &mut rng);
    let mut gmm = GaussianMixture {
        weights: vec![1.0 / m as f64; m],
        means: centers,
        variances: vec![floor.iter().map(|f| (f / VARIANCE_FLOOR_FRACTION).max(1e-6)).collect(); m],
    };

    let mut resp = vec![0.0; m];
    for _ in 0..iters {
        let mut wsum = vec![0.0; m];
        let mut mean_acc = vec![vec![0.0; d]; m];
        let mut sq_acc = vec![vec![0.0; d]; m];
        for t in 0..n {
            let x = frames.row(t);
            gmm.posteriors(x, &mut resp);
            for c in 0..m {
                let r = resp[c];
                if r == 0.0 {
                    continue;
                }
                wsum[c] += r;
                for j in 0..d {
                    mean_acc[c][j] += r * x[j];
                    sq_acc[c][j] += r * x[j] * x[j];
                }
            }
        }
        for c in 0..m {
            if wsum[c] < 1e-8 {
                // re-seed a starved component from the widest one
                let widest = (0..m)
                    .max_by(|&a, &b| {
                        let va: f64 = gmm.variances[a].iter().sum();
                        let vb: f64 = gmm.variances[b].iter().sum();
                        va.partial_cmp(&vb).unwrap()
                    })
                    .unwrap();
                for j in 0..d {
                    gmm.means[c][j] = gmm.means[widest][j] + 0.5 * gmm.variances[widest][j].sqrt();
                    gmm.variances[c][j] = gmm.variances[widest][j];
                }
                gmm.weights[c] = gmm.weights[widest] / 2.0;
                gmm.weights[widest] /= 2.0;
                continue;
            }
            gmm.weights[c] = wsum[c] / n as f64;
            for j in 0..d {
                let mean = mean_acc[c][j] / wsum[c];
                let var = (sq_acc[c][j] / wsum[c] - mean * mean).max(floor[j]);
                gmm.means[c][j] = mean;
                gmm.variances[c][j] = var;
            }
        }
        let z: f64 = gmm.weights.iter().sum();
        for w in gmm.weights.iter_mut() {
            *w /= z;
        }
    }
    Ok(gmm)
}
