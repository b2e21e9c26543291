//! CTC loss via log-space forward-backward, plus greedy decoding.
//!
//! The loss sums over every blank-augmented alignment of the target. The
//! gradient w.r.t. the logits is `softmax(logits) − γ`, where γ collects the
//! per-frame posterior mass of each symbol over alignments.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const NEG_INF: f64 = f64::NEG_INFINITY;

fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Minimum frame count able to emit `target`: one frame per symbol plus a
/// separating blank between adjacent repeats.
pub fn min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

/// Loss and its exact gradient w.r.t. the logits.
pub fn loss_and_grad(logits: &Tensor, target: &[usize], blank: usize) -> Result<(f64, Tensor)> {
    let (t_len, vocab) = (logits.rows(), logits.cols());
    if blank >= vocab {
        return Err(Error::Config(format!("blank index {blank} outside vocab of {vocab}")));
    }
    for &tok in target {
        if tok >= vocab || tok == blank {
            return Err(Error::Config(format!("target token {tok} invalid for vocab of {vocab}")));
        }
    }
    let required = min_frames(target);
    if t_len < required {
        return Err(Error::InfeasibleTarget { frames: t_len, required });
    }

    // log-softmax per frame
    let mut logp = vec![0.0; t_len * vocab];
    let mut probs = vec![0.0; t_len * vocab];
    for t in 0..t_len {
        let row = logits.row(t);
        let max = row.iter().cloned().fold(NEG_INF, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let logz = max + z.ln();
        for k in 0..vocab {
            logp[t * vocab + k] = row[k] - logz;
            probs[t * vocab + k] = (row[k] - logz).exp();
        }
    }

    // blank-augmented label sequence
    let s_len = 2 * target.len() + 1;
    let lab = |s: usize| -> usize {
        if s % 2 == 0 {
            blank
        } else {
            target[s / 2]
        }
    };

    let mut alpha = vec![NEG_INF; t_len * s_len];
    alpha[0] = logp[blank];
    if s_len > 1 {
        alpha[1] = logp[lab(1)];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut terms = [NEG_INF; 3];
            terms[0] = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                terms[1] = alpha[(t - 1) * s_len + s - 1];
            }
            if s >= 2 && lab(s) != blank && lab(s) != lab(s - 2) {
                terms[2] = alpha[(t - 1) * s_len + s - 2];
            }
            let prev = log_sum_exp(&terms);
            alpha[t * s_len + s] = prev + logp[t * vocab + lab(s)];
        }
    }

    let tail = if s_len > 1 {
        [alpha[(t_len - 1) * s_len + s_len - 1], alpha[(t_len - 1) * s_len + s_len - 2]]
    } else {
        [alpha[(t_len - 1) * s_len], NEG_INF]
    };
    let log_total = log_sum_exp(&tail);
    if !log_total.is_finite() {
        return Err(Error::InfeasibleTarget { frames: t_len, required });
    }

    // beta[t][s]: suffix probability from t+1 onward, given state s at t
    let mut beta = vec![NEG_INF; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = 0.0;
    }
    for t in (0..t_len.saturating_sub(1)).rev() {
        for s in 0..s_len {
            let mut terms = [NEG_INF; 3];
            terms[0] = beta[(t + 1) * s_len + s] + logp[(t + 1) * vocab + lab(s)];
            if s + 1 < s_len {
                terms[1] = beta[(t + 1) * s_len + s + 1] + logp[(t + 1) * vocab + lab(s + 1)];
            }
            if s + 2 < s_len && lab(s + 2) != blank && lab(s + 2) != lab(s) {
                terms[2] = beta[(t + 1) * s_len + s + 2] + logp[(t + 1) * vocab + lab(s + 2)];
            }
            beta[t * s_len + s] = log_sum_exp(&terms);
        }
    }

    // gradient: softmax − per-symbol posterior mass
    let mut grad = probs;
    for t in 0..t_len {
        let mut gamma = vec![NEG_INF; vocab];
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_total;
            let k = lab(s);
            gamma[k] = log_sum_exp(&[gamma[k], occ]);
        }
        for k in 0..vocab {
            if gamma[k] != NEG_INF {
                grad[t * vocab + k] -= gamma[k].exp();
            }
        }
    }

    Ok((-log_total, Tensor::new(vec![t_len, vocab], grad)?))
}

/// Per-frame argmax, collapse repeats, strip blanks.
pub fn greedy_decode(logits: &Tensor, blank: usize) -> Vec<usize> {
    let (t_len, vocab) = (logits.rows(), logits.cols());
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..t_len {
        let row = logits.row(t);
        let mut best = 0;
        for k in 1..vocab {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best != prev && best != blank {
            out.push(best);
        }
        prev = best;
    }
    out
}
