//! Linear discriminant analysis: a projection maximizing between-class over
//! within-class scatter, solved as a generalized symmetric eigenproblem via
//! Cholesky whitening.

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::Tensor;

/// Fit an h×out_dim projection from labelled frames. Columns are ordered by
/// decreasing discriminability (eigenvalue). A singular within-class
/// scatter is ridged by 1e-6·trace/h with a warning.
pub fn lda_fit(features: &Tensor, labels: &[usize], out_dim: usize) -> Result<Vec<f64>> {
    let (n, h) = (features.rows(), features.cols());
    if labels.len() != n {
        return Err(Error::Data(format!(
            "feature count {n} does not match label count {}",
            labels.len()
        )));
    }
    if out_dim == 0 || out_dim > h {
        return Err(Error::Config(format!("LDA out_dim {out_dim} outside 1..={h}")));
    }
    let n_classes = labels.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Data("LDA needs at least 2 classes".into()));
    }

    // class means and global mean
    let mut class_means = vec![vec![0.0; h]; n_classes];
    let mut global_mean = vec![0.0; h];
    for t in 0..n {
        let x = features.row(t);
        for j in 0..h {
            class_means[labels[t]][j] += x[j];
            global_mean[j] += x[j];
        }
    }
    for g in global_mean.iter_mut() {
        *g /= n as f64;
    }
    for (c, mean) in class_means.iter_mut().enumerate() {
        if counts[c] > 0 {
            for v in mean.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
    }

    // scatter matrices (normalized by N)
    let mut sw = vec![0.0; h * h];
    for t in 0..n {
        let x = features.row(t);
        let mu = &class_means[labels[t]];
        for i in 0..h {
            let di = x[i] - mu[i];
            for j in i..h {
                sw[i * h + j] += di * (x[j] - mu[j]);
            }
        }
    }
    let mut sb = vec![0.0; h * h];
    for (c, mu) in class_means.iter().enumerate() {
        if counts[c] == 0 {
            continue;
        }
        let w = counts[c] as f64;
        for i in 0..h {
            let di = mu[i] - global_mean[i];
            for j in i..h {
                sb[i * h + j] += w * di * (mu[j] - global_mean[j]);
            }
        }
    }
    for m in [&mut sw, &mut sb] {
        for i in 0..h {
            for j in 0..i {
                m[i * h + j] = m[j * h + i];
            }
        }
        for v in m.iter_mut() {
            *v /= n as f64;
        }
    }

    // whiten: Sw = L·Lᵀ, ridging if not positive definite
    let trace: f64 = (0..h).map(|i| sw[i * h + i]).sum();
    let mut ridge = 0.0;
    let l = loop {
        if let Some(l) = linalg::cholesky(&sw, h) {
            break l;
        }
        let add = if ridge == 0.0 { 1e-6 * trace.max(1e-12) / h as f64 } else { ridge * 10.0 };
        eprintln!("warning: within-class scatter singular; adding ridge {add:.3e}");
        for i in 0..h {
            sw[i * h + i] += add - ridge;
        }
        ridge = add;
        if ridge > trace.max(1.0) {
            return Err(Error::Estimation("within-class scatter irreparably singular".into()));
        }
    };

    // M = L⁻¹·Sb·L⁻ᵀ, symmetric
    let mut m = vec![0.0; h * h];
    for col in 0..h {
        let sb_col: Vec<f64> = (0..h).map(|r| sb[r * h + col]).collect();
        let y = linalg::solve_lower(&l, h, &sb_col);
        for r in 0..h {
            m[r * h + col] = y[r];
        }
    }
    let mt = linalg::transpose(&m, h, h);
    let mut m2 = vec![0.0; h * h];
    for col in 0..h {
        let row: Vec<f64> = (0..h).map(|r| mt[r * h + col]).collect();
        let y = linalg::solve_lower(&l, h, &row);
        for r in 0..h {
            m2[r * h + col] = y[r];
        }
    }
    for i in 0..h {
        for j in 0..i {
            let avg = 0.5 * (m2[i * h + j] + m2[j * h + i]);
            m2[i * h + j] = avg;
            m2[j * h + i] = avg;
        }
    }

    let (_vals, vecs) = linalg::jacobi_eigh(&m2, h);
    // projection columns: L⁻ᵀ·u for the leading eigenvectors
    let mut proj = vec![0.0; h * out_dim];
    for c in 0..out_dim {
        let u: Vec<f64> = (0..h).map(|r| vecs[r * h + c]).collect();
        let p = linalg::solve_lower_t(&l, h, &u);
        for r in 0..h {
            proj[r * out_dim + c] = p[r];
        }
    }
    Ok(proj)
}

/// Apply an h×out_dim projection to [N×h] features.
pub fn lda_project(features: &Tensor, projection: &[f64], out_dim: usize) -> Tensor {
    let (n, h) = (features.rows(), features.cols());
    let mut out = vec![0.0; n * out_dim];
    for t in 0..n {
        let x = features.row(t);
        for c in 0..out_dim {
            let mut s = 0.0;
            for j in 0..h {
                s += x[j] * projection[j * out_dim + c];
            }
            out[t * out_dim + c] = s;
        }
    }
    Tensor::new(vec![n, out_dim], out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn two_classes_align_with_separating_axis() {
        // class means ±1 along dim 0; dim 1 is undiscriminative noise
        let mut rng = Rng::new(1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            rows.push(vec![-1.0 + 0.01 * rng.normal(), rng.normal()]);
            labels.push(0);
            rows.push(vec![1.0 + 0.01 * rng.normal(), rng.normal()]);
            labels.push(1);
        }
        let features = Tensor::from_rows(&rows).unwrap();
        let p = lda_fit(&features, &labels, 1).unwrap();
        let norm = (p[0] * p[0] + p[1] * p[1]).sqrt();
        // sign-free alignment with the class axis
        assert!(p[0].abs() / norm > 0.999, "{p:?}");
    }

    /// Between/within trace ratio after projecting with P.
    fn trace_ratio(features: &Tensor, labels: &[usize], p: &[f64], k: usize) -> f64 {
        let projected = lda_project(features, p, k);
        let n = projected.rows();
        let n_classes = labels.iter().max().unwrap() + 1;
        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; k]; n_classes];
        let mut global = vec![0.0; k];
        for t in 0..n {
            counts[labels[t]] += 1;
            for j in 0..k {
                means[labels[t]][j] += projected.at(t, j);
                global[j] += projected.at(t, j);
            }
        }
        for g in global.iter_mut() {
            *g /= n as f64;
        }
        for (c, m) in means.iter_mut().enumerate() {
            for v in m.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        let mut sw = vec![0.0; k * k];
        let mut sb = vec![0.0; k * k];
        for t in 0..n {
            for i in 0..k {
                for j in 0..k {
                    sw[i * k + j] += (projected.at(t, i) - means[labels[t]][i])
                        * (projected.at(t, j) - means[labels[t]][j]);
                }
            }
        }
        for (c, m) in means.iter().enumerate() {
            for i in 0..k {
                for j in 0..k {
                    sb[i * k + j] += counts[c] as f64 * (m[i] - global[i]) * (m[j] - global[j]);
                }
            }
        }
        let lu = crate::linalg::Lu::factor(&sw, k).unwrap();
        let swinv = lu.inverse();
        let prod = crate::linalg::mat_mul(&swinv, &sb, k, k, k);
        (0..k).map(|i| prod[i * k + i]).sum()
    }

    #[test]
    fn beats_random_projections_of_equal_rank() {
        let mut rng = Rng::new(3);
        let h = 6;
        let centers = [
            vec![3.0, 0.0, 0.0, 0.5, 0.0, 0.0],
            vec![0.0, 3.0, 0.0, 0.0, 0.5, 0.0],
            vec![0.0, 0.0, 3.0, 0.0, 0.0, 0.5],
        ];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..150 {
                rows.push(center.iter().map(|v| v + rng.normal()).collect::<Vec<f64>>());
                labels.push(c);
            }
        }
        let features = Tensor::from_rows(&rows).unwrap();
        let k = 2;
        let p = lda_fit(&features, &labels, k).unwrap();
        let lda_score = trace_ratio(&features, &labels, &p, k);
        for trial in 0..20 {
            let mut rng2 = Rng::new(100 + trial);
            let q: Vec<f64> = (0..h * k).map(|_| rng2.normal()).collect();
            let random_score = trace_ratio(&features, &labels, &q, k);
            assert!(
                lda_score >= random_score - 1e-9,
                "trial {trial}: lda {lda_score} < random {random_score}"
            );
        }
    }

    #[test]
    fn rotation_invariance_up_to_sign() {
        // rotating inputs rotates the projection consistently: projected
        // coordinates (and hence the trace ratio) are preserved
        let mut rng = Rng::new(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..150 {
            rows.push(vec![-2.0 + 0.3 * rng.normal(), 0.2 * rng.normal()]);
            labels.push(0);
            rows.push(vec![2.0 + 0.3 * rng.normal(), 0.2 * rng.normal()]);
            labels.push(1);
        }
        let features = Tensor::from_rows(&rows).unwrap();
        let theta: f64 = 0.7;
        let rot = [theta.cos(), -theta.sin(), theta.sin(), theta.cos()];
        let rotated_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![rot[0] * r[0] + rot[1] * r[1], rot[2] * r[0] + rot[3] * r[1]])
            .collect();
        let rotated = Tensor::from_rows(&rotated_rows).unwrap();

        let p1 = lda_fit(&features, &labels, 1).unwrap();
        let p2 = lda_fit(&rotated, &labels, 1).unwrap();
        let a = lda_project(&features, &p1, 1);
        let b = lda_project(&rotated, &p2, 1);
        // identical up to a global sign
        let flip = if (a.at(0, 0) - b.at(0, 0)).abs() > 1e-6 { -1.0 } else { 1.0 };
        for t in 0..a.rows() {
            assert!((a.at(t, 0) - flip * b.at(t, 0)).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_scatter_gets_ridged() {
        // duplicate column makes within-class scatter singular
        let mut rng = Rng::new(7);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..100 {
            let v = rng.normal();
            rows.push(vec![v - 2.0, v - 2.0]);
            labels.push(0);
            let v = rng.normal();
            rows.push(vec![v + 2.0, v + 2.0]);
            labels.push(1);
        }
        let features = Tensor::from_rows(&rows).unwrap();
        assert!(lda_fit(&features, &labels, 1).is_ok());
    }

    #[test]
    fn needs_two_classes() {
        let features = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(lda_fit(&features, &[0, 0], 1).is_err());
    }
}
