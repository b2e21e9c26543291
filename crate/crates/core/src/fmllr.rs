//! Per-speaker feature-space MLLR: an affine transform W = [A | b] chosen
//! to maximize the likelihood of the speaker's frames under a shared
//! diagonal-covariance GMM, including the log|det A| Jacobian term.
//!
//! Estimation alternates posterior accumulation with row-wise updates.
//! With statistics fixed, each row solves a quadratic in the cofactor
//! direction; both roots are evaluated against the auxiliary objective and
//! the better one is kept only if it does not lose to the current row, so
//! the auxiliary objective never decreases across row updates.

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::linalg;
use crate::tensor::Tensor;

const ROW_SWEEPS_PER_ACCUMULATION: usize = 4;
const MIN_DET: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpeakerTransform {
    pub speaker_id: String,
    /// Row-major d×(d+1), [A | b].
    pub w: Vec<f64>,
    pub dim: usize,
}

impl SpeakerTransform {
    pub fn identity(speaker_id: &str, dim: usize) -> SpeakerTransform {
        let mut w = vec![0.0; dim * (dim + 1)];
        for i in 0..dim {
            w[i * (dim + 1) + i] = 1.0;
        }
        SpeakerTransform { speaker_id: speaker_id.to_string(), w, dim }
    }

    pub fn a_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = self.w[i * (d + 1) + j];
            }
        }
        a
    }

    pub fn bias(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| self.w[i * (d + 1) + d]).collect()
    }

    pub fn det_a(&self) -> f64 {
        match linalg::Lu::factor(&self.a_matrix(), self.dim) {
            Some(lu) => lu.det(),
            None => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.det_a().abs() <= MIN_DET {
            return Err(Error::Estimation(format!(
                "transform for {} is numerically singular",
                self.speaker_id
            )));
        }
        Ok(())
    }

    pub fn apply_frame(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let row = &self.w[i * (d + 1)..(i + 1) * (d + 1)];
            let mut s = row[d];
            for j in 0..d {
                s += row[j] * x[j];
            }
            y[i] = s;
        }
        y
    }
}

/// f_t = A·x_t + b for every frame.
pub fn fmllr_apply(features: &Tensor, transform: &SpeakerTransform) -> Result<Tensor> {
    if features.cols() != transform.dim {
        return Err(Error::Shape {
            left: features.shape().to_vec(),
            right: vec![transform.dim, transform.dim + 1],
        });
    }
    let rows: Vec<Vec<f64>> =
        (0..features.rows()).map(|t| transform.apply_frame(features.row(t))).collect();
    Tensor::from_rows(&rows)
}

/// Data log-likelihood of the transformed frames including the Jacobian
/// term N·log|det A|; the quantity fMLLR maximizes.
pub fn fmllr_objective(features: &Tensor, gmm: &GaussianMixture, transform: &SpeakerTransform) -> Result<f64> {
    let transformed = fmllr_apply(features, transform)?;
    Ok(gmm.total_log_likelihood(&transformed)
        + features.rows() as f64 * transform.det_a().abs().ln())
}

pub struct FmllrEstimate {
    pub transform: SpeakerTransform,
    /// Auxiliary objective after every row update, one trace per
    /// accumulation pass; non-decreasing within each trace.
    pub aux_traces: Vec<Vec<f64>>,
}

struct RowStats {
    /// Per row i: (d+1)×(d+1) weighted outer-product matrix.
    g: Vec<Vec<f64>>,
    /// Per row i: length d+1 linear term.
    k: Vec<Vec<f64>>,
    beta: f64,
}

fn accumulate(features: &Tensor, gmm: &GaussianMixture, w: &SpeakerTransform) -> RowStats {
    let d = features.cols();
    let e = d + 1;
    let m = gmm.n_components();
    let mut g = vec![vec![0.0; e * e]; d];
    let mut k = vec![vec![0.0; e]; d];
    let mut resp = vec![0.0; m];
    let mut xi = vec![0.0; e];
    let mut outer = vec![0.0; e * e];
    for t in 0..features.rows() {
        let x = features.row(t);
        let y = w.apply_frame(x);
        gmm.posteriors(&y, &mut resp);
        xi[..d].copy_from_slice(x);
        xi[d] = 1.0;
        for i in 0..e {
            for j in 0..e {
                outer[i * e + j] = xi[i] * xi[j];
            }
        }
        for i in 0..d {
            let mut s = 0.0;
            let mut r = 0.0;
            for c in 0..m {
                let inv_var = resp[c] / gmm.variances[c][i];
                s += inv_var;
                r += inv_var * gmm.means[c][i];
            }
            let gi = &mut g[i];
            for idx in 0..e * e {
                gi[idx] += s * outer[idx];
            }
            let ki = &mut k[i];
            for (kj, &xij) in ki.iter_mut().zip(&xi) {
                *kj += r * xij;
            }
        }
    }
    RowStats { g, k, beta: features.rows() as f64 }
}

/// Auxiliary objective under fixed statistics (constants dropped):
/// β·log|det A| − ½·Σᵢ wᵢGᵢwᵢᵀ + Σᵢ wᵢkᵢᵀ
fn aux_objective(stats: &RowStats, w: &SpeakerTransform) -> f64 {
    let d = w.dim;
    let e = d + 1;
    let mut q = stats.beta * w.det_a().abs().ln();
    for i in 0..d {
        let wi = &w.w[i * e..(i + 1) * e];
        let gw = linalg::mat_vec(&stats.g[i], e, e, wi);
        let quad: f64 = wi.iter().zip(&gw).map(|(a, b)| a * b).sum();
        let lin: f64 = wi.iter().zip(&stats.k[i]).map(|(a, b)| a * b).sum();
        q += -0.5 * quad + lin;
    }
    q
}

fn row_objective(stats: &RowStats, i: usize, wi: &[f64], cof: &[f64]) -> f64 {
    let e = wi.len();
    let det: f64 = wi[..e - 1].iter().zip(cof).map(|(a, b)| a * b).sum();
    if det.abs() <= MIN_DET {
        return f64::NEG_INFINITY;
    }
    let gw = linalg::mat_vec(&stats.g[i], e, e, wi);
    let quad: f64 = wi.iter().zip(&gw).map(|(a, b)| a * b).sum();
    let lin: f64 = wi.iter().zip(&stats.k[i]).map(|(a, b)| a * b).sum();
    stats.beta * det.abs().ln() - 0.5 * quad + lin
}

fn invert_with_ridge(g: &[f64], e: usize) -> Vec<f64> {
    if let Some(lu) = linalg::Lu::factor(g, e) {
        if lu.det().abs() > MIN_DET {
            return lu.inverse();
        }
    }
    let trace: f64 = (0..e).map(|i| g[i * e + i]).sum();
    let mut ridged = g.to_vec();
    let mut add = 1e-6 * trace.max(1e-6) / e as f64;
    loop {
        for i in 0..e {
            ridged[i * e + i] += add;
        }
        eprintln!("warning: fMLLR row statistics singular; ridged by {add:.3e}");
        if let Some(lu) = linalg::Lu::factor(&ridged, e) {
            if lu.det().abs() > MIN_DET {
                return lu.inverse();
            }
        }
        add *= 10.0;
    }
}

/// Estimate the maximum-likelihood transform for one speaker's frames.
/// `iters` accumulation passes, each followed by several row-update sweeps.
pub fn fmllr_estimate(
    features: &Tensor,
    gmm: &GaussianMixture,
    iters: usize,
    speaker_id: &str,
) -> Result<FmllrEstimate> {
    let d = features.cols();
    if gmm.dim() != d {
        return Err(Error::Shape { left: vec![features.rows(), d], right: vec![gmm.dim()] });
    }
    if features.rows() < d + 1 {
        return Err(Error::Estimation(format!(
            "speaker {speaker_id} has {} frames; fMLLR needs at least {}",
            features.rows(),
            d + 1
        )));
    }
    let e = d + 1;
    let mut w = SpeakerTransform::identity(speaker_id, d);
    let mut aux_traces = Vec::with_capacity(iters);

    for _pass in 0..iters {
        let stats = accumulate(features, gmm, &w);
        let ginv: Vec<Vec<f64>> = stats.g.iter().map(|g| invert_with_ridge(g, e)).collect();
        let mut trace = vec![aux_objective(&stats, &w)];

        for _sweep in 0..ROW_SWEEPS_PER_ACCUMULATION {
            for i in 0..d {
                let a = w.a_matrix();
                let lu = match linalg::Lu::factor(&a, d) {
                    Some(lu) => lu,
                    None => break,
                };
                let det = lu.det();
                let inv = lu.inverse();
                // cofactor row i of A: det·(A⁻¹)ᵀ row i
                let mut cof = vec![0.0; e];
                for j in 0..d {
                    cof[j] = det * inv[j * d + i];
                }

                let gi = &ginv[i];
                let p_g: Vec<f64> = linalg::mat_vec(gi, e, e, &cof);
                let quad_a: f64 = cof.iter().zip(&p_g).map(|(a, b)| a * b).sum();
                let k_g: Vec<f64> = linalg::mat_vec(gi, e, e, &stats.k[i]);
                let lin_c: f64 = cof.iter().zip(&k_g).map(|(a, b)| a * b).sum();
                if quad_a <= 0.0 {
                    continue;
                }
                let disc = (lin_c * lin_c + 4.0 * quad_a * stats.beta).sqrt();
                let current = w.w[i * e..(i + 1) * e].to_vec();
                let cof_d = &cof[..d];
                let mut best = (row_objective(&stats, i, &current, cof_d), current.clone());
                for alpha in [(-lin_c + disc) / (2.0 * quad_a), (-lin_c - disc) / (2.0 * quad_a)] {
                    let cand: Vec<f64> = (0..e)
                        .map(|j| {
                            let mut s = 0.0;
                            for l in 0..e {
                                s += (alpha * cof[l] + stats.k[i][l]) * gi[l * e + j];
                            }
                            s
                        })
                        .collect();
                    let q = row_objective(&stats, i, &cand, cof_d);
                    if q.is_finite() && q > best.0 {
                        best = (q, cand);
                    }
                }
                if !best.0.is_finite() {
                    eprintln!("warning: fMLLR row {i} update inadmissible; keeping previous row");
                    continue;
                }
                w.w[i * e..(i + 1) * e].copy_from_slice(&best.1);
                trace.push(aux_objective(&stats, &w));
            }
        }
        aux_traces.push(trace);
    }
    w.validate()?;
    Ok(FmllrEstimate { transform: w, aux_traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::gmm_fit;
    use crate::rng::Rng;

    fn toy_gmm() -> GaussianMixture {
        GaussianMixture {
            weights: vec![0.4, 0.6],
            means: vec![vec![-2.0, 0.0, 1.0], vec![2.0, 1.0, -1.0]],
            variances: vec![vec![0.5, 0.8, 0.6], vec![0.7, 0.4, 0.9]],
        }
    }

    #[test]
    fn identity_transform_applies_as_identity() {
        let w = SpeakerTransform::identity("s", 3);
        let mut rng = Rng::new(1);
        let x = Tensor::uniform(&[5, 3], 2.0, &mut rng);
        let y = fmllr_apply(&x, &w).unwrap();
        assert!(x.bit_eq(&y));
    }

    #[test]
    fn hand_affine_application() {
        // A = 2I, b = (1, 0): x = (1,1) → (3, 2)
        let mut w = SpeakerTransform::identity("s", 2);
        w.w = vec![2.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        let x = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let y = fmllr_apply(&x, &w).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
    }

    #[test]
    fn apply_is_invertible() {
        let mut rng = Rng::new(3);
        let mut w = SpeakerTransform::identity("s", 3);
        for v in w.w.iter_mut() {
            *v += 0.3 * rng.normal();
        }
        w.validate().unwrap();
        let x = Tensor::uniform(&[10, 3], 1.0, &mut rng);
        let y = fmllr_apply(&x, &w).unwrap();
        // reconstruct x from y via A⁻¹(y − b)
        let a = w.a_matrix();
        let lu = linalg::Lu::factor(&a, 3).unwrap();
        let b = w.bias();
        for t in 0..x.rows() {
            let shifted: Vec<f64> = y.row(t).iter().zip(&b).map(|(v, bb)| v - bb).collect();
            let back = lu.solve(&shifted);
            for (p, q) in back.iter().zip(x.row(t)) {
                assert!((p - q).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn in_distribution_data_estimates_near_identity() {
        let gmm = {
            // d=5 mixture with well-spread means
            let mut rng = Rng::new(11);
            let means: Vec<Vec<f64>> =
                (0..4).map(|_| (0..5).map(|_| 3.0 * rng.normal()).collect()).collect();
            GaussianMixture {
                weights: vec![0.25; 4],
                means,
                variances: vec![vec![0.6; 5]; 4],
            }
        };
        let mut rng = Rng::new(12);
        let rows: Vec<Vec<f64>> = (0..5000).map(|_| gmm.sample(&mut rng)).collect();
        let frames = Tensor::from_rows(&rows).unwrap();
        let est = fmllr_estimate(&frames, &gmm, 5, "spk").unwrap();
        let a = est.transform.a_matrix();
        let mut fro = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let delta = a[i * 5 + j] - if i == j { 1.0 } else { 0.0 };
                fro += delta * delta;
            }
        }
        assert!(fro.sqrt() < 0.1, "‖A−I‖_F = {}", fro.sqrt());
        let bnorm: f64 = est.transform.bias().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(bnorm < 0.1, "‖b‖ = {bnorm}");
    }

    #[test]
    fn aux_objective_non_decreasing_across_row_updates() {
        let gmm = toy_gmm();
        let mut rng = Rng::new(21);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let mut x = gmm.sample(&mut rng);
                x[0] = 1.3 * x[0] + 0.4;
                x[2] -= 0.7 * x[1];
                x
            })
            .collect();
        let frames = Tensor::from_rows(&rows).unwrap();
        let est = fmllr_estimate(&frames, &gmm, 10, "spk").unwrap();
        for (pass, trace) in est.aux_traces.iter().enumerate() {
            for win in trace.windows(2) {
                assert!(
                    win[1] >= win[0] - 1e-8,
                    "pass {pass}: objective dropped {} -> {}",
                    win[0],
                    win[1]
                );
            }
        }
    }

    #[test]
    fn estimation_improves_likelihood_of_distorted_features() {
        let mut rng = Rng::new(31);
        let clean_rows: Vec<Vec<f64>> = (0..2000).map(|_| toy_gmm().sample(&mut rng)).collect();
        // known affine distortion
        let t_mat = vec![1.4, 0.2, 0.0, -0.1, 0.9, 0.3, 0.05, 0.0, 1.2];
        let shift = [0.5, -0.8, 0.2];
        let distorted_rows: Vec<Vec<f64>> = clean_rows
            .iter()
            .map(|x| {
                let mut y = linalg::mat_vec(&t_mat, 3, 3, x);
                for (v, s) in y.iter_mut().zip(&shift) {
                    *v += s;
                }
                y
            })
            .collect();
        let distorted = Tensor::from_rows(&distorted_rows).unwrap();
        let gmm = toy_gmm();
        let est = fmllr_estimate(&distorted, &gmm, 8, "spk").unwrap();
        let before = gmm.total_log_likelihood(&distorted);
        let after = gmm.total_log_likelihood(&fmllr_apply(&distorted, &est.transform).unwrap());
        assert!(after > before, "{after} vs {before}");
    }

    #[test]
    fn too_few_frames_is_an_estimation_error() {
        let gmm = toy_gmm();
        let frames = Tensor::from_rows(&vec![vec![0.0, 0.0, 0.0]; 3]).unwrap();
        assert!(matches!(fmllr_estimate(&frames, &gmm, 2, "s"), Err(Error::Estimation(_))));
    }

    #[test]
    fn gmm_and_fmllr_dims_must_agree() {
        let gmm = toy_gmm();
        let frames = Tensor::from_rows(&vec![vec![0.0, 0.0]; 10]).unwrap();
        assert!(fmllr_estimate(&frames, &gmm, 2, "s").is_err());
    }

    #[test]
    fn estimate_on_gmm_fit_pipeline() {
        // end-to-end: fit a GMM on pooled data, then estimate a transform
        let mut rng = Rng::new(41);
        let mut rows = Vec::new();
        for _ in 0..600 {
            rows.push(vec![rng.normal() - 2.0, rng.normal() + 1.0]);
            rows.push(vec![rng.normal() + 2.0, rng.normal() - 1.0]);
        }
        let frames = Tensor::from_rows(&rows).unwrap();
        let gmm = gmm_fit(&frames, 2, 8, 0).unwrap();
        let est = fmllr_estimate(&frames, &gmm, 4, "s").unwrap();
        est.transform.validate().unwrap();
    }
}
