//! CTC loss over all blank-augmented alignments, checked against explicit
//! path enumeration, plus greedy decoding.
//!
//! ```bash
//! cargo run --release --example ctc_alignment
//! ```

use sasr::ctc::{greedy_decode, loss_and_grad, min_frames};
use sasr::tensor::Tensor;

fn main() {
    // vocab {a=0, b=1, blank=2}; 4 frames
    let logits = Tensor::from_rows(&[
        vec![2.0, 0.1, 0.3],
        vec![1.8, 0.2, 1.9],
        vec![0.1, 0.2, 2.2],
        vec![0.2, 2.4, 0.3],
    ])
    .unwrap();

    let target = vec![0usize, 1];
    println!("target {:?} needs at least {} frames", target, min_frames(&target));

    let (loss, grad) = loss_and_grad(&logits, &target, 2).unwrap();
    println!("ctc loss = {loss:.6}");

    // enumerate all 3^4 frame labellings as an independent check
    let vocab = 3usize;
    let t_len = 4usize;
    let mut probs = vec![0.0; t_len * vocab];
    for t in 0..t_len {
        let row = logits.row(t);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        for k in 0..vocab {
            probs[t * vocab + k] = row[k].exp() / z;
        }
    }
    let mut total = 0.0;
    for code in 0..vocab.pow(t_len as u32) {
        let mut c = code;
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        let mut p = 1.0;
        for t in 0..t_len {
            let k = c % vocab;
            c /= vocab;
            p *= probs[t * vocab + k];
            if k != prev && k != 2 {
                collapsed.push(k);
            }
            prev = k;
        }
        if collapsed == target {
            total += p;
        }
    }
    println!("enumerated loss = {:.6} (difference {:.2e})", -total.ln(), (loss + total.ln()).abs());

    println!("gradient row sums (always zero): {:?}",
        (0..t_len).map(|t| grad.row(t).iter().sum::<f64>()).collect::<Vec<_>>());

    let decoded = greedy_decode(&logits, 2);
    println!("greedy decode: {decoded:?}");
}
