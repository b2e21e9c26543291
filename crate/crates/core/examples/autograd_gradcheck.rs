//! Build a few differentiable ops and verify their analytic gradients
//! against central finite differences.
//!
//! ```bash
//! cargo run --release --example autograd_gradcheck
//! ```

use sasr::gradcheck::{max_rel_err, numeric_grad};
use sasr::graph::Graph;
use sasr::rng::Rng;
use sasr::tensor::Tensor;

fn main() {
    let mut rng = Rng::new(42);
    let x0 = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let w0 = Tensor::uniform(&[4, 2], 1.0, &mut rng);
    let b0 = Tensor::uniform(&[2], 1.0, &mut rng);
    let readout = Tensor::uniform(&[2, 1], 1.0, &mut rng);

    // scalar = sum(relu(x·w + b) · readout)
    let forward = |xv: &[f64], wv: &[f64]| -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![3, 4], xv.to_vec()).unwrap(), false);
        let w = g.leaf(Tensor::new(vec![4, 2], wv.to_vec()).unwrap(), false);
        let b = g.leaf(b0.clone(), false);
        let ro = g.leaf(readout.clone(), false);
        let zero = g.leaf(Tensor::zeros(&[1]), false);
        let y = g.linear(x, w, b).unwrap();
        let r = g.relu(y);
        let z = g.linear(r, ro, zero).unwrap();
        let s = g.sum(z);
        g.scalar_value(s)
    };

    // analytic gradients from one reverse sweep
    let mut g = Graph::new();
    let x = g.leaf(x0.clone(), true);
    let w = g.leaf(w0.clone(), true);
    let b = g.leaf(b0.clone(), false);
    let ro = g.leaf(readout.clone(), false);
    let zero = g.leaf(Tensor::zeros(&[1]), false);
    let y = g.linear(x, w, b).unwrap();
    let r = g.relu(y);
    let z = g.linear(r, ro, zero).unwrap();
    let s = g.sum(z);
    g.backward(s).unwrap();

    let dx = g.grad(x).unwrap().data().to_vec();
    let dw = g.grad(w).unwrap().data().to_vec();

    let ndx = numeric_grad(|xv| forward(xv, w0.data()), x0.data(), 1e-5);
    let ndw = numeric_grad(|wv| forward(x0.data(), wv), w0.data(), 1e-5);

    println!("loss                = {:.6}", g.scalar_value(s));
    println!("max rel err d/dx    = {:.3e}", max_rel_err(&dx, &ndx, 1e-9));
    println!("max rel err d/dw    = {:.3e}", max_rel_err(&dw, &ndw, 1e-9));
    println!("analytic d/dw[0..4] = {:?}", &dw[..4.min(dw.len())]);
    println!("numeric  d/dw[0..4] = {:?}", &ndw[..4.min(ndw.len())]);
}
