//! Run the context encoder on a pseudo-waveform and inspect the
//! subsampling and per-block state shapes.
//!
//! ```bash
//! cargo run --release --example encoder_forward
//! ```

use sasr::encoder::{AuxInputs, Encoder, EncoderConfig};
use sasr::rng::Rng;
use sasr::tensor::Tensor;

fn main() {
    let cfg = EncoderConfig::desk_scale();
    println!(
        "encoder: hidden {}, blocks {}, heads {}, subsample x{}",
        cfg.hidden_size, cfg.n_blocks, cfg.n_heads, cfg.subsample_factor
    );

    let enc = Encoder::new(cfg.clone(), 42, 0).unwrap();
    println!("parameters: {}", enc.params.n_values());

    let mut rng = Rng::new(1);
    let wave = Tensor::uniform(&[160, 1], 1.0, &mut rng);
    let (hidden, states) = enc.encode(&wave, &AuxInputs::none()).unwrap();

    println!("waveform length {} -> {} frames of width {}", wave.rows(), hidden.rows(), hidden.cols());
    for (i, st) in states.iter().enumerate() {
        println!(
            "block {}: attention output {}x{}, block output {}x{}",
            i + 1,
            st.mha_output.rows(),
            st.mha_output.cols(),
            st.block_output.rows(),
            st.block_output.cols()
        );
    }

    // the feature-extraction path for speaker adaptation reads the final
    // block with no adapters and no gradients
    let features = enc.extract_features(&wave).unwrap();
    println!("extract_features: {}x{}", features.rows(), features.cols());
}
