//! Versioned binary model checkpoints: encoder configuration, vocabulary,
//! adapter specs, and every parameter tensor, value-exact on reload.

use std::io::{Read, Write};
use std::path::Path;

use crate::adapter::{AdapterSpec, AuxKind};
use crate::corpus::{Token, Vocabulary};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"SCKP";
const VERSION: u32 = 1;

fn push_string(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

pub fn save_checkpoint(path: &Path, model: &Encoder, vocab: &Vocabulary) -> Result<()> {
    if vocab.total() != model.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary of {} units+blank does not match head width {}",
            vocab.total(),
            model.vocab_size
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = &model.config;
    for v in [cfg.hidden_size, cfg.n_blocks, cfg.n_heads, cfg.subsample_factor, cfg.ffn_width] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&(vocab.units() as u32).to_le_bytes());
    for t in vocab.tokens() {
        push_string(&mut buf, &t.name);
        match &t.lang {
            Some(l) => {
                buf.push(1);
                push_string(&mut buf, l);
            }
            None => buf.push(0),
        }
    }
    buf.extend_from_slice(&(model.adapters().len() as u32).to_le_bytes());
    for a in model.adapters() {
        buf.extend_from_slice(&(a.block_index as u32).to_le_bytes());
        buf.extend_from_slice(&(a.bottleneck_dim as u32).to_le_bytes());
        buf.push(match a.aux_kind {
            AuxKind::None => 0,
            AuxKind::Fmllr => 1,
            AuxKind::Xvector => 2,
        });
        buf.extend_from_slice(&(a.aux_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(a.aux_proj_dim as u32).to_le_bytes());
        buf.push(u8::from(a.relu_after_up));
    }
    buf.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for (name, tensor) in model.params.iter() {
        push_string(&mut buf, name);
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor {
    data: Vec<u8>,
    pos: usize,
}

impl Cursor {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Format("invalid utf-8 in checkpoint".into()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Encoder, Vocabulary)> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open checkpoint {}: {e}", path.display())))?
        .read_to_end(&mut data)?;
    let mut c = Cursor { data, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Format(format!("{} is not a model checkpoint", path.display())));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = EncoderConfig {
        hidden_size: c.u32()? as usize,
        n_blocks: c.u32()? as usize,
        n_heads: c.u32()? as usize,
        subsample_factor: c.u32()? as usize,
        ffn_width: c.u32()? as usize,
    };
    let n_tokens = c.u32()? as usize;
    let mut tokens = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        let name = c.string()?;
        let lang = if c.u8()? == 1 { Some(c.string()?) } else { None };
        tokens.push(Token { name, lang });
    }
    let vocab = Vocabulary::new(tokens)?;
    let n_adapters = c.u32()? as usize;
    let mut adapters = Vec::with_capacity(n_adapters);
    for _ in 0..n_adapters {
        let block_index = c.u32()? as usize;
        let bottleneck_dim = c.u32()? as usize;
        let aux_kind = match c.u8()? {
            0 => AuxKind::None,
            1 => AuxKind::Fmllr,
            2 => AuxKind::Xvector,
            other => return Err(Error::Format(format!("unknown aux kind tag {other}"))),
        };
        let aux_dim = c.u32()? as usize;
        let aux_proj_dim = c.u32()? as usize;
        let relu_after_up = c.u8()? == 1;
        adapters.push(AdapterSpec {
            block_index,
            bottleneck_dim,
            aux_kind,
            aux_dim,
            aux_proj_dim,
            relu_after_up,
        });
    }
    let n_params = c.u64()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n_params {
        let name = c.string()?;
        let ndim = c.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = c.take(8 * len)?;
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.insert(&name, Tensor::new(shape, values)?)?;
    }
    let model = Encoder::from_parts(config, vocab.total(), params, adapters)?;
    Ok((model, vocab))
}
