//! On-disk formats: binary feature archives, text embedding files, and
//! text transform files.
//!
//! The archive is binary so f64 frames round-trip bit-exactly. The text
//! formats print floats with `Display`, whose shortest-round-trip encoding
//! also reloads value-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fmllr::SpeakerTransform;
use crate::tensor::Tensor;

const ARCHIVE_MAGIC: &[u8; 4] = b"SARK";
const ARCHIVE_VERSION: u32 = 1;

/// Write utterance-keyed frame matrices: a header per utterance
/// (id, frame count, width) followed by row-major f64 frames.
pub fn write_feature_archive(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (id, frames) in entries {
        let id_bytes = id.as_bytes();
        buf.extend_from_slice(&(id_bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(id_bytes);
        buf.extend_from_slice(&(frames.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(frames.cols() as u64).to_le_bytes());
        for v in frames.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader {
    data: Vec<u8>,
    pos: usize,
    path: String,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!("{}: truncated archive", self.path)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format(format!("{}: invalid utf-8 string", self.path)))
    }
}

fn open_reader(path: &Path) -> Result<Reader> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut data)?;
    Ok(Reader { data, pos: 0, path: path.display().to_string() })
}

pub fn read_feature_archive(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let mut r = open_reader(path)?;
    if r.take(4)? != ARCHIVE_MAGIC {
        return Err(Error::Format(format!("{}: not a feature archive", path.display())));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported archive version {version}",
            path.display()
        )));
    }
    let n = r.u64()? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let id = r.string()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let data = r.f64s(rows * cols)?;
        out.insert(id, Tensor::new(vec![rows, cols], data)?);
    }
    Ok(out)
}

/// One record per line: `id v1 v2 ... vk`. Width must be consistent.
pub fn write_embeddings(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (id, vec) in entries {
        out.push_str(id);
        for v in vec {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load an id-keyed embedding file, e.g. vectors produced by an external
/// extractor. Inconsistent widths are rejected naming the offending id.
pub fn load_external_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read embeddings {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().unwrap().to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::Format(format!("embedding for {id} (line {}): bad float {p}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::Format(format!("embedding for {id} has no values")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("embedding for {id} has non-finite values")));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Format(format!(
                    "embedding width mismatch for {id}: expected {w}, got {}",
                    values.len()
                )));
            }
            _ => {}
        }
        out.insert(id, values);
    }
    Ok(out)
}

/// Speaker transforms: a `speaker_id d` header line, then d rows of d+1
/// values.
pub fn write_transforms(path: &Path, transforms: &[SpeakerTransform]) -> Result<()> {
    let mut out = String::new();
    for t in transforms {
        out.push_str(&format!("{} {}\n", t.speaker_id, t.dim));
        for i in 0..t.dim {
            let row = &t.w[i * (t.dim + 1)..(i + 1) * (t.dim + 1)];
            let strs: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&strs.join(" "));
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_transforms(path: &Path) -> Result<BTreeMap<String, SpeakerTransform>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read transforms {}: {e}", path.display())))?;
    let mut lines = text.lines().peekable();
    let mut out = BTreeMap::new();
    while let Some(header) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let mut parts = header.split_whitespace();
        let id = parts
            .next()
            .ok_or_else(|| Error::Format("transform header missing speaker id".into()))?
            .to_string();
        let dim: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Format(format!("transform {id}: bad dimension")))?;
        let mut w = Vec::with_capacity(dim * (dim + 1));
        for i in 0..dim {
            let row = lines
                .next()
                .ok_or_else(|| Error::Format(format!("transform {id}: missing row {i}")))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| Error::Format(format!("transform {id}: bad float {p}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "transform {id}: row {i} has {} values, expected {}",
                    vals.len(),
                    dim + 1
                )));
            }
            w.extend(vals);
        }
        let t = SpeakerTransform { speaker_id: id.clone(), w, dim };
        t.validate()?;
        out.insert(id, t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tmpdir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("sasr_{name}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn archive_roundtrip_bit_exact() {
        let dir = tmpdir("ark");
        let mut rng = Rng::new(1);
        let entries = vec![
            ("utt_a".to_string(), Tensor::uniform(&[7, 3], 5.0, &mut rng)),
            ("utt_b".to_string(), Tensor::uniform(&[2, 3], 5.0, &mut rng)),
        ];
        let path = dir.join("f.ark");
        write_feature_archive(&path, &entries).unwrap();
        let loaded = read_feature_archive(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        for (id, t) in &entries {
            assert!(loaded[id].bit_eq(t));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn archive_rejects_garbage() {
        let dir = tmpdir("bad_ark");
        let path = dir.join("f.ark");
        std::fs::write(&path, b"not an archive").unwrap();
        assert!(matches!(read_feature_archive(&path), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn embeddings_roundtrip_value_exact() {
        let dir = tmpdir("emb");
        let mut rng = Rng::new(2);
        let entries: Vec<(String, Vec<f64>)> = (0..5)
            .map(|i| (format!("spk{i}"), (0..4).map(|_| rng.normal() * 1e-3).collect()))
            .collect();
        let path = dir.join("x.txt");
        write_embeddings(&path, &entries).unwrap();
        let loaded = load_external_embeddings(&path).unwrap();
        for (id, v) in &entries {
            assert_eq!(&loaded[id], v);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn embeddings_empty_file_is_empty_map() {
        let dir = tmpdir("emb_empty");
        let path = dir.join("x.txt");
        std::fs::write(&path, "").unwrap();
        assert!(load_external_embeddings(&path).unwrap().is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn embeddings_single_record() {
        let dir = tmpdir("emb_one");
        let path = dir.join("x.txt");
        std::fs::write(&path, "spk1 0.1 0.2\n").unwrap();
        let loaded = load_external_embeddings(&path).unwrap();
        assert_eq!(loaded["spk1"], vec![0.1, 0.2]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn embeddings_width_mismatch_names_id() {
        let dir = tmpdir("emb_bad");
        let path = dir.join("x.txt");
        std::fs::write(&path, "spk1 0.1 0.2\nspk2 0.3\n").unwrap();
        match load_external_embeddings(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("spk2"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn transforms_roundtrip() {
        let dir = tmpdir("trans");
        let mut rng = Rng::new(3);
        let mut t = SpeakerTransform::identity("spkX", 3);
        for v in t.w.iter_mut() {
            *v += 0.2 * rng.normal();
        }
        let path = dir.join("w.txt");
        write_transforms(&path, &[t.clone()]).unwrap();
        let loaded = load_transforms(&path).unwrap();
        assert_eq!(loaded["spkX"].w, t.w);
        std::fs::remove_dir_all(&dir).ok();
    }
}
