//! Binary checkpoint: configuration, vocabulary and every parameter
//! tensor (embeddings included) in one self-describing file.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Vocabulary};
use crate::numerics::Tensor;

use super::config::ModelConfig;
use super::params::ModelParams;
use super::ModelError;

const MAGIC: &[u8; 8] = b"MLMNCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocabulary,
}

/// A trained matcher ready to save or score.
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION)?;
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })?;
        out.write_u64::<LittleEndian>(header.len() as u64)?;
        out.extend_from_slice(&header);

        let named = self.params.named();
        out.write_u32::<LittleEndian>(named.len() as u32)?;
        for (name, tensor) in named {
            out.write_u16::<LittleEndian>(name.len() as u16)?;
            out.extend_from_slice(name.as_bytes());
            out.write_u8(tensor.shape().len() as u8)?;
            for &d in tensor.shape() {
                out.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in tensor.data() {
                out.write_f64::<LittleEndian>(v)?;
            }
        }
        // write-then-rename so a crash never leaves a torn checkpoint
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, out)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Incompatible(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(ModelError::Incompatible(format!(
                "checkpoint version {version}, this build reads {VERSION}"
            )));
        }
        let header_len = r.read_u64::<LittleEndian>()? as usize;
        if header_len > r.len() {
            return Err(ModelError::Incompatible("truncated header".into()));
        }
        let mut header: Header = serde_json::from_slice(&r[..header_len])?;
        header.vocab.rebuild();
        r = &r[header_len..];

        let n_tensors = r.read_u32::<LittleEndian>()? as usize;
        let mut tensors: HashMap<String, Tensor<f64>> = HashMap::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.read_u16::<LittleEndian>()? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| ModelError::Incompatible("bad tensor name".into()))?;
            let ndim = r.read_u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.read_u32::<LittleEndian>()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.read_f64::<LittleEndian>()?);
            }
            tensors.insert(name, Tensor::from_vec(shape, data)?);
        }

        let embedding = EmbeddingTable::zeros(header.vocab.len(), header.config.embed_dim);
        let mut params = ModelParams::init(&header.config, embedding, 0)?;
        for (name, slot) in params.named_mut() {
            let stored = tensors.remove(&name).ok_or_else(|| {
                ModelError::Incompatible(format!("checkpoint is missing tensor {name}"))
            })?;
            if stored.shape() != slot.shape() {
                return Err(ModelError::Incompatible(format!(
                    "tensor {name}: checkpoint shape {:?}, model expects {:?}",
                    stored.shape(),
                    slot.shape()
                )));
            }
            *slot = stored;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(ModelError::Incompatible(format!(
                "checkpoint has unexpected tensor {extra}"
            )));
        }
        Ok(Self {
            config: header.config,
            vocab: header.vocab,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_checkpoint() -> Checkpoint {
        let docs = vec![vec!["a", "b", "c", "d", "e", "f"]];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let config = ModelConfig::tiny(4, 5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let emb = EmbeddingTable::random(vocab.len(), 4, &mut rng);
        let params = ModelParams::init(&config, emb, 3).unwrap();
        Checkpoint {
            config,
            vocab,
            params,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt.config, loaded.config);
        assert_eq!(ckpt.vocab, loaded.vocab);
        assert_eq!(ckpt.params, loaded.params);
        // saving again produces identical bytes
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTAFILE0000").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(ModelError::Incompatible(_))
        ));
    }

    #[test]
    fn version_bump_rejected() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(ModelError::Incompatible(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ckpt = toy_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let mut tampered = Checkpoint::load(&path).unwrap();
        tampered.config.g1_width = 5;
        // header now disagrees with the stored tensor shapes
        tampered.save(&path).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(ModelError::Incompatible(_))
        ));
    }
}
