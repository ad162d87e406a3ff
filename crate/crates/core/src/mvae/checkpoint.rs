//! `MVM1` parameter containers.
//!
//! Layout: the ASCII magic `MVM1`, a little-endian `u32` byte length, that
//! many bytes of UTF-8 `key = value` header text, then each parameter matrix
//! as a complete `MVF1` record. For a model the header is the fully
//! materialized config and the matrices follow [`MvaeModel::block_names`]:
//! embedding layer 1 and 2, encoder trunk, mu head, logvar head, decoder
//! hidden and output layers (weight then bias each), with baseline2
//! appending the semantic pair after the image pair.

use std::fs;
use std::path::Path;

use crate::dataio::format::{decode_matrix, encode_matrix};
use crate::dataio::{parse_config_str, ModelConfig};
use crate::error::{Error, Result};
use crate::mvae::MvaeModel;
use crate::numcore::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MVM1";

pub fn encode_container(header: &str, blocks: &[&Matrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for m in blocks {
        encode_matrix(m, &mut out);
    }
    out
}

pub fn write_container(path: impl AsRef<Path>, header: &str, blocks: &[&Matrix]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_container(header, blocks)).map_err(|e| Error::io(path, e))
}

/// Reads a container back into its header text and matrices.
pub fn read_container(path: impl AsRef<Path>) -> Result<(String, Vec<Matrix>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format_err = |msg: String| Error::Format {
        path: path.to_owned(),
        msg,
    };
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            expected: 8,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(format_err(format!(
            "expected magic MVM1, found {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let text = bytes.get(8..8 + len).ok_or_else(|| Error::Truncated {
        path: path.to_owned(),
        expected: len,
        found: bytes.len() - 8,
    })?;
    let header = String::from_utf8(text.to_vec())
        .map_err(|_| format_err("header is not UTF-8".into()))?;
    let mut offset = 8 + len;
    let mut blocks = Vec::new();
    while offset < bytes.len() {
        blocks.push(decode_matrix(&bytes, &mut offset, path)?);
    }
    Ok((header, blocks))
}

pub fn save_model(path: impl AsRef<Path>, model: &MvaeModel) -> Result<()> {
    write_container(path, &model.config().to_config_string(), &model.params())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MvaeModel> {
    let path = path.as_ref();
    let (header, blocks) = read_container(path)?;
    let config: ModelConfig = parse_config_str(&header)?;
    MvaeModel::from_blocks(&config, blocks).map_err(|e| Error::Format {
        path: path.to_owned(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Variant;

    #[test]
    fn model_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        for v in Variant::ALL {
            let cfg = ModelConfig {
                d_img: 5,
                embed_hidden: 4,
                d_attr_embed: 3,
                vae_hidden: 6,
                latent: 2,
                variant: v,
                ..ModelConfig::default()
            };
            let m = MvaeModel::new(&cfg, 4).unwrap();
            let p = dir.path().join(format!("{v}.mvm"));
            save_model(&p, &m).unwrap();
            let back = load_model(&p).unwrap();
            assert_eq!(back.config(), m.config());
            for (a, b) in m.params().iter().zip(back.params()) {
                assert_eq!(a.shape(), b.shape());
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert_eq!(*x as f32, *y as f32);
                }
            }
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mvm");
        let cfg = ModelConfig {
            d_img: 3,
            embed_hidden: 2,
            d_attr_embed: 2,
            vae_hidden: 2,
            latent: 1,
            ..ModelConfig::default()
        };
        save_model(&p, &MvaeModel::new(&cfg, 2).unwrap()).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, &bytes).unwrap();
        assert!(load_model(&p).is_err());
        fs::write(&p, b"MVF1....").unwrap();
        assert!(matches!(load_model(&p), Err(Error::Format { .. })));
    }
}
