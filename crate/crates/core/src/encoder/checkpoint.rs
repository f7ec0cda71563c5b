//! Binary checkpoint: magic, u32 header length, JSON header, then raw
//! little-endian f32 parameter blocks in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::toy::TOY_ARCH;
use super::{EncoderError, Matrix, ToyEncoder, VisionTextEncoder};
use crate::taxonomy::CaptionCategory;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSTYCKP1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Classifier metadata stored alongside fine-tuned weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub category: CaptionCategory,
    pub labels: Vec<String>,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    name: String,
    arch: String,
    embed_dim: usize,
    params: Vec<ParamShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classifier: Option<ClassifierMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: ToyEncoder,
    pub classifier: Option<ClassifierMeta>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let enc = &self.encoder;
        let blocks = [
            ("image_projection", enc.image_projection()),
            ("text_projection", enc.text_projection()),
        ];
        let header = Header {
            name: enc.name().to_string(),
            arch: TOY_ARCH.to_string(),
            embed_dim: enc.embed_dim(),
            params: blocks
                .iter()
                .map(|(n, m)| ParamShape {
                    name: n.to_string(),
                    shape: vec![m.rows(), m.cols()],
                })
                .collect(),
            classifier: self.classifier.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(
            12 + json.len()
                + 4 * (enc.image_projection().as_slice().len()
                    + enc.text_projection().as_slice().len()),
        );
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in blocks {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let fail = |msg: String| EncoderError::Failure(format!("corrupt checkpoint: {msg}"));
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail("bad magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < header_len {
            return Err(fail("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| fail(e.to_string()))?;
        if header.arch != TOY_ARCH {
            return Err(EncoderError::Failure(format!(
                "unsupported encoder architecture {:?}",
                header.arch
            )));
        }
        let mut rest = &body[header_len..];
        let mut mats = Vec::new();
        for p in &header.params {
            let [rows, cols] = p.shape[..] else {
                return Err(fail(format!("parameter {} is not 2-D", p.name)));
            };
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| fail("shape overflow".into()))?;
            if rest.len() < 4 * n {
                return Err(fail(format!("parameter {} truncated", p.name)));
            }
            let data = rest[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            rest = &rest[4 * n..];
            mats.push((
                p.name.as_str(),
                Matrix::from_vec(rows, cols, data).expect("sized"),
            ));
        }
        if !rest.is_empty() {
            return Err(fail(format!("{} trailing bytes", rest.len())));
        }
        let take = |name: &str| {
            mats.iter()
                .find(|(n, _)| *n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| fail(format!("missing parameter {name}")))
        };
        let encoder = ToyEncoder::from_parts(
            header.name,
            take("image_projection")?,
            take("text_projection")?,
        )?;
        if encoder.embed_dim() != header.embed_dim {
            return Err(fail("embed_dim disagrees with parameter shapes".into()));
        }
        Ok(Checkpoint {
            encoder,
            classifier: header.classifier,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), EncoderError> {
    std::fs::write(path, checkpoint.to_bytes())
        .map_err(|e| EncoderError::Failure(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, EncoderError> {
    let bytes = std::fs::read(path)
        .map_err(|e| EncoderError::Failure(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}
