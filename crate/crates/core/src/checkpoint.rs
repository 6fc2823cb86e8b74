//! Self-contained model snapshots. A checkpoint carries everything needed
//! to classify new text: architecture config, label names, normalization
//! flag, vocabulary, and weights.
//!
//! File layout, all integers in decimal ASCII, weights little-endian f32:
//!
//! ```text
//! ADTXT1\n
//! <one-line JSON: config, label_names, turkish_lowercase>\n
//! vocab <token count>\n
//! <token>\n               (repeated)
//! weights <block count>\n
//! <parameter name>\n      (repeated per block)
//! <dim0 dim1 ...>\n
//! <len * 4 raw bytes>\n
//! end\n
//! ```
//!
//! Writing is deterministic: identical models produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tokenizer::Vocabulary;

const MAGIC: &str = "ADTXT1";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    label_names: Vec<String>,
    turkish_lowercase: bool,
}

/// A trained (or freshly initialized) model plus its preprocessing context.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
    pub label_names: Vec<String>,
    pub turkish_lowercase: bool,
}

impl Checkpoint {
    /// Bundles a model with its vocabulary and labels, verifying that the
    /// shapes agree before anything reaches disk.
    pub fn new(
        params: ModelParams<f32>,
        vocab: Vocabulary,
        label_names: Vec<String>,
        turkish_lowercase: bool,
    ) -> Result<Self> {
        if params.config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "model vocab_size {} does not match vocabulary of {} tokens",
                params.config.vocab_size,
                vocab.len()
            )));
        }
        if params.config.num_classes != label_names.len() {
            return Err(Error::Config(format!(
                "model num_classes {} does not match {} label names",
                params.config.num_classes,
                label_names.len()
            )));
        }
        Ok(Checkpoint {
            params,
            vocab,
            label_names,
            turkish_lowercase,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Meta {
            config: self.params.config.clone(),
            label_names: self.label_names.clone(),
            turkish_lowercase: self.turkish_lowercase,
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(
            serde_json::to_string(&meta)
                .expect("meta serializes")
                .as_bytes(),
        );
        out.push(b'\n');

        out.extend_from_slice(format!("vocab {}\n", self.vocab.len()).as_bytes());
        for token in self.vocab.tokens() {
            out.extend_from_slice(token.as_bytes());
            out.push(b'\n');
        }

        let fields = self.params.fields();
        out.extend_from_slice(format!("weights {}\n", fields.len()).as_bytes());
        for p in fields {
            out.extend_from_slice(p.name.as_bytes());
            out.push(b'\n');
            let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
            out.extend_from_slice(dims.join(" ").as_bytes());
            out.push(b'\n');
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(b'\n');
        }
        out.extend_from_slice(b"end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("cannot read: {e}"),
        })?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.line()?;
        if magic != MAGIC {
            return Err(fail(format!("bad magic {magic:?}, expected {MAGIC:?}")));
        }
        let meta: Meta = serde_json::from_str(cursor.line()?)
            .map_err(|e| fail(format!("malformed metadata: {e}")))?;
        meta.config.validate()?;

        let vocab_header = cursor.line()?;
        let count: usize = vocab_header
            .strip_prefix("vocab ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| fail(format!("expected 'vocab <count>', found {vocab_header:?}")))?;
        let mut tokens = Vec::with_capacity(count);
        for _ in 0..count {
            tokens.push(cursor.line()?.to_string());
        }
        let vocab = Vocabulary::from_tokens(tokens)?;

        let weights_header = cursor.line()?;
        let blocks: usize = weights_header
            .strip_prefix("weights ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| {
                fail(format!(
                    "expected 'weights <count>', found {weights_header:?}"
                ))
            })?;

        // Start from a freshly initialized model of the right architecture,
        // then overwrite every tensor from the file, requiring exactly one
        // block per parameter.
        let mut params = ModelParams::<f32>::init(meta.config.clone(), 0)?;
        let expected = params.fields().len();
        if blocks != expected {
            return Err(fail(format!(
                "{blocks} weight blocks, model needs {expected}"
            )));
        }
        let mut filled = vec![false; expected];
        for _ in 0..blocks {
            let name = cursor.line()?.to_string();
            let dims_line = cursor.line()?;
            let shape: Vec<usize> = dims_line
                .split_whitespace()
                .map(|d| {
                    d.parse()
                        .map_err(|e| fail(format!("bad dimension {d:?} for {name:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            let len: usize = shape.iter().product();
            let raw = cursor.exact(len * 4)?;
            cursor.expect_newline()?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::from_vec(&shape, data)?;
            if !tensor.all_finite() {
                return Err(Error::NonFinite {
                    path: format!("checkpoint weight {name}"),
                });
            }

            let mut fields = params.fields_mut();
            let idx = fields
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| fail(format!("unknown parameter {name:?}")))?;
            if filled[idx] {
                return Err(fail(format!("duplicate parameter {name:?}")));
            }
            if fields[idx].value.shape() != tensor.shape() {
                return Err(Error::Shape {
                    op: "checkpoint load",
                    lhs: tensor.shape().to_vec(),
                    rhs: fields[idx].value.shape().to_vec(),
                });
            }
            fields[idx].value = tensor;
            filled[idx] = true;
        }
        let trailer = cursor.line()?;
        if trailer != "end" {
            return Err(fail(format!("expected trailer 'end', found {trailer:?}")));
        }

        Checkpoint::new(params, vocab, meta.label_names, meta.turkish_lowercase)
    }
}

fn fail(reason: String) -> Error {
    Error::Checkpoint {
        path: "<bytes>".into(),
        reason,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos.min(self.bytes.len())..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fail("unexpected end of file".to_string()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|e| fail(format!("invalid UTF-8: {e}")))
    }

    fn exact(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(fail(format!(
                "truncated: wanted {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn expect_newline(&mut self) -> Result<()> {
        match self.exact(1)? {
            b"\n" => Ok(()),
            other => Err(fail(format!(
                "expected newline after weight data, found byte {:#04x}",
                other[0]
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ModelConfig;

    fn small_checkpoint() -> Checkpoint {
        let vocab = Vocabulary::build(["merhaba dünya vize"], 64, 1).unwrap();
        let config = ModelConfig {
            hidden_size: 8,
            num_layers: 1,
            num_heads: 2,
            max_seq: 6,
            vocab_size: vocab.len(),
            intermediate_size: 16,
            num_classes: 3,
            dropout_rate: 0.1,
        };
        let params = ModelParams::<f32>::init(config, 5).unwrap();
        Checkpoint::new(
            params,
            vocab,
            vec!["a".into(), "b".into(), "c".into()],
            true,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ck = small_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.vocab, ck.vocab);
        assert_eq!(back.label_names, ck.label_names);
        assert_eq!(back.turkish_lowercase, ck.turkish_lowercase);
        assert_eq!(back.params.config, ck.params.config);
        for (a, b) in ck.params.fields().iter().zip(back.params.fields()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.shape(), b.value.shape());
            assert_eq!(a.value.data(), b.value.data());
        }
        // Serialization is a fixed point: re-encoding gives identical bytes.
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = small_checkpoint();
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn header_starts_with_magic_line() {
        let bytes = small_checkpoint().to_bytes();
        assert!(bytes.starts_with(b"ADTXT1\n"));
        assert!(bytes.ends_with(b"end\n"));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = small_checkpoint().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
    }

    #[test]
    fn rejects_truncation_anywhere() {
        let bytes = small_checkpoint().to_bytes();
        // Chop the file at a spread of prefixes; every one must error, never
        // panic or succeed.
        for cut in [7, 40, bytes.len() / 2, bytes.len() - 3] {
            assert!(
                Checkpoint::from_bytes(&bytes[..cut]).is_err(),
                "prefix of {cut} bytes was accepted"
            );
        }
    }

    #[test]
    fn rejects_unknown_parameter_name() {
        let ck = small_checkpoint();
        let text = ck.to_bytes();
        let needle = b"pooler.weight\n";
        let pos = text
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap();
        let mut corrupted = text.clone();
        corrupted[pos..pos + 6].copy_from_slice(b"poolyr");
        let err = Checkpoint::from_bytes(&corrupted).unwrap_err();
        assert!(err.to_string().contains("poolyr"), "{err}");
    }

    #[test]
    fn rejects_non_finite_weights() {
        let ck = small_checkpoint();
        let mut bytes = ck.to_bytes();
        // Overwrite the first value of the first weight block with NaN.
        let marker = b"embeddings.token\n";
        let pos = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .unwrap();
        let data_start = pos
            + marker.len()
            + bytes[pos + marker.len()..]
                .iter()
                .position(|&b| b == b'\n')
                .unwrap()
            + 1;
        bytes[data_start..data_start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn new_rejects_inconsistent_shapes() {
        let ck = small_checkpoint();
        let err = Checkpoint::new(
            ck.params.clone(),
            ck.vocab.clone(),
            vec!["only-one".into()],
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let other_vocab = Vocabulary::build(["tamamen farklı kelimeler burada"], 64, 1).unwrap();
        assert_ne!(other_vocab.len(), ck.vocab.len());
        let err = Checkpoint::new(
            ck.params.clone(),
            other_vocab,
            ck.label_names.clone(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
