//! Bit-exact model persistence.
//!
//! Layout: 4 magic bytes `UAE1`; a little-endian u32 byte length of the
//! UTF-8 JSON header; the header (architecture, sigma, decoder family, seed,
//! format version); then every parameter as little-endian f64 in the flat
//! order used throughout the crate (encoder W row-major, acquisition layers
//! as `[weights row-major, bias]` in order, decoder layers likewise).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nets::{
    DecoderFamily, DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, OutputActivation, UaeModel,
};

pub const MAGIC: &[u8; 4] = b"UAE1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MlpDescriptor {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
}

impl MlpDescriptor {
    fn from_spec(spec: &MlpSpec) -> Self {
        Self {
            layer_sizes: spec.layer_sizes.clone(),
            hidden_activation: "relu".into(),
            output_activation: match spec.output_activation {
                OutputActivation::Identity => "identity".into(),
                OutputActivation::Sigmoid => "sigmoid".into(),
            },
        }
    }

    fn to_spec(&self) -> Result<MlpSpec> {
        if self.hidden_activation != "relu" {
            return Err(Error::Format(format!(
                "unsupported hidden activation '{}'",
                self.hidden_activation
            )));
        }
        let out = match self.output_activation.as_str() {
            "identity" => OutputActivation::Identity,
            "sigmoid" => OutputActivation::Sigmoid,
            other => {
                return Err(Error::Format(format!(
                    "unsupported output activation '{other}'"
                )))
            }
        };
        MlpSpec::new(self.layer_sizes.clone(), out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub sigma: f64,
    pub decoder_family: String,
    pub seed: u64,
    pub acquisition: Option<MlpDescriptor>,
    pub decoder: MlpDescriptor,
}

impl CheckpointHeader {
    pub fn describe(model: &UaeModel, seed: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            m: model.measurement_count(),
            n: model.signal_dim(),
            l: model.channel.encoder.feature_size(),
            sigma: model.channel.sigma,
            decoder_family: model.decoder.family.as_str().into(),
            seed,
            acquisition: model
                .channel
                .encoder
                .acquisition
                .as_ref()
                .map(|a| MlpDescriptor::from_spec(&a.spec)),
            decoder: MlpDescriptor::from_spec(&model.decoder.mlp.spec),
        }
    }

    /// Zero-parameter model matching this header, validating internal
    /// consistency.
    fn build_skeleton(&self) -> Result<UaeModel> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        let acquisition = match &self.acquisition {
            Some(desc) => {
                let spec = desc.to_spec()?;
                if spec.input_size() != self.n || spec.output_size() != self.l {
                    return Err(Error::Format(format!(
                        "acquisition sizes {:?} do not map n={} to l={}",
                        desc.layer_sizes, self.n, self.l
                    )));
                }
                Some(spec)
            }
            None => {
                if self.l != self.n {
                    return Err(Error::Format(format!(
                        "linear encoder requires l = n, header says l={} n={}",
                        self.l, self.n
                    )));
                }
                None
            }
        };
        let dec_spec = self.decoder.to_spec()?;
        if dec_spec.input_size() != self.m || dec_spec.output_size() != self.n {
            return Err(Error::Format(format!(
                "decoder sizes {:?} do not map m={} to n={}",
                self.decoder.layer_sizes, self.m, self.n
            )));
        }
        let zero_mlp = |spec: MlpSpec| -> Mlp {
            let layers = (0..spec.layer_count())
                .map(|i| crate::nets::Layer {
                    weights: Matrix::zeros(spec.layer_sizes[i + 1], spec.layer_sizes[i]),
                    bias: vec![0.0; spec.layer_sizes[i + 1]],
                })
                .collect();
            Mlp { spec, layers }
        };
        let encoder = match acquisition {
            Some(spec) => {
                Encoder::with_acquisition(Matrix::zeros(self.m, self.l), zero_mlp(spec))?
            }
            None => Encoder::linear(Matrix::zeros(self.m, self.n)),
        };
        let family = DecoderFamily::parse(&self.decoder_family)?;
        UaeModel::new(
            GaussianChannel::new(encoder, self.sigma)?,
            DecoderNet::new(zero_mlp(dec_spec), family)?,
        )
    }
}

/// Serializes the model (with the seed that produced it) to `path`.
pub fn save_checkpoint(model: &UaeModel, seed: u64, path: &Path) -> Result<()> {
    let header = CheckpointHeader::describe(model, seed);
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Format(format!("header serialization: {e}")))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(header_json.as_bytes())?;
    for p in model.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back, returning the model and the recorded seed.
pub fn load_checkpoint(path: &Path) -> Result<(UaeModel, u64)> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: truncated magic", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected {MAGIC:?}",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)
        .map_err(|_| Error::Format(format!("{}: truncated header length", path.display())))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Format(format!("{}: header JSON: {e}", path.display())))?;

    let mut model = header.build_skeleton()?;
    let expected_params = model.param_count();
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != expected_params * 8 {
        return Err(Error::Format(format!(
            "{}: parameter blob length mismatch: expected {} bytes ({expected_params} params), found {}",
            path.display(),
            expected_params * 8,
            blob.len()
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    for (i, p) in params.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Format(format!(
                "{}: non-finite parameter {p} at index {i}",
                path.display()
            )));
        }
    }
    model.set_params(&params);
    Ok((model, header.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_model(seed: u64, with_acq: bool) -> UaeModel {
        let mut rng = Rng::new(seed);
        let (n, m, l) = (5, 2, 4);
        let encoder = if with_acq {
            let acq = Mlp::random_init(
                MlpSpec::new(vec![n, 6, l], OutputActivation::Identity).unwrap(),
                &mut rng,
            );
            let w = Matrix::from_vec(m, l, (0..m * l).map(|_| rng.standard_normal()).collect())
                .unwrap();
            Encoder::with_acquisition(w, acq).unwrap()
        } else {
            let w = Matrix::from_vec(m, n, (0..m * n).map(|_| rng.standard_normal()).collect())
                .unwrap();
            Encoder::linear(w)
        };
        let dec = Mlp::random_init(
            MlpSpec::new(vec![m, 7, n], OutputActivation::Sigmoid).unwrap(),
            &mut rng,
        );
        UaeModel::new(
            GaussianChannel::new(encoder, 0.1).unwrap(),
            DecoderNet::new(dec, DecoderFamily::Bernoulli).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_byte_exact() {
        for with_acq in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.uae");
            let model = random_model(5, with_acq);
            save_checkpoint(&model, 42, &path).unwrap();
            let (loaded, seed) = load_checkpoint(&path).unwrap();
            assert_eq!(seed, 42);
            let a = model.params();
            let b = loaded.params();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(loaded.channel.sigma, model.channel.sigma);
            assert_eq!(loaded.decoder.family, model.decoder.family);

            // saving the loaded model reproduces the file bit for bit
            let path2 = dir.path().join("model2.uae");
            save_checkpoint(&loaded, 42, &path2).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        }
    }

    #[test]
    fn truncated_blob_names_expected_and_found_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uae");
        let model = random_model(6, false);
        save_checkpoint(&model, 1, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected") && msg.contains("found"), "{msg}");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uae");
        let model = random_model(7, false);
        save_checkpoint(&model, 1, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uae");
        let model = random_model(8, false);
        let mut header = CheckpointHeader::describe(&model, 1);
        header.version = 2;
        let header_json = serde_json::to_string(&header).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header_json.as_bytes());
        for p in model.params() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn inconsistent_header_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.uae");
        let model = random_model(9, false);
        let mut header = CheckpointHeader::describe(&model, 1);
        header.n = 17; // decoder no longer maps m -> n
        let header_json = serde_json::to_string(&header).unwrap();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header_json.as_bytes());
        for p in model.params() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
