//! Binary parameter files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | content                                        |
//! |--------------|------------------------------------------------|
//! | 8            | magic `TD3SMLP\0`                              |
//! | 4 (u32)      | format version, currently 1                    |
//! | 4 (u32)      | `k`, number of layer sizes                     |
//! | 4·k (u32)    | layer sizes, input first                       |
//! | 1 (u8)       | hidden activation tag (0 relu, 1 tanh, 2 linear) |
//! | 1 (u8)       | output activation tag                          |
//! | 8·P (f64)    | per layer: weights row-major `(in, out)`, then bias |
//!
//! The file must end exactly after the last parameter.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TD3SMLP\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_params(net: &Mlp) -> Vec<u8> {
    let sizes = net.sizes();
    let mut out = Vec::with_capacity(18 + 4 * sizes.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    out.push(net.hidden_activation().tag());
    out.push(net.output_activation().tag());
    for layer in net.layers() {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.bytes.len())),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_params(bytes: &[u8]) -> std::result::Result<Mlp, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic, not a parameter file".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("format version {version}, expected {FORMAT_VERSION}"));
    }
    let k = r.u32()? as usize;
    if !(2..=64).contains(&k) {
        return Err(format!("implausible layer count {k}"));
    }
    let sizes = (0..k)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if sizes.contains(&0) {
        return Err("zero layer width".into());
    }
    let hidden = Activation::from_tag(r.u8()?).ok_or("unknown hidden activation tag")?;
    let output = Activation::from_tag(r.u8()?).ok_or("unknown output activation tag")?;
    let expected: usize = sizes.windows(2).map(|w| (w[0] * w[1] + w[1]) * 8).sum();
    if bytes.len() - r.pos != expected {
        return Err(format!(
            "expected {expected} parameter bytes, found {}",
            bytes.len() - r.pos
        ));
    }
    let mut layers = Vec::with_capacity(k - 1);
    for w in sizes.windows(2) {
        let weights = (0..w[0] * w[1]).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let bias = (0..w[1]).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        layers.push(Dense {
            weights: Array2::from_shape_vec((w[0], w[1]), weights).map_err(|e| e.to_string())?,
            bias: Array1::from(bias),
        });
    }
    Mlp::from_layers(layers, hidden, output).map_err(|e| e.to_string())
}

pub fn save_params(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_params(net)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes).map_err(|reason| Error::ParamFile {
        path: path.to_path_buf(),
        reason,
    })
}

/// Loads a network and checks it has the expected architecture.
pub fn load_params_matching(path: impl AsRef<Path>, like: &Mlp) -> Result<Mlp> {
    let path = path.as_ref();
    let net = load_params(path)?;
    if !net.same_architecture(like) {
        return Err(Error::ParamFile {
            path: path.to_path_buf(),
            reason: format!(
                "architecture mismatch: file has sizes {:?} ({:?}/{:?}), expected {:?} ({:?}/{:?})",
                net.sizes(),
                net.hidden_activation(),
                net.output_activation(),
                like.sizes(),
                like.hidden_activation(),
                like.output_activation()
            ),
        });
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize]) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Mlp::new(sizes, Activation::Relu, Activation::Tanh, 0.1, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("actor.params");
        let a = net(&[8, 16, 16, 4]);
        save_params(&a, &path).unwrap();
        let b = load_params(&path).unwrap();
        assert_eq!(a, b);
        let x = [0.3, 0.1, 0.9, 0.0, 1.0, 0.5, 0.25, 0.75];
        let (ya, yb) = (a.predict_one(&x).unwrap(), b.predict_one(&x).unwrap());
        assert!(ya.iter().zip(&yb).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = encode_params(&net(&[3, 5, 2]));
        for cut in [0, 7, 12, 20, bytes.len() - 1] {
            assert!(decode_params(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode_params(&longer).is_err());
    }

    #[test]
    fn version_and_magic_checked() {
        let mut bytes = encode_params(&net(&[3, 5, 2]));
        bytes[8] = 9;
        assert!(decode_params(&bytes).unwrap_err().contains("version"));
        bytes[0] = b'X';
        assert!(decode_params(&bytes).unwrap_err().contains("magic"));
    }

    #[test]
    fn architecture_mismatch_is_descriptive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p");
        save_params(&net(&[3, 5, 2]), &path).unwrap();
        let err = load_params_matching(&path, &net(&[3, 6, 2])).unwrap_err();
        assert!(err.to_string().contains("architecture mismatch"), "{err}");
    }
}
