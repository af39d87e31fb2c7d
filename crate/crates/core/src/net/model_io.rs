//! Binary model files.
//!
//! Layout: the 7-byte magic `NATTR1\0`, a little-endian `u32` byte length,
//! that many bytes of UTF-8 JSON describing the layers, then every weight
//! tensor as raw little-endian `f64` in header order (per layer: weights,
//! then bias).

use serde::{Deserialize, Serialize};

use super::{Layer, LayerKind, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 7] = b"NATTR1\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    input_shape: Vec<usize>,
    layers: Vec<LayerHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LayerHeader {
    Dense {
        name: String,
        weight_shape: Vec<usize>,
        bias_shape: Vec<usize>,
    },
    Conv2d {
        name: String,
        kernel_shape: Vec<usize>,
        bias_shape: Vec<usize>,
        stride: usize,
        padding: usize,
    },
    Relu {
        name: String,
    },
    Maxpool {
        name: String,
        window: usize,
        stride: usize,
    },
    Flatten {
        name: String,
    },
}

pub fn save_model(net: &Network) -> Vec<u8> {
    let mut payload = Vec::new();
    let mut push = |t: &Tensor| {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let name = l.name.clone();
            match &l.kind {
                LayerKind::Dense { weight, bias } => {
                    push(weight);
                    push(bias);
                    LayerHeader::Dense {
                        name,
                        weight_shape: weight.shape().to_vec(),
                        bias_shape: bias.shape().to_vec(),
                    }
                }
                LayerKind::Conv2d {
                    kernels,
                    bias,
                    stride,
                    padding,
                } => {
                    push(kernels);
                    push(bias);
                    LayerHeader::Conv2d {
                        name,
                        kernel_shape: kernels.shape().to_vec(),
                        bias_shape: bias.shape().to_vec(),
                        stride: *stride,
                        padding: *padding,
                    }
                }
                LayerKind::Relu => LayerHeader::Relu { name },
                LayerKind::MaxPool { window, stride } => LayerHeader::Maxpool {
                    name,
                    window: *window,
                    stride: *stride,
                },
                LayerKind::Flatten => LayerHeader::Flatten { name },
            }
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        input_shape: net.input_shape().to_vec(),
        layers,
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(MODEL_MAGIC.len() + 4 + header.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn tensor(&mut self, shape: &[usize], layer: &str) -> Result<Tensor> {
        let count: usize = shape.iter().product();
        if shape.is_empty() || count == 0 {
            return Err(Error::Header(format!(
                "layer '{layer}' declares empty tensor shape {shape:?}"
            )));
        }
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| {
            Error::Header(format!("layer '{layer}' tensor shape {shape:?} overflows"))
        })?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

pub fn load_model(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MODEL_MAGIC.len()).map_err(|_| Error::BadMagic {
        expected: String::from_utf8_lossy(MODEL_MAGIC)
            .escape_debug()
            .to_string(),
        found: String::from_utf8_lossy(bytes).escape_debug().to_string(),
    })?;
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MODEL_MAGIC)
                .escape_debug()
                .to_string(),
            found: String::from_utf8_lossy(magic).escape_debug().to_string(),
        });
    }
    let len = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
    let header: Header =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::Header(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Header(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in header.layers {
        let layer = match lh {
            LayerHeader::Dense {
                name,
                weight_shape,
                bias_shape,
            } => {
                let weight = r.tensor(&weight_shape, &name)?;
                let bias = r.tensor(&bias_shape, &name)?;
                Layer::new(name, LayerKind::Dense { weight, bias })
            }
            LayerHeader::Conv2d {
                name,
                kernel_shape,
                bias_shape,
                stride,
                padding,
            } => {
                let kernels = r.tensor(&kernel_shape, &name)?;
                let bias = r.tensor(&bias_shape, &name)?;
                Layer::new(
                    name,
                    LayerKind::Conv2d {
                        kernels,
                        bias,
                        stride,
                        padding,
                    },
                )
            }
            LayerHeader::Relu { name } => Layer::new(name, LayerKind::Relu),
            LayerHeader::Maxpool {
                name,
                window,
                stride,
            } => Layer::new(name, LayerKind::MaxPool { window, stride }),
            LayerHeader::Flatten { name } => Layer::new(name, LayerKind::Flatten),
        };
        layers.push(layer);
    }
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(Error::TrailingBytes { count: rest });
    }
    Network::new(header.input_shape, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{random_mlp, reference_architecture};

    #[test]
    fn roundtrip_is_exact() {
        use rand::{Rng, SeedableRng};
        let net = reference_architecture(11);
        let bytes = save_model(&net);
        let back = load_model(&bytes).unwrap();
        assert_eq!(back, net);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = Tensor::new(vec![28, 28, 1], (0..784).map(|_| rng.gen()).collect()).unwrap();
            let a = net.forward(&x).unwrap();
            let b = back.forward(&x).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.logits()), bits(b.logits()));
        }
        assert_eq!(save_model(&back), bytes);
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = save_model(&random_mlp(&[3, 2], 0.1, 0));
        bytes[0] = b'X';
        assert!(matches!(load_model(&bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(load_model(b"NAT"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = save_model(&random_mlp(&[3, 4, 2], 0.1, 0));
        assert!(matches!(
            load_model(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            load_model(&bytes[..9]),
            Err(Error::Truncated { .. })
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(
            load_model(&longer),
            Err(Error::TrailingBytes { count: 1 })
        ));
    }

    #[test]
    fn inconsistent_declared_input() {
        let header = serde_json::json!({
            "format_version": 1,
            "input_shape": [5],
            "layers": [{"kind": "dense", "name": "d", "weight_shape": [3, 4], "bias_shape": [3]}]
        })
        .to_string();
        let mut bytes = MODEL_MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header.as_bytes());
        bytes.extend(std::iter::repeat_n(0u8, 15 * 8));
        match load_model(&bytes) {
            Err(Error::LayerShape {
                expected, actual, ..
            }) => {
                assert_eq!(expected, vec![4]);
                assert_eq!(actual, vec![5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_header() {
        let mut bytes = MODEL_MAGIC.to_vec();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(b"{x}");
        assert!(matches!(load_model(&bytes), Err(Error::Header(_))));
    }
}
