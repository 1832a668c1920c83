//! Model files.
//!
//! ```text
//! "KDKD" | version u32 | kind u8 (1 = KAN, 2 = MLP)
//! | layer widths: count u32, then u32 each
//! | KAN: G u32 | K u32 | domain lo f64 | domain hi f64
//! | MLP: activation u8
//! | parameter count u64 | parameters f64 (layer-major, canonical order)
//! | SHA-256 of everything above
//! ```
//!
//! KAN parameters within a layer are stored edge by edge in row-major
//! `(input, output)` order, each edge as `omega_b, omega_s, shift, c_0..`,
//! followed by the layer's output biases. MLP layers store the row-major
//! `d_out x d_in` weight matrix followed by the biases. Everything is
//! little-endian.

use std::fs;
use std::path::Path;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::kan::{KanLayer, KanNetwork};
use crate::mlp::{Activation, MlpNetwork};
use crate::model::{Classifier, Trainable};
use crate::spline::SplineGrid;

pub const MODEL_MAGIC: &[u8; 4] = b"KDKD";
pub const MODEL_VERSION: u32 = 1;

const KIND_KAN: u8 = 1;
const KIND_MLP: u8 = 2;

/// A model of either kind, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Kan(KanNetwork),
    Mlp(MlpNetwork),
}

impl AnyModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyModel::Kan(_) => "kan",
            AnyModel::Mlp(_) => "mlp",
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            AnyModel::Kan(m) => m,
            AnyModel::Mlp(m) => m,
        }
    }
}

impl From<KanNetwork> for AnyModel {
    fn from(m: KanNetwork) -> Self {
        AnyModel::Kan(m)
    }
}

impl From<MlpNetwork> for AnyModel {
    fn from(m: MlpNetwork) -> Self {
        AnyModel::Mlp(m)
    }
}

impl Classifier for AnyModel {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner().output_dim()
    }

    fn parameter_count(&self) -> usize {
        self.inner().parameter_count()
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().forward(x)
    }

    fn penultimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().penultimate(x)
    }
}

/// Models that have a file representation.
pub trait Persist: Trainable + Sized {
    const KIND_NAME: &'static str;

    fn encode_model(&self) -> Vec<u8>;
    fn decode_model(bytes: &[u8]) -> Result<Self>;
}

impl Persist for KanNetwork {
    const KIND_NAME: &'static str = "kan";

    fn encode_model(&self) -> Vec<u8> {
        encode_model(&AnyModel::Kan(self.clone()))
    }

    fn decode_model(bytes: &[u8]) -> Result<Self> {
        match decode_model(bytes)? {
            AnyModel::Kan(m) => Ok(m),
            other => Err(Error::KindMismatch {
                expected: "kan",
                found: other.kind_name(),
            }),
        }
    }
}

impl Persist for MlpNetwork {
    const KIND_NAME: &'static str = "mlp";

    fn encode_model(&self) -> Vec<u8> {
        encode_model(&AnyModel::Mlp(self.clone()))
    }

    fn decode_model(bytes: &[u8]) -> Result<Self> {
        match decode_model(bytes)? {
            AnyModel::Mlp(m) => Ok(m),
            other => Err(Error::KindMismatch {
                expected: "mlp",
                found: other.kind_name(),
            }),
        }
    }
}

fn write_dims(e: &mut Encoder, dims: &[usize]) {
    e.u32(dims.len() as u32);
    for d in dims {
        e.u32(*d as u32);
    }
}

pub fn encode_model(model: &AnyModel) -> Vec<u8> {
    let mut e = Encoder::new(MODEL_MAGIC, MODEL_VERSION);
    let params = match model {
        AnyModel::Kan(m) => {
            e.u8(KIND_KAN);
            write_dims(&mut e, &m.dims());
            let g = m.grid();
            e.u32(g.grid_size() as u32);
            e.u32(g.order() as u32);
            e.f64(g.domain().0);
            e.f64(g.domain().1);
            m.flat_params()
        }
        AnyModel::Mlp(m) => {
            e.u8(KIND_MLP);
            write_dims(&mut e, &m.dims());
            e.u8(m.activation().tag());
            m.flat_params()
        }
    };
    e.u64(params.len() as u64);
    e.f64s(&params);
    e.finish()
}

pub fn decode_model(bytes: &[u8]) -> Result<AnyModel> {
    let mut d = Decoder::open(bytes, MODEL_MAGIC, MODEL_VERSION, "model")?;
    let kind = d.u8()?;
    let n_dims = d.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::Format(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims)
        .map(|_| d.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.contains(&0) {
        return Err(Error::Format("zero layer width".into()));
    }
    let model = match kind {
        KIND_KAN => {
            let g = d.u32()? as usize;
            let k = d.u32()? as usize;
            let lo = d.f64()?;
            let hi = d.f64()?;
            let grid = SplineGrid::new(lo, hi, g, k)?;
            let stored = d.u64()? as usize;
            let expected = crate::kan::kan_parameter_count(&dims, g, k);
            if stored != expected {
                return Err(Error::Format(format!(
                    "KAN file holds {stored} parameters, shape implies {expected}"
                )));
            }
            let flat = d.f64s(stored)?;
            let mut layers = Vec::with_capacity(dims.len() - 1);
            let mut off = 0;
            for w in dims.windows(2) {
                let n = crate::kan::kan_parameter_count(w, g, k);
                layers.push(KanLayer::from_params(
                    w[0],
                    w[1],
                    grid.clone(),
                    flat[off..off + n].to_vec(),
                )?);
                off += n;
            }
            AnyModel::Kan(KanNetwork::from_layers(layers)?)
        }
        KIND_MLP => {
            let act = d.u8()?;
            let activation = Activation::from_tag(act)
                .ok_or_else(|| Error::Format(format!("unknown activation tag {act}")))?;
            let stored = d.u64()? as usize;
            let expected = crate::mlp::mlp_parameter_count(&dims);
            if stored != expected {
                return Err(Error::Format(format!(
                    "MLP file holds {stored} parameters, shape implies {expected}"
                )));
            }
            let flat = d.f64s(stored)?;
            AnyModel::Mlp(MlpNetwork::from_params(&dims, activation, &flat)?)
        }
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    };
    d.finish()?;
    Ok(model)
}

pub fn save_model(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    decode_model(&fs::read(path)?)
}

pub fn save<M: Persist>(model: &M, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.encode_model())?;
    Ok(())
}

pub fn load_kan(path: impl AsRef<Path>) -> Result<KanNetwork> {
    KanNetwork::decode_model(&fs::read(path)?)
}

pub fn load_mlp(path: impl AsRef<Path>) -> Result<MlpNetwork> {
    MlpNetwork::decode_model(&fs::read(path)?)
}
