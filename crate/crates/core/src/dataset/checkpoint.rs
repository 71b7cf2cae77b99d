//! Versioned binary checkpoints of model parameters and GCN stacks.
//!
//! ```text
//! "FGPC" | version u16 | entries u32
//! per entry: name len u16 | name utf-8 | kind u8 | payload
//!   kind 0 (matrix): rows u32 | cols u32 | rows·cols f64
//!   kind 1 (scalar): u64
//!   kind 2 (text):   len u32 | utf-8
//! ```
//! Entries are written in name order so equal states give equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::attention::{
    AttentionParams, CalibrationHead, ClassifierBank, FeatureAdapter, FgpModel, LinearHead,
};
use crate::error::{FgpError, Result};
use crate::gcn::{GcnChannel, GcnStack};
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FGPC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Matrix(Matrix),
    Scalar(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub entries: BTreeMap<String, Entry>,
}

impl Checkpoint {
    pub fn put_matrix(&mut self, name: impl Into<String>, m: Matrix) {
        self.entries.insert(name.into(), Entry::Matrix(m));
    }

    pub fn put_scalar(&mut self, name: impl Into<String>, v: u64) {
        self.entries.insert(name.into(), Entry::Scalar(v));
    }

    pub fn put_f64(&mut self, name: impl Into<String>, v: f64) {
        self.put_scalar(name, v.to_bits());
    }

    pub fn put_text(&mut self, name: impl Into<String>, s: impl Into<String>) {
        self.entries.insert(name.into(), Entry::Text(s.into()));
    }

    fn missing(name: &str) -> FgpError {
        FgpError::format("checkpoint", format!("missing or mistyped entry {name:?}"))
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.entries.get(name) {
            Some(Entry::Matrix(m)) => Ok(m),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn scalar(&self, name: &str) -> Result<u64> {
        match self.entries.get(name) {
            Some(Entry::Scalar(v)) => Ok(*v),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        self.scalar(name).map(f64::from_bits)
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.entries.get(name) {
            Some(Entry::Text(s)) => Ok(s),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Matrix(m) => {
                    out.push(0);
                    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
                    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
                    for x in m.data() {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Entry::Scalar(v) => {
                    out.push(1);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Entry::Text(s) => {
                    out.push(2);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if bytes.len() - pos < n {
                return Err(FgpError::format(
                    "checkpoint",
                    format!("truncated at byte offset {pos}"),
                ));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != CHECKPOINT_MAGIC {
            return Err(FgpError::format("checkpoint", "bad magic at byte offset 0"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().expect("2"));
        if version != CHECKPOINT_VERSION {
            return Err(FgpError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4")) as usize;
        let count = u32_at(take(4)?);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(2)?.try_into().expect("2")) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| FgpError::format("checkpoint", "entry name is not utf-8"))?;
            let kind = take(1)?[0];
            let entry = match kind {
                0 => {
                    let rows = u32_at(take(4)?);
                    let cols = u32_at(take(4)?);
                    let data = take(8 * rows * cols)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
                        .collect();
                    Entry::Matrix(Matrix::new(rows, cols, data)?)
                }
                1 => Entry::Scalar(u64::from_le_bytes(take(8)?.try_into().expect("8"))),
                2 => {
                    let len = u32_at(take(4)?);
                    Entry::Text(
                        String::from_utf8(take(len)?.to_vec())
                            .map_err(|_| FgpError::format("checkpoint", "text is not utf-8"))?,
                    )
                }
                other => {
                    return Err(FgpError::format(
                        "checkpoint",
                        format!("unknown entry kind {other} for {name:?}"),
                    ))
                }
            };
            entries.insert(name, entry);
        }
        if pos != bytes.len() {
            return Err(FgpError::format(
                "checkpoint",
                format!("trailing bytes after offset {pos}"),
            ));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| FgpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&fs::read(path).map_err(|e| FgpError::io(path, e))?)
    }
}

fn put_head(ck: &mut Checkpoint, prefix: &str, h: &LinearHead) {
    ck.put_matrix(format!("{prefix}.weights"), h.weights.clone());
    ck.put_matrix(format!("{prefix}.bias"), Matrix::row_vector(&h.bias));
}

fn get_head(ck: &Checkpoint, prefix: &str) -> Result<LinearHead> {
    Ok(LinearHead {
        weights: ck.matrix(&format!("{prefix}.weights"))?.clone(),
        bias: ck.matrix(&format!("{prefix}.bias"))?.data().to_vec(),
    })
}

pub fn put_model(ck: &mut Checkpoint, model: &FgpModel) {
    ck.put_matrix("model.centroids", model.centroids.clone());
    ck.put_matrix("model.w_alpha", model.attention.w_alpha.clone());
    ck.put_matrix("model.w_sc", model.head.w_sc.clone());
    ck.put_matrix("model.adapter", model.adapter.matrix.clone());
    let bank = &model.bank;
    ck.put_scalar("bank.k", bank.k() as u64);
    ck.put_scalar("bank.use_global", u64::from(bank.uses_global()));
    ck.put_scalar("bank.frozen", u64::from(bank.is_frozen()));
    ck.put_scalar("bank.trained", u64::from(bank.is_trained()));
    let present: Vec<f64> = bank
        .present()
        .iter()
        .map(|&p| f64::from(u8::from(p)))
        .collect();
    ck.put_matrix("bank.present", Matrix::row_vector(&present));
    if let Some(g) = &bank.global {
        put_head(ck, "bank.global", g);
    }
    for (k, h) in bank.channels.iter().enumerate() {
        put_head(ck, &format!("bank.channel.{k}"), h);
    }
}

pub fn get_model(ck: &Checkpoint) -> Result<FgpModel> {
    let k = ck.scalar("bank.k")? as usize;
    let global = if ck.scalar("bank.use_global")? != 0 {
        Some(get_head(ck, "bank.global")?)
    } else {
        None
    };
    let channels = (0..k)
        .map(|j| get_head(ck, &format!("bank.channel.{j}")))
        .collect::<Result<Vec<_>>>()?;
    let present = ck
        .matrix("bank.present")?
        .data()
        .iter()
        .map(|&v| v != 0.0)
        .collect();
    let bank = ClassifierBank::from_parts(
        global,
        channels,
        present,
        ck.scalar("bank.frozen")? != 0,
        ck.scalar("bank.trained")? != 0,
    );
    Ok(FgpModel {
        centroids: ck.matrix("model.centroids")?.clone(),
        attention: AttentionParams {
            w_alpha: ck.matrix("model.w_alpha")?.clone(),
        },
        head: CalibrationHead {
            w_sc: ck.matrix("model.w_sc")?.clone(),
        },
        adapter: FeatureAdapter {
            matrix: ck.matrix("model.adapter")?.clone(),
        },
        bank,
    })
}

pub fn put_stack(ck: &mut Checkpoint, stack: &GcnStack) {
    ck.put_scalar("gcn.channels", stack.len() as u64);
    for (c, ch) in stack.channels.iter().enumerate() {
        ck.put_scalar(format!("gcn.{c}.depth"), ch.depth() as u64);
        ck.put_f64(format!("gcn.{c}.slope"), ch.slope);
        ck.put_f64(format!("gcn.{c}.dropout"), ch.dropout);
        for (l, w) in ch.layers.iter().enumerate() {
            ck.put_matrix(format!("gcn.{c}.layer.{l}"), w.clone());
        }
    }
}

pub fn get_stack(ck: &Checkpoint) -> Result<GcnStack> {
    let n = ck.scalar("gcn.channels")? as usize;
    let channels = (0..n)
        .map(|c| {
            let depth = ck.scalar(&format!("gcn.{c}.depth"))? as usize;
            let layers = (0..depth)
                .map(|l| ck.matrix(&format!("gcn.{c}.layer.{l}")).cloned())
                .collect::<Result<Vec<_>>>()?;
            GcnChannel::from_layers(
                layers,
                ck.f64(&format!("gcn.{c}.slope"))?,
                ck.f64(&format!("gcn.{c}.dropout"))?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GcnStack { channels })
}
