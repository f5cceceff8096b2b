//! Portable named-tensor documents used for classifier and SAC checkpoints.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::nn::{Activation, Dense, Mlp};
use super::LearnError;

pub const FORMAT: &str = "mrlfd-tensors";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    /// Networks in the order their tensors appear.
    pub layer_order: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            meta: BTreeMap::new(),
            layer_order: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.push(Tensor { name: name.into(), shape, data });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, LearnError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| LearnError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64, LearnError> {
        let t = self.tensor(name)?;
        t.data.first().copied().ok_or_else(|| LearnError::Checkpoint(format!("empty tensor `{name}`")))
    }

    pub fn put_mlp(&mut self, prefix: &str, net: &Mlp) {
        self.layer_order.push(prefix.to_string());
        self.put_layers(prefix, &net.layers);
    }

    pub fn put_layers(&mut self, prefix: &str, layers: &[Dense]) {
        for (i, l) in layers.iter().enumerate() {
            self.push(&format!("{prefix}.{i}.w"), vec![l.w.nrows(), l.w.ncols()], l.w.iter().copied().collect());
            self.push(&format!("{prefix}.{i}.b"), vec![l.b.len()], l.b.to_vec());
        }
    }

    pub fn layers(&self, prefix: &str) -> Result<Vec<Dense>, LearnError> {
        let mut out = Vec::new();
        for i in 0.. {
            let wn = format!("{prefix}.{i}.w");
            if !self.tensors.iter().any(|t| t.name == wn) {
                break;
            }
            let w = self.tensor(&wn)?;
            let b = self.tensor(&format!("{prefix}.{i}.b"))?;
            let bad = |n: &str| LearnError::Checkpoint(format!("tensor `{n}` has inconsistent shape"));
            if w.shape.len() != 2 || w.shape[0] * w.shape[1] != w.data.len() {
                return Err(bad(&wn));
            }
            if b.shape != [w.shape[1]] || b.data.len() != w.shape[1] {
                return Err(bad(&b.name));
            }
            if let Some(prev) = out.last().map(|d: &Dense| d.w.ncols()) {
                if prev != w.shape[0] {
                    return Err(bad(&wn));
                }
            }
            let wa = Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone()).map_err(|_| bad(&wn))?;
            out.push(Dense { w: wa, b: Array1::from(b.data.clone()) });
        }
        if out.is_empty() {
            return Err(LearnError::Checkpoint(format!("no layers under `{prefix}`")));
        }
        Ok(out)
    }

    pub fn mlp(&self, prefix: &str, hidden: Activation) -> Result<Mlp, LearnError> {
        Ok(Mlp { layers: self.layers(prefix)?, hidden })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        if c.format != FORMAT {
            return Err(LearnError::Checkpoint(format!("unknown format `{}`", c.format)));
        }
        if c.version != VERSION {
            return Err(LearnError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        for t in &c.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(LearnError::Checkpoint(format!("tensor `{}` data does not match shape", t.name)));
            }
        }
        Ok(c)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), LearnError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(LearnError::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 7, 3], Activation::Tanh, &mut rng);
        let mut c = Checkpoint::new("test");
        c.put_mlp("net", &net);
        let back = Checkpoint::from_json(&c.to_json()).unwrap();
        assert_eq!(back.mlp("net", Activation::Tanh).unwrap(), net);
        assert_eq!(back.layer_order, vec!["net".to_string()]);
    }

    #[test]
    fn rejects_bad_documents() {
        let mut c = Checkpoint::new("x");
        c.push("net.0.w", vec![2, 2], vec![1.0, 2.0, 3.0]);
        assert!(Checkpoint::from_json(&c.to_json()).is_err());
        let mut c = Checkpoint::new("x");
        c.version = 99;
        assert!(Checkpoint::from_json(&c.to_json()).is_err());
        assert!(Checkpoint::new("x").mlp("net", Activation::Relu).is_err());
    }
}
