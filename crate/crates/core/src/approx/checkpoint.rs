//! Plain-text parameter checkpoints.
//!
//! ```text
//! rlur-checkpoint 1
//! tensors <count>
//! <name> <rank> <dim0> [<dim1> ...]
//! <values, space separated, shortest round-trip form>
//! ...
//! ```
//!
//! Tensors appear in insertion order, which callers keep fixed, so two saves of
//! identical parameters are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::mlp::Mlp;
use crate::error::{Error, Result};

const MAGIC: &str = "rlur-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape,
            data,
        });
    }

    /// Appends `<prefix>.l<i>.w` and `<prefix>.l<i>.b` for every layer.
    pub fn push_mlp(&mut self, prefix: &str, net: &Mlp) {
        for (i, layer) in net.layers().iter().enumerate() {
            let (r, c) = layer.weights.dim();
            self.push(
                format!("{prefix}.l{i}.w"),
                vec![r, c],
                layer.weights.iter().copied().collect(),
            );
            self.push(
                format!("{prefix}.l{i}.b"),
                vec![layer.bias.len()],
                layer.bias.to_vec(),
            );
        }
    }

    /// Loads parameters saved by [`Checkpoint::push_mlp`] into a network of
    /// matching shape.
    pub fn load_mlp(&self, prefix: &str, net: &mut Mlp) -> Result<()> {
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let w_name = format!("{prefix}.l{i}.w");
            let w = self
                .get(&w_name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {w_name}")))?;
            let (r, c) = layer.weights.dim();
            if w.shape != [r, c] {
                return Err(Error::Checkpoint(format!(
                    "{w_name}: expected shape [{r}, {c}], found {:?}",
                    w.shape
                )));
            }
            layer.weights = Array2::from_shape_vec((r, c), w.data.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;

            let b_name = format!("{prefix}.l{i}.b");
            let b = self
                .get(&b_name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {b_name}")))?;
            if b.shape != [layer.bias.len()] {
                return Err(Error::Checkpoint(format!("{b_name}: shape mismatch")));
            }
            layer.bias = b.data.clone().into();
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "tensors {}", self.tensors.len());
        for t in &self.tensors {
            let _ = write!(out, "{} {}", t.name, t.shape.len());
            for d in &t.shape {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let values: Vec<String> = t.data.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&values.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(bad(format!("bad header '{header}'")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing version".into()))?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("tensors "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("missing tensor count".into()))?;

        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let meta = lines
                .next()
                .ok_or_else(|| bad("truncated tensor header".into()))?;
            let mut fields = meta.split_whitespace();
            let name = fields.next().ok_or_else(|| bad("missing name".into()))?;
            let rank: usize = fields
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("{name}: missing rank")))?;
            let shape = fields
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if shape.len() != rank {
                return Err(bad(format!("{name}: rank {rank} but {} dims", shape.len())));
            }
            let values = lines
                .next()
                .ok_or_else(|| bad(format!("{name}: missing values")))?;
            let data = values
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{name}: {e}")))?;
            if data.len() != shape.iter().product::<usize>() {
                return Err(bad(format!("{name}: value count does not match shape")));
            }
            ckpt.push(name, shape, data);
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[3, 4, 2], vec![Activation::Identity; 2], &mut rng).unwrap();
        let mut ckpt = Checkpoint::new();
        ckpt.push_mlp("critic", &net);
        let text = ckpt.to_text();
        let parsed = Checkpoint::parse(&text).unwrap();
        let mut restored = Mlp::zeros(&[3, 4, 2], vec![Activation::Identity; 2]).unwrap();
        parsed.load_mlp("critic", &mut restored).unwrap();
        assert_eq!(restored, net);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn rejects_wrong_version_and_shape() {
        assert!(Checkpoint::parse("rlur-checkpoint 7\ntensors 0\n").is_err());
        let mut ckpt = Checkpoint::new();
        ckpt.push("x.l0.w", vec![1, 1], vec![1.0]);
        ckpt.push("x.l0.b", vec![1], vec![0.0]);
        let mut net = Mlp::zeros(&[2, 1], vec![Activation::Identity]).unwrap();
        assert!(ckpt.load_mlp("x", &mut net).is_err());
    }
}
