//! Self-describing JSON checkpoints: group → tensor name → shape + row-major
//! values, plus free-form metadata. Floats round-trip bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Params;
use crate::{Error, Result};

pub const FORMAT: &str = "dialogue-rl/checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub trainable: bool,
    pub tensors: BTreeMap<String, TensorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub groups: BTreeMap<String, GroupRecord>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            metadata: BTreeMap::new(),
            groups: BTreeMap::new(),
        }
    }
}

impl Checkpoint {
    pub fn insert<P: Params>(&mut self, group: &str, trainable: bool, params: &P) {
        let mut tensors = BTreeMap::new();
        params.visit("", &mut |name, a| {
            tensors.insert(
                name.to_string(),
                TensorRecord {
                    shape: a.shape().to_vec(),
                    values: a.iter().copied().collect(),
                },
            );
        });
        self.groups.insert(group.to_string(), GroupRecord { trainable, tensors });
    }

    /// Fills `params` from `group`; names and shapes must match exactly.
    pub fn restore<P: Params>(&self, group: &str, params: &mut P) -> Result<bool> {
        let record = self
            .groups
            .get(group)
            .ok_or_else(|| Error::Checkpoint(format!("missing group `{group}`")))?;
        let expected = params.names();
        if expected.len() != record.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "group `{group}` has {} tensors, expected {}",
                record.tensors.len(),
                expected.len()
            )));
        }
        let mut failure = None;
        params.visit_mut("", &mut |name, mut a| {
            if failure.is_some() {
                return;
            }
            match record.tensors.get(name) {
                None => failure = Some(format!("group `{group}` lacks tensor `{name}`")),
                Some(t) if t.shape != a.shape() => {
                    failure = Some(format!(
                        "tensor `{group}/{name}` has shape {:?}, expected {:?}",
                        t.shape,
                        a.shape()
                    ))
                }
                Some(t) => {
                    for (dst, src) in a.iter_mut().zip(&t.values) {
                        *dst = *src;
                    }
                }
            }
        });
        match failure {
            Some(msg) => Err(Error::Checkpoint(msg)),
            None => Ok(record.trainable),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        for (g, record) in &ckpt.groups {
            for (n, t) in &record.tensors {
                if t.shape.iter().product::<usize>() != t.values.len() {
                    return Err(Error::Checkpoint(format!("tensor `{g}/{n}` length does not match its shape")));
                }
            }
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Gru, Params};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_load_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL, 18)) {
            let mut g = Gru::zeros(1, 1);
            g.set_flat(&values[..g.num_params()]);
            let mut ckpt = Checkpoint::default();
            ckpt.insert("enc", false, &g);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.json");
            ckpt.save(&path).unwrap();
            let loaded = Checkpoint::load(&path).unwrap();
            let mut back = Gru::zeros(1, 1);
            prop_assert!(!loaded.restore("enc", &mut back).unwrap());
            let a: Vec<u64> = g.to_flat().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.to_flat().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ckpt = Checkpoint::default();
        ckpt.insert("enc", true, &Gru::zeros(2, 3));
        assert!(ckpt.restore("enc", &mut Gru::zeros(3, 3)).is_err());
        assert!(ckpt.restore("dec", &mut Gru::zeros(2, 3)).is_err());
    }
}
