use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Subject to the ℓ2 penalty.
    pub decay: bool,
}

/// Ordered model parameters. Serialized with each buffer as base64 of its
/// little-endian `f64` bytes so values survive a round trip bit for bit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, value: Tensor, decay: bool) -> usize {
        self.entries.push(Param { name, value, decay });
        self.entries.len() - 1
    }

    /// Weight drawn from U(±√(6/(fan_in + fan_out))).
    pub(crate) fn push_glorot(&mut self, name: String, fan_in: usize, fan_out: usize, rng: &mut Prng) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
        self.push(name, Tensor::matrix(fan_in, fan_out, data), true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.entries[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].value
    }

    pub fn values(&self) -> Vec<&Tensor> {
        self.entries.iter().map(|p| &p.value).collect()
    }

    /// Total scalar count.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Record every parameter as a trainable leaf, in order.
    pub fn register(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.entries.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    /// Replace all values, keeping names and shapes.
    pub fn assign(&mut self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.entries.len()
            )));
        }
        for (p, v) in self.entries.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::DimensionMismatch(format!("{}: {:?} vs {:?}", p.name, p.value.shape(), v.shape())));
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    decay: bool,
    data: String,
}

impl Serialize for ParamSet {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let records: Vec<ParamRecord> = self
            .entries
            .iter()
            .map(|p| {
                let bytes: Vec<u8> = p.value.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    decay: p.decay,
                    data: STANDARD.encode(bytes),
                }
            })
            .collect();
        records.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ParamSet {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let records = Vec::<ParamRecord>::deserialize(de)?;
        let mut set = ParamSet::new();
        for r in records {
            let bytes = STANDARD.decode(&r.data).map_err(D::Error::custom)?;
            if bytes.len() % 8 != 0 {
                return Err(D::Error::custom(format!("{}: buffer is not a whole number of f64", r.name)));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let value = Tensor::new(r.shape, data).map_err(|e| D::Error::custom(format!("{}: {e}", r.name)))?;
            set.push(r.name, value, r.decay);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::prng;

    #[test]
    fn glorot_within_limit() {
        let mut set = ParamSet::new();
        let i = set.push_glorot("w".into(), 30, 20, &mut prng(1));
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(set.get(i).value.data().iter().all(|v| v.abs() < limit));
        assert_eq!(set.get(i).value.shape(), &[30, 20]);
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let mut set = ParamSet::new();
        set.push(
            "a".into(),
            Tensor::matrix(1, 4, vec![0.1 + 0.2, -0.0, f64::MIN_POSITIVE / 3.0, 1e308]),
            true,
        );
        set.push("b".into(), Tensor::zeros(&[2, 1]), false);
        let json = serde_json::to_string(&set).unwrap();
        let back: ParamSet = serde_json::from_str(&json).unwrap();
        let bits = |s: &ParamSet| -> Vec<u64> { s.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_bits())).collect() };
        assert_eq!(bits(&set), bits(&back));
        assert_eq!(set, back);
    }
}
