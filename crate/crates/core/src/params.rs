//! Named, transformed parameter vectors.
//!
//! The sampler works on an unconstrained flat vector. The registry maps each
//! named parameter group to an index range and a transform back to its natural
//! scale: `log` for positive quantities, `logit` for probabilities.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::stats::{inv_logit, logit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
    Logit,
}

impl Transform {
    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
            Transform::Logit => inv_logit(u),
        }
    }

    pub fn to_unconstrained(self, v: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(v),
            Transform::Log => {
                ensure!(v > 0.0 && v.is_finite(), Domain, "log-transformed value must be positive, got {v}");
                Ok(v.ln())
            }
            Transform::Logit => {
                ensure!(v > 0.0 && v < 1.0, Domain, "logit-transformed value must lie in (0, 1), got {v}");
                Ok(logit(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub labels: Vec<String>,
    pub offset: usize,
    pub transform: Transform,
}

impl RegistryEntry {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.labels.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterRegistry {
    entries: Vec<RegistryEntry>,
    dim: usize,
}

impl ParameterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a group with one element per label; returns its index range.
    pub fn push(&mut self, name: &str, labels: Vec<String>, transform: Transform) -> Range<usize> {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "parameter group {name} registered twice"
        );
        let entry = RegistryEntry {
            name: name.to_string(),
            labels,
            offset: self.dim,
            transform,
        };
        self.dim += entry.labels.len();
        let range = entry.range();
        self.entries.push(entry);
        range
    }

    pub fn push_scalar(&mut self, name: &str, transform: Transform) -> usize {
        self.push(name, vec![String::new()], transform).start
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        self.entry(name)
            .map(RegistryEntry::range)
            .ok_or_else(|| Error::Internal(format!("unknown parameter group {name}")))
    }

    /// Element names such as `alpha[torne]`, or the bare group name for scalars.
    pub fn names(&self) -> Vec<String> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.labels.iter().map(move |l| {
                    if l.is_empty() {
                        e.name.clone()
                    } else {
                        format!("{}[{}]", e.name, l)
                    }
                })
            })
            .collect()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.transform, e.labels.len()))
            .collect()
    }

    pub fn to_natural(&self, unconstrained: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            unconstrained.len() == self.dim,
            Internal,
            "vector of length {} does not match registry dimension {}",
            unconstrained.len(),
            self.dim
        );
        Ok(unconstrained
            .iter()
            .zip(self.transforms())
            .map(|(u, t)| t.to_natural(*u))
            .collect())
    }

    pub fn from_natural(&self, natural: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            natural.len() == self.dim,
            Internal,
            "vector of length {} does not match registry dimension {}",
            natural.len(),
            self.dim
        );
        natural
            .iter()
            .zip(self.transforms())
            .map(|(v, t)| t.to_unconstrained(*v))
            .collect()
    }
}

/// A point in the unconstrained parameter space of some registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn get(&self, registry: &ParameterRegistry, name: &str) -> Result<&[f64]> {
        Ok(&self.values[registry.range(name)?])
    }

    /// Natural-scale values of one group.
    pub fn natural(&self, registry: &ParameterRegistry, name: &str) -> Result<Vec<f64>> {
        let entry = registry
            .entry(name)
            .ok_or_else(|| Error::Internal(format!("unknown parameter group {name}")))?;
        Ok(self.values[entry.range()]
            .iter()
            .map(|u| entry.transform.to_natural(*u))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry() -> ParameterRegistry {
        let mut r = ParameterRegistry::new();
        r.push("alpha", vec!["a".into(), "b".into()], Transform::Log);
        r.push_scalar("sigma_r", Transform::Log);
        r.push("maturation", vec!["1".into()], Transform::Logit);
        r.push("z_r", vec!["a,0".into()], Transform::Identity);
        r
    }

    #[test]
    fn names_and_ranges() {
        let r = registry();
        assert_eq!(r.dim(), 5);
        assert_eq!(
            r.names(),
            vec!["alpha[a]", "alpha[b]", "sigma_r", "maturation[1]", "z_r[a,0]"]
        );
        assert_eq!(r.range("maturation").unwrap(), 3..4);
        assert!(r.range("missing").is_err());
        // every element appears exactly once
        let mut covered = vec![0; r.dim()];
        for e in r.entries() {
            for i in e.range() {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|c| *c == 1));
    }

    #[test]
    fn rejects_out_of_domain() {
        let r = registry();
        assert!(r.from_natural(&[1.0, -1.0, 1.0, 0.5, 0.0]).is_err());
        assert!(r.from_natural(&[1.0, 1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(r.to_natural(&[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn transform_round_trip(u in proptest::collection::vec(-8.0f64..8.0, 5)) {
            let r = registry();
            let back = r.from_natural(&r.to_natural(&u).unwrap()).unwrap();
            for (a, b) in u.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
