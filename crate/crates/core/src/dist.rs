//! Finite outcome tables.
//!
//! [`DistTable`] is the return type of every exact query in the crate. Keys are
//! kept in a `BTreeMap` so iteration order (and therefore any serialized
//! output) is deterministic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance used when checking that a table sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DistTable<K: Ord> {
    entries: BTreeMap<K, f64>,
}

impl<K: Ord> Default for DistTable<K> {
    fn default() -> Self {
        DistTable { entries: BTreeMap::new() }
    }
}

impl<K: Ord + Clone> DistTable<K> {
    /// Builds a table without checking normalization. Repeated keys accumulate.
    pub fn from_weights<I: IntoIterator<Item = (K, f64)>>(items: I) -> Self {
        let mut entries = BTreeMap::new();
        for (k, p) in items {
            *entries.entry(k).or_insert(0.0) += p;
        }
        DistTable { entries }
    }

    /// Builds a table and requires every entry to be nonnegative and the total
    /// to be one within [`NORMALIZATION_TOL`].
    pub fn normalized<I: IntoIterator<Item = (K, f64)>>(items: I) -> Result<Self> {
        let table = Self::from_weights(items);
        if let Some(p) = table.entries.values().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel(format!("negative or non-finite probability {p}")));
        }
        let total = table.total();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidModel(format!("probabilities sum to {total}, not 1")));
        }
        Ok(table)
    }

    /// Divides every entry by the total mass.
    pub fn renormalize(items: impl IntoIterator<Item = (K, f64)>) -> Result<Self> {
        let table = Self::from_weights(items);
        let total = table.total();
        if !(total > 0.0) {
            return Err(Error::InvalidModel("cannot renormalize zero mass".into()));
        }
        Ok(DistTable {
            entries: table.entries.into_iter().map(|(k, p)| (k, p / total)).collect(),
        })
    }

    pub fn point_mass(key: K) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(key, 1.0);
        DistTable { entries }
    }

    pub fn get(&self, key: &K) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.entries.iter().map(|(k, p)| (k, *p))
    }

    /// Keys carrying strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = &K> {
        self.entries.iter().filter(|(_, p)| **p > 0.0).map(|(k, _)| k)
    }

    /// Drops zero entries.
    pub fn pruned(mut self) -> Self {
        self.entries.retain(|_, p| *p > 0.0);
        self
    }

    /// The single key with mass one, if this is a point mass.
    pub fn as_point_mass(&self, tol: f64) -> Option<&K> {
        let mut support = self.entries.iter().filter(|(_, p)| **p > tol);
        match (support.next(), support.next()) {
            (Some((k, p)), None) if (p - 1.0).abs() <= tol => Some(k),
            _ => None,
        }
    }

    /// Pushes the table through `f`, summing colliding keys.
    pub fn map_keys<K2: Ord + Clone>(&self, mut f: impl FnMut(&K) -> K2) -> DistTable<K2> {
        DistTable::from_weights(self.entries.iter().map(|(k, p)| (f(k), *p)))
    }

    /// Largest absolute difference over the union of both supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, p) in &self.entries {
            worst = worst.max((p - other.get(k)).abs());
        }
        for (k, p) in &other.entries {
            if !self.entries.contains_key(k) {
                worst = worst.max(p.abs());
            }
        }
        worst
    }

    pub fn into_inner(self) -> BTreeMap<K, f64> {
        self.entries
    }
}

/// Total variation distance: half the L1 distance over the union support.
pub fn tvd<K: Ord + Clone>(a: &DistTable<K>, b: &DistTable<K>) -> f64 {
    let mut l1 = 0.0;
    for (k, p) in a.iter() {
        l1 += (p - b.get(k)).abs();
    }
    for (k, p) in b.iter() {
        if !a.entries.contains_key(k) {
            l1 += p.abs();
        }
    }
    0.5 * l1
}
