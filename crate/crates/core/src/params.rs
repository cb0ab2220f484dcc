//! Named parameter groups.
//!
//! Models expose their weights as named flat groups so that masking, rewind
//! and checkpointing can treat every architecture the same way. Group names
//! are unique; iteration is always in lexicographic name order so persisted
//! layouts and reduction orders never depend on insertion order.

use crate::error::{shape_err, Result};
use std::collections::BTreeMap;

/// One flat parameter group plus its role flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
    /// Frozen groups are never touched by optimizer steps.
    pub frozen: bool,
    /// Prunable groups take part in magnitude pruning and sparsity accounting.
    pub prunable: bool,
}

impl ParamGroup {
    pub fn new(values: Vec<f64>, shape: Vec<usize>, frozen: bool, prunable: bool) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        ParamGroup { values, shape, frozen, prunable }
    }
}

/// A snapshot of every group's values, keyed by name.
pub type ParamSnapshot = BTreeMap<String, Vec<f64>>;

/// Access to a model's named parameter groups.
pub trait ParamAccess {
    /// Group names in lexicographic order.
    fn group_names(&self) -> Vec<String>;
    fn group(&self, name: &str) -> &[f64];
    fn group_mut(&mut self, name: &str) -> &mut [f64];
    fn is_frozen(&self, name: &str) -> bool;
    fn is_prunable(&self, name: &str) -> bool;

    /// Logical shape for persistence; flat by default.
    fn group_shape(&self, name: &str) -> Vec<usize> {
        vec![self.group(name).len()]
    }

    fn snapshot(&self) -> ParamSnapshot {
        self.group_names()
            .into_iter()
            .map(|n| {
                let v = self.group(&n).to_vec();
                (n, v)
            })
            .collect()
    }

    fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        for name in self.group_names() {
            let src = snap
                .get(&name)
                .ok_or_else(|| crate::CoreError::Shape(format!("snapshot missing group {name}")))?;
            let dst = self.group_mut(&name);
            if src.len() != dst.len() {
                return shape_err(format!(
                    "snapshot group {name} has {} values, model expects {}",
                    src.len(),
                    dst.len()
                ));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Minimal ParamAccess implementation for driver tests.
    pub struct FlatModel {
        pub groups: BTreeMap<String, ParamGroup>,
    }

    impl FlatModel {
        pub fn new(groups: Vec<(&str, ParamGroup)>) -> Self {
            FlatModel { groups: groups.into_iter().map(|(n, g)| (n.to_string(), g)).collect() }
        }
    }

    impl ParamAccess for FlatModel {
        fn group_names(&self) -> Vec<String> {
            self.groups.keys().cloned().collect()
        }
        fn group(&self, name: &str) -> &[f64] {
            &self.groups[name].values
        }
        fn group_mut(&mut self, name: &str) -> &mut [f64] {
            &mut self.groups.get_mut(name).unwrap().values
        }
        fn is_frozen(&self, name: &str) -> bool {
            self.groups[name].frozen
        }
        fn is_prunable(&self, name: &str) -> bool {
            self.groups[name].prunable
        }
    }
}
