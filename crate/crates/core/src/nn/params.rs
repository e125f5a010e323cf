//! Named parameter groups: the unit of optimisation and of federation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Group names used by the CTR models.
pub const EMBEDDING: &str = "embedding";
pub const INTERACTION: &str = "interaction";
pub const OUTPUT: &str = "output";
pub const GROUP_NAMES: [&str; 3] = [EMBEDDING, INTERACTION, OUTPUT];

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGroup<T> {
    pub name: String,
    pub params: Vec<Param<T>>,
}

impl<T: Scalar> ParameterGroup<T> {
    pub fn new(name: impl Into<String>) -> Self {
        ParameterGroup {
            name: name.into(),
            params: Vec::new(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Handle to a tensor inside a [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub group: usize,
    pub index: usize,
}

/// Ordered parameter groups with unique names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet<T> {
    groups: Vec<ParameterGroup<T>>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet { groups: Vec::new() }
    }

    /// Appends a tensor to group `group`, creating the group on first use.
    pub fn register(&mut self, group: &str, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let g = match self.groups.iter().position(|g| g.name == group) {
            Some(g) => g,
            None => {
                self.groups.push(ParameterGroup::new(group));
                self.groups.len() - 1
            }
        };
        self.groups[g].params.push(Param::new(name, value));
        ParamId {
            group: g,
            index: self.groups[g].params.len() - 1,
        }
    }

    pub fn groups(&self) -> &[ParameterGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParameterGroup<T>] {
        &mut self.groups
    }

    pub fn group_names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    pub fn group(&self, name: &str) -> Option<&ParameterGroup<T>> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParameterGroup<T>> {
        self.groups.iter_mut().find(|g| g.name == name)
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.groups[id.group].params[id.index].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.groups[id.group].params[id.index].value
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.groups[id.group].params[id.index].grad
    }

    #[inline]
    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.groups[id.group].params[id.index].grad
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.groups.iter().flat_map(|g| g.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.groups.iter_mut().flat_map(|g| g.params.iter_mut())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.groups.iter().map(ParameterGroup::num_scalars).sum()
    }

    /// Same group names, tensor names and shapes, in the same order.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.groups.len() == other.groups.len()
            && self.groups.iter().zip(&other.groups).all(|(a, b)| {
                a.name == b.name
                    && a.params.len() == b.params.len()
                    && a.params
                        .iter()
                        .zip(&b.params)
                        .all(|(p, q)| p.name == q.name && p.value.shape() == q.value.shape())
            })
    }

    /// Overwrites the values of every group present in `source`.
    pub fn load_groups(&mut self, source: &ParameterSet<T>) -> Result<()> {
        for src in &source.groups {
            let dst = self
                .group_mut(&src.name)
                .ok_or_else(|| Error::Shape(format!("no parameter group `{}`", src.name)))?;
            if dst.params.len() != src.params.len() {
                return Err(Error::Shape(format!("group `{}` tensor count differs", src.name)));
            }
            for (d, s) in dst.params.iter_mut().zip(&src.params) {
                if d.name != s.name || d.value.shape() != s.value.shape() {
                    return Err(Error::Shape(format!(
                        "group `{}` tensor `{}` does not match `{}`",
                        src.name, d.name, s.name
                    )));
                }
                d.value = s.value.clone();
            }
        }
        Ok(())
    }

    /// Copy holding only the named groups, in this set's order.
    pub fn subset(&self, names: &[&str]) -> ParameterSet<T> {
        ParameterSet {
            groups: self
                .groups
                .iter()
                .filter(|g| names.contains(&g.name.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for g in &self.groups {
            for p in &g.params {
                p.value.check_finite(&format!("{}/{}", g.name, p.name))?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            groups: self
                .groups
                .iter()
                .map(|g| GroupRecord {
                    name: g.name.clone(),
                    tensors: g
                        .params
                        .iter()
                        .map(|p| TensorRecord {
                            name: p.name.clone(),
                            shape: [p.value.rows(), p.value.cols()],
                            values: p.value.as_slice().iter().map(|v| v.as_f64()).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut set = ParameterSet::new();
        for g in &ckpt.groups {
            if set.group(&g.name).is_some() {
                return Err(Error::Parse(format!("duplicate group `{}`", g.name)));
            }
            set.groups.push(ParameterGroup::new(g.name.clone()));
            for t in &g.tensors {
                let values = t.values.iter().map(|&v| T::lit(v)).collect();
                let tensor = Tensor::from_vec(t.shape[0], t.shape[1], values)?;
                set.register(&g.name, t.name.clone(), tensor);
            }
        }
        Ok(set)
    }

    /// Canonical JSON encoding; identical state gives identical bytes.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(&self.to_checkpoint())?)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_slice(bytes)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "fedrec-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub groups: Vec<GroupRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub name: String,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}
