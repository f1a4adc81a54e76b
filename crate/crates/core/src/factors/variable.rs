use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense identifier of a variable within a model.
pub type VarId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    State,
    Action,
    NextState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub kind: VarKind,
    pub cardinality: usize,
}

/// Registry of the variables of a model. Ids are contiguous, starting at zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableTable {
    vars: Vec<Variable>,
}

impl VariableTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: VarKind, cardinality: usize) -> VarId {
        assert!(cardinality >= 2, "variables need at least two values");
        let id = self.vars.len();
        self.vars.push(Variable {
            id,
            name: name.into(),
            kind,
            cardinality,
        });
        id
    }

    /// Rebuilds a table from a list of variables, checking id contiguity.
    pub fn from_variables(vars: Vec<Variable>) -> Result<Self> {
        for (i, v) in vars.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidModel(format!(
                    "variable ids must be contiguous, found id {} at position {i}",
                    v.id
                )));
            }
            if v.cardinality < 2 {
                return Err(Error::InvalidModel(format!(
                    "variable {} has cardinality {}",
                    v.name, v.cardinality
                )));
            }
        }
        Ok(Self { vars })
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, id: VarId) -> Option<&Variable> {
        self.vars.get(id)
    }

    pub fn cardinality(&self, id: VarId) -> usize {
        self.vars[id].cardinality
    }

    pub fn iter(&self) -> impl Iterator<Item = &Variable> {
        self.vars.iter()
    }

    pub fn of_kind(&self, kind: VarKind) -> Vec<VarId> {
        self.vars
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.id)
            .collect()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.vars[id].name
    }
}

/// Partial or full instantiation of variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(BTreeMap<VarId, usize>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    /// Value of `var`, or an incomplete-assignment error.
    pub fn require(&self, var: VarId) -> Result<usize> {
        self.get(var).ok_or(Error::IncompleteAssignment(var))
    }

    pub fn set(&mut self, var: VarId, value: usize) -> &mut Self {
        self.0.insert(var, value);
        self
    }

    pub fn with(mut self, var: VarId, value: usize) -> Self {
        self.0.insert(var, value);
        self
    }

    pub fn remove(&mut self, var: VarId) -> Option<usize> {
        self.0.remove(&var)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.keys().copied()
    }

    pub fn extend(&mut self, other: &Assignment) {
        for (k, v) in other.iter() {
            self.0.insert(k, v);
        }
    }

    /// Checks every value against the cardinalities in `table`.
    pub fn validate(&self, table: &VariableTable) -> Result<()> {
        for (var, value) in self.iter() {
            let v = table
                .get(var)
                .ok_or_else(|| Error::InvalidModel(format!("unknown variable {var}")))?;
            if value >= v.cardinality {
                return Err(Error::ValueOutOfRange {
                    var,
                    value,
                    cardinality: v.cardinality,
                });
            }
        }
        Ok(())
    }
}

impl FromIterator<(VarId, usize)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (VarId, usize)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in self.iter() {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "v{k}={v}")?;
        }
        Ok(())
    }
}

/// Enumerates every joint assignment of `vars` (first variable most significant).
pub fn all_assignments(vars: &[(VarId, usize)]) -> impl Iterator<Item = Assignment> + '_ {
    let total: usize = vars.iter().map(|&(_, c)| c).product();
    (0..total).map(move |mut idx| {
        let mut a = Assignment::new();
        for &(v, c) in vars.iter().rev() {
            a.set(v, idx % c);
            idx /= c;
        }
        a
    })
}
