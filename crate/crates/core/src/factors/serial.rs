//! JSON encodings of factors and factor graphs.

use serde::{Deserialize, Serialize};

use super::mixed::MixedModeFactor;
use super::shape::{CountScope, Shape};
use super::variable::{VarId, Variable, VariableTable};
use crate::error::{Error, Result};

pub const FACTOR_GRAPH_FORMAT: &str = "anonplan-factors/1";

/// Serialized factor. `values` lists every entry of the redundant table in
/// layout order; inconsistent entries are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorDoc {
    pub proper: Vec<VarId>,
    #[serde(default)]
    pub counters: Vec<Vec<VarId>>,
    pub values: Vec<Option<f64>>,
}

impl FactorDoc {
    pub fn from_factor(f: &MixedModeFactor) -> Self {
        Self {
            proper: f.shape().proper().to_vec(),
            counters: f
                .shape()
                .counters()
                .iter()
                .map(|z| z.members().to_vec())
                .collect(),
            values: f
                .table()
                .iter()
                .zip(f.validity())
                .map(|(&x, &v)| v.then_some(x))
                .collect(),
        }
    }

    pub fn to_factor(&self, vars: &VariableTable) -> Result<MixedModeFactor> {
        let mut proper = Vec::with_capacity(self.proper.len());
        for &v in &self.proper {
            let var = vars
                .get(v)
                .ok_or_else(|| Error::InvalidFactor(format!("unknown variable {v}")))?;
            proper.push((v, var.cardinality));
        }
        let mut counters = Vec::with_capacity(self.counters.len());
        for members in &self.counters {
            for &m in members {
                match vars.get(m) {
                    Some(var) if var.cardinality == 2 => {}
                    Some(_) => {
                        return Err(Error::InvalidFactor(format!(
                            "count variable {m} is not binary"
                        )))
                    }
                    None => return Err(Error::InvalidFactor(format!("unknown variable {m}"))),
                }
            }
            counters.push(CountScope::new(members.iter().copied())?);
        }
        let shape = Shape::new(proper, counters)?;
        if self.values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                got: self.values.len(),
            });
        }
        let table: Vec<f64> = self.values.iter().map(|x| x.unwrap_or(0.0)).collect();
        let f = MixedModeFactor::new(shape, table)?;
        for (i, (x, &v)) in self.values.iter().zip(f.validity()).enumerate() {
            if x.is_some() != v {
                return Err(Error::InvalidFactor(format!(
                    "entry {i}: value presence does not match consistency ({})",
                    if v { "consistent entry is null" } else { "inconsistent entry has a value" }
                )));
            }
        }
        Ok(f)
    }
}

/// A set of factors over a variable table, input of the `ve` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorGraphDoc {
    pub format: String,
    pub variables: Vec<Variable>,
    pub factors: Vec<FactorDoc>,
}

impl FactorGraphDoc {
    pub fn new(vars: &VariableTable, factors: &[MixedModeFactor]) -> Self {
        Self {
            format: FACTOR_GRAPH_FORMAT.to_string(),
            variables: vars.iter().cloned().collect(),
            factors: factors.iter().map(FactorDoc::from_factor).collect(),
        }
    }

    pub fn decode(&self) -> Result<(VariableTable, Vec<MixedModeFactor>)> {
        if self.format != FACTOR_GRAPH_FORMAT {
            return Err(Error::InvalidFactor(format!(
                "unsupported format {:?}, expected {FACTOR_GRAPH_FORMAT:?}",
                self.format
            )));
        }
        let vars = VariableTable::from_variables(self.variables.clone())?;
        let factors = self
            .factors
            .iter()
            .map(|d| d.to_factor(&vars))
            .collect::<Result<Vec<_>>>()?;
        Ok((vars, factors))
    }
}
