use super::variable::{Assignment, VarId};
use crate::error::{Error, Result};

/// Dense table over a scope of variables, first variable most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatFactor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    table: Vec<f64>,
}

impl FlatFactor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if scope.len() != cards.len() {
            return Err(Error::LengthMismatch {
                expected: scope.len(),
                got: cards.len(),
            });
        }
        for (i, v) in scope.iter().enumerate() {
            if scope[..i].contains(v) {
                return Err(Error::InvalidFactor(format!("duplicate variable {v}")));
            }
        }
        let expected: usize = cards.iter().product();
        if table.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: table.len(),
            });
        }
        Ok(Self { scope, cards, table })
    }

    pub fn from_fn(
        scope: Vec<VarId>,
        cards: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let total: usize = cards.iter().product();
        let mut digits = vec![0; cards.len()];
        let table = (0..total)
            .map(|mut i| {
                for d in (0..cards.len()).rev() {
                    digits[d] = i % cards[d];
                    i /= cards[d];
                }
                f(&digits)
            })
            .collect();
        Self::new(scope, cards, table)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            scope: vec![],
            cards: vec![],
            table: vec![value],
        }
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn index_for(&self, a: &Assignment) -> Result<usize> {
        let mut idx = 0;
        for (&v, &c) in self.scope.iter().zip(&self.cards) {
            let x = a.require(v)?;
            if x >= c {
                return Err(Error::ValueOutOfRange {
                    var: v,
                    value: x,
                    cardinality: c,
                });
            }
            idx = idx * c + x;
        }
        Ok(idx)
    }

    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        Ok(self.table[self.index_for(a)?])
    }

    /// Mean of the table: the expectation under a uniform distribution.
    pub fn mean(&self) -> f64 {
        self.table.iter().sum::<f64>() / self.table.len() as f64
    }
}
