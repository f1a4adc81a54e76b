use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Index of an LP decision variable.
pub type LpVar = usize;

/// `constant + Σ coef · x`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearExpr {
    pub constant: f64,
    pub terms: BTreeMap<LpVar, f64>,
}

impl LinearExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(x: LpVar) -> Self {
        Self::term(x, 1.0)
    }

    pub fn term(x: LpVar, coef: f64) -> Self {
        let mut e = Self::default();
        e.add_term(x, coef);
        e
    }

    pub fn add_term(&mut self, x: LpVar, coef: f64) {
        let c = self.terms.entry(x).or_insert(0.0);
        *c += coef;
        if *c == 0.0 {
            self.terms.remove(&x);
        }
    }

    pub fn add(&mut self, other: &LinearExpr) {
        self.constant += other.constant;
        for (&x, &c) in &other.terms {
            self.add_term(x, c);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::constant(self.constant * s);
        for (&x, &c) in &self.terms {
            out.add_term(x, c * s);
        }
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&x, &c)| c * values[x]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpVarKind {
    Weight,
    Auxiliary,
}

/// Constraints and auxiliaries produced by one elimination step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub var: usize,
    pub auxiliaries: usize,
    pub constraints: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Label {
    Named(usize),
    Aux(u32, u64),
}

/// Minimization LP with free variables and `≥` rows, stored row-compressed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgramModel {
    names: Vec<String>,
    /// Per variable: index into `names`, or the (stage, entry) of an auxiliary.
    labels: Vec<Label>,
    kinds: Vec<LpVarKind>,
    objective: Vec<f64>,
    row_starts: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    pub stages: Vec<StageStats>,
}

impl LinearProgramModel {
    pub fn new() -> Self {
        Self {
            row_starts: vec![0],
            ..Self::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: LpVarKind, objective: f64) -> LpVar {
        self.names.push(name.into());
        self.labels.push(Label::Named(self.names.len() - 1));
        self.push_var(kind, objective)
    }

    /// Auxiliary for entry `entry` of the term reduced at step `stage`,
    /// named `u_<stage>_<entry>`.
    pub fn add_aux(&mut self, stage: usize, entry: usize) -> LpVar {
        self.labels.push(Label::Aux(stage as u32, entry as u64));
        self.push_var(LpVarKind::Auxiliary, 0.0)
    }

    fn push_var(&mut self, kind: LpVarKind, objective: f64) -> LpVar {
        self.kinds.push(kind);
        self.objective.push(objective);
        self.kinds.len() - 1
    }

    /// Adds `Σ coef · x ≥ rhs`. Terms must mention distinct variables.
    pub fn add_row(&mut self, terms: impl IntoIterator<Item = (LpVar, f64)>, rhs: f64) {
        for (x, c) in terms {
            debug_assert!(x < self.kinds.len(), "undeclared variable {x}");
            if c != 0.0 {
                self.cols.push(x as u32);
                self.vals.push(c);
            }
        }
        self.row_starts.push(self.cols.len());
        self.rhs.push(rhs);
    }

    /// Adds `lhs ≥ rhs`.
    pub fn add_constraint(&mut self, lhs: &LinearExpr, rhs: &LinearExpr) {
        let mut d = lhs.clone();
        d.add(&rhs.scaled(-1.0));
        let c = -d.constant;
        self.add_row(d.terms, c);
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.cols.len()
    }

    pub fn name(&self, x: LpVar) -> Cow<'_, str> {
        match self.labels[x] {
            Label::Named(i) => Cow::Borrowed(&self.names[i]),
            Label::Aux(stage, entry) => Cow::Owned(format!("u_{stage}_{entry}")),
        }
    }

    pub fn kind(&self, x: LpVar) -> LpVarKind {
        self.kinds[x]
    }

    pub fn vars_of_kind(&self, kind: LpVarKind) -> Vec<LpVar> {
        (0..self.num_vars()).filter(|&x| self.kinds[x] == kind).collect()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, x: LpVar, coef: f64) {
        self.objective[x] = coef;
    }

    /// Variables and coefficients of row `i`, with its right-hand side.
    pub fn row(&self, i: usize) -> (&[u32], &[f64], f64) {
        let (a, b) = (self.row_starts[i], self.row_starts[i + 1]);
        (&self.cols[a..b], &self.vals[a..b], self.rhs[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u32], &[f64], f64)> + '_ {
        (0..self.num_constraints()).map(|i| self.row(i))
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest amount by which any row is violated at `x` (0 if feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows()
            .map(|(cols, vals, rhs)| {
                let lhs: f64 = cols.iter().zip(vals).map(|(&j, &c)| c * x[j as usize]).sum();
                (rhs - lhs).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}
