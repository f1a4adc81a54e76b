//! Factored multiagent MDPs: a two-slice transition model whose CPDs are
//! mixed-mode factors, additive rewards, linear value functions over basis
//! functions, and greedy joint-action selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::elimination::{eliminate_argmax, greedy_order, FactorSet};
use crate::error::{Error, Result};
use crate::factors::serial::FactorDoc;
use crate::factors::{
    Assignment, FlatFactor, MixedModeFactor, Shape, VarId, VarKind, Variable, VariableTable,
};

pub const MODEL_FORMAT: &str = "anonplan-model/1";

/// Tolerance for the row sums of a CPD.
const NORMALIZATION_TOL: f64 = 1e-9;

/// Transition factor of one state variable: a conditional distribution over
/// `child` (a next-state variable, stored as a proper variable of `factor`)
/// given the remaining variables of `factor`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpd {
    pub state: VarId,
    pub child: VarId,
    pub factor: MixedModeFactor,
}

#[derive(Clone, Debug)]
pub struct FactoredModel {
    variables: VariableTable,
    cpds: Vec<Cpd>,
    rewards: Vec<MixedModeFactor>,
    discount: f64,
    next_of: BTreeMap<VarId, VarId>,
}

impl FactoredModel {
    /// Checks kinds, scopes and normalization of every CPD.
    pub fn new(
        variables: VariableTable,
        cpds: Vec<Cpd>,
        rewards: Vec<MixedModeFactor>,
        discount: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        let kind = |v: VarId| variables.get(v).map(|x| x.kind);
        let mut next_of = BTreeMap::new();
        for cpd in &cpds {
            if kind(cpd.state) != Some(VarKind::State) {
                return Err(Error::InvalidModel(format!(
                    "cpd source {} is not a state variable",
                    cpd.state
                )));
            }
            if kind(cpd.child) != Some(VarKind::NextState) {
                return Err(Error::InvalidModel(format!(
                    "cpd child {} is not a next-state variable",
                    cpd.child
                )));
            }
            if next_of.insert(cpd.state, cpd.child).is_some() {
                return Err(Error::InvalidModel(format!(
                    "state variable {} has two cpds",
                    cpd.state
                )));
            }
            let shape = cpd.factor.shape();
            for v in shape.variables() {
                match kind(v) {
                    Some(VarKind::State | VarKind::Action) => {}
                    Some(VarKind::NextState) if v == cpd.child => {}
                    _ => {
                        return Err(Error::InvalidModel(format!(
                            "cpd of {} mentions variable {v} outside its parents",
                            cpd.state
                        )))
                    }
                }
            }
            check_normalized(cpd)?;
        }
        for s in variables.of_kind(VarKind::State) {
            if !next_of.contains_key(&s) {
                return Err(Error::InvalidModel(format!("state variable {s} has no cpd")));
            }
        }
        for r in &rewards {
            for v in r.shape().variables() {
                if !matches!(kind(v), Some(VarKind::State | VarKind::Action)) {
                    return Err(Error::InvalidModel(format!(
                        "reward mentions variable {v} that is not a state or action"
                    )));
                }
            }
        }
        Ok(Self {
            variables,
            cpds,
            rewards,
            discount,
            next_of,
        })
    }

    pub fn variables(&self) -> &VariableTable {
        &self.variables
    }

    pub fn cpds(&self) -> &[Cpd] {
        &self.cpds
    }

    pub fn rewards(&self) -> &[MixedModeFactor] {
        &self.rewards
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn state_vars(&self) -> Vec<VarId> {
        self.variables.of_kind(VarKind::State)
    }

    pub fn action_vars(&self) -> Vec<VarId> {
        self.variables.of_kind(VarKind::Action)
    }

    pub fn next_of(&self, state: VarId) -> Option<VarId> {
        self.next_of.get(&state).copied()
    }

    pub fn cpd_of(&self, state: VarId) -> Option<&Cpd> {
        self.cpds.iter().find(|c| c.state == state)
    }

    /// R(x, a) at a full state-action assignment.
    pub fn reward(&self, a: &Assignment) -> Result<f64> {
        self.rewards.iter().map(|r| r.eval(a)).sum()
    }

    /// P(x' | x, a) for a full assignment of current and next variables.
    pub fn transition_prob(&self, a: &Assignment) -> Result<f64> {
        self.cpds.iter().map(|c| c.factor.eval(a)).product()
    }
}

fn check_normalized(cpd: &Cpd) -> Result<()> {
    let f = &cpd.factor;
    if f.shape().proper_position(cpd.child).is_none() {
        return Err(Error::InvalidModel(format!(
            "cpd child {} must be a proper variable",
            cpd.child
        )));
    }
    for (i, &x) in f.table().iter().enumerate() {
        if f.is_valid(i) && !(-NORMALIZATION_TOL..=1.0 + NORMALIZATION_TOL).contains(&x) {
            return Err(Error::InvalidModel(format!(
                "cpd of {} has probability {x} at entry {i}",
                cpd.state
            )));
        }
    }
    let sums = f.sum_out(cpd.child)?;
    for (i, &s) in sums.table().iter().enumerate() {
        if sums.is_valid(i) && (s - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidModel(format!(
                "cpd of {} sums to {s} at parent entry {i}",
                cpd.state
            )));
        }
    }
    Ok(())
}

/// Flat function of current-state variables.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFunction {
    pub id: usize,
    pub name: String,
    pub factor: FlatFactor,
}

impl BasisFunction {
    pub fn eval(&self, x: &Assignment) -> Result<f64> {
        self.factor.eval(x)
    }
}

/// Per state variable, the indicators of its two values.
pub fn indicator_basis(m: &FactoredModel) -> Vec<BasisFunction> {
    let mut out = Vec::new();
    for x in m.state_vars() {
        let name = m.variables().name(x).to_string();
        for (value, table) in [(1, [0.0, 1.0]), (0, [1.0, 0.0])] {
            out.push(BasisFunction {
                id: out.len(),
                name: format!("[{name}={value}]"),
                factor: FlatFactor::new(vec![x], vec![2], table.to_vec())
                    .expect("binary indicator"),
            });
        }
    }
    out
}

/// Expected value of a basis function at the next step, as a function of the
/// parents of its scope.
#[derive(Clone, Debug, PartialEq)]
pub struct BackProjection {
    pub basis: usize,
    pub factor: MixedModeFactor,
}

/// Multiplies the basis (moved onto next-state variables) with the CPDs of
/// its scope and sums the next-state variables out in ascending order.
pub fn backproject(h: &BasisFunction, m: &FactoredModel) -> Result<BackProjection> {
    let mut proper = Vec::new();
    let mut cpds = Vec::new();
    for (&x, &card) in h.factor.scope().iter().zip(h.factor.cards()) {
        let next = m.next_of(x).ok_or_else(|| {
            Error::InvalidModel(format!("basis {} mentions non-state variable {x}", h.id))
        })?;
        proper.push((next, card));
        cpds.push(&m.cpd_of(x).expect("every state has a cpd").factor);
    }
    let moved = MixedModeFactor::new(Shape::new(proper.clone(), vec![])?, h.factor.table().to_vec())?;
    let mut parts: Vec<&MixedModeFactor> = vec![&moved];
    parts.extend(cpds);
    let mut g = MixedModeFactor::multiply_all(&parts);
    let mut nexts: Vec<VarId> = proper.iter().map(|&(v, _)| v).collect();
    nexts.sort_unstable();
    for v in nexts {
        g = g.sum_out(v)?;
    }
    Ok(BackProjection {
        basis: h.id,
        factor: g,
    })
}

pub fn backproject_all(basis: &[BasisFunction], m: &FactoredModel) -> Result<Vec<BackProjection>> {
    basis.iter().map(|h| backproject(h, m)).collect()
}

/// Local terms of Q(x, a) = R(x, a) + γ Σ_j w_j g_j(x, a).
pub fn q_terms(
    m: &FactoredModel,
    backprojections: &[BackProjection],
    w: &[f64],
) -> Result<Vec<MixedModeFactor>> {
    if w.len() != backprojections.len() {
        return Err(Error::LengthMismatch {
            expected: backprojections.len(),
            got: w.len(),
        });
    }
    let mut terms = m.rewards().to_vec();
    for (g, &wj) in backprojections.iter().zip(w) {
        if wj != 0.0 {
            terms.push(g.factor.scale(m.discount() * wj));
        }
    }
    Ok(terms)
}

/// A Q-function ready for repeated greedy action selection.
#[derive(Clone, Debug)]
pub struct QFunction {
    terms: Vec<MixedModeFactor>,
    state_vars: Vec<VarId>,
    action_vars: BTreeSet<VarId>,
}

impl QFunction {
    pub fn new(m: &FactoredModel, basis: &[BasisFunction], w: &[f64]) -> Result<Self> {
        let bp = backproject_all(basis, m)?;
        Self::from_backprojections(m, &bp, w)
    }

    pub fn from_backprojections(
        m: &FactoredModel,
        backprojections: &[BackProjection],
        w: &[f64],
    ) -> Result<Self> {
        let action_vars: BTreeSet<VarId> = m.action_vars().into_iter().collect();
        // Terms without actions do not affect the argmax.
        let terms = q_terms(m, backprojections, w)?
            .into_iter()
            .filter(|t| t.shape().variables().iter().any(|v| action_vars.contains(v)))
            .collect();
        Ok(Self {
            terms,
            state_vars: m.state_vars(),
            action_vars,
        })
    }

    /// Maximizing joint action at state `x`; ties prefer not acting.
    pub fn greedy_action(&self, x: &Assignment) -> Result<Assignment> {
        for &s in &self.state_vars {
            x.require(s)?;
        }
        let conditioned = self
            .terms
            .iter()
            .map(|t| t.condition_on(x))
            .collect::<Result<Vec<_>>>()?;
        let fs = FactorSet::new(conditioned);
        let order = greedy_order(&fs, &self.action_vars);
        let (_, mut a) = eliminate_argmax(&fs, &order)?;
        for &v in &self.action_vars {
            if !a.contains(v) {
                a.set(v, 0);
            }
        }
        Ok(a)
    }
}

/// Greedy joint action with respect to the linear value function `w`.
pub fn greedy_action(
    m: &FactoredModel,
    basis: &[BasisFunction],
    w: &[f64],
    x: &Assignment,
) -> Result<Assignment> {
    QFunction::new(m, basis, w)?.greedy_action(x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CpdDoc {
    state: VarId,
    child: VarId,
    factor: FactorDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format: String,
    pub discount: f64,
    variables: Vec<Variable>,
    cpds: Vec<CpdDoc>,
    rewards: Vec<FactorDoc>,
}

impl ModelDoc {
    pub fn from_model(m: &FactoredModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            discount: m.discount,
            variables: m.variables.iter().cloned().collect(),
            cpds: m
                .cpds
                .iter()
                .map(|c| CpdDoc {
                    state: c.state,
                    child: c.child,
                    factor: FactorDoc::from_factor(&c.factor),
                })
                .collect(),
            rewards: m.rewards.iter().map(FactorDoc::from_factor).collect(),
        }
    }

    pub fn to_model(&self) -> Result<FactoredModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidModel(format!(
                "unknown model format {:?}",
                self.format
            )));
        }
        let vars = VariableTable::from_variables(self.variables.clone())?;
        let cpds = self
            .cpds
            .iter()
            .map(|c| {
                Ok(Cpd {
                    state: c.state,
                    child: c.child,
                    factor: c.factor.to_factor(&vars)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rewards = self
            .rewards
            .iter()
            .map(|r| r.to_factor(&vars))
            .collect::<Result<Vec<_>>>()?;
        FactoredModel::new(vars, cpds, rewards, self.discount)
    }
}
