//! Approximate linear programming for factored MDPs with a linear value
//! function: the exponentially large constraint set is either enumerated or
//! compiled by variable elimination, over flat tables or over redundant
//! mixed-mode tables.

pub mod lp;
pub mod lpfile;
pub mod solver;
pub mod symbolic;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use lp::{LinearExpr, LinearProgramModel, LpVar, LpVarKind, StageStats};
pub use lpfile::{read_lp, write_lp};
pub use solver::{Highs, LpSolver, SolveStatus, SolverResult, FEASIBILITY_TOL};
pub use symbolic::{generate_constraints, GenerationOptions, GenerationStats, SymbolicFactor};

use crate::elimination::{greedy_order_for_shapes, planned_peak};
use crate::error::{Error, Result};
use crate::factors::{all_assignments, Assignment, MixedModeFactor, Shape, VarId};
use crate::fmmdp::{backproject_all, BackProjection, BasisFunction, FactoredModel};

/// Default cap on the augmented table size of the flat pipeline.
pub const FLAT_ENTRY_BUDGET: usize = 1 << 26;

/// Relative slack on the primary objective while tie-breaking.
const FACE_TOL: f64 = 1e-9;

/// Largest number of state and action variables the exhaustive LP enumerates.
pub const EXHAUSTIVE_MAX_VARS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// One row per joint state and action.
    Exhaustive,
    /// Variable elimination over flattened tables.
    Alp,
    /// Variable elimination over redundant mixed-mode tables.
    RrAlp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Alp => "alp",
            Method::RrAlp => "rr-alp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "alp" => Ok(Method::Alp),
            "rr-alp" => Ok(Method::RrAlp),
            _ => Err(format!("unknown method {s:?} (expected exhaustive, alp or rr-alp)")),
        }
    }
}

/// Objective coefficient of each weight under uniform state relevance: the
/// mean of the basis over its own scope.
pub fn objective_coefficients(basis: &[BasisFunction]) -> Vec<f64> {
    basis.iter().map(|h| h.factor.mean()).collect()
}

/// Coefficients of E_β[V_w] under a fixed product distribution β over the
/// state variables whose marginals are deliberately irregular.
///
/// The ALP optimum is often a whole face. Minimizing this functional over
/// that face picks one value function, and since it depends on the weights
/// only through V_w it is bounded there and does not care how the
/// constraints were compiled.
pub fn tie_break_coefficients(basis: &[BasisFunction]) -> Result<Vec<f64>> {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let marginal = |v: VarId, card: usize, value: usize| {
        let raw = |x: usize| 1.0 + (((v * card + x + 1) as f64) * PHI).fract();
        raw(value) / (0..card).map(raw).sum::<f64>()
    };
    basis
        .iter()
        .map(|h| {
            let scope: Vec<(VarId, usize)> = h
                .factor
                .scope()
                .iter()
                .copied()
                .zip(h.factor.cards().iter().copied())
                .collect();
            all_assignments(&scope)
                .map(|a| {
                    let p: f64 = scope
                        .iter()
                        .map(|&(v, c)| marginal(v, c, a.get(v).expect("assigned")))
                        .product();
                    Ok(p * h.eval(&a)?)
                })
                .sum()
        })
        .collect()
}

/// One local term of the max constraint; `weight` names the basis whose
/// weight multiplies the table, rewards have none.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintTerm {
    pub factor: MixedModeFactor,
    pub weight: Option<usize>,
}

/// Rewards, and per basis the table γ g_i − h_i over its scope and parents.
pub fn constraint_terms(
    m: &FactoredModel,
    basis: &[BasisFunction],
    backprojections: &[BackProjection],
) -> Result<Vec<ConstraintTerm>> {
    let mut out: Vec<ConstraintTerm> = m
        .rewards()
        .iter()
        .map(|r| ConstraintTerm {
            factor: r.clone(),
            weight: None,
        })
        .collect();
    for (h, g) in basis.iter().zip(backprojections) {
        let neg_h = MixedModeFactor::from_flat(&h.factor)?.scale(-1.0);
        let gamma_g = g.factor.scale(m.discount());
        out.push(ConstraintTerm {
            factor: gamma_g.augment(&neg_h),
            weight: Some(h.id),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct AlpOptions {
    /// Entry budget of the flat pipeline.
    pub flat_budget: Option<usize>,
    /// Entry budget of the redundant pipeline.
    pub rr_budget: Option<usize>,
    /// Re-solve over the optimal face to select a canonical value function.
    pub tie_break: bool,
}

impl Default for AlpOptions {
    fn default() -> Self {
        Self {
            flat_budget: Some(FLAT_ENTRY_BUDGET),
            rr_budget: None,
            tie_break: true,
        }
    }
}

/// A built (not yet solved) ALP.
#[derive(Clone, Debug)]
pub struct AlpProblem {
    pub method: Method,
    pub lp: LinearProgramModel,
    /// LP variable of each basis weight.
    pub weights: Vec<LpVar>,
    pub stats: GenerationStats,
    pub order: Vec<VarId>,
    /// Secondary objective over the weights, see [`tie_break_coefficients`].
    pub tie_break: Option<Vec<f64>>,
    pub build_secs: f64,
}

/// Builds the LP whose optimal weights minimize Σ_x α(x) V_w(x) subject to
/// V_w ≥ the Bellman backup of V_w at every state and action.
pub fn build_alp(
    m: &FactoredModel,
    basis: &[BasisFunction],
    method: Method,
    opts: AlpOptions,
) -> Result<AlpProblem> {
    let start = Instant::now();
    for (i, h) in basis.iter().enumerate() {
        if h.id != i {
            return Err(Error::InvalidModel(format!(
                "basis ids must be 0..k in order, found {} at {i}",
                h.id
            )));
        }
    }
    let backprojections = backproject_all(basis, m)?;
    let mut lp = LinearProgramModel::new();
    let weights: Vec<LpVar> = objective_coefficients(basis)
        .into_iter()
        .enumerate()
        .map(|(i, c)| lp.add_var(format!("w_{i}"), LpVarKind::Weight, c))
        .collect();
    let mut stats = GenerationStats::default();
    let mut order = Vec::new();
    match method {
        Method::Exhaustive => exhaustive_rows(m, basis, &backprojections, &weights, &mut lp)?,
        Method::RrAlp | Method::Alp => {
            let terms = constraint_terms(m, basis, &backprojections)?;
            let budget = if method == Method::Alp {
                opts.flat_budget
            } else {
                opts.rr_budget
            };
            let mut symbolic = Vec::with_capacity(terms.len());
            for t in &terms {
                let f = if method == Method::Alp {
                    flat_version(&t.factor, budget)?
                } else {
                    t.factor.clone()
                };
                symbolic.push(match t.weight {
                    Some(j) => SymbolicFactor::weighted(&f, weights[j]),
                    None => SymbolicFactor::numeric(&f),
                });
            }
            let vars: BTreeSet<VarId> = symbolic.iter().flat_map(|s| s.shape().variables()).collect();
            order = greedy_order_for_shapes(symbolic.iter().map(|s| s.shape()), &vars);
            stats = generate_constraints(
                symbolic,
                &order,
                &mut lp,
                GenerationOptions {
                    entry_budget: budget,
                },
            )?;
        }
    }
    Ok(AlpProblem {
        method,
        lp,
        weights,
        stats,
        order,
        tie_break: if opts.tie_break {
            Some(tie_break_coefficients(basis)?)
        } else {
            None
        },
        build_secs: start.elapsed().as_secs_f64(),
    })
}

/// Elimination order and largest summed term `build_alp` would use, without
/// building any table.
pub fn plan_alp(m: &FactoredModel, basis: &[BasisFunction], method: Method) -> Result<(Vec<VarId>, f64)> {
    if method == Method::Exhaustive {
        return Ok((vec![], 0.0));
    }
    let backprojections = backproject_all(basis, m)?;
    let shapes = constraint_terms(m, basis, &backprojections)?
        .iter()
        .map(|t| match method {
            Method::Alp => Shape::new(t.factor.shape().flat_scope(), vec![]),
            _ => Ok(t.factor.shape().clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let vars: BTreeSet<VarId> = shapes.iter().flat_map(Shape::variables).collect();
    let order = greedy_order_for_shapes(&shapes, &vars);
    let peak = planned_peak(&shapes, &order);
    Ok((order, peak))
}

/// Same function over proper variables only.
fn flat_version(f: &MixedModeFactor, budget: Option<usize>) -> Result<MixedModeFactor> {
    let scope = f.shape().flat_scope();
    let entries: f64 = scope.iter().map(|&(_, c)| c as f64).product();
    if let Some(b) = budget {
        if entries > b as f64 {
            return Err(Error::EntryBudgetExceeded { entries, budget: b });
        }
    }
    MixedModeFactor::from_flat(&f.flatten_within(usize::MAX)?)
}

fn exhaustive_rows(
    m: &FactoredModel,
    basis: &[BasisFunction],
    backprojections: &[BackProjection],
    weights: &[LpVar],
    lp: &mut LinearProgramModel,
) -> Result<()> {
    let states = m.state_vars();
    let actions = m.action_vars();
    let n = states.len() + actions.len();
    if n > EXHAUSTIVE_MAX_VARS {
        return Err(Error::EntryBudgetExceeded {
            entries: 2f64.powi(n as i32),
            budget: 1 << EXHAUSTIVE_MAX_VARS,
        });
    }
    let scope: Vec<(VarId, usize)> = states
        .iter()
        .chain(&actions)
        .map(|&v| (v, m.variables().cardinality(v)))
        .collect();
    let gamma = m.discount();
    let mut row = Vec::with_capacity(basis.len());
    for xa in all_assignments(&scope) {
        // Σ_j w_j (h_j(x) − γ g_j(x, a)) ≥ R(x, a)
        row.clear();
        for (j, (h, g)) in basis.iter().zip(backprojections).enumerate() {
            let c = h.eval(&xa)? - gamma * g.factor.eval(&xa)?;
            if c != 0.0 {
                row.push((weights[j], c));
            }
        }
        lp.add_row(row.iter().copied(), m.reward(&xa)?);
    }
    Ok(())
}

/// V_w(x) = Σ_j w_j h_j(x).
pub fn value(basis: &[BasisFunction], w: &[f64], x: &Assignment) -> Result<f64> {
    basis
        .iter()
        .zip(w)
        .map(|(h, &wj)| Ok(wj * h.eval(x)?))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlpSolution {
    pub method: Method,
    pub status: SolveStatus,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub constraints: usize,
    pub auxiliaries: usize,
    pub peak_entries: usize,
    pub build_secs: f64,
    pub solve_secs: f64,
}

impl AlpProblem {
    pub fn solve(&self, solver: &dyn LpSolver) -> Result<AlpSolution> {
        let mut r = solver.solve(&self.lp)?;
        if let (SolveStatus::Optimal, Some(secondary)) = (r.status, &self.tie_break) {
            // stay within a relative 1e-9 of the optimum: −c·w ≥ −(opt + τ)
            let mut lp = self.lp.clone();
            let tau = FACE_TOL * r.objective.abs().max(1.0);
            let c = self.lp.objective();
            lp.add_row(self.weights.iter().map(|&j| (j, -c[j])), -r.objective - tau);
            for (&j, &s) in self.weights.iter().zip(secondary) {
                lp.set_objective(j, s);
            }
            let second = solver.solve(&lp)?;
            if second.status == SolveStatus::Optimal {
                r.solve_secs += second.solve_secs;
                r.objective = self.lp.objective_value(&second.values);
                r.values = second.values;
            }
        }
        let weights = if r.status == SolveStatus::Optimal {
            self.weights.iter().map(|&j| r.values[j]).collect()
        } else {
            vec![]
        };
        Ok(AlpSolution {
            method: self.method,
            status: r.status,
            weights,
            objective: r.objective,
            constraints: self.lp.num_constraints(),
            auxiliaries: self.lp.vars_of_kind(LpVarKind::Auxiliary).len(),
            peak_entries: self.stats.peak_entries,
            build_secs: self.build_secs,
            solve_secs: r.solve_secs,
        })
    }
}

/// Builds and solves with the given method.
pub fn solve_alp(
    m: &FactoredModel,
    basis: &[BasisFunction],
    method: Method,
    opts: AlpOptions,
    solver: &dyn LpSolver,
) -> Result<AlpSolution> {
    build_alp(m, basis, method, opts)?.solve(solver)
}
