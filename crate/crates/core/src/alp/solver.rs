use std::num::NonZeroU32;
use std::time::Instant;

use highs::{HighsModelStatus, RowProblem, Sense};
use serde::{Deserialize, Serialize};

use super::lp::LinearProgramModel;
use crate::error::{Error, Result};

/// Primal feasibility tolerance checked on every optimal solution.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub status: SolveStatus,
    /// Value of every LP variable; empty unless optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    pub solve_secs: f64,
}

pub trait LpSolver {
    fn solve(&self, lp: &LinearProgramModel) -> Result<SolverResult>;
}

/// HiGHS, single-threaded interior point with crossover.
#[derive(Clone, Copy, Debug, Default)]
pub struct Highs;

impl Highs {
    fn run(lp: &LinearProgramModel, presolve: bool) -> Result<(HighsModelStatus, Vec<f64>)> {
        let mut problem = RowProblem::default();
        let cols: Vec<_> = lp
            .objective()
            .iter()
            .map(|&c| problem.add_column::<f64, _>(c, ..))
            .collect();
        let mut row = Vec::new();
        for (vars, vals, rhs) in lp.rows() {
            row.clear();
            row.extend(vars.iter().zip(vals).map(|(&j, &c)| (cols[j as usize], c)));
            problem.add_row(rhs.., &row);
        }
        let mut model = problem
            .try_optimise(Sense::Minimise)
            .map_err(|e| Error::Solver(format!("HiGHS rejected the model: {e:?}")))?;
        model.make_quiet();
        model.set_threads(NonZeroU32::new(1).expect("non-zero"));
        model.set_option("primal_feasibility_tolerance", FEASIBILITY_TOL);
        model.set_option("dual_feasibility_tolerance", FEASIBILITY_TOL);
        // simplex stalls on the highly degenerate ALPs; crossover still
        // returns a vertex
        model.set_option("solver", "ipm");
        if !presolve {
            model.set_option("presolve", "off");
        }
        let solved = model
            .try_solve()
            .map_err(|e| Error::Solver(format!("HiGHS failed: {e:?}")))?;
        let status = solved.status();
        let values = if status == HighsModelStatus::Optimal {
            solved.get_solution().columns().to_vec()
        } else {
            vec![]
        };
        Ok((status, values))
    }
}

impl LpSolver for Highs {
    fn solve(&self, lp: &LinearProgramModel) -> Result<SolverResult> {
        let start = Instant::now();
        let mut outcome = Self::run(lp, true)?;
        if outcome.0 == HighsModelStatus::UnboundedOrInfeasible {
            // presolve does not tell the two apart
            outcome = Self::run(lp, false)?;
        }
        let solve_secs = start.elapsed().as_secs_f64();
        let (status, values) = outcome;
        let status = match status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty if lp.num_vars() == 0 => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            other => return Err(Error::Solver(format!("HiGHS stopped with status {other:?}"))),
        };
        if status != SolveStatus::Optimal {
            return Ok(SolverResult {
                status,
                values: vec![],
                objective: f64::NAN,
                solve_secs,
            });
        }
        let violation = lp.max_violation(&values);
        if violation > FEASIBILITY_TOL {
            return Err(Error::Solver(format!(
                "solution violates a constraint by {violation:e}"
            )));
        }
        Ok(SolverResult {
            status,
            objective: lp.objective_value(&values),
            values,
            solve_secs,
        })
    }
}
