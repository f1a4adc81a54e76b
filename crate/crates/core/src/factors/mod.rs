//! Factor algebra: flat tables, count aggregators and mixed-mode factors in
//! redundant representation.

mod consistency;
mod flat;
mod mixed;
pub mod serial;
mod shape;
mod sketch;
mod variable;

pub use consistency::consistent;
pub use flat::FlatFactor;
pub use mixed::{MixedModeFactor, FLATTEN_LIMIT};
pub use shape::{CountScope, ReducePlan, Shape, MAX_TABLE_ENTRIES};
pub(crate) use shape::for_each_entry;
pub use sketch::Sketch;
pub use variable::{all_assignments, Assignment, VarId, VarKind, Variable, VariableTable};
