use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::flat::FlatFactor;
use super::shape::{for_each_entry, CountScope, Shape};
use super::variable::{Assignment, VarId, VariableTable};
use crate::error::{Error, Result};

/// Largest flat table `flatten` will build (25 binary variables).
pub const FLATTEN_LIMIT: usize = 1 << 25;

/// Real-valued function of proper variables and count aggregators, stored in
/// its redundant representation: one entry per proper assignment and count
/// tuple, with a mask marking the consistent entries.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedModeFactor {
    shape: Shape,
    table: Vec<f64>,
    valid: Vec<bool>,
}

impl MixedModeFactor {
    pub fn new(shape: Shape, table: Vec<f64>) -> Result<Self> {
        if table.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                got: table.len(),
            });
        }
        let valid = shape.validity_mask();
        Ok(Self {
            shape,
            table,
            valid,
        })
    }

    /// Builds a factor from a function of (proper values, count tuple).
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize], &[usize]) -> f64) -> Self {
        let np = shape.proper().len();
        let table = (0..shape.len())
            .map(|i| {
                let d = shape.digits_of(i);
                f(&d[..np], &d[np..])
            })
            .collect();
        let valid = shape.validity_mask();
        Self {
            shape,
            table,
            valid,
        }
    }

    /// Count aggregator function over a single counter: `values[k]` for count `k`.
    pub fn caf(scope: CountScope, values: Vec<f64>) -> Result<Self> {
        Self::new(Shape::new(vec![], vec![scope])?, values)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            shape: Shape::empty(),
            table: vec![value],
            valid: vec![true],
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn ones() -> Self {
        Self::constant(1.0)
    }

    pub fn from_flat(flat: &FlatFactor) -> Result<Self> {
        let shape = Shape::new(
            flat.scope().iter().copied().zip(flat.cards().iter().copied()).collect(),
            vec![],
        )?;
        Self::new(shape, flat.table().to_vec())
    }

    pub(crate) fn from_parts(shape: Shape, table: Vec<f64>, valid: Vec<bool>) -> Self {
        debug_assert_eq!(table.len(), shape.len());
        debug_assert_eq!(valid.len(), shape.len());
        Self {
            shape,
            table,
            valid,
        }
    }

    /// Same function with the counted variables of `vars` made proper; see
    /// [`Shape::promote`]. Inconsistent entries of the new layout are zero.
    pub fn promote(&self, vars: &BTreeSet<VarId>) -> Result<Self> {
        let (shape, strides) = self.shape.promote(vars)?;
        let valid = shape.validity_mask();
        let mut table = Vec::with_capacity(shape.len());
        for_each_entry(shape.radix(), &[&strides], |e, idx| {
            table.push(if valid[e] { self.table[idx[0]] } else { 0.0 });
        });
        Ok(Self::from_parts(shape, table, valid))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    /// Entries of the representation, consistent or not.
    pub fn parameter_count(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_scalar()
    }

    /// Value of a scalar factor.
    pub fn scalar(&self) -> Option<f64> {
        self.shape.is_scalar().then(|| self.table[0])
    }

    /// Evaluates the factor at a full assignment of its variables.
    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        let i = self.shape.index_for(a)?;
        assert!(
            self.valid[i],
            "assignment {a} addressed an inconsistent entry {i}"
        );
        Ok(self.table[i])
    }

    /// Elementwise transform of the values; shape and mask unchanged.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            table: self.table.iter().map(|&x| f(x)).collect(),
            valid: self.valid.clone(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    /// Largest value over the consistent entries.
    pub fn max_valid(&self) -> f64 {
        self.table
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of two factors on the union of their scopes.
    pub fn augment(&self, other: &Self) -> Self {
        Self::augment_all(&[self, other])
    }

    pub fn augment_all(factors: &[&Self]) -> Self {
        Self::combine_all(factors, 0.0, |acc, x| acc + x)
    }

    /// Product of two factors on the union of their scopes.
    pub fn multiply(&self, other: &Self) -> Self {
        Self::multiply_all(&[self, other])
    }

    pub fn multiply_all(factors: &[&Self]) -> Self {
        Self::combine_all(factors, 1.0, |acc, x| acc * x)
    }

    fn combine_all(factors: &[&Self], init: f64, op: impl Fn(f64, f64) -> f64) -> Self {
        let shape = Shape::union(factors.iter().map(|f| &f.shape))
            .expect("factors disagree on variable cardinalities");
        let embeds: Vec<Vec<usize>> = factors.iter().map(|f| f.shape.embed_strides(&shape)).collect();
        let strides: Vec<&[usize]> = embeds.iter().map(Vec::as_slice).collect();
        let mut table = Vec::with_capacity(shape.len());
        for_each_entry(shape.radix(), &strides, |_, idx| {
            let mut acc = init;
            for (f, &i) in factors.iter().zip(idx) {
                acc = op(acc, f.table[i]);
            }
            table.push(acc);
        });
        let valid = shape.validity_mask();
        Self {
            shape,
            table,
            valid,
        }
    }

    /// Maxes out `var`, wherever it occurs (proper, one or more counters).
    ///
    /// Each result entry takes the larger of its branches `var = 0` and
    /// `var = 1` (or every value of a non-binary proper variable). Counters
    /// containing `var` lose it and their count is read at `k + value`.
    /// Branches addressing inconsistent entries are skipped, and inconsistent
    /// result entries hold 0.
    pub fn reduce_max(&self, var: VarId) -> Result<Self> {
        let plan = self.shape.reduce_plan(var)?;
        let (strides, offsets) = plan.compose(self.shape.strides());
        let result = plan.result;
        let mut table = Vec::with_capacity(result.len());
        let mut has_branch = Vec::with_capacity(result.len());
        for_each_entry(result.radix(), &[&strides], |_, idx| {
            let mut best: Option<f64> = None;
            for &off in &offsets {
                let i = idx[0] + off;
                if self.valid[i] {
                    let x = self.table[i];
                    // strict comparison keeps the lowest branch on ties
                    if best.map_or(true, |b| x > b) {
                        best = Some(x);
                    }
                }
            }
            has_branch.push(best.is_some());
            table.push(best.unwrap_or(0.0));
        });
        let valid = result.validity_mask();
        debug_assert!(valid.iter().zip(&has_branch).all(|(v, h)| !v || *h));
        for (x, &ok) in table.iter_mut().zip(&valid) {
            if !ok {
                *x = 0.0;
            }
        }
        Ok(Self {
            shape: result,
            table,
            valid,
        })
    }

    /// Sums out a proper variable that does not occur in any counter.
    pub fn sum_out(&self, var: VarId) -> Result<Self> {
        if self.shape.proper_position(var).is_none() {
            return Err(Error::VariableNotInFactor(var));
        }
        if self.shape.counters().iter().any(|z| z.contains(var)) {
            return Err(Error::InvalidFactor(format!(
                "cannot sum out counted variable {var}"
            )));
        }
        let plan = self.shape.reduce_plan(var)?;
        let (strides, offsets) = plan.compose(self.shape.strides());
        let result = plan.result;
        let mut table = Vec::with_capacity(result.len());
        for_each_entry(result.radix(), &[&strides], |_, idx| {
            table.push(offsets.iter().map(|&o| self.table[idx[0] + o]).sum());
        });
        let valid = result.validity_mask();
        Ok(Self {
            shape: result,
            table,
            valid,
        })
    }

    /// Fixes `var = value` and removes it from the scope.
    pub fn condition(&self, var: VarId, value: usize) -> Result<Self> {
        let plan = self.shape.reduce_plan(var)?;
        if value >= plan.card {
            return Err(Error::ValueOutOfRange {
                var,
                value,
                cardinality: plan.card,
            });
        }
        let (strides, offsets) = plan.compose(self.shape.strides());
        let off = offsets[value];
        let result = plan.result;
        let mut table = Vec::with_capacity(result.len());
        for_each_entry(result.radix(), &[&strides], |_, idx| {
            table.push(self.table[idx[0] + off]);
        });
        let valid = result.validity_mask();
        Ok(Self {
            shape: result,
            table,
            valid,
        })
    }

    /// Conditions on every variable of `a` that occurs in the scope.
    pub fn condition_on(&self, a: &Assignment) -> Result<Self> {
        let vars: Vec<VarId> = self
            .shape
            .variables()
            .into_iter()
            .filter(|&v| a.contains(v))
            .collect();
        let mut out = self.clone();
        for v in vars {
            out = out.condition(v, a.get(v).expect("filtered"))?;
        }
        Ok(out)
    }

    /// Full tabular form over the proper and counted variables.
    pub fn flatten(&self) -> Result<FlatFactor> {
        self.flatten_within(FLATTEN_LIMIT)
    }

    pub fn flatten_within(&self, limit: usize) -> Result<FlatFactor> {
        let (scope, map) = self.shape.flat_index_map(limit)?;
        debug_assert!(map.iter().all(|&i| self.valid[i]));
        let table = map.iter().map(|&i| self.table[i]).collect();
        let (vars, cards) = scope.into_iter().unzip();
        FlatFactor::new(vars, cards, table)
    }

    /// Equivalent factor whose counters are mutually disjoint and disjoint from
    /// the proper scope: counted variables are partitioned by the set of
    /// counters they belong to.
    pub fn shatter(&self) -> Self {
        let n = self.shape.counters().len();
        let mut atoms: BTreeMap<Vec<usize>, Vec<VarId>> = BTreeMap::new();
        for v in self.shape.variables() {
            if self.shape.proper_position(v).is_some() {
                continue;
            }
            let pattern: Vec<usize> = (0..n)
                .filter(|&i| self.shape.counters()[i].contains(v))
                .collect();
            atoms.entry(pattern).or_default().push(v);
        }
        let mut parts: Vec<(Vec<usize>, CountScope)> = atoms
            .into_iter()
            .map(|(p, m)| (p, CountScope::new(m).expect("non-empty atom")))
            .collect();
        parts.sort_by(|a, b| a.1.members()[0].cmp(&b.1.members()[0]));

        let proper: Vec<(VarId, usize)> = self
            .shape
            .proper()
            .iter()
            .copied()
            .zip(self.shape.cards().iter().copied())
            .collect();
        let linked: Vec<Vec<usize>> = self
            .shape
            .proper()
            .iter()
            .map(|&v| (0..n).filter(|&i| self.shape.counters()[i].contains(v)).collect())
            .collect();
        let shape = Shape::new(proper, parts.iter().map(|(_, z)| z.clone()).collect())
            .expect("shattered shape");
        let np = self.shape.proper().len();
        Self::from_fn(shape, |pv, atom_counts| {
            let mut digits: Vec<usize> = pv.to_vec();
            let mut counts = vec![0usize; n];
            for (p, pattern) in linked.iter().enumerate() {
                for &i in pattern {
                    counts[i] += pv[p];
                }
            }
            for ((pattern, _), &t) in parts.iter().zip(atom_counts) {
                for &i in pattern {
                    counts[i] += t;
                }
            }
            digits.extend(counts);
            debug_assert_eq!(digits.len(), np + n);
            let idx = self.shape.index_of(&digits);
            debug_assert!(self.valid[idx]);
            self.table[idx]
        })
    }

    /// Text dump: one line per entry, `proper-assignment | count-tuple | value`,
    /// inconsistent entries prefixed with `!`.
    pub fn dump(&self, names: Option<&VariableTable>) -> String {
        let name = |v: VarId| match names.and_then(|t| t.get(v)) {
            Some(var) => var.name.clone(),
            None => format!("v{v}"),
        };
        let mut out = String::new();
        let counters: Vec<String> = self
            .shape
            .counters()
            .iter()
            .map(|z| {
                let m: Vec<String> = z.members().iter().map(|&v| name(v)).collect();
                format!("#{{{}}}", m.join(","))
            })
            .collect();
        let proper: Vec<String> = self.shape.proper().iter().map(|&v| name(v)).collect();
        let _ = writeln!(
            out,
            "# proper: [{}] counters: [{}] entries: {}",
            proper.join(" "),
            counters.join(" "),
            self.shape.len()
        );
        let np = self.shape.proper().len();
        for i in 0..self.shape.len() {
            let d = self.shape.digits_of(i);
            let pa: Vec<String> = self
                .shape
                .proper()
                .iter()
                .zip(&d[..np])
                .map(|(&v, x)| format!("{}={x}", name(v)))
                .collect();
            let ct: Vec<String> = d[np..].iter().map(|k| k.to_string()).collect();
            let pa = pa.join(" ");
            let head = match (self.valid[i], pa.is_empty()) {
                (true, _) => pa,
                (false, true) => "!".to_string(),
                (false, false) => format!("! {pa}"),
            };
            let _ = writeln!(out, "{head} | {} | {}", ct.join(" "), self.table[i]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: VarId = 0;
    const B: VarId = 1;
    const C: VarId = 2;

    fn cs(m: &[VarId]) -> CountScope {
        CountScope::new(m.iter().copied()).unwrap()
    }

    #[test]
    fn augment_overlapping_cafs() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 4.0]).unwrap();
        let h = MixedModeFactor::caf(cs(&[B, C]), vec![0.0, 1.0, 2.0]).unwrap();
        let f = g.augment(&h);
        let i21 = f.shape().index_of(&[2, 1]);
        assert_eq!(f.table()[i21], 5.0);
        assert!(f.is_valid(i21));
        let i20 = f.shape().index_of(&[2, 0]);
        assert!(!f.is_valid(i20));
        // invalid entries are still filled
        assert_eq!(f.table()[i20], 4.0);
    }

    #[test]
    fn augment_identity() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(g.augment(&MixedModeFactor::zero()), g);
    }

    #[test]
    fn multiply_examples() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.multiply(&MixedModeFactor::ones()), g);
        let h = MixedModeFactor::caf(cs(&[B, C]), vec![0.0, 2.0, 4.0]).unwrap();
        let f = g.multiply(&h);
        assert_eq!(f.table()[f.shape().index_of(&[1, 1])], 2.0);
        let zeros = MixedModeFactor::caf(cs(&[B, C]), vec![0.0; 3]).unwrap();
        assert!(g.multiply(&zeros).table().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn reduce_non_shared_count() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 2.0]).unwrap();
        let f = g.reduce_max(A).unwrap();
        assert_eq!(f.shape().counters(), &[cs(&[B])]);
        assert_eq!(f.table(), &[1.0, 2.0]);
        assert!(matches!(g.reduce_max(C), Err(Error::VariableNotInFactor(C))));
    }

    #[test]
    fn reduce_proper_non_binary() {
        let shape = Shape::new(vec![(A, 3), (B, 2)], vec![]).unwrap();
        let g = MixedModeFactor::new(shape, vec![1.0, 5.0, 7.0, 2.0, 3.0, 3.0]).unwrap();
        let f = g.reduce_max(A).unwrap();
        assert_eq!(f.table(), &[7.0, 5.0]);
    }

    #[test]
    fn condition_examples() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.condition(A, 1).unwrap().table(), &[1.0, 2.0]);
        assert_eq!(g.condition(A, 0).unwrap().table(), &[0.0, 1.0]);
        let shape = Shape::new(vec![(A, 2), (B, 3)], vec![]).unwrap();
        let t = MixedModeFactor::new(shape, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(t.condition(A, 1).unwrap().table(), &[3.0, 4.0, 5.0]);
        assert_eq!(t.condition(B, 2).unwrap().table(), &[2.0, 5.0]);
        assert!(t.condition(C, 0).is_err());
        assert!(t.condition(B, 3).is_err());
    }

    #[test]
    fn flatten_examples() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 2.0]).unwrap();
        let flat = g.flatten().unwrap();
        assert_eq!(flat.scope(), &[A, B]);
        assert_eq!(flat.table(), &[0.0, 1.0, 1.0, 2.0]);
        let e = MixedModeFactor::constant(3.5).flatten().unwrap();
        assert_eq!(e.table(), &[3.5]);
    }

    #[test]
    fn flatten_guard() {
        let big = CountScope::new(0..26).unwrap();
        let g = MixedModeFactor::caf(big, vec![0.0; 27]).unwrap();
        assert!(matches!(g.flatten(), Err(Error::FlattenTooLarge { .. })));
    }

    #[test]
    fn shatter_sizes() {
        let (a, b, c, d, e, x, y, z, w) = (0, 1, 2, 3, 4, 5, 6, 7, 8);
        let shape = Shape::new(
            vec![],
            vec![cs(&[a, b, c, d, e]), cs(&[a, b, x, y, z]), cs(&[a, c, w, x])],
        )
        .unwrap();
        let f = MixedModeFactor::from_fn(shape, |_, k| (k[0] * 100 + k[1] * 10 + k[2]) as f64);
        assert_eq!(f.parameter_count(), 180);
        assert_eq!(f.shatter().parameter_count(), 288);

        let g = MixedModeFactor::from_fn(
            Shape::new(vec![], vec![cs(&[A, B]), cs(&[B, C])]).unwrap(),
            |_, k| (k[0] * 3 + k[1]) as f64,
        );
        let s = g.shatter();
        assert_eq!(s.shape().counters(), &[cs(&[A]), cs(&[B]), cs(&[C])]);
        assert_eq!((g.parameter_count(), s.parameter_count()), (9, 8));
        assert!(s.validity().iter().all(|&v| v));

        let disjoint = MixedModeFactor::from_fn(
            Shape::new(vec![], vec![cs(&[A, B]), cs(&[C])]).unwrap(),
            |_, k| k[0] as f64,
        );
        assert_eq!(disjoint.shatter(), disjoint);
    }

    #[test]
    fn dump_marks_invalid_entries() {
        let g = MixedModeFactor::caf(cs(&[A, B]), vec![0.0, 1.0, 4.0]).unwrap();
        let h = MixedModeFactor::caf(cs(&[B, C]), vec![0.0, 1.0, 2.0]).unwrap();
        let text = g.augment(&h).dump(None);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "# proper: [] counters: [#{v0,v1} #{v1,v2}] entries: 9");
        assert_eq!(lines.iter().filter(|l| l.starts_with('!')).count(), 2);
        assert_eq!(lines[8], " | 2 1 | 5");
        assert_eq!(lines[7], "! | 2 0 | 4");
    }
}
