use std::collections::BTreeSet;

use super::lp::{LinearExpr, LinearProgramModel, LpVar, StageStats};
use crate::elimination::promotion;
use crate::error::{Error, Result};
use crate::factors::{for_each_entry, MixedModeFactor, Shape, VarId};

const NO_VAR: u32 = u32::MAX;

/// Factor whose entries are affine expressions in LP variables: a constant
/// table, coefficient tables of single variables, and tables naming one
/// auxiliary variable per consistent entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicFactor {
    shape: Shape,
    valid: Vec<bool>,
    constant: Option<Vec<f64>>,
    linear: Vec<(LpVar, Vec<f64>)>,
    aux: Vec<Vec<u32>>,
}

impl SymbolicFactor {
    /// Entries are the factor's values.
    pub fn numeric(f: &MixedModeFactor) -> Self {
        Self {
            shape: f.shape().clone(),
            valid: f.validity().to_vec(),
            constant: Some(f.table().to_vec()),
            linear: vec![],
            aux: vec![],
        }
    }

    /// Entries are the factor's values times `x`.
    pub fn weighted(f: &MixedModeFactor, x: LpVar) -> Self {
        Self {
            shape: f.shape().clone(),
            valid: f.validity().to_vec(),
            constant: None,
            linear: vec![(x, f.table().to_vec())],
            aux: vec![],
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    /// Expression at a consistent entry.
    pub fn expr_at(&self, index: usize) -> LinearExpr {
        assert!(self.valid[index], "inconsistent entry {index} queried");
        let mut e = LinearExpr::constant(self.constant.as_ref().map_or(0.0, |c| c[index]));
        for (x, coefs) in &self.linear {
            e.add_term(*x, coefs[index]);
        }
        for ids in &self.aux {
            e.add_term(ids[index] as LpVar, 1.0);
        }
        e
    }

    /// Same expressions with the counted variables of `vars` made proper.
    pub fn promote(&self, vars: &BTreeSet<VarId>) -> Result<Self> {
        let (shape, strides) = self.shape.promote(vars)?;
        let valid = shape.validity_mask();
        let gather = |src: &[f64]| {
            let mut out = Vec::with_capacity(shape.len());
            for_each_entry(shape.radix(), &[&strides], |e, idx| {
                out.push(if valid[e] { src[idx[0]] } else { 0.0 })
            });
            out
        };
        let constant = self.constant.as_deref().map(gather);
        let linear = self.linear.iter().map(|(x, c)| (*x, gather(c))).collect();
        let aux = self
            .aux
            .iter()
            .map(|ids| {
                let mut out = Vec::with_capacity(shape.len());
                for_each_entry(shape.radix(), &[&strides], |e, idx| {
                    out.push(if valid[e] { ids[idx[0]] } else { NO_VAR })
                });
                out
            })
            .collect();
        Ok(Self {
            shape,
            valid,
            constant,
            linear,
            aux,
        })
    }

    /// Entrywise sum over the union shape.
    pub fn augment_all(factors: &[&Self]) -> Result<Self> {
        let union = Shape::union(factors.iter().map(|f| f.shape()))?;
        let valid = union.validity_mask();
        let mut constant = None;
        let mut linear: Vec<(LpVar, Vec<f64>)> = vec![];
        let mut aux = vec![];
        for f in factors {
            let strides = f.shape.embed_strides(&union);
            let gather = |src: &[f64]| {
                let mut out = Vec::with_capacity(union.len());
                for_each_entry(union.radix(), &[&strides], |_, idx| out.push(src[idx[0]]));
                out
            };
            if let Some(c) = &f.constant {
                let g = gather(c);
                match &mut constant {
                    None => constant = Some(g),
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b): (&mut f64, f64)| *a += b),
                }
            }
            for (x, coefs) in &f.linear {
                let g = gather(coefs);
                match linear.iter_mut().find(|(y, _)| y == x) {
                    Some((_, acc)) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => linear.push((*x, g)),
                }
            }
            for ids in &f.aux {
                let mut out = Vec::with_capacity(union.len());
                for_each_entry(union.radix(), &[&strides], |_, idx| out.push(ids[idx[0]]));
                aux.push(out);
            }
        }
        Ok(Self {
            shape: union,
            valid,
            constant,
            linear,
            aux,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GenerationOptions {
    /// Abort when an augmented term would exceed this many entries.
    pub entry_budget: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationStats {
    pub peak_entries: usize,
    pub total_entries: usize,
}

/// Compiles `0 ≥ max Σ terms` into linear constraints by eliminating the
/// variables of `order` one at a time.
///
/// Each step sums the terms mentioning the variable, then introduces one
/// auxiliary per consistent entry of the reduced term, bounded below by the
/// summed expression at each of its branches. Inconsistent entries get
/// neither variables nor rows. A final row bounds the leftover constants.
pub fn generate_constraints(
    terms: Vec<SymbolicFactor>,
    order: &[VarId],
    lp: &mut LinearProgramModel,
    opts: GenerationOptions,
) -> Result<GenerationStats> {
    check_order(&terms, order)?;
    let mut live: Vec<Option<SymbolicFactor>> = terms.into_iter().map(Some).collect();
    let mut stats = GenerationStats::default();
    let mut row: Vec<(LpVar, f64)> = Vec::new();
    for (stage, &var) in order.iter().enumerate() {
        let hit: Vec<SymbolicFactor> = live
            .iter_mut()
            .filter(|f| f.as_ref().is_some_and(|f| f.shape.contains(var)))
            .map(|f| f.take().expect("filtered"))
            .collect();
        live.retain(Option::is_some);
        if hit.is_empty() {
            continue;
        }
        let promote = promotion(hit.iter().map(|f| &f.shape));
        let hit = hit
            .into_iter()
            .map(|f| if f.shape.promotes(&promote) { f.promote(&promote) } else { Ok(f) })
            .collect::<Result<Vec<_>>>()?;
        let augmented = Shape::union_entry_count(hit.iter().map(|f| &f.shape));
        if let Some(b) = opts.entry_budget {
            if augmented > b as f64 {
                return Err(Error::EntryBudgetExceeded {
                    entries: augmented,
                    budget: b,
                });
            }
        }
        let union = Shape::union(hit.iter().map(|f| &f.shape))?;
        stats.peak_entries = stats.peak_entries.max(union.len());
        stats.total_entries += union.len();
        let plan = union.reduce_plan(var)?;
        let composed: Vec<(Vec<usize>, Vec<usize>)> = hit
            .iter()
            .map(|f| plan.compose(&f.shape.embed_strides(&union)))
            .collect();
        let result = plan.result.clone();
        let valid = result.validity_mask();
        let strides: Vec<&[usize]> = composed.iter().map(|(s, _)| s.as_slice()).collect();
        let mut ids = vec![NO_VAR; result.len()];
        let rows_before = lp.num_constraints();
        let vars_before = lp.num_vars();
        for_each_entry(result.radix(), &strides, |e, idx| {
            if !valid[e] {
                return;
            }
            let u = lp.add_aux(stage, e);
            ids[e] = u as u32;
            for b in 0..plan.card {
                // u ≥ Σ_f expr_f(branch)  →  u − Σ linear ≥ Σ constants
                row.clear();
                row.push((u, 1.0));
                let mut rhs = 0.0;
                for (f, (&i, (_, offsets))) in hit.iter().zip(idx.iter().zip(&composed)) {
                    let j = i + offsets[b];
                    debug_assert!(f.valid[j]);
                    if let Some(c) = &f.constant {
                        rhs += c[j];
                    }
                    for (x, coefs) in &f.linear {
                        row.push((*x, -coefs[j]));
                    }
                    for a in &f.aux {
                        row.push((a[j] as LpVar, -1.0));
                    }
                }
                push_row(lp, &mut row, rhs);
            }
        });
        lp.stages.push(StageStats {
            var,
            auxiliaries: lp.num_vars() - vars_before,
            constraints: lp.num_constraints() - rows_before,
        });
        live.push(Some(SymbolicFactor {
            shape: result,
            valid,
            constant: None,
            linear: vec![],
            aux: vec![ids],
        }));
    }
    // 0 ≥ Σ leftover scalars  →  −Σ linear ≥ Σ constants
    row.clear();
    let mut rhs = 0.0;
    for f in live.iter().flatten() {
        debug_assert!(f.shape.is_scalar());
        if let Some(c) = &f.constant {
            rhs += c[0];
        }
        for (x, coefs) in &f.linear {
            row.push((*x, -coefs[0]));
        }
        for a in &f.aux {
            row.push((a[0] as LpVar, -1.0));
        }
    }
    push_row(lp, &mut row, rhs);
    Ok(stats)
}

/// Merges repeated variables, drops zero coefficients and appends the row.
fn push_row(lp: &mut LinearProgramModel, row: &mut Vec<(LpVar, f64)>, rhs: f64) {
    row.sort_unstable_by_key(|&(x, _)| x);
    let mut merged: Vec<(LpVar, f64)> = Vec::with_capacity(row.len());
    for &(x, c) in row.iter() {
        match merged.last_mut() {
            Some((y, d)) if *y == x => *d += c,
            _ => merged.push((x, c)),
        }
    }
    lp.add_row(merged.into_iter().filter(|&(_, c)| c != 0.0), rhs);
}

fn check_order(terms: &[SymbolicFactor], order: &[VarId]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in order {
        if !seen.insert(v) {
            return Err(Error::InvalidFactor(format!(
                "variable {v} appears twice in the elimination order"
            )));
        }
    }
    let missing: BTreeSet<VarId> = terms
        .iter()
        .flat_map(|t| t.shape.variables())
        .filter(|v| !seen.contains(v))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UneliminatedVariables(missing.into_iter().collect()));
    }
    Ok(())
}
