//! CPLEX LP text format: the subset written by [`write_lp`] (one objective,
//! `>=` rows, every variable free) and read back by [`read_lp`].

use std::collections::HashMap;
use std::fmt::Write as _;

use super::lp::{LinearProgramModel, LpVarKind};
use crate::error::{Error, Result};

/// Soft limit on line length; long rows continue on the next line.
const WRAP: usize = 200;

fn push_terms(out: &mut String, line_start: &mut usize, terms: impl Iterator<Item = (f64, String)>) {
    let mut any = false;
    for (c, name) in terms {
        if out.len() - *line_start > WRAP {
            out.push_str("\n   ");
            *line_start = out.len() - 3;
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        if any || c < 0.0 {
            write!(out, " {sign} {} {name}", c.abs()).unwrap();
        } else {
            write!(out, " {} {name}", c).unwrap();
        }
        any = true;
    }
}

/// Renders the model. `comment` lines are written as `\` comments.
pub fn write_lp(lp: &LinearProgramModel, comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(s, "\\ {line}").unwrap();
        }
    }
    let placeholder = if lp.num_vars() > 0 { lp.name(0).into_owned() } else { String::new() };
    s.push_str("Minimize\n");
    let mut start = s.len();
    s.push_str(" obj:");
    let obj: Vec<(f64, String)> = lp
        .objective()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (c, lp.name(j).into_owned()))
        .collect();
    if obj.is_empty() && !placeholder.is_empty() {
        write!(s, " 0 {placeholder}").unwrap();
    }
    push_terms(&mut s, &mut start, obj.into_iter());
    s.push_str("\nSubject To\n");
    for (i, (cols, vals, rhs)) in lp.rows().enumerate() {
        start = s.len();
        write!(s, " c{i}:").unwrap();
        if cols.is_empty() {
            write!(s, " 0 {placeholder}").unwrap();
        }
        push_terms(
            &mut s,
            &mut start,
            cols.iter().zip(vals).map(|(&j, &c)| (c, lp.name(j as usize).into_owned())),
        );
        writeln!(s, " >= {rhs}").unwrap();
    }
    s.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        writeln!(s, " {} free", lp.name(j)).unwrap();
    }
    s.push_str("End\n");
    s
}

fn aux_label(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("u_")?;
    let (a, b) = rest.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// Parses a file produced by [`write_lp`]. Variables are declared in the
/// order of the `Bounds` section; names of the form `u_<stage>_<entry>` are
/// auxiliaries.
pub fn read_lp(text: &str) -> Result<LinearProgramModel> {
    #[derive(PartialEq)]
    enum Section {
        Head,
        Objective,
        Rows,
        Bounds,
        Done,
    }
    let err = |line: usize, message: String| Error::Parse { line, message };
    let mut section = Section::Head;
    // statements: (first line, text) with continuation lines joined
    let mut objective = String::new();
    let mut rows: Vec<(usize, String)> = vec![];
    let mut bounds: Vec<(usize, String)> = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "minimize" | "minimum" | "min" => {
                section = Section::Objective;
                continue;
            }
            "subject to" | "such that" | "st" | "s.t." => {
                section = Section::Rows;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "end" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Head | Section::Done => {
                return Err(err(line_no, format!("unexpected line {line:?}")))
            }
            Section::Objective => {
                objective.push(' ');
                objective.push_str(line);
            }
            Section::Rows => {
                if line.contains(':') || rows.is_empty() {
                    rows.push((line_no, line.to_string()));
                } else {
                    let last = rows.last_mut().expect("non-empty");
                    last.1.push(' ');
                    last.1.push_str(line);
                }
            }
            Section::Bounds => bounds.push((line_no, line.to_string())),
        }
    }
    if section != Section::Done {
        return Err(err(text.lines().count(), "missing End".into()));
    }

    let mut lp = LinearProgramModel::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line_no, b) in &bounds {
        let toks: Vec<&str> = b.split_whitespace().collect();
        if toks.len() != 2 || !toks[1].eq_ignore_ascii_case("free") {
            return Err(err(*line_no, format!("only free bounds are supported: {b:?}")));
        }
        let name = toks[0];
        let j = match aux_label(name) {
            Some((stage, entry)) => lp.add_aux(stage, entry),
            None => lp.add_var(name, LpVarKind::Weight, 0.0),
        };
        if index.insert(name.to_string(), j).is_some() {
            return Err(err(*line_no, format!("variable {name} declared twice")));
        }
    }

    let parse_terms = |line_no: usize, body: &str| -> Result<Vec<(usize, f64)>> {
        let mut out = vec![];
        let mut sign = 1.0;
        let mut coef: Option<f64> = None;
        for tok in body.split_whitespace() {
            match tok {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                _ => {
                    if let Ok(c) = tok.parse::<f64>() {
                        coef = Some(c);
                    } else {
                        let j = *index
                            .get(tok)
                            .ok_or_else(|| err(line_no, format!("undeclared variable {tok}")))?;
                        out.push((j, sign * coef.unwrap_or(1.0)));
                        sign = 1.0;
                        coef = None;
                    }
                }
            }
        }
        Ok(out)
    };

    let obj_body = objective.split_once(':').map_or(objective.as_str(), |(_, b)| b);
    let mut obj = vec![0.0; lp.num_vars()];
    for (j, c) in parse_terms(0, obj_body)? {
        obj[j] += c;
    }
    let mut model = LinearProgramModel::new();
    for j in 0..lp.num_vars() {
        let name = lp.name(j).into_owned();
        match aux_label(&name) {
            Some((stage, entry)) => {
                model.add_aux(stage, entry);
                if obj[j] != 0.0 {
                    return Err(err(0, format!("auxiliary {name} has an objective coefficient")));
                }
            }
            None => {
                model.add_var(name, LpVarKind::Weight, obj[j]);
            }
        }
    }
    for (line_no, r) in &rows {
        let body = r.split_once(':').map_or(r.as_str(), |(_, b)| b);
        let (lhs, rhs) = body
            .split_once(">=")
            .ok_or_else(|| err(*line_no, format!("expected a >= row: {r:?}")))?;
        let rhs: f64 = rhs
            .trim()
            .parse()
            .map_err(|_| err(*line_no, format!("bad right-hand side in {r:?}")))?;
        let terms: Vec<(usize, f64)> = parse_terms(*line_no, lhs)?
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .collect();
        model.add_row(terms, rhs);
    }
    Ok(model)
}
