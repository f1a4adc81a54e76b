//! SIS epidemic control on graphs: random instance generation, the factored
//! model with neighbour-count CPDs, and the instance text format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::{CountScope, MixedModeFactor, Shape, VarId, VarKind, VariableTable};
use crate::fmmdp::{Cpd, FactoredModel};

pub const GRAPH_FORMAT: &str = "anonplan-graph/1";

/// Degree sequences drawn before generation fails.
const DEGREE_DRAWS: usize = 50;
/// Pairing restarts before a degree sequence is given up on.
const PAIRING_RESTARTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    pub beta: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
}

impl Default for SisParams {
    fn default() -> Self {
        Self {
            beta: 0.6,
            delta: 0.3,
            lambda1: 1.0,
            lambda2: 50.0,
            gamma: 0.95,
        }
    }
}

impl SisParams {
    fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.beta) || !unit(self.delta) {
            return Err(Error::InvalidInstance(format!(
                "beta {} and delta {} must lie in [0, 1]",
                self.beta, self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidInstance(format!(
                "gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Probability that node `i` is infected next step given its own state, its
/// action and the number of infected neighbours.
pub fn infection_prob(p: &SisParams, infected: bool, vaccinated: bool, k: usize) -> f64 {
    if vaccinated {
        0.0
    } else if infected {
        1.0 - p.delta
    } else {
        1.0 - (1.0 - p.beta).powi(k as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpidemicInstance {
    pub n: usize,
    /// Undirected edges with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Sorted node ids that can be vaccinated.
    pub controlled: Vec<usize>,
    pub params: SisParams,
    pub seed: u64,
}

impl EpidemicInstance {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        controlled: impl IntoIterator<Item = usize>,
        params: SisParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidInstance(format!("self-loop at {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidInstance(format!("edge ({u}, {v}) out of range")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidInstance(format!("duplicate edge ({u}, {v})")));
            }
        }
        let controlled: BTreeSet<usize> = controlled.into_iter().collect();
        if controlled.iter().any(|&c| c >= n) {
            return Err(Error::InvalidInstance("controlled node out of range".into()));
        }
        Ok(Self {
            n,
            edges: set.into_iter().collect(),
            controlled: controlled.into_iter().collect(),
            params,
            seed,
        })
    }

    /// Neighbour lists, each sorted.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            nb[u].push(v);
            nb[v].push(u);
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors().iter().map(Vec::len).collect()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        2.0 * self.edges.len() as f64 / self.n as f64
    }

    pub fn is_controlled(&self, i: usize) -> bool {
        self.controlled.binary_search(&i).is_ok()
    }

    /// Writes the instance file. `comment`, if given, goes on a `#` line
    /// right after the header.
    pub fn to_text(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        writeln!(s, "{GRAPH_FORMAT}").unwrap();
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(s, "# {line}").unwrap();
            }
        }
        writeln!(s, "n {}", self.n).unwrap();
        s.push_str("controlled");
        for c in &self.controlled {
            write!(s, " {c}").unwrap();
        }
        s.push('\n');
        let p = &self.params;
        writeln!(
            s,
            "params {} {} {} {} {} {}",
            p.beta, p.delta, p.lambda1, p.lambda2, p.gamma, self.seed
        )
        .unwrap();
        for (u, v) in &self.edges {
            writeln!(s, "edge {u} {v}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, GRAPH_FORMAT)) => {}
            Some((i, l)) => return Err(err(i, format!("expected {GRAPH_FORMAT}, found {l:?}"))),
            None => return Err(err(0, "empty instance file".into())),
        }
        let mut n = None;
        let mut controlled = Vec::new();
        let mut params = None;
        let mut edges = Vec::new();
        for (i, line) in lines {
            let mut toks = line.split_whitespace();
            let key = toks.next().expect("non-empty line");
            let rest: Vec<&str> = toks.collect();
            let num = |t: &str| -> Result<usize> {
                t.parse().map_err(|_| err(i, format!("bad integer {t:?}")))
            };
            let real = |t: &str| -> Result<f64> {
                t.parse().map_err(|_| err(i, format!("bad number {t:?}")))
            };
            match key {
                "n" if rest.len() == 1 => n = Some(num(rest[0])?),
                "controlled" => {
                    controlled = rest.iter().map(|t| num(t)).collect::<Result<_>>()?;
                }
                "params" if rest.len() == 6 => {
                    let seed = rest[5]
                        .parse::<u64>()
                        .map_err(|_| err(i, format!("bad seed {:?}", rest[5])))?;
                    params = Some((
                        SisParams {
                            beta: real(rest[0])?,
                            delta: real(rest[1])?,
                            lambda1: real(rest[2])?,
                            lambda2: real(rest[3])?,
                            gamma: real(rest[4])?,
                        },
                        seed,
                    ));
                }
                "edge" if rest.len() == 2 => edges.push((num(rest[0])?, num(rest[1])?)),
                _ => return Err(err(i, format!("unrecognized line {line:?}"))),
            }
        }
        let n = n.ok_or_else(|| err(0, "missing n line".into()))?;
        let (params, seed) = params.ok_or_else(|| err(0, "missing params line".into()))?;
        Self::new(n, edges, controlled, params, seed)
    }
}

/// Target degree drawn from P(k) ∝ 1/k on [1, k_max].
fn sample_degree(rng: &mut impl Rng, k_max: usize) -> usize {
    let total: f64 = (1..=k_max).map(|k| 1.0 / k as f64).sum();
    let mut u = rng.gen::<f64>() * total;
    for k in 1..=k_max {
        u -= 1.0 / k as f64;
        if u <= 0.0 {
            return k;
        }
    }
    k_max
}

/// Undirected simple graph whose degrees follow the truncated 1/k law,
/// realized by random stub pairing. A sequence that keeps failing to pair is
/// redrawn. Deterministic given `rng`.
pub fn random_edges(n: usize, k_max: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    if n < 2 || k_max < 1 || k_max >= n {
        return Err(Error::InvalidInstance(format!(
            "need n >= 2 and 1 <= k_max < n, got n={n}, k_max={k_max}"
        )));
    }
    for _ in 0..DEGREE_DRAWS {
        let mut degrees: Vec<usize> = (0..n).map(|_| sample_degree(rng, k_max)).collect();
        while degrees.iter().sum::<usize>() % 2 == 1 {
            let i = rng.gen_range(0..n);
            degrees[i] = sample_degree(rng, k_max);
        }
        if let Some(edges) = pair_stubs(&degrees, rng) {
            return Ok(edges);
        }
    }
    Err(Error::DegreeSequenceUnrealizable {
        attempts: DEGREE_DRAWS * PAIRING_RESTARTS,
    })
}

fn pair_stubs(degrees: &[usize], rng: &mut impl Rng) -> Option<Vec<(usize, usize)>> {
    // highest degrees are paired first, while partners are plentiful
    let mut nodes: Vec<usize> = (0..degrees.len()).collect();
    nodes.sort_by_key(|&i| (degrees[i], i));
    'attempt: for _ in 0..PAIRING_RESTARTS {
        let mut stubs: Vec<usize> = nodes
            .iter()
            .flat_map(|&i| std::iter::repeat(i).take(degrees[i]))
            .collect();
        let mut edges = BTreeSet::new();
        while let Some(u) = stubs.pop() {
            let eligible: Vec<usize> = (0..stubs.len())
                .filter(|&j| stubs[j] != u && !edges.contains(&(u.min(stubs[j]), u.max(stubs[j]))))
                .collect();
            if eligible.is_empty() {
                continue 'attempt;
            }
            let v = stubs.swap_remove(eligible[rng.gen_range(0..eligible.len())]);
            edges.insert((u.min(v), u.max(v)));
        }
        return Some(edges.into_iter().collect());
    }
    None
}

/// Random instance: graph from `random_edges`, then `n_controlled` nodes
/// chosen uniformly without replacement, all from one seeded stream.
pub fn random_instance(
    n: usize,
    k_max: usize,
    n_controlled: usize,
    params: SisParams,
    seed: u64,
) -> Result<EpidemicInstance> {
    if n_controlled > n {
        return Err(Error::InvalidInstance(format!(
            "{n_controlled} controlled nodes requested out of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_edges(n, k_max, &mut rng)?;
    let controlled = sample(&mut rng, n, n_controlled).into_vec();
    EpidemicInstance::new(n, edges, controlled, params, seed)
}

/// Variable ids of the SIS model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SisLayout {
    pub n: usize,
    /// Action variable of each node, if controlled.
    pub action: Vec<Option<VarId>>,
    pub next_offset: usize,
}

impl SisLayout {
    pub fn new(inst: &EpidemicInstance) -> Self {
        let mut action = vec![None; inst.n];
        for (j, &c) in inst.controlled.iter().enumerate() {
            action[c] = Some(inst.n + j);
        }
        Self {
            n: inst.n,
            action,
            next_offset: inst.n + inst.controlled.len(),
        }
    }

    pub fn state(&self, i: usize) -> VarId {
        i
    }

    pub fn next(&self, i: usize) -> VarId {
        self.next_offset + i
    }
}

/// Factored model: states x_i are ids 0..n, actions of controlled nodes
/// follow in node order, next-state variables come last.
pub fn build_sis_model(inst: &EpidemicInstance) -> Result<FactoredModel> {
    let layout = SisLayout::new(inst);
    let mut vars = VariableTable::new();
    for i in 0..inst.n {
        vars.add(format!("x{i}"), VarKind::State, 2);
    }
    for &c in &inst.controlled {
        vars.add(format!("a{c}"), VarKind::Action, 2);
    }
    for i in 0..inst.n {
        vars.add(format!("x{i}'"), VarKind::NextState, 2);
    }
    let p = inst.params;
    let nb = inst.neighbors();
    let mut cpds = Vec::with_capacity(inst.n);
    let mut rewards = Vec::new();
    for i in 0..inst.n {
        let mut proper = vec![(layout.next(i), 2), (layout.state(i), 2)];
        if let Some(a) = layout.action[i] {
            proper.push((a, 2));
        }
        let counters = if nb[i].is_empty() {
            vec![]
        } else {
            vec![CountScope::new(nb[i].iter().copied())?]
        };
        let shape = Shape::new(proper, counters)?;
        let factor = MixedModeFactor::from_fn(shape, |pv, k| {
            let vaccinated = pv.get(2).copied() == Some(1);
            let p1 = infection_prob(&p, pv[1] == 1, vaccinated, k.first().copied().unwrap_or(0));
            if pv[0] == 1 {
                p1
            } else {
                1.0 - p1
            }
        });
        cpds.push(Cpd {
            state: layout.state(i),
            child: layout.next(i),
            factor,
        });
        let infected = Shape::new(vec![(layout.state(i), 2)], vec![])?;
        rewards.push(MixedModeFactor::new(infected, vec![0.0, -p.lambda2])?);
        if let Some(a) = layout.action[i] {
            let act = Shape::new(vec![(a, 2)], vec![])?;
            rewards.push(MixedModeFactor::new(act, vec![0.0, -p.lambda1])?);
        }
    }
    FactoredModel::new(vars, cpds, rewards, p.gamma)
}
