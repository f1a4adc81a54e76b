//! Monte Carlo evaluation of policies on SIS instances.
//!
//! Start states are drawn from stream 0 of a ChaCha8 generator seeded with
//! the evaluation seed; trajectory `(s, r)` uses stream `1 + s·runs + r` of
//! the same seed, so every run is reproducible on its own.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epidemics::{infection_prob, EpidemicInstance, SisLayout};
use crate::error::Result;
use crate::factors::Assignment;
use crate::fmmdp::{BasisFunction, FactoredModel, QFunction};

/// Node states (1 = infected) or node actions (1 = vaccinate).
pub type NodeVec = Vec<u8>;

/// Samples transitions of one instance.
#[derive(Clone, Debug)]
pub struct Simulator {
    inst: EpidemicInstance,
    neighbors: Vec<Vec<usize>>,
}

impl Simulator {
    pub fn new(inst: &EpidemicInstance) -> Self {
        Self {
            inst: inst.clone(),
            neighbors: inst.neighbors(),
        }
    }

    pub fn instance(&self) -> &EpidemicInstance {
        &self.inst
    }

    /// R(x, a) = −λ₁‖a‖₁ − λ₂‖x‖₁.
    pub fn reward(&self, x: &[u8], a: &[u8]) -> f64 {
        let p = &self.inst.params;
        let infected = x.iter().filter(|&&v| v == 1).count() as f64;
        let vaccinated = a.iter().filter(|&&v| v == 1).count() as f64;
        -p.lambda1 * vaccinated - p.lambda2 * infected
    }

    /// Next state and the reward of `(x, a)`. Nodes are sampled in id order,
    /// one uniform draw each.
    pub fn step(&self, x: &[u8], a: &[u8], rng: &mut impl Rng) -> (NodeVec, f64) {
        let r = self.reward(x, a);
        let next = (0..self.inst.n)
            .map(|i| {
                let k = self.neighbors[i].iter().filter(|&&j| x[j] == 1).count();
                let p1 = infection_prob(&self.inst.params, x[i] == 1, a[i] == 1, k);
                u8::from(rng.gen::<f64>() < p1)
            })
            .collect();
        (next, r)
    }
}

/// Vaccinates exactly the infected controlled nodes.
pub fn copystate_action(inst: &EpidemicInstance, x: &[u8]) -> NodeVec {
    let mut a = vec![0; inst.n];
    for &c in &inst.controlled {
        a[c] = x[c];
    }
    a
}

/// Greedy with respect to a linear value function, with a cache of the
/// actions already chosen.
#[derive(Debug)]
pub struct GreedyPolicy {
    q: QFunction,
    layout: SisLayout,
    cache: RefCell<HashMap<NodeVec, NodeVec>>,
}

impl GreedyPolicy {
    pub fn new(
        inst: &EpidemicInstance,
        m: &FactoredModel,
        basis: &[BasisFunction],
        w: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            q: QFunction::new(m, basis, w)?,
            layout: SisLayout::new(inst),
            cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn action(&self, x: &[u8]) -> Result<NodeVec> {
        if let Some(a) = self.cache.borrow().get(x) {
            return Ok(a.clone());
        }
        let state: Assignment = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.layout.state(i), usize::from(v)))
            .collect();
        let joint = self.q.greedy_action(&state)?;
        let a: NodeVec = self
            .layout
            .action
            .iter()
            .map(|v| v.map_or(0, |v| joint.get(v).unwrap_or(0) as u8))
            .collect();
        self.cache.borrow_mut().insert(x.to_vec(), a.clone());
        Ok(a)
    }
}

#[derive(Debug)]
pub enum Policy {
    /// Each controlled node is vaccinated with probability 1/2.
    Random,
    Copystate,
    Greedy(Box<GreedyPolicy>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Copystate => "copystate",
            Policy::Greedy(_) => "greedy",
        }
    }

    pub fn action(&self, inst: &EpidemicInstance, x: &[u8], rng: &mut impl Rng) -> Result<NodeVec> {
        Ok(match self {
            Policy::Random => {
                let mut a = vec![0; inst.n];
                for &c in &inst.controlled {
                    a[c] = u8::from(rng.gen::<bool>());
                }
                a
            }
            Policy::Copystate => copystate_action(inst, x),
            Policy::Greedy(g) => g.action(x)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_starts: usize,
    pub n_runs: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Sum γ^t r_t when true, plain Σ r_t otherwise.
    pub discounted: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_starts: 50,
            n_runs: 50,
            horizon: 200,
            seed: 0,
            discounted: true,
        }
    }
}

/// Box-plot statistics of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Smallest sample at or above q1 − 1.5·IQR.
    pub lo_whisker: f64,
    /// Largest sample at or below q3 + 1.5·IQR.
    pub hi_whisker: f64,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl Summary {
    pub fn of(sample: &[f64]) -> Self {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Self {
            mean: mean(&s),
            median,
            q1,
            q3,
            lo_whisker: *s.iter().find(|&&v| v >= lo_fence).expect("q1 is above the fence"),
            hi_whisker: *s.iter().rev().find(|&&v| v <= hi_fence).expect("q3 is below the fence"),
        }
    }
}

/// Percentile bootstrap interval of the mean of `values`.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&means, tail), quantile(&means, 1.0 - tail))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEvaluation {
    pub policy: String,
    pub config: EvalConfig,
    pub starts: Vec<NodeVec>,
    /// `returns[s][r]`: return of run `r` from start `s`.
    pub returns: Vec<Vec<f64>>,
}

impl PolicyEvaluation {
    pub fn summaries(&self) -> Vec<Summary> {
        self.returns.iter().map(|r| Summary::of(r)).collect()
    }

    /// Mean return of each start state.
    pub fn start_means(&self) -> Vec<f64> {
        self.returns.iter().map(|r| mean(r)).collect()
    }

    pub fn grand_mean(&self) -> f64 {
        mean(&self.start_means())
    }

    /// Rows `start_id,run_id,return`.
    pub fn returns_csv(&self, header: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(h) = header {
            writeln!(s, "# {h}").unwrap();
        }
        s.push_str("start_id,run_id,return\n");
        for (i, runs) in self.returns.iter().enumerate() {
            for (j, r) in runs.iter().enumerate() {
                writeln!(s, "{i},{j},{r}").unwrap();
            }
        }
        s
    }

    /// Rows `start_id,mean,median,q1,q3,lo_whisker,hi_whisker`.
    pub fn summary_csv(&self, header: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(h) = header {
            writeln!(s, "# {h}").unwrap();
        }
        s.push_str("start_id,mean,median,q1,q3,lo_whisker,hi_whisker\n");
        for (i, m) in self.summaries().iter().enumerate() {
            writeln!(
                s,
                "{i},{},{},{},{},{},{}",
                m.mean, m.median, m.q1, m.q3, m.lo_whisker, m.hi_whisker
            )
            .unwrap();
        }
        s
    }
}

fn run_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly random start states, from stream 0 of `seed`.
pub fn start_states(n: usize, n_starts: usize, seed: u64) -> Vec<NodeVec> {
    let mut rng = run_rng(seed, 0);
    (0..n_starts)
        .map(|_| (0..n).map(|_| u8::from(rng.gen::<bool>())).collect())
        .collect()
}

/// Return of one trajectory.
pub fn rollout(
    sim: &Simulator,
    policy: &Policy,
    start: &[u8],
    horizon: usize,
    discount: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut x = start.to_vec();
    let mut total = 0.0;
    let mut scale = 1.0;
    for _ in 0..horizon {
        let a = policy.action(sim.instance(), &x, rng)?;
        let (next, r) = sim.step(&x, &a, rng);
        total += scale * r;
        scale *= discount;
        x = next;
    }
    Ok(total)
}

pub fn evaluate(inst: &EpidemicInstance, policy: &Policy, cfg: EvalConfig) -> Result<PolicyEvaluation> {
    let sim = Simulator::new(inst);
    let discount = if cfg.discounted { inst.params.gamma } else { 1.0 };
    let starts = start_states(inst.n, cfg.n_starts, cfg.seed);
    let mut returns = Vec::with_capacity(cfg.n_starts);
    for (s, x0) in starts.iter().enumerate() {
        let mut runs = Vec::with_capacity(cfg.n_runs);
        for r in 0..cfg.n_runs {
            let mut rng = run_rng(cfg.seed, 1 + (s * cfg.n_runs + r) as u64);
            runs.push(rollout(&sim, policy, x0, cfg.horizon, discount, &mut rng)?);
        }
        returns.push(runs);
    }
    Ok(PolicyEvaluation {
        policy: policy.name().to_string(),
        config: cfg,
        starts,
        returns,
    })
}

/// Horizontal-axis box plot of one sample per group, as a standalone SVG.
pub fn box_plot_svg(groups: &[(String, Summary)], title: &str) -> String {
    let (w, h, left, right, top, row) = (640.0, 0.0, 110.0, 20.0, 40.0, 50.0);
    let height = top + row * groups.len() as f64 + 40.0 + h;
    let lo = groups
        .iter()
        .map(|(_, s)| s.lo_whisker)
        .fold(f64::INFINITY, f64::min);
    let hi = groups
        .iter()
        .map(|(_, s)| s.hi_whisker)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x = |v: f64| left + (v - lo) / span * (w - left - right);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0).unwrap();
    for (i, (name, b)) in groups.iter().enumerate() {
        let cy = top + row * i as f64 + row / 2.0;
        let (y0, y1) = (cy - row * 0.3, cy + row * 0.3);
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{name}</text>"#, left - 8.0, cy + 4.0).unwrap();
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{cy}" x2="{:.2}" y2="{cy}" stroke="black"/>"#,
            x(b.lo_whisker),
            x(b.hi_whisker)
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{:.2}" y="{y0}" width="{:.2}" height="{}" fill="lightsteelblue" stroke="black"/>"#,
            x(b.q1),
            x(b.q3) - x(b.q1),
            y1 - y0
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{y0}" x2="{0:.2}" y2="{y1}" stroke="black" stroke-width="2"/>"#,
            x(b.median)
        )
        .unwrap();
    }
    let axis_y = top + row * groups.len() as f64 + 10.0;
    for (v, anchor) in [(lo, "start"), (hi, "end")] {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{v:.1}</text>"#,
            x(v),
            axis_y + 14.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemics::SisParams;

    #[test]
    fn quartiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.25), 1.75);
        let b = Summary::of(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(b.median, 3.0);
        assert_eq!(b.hi_whisker, 4.0);
        assert_eq!(b.lo_whisker, 1.0);
    }

    #[test]
    fn copystate_matches_infected_controlled() {
        let inst = EpidemicInstance::new(4, [(0, 1)], [1, 2], SisParams::default(), 0).unwrap();
        assert_eq!(copystate_action(&inst, &[0, 0, 0, 0]), vec![0, 0, 0, 0]);
        assert_eq!(copystate_action(&inst, &[1, 1, 1, 1]), vec![0, 1, 1, 0]);
        assert_eq!(copystate_action(&inst, &[1, 0, 1, 1]), vec![0, 0, 1, 0]);
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let v: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&v, 1000, 0.95, 1);
        assert!(lo < 24.5 && 24.5 < hi);
    }
}
