use anonplan::epidemics::{build_sis_model, random_instance, EpidemicInstance, SisLayout, SisParams};
use anonplan::factors::{all_assignments, Assignment, VarId};
use anonplan::fmmdp::{backproject_all, indicator_basis};
use anonplan::simulate::{evaluate, start_states, EvalConfig, GreedyPolicy, Policy, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn isolated(n: usize, controlled: &[usize], params: SisParams) -> EpidemicInstance {
    EpidemicInstance::new(n, [], controlled.iter().copied(), params, 0).unwrap()
}

fn small_cfg(seed: u64) -> EvalConfig {
    EvalConfig {
        n_starts: 4,
        n_runs: 5,
        horizon: 30,
        seed,
        discounted: true,
    }
}

#[test]
fn healthy_state_is_absorbing() {
    let inst = random_instance(10, 4, 5, SisParams::default(), 1).unwrap();
    let sim = Simulator::new(&inst);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = vec![0; 10];
    for _ in 0..100 {
        let (next, r) = sim.step(&x, &vec![0; 10], &mut rng);
        assert_eq!(next, x);
        assert_eq!(r, 0.0);
    }
}

#[test]
fn isolated_node_recovers_at_rate_delta() {
    let inst = isolated(1, &[], SisParams::default());
    let sim = Simulator::new(&inst);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples = 100_000;
    let recovered = (0..samples)
        .filter(|_| sim.step(&[1], &[0], &mut rng).0 == [0])
        .count() as f64;
    let p = 0.3;
    let sigma = (p * (1.0 - p) / samples as f64).sqrt();
    assert!((recovered / samples as f64 - p).abs() < 3.0 * sigma);
}

#[test]
fn vaccination_cures() {
    let inst = EpidemicInstance::new(3, [(0, 1), (1, 2)], [1], SisParams::default(), 0).unwrap();
    let sim = Simulator::new(&inst);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let (next, r) = sim.step(&[1, 1, 1], &[0, 1, 0], &mut rng);
        assert_eq!(next[1], 0);
        assert_eq!(r, -1.0 - 3.0 * 50.0);
    }
}

#[test]
fn infected_fraction_follows_single_node_chain() {
    // Without neighbours a node never gets infected and stays infected with
    // probability 1 − δ, so P(infected at t) = ½ (1 − δ)^t from a uniform start.
    let n = 40;
    let inst = isolated(n, &[], SisParams::default());
    let sim = Simulator::new(&inst);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (steps, trials) = (3, 2_000);
    let mut infected = 0usize;
    for _ in 0..trials {
        let mut x: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<bool>())).collect();
        for _ in 0..steps {
            x = sim.step(&x, &vec![0; n], &mut rng).0;
        }
        infected += x.iter().filter(|&&v| v == 1).count();
    }
    let p = 0.5 * 0.7f64.powi(steps);
    let samples = (n * trials) as f64;
    let sigma = (p * (1.0 - p) / samples).sqrt();
    assert!((infected as f64 / samples - p).abs() < 3.0 * sigma);
}

#[test]
fn zero_discount_returns_first_reward() {
    let params = SisParams {
        gamma: 0.0,
        ..SisParams::default()
    };
    let inst = random_instance(8, 3, 4, params, 5).unwrap();
    let cfg = small_cfg(1);
    let ev = evaluate(&inst, &Policy::Copystate, cfg).unwrap();
    for (x, runs) in ev.starts.iter().zip(&ev.returns) {
        let infected = x.iter().filter(|&&v| v == 1).count() as f64;
        let vaccinated = inst.controlled.iter().filter(|&&c| x[c] == 1).count() as f64;
        for &r in runs {
            assert_eq!(r, -50.0 * infected - vaccinated);
        }
    }
}

#[test]
fn zero_costs_give_zero_returns() {
    let params = SisParams {
        lambda1: 0.0,
        lambda2: 0.0,
        ..SisParams::default()
    };
    let inst = random_instance(8, 3, 4, params, 5).unwrap();
    for policy in [Policy::Random, Policy::Copystate] {
        let ev = evaluate(&inst, &policy, small_cfg(2)).unwrap();
        assert!(ev.returns.iter().flatten().all(|&r| r == 0.0));
    }
}

#[test]
fn evaluation_is_deterministic_and_run_streams_are_independent() {
    let inst = random_instance(10, 4, 5, SisParams::default(), 8).unwrap();
    let a = evaluate(&inst, &Policy::Random, small_cfg(3)).unwrap();
    let b = evaluate(&inst, &Policy::Random, small_cfg(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.summary_csv(None), b.summary_csv(None));
    // more starts leave the first ones untouched
    let more = evaluate(&inst, &Policy::Random, EvalConfig { n_starts: 6, ..small_cfg(3) }).unwrap();
    assert_eq!(&more.returns[..4], &a.returns[..]);
    assert_eq!(&more.starts[..4], &a.starts[..]);
    assert_eq!(start_states(10, 4, 3), a.starts);
    let other = evaluate(&inst, &Policy::Random, small_cfg(4)).unwrap();
    assert_ne!(a.returns, other.returns);
}

#[test]
fn undiscounted_returns_sum_rewards() {
    let inst = isolated(2, &[0], SisParams::default());
    let cfg = EvalConfig {
        n_starts: 3,
        n_runs: 2,
        horizon: 1,
        seed: 0,
        discounted: false,
    };
    let ev = evaluate(&inst, &Policy::Copystate, cfg).unwrap();
    for (x, runs) in ev.starts.iter().zip(&ev.returns) {
        let want = -50.0 * (x[0] + x[1]) as f64 - x[0] as f64;
        assert!(runs.iter().all(|&r| r == want));
    }
}

#[test]
fn greedy_policy_matches_enumeration_along_trajectories() {
    let inst = random_instance(7, 3, 4, SisParams::default(), 21).unwrap();
    let m = build_sis_model(&inst).unwrap();
    let basis = indicator_basis(&m);
    let bps = backproject_all(&basis, &m).unwrap();
    let layout = SisLayout::new(&inst);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-300.0..0.0)).collect();
    let policy = GreedyPolicy::new(&inst, &m, &basis, &w).unwrap();
    let sim = Simulator::new(&inst);
    let actions: Vec<(VarId, usize)> = m.action_vars().into_iter().map(|v| (v, 2)).collect();
    let q = |x: &[u8], a: &Assignment| -> f64 {
        let mut xa = a.clone();
        for (i, &v) in x.iter().enumerate() {
            xa.set(i, v as usize);
        }
        m.reward(&xa).unwrap()
            + m.discount()
                * bps
                    .iter()
                    .zip(&w)
                    .map(|(g, wj)| wj * g.factor.eval(&xa).unwrap())
                    .sum::<f64>()
    };
    let mut x: Vec<u8> = vec![1; inst.n];
    for _ in 0..40 {
        let a = policy.action(&x).unwrap();
        let chosen: Assignment = (0..inst.n)
            .filter_map(|i| layout.action[i].map(|v| (v, a[i] as usize)))
            .collect();
        let best = all_assignments(&actions)
            .map(|b| q(&x, &b))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((q(&x, &chosen) - best).abs() <= 1e-9);
        for i in 0..inst.n {
            if !inst.is_controlled(i) {
                assert_eq!(a[i], 0);
            }
        }
        x = sim.step(&x, &a, &mut rng).0;
    }
}
