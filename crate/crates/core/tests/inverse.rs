use std::sync::OnceLock;

use brsmg_core::forward::{solve_all, LevelPolicySet, LevelSolution, MaxOperator, SolverOptions};
use brsmg_core::gradient::{solve_gradients, GradientOptions, GradientTables};
use brsmg_core::gridworld::{build_game, gen_demos, GridConfig, GridWorld};
use brsmg_core::inverse::{
    demo_loglik_and_grad, expected_action_loglik, infer_levels, learn, level_posterior_update,
    posterior_gradient_step, total_loglik_and_grad, Belief, Demonstration, LearnConfig, Step,
};
use brsmg_core::params::{FixedParams, ParamLayout};
use brsmg_core::{Agent, CptParams, GameSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

struct Fixture {
    gw: GridWorld,
    spec: GameSpec,
    layout: ParamLayout,
    fixed: FixedParams,
    policies: LevelPolicySet,
    grads: GradientTables,
    /// Policies at `theta + H e_p` and `theta - H e_p`.
    shifted: Vec<(LevelPolicySet, LevelPolicySet)>,
}

fn exact_solver() -> SolverOptions {
    SolverOptions {
        tol: 1e-12,
        max_sweeps: 100_000,
        max_op: MaxOperator::Smooth { kappa: 100.0 },
    }
}

fn exact_grad() -> GradientOptions {
    GradientOptions {
        tol: 1e-12,
        max_sweeps: 100_000,
        ..GradientOptions::default()
    }
}

/// Interior point of the parameter box so every shifted reward stays >= 1.
fn interior_theta(layout: &ParamLayout) -> Vec<f64> {
    let mut theta = vec![0.0; layout.n_params()];
    theta[0] = 0.6;
    for (i, x) in theta.iter_mut().enumerate().skip(1) {
        *x = 1.1 + ((i * 7) % 13) as f64 / 10.0;
    }
    theta
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (gw, spec, rp) = build_game(GridConfig::toy()).unwrap();
        let layout = ParamLayout::shared(spec.feature_dim());
        let fixed = FixedParams::from_model(&CptParams::symmetric(0.7, 0.5).unwrap(), &rp);
        let theta = interior_theta(&layout);
        let solve = |th: &[f64]| {
            let (cpt, rp) = layout.unpack(&spec, th, &fixed).unwrap();
            solve_all(&spec, &rp, &cpt, 2, &exact_solver()).unwrap()
        };
        let policies = solve(&theta);
        let (cpt, rp) = layout.unpack(&spec, &theta, &fixed).unwrap();
        let grads = solve_gradients(&spec, &rp, &cpt, &layout, &policies, &exact_grad()).unwrap();
        let shifted = (0..layout.n_params())
            .map(|p| {
                let (mut up, mut down) = (theta.clone(), theta.clone());
                up[p] += H;
                down[p] -= H;
                (solve(&up), solve(&down))
            })
            .collect();
        Fixture {
            gw,
            spec,
            layout,
            fixed,
            policies,
            grads,
            shifted,
        }
    })
}

/// Random joint walk on the toy grid until both exit, they collide, or
/// `len` steps.
fn random_demo(gw: &GridWorld, seed: u64, len: usize) -> Demonstration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let done = gw.encode(gw.exited(), gw.exited());
    let mut s = gw.sample_start(&mut rng);
    let mut steps = Vec::new();
    while steps.len() < len && s != done {
        let (a1, a2) = (rng.random_range(0..5), rng.random_range(0..5));
        steps.push(Step::new(s, a1, a2));
        let (next, collided) = gw.step(s, a1, a2);
        if collided {
            break;
        }
        s = next;
    }
    Demonstration::new(steps)
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let z: f64 = v.iter().sum();
    v.into_iter().map(|x| x / z).collect()
}

fn close(analytic: f64, fd: f64, rel: f64, abs: f64) -> bool {
    (analytic - fd).abs() <= abs.max(rel * fd.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn posteriors_stay_on_the_simplex_and_replay_identically(seed in any::<u64>(), len in 1usize..30) {
        let f = fixture();
        let demo = random_demo(&f.gw, seed, len);
        let replay = |demo: &Demonstration| {
            let mut b = [vec![0.5, 0.5], vec![0.5, 0.5]];
            let mut all = Vec::new();
            for st in &demo.steps {
                for agent in Agent::BOTH {
                    let i = agent.index();
                    b[i] = level_posterior_update(&b[i], &f.policies, st.state, st.action(agent), agent).unwrap();
                    all.push(b[i].clone());
                }
            }
            all
        };
        let first = replay(&demo);
        for p in &first {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
        prop_assert_eq!(&first, &replay(&demo));
        let term = demo_loglik_and_grad(&f.policies, None, &demo);
        prop_assert!(term.loglik <= 0.0);
        prop_assert_eq!(&term.posteriors[0], first[first.len() - 2].as_slice());
        prop_assert_eq!(&term.posteriors[1], first[first.len() - 1].as_slice());
    }

    #[test]
    fn factorized_likelihood_equals_double_sum(seed in any::<u64>()) {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b1, b2) = (random_simplex(&mut rng, 2), random_simplex(&mut rng, 2));
        let s = rng.random_range(0..f.spec.n_states());
        let (a1, a2) = (rng.random_range(0..5), rng.random_range(0..5));
        let mut double = 0.0;
        for k1 in 1..=2 {
            for k2 in 1..=2 {
                double += f.policies.prob(Agent::One, k1, s, a1)
                    * f.policies.prob(Agent::Two, k2, s, a2)
                    * b1[k1 - 1]
                    * b2[k2 - 1];
            }
        }
        let fact = expected_action_loglik(&f.policies, &b1, &b2, s, a1, a2);
        prop_assert!((fact - double.ln()).abs() <= 1e-12);
        prop_assert!(fact < 0.0);
    }

    #[test]
    fn posterior_gradient_matches_finite_differences(seed in any::<u64>()) {
        let f = fixture();
        let demo = random_demo(&f.gw, seed, 3);
        let n_p = f.layout.n_params();
        for agent in Agent::BOTH {
            let mut belief = Belief::uniform(2, n_p);
            let mut sink = vec![0.0; n_p];
            let mut prefix = Vec::new();
            for st in &demo.steps {
                posterior_gradient_step(&mut belief, &f.policies, Some(&f.grads), st.state, st.action(agent), agent, &mut sink);
                prefix.push(*st);
                let sub = Demonstration::new(prefix.clone());
                for p in 0..n_p {
                    let (up, down) = &f.shifted[p];
                    let b_up = &demo_loglik_and_grad(up, None, &sub).posteriors[agent.index()];
                    let b_down = &demo_loglik_and_grad(down, None, &sub).posteriors[agent.index()];
                    for k in 0..2 {
                        let fd = (b_up[k].ln() - b_down[k].ln()) / (2.0 * H);
                        let an = belief.log_grad[k * n_p + p];
                        prop_assert!(close(an, fd, 1e-2, 1e-6), "agent {:?} k {} p {}: {} vs {}", agent, k + 1, p, an, fd);
                    }
                }
            }
        }
    }

    #[test]
    fn demo_gradient_matches_finite_differences(seed in any::<u64>(), len in 1usize..12) {
        let f = fixture();
        let demo = random_demo(&f.gw, seed, len);
        let term = demo_loglik_and_grad(&f.policies, Some(&f.grads), &demo);
        for p in 0..f.layout.n_params() {
            let (up, down) = &f.shifted[p];
            let fd = (demo_loglik_and_grad(up, None, &demo).loglik - demo_loglik_and_grad(down, None, &demo).loglik) / (2.0 * H);
            prop_assert!(close(term.grad[p], fd, 1e-2, 1e-6), "p {}: {} vs {}", p, term.grad[p], fd);
        }
    }

    #[test]
    fn level_independent_policies_leave_the_prior(seed in any::<u64>()) {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let same = |agent: Agent| f.policies.level(agent, 1).clone();
        let flat = LevelPolicySet::from_parts(
            f.spec.n_states(),
            [5, 5],
            [f.policies.anchor(Agent::One).to_vec(), f.policies.anchor(Agent::Two).to_vec()],
            vec![[same(Agent::One), same(Agent::Two)], [same(Agent::One), same(Agent::Two)]],
        )
        .unwrap();
        let prior = random_simplex(&mut rng, 2);
        let s = rng.random_range(0..f.spec.n_states());
        let post = level_posterior_update(&prior, &flat, s, rng.random_range(0..5), Agent::Two).unwrap();
        prop_assert!((post[0] - prior[0]).abs() <= 1e-15 && (post[1] - prior[1]).abs() <= 1e-15);
    }
}

#[test]
fn first_step_gradient_is_centered_log_policy_gradient() {
    let f = fixture();
    let n_p = f.layout.n_params();
    let (s, a) = (f.gw.encode(f.gw.cell(1, 0), f.gw.cell(1, 2)), 3);
    let mut belief = Belief::uniform(2, n_p);
    let mut sink = vec![0.0; n_p];
    posterior_gradient_step(&mut belief, &f.policies, Some(&f.grads), s, a, Agent::One, &mut sink);
    let dlog = |k: usize| -> Vec<f64> {
        let pi = f.policies.prob(Agent::One, k, s, a);
        f.grads.dpi(Agent::One, k, s, a).iter().map(|d| d / pi).collect()
    };
    let (d1, d2) = (dlog(1), dlog(2));
    for p in 0..n_p {
        let mean = belief.posterior[0] * d1[p] + belief.posterior[1] * d2[p];
        assert!((belief.log_grad[p] - (d1[p] - mean)).abs() <= 1e-12);
        assert!((belief.log_grad[n_p + p] - (d2[p] - mean)).abs() <= 1e-12);
    }
}

#[test]
fn single_step_gradient_is_mixture_score() {
    let f = fixture();
    let st = Step::new(f.gw.encode(f.gw.cell(0, 0), f.gw.cell(2, 2)), 1, 4);
    let term = demo_loglik_and_grad(&f.policies, Some(&f.grads), &Demonstration::new(vec![st]));
    let mut want = vec![0.0; f.layout.n_params()];
    for agent in Agent::BOTH {
        let a = st.action(agent);
        let mix: f64 = (1..=2).map(|k| 0.5 * f.policies.prob(agent, k, st.state, a)).sum();
        for k in 1..=2 {
            for (w, d) in want.iter_mut().zip(f.grads.dpi(agent, k, st.state, a)) {
                *w += 0.5 * d / mix;
            }
        }
    }
    for (g, w) in term.grad.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12);
    }
}

#[test]
fn total_gradient_matches_finite_differences_on_synthetic_demos() {
    let f = fixture();
    let demos = gen_demos(&f.gw, &f.policies, 30, 4);
    let (_, grad) = total_loglik_and_grad(&f.policies, Some(&f.grads), &demos);
    for (p, (up, down)) in f.shifted.iter().enumerate() {
        let fd = (total_loglik_and_grad(up, None, &demos).0 - total_loglik_and_grad(down, None, &demos).0) / (2.0 * H);
        assert!(close(grad[p], fd, 1e-2, 1e-6), "p {p}: {} vs {fd}", grad[p]);
    }
}

#[test]
fn tied_levels_resolve_to_level_one() {
    let f = fixture();
    let same = |agent: Agent| -> LevelSolution { f.policies.level(agent, 2).clone() };
    let flat = LevelPolicySet::from_parts(
        f.spec.n_states(),
        [5, 5],
        [f.policies.anchor(Agent::One).to_vec(), f.policies.anchor(Agent::Two).to_vec()],
        vec![[same(Agent::One), same(Agent::Two)], [same(Agent::One), same(Agent::Two)]],
    )
    .unwrap();
    assert_eq!(infer_levels(&flat, &random_demo(&f.gw, 9, 10)), [1, 1]);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let f = fixture();
    let demos = gen_demos(&f.gw, &f.policies, 5, 1);
    let init = interior_theta(&f.layout);
    let cfg = LearnConfig {
        eta: 0.0,
        max_epochs: 3,
        ..LearnConfig::default()
    };
    let st = learn(&f.spec, &f.fixed, &f.layout, &demos, &init, &cfg, |_, _| {}).unwrap();
    assert_eq!(st.theta, init);
    assert!(st.trace.iter().all(|r| r.theta == init));
}

#[test]
fn learning_from_the_truth_does_not_degrade_the_likelihood() {
    let (gw, spec, rp) = build_game(GridConfig::toy()).unwrap();
    let cpt = CptParams::symmetric(0.7, 0.5).unwrap();
    let layout = ParamLayout::shared(spec.feature_dim());
    let truth = layout.pack(&cpt, &rp).unwrap();
    let policies = solve_all(&spec, &rp, &cpt, 2, &SolverOptions::default()).unwrap();
    let demos = gen_demos(&gw, &policies, 100, 17);
    let cfg = LearnConfig {
        max_epochs: 5,
        ..LearnConfig::default()
    };
    let st = learn(&spec, &FixedParams::from_model(&cpt, &rp), &layout, &demos, &truth, &cfg, |_, _| {}).unwrap();
    let first = st.trace[0].loglik;
    for r in &st.trace {
        assert!(r.loglik >= first - 1e-3, "epoch {}: {} < {first}", r.epoch, r.loglik);
    }
}
