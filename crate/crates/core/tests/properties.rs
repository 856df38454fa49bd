use infolim::{
    evaluate_policy, fe_backup, fe_solve, free_energy_of_policy, greedy_policy, kl_divergence,
    q_from_v, uniform_policy, validate_mdp, value_iteration, BetaParam, FiniteMdp, MdpBuilder,
    StochasticPolicy, ValueTable,
};
use proptest::prelude::*;

/// Dense random MDP with every action admissible everywhere.
#[derive(Debug, Clone)]
struct RandomMdp {
    n: usize,
    a: usize,
    gamma: f64,
    weights: Vec<f64>,
    rewards: Vec<f64>,
}

impl RandomMdp {
    fn build(&self) -> FiniteMdp<f64> {
        let (n, a) = (self.n, self.a);
        let mut b = MdpBuilder::numbered(n, a, self.gamma);
        for x in 0..n {
            for u in 0..a {
                let row = &self.weights[(x * a + u) * n..(x * a + u + 1) * n];
                let total: f64 = row.iter().sum();
                for (y, w) in row.iter().enumerate() {
                    b.add_transition(x, u, y, w / total);
                    b.set_reward(x, u, y, self.rewards[(x * a + u) * n + y]);
                }
            }
        }
        b.build().unwrap()
    }
}

fn arb_mdp() -> impl Strategy<Value = RandomMdp> {
    (1usize..=5, 1usize..=3, 0.0..0.95f64).prop_flat_map(|(n, a, gamma)| {
        let len = n * a * n;
        (
            prop::collection::vec(0.01..1.0f64, len),
            prop::collection::vec(-5.0..5.0f64, len),
        )
            .prop_map(move |(weights, rewards)| RandomMdp {
                n,
                a,
                gamma,
                weights,
                rewards,
            })
    })
}

fn arb_distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, len).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    })
}

fn arb_prior(n: usize, a: usize) -> impl Strategy<Value = StochasticPolicy<f64>> {
    prop::collection::vec(arb_distribution(a), n)
        .prop_map(|rows| StochasticPolicy::from_rows(rows).unwrap())
}

fn arb_beta() -> impl Strategy<Value = f64> {
    (-2.0..2.0f64).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(p in arb_distribution(4), q in arb_distribution(4)) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn generated_mdps_validate(random in arb_mdp()) {
        prop_assert!(validate_mdp(&random.build()).is_empty());
    }

    #[test]
    fn uniform_policy_spreads_over_admissible_actions(random in arb_mdp()) {
        let mdp = random.build();
        let pi = uniform_policy(&mdp);
        for x in 0..mdp.n_states() {
            let row = pi.row(x);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let k = mdp.admissible(x).len() as f64;
            for &u in mdp.admissible(x) {
                prop_assert_eq!(row[u], 1.0 / k);
            }
        }
    }

    #[test]
    fn free_energy_backup_is_a_contraction(
        (random, prior) in arb_mdp().prop_flat_map(|s| { let (n, a) = (s.n, s.a); (Just(s), arb_prior(n, a)) }),
        beta in arb_beta(),
        f1 in prop::collection::vec(-20.0..20.0f64, 5),
        f2 in prop::collection::vec(-20.0..20.0f64, 5),
    ) {
        let mdp = random.build();
        let n = mdp.n_states();
        let beta = BetaParam::new(beta).unwrap();
        let a = ValueTable(f1[..n].to_vec());
        let b = ValueTable(f2[..n].to_vec());
        let ba = fe_backup(&mdp, &prior, beta, &a).unwrap();
        let bb = fe_backup(&mdp, &prior, beta, &b).unwrap();
        prop_assert!(ba.sup_distance(&bb) <= mdp.discount() * a.sup_distance(&b) + 1e-12);
    }

    #[test]
    fn free_energy_grows_with_beta(
        (random, prior) in arb_mdp().prop_flat_map(|s| { let (n, a) = (s.n, s.a); (Just(s), arb_prior(n, a)) }),
        lo in arb_beta(),
        factor in 1.0..10.0f64,
    ) {
        let mdp = random.build();
        let f_lo = fe_solve(&mdp, &prior, BetaParam::new(lo).unwrap(), 1e-11, 100_000).unwrap().f;
        let f_hi = fe_solve(&mdp, &prior, BetaParam::new(lo * factor).unwrap(), 1e-11, 100_000).unwrap().f;
        let (v_star, _) = value_iteration(&mdp, 1e-11, 100_000).unwrap();
        for x in 0..mdp.n_states() {
            prop_assert!(f_lo[x] <= f_hi[x] + 1e-8);
            prop_assert!(f_hi[x] <= v_star[x] + 1e-8);
        }
    }

    #[test]
    fn softmax_policy_beats_perturbations(
        (random, prior, noise) in arb_mdp().prop_flat_map(|s| {
            let (n, a) = (s.n, s.a);
            (Just(s), arb_prior(n, a), arb_prior(n, a))
        }),
        beta in arb_beta(),
        mix in 0.01..1.0f64,
    ) {
        let mdp = random.build();
        let beta = BetaParam::new(beta).unwrap();
        let sol = fe_solve(&mdp, &prior, beta, 1e-12, 100_000).unwrap();
        let rows = (0..mdp.n_states())
            .map(|x| sol.policy.row(x).iter().zip(noise.row(x)).map(|(&p, &q)| (1.0 - mix) * p + mix * q).collect())
            .collect();
        let other = StochasticPolicy::from_rows(rows).unwrap();
        let f_star = free_energy_of_policy(&mdp, &sol.policy, &prior, beta).unwrap();
        let f_other = free_energy_of_policy(&mdp, &other, &prior, beta).unwrap();
        for x in 0..mdp.n_states() {
            prop_assert!((f_star[x] - sol.f[x]).abs() < 1e-8);
            prop_assert!(f_other[x] <= f_star[x] + 1e-8);
        }
    }

    #[test]
    fn greedy_policy_attains_optimal_value(random in arb_mdp()) {
        let mdp = random.build();
        let (v, _) = value_iteration(&mdp, 1e-12, 100_000).unwrap();
        let pi = greedy_policy(&mdp, &q_from_v(&mdp, &v));
        let (v_pi, d) = evaluate_policy(&mdp, &pi, &uniform_policy(&mdp)).unwrap();
        for x in 0..mdp.n_states() {
            prop_assert!((v_pi[x] - v[x]).abs() < 1e-8);
            prop_assert!(d[x] >= -1e-12);
        }
    }

    #[test]
    fn single_precision_tracks_double(random in arb_mdp(), beta in arb_beta()) {
        let mdp = random.build();
        let mdp32 = FiniteMdp::<f32>::from_parts(
            mdp.state_labels().to_vec(),
            mdp.action_labels().to_vec(),
            (0..mdp.n_states()).map(|x| mdp.admissible(x).to_vec()).collect(),
            (0..mdp.n_states())
                .flat_map(|x| (0..mdp.n_actions()).map(move |u| (x, u)))
                .flat_map(|(x, u)| mdp.transition_row(x, u).iter().map(|&p| p as f32).collect::<Vec<_>>())
                .collect(),
            (0..mdp.n_states())
                .flat_map(|x| (0..mdp.n_actions()).map(move |u| (x, u)))
                .flat_map(|(x, u)| mdp.reward_row(x, u).iter().map(|&r| r as f32).collect::<Vec<_>>())
                .collect(),
            mdp.discount() as f32,
            mdp.terminal_mask().to_vec(),
        )
        .unwrap();
        let f64_sol = fe_solve(&mdp, &uniform_policy(&mdp), BetaParam::new(beta).unwrap(), 1e-10, 100_000).unwrap();
        let f32_sol = fe_solve(&mdp32, &uniform_policy(&mdp32), BetaParam::new(beta as f32).unwrap(), 1e-4, 100_000).unwrap();
        let scale = 1.0 + mdp.max_abs_reward() / (1.0 - mdp.discount());
        for x in 0..mdp.n_states() {
            prop_assert!((f64_sol.f[x] - f32_sol.f[x] as f64).abs() < 1e-3 * scale);
        }
    }
}
