//! Acceptance suite. Prints one PASS/FAIL line per criterion, plus indented
//! detail lines, and exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use infolim::{
    ba_solve, build_paper_grid, evaluate_policy, fe_backup, fe_solve, greedy_policy,
    modified_ba_solve, q_from_v, simulate_rollouts, uniform_policy, value_iteration, BetaParam,
    Mdp, MdpBuilder, PenaltyTable, Policy, StateWeights, ValueTable, Weights,
};
use infolim_cli::{sweep, Algorithm, BetaArg, SolveInputs, SweepRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

const TOL: f64 = 1e-9;
const MAX_ITERS: usize = 100_000;
const SWEEP_BETAS: [f64; 4] = [0.05, 0.5, 5.0, 100.0];

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn with(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

fn default_grid() -> Mdp {
    build_paper_grid().0
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed())
}

fn exact_values(mdp: &Mdp) -> (ValueTable<f64>, Policy) {
    let (v, _) = value_iteration(mdp, TOL, MAX_ITERS).unwrap();
    let pi = greedy_policy(mdp, &q_from_v(mdp, &v));
    (v, pi)
}

fn exact_baseline() -> Outcome {
    let mdp = default_grid();
    let ((v, _), elapsed) = timed(|| value_iteration(&mdp, TOL, MAX_ITERS).unwrap());
    let pass = (v[0] - -4.22).abs() <= 0.1 && elapsed < Duration::from_secs(1);
    Outcome::new(
        pass,
        format!("V*(x0) = {:.6} (target -4.22 ± 0.1) in {elapsed:?}", v[0]),
    )
    .with(vec![
        "movement into the goal or an obstacle earns the terminal reward instead of the move cost"
            .into(),
    ])
}

fn large_beta_recovery() -> Outcome {
    let mdp = default_grid();
    let (v_star, _) = exact_values(&mdp);
    let prior = uniform_policy(&mdp);
    let sol = fe_solve(&mdp, &prior, BetaParam::new(100.0).unwrap(), TOL, MAX_ITERS).unwrap();
    let (v, _) = evaluate_policy(&mdp, &sol.policy, &prior).unwrap();
    let gap = (v[0] - v_star[0]).abs();
    Outcome::new(
        gap <= 0.05,
        format!("|V^pi*(x0) - V*(x0)| = {gap:.3e} at beta = 100 (bound 0.05)"),
    )
}

fn small_beta_copying() -> Outcome {
    let mdp = default_grid();
    let prior = uniform_policy(&mdp);
    let sol = fe_solve(&mdp, &prior, BetaParam::new(1e-6).unwrap(), TOL, MAX_ITERS).unwrap();
    let tv = sol.policy.max_total_variation(&prior);
    let worst = (0..mdp.n_states())
        .max_by(|&a, &b| {
            let tv_of = |x: usize| -> f64 {
                sol.policy
                    .row(x)
                    .iter()
                    .zip(prior.row(x))
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
                    / 2.0
            };
            tv_of(a).total_cmp(&tv_of(b))
        })
        .unwrap();
    let mut details = vec![format!(
        "largest deviation at state {}",
        mdp.state_labels()[worst]
    )];
    if tv > 1e-6 {
        details.push(
            "first-order expansion: TV ≈ (beta/2)·E_prior|Q_F - E_prior Q_F|, which exceeds 1e-6 once Q_F \
             spreads by more than a few units across admissible actions"
                .into(),
        );
    }
    Outcome::new(
        tv <= 1e-6,
        format!("max total variation to prior = {tv:.3e} at beta = 1e-6 (bound 1e-6)"),
    )
    .with(details)
}

fn sweep_rows(algs: &[Algorithm]) -> Vec<SweepRow> {
    let betas: Vec<BetaArg> = SWEEP_BETAS.iter().map(|&b| BetaArg(Some(b))).collect();
    sweep(&default_grid(), algs, &betas, &SolveInputs::default())
}

fn values_of(rows: &[SweepRow], alg: Algorithm) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.algorithm == alg)
        .map(|r| r.summary().map_or(f64::NAN, |s| s.v_x0))
        .collect()
}

fn non_decreasing(xs: &[f64], slack: f64) -> bool {
    xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[1] >= w[0] - slack)
}

fn table_trend() -> Outcome {
    let (rows, elapsed) = timed(|| sweep_rows(&[Algorithm::Il, Algorithm::Mba]));
    let il = values_of(&rows, Algorithm::Il);
    let mba = values_of(&rows, Algorithm::Mba);
    let monotone = non_decreasing(&il, 0.0) && non_decreasing(&mba, 0.0);
    let dominates = il.iter().zip(&mba).all(|(i, m)| *m >= i - 1e-6);
    let published: [(Algorithm, [f64; 4]); 2] = [
        (Algorithm::Il, [-11.0, -7.39, -4.35, -4.22]),
        (Algorithm::Mba, [-10.5, -4.33, -4.27, -4.22]),
    ];
    let mut details = Vec::new();
    for (alg, reference) in published {
        let values = if alg == Algorithm::Il { &il } else { &mba };
        for ((beta, v), r) in SWEEP_BETAS.iter().zip(values).zip(reference) {
            let tag = if (v - r).abs() <= 1.0 {
                "within ±1.0"
            } else {
                "DEVIATION"
            };
            details.push(format!(
                "{tag}: {} beta = {beta}: V(x0) = {v:.4}, published {r}",
                alg.as_str()
            ));
        }
    }
    details.push(
        "published intermediate values depend on an unstated prior and state weighting; \
         uniform defaults are used here, so deviations are reported, not failed"
            .into(),
    );
    let pass = monotone && dominates && elapsed < Duration::from_secs(60);
    Outcome::new(
        pass,
        format!(
            "il {il:.4?}, mba {mba:.4?}; non-decreasing: {monotone}, mba >= il: {dominates}; {elapsed:?}"
        ),
    )
    .with(details)
}

/// Random MDP: Dirichlet(1) transitions, standard normal rewards, every action
/// admissible, no terminal states.
fn random_mdp(rng: &mut ChaCha8Rng) -> (Mdp, f64) {
    let n = rng.gen_range(2..=6);
    let a = rng.gen_range(2..=4);
    let gamma = rng.gen_range(0.5..0.95);
    let beta = 10f64.powf(rng.gen_range(-1.0..1.0));
    let mut b = MdpBuilder::numbered(n, a, gamma);
    for x in 0..n {
        for u in 0..a {
            let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = w.iter().sum();
            for (y, wy) in w.iter().enumerate() {
                b.add_transition(x, u, y, wy / total);
                let r: f64 = StandardNormal.sample(rng);
                b.set_reward(x, u, y, r);
            }
        }
    }
    (b.build().unwrap(), beta)
}

fn ba_check(mdp: &Mdp, beta: f64, weights: &Weights) -> Result<(f64, f64), String> {
    let sol = ba_solve(
        mdp,
        BetaParam::new(beta).unwrap(),
        weights,
        1e-10,
        MAX_ITERS,
    )
    .map_err(|e| e.to_string())?;
    let worst_drop = sol
        .objective_history
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((worst_drop, sol.fixed_point_residual))
}

fn classic_ba_monotone() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let mdp = default_grid();
    let weights = Weights::uniform_non_terminal(&mdp);
    for beta in SWEEP_BETAS {
        match ba_check(&mdp, beta, &weights) {
            Ok((drop, residual)) => {
                let ok = drop <= 1e-10 && residual <= 1e-8;
                pass &= ok;
                details.push(format!(
                    "{} grid beta = {beta}: largest objective drop {drop:.3e}, fixed-point residual {residual:.3e}",
                    if ok { "ok" } else { "violation" }
                ));
            }
            Err(e) => {
                pass = false;
                details.push(format!("violation: grid beta = {beta}: {e}"));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_905);
    let mut random_failures = 0;
    for i in 0..20 {
        let (mdp, beta) = random_mdp(&mut rng);
        let weights = StateWeights::new(vec![1.0 / mdp.n_states() as f64; mdp.n_states()]).unwrap();
        let shape = format!(
            "{}x{}, gamma {:.3}, beta {beta:.3}",
            mdp.n_states(),
            mdp.n_actions(),
            mdp.discount()
        );
        match ba_check(&mdp, beta, &weights) {
            Ok((drop, residual)) if drop <= 1e-10 && residual <= 1e-8 => {
                details.push(format!(
                    "ok random #{i} ({shape}): drop {drop:.3e}, residual {residual:.3e}"
                ));
            }
            Ok((drop, residual)) => {
                random_failures += 1;
                details.push(format!(
                    "violation random #{i} ({shape}): drop {drop:.3e}, residual {residual:.3e}"
                ));
            }
            Err(e) => {
                random_failures += 1;
                details.push(format!("violation random #{i} ({shape}): {e}"));
            }
        }
    }
    if random_failures > 0 {
        details.push(
            "the p-weighted objective is not an ascent function once future values depend on the prior: \
             the marginal update maximises it with Q_F frozen, while Q_F itself moves with the prior"
                .into(),
        );
    }
    pass &= random_failures == 0;
    Outcome::new(
        pass,
        format!(
            "default grid at 4 betas and 20 random MDPs; {random_failures} random MDPs violate"
        ),
    )
    .with(details)
}

fn modified_ba_admissibility() -> Outcome {
    let mdp = default_grid();
    let weights = Weights::uniform_non_terminal(&mdp);
    let penalty = PenaltyTable::standard(&mdp);
    let mut worst = 0.0f64;
    for beta in SWEEP_BETAS {
        let sol = modified_ba_solve(
            &mdp,
            BetaParam::new(beta).unwrap(),
            &weights,
            &penalty,
            TOL,
            MAX_ITERS,
        )
        .unwrap();
        for x in 0..mdp.n_states() {
            for u in (0..mdp.n_actions()).filter(|&u| !mdp.is_admissible(x, u)) {
                worst = worst.max(sol.policy[(x, u)]);
            }
        }
    }
    Outcome::new(
        worst <= 1e-30,
        format!("largest inadmissible mass over the sweep = {worst:e} (bound 1e-30)"),
    )
}

/// Fixed two-state, two-action MDP without symmetry.
fn two_by_two() -> Mdp {
    let mut b = MdpBuilder::numbered(2, 2, 0.85);
    b.add_transition(0, 0, 0, 0.7).add_transition(0, 0, 1, 0.3);
    b.set_reward(0, 0, 0, 1.0).set_reward(0, 0, 1, -0.5);
    b.add_transition(0, 1, 1, 1.0).set_reward(0, 1, 1, 0.4);
    b.add_transition(1, 0, 0, 0.5).add_transition(1, 0, 1, 0.5);
    b.set_reward(1, 0, 0, 0.8);
    b.add_transition(1, 1, 1, 0.9).add_transition(1, 1, 0, 0.1);
    b.set_reward(1, 1, 1, 0.6).set_reward(1, 1, 0, -1.0);
    b.build().unwrap()
}

fn two_state_policy(a: f64, b: f64) -> Policy {
    Policy::from_rows(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap()
}

/// Grid points `lo, lo + step, ..., hi` clamped to `[0, 1]`.
fn span(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n)
        .map(|i| (lo + i as f64 * step).clamp(0.0, 1.0))
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let ((pass, summary, details), elapsed) = timed(|| {
        let mdp = two_by_two();
        let beta = 2.0;
        let mut details = Vec::new();
        let mut pass = true;

        let prior = Policy::from_rows(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let sol = fe_solve(
            &mdp,
            &prior,
            BetaParam::new(beta).unwrap(),
            1e-12,
            MAX_ITERS,
        )
        .unwrap();
        let mut best = [f64::NEG_INFINITY; 2];
        let fine = span(0.0, 1.0, 1e-3);
        for &a in &fine {
            for &b in &fine {
                let (v, d) = evaluate_policy(&mdp, &two_state_policy(a, b), &prior).unwrap();
                for x in 0..2 {
                    best[x] = best[x].max(v[x] - d[x] / beta);
                }
            }
        }
        for (x, &grid_best) in best.iter().enumerate() {
            let gap = (sol.f[x] - grid_best).abs();
            pass &= gap <= 1e-3;
            details.push(format!(
                "F*({x}) = {:.6}, policy grid {grid_best:.6}, gap {gap:.2e}",
                sol.f[x]
            ));
        }

        // Joint search over (pi, rho): coarse pass, then a fine pass around the best coarse point.
        let p = [0.5, 0.5];
        let weights = StateWeights::new(p.to_vec()).unwrap();
        let objective = |a: f64, b: f64, r: f64| -> f64 {
            let rho = Policy::broadcast(2, &[r, 1.0 - r]);
            match evaluate_policy(&mdp, &two_state_policy(a, b), &rho) {
                Ok((v, d)) => (0..2).map(|x| p[x] * (v[x] - d[x] / beta)).sum(),
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let mut joint = (f64::NEG_INFINITY, 0.0, 0.0, 0.0);
        let coarse = span(0.0, 1.0, 1e-2);
        for &a in &coarse {
            for &b in &coarse {
                for &r in &coarse {
                    let value = objective(a, b, r);
                    if value > joint.0 {
                        joint = (value, a, b, r);
                    }
                }
            }
        }
        let (_, a0, b0, r0) = joint;
        for a in span(a0 - 0.02, a0 + 0.02, 1e-3) {
            for b in span(b0 - 0.02, b0 + 0.02, 1e-3) {
                for r in span(r0 - 0.02, r0 + 0.02, 1e-3) {
                    joint.0 = joint.0.max(objective(a, b, r));
                }
            }
        }
        let ba = ba_solve(
            &mdp,
            BetaParam::new(beta).unwrap(),
            &weights,
            1e-12,
            MAX_ITERS,
        )
        .unwrap();
        let ba_objective = *ba.objective_history.last().unwrap();
        let gap = (ba_objective - joint.0).abs();
        pass &= gap <= 1e-3;
        details.push(format!(
            "BA objective {ba_objective:.6}, joint grid {:.6}, gap {gap:.2e}",
            joint.0
        ));
        (
            pass,
            "fe_solve and ba_solve against brute-force grids on a 2x2 MDP",
            details,
        )
    });
    let pass = pass && elapsed < Duration::from_secs(120);
    Outcome::new(pass, format!("{summary}; {elapsed:?}")).with(details)
}

fn contraction() -> Outcome {
    let mdp = default_grid();
    let prior = uniform_policy(&mdp);
    let gamma = mdp.discount();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let beta = BetaParam::new(SWEEP_BETAS[i % SWEEP_BETAS.len()]).unwrap();
        let mut draw = || {
            ValueTable(
                (0..mdp.n_states())
                    .map(|_| rng.gen_range(-20.0..20.0))
                    .collect(),
            )
        };
        let (f1, f2) = (draw(), draw());
        let b1 = fe_backup(&mdp, &prior, beta, &f1).unwrap();
        let b2 = fe_backup(&mdp, &prior, beta, &f2).unwrap();
        worst = worst.max(b1.sup_distance(&b2) - gamma * f1.sup_distance(&f2));
    }
    Outcome::new(
        worst <= 1e-12,
        format!("max of ‖B F1 - B F2‖ - gamma‖F1 - F2‖ over 100 pairs = {worst:.3e}"),
    )
}

fn monte_carlo() -> Outcome {
    let mdp = default_grid();
    let prior = uniform_policy(&mdp);
    let (_, gamma_star) = exact_values(&mdp);
    let soft = fe_solve(&mdp, &prior, BetaParam::new(5.0).unwrap(), TOL, MAX_ITERS)
        .unwrap()
        .policy;
    let mut pass = true;
    let mut details = Vec::new();
    for (name, pi) in [("exact", &gamma_star), ("beta = 5", &soft)] {
        let (v, _) = evaluate_policy(&mdp, pi, &prior).unwrap();
        let mc = simulate_rollouts(&mdp, pi, 0, 200, 100_000, 7).unwrap();
        let z = (mc.mean - v[0]).abs() / mc.std_error;
        pass &= z <= 3.0;
        details.push(format!(
            "{name}: analytic {:.5}, rollouts {:.5} ± {:.5}, z = {z:.2}",
            v[0], mc.mean, mc.std_error
        ));
    }
    Outcome::new(
        pass,
        "1e5 rollouts, horizon 200, seed 7, within 3 standard errors",
    )
    .with(details)
}

fn abstraction() -> Outcome {
    let mdp = default_grid();
    let rows = sweep_rows(&[Algorithm::Mba]);
    let info: Vec<f64> = rows
        .iter()
        .map(|r| r.summary().map_or(f64::NAN, |s| s.mutual_info))
        .collect();
    let monotone = non_decreasing(&info, 0.0);

    let weights = Weights::uniform_non_terminal(&mdp);
    let sol = modified_ba_solve(
        &mdp,
        BetaParam::new(SWEEP_BETAS[0]).unwrap(),
        &weights,
        &PenaltyTable::standard(&mdp),
        TOL,
        MAX_ITERS,
    )
    .unwrap();
    let live: Vec<usize> = (0..mdp.n_states())
        .filter(|&x| !mdp.is_terminal(x))
        .collect();
    let mut counts = vec![0usize; mdp.n_actions()];
    for &x in &live {
        counts[sol.policy.mode(x)] += 1;
    }
    let (top, &count) = counts
        .iter()
        .enumerate()
        .max_by_key(|&(u, &c)| (c, std::cmp::Reverse(u)))
        .unwrap();
    let share = count as f64 / live.len() as f64;
    let pass = monotone && share >= 0.5;
    Outcome::new(
        pass,
        format!(
            "I(X;U) over the sweep {info:.4?} non-decreasing: {monotone}; at beta = 0.05 `{}` is the mode in {count}/{} non-terminal states",
            mdp.action_labels()[top],
            live.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("exact baseline", exact_baseline),
        ("large-beta recovery", large_beta_recovery),
        ("small-beta prior copying", small_beta_copying),
        ("value trend over beta", table_trend),
        ("classic BA monotonicity", classic_ba_monotone),
        ("modified BA admissibility", modified_ba_admissibility),
        ("brute-force oracle agreement", oracle_equivalence),
        ("free-energy contraction", contraction),
        ("Monte Carlo consistency", monte_carlo),
        ("abstraction emergence", abstraction),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name}: {}", i + 1, outcome.summary);
        for line in &outcome.details {
            println!("        {line}");
        }
        failed += usize::from(!outcome.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
