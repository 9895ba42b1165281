use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tugwar_core::boards::{random_connected, triangle};
use tugwar_core::simulator::{estimate_value, Strategy};
use tugwar_core::solvers::value_iteration_from;
use tugwar_core::space::{build_complex, solve_u_eps, SpaceSpec};
use tugwar_core::{solve_f0_exact, Direction, IterOptions};

#[test]
fn triangle_fixed_points_lie_in_the_family() {
    let g = triangle();
    let opts = IterOptions {
        tol: 1e-11,
        ..IterOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let init: Vec<f64> = (0..g.n())
            .map(|x| g.terminal_payoff(x).unwrap_or_else(|| rng.gen_range(-4.0..4.0)))
            .collect();
        let rep = value_iteration_from(&g, Direction::Below, &opts, init).unwrap();
        assert!(rep.converged);
        let (u1, u2) = (rep.values()[1], rep.values()[2]);
        let a = u1 + 1.0;
        assert!((u2 - (a + 1.0)).abs() < 1e-8, "({u1}, {u2})");
        assert!((-1.0 - 1e-8..=1.0 + 1e-8).contains(&a), "a = {a}");
    }
}

#[test]
fn greedy_play_matches_solver_value() {
    let mut checked = 0;
    for seed in 0..20 {
        let g = random_connected(25, 0.12, 100 + seed);
        let u = solve_f0_exact(&g).unwrap();
        let s1 = Strategy::GreedyMax { field: u.values().to_vec() };
        let s2 = Strategy::GreedyMin { field: u.values().to_vec() };
        let x0 = g.non_terminals().next().unwrap();
        let est = estimate_value(&g, &s1, &s2, x0, 4000, seed, 10_000).unwrap();
        if est.termination_rate < 1.0 {
            continue;
        }
        checked += 1;
        assert!(
            (est.mean - u.values()[x0]).abs() <= 3.0 * est.std_err + 1e-12,
            "seed {seed}: {est:?} vs {}",
            u.values()[x0]
        );
    }
    assert!(checked >= 10, "only {checked} boards terminated a.s.");
}

#[test]
fn backtracking_guarantees_the_value() {
    for seed in 0..5 {
        let g = random_connected(30, 0.1, 300 + seed);
        let u = solve_f0_exact(&g).unwrap();
        let field = u.values().to_vec();
        let osc = |x: usize| u.field.oscillation(&g, x);
        let x0 = g
            .non_terminals()
            .max_by(|&a, &b| osc(a).total_cmp(&osc(b)))
            .unwrap();
        let delta0 = osc(x0);
        if delta0 <= 0.0 {
            continue;
        }
        let s2 = Strategy::backtracking(&g, field.clone(), delta0).unwrap();
        let est = estimate_value(&g, &Strategy::RandomNeighbor, &s2, x0, 10_000, seed, 100_000).unwrap();
        assert_eq!(est.termination_rate, 1.0);
        assert!(est.mean <= field[x0] + 3.0 * est.std_err + 1e-12, "{est:?} vs {}", field[x0]);
    }
}

#[test]
fn pull_toward_keeps_its_payoff_bound() {
    let eps = 0.1;
    for (spec, f) in [
        (SpaceSpec::Segment { length: 1.0, spacing: 0.02 }, 0.0),
        (SpaceSpec::Segment { length: 1.0, spacing: 0.02 }, 1.0),
        (SpaceSpec::EuclideanBox { width: 1.0, height: 0.6, spacing: 0.02 }, 0.5),
    ] {
        let c = build_complex(&spec, eps).unwrap();
        let big_f = c.eval(|p| p.x);
        let fv = vec![f; c.n()];
        let g = c.game(&big_f, &fv).unwrap();
        let u = solve_u_eps(&c, &big_f, &fv, &IterOptions::default()).unwrap();
        let lip = c.lip_terminal(&big_f);
        let diam = c.diameter();
        let y = *c
            .terminals()
            .iter()
            .max_by(|&&a, &&b| big_f[a].total_cmp(&big_f[b]))
            .unwrap();
        let s1 = Strategy::pull_toward(&g, &[y]).unwrap();
        let s2 = Strategy::GreedyMin { field: u.values().to_vec() };
        for x0 in [c.nearest(0.3, 0.3), c.nearest(0.5, 0.1)] {
            if c.is_terminal(x0) {
                continue;
            }
            let est = estimate_value(&g, &s1, &s2, x0, 10_000, 5, 1_000_000).unwrap();
            assert_eq!(est.termination_rate, 1.0);
            let bound = big_f[y]
                - 2.0 * eps * lip
                - (lip + 2.0 * (eps + diam) * f.abs()) * c.d_eps(x0, y)
                - 3.0 * est.std_err;
            assert!(est.mean >= bound, "{est:?} < {bound}");
        }
    }
}
