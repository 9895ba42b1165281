//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release --test acceptance`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tugwar_core::boards::{
    comb_board, comb_reduced_value, comb_remark_bound, cubic_lengths, random_connected, triangle,
};
use tugwar_core::continuum::{
    aronsson_angle, aronsson_g_xy, cap_data, harmonic_measure_ladder, numeric_delta_inf,
    quadratic_comparison_check, unit_disk,
};
use tugwar_core::scenario::{pullup_termination, z2_integer_defect, SimParams};
use tugwar_core::simulator::{drift_check, simulate, Functional, Strategy};
use tugwar_core::space::{
    build_complex, convergence_study, default_spacing, favored_value, mcshane_whitney,
    solve_u_eps, Favored, SpaceSpec,
};
use tugwar_core::solvers::bracket;
use tugwar_core::{solve_f0_exact, value_iteration, Direction, IterOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tight(tol: f64) -> IterOptions {
    IterOptions {
        tol,
        ..IterOptions::default()
    }
}

fn c1_triangle() -> Outcome {
    let t = Instant::now();
    let g = triangle();
    let (lo, hi, _) = bracket(&g, &tight(1e-10)).unwrap();
    let (l, h) = (lo.values(), hi.values());
    let ok_vals = (l[1] + 2.0).abs() <= 1e-6
        && l[2].abs() <= 1e-6
        && h[1].abs() <= 1e-6
        && (h[2] - 2.0).abs() <= 1e-6;
    let ok_res = lo.residual_sup <= 1e-8 && hi.residual_sup <= 1e-8;
    let el = t.elapsed();
    outcome(
        ok_vals && ok_res && el < Duration::from_secs(1),
        format!(
            "below ({:.9}, {:.9}) above ({:.9}, {:.9}) residuals {:.1e}/{:.1e} in {:?}",
            l[1], l[2], h[1], h[2], lo.residual_sup, hi.residual_sup, el
        ),
    )
}

fn c2_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut worst_res = 0.0f64;
    for k in 0..100 {
        let n = rng.gen_range(5..=50);
        let p = rng.gen_range(0.02..0.2);
        let g = random_connected(n, p, 1000 + k);
        let exact = solve_f0_exact(&g).unwrap();
        let it = value_iteration(&g, Direction::Below, &tight(1e-12)).unwrap();
        for x in 0..g.n() {
            worst = worst.max((exact.values()[x] - it.values()[x]).abs());
        }
        worst_res = worst_res.max(exact.residual_sup).max(it.residual_sup);
    }
    let el = t.elapsed();
    outcome(
        worst <= 1e-8 && worst_res <= 1e-8 && el < Duration::from_secs(30),
        format!("max disagreement {worst:.2e}, max residual {worst_res:.2e} in {el:?}"),
    )
}

fn c3_z2() -> Outcome {
    let defect = z2_integer_defect(20, 10);
    outcome(defect == 0, format!("max |Δ∞u| over the 41x21 interior = {defect}"))
}

fn c4_pullup() -> Outcome {
    let t = Instant::now();
    let sim = SimParams {
        trials: 100_000,
        seed: 4,
        max_steps: 100_000,
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [0u64, 2, 6] {
        let (freq, se, _) = pullup_termination(18, k, 6, &sim).unwrap();
        let bound = 2.0 / (k as f64 + 2.0);
        ok &= freq <= bound + 3.0 * se;
        parts.push(format!("k={k}: {freq:.4} (se {se:.4}) vs {bound:.4}"));
    }
    let el = t.elapsed();
    outcome(
        ok && el < Duration::from_secs(120),
        format!("{} in {el:?}", parts.join("; ")),
    )
}

fn c5_comb() -> Outcome {
    let t = Instant::now();
    let opts = tight(1e-12);
    let vals: Vec<f64> = [20, 40, 80]
        .iter()
        .map(|&w| {
            let s = comb_reduced_value(&cubic_lengths(3, w), &opts).unwrap();
            assert!(s.converged);
            s.base[0]
        })
        .collect();
    let monotone = vals.windows(2).all(|p| p[1] >= p[0] - 1e-10);
    let in_band = (1.85..=2.0 + 1e-9).contains(&vals[2]);
    let bounds: Vec<f64> = [1, 5, 10].iter().map(|&k| comb_remark_bound(3, k)).collect();
    let bounds_ok = bounds.iter().all(|b| b.is_finite() && *b >= vals[2]);
    let el = t.elapsed();
    outcome(
        monotone && in_band && bounds_ok && el < Duration::from_secs(300),
        format!(
            "u_I(0,0) at W=20/40/80: {:.6}/{:.6}/{:.6}; bounds k=1/5/10: {:.4}/{:.4}/{:.4} in {el:?}",
            vals[0], vals[1], vals[2], bounds[0], bounds[1], bounds[2]
        ),
    )
}

fn c6_d_eps() -> Outcome {
    let spaces = [
        (SpaceSpec::Segment { length: 2.0, spacing: 0.02 }, 0.1),
        (SpaceSpec::EuclideanBall { radius: 1.0, spacing: 0.03 }, 0.15),
        (SpaceSpec::EuclideanBox { width: 1.5, height: 1.0, spacing: 0.03 }, 0.15),
        (SpaceSpec::Annulus { inner: 0.4, outer: 1.0, spacing: 0.03 }, 0.15),
        (SpaceSpec::Comb { lengths: vec![2, 3, 4], spacing: 0.05 }, 0.2),
        (SpaceSpec::LShape { spacing: 0.02 }, 0.1),
        (
            SpaceSpec::Custom {
                points: (0..60).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect(),
                terminals: vec![0, 1],
                spacing: 0.05,
            },
            0.3,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pairs = 0;
    let mut bad_bounds = 0;
    let mut bad_triangle = 0;
    for (spec, eps) in &spaces {
        let c = build_complex(spec, *eps).unwrap();
        for _ in 0..10_000 / spaces.len() + 1 {
            let (i, j, k) = (rng.gen_range(0..c.n()), rng.gen_range(0..c.n()), rng.gen_range(0..c.n()));
            let d = c.dist(i, j);
            let de = c.d_eps(i, j);
            // one rounding of slack for the products ε·steps and d + ε
            let ulp = 1e-12 * (d + eps);
            if !(d <= de + ulp && de <= d + eps + ulp) {
                bad_bounds += 1;
            }
            if c.d_eps_steps(i, k) > c.d_eps_steps(i, j) + c.d_eps_steps(j, k) {
                bad_triangle += 1;
            }
            pairs += 1;
        }
    }
    outcome(
        pairs >= 10_000 && bad_bounds == 0 && bad_triangle == 0,
        format!("{pairs} pairs over {} spaces: {bad_bounds} bound and {bad_triangle} triangle violations", spaces.len()),
    )
}

fn c7_favored() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let cases: [(&str, Box<dyn Fn(f64) -> SpaceSpec>, f64); 2] = [
        ("segment", Box::new(|e| SpaceSpec::Segment { length: 1.0, spacing: default_spacing(e) }), 0.1),
        ("disk", Box::new(|e| SpaceSpec::EuclideanBall { radius: 1.0, spacing: default_spacing(e) }), 0.16),
    ];
    for (name, make, eps0) in cases {
        let mut gaps = Vec::new();
        let mut viol = f64::MIN;
        let opts = tight(1e-9);
        for eps in [eps0, eps0 / 2.0] {
            let c = build_complex(&make(eps), eps).unwrap();
            let big_f = if name == "segment" { c.eval(|p| p.x) } else { c.eval(|p| cap_data(p, 0.4)) };
            let f = vec![1.0; c.n()];
            let u = solve_u_eps(&c, &big_f, &f, &opts).unwrap();
            let v = favored_value(&c, &big_f, &f, Favored::II, &opts).unwrap();
            let w = favored_value(&c, &big_f, &f, Favored::I, &opts).unwrap();
            ok &= u.converged && v.converged && w.converged;
            for i in 0..c.n() {
                viol = viol
                    .max(v.field.values[i] - u.values()[i])
                    .max(u.values()[i] - w.field.values[i]);
            }
            gaps.push((0..c.n()).map(|i| w.field.values[i] - v.field.values[i]).fold(0.0, f64::max));
        }
        ok &= viol <= 2.0 * opts.tol && gaps[1] <= gaps[0];
        parts.push(format!("{name}: gap {:.4} -> {:.4}, worst violation {viol:.1e}", gaps[0], gaps[1]));
    }
    outcome(ok, parts.join("; "))
}

fn c8_convergence() -> Outcome {
    let t = Instant::now();
    let opts = tight(1e-10);
    let mut ok = true;
    let mut seg = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let c = build_complex(&SpaceSpec::Segment { length: 1.0, spacing: default_spacing(eps) }, eps).unwrap();
        let u = solve_u_eps(&c, &c.eval(|p| p.x), &vec![0.0; c.n()], &opts).unwrap();
        let diff = (0..c.n()).map(|i| (u.values()[i] - c.points[i].x).abs()).fold(0.0, f64::max);
        ok &= u.converged && diff <= 2.0 * eps;
        seg.push(format!("{diff:.4}/{:.3}", 2.0 * eps));
    }
    let mut eval_at = Vec::new();
    for i in -9..=9 {
        for j in -9..=9 {
            let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
            if x.hypot(y) < 0.85 {
                eval_at.push((x, y));
            }
        }
    }
    let spec = SpaceSpec::EuclideanBall { radius: 1.0, spacing: default_spacing(0.4) };
    let study = convergence_study(
        &spec,
        &|p| cap_data(p, PI / 4.0),
        &|_| 0.0,
        &[0.4, 0.2, 0.1, 0.05],
        &eval_at,
        &tight(1e-9),
    )
    .unwrap();
    ok &= study.order >= 0.8 && study.rows.iter().all(|r| r.converged);
    let diffs: Vec<String> = study.rows.iter().skip(1).map(|r| format!("{:.4}", r.sup_diff)).collect();
    let el = t.elapsed();
    outcome(
        ok && el < Duration::from_secs(600),
        format!(
            "segment sup|u-x| vs 2ε: {}; disk diffs {} order {:.3} (R² {:.3}) in {el:?}",
            seg.join(", "),
            diffs.join(", "),
            study.order,
            study.r_squared
        ),
    )
}

fn c9_hmeasure() -> Outcome {
    let t = Instant::now();
    let res = harmonic_measure_ladder(&[0.4, 0.2, 0.1, 0.05], 0.02, 0.08, &tight(1e-9)).unwrap();
    let el = t.elapsed();
    let u0: Vec<String> = res.entries.iter().map(|e| format!("{:.4}", e.u0)).collect();
    outcome(
        (0.21..=0.45).contains(&res.beta)
            && res.r_squared >= 0.97
            && res.entries.iter().all(|e| e.converged)
            && el <= Duration::from_secs(900),
        format!(
            "u(0) = {}; β = {:.4} ± {:.4}, R² = {:.4} in {el:?}",
            u0.join(", "),
            res.beta,
            res.beta_std_err,
            res.r_squared
        ),
    )
}

fn c10_aronsson() -> Outcome {
    let mut sym = 0.0f64;
    for k in 0..1000 {
        let th = -PI + 2.0 * PI * (k as f64 + 0.5) / 1000.0;
        sym = sym
            .max((aronsson_angle(th + PI) + aronsson_angle(th)).abs())
            .max((aronsson_angle(-th) - aronsson_angle(th)).abs());
    }
    let a0 = aronsson_angle(0.0);
    let g = |x: f64, y: f64| aronsson_g_xy(x, y).unwrap();
    let hs = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let mut decreasing = true;
    let mut worst_at_1e3 = 0.0f64;
    for k in 0..20 {
        let th = 0.2 + 1.0 * k as f64 / 19.0;
        let r = 0.6 + 0.05 * k as f64;
        let p = (r * th.cos(), r * th.sin());
        let errs: Vec<f64> = hs.iter().map(|&h| numeric_delta_inf(&g, p, h).unwrap().abs()).collect();
        decreasing &= errs.windows(2).all(|w| w[1] < w[0]);
        worst_at_1e3 = worst_at_1e3.max(numeric_delta_inf(&g, p, 1e-3).unwrap().abs());
    }
    outcome(
        (a0 - 1.0).abs() <= 1e-12 && sym <= 1e-12 && decreasing && worst_at_1e3 <= 1e-2,
        format!(
            "a(0) = {a0}, symmetry defect {sym:.1e}, decreasing under h/2: {decreasing}, max |Δ∞G| at h=1e-3: {worst_at_1e3:.2e}"
        ),
    )
}

fn c11_mcshane_whitney() -> Outcome {
    let eps = 0.08;
    let c = unit_disk(0.02, eps).unwrap();
    let all: Vec<usize> = (0..c.n()).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [0.4, 0.05] {
        let big_f = c.eval(|p| cap_data(p, delta));
        let u = solve_u_eps(&c, &big_f, &vec![0.0; c.n()], &tight(1e-9)).unwrap();
        let (lo, hi) = mcshane_whitney(&c, &big_f).unwrap();
        let below = (0..c.n()).map(|i| lo.values[i] - u.values()[i]).fold(f64::MIN, f64::max);
        let above = (0..c.n()).map(|i| u.values()[i] - hi.values[i]).fold(f64::MIN, f64::max);
        let ly = c.lip_terminal(&big_f);
        let (l_lo, l_hi) = (c.lip_on(&all, &lo.values), c.lip_on(&all, &hi.values));
        let lip_ok = (l_lo - ly).abs() <= 0.1 * ly && (l_hi - ly).abs() <= 0.1 * ly;
        ok &= below <= 3.0 * eps && above <= 3.0 * eps && lip_ok;
        parts.push(format!(
            "δ={delta}: lower-u {below:.3}, u-upper {above:.3} (3ε = {:.2}); Lip_Y {ly:.3}, lower {l_lo:.3}, upper {l_hi:.3}",
            3.0 * eps
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c12_comparison() -> Outcome {
    let eps = 0.08;
    let c = unit_disk(0.02, eps).unwrap();
    let big_f = c.eval(|p| cap_data(p, 0.4));
    let opts = tight(1e-9);
    let mut parts = Vec::new();
    let mut ok = true;
    let mut zero_field = Vec::new();
    for fval in [0.0, 1.0] {
        let f = vec![fval; c.n()];
        let u = solve_u_eps(&c, &big_f, &f, &opts).unwrap();
        let g: Vec<f64> = f.iter().map(|v| -2.0 * v).collect();
        let rep = quadratic_comparison_check(&c, u.values(), &g, 200, 0.5, 5.0, 7).unwrap();
        ok &= rep.pass;
        parts.push(format!("f≡{fval}: margin {:.4} ({})", rep.worst_margin, if rep.pass { "PASS" } else { "FAIL" }));
        if fval == 0.0 {
            zero_field = u.values().to_vec();
        }
    }
    let centre = c.nearest(0.1, 0.2);
    for i in 0..c.n() {
        let d = c.dist(centre, i);
        if d < 3.0 * eps && !c.is_terminal(i) {
            zero_field[i] += 10.0 * eps * (1.0 - d / (3.0 * eps));
        }
    }
    let rep = quadratic_comparison_check(&c, &zero_field, &vec![0.0; c.n()], 200, 0.5, 5.0, 7).unwrap();
    ok &= !rep.pass;
    parts.push(format!("bumped: margin {:.4} ({})", rep.worst_margin, if rep.pass { "PASS" } else { "FAIL" }));
    outcome(ok, format!("tolerance 5ε = {:.2}; {}", 5.0 * eps, parts.join("; ")))
}

fn c13_drift() -> Outcome {
    let trials = 10_000;
    let mut parts = Vec::new();
    let mut ok = true;

    let g = random_connected(40, 0.08, 13);
    let u = solve_f0_exact(&g).unwrap();
    let field = u.values().to_vec();
    let x0 = g
        .non_terminals()
        .max_by(|&a, &b| u.field.oscillation(&g, a).total_cmp(&u.field.oscillation(&g, b)))
        .unwrap();
    let delta0 = u.field.oscillation(&g, x0);
    let s2 = Strategy::backtracking(&g, field.clone(), delta0).unwrap();
    let ts = simulate(&g, &Strategy::RandomNeighbor, &s2, x0, trials, 13, 100_000).unwrap();
    let rep = drift_check(&g, &ts, &Functional::Backtracking { field: field.clone(), delta0 }).unwrap();
    ok &= rep.pass;
    parts.push(format!("backtracking m_n: {:.2e} ± {:.1e}", rep.mean, rep.std_err));

    let board = comb_board(&cubic_lengths(3, 20)).unwrap();
    let budget = 1.0;
    let s1 = Strategy::comb_down_left_right(&board, budget).unwrap();
    let start = board.index(0, 0);
    let ts = simulate(&board.graph, &s1, &Strategy::RandomNeighbor, start, trials, 14, 1_000_000).unwrap();
    let rep = drift_check(
        &board.graph,
        &ts,
        &Functional::CombM { potential: board.height_potential(), budget },
    )
    .unwrap();
    ok &= rep.pass;
    parts.push(format!("comb M_t: {:.2e} ± {:.1e}", rep.mean, rep.std_err));

    let g = random_connected(30, 0.1, 15);
    let u = solve_f0_exact(&g).unwrap();
    let field = u.values().to_vec();
    let x0 = g.non_terminals().next().unwrap();
    let ts = simulate(
        &g,
        &Strategy::GreedyMax { field: field.clone() },
        &Strategy::GreedyMin { field: field.clone() },
        x0,
        trials,
        15,
        100_000,
    )
    .unwrap();
    let rep = drift_check(&g, &ts, &Functional::Greedy { field }).unwrap();
    ok &= rep.pass;
    parts.push(format!("greedy u(x_n): {:.2e} ± {:.1e}", rep.mean, rep.std_err));
    outcome(ok, format!("{trials} trials each; {}", parts.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("triangle fixed points", c1_triangle),
        ("exact vs iterative oracle", c2_oracle),
        ("Z² strip exact harmonic", c3_z2),
        ("pull-up square termination", c4_pullup),
        ("comb value", c5_comb),
        ("d^ε audit", c6_d_eps),
        ("favored sandwich", c7_favored),
        ("convergence ladder", c8_convergence),
        ("cap harmonic measure exponent", c9_hmeasure),
        ("Aronsson oracle", c10_aronsson),
        ("McShane–Whitney bracketing", c11_mcshane_whitney),
        ("quadratic comparison checker", c12_comparison),
        ("supermartingale suite", c13_drift),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("{:02} {name}", i + 1);
        if let Some(f) = &filter {
            if !label.contains(f.as_str()) {
                continue;
            }
        }
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} {label}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
