use proptest::prelude::*;

use reentrant_sched::asymptotics::breakdown;
use reentrant_sched::kernel::{cost_via_kernel, default_tau_grid, kernel_k, lemma1_check};
use reentrant_sched::model::total_class_work;
use reentrant_sched::optimal::{
    best_single_switch, pontryagin_certificate, solve_optimal, SolveConfig,
};
use reentrant_sched::{fixed_priority, simulate, switch_at_time, switch_on_curve, Class, Params, Policy, State};

fn params() -> impl Strategy<Value = Params> {
    (0.05f64..0.85, 0.02f64..0.9, 0.1f64..5.0, 0.1f64..5.0, 0.5f64..3.0).prop_map(
        |(r1, frac, g1, g2, mu)| {
            let r2 = r1 + frac * (0.95 - r1);
            Params::new(r1, r2, g1, g2, mu).unwrap()
        },
    )
}

fn state() -> impl Strategy<Value = State> {
    (0.0f64..5.0, 0.0f64..2.0, 0.0f64..5.0, 0.0f64..2.0)
        .prop_map(|(a, b, c, d)| State::new(a, b, c, d).unwrap())
}

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(fixed_priority(Class::One)),
        Just(fixed_priority(Class::Two)),
        (0.0f64..10.0, any::<bool>()).prop_map(|(t, one)| {
            switch_at_time(if one { Class::One } else { Class::Two }, t)
        }),
        (0.0f64..5.0, any::<bool>()).prop_map(|(h, one)| {
            switch_on_curve(if one { Class::One } else { Class::Two }, h)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn work_drains_at_service_rate(p in params(), s0 in state(), pol in policy(), t in 0.5f64..30.0) {
        let traj = simulate(&pol, &s0, &p, t).unwrap();
        for c in Class::BOTH {
            let drop = total_class_work(&s0, c) - total_class_work(&traj.final_state, c);
            let served = (1.0 - p.r(c)) * p.mu() * traj.control_integral(c, 0.0, t);
            prop_assert!(drop >= -1e-12);
            prop_assert!((drop - served).abs() <= 1e-10 * served.max(total_class_work(&s0, c)).max(1e-300) + 1e-13,
                "class {c}: drop {drop} served {served}");
        }
        for seg in &traj.segments {
            for v in seg.state.components() {
                prop_assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn kernel_decomposition_matches_direct_cost(p in params(), s0 in state(), pol in policy(), t in 0.5f64..30.0) {
        let traj = simulate(&pol, &s0, &p, t).unwrap();
        let dec = cost_via_kernel(&traj, &s0, &p, t).unwrap();
        prop_assert!((dec.total - dec.constant_part - dec.control_part).abs() <= 1e-10 * dec.total.abs().max(1.0));
        let direct = traj.accumulated_cost;
        prop_assert!((dec.total - direct).abs() <= 1e-8 * direct.abs().max(1e-12),
            "kernel {} direct {}", dec.total, direct);
    }

    #[test]
    fn kernel_derivative_negative(p in params(), tau in 0.0f64..200.0) {
        for c in Class::BOTH {
            prop_assert!(kernel_k(&p, c, tau).unwrap() < 0.0);
        }
    }

    #[test]
    fn kernels_nonpositive_and_ordered(p in params()) {
        let rep = lemma1_check(&p, &default_tau_grid(&p, 2000));
        prop_assert!(rep.all_nonpositive);
        if let Some(d) = rep.dominance_holds {
            prop_assert!(d, "worst K1 - K2 = {}", rep.worst_dominance);
        }
    }

    #[test]
    fn switch_at_zero_is_other_fixed_priority(p in params(), s0 in state()) {
        for c in Class::BOTH {
            let a = simulate(&switch_at_time(c, 0.0), &s0, &p, 10.0).unwrap();
            let b = simulate(&fixed_priority(c.other()), &s0, &p, 10.0).unwrap();
            prop_assert_eq!(a.segments, b.segments);
        }
    }

    #[test]
    fn stage_b_length_bounded(p in params(), log_eps in -3.0f64..3.0) {
        let eps = 10f64.powf(log_eps);
        for i in Class::BOTH {
            let b = breakdown(&p, i, eps).unwrap();
            let x = eps / p.mu();
            prop_assert!(b.t_i > 0.0 && b.delta_j > 0.0);
            prop_assert!(b.delta_j / x <= 1.0 / ((1.0 - p.r(i.other())) * (1.0 - b.a_i)) * (1.0 + 1e-9));
            prop_assert!((b.total - b.cost_stage_a - b.cost_stage_b).abs() <= 1e-15 * b.total);
        }
    }

    #[test]
    fn breakdown_matches_simulator(p in params(), log_eps in -3.0f64..2.0) {
        let eps = 10f64.powf(log_eps);
        let s0 = State::symmetric(eps).unwrap();
        for i in Class::BOTH {
            let b = breakdown(&p, i, eps).unwrap();
            let horizon = 2.0 * (b.t_i + b.delta_j);
            let sim = simulate(&fixed_priority(i), &s0, &p, horizon).unwrap().accumulated_cost;
            prop_assert!((b.total - sim).abs() <= 1e-6 * sim, "closed form {} simulated {}", b.total, sim);
        }
    }

    #[test]
    fn certificate_coefficient_is_kernel(p in params(), horizon in 0.1f64..50.0) {
        let cfg = SolveConfig::new(horizon, 10).unwrap();
        let cert = pontryagin_certificate(&p, &cfg);
        let times: Vec<f64> = (0..=200).map(|k| horizon * k as f64 / 200.0).collect();
        prop_assert!(cert.kernel_identity_residual(&times) <= 1e-12 * horizon.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimal_cost_is_sandwiched(p in params(), s0 in state()) {
        prop_assume!(!s0.is_zero());
        let cfg = SolveConfig::auto(&s0, &p, 200).unwrap();
        let sol = solve_optimal(&p, &s0, &cfg).unwrap();
        let t = cfg.horizon;
        let fp1 = simulate(&fixed_priority(Class::One), &s0, &p, t).unwrap().accumulated_cost;
        let fp2 = simulate(&fixed_priority(Class::Two), &s0, &p, t).unwrap().accumulated_cost;
        let single = best_single_switch(&p, &s0, &cfg).unwrap().cost;
        let scale = fp1.max(1.0);
        prop_assert!(sol.cost >= 0.0);
        // the piecewise-constant optimum can only trail the continuous-time
        // policies by the grid's first-order discretization error
        let bound = fp1.min(fp2).min(single);
        let allowance = 0.2 / cfg.grid_points as f64;
        let cost_scale = bound + 1e-2 * s0.total_work() * t;
        prop_assert!(sol.lp_objective <= bound + allowance * cost_scale,
            "lp {} best policy {}", sol.lp_objective, bound);
        prop_assert!((sol.lp_objective - sol.cost).abs() <= 1e-7 * scale);
    }

    #[test]
    fn refinement_does_not_increase_cost(p in params(), s0 in state()) {
        prop_assume!(!s0.is_zero());
        let coarse = SolveConfig::auto(&s0, &p, 100).unwrap();
        let fine = SolveConfig::auto(&s0, &p, 200).unwrap();
        let a = solve_optimal(&p, &s0, &coarse).unwrap();
        let b = solve_optimal(&p, &s0, &fine).unwrap();
        let scale = a.cost.max(1.0);
        prop_assert!(b.lp_objective <= a.lp_objective + 1e-9 * scale,
            "n = 100: {}, n = 200: {}", a.lp_objective, b.lp_objective);
    }
}
