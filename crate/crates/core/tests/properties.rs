use proptest::prelude::*;
use stabilab::bounds::{
    analytic_gen_error, discounted_sum, gen_lower, gen_upper, hrs_uniform_bound, nonconvex_step_envelope,
    BoundClass, BoundParams, HrsCase,
};
use stabilab::engine::{closed_form_final, relative_deviation, run, run_final, run_paired, StepSizePlan};
use stabilab::problems::{sample_dataset, Dataset, LossClass, ProblemInstance};
use stabilab::schedule::{
    check_counting_lemma, perturbation_indicator, realize, ScheduleKind, ScheduleSpec,
};
use stabilab::stability::{check_growth_recursion, schedule_weighted_bound, stability_bound};

fn kind_strategy() -> impl Strategy<Value = ScheduleKind> {
    prop::sample::select(vec![
        ScheduleKind::FullBatch,
        ScheduleKind::RoundRobin,
        ScheduleKind::RandomReshuffle,
        ScheduleKind::SingleShuffle,
        ScheduleKind::UniformRandom,
    ])
}

/// `(kind, n, m, T, seed)` with `1 ≤ m ≤ n` and `m = n` for full batch.
fn spec_strategy(max_n: usize, max_t: usize) -> impl Strategy<Value = ScheduleSpec> {
    (kind_strategy(), 1..=max_n, 0..=max_t, any::<u64>(), any::<prop::sample::Index>()).prop_map(
        |(kind, n, horizon, seed, idx)| {
            let m = if kind == ScheduleKind::FullBatch { n } else { 1 + idx.index(n) };
            ScheduleSpec::new(kind, n, m, horizon, seed)
        },
    )
}

/// One of the four constructions with a step plan inside its oracle regime.
fn instance_and_plan(max_d: usize, max_t: usize) -> impl Strategy<Value = (ProblemInstance, StepSizePlan)> {
    (0..4usize, 1..=max_d, 0..=max_t, 0.05f64..1.0, 0.2f64..3.0, 0.1f64..2.0).prop_map(
        |(family, d, horizon, c, beta, lip)| match family {
            0 => (ProblemInstance::linear(d), StepSizePlan::constant(c, horizon)),
            1 => (
                ProblemInstance::convex_huber(d.max(2), lip, beta).unwrap(),
                StepSizePlan::constant(c / beta, horizon),
            ),
            2 => (
                ProblemInstance::quadratic_nonconvex(d, beta, None).unwrap(),
                StepSizePlan::inverse_t(c / beta, horizon),
            ),
            _ => {
                let gamma = beta / (1.0 + (beta - 0.2));
                let d = d.max(((beta * beta - gamma * gamma) / (3.0 * gamma * gamma)).ceil() as usize);
                (
                    ProblemInstance::quadratic_strongly_convex(d, lip, beta, gamma).unwrap(),
                    StepSizePlan::constant(c / (beta + gamma), horizon),
                )
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn counting_lemma_holds_for_every_realization(spec in spec_strategy(40, 60)) {
        let sched = realize(&spec).unwrap();
        let verdict = check_counting_lemma(&sched);
        prop_assert!(verdict.passed, "{:?}", verdict.first_violation);
        for t in 1..=spec.horizon {
            let count = (1..=spec.n).filter(|&i| perturbation_indicator(&sched, t, i).unwrap()).count();
            prop_assert_eq!(count, spec.m);
        }
    }

    #[test]
    fn reshuffled_epochs_are_permutations(n in 1usize..30, m_idx: prop::sample::Index, seed: u64, epochs in 1usize..4) {
        let m = 1 + m_idx.index(n);
        let per_epoch = n / m;
        let spec = ScheduleSpec::new(ScheduleKind::RandomReshuffle, n, m, epochs * per_epoch, seed);
        let sched = realize(&spec).unwrap();
        let rows: Vec<Vec<usize>> = sched.rows().map(<[usize]>::to_vec).collect();
        for epoch in rows.chunks(per_epoch) {
            let mut seen: Vec<usize> = epoch.concat();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), per_epoch * m);
        }
    }

    #[test]
    fn run_matches_closed_form(
        (inst, plan) in instance_and_plan(6, 60),
        spec_seed: u64,
        kind in kind_strategy(),
        n in 1usize..20,
        m_idx: prop::sample::Index,
        data_seed: u64,
    ) {
        let m = if kind == ScheduleKind::FullBatch { n } else { 1 + m_idx.index(n) };
        let sched = realize(&ScheduleSpec::new(kind, n, m, plan.horizon, spec_seed)).unwrap();
        let data = sample_dataset(&inst, n, data_seed).unwrap();
        let w = run_final(&inst, &data, &sched, &plan, inst.w1()).unwrap();
        let closed = closed_form_final(&inst, &data, &sched, &plan, inst.w1()).unwrap();
        prop_assert!(relative_deviation(&w, &closed) <= 1e-9);
    }

    #[test]
    fn runs_are_reproducible(
        (inst, plan) in instance_and_plan(4, 30),
        seed: u64,
        n in 1usize..12,
    ) {
        let sched = realize(&ScheduleSpec::new(ScheduleKind::UniformRandom, n, 1, plan.horizon, seed)).unwrap();
        let data = sample_dataset(&inst, n, seed).unwrap();
        let a = run(&inst, &data, &sched, &plan, inst.w1()).unwrap();
        let b = run(&inst, &data, &sched, &plan, inst.w1()).unwrap();
        prop_assert_eq!(a.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        b.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn growth_recursion_and_stability_bound(
        (inst, plan) in instance_and_plan(4, 40),
        spec in spec_strategy(10, 0),
        seeds: (u64, u64),
    ) {
        let n = spec.n;
        let spec = ScheduleSpec { horizon: plan.horizon, ..spec };
        let sched = realize(&spec).unwrap();
        let data = sample_dataset(&inst, n, seeds.0).unwrap();
        let repl = sample_dataset(&inst, n, seeds.1).unwrap();
        let pt = run_paired(&inst, &data, &repl, &sched, &plan, inst.w1()).unwrap();
        let class = inst.natural_class();
        let verdict = check_growth_recursion(&pt, class, &inst).unwrap();
        prop_assert!(verdict.passed(), "{:?}", verdict.violations.first());

        let params = BoundParams::from_instance(&inst);
        let bound = stability_bound(class, &params, &plan, n, spec.m).unwrap();
        let weighted = schedule_weighted_bound(class, &params, &plan, &sched).unwrap();
        prop_assert!((bound - weighted).abs() <= 1e-12 * bound.max(1e-300));
        for m in [1, (n / 2).max(1), n] {
            prop_assert_eq!(stability_bound(class, &params, &plan, n, m).unwrap(), bound);
        }
        let measured = stabilab::stability::on_average_stability(&pt).final_on_average;
        prop_assert!(measured <= bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn geometric_discounting_identity(eta in 1e-3f64..1.0, rate in 0.0f64..0.99, horizon in 0usize..400) {
        let q = 1.0 - rate;
        let etas = vec![eta; horizon];
        let direct = discounted_sum(&etas, |_| q);
        let closed = if rate == 0.0 { eta * horizon as f64 } else { eta * (1.0 - q.powi(horizon as i32)) / rate };
        prop_assert!((direct - closed).abs() <= 1e-10 * closed.max(1e-300));
    }

    #[test]
    fn nonconvex_step_envelope_dominates(c in 1e-3f64..3.0, beta in 1e-2f64..5.0, horizon in 1usize..3000) {
        let plan = StepSizePlan::inverse_t(c, horizon);
        let lhs = discounted_sum(&plan.etas(), |e| 1.0 + beta * e);
        prop_assert!(lhs <= nonconvex_step_envelope(c, beta, horizon) * (1.0 + 1e-12));
    }

    #[test]
    fn convex_sandwich(d in 2usize..16, lip in 0.1f64..3.0, beta in 0.1f64..4.0, c in 0.01f64..1.0, horizon in 0usize..300, n in 1usize..100) {
        let inst = ProblemInstance::convex_huber(d, lip, beta).unwrap();
        let plan = StepSizePlan::constant(c / beta, horizon);
        let params = BoundParams::from_instance(&inst);
        let lower = gen_lower(BoundClass::Convex, &params, &plan, n).unwrap();
        let oracle = analytic_gen_error(&inst, &plan, n).unwrap();
        let upper = gen_upper(BoundClass::Convex, &params, &plan, n).unwrap().value;
        prop_assert!(lower <= oracle * (1.0 + 1e-12) && oracle <= upper * (1.0 + 1e-12), "{lower} {oracle} {upper}");
    }

    #[test]
    fn nonconvex_oracle_above_lower(d in 1usize..8, beta in 0.1f64..4.0, c in 0.01f64..=1.0, horizon in 0usize..500, n in 1usize..100) {
        let inst = ProblemInstance::quadratic_nonconvex(d, beta, None).unwrap();
        let plan = StepSizePlan::inverse_t(c / beta, horizon);
        let params = BoundParams::from_instance(&inst);
        let lower = gen_lower(BoundClass::NonconvexSmooth, &params, &plan, n).unwrap();
        let oracle = analytic_gen_error(&inst, &plan, n).unwrap();
        prop_assert!(lower <= oracle * (1.0 + 1e-12), "{lower} {oracle}");
        prop_assert!(gen_upper(BoundClass::NonconvexSmooth, &params, &plan, n).is_err());
    }

    #[test]
    fn strongly_convex_sandwich(
        lip in 0.1f64..3.0,
        gamma in 0.1f64..2.0,
        ratio in 1.0f64..3.0,
        c in 0.05f64..=1.0,
        horizon in 1usize..400,
        n in 1usize..100,
    ) {
        let beta = gamma * ratio;
        let d = (((beta * beta - gamma * gamma) / (3.0 * gamma * gamma)).ceil() as usize).max(1);
        let inst = ProblemInstance::quadratic_strongly_convex(d, lip, beta, gamma).unwrap();
        let plan = StepSizePlan::constant(c / (beta + gamma), horizon);
        let params = BoundParams::from_instance(&inst);
        let oracle = analytic_gen_error(&inst, &plan, n).unwrap();
        let upper = gen_upper(BoundClass::StronglyConvex, &params, &plan, n).unwrap();
        prop_assert!(oracle <= upper.value * (1.0 + 1e-12));
        prop_assert!(upper.value <= upper.secondary.unwrap() * (1.0 + 1e-12));
        if let Ok(lower) = gen_lower(BoundClass::StronglyConvex, &params, &plan, n) {
            prop_assert!(lower <= oracle * (1.0 + 1e-12), "{lower} {oracle}");
        }
    }

    #[test]
    fn uniform_stability_constant_is_flat_in_n(n in 1usize..2000, d in 1usize..20, epochs in 1usize..5, scale in 0.01f64..2.0) {
        let plan = StepSizePlan::epoch_restart(scale, n, epochs * n);
        let lip = (d as f64).sqrt();
        let linear = hrs_uniform_bound(&HrsCase::Linear { d, epochs, eta1: plan.eta(1) }).unwrap();
        let convex = hrs_uniform_bound(&HrsCase::convex_epochs(lip, &plan, n, epochs)).unwrap();
        prop_assert!((linear - 2.0 * (epochs * d) as f64 * scale).abs() <= 1e-12 * linear);
        prop_assert!((linear - convex).abs() <= 1e-12 * linear);
    }

    #[test]
    fn dataset_csv_round_trip(d in 2usize..6, n in 1usize..20, seed: u64) {
        let inst = ProblemInstance::convex_huber(d, 1.3, 0.7).unwrap();
        let data = sample_dataset(&inst, n, seed).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), seed).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn step_plan_json_round_trip(scale in 1e-3f64..10.0, period in 1usize..50, horizon in 0usize..200) {
        for plan in [
            StepSizePlan::constant(scale, horizon),
            StepSizePlan::inverse_t(scale, horizon),
            StepSizePlan::epoch_restart(scale, period, horizon),
        ] {
            let json = serde_json::to_string(&plan).unwrap();
            let back: StepSizePlan = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, plan);
        }
    }
}

#[test]
fn strongly_convex_regime_recursion_uses_path_bound() {
    let inst = ProblemInstance::quadratic_strongly_convex(4, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(inst.recursion_constant(LossClass::StronglyConvex), 4.0);
}

#[test]
fn single_coordinate_huber_is_rejected() {
    let err = ProblemInstance::convex_huber(1, 1.0, 1.0).unwrap_err().to_string();
    assert!(err.contains("d >= 2"), "{err}");
}
