use alloc_bandit::init::init_stats;
use alloc_bandit::stats::pearson;
use alloc_bandit::{halving_init, init_budget, run_modified, seeding, Executor, PolicyOptions, ProblemInstance};

#[test]
fn lower_bound_is_below_truth_on_every_run() {
    let nus = [0.01, 0.05, 0.1, 0.25, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 5.0, 100.0];
    for s in init_stats(&nus, 20_000, 21, &Executor::default()) {
        assert_eq!(s.bound_violations, 0, "nu={}", s.nu);
    }
}

#[test]
fn duration_grows_with_log_inverse_difficulty() {
    let js: Vec<f64> = (1..=10).map(f64::from).collect();
    let nus: Vec<f64> = js.iter().map(|&j| 0.5_f64.powf(j)).collect();
    let stats = init_stats(&nus, 20_000, 22, &Executor::default());
    let steps: Vec<f64> = stats.iter().map(|s| s.mean_steps).collect();
    let r = pearson(&js, &steps);
    assert!(r > 0.99, "correlation {r}, steps {steps:?}");
}

#[test]
fn single_run_is_reproducible() {
    let a = halving_init(0.3, &mut seeding::stream(5));
    let b = halving_init(0.3, &mut seeding::stream(5));
    assert_eq!(a, b);
}

#[test]
fn modified_run_respects_budget_and_schedule() {
    let instance = ProblemInstance::from_finite(&[0.05, 0.4, 0.6, 3.0], 400, 0).unwrap();
    for seed in 0..20 {
        let trace = run_modified(&instance, &PolicyOptions::with_seed(seed)).unwrap();
        for (i, step) in trace.steps.iter().enumerate() {
            assert!(step.alloc.total() <= 1.0 + 1e-9, "seed {seed} t={}", i + 1);
        }
        let records = &trace.meta.init_records;
        assert_eq!(records.len(), 4);
        for r in records {
            assert_eq!(r.start_step, r.job as u64 + 1);
            assert!(r.lower_bound < instance.nu(r.job));
            for (s, &m) in r.consumption.iter().enumerate() {
                let t = r.start_step as usize + s;
                assert!(trace.steps[t - 1].alloc.0[r.job] >= m);
            }
        }
        // initializer consumption alone never exceeds the offset schedule
        for t in 1..=12u64 {
            let used: f64 = records
                .iter()
                .filter_map(|r| r.consumption.get((t as i64 - r.start_step as i64) as usize).filter(|_| t >= r.start_step))
                .sum();
            assert!(used <= init_budget(t, 4) + 1e-15);
        }
    }
}
