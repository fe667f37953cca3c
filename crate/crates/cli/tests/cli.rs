use std::path::Path;
use std::process::{Command, Output};

use reentrant_sched::{fixed_priority, simulate, Class, Params, State};
use reentrant_sched_cli::suites::{default_kernel, kernel_decomposition_suite, lemma1_suite};
use reentrant_sched_cli::table::Table;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reentrant-sched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_table(path: &Path) -> Table {
    Table::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixed_priority_runs_end_with_empty_primaries() {
    let dir = tempfile::tempdir().unwrap();
    for policy in ["fp1", "fp2"] {
        let out = dir.path().join(format!("{policy}.csv"));
        let res = run(&["simulate", "--policy", policy, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let t = read_table(&out);
        assert_eq!(
            t.header,
            ["time", "q1p", "q1r", "q2p", "q2r", "u1", "u2", "running_cost"]
        );
        assert_eq!(*t.numbers("q1p").unwrap().last().unwrap(), 0.0);
        assert_eq!(*t.numbers("q2p").unwrap().last().unwrap(), 0.0);
        // every row of the last stretch holds both primary queues empty
        let q1 = t.numbers("q1p").unwrap();
        let q2 = t.numbers("q2p").unwrap();
        assert!(q1.iter().rev().take(10).chain(q2.iter().rev().take(10)).all(|v| *v == 0.0));
    }
}

#[test]
fn zero_state_writes_single_row() {
    let res = run(&["simulate", "--set", "q1p=0", "--set", "q2p=0"]);
    assert!(res.status.success());
    let t = Table::parse(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.numbers("running_cost").unwrap(), vec![0.0]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = run(&["simulate", "--policy", "switch-time:2:1.5", "--set", "samples=200"]);
    let b = run(&["simulate", "--policy", "switch-time:2:1.5", "--set", "samples=200"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = run(&["asymptotics", "--set", "epsilons=0.01,10"]);
    let d = run(&["asymptotics", "--set", "epsilons=0.01,10"]);
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn breakpoints_round_trip_through_csv() {
    let res = run(&["simulate", "--policy", "fp2", "--set", "q1r=0.7"]);
    assert!(res.status.success());
    let t = Table::parse(&String::from_utf8(res.stdout).unwrap()).unwrap();
    let p = Params::reference();
    let s0 = State::new(2.0, 0.7, 2.0, 0.0).unwrap();
    let horizon = reentrant_sched::optimal::default_horizon(&s0, &p);
    let traj = simulate(&fixed_priority(Class::Two), &s0, &p, horizon).unwrap();
    let times = t.numbers("time").unwrap();
    let cols: Vec<Vec<f64>> = ["q1p", "q1r", "q2p", "q2r"].iter().map(|c| t.numbers(c).unwrap()).collect();
    for (time, state, _) in traj.breakpoints() {
        let row = times.iter().position(|x| *x == time).expect("breakpoint time is printed exactly");
        let parsed = [cols[0][row], cols[1][row], cols[2][row], cols[3][row]];
        for (a, b) in parsed.iter().zip(state.components()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# slow second class\ngamma2 = 0.5\nhorizon = 10\nsamples = 10\n").unwrap();
    let res = run(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "horizon=5"]);
    assert!(res.status.success());
    let t = Table::parse(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert_eq!(*t.numbers("time").unwrap().last().unwrap(), 5.0);
}

#[test]
fn invalid_field_is_named_and_fails() {
    let res = run(&["simulate", "--set", "gamma1=-1"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("return rates"));
    let res = run(&["simulate", "--set", "mu=fast"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("`mu`"));
    let res = run(&["simulate", "--out", "/proc/no-such-dir/x.csv"]);
    assert!(!res.status.success());
}

#[test]
fn gap_table_with_horizon_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gaps.csv");
    let res = run(&[
        "gap-table",
        "--grid-points",
        "400",
        "--set",
        "sweep.gamma2=0.5",
        "--horizon-double-check",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let t = read_table(&out);
    assert_eq!(t.rows.len(), 1);
    assert!(t.numbers("horizon_change").unwrap()[0] < 1e-9);
    let fp2 = t.numbers("fp2_gap").unwrap()[0];
    assert!((fp2 - 16.01).abs() < 0.5, "{fp2}");
    assert!(t.numbers("fp1_gap").unwrap()[0] >= 0.0);
}

#[test]
fn trajectories_write_one_file_per_start() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "trajectories",
        "--grid-points",
        "300",
        "--set",
        "sweep.q1p=0.5,3",
        "--set",
        "sweep.q2p=3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read_table(&dir.path().join("summary.csv"));
    assert_eq!(summary.rows.len(), 2);
    assert!(summary.numbers("switch_count").unwrap().iter().all(|s| *s <= 1.0));
    assert_eq!(summary.rows[1][6], "1>2");
    let path = read_table(&dir.path().join("trajectory_001.csv"));
    assert!(path.rows.len() >= 301);
    assert_eq!(path.numbers("time").unwrap()[0], 0.0);
}

#[test]
fn corrupted_kernel_fails_lemma1_suite() {
    let good = lemma1_suite(7, default_kernel);
    assert!(good.passed, "{good:?}");
    let flipped = lemma1_suite(7, |p: &Params, c: Class, tau: f64| -default_kernel(p, c, tau));
    assert!(!flipped.passed);
    assert!(flipped.worst > 0.0);
}

#[test]
fn seeded_suites_repeat_exactly() {
    assert_eq!(kernel_decomposition_suite(3, 20), kernel_decomposition_suite(3, 20));
    assert_eq!(lemma1_suite(3, default_kernel), lemma1_suite(3, default_kernel));
}

#[test]
fn verify_passes_and_reports_every_suite() {
    let res = run(&["verify", "--seed", "11", "--set", "lp_instances=4"]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(res.status.success(), "{text}");
    assert_eq!(text.lines().last(), Some("PASS"));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 12);
}
