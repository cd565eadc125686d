//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use primgraph::benchmarks::{
    pendulum_suite, quadruped_analog_suite, suite_by_name, BenchmarkSuite, QuadrupedConstants, SUITE_NAMES,
};
use primgraph::dynamics::{simulate_flow, BoxBounds, IntegratorConfig, State};
use primgraph::graph::{EdgeClass, MotionPrimitiveGraph};
use primgraph::oracle::{brute_force_roa, classify_state, safety_oracle, BruteForceOptions, OracleConfig, RoAClass};
use primgraph::planner::{build_lookup_table, execute_sequence, naive_execute, plan_path, ExecConfig, Outcome};
use primgraph::primitives::{cubic_profile, MotionPrimitive, SetpointKind};
use primgraph::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> (bool, String);

fn main() {
    let criteria: [(u32, &str, f64, Check); 9] = [
        (1, "setpoint consistency", 10.0, setpoint_consistency),
        (2, "certified flows stay safe and converge", 300.0, accepted_flows_extend),
        (3, "oracle soundness and conservativeness", 600.0, soundness),
        (4, "quadruped-analog topology", 300.0, topology),
        (5, "graph mending", 120.0, mending),
        (6, "naive vs planned execution", 120.0, naive_vs_planned),
        (7, "cubic profile residuals", 60.0, cubic_residuals),
        (8, "build determinism", 300.0, determinism),
        (9, "edge class invariants", 300.0, class_invariants),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let started = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let secs = started.elapsed().as_secs_f64();
        let ok = ok && secs <= budget;
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {detail} ({secs:.1} s, budget {budget:.0} s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

fn suites() -> Vec<BenchmarkSuite> {
    SUITE_NAMES.iter().map(|n| suite_by_name(n).unwrap()).collect()
}

fn setpoint_consistency() -> (bool, String) {
    let cfg = IntegratorConfig::default();
    let (mut worst, mut worst_name, mut count) = (0.0f64, String::new(), 0);
    for s in suites() {
        for p in &s.primitives {
            let probes = match p.setpoint().kind() {
                SetpointKind::Fixed => vec![(0.0, s.oracle.horizon.max(5.0))],
                SetpointKind::Periodic { period } => (0..4).map(|k| (period * k as f64 / 4.0, 3.0 * period)).collect(),
                SetpointKind::Transient { t0, tf } => vec![(t0, tf - t0)],
            };
            for (t0, h) in probes {
                let r = p.consistency_residual(t0, h, &cfg).unwrap();
                count += 1;
                if r > worst {
                    worst = r;
                    worst_name = format!("{}/{}", s.name, p.name());
                }
            }
        }
    }
    (worst <= 1e-4, format!("{count} probes, max residual {worst:.2e} ({worst_name}) <= 1e-4"))
}

struct Case<'a> {
    b: &'a MotionPrimitive,
    x0: State,
    tb: f64,
    horizon: f64,
}

fn graph_cases<'a>(s: &'a BenchmarkSuite, g: &MotionPrimitiveGraph) -> Vec<Case<'a>> {
    let mut out = Vec::new();
    for e in &g.edges {
        let a = s.primitive(&e.from).unwrap();
        let b = s.primitive(&e.to).unwrap();
        for &(ta, tb) in &e.feasible {
            out.push(Case {
                b,
                x0: a.setpoint_at(ta).unwrap(),
                tb,
                horizon: e.horizon,
            });
        }
    }
    out
}

fn grid_points(lo: [f64; 2], hi: [f64; 2], n: usize) -> Vec<State> {
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let f = |d: usize, k: usize| lo[d] + (hi[d] - lo[d]) * k as f64 / (n - 1) as f64;
            pts.push(State::from_vec(vec![f(0, i), f(1, j)]));
        }
    }
    pts
}

/// Continues the closed loop from an accepted case to five horizons (or the end of
/// a transient domain); returns (min margin, terminal distance / r, tail monotone).
fn extend(c: &Case) -> (f64, f64, bool) {
    let sp = c.b.setpoint();
    let mut h = 5.0 * c.horizon;
    if let SetpointKind::Transient { tf, .. } = sp.kind() {
        h = h.min(tf - c.tb);
    }
    let r = c.b.radius();
    if h <= 1e-12 {
        let m = c.b.margin(&c.x0, c.tb).unwrap().value;
        return (m, c.b.roa_distance_clamped(&c.x0, c.tb) / r, true);
    }
    let tr = simulate_flow(c.b.closed_loop(), &c.x0, c.tb, h, &[], &IntegratorConfig::default()).unwrap();
    let mut min_margin = f64::INFINITY;
    let mut tail = Vec::new();
    for (t, x) in tr.iter() {
        let tau = sp.clamp_time(c.tb + t);
        min_margin = min_margin.min(c.b.safety().margin(x, tau).value);
        if t >= 0.8 * h {
            tail.push(c.b.roa_distance_clamped(x, tau));
        }
    }
    let terminal = c.b.roa_distance_clamped(tr.final_state(), c.tb + tr.final_time());
    let monotone = tail.windows(2).all(|w| w[1] <= w[0] + 1e-6);
    (min_margin, terminal / r, monotone)
}

fn accepted_on_grid<'a>(b: &'a MotionPrimitive, pts: &[State], cfg: &OracleConfig) -> Vec<Case<'a>> {
    pts.iter()
        .filter(|x| safety_oracle(b, x, 0.0, cfg).unwrap().accepted)
        .map(|x| Case {
            b,
            x0: x.clone(),
            tb: 0.0,
            horizon: cfg.horizon,
        })
        .collect()
}

fn accepted_flows_extend() -> (bool, String) {
    let all = suites();
    let graphs: Vec<MotionPrimitiveGraph> = all.iter().map(|s| s.build_graph().unwrap()).collect();
    let mut cases: Vec<Case> = Vec::new();
    for (s, g) in all.iter().zip(&graphs) {
        cases.extend(graph_cases(s, g));
    }
    let from_graphs = cases.len();
    let pend = &all[0];
    assert_eq!(pend.name, "pendulum");
    let up = pend.primitive("Up").unwrap();
    cases.extend(accepted_on_grid(up, &grid_points([PI - 0.5, -1.5], [PI + 0.5, 1.5], 41), &pend.oracle));
    let down = pend.primitive("Down").unwrap();
    cases.extend(accepted_on_grid(down, &grid_points([-1.0, -3.0], [1.0, 3.0], 21), &pend.oracle));
    for s in &all[2..] {
        let hold = s.primitive("Hold(0)").unwrap();
        cases.extend(accepted_on_grid(hold, &grid_points([-1.5, -1.0], [1.5, 1.0], 21), &s.oracle));
    }

    let (mut bad, mut min_margin, mut worst_ratio) = (0, f64::INFINITY, 0.0f64);
    for c in &cases {
        let (m, ratio, monotone) = extend(c);
        min_margin = min_margin.min(m);
        worst_ratio = worst_ratio.max(ratio);
        if m < -1e-6 || ratio >= 1.0 || !monotone {
            bad += 1;
        }
    }
    let ok = cases.len() >= 500 && bad == 0;
    (
        ok,
        format!(
            "{} accepted cases ({from_graphs} graph cells), {bad} failures, min margin {min_margin:.3e}, max d/r {worst_ratio:.3e}",
            cases.len()
        ),
    )
}

fn soundness() -> (bool, String) {
    let horizons = [2.5, 5.0, 10.0];
    let mut details = Vec::new();
    let mut ok = true;
    let targets: Vec<(BenchmarkSuite, &str, BoxBounds)> = vec![
        (
            pendulum_suite().unwrap(),
            "Up",
            BoxBounds::new(vec![PI - 0.5, -1.5], vec![PI + 0.5, 1.5]).unwrap(),
        ),
        (
            suite_by_name("double-integrator").unwrap(),
            "Hold(0)",
            BoxBounds::new(vec![-1.5, -1.0], vec![1.5, 1.0]).unwrap(),
        ),
        (
            suite_by_name("double-integrator-boxed").unwrap(),
            "Hold(0)",
            BoxBounds::new(vec![-1.5, -1.0], vec![1.5, 1.0]).unwrap(),
        ),
    ];
    for (s, name, sample_box) in &targets {
        let b = s.primitive(name).unwrap();
        let bf = brute_force_roa(b, 0.0, sample_box, 41, 50.0).unwrap();
        let safe: Vec<bool> = bf.verdicts.iter().map(|v| *v == RoAClass::SafeConvergent).collect();
        let n_safe = safe.iter().filter(|s| **s).count();
        let mut ratios = Vec::new();
        let mut false_accepts = 0;
        for &t in &horizons {
            let cfg = OracleConfig {
                horizon: t,
                ..s.oracle
            };
            let mut hits = 0;
            for (p, is_safe) in bf.grid.iter().zip(&safe) {
                let v = safety_oracle(b, &State::from_column_slice(p), 0.0, &cfg).unwrap();
                if v.accepted {
                    if *is_safe {
                        hits += 1;
                    } else {
                        false_accepts += 1;
                    }
                }
            }
            ratios.push(hits as f64 / n_safe.max(1) as f64);
        }
        let monotone = ratios.windows(2).all(|w| w[1] >= w[0]);
        ok &= false_accepts == 0 && monotone && n_safe > 0;
        details.push(format!(
            "{}/{name}: {n_safe}/{} brute-force safe, {false_accepts} false accepts, ratios {}",
            s.name,
            bf.grid.len(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" <= ")
        ));
    }
    (ok, details.join("; "))
}

/// Peak `|ė|` of `ë = -ωn² e - 2ωn ė` from `(e0, v0)`.
fn peak_speed_error(e0: f64, v0: f64, wn: f64) -> f64 {
    let s = v0 + wn * e0;
    let mut peak = v0.abs();
    if s != 0.0 {
        let t = (s + v0) / (wn * s);
        if t > 0.0 {
            peak = peak.max(((v0 - wn * s * t) * (-wn * t).exp()).abs());
        }
    }
    peak
}

fn walk_state(a: f64, w: f64, t: f64) -> (f64, f64) {
    (a * (w * t).sin(), a * w * (w * t).cos())
}

fn topology() -> (bool, String) {
    let s = quadruped_analog_suite().unwrap();
    let g = s.build_graph().unwrap();
    let class = |a: &str, b: &str| g.edge(a, b).map(|e| e.class);
    let mut problems = Vec::new();
    let mut checks = 0;
    let mut expect = |cond: bool, what: &str| {
        checks += 1;
        if !cond {
            problems.push(what.to_string());
        }
    };
    expect(class("Stand", "Lie") == Some(EdgeClass::One), "Stand->Lie class 1");
    expect(class("Lie", "Stand") == Some(EdgeClass::One), "Lie->Stand class 1");
    expect(class("Stand", "Walk(in place)") == Some(EdgeClass::One), "Stand->Walk(in place) class 1");
    let walks = ["Walk(in place)", "Walk(slow)", "Walk(medium)", "Walk(fast)"];
    for i in 0..walks.len() {
        for j in 0..walks.len() {
            if i == j {
                continue;
            }
            let c = class(walks[i], walks[j]);
            if i.abs_diff(j) == 1 {
                expect(c == Some(EdgeClass::Two), &format!("{}->{} class 2", walks[i], walks[j]));
            } else {
                expect(c.is_none(), &format!("no {}->{}", walks[i], walks[j]));
            }
        }
    }
    expect(g.successors("Jump") == vec!["Land"], "Jump successors exactly {Land}");
    expect(g.edge("Land", "Stand").is_some(), "Land->Stand present");
    expect(g.edge("Lie", "Walk(fast)").is_none(), "no Lie->Walk(fast)");

    // Closed-form cross-check of the speed ladder: with exact feedforward the
    // horizontal error obeys a critically damped linear ODE.
    let c = QuadrupedConstants::default();
    assert!((c.kp - c.kd * c.kd / 4.0).abs() < 1e-12, "suite gains are no longer critically damped");
    let (wn, w) = (c.kd / 2.0, 2.0 * PI / c.walk_period);
    let safe = |e0: f64, v0: f64| peak_speed_error(e0, v0, wn) <= c.slip_limit;
    let borderline = |e0: f64, v0: f64| (peak_speed_error(e0, v0, wn) - c.slip_limit).abs() < 2e-3;
    let (mut mismatches, mut fine_problems) = (0, 0);
    for (i, (_, ai)) in c.walk_amplitudes.iter().enumerate() {
        for (j, (_, aj)) in c.walk_amplitudes.iter().enumerate() {
            if i == j {
                continue;
            }
            let stored: BTreeSet<(u64, u64)> = g
                .edge(walks[i], walks[j])
                .map(|e| e.feasible.iter().map(|(ta, tb)| (ta.to_bits(), tb.to_bits())).collect())
                .unwrap_or_default();
            let n = s.grid_policy.periodic_n;
            for ka in 0..n {
                for kb in 0..n {
                    let (ta, tb) = (ka as f64 / n as f64 * c.walk_period, kb as f64 / n as f64 * c.walk_period);
                    let (pa, va) = walk_state(*ai, w, ta);
                    let (pb, vb) = walk_state(*aj, w, tb);
                    let (e0, v0) = (pa - pb, va - vb);
                    if !borderline(e0, v0) && safe(e0, v0) != stored.contains(&(ta.to_bits(), tb.to_bits())) {
                        mismatches += 1;
                    }
                }
            }
            // Fine 64 x 64 phase grid: adjacency alone decides existence and Class 2.
            let m = 64;
            let mut covered = 0;
            let mut any = false;
            for ka in 0..m {
                let ta = ka as f64 / m as f64;
                let hit = (0..m).any(|kb| {
                    let (pa, va) = walk_state(*ai, w, ta);
                    let (pb, vb) = walk_state(*aj, w, kb as f64 / m as f64);
                    safe(pa - pb, va - vb)
                });
                covered += hit as usize;
                any |= hit;
            }
            let adjacent = i.abs_diff(j) == 1;
            if adjacent != any || (adjacent && covered == m) {
                fine_problems += 1;
            }
        }
    }
    expect(mismatches == 0, "16-grid walk cells match the closed form");
    expect(fine_problems == 0, "64-grid closed form agrees on edge existence and class");

    // Brute force: the Lie pose is outside the Walk(fast) safe RoA at every phase.
    let lie = s.primitive("Lie").unwrap().setpoint_at(0.0).unwrap();
    let fast = s.primitive("Walk(fast)").unwrap();
    let opts = BruteForceOptions::new(5.0 * s.oracle.horizon);
    let lie_ok = (0..64).all(|k| classify_state(fast, &lie, k as f64 / 64.0, &opts).unwrap() != RoAClass::SafeConvergent);
    expect(lie_ok, "brute force rejects Lie pose under Walk(fast)");

    let n2 = g.edges.iter().filter(|e| e.class == EdgeClass::Two).count();
    let detail = if problems.is_empty() {
        format!("{} edges ({n2} class 2), {checks} structural and cross-checks hold", g.edges.len())
    } else {
        format!("violated: {}", problems.join(", "))
    };
    (problems.is_empty(), detail)
}

fn mending() -> (bool, String) {
    let full = pendulum_suite().unwrap();
    let cut = full.clone().without(&["SwingUp"]).unwrap();
    let g_cut = cut.build_graph().unwrap();
    let unreachable = matches!(plan_path(&g_cut, "Down", "Up"), Err(Error::Unreachable { .. }));
    let up = full.primitive("Up").unwrap();
    let down_state = full.primitive("Down").unwrap().setpoint_at(0.0).unwrap();
    let bf = classify_state(up, &down_state, 0.0, &BruteForceOptions::new(50.0)).unwrap();
    let g = full.build_graph().unwrap();
    let path = plan_path(&g, "Down", "Up").map(|p| p.nodes).unwrap_or_default();
    let ok = unreachable && bf != RoAClass::SafeConvergent && path == ["Down", "SwingUp", "Up"];
    (
        ok,
        format!(
            "without SwingUp: Up unreachable = {unreachable} (brute force of Down under Up: {bf:?}); with SwingUp: {}",
            path.join(" -> ")
        ),
    )
}

fn naive_vs_planned() -> (bool, String) {
    let s = quadruped_analog_suite().unwrap();
    let g = s.build_graph().unwrap();
    let table = build_lookup_table(&g);
    let cfg = ExecConfig::default();
    let planned = || execute_sequence(&s.primitives, &g, &table, &s.scenario, &s.scenario_start, &cfg).unwrap();
    let naive = || naive_execute(&s.primitives, &s.scenario, &s.scenario_start, &cfg).unwrap();
    let (p1, p2) = (planned().summary(), planned().summary());
    let (n1, n2) = (naive().summary(), naive().summary());
    let deterministic = serde_json::to_string(&p1).unwrap() == serde_json::to_string(&p2).unwrap()
        && serde_json::to_string(&n1).unwrap() == serde_json::to_string(&n2).unwrap();
    let planned_ok = p1.outcome == Outcome::CompletedSafe && p1.min_margin >= -1e-6;
    let ladder = ["Lie", "Stand", "Walk(in place)", "Walk(slow)", "Walk(medium)", "Walk(fast)"];
    let ladder_ok = p1.executed.iter().take(6).map(String::as_str).eq(ladder);
    let first = n1.switches.first();
    let naive_ok = match (&n1.outcome, first) {
        (Outcome::SafetyViolated { t, primitive, .. }, Some(sw)) => {
            sw.from == "Lie" && sw.to == "Walk(fast)" && primitive == "Walk(fast)" && (*t - sw.t).abs() < 1e-9
        }
        _ => false,
    };
    let ok = deterministic && planned_ok && ladder_ok && naive_ok;
    (
        ok,
        format!(
            "planned {} (min margin {:.3e}, {} switches), naive {} ({}), deterministic = {deterministic}",
            p1.outcome.name(),
            p1.min_margin,
            p1.switches.len(),
            n1.outcome.name(),
            match &n1.outcome {
                Outcome::SafetyViolated { t, constraint, primitive } => format!("`{constraint}` in {primitive} at t = {t}"),
                other => other.name().to_string(),
            }
        ),
    )
}

fn cubic_residuals() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=4);
        let mut v = || (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (q0, qf, qd0, qdf) = (v(), v(), v(), v());
        let theta = rng.gen_range(0.1..5.0);
        let c = cubic_profile(&q0, &qf, &qd0, &qdf, theta).unwrap();
        for (i, k) in c.coefficients().iter().enumerate() {
            let pos = |t: f64| k[0] + k[1] * t + k[2] * t * t + k[3] * t * t * t;
            let vel = |t: f64| k[1] + 2.0 * k[2] * t + 3.0 * k[3] * t * t;
            for r in [pos(0.0) - q0[i], pos(theta) - qf[i], vel(0.0) - qd0[i], vel(theta) - qdf[i]] {
                worst = worst.max(r.abs());
            }
        }
    }
    let smooth = cubic_profile(&[0.0], &[1.0], &[0.0], &[0.0], 1.0).unwrap();
    let expected = [0.0, 0.0, 3.0, -2.0];
    let smooth_err = smooth.coefficients()[0]
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (
        worst < 1e-9 && smooth_err <= 1e-12,
        format!("max residual {worst:.2e} < 1e-9 over 1000 instances; smoothstep error {smooth_err:.1e} <= 1e-12"),
    )
}

fn determinism() -> (bool, String) {
    let exe = env!("CARGO_BIN_EXE_primgraph");
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for suite in ["quadruped-analog", "pendulum"] {
        let mut outputs = Vec::new();
        for (run, threads) in [("a", None), ("b", None), ("c", Some("8"))] {
            let out = dir.path().join(run);
            let mut cmd = Command::new(exe);
            cmd.args(["build", "--suite", suite, "--out"]).arg(&out);
            if let Some(t) = threads {
                cmd.args(["--threads", t]);
            }
            let st = cmd.output().unwrap();
            assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
            let json = std::fs::read(out.join(format!("{suite}.graph.json"))).unwrap();
            let dot = std::fs::read(out.join(format!("{suite}.dot"))).unwrap();
            outputs.push((json, dot));
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(suite);
        }
    }
    (
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "graph JSON and DOT byte-identical across 3 builds (one with --threads 8) for 2 suites".into()
        } else {
            format!("outputs differ for {mismatched:?}")
        },
    )
}

fn class_invariants() -> (bool, String) {
    let (mut edges, mut cells, mut bad) = (0, 0, Vec::new());
    for s in suites() {
        let g = s.build_graph().unwrap();
        for e in &g.edges {
            edges += 1;
            let exit = &g.meta.grids[&e.from].exit.points;
            let covered: BTreeSet<u64> = e.feasible.iter().map(|(ta, _)| ta.to_bits()).collect();
            let full = exit.iter().all(|t| covered.contains(&t.to_bits()));
            if full != (e.class == EdgeClass::One) {
                bad.push(format!("{} -> {} class", e.from, e.to));
            }
            let a = s.primitive(&e.from).unwrap();
            let b = s.primitive(&e.to).unwrap();
            let cfg = OracleConfig {
                horizon: e.horizon,
                ..s.oracle
            };
            for &(ta, tb) in &e.feasible {
                cells += 1;
                if !safety_oracle(b, &a.setpoint_at(ta).unwrap(), tb, &cfg).unwrap().accepted {
                    bad.push(format!("{} -> {} at ({ta}, {tb})", e.from, e.to));
                }
            }
        }
    }
    (
        bad.is_empty(),
        if bad.is_empty() {
            format!("{edges} edges: class matches t_A coverage; {cells} feasible cells re-verified")
        } else {
            format!("violations: {}", bad.join(", "))
        },
    )
}
