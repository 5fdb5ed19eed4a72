//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! The phase-diagram check runs on the reduced grid by default. Set
//! `POOLDESIGN_FULL_GRID=1` to also run the full 25 x 21 grid (about 40
//! minutes on a single core).

use nalgebra::DMatrix;
use pooldesign::decode::infected_set;
use pooldesign::design::DEFAULT_DISJUNCT_BUDGET;
use pooldesign::formats::read_design;
use pooldesign::simulation::{range_grid, simulate_trial, trial_rng, PhaseConfig};
use pooldesign::*;
use rand::Rng;
use std::process::{Command, ExitCode};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn large() -> PoolingDesign {
    construct_design(DesignParams::new(31, 7).unwrap())
}

fn construction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("design.json");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_pooldesign"))
        .args(["design", "--q", "31", "--s", "7", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    if !status.status.success() {
        return outcome(false, format!("design command failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let d = read_design(std::fs::File::open(&path).unwrap()).unwrap();
    let dense = d.normalized_dense();
    let entries_ok = dense.iter().all(|&v| v == 0.0 || v == 0.125);
    let cols = d.binary().column_weights();
    let rows = d.binary().row_weights();
    let lambda = max_column_coherence(d.binary());
    let pass = d.m() == 248
        && d.n() == 961
        && entries_ok
        && cols.iter().all(|&w| w == 8)
        && rows.iter().all(|&w| w == 31)
        && lambda == 1
        && elapsed < 1.0;
    outcome(
        pass,
        format!("M={} N={} entries 1/8: {entries_ok} col weight 8, row weight 31, lambda={lambda}, {elapsed:.3}s", d.m(), d.n()),
    )
}

fn disjunctness() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for (q, s) in [(2, 1), (3, 2), (5, 2), (5, 4), (7, 3)] {
        let d = construct_design(DesignParams::new(q, s).unwrap());
        if verify_disjunct(d.binary(), s as usize, DEFAULT_DISJUNCT_BUDGET, false) != Ok(true) {
            bad.push(format!("({q},{s})"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(bad.is_empty() && elapsed < 60.0, format!("not disjunct: [{}], {elapsed:.2}s", bad.join(" ")))
}

fn noiseless_recovery() -> Outcome {
    let d = large();
    let a = d.normalized();
    let signal = SignalModel::new(100.0, 7.0 / 961.0).unwrap();
    let clean = CorruptionModel::new(0.0, CorruptionKind::Mixed).unwrap();
    let mut worst = 0.0f64;
    let mut ok = 0;
    for t in 0..100 {
        let rec = simulate_trial(&a, signal, clean, &SolverOptions::default(), &mut trial_rng(3, 0, 0, t));
        let rel = rec.error_l1 / rec.signal_l1();
        worst = worst.max(rel);
        ok += usize::from(rec.signal.sparsity() == 7 && rel <= 1e-4);
    }
    outcome(ok == 100, format!("{ok}/100 within 1e-4, worst relative error {worst:.2e}"))
}

fn error_bound() -> Outcome {
    let d = large();
    let a = d.normalized();
    let cert = certificate(&d).unwrap();
    let s = 7.0;
    let closed = 2.0 * (s + 1.0 + s * (2.0 * s + 3.0) * cert.pinv_norm);
    let signal = SignalModel::new(100.0, 7.0 / 961.0).unwrap();
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for (k, pe) in [0.01, 0.02].into_iter().enumerate() {
        let noise = CorruptionModel::new(pe, CorruptionKind::Mixed).unwrap();
        for t in 0..100 {
            let rec = simulate_trial(&a, signal, noise, &SolverOptions::default(), &mut trial_rng(4, 0, k, t));
            let (e1, x1) = (rec.noise_l1(), rec.signal_l1());
            if rec.error_l1 > closed * e1 + 1e-6 * x1 {
                violations += 1;
            }
            if e1 > 0.0 {
                worst_ratio = worst_ratio.max(rec.error_l1 / e1);
            }
        }
    }
    let same_c = (closed - cert.bound_constant).abs() <= 1e-9 * closed;
    outcome(
        violations == 0 && same_c,
        format!("C={closed:.6}, {violations}/200 violations, largest ||x-x#||/||e|| = {worst_ratio:.3}"),
    )
}

/// Empirical probabilities keyed by (p, pe).
fn grid_probability(diagram: &PhaseDiagram) -> Vec<(f64, f64, f64)> {
    diagram.cells().map(|(p, pe, _, prob)| (p, pe, prob)).collect()
}

fn region_claims(cells: &[(f64, f64, f64)], with_c: bool) -> (bool, String) {
    let eps = 1e-12;
    let check = |name: &str, sel: &dyn Fn(f64, f64) -> bool, ok: &dyn Fn(f64) -> bool| {
        let chosen: Vec<_> = cells.iter().filter(|(p, pe, _)| sel(*p, *pe)).collect();
        let bad: Vec<String> =
            chosen.iter().filter(|c| !ok(c.2)).map(|(p, pe, pr)| format!("({p},{pe})={pr}")).collect();
        (chosen.len(), bad, name.to_string())
    };
    let mut parts = vec![
        check("a", &|p, pe| p <= 0.0073 && pe <= eps, &|pr| pr == 1.0),
        check("b", &|p, pe| p <= 0.06 + eps && pe <= eps, &|pr| pr >= 0.9),
        check("d", &|p, _| p >= 0.11 - eps, &|pr| pr <= 0.1),
    ];
    if with_c {
        parts.push(check("c", &|p, pe| 4.0 / 3.0 * pe + p <= 0.07 + eps && pe <= 0.05 + eps, &|pr| pr >= 0.8));
    }
    let pass = parts.iter().all(|(n, bad, _)| *n > 0 && bad.is_empty());
    let detail = parts
        .iter()
        .map(|(n, bad, name)| format!("({name}) {}/{n} ok{}", n - bad.len(), if bad.is_empty() { String::new() } else { format!(" failing {}", bad.join(" ")) }))
        .collect::<Vec<_>>()
        .join(", ");
    (pass, detail)
}

fn phase_diagram(full: bool) -> Outcome {
    let (step, trials) = if full { (0.005, 20) } else { (0.02, 10) };
    let p_grid = range_grid(0.0, 0.12, step).unwrap();
    let pe_grid = range_grid(0.0, 0.1, step).unwrap();
    let start = Instant::now();
    let diagram = run_phase_diagram(&large(), &p_grid, &pe_grid, &PhaseConfig::new(trials, 5)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let (pass, detail) = region_claims(&grid_probability(&diagram), full);
    let in_time = full || elapsed <= 1800.0;
    outcome(pass && in_time, format!("{detail}; {}x{} cells, {trials} trials, {elapsed:.0}s", p_grid.len(), pe_grid.len()))
}

fn baseline_fragility() -> Outcome {
    let d = large();
    let a = d.normalized();
    let policy = ThresholdPolicy::default();
    let signal = SignalModel::new(100.0, 7.0 / 961.0).unwrap();
    let (mut classical_missed, mut nnlad_exact) = (0, 0);
    for t in 0..100 {
        let mut rng = trial_rng(6, 0, 0, t);
        let x = pooldesign::draw_signal(d.n(), signal, &mut rng);
        let mut y = a.mul(&x.loads);
        let positive: Vec<usize> = (0..y.len()).filter(|&m| y[m] > 0.0).collect();
        y[positive[rng.random_range(0..positive.len())]] = 0.0;
        let truth = x.support();
        let classical = infected_set(&classify_disjunct(&d, &y, 0.0));
        classical_missed += usize::from(truth.iter().any(|i| !classical.contains(i)));
        let sol = solve_nnlad(&NnladProblem::new(a.clone(), y).unwrap(), &SolverOptions::default());
        nnlad_exact += usize::from(infected_set(&classify_nnlad(&sol, policy)) == truth);
    }
    outcome(
        classical_missed == 100 && nnlad_exact >= 90,
        format!("classical misses someone in {classical_missed}/100, NNLAD exact set in {nnlad_exact}/100"),
    )
}

fn adversarial_witness() -> Outcome {
    // Corrupting exactly the s + 1 tests of column k by -x_k A^k makes y
    // the clean readout of x without k, so decoding drops k.
    let d = construct_design(DesignParams::new(5, 2).unwrap());
    let a = d.normalized();
    let (k, other) = (7, 19);
    let mut x = vec![0.0; d.n()];
    x[k] = 80.0;
    x[other] = 120.0;
    let mut e = vec![0.0; d.m()];
    for (row, v) in a.column(k) {
        e[row] = -x[k] * v;
    }
    let support_e: Vec<usize> = (0..d.m()).filter(|&m| e[m] != 0.0).collect();
    let y: Vec<f64> = a.mul(&x).iter().zip(&e).map(|(u, v)| u + v).collect();
    let sol = solve_nnlad(&NnladProblem::new(a.clone(), y).unwrap(), &SolverOptions::default());
    let called = infected_set(&classify_nnlad(&sol, ThresholdPolicy::default()));
    let pass = support_e.len() == 3 && support_e == d.binary().support(k) && called == vec![other];
    outcome(pass, format!("||e||_0={} on column {k}; true set [{k}, {other}], decoded {called:?}", support_e.len()))
}

fn budget_table() -> Outcome {
    let bound = budget_disjunct_bound(900, 0.01).unwrap();
    let (k1, d1) = dorfman_optimum(0.01).unwrap();
    let (k2, d2) = dorfman_optimum(0.001).unwrap();
    let pass = (bound - 0.5573).abs() <= 1e-3
        && k1 == 11
        && (d1 - 0.1956).abs() <= 1e-3
        && (d1 * 10.0).round() / 10.0 == 0.2
        && k2 == 32
        && (d2 - 0.0628).abs() <= 1e-3;
    outcome(pass, format!("disjunct bound {bound:.5}, Dorfman k={k1} {d1:.5}, k={k2} {d2:.5}"))
}

fn solver_oracle() -> Outcome {
    let opts = SolverOptions { exact_fallback: false, ..Default::default() };
    let mut worst = 0.0f64;
    let mut bad = 0;
    for t in 0..100 {
        let mut rng = trial_rng(9, 0, 0, t);
        let (m, n) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let lo = if t % 2 == 0 { 0.0 } else { -1.0 };
        let a = DMatrix::from_fn(m, n, |_, _| if rng.random_bool(0.6) { rng.random_range(lo..1.0) } else { 0.0 });
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..10.0)).collect();
        let problem = NnladProblem::new(CscMatrix::from_dense(&a), y).unwrap();
        let fo = solve_nnlad(&problem, &opts);
        let exact = solve_nnlad_exact(&problem).unwrap();
        let diff = (fo.objective - exact.objective).abs();
        worst = worst.max(diff);
        bad += usize::from(diff > 1e-6 || fo.estimate.iter().any(|&v| v < 0.0));
    }
    outcome(bad == 0, format!("{}/100 within 1e-6, worst gap {worst:.2e}", 100 - bad))
}

fn main() -> ExitCode {
    let full = std::env::var("POOLDESIGN_FULL_GRID").is_ok_and(|v| v == "1");
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 construction fidelity", construction),
        ("2 disjunctness oracle", disjunctness),
        ("3 noiseless recovery", noiseless_recovery),
        ("4 error bound certificate", error_bound),
        ("5 phase diagram, reduced grid (a)(b)(d)", || phase_diagram(false)),
        ("6 baseline fragility", baseline_fragility),
        ("7 adversarial witness", adversarial_witness),
        ("8 budget table", budget_table),
        ("9 solver oracle equivalence", solver_oracle),
    ];
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    for (name, run) in criteria {
        report(name, run());
    }
    if full {
        report("5 phase diagram, full grid (a)(b)(c)(d)", phase_diagram(true));
    } else {
        println!("SKIP criterion 5 phase diagram, full grid (a)(b)(c)(d): set POOLDESIGN_FULL_GRID=1");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
