//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use efficiency::coverage::DEFAULT_AVERAGE_GRID;
use efficiency::{
    average_coverage, coverage_binomial, f_approx, f_exact, f_large_n, scan_grid, simulate_extra,
    simulate_poisson_trials, simulate_weighted_variance, simulate_xdep, var_poisson_trials, wilson, wilson_extra,
    z_from_level, EfficiencyCounts, ExtraFluctuationInputs64, FnMode, Method, PriorKind, RngStream, Sampling,
    ScenarioExtra, WeightDist, XdepConfig, XdepScenario,
};

const LEVEL: f64 = 0.6827;
const EXACT_TOL: f64 = 1e-12;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

fn lib<T>(r: efficiency::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// 400 log-spaced points on [0.1, 100].
fn n_grid() -> Vec<f64> {
    let (a, b) = (0.1f64.ln(), 100f64.ln());
    (0..400).map(|i| (a + (b - a) * i as f64 / 399.0).exp()).collect()
}

fn f_exact_grid(grid: &[f64]) -> Result<Vec<f64>, String> {
    grid.iter().map(|&n| lib(f_exact(n, EXACT_TOL))).collect()
}

fn c1_f_approx() -> Check {
    let grid = n_grid();
    let exact = f_exact_grid(&grid)?;
    let (worst, at) = grid
        .iter()
        .zip(&exact)
        .map(|(&n, &fe)| ((f_approx(n) / fe - 1.0).abs(), n))
        .fold((0.0, 0.0), |m, x| if x.0 > m.0 { x } else { m });
    let msg = format!("max |f_approx/f_exact - 1| = {:.3}% at n = {at:.3} (limit 1.7%)", 100.0 * worst);
    if worst < 0.017 { Ok(msg) } else { Err(msg) }
}

fn c2_f_large_n() -> Check {
    let grid: Vec<f64> = n_grid().into_iter().filter(|&n| n >= 6.0).collect();
    let exact = f_exact_grid(&grid)?;
    let worst = grid.iter().zip(&exact).map(|(&n, &fe)| (f_large_n(n) / fe - 1.0).abs()).fold(0.0, f64::max);
    let msg = format!("max |f_large_n/f_exact - 1| = {:.4}% over {} points with n >= 6 (limit 1%)", 100.0 * worst, grid.len());
    if worst < 0.01 { Ok(msg) } else { Err(msg) }
}

fn c3_f_shape() -> Check {
    let grid = n_grid();
    let exact = f_exact_grid(&grid)?;
    let below_one = grid.iter().zip(&exact).filter(|(&n, _)| n <= 1.0).all(|(_, &f)| f < 1.0);
    let (argmax, max) = grid
        .iter()
        .zip(&exact)
        .fold((0.0, f64::NEG_INFINITY), |m, (&n, &f)| if f > m.1 { (n, f) } else { m });
    let msg = format!("f_exact < 1 for n <= 1: {below_one}; argmax n = {argmax:.3} (f = {max:.5}), required in [3, 4]");
    if below_one && (3.0..=4.0).contains(&argmax) { Ok(msg) } else { Err(msg) }
}

fn c4_enumeration() -> Check {
    let c = lib(coverage_binomial(Method::Wilson, 0.5, 10, LEVEL))?;
    let msg = format!("coverage_binomial(wilson, 0.5, 10) = {c:.15} (expected 0.65625, tol 1e-12)");
    if (c - 0.65625).abs() <= 1e-12 { Ok(msg) } else { Err(msg) }
}

fn c5_ordering() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for n in [5.0, 10.0, 20.0, 50.0] {
        let avg = |m: Method| lib(average_coverage(m, n, LEVEL, DEFAULT_AVERAGE_GRID, Sampling::Poisson));
        let (cp, na, w) = (avg(Method::ClopperPearson)?, avg(Method::NormalApprox)?, avg(Method::Wilson)?);
        let good = cp > LEVEL && na < LEVEL && (w - LEVEL).abs() < (cp - LEVEL).abs() && (w - LEVEL).abs() < (na - LEVEL).abs();
        ok &= good;
        lines.push(format!("n={n}: cp {cp:.4} normal {na:.4} wilson {w:.4}"));
    }
    let msg = lines.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn c6_zero_coverage() -> Check {
    let p_grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    let n_grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let jeffreys = Method::Bayesian(PriorKind::JeffreysBinomial);
    let cells = lib(scan_grid(&[jeffreys, Method::Wilson], &p_grid, &n_grid, LEVEL, Sampling::Poisson))?;
    if let Some(bad) = cells.iter().find(|c| c.error.is_some()) {
        return Err(format!("cell failed: {:?}", bad.error));
    }
    let min_of = |tag: &str| {
        cells
            .iter()
            .filter(|c| c.method == tag)
            .map(|c| (c.coverage.unwrap(), c.p, c.n))
            .fold((f64::INFINITY, 0.0, 0.0), |m, x| if x.0 < m.0 { x } else { m })
    };
    let (jc, jp, jn) = min_of(&jeffreys.to_string());
    let (wc, wp, wn) = min_of(&Method::Wilson.to_string());
    let msg = format!("min Jeffreys coverage {jc:.2e} at (p={jp}, n={jn}); min Wilson coverage {wc:.4} at (p={wp}, n={wn})");
    if jc < 0.01 && wc > 0.0 { Ok(msg) } else { Err(msg) }
}

fn c7_poisson_trials_mc() -> Check {
    let root = RngStream::new(20_240_701, 0);
    let mut worst: f64 = 0.0;
    let mut i = 0;
    for p in [0.1, 0.5, 0.9] {
        for n in [2.0, 5.0, 20.0] {
            let s = lib(simulate_poisson_trials(p, n, 1_000_000, &root.derive(i)))?;
            i += 1;
            let formula = lib(var_poisson_trials(p, n, FnMode::exact()))?;
            let pull = (s.mc_variance - formula).abs() / s.mc_variance_se;
            if pull > 3.0 {
                return Err(format!("p={p}, n={n}: MC {} vs formula {formula}, {pull:.2} standard errors", s.mc_variance));
            }
            worst = worst.max(pull);
        }
    }
    Ok(format!("9 cells at 1e6 reps, largest deviation {worst:.2} standard errors (limit 3)"))
}

fn c8_weighted() -> Check {
    let root = RngStream::new(8, 0);
    let dists = [
        WeightDist::Exponential { mean: 5.0 },
        WeightDist::Normal { mean: 3.0, sd: 1.0 },
        WeightDist::Normal { mean: 10.0, sd: 0.1 },
        WeightDist::Uniform { lo: -0.5, hi: 1.0 },
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, d) in dists.iter().enumerate() {
        let s = lib(simulate_weighted_variance(d, 0.5, 100.0, 100_000, &root.derive(i as u64)))?;
        ok &= (s.large_n_eff - 1.0).abs() < 0.05;
        lines.push(format!("{d}: {:.4}", s.large_n_eff));
    }
    let msg = format!("predicted/MC variance, LargeN(n_eff): {}", lines.join(", "));
    if ok { Ok(msg) } else { Err(msg) }
}

fn c9_xdep() -> Check {
    let scenario = XdepScenario::weight_bias();
    let s = lib(simulate_xdep(&scenario, 1e4, 2000, &XdepConfig::default(), &RngStream::new(9, 0)))?;
    let pull = (s.mean_p_hat - 0.8).abs() / s.p_hat_se;
    let (binned, boot, wrong) = (s.binned / s.mc_variance, s.bootstrap / s.mc_variance, s.wrong / s.mc_variance);
    let msg = format!(
        "mean p_hat {:.5} ({pull:.2} se from 0.8); binned/MC {binned:.3}, bootstrap/MC {boot:.3} ({} samples), blind/MC {wrong:.3}",
        s.mean_p_hat, s.bootstrap_samples
    );
    if pull < 5.0 && (binned - 1.0).abs() < 0.15 && (boot - 1.0).abs() < 0.15 && (wrong - 1.0).abs() > 0.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c10_extra() -> Check {
    let p_grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, (n, reps, limit)) in [(50.0, 100_000u64, 0.25), (1000.0, 10_000, 0.10)].into_iter().enumerate() {
        let root = RngStream::new(10, k as u64);
        let mut ratios = Vec::new();
        for (i, &p) in p_grid.iter().enumerate() {
            let s = lib(simulate_extra(&ScenarioExtra::with_background_fraction(n, p, 0.2, reps), LEVEL, &root.derive(i as u64)))?;
            ratios.push(s.formula_sd / s.mc_sd);
        }
        let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        ok &= worst <= limit;
        if n == 50.0 {
            let edges = ratios[0] > 1.0 && ratios[8] > 1.0;
            let centre = ratios[4] < 1.0;
            ok &= edges && centre;
            parts.push(format!(
                "n=50: max dev {:.1}% (limit 25%), ratio at p=0.1/0.5/0.9 = {:.3}/{:.3}/{:.3}",
                100.0 * worst,
                ratios[0],
                ratios[4],
                ratios[8]
            ));
        } else {
            parts.push(format!("n=1000: max dev {:.1}% (limit 10%)", 100.0 * worst));
        }
    }
    let msg = parts.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

/// Both roots of `(p_hat - p)^2 = kappa (a p^2 + b p + c)` by bisection.
fn bisect_roots(p_hat: f64, kappa: f64, a: f64, b: f64, c: f64) -> (f64, f64) {
    let g = |p: f64| (p_hat - p).powi(2) - kappa * (a * p * p + b * p + c);
    let solve = |mut lo: f64, mut hi: f64| {
        let positive_lo = g(lo) > 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == positive_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    (solve(-1e3, p_hat), solve(p_hat, 1e3))
}

fn c11_wilson_extra() -> Check {
    let mut rng = RngStream::new(11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n1 = lib(rng.uniform_range(1.0, 1000.0))?;
        let n2 = lib(rng.uniform_range(1.0, 1000.0))?;
        let n = n1 + n2;
        let s1 = lib(rng.uniform_range(0.0, 0.3 * n))?;
        let s2 = lib(rng.uniform_range(0.0, 0.3 * n))?;
        let level = lib(rng.uniform_range(0.5, 0.99))?;
        let iv = lib(wilson_extra(&ExtraFluctuationInputs64::n1n2(n1, n2, n1 + s1, n2 + s2, 0.0), level))?;
        let z = lib(z_from_level(level))?;
        let (lo, hi) = bisect_roots(n1 / n, z * z / (n * n), s1 + s2 - n, n - 2.0 * s1, s1);
        worst = worst.max((iv.lower - lo.clamp(0.0, 1.0)).abs()).max((iv.upper - hi.clamp(0.0, 1.0)).abs());
    }
    let mut reduction: f64 = 0.0;
    for n in 2..=60u64 {
        for k in 1..n {
            let w = lib(wilson(EfficiencyCounts::new(k, n - k), LEVEL))?;
            let (n1, n2) = (k as f64, (n - k) as f64);
            let e = lib(wilson_extra(&ExtraFluctuationInputs64::n1n2(n1, n2, n1, n2, 0.0), LEVEL))?;
            reduction = reduction.max((w.lower - e.lower).abs()).max((w.upper - e.upper).abs());
        }
    }
    let msg = format!("max |closed - bisection| = {worst:.2e} (limit 1e-9); max |extra(0) - wilson| = {reduction:.2e} (limit 1e-12)");
    if worst <= 1e-9 && reduction <= 1e-12 { Ok(msg) } else { Err(msg) }
}

fn c12_determinism() -> Check {
    let runs: [&[&str]; 4] = [
        &["simulate", "weighted", "--dist", "exp:5", "--dist", "uniform:-0.5,1", "--n", "50", "--p", "0.3", "--reps", "20000"],
        &["simulate", "extra", "--n", "100", "--bkg", "0.2", "--reps", "10000", "--p-grid", "0.2,0.5"],
        &["simulate", "xdep", "--n", "300", "--reps", "500", "--bootstrap-samples", "20"],
        &[
            "coverage", "--method", "wilson-weighted,wilson-extra", "--dist", "normal:3,1", "--bkg", "0.2", "--n-grid", "10,30",
            "--p-grid", "0.2,0.6", "--reps", "4000",
        ],
    ];
    let run = |args: &[&str], threads: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_efficiency"))
            .args(args)
            .args(["--seed", "12", "--threads", threads])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(out.stdout)
    };
    for args in runs {
        let (a, b) = (run(args, "1")?, run(args, "4")?);
        if a != b {
            return Err(format!("{} {}: output differs between 1 and 4 threads", args[0], args[1]));
        }
    }
    Ok(format!("{} MC subcommands byte-identical across --threads 1 and 4", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("f_approx accuracy", Duration::from_secs(5), c1_f_approx),
        ("f_large_n validity", Duration::from_secs(1), c2_f_large_n),
        ("f shape", Duration::from_secs(60), c3_f_shape),
        ("exact-enumeration oracle", Duration::from_secs(60), c4_enumeration),
        ("coverage ordering", Duration::from_secs(60), c5_ordering),
        ("zero-coverage pathology", Duration::from_secs(60), c6_zero_coverage),
        ("Poisson-trials variance MC", Duration::from_secs(120), c7_poisson_trials_mc),
        ("weighted variance study", Duration::from_secs(120), c8_weighted),
        ("x-dependent bias and variance", Duration::from_secs(180), c9_xdep),
        ("extra-fluctuation formula", Duration::from_secs(300), c10_extra),
        ("wilson_extra correctness", Duration::from_secs(60), c11_wilson_extra),
        ("determinism", Duration::from_secs(300), c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; runtime over budget of {budget:?}")),
            Err(d) => (false, d),
        };
        failed += !pass as u32;
        println!(
            "{} {:>2} {name}: {detail} [{:.2} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
