//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use plap::eigen::{estimate_spectrum, linear_spectrum_oracle, lowest_eigenpair, RayleighOptions};
use plap::minimax::{estimate_geometry, solve, spectrum_for, GeometryOptions, SolveOptions};
use plap::suites::{
    cone_sign_suite, flip_suite, gradient_suite, homogeneity_suite, monotonicity_suite, standard_spec,
};
use plap::{Grid, NonlinearitySpec, ProblemSpec, ProblemSpec64};

struct Report {
    results: Vec<bool>,
}

impl Report {
    fn line(&mut self, n: usize, name: &str, passed: bool, detail: String) {
        println!("criterion {n:>2} {} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        self.results.push(passed);
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// One RK4 step of `u' = phi_q(w)`, `w' = (1 - lambda) phi_p(u)` where
/// `w = |u'|^(p-2) u'` and `phi_s(t) = |t|^(s-2) t`, `1/p + 1/q = 1`.
fn rk4_step(u: f64, w: f64, h: f64, p: f64, lambda: f64) -> (f64, f64) {
    let q1 = 1.0 / (p - 1.0);
    let f = |u: f64, w: f64| (w.abs().powf(q1) * w.signum(), (1.0 - lambda) * u.abs().powf(p - 1.0) * u.signum());
    let (k1u, k1w) = f(u, w);
    let (k2u, k2w) = f(u + 0.5 * h * k1u, w + 0.5 * h * k1w);
    let (k3u, k3w) = f(u + 0.5 * h * k2u, w + 0.5 * h * k2w);
    let (k4u, k4w) = f(u + h * k3u, w + h * k3w);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
    )
}

/// `u(1/2)` for the shot `u(0) = 0`, `u'(0) = 1`.
fn shoot(p: f64, lambda: f64, steps: usize) -> f64 {
    let h = 0.5 / steps as f64;
    let (mut u, mut w) = (0.0, 1.0);
    for _ in 0..steps {
        (u, w) = rk4_step(u, w, h, p, lambda);
    }
    u
}

/// Second periodic eigenvalue of `-(|u'|^(p-2) u')' + |u|^(p-2) u =
/// lambda |u|^(p-2) u` on the unit circle. Its eigenfunction vanishes at two
/// antipodal points, so it is the first Dirichlet eigenvalue of the half
/// circle: the smallest lambda with `u(1/2) = 0`, found by bisection.
fn shooting_lambda2(p: f64, lo: f64, hi: f64) -> f64 {
    let steps = 20_000;
    let (mut lo, mut hi) = (lo, hi);
    let s_lo = shoot(p, lo, steps).signum();
    assert!(s_lo != shoot(p, hi, steps).signum(), "bracket does not straddle a root");
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if shoot(p, mid, steps).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn periodic(n: usize, p: f64, lambda: f64, f: NonlinearitySpec<f64>) -> ProblemSpec64 {
    ProblemSpec::uniform(Grid::periodic(n, 1.0).unwrap(), p, lambda, 1.0, 1.0, f).unwrap()
}

fn main() {
    let mut report = Report { results: Vec::new() };
    let seed = 0;

    // 1
    {
        let mut ok = true;
        let mut detail = Vec::new();
        for p in [1.5, 2.0, 3.0] {
            let spec = standard_spec::<f64>(256, p, 0.0, p + 2.0).unwrap();
            let t = Instant::now();
            let r = lowest_eigenpair(&spec, &RayleighOptions { seed, ..Default::default() });
            let el = t.elapsed();
            match r {
                Ok(pair) => {
                    let err = (pair.lambda - 1.0).abs();
                    ok &= err < 1e-6 && secs(el) < 5.0;
                    detail.push(format!("p={p} |err|={err:.1e} {:.2}s", secs(el)));
                }
                Err(e) => {
                    ok = false;
                    detail.push(format!("p={p} error {e}"));
                }
            }
        }
        report.line(1, "lambda1 anchor", ok, detail.join(", "));
    }

    // 2
    {
        let exact = 1.0 + 4.0 * PI * PI;
        let errs: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let s = linear_spectrum_oracle(&standard_spec::<f64>(n, 2.0, 0.0, 4.0).unwrap()).unwrap();
                (s.values()[1] - exact).abs() / exact
            })
            .collect();
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let ok = errs[2] < 1e-2 && orders.iter().all(|o| (o - 2.0).abs() < 0.1);
        report.line(
            2,
            "lambda2 anchor at p=2",
            ok,
            format!("rel err n=256 {:.2e}, observed orders {:.3} {:.3}", errs[2], orders[0], orders[1]),
        );
    }

    // 3
    {
        let p = 3.0;
        let oracle = shooting_lambda2(p, 100.0, 400.0);
        // closed form for the same ODE: 1 + (p-1) (2 pi_p)^p, pi_p = 2 pi / (p sin(pi/p))
        let pi_p = 2.0 * PI / (p * (PI / p).sin());
        let closed = 1.0 + (p - 1.0) * (2.0 * pi_p).powf(p);
        let spec = standard_spec::<f64>(512, p, 0.0, 5.0).unwrap();
        let t = Instant::now();
        let est = estimate_spectrum(&spec, 2, &RayleighOptions { seed, ..Default::default() });
        let el = t.elapsed();
        match est {
            Ok(s) => {
                let e = &s.entries[1];
                let rel = (e.value - oracle).abs() / oracle;
                let ok = rel < 1e-4 && format!("{:?}", e.certification) == "Refined";
                report.line(
                    3,
                    "p=3 second eigenvalue vs shooting",
                    ok,
                    format!(
                        "n=512 lambda2={:.6} oracle={oracle:.6} (closed form {closed:.6}) rel {rel:.1e} {:?} {:.2}s",
                        e.value,
                        e.certification,
                        secs(el)
                    ),
                );
            }
            Err(err) => report.line(3, "p=3 second eigenvalue vs shooting", false, format!("error {err}")),
        }
    }

    // 4 and 5; the runs are reused by 9
    let mp_spec = periodic(256, 2.0, 0.0, NonlinearitySpec::pure_power(4.0));
    let t = Instant::now();
    let mp = solve(&mp_spec, &SolveOptions { seed, ..Default::default() });
    let mp_time = secs(t.elapsed());
    match &mp {
        Ok(r) => {
            let ok = r.cerami < 1e-8 && r.value > 0.0 && r.value <= 0.25 + 1e-6 && mp_time < 60.0;
            report.line(
                4,
                "mountain-pass anchor",
                ok,
                format!("d={:.10} cerami={:.1e} {mp_time:.2}s", r.value, r.cerami),
            );
        }
        Err(e) => report.line(4, "mountain-pass anchor", false, format!("error {e}")),
    }

    let link_spec = periodic(256, 2.0, 20.0, NonlinearitySpec::pure_power(4.0));
    let t = Instant::now();
    let link = solve(&link_spec, &SolveOptions { seed, ..Default::default() });
    let link_time = secs(t.elapsed());
    match &link {
        Ok(r) => {
            let v = r.u.values();
            let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min);
            let nontrivial = format!("{:?}", r.classification) == "NontrivialCandidate";
            let ok = nontrivial
                && r.cerami < 1e-6
                && r.geometry.alpha > 0.0
                && r.value >= r.geometry.alpha
                && spread > 1e-6
                && link_time < 300.0;
            report.line(
                5,
                "linking run at lambda=20",
                ok,
                format!(
                    "m={} d={:.6} alpha={:.6} cerami={:.1e} spread={spread:.3} {:?} {link_time:.2}s",
                    r.geometry.m, r.value, r.geometry.alpha, r.cerami, r.classification
                ),
            );
        }
        Err(e) => report.line(5, "linking run at lambda=20", false, format!("error {e}")),
    }

    // 6
    {
        let mut ok = true;
        let mut detail = Vec::new();
        for p in [1.5, 2.0, 3.0] {
            let r = monotonicity_suite(&standard_spec::<f64>(256, p, 0.0, p + 2.0).unwrap(), 1000, seed).unwrap();
            ok &= r.passed && r.cases == 1000;
            detail.push(format!("p={p} failures {} worst {:.1e}", r.failures, r.worst));
        }
        report.line(6, "monotonicity gap sweep", ok, detail.join(", "));
    }

    // 7
    {
        let mut ok = true;
        let mut detail = Vec::new();
        for p in [2.0, 2.5, 3.0] {
            let r = gradient_suite(&standard_spec::<f64>(256, p, 0.5, p + 2.0).unwrap(), 100, 1e-5, seed).unwrap();
            ok &= r.passed;
            detail.push(format!("grad p={p} {:.1e}", r.worst));
        }
        for p in [1.5, 2.0, 3.0] {
            let r = homogeneity_suite(&standard_spec::<f64>(256, p, 0.5, p + 2.0).unwrap(), 100, seed).unwrap();
            ok &= r.passed;
            detail.push(format!("homog p={p} {:.1e}", r.worst));
        }
        report.line(7, "gradient, homogeneity and Euler", ok, detail.join(", "));
    }

    // 8
    {
        let spec = standard_spec::<f64>(256, 2.0, 50.0, 4.0).unwrap();
        let m = linear_spectrum_oracle(&spec).unwrap().m_index(50.0);
        let r = cone_sign_suite(&spec, 200, seed).unwrap();
        report.line(
            8,
            "cone sign on C-",
            r.passed && r.cases == 200,
            format!("m={m:?} samples {} worst Phi {:.2e}", r.cases, r.worst),
        );
    }

    // 9
    {
        let mut ok = true;
        let mut detail = Vec::new();
        let specs = [
            ("mp p=2", mp_spec.clone()),
            ("mp p=3", periodic(256, 3.0, 0.0, NonlinearitySpec::pure_power(4.0))),
            ("link lambda=20", link_spec.clone()),
        ];
        for (label, spec) in &specs {
            let opts = RayleighOptions { seed, ..Default::default() };
            let g = spectrum_for(spec, &opts)
                .and_then(|s| estimate_geometry(spec, Some(&s), &GeometryOptions::default()));
            match g {
                Ok(g) => {
                    ok &= g.alpha > 0.0 && g.r_minus > g.r_plus;
                    detail.push(format!("{label}: alpha={:.3e} r+={:.2e} r-={:.2e}", g.alpha, g.r_plus, g.r_minus));
                }
                Err(e) => {
                    ok = false;
                    detail.push(format!("{label}: error {e}"));
                }
            }
        }
        for (label, run, tol) in [("mp", &mp, 1e-8), ("link", &link, 1e-8)] {
            match run {
                Ok(r) => {
                    let bmax = r.boundary_max.unwrap_or(f64::NEG_INFINITY);
                    let above = r.value >= r.geometry.alpha - tol;
                    ok &= bmax <= tol && above;
                    detail.push(format!("{label}: boundary max {bmax:.1e}, d - alpha {:.2e}", r.value - r.geometry.alpha));
                }
                Err(_) => ok = false,
            }
        }
        report.line(9, "linking geometry", ok, detail.join("; "));
    }

    // 10
    {
        let grid = Grid::periodic(256, 1.0).unwrap();
        let v: Vec<f64> = (0..256).map(|i| (2.0 * PI * i as f64 / 256.0).sin() + 0.3).collect();
        let signed = ProblemSpec::new(grid, 2.5, 7.3, vec![1.0; 256], v, NonlinearitySpec::pure_power(4.0)).unwrap();
        let a = flip_suite(&signed, 100, seed).unwrap();
        let b = flip_suite(&standard_spec::<f64>(256, 2.0, 20.0, 4.0).unwrap(), 100, seed).unwrap();
        report.line(
            10,
            "flip identity",
            a.passed && b.passed,
            format!("bitwise mismatches {} + {} of 200", a.failures, b.failures),
        );
    }

    let failed = report.results.iter().filter(|r| !**r).count();
    println!("acceptance: {} of {} criteria passed", report.results.len() - failed, report.results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
