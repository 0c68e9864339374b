use mvnet::config::Config;
use mvnet::sdde::sdde_ensemble;

/// `m' = -a m + c m(t - tau)`, `m = x0` on `[-tau, 0]`, by classical RK4 with
/// step `tau / m`; the delayed value is read off the stored solution, with the
/// midpoint by linear interpolation.
fn delay_ode(a: f64, c: f64, tau: f64, x0: f64, t_end: f64, m: usize) -> f64 {
    let h = tau / m as f64;
    let steps = (t_end / h).round() as usize;
    let mut sol = vec![x0; m + 1];
    let past = |sol: &Vec<f64>, k: usize, frac: f64| {
        let lo = sol[k];
        let hi = sol.get(k + 1).copied().unwrap_or(lo);
        lo + frac * (hi - lo)
    };
    for k in 0..steps {
        let y = *sol.last().unwrap();
        let (d0, dh, d1) = (past(&sol, k, 0.0), past(&sol, k, 0.5), past(&sol, k + 1, 0.0));
        let f = |y: f64, d: f64| -a * y + c * d;
        let k1 = f(y, d0);
        let k2 = f(y + 0.5 * h * k1, dh);
        let k3 = f(y + 0.5 * h * k2, dh);
        let k4 = f(y + h * k3, d1);
        sol.push(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    *sol.last().unwrap()
}

fn linear(extra: &str, n: usize) -> Config {
    Config::parse(&format!(
        "[grid]\ntau = 0.1\nn = {n}\nhorizon = 1.0\n[model]\nid = \"linear\"\na = 1.0\nx0 = 1.0\n{extra}\
         [noise]\nseed = 5\nnu_total = 2.0\n"
    ))
    .unwrap()
}

#[test]
fn delayed_mean_matches_the_delay_ode() {
    let exact = delay_ode(1.0, 0.5, 0.1, 1.0, 1.0, 1000);
    let cfg = linear("b_delay = 0.5\nsigma = 0.0\nc_jump = 0.0\n", 40);
    let model = cfg.model().unwrap();
    let track = sdde_ensemble(model.as_ref(), &cfg.grid, &cfg.layout.sites()[0], &[], 1, 1, 1e6).unwrap();
    let err = (track.mean(cfg.grid.len() - 1, 0) - exact).abs();
    // First-order Euler error at dt = 2.5e-3.
    assert!(err < 2e-3, "{err}");
    assert!(err > 0.0);
}

#[test]
fn noisy_delayed_mean_is_unbiased() {
    let exact = delay_ode(1.0, 0.5, 0.1, 1.0, 1.0, 1000);
    let cfg = linear("b_delay = 0.5\nsigma = 1.0\nc_jump = 1.0\n", 40);
    let model = cfg.model().unwrap();
    let track = sdde_ensemble(model.as_ref(), &cfg.grid, &cfg.layout.sites()[0], &[], 17, 20_000, 1e6).unwrap();
    let i = cfg.grid.len() - 1;
    let (m, se) = (track.mean(i, 0), track.mean_se(i, 0));
    assert!((m - exact).abs() <= 3.0 * se + 2e-3, "{m} +- {se} vs {exact}");
}

#[test]
fn compensated_jumps_leave_the_mean_alone() {
    // Pure jump noise with a = 1: E X_1 = e^{-1} whatever the intensity.
    let cfg = linear("sigma = 0.0\nc_jump = 2.0\n", 10);
    let model = cfg.model().unwrap();
    let track = sdde_ensemble(model.as_ref(), &cfg.grid, &cfg.layout.sites()[0], &[], 3, 20_000, 1e6).unwrap();
    let i = cfg.grid.len() - 1;
    let exact = (1.0 - 0.01f64).powi(100);
    assert!((track.mean(i, 0) - exact).abs() <= 3.0 * track.mean_se(i, 0));
    // Variance (c^2 nu) (1 - e^{-2}) / 2 up to the Euler factor.
    let var = 4.0 * 2.0 * (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((track.variance(i, 0) - var).abs() / var < 0.05, "{}", track.variance(i, 0));
}

#[test]
fn ensembles_are_reproducible() {
    let cfg = linear("sigma = 1.0\n", 10);
    let model = cfg.model().unwrap();
    let run = || sdde_ensemble(model.as_ref(), &cfg.grid, &cfg.layout.sites()[0], &[], 8, 500, 1e6).unwrap();
    assert_eq!(run(), run());
}
