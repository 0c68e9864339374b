//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. `cargo test --test acceptance -- 3 7` runs a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use mvnet::chaos::{convergence_study, coupled_gap, ChaosReport};
use mvnet::config::Config;
use mvnet::hypothesis::{check_growth, check_monotonicity, AuditSetup};
use mvnet::meanfield::{bound_table, continuity_audit, simulate_copies, simulate_mean_field};
use mvnet::network::{simulate_network, Reduction, RunOptions};
use mvnet::sdde::sdde_ensemble;

type Outcome = Result<(bool, String), String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn shipped(name: &str) -> Config {
    let text = std::fs::read_to_string(configs_dir().join(name)).expect("shipped config");
    Config::parse(&text).expect("shipped config parses")
}

fn parse(text: &str) -> Result<Config, String> {
    Config::parse(text).map_err(|e| e.to_string())
}

const LINEAR: &str = "\
[grid]
tau = 0.01
n = 10
horizon = 1.0
[model]
id = \"linear\"
a = 1.0
b_delay = 0.0
sigma = 1.0
c_jump = 1.0
x0 = 1.0
[noise]
seed = 2024
nu_total = 2.0
";

/// Criteria 1 and 2 share one run of 10^5 paths.
fn linear_oracles() -> Result<[(bool, String); 2], String> {
    let cfg = parse(LINEAR)?;
    let model = cfg.model().map_err(|e| e.to_string())?;
    let site = cfg.layout.sites()[0].clone();
    let track = sdde_ensemble(model.as_ref(), &cfg.grid, &site, &[], cfg.noise.seed, 100_000, 1e6)
        .map_err(|e| e.to_string())?;
    let i = cfg.grid.len() - 1;
    let (mean, mean_se) = (track.mean(i, 0), track.mean_se(i, 0));
    let exact_mean = (-1.0f64).exp();
    let (var, var_se) = (track.variance(i, 0), track.variance_se(i, 0));
    let exact_var = 1.5 * (1.0 - (-2.0f64).exp());
    let rel = (var - exact_var).abs() / exact_var;
    Ok([
        (
            (mean - exact_mean).abs() <= 3.0 * mean_se,
            format!("E X_1 = {mean:.5} +- {mean_se:.5}, exact {exact_mean:.5}"),
        ),
        (
            (var - exact_var).abs() <= 3.0 * var_se && rel < 0.02,
            format!("Var X_1 = {var:.5} +- {var_se:.5}, exact {exact_var:.5}, relative error {rel:.4}"),
        ),
    ])
}

fn weak_order() -> Outcome {
    let mut errors = Vec::new();
    for n in [10, 20, 40] {
        let text = format!(
            "[grid]\ntau = 0.1\nn = {n}\nhorizon = 1.0\n[model]\nid = \"linear\"\nsigma = 0.0\nc_jump = 0.0\nx0 = 1.0\n"
        );
        let cfg = parse(&text)?;
        let model = cfg.model().map_err(|e| e.to_string())?;
        let site = cfg.layout.sites()[0].clone();
        let track = sdde_ensemble(model.as_ref(), &cfg.grid, &site, &[], 1, 1, 1e6).map_err(|e| e.to_string())?;
        errors.push((track.mean(cfg.grid.len() - 1, 0) - (-1.0f64).exp()).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok((
        ratios.iter().all(|r| (1.5..=3.0).contains(r)),
        format!(
            "errors {} at dt = 1e-2, 5e-3, 2.5e-3; ratios {}",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" "),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ")
        ),
    ))
}

fn moment_bound() -> Outcome {
    let cfg = parse(
        "[grid]\ntau = 0.2\nn = 10\nhorizon = 2.0\n[layout]\nparticles = 16\ncells_per_population = 4\n\
         [model]\nid = \"fhn\"\ndisorder_scale = 0.1\n[noise]\nseed = 41\nnu_total = 1.0\n\
         [disorder]\ndistribution = \"normal\"\n",
    )?;
    let model = cfg.model().map_err(|e| e.to_string())?;
    let (mut rows, mut failed, mut slack) = (0, 0, f64::INFINITY);
    for draw in 0..8 {
        let sample = cfg.disorder.sample(cfg.noise.seed, draw);
        let copies = simulate_copies(model.as_ref(), &cfg.layout, &cfg.grid, &sample.omega, 1024, sample.seed, &RunOptions::default())
            .map_err(|e| e.to_string())?;
        for row in bound_table(model.as_ref(), &copies, 1, &sample.omega).map_err(|e| e.to_string())? {
            rows += 1;
            failed += usize::from(!row.pass);
            slack = slack.min(row.c1 + 3.0 * row.running_sup_se - row.running_sup);
        }
    }
    Ok((
        failed == 0,
        format!("{rows} rows over 8 draws, {failed} above C1 + 3 SE, smallest slack {slack:.3}"),
    ))
}

fn moment_estimate(bin: &Path, tmp: &Path) -> Outcome {
    let text = "[grid]\ntau = 0.1\nn = 10\nhorizon = 1.0\n[model]\nid = \"linear\"\na = 1.0\nb_delay = 0.5\n\
                sigma = 1.0\nc_jump = 1.0\nx0 = 1.0\nx0_sd = 0.5\n[noise]\nseed = 9\nnu_total = 2.0\n\
                [run]\nmode = \"sdde\"\npaths = 20000\noutput = \"estimate\"\n";
    let cfg = tmp.join("estimate.toml");
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    let out = tmp.join("estimate");
    let status = Command::new(bin)
        .args(["simulate", "--check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    let table = std::fs::read_to_string(out.join("estimate_moments.tsv")).map_err(|e| e.to_string())?;
    let mut lines = table.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no column {name}"));
    let (m2, se, bound, pass) = (col("second_moment")?, col("second_moment_se")?, col("moment_bound")?, col("pass")?);
    let (mut rows, mut failed, mut ratio) = (0, 0, 0.0f64);
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        let num = |j: usize| f[j].parse::<f64>().unwrap_or(f64::NAN);
        rows += 1;
        // Recomputed here rather than trusting the pass column.
        let ok = 1.0 + 2.0 * num(m2) <= num(bound) + 6.0 * num(se);
        failed += usize::from(!ok || f[pass] != "true");
        ratio = ratio.max((1.0 + 2.0 * num(m2)) / num(bound));
    }
    Ok((
        status.success() && rows > 0 && failed == 0,
        format!("{rows} grid times, {failed} violations, largest lhs/bound {ratio:.3}"),
    ))
}

fn study() -> Result<ChaosReport, String> {
    let cfg = shipped("fhn_study.toml");
    let spec = cfg.study_spec();
    let layout = spec.layout(spec.sizes[0]).map_err(|e| e.to_string())?;
    let model = mvnet::presets::build(&cfg.model_id, &cfg.model_params, cfg.noise.nu_total, &cfg.lambda, &layout)
        .map_err(|e| e.to_string())?;
    convergence_study(model.as_ref(), &spec, &cfg.disorder, cfg.noise.seed, &cfg.run.options()).map_err(|e| e.to_string())
}

fn chaos(report: &ChaosReport) -> Outcome {
    let gaps: Vec<String> = report.entries.iter().map(|e| format!("{}:{:.3e}", e.n, e.gap)).collect();
    let fit = report.fit.ok_or("no slope fit")?;
    let shape = report.entries.len() == 5
        && report.entries.iter().all(|e| e.copies == 1024 && e.draws == 4 && e.replicas == 64);
    Ok((
        shape && report.decreasing() && report.slope_pass,
        format!(
            "gaps {}; paired decreases {}/{}; slope {:.3} +- {:.3} in [{}, {}]",
            gaps.join(" "),
            report.decrease.iter().filter(|d| d.pass).count(),
            report.decrease.len(),
            fit.slope,
            fit.slope_se,
            report.spec.slope_band.0,
            report.spec.slope_band.1
        ),
    ))
}

fn nullity(report: Option<&ChaosReport>) -> Outcome {
    let cfg = parse(
        "[grid]\ntau = 0.2\nn = 10\nhorizon = 2.0\n[layout]\nparticles = 32\ncells_per_population = 2\n\
         [model]\nid = \"fhn\"\na1 = 0.0\na2 = 0.0\neta0 = 0.0\ndisorder_scale = 0.1\n\
         [noise]\nseed = 77\nnu_total = 1.0\n[disorder]\ndistribution = \"normal\"\n",
    )?;
    let model = cfg.model().map_err(|e| e.to_string())?;
    let opts = RunOptions::default();
    let mut worst = 0.0f64;
    for draw in 0..2 {
        let sample = cfg.disorder.sample(cfg.noise.seed, draw);
        for rep in 0..4 {
            let net = simulate_network(model.as_ref(), &cfg.layout, &cfg.grid, &sample.omega, sample.seed, rep, &opts)
                .map_err(|e| e.to_string())?;
            let mf = simulate_mean_field(model.as_ref(), &cfg.layout, &cfg.grid, 256, &sample.omega, sample.seed, rep, &opts)
                .map_err(|e| e.to_string())?;
            let gap = coupled_gap(&net, &mf.representatives).map_err(|e| e.to_string())?;
            worst = gap.iter().fold(worst, |m, g| m.max(g.abs()));
        }
    }
    // Interacting runs: network and limit share the initial paths.
    let coupled = parse(&cfg.source.replace("a1 = 0.0\na2 = 0.0\neta0 = 0.0\n", ""))?;
    let model = coupled.model().map_err(|e| e.to_string())?;
    let n = coupled.grid.n();
    let mut window = 0.0f64;
    let mut later = 0.0f64;
    for rep in 0..2 {
        let sample = coupled.disorder.sample(coupled.noise.seed, 0);
        let net = simulate_network(model.as_ref(), &coupled.layout, &coupled.grid, &sample.omega, sample.seed, rep, &opts)
            .map_err(|e| e.to_string())?;
        let mf = simulate_mean_field(model.as_ref(), &coupled.layout, &coupled.grid, 256, &sample.omega, sample.seed, rep, &opts)
            .map_err(|e| e.to_string())?;
        let gap = coupled_gap(&net, &mf.representatives).map_err(|e| e.to_string())?;
        let particles = coupled.layout.len();
        window = gap[..(n + 1) * particles].iter().fold(window, |m, g| m.max(g.abs()));
        later = gap[(n + 1) * particles..].iter().fold(later, |m, g| m.max(g.abs()));
    }
    if let Some(r) = report {
        window = r.entries.iter().map(|e| e.initial_window_max).fold(window, f64::max);
    }
    Ok((
        worst == 0.0 && window == 0.0 && later > 0.0,
        format!(
            "uncoupled gap max {worst:e} over 2 draws x 4 replicas; coupled gap on [-tau, 0] max {window:e} (after 0: {later:.2e})"
        ),
    ))
}

fn continuity() -> Outcome {
    let cfg = shipped("fhn_two_cell.toml");
    let model = cfg.model().map_err(|e| e.to_string())?;
    let eps = model.cell_epsilon();
    let pairs = mvnet_cli::continuity_pairs(&cfg.layout, 8);
    let sample = cfg.disorder.sample(cfg.noise.seed, 0);
    let opts = cfg.run.options();
    let copies = simulate_copies(model.as_ref(), &cfg.layout, &cfg.grid, &sample.omega, cfg.run.copies, sample.seed, &opts)
        .map_err(|e| e.to_string())?;
    let rows = continuity_audit(model.as_ref(), &cfg.grid, &sample.omega, &copies, &pairs, 1, sample.seed, 16, &opts)
        .map_err(|e| e.to_string())?;
    let rows: Vec<_> = rows.into_iter().filter(|r| r.t <= 1.0 + 1e-12).collect();
    let failed = rows.iter().filter(|r| !r.pass).count();
    let worst = rows.iter().map(|r| r.gap / r.bound).fold(0.0f64, f64::max);
    let cells = cfg.layout.cells().iter().filter(|c| c.mass > 0.0).count();
    Ok((
        failed == 0 && cells == 2 && eps == 0.05 && !rows.is_empty(),
        format!(
            "{} grid times, {} same-cell pairs x 16 replicas, epsilon {eps}, {failed} above C2 eps + 3 SE, largest gap/bound {worst:.2e}",
            rows.len(),
            pairs.len()
        ),
    ))
}

fn fast_path() -> Outcome {
    let cfg = parse(
        "[grid]\ntau = 0.2\nn = 10\nhorizon = 2.0\n[layout]\nparticles = 64\ncells_per_population = 4\n\
         [model]\nid = \"fhn\"\nspread = 0.05\ndisorder_scale = 0.1\n[noise]\nseed = 64\nnu_total = 1.0\n\
         [disorder]\ndistribution = \"normal\"\n",
    )?;
    let model = cfg.model().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        reduction: Reduction::Fast,
        audit: true,
        ..RunOptions::default()
    };
    let sample = cfg.disorder.sample(cfg.noise.seed, 0);
    let run = simulate_network(model.as_ref(), &cfg.layout, &cfg.grid, &sample.omega, sample.seed, 0, &opts)
        .map_err(|e| e.to_string())?;
    let dev = run.audit_deviation.ok_or("no audit recorded")?;
    Ok((dev < 1e-12, format!("N = 64, {} steps, max relative deviation {dev:e}", cfg.grid.forward_steps())))
}

fn hypotheses() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let base = "[grid]\ntau = 0.2\nn = 10\nhorizon = 2.0\n[layout]\nparticles = 16\ncells_per_population = 2\n";
    for preset in mvnet::presets::catalogue() {
        let text = format!("{base}[model]\nid = \"{}\"\n[noise]\nseed = 3\nnu_total = 1.0\n", preset.id);
        let cfg = parse(&text)?;
        let model = cfg.model().map_err(|e| e.to_string())?;
        let omegas = cfg.omegas(16);
        let setup = AuditSetup {
            grid: &cfg.grid,
            lambda: &cfg.lambda,
            layout: &cfg.layout,
            omegas: if cfg.disorder.dim() == 0 { &[] } else { &omegas },
            trials: 10_000,
            seed: cfg.noise.seed,
        };
        let mut reports = check_monotonicity(model.as_ref(), &setup);
        reports.extend(check_growth(model.as_ref(), &setup));
        let violations: usize = reports.iter().map(|r| r.violations).sum();
        let short = reports.iter().all(|r| r.trials >= 10_000);
        if preset.id == "counterexample" {
            ok &= violations > 0;
        } else {
            ok &= violations == 0 && short;
        }
        lines.push(format!("{} {violations} in {} checks", preset.id, reports.len()));
    }
    Ok((ok, format!("violations on 10^4 samples: {}", lines.join(", "))))
}

fn results(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| !p.to_string_lossy().ends_with("_manifest.json"))
                .filter_map(|p| Some((p.file_name()?.to_string_lossy().into_owned(), std::fs::read(&p).ok()?)))
                .collect()
        })
        .unwrap_or_default()
}

fn determinism(bin: &Path, tmp: &Path) -> Outcome {
    let small_study = std::fs::read_to_string(configs_dir().join("fhn_study.toml"))
        .map_err(|e| e.to_string())?
        .replace("sizes = [8, 16, 32, 64, 128]", "sizes = [4, 8]")
        .replace("copies = 1024", "copies = 64")
        .replace("replicas = 64", "replicas = 4")
        .replace("draws = 4", "draws = 2");
    let small_meanfield = std::fs::read_to_string(configs_dir().join("fhn_two_cell.toml"))
        .map_err(|e| e.to_string())?
        .replace("copies = 512", "copies = 64")
        .replace("continuity_replicas = 16", "continuity_replicas = 2");
    std::fs::write(tmp.join("study.toml"), small_study).map_err(|e| e.to_string())?;
    std::fs::write(tmp.join("meanfield.toml"), small_meanfield).map_err(|e| e.to_string())?;
    let runs = [
        ("simulate", configs_dir().join("fhn_network.toml")),
        ("meanfield", tmp.join("meanfield.toml")),
        ("chaos-study", tmp.join("study.toml")),
        ("audit", configs_dir().join("fhn_meanfield.toml")),
    ];
    let mut files = 0;
    for (cmd, cfg) in &runs {
        let mut outs = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.join(format!("det_{cmd}_{threads}"));
            let status = Command::new(bin)
                .arg(cmd)
                .arg("--config")
                .arg(cfg)
                .args(["--threads", threads, "--out"])
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Ok((false, format!("{cmd} exited with {status}")));
            }
            outs.push(results(&out));
        }
        if outs[0].is_empty() || outs[0] != outs[1] {
            return Ok((false, format!("{cmd}: outputs differ between 1 and 4 threads")));
        }
        files += outs[0].len();
    }
    Ok((true, format!("{files} output files byte-identical under --threads 1 and 4 across 4 commands")))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: usize| selected.is_empty() || selected.contains(&c);
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_mvnet"));
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut failures = 0;
    let mut report = |c: usize, outcome: Outcome, started: Instant| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok((true, detail)) => println!("PASS criterion {c}: {detail} ({secs:.1} s)"),
            Ok((false, detail)) => {
                failures += 1;
                println!("FAIL criterion {c}: {detail} ({secs:.1} s)");
            }
            Err(e) => {
                failures += 1;
                println!("FAIL criterion {c}: error: {e} ({secs:.1} s)");
            }
        }
    };

    if wanted(1) || wanted(2) {
        let t = Instant::now();
        match linear_oracles() {
            Ok([a, b]) => {
                if wanted(1) {
                    report(1, Ok(a), t);
                }
                if wanted(2) {
                    report(2, Ok(b), t);
                }
            }
            Err(e) => {
                for c in [1, 2].into_iter().filter(|&c| wanted(c)) {
                    report(c, Err(e.clone()), t);
                }
            }
        }
    }
    if wanted(3) {
        let t = Instant::now();
        report(3, weak_order(), t);
    }
    if wanted(4) {
        let t = Instant::now();
        report(4, moment_bound(), t);
    }
    if wanted(5) {
        let t = Instant::now();
        report(5, moment_estimate(&bin, tmp.path()), t);
    }
    let mut study_report = None;
    if wanted(6) {
        let t = Instant::now();
        match study() {
            Ok(r) => {
                report(6, chaos(&r), t);
                study_report = Some(r);
            }
            Err(e) => report(6, Err(e), t),
        }
    }
    if wanted(7) {
        let t = Instant::now();
        report(7, nullity(study_report.as_ref()), t);
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, continuity(), t);
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, fast_path(), t);
    }
    if wanted(10) {
        let t = Instant::now();
        report(10, hypotheses(), t);
    }
    if wanted(11) {
        let t = Instant::now();
        report(11, determinism(&bin, tmp.path()), t);
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
