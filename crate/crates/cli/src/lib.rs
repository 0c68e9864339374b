//! The `mvnet` command line: argument parsing, run dispatch, output files
//! and run manifests.

pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use mvnet::chaos::{convergence_study, integrability_audit, ChaosReport};
use mvnet::config::{Config, Mode, Record};
use mvnet::hypothesis::{check_growth, check_monotonicity, AuditSetup};
use mvnet::layout::{Site, SpatialLayout};
use mvnet::meanfield::{bound_table, continuity_audit, simulate_copies, simulate_representatives};
use mvnet::model::Model;
use mvnet::network::{simulate_network, TrajectoryStore};
use mvnet::sdde::{sdde_ensemble, simulate_sdde, ParticleKeys};
use mvnet::noise::StreamKind;
use mvnet::Error;

use output::{num, write_atomic, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BLOW_UP: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mvnet", version, about = "Jump-diffusion delay networks and their mean-field limits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-equation ensemble (run.mode = "sdde") or finite network (default).
    Simulate(RunArgs),
    /// Mean-field copies, representatives, moment-bound and continuity audits.
    Meanfield(RunArgs),
    /// Coupled network / mean-field convergence study over the `[study]` sizes.
    ChaosStudy(RunArgs),
    /// Hypothesis audit of the declared rates, and the disorder integrability audit.
    Audit(RunArgs),
    /// Print the model catalogue with parameter defaults.
    ListModels,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Configuration file (TOML), or a run manifest to reproduce.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `noise.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores); results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MVNET_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Exit with status 3 when an audit or acceptance check fails.
    #[arg(long)]
    pub check: bool,
}

/// What a command produced.
struct Outcome {
    files: Vec<(String, String)>,
    passed: bool,
}

impl Outcome {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            passed: true,
        }
    }

    fn add(&mut self, name: String, table: &Table) {
        self.files.push((name, table.render()));
    }
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_CONFIG,
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, args) = match cli.command {
        Command::ListModels => {
            print!("{}", list_models());
            return EXIT_OK;
        }
        Command::Simulate(a) => ("simulate", a),
        Command::Meanfield(a) => ("meanfield", a),
        Command::ChaosStudy(a) => ("chaos-study", a),
        Command::Audit(a) => ("audit", a),
    };
    match execute(name, &args) {
        Ok(passed) => {
            if args.check && !passed {
                eprintln!("mvnet: a check failed");
                EXIT_CHECK
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("mvnet: {e}");
            code_of(&e)
        }
    }
}

pub fn list_models() -> String {
    let mut out = String::new();
    for p in mvnet::presets::catalogue() {
        out.push_str(&format!("{}\t{}\n", p.id, p.summary));
        let defaults = toml::to_string(&p.defaults).unwrap_or_default();
        for line in defaults.lines() {
            out.push_str(&format!("    {line}\n"));
        }
    }
    out
}

/// Config text and seed of a manifest, or the file's text as a config.
fn read_config(path: &Path) -> mvnet::Result<(String, Option<u64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    if let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(&text) {
        let config = m
            .get("config")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::config("config", "manifest has no `config` entry"))?;
        return Ok((config.to_string(), m.get("seed").and_then(|v| v.as_u64())));
    }
    Ok((text, None))
}

fn execute(name: &str, args: &RunArgs) -> mvnet::Result<bool> {
    let (text, manifest_seed) = read_config(&args.config)?;
    let mut cfg = Config::parse(&text)?;
    if let Some(seed) = args.seed.or(manifest_seed) {
        cfg.noise.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("--threads", e.to_string()))?;
    let started = Instant::now();
    let outcome = pool.install(|| match name {
        "simulate" => simulate(&cfg),
        "meanfield" => meanfield(&cfg),
        "chaos-study" => chaos_study(&cfg),
        _ => audit(&cfg),
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    let stem = &cfg.run.output;
    let mut names = Vec::new();
    for (file, body) in &outcome.files {
        write_atomic(&args.out, file, body.as_bytes())?;
        names.push(file.clone());
    }
    let manifest = json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "config_sha256": hex::encode(Sha256::digest(cfg.source.as_bytes())),
        "seed": cfg.noise.seed,
        "model": cfg.model_id,
        "grid": cfg.grid,
        "layout": {
            "populations": cfg.layout.populations(),
            "particles": cfg.layout.len(),
            "weights": cfg.layout.weights(),
            "digest": cfg.layout.digest(),
        },
        "threads": pool.current_num_threads(),
        "wall_clock_seconds": elapsed,
        "outputs": names,
        "passed": outcome.passed,
        "config": cfg.source,
    });
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&args.out, &format!("{stem}_manifest.json"), body.as_bytes())?;
    Ok(outcome.passed)
}

fn header(t: &mut Table, cfg: &Config, model: &dyn Model) {
    t.meta("model", model.id())
        .meta("seed", cfg.noise.seed)
        .meta("tau", num(cfg.grid.tau()))
        .meta("n", cfg.grid.n())
        .meta("dt", num(cfg.grid.dt()))
        .meta("horizon", num(cfg.grid.horizon()))
        .meta("nu_total", num(cfg.noise.nu_total));
}

fn mode_error(cfg: &Config, expected: &str) -> Error {
    Error::config("run.mode", format!("{:?} cannot run under `{expected}`", cfg.run.mode))
}

fn simulate(cfg: &Config) -> mvnet::Result<Outcome> {
    match cfg.run.mode {
        Some(Mode::Sdde) => simulate_paths(cfg),
        None | Some(Mode::Network) => simulate_networks(cfg),
        _ => Err(mode_error(cfg, "simulate")),
    }
}

fn first_site(layout: &SpatialLayout) -> Site {
    layout.sites().first().cloned().unwrap_or_else(|| Site::origin(0))
}

fn simulate_paths(cfg: &Config) -> mvnet::Result<Outcome> {
    let model = cfg.model()?;
    let grid = cfg.grid;
    let d = model.dims().state;
    let site = first_site(&cfg.layout);
    let mut cols = vec!["draw".to_string(), "t".to_string()];
    for stat in ["mean", "mean_se", "var", "var_se"] {
        cols.extend((0..d).map(|c| format!("{stat}_{c}")));
    }
    cols.extend(["second_moment", "second_moment_se", "moment_bound", "pass"].map(String::from));
    let mut moments = Table::new(cols);
    header(&mut moments, cfg, model.as_ref());
    moments.meta("paths", cfg.run.paths).meta(
        "moment_bound",
        "(1 + 2 sup E|z|^2) exp(2 int_0^t K) against 1 + 2 E|X_t|^2 + 3 SE",
    );
    let mut paths = Table::new(
        ["draw", "path", "t"]
            .into_iter()
            .map(String::from)
            .chain((0..d).map(|c| format!("x_{c}"))),
    );
    let mut outcome = Outcome::new();
    let init = model.initial_second_moment(&site);
    for draw in 0..cfg.run.draws as u64 {
        let sample = cfg.disorder.sample(cfg.noise.seed, draw);
        let omega = &sample.omega;
        let k = model.rates(omega).k;
        let track = sdde_ensemble(model.as_ref(), &grid, &site, omega, sample.seed, cfg.run.paths, cfg.run.guard)?;
        for i in 0..grid.len() {
            let t = grid.time(i);
            let mut row = vec![draw.to_string(), num(t)];
            for c in 0..d {
                row.push(num(track.mean(i, c)));
            }
            for c in 0..d {
                row.push(num(track.mean_se(i, c)));
            }
            for c in 0..d {
                row.push(num(track.variance(i, c)));
            }
            for c in 0..d {
                row.push(num(track.variance_se(i, c)));
            }
            let (m2, se) = (track.second_moment(i), track.second_moment_se(i));
            let bound = (1.0 + 2.0 * init) * (2.0 * k.integral(t.max(0.0))).exp();
            let pass = 1.0 + 2.0 * m2 <= bound + 3.0 * 2.0 * se;
            outcome.passed &= pass;
            row.extend([num(m2), num(se), num(bound), pass.to_string()]);
            moments.row(row);
        }
        if cfg.run.record == Record::Trajectories {
            for p in 0..cfg.run.paths as u64 {
                let key = ParticleKeys::new(sample.seed, 0, p).key(StreamKind::LocalBrownian, 0);
                let path = simulate_sdde(model.as_ref(), &grid, &site, omega, &key, cfg.run.guard)?;
                for i in 0..grid.len() {
                    let mut row = vec![draw.to_string(), p.to_string(), num(grid.time(i))];
                    row.extend(path.at(i).iter().map(|v| num(*v)));
                    paths.row(row);
                }
            }
        }
    }
    let stem = &cfg.run.output;
    outcome.add(format!("{stem}_moments.tsv"), &moments);
    if cfg.run.record == Record::Trajectories {
        outcome.add(format!("{stem}_paths.tsv"), &paths);
    }
    Ok(outcome)
}

fn trajectory_table(cfg: &Config, model: &dyn Model, particles: usize) -> Table {
    let d = model.dims().state;
    let cols = ["draw", "replica", "t"]
        .into_iter()
        .map(String::from)
        .chain((0..particles).flat_map(|p| (0..d).map(move |c| format!("x{p}_{c}"))));
    let mut t = Table::new(cols);
    header(&mut t, cfg, model);
    t
}

fn push_trajectories(t: &mut Table, draw: u64, replica: u64, store: &TrajectoryStore) {
    for i in 0..store.grid().len() {
        let mut row = vec![draw.to_string(), replica.to_string(), num(store.grid().time(i))];
        for p in 0..store.particles() {
            row.extend(store.value(p, i).iter().map(|v| num(*v)));
        }
        t.row(row);
    }
}

fn simulate_networks(cfg: &Config) -> mvnet::Result<Outcome> {
    let model = cfg.model()?;
    let opts = cfg.run.options();
    let mut table = trajectory_table(cfg, model.as_ref(), cfg.layout.len());
    table
        .meta("particles", cfg.layout.len())
        .meta("layout_digest", cfg.layout.digest())
        .meta("reduction", format!("{:?}", opts.reduction).to_lowercase());
    let mut deviation = None::<f64>;
    for draw in 0..cfg.run.draws as u64 {
        let sample = cfg.disorder.sample(cfg.noise.seed, draw);
        for rep in 0..cfg.run.replicas as u64 {
            let run = simulate_network(model.as_ref(), &cfg.layout, &cfg.grid, &sample.omega, sample.seed, rep, &opts)?;
            if let Some(d) = run.audit_deviation {
                deviation = Some(deviation.unwrap_or(0.0).max(d));
            }
            push_trajectories(&mut table, draw, rep, &run.store);
        }
    }
    let mut outcome = Outcome::new();
    if let Some(d) = deviation {
        table.meta("fast_path_max_relative_deviation", num(d));
        outcome.passed = d < 1e-12;
    }
    outcome.add(format!("{}_network.tsv", cfg.run.output), &table);
    Ok(outcome)
}

/// Same-cell pairs: pair `i` lies in cell `i mod cells`, mirrored around the
/// cell midpoint.
pub fn continuity_pairs(layout: &SpatialLayout, count: usize) -> Vec<(Site, Site)> {
    let cells: Vec<_> = layout.cells().iter().filter(|c| c.mass > 0.0).collect();
    (0..count)
        .map(|i| {
            let cell = cells[i % cells.len()];
            let u = ((i / cells.len()) % 4) as f64 / 8.0 + 1.0 / 16.0;
            let at = |u: f64, index: usize| {
                let point: Vec<f64> = cell.lower.iter().zip(&cell.upper).map(|(lo, hi)| lo + (hi - lo) * u).collect();
                Site {
                    index,
                    population: cell.population,
                    cell: cell.id,
                    relative: cell.relative(&point),
                    point,
                }
            };
            (at(u, 2 * i), at(1.0 - u, 2 * i + 1))
        })
        .collect()
}

fn meanfield(cfg: &Config) -> mvnet::Result<Outcome> {
    if !matches!(cfg.run.mode, None | Some(Mode::Meanfield)) {
        return Err(mode_error(cfg, "meanfield"));
    }
    let model = cfg.model()?;
    let opts = cfg.run.options();
    let grid = cfg.grid;
    let p = cfg.layout.populations();
    let mut reps = trajectory_table(cfg, model.as_ref(), cfg.layout.len());
    reps.meta("copies", cfg.run.copies);
    let mut bounds = Table::new([
        "draw",
        "t",
        "second_moment",
        "se",
        "running_sup",
        "running_sup_se",
        "c1",
        "c2_eps",
        "pass",
    ]);
    header(&mut bounds, cfg, model.as_ref());
    bounds.meta("copies", cfg.run.copies).meta("epsilon", num(model.cell_epsilon()));
    let mut continuity = Table::new(["draw", "t", "gap", "se", "bound", "pass"]);
    header(&mut continuity, cfg, model.as_ref());
    continuity
        .meta("pairs", cfg.run.continuity_pairs)
        .meta("replicas", cfg.run.continuity_replicas)
        .meta("epsilon", num(model.cell_epsilon()));
    let pairs = continuity_pairs(&cfg.layout, cfg.run.continuity_pairs);
    let mut outcome = Outcome::new();
    for draw in 0..cfg.run.draws as u64 {
        let sample = cfg.disorder.sample(cfg.noise.seed, draw);
        let omega = &sample.omega;
        let copies = simulate_copies(model.as_ref(), &cfg.layout, &grid, omega, cfg.run.copies, sample.seed, &opts)?;
        for rep in 0..cfg.run.replicas as u64 {
            let keys: Vec<_> = (0..cfg.layout.len())
                .map(|r| ParticleKeys::new(sample.seed, r as u64, rep))
                .collect();
            let run = simulate_representatives(model.as_ref(), &grid, omega, &copies, cfg.layout.sites(), &keys, &opts)?;
            push_trajectories(&mut reps, draw, rep, &run.store);
        }
        for row in bound_table(model.as_ref(), &copies, p, omega)? {
            outcome.passed &= row.pass;
            bounds.row(vec![
                draw.to_string(),
                num(row.t),
                num(row.second_moment),
                num(row.se),
                num(row.running_sup),
                num(row.running_sup_se),
                num(row.c1),
                num(row.c2_eps),
                row.pass.to_string(),
            ]);
        }
        if !pairs.is_empty() {
            let rows = continuity_audit(
                model.as_ref(),
                &grid,
                omega,
                &copies,
                &pairs,
                p,
                sample.seed,
                cfg.run.continuity_replicas,
                &opts,
            )?;
            let limit = cfg.run.continuity_horizon.unwrap_or(f64::INFINITY);
            for row in rows.into_iter().filter(|r| r.t <= limit + 1e-12) {
                outcome.passed &= row.pass;
                continuity.row(vec![
                    draw.to_string(),
                    num(row.t),
                    num(row.gap),
                    num(row.se),
                    num(row.bound),
                    row.pass.to_string(),
                ]);
            }
        }
    }
    let stem = &cfg.run.output;
    outcome.add(format!("{stem}_representatives.tsv"), &reps);
    outcome.add(format!("{stem}_bounds.tsv"), &bounds);
    if !pairs.is_empty() {
        outcome.add(format!("{stem}_continuity.tsv"), &continuity);
    }
    Ok(outcome)
}

pub fn chaos_table(report: &ChaosReport) -> Table {
    let mut t = Table::new([
        "n",
        "s",
        "copies",
        "draws",
        "replicas",
        "gap",
        "se",
        "bound",
        "bound_pass",
        "c1",
        "c2",
        "weight_sum",
        "ratio_deviation",
        "initial_window_max",
    ]);
    t.meta("model", &report.model);
    if let Some(f) = report.fit {
        t.meta("slope", num(f.slope))
            .meta("intercept", num(f.intercept))
            .meta("slope_se", num(f.slope_se));
    }
    t.meta(
        "slope_band",
        format!("{} {}", num(report.spec.slope_band.0), num(report.spec.slope_band.1)),
    )
    .meta("slope_pass", report.slope_pass)
    .meta("decreasing", report.decreasing())
    .meta("integrability_estimate", num(report.integrability.estimate))
    .meta("integrability_divergent", report.integrability.divergent);
    for e in &report.entries {
        t.row(vec![
            e.n.to_string(),
            e.s.iter().map(|s| num(*s)).collect::<Vec<_>>().join(","),
            e.copies.to_string(),
            e.draws.to_string(),
            e.replicas.to_string(),
            num(e.gap),
            num(e.se),
            num(e.bound),
            e.bound_pass.to_string(),
            num(e.c1),
            num(e.c2),
            num(e.weight_sum),
            num(e.ratio_deviation),
            num(e.initial_window_max),
        ]);
    }
    t
}

fn chaos_study(cfg: &Config) -> mvnet::Result<Outcome> {
    if !matches!(cfg.run.mode, None | Some(Mode::ChaosStudy)) {
        return Err(mode_error(cfg, "chaos-study"));
    }
    let spec = cfg.study_spec();
    // Presets depend on the layout only through its cells, which every study size shares.
    let model = mvnet::presets::build(
        &cfg.model_id,
        &cfg.model_params,
        cfg.noise.nu_total,
        &cfg.lambda,
        &spec.layout(spec.sizes[0])?,
    )?;
    let report = convergence_study(model.as_ref(), &spec, &cfg.disorder, cfg.noise.seed, &cfg.run.options())?;
    let mut outcome = Outcome::new();
    outcome.passed = report.passed() && report.entries.iter().all(|e| e.initial_window_max == 0.0);
    let stem = &cfg.run.output;
    outcome.add(format!("{stem}_chaos.tsv"), &chaos_table(&report));
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    outcome.files.push((format!("{stem}_chaos.json"), json + "\n"));
    Ok(outcome)
}

fn audit(cfg: &Config) -> mvnet::Result<Outcome> {
    let model = cfg.model()?;
    let omegas = cfg.omegas(cfg.audit.draws);
    let setup = AuditSetup {
        grid: &cfg.grid,
        lambda: &cfg.lambda,
        layout: &cfg.layout,
        omegas: if cfg.disorder.dim() == 0 { &[] } else { &omegas },
        trials: cfg.audit.trials,
        seed: cfg.noise.seed,
    };
    let mut reports = check_monotonicity(model.as_ref(), &setup);
    reports.extend(check_growth(model.as_ref(), &setup));
    let rates: Vec<_> = omegas.iter().map(|w| model.rates(w)).collect();
    let h9 = integrability_audit(&rates, cfg.layout.populations(), cfg.layout.weight_sum(), cfg.grid.horizon());
    let mut t = Table::new(["condition", "trials", "violations", "max_violation", "mc_se", "pass"]);
    t.meta("model", model.id())
        .meta("seed", cfg.noise.seed)
        .meta("integrability_draws", h9.draws)
        .meta("integrability_estimate", num(h9.estimate))
        .meta("integrability_se", num(h9.se))
        .meta("integrability_max_share", num(h9.max_share))
        .meta("integrability_divergent", h9.divergent);
    let mut outcome = Outcome::new();
    outcome.passed = !h9.divergent;
    for r in &reports {
        outcome.passed &= r.passed();
        t.row(vec![
            r.condition.clone(),
            r.trials.to_string(),
            r.violations.to_string(),
            num(r.max_violation),
            r.mc_se.map_or("-".into(), num),
            r.passed().to_string(),
        ]);
    }
    outcome.add(format!("{}_audit.tsv", cfg.run.output), &t);
    Ok(outcome)
}
