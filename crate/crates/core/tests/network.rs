use mvnet::grid::{DelayMeasure, TimeGrid};
use mvnet::layout::SpatialLayout;
use mvnet::meanfield::{empirical_expectation, simulate_copies, simulate_mean_field};
use mvnet::network::{simulate_network, Reduction, RunOptions, SourceSet};
use mvnet::noise::{NoiseStreamKey, StreamKind};
use mvnet::presets::{FhnModel, FhnParams, LinearModel, LinearParams};
use mvnet::sdde::{simulate_sdde, DEFAULT_GUARD};
use mvnet::Error;

fn grid() -> TimeGrid {
    TimeGrid::new(0.2, 10, 1.0).unwrap()
}

fn fhn(nu: f64, layout: &SpatialLayout) -> FhnModel {
    let g = grid();
    let lam = DelayMeasure::point(&g, -0.2).unwrap();
    FhnModel::new(FhnParams::default(), nu, &lam, layout).unwrap()
}

#[test]
fn balanced_mean_coupling_is_stationary() {
    // -a x + k_delay * mean(y(-tau)) vanishes when everything equals x0.
    let g = grid();
    let lam = DelayMeasure::point(&g, -0.2).unwrap();
    let p = LinearParams {
        sigma: 0.0,
        c_jump: 0.0,
        k_delay: 1.0,
        ..Default::default()
    };
    let m = LinearModel::new(p, 0.0, &lam).unwrap();
    let layout = SpatialLayout::lattice(1, 5, 1).unwrap();
    for reduction in [Reduction::Direct, Reduction::Fast] {
        let opts = RunOptions {
            reduction,
            ..Default::default()
        };
        let run = simulate_network(&m, &layout, &g, &[], 1, 0, &opts).unwrap();
        for p in 0..5 {
            assert_eq!(run.store.value(p, g.len() - 1), &[1.0]);
        }
    }
}

#[test]
fn pull_coupling_conserves_the_mean_without_noise() {
    let g = grid();
    let lam = DelayMeasure::new(&g, &[-0.2, 0.0], &[0.5, 0.5]).unwrap();
    let p = LinearParams {
        a: 1e-12,
        sigma: 0.0,
        c_jump: 0.0,
        x0_sd: 1.0,
        k_pull: 2.0,
        ..Default::default()
    };
    let m = LinearModel::new(p, 0.0, &lam).unwrap();
    let layout = SpatialLayout::lattice(1, 6, 1).unwrap();
    let run = simulate_network(&m, &layout, &g, &[], 3, 0, &RunOptions::default()).unwrap();
    let mean = |i: usize| (0..6).map(|p| run.store.value(p, i)[0]).sum::<f64>() / 6.0;
    let spread = |i: usize| (0..6).map(|p| (run.store.value(p, i)[0] - mean(i)).abs()).fold(0.0, f64::max);
    let last = g.len() - 1;
    assert!((mean(last) - mean(g.n())).abs() < 1e-9);
    assert!(spread(last) < 0.5 * spread(g.n()));
}

#[test]
fn uncoupled_network_particles_are_single_paths() {
    let g = grid();
    let lam = DelayMeasure::point(&g, -0.2).unwrap();
    let m = LinearModel::new(LinearParams::default(), 2.0, &lam).unwrap();
    let layout = SpatialLayout::lattice(1, 3, 1).unwrap();
    let run = simulate_network(&m, &layout, &g, &[], 11, 4, &RunOptions::default()).unwrap();
    for p in 0..3 {
        let key = NoiseStreamKey::new(11, StreamKind::LocalBrownian, p as u64, 0, 4);
        let path = simulate_sdde(&m, &g, &layout.sites()[p], &[], &key, DEFAULT_GUARD).unwrap();
        assert_eq!(path.values, run.store.row(p));
    }
}

#[test]
fn fast_and_direct_sums_agree() {
    let layout = SpatialLayout::lattice(2, 40, 2).unwrap();
    let m = fhn(1.5, &layout);
    let g = grid();
    let run = |reduction, audit| {
        let opts = RunOptions {
            reduction,
            audit,
            ..Default::default()
        };
        simulate_network(&m, &layout, &g, &[], 5, 0, &opts).unwrap()
    };
    let fast = run(Reduction::Fast, true);
    assert!(fast.audit_deviation.unwrap() < 1e-12);
    let direct = run(Reduction::Direct, false);
    for p in 0..layout.len() {
        for (a, b) in fast.store.row(p).iter().zip(direct.store.row(p)) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn self_exclusion_matches_between_reductions() {
    let layout = SpatialLayout::lattice(1, 10, 2).unwrap().with_exclude_self(true);
    let m = fhn(1.0, &layout);
    let opts = RunOptions {
        reduction: Reduction::Fast,
        audit: true,
        ..Default::default()
    };
    let run = simulate_network(&m, &layout, &grid(), &[], 8, 1, &opts).unwrap();
    assert!(run.audit_deviation.unwrap() < 1e-12);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let layout = SpatialLayout::lattice(2, 24, 2).unwrap();
    let m = fhn(1.0, &layout);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_network(&m, &layout, &grid(), &[], 9, 2, &RunOptions::default()).unwrap())
    };
    assert_eq!(run(1).store, run(4).store);
}

#[test]
fn blow_up_is_reported() {
    let g = TimeGrid::new(0.1, 2, 50.0).unwrap();
    let m = mvnet::presets::SquareDrift;
    let layout = SpatialLayout::lattice(1, 2, 1).unwrap();
    let err = simulate_network(&m, &layout, &g, &[], 0, 0, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::BlowUp { .. }));
}

#[test]
fn representatives_share_network_noise_without_interaction() {
    let g = grid();
    let lam = DelayMeasure::point(&g, -0.2).unwrap();
    let m = LinearModel::new(LinearParams::default(), 1.0, &lam).unwrap();
    let layout = SpatialLayout::lattice(1, 4, 1).unwrap();
    let opts = RunOptions::default();
    let net = simulate_network(&m, &layout, &g, &[], 21, 3, &opts).unwrap();
    let mf = simulate_mean_field(&m, &layout, &g, 16, &[], 21, 3, &opts).unwrap();
    assert_eq!(net.store, mf.representatives.store);
}

#[test]
fn copies_weigh_cells_by_mass() {
    let layout = SpatialLayout::lattice(2, 8, 3).unwrap();
    let sources = SourceSet::copies(&layout, 30).unwrap();
    assert_eq!(sources.len(), 60);
    let total: f64 = sources.in_population(1).iter().map(|&s| sources.weights[s]).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let err = SourceSet::copies(&layout, 4).unwrap_err();
    assert!(err.to_string().contains("run.copies"));
}

#[test]
fn empirical_expectation_of_constants() {
    let layout = SpatialLayout::lattice(1, 4, 2).unwrap();
    let m = fhn(0.5, &layout);
    let copies = simulate_copies(&m, &layout, &grid(), &[], 32, 2, &RunOptions::default()).unwrap();
    let one = empirical_expectation(&copies.sources, copies.store(), 3, 0, |_, _| 1.0);
    assert!((one - 1.0).abs() < 1e-12);
    let mean_v = empirical_expectation(&copies.sources, copies.store(), 0, 0, |_, y| y.last()[0]);
    assert!(mean_v.abs() < 0.5);
}
