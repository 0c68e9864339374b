use mvnet::chaos::convergence_study;
use mvnet::config::Config;

fn study(seed: u64) -> mvnet::chaos::ChaosReport {
    let cfg = Config::parse(&format!(
        "[grid]\ntau = 0.2\nn = 10\nhorizon = 1.0\n[model]\nid = \"fhn\"\n[noise]\nseed = {seed}\nnu_total = 1.0\n\
         [study]\nsizes = [8, 32]\ncopies = 256\nreplicas = 32\ndraws = 2\n"
    ))
    .unwrap();
    let spec = cfg.study_spec();
    let model = mvnet::presets::build("fhn", &cfg.model_params, 1.0, &cfg.lambda, &spec.layout(8).unwrap()).unwrap();
    convergence_study(model.as_ref(), &spec, &cfg.disorder, seed, &cfg.run.options()).unwrap()
}

#[test]
fn gaps_are_statistically_reproducible() {
    let (a, b) = (study(1), study(2));
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.n, y.n);
        let se = (x.se * x.se + y.se * y.se).sqrt();
        assert!((x.gap - y.gap).abs() <= 3.0 * se, "N = {}: {} vs {} (se {se})", x.n, x.gap, y.gap);
        assert_eq!(x.initial_window_max, 0.0);
        assert!(x.bound_pass && x.gap <= x.bound);
    }
    assert!(a.entries[1].gap < a.entries[0].gap);
}

#[test]
fn identical_seeds_give_identical_reports() {
    assert_eq!(
        serde_json::to_string(&study(4)).unwrap(),
        serde_json::to_string(&study(4)).unwrap()
    );
}
