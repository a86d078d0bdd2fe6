use thz_jcs::config::ExperimentConfig;
use thz_jcs::experiment::{cmd_dataset, cmd_evaluate, cmd_explain, cmd_train, Layout, Scheme, TopologySource};
use thz_jcs::scenario::VehicleCounts;
use thz_jcs::Error;

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::smoke();
    c.dataset.train = 10;
    c.dataset.validate = 5;
    c.dataset.test = 10;
    c.gnn.embedding_dim = 8;
    c.gnn.head_layer_sizes = vec![8];
    c.gnn.iterations = 20;
    c.gnn.batch_size = 4;
    c
}

#[test]
fn ten_topologies_give_at_most_ten_records() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_dataset(&tiny(), &Layout::new(dir.path())).unwrap();
    for split in &s.splits {
        assert!(split.records <= split.drawn);
        assert_eq!(split.records + split.infeasible_skipped, split.drawn);
    }
    assert_eq!(s.splits[0].drawn, 10);
}

#[test]
fn target_count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let mut cfg = tiny();
    cfg.dataset.train = 40;
    cmd_dataset(&cfg, &layout).unwrap();
    cfg.scenario.counts = VehicleCounts::new(5, 2, 1);
    let err = cmd_train(&cfg, &layout).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("L = 4")), "{err}");
}

#[test]
fn evaluation_is_sound_and_bounded_by_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let mut cfg = tiny();
    cfg.dataset.train = 60;
    cfg.dataset.test = 60;
    cmd_dataset(&cfg, &layout).unwrap();
    cmd_train(&cfg, &layout).unwrap();
    let s = cmd_evaluate(&cfg, &layout, false).unwrap();
    assert_eq!(s.unsound_results, 0);
    let a = s.metrics.iter().find(|m| m.scheme == Scheme::Optimal).unwrap();
    assert_eq!(a.subset_accuracy, 1.0);
    for m in &s.metrics {
        assert!(m.sum_rate_mean <= a.sum_rate_mean * (1.0 + 1e-12));
        assert!(m.ratio_ci_low <= m.ratio_mean && m.ratio_mean <= m.ratio_ci_high);
    }
    let csv = std::fs::read_to_string(dir.path().join("eval/instances.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * s.test_instances);

    let e = cmd_explain(&cfg, &layout, &TopologySource::Generated).unwrap();
    assert_eq!(e, cmd_explain(&cfg, &layout, &TopologySource::Generated).unwrap());
    if e.feasible {
        assert_eq!(e.links.len(), 4);
    }
}

#[test]
fn missing_checkpoint_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = tiny();
    cmd_dataset(&cfg, &layout).unwrap();
    assert!(matches!(cmd_evaluate(&cfg, &layout, false), Err(Error::Io { .. })));
}
