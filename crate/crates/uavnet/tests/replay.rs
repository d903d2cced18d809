use std::io::BufReader;

use uavnet::run::run_train;
use uavnet::trajectory::replay;
use uavnet::RunConfig;

#[test]
fn trained_trajectories_replay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.training.episodes = 4;
    cfg.training.horizon = 20;
    cfg.training.batch_size = 16;
    cfg.training.actor_hidden = vec![16];
    cfg.training.critic_hidden = vec![16];
    cfg.seed = 21;
    run_train(&cfg).unwrap();
    let f = std::fs::File::open(dir.path().join("trajectories.jsonl")).unwrap();
    let rep = replay(BufReader::new(f)).unwrap();
    assert_eq!(rep.episodes, 4);
    assert!(rep.slots > 0);
    assert!(rep.ok(), "{:?}", rep.mismatches);
}

#[test]
fn different_seeds_give_different_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.training.episodes = 1;
    cfg.training.horizon = 5;
    let mut files = Vec::new();
    for seed in [1, 2] {
        cfg.seed = seed;
        cfg.output_dir = dir.path().join(seed.to_string());
        run_train(&cfg).unwrap();
        files.push(std::fs::read(cfg.output_dir.join("metrics.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}
