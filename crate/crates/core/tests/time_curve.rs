use cad_core::pipeline::{generate_synthetic, run_sequence, RunConfig, SyntheticSpec};

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn update_time_trends_down_within_a_task() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("d");
    let spec = SyntheticSpec { tasks: 1, train_images: 200, test_normal: 2, test_anomalous: 2, dim: 32, grid: (16, 16), ..Default::default() };
    generate_synthetic(&root, &spec).unwrap();
    let mut cfg = RunConfig { dataset_root: root, coreset_capacity: 1000, ..Default::default() };
    cfg.resolve_tasks().unwrap();

    let mut best = vec![f64::INFINITY; 200];
    let mut inserted = Vec::new();
    for _ in 0..3 {
        let out = run_sequence(cfg.clone()).unwrap();
        let updates = &out.stages[0].updates;
        for (b, u) in best.iter_mut().zip(updates) {
            *b = b.min(u.seconds);
        }
        let run: Vec<usize> = updates.iter().map(|u| u.inserted).collect();
        if !inserted.is_empty() {
            assert_eq!(inserted, run);
        }
        inserted = run;
    }
    let (a, b) = (median(&mut best[..100].to_vec()), median(&mut best[100..].to_vec()));
    assert!(b <= a, "median update time rose from {a:.6}s to {b:.6}s");
    let first: usize = inserted[..100].iter().sum();
    let second: usize = inserted[100..].iter().sum();
    assert!(second <= first);
}
