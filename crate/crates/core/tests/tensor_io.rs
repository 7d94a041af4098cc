use std::fs;

use cad_core::pipeline::{generate_synthetic, SyntheticSpec};
use cad_core::tensor_io::{
    discover_tasks, load_bank, load_task, load_task_parts, read_tensor, save_bank, sidecar_path, write_labels,
    write_tensor, EmbeddingBatch, MemoryBankSnapshot, Provenance, TaskParts, TensorFile, BANK_FORMAT_VERSION,
};
use ndarray::Array2;

fn spec() -> SyntheticSpec {
    SyntheticSpec { tasks: 2, train_images: 3, test_normal: 2, test_anomalous: 2, ..Default::default() }
}

#[test]
fn synthetic_tree_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let names = generate_synthetic(tmp.path(), &spec()).unwrap();
    assert_eq!(discover_tasks(tmp.path()).unwrap(), names);
    let data = load_task(tmp.path(), "task_01").unwrap();
    assert_eq!(data.train.len(), 3);
    assert_eq!(data.test.len(), 4);
    assert_eq!(data.image_size, (32, 32));
    assert!(data.has_pixel_ground_truth());
    assert_eq!(data.test.iter().map(|s| s.label as usize).sum::<usize>(), 2);
    for s in &data.test {
        let mask = s.mask.as_ref().unwrap();
        assert_eq!(mask.iter().any(|&v| v == 1), s.label == 1);
        assert_eq!(s.batch.grid(), Some((8, 8)));
        assert_eq!(s.batch.task_id(), "task_01");
    }
    let train_only = load_task_parts(tmp.path(), "task_00", TaskParts::TrainOnly).unwrap();
    assert!(train_only.test.is_empty());
}

#[test]
fn generator_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(a.path(), &spec()).unwrap();
    generate_synthetic(b.path(), &spec()).unwrap();
    for rel in ["task_00/train/0002.cadt", "task_01/test/0003.cadt", "task_01/masks/0001.cadt", "task_00/test/labels.txt"] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn malformed_tasks_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    generate_synthetic(tmp.path(), &spec()).unwrap();
    let test_dir = tmp.path().join("task_00/test");

    write_labels(test_dir.join("labels.txt"), &[0, 1]).unwrap();
    assert_eq!(load_task(tmp.path(), "task_00").unwrap_err().kind(), "label-count-mismatch");

    fs::write(test_dir.join("labels.txt"), "0\n1\n2\n0\n").unwrap();
    assert_eq!(load_task(tmp.path(), "task_00").unwrap_err().kind(), "invalid-label");

    fs::remove_file(test_dir.join("labels.txt")).unwrap();
    assert_eq!(load_task(tmp.path(), "task_00").unwrap_err().kind(), "missing-split");

    let mask = tmp.path().join("task_01/masks/0000.cadt");
    write_tensor(&TensorFile::from_u8(vec![16, 16], vec![0; 256]).unwrap(), &mask).unwrap();
    assert_eq!(load_task(tmp.path(), "task_01").unwrap_err().kind(), "mask-shape-mismatch");

    assert_eq!(load_task(tmp.path(), "absent").unwrap_err().kind(), "missing-split");
}

#[test]
fn bank_files_round_trip_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bank.cadt");
    let snapshot = MemoryBankSnapshot {
        embeddings: Array2::from_shape_fn((5, 3), |(i, j)| (i as f32) - 0.5 * j as f32),
        capacity: 8,
        provenance: (0..5).map(|i| Provenance::new(format!("t{}", i % 2), format!("img{i}"))).collect(),
        format_version: BANK_FORMAT_VERSION,
    };
    save_bank(&snapshot, &path).unwrap();
    assert!(load_bank(&path).unwrap().bitwise_eq(&snapshot));
    assert_eq!(read_tensor(&path).unwrap().dims(), &[5, 3]);

    let empty = MemoryBankSnapshot { embeddings: Array2::zeros((0, 3)), provenance: vec![], ..snapshot.clone() };
    save_bank(&empty, &path).unwrap();
    assert!(!path.exists());
    assert!(load_bank(&path).unwrap().is_empty());

    save_bank(&snapshot, &path).unwrap();
    let side = sidecar_path(&path);
    let text = fs::read_to_string(&side).unwrap();
    fs::write(&side, text.replace("\"format_version\": 1", "\"format_version\": 99")).unwrap();
    assert_eq!(load_bank(&path).unwrap_err().kind(), "version-unsupported");
}

#[test]
fn batches_reject_mismatched_grids() {
    let t = TensorFile::from_f32(vec![2, 3, 4], vec![0.5; 24]).unwrap();
    let b = EmbeddingBatch::from_tensor(t, "t", "s", None).unwrap();
    assert_eq!((b.len(), b.dim(), b.grid()), (6, 4, Some((2, 3))));
    assert!(EmbeddingBatch::new(Array2::zeros((5, 2)), Some((2, 2)), "t", "s").is_err());
}
