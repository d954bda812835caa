use std::fs;

use echoplan::checkpoint::{
    config_hash, decode_tensors, encode_tensors, initial_checkpoint, load_checkpoint, save_checkpoint, DType,
    MANIFEST_FILE, TENSORS_FILE,
};
use echoplan::dataset::*;
use echoplan::FormatError;
use echoplan_core::trainer::{Architecture, TrainConfig, Trainer};
use echoplan_core::world::{GridSpec, Scenario};
use echoplan_core::Tensor;

fn small_grid() -> GridSpec {
    GridSpec {
        h: 8,
        w: 8,
        cell_size: 4.0,
    }
}

fn tiny() -> TrainConfig {
    TrainConfig {
        grid: small_grid(),
        channels: 8,
        tokens: 4,
        architecture: Architecture {
            encoder_hidden: 4,
            heads: 2,
            attn_layers: 1,
            mln_hidden: 6,
            planner_hidden: 8,
        },
        learning_rate: 1e-3,
        epochs: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn dataset_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut eps = generate_split(7, 3, &Scenario::ALL, &GridSpec::default());
    save_dataset(&eps, dir.path(), "train").unwrap();
    let back = load_dataset(&dir.path().join("train")).unwrap();
    eps.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    assert!(back == eps, "episodes differ after a round trip");
    let meta: EpisodeMeta =
        serde_json::from_slice(&fs::read(dir.path().join("train").join(&eps[0].scenario_id).join("meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta.frames, eps[0].frames.len());
    assert_eq!(meta.grid, GridSpec::default());
}

#[test]
fn episode_header_carries_magic_and_dims() {
    let ep = &generate_split(1, 1, &[Scenario::Straight], &small_grid())[0];
    let bytes = encode_episode(ep);
    assert_eq!(&bytes[..4], b"EPW1");
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    assert_eq!((dim(0), dim(1), dim(2), dim(3)), (8, 8, 5, 6));
    assert_eq!(dim(5) as usize, ep.frames.len());
}

fn saved_episode() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let eps = generate_split(3, 1, &[Scenario::IntersectionMixed], &small_grid());
    save_dataset(&eps, dir.path(), "s").unwrap();
    let ep_dir = dir.path().join("s").join(&eps[0].scenario_id);
    (dir, ep_dir)
}

#[test]
fn truncated_raster_is_reported() {
    let (_tmp, ep_dir) = saved_episode();
    let path = ep_dir.join("frames.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..28 + 100]).unwrap();
    let err = load_episode(&ep_dir).unwrap_err();
    assert!(matches!(err, FormatError::RasterSizeMismatch { frame: 0, .. }), "{err:?}");
    assert!(err.to_string().contains("raster size mismatch"), "{err}");
}

#[test]
fn empty_split_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, FormatError::NoEpisodes(_)));
    assert!(err.to_string().contains("no episodes found"), "{err}");
}

#[test]
fn format_errors_are_distinct_and_name_the_field() {
    let (_tmp, ep_dir) = saved_episode();
    let frames = ep_dir.join("frames.bin");
    let good = fs::read(&frames).unwrap();

    fs::remove_file(&frames).unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::MissingFile(p)) if p == frames));

    let mut bad = good.clone();
    bad[0] = b'X';
    fs::write(&frames, &bad).unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::MalformedHeader { field: "magic", .. })));

    fs::write(&frames, &good[..10]).unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::MalformedHeader { field: "w", .. })));

    let mut bad = good.clone();
    bad[4..8].copy_from_slice(&9u32.to_le_bytes());
    fs::write(&frames, &bad).unwrap();
    let err = load_episode(&ep_dir).unwrap_err();
    assert!(
        matches!(err, FormatError::DimensionMismatch { field: "h", expected: 8, actual: 9, .. }),
        "{err:?}"
    );

    let mut bad = good.clone();
    bad.push(0);
    fs::write(&frames, &bad).unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::TrailingBytes { extra: 1, .. })));

    let mut bad = good.clone();
    let last = bad.len() - 1;
    bad[last] = 7;
    fs::write(&frames, &bad).unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::InvalidValue { field: "command", .. })));

    fs::write(&frames, &good).unwrap();
    fs::write(ep_dir.join("meta.json"), b"{\"episode_id\": 3}").unwrap();
    assert!(matches!(load_episode(&ep_dir), Err(FormatError::Json { .. })));
}

#[test]
fn tree_hash_depends_on_content_not_location() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let eps = generate_split(5, 2, &Scenario::ALL, &small_grid());
    save_dataset(&eps, a.path(), "x").unwrap();
    save_dataset(&eps, b.path(), "x").unwrap();
    let ha = tree_hash(&a.path().join("x")).unwrap();
    assert_eq!(ha, tree_hash(&b.path().join("x")).unwrap());
    let other = generate_split(6, 2, &Scenario::ALL, &small_grid());
    save_dataset(&other, b.path(), "y").unwrap();
    assert_ne!(ha, tree_hash(&b.path().join("y")).unwrap());
    // git's hash of the empty blob, with sha256 in place of sha1
    assert_eq!(
        blob_hash(b""),
        "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
    );
}

#[test]
fn tensor_table_round_trips_in_both_widths() {
    let a = Tensor::from_vec(2, 3, vec![0.1, -2.5, 3.0, 1e-8, 7.25, -0.0]);
    let b = Tensor::from_vec(1, 1, vec![42.0]);
    let entries = vec![(String::from("a"), &a), (String::from("b.w"), &b)];
    let p = std::path::Path::new("t.ept");
    let back = decode_tensors(&encode_tensors(&entries, DType::F64), p).unwrap();
    assert_eq!(back, vec![(String::from("a"), a.clone()), (String::from("b.w"), b.clone())]);
    let back32 = decode_tensors(&encode_tensors(&entries, DType::F32), p).unwrap();
    for ((_, x), y) in back32.iter().zip([&a, &b]) {
        for (u, v) in x.data.iter().zip(&y.data) {
            assert_eq!(*u, *v as f32 as f64);
        }
    }
    let bytes = encode_tensors(&entries, DType::F64);
    assert!(decode_tensors(&bytes[..bytes.len() - 1], p).is_err());
}

#[test]
fn checkpoint_round_trips_and_resumes_identically() {
    let c = TrainConfig {
        max_steps: Some(7),
        ..tiny()
    };
    let eps = generate_split(2, 3, &Scenario::ALL, &c.grid);
    let mut straight = Trainer::new(c.clone(), &eps).unwrap();
    straight.run().unwrap();
    let straight = straight.into_checkpoint();

    let mut first = Trainer::new(c, &eps).unwrap();
    for _ in 0..3 {
        first.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&first.checkpoint(), dir.path(), DType::F64).unwrap();
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded, first.checkpoint());

    let mut resumed = Trainer::resume(loaded, &eps).unwrap();
    resumed.run().unwrap();
    assert_eq!(resumed.into_checkpoint(), straight);
}

#[test]
fn checkpoint_load_validates_hash_names_and_shapes() {
    let c = tiny();
    let ck = initial_checkpoint(&c);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&ck, dir.path(), DType::F64).unwrap();
    let manifest_path = dir.path().join(MANIFEST_FILE);
    let original = fs::read_to_string(&manifest_path).unwrap();
    assert!(original.contains(&config_hash(&c)));

    let tampered = original.replacen(&config_hash(&c), &"0".repeat(64), 1);
    fs::write(&manifest_path, tampered).unwrap();
    let err = load_checkpoint(dir.path()).unwrap_err();
    assert!(matches!(err, FormatError::InvalidValue { field: "config_hash", .. }), "{err:?}");
    fs::write(&manifest_path, &original).unwrap();

    let tensors_path = dir.path().join(TENSORS_FILE);
    let mut table = decode_tensors(&fs::read(&tensors_path).unwrap(), &tensors_path).unwrap();
    table[0].1 = Tensor::zeros(1, 1);
    let entries: Vec<(String, &Tensor)> = table.iter().map(|(n, t)| (n.clone(), t)).collect();
    fs::write(&tensors_path, encode_tensors(&entries, DType::F64)).unwrap();
    let err = load_checkpoint(dir.path()).unwrap_err();
    assert!(matches!(err, FormatError::InvalidValue { field: "tensor_shape", .. }), "{err:?}");

    table[0].1 = ck.params.get(ck.params.iter().next().unwrap().0).clone();
    table.swap(1, 2);
    let entries: Vec<(String, &Tensor)> = table.iter().map(|(n, t)| (n.clone(), t)).collect();
    fs::write(&tensors_path, encode_tensors(&entries, DType::F64)).unwrap();
    let err = load_checkpoint(dir.path()).unwrap_err();
    assert!(matches!(err, FormatError::InvalidValue { field: "tensor_name", .. }), "{err:?}");

    save_checkpoint(&ck, dir.path(), DType::F64).unwrap();
    assert_eq!(load_checkpoint(dir.path()).unwrap(), ck);
    fs::remove_file(dir.path().join(TENSORS_FILE)).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(FormatError::MissingFile(_))));
}
