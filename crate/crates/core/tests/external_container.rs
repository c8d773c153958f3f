// SPDX-License-Identifier: MIT OR Apache-2.0

//! Containers written by something other than `container::save`: raw bytes
//! assembled here, and the Python writer under `python/`.

use std::fs;
use std::path::Path;
use std::process::Command;

use mdprobe::container::{self, LABELS_FILE, MANIFEST_FILE, PHI_MINUS_FILE, PHI_PLUS_FILE};
use mdprobe::{normalize, ProbeError};
use serde_json::json;

fn f32le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn write_raw(dir: &Path, manifest: serde_json::Value, plus: &[f32], minus: &[f32], labels: Option<&[u8]>) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
    fs::write(dir.join(PHI_PLUS_FILE), f32le(plus)).unwrap();
    fs::write(dir.join(PHI_MINUS_FILE), f32le(minus)).unwrap();
    if let Some(l) = labels {
        fs::write(dir.join(LABELS_FILE), l).unwrap();
    }
}

fn extractor_manifest(n: usize, d: usize, labels: bool) -> serde_json::Value {
    json!({
        "version": 1, "n": n, "d": d, "dtype": "f32le",
        "normalized": false, "labels_present": labels,
        "meta": {"model_id": "tiny-gpt", "architecture": "decoder-only", "layer": "-1", "token_rule": "last"}
    })
}

#[test]
fn hand_assembled_container_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let plus = [0.1f32, -2.0, 3.5, 1e-7, 0.0, 65504.0];
    let minus = [1.0f32, 1.0, -1.0, 0.25, 7.0, -0.5];
    write_raw(tmp.path(), extractor_manifest(3, 2, true), &plus, &minus, Some(&[1, 0, 1]));

    let set = container::load(tmp.path()).unwrap();
    assert_eq!((set.n(), set.d()), (3, 2));
    assert!(!set.is_normalized());
    assert_eq!(set.labels(), Some(&[1u8, 0, 1][..]));
    assert_eq!(set.meta()["token_rule"], "last");
    for (got, want) in set.phi_plus().iter().zip(plus) {
        assert_eq!(*got, f64::from(want));
    }
    normalize(&set).unwrap();

    // Saving what was loaded reproduces the data blobs exactly.
    let again = tmp.path().join("again");
    container::save(&set, &again).unwrap();
    for f in [PHI_PLUS_FILE, PHI_MINUS_FILE, LABELS_FILE] {
        assert_eq!(fs::read(tmp.path().join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_external_containers_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    type Expect = fn(&ProbeError) -> bool;
    let cases: Vec<(serde_json::Value, usize, Option<&[u8]>, Expect)> = vec![
        (extractor_manifest(2, 2, false), 3, None, |e| matches!(e, ProbeError::ShapeMismatch { .. })),
        (extractor_manifest(2, 2, true), 4, Some(&[1]), |e| matches!(e, ProbeError::ShapeMismatch { .. })),
        (extractor_manifest(2, 2, true), 4, None, |e| matches!(e, ProbeError::MissingBlob(_))),
        (extractor_manifest(2, 2, true), 4, Some(&[1, 2]), |e| matches!(e, ProbeError::Validation(_))),
        (
            json!({"version": 1, "n": 2, "d": 2, "dtype": "f16", "normalized": false, "labels_present": false, "meta": {}}),
            4,
            None,
            |e| matches!(e, ProbeError::CorruptManifest(_)),
        ),
    ];
    for (i, (manifest, len, labels, expect)) in cases.into_iter().enumerate() {
        let dir = tmp.path().join(i.to_string());
        let values = vec![0.5f32; len];
        write_raw(&dir, manifest, &values, &values, labels);
        let err = container::load(&dir).unwrap_err();
        assert!(expect(&err), "case {i}: {err}");
    }
}

#[test]
fn python_writer_output_loads() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let plus = vec![vec![0.1, 0.2, 0.3], vec![-1.5, 2.25, 1e-3], vec![4.0, -0.7, 0.0], vec![3.3, 3.3, -3.3]];
    let minus = vec![vec![0.0, 1.0, 0.0], vec![1.5, -2.0, 0.5], vec![0.4, 0.7, 9.0], vec![-3.3, 0.0, 1.0]];
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        serde_json::to_vec(&json!({
            "phi_plus": plus, "phi_minus": minus, "labels": [1, 0, 0, 1],
            "meta": {"model_id": "tiny", "layer": 6, "token_rule": "last"}
        }))
        .unwrap(),
    )
    .unwrap();
    let out = tmp.path().join("container");
    let python = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python");
    let status = Command::new("python3")
        .args(["-m", "mdprobe_extract"])
        .arg(&spec)
        .arg(&out)
        .env("PYTHONPATH", python)
        .status()
        .unwrap();
    assert!(status.success());

    let set = container::load(&out).unwrap();
    assert_eq!((set.n(), set.d()), (4, 3));
    assert!(!set.is_normalized());
    assert_eq!(set.labels(), Some(&[1u8, 0, 0, 1][..]));
    assert_eq!(set.meta()["layer"], "6");
    for (got, want) in set.phi_minus().iter().zip(minus.concat()) {
        assert_eq!(*got, f64::from(want as f32));
    }
    let again = tmp.path().join("again");
    container::save(&set, &again).unwrap();
    for f in [PHI_PLUS_FILE, PHI_MINUS_FILE, LABELS_FILE] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}
