use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn header() -> String {
    std::fs::read_to_string(crate_dir().join("include/georf.h")).expect("header generated by build.rs")
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for needle in [
        "#ifndef GEORF_H",
        "typedef struct GeorfModel GeorfModel;",
        "typedef struct GeorfDataset GeorfDataset;",
        "GEORF_STATUS_OK = 0",
        "GEORF_STATUS_PANIC = 7",
        "typedef struct GeorfConfig",
        "georf_model_fit(",
        "georf_model_predict_batch(",
        "georf_model_free(",
        "georf_isa_scan(",
        "georf_last_error_message(",
    ] {
        assert!(h.contains(needle), "header lacks {needle}");
    }
}

fn target_dir() -> PathBuf {
    // tests/ binaries live in <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

/// Compile and run a small C program against the static library.
#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libgeorf_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipped: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "georf.h"

int main(void) {
    enum { N = 30, S = 1 };
    double feats[N * S], target[N], x[N], y[N];
    for (int i = 0; i < N; i++) {
        feats[i] = i;
        target[i] = 3.0 * i;
        x[i] = i;
        y[i] = 0.0;
    }
    GeorfDataset *data = NULL;
    if (georf_dataset_new(feats, N, S, target, x, y, &data) != GEORF_STATUS_OK) return 1;
    GeorfConfig cfg;
    georf_config_default(&cfg);
    cfg.ntree = 5;
    cfg.bandwidth = 5;
    cfg.workers = 1;
    GeorfModel *model = NULL;
    if (georf_model_fit(data, &cfg, &model) != GEORF_STATUS_OK) {
        fprintf(stderr, "%s\n", georf_last_error_message());
        return 2;
    }
    double q = 12.0, combined = 0.0;
    if (georf_model_predict(model, 12.0, 0.0, &q, 1, &combined, NULL, NULL) != GEORF_STATUS_OK) return 3;
    if (georf_model_fit(NULL, &cfg, &model) != GEORF_STATUS_NULL_POINTER) return 4;
    printf("%s %.3f\n", georf_version(), combined);
    georf_model_free(model);
    georf_dataset_free(data);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")), "{text}");
}
