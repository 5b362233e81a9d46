//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on the path.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "xltag.h"

int main(void) {
    double g = 0.0;
    if (xltag_gamma(20, 500, &g) != XLTAG_STATUS_OK || g != 0.04) return 1;
    if (xltag_last_error() != NULL) return 2;
    if (xltag_gamma(1, 0, &g) != XLTAG_STATUS_INVALID_INPUT) return 3;
    if (xltag_last_error() == NULL || strlen(xltag_last_error()) == 0) return 4;

    XltagModel *m = NULL;
    if (xltag_model_load("/no/such/model.bin", &m) != XLTAG_STATUS_IO) return 5;
    if (m != NULL) return 6;
    if (strstr(xltag_last_error(), "/no/such/model.bin") == NULL) return 7;
    xltag_model_free(NULL);
    puts("ok");
    return 0;
}
"#;

/// The static library next to the test binary in `target/<profile>/deps`,
/// or one level up.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let here = deps.join("libxltag_ffi.a");
    if here.exists() {
        here
    } else {
        deps.parent().unwrap().join("libxltag_ffi.a")
    }
}

fn have(cmd: &str) -> bool {
    Command::new(cmd).arg("--version").output().is_ok()
}

#[test]
fn c_program_links_and_runs() {
    if !have("cc") {
        eprintln!("no C compiler found, skipping");
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = static_lib();
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "compiling the C smoke program failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
