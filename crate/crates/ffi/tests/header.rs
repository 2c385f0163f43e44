//! The generated header compiles as C and C++, and a C program linked
//! against the static library runs a fit.

use std::path::{Path, PathBuf};
use std::process::Command;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = header_dir().join("interlaced.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["interlaced_fit", "interlaced_recalibrate", "interlaced_circuit_free", "InterlacedStatus_Ok"] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
    for (tool, lang) in [("cc", "c"), ("c++", "c++")] {
        if !have(tool) {
            eprintln!("{tool} not found; skipping {lang} syntax check");
            continue;
        }
        let out = Command::new(tool)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

/// Static library built alongside this test binary (`target/<profile>/deps`),
/// falling back to `target/<profile>`.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = deps.join("libinterlaced_ffi.a");
    if lib.exists() {
        return lib;
    }
    deps.parent().unwrap().join("libinterlaced_ffi.a")
}

#[test]
fn c_program_links_and_fits() {
    let lib = static_lib();
    if !have("cc") || !lib.exists() {
        eprintln!("cc or {} unavailable; skipping link test", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "interlaced.h"

int main(void) {
    double re[16], im[16];
    InterlacedCircuit *c = NULL;
    InterlacedFitResult *r = NULL;
    if (interlaced_haar_unitary(4, 7, re, im, 16) != InterlacedStatus_Ok) return 2;
    if (interlaced_circuit_new_ideal(4, 5, 1.0, &c) != InterlacedStatus_Ok) return 3;
    InterlacedOptions o = interlaced_options_default();
    if (interlaced_fit(c, re, im, 4, &o, 1, &r) != InterlacedStatus_Ok) {
        fprintf(stderr, "%s\n", interlaced_last_error());
        return 4;
    }
    printf("%.3e %d\n", interlaced_fit_result_loss(r), (int)interlaced_fit_result_converged(r));
    int ok = interlaced_fit_result_converged(r);
    interlaced_fit_result_free(r);
    interlaced_circuit_free(c);
    return ok ? 0 : 1;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stdout));
}
