//! Compiles and runs a C program against the generated header and the
//! static library, verifying the ABI end to end.

use std::path::PathBuf;
use std::process::Command;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target_dir = {
        // tests run from target/<profile>/deps
        let exe = std::env::current_exe().unwrap();
        exe.parent().unwrap().parent().unwrap().to_path_buf()
    };
    let staticlib = target_dir.join("libllg_ffi.a");
    // tests only link the rlib; build the C artifact explicitly so it is
    // never stale
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "-p", "llg-ffi"])
        .current_dir(&manifest)
        .status()
        .expect("invoke cargo");
    assert!(status.success(), "cargo build -p llg-ffi failed");
    assert!(staticlib.exists(), "static library missing at {staticlib:?}");

    let work = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c_abi");
    std::fs::create_dir_all(&work).unwrap();
    let exe = work.join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/data/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&staticlib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("invoke cc");
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&exe).output().expect("run smoke binary");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "smoke binary failed: {stdout}");
    assert!(stdout.contains("vertices=27 tets=48 faces=48"), "{stdout}");
    assert!(stdout.contains("t=0.020000"), "{stdout}");
    assert!(stdout.ends_with("ok\n"), "{stdout}");
    let err_len: usize = stdout
        .lines()
        .find_map(|l| l.strip_prefix("error_len="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err_len > 0);
}
