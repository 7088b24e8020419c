//! Keeps `include/slt_lab.h` honest: the declared function set must
//! match the Rust exports exactly, the status and scheme constants must
//! agree, and a real C client compiled against the header must link and
//! run against the built shared library.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn header_text() -> String {
    std::fs::read_to_string(manifest_dir().join("include/slt_lab.h")).unwrap()
}

fn source_text() -> String {
    std::fs::read_to_string(manifest_dir().join("src/lib.rs")).unwrap()
}

/// Function names exported from Rust: idents following `extern "C" fn`.
fn exported_functions(source: &str) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for (pos, _) in source.match_indices("extern \"C\" fn ") {
        let rest = &source[pos + "extern \"C\" fn ".len()..];
        let name: String = rest
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if !name.is_empty() {
            names.insert(name);
        }
    }
    names
}

/// Function names declared in the header: `slt_*` idents directly
/// followed by an opening parenthesis (types and the struct tag never
/// are).
fn declared_functions(header: &str) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let bytes = header.as_bytes();
    for (pos, _) in header.match_indices("slt_") {
        if pos > 0 {
            let prev = bytes[pos - 1] as char;
            if prev.is_alphanumeric() || prev == '_' {
                continue;
            }
        }
        let rest = &header[pos..];
        let name: String = rest
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        if rest[name.len()..].starts_with('(') {
            names.insert(name);
        }
    }
    names
}

#[test]
fn header_declares_exactly_the_exported_functions() {
    let exported = exported_functions(&source_text());
    let declared = declared_functions(&header_text());
    assert!(!exported.is_empty());
    assert_eq!(
        declared, exported,
        "header declarations and Rust exports diverge"
    );
}

#[test]
fn header_constants_match_the_rust_values() {
    let header = header_text();
    let expected = [
        ("SLT_OK", slt_lab_ffi::SLT_OK),
        ("SLT_NULL_ARGUMENT", slt_lab_ffi::SLT_NULL_ARGUMENT),
        ("SLT_INVALID_ARGUMENT", slt_lab_ffi::SLT_INVALID_ARGUMENT),
        ("SLT_IO_ERROR", slt_lab_ffi::SLT_IO_ERROR),
        ("SLT_RUNTIME_ERROR", slt_lab_ffi::SLT_RUNTIME_ERROR),
        ("SLT_SCHEME_UNIFORM", slt_lab_ffi::SLT_SCHEME_UNIFORM),
        ("SLT_SCHEME_NORMAL", slt_lab_ffi::SLT_SCHEME_NORMAL),
        (
            "SLT_SCHEME_LOOKS_LINEAR",
            slt_lab_ffi::SLT_SCHEME_LOOKS_LINEAR,
        ),
    ];
    for (name, value) in expected {
        let needle = format!("{name} = {value},");
        assert!(
            header.contains(&needle),
            "header is missing `{needle}`"
        );
    }
}

/// Directory holding the built artifacts for the active profile.
fn profile_dir() -> PathBuf {
    // .../target/<profile>/deps/<test-bin> -> .../target/<profile>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn shared_library() -> PathBuf {
    let direct = profile_dir().join("libslt_lab_ffi.so");
    if direct.exists() {
        return direct;
    }
    // Fall back to the newest hashed artifact under deps/.
    let deps = profile_dir().join("deps");
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(&deps)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("libslt_lab_ffi") && n.ends_with(".so"))
        })
        .collect();
    candidates.sort_by_key(|p| p.metadata().and_then(|m| m.modified()).ok());
    candidates.pop().unwrap_or_else(|| {
        panic!("no libslt_lab_ffi.so under {} or {}", profile_dir().display(), deps.display())
    })
}

const C_CLIENT: &str = r#"
#include "slt_lab.h"
#include <math.h>
#include <stdio.h>
#include <string.h>

static int fail(const char *what) {
    char msg[512] = {0};
    slt_last_error(msg, sizeof msg);
    fprintf(stderr, "%s: %s\n", what, msg);
    return 1;
}

int main(int argc, char **argv) {
    if (argc < 2) return fail("usage: smoke SAVE_PATH");
    if (strlen(slt_version()) == 0) return fail("version");

    size_t widths[] = {2, 8, 8, 2};
    slt_network *net =
        slt_network_init_he(widths, 4, 1, SLT_SCHEME_UNIFORM, 0, 42);
    if (!net) return fail("init");
    if (slt_network_input_dim(net) != 2) return fail("input dim");
    if (slt_network_output_dim(net) != 2) return fail("output dim");
    if (slt_network_depth(net) != 3) return fail("depth");

    double inputs[6] = {0.1, -0.2, 0.8, 0.4, -0.9, 0.5};
    double out[6];
    if (slt_network_forward(net, inputs, 3, 2, out, 6) != SLT_OK)
        return fail("forward");
    for (int i = 0; i < 6; i++)
        if (!isfinite(out[i])) return fail("finite outputs");

    if (slt_network_scale(net, 2.0) != SLT_OK) return fail("scale");
    double doubled[6];
    if (slt_network_forward(net, inputs, 3, 2, doubled, 6) != SLT_OK)
        return fail("forward after scale");
    for (int i = 0; i < 6; i++)
        if (fabs(doubled[i] - 2.0 * out[i]) > 1e-9 * (1.0 + fabs(out[i])))
            return fail("doubling");

    if (slt_network_save(net, argv[1]) != SLT_OK) return fail("save");
    slt_network *back = slt_network_load(argv[1]);
    if (!back) return fail("load");
    double reload[6];
    if (slt_network_forward(back, inputs, 3, 2, reload, 6) != SLT_OK)
        return fail("forward after load");
    if (memcmp(reload, doubled, sizeof doubled) != 0) return fail("round trip");

    if (slt_network_forward(back, inputs, 3, 2, reload, 5) !=
        SLT_INVALID_ARGUMENT)
        return fail("capacity check");
    if (slt_network_load("/nonexistent/net.json") != NULL)
        return fail("load of missing file");
    if (slt_last_error(NULL, 0) == 0) return fail("missing error message");

    slt_network_free(back);
    slt_network_free(net);
    puts("ok");
    return 0;
}
"#;

#[test]
fn c_client_compiles_links_and_runs() {
    let lib = shared_library();
    let lib_dir: &Path = lib.parent().unwrap();
    let dir = tempfile::TempDir::new().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_CLIENT).unwrap();

    let compile = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Wextra")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&src)
        .arg("-L")
        .arg(lib_dir)
        .arg("-lslt_lab_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lm")
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("cc should be available");
    assert!(
        compile.status.success(),
        "compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin)
        .arg(dir.path().join("net.json"))
        .output()
        .expect("smoke binary should run");
    assert!(
        run.status.success(),
        "smoke client failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
