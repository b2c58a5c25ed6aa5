use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use hsed_ffi::*;

fn last_error() -> Option<String> {
    let p = hsed_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn tree(seed: u64) -> *mut HsedGraph {
    let mut g = ptr::null_mut();
    let status = unsafe { hsed_graph_synth_tree(3, 3, 0.5, 6, seed, &mut g) };
    assert_eq!(status, HsedStatus::Ok);
    assert!(!g.is_null());
    g
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(hsed_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn graph_lifecycle() {
    let g = tree(1);
    let (mut n, mut e, mut d, mut c) = (0, 0, 0, 0);
    assert_eq!(unsafe { hsed_graph_shape(g, &mut n, &mut e, &mut d, &mut c) }, HsedStatus::Ok);
    assert_eq!((n, e, d, c), (40, 39, 6, 3));
    assert_eq!(unsafe { hsed_graph_shape(g, ptr::null_mut(), ptr::null_mut(), &mut d, ptr::null_mut()) }, HsedStatus::Ok);

    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("g.json").to_str().unwrap());
    assert_eq!(unsafe { hsed_graph_write(g, path.as_ptr()) }, HsedStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { hsed_graph_read(path.as_ptr(), &mut back) }, HsedStatus::Ok);
    let mut n2 = 0;
    assert_eq!(unsafe { hsed_graph_shape(back, &mut n2, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, HsedStatus::Ok);
    assert_eq!(n2, 40);
    unsafe {
        hsed_graph_free(g);
        hsed_graph_free(back);
        hsed_graph_free(ptr::null_mut());
    }
}

#[test]
fn training_through_handles() {
    let g = tree(2);
    let mut config = ptr::null_mut();
    let text = cstr("hidden_dim = 8\nepochs = 10\n");
    assert_eq!(unsafe { hsed_config_parse(text.as_ptr(), &mut config) }, HsedStatus::Ok);
    let mut a = HsedReport { acc: -1.0, nmi: 0.0, ami: 0.0, ari: 0.0, micro_f1: 0.0, macro_f1: 0.0, wall_seconds: 0.0 };
    let mut b = a;
    assert_eq!(unsafe { hsed_train(g, config, &mut a) }, HsedStatus::Ok);
    assert_eq!(unsafe { hsed_train(g, config, &mut b) }, HsedStatus::Ok);
    assert!((0.0..=1.0).contains(&a.acc));
    assert_eq!((a.acc, a.nmi, a.macro_f1), (b.acc, b.nmi, b.macro_f1));
    assert!(last_error().is_none());
    unsafe {
        hsed_config_free(config);
        hsed_graph_free(g);
    }
}

#[test]
fn metrics_and_geometry() {
    let truth = [0usize, 0, 1, 1];
    let pred = [0usize, 1, 0, 1];
    let mut r = HsedReport { acc: 0.0, nmi: 0.0, ami: 0.0, ari: 0.0, micro_f1: 0.0, macro_f1: 0.0, wall_seconds: 0.0 };
    assert_eq!(unsafe { hsed_metrics(truth.as_ptr(), pred.as_ptr(), 4, &mut r) }, HsedStatus::Ok);
    assert_eq!(r.ari, -0.5);
    assert_eq!(r.acc, 0.5);

    let (a, b) = ([0.0, 0.0], [0.5, 0.0]);
    let mut d = 0.0;
    let st = unsafe { hsed_distance(HsedManifold::Poincare, 1.0, a.as_ptr(), b.as_ptr(), 2, &mut d) };
    assert_eq!(st, HsedStatus::Ok);
    assert!((d - 3f64.ln()).abs() < 1e-12);

    let v = [0.0, 1.0];
    let mut x = [0.0; 2];
    let st = unsafe { hsed_exp_map_origin(HsedManifold::Hyperboloid, 1.0, v.as_ptr(), 2, x.as_mut_ptr()) };
    assert_eq!(st, HsedStatus::Ok);
    assert!((x[0] - 1f64.cosh()).abs() < 1e-15 && (x[1] - 1f64.sinh()).abs() < 1e-15);
}

#[test]
fn errors_map_to_status_codes() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hsed_graph_read(ptr::null(), &mut g) }, HsedStatus::NullPointer);
    assert!(last_error().unwrap().contains("path"));

    let missing = cstr("/definitely/not/here.json");
    let st = unsafe { hsed_graph_read(missing.as_ptr(), &mut g) };
    assert_eq!(st, HsedStatus::Io);
    assert!(g.is_null());

    let bad = [0xffu8, 0];
    let st = unsafe { hsed_config_parse(bad.as_ptr().cast(), &mut ptr::null_mut()) };
    assert_eq!(st, HsedStatus::Utf8);

    let mut c = ptr::null_mut();
    let typo = cstr("epochz = 3\n");
    assert_eq!(unsafe { hsed_config_parse(typo.as_ptr(), &mut c) }, HsedStatus::Parse);
    assert!(c.is_null());
    assert!(last_error().unwrap().contains("epochz"));

    assert_eq!(unsafe { hsed_graph_synth_tree(1, 3, 0.5, 6, 0, &mut g) }, HsedStatus::InvalidArgument);

    let mut d = 0.0;
    let outside = [2.0, 0.0];
    let origin = [0.0, 0.0];
    let st = unsafe { hsed_distance(HsedManifold::Poincare, 1.0, outside.as_ptr(), origin.as_ptr(), 2, &mut d) };
    assert_eq!(st, HsedStatus::Domain);
    let st = unsafe { hsed_distance(HsedManifold::Poincare, -1.0, origin.as_ptr(), origin.as_ptr(), 2, &mut d) };
    assert_eq!(st, HsedStatus::InvalidArgument);

    let mut r = HsedReport { acc: 0.0, nmi: 0.0, ami: 0.0, ari: 0.0, micro_f1: 0.0, macro_f1: 0.0, wall_seconds: 0.0 };
    assert_eq!(unsafe { hsed_metrics(ptr::null(), ptr::null(), 3, &mut r) }, HsedStatus::NullPointer);

    // a success clears the stored message
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { hsed_config_default(&mut cfg) }, HsedStatus::Ok);
    assert!(last_error().is_none());
    unsafe { hsed_config_free(cfg) };
}

fn compiler() -> Option<&'static str> {
    ["cc", "clang", "gcc"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("hsed.h").exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"hsed.h\"\n\
         int main(void) {\n\
           HsedGraph *g = NULL;\n\
           HsedReport r;\n\
           double d;\n\
           const double a[2] = {0.0, 0.0};\n\
           enum HsedStatus s = hsed_graph_synth_tree(3, 3, 0.5, 6, 0, &g);\n\
           s = hsed_distance(HSED_MANIFOLD_POINCARE, 1.0, a, a, 2, &d);\n\
           (void)r; hsed_graph_free(g);\n\
           return s == HSED_STATUS_OK ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    for lang in ["c", "c++"] {
        let o = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&include)
            .arg(&src)
            .output()
            .unwrap();
        assert!(o.status.success(), "{lang}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
