//! Behavior of the exported C ABI, exercised from Rust: handle life
//! cycle, buffer conventions, determinism against the underlying
//! library, persistence, scaling, construction, and the error paths.

use std::ffi::{c_int, CString};

use slt_lab::init::{initialize, InitSpec, Scheme};
use slt_lab::net::{Architecture, Mask, SavedNetwork};
use slt_lab_ffi::*;

struct Handle(*mut SltNetwork);

impl Handle {
    fn new(ptr: *mut SltNetwork) -> Self {
        assert!(!ptr.is_null(), "constructor failed: {}", last_error());
        Handle(ptr)
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { slt_network_free(self.0) };
    }
}

fn last_error() -> String {
    let mut buf = vec![0i8; 512];
    let len = unsafe { slt_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..len.min(buf.len() - 1)]
        .iter()
        .map(|&b| b as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

fn init_he(widths: &[usize], scheme: c_int, zero_bias: c_int, seed: u64) -> Handle {
    Handle::new(unsafe {
        slt_network_init_he(widths.as_ptr(), widths.len(), 1, scheme, zero_bias, seed)
    })
}

fn forward(net: &Handle, inputs: &[f64], n_samples: usize, input_dim: usize) -> Vec<f64> {
    let out_dim = unsafe { slt_network_output_dim(net.0) };
    let mut out = vec![0.0; n_samples * out_dim];
    let code = unsafe {
        slt_network_forward(
            net.0,
            inputs.as_ptr(),
            n_samples,
            input_dim,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(code, SLT_OK, "forward failed: {}", last_error());
    out
}

#[test]
fn version_is_a_nonempty_c_string() {
    let version = unsafe { std::ffi::CStr::from_ptr(slt_version()) };
    assert!(!version.to_str().unwrap().is_empty());
}

#[test]
fn initialization_matches_the_library_for_the_same_seed() {
    let widths = [3usize, 8, 8, 2];
    let net = init_he(&widths, SLT_SCHEME_UNIFORM, 0, 77);
    assert_eq!(unsafe { slt_network_input_dim(net.0) }, 3);
    assert_eq!(unsafe { slt_network_output_dim(net.0) }, 2);
    assert_eq!(unsafe { slt_network_depth(net.0) }, 3);

    let arch = Architecture::new(widths.to_vec(), true).unwrap();
    let reference = initialize(&arch, &InitSpec::he(&arch, Scheme::Uniform, 77)).unwrap();

    let inputs: Vec<f64> = (0..15).map(|i| (i as f64) / 7.0 - 1.0).collect();
    let got = forward(&net, &inputs, 5, 3);

    let x = ndarray::Array2::from_shape_fn((3, 5), |(d, s)| inputs[s * 3 + d]);
    let want = reference.output(None, &x);
    for s in 0..5 {
        for d in 0..2 {
            assert_eq!(got[s * 2 + d], want[[d, s]], "sample {s} output {d}");
        }
    }
}

#[test]
fn zero_bias_flag_and_schemes_are_honored() {
    let widths = [2usize, 6, 6, 2];
    for scheme in [SLT_SCHEME_UNIFORM, SLT_SCHEME_NORMAL, SLT_SCHEME_LOOKS_LINEAR] {
        let net = init_he(&widths, scheme, 1, 5);
        // A zero-bias ReLU stack with linear output maps 0 to 0.
        let zeros = [0.0, 0.0];
        let out = forward(&net, &zeros, 1, 2);
        assert_eq!(out, vec![0.0, 0.0], "scheme {scheme}");
    }
}

#[test]
fn scaling_multiplies_outputs() {
    let net = init_he(&[2, 8, 1], SLT_SCHEME_NORMAL, 0, 9);
    let inputs = [0.3, -0.4, 0.9, 0.1];
    let base = forward(&net, &inputs, 2, 2);
    assert_eq!(unsafe { slt_network_scale(net.0, 2.5) }, SLT_OK);
    let scaled = forward(&net, &inputs, 2, 2);
    for (s, b) in scaled.iter().zip(base.iter()) {
        assert!((s - 2.5 * b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    // Rejects non-positive factors.
    assert_eq!(
        unsafe { slt_network_scale(net.0, -1.0) },
        SLT_INVALID_ARGUMENT
    );
    assert!(!last_error().is_empty());
}

#[test]
fn save_load_round_trip_preserves_outputs_exactly() {
    let dir = tempfile::TempDir::new().unwrap();
    let path = CString::new(dir.path().join("net.json").to_str().unwrap()).unwrap();

    let net = init_he(&[2, 8, 2], SLT_SCHEME_UNIFORM, 0, 11);
    assert_eq!(unsafe { slt_network_save(net.0, path.as_ptr()) }, SLT_OK);
    let back = Handle::new(unsafe { slt_network_load(path.as_ptr()) });

    let inputs = [0.2, -0.7, 0.5, 0.9];
    assert_eq!(forward(&net, &inputs, 2, 2), forward(&back, &inputs, 2, 2));
}

#[test]
fn loading_applies_a_saved_mask() {
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("masked.json");

    let arch = Architecture::new(vec![2, 4, 1], true).unwrap();
    let net = initialize(&arch, &InitSpec::he(&arch, Scheme::Uniform, 3)).unwrap();
    let mask = Mask::zeros(&arch);
    SavedNetwork::new(net)
        .with_mask(mask)
        .save(&path)
        .unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let loaded = Handle::new(unsafe { slt_network_load(c_path.as_ptr()) });
    // Everything pruned: the network is identically zero.
    let out = forward(&loaded, &[0.4, -0.1], 1, 2);
    assert_eq!(out, vec![0.0]);
}

#[test]
fn construct_ticket_approximates_the_target() {
    // Small sparse target; the guarantee is sup-norm closeness on the
    // unit cube.
    let arch = Architecture::new(vec![2, 5, 2], true).unwrap();
    let mut target = slt_lab::net::Network::zeros(arch);
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    for w in &mut target.weights {
        w.mapv_inplace(|_| {
            if rng.random::<f64>() < 0.5 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
    }
    for b in &mut target.biases {
        b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    }

    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().join("target.json");
    SavedNetwork::new(target.clone()).save(&path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let handle = Handle::new(unsafe { slt_network_load(c_path.as_ptr()) });

    let epsilon = 0.1;
    let mut sup_error = f64::NAN;
    let ticket = Handle::new(unsafe {
        slt_construct_ticket(handle.0, epsilon, 0.1, 4242, &mut sup_error)
    });
    assert!(
        sup_error <= epsilon,
        "reported sup error {sup_error} exceeds {epsilon}"
    );

    // The returned network approximates the target directly; probe a
    // corner plus random draws from the unit cube.
    let mut worst = 0.0f64;
    for k in 0..200 {
        let inputs = if k == 0 {
            [1.0, -1.0]
        } else {
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        };
        let t = forward(&ticket, &inputs, 1, 2);
        let xs = ndarray::Array2::from_shape_fn((2, 1), |(d, _)| inputs[d]);
        let f = target.output(None, &xs);
        let err = ((t[0] - f[[0, 0]]).powi(2) + (t[1] - f[[1, 0]]).powi(2)).sqrt();
        worst = worst.max(err);
    }
    assert!(
        worst <= epsilon + 1e-9,
        "sampled error {worst} exceeds {epsilon}"
    );
}

#[test]
fn error_paths_set_codes_and_messages() {
    // Null handles.
    assert_eq!(
        unsafe { slt_network_forward(std::ptr::null(), std::ptr::null(), 0, 0, std::ptr::null_mut(), 0) },
        SLT_NULL_ARGUMENT
    );
    assert_eq!(unsafe { slt_network_input_dim(std::ptr::null()) }, 0);
    unsafe { slt_network_free(std::ptr::null_mut()) }; // no-op

    // Loading a missing file fails and reports the path.
    let missing = CString::new("/nonexistent/net.json").unwrap();
    assert!(unsafe { slt_network_load(missing.as_ptr()) }.is_null());
    assert!(last_error().contains("/nonexistent/net.json"));

    // Unknown scheme.
    let widths = [2usize, 4, 1];
    assert!(unsafe { slt_network_init_he(widths.as_ptr(), 3, 1, 99, 0, 1) }.is_null());
    assert!(last_error().contains("scheme"));

    // Dimension and capacity checks.
    let net = init_he(&widths, SLT_SCHEME_UNIFORM, 0, 1);
    let inputs = [0.0; 4];
    let mut out = [0.0; 4];
    assert_eq!(
        unsafe { slt_network_forward(net.0, inputs.as_ptr(), 1, 4, out.as_mut_ptr(), 4) },
        SLT_INVALID_ARGUMENT,
        "wrong input_dim"
    );
    assert_eq!(
        unsafe { slt_network_forward(net.0, inputs.as_ptr(), 2, 2, out.as_mut_ptr(), 1) },
        SLT_INVALID_ARGUMENT,
        "short output buffer"
    );

    // Truncated message retrieval still reports the full length.
    let full = last_error().len();
    let mut small = vec![0i8; 8];
    let reported = unsafe { slt_last_error(small.as_mut_ptr(), small.len()) };
    assert_eq!(reported, full);
    assert_eq!(small[7], 0, "NUL-terminated after truncation");

    // A successful call clears the message.
    let _ = forward(&net, &[0.1, 0.2], 1, 2);
    assert_eq!(unsafe { slt_last_error(std::ptr::null_mut(), 0) }, 0);
}
