use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use rte_core::fields::{extension_profile, make_sigma, Extension, SigmaSpec};
use rte_core::{DiscDomain, Grid2, PhaseField, ScalarField, ScatterKernel, TransportConfig, TransportOperator};

const EXAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.json");

fn small() -> Value {
    json!({
        "grids": {
            "recon": { "n": 24, "n_theta": 16 },
            "data": { "n": 48, "n_theta": 32 },
            "boundary": { "n_beta": 96, "n_alpha": 16 }
        },
        "phantom": { "kind": "gaussian", "center": { "x": 0.1, "y": 0.2 }, "width": 0.3, "amp": 1.0 },
        "sigma": { "kind": "constant", "value": 0.5 },
        "kernel": { "kind": "isotropic", "albedo_scale": 0.3 },
        "transport": { "ray_step": 0.02 },
        "recon": { "max_krylov_iter": 30 },
        "probe": { "n_probe": 2, "lanczos_steps": 0 },
        "seed": 3
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn rte(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rte"))
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .args(args)
        .output()
        .expect("run rte")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn read_f64s(p: &Path) -> Vec<f64> {
    fs::read(p).unwrap().chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

fn dir_hashes(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, hex::encode(Sha256::digest(fs::read(&p).unwrap())))
        })
        .collect()
}

#[test]
fn bundled_example_runs_forward() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fwd");
    let o = rte(Path::new(EXAMPLE), &out, &["forward"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sino = fs::read_to_string(out.join("sinogram.csv")).unwrap();
    assert!(sino.lines().count() > 1);
    assert!(sino.starts_with("beta,alpha,weight,value"));

    // Every file in the directory is listed with its hash and size.
    let manifest = read_json(&out.join("manifest.json"));
    let listed: BTreeMap<String, (String, u64)> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (f["path"].as_str().unwrap().to_string(), (f["sha256"].as_str().unwrap().to_string(), f["bytes"].as_u64().unwrap()))
        })
        .collect();
    let on_disk = dir_hashes(&out);
    assert_eq!(listed.keys().collect::<Vec<_>>(), on_disk.keys().collect::<Vec<_>>());
    for (name, hash) in &on_disk {
        assert_eq!(&listed[name].0, hash, "{name}");
        assert_eq!(listed[name].1, fs::metadata(out.join(name)).unwrap().len());
    }
    let cfg_text = fs::read(out.join("config.json")).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), hex::encode(Sha256::digest(cfg_text)));
    assert!(manifest["timings"]["solve"].as_f64().unwrap() >= 0.0);
    assert!(!manifest["rte_core_version"].as_str().unwrap().is_empty());
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["noise"] = json!({ "kind": "gaussian", "rel_level": 0.02 });
    let c = write_config(tmp.path(), "noisy.json", &cfg);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|n| {
            let out = tmp.path().join(n);
            let o = rte(&c, &out, &["reconstruct"]);
            assert!(o.status.success(), "{}", stderr(&o));
            // The echoed config differs only in `output_dir`.
            let mut h = dir_hashes(&out);
            h.remove("config.json");
            h
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let out = tmp.path().join("c");
    assert!(rte(&c, &out, &["--seed", "4", "reconstruct"]).status.success());
    assert_ne!(dir_hashes(&out)["data.csv"], runs[0]["data.csv"]);
    assert!(read_json(&out.join("metrics.json"))["delta"].as_f64().unwrap() > 0.0);
}

#[test]
fn supercritical_scattering_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["kernel"]["albedo_scale"] = json!(50.0);
    let c = write_config(tmp.path(), "hot.json", &cfg);
    let o = rte(&c, &tmp.path().join("out"), &["forward"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("not contractive"), "{}", stderr(&o));
}

#[test]
fn zero_phantom_reconstructs_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg["phantom"] = json!({ "kind": "zero" });
    cfg["noise"] = json!({ "kind": "gaussian", "rel_level": 0.05 });
    let c = write_config(tmp.path(), "zero.json", &cfg);
    let out = tmp.path().join("out");
    let o = rte(&c, &out, &["reconstruct"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_f64s(&out.join("f_hat.bin")).iter().all(|&v| v == 0.0));
    let m = read_json(&out.join("metrics.json"));
    assert_eq!(m["rel_l2"].as_f64(), Some(0.0));
}

#[test]
fn noiseless_reconstruction_is_accurate() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "clean.json", &small());
    let out = tmp.path().join("out");
    let o = rte(&c, &out, &["reconstruct"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_json(&out.join("metrics.json"));
    assert!(m["rel_l2"].as_f64().unwrap() < 0.05, "{m}");
    let res = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(res.starts_with("iteration,misfit,normal_residual,objective"));
    assert_eq!(res.lines().count(), m["iterations"].as_u64().unwrap() as usize + 2);
}

#[test]
fn config_errors_exit_with_code_2_and_a_line() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("bad.json");
    fs::write(&c, "{\n  \"seed\": 1,\n  \"phantom_spec\": {}\n}\n").unwrap();
    let o = rte(&c, &tmp.path().join("out"), &["forward"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(stderr(&o).contains("phantom_spec"), "{}", stderr(&o));

    let mut cfg = small();
    cfg["grids"]["data"] = json!({ "n": 24, "n_theta": 16 });
    let c = write_config(tmp.path(), "crime.json", &cfg);
    let o = rte(&c, &tmp.path().join("out"), &["forward"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("finer"), "{}", stderr(&o));

    let mut cfg = small();
    cfg["phantom"]["center"] = json!({ "x": 2.0, "y": 0.0 });
    let c = write_config(tmp.path(), "outside.json", &cfg);
    let o = rte(&c, &tmp.path().join("out"), &["forward"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn selftest_passes_and_detects_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "cfg.json", &small());

    let o = rte(&c, &tmp.path().join("ok"), &["selftest"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    for name in ["santalo", "adjoint", "boundedness", "k=0 reduction"] {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{text}");
    }

    let o = rte(&c, &tmp.path().join("broken"), &["selftest", "--break-adjoint"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL") && l.contains("adjoint")), "{}", stdout(&o));

    let o = rte(&c, &tmp.path().join("tangent"), &["selftest", "--tangent-grid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("WARN") && l.contains("santalo")), "{}", stdout(&o));

    let o = rte(&c, &tmp.path().join("adj"), &["adjoint-test"]);
    assert!(o.status.success());
    let o = rte(&c, &tmp.path().join("adj2"), &["adjoint-test", "--break-adjoint"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn measure_on_flag_moves_the_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "cfg.json", &small());
    let out = tmp.path().join("omega");
    let o = rte(&c, &out, &["--measure-on", "omega", "forward"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let side = read_json(&out.join("sinogram.json"));
    assert_eq!(side["radius"].as_f64(), Some(1.0));
    let cfg = read_json(&out.join("config.json"));
    assert_eq!(cfg["measure_on"], "omega");
}

/// Threshold of `T₁⁻¹(λK)` located by bisection on the growth of repeated
/// applications, written against the transport primitives directly.
fn bisect_critical_lambda() -> f64 {
    let d = DiscDomain::unit();
    let grid = Grid2::covering(&d.omega1(), 24).unwrap();
    let sigma = make_sigma(&d, grid, 16, &SigmaSpec::constant(0.5)).unwrap();
    let kernel = ScatterKernel::isotropic(0.3, extension_profile(&d, grid, Extension::Cutoff)).unwrap();
    let cfg = TransportConfig { ray_step: 0.02, ..TransportConfig::default() };
    let op = TransportOperator::new(&sigma, Some(&kernel), d.omega1(), &cfg).unwrap();
    let one = ScalarField::from_fn(grid, |p| f64::from(d.omega1().contains(p)));
    let mut v = PhaseField::isotropic(&one, 16).unwrap();
    // Growth per step of T₁⁻¹K at λ = 1; at λ the growth is λ times this.
    let mut growth = 0.0;
    for _ in 0..60 {
        let w = op.t1_inv(&op.k(&v)).unwrap();
        growth = w.norm_l2() / v.norm_l2();
        let s = 1.0 / w.norm_l2();
        v = PhaseField { values: w.values.iter().map(|x| x * s).collect(), ..w };
    }
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid * growth < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn lambda_sweep_records_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let c = write_config(tmp.path(), "cfg.json", &small());
    let out = tmp.path().join("sweep");
    let o = rte(&c, &out, &["lambda-sweep", "--lambdas", "0,0.5,1,2,20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv_rows(&out.join("lambda_sweep.csv"));
    assert_eq!(r.len(), 5);
    assert_eq!(r[4]["status"], "non_contractive");
    let ratios: Vec<f64> = r[..4].iter().map(|x| x["power_estimate"].parse().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    assert!(r[..4].iter().all(|x| x["status"] == "ok"));

    // λ = 0 is the unscattered problem.
    let mut cfg = small();
    cfg["kernel"] = json!({ "kind": "none" });
    let c0 = write_config(tmp.path(), "k0.json", &cfg);
    let out0 = tmp.path().join("k0");
    assert!(rte(&c0, &out0, &["reconstruct"]).status.success());
    let m = read_json(&out0.join("metrics.json"));
    let row0 = r.remove(0);
    assert_eq!(row0["rel_error"].parse::<f64>().unwrap(), m["rel_l2"].as_f64().unwrap());

    let summary = read_json(&out.join("lambda_sweep.json"));
    let critical = summary["critical_lambda"].as_f64().unwrap();
    let oracle = bisect_critical_lambda();
    assert!((critical / oracle - 1.0).abs() < 0.02, "{critical} vs {oracle}");
    assert!(critical > 2.0 && critical < 20.0);
}

fn csv_rows(p: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}
