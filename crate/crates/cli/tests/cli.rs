use lift3d::geometry::{read_ply, write_depth_file};
use lift3d::guidance::wire::{
    DepthReply, GenerateBody, HealthReply, ImageBody, ImageReply, LatentBody, LatentReply, ResidualBody, ResidualReply,
    WireTensor,
};
use lift3d::guidance::{two_tone_sphere, Guidance, SyntheticOracle};
use lift3d::latentfield::read_checkpoint;
use lift3d::Vec3;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
    "field_resolution": 16,
    "latent_side": 16,
    "n_prerender": 4,
    "samples_per_ray": 32,
    "orbit_views": 5,
    "scaffold": { "poisson": { "grid_depth": 5 } }
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lift3d"));
    c.env_remove("LIFT3D_GUIDANCE_URL");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lift3d-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn run_tiny(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let cfg = tiny_config(dir);
    bin()
        .args(["run", "--text", "a two-tone ball", "--iterations", "40", "--log-every", "0", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(out))
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes the oracle's reference view as a PNG plus a depth file.
fn write_reference(dir: &Path, side: usize) -> (PathBuf, PathBuf) {
    let oracle = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6));
    let rgb = oracle.generate("ball", 0, side).unwrap();
    let depth = oracle.depth(&rgb).unwrap();
    let img = image::RgbImage::from_fn(side as u32, side as u32, |x, y| {
        image::Rgb([0, 1, 2].map(|c| (rgb.get(c, y as usize, x as usize) * 255.0).round() as u8))
    });
    let (ip, dp) = (dir.join("ref.png"), dir.join("ref.depth"));
    img.save(&ip).unwrap();
    write_depth_file(&dp, side, side, &depth.data).unwrap();
    (ip, dp)
}

#[test]
fn missing_text_is_a_usage_error() {
    let out = bin().args(["run", "--guidance", "oracle"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["run", "--text", "x", "--depth", "d.f32"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = scratch("badcfg");
    let p = dir.join("bad.json");
    std::fs::write(&p, r#"{ "f_ref": 2.0 }"#).unwrap();
    let out = bin().args(["run", "--text", "x", "--config"]).arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_runs_are_bit_identical_and_complete() {
    let dir = scratch("oracle");
    let a = run_tiny(&dir, "a", &["--seed", "7"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run_tiny(&dir, "b", &["--seed", "7"]);
    assert!(b.status.success());
    let ca = std::fs::read(dir.join("a/field.ckpt")).unwrap();
    assert_eq!(ca, std::fs::read(dir.join("b/field.ckpt")).unwrap());

    let manifest = json(&dir.join("a/manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["guidance_mode"], "oracle");
    assert_eq!(manifest["config"]["t_total"], 40);
    let report = json(&dir.join("a/report.json"));
    assert_eq!(report["records"].as_array().unwrap().len(), 40);
    assert_eq!(report["reference_generated"], true);
    let frames = std::fs::read_dir(dir.join("a/frames")).unwrap().count();
    assert_eq!(frames, 5);
    assert!(!dir.join("a/error.json").exists());

    let (field, header) = read_checkpoint(&dir.join("a/field.ckpt")).unwrap();
    assert_eq!(header.iteration, 40);
    assert_eq!(field.resolution, 16);

    let c = run_tiny(&dir, "c", &["--seed", "8"]);
    assert!(c.status.success());
    assert_ne!(ca, std::fs::read(dir.join("c/field.ckpt")).unwrap());
}

#[test]
fn image_input_skips_generation() {
    let dir = scratch("image");
    let (img, depth) = write_reference(&dir, 256);
    let out = run_tiny(&dir, "run", &["--image", img.to_str().unwrap(), "--depth", depth.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.join("run/report.json"));
    assert_eq!(report["reference_generated"], false);
    let manifest = json(&dir.join("run/manifest.json"));
    let inputs = manifest["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2);
    assert_eq!(inputs[0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn unreachable_sidecar_exits_with_connectivity_code() {
    let dir = scratch("unreachable");
    let out = run_tiny(&dir, "run", &["--guidance", "remote", "--endpoint", "http://127.0.0.1:9", "--timeout", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("run/manifest.json").exists());
    let err = json(&dir.join("run/error.json"));
    assert_eq!(err["stage"], "guidance");
    assert_eq!(err["exit_code"], 3);
}

fn reply(status: u16, body: String) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap())
}

/// Sidecar stand-in: reference, depth and codec come from the synthetic
/// oracle; residuals shrink the latent inside the mask. With `fail_after`,
/// residual requests beyond that count get a server error.
fn spawn_sidecar(fail_after: Option<usize>) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    std::thread::spawn(move || {
        let oracle = SyntheticOracle::new(two_tone_sphere(Vec3::zeros(), 0.6));
        let mut residuals = 0;
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let text = match req.url() {
                "/v1/health" => serde_json::to_string(&HealthReply { models: vec!["mock".into()] }).unwrap(),
                "/v1/generate" => {
                    let b: GenerateBody = serde_json::from_str(&body).unwrap();
                    let image = oracle.generate(&b.prompt, b.seed, b.size).unwrap();
                    serde_json::to_string(&ImageReply { image: WireTensor::from_tensor(&image), model: None }).unwrap()
                }
                "/v1/depth" => {
                    let b: ImageBody = serde_json::from_str(&body).unwrap();
                    let d = oracle.depth(&b.image.to_tensor().unwrap()).unwrap();
                    serde_json::to_string(&DepthReply { depth: WireTensor::from_tensor(&d), model: None }).unwrap()
                }
                "/v1/encode" => {
                    let b: ImageBody = serde_json::from_str(&body).unwrap();
                    let z = oracle.encode(&b.image.to_tensor().unwrap()).unwrap();
                    serde_json::to_string(&LatentReply { z: WireTensor::from_tensor(&z), model: None }).unwrap()
                }
                "/v1/decode" => {
                    let b: LatentBody = serde_json::from_str(&body).unwrap();
                    let image = oracle.decode(&b.z.to_tensor().unwrap()).unwrap();
                    serde_json::to_string(&ImageReply { image: WireTensor::from_tensor(&image), model: None }).unwrap()
                }
                "/v1/residual" => {
                    residuals += 1;
                    if fail_after.is_some_and(|n| residuals > n) {
                        let _ = req.respond(reply(500, r#"{"error":"out of memory"}"#.into()));
                        continue;
                    }
                    let b: ResidualBody = serde_json::from_str(&body).unwrap();
                    let mut r = b.z.to_tensor().unwrap();
                    let m = b.mask.to_mask().unwrap();
                    let plane = r.plane();
                    for (i, v) in r.data.iter_mut().enumerate() {
                        *v = if m.data[i % plane] { 0.2 * *v } else { 0.0 };
                    }
                    serde_json::to_string(&ResidualReply { residual: WireTensor::from_tensor(&r), model: None }).unwrap()
                }
                _ => {
                    let _ = req.respond(reply(404, r#"{"error":"no such route"}"#.into()));
                    continue;
                }
            };
            let _ = req.respond(reply(200, text));
        }
    });
    format!("http://127.0.0.1:{port}")
}

#[test]
fn remote_run_against_a_mock_sidecar() {
    let dir = scratch("remote");
    let url = spawn_sidecar(None);
    let out = run_tiny(&dir, "run", &["--guidance", "remote", "--endpoint", &url]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = json(&dir.join("run/manifest.json"));
    assert_eq!(manifest["guidance_mode"], "remote");
    assert_eq!(manifest["endpoint"], url.as_str());
    assert_eq!(json(&dir.join("run/report.json"))["guidance_mode"], "remote");
    assert_eq!(std::fs::read_dir(dir.join("run/frames")).unwrap().count(), 5);
}

#[test]
fn endpoint_comes_from_the_environment() {
    let dir = scratch("envurl");
    let url = spawn_sidecar(None);
    let cfg = tiny_config(&dir);
    let out = bin()
        .env("LIFT3D_GUIDANCE_URL", &url)
        .args(["run", "--text", "ball", "--iterations", "40", "--log-every", "0", "--guidance", "remote", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sidecar_failure_mid_training_leaves_a_tagged_error() {
    let dir = scratch("midfail");
    let url = spawn_sidecar(Some(10));
    let out = run_tiny(&dir, "run", &["--guidance", "remote", "--endpoint", &url]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&dir.join("run/error.json"));
    assert!(err["stage"].as_str().unwrap().starts_with("training"));
    assert!(err["message"].as_str().unwrap().contains("out of memory"));
    assert!(dir.join("run/manifest.json").exists());
    assert!(!dir.join("run/report.json").exists());
}

#[test]
fn scaffold_command_writes_mesh_and_bank() {
    let dir = scratch("scaffold");
    let (img, depth) = write_reference(&dir, 256);
    for views in ["1", "3"] {
        let out_dir = dir.join(format!("s{views}"));
        let cfg = tiny_config(&dir);
        let out = bin()
            .args(["scaffold", "--image"])
            .arg(&img)
            .arg("--depth")
            .arg(&depth)
            .args(["--views", views, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mesh = read_ply(&out_dir.join("scaffold.ply")).unwrap();
        assert!(mesh.is_watertight());
        let bank = lift3d::prerender::ViewBank::load(&out_dir.join("bank")).unwrap();
        assert_eq!(bank.len(), views.parse::<usize>().unwrap());
    }
    let help = bin().args(["scaffold", "--help"]).output().unwrap();
    assert!(String::from_utf8_lossy(&help.stdout).contains("[default: 64]"));
}
