use anyhow::Context;
use image::{Rgb, RgbImage};
use lift3d::trainer::TrainConfig;
use lift3d::Tensor3;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "field.ckpt";
pub const FRAMES_DIR: &str = "frames";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn hash(path: &Path) -> anyhow::Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        Ok(Self {
            path: path.to_path_buf(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Outputs {
    pub report: &'static str,
    pub checkpoint: &'static str,
    pub frames: &'static str,
    pub error: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub version: &'static str,
    pub build: &'static str,
    pub seed: u64,
    pub text: &'a str,
    pub inputs: Vec<FileRecord>,
    pub guidance_mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<&'a str>,
    pub outputs: Outputs,
    pub config: &'a TrainConfig,
}

impl<'a> Manifest<'a> {
    pub fn for_run(
        cfg: &'a TrainConfig,
        text: &'a str,
        inputs: Vec<FileRecord>,
        mode: &'static str,
        endpoint: &'a str,
    ) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            build: env!("LIFT3D_GIT_REV"),
            seed: cfg.seed,
            text,
            inputs,
            guidance_mode: mode,
            endpoint: (mode == "remote").then_some(endpoint),
            outputs: Outputs {
                report: REPORT_FILE,
                checkpoint: CHECKPOINT_FILE,
                frames: FRAMES_DIR,
                error: ERROR_FILE,
            },
            config: cfg,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    stage: &'a str,
    exit_code: u8,
    message: String,
    chain: Vec<String>,
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_error(dir: &Path, stage: &str, err: &anyhow::Error, exit_code: u8) -> anyhow::Result<()> {
    let record = ErrorRecord {
        stage,
        exit_code,
        message: format!("{err:#}"),
        chain: err.chain().map(|e| e.to_string()).collect(),
    };
    write_json(&dir.join(ERROR_FILE), &record)
}

/// Removes outputs of an earlier run in the same directory, so stale files
/// never pass for results of this one.
pub fn clear_previous(dir: &Path) -> anyhow::Result<()> {
    for name in [MANIFEST_FILE, REPORT_FILE, CHECKPOINT_FILE, ERROR_FILE] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
        }
    }
    let frames = dir.join(FRAMES_DIR);
    if frames.exists() {
        fs::remove_dir_all(&frames).with_context(|| format!("removing {}", frames.display()))?;
    }
    Ok(())
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_frames(dir: &Path, frames: &[Tensor3]) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let img = RgbImage::from_fn(f.width as u32, f.height as u32, |x, y| {
            Rgb([0, 1, 2].map(|c| to_u8(f.get(c, y as usize, x as usize))))
        });
        let path = dir.join(format!("frame_{i:03}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
