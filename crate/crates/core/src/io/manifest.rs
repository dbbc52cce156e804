use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{f32raw, pnm, write_atomic, FrameSequence};
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// PGM/PPM, 8 bits per sample.
    U8,
    F32Raw,
}

impl Encoding {
    fn extension(self, channels: usize) -> &'static str {
        match (self, channels) {
            (Encoding::F32Raw, _) => "f32raw",
            (Encoding::U8, 1) => "pgm",
            (Encoding::U8, _) => "ppm",
        }
    }
}

/// Describes a frame directory. Frame paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub frames: Vec<String>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub bit_depth: u32,
    pub encoding: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest version {}", m.format_version),
            ));
        }
        Ok(m)
    }
}

fn read_frame(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(f32raw::MAGIC) {
        f32raw::decode(&bytes, path)
    } else {
        pnm::decode(&bytes, path)
    }
}

/// Resolves a manifest file, a directory holding `manifest.json`, or a bare
/// directory of `.pgm`/`.ppm`/`.f32raw` frames (sorted by name).
pub fn read_sequence(path: &Path) -> Result<FrameSequence> {
    if path.is_dir() {
        let m = path.join(MANIFEST_NAME);
        if m.is_file() {
            read_manifest(&m)
        } else {
            read_frame_dir(path)
        }
    } else {
        read_manifest(path)
    }
}

fn read_manifest(path: &Path) -> Result<FrameSequence> {
    let m = Manifest::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let frames = m
        .frames
        .iter()
        .map(|name| {
            let p = dir.join(name);
            let f = read_frame(&p)?;
            let s = f.shape();
            if (s.c, s.h, s.w) != (m.channels, m.height, m.width) {
                return Err(Error::format(
                    &p,
                    format!(
                        "frame is {}x{}x{}, manifest declares {}x{}x{}",
                        s.c, s.h, s.w, m.channels, m.height, m.width
                    ),
                ));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::format(path, "manifest lists no frames"));
    }
    Ok(FrameSequence::new(frames, m.bit_depth)?.with_fps(m.fps))
}

fn read_frame_dir(dir: &Path) -> Result<FrameSequence> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e, "pgm" | "ppm" | "f32raw"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no frame files found"));
    }
    let all_u8 = paths
        .iter()
        .all(|p| p.extension().is_some_and(|e| e != "f32raw"));
    let frames = paths
        .iter()
        .map(|p| read_frame(p))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, if all_u8 { 8 } else { 32 })
}

/// Writes every frame and a manifest into `dir` (created if missing).
/// Returns the manifest path.
pub fn write_sequence(
    seq: &FrameSequence,
    dir: &Path,
    encoding: Encoding,
    noise: Option<NoiseSpec>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = encoding.extension(seq.channels());
    let mut names = Vec::with_capacity(seq.len());
    for (t, frame) in seq.frames().iter().enumerate() {
        let name = format!("frame_{t:05}.{ext}");
        let bytes = match encoding {
            Encoding::U8 => pnm::encode(frame)?,
            Encoding::F32Raw => f32raw::encode(frame)?,
        };
        write_atomic(&dir.join(&name), &bytes)?;
        names.push(name);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        frames: names,
        channels: seq.channels(),
        height: seq.height(),
        width: seq.width(),
        bit_depth: match encoding {
            Encoding::U8 => 8,
            Encoding::F32Raw => seq.bit_depth,
        },
        encoding,
        noise,
        fps: seq.fps,
    };
    let path = dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
