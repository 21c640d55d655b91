//! Output directories and manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use qkz_core::export::{write_csv, write_json, Manifest};
use qkz_core::protocol::{Evolution, QuenchProtocol, Variant};

use crate::config::RunConfig;

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_VAR: &str = "QKZ_OUTPUT_ROOT";

pub fn resolve_dir(dir: Option<&Path>, default: &str) -> PathBuf {
    let d = dir.map_or_else(|| PathBuf::from("qkz-out").join(default), Path::to_path_buf);
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if d.is_relative() => PathBuf::from(root).join(d),
        _ => d,
    }
}

/// Collects written files and writes the manifest on completion.
pub struct Sink {
    pub dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Sink {
    pub fn new(cfg: &RunConfig, command: &str, extra: serde_json::Value) -> Result<Sink> {
        let dir = resolve_dir(cfg.output.dir.as_deref(), command);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let inputs = serde_json::json!({ "config": cfg, "args": extra });
        Ok(Sink {
            dir,
            manifest: Manifest::new(command, inputs),
            started: Instant::now(),
        })
    }

    fn record(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.manifest.outputs.push(rel.to_string_lossy().replace('\\', "/"));
    }

    /// A subdirectory owned by a single run.
    pub fn run_dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.dir.join("runs").join(name);
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    pub fn csv<T: Serialize>(&mut self, path: PathBuf, rows: &[T]) -> Result<()> {
        write_csv(&path, rows).with_context(|| format!("writing {}", path.display()))?;
        self.record(&path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, path: PathBuf, v: &T) -> Result<()> {
        write_json(&path, v).with_context(|| format!("writing {}", path.display()))?;
        self.record(&path);
        Ok(())
    }

    pub fn text(&mut self, path: PathBuf, body: &str) -> Result<()> {
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.record(&path);
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.outputs.sort();
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = self.dir.join("manifest.json");
        write_json(&path, &self.manifest)?;
        Ok(self.dir)
    }
}

/// Directory name for one run of a sweep.
pub fn run_slug(p: &QuenchProtocol, lambda: f64) -> String {
    let v = match p.variant {
        Variant::ToCriticalPoint => "qcp",
        Variant::FullQuench => "full",
    };
    match p.evolution {
        Evolution::Continuous => format!("continuous_{v}_tau{}_lambda{lambda}", p.tau_q),
        Evolution::Trotter { dt, steps } => format!("trotter_{v}_dt{dt}_steps{steps}_lambda{lambda}"),
    }
}

/// Times at which a run is recorded.
pub fn sample_times(p: &QuenchProtocol, samples: usize) -> Result<Vec<f64>> {
    match p.evolution {
        Evolution::Trotter { .. } => Ok(std::iter::once(p.t_start()).chain(p.step_times()).collect()),
        Evolution::Continuous => {
            if samples < 2 {
                bail!("observables.samples must be at least 2");
            }
            let (a, b) = (p.t_start(), p.t_end());
            Ok((0..samples)
                .map(|i| {
                    if i + 1 == samples {
                        b
                    } else {
                        a + (b - a) * i as f64 / (samples - 1) as f64
                    }
                })
                .collect())
        }
    }
}

/// Input files: plain paths are kept, directories are searched for `name`.
pub fn collect_inputs(paths: &[PathBuf], name: &str) -> Result<Vec<PathBuf>> {
    fn walk(d: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(d)
            .with_context(|| format!("listing {}", d.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, name, out)?;
            } else if p.file_name().is_some_and(|f| f == name) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            walk(p, name, &mut out)?;
        } else if p.exists() {
            out.push(p.clone());
        } else {
            bail!("input {} does not exist", p.display());
        }
    }
    if out.is_empty() {
        bail!("no {name} inputs found");
    }
    Ok(out)
}
