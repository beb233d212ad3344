use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Context, Result};

/// Output location and identity of one command invocation.
pub struct Run {
    pub out: PathBuf,
    pub name: String,
    pub command: &'static str,
    pub seed: u64,
}

impl Run {
    pub fn new(out: &Path, name: Option<&str>, command: &'static str, seed: u64) -> Result<Self> {
        fs::create_dir_all(out).user(&format!("creating output directory {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            name: name.unwrap_or(command).to_string(),
            command,
            seed,
        })
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.out.join(format!("{}.metrics.csv", self.name))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join(format!("{}.manifest.json", self.name))
    }

    pub fn write_metrics(&self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.metrics_path();
        let mut w = csv::Writer::from_path(&path).user(&format!("writing {}", path.display()))?;
        w.write_record(header).user("writing metrics")?;
        for r in rows {
            w.write_record(r).user("writing metrics")?;
        }
        w.flush().user("writing metrics")?;
        Ok(())
    }

    pub fn write_manifest(&self, config: Value, results: Value) -> Result<()> {
        let doc = json!({
            "tool": "hrtfkit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "config": config,
            "results": results,
            "metrics": format!("{}.metrics.csv", self.name),
        });
        let mut text = serde_json::to_string_pretty(&doc).internal("encoding manifest")?;
        text.push('\n');
        let path = self.manifest_path();
        fs::write(&path, text).user(&format!("writing {}", path.display()))
    }
}

/// Independent seed for work item `stream` under a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.gen()
}

pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// JSON number, or a string for values JSON cannot hold.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}
