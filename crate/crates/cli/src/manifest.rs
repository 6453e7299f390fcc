//! Flat JSON record of a run, enough to repeat it.

use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use densitymap::ingest::CountingMode;
use densitymap::KernelKind;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{Anchor, Input, RunConfig};

/// Key of the only field that changes between identical runs.
pub const TIMESTAMP_KEY: &str = "created_unix";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Keys are kept sorted, so equal runs serialize identically.
#[derive(Debug, Default)]
pub struct Manifest(Map<String, Value>);

fn number(x: f64) -> Value {
    // JSON has no infinity; `umax = inf` is spelled as a string.
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

fn path_value(p: &Option<std::path::PathBuf>) -> Value {
    p.as_ref()
        .map_or(Value::Null, |p| Value::String(p.display().to_string()))
}

impl Manifest {
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_string(), value.into());
    }

    pub fn set_f64(&mut self, key: &str, x: f64) {
        self.0.insert(key.to_string(), number(x));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    /// Records the effective parameters and input digests.
    pub fn from_config(command: &str, cfg: &RunConfig) -> Result<Self> {
        let mut m = Manifest::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        match &cfg.input {
            Some(Input::Points(p)) => {
                m.set("input_kind", "points");
                m.set("input", p.display().to_string());
                m.set("input_sha256", sha256_file(p)?);
            }
            Some(Input::Publications(p)) => {
                m.set("input_kind", "publications");
                m.set("input", p.display().to_string());
                m.set("input_sha256", sha256_file(p)?);
            }
            None => {
                m.set("input_kind", Value::Null);
                m.set("input", Value::Null);
            }
        }
        for (key, path) in [
            ("gazetteer", &cfg.gazetteer),
            ("geocoder_cache", &cfg.geocoder_cache),
            ("borders", &cfg.render.borders),
        ] {
            m.set(key, path_value(path));
            if let Some(p) = path {
                m.set(&format!("{key}_sha256"), sha256_file(p)?);
            }
        }
        let b = &cfg.bounds;
        m.set_f64("bounds_south", b.south);
        m.set_f64("bounds_north", b.north);
        m.set_f64("bounds_west", b.west);
        m.set_f64("bounds_east", b.east);
        m.set("rows", cfg.rows);
        m.set("cols", cfg.cols);
        m.set(
            "kernel",
            match cfg.kernel {
                KernelKind::Exponential => "exp",
                KernelKind::Gaussian => "gauss",
            },
        );
        m.set_f64("width_km", cfg.width_km);
        m.set_f64("umax", cfg.u_max);
        m.set(
            "counting",
            match cfg.counting {
                CountingMode::Full => "full",
                CountingMode::Fractional => "fractional",
            },
        );
        m.set_f64("percentile", cfg.percentile);
        match &cfg.anchor {
            Some(Anchor::Reference(p)) => {
                m.set("anchor_from", p.display().to_string());
                m.set("anchor_from_sha256", sha256_file(p)?);
            }
            _ => m.set("anchor_from", Value::Null),
        }
        m.set("discrete", cfg.discrete);
        m.set("ramp_white", cfg.stops.white.to_vec());
        m.set("ramp_green", cfg.stops.green.to_vec());
        m.set("ramp_yellow", cfg.stops.yellow.to_vec());
        m.set("ramp_red", cfg.stops.red.to_vec());
        m.set("png_alpha", cfg.png_alpha);
        m.set("points_overlay", cfg.render.draw_points);
        m.set("point_radius", cfg.render.point_radius_px);
        m.set("overlay_alpha", cfg.render.overlay_alpha);
        m.set("output_png", path_value(&cfg.outputs.png));
        m.set("output_kmz", path_value(&cfg.outputs.kmz));
        m.set("output_grid", path_value(&cfg.outputs.grid));
        m.set("output_points", path_value(&cfg.outputs.points));
        m.set("output_rejects", path_value(&cfg.outputs.rejects));
        m.set("strict", cfg.strict);
        m.set_f64("max_unresolved", cfg.max_unresolved);
        m.set(
            "threads",
            cfg.threads.unwrap_or_else(rayon::current_num_threads),
        );
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.0).expect("manifest is plain JSON");
        text.push('\n');
        text
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        self.set(TIMESTAMP_KEY, now);
        std::fs::write(path, self.to_json())
            .with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn infinity_is_spelled_out() {
        let mut m = Manifest::default();
        m.set_f64("umax", f64::INFINITY);
        m.set_f64("h", 100.0);
        assert_eq!(m.get("umax"), Some(&Value::String("inf".into())));
        assert_eq!(m.get("h").and_then(Value::as_f64), Some(100.0));
    }

    #[test]
    fn keys_are_sorted() {
        let mut m = Manifest::default();
        m.set("zeta", 1);
        m.set("alpha", 2);
        let json = m.to_json();
        assert!(json.find("alpha").unwrap() < json.find("zeta").unwrap());
    }
}
