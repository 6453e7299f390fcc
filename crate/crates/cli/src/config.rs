//! Effective run configuration: flags over config file over defaults.

use std::path::{Path, PathBuf};

use densitymap::color::RampStops;
use densitymap::export::RenderOptions;
use densitymap::ingest::CountingMode;
use densitymap::{BoundingBox, KernelKind, DEFAULT_U_MAX};
use serde::Deserialize;

use crate::args::{CountingArg, KernelArg, PipelineArgs};
use crate::UsageError;

pub const DEFAULT_ROWS: usize = 500;
pub const DEFAULT_COLS: usize = 1000;
pub const DEFAULT_WIDTH_KM: f64 = 100.0;
pub const DEFAULT_PERCENTILE: f64 = 1.0;
/// Europe: S, N, W, E.
pub const DEFAULT_BOUNDS: [f64; 4] = [35.0, 72.0, -25.0, 45.0];
pub const DEFAULT_MAX_UNRESOLVED: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Points(PathBuf),
    Publications(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Anchor {
    Density(f64),
    Reference(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub png: Option<PathBuf>,
    pub kmz: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

impl Outputs {
    pub fn wants_color(&self) -> bool {
        self.png.is_some() || self.kmz.is_some()
    }

    /// Explicit manifest path, else `<first output>.manifest.json`.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.manifest {
            return Some(p.clone());
        }
        [&self.png, &self.kmz, &self.grid, &self.points]
            .into_iter()
            .flatten()
            .next()
            .map(|p| {
                let mut s = p.clone().into_os_string();
                s.push(".manifest.json");
                PathBuf::from(s)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<Input>,
    pub gazetteer: Option<PathBuf>,
    pub geocoder_cache: Option<PathBuf>,
    pub bounds: BoundingBox,
    pub rows: usize,
    pub cols: usize,
    pub kernel: KernelKind,
    pub width_km: f64,
    pub u_max: f64,
    pub counting: CountingMode,
    pub percentile: f64,
    pub anchor: Option<Anchor>,
    pub stops: RampStops,
    pub png_alpha: u8,
    pub discrete: bool,
    pub outputs: Outputs,
    pub render: RenderOptions,
    pub threads: Option<usize>,
    pub strict: bool,
    pub max_unresolved: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let [s, n, w, e] = DEFAULT_BOUNDS;
        Self {
            input: None,
            gazetteer: None,
            geocoder_cache: None,
            bounds: BoundingBox::new(s, n, w, e).expect("default bounds are valid"),
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            kernel: KernelKind::Exponential,
            width_km: DEFAULT_WIDTH_KM,
            u_max: DEFAULT_U_MAX,
            counting: CountingMode::Full,
            percentile: DEFAULT_PERCENTILE,
            anchor: None,
            stops: RampStops::default(),
            png_alpha: 255,
            discrete: false,
            outputs: Outputs::default(),
            render: RenderOptions::default(),
            threads: None,
            strict: false,
            max_unresolved: DEFAULT_MAX_UNRESOLVED,
        }
    }
}

/// Config file layout. Every key is optional; names follow the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub points: Option<PathBuf>,
    pub pubs: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub geocoder_cache: Option<PathBuf>,
    pub bounds: Option<[f64; 4]>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub kernel: Option<String>,
    pub width_km: Option<f64>,
    pub umax: Option<f64>,
    pub counting: Option<CountingMode>,
    pub percentile: Option<f64>,
    pub anchor_density: Option<f64>,
    pub anchor_from: Option<PathBuf>,
    pub png: Option<PathBuf>,
    pub kmz: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub out_points: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub points_overlay: Option<bool>,
    pub point_radius: Option<u32>,
    pub borders: Option<PathBuf>,
    pub overlay_alpha: Option<u8>,
    pub discrete: Option<bool>,
    pub threads: Option<usize>,
    pub strict: Option<bool>,
    pub max_unresolved: Option<f64>,
    #[serde(default)]
    pub ramp: RampConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub white: Option<[u8; 3]>,
    pub green: Option<[u8; 3]>,
    pub yellow: Option<[u8; 3]>,
    pub red: Option<[u8; 3]>,
    pub png_alpha: Option<u8>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses `S,N,W,E`.
pub fn parse_bounds(text: &str) -> Result<BoundingBox, UsageError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError(format!("--bounds expects S,N,W,E numbers, got {text:?}")))?;
    let [s, n, w, e] = parts[..] else {
        return Err(UsageError(format!(
            "--bounds expects four values, got {text:?}"
        )));
    };
    BoundingBox::new(s, n, w, e).map_err(|e| UsageError(format!("--bounds: {e}")))
}

fn kernel_from_name(name: &str) -> Result<KernelKind, UsageError> {
    match name {
        "exp" | "exponential" => Ok(KernelKind::Exponential),
        "gauss" | "gaussian" => Ok(KernelKind::Gaussian),
        other => Err(UsageError(format!("unknown kernel {other:?} (exp|gauss)"))),
    }
}

impl RunConfig {
    /// Merges flags, the optional config file and defaults.
    pub fn from_args(args: &PipelineArgs) -> Result<Self, UsageError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let mut cfg = RunConfig::default();

        // Input: a flag of either kind replaces both file settings.
        let (points, pubs) = if args.points.is_some() || args.pubs.is_some() {
            (args.points.clone(), args.pubs.clone())
        } else {
            (file.points, file.pubs)
        };
        cfg.input = match (points, pubs) {
            (Some(_), Some(_)) => {
                return Err(UsageError(
                    "give either --points or --pubs, not both".into(),
                ))
            }
            (Some(p), None) => Some(Input::Points(p)),
            (None, Some(p)) => Some(Input::Publications(p)),
            (None, None) => None,
        };
        cfg.gazetteer = args.gazetteer.clone().or(file.gazetteer);
        cfg.geocoder_cache = args.geocoder_cache.clone().or(file.geocoder_cache);

        cfg.bounds = match (&args.bounds, file.bounds) {
            (Some(text), _) => parse_bounds(text)?,
            (None, Some([s, n, w, e])) => BoundingBox::new(s, n, w, e)
                .map_err(|e| UsageError(format!("config bounds: {e}")))?,
            (None, None) => cfg.bounds,
        };
        cfg.rows = args.rows.or(file.rows).unwrap_or(cfg.rows);
        cfg.cols = args.cols.or(file.cols).unwrap_or(cfg.cols);
        cfg.kernel = match (args.kernel, file.kernel.as_deref()) {
            (Some(KernelArg::Exp), _) => KernelKind::Exponential,
            (Some(KernelArg::Gauss), _) => KernelKind::Gaussian,
            (None, Some(name)) => kernel_from_name(name)?,
            (None, None) => cfg.kernel,
        };
        cfg.width_km = args.width_km.or(file.width_km).unwrap_or(cfg.width_km);
        cfg.u_max = args.umax.or(file.umax).unwrap_or(cfg.u_max);
        cfg.counting = match args.counting {
            Some(CountingArg::Full) => CountingMode::Full,
            Some(CountingArg::Fractional) => CountingMode::Fractional,
            None => file.counting.unwrap_or(cfg.counting),
        };
        cfg.percentile = args
            .percentile
            .or(file.percentile)
            .unwrap_or(cfg.percentile);

        cfg.anchor = if let Some(g) = args.anchor_density {
            Some(Anchor::Density(g))
        } else if let Some(p) = &args.anchor_from {
            Some(Anchor::Reference(p.clone()))
        } else {
            match (file.anchor_density, file.anchor_from) {
                (Some(_), Some(_)) => {
                    return Err(UsageError(
                        "config sets both anchor_density and anchor_from".into(),
                    ))
                }
                (Some(g), None) => Some(Anchor::Density(g)),
                (None, Some(p)) => Some(Anchor::Reference(p)),
                (None, None) => None,
            }
        };

        let defaults = RampStops::default();
        cfg.stops = RampStops {
            white: file.ramp.white.unwrap_or(defaults.white),
            green: file.ramp.green.unwrap_or(defaults.green),
            yellow: file.ramp.yellow.unwrap_or(defaults.yellow),
            red: file.ramp.red.unwrap_or(defaults.red),
        };
        cfg.png_alpha = file.ramp.png_alpha.unwrap_or(cfg.png_alpha);
        cfg.discrete = args.discrete || file.discrete.unwrap_or(false);

        cfg.outputs = Outputs {
            png: args.png.clone().or(file.png),
            kmz: args.kmz.clone().or(file.kmz),
            grid: args.grid.clone().or(file.grid),
            points: args.out_points.clone().or(file.out_points),
            rejects: args.rejects.clone().or(file.rejects),
            manifest: args.manifest.clone().or(file.manifest),
        };
        let render_defaults = RenderOptions::default();
        cfg.render = RenderOptions {
            draw_points: args.points_overlay || file.points_overlay.unwrap_or(false),
            point_radius_px: args
                .point_radius
                .or(file.point_radius)
                .unwrap_or(render_defaults.point_radius_px),
            borders: args.borders.clone().or(file.borders),
            overlay_alpha: args
                .overlay_alpha
                .or(file.overlay_alpha)
                .unwrap_or(render_defaults.overlay_alpha),
            ..render_defaults
        };
        cfg.threads = args.threads.or(file.threads);
        cfg.strict = args.strict || file.strict.unwrap_or(false);
        cfg.max_unresolved = args
            .max_unresolved
            .or(file.max_unresolved)
            .unwrap_or(cfg.max_unresolved);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on which stage runs.
    pub fn validate(&self) -> Result<(), UsageError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(UsageError("--rows and --cols must be at least 1".into()));
        }
        if !(self.width_km.is_finite() && self.width_km > 0.0) {
            return Err(UsageError("--width-km must be positive".into()));
        }
        if self.u_max.is_nan() || self.u_max <= 0.0 {
            return Err(UsageError("--umax must be positive".into()));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(UsageError("--percentile must be in (0, 100]".into()));
        }
        if let Some(Anchor::Density(g)) = self.anchor {
            if !(g.is_finite() && g > 0.0) {
                return Err(UsageError("--anchor-density must be positive".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(UsageError("--threads must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_unresolved) {
            return Err(UsageError(
                "--max-unresolved must be a fraction in [0, 1]".into(),
            ));
        }
        if self.render.draw_points && self.render.point_radius_px == 0 {
            return Err(UsageError("--point-radius must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require_input(&self) -> Result<&Input, UsageError> {
        self.input
            .as_ref()
            .ok_or_else(|| UsageError("one of --points or --pubs is required".into()))
    }

    pub fn require_anchor_if_colored(&self) -> Result<(), UsageError> {
        if self.outputs.wants_color() && self.anchor.is_none() {
            return Err(UsageError(
                "--png/--kmz need a color anchor: --anchor-density X or --anchor-from RASTER.csv"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::Cli;
    use clap::Parser;

    fn parse(flags: &[&str]) -> Result<RunConfig, UsageError> {
        let mut argv = vec!["densitymap", "run"];
        argv.extend_from_slice(flags);
        let cli = Cli::try_parse_from(argv).expect("clap accepts flags");
        match cli.command {
            crate::args::Command::Run(a) => RunConfig::from_args(&a),
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_follow_the_europe_setup() {
        let cfg = parse(&["--points", "p.csv"]).unwrap();
        assert_eq!((cfg.rows, cfg.cols), (500, 1000));
        assert_eq!(cfg.width_km, 100.0);
        assert_eq!(cfg.kernel, KernelKind::Exponential);
        assert_eq!(cfg.percentile, 1.0);
        assert_eq!(cfg.u_max, 30.0);
        assert_eq!(
            cfg.bounds,
            BoundingBox::new(35.0, 72.0, -25.0, 45.0).unwrap()
        );
    }

    #[test]
    fn flags_are_parsed() {
        let cfg = parse(&[
            "--pubs",
            "x.csv",
            "--bounds",
            "-10,10,-20,20",
            "--rows",
            "7",
            "--cols",
            "9",
            "--kernel",
            "gauss",
            "--width-km",
            "50",
            "--umax",
            "inf",
            "--counting",
            "fractional",
            "--percentile",
            "2.5",
            "--anchor-density",
            "1e-4",
            "--discrete",
        ])
        .unwrap();
        assert_eq!(cfg.input, Some(Input::Publications("x.csv".into())));
        assert_eq!(
            cfg.bounds,
            BoundingBox::new(-10.0, 10.0, -20.0, 20.0).unwrap()
        );
        assert_eq!(cfg.kernel, KernelKind::Gaussian);
        assert_eq!(cfg.u_max, f64::INFINITY);
        assert_eq!(cfg.counting, CountingMode::Fractional);
        assert_eq!(cfg.anchor, Some(Anchor::Density(1e-4)));
        assert!(cfg.discrete);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        assert!(parse(&["--bounds", "1,2,3"]).is_err());
        assert!(parse(&["--bounds", "10,5,0,1"]).is_err());
        assert!(parse(&["--rows", "0"]).is_err());
        assert!(parse(&["--width-km=-1"]).is_err());
        assert!(parse(&["--percentile", "0"]).is_err());
        assert!(parse(&["--anchor-density", "0"]).is_err());
        assert!(parse(&["--threads", "0"]).is_err());
    }

    #[test]
    fn conflicting_inputs_rejected_by_clap() {
        let argv = ["densitymap", "run", "--points", "a", "--pubs", "b"];
        assert!(Cli::try_parse_from(argv).is_err());
        let argv = [
            "densitymap",
            "run",
            "--anchor-density",
            "1",
            "--anchor-from",
            "b",
        ];
        assert!(Cli::try_parse_from(argv).is_err());
    }

    #[test]
    fn colored_output_needs_anchor() {
        let cfg = parse(&["--points", "p.csv", "--png", "o.png"]).unwrap();
        assert!(cfg.require_anchor_if_colored().is_err());
        let cfg = parse(&["--points", "p.csv", "--grid", "o.csv"]).unwrap();
        assert!(cfg.require_anchor_if_colored().is_ok());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
            points = "from-file.csv"
            rows = 40
            cols = 80
            kernel = "gauss"
            anchor_density = 2e-4
            bounds = [40.0, 60.0, 0.0, 30.0]

            [ramp]
            green = [0, 255, 0]
            "#,
        )
        .unwrap();
        let cfg = parse(&["--config", path.to_str().unwrap(), "--rows", "10"]).unwrap();
        assert_eq!(cfg.input, Some(Input::Points("from-file.csv".into())));
        assert_eq!((cfg.rows, cfg.cols), (10, 80));
        assert_eq!(cfg.kernel, KernelKind::Gaussian);
        assert_eq!(cfg.anchor, Some(Anchor::Density(2e-4)));
        assert_eq!(cfg.stops.green, [0, 255, 0]);
        assert_eq!(cfg.bounds.north, 60.0);

        std::fs::write(&path, "nonsense = 1\n").unwrap();
        assert!(parse(&["--config", path.to_str().unwrap()]).is_err());
    }

    #[test]
    fn manifest_defaults_next_to_first_output() {
        let outputs = Outputs {
            kmz: Some("maps/a.kmz".into()),
            grid: Some("maps/a.csv".into()),
            ..Outputs::default()
        };
        assert_eq!(
            outputs.manifest_path(),
            Some(PathBuf::from("maps/a.kmz.manifest.json"))
        );
        assert_eq!(Outputs::default().manifest_path(), None);
    }
}
