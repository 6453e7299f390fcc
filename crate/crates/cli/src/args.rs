use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "densitymap",
    version,
    about = "Kernel-density hot-region maps from geocoded publications"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Publications file -> weighted points file (plus rejects report).
    Geocode(PipelineArgs),
    /// Points (or publications) -> grid CSV.
    Density(PipelineArgs),
    /// Grid CSV (given with --grid) -> PNG and/or KMZ.
    Render(PipelineArgs),
    /// Every stage, end to end.
    Run(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Exp,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountingArg {
    Full,
    Fractional,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Pre-geocoded `lat,lon,weight` input.
    #[arg(long, value_name = "FILE", conflicts_with = "pubs")]
    pub points: Option<PathBuf>,
    /// Publications input, one row per (publication, address).
    #[arg(long, value_name = "FILE")]
    pub pubs: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub gazetteer: Option<PathBuf>,
    /// Read-only cache of earlier geocoder answers, consulted after the gazetteer.
    #[arg(long, value_name = "FILE")]
    pub geocoder_cache: Option<PathBuf>,

    /// Map bounds as S,N,W,E in degrees.
    #[arg(long, value_name = "S,N,W,E", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, value_name = "KM")]
    pub width_km: Option<f64>,
    /// Kernel cutoff in units of the width; `inf` disables truncation.
    #[arg(long, value_name = "U")]
    pub umax: Option<f64>,
    #[arg(long, value_enum)]
    pub counting: Option<CountingArg>,
    #[arg(long, value_name = "P")]
    pub percentile: Option<f64>,

    /// Density drawn as pure green, publications per km².
    #[arg(long, value_name = "X", conflicts_with = "anchor_from")]
    pub anchor_density: Option<f64>,
    /// Grid CSV whose 90th-percentile nonzero density becomes the anchor.
    #[arg(long, value_name = "RASTER.csv")]
    pub anchor_from: Option<PathBuf>,

    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub kmz: Option<PathBuf>,
    /// Grid CSV output (input for `render`).
    #[arg(long, value_name = "PATH")]
    pub grid: Option<PathBuf>,
    /// Resolved points output.
    #[arg(long, value_name = "PATH")]
    pub out_points: Option<PathBuf>,
    /// Rejected addresses and unresolved cities.
    #[arg(long, value_name = "PATH")]
    pub rejects: Option<PathBuf>,
    /// Run manifest (JSON). Defaults to `<first output>.manifest.json`.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Draw point locations on the PNG and add placemarks to the KMZ.
    #[arg(long)]
    pub points_overlay: bool,
    #[arg(long, value_name = "PX")]
    pub point_radius: Option<u32>,
    /// GeoJSON line geometries to stroke on the PNG.
    #[arg(long, value_name = "FILE")]
    pub borders: Option<PathBuf>,
    /// Alpha (0-255) of colored cells in KMZ overlays.
    #[arg(long, value_name = "A")]
    pub overlay_alpha: Option<u8>,
    /// Four flat color classes instead of a continuous ramp.
    #[arg(long)]
    pub discrete: bool,

    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    /// Fail instead of warning when too much weight stays unresolved.
    #[arg(long)]
    pub strict: bool,
    /// Unresolved share of the total weight that triggers the warning/failure.
    #[arg(long, value_name = "FRACTION")]
    pub max_unresolved: Option<f64>,
}
