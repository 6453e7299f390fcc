//! The four stages and their wiring.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use densitymap::color::anchor_from_reference;
use densitymap::export::{count_outside, read_grid_csv, render_png, write_grid_csv, write_kmz};
use densitymap::ingest::{
    count_city_occurrences, load_cache, resolve_cities, select_top_percentile, AddressReject,
    Gazetteer, Geocoder, Unresolved,
};
use densitymap::io::{
    read_gazetteer_file, read_points_file, read_publications_file, write_points, write_rejects,
};
use densitymap::{density_fast, ColorRamp, KernelSpec, Raster, RasterSpec, WeightedPoint};
use log::{info, warn};

use crate::config::{Anchor, Input, RunConfig};
use crate::manifest::Manifest;
use crate::UsageError;

/// Points produced by the ingest stages, plus what was dropped on the way.
#[derive(Debug, Default)]
pub struct Ingested {
    pub points: Vec<WeightedPoint>,
    pub address_rejects: Vec<AddressReject>,
    pub unresolved: Vec<Unresolved>,
    pub records_total: usize,
    pub records_selected: usize,
    pub unresolved_weight: f64,
}

impl Ingested {
    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight()).sum()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Publications → selected records → city occurrences → located points.
pub fn geocode(cfg: &RunConfig, pubs: &Path) -> Result<Ingested> {
    if cfg.gazetteer.is_none() && cfg.geocoder_cache.is_none() {
        return Err(UsageError("--pubs needs --gazetteer and/or --geocoder-cache".into()).into());
    }
    let records = read_publications_file(pubs)?;
    let selected = select_top_percentile(&records, cfg.percentile)?;
    info!(
        "selected {} of {} publications (top {}%)",
        selected.len(),
        records.len(),
        cfg.percentile
    );

    let mut out = Ingested {
        records_total: records.len(),
        records_selected: selected.len(),
        ..Ingested::default()
    };
    let mut occurrences = Vec::new();
    for record in &selected {
        let counted = count_city_occurrences(record, cfg.counting);
        occurrences.extend(counted.occurrences);
        out.address_rejects.extend(counted.rejects);
    }

    let gazetteer = match &cfg.gazetteer {
        Some(path) => Gazetteer::from_entries(read_gazetteer_file(path)?)?,
        None => Gazetteer::default(),
    };
    let mut cache = match &cfg.geocoder_cache {
        Some(path) => Some(load_cache(path)?),
        None => None,
    };
    let fallback = cache.as_mut().map(|c| c as &mut dyn Geocoder);
    // Lookup warnings are logged by the library as they happen.
    let resolution = resolve_cities(&occurrences, &gazetteer, fallback);

    let resolved = resolution.resolved_weight();
    out.unresolved_weight = resolution.unresolved_weight();
    let total = resolved + out.unresolved_weight;
    if total > 0.0 {
        let share = out.unresolved_weight / total;
        if share > cfg.max_unresolved {
            let msg = format!(
                "{:.1}% of the weight ({} of {} city keys) could not be placed; limit is {:.1}%",
                share * 100.0,
                resolution.unresolved.len(),
                resolution.unresolved.len() + resolution.points.len(),
                cfg.max_unresolved * 100.0
            );
            if cfg.strict {
                bail!(msg);
            }
            warn!("{msg}");
        }
    }
    out.points = resolution.weighted_points();
    out.unresolved = resolution.unresolved;
    Ok(out)
}

/// Loads the configured input, geocoding publications when needed.
pub fn ingest(cfg: &RunConfig) -> Result<Ingested> {
    match cfg.require_input()? {
        Input::Publications(pubs) => geocode(cfg, pubs),
        Input::Points(path) => Ok(Ingested {
            points: read_points_file(path)?,
            ..Ingested::default()
        }),
    }
}

pub fn raster_spec(cfg: &RunConfig) -> Result<RasterSpec> {
    Ok(RasterSpec::new(cfg.bounds, cfg.rows, cfg.cols)?)
}

/// Evaluates the density on a worker pool of `cfg.threads` threads.
/// The result does not depend on the thread count.
pub fn density(cfg: &RunConfig, points: &[WeightedPoint]) -> Result<Raster> {
    let spec = raster_spec(cfg)?;
    let outside = count_outside(&spec, points);
    if outside > 0 {
        warn!(
            "{outside} of {} points lie outside the map bounds; they still contribute near the edges",
            points.len()
        );
    }
    let kernel = KernelSpec::new(cfg.kernel, cfg.width_km)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("cannot start worker threads")?;
    Ok(pool.install(|| density_fast(points, &spec, &kernel, cfg.u_max))?)
}

pub fn resolve_anchor(cfg: &RunConfig) -> Result<f64> {
    match &cfg.anchor {
        Some(Anchor::Density(g)) => Ok(*g),
        Some(Anchor::Reference(path)) => {
            let f =
                fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let table = read_grid_csv(std::io::BufReader::new(f))
                .with_context(|| format!("reading reference raster {}", path.display()))?;
            Ok(anchor_from_reference(&table.densities())?)
        }
        None => Err(UsageError("no color anchor given".into()).into()),
    }
}

pub fn ramp(cfg: &RunConfig, anchor: f64) -> Result<ColorRamp> {
    Ok(ColorRamp::new(anchor)?
        .with_stops(cfg.stops)
        .with_alpha(cfg.png_alpha)
        .with_discrete(cfg.discrete))
}

/// Reads a grid CSV and checks it against the configured bounds.
pub fn load_grid(cfg: &RunConfig, path: &Path) -> Result<Raster> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let table = read_grid_csv(std::io::BufReader::new(f))
        .with_context(|| format!("reading grid {}", path.display()))?;
    let spec = RasterSpec::new(cfg.bounds, table.rows, table.cols)?;
    table
        .into_raster(spec)
        .with_context(|| format!("grid {} does not match --bounds", path.display()))
}

fn write_ingest_outputs(cfg: &RunConfig, ing: &Ingested) -> Result<()> {
    if let Some(path) = &cfg.outputs.points {
        write_points(create(path)?, &ing.points)?;
    }
    if let Some(path) = &cfg.outputs.rejects {
        write_rejects(create(path)?, &ing.address_rejects, &ing.unresolved)?;
    }
    Ok(())
}

fn record_points(m: &mut Manifest, ing: &Ingested) {
    m.set("m", ing.points.len());
    m.set_f64("total_weight", ing.total_weight());
    m.set_f64("unresolved_weight", ing.unresolved_weight);
    m.set("unresolved_cities", ing.unresolved.len());
    m.set("rejected_addresses", ing.address_rejects.len());
    m.set("records_total", ing.records_total);
    m.set("records_selected", ing.records_selected);
}

fn record_raster(m: &mut Manifest, raster: &Raster) {
    m.set_f64("min_density", raster.min());
    m.set_f64("max_density", raster.max());
}

fn write_colored(
    cfg: &RunConfig,
    m: &mut Manifest,
    raster: &Raster,
    points: &[WeightedPoint],
) -> Result<()> {
    if !cfg.outputs.wants_color() {
        return Ok(());
    }
    let g = resolve_anchor(cfg)?;
    m.set_f64("anchor_g", g);
    let ramp = ramp(cfg, g)?;
    if let Some(path) = &cfg.outputs.png {
        write_bytes(path, &render_png(raster, &ramp, points, &cfg.render)?)?;
    }
    if let Some(path) = &cfg.outputs.kmz {
        write_bytes(path, &write_kmz(raster, &ramp, points, &cfg.render)?)?;
    }
    Ok(())
}

fn finish(cfg: &RunConfig, mut m: Manifest) -> Result<()> {
    if let Some(path) = cfg.outputs.manifest_path() {
        m.write(&path)?;
    }
    Ok(())
}

pub fn run_geocode(cfg: &RunConfig) -> Result<()> {
    let Input::Publications(pubs) = cfg.require_input()? else {
        return Err(UsageError("geocode reads --pubs".into()).into());
    };
    if cfg.outputs.points.is_none() {
        return Err(UsageError("geocode needs --out-points".into()).into());
    }
    let mut m = Manifest::from_config("geocode", cfg)?;
    let ing = geocode(cfg, pubs)?;
    write_ingest_outputs(cfg, &ing)?;
    record_points(&mut m, &ing);
    finish(cfg, m)
}

pub fn run_density(cfg: &RunConfig) -> Result<()> {
    cfg.require_input()?;
    let Some(grid) = &cfg.outputs.grid else {
        return Err(UsageError("density needs --grid".into()).into());
    };
    let mut m = Manifest::from_config("density", cfg)?;
    let ing = ingest(cfg)?;
    write_ingest_outputs(cfg, &ing)?;
    let raster = density(cfg, &ing.points)?;
    write_grid_csv(create(grid)?, &raster)?;
    record_points(&mut m, &ing);
    record_raster(&mut m, &raster);
    finish(cfg, m)
}

/// Colors an existing grid. Points for the overlay come from `--points` or
/// `--pubs` when given.
pub fn run_render(cfg: &RunConfig) -> Result<()> {
    let Some(grid) = &cfg.outputs.grid else {
        return Err(UsageError("render reads the grid given with --grid".into()).into());
    };
    if !cfg.outputs.wants_color() {
        return Err(UsageError("render needs --png and/or --kmz".into()).into());
    }
    cfg.require_anchor_if_colored()?;
    if cfg.render.draw_points && cfg.input.is_none() {
        return Err(UsageError("--points-overlay needs --points or --pubs".into()).into());
    }
    // The grid is an input here; record its digest and keep it out of the outputs.
    let mut m = Manifest::from_config("render", cfg)?;
    m.set("output_grid", serde_json::Value::Null);
    m.set("grid", grid.display().to_string());
    m.set("grid_sha256", crate::manifest::sha256_file(grid)?);
    let raster = load_grid(cfg, grid)?;
    let points = match cfg.input {
        Some(_) => {
            let ing = ingest(cfg)?;
            record_points(&mut m, &ing);
            ing.points
        }
        None => Vec::new(),
    };
    record_raster(&mut m, &raster);
    write_colored(cfg, &mut m, &raster, &points)?;
    finish(cfg, m)
}

pub fn run_all(cfg: &RunConfig) -> Result<()> {
    cfg.require_input()?;
    cfg.require_anchor_if_colored()?;
    let o = &cfg.outputs;
    if o.png.is_none() && o.kmz.is_none() && o.grid.is_none() && o.points.is_none() {
        return Err(UsageError(
            "run needs at least one of --png, --kmz, --grid, --out-points".into(),
        )
        .into());
    }
    let mut m = Manifest::from_config("run", cfg)?;
    let ing = ingest(cfg)?;
    write_ingest_outputs(cfg, &ing)?;
    record_points(&mut m, &ing);
    let raster = density(cfg, &ing.points)?;
    record_raster(&mut m, &raster);
    if let Some(path) = &o.grid {
        write_grid_csv(create(path)?, &raster)?;
    }
    write_colored(cfg, &mut m, &raster, &ing.points)?;
    finish(cfg, m)
}
