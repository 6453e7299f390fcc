//! PNG rendering, KMZ ground overlays and the grid CSV.
//!
//! Images are one pixel per cell with north at the top: image row `y` shows
//! raster row `rows − y`, image column `x` shows raster column `x + 1`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::color::{ColorRamp, Rgba};
use crate::density::WeightedPoint;
use crate::error::{Error, Result};
use crate::grid::{Raster, RasterSpec};

pub const KML_NAMESPACE: &str = "http://www.opengis.net/kml/2.2";
pub const KMZ_OVERLAY_PATH: &str = "files/overlay.png";
pub const GRID_CSV_HEADER: &str = "i,j,lat,lon,density";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub draw_points: bool,
    pub point_radius_px: u32,
    pub point_color: Rgba,
    /// Line geometries (GeoJSON LineString / MultiLineString) stroked on top.
    pub borders: Option<PathBuf>,
    pub border_color: Rgba,
    /// Alpha of colored cells in KMZ overlays.
    pub overlay_alpha: u8,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            draw_points: false,
            point_radius_px: 2,
            point_color: Rgba([0, 0, 160, 255]),
            borders: None,
            border_color: Rgba([64, 64, 64, 255]),
            overlay_alpha: 160,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<()> {
        if self.draw_points && self.point_radius_px == 0 {
            return Err(Error::InvalidArgument(
                "point radius must be at least 1 pixel when drawing points".into(),
            ));
        }
        Ok(())
    }
}

/// An RGBA8 image, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Image {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 4],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgba {
        let o = (y * self.width + x) * 4;
        Rgba([
            self.data[o],
            self.data[o + 1],
            self.data[o + 2],
            self.data[o + 3],
        ])
    }

    fn put(&mut self, x: i64, y: i64, c: Rgba) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let o = (y as usize * self.width + x as usize) * 4;
        self.data[o..o + 4].copy_from_slice(&c.0);
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header()?;
            w.write_image_data(&self.data)?;
        }
        Ok(buf)
    }
}

/// Continuous pixel coordinates (x right, y down) of a location.
pub fn pixel_position(spec: &RasterSpec, lat: f64, lon: f64) -> (f64, f64) {
    let b = &spec.bounds;
    let x = (lon - b.west) / (b.east - b.west) * spec.cols as f64;
    let y = (b.north - lat) / (b.north - b.south) * spec.rows as f64;
    (x, y)
}

/// Inverse of [`pixel_position`].
pub fn pixel_to_location(spec: &RasterSpec, x: f64, y: f64) -> (f64, f64) {
    let b = &spec.bounds;
    let lon = b.west + x / spec.cols as f64 * (b.east - b.west);
    let lat = b.north - y / spec.rows as f64 * (b.north - b.south);
    (lat, lon)
}

/// Colors the raster into an image, north up. With `transparent_zero`,
/// zero-density cells keep their color channels but get alpha 0.
pub fn raster_image(raster: &Raster, ramp: &ColorRamp, transparent_zero: bool) -> Result<Image> {
    let spec = raster.spec();
    let grid = ramp.colorize_raster(raster)?;
    let mut img = Image::new(spec.cols, spec.rows);
    for y in 0..spec.rows {
        let i = spec.rows - y;
        for x in 0..spec.cols {
            let mut c = grid.get(i, x + 1);
            if transparent_zero && raster.values()[(i - 1) * spec.cols + x] == 0.0 {
                c.0[3] = 0;
            }
            img.put(x as i64, y as i64, c);
        }
    }
    Ok(img)
}

/// Number of points that fall outside the raster bounds.
pub fn count_outside(spec: &RasterSpec, points: &[WeightedPoint]) -> usize {
    points
        .iter()
        .filter(|p| !spec.bounds.contains(&p.location))
        .count()
}

fn draw_points(img: &mut Image, spec: &RasterSpec, points: &[WeightedPoint], opts: &RenderOptions) {
    let r = opts.point_radius_px as f64;
    let mut outside = 0usize;
    for p in points {
        if !spec.bounds.contains(&p.location) {
            outside += 1;
            continue;
        }
        let (cx, cy) = pixel_position(spec, p.location.lat(), p.location.lon());
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r {
                    img.put(x, y, opts.point_color);
                }
            }
        }
    }
    if outside > 0 {
        warn!("{outside} point(s) outside the map bounds were not drawn");
    }
}

/// Polylines from a GeoJSON document, as `[lon, lat]` vertex lists. Only
/// LineString and MultiLineString geometries are read; everything else is
/// ignored.
pub fn parse_border_lines(json: &str) -> Result<Vec<Vec<[f64; 2]>>> {
    let doc: Value = serde_json::from_str(json)?;
    let mut lines = Vec::new();
    collect_lines(&doc, &mut lines);
    Ok(lines)
}

fn collect_lines(v: &Value, out: &mut Vec<Vec<[f64; 2]>>) {
    match v {
        Value::Object(map) => {
            let coords = map.get("coordinates");
            match (map.get("type").and_then(Value::as_str), coords) {
                (Some("LineString"), Some(c)) => {
                    if let Some(line) = as_line(c) {
                        out.push(line);
                    }
                }
                (Some("MultiLineString"), Some(Value::Array(parts))) => {
                    out.extend(parts.iter().filter_map(as_line));
                }
                _ => {}
            }
            for (k, child) in map {
                if k != "coordinates" {
                    collect_lines(child, out);
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|c| collect_lines(c, out)),
        _ => {}
    }
}

fn as_line(v: &Value) -> Option<Vec<[f64; 2]>> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let a = pt.as_array()?;
            Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?])
        })
        .collect()
}

fn read_borders(path: &Path) -> Result<Vec<Vec<[f64; 2]>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_border_lines(&text)
        .map_err(|e| Error::InvalidArgument(format!("borders file {}: {e}", path.display())))
}

fn stroke(img: &mut Image, spec: &RasterSpec, lines: &[Vec<[f64; 2]>], color: Rgba) {
    for line in lines {
        for seg in line.windows(2) {
            let (x0, y0) = pixel_position(spec, seg[0][1], seg[0][0]);
            let (x1, y1) = pixel_position(spec, seg[1][1], seg[1][0]);
            let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().max(1.0);
            if !steps.is_finite() || steps > 1e7 {
                continue;
            }
            let n = steps as usize;
            for s in 0..=n {
                let t = s as f64 / steps;
                let x = x0 + (x1 - x0) * t;
                let y = y0 + (y1 - y0) * t;
                img.put(x.floor() as i64, y.floor() as i64, color);
            }
        }
    }
}

/// Renders the colored raster with optional point and border overlays.
pub fn render_image(
    raster: &Raster,
    ramp: &ColorRamp,
    points: &[WeightedPoint],
    opts: &RenderOptions,
) -> Result<Image> {
    opts.validate()?;
    let mut img = raster_image(raster, ramp, false)?;
    if let Some(path) = &opts.borders {
        let lines = read_borders(path)?;
        stroke(&mut img, raster.spec(), &lines, opts.border_color);
    }
    if opts.draw_points {
        draw_points(&mut img, raster.spec(), points, opts);
    }
    Ok(img)
}

/// PNG (8-bit RGBA) of [`render_image`].
pub fn render_png(
    raster: &Raster,
    ramp: &ColorRamp,
    points: &[WeightedPoint],
    opts: &RenderOptions,
) -> Result<Vec<u8>> {
    render_image(raster, ramp, points, opts)?.encode_png()
}

/// Writes `i,j,lat,lon,density`, one row per cell, `i` outermost.
/// Densities carry 17 significant digits.
pub fn write_grid_csv<W: Write>(mut out: W, raster: &Raster) -> Result<()> {
    let spec = raster.spec();
    let mut line = String::with_capacity(96);
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for i in 1..=spec.rows {
        for j in 1..=spec.cols {
            let c = spec.cell_center(i, j)?;
            let d = raster.values()[(i - 1) * spec.cols + (j - 1)];
            line.clear();
            let _ = writeln!(line, "{i},{j},{},{},{d:.16e}", c.lat(), c.lon());
            out.write_all(line.as_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rows of a grid CSV as read, before being matched to a raster layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub rows: usize,
    pub cols: usize,
    /// `(lat, lon, density)` in file order (row-major).
    pub cells: Vec<(f64, f64, f64)>,
}

impl GridTable {
    pub fn densities(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.2).collect()
    }

    /// Attaches the table to `spec`, checking dimensions and that every
    /// recorded center matches the spec's cell centers.
    pub fn into_raster(self, spec: RasterSpec) -> Result<Raster> {
        if self.rows != spec.rows || self.cols != spec.cols {
            return Err(Error::InvalidArgument(format!(
                "grid is {}x{} but the raster layout is {}x{}",
                self.rows, self.cols, spec.rows, spec.cols
            )));
        }
        let tol_lat = spec.lat_step() * 1e-6;
        let tol_lon = spec.lon_step() * 1e-6;
        for (n, (lat, lon, _)) in self.cells.iter().enumerate() {
            let c = spec.cell_center(n / spec.cols + 1, n % spec.cols + 1)?;
            if (c.lat() - lat).abs() > tol_lat || (c.lon() - lon).abs() > tol_lon {
                return Err(Error::InvalidArgument(format!(
                    "grid cell {} center ({lat}, {lon}) does not match bounds {:?}",
                    n + 1,
                    spec.bounds
                )));
            }
        }
        Raster::from_values(spec, self.cells.into_iter().map(|c| c.2).collect())
    }
}

/// Parses a grid CSV written by [`write_grid_csv`].
pub fn read_grid_csv<R: Read>(input: R) -> Result<GridTable> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != GRID_CSV_HEADER {
        return Err(Error::parse(
            1,
            format!("expected header {GRID_CSV_HEADER:?}"),
        ));
    }
    let mut cells = Vec::new();
    let mut index = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n as u64 + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(lineno, "expected 5 fields"));
        }
        let bad = |what: &str| Error::parse(lineno, format!("bad {what}"));
        let i: usize = f[0].parse().map_err(|_| bad("row index"))?;
        let j: usize = f[1].parse().map_err(|_| bad("column index"))?;
        let lat: f64 = f[2].parse().map_err(|_| bad("lat"))?;
        let lon: f64 = f[3].parse().map_err(|_| bad("lon"))?;
        let d: f64 = f[4].parse().map_err(|_| bad("density"))?;
        index.push((i, j, lineno));
        cells.push((lat, lon, d));
    }
    let (rows, cols) = index
        .iter()
        .fold((0, 0), |(r, c), &(i, j, _)| (r.max(i), c.max(j)));
    if rows * cols != cells.len() || cells.is_empty() {
        return Err(Error::parse(
            1,
            format!(
                "grid has {} rows of data but indices span {rows}x{cols}",
                cells.len()
            ),
        ));
    }
    for (n, &(i, j, lineno)) in index.iter().enumerate() {
        if (i, j) != (n / cols + 1, n % cols + 1) {
            return Err(Error::parse(
                lineno,
                format!("cell ({i},{j}) out of row-major order"),
            ));
        }
    }
    Ok(GridTable { rows, cols, cells })
}

/// Builds the KML document for an overlay of `spec` and optional points.
pub fn kml_document(spec: &RasterSpec, points: &[WeightedPoint], opts: &RenderOptions) -> String {
    let b = &spec.bounds;
    let mut kml = String::new();
    let _ = write!(
        kml,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <kml xmlns=\"{KML_NAMESPACE}\">\n\
         <Document>\n\
         <name>Publication density</name>\n\
         <GroundOverlay>\n\
         <name>Density</name>\n\
         <Icon><href>{KMZ_OVERLAY_PATH}</href></Icon>\n\
         <LatLonBox>\n\
         <north>{}</north>\n\
         <south>{}</south>\n\
         <east>{}</east>\n\
         <west>{}</west>\n\
         </LatLonBox>\n\
         </GroundOverlay>\n",
        b.north, b.south, b.east, b.west
    );
    if opts.draw_points {
        kml.push_str("<Folder>\n<name>Locations</name>\n");
        for (k, p) in points.iter().enumerate() {
            let _ = writeln!(
                kml,
                "<Placemark><name>{}</name><description>weight: {}</description>\
                 <Point><coordinates>{},{},0</coordinates></Point></Placemark>",
                k + 1,
                p.weight(),
                p.location.lon(),
                p.location.lat()
            );
        }
        kml.push_str("</Folder>\n");
    }
    kml.push_str("</Document>\n</kml>\n");
    kml
}

/// The KMZ overlay image: the PNG colors at `overlay_alpha`, with zero cells
/// fully transparent.
pub fn overlay_image(raster: &Raster, ramp: &ColorRamp, opts: &RenderOptions) -> Result<Image> {
    let ramp = ramp.with_alpha(opts.overlay_alpha);
    raster_image(raster, &ramp, true)
}

/// Zips `doc.kml` and the overlay PNG into a KMZ archive.
pub fn write_kmz(
    raster: &Raster,
    ramp: &ColorRamp,
    points: &[WeightedPoint],
    opts: &RenderOptions,
) -> Result<Vec<u8>> {
    opts.validate()?;
    let png = overlay_image(raster, ramp, opts)?.encode_png()?;
    let kml = kml_document(raster.spec(), points, opts);
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    zip.start_file("doc.kml", options)?;
    zip.write_all(kml.as_bytes())?;
    zip.start_file(KMZ_OVERLAY_PATH, options)?;
    zip.write_all(&png)?;
    Ok(zip.finish()?.into_inner())
}
