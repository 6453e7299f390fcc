//! Kernel density over a raster.
//!
//! `D(i, j) = (1/h²) Σ_k w_k K(d_k(i, j) / h)` where `d_k` is the great-circle
//! distance from point `k` to the center of cell `(i, j)`.
//!
//! Two evaluators are provided. [`density_brute_force`] is the reference: every
//! cell visits every point. [`density_fast`] drops pairs whose scaled distance
//! exceeds a cutoff `u_max`, uses a latitude-sorted index and per-row longitude
//! windows to avoid visiting them, and reuses trigonometric terms that depend
//! only on the row or only on the column. Every pair that survives pruning is
//! still measured exactly, and both evaluators assemble the distance through
//! the same helpers, so with `u_max = ∞` the two agree bit for bit.
//!
//! Each cell sums its contributions in input order. Work is split across cells
//! (rows) only, so results do not depend on the size of the thread pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    distance_from_a, great_circle_distance, haversine_a, haversine_term, lon_delta, GeoPoint,
    EARTH_RADIUS_KM,
};
use crate::grid::{Raster, RasterSpec};
use crate::kernel::KernelSpec;

/// Default scaled-distance cutoff for [`density_fast`]; `exp(−30) ≈ 9.4e−14`.
pub const DEFAULT_U_MAX: f64 = 30.0;

/// Above this many `(point, column)` pairs the longitude terms are computed
/// on the fly instead of tabulated (16M entries = 128 MiB).
const LON_TABLE_LIMIT: usize = 1 << 24;

/// A location carrying a publication weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub location: GeoPoint,
    weight: f64,
}

impl WeightedPoint {
    pub fn new(location: GeoPoint, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "point weight must be finite and non-negative, got {weight}"
            )));
        }
        Ok(Self { location, weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// Reference evaluator: every cell sums over every point.
pub fn density_brute_force(
    points: &[WeightedPoint],
    spec: &RasterSpec,
    kernel: &KernelSpec,
) -> Raster {
    let h = kernel.width_km();
    let mut raster = Raster::zeros(*spec);
    raster
        .values_mut()
        .par_chunks_mut(spec.cols)
        .enumerate()
        .for_each(|(r, row)| {
            for (c, cell) in row.iter_mut().enumerate() {
                let center = spec.cell_center(r + 1, c + 1).expect("index in range");
                let mut sum = 0.0;
                for p in points {
                    let u = great_circle_distance(center, p.location) / h;
                    sum += p.weight * kernel.value(u);
                }
                *cell = sum / (h * h);
            }
        });
    raster
}

/// Largest per-cell difference between [`density_fast`] and
/// [`density_brute_force`] for the given cutoff: `(Σ w)·K(u_max)/h²`.
pub fn truncation_error_bound(points: &[WeightedPoint], kernel: &KernelSpec, u_max: f64) -> f64 {
    let total: f64 = points.iter().map(|p| p.weight).sum();
    let h = kernel.width_km();
    total * kernel.value(u_max) / (h * h)
}

struct Prepared {
    lat: f64,
    lon: f64,
    cos_lat: f64,
    weight: f64,
}

/// Pruned evaluator. Pairs with `d / h > u_max` are skipped; `u_max` may be
/// `f64::INFINITY`.
pub fn density_fast(
    points: &[WeightedPoint],
    spec: &RasterSpec,
    kernel: &KernelSpec,
    u_max: f64,
) -> Result<Raster> {
    if u_max.is_nan() || u_max <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "cutoff u_max must be positive, got {u_max}"
        )));
    }
    let h = kernel.width_km();
    let cols = spec.cols;
    let prepared: Vec<Prepared> = points
        .iter()
        .map(|p| Prepared {
            lat: p.location.lat(),
            lon: p.location.lon(),
            cos_lat: p.location.lat().to_radians().cos(),
            weight: p.weight,
        })
        .collect();

    // Angular cutoff radius (radians); anything at or beyond π covers the globe.
    let radius = u_max * h / EARTH_RADIUS_KM;
    let global = radius >= std::f64::consts::PI;
    // Conservative slack on every pruning test; the exact u ≤ u_max check
    // decides inclusion.
    const SLACK: f64 = 1e-9;
    let a_cut = if global {
        f64::INFINITY
    } else {
        let s = (0.5 * radius).sin();
        s * s * (1.0 + SLACK) + 1e-300
    };
    let lat_reach = if global {
        f64::INFINITY
    } else {
        radius.to_degrees() * (1.0 + SLACK) + SLACK
    };

    let mut by_lat: Vec<usize> = (0..prepared.len()).collect();
    by_lat.sort_by(|&a, &b| prepared[a].lat.total_cmp(&prepared[b].lat));
    let sorted_lats: Vec<f64> = by_lat.iter().map(|&k| prepared[k].lat).collect();

    let col_lons: Vec<f64> = (1..=cols).map(|j| spec.col_lon(j)).collect();
    let lon_table: Option<Vec<f64>> = (prepared.len().saturating_mul(cols) <= LON_TABLE_LIMIT)
        .then(|| {
            prepared
                .iter()
                .flat_map(|p| {
                    col_lons
                        .iter()
                        .map(move |&lon| haversine_term(lon_delta(lon, p.lon)))
                })
                .collect()
        });
    let lon_term = |k: usize, c: usize| match &lon_table {
        Some(t) => t[k * cols + c],
        None => haversine_term(lon_delta(col_lons[c], prepared[k].lon)),
    };

    let mut raster = Raster::zeros(*spec);
    raster
        .values_mut()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, row)| {
            let row_lat = spec.row_lat(r + 1);
            let row_cos = row_lat.to_radians().cos();

            let lo = sorted_lats.partition_point(|&l| l < row_lat - lat_reach);
            let hi = sorted_lats.partition_point(|&l| l <= row_lat + lat_reach);
            let mut candidates: Vec<usize> = by_lat[lo..hi].to_vec();
            candidates.sort_unstable();

            let lon_reach = longitude_reach(radius, global, row_cos);

            for &k in &candidates {
                let p = &prepared[k];
                let lat_term = haversine_term(row_lat - p.lat);
                let cos_product = row_cos * p.cos_lat;
                for range in column_ranges(spec, &col_lons, p.lon, lon_reach) {
                    for c in range {
                        let a = haversine_a(lat_term, cos_product, lon_term(k, c));
                        if a > a_cut {
                            continue;
                        }
                        let u = distance_from_a(a) / h;
                        if u <= u_max {
                            row[c] += p.weight * kernel.value(u);
                        }
                    }
                }
            }
            for v in row.iter_mut() {
                *v /= h * h;
            }
        });
    Ok(raster)
}

/// Half-width in degrees of the longitude band that can hold points within
/// `radius` of a center whose latitude has cosine `cos_lat`, or `None` when
/// the band spans every longitude.
fn longitude_reach(radius: f64, global: bool, cos_lat: f64) -> Option<f64> {
    if global {
        return None;
    }
    let s = radius.sin();
    if s >= cos_lat * (1.0 - 1e-9) {
        // The cap around the center reaches a pole.
        return None;
    }
    let reach = (s / cos_lat).asin().to_degrees() * (1.0 + 1e-9) + 1e-9;
    (reach < 180.0).then_some(reach)
}

/// 0-based column index ranges whose centers may lie within `reach` degrees of
/// `lon`, accounting for wrap-around. Ranges are disjoint and ascending.
fn column_ranges(
    spec: &RasterSpec,
    col_lons: &[f64],
    lon: f64,
    reach: Option<f64>,
) -> Vec<std::ops::Range<usize>> {
    let cols = col_lons.len();
    let step = spec.lon_step();
    let reach = match reach {
        Some(r) if 2.0 * (r + step) < 360.0 => r,
        _ => return std::iter::once(0..cols).collect(),
    };
    let west = spec.bounds.west;
    let mut out: Vec<std::ops::Range<usize>> = Vec::with_capacity(1);
    for shift in [-360.0, 0.0, 360.0] {
        let lo_lon = lon - reach + shift;
        let hi_lon = lon + reach + shift;
        // Column c (0-based) is centered at west + (c + 0.5)·step; widen by one
        // column each side against rounding.
        let first = ((lo_lon - west) / step - 0.5).ceil() - 1.0;
        let last = ((hi_lon - west) / step - 0.5).floor() + 1.0;
        let first = first.max(0.0);
        let last = last.min(cols as f64 - 1.0);
        if first <= last {
            out.push(first as usize..last as usize + 1);
        }
    }
    // Merge overlaps introduced by the one-column widening.
    out.sort_by_key(|r| r.start);
    let mut merged: Vec<std::ops::Range<usize>> = Vec::with_capacity(out.len());
    for r in out {
        match merged.last_mut() {
            Some(prev) if r.start <= prev.end => prev.end = prev.end.max(r.end),
            _ => merged.push(r),
        }
    }
    merged
}
