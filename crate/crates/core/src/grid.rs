//! Raster geometry: cell centers, cell areas and the density value store.
//!
//! Cells are addressed with 1-based `(i, j)` indices. Row 1 is the
//! southernmost row and column 1 the westernmost column, so latitude grows
//! with `i` and longitude with `j`. Values are stored row-major in the same
//! order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint, EARTH_RADIUS_KM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub bounds: BoundingBox,
    pub rows: usize,
    pub cols: usize,
}

impl RasterSpec {
    pub fn new(bounds: BoundingBox, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "raster must have at least one row and column, got {rows}x{cols}"
            )));
        }
        Ok(Self { bounds, rows, cols })
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row height in degrees of latitude.
    pub fn lat_step(&self) -> f64 {
        (self.bounds.north - self.bounds.south) / self.rows as f64
    }

    /// Column width in degrees of longitude.
    pub fn lon_step(&self) -> f64 {
        (self.bounds.east - self.bounds.west) / self.cols as f64
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.rows {
            return Err(self.index_error(i, 1));
        }
        Ok(())
    }

    fn index_error(&self, row: usize, col: usize) -> Error {
        Error::IndexOutOfRange {
            row,
            col,
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Latitude of the centers of row `i` (1-based, unchecked).
    pub(crate) fn row_lat(&self, i: usize) -> f64 {
        let b = &self.bounds;
        b.south + (i as f64 - 0.5) * (b.north - b.south) / self.rows as f64
    }

    /// Longitude of the centers of column `j` (1-based, unchecked).
    pub(crate) fn col_lon(&self, j: usize) -> f64 {
        let b = &self.bounds;
        b.west + (j as f64 - 0.5) * (b.east - b.west) / self.cols as f64
    }

    /// Center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> Result<GeoPoint> {
        if i == 0 || i > self.rows || j == 0 || j > self.cols {
            return Err(self.index_error(i, j));
        }
        GeoPoint::new(self.row_lat(i), self.col_lon(j))
    }

    /// Spherical area of any cell in row `i`, km².
    pub fn cell_area(&self, i: usize) -> Result<f64> {
        self.check_row(i)?;
        let b = &self.bounds;
        let lat_span = b.north - b.south;
        let bottom = b.south + (i - 1) as f64 * lat_span / self.rows as f64;
        let top = if i == self.rows {
            b.north
        } else {
            b.south + i as f64 * lat_span / self.rows as f64
        };
        let dlon = ((b.east - b.west) / self.cols as f64).to_radians();
        Ok(EARTH_RADIUS_KM
            * EARTH_RADIUS_KM
            * dlon
            * (top.to_radians().sin() - bottom.to_radians().sin()))
    }

    /// Inverse of the cell-center mapping: the cell containing `p`, if any.
    /// Points on the north or east edge map to the last row or column.
    pub fn locate(&self, p: &GeoPoint) -> Option<(usize, usize)> {
        if !self.bounds.contains(p) {
            return None;
        }
        let b = &self.bounds;
        let fi = (p.lat() - b.south) / (b.north - b.south) * self.rows as f64;
        let fj = (p.lon() - b.west) / (b.east - b.west) * self.cols as f64;
        let i = (fi.floor() as usize + 1).min(self.rows);
        let j = (fj.floor() as usize + 1).min(self.cols);
        Some((i, j))
    }
}

/// Densities over a [`RasterSpec`], publications per km².
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    spec: RasterSpec,
    values: Vec<f64>,
}

impl Raster {
    pub fn zeros(spec: RasterSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.cell_count()],
        }
    }

    /// Wraps row-major values (row 1 first). Values must be finite and
    /// non-negative.
    pub fn from_values(spec: RasterSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {}x{} raster, got {}",
                spec.cell_count(),
                spec.rows,
                spec.cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid density value {bad}"
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &RasterSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Density at 1-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        if i == 0 || i > self.spec.rows || j == 0 || j > self.spec.cols {
            return Err(self.spec.index_error(i, j));
        }
        Ok(self.values[(i - 1) * self.spec.cols + (j - 1)])
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Σ density·area over all cells: the number of publications the raster
    /// accounts for.
    pub fn integrated_mass(&self) -> f64 {
        let cols = self.spec.cols;
        self.values
            .chunks(cols)
            .enumerate()
            .map(|(r, row)| {
                let area = self.spec.cell_area(r + 1).expect("row in range");
                row.iter().sum::<f64>() * area
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: f64, n: f64, w: f64, e: f64, rows: usize, cols: usize) -> RasterSpec {
        RasterSpec::new(BoundingBox::new(s, n, w, e).unwrap(), rows, cols).unwrap()
    }

    #[test]
    fn europe_first_cell_center() {
        let c = spec(35.0, 72.0, -25.0, 45.0, 500, 1000)
            .cell_center(1, 1)
            .unwrap();
        assert!((c.lat() - 35.037).abs() < 1e-12);
        assert!((c.lon() - -24.965).abs() < 1e-12);
    }

    #[test]
    fn last_cell_center() {
        let c = spec(0.0, 10.0, 0.0, 10.0, 10, 10)
            .cell_center(10, 10)
            .unwrap();
        assert_eq!((c.lat(), c.lon()), (9.5, 9.5));
    }

    #[test]
    fn single_cell_globe() {
        let s = RasterSpec::new(BoundingBox::world(), 1, 1).unwrap();
        let c = s.cell_center(1, 1).unwrap();
        assert_eq!((c.lat(), c.lon()), (0.0, 0.0));
        let sphere = 4.0 * std::f64::consts::PI * EARTH_RADIUS_KM * EARTH_RADIUS_KM;
        assert!((s.cell_area(1).unwrap() - sphere).abs() / sphere < 1e-12);
        assert!((sphere - 5.10065e8).abs() / 5.10065e8 < 1e-5);
    }

    #[test]
    fn out_of_range_indices() {
        let s = spec(0.0, 10.0, 0.0, 10.0, 10, 10);
        assert!(matches!(
            s.cell_center(0, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(s.cell_center(11, 1).is_err());
        assert!(s.cell_center(1, 11).is_err());
        assert!(s.cell_area(0).is_err());
        assert!(s.cell_area(11).is_err());
        assert!(Raster::zeros(s).get(1, 11).is_err());
    }

    #[test]
    fn one_degree_cell_area_matches_quadrature() {
        // Double integral of R² cos φ over the cell (adaptive quadrature).
        let area = spec(40.0, 41.0, 0.0, 1.0, 1, 1).cell_area(1).unwrap();
        let oracle = 9_401.803_026_442_782;
        assert!((area - oracle).abs() / oracle < 1e-3);
    }

    #[test]
    fn equator_rows_mirror() {
        let s = spec(-10.0, 10.0, 0.0, 5.0, 4, 3);
        assert!((s.cell_area(1).unwrap() - s.cell_area(4).unwrap()).abs() < 1e-6);
        assert!((s.cell_area(2).unwrap() - s.cell_area(3).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn areas_sum_to_box_area() {
        let s = spec(35.0, 72.0, -25.0, 45.0, 500, 1000);
        let total: f64 = (1..=s.rows)
            .map(|i| s.cell_area(i).unwrap() * s.cols as f64)
            .sum();
        let exact = s.bounds.spherical_area_km2();
        assert!((total - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn centers_are_monotone_and_evenly_spaced() {
        let s = spec(35.0, 72.0, -25.0, 45.0, 50, 80);
        for i in 1..s.rows {
            let a = s.cell_center(i, 1).unwrap().lat();
            let b = s.cell_center(i + 1, 1).unwrap().lat();
            assert!(b > a);
            assert!((b - a - s.lat_step()).abs() < 1e-12);
        }
        for j in 1..s.cols {
            let a = s.cell_center(1, j).unwrap().lon();
            let b = s.cell_center(1, j + 1).unwrap().lon();
            assert!(b > a);
            assert!((b - a - s.lon_step()).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_inverts_cell_center() {
        let s = spec(35.0, 72.0, -25.0, 45.0, 37, 70);
        for i in 1..=s.rows {
            for j in 1..=s.cols {
                let c = s.cell_center(i, j).unwrap();
                assert_eq!(s.locate(&c), Some((i, j)));
            }
        }
        let ne = GeoPoint::new(72.0, 45.0).unwrap();
        assert_eq!(s.locate(&ne), Some((37, 70)));
        assert_eq!(s.locate(&GeoPoint::new(10.0, 0.0).unwrap()), None);
    }

    #[test]
    fn from_values_checks_contents() {
        let s = spec(0.0, 1.0, 0.0, 1.0, 1, 2);
        assert!(Raster::from_values(s, vec![0.0]).is_err());
        assert!(Raster::from_values(s, vec![0.0, -1.0]).is_err());
        assert!(Raster::from_values(s, vec![0.0, f64::NAN]).is_err());
        assert!(Raster::from_values(s, vec![0.0, 1.0]).is_ok());
    }
}
