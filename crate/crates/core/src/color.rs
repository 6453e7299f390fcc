//! Absolute white → green → yellow → red color ramp.
//!
//! The ramp is pinned to an anchor density `g`: zero is white, `g` is green,
//! `2g` is yellow and `5g` or more is red. Because `g` is an absolute density
//! rather than a fraction of each map's maximum, two maps drawn with the same
//! ramp have directly comparable colors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba([0, 0, 0, 0]);

    pub fn rgb(&self) -> [u8; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn alpha(&self) -> u8 {
        self.0[3]
    }
}

/// RGB of the four ramp stops. Alpha comes from [`ColorRamp::alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RampStops {
    pub white: [u8; 3],
    pub green: [u8; 3],
    pub yellow: [u8; 3],
    pub red: [u8; 3],
}

impl Default for RampStops {
    fn default() -> Self {
        Self {
            white: [255, 255, 255],
            green: [0, 170, 0],
            yellow: [255, 255, 0],
            red: [255, 0, 0],
        }
    }
}

/// Stop positions as multiples of the anchor density.
const STOP_MULTIPLES: [f64; 4] = [0.0, 1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorRamp {
    anchor_green: f64,
    pub stops: RampStops,
    pub alpha: u8,
    /// Snap to the lower stop instead of interpolating.
    pub discrete: bool,
}

impl ColorRamp {
    pub fn new(anchor_green: f64) -> Result<Self> {
        if !(anchor_green.is_finite() && anchor_green > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "anchor density must be positive and finite, got {anchor_green}"
            )));
        }
        Ok(Self {
            anchor_green,
            stops: RampStops::default(),
            alpha: 255,
            discrete: false,
        })
    }

    pub fn with_alpha(mut self, alpha: u8) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_stops(mut self, stops: RampStops) -> Self {
        self.stops = stops;
        self
    }

    pub fn with_discrete(mut self, discrete: bool) -> Self {
        self.discrete = discrete;
        self
    }

    pub fn anchor_green(&self) -> f64 {
        self.anchor_green
    }

    fn stop_rgb(&self, idx: usize) -> [u8; 3] {
        match idx {
            0 => self.stops.white,
            1 => self.stops.green,
            2 => self.stops.yellow,
            _ => self.stops.red,
        }
    }

    /// Index of the ramp segment holding `d`: 0 for white→green, 1 for
    /// green→yellow, 2 for yellow→red and 3 once saturated. Zero density is
    /// segment 0.
    pub fn segment(&self, d: f64) -> usize {
        let x = d / self.anchor_green;
        if x <= 1.0 {
            0
        } else if x <= 2.0 {
            1
        } else if x < 5.0 {
            2
        } else {
            3
        }
    }

    /// Color for density `d`.
    pub fn colorize(&self, d: f64) -> Result<Rgba> {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "density must be finite and non-negative, got {d}"
            )));
        }
        let rgb = if self.discrete {
            self.discrete_rgb(d)
        } else {
            self.interpolated_rgb(d)
        };
        Ok(Rgba([rgb[0], rgb[1], rgb[2], self.alpha]))
    }

    fn interpolated_rgb(&self, d: f64) -> [u8; 3] {
        let x = d / self.anchor_green;
        let seg = self.segment(d);
        if seg == 3 {
            return self.stop_rgb(3);
        }
        let (lo, hi) = (STOP_MULTIPLES[seg], STOP_MULTIPLES[seg + 1]);
        let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let (a, b) = (self.stop_rgb(seg), self.stop_rgb(seg + 1));
        let mix = |c: usize| {
            let v = a[c] as f64 + (b[c] as f64 - a[c] as f64) * t;
            v.round().clamp(0.0, 255.0) as u8
        };
        [mix(0), mix(1), mix(2)]
    }

    fn discrete_rgb(&self, d: f64) -> [u8; 3] {
        let x = d / self.anchor_green;
        let idx = STOP_MULTIPLES.iter().rposition(|&m| x >= m).unwrap_or(0);
        self.stop_rgb(idx)
    }

    /// Colors every cell. The result is in raster order (row 1, the southern
    /// row, first).
    pub fn colorize_raster(&self, raster: &Raster) -> Result<ColorGrid> {
        let pixels = raster
            .values()
            .iter()
            .map(|&d| self.colorize(d))
            .collect::<Result<Vec<_>>>()?;
        Ok(ColorGrid {
            rows: raster.spec().rows,
            cols: raster.spec().cols,
            pixels,
        })
    }
}

/// Per-cell colors in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorGrid {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Rgba>,
}

impl ColorGrid {
    /// Color of 1-based cell `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Rgba {
        self.pixels[(i - 1) * self.cols + (j - 1)]
    }
}

/// Anchor density derived from a reference raster: the 90th percentile
/// (nearest rank) of its nonzero cells.
pub fn anchor_from_reference(densities: &[f64]) -> Result<f64> {
    let mut nonzero: Vec<f64> = densities.iter().copied().filter(|d| *d > 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::InvalidArgument(
            "reference raster has no nonzero cells to derive an anchor from".into(),
        ));
    }
    nonzero.sort_by(f64::total_cmp);
    let rank = (0.9 * nonzero.len() as f64).ceil() as usize;
    Ok(nonzero[rank.max(1) - 1])
}
