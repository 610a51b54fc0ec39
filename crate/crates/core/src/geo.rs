//! Lat/lon search-area grids and degree↔meter conversion.
//!
//! Mission areas are under a kilometer across, so a small-area equirectangular
//! projection anchored at a frame origin is accurate to centimeters; no full
//! geodesic math is used. Boundaries are axis-aligned lat/lon rectangles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per degree of latitude: WGS-84 quarter meridian / 90.
pub const METERS_PER_DEG_LAT: f64 = 111_132.952_547_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid grid bounds: {0}")]
    InvalidBounds(String),
    #[error("point ({lat}, {lon}) is outside the local-frame validity region (within 1 deg of ({origin_lat}, {origin_lon}))")]
    OutOfFrame {
        lat: f64,
        lon: f64,
        origin_lat: f64,
        origin_lon: f64,
    },
}

/// A WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// True when latitude and longitude are within WGS-84 ranges.
    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A lat/lon rectangle discretized into `rows x cols` nodes.
///
/// Corner nodes coincide with the rectangle corners and spacing is uniform per
/// axis. Node `(0, 0)` is the southwest corner; rows advance north, columns
/// advance east. Flattened indices are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    min: GeoPoint,
    max: GeoPoint,
    rows: usize,
    cols: usize,
}

impl GeoGrid {
    /// Builds a grid over the rectangle `[min_corner, max_corner]`.
    ///
    /// Fails if the corners are not strictly ordered southwest/northeast, the
    /// rectangle has zero extent on either axis, or either resolution is
    /// below 2.
    pub fn new(
        min_corner: GeoPoint,
        max_corner: GeoPoint,
        rows: usize,
        cols: usize,
    ) -> Result<Self, GeoError> {
        if !min_corner.is_valid() || !max_corner.is_valid() {
            return Err(GeoError::InvalidBounds(format!(
                "corners out of WGS-84 range: ({}, {}) / ({}, {})",
                min_corner.lat, min_corner.lon, max_corner.lat, max_corner.lon
            )));
        }
        if min_corner.lat >= max_corner.lat || min_corner.lon >= max_corner.lon {
            return Err(GeoError::InvalidBounds(format!(
                "min corner ({}, {}) must lie strictly southwest of max corner ({}, {})",
                min_corner.lat, min_corner.lon, max_corner.lat, max_corner.lon
            )));
        }
        if rows < 2 || cols < 2 {
            return Err(GeoError::InvalidBounds(format!(
                "grid resolution {rows}x{cols} too small; need at least 2x2"
            )));
        }
        Ok(Self {
            min: min_corner,
            max: max_corner,
            rows,
            cols,
        })
    }

    pub fn min_corner(&self) -> GeoPoint {
        self.min
    }

    pub fn max_corner(&self) -> GeoPoint {
        self.max
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total node count (`rows * cols`).
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major flat index of node `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    /// Grid node at `(row, col)`. Endpoint nodes are exactly the corners.
    pub fn node(&self, row: usize, col: usize) -> GeoPoint {
        debug_assert!(row < self.rows && col < self.cols);
        let lat = if row == self.rows - 1 {
            self.max.lat
        } else {
            self.min.lat + (self.max.lat - self.min.lat) * (row as f64 / (self.rows - 1) as f64)
        };
        let lon = if col == self.cols - 1 {
            self.max.lon
        } else {
            self.min.lon + (self.max.lon - self.min.lon) * (col as f64 / (self.cols - 1) as f64)
        };
        GeoPoint::new(lat, lon)
    }

    /// Node at a row-major flat index.
    pub fn node_at(&self, index: usize) -> GeoPoint {
        self.node(index / self.cols, index % self.cols)
    }

    /// Iterates all nodes in row-major order.
    pub fn nodes(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        (0..self.len()).map(move |i| self.node_at(i))
    }

    /// True iff `p` lies inside the closed bounding rectangle.
    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min.lat && p.lat <= self.max.lat && p.lon >= self.min.lon && p.lon <= self.max.lon
    }

    /// Nearest point inside the rectangle (per-axis clamp). Idempotent.
    pub fn clamp(&self, p: GeoPoint) -> GeoPoint {
        GeoPoint::new(
            p.lat.clamp(self.min.lat, self.max.lat),
            p.lon.clamp(self.min.lon, self.max.lon),
        )
    }

    /// Latitude spacing between adjacent rows, degrees.
    pub fn lat_step(&self) -> f64 {
        (self.max.lat - self.min.lat) / (self.rows - 1) as f64
    }

    /// Longitude spacing between adjacent columns, degrees.
    pub fn lon_step(&self) -> f64 {
        (self.max.lon - self.min.lon) / (self.cols - 1) as f64
    }
}

/// Small-area equirectangular frame: converts degrees to local east/north
/// meters around an origin. Valid within 1 degree of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    origin: GeoPoint,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        let meters_per_deg_lon = METERS_PER_DEG_LAT * origin.lat.to_radians().cos();
        Self {
            origin,
            meters_per_deg_lat: METERS_PER_DEG_LAT,
            meters_per_deg_lon,
        }
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn meters_per_deg_lat(&self) -> f64 {
        self.meters_per_deg_lat
    }

    pub fn meters_per_deg_lon(&self) -> f64 {
        self.meters_per_deg_lon
    }

    /// Converts `p` to `(east, north)` meters relative to the origin.
    ///
    /// Fails if `p` is more than 1 degree from the origin on either axis,
    /// where the flat-earth approximation is no longer trustworthy.
    pub fn to_local(&self, p: GeoPoint) -> Result<(f64, f64), GeoError> {
        let dlat = p.lat - self.origin.lat;
        let dlon = p.lon - self.origin.lon;
        if dlat.abs() > 1.0 || dlon.abs() > 1.0 || !dlat.is_finite() || !dlon.is_finite() {
            return Err(GeoError::OutOfFrame {
                lat: p.lat,
                lon: p.lon,
                origin_lat: self.origin.lat,
                origin_lon: self.origin.lon,
            });
        }
        Ok((dlon * self.meters_per_deg_lon, dlat * self.meters_per_deg_lat))
    }

    /// Inverse of [`LocalFrame::to_local`].
    pub fn to_geo(&self, east: f64, north: f64) -> GeoPoint {
        GeoPoint::new(
            self.origin.lat + north / self.meters_per_deg_lat,
            self.origin.lon + east / self.meters_per_deg_lon,
        )
    }

    /// Straight-line distance between two points, meters.
    pub fn distance_m(&self, a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
        let (ea, na) = self.to_local(a)?;
        let (eb, nb) = self.to_local(b)?;
        Ok((ea - eb).hypot(na - nb))
    }
}
