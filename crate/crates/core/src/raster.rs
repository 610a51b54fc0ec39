//! Grid rasters: CSV persistence and PGM heatmap rendering.
//!
//! The CSV layout is a named header line, one line of header values
//! (grid bounds and resolution), then `rows` lines of `cols` values in
//! row-major order. Floats are written with the shortest representation
//! that round-trips, so parsing a written raster reproduces it exactly.
//!
//! Heatmaps are binary PGM (P5): the raster minimum maps to black and the
//! maximum to white. Quantization floors intermediate values, so the
//! maximum value alone reaches 255 and the pixel argmax always coincides
//! with the raster argmax. A constant raster renders mid-gray.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoGrid, GeoPoint};
use crate::gp::PosteriorField;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("raster parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("raster value at node ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("pgm parse error: {0}")]
    Pgm(String),
}

/// One scalar field over a grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn from_grid(grid: &GeoGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            min_lat: grid.min_corner().lat,
            min_lon: grid.min_corner().lon,
            max_lat: grid.max_corner().lat,
            max_lon: grid.max_corner().lon,
            rows: grid.rows(),
            cols: grid.cols(),
            values,
        }
    }

    pub fn mean_of(field: &PosteriorField) -> Self {
        Self::from_grid(&field.grid, field.mean.clone())
    }

    pub fn std_of(field: &PosteriorField) -> Self {
        Self::from_grid(&field.grid, field.std.clone())
    }

    /// First maximal value in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Node coordinates of `(row, col)`, consistent with [`GeoGrid::node`].
    pub fn node(&self, row: usize, col: usize) -> GeoPoint {
        let grid = GeoGrid::new(
            GeoPoint::new(self.min_lat, self.min_lon),
            GeoPoint::new(self.max_lat, self.max_lon),
            self.rows,
            self.cols,
        )
        .expect("raster bounds form a valid grid");
        grid.node(row, col)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("min_lat,min_lon,max_lat,max_lon,rows,cols\n");
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            self.min_lat, self.min_lon, self.max_lat, self.max_lon, self.rows, self.cols
        ));
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_csv()).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self, RasterError> {
        let mut lines = text.lines().enumerate();
        let (_, names) = lines.next().ok_or(RasterError::Parse {
            line: 1,
            reason: "empty raster".into(),
        })?;
        if names.trim() != "min_lat,min_lon,max_lat,max_lon,rows,cols" {
            return Err(RasterError::Parse {
                line: 1,
                reason: format!("unexpected header `{names}`"),
            });
        }
        let (_, header) = lines.next().ok_or(RasterError::Parse {
            line: 2,
            reason: "missing header values".into(),
        })?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 6 {
            return Err(RasterError::Parse {
                line: 2,
                reason: format!("expected 6 header values, got {}", fields.len()),
            });
        }
        let fnum = |i: usize| -> Result<f64, RasterError> {
            fields[i].parse().map_err(|_| RasterError::Parse {
                line: 2,
                reason: format!("bad number `{}`", fields[i]),
            })
        };
        let unum = |i: usize| -> Result<usize, RasterError> {
            fields[i].parse().map_err(|_| RasterError::Parse {
                line: 2,
                reason: format!("bad count `{}`", fields[i]),
            })
        };
        let (min_lat, min_lon, max_lat, max_lon) = (fnum(0)?, fnum(1)?, fnum(2)?, fnum(3)?);
        let (rows, cols) = (unum(4)?, unum(5)?);
        let mut values = Vec::with_capacity(rows * cols);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                let v: f64 = tok.parse().map_err(|_| RasterError::Parse {
                    line: lineno + 1,
                    reason: format!("bad value `{tok}`"),
                })?;
                values.push(v);
            }
        }
        if values.len() != rows * cols {
            return Err(RasterError::Parse {
                line: 2,
                reason: format!(
                    "expected {} values for {rows}x{cols}, got {}",
                    rows * cols,
                    values.len()
                ),
            });
        }
        Ok(Self {
            min_lat,
            min_lon,
            max_lat,
            max_lon,
            rows,
            cols,
            values,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self, RasterError> {
        let text = std::fs::read_to_string(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    /// Renders the raster as a binary PGM image, min -> black, max -> white.
    ///
    /// Markers, if any, paint a small cross of the given gray level at the
    /// grid node nearest each point; marker pixels are excluded from the
    /// argmax guarantees.
    pub fn render_pgm(&self, markers: &[(GeoPoint, u8)]) -> Result<Vec<u8>, RasterError> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite {
                row: i / self.cols,
                col: i % self.cols,
            });
        }
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        let mut pixels: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                if span == 0.0 {
                    128
                } else if v == max {
                    255
                } else {
                    // floor keeps every non-maximal value strictly below 255
                    (255.0 * (v - min) / span).floor() as u8
                }
            })
            .collect();

        for &(p, level) in markers {
            let (r, c) = self.nearest_node(p);
            for (dr, dc) in [(0i64, 0i64), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                let rr = r as i64 + dr;
                let cc = c as i64 + dc;
                if rr >= 0 && rr < self.rows as i64 && cc >= 0 && cc < self.cols as i64 {
                    pixels[rr as usize * self.cols + cc as usize] = level;
                }
            }
        }

        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&pixels);
        Ok(out)
    }

    pub fn write_pgm(&self, path: &Path, markers: &[(GeoPoint, u8)]) -> Result<(), RasterError> {
        let bytes = self.render_pgm(markers)?;
        std::fs::write(path, bytes).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn nearest_node(&self, p: GeoPoint) -> (usize, usize) {
        let r = if self.rows > 1 {
            ((p.lat - self.min_lat) / (self.max_lat - self.min_lat) * (self.rows - 1) as f64)
                .round()
                .clamp(0.0, (self.rows - 1) as f64) as usize
        } else {
            0
        };
        let c = if self.cols > 1 {
            ((p.lon - self.min_lon) / (self.max_lon - self.min_lon) * (self.cols - 1) as f64)
                .round()
                .clamp(0.0, (self.cols - 1) as f64) as usize
        } else {
            0
        };
        (r, c)
    }
}

/// Parses a binary PGM produced by [`Raster::render_pgm`]. Returns
/// `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), RasterError> {
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| RasterError::Pgm("truncated header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| RasterError::Pgm("non-utf8 header".into()))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some("P5") {
        return Err(RasterError::Pgm("not a P5 pgm".into()));
    }
    let w: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| RasterError::Pgm("bad width".into()))?;
    let h: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| RasterError::Pgm("bad height".into()))?;
    let maxval: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| RasterError::Pgm("bad maxval".into()))?;
    if maxval != 255 {
        return Err(RasterError::Pgm(format!("unsupported maxval {maxval}")));
    }
    let pixels = bytes[header_end + 1..].to_vec();
    if pixels.len() != w * h {
        return Err(RasterError::Pgm(format!(
            "expected {} pixels, got {}",
            w * h,
            pixels.len()
        )));
    }
    Ok((w, h, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GeoGrid {
        GeoGrid::new(GeoPoint::new(35.0, -78.0), GeoPoint::new(35.01, -77.98), 5, 7).unwrap()
    }

    #[test]
    fn csv_round_trip_exact() {
        let g = grid();
        let values: Vec<f64> = (0..g.len())
            .map(|i| -85.0 + (i as f64) * 0.37 + 1.0 / 3.0)
            .collect();
        let r = Raster::from_grid(&g, values);
        let text = r.to_csv();
        let back = Raster::parse_csv(&text).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn constant_raster_renders_mid_gray() {
        let g = grid();
        let r = Raster::from_grid(&g, vec![-61.5; g.len()]);
        let bytes = r.render_pgm(&[]).unwrap();
        let (w, h, pixels) = parse_pgm(&bytes).unwrap();
        assert_eq!((w, h), (7, 5));
        assert!(pixels.iter().all(|&p| p == 128));
    }

    #[test]
    fn unique_max_gets_unique_white_pixel() {
        let g = grid();
        let mut values = vec![0.0; g.len()];
        values[11] = 3.0;
        values[12] = 2.999_999; // close but not max
        let r = Raster::from_grid(&g, values);
        let bytes = r.render_pgm(&[]).unwrap();
        let (_, _, pixels) = parse_pgm(&bytes).unwrap();
        let whites: Vec<usize> = pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == 255)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(whites, vec![11]);
    }

    #[test]
    fn pixel_argmax_equals_raster_argmax() {
        let g = grid();
        let values: Vec<f64> = (0..g.len())
            .map(|i| ((i as f64) * 0.7).sin() * 10.0)
            .collect();
        let r = Raster::from_grid(&g, values);
        let (ar, ac) = r.argmax();
        let bytes = r.render_pgm(&[]).unwrap();
        let (w, _, pixels) = parse_pgm(&bytes).unwrap();
        let mut best = 0;
        for (i, &p) in pixels.iter().enumerate() {
            if p > pixels[best] {
                best = i;
            }
        }
        assert_eq!((best / w, best % w), (ar, ac));
    }

    #[test]
    fn nan_value_errors_with_node() {
        let g = grid();
        let mut values = vec![0.0; g.len()];
        values[g.index(2, 3)] = f64::NAN;
        let r = Raster::from_grid(&g, values);
        match r.render_pgm(&[]) {
            Err(RasterError::NonFinite { row: 2, col: 3 }) => {}
            other => panic!("expected NonFinite at (2,3), got {other:?}"),
        }
    }

    #[test]
    fn markers_paint_cross() {
        let g = grid();
        let r = Raster::from_grid(&g, vec![1.0; g.len()]);
        let target = g.node(2, 3);
        let bytes = r.render_pgm(&[(target, 0)]).unwrap();
        let (w, _, pixels) = parse_pgm(&bytes).unwrap();
        assert_eq!(pixels[2 * w + 3], 0);
        assert_eq!(pixels[1 * w + 3], 0);
        assert_eq!(pixels[2 * w + 4], 0);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(Raster::parse_csv("").is_err());
        assert!(Raster::parse_csv("wrong,header\n1,2\n").is_err());
        let ok = Raster::from_grid(&grid(), vec![0.0; grid().len()]).to_csv();
        let truncated: String = ok.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(Raster::parse_csv(&truncated).is_err());
    }
}
