//! `shtp-map v1`: grid header, GP hyperparameters, obstacle mask and the
//! sample list. The posterior is recomputed on load.

use serde::{Deserialize, Serialize};

use super::{fit_gp, Cell, EnergyMap, GpParams, Grid, MapError, Sample};

pub const MAP_FORMAT: &str = "shtp-map v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub format: String,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub signal: f64,
    pub length_scale: f64,
    pub noise: f64,
    pub prior_mean: f64,
    /// One string per row, top row first; `#` marks an obstacle, `.` free.
    pub obstacles: Vec<String>,
    /// `[x, y, value]` triples.
    pub samples: Vec<[f64; 3]>,
}

impl MapFile {
    pub fn from_map(map: &EnergyMap) -> Self {
        let g = map.grid;
        let obstacles = (0..g.height)
            .rev()
            .map(|y| {
                (0..g.width)
                    .map(|x| {
                        if map.obstacles[g.index(Cell::new(x, y))] {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            format: MAP_FORMAT.into(),
            width: g.width,
            height: g.height,
            cell_size: g.cell_size,
            origin: g.origin,
            signal: map.params.signal,
            length_scale: map.params.length_scale,
            noise: map.params.noise,
            prior_mean: map.params.prior_mean,
            obstacles,
            samples: map
                .samples
                .iter()
                .map(|s| [s.position[0], s.position[1], s.value])
                .collect(),
        }
    }

    pub fn into_map(self) -> Result<EnergyMap, MapError> {
        if self.format != MAP_FORMAT {
            return Err(MapError::Format(format!(
                "expected format `{MAP_FORMAT}`, found `{}`",
                self.format
            )));
        }
        let grid = Grid {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
            origin: self.origin,
        };
        if self.obstacles.len() != self.height || self.obstacles.iter().any(|r| r.chars().count() != self.width) {
            return Err(MapError::Format(format!(
                "obstacle mask must be {} rows of {} characters",
                self.height, self.width
            )));
        }
        let mut mask = vec![false; grid.n_cells()];
        for (r, row) in self.obstacles.iter().enumerate() {
            let y = self.height - 1 - r;
            for (x, ch) in row.chars().enumerate() {
                mask[grid.index(Cell::new(x, y))] = match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(MapError::Format(format!("unexpected `{other}` in obstacle mask"))),
                };
            }
        }
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .map(|s| Sample {
                position: [s[0], s[1]],
                value: s[2],
            })
            .collect();
        let params = GpParams {
            signal: self.signal,
            length_scale: self.length_scale,
            noise: self.noise,
            prior_mean: self.prior_mean,
        };
        fit_gp(grid, mask, &samples, params)
    }
}

pub fn write_map(map: &EnergyMap) -> Result<String, MapError> {
    toml::to_string(&MapFile::from_map(map)).map_err(|e| MapError::Format(e.to_string()))
}

pub fn read_map(text: &str) -> Result<EnergyMap, MapError> {
    let file: MapFile = toml::from_str(text).map_err(|e| MapError::Format(e.to_string()))?;
    file.into_map()
}
