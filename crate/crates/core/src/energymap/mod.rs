//! Gaussian-process energy maps over an occupancy grid.
//!
//! Each free cell carries a Gaussian unit energy cost (energy per unit of
//! travelled length). The field is the posterior of a constant-mean GP with a
//! squared-exponential kernel, conditioned on noisy point samples. Posterior
//! covariances are not stored densely; the map keeps `V = L^-1 K(samples, cells)`
//! and evaluates `k(i, j) - v_i . v_j` on demand.

mod io;
mod search;

pub use io::{read_map, write_map, MapFile, MAP_FORMAT};
pub use search::{
    astar_path, build_edge_costs, dijkstra_path, path_distribution, rescue_costs, EdgeExport, PathCost, TimeModel,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("cell ({x}, {y}) is outside the {width}x{height} grid")]
    OutOfGrid {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("cell ({0}, {1}) is an obstacle")]
    Obstacle(usize, usize),
    #[error("no obstacle-free path from ({}, {}) to ({}, {})", from.x, from.y, to.x, to.y)]
    NoPath { from: Cell, to: Cell },
    #[error("sample kernel matrix is singular (duplicate sample positions without observation noise?)")]
    SingularKernel,
    #[error("{name} = {value} is out of range")]
    Parameter { name: &'static str, value: f64 },
    #[error("{0}")]
    Format(String),
}

/// Column `x`, row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// A regular grid of square cells anchored at `origin` (lower-left corner).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Self {
        Self {
            width,
            height,
            cell_size,
            origin: [0.0, 0.0],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(i % self.width, i / self.width)
    }

    pub fn center(&self, c: Cell) -> [f64; 2] {
        [
            self.origin[0] + (c.x as f64 + 0.5) * self.cell_size,
            self.origin[1] + (c.y as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Cell containing a point, if inside the grid.
    pub fn locate(&self, p: [f64; 2]) -> Option<Cell> {
        let fx = (p[0] - self.origin[0]) / self.cell_size;
        let fy = (p[1] - self.origin[1]) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let c = Cell::new(fx as usize, fy as usize);
        self.contains(c).then_some(c)
    }

    fn check(&self, c: Cell) -> Result<(), MapError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(MapError::OutOfGrid {
                x: c.x,
                y: c.y,
                width: self.width,
                height: self.height,
            })
        }
    }
}

/// Hyperparameters of the GP prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    /// `sigma_f`: prior standard deviation of the field.
    pub signal: f64,
    /// `l_f`: length scale, in the same units as cell positions.
    pub length_scale: f64,
    /// `sigma_s`: standard deviation of the observation noise.
    pub noise: f64,
    /// `C_mu`: constant prior mean.
    pub prior_mean: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            signal: 6.0,
            length_scale: 100.0,
            noise: 1.0,
            prior_mean: 30.0,
        }
    }
}

impl GpParams {
    pub fn validate(&self) -> Result<(), MapError> {
        let checks = [
            ("signal", self.signal, self.signal > 0.0),
            ("length_scale", self.length_scale, self.length_scale > 0.0),
            ("noise", self.noise, self.noise >= 0.0),
            ("prior_mean", self.prior_mean, true),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(MapError::Parameter { name, value });
            }
        }
        Ok(())
    }

    /// Squared-exponential kernel without the noise term.
    pub fn kernel(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        self.signal * self.signal * (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }
}

/// A noisy observation of the unit energy cost at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub position: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    pub grid: Grid,
    pub obstacles: Vec<bool>,
    pub params: GpParams,
    pub samples: Vec<Sample>,
    /// Posterior mean per cell.
    pub mean: Vec<f64>,
    /// Posterior variance per cell.
    pub variance: Vec<f64>,
    /// `L^-1 K(samples, cells)`, `n_samples x n_cells`; empty without samples.
    factor: DMatrix<f64>,
}

impl EnergyMap {
    pub fn is_free(&self, c: Cell) -> bool {
        self.grid.contains(c) && !self.obstacles[self.grid.index(c)]
    }

    pub fn mean_at(&self, c: Cell) -> f64 {
        self.mean[self.grid.index(c)]
    }

    /// Posterior covariance between two cells.
    pub fn covariance(&self, a: Cell, b: Cell) -> f64 {
        let (i, j) = (self.grid.index(a), self.grid.index(b));
        let prior = self.params.kernel(self.grid.center(a), self.grid.center(b));
        if self.factor.nrows() == 0 {
            return prior;
        }
        prior - self.factor.column(i).dot(&self.factor.column(j))
    }

    /// Posterior covariance matrix restricted to `cells`.
    pub fn covariance_block(&self, cells: &[Cell]) -> DMatrix<f64> {
        let n = cells.len();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let c = self.covariance(cells[a], cells[b]);
                m[(a, b)] = c;
                m[(b, a)] = c;
            }
        }
        m
    }

    /// Smallest posterior mean over free cells, floored at zero.
    pub fn min_free_mean(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.obstacles)
            .filter(|(_, &o)| !o)
            .map(|(&m, _)| m.max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Same map with every cell cost multiplied by `w`.
    pub fn scaled(&self, w: f64) -> EnergyMap {
        let mut out = self.clone();
        out.params.signal *= w.abs();
        out.params.noise *= w.abs();
        out.params.prior_mean *= w;
        out.samples.iter_mut().for_each(|s| s.value *= w);
        out.mean.iter_mut().for_each(|m| *m *= w);
        out.variance.iter_mut().for_each(|v| *v *= w * w);
        out.factor *= w.abs();
        out
    }
}

/// Conditions the GP prior on `samples` and evaluates the posterior on
/// every cell of `grid`.
pub fn fit_gp(grid: Grid, obstacles: Vec<bool>, samples: &[Sample], params: GpParams) -> Result<EnergyMap, MapError> {
    params.validate()?;
    if obstacles.len() != grid.n_cells() {
        return Err(MapError::Format(format!(
            "obstacle mask has {} cells, grid has {}",
            obstacles.len(),
            grid.n_cells()
        )));
    }
    let n = grid.n_cells();
    let centers: Vec<[f64; 2]> = (0..n).map(|i| grid.center(grid.cell(i))).collect();
    let prior_var = params.signal * params.signal;
    if samples.is_empty() {
        return Ok(EnergyMap {
            grid,
            obstacles,
            params,
            samples: Vec::new(),
            mean: vec![params.prior_mean; n],
            variance: vec![prior_var; n],
            factor: DMatrix::zeros(0, n),
        });
    }
    if params.noise == 0.0 {
        for (a, s) in samples.iter().enumerate() {
            if samples[..a].iter().any(|t| t.position == s.position) {
                return Err(MapError::SingularKernel);
            }
        }
    }
    let s = samples.len();
    let noise2 = params.noise * params.noise;
    let k_ss = DMatrix::from_fn(s, s, |a, b| {
        params.kernel(samples[a].position, samples[b].position) + if a == b { noise2 } else { 0.0 }
    });
    let chol = k_ss.cholesky().ok_or(MapError::SingularKernel)?;
    let l = chol.l();
    let resid = DVector::from_iterator(s, samples.iter().map(|x| x.value - params.prior_mean));
    let alpha = chol.solve(&resid);
    let k_sp = DMatrix::from_fn(s, n, |a, i| params.kernel(samples[a].position, centers[i]));
    let factor = l.solve_lower_triangular(&k_sp).ok_or(MapError::SingularKernel)?;
    let mean: Vec<f64> = (0..n).map(|i| params.prior_mean + k_sp.column(i).dot(&alpha)).collect();
    let variance: Vec<f64> = (0..n)
        .map(|i| (prior_var - factor.column(i).norm_squared()).max(0.0))
        .collect();
    Ok(EnergyMap {
        grid,
        obstacles,
        params,
        samples: samples.to_vec(),
        mean,
        variance,
        factor,
    })
}

/// Symmetric square root of a PSD matrix, clipping round-off negatives.
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Draws one realisation of the noise-free GP prior on the cell centers.
///
/// The squared-exponential kernel on a regular grid is the Kronecker product
/// of two one-dimensional kernels, so an exact draw is `A Z B^T` with `A`,
/// `B` square roots of the axis kernels and `Z` standard normal.
pub fn draw_field<R: Rng + ?Sized>(grid: Grid, params: GpParams, rng: &mut R) -> Vec<f64> {
    let axis = |n: usize| {
        let h = grid.cell_size;
        let l2 = params.length_scale * params.length_scale;
        psd_sqrt(DMatrix::from_fn(n, n, |i, j| {
            let d = (i as f64 - j as f64) * h;
            (-0.5 * d * d / l2).exp()
        }))
    };
    let ax = axis(grid.width);
    let ay = axis(grid.height);
    let z = DMatrix::from_fn(grid.height, grid.width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let f = &ay * z * ax.transpose();
    (0..grid.n_cells())
        .map(|i| {
            let c = grid.cell(i);
            params.prior_mean + params.signal * f[(c.y, c.x)]
        })
        .collect()
}

/// Rectangular obstacle blocks placed uniformly at random, each up to
/// `max_side` cells wide and tall.
pub fn random_blocks<R: Rng + ?Sized>(grid: Grid, n_blocks: usize, max_side: usize, rng: &mut R) -> Vec<bool> {
    let mut mask = vec![false; grid.n_cells()];
    let max_side = max_side.max(1);
    for _ in 0..n_blocks {
        let w = rng.random_range(1..=max_side.min(grid.width));
        let h = rng.random_range(1..=max_side.min(grid.height));
        let x0 = rng.random_range(0..=grid.width - w);
        let y0 = rng.random_range(0..=grid.height - h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                mask[grid.index(Cell::new(x, y))] = true;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Grid {
        Grid::new(6, 5, 10.0)
    }

    #[test]
    fn grid_indexing() {
        let g = small();
        for i in 0..g.n_cells() {
            assert_eq!(g.index(g.cell(i)), i);
        }
        assert_eq!(g.center(Cell::new(0, 0)), [5.0, 5.0]);
        assert_eq!(g.locate([59.9, 49.9]), Some(Cell::new(5, 4)));
        assert_eq!(g.locate([60.0, 1.0]), None);
        assert_eq!(g.locate([-0.1, 1.0]), None);
    }

    #[test]
    fn no_samples_is_the_prior() {
        let g = small();
        let m = fit_gp(g, vec![false; g.n_cells()], &[], GpParams::default()).unwrap();
        assert!(m.mean.iter().all(|&v| v == 30.0));
        assert!(m.variance.iter().all(|&v| v == 36.0));
        assert_eq!(m.covariance(Cell::new(1, 1), Cell::new(1, 1)), 36.0);
    }

    #[test]
    fn noiseless_sample_is_interpolated() {
        let g = small();
        let c = Cell::new(2, 3);
        let p = GpParams {
            noise: 0.0,
            ..Default::default()
        };
        let m = fit_gp(
            g,
            vec![false; g.n_cells()],
            &[Sample {
                position: g.center(c),
                value: 41.5,
            }],
            p,
        )
        .unwrap();
        assert!((m.mean_at(c) - 41.5).abs() < 1e-8);
        assert!(m.variance[g.index(c)].abs() < 1e-8);
        assert!(m.covariance(c, c).abs() < 1e-8);
    }

    #[test]
    fn duplicate_noiseless_samples_are_singular() {
        let g = small();
        let s = Sample {
            position: [15.0, 15.0],
            value: 1.0,
        };
        let p = GpParams {
            noise: 0.0,
            ..Default::default()
        };
        assert_eq!(
            fit_gp(g, vec![false; g.n_cells()], &[s, s], p),
            Err(MapError::SingularKernel)
        );
        assert!(fit_gp(g, vec![false; g.n_cells()], &[s, s], GpParams::default()).is_ok());
    }

    #[test]
    fn posterior_never_exceeds_prior_variance() {
        let g = Grid::new(12, 9, 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<Sample> = (0..15)
            .map(|_| Sample {
                position: [rng.random_range(0.0..300.0), rng.random_range(0.0..225.0)],
                value: rng.random_range(20.0..40.0),
            })
            .collect();
        let m = fit_gp(g, vec![false; g.n_cells()], &samples, GpParams::default()).unwrap();
        for i in 0..g.n_cells() {
            assert!(m.variance[i] <= 36.0 + 1e-8);
            let c = g.cell(i);
            assert!((m.covariance(c, c) - m.variance[i]).abs() < 1e-8);
        }
        let cells: Vec<Cell> = (0..g.n_cells()).step_by(7).map(|i| g.cell(i)).collect();
        let block = m.covariance_block(&cells);
        let eig = SymmetricEigen::new(block.clone());
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-8));
        assert_eq!(block.clone(), block.transpose());
    }

    #[test]
    fn scaling_a_map() {
        let g = small();
        let s = [Sample {
            position: [12.0, 31.0],
            value: 25.0,
        }];
        let m = fit_gp(g, vec![false; g.n_cells()], &s, GpParams::default()).unwrap();
        let w = 2.5;
        let big = m.scaled(w);
        let a = Cell::new(0, 0);
        let b = Cell::new(4, 2);
        assert!((big.mean_at(b) - w * m.mean_at(b)).abs() < 1e-9);
        assert!((big.covariance(a, b) - w * w * m.covariance(a, b)).abs() < 1e-9);
    }

    #[test]
    fn drawn_field_has_prior_moments() {
        let g = Grid::new(40, 40, 10.0);
        let p = GpParams {
            length_scale: 20.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0.0;
        for _ in 0..10 {
            for v in draw_field(g, p, &mut rng) {
                sum += v;
                sq += v * v;
                n += 1.0;
            }
        }
        let mean = sum / n;
        let var = sq / n - mean * mean;
        assert!((mean - 30.0).abs() < 1.0, "{mean}");
        assert!((var - 36.0).abs() < 6.0, "{var}");
    }

    #[test]
    fn blocks_stay_inside() {
        let g = Grid::new(20, 10, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = random_blocks(g, 5, 4, &mut rng);
        assert_eq!(mask.len(), 200);
        assert!(mask.iter().any(|&o| o));
    }
}
