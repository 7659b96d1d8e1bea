//! The explore-and-breach mission: eight capabilities, six vehicle types,
//! fourteen tasks, and edge costs from a Gaussian-process map estimated from
//! samples of a random ground-truth field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energymap::{
    build_edge_costs, draw_field, fit_gp, random_blocks, rescue_costs, Cell, EnergyMap, GpParams, Grid, MapError,
    Sample, TimeModel,
};
use crate::model::{ModelError, Parameters, ProblemInstance, RequirementExpr, Task, Vehicle};

pub const CAPABILITIES: [&str; 8] = [
    "scout",
    "fast",
    "transport",
    "quiet",
    "smoke",
    "breach",
    "demine",
    "armor",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleType {
    pub name: &'static str,
    pub capabilities: [f64; 8],
    /// Tons; scales the unit-weight energy map.
    pub weight: f64,
    /// Capacity before multiplication by `CAPACITY_SCALE`.
    pub tank: f64,
}

pub const VEHICLE_TYPES: [VehicleType; 6] = [
    VehicleType {
        name: "armed",
        capabilities: [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        weight: 2.36,
        tank: 25.0,
    },
    VehicleType {
        name: "scout",
        capabilities: [1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        weight: 0.879,
        tank: 7.25,
    },
    VehicleType {
        name: "tank",
        capabilities: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 20.0],
        weight: 61.3,
        tank: 500.0,
    },
    VehicleType {
        name: "stryker",
        capabilities: [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 5.0],
        weight: 19.0,
        tank: 160.0,
    },
    VehicleType {
        name: "earthmover",
        capabilities: [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        weight: 24.4,
        tank: 134.0,
    },
    VehicleType {
        name: "minesweeper",
        capabilities: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        weight: 10.0,
        tank: 80.0,
    },
];

/// Vehicles per type, 18 in total.
pub const TYPE_COUNTS: [usize; 6] = [3, 3, 3, 4, 3, 2];

pub const CAPACITY_SCALE: f64 = 5700.0;

pub const TASK_NAMES: [&str; 7] = [
    "scout",
    "quiet-scout",
    "smoke",
    "lane",
    "breach",
    "push-back",
    "transport",
];

/// Requirement text of the seven task kinds; tasks 8 to 14 repeat them.
pub const REQUIREMENTS: [&str; 7] = [
    "scout >= 1 & fast >= 1",
    "scout >= 1 & fast >= 1 & quiet >= 1",
    "smoke >= 1",
    "breach >= 1 & demine >= 1 & armor >= 1",
    "breach >= 1 & armor >= 10",
    "armor >= 20",
    "transport >= 1",
];

pub fn requirements() -> Vec<RequirementExpr> {
    REQUIREMENTS
        .iter()
        .map(|t| RequirementExpr::parse(t, &CAPABILITIES).expect("requirement table parses"))
        .collect()
}

#[derive(Debug, Error)]
pub enum PracticalError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("could not place {0} tasks on reachable free cells")]
    Placement(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PracticalConfig {
    pub seed: u64,
    pub grid_cells: usize,
    /// Side of the square region.
    pub region: f64,
    /// Ground-truth prior; its noise term is ignored.
    pub truth: GpParams,
    /// Prior used to estimate the map from the samples.
    pub estimate: GpParams,
    pub n_samples: usize,
    pub obstacle_blocks: usize,
    pub obstacle_side: usize,
    pub counts: [usize; 6],
    pub confidence: f64,
    pub recourse_penalty: f64,
    pub time_penalty: f64,
    pub travel_time: f64,
    pub service_time: f64,
    /// Weight of the rescue vehicle on the unit-weight map.
    pub rescue_weight: f64,
}

impl Default for PracticalConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            grid_cells: 100,
            region: 1000.0,
            truth: GpParams {
                noise: 0.0,
                ..Default::default()
            },
            estimate: GpParams::default(),
            n_samples: 100,
            obstacle_blocks: 12,
            obstacle_side: 8,
            counts: TYPE_COUNTS,
            confidence: 0.95,
            recourse_penalty: 1.0,
            time_penalty: 1.0,
            travel_time: 1.0,
            service_time: 1.0,
            rescue_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PracticalCase {
    pub instance: ProblemInstance,
    /// Unit-weight ground-truth field per cell.
    pub truth: Vec<f64>,
    /// Unit-weight estimated map.
    pub map: EnergyMap,
    pub base: Cell,
    pub task_cells: Vec<Cell>,
    /// Mean and maximum absolute error of the estimate over free cells.
    pub map_error: (f64, f64),
    pub floored_cells: usize,
}

/// Free cells reachable from `base` through 8-connected free moves without
/// corner cutting.
fn reachable(map: &EnergyMap, base: Cell) -> Vec<bool> {
    let g = map.grid;
    let mut seen = vec![false; g.n_cells()];
    let mut stack = vec![base];
    seen[g.index(base)] = true;
    while let Some(c) = stack.pop() {
        for dx in -1isize..=1 {
            for dy in -1isize..=1 {
                let (Some(x), Some(y)) = (c.x.checked_add_signed(dx), c.y.checked_add_signed(dy)) else {
                    continue;
                };
                let n = Cell::new(x, y);
                if (dx == 0 && dy == 0) || !map.is_free(n) || seen[g.index(n)] {
                    continue;
                }
                if dx != 0 && dy != 0 && (!map.is_free(Cell::new(x, c.y)) || !map.is_free(Cell::new(c.x, y))) {
                    continue;
                }
                seen[g.index(n)] = true;
                stack.push(n);
            }
        }
    }
    seen
}

pub fn encode_practical_case(cfg: &PracticalConfig) -> Result<PracticalCase, PracticalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.grid_cells;
    let grid = Grid::new(n, n, cfg.region / n as f64);
    let mut obstacles = random_blocks(grid, cfg.obstacle_blocks, cfg.obstacle_side, &mut rng);
    let base = Cell::new(n / 2, n / 2);
    for dy in 0..3 {
        for dx in 0..3 {
            let c = Cell::new((base.x + dx).saturating_sub(1), (base.y + dy).saturating_sub(1));
            if grid.contains(c) {
                obstacles[grid.index(c)] = false;
            }
        }
    }
    let truth = draw_field(grid, cfg.truth, &mut rng);

    let free: Vec<usize> = (0..grid.n_cells()).filter(|&i| !obstacles[i]).collect();
    let samples: Vec<Sample> = (0..cfg.n_samples)
        .map(|_| {
            let i = free[rng.random_range(0..free.len())];
            Sample {
                position: grid.center(grid.cell(i)),
                value: truth[i],
            }
        })
        .collect();
    let map = fit_gp(grid, obstacles, &samples, cfg.estimate)?;

    let reach = reachable(&map, base);
    let mut task_cells = Vec::with_capacity(14);
    let mut tries = 0;
    while task_cells.len() < 14 {
        tries += 1;
        if tries > 100_000 {
            return Err(PracticalError::Placement(14));
        }
        let c = Cell::new(rng.random_range(0..n), rng.random_range(0..n));
        if reach[grid.index(c)] && c != base && !task_cells.contains(&c) {
            task_cells.push(c);
        }
    }

    let mut err_sum = 0.0;
    let mut err_max: f64 = 0.0;
    for &i in &free {
        let e = (map.mean[i] - truth[i]).abs();
        err_sum += e;
        err_max = err_max.max(e);
    }
    let map_error = (err_sum / free.len() as f64, err_max);

    let mut vehicles = Vec::new();
    let mut weights = Vec::new();
    for (t, (&count, vt)) in cfg.counts.iter().zip(&VEHICLE_TYPES).enumerate() {
        for i in 0..count {
            vehicles.push(Vehicle {
                name: format!("v{}.{}", t + 1, i + 1),
                kind: format!("v{}-{}", t + 1, vt.name),
                capabilities: vt.capabilities.to_vec(),
                capacity: vt.tank * CAPACITY_SCALE,
                confidence: cfg.confidence,
                start: grid.center(base),
                terminal: grid.center(base),
            });
            weights.push(vt.weight);
        }
    }
    let n_v = vehicles.len();
    let reqs = requirements();
    let tasks: Vec<Task> = task_cells
        .iter()
        .enumerate()
        .map(|(m, &c)| Task {
            name: format!("m{}-{}", m + 1, TASK_NAMES[m % 7]),
            location: grid.center(c),
            requirement: reqs[m % 7].clone(),
            service: vec![cfg.service_time; n_v],
        })
        .collect();
    let maps = vec![&map; n_v];
    let export = build_edge_costs(
        &maps,
        &weights,
        &vec![base; n_v],
        &vec![base; n_v],
        &task_cells,
        TimeModel::Constant(cfg.travel_time),
    )?;
    let rescue = rescue_costs(&map, cfg.rescue_weight, base, &task_cells, &vec![base; n_v])?;
    let instance = ProblemInstance {
        capabilities: CAPABILITIES.iter().map(|s| s.to_string()).collect(),
        vehicles,
        tasks,
        edges: export.edges,
        rescue,
        params: Parameters {
            time_penalty: cfg.time_penalty,
            recourse_penalty: cfg.recourse_penalty,
        },
    };
    instance.validate()?;
    Ok(PracticalCase {
        instance,
        truth,
        map,
        base,
        task_cells,
        map_error,
        floored_cells: export.floored_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(types: &[usize]) -> Vec<f64> {
        let mut a = vec![0.0; 8];
        for &t in types {
            for (x, c) in a.iter_mut().zip(VEHICLE_TYPES[t].capabilities) {
                *x += c;
            }
        }
        a
    }

    #[test]
    fn tank_capabilities() {
        assert_eq!(VEHICLE_TYPES[2].capabilities, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 20.0]);
        assert_eq!(TYPE_COUNTS.iter().sum::<usize>(), 18);
    }

    #[test]
    fn breach_team() {
        let r = requirements();
        assert!(!r[4].evaluate(&alpha(&[3, 3])));
        assert!(r[4].evaluate(&alpha(&[3, 3, 4])));
        assert!(r[5].evaluate(&alpha(&[2])));
        assert!(!r[5].evaluate(&alpha(&[3, 3, 3])));
        assert!(r[5].evaluate(&alpha(&[3, 3, 3, 3])));
    }

    #[test]
    fn small_case_builds() {
        let cfg = PracticalConfig {
            grid_cells: 30,
            region: 300.0,
            n_samples: 30,
            obstacle_blocks: 3,
            obstacle_side: 4,
            truth: GpParams {
                noise: 0.0,
                length_scale: 30.0,
                ..Default::default()
            },
            estimate: GpParams {
                length_scale: 30.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let case = encode_practical_case(&cfg).unwrap();
        let inst = &case.instance;
        assert_eq!(inst.n_vehicles(), 18);
        assert_eq!(inst.n_tasks(), 14);
        assert_eq!(inst.vehicles[6].capacity, 500.0 * 5700.0);
        // the tank's map is the scout's scaled by the weight ratio
        let tank = &inst.edges[6];
        let scout = &inst.edges[3];
        let ratio = 61.3 / 0.879;
        assert!(
            (tank.from_start[0].cost.mean - ratio * scout.from_start[0].cost.mean).abs()
                < 1e-6 * tank.from_start[0].cost.mean
        );
        assert!(inst.edges.iter().all(|e| e.from_start.iter().all(|x| x.time == 1.0)));
        assert!(case.map_error.0 < case.map_error.1);
    }
}
