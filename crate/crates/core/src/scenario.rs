//! Seeded random instances for the computational study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Edge, Parameters, ProblemInstance, RequirementExpr, RescueCosts, Task, Vehicle, VehicleEdges};
use crate::numerics::GaussianScalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{0} must be at least 1")]
    Count(&'static str),
    #[error("{name} = {value} is out of range")]
    Range { name: &'static str, value: f64 },
}

/// How the spread coefficient turns into an edge variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpreadMode {
    /// `C_sigma * d` is a standard deviation: variance `(C_sigma d)^2`.
    #[default]
    StdDev,
    /// `C_sigma * d` is the variance itself.
    Variance,
}

impl SpreadMode {
    pub fn label(self) -> &'static str {
        match self {
            SpreadMode::StdDev => "stddev",
            SpreadMode::Variance => "variance",
        }
    }

    pub fn variance(self, c_sigma: f64, d: f64) -> f64 {
        match self {
            SpreadMode::StdDev => (c_sigma * d).powi(2),
            SpreadMode::Variance => c_sigma * d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    pub n_tasks: usize,
    pub n_capabilities: usize,
    pub n_vehicle_types: usize,
    pub n_task_types: usize,
    pub cost_rate: f64,
    pub spread: f64,
    pub spread_mode: SpreadMode,
    pub capacity: f64,
    pub confidence: f64,
    pub recourse_penalty: f64,
    pub time_penalty: f64,
    /// Travel time per unit distance.
    pub time_rate: f64,
    pub service_time: f64,
    pub seed: u64,
    pub region: [f64; 4],
    pub depot_region: [f64; 4],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 6,
            n_tasks: 6,
            n_capabilities: 2,
            n_vehicle_types: 2,
            n_task_types: 3,
            cost_rate: 30.0,
            spread: 6.0,
            spread_mode: SpreadMode::StdDev,
            capacity: 40_000.0,
            confidence: 0.95,
            recourse_penalty: 1.0,
            time_penalty: 1.0,
            time_rate: 1.0,
            service_time: 1.0,
            seed: 0,
            region: [0.0, 640.0, 0.0, 480.0],
            depot_region: [310.0, 330.0, 230.0, 250.0],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("n_vehicles", self.n_vehicles),
            ("n_tasks", self.n_tasks),
            ("n_capabilities", self.n_capabilities),
            ("n_vehicle_types", self.n_vehicle_types),
            ("n_task_types", self.n_task_types),
        ] {
            if v == 0 {
                return Err(ScenarioError::Count(name));
            }
        }
        let checks = [
            ("cost_rate", self.cost_rate, self.cost_rate >= 0.0),
            ("spread", self.spread, self.spread >= 0.0),
            ("capacity", self.capacity, self.capacity > 0.0),
            (
                "confidence",
                self.confidence,
                self.confidence > 0.0 && self.confidence < 1.0,
            ),
            ("recourse_penalty", self.recourse_penalty, self.recourse_penalty >= 0.0),
            ("time_penalty", self.time_penalty, self.time_penalty >= 0.0),
            ("time_rate", self.time_rate, self.time_rate >= 0.0),
            ("service_time", self.service_time, self.service_time >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ScenarioError::Range { name, value });
            }
        }
        for r in [self.region, self.depot_region] {
            if !(r[0] <= r[1] && r[2] <= r[3]) {
                return Err(ScenarioError::Range {
                    name: "region",
                    value: r[1] - r[0],
                });
            }
        }
        Ok(())
    }
}

/// Capability vector of a vehicle type: the type's own capability plus,
/// when types outnumber capabilities, a second one.
pub fn vehicle_type_capabilities(t: usize, n_types: usize, n_caps: usize) -> Vec<f64> {
    let mut c = vec![0.0; n_caps];
    c[t % n_caps] = 1.0;
    if n_types > n_caps && t >= n_caps {
        c[(t + 1) % n_caps] = 1.0;
    }
    c
}

/// Requirement of a task type. Types cycle through the capabilities; each
/// further round asks for more: a single unit, a pair of capabilities, two
/// units of one, and finally two units plus a second capability.
pub fn task_type_requirement(t: usize, n_caps: usize) -> RequirementExpr {
    let a = t % n_caps;
    let b = (a + 1) % n_caps;
    let round = t / n_caps;
    let pair = |x: RequirementExpr, y: RequirementExpr| {
        if a == b {
            x
        } else {
            RequirementExpr::And(vec![x, y])
        }
    };
    match round {
        0 => RequirementExpr::at_least(a, 1.0),
        1 => pair(RequirementExpr::at_least(a, 1.0), RequirementExpr::at_least(b, 1.0)),
        2 => RequirementExpr::at_least(a, 2.0),
        _ => pair(RequirementExpr::at_least(a, 2.0), RequirementExpr::at_least(b, 1.0)),
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, r: [f64; 4]) -> [f64; 2] {
    let x = if r[0] < r[1] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    };
    let y = if r[2] < r[3] {
        rng.random_range(r[2]..r[3])
    } else {
        r[2]
    };
    [x, y]
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<ProblemInstance, ScenarioError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tasks_at: Vec<[f64; 2]> = (0..cfg.n_tasks).map(|_| uniform_point(&mut rng, cfg.region)).collect();
    let depots: Vec<[f64; 2]> = (0..cfg.n_vehicles)
        .map(|_| uniform_point(&mut rng, cfg.depot_region))
        .collect();
    let center = [
        0.5 * (cfg.region[0] + cfg.region[1]),
        0.5 * (cfg.region[2] + cfg.region[3]),
    ];

    let edge = |d: f64| Edge {
        cost: GaussianScalar {
            mean: cfg.cost_rate * d,
            variance: cfg.spread_mode.variance(cfg.spread, d),
        },
        time: cfg.time_rate * d,
    };
    let vehicles: Vec<Vehicle> = (0..cfg.n_vehicles)
        .map(|k| {
            let t = k % cfg.n_vehicle_types;
            Vehicle {
                name: format!("v{}", k + 1),
                kind: format!("type{}", t + 1),
                capabilities: vehicle_type_capabilities(t, cfg.n_vehicle_types, cfg.n_capabilities),
                capacity: cfg.capacity,
                confidence: cfg.confidence,
                start: depots[k],
                terminal: depots[k],
            }
        })
        .collect();
    let tasks: Vec<Task> = tasks_at
        .iter()
        .enumerate()
        .map(|(m, &loc)| Task {
            name: format!("m{}", m + 1),
            location: loc,
            requirement: task_type_requirement(m % cfg.n_task_types, cfg.n_capabilities),
            service: vec![cfg.service_time; cfg.n_vehicles],
        })
        .collect();
    let edges = vehicles
        .iter()
        .map(|v| {
            let mut e = VehicleEdges::filled(cfg.n_tasks, Edge::default());
            for (i, &a) in tasks_at.iter().enumerate() {
                e.from_start[i] = edge(distance(v.start, a));
                e.to_terminal[i] = edge(distance(a, v.terminal));
                for (j, &b) in tasks_at.iter().enumerate() {
                    if i != j {
                        *e.task_to_task_mut(i, j) = edge(distance(a, b));
                    }
                }
            }
            e.start_to_terminal = edge(distance(v.start, v.terminal));
            e
        })
        .collect();
    let rescue = RescueCosts {
        to_task: tasks_at.iter().map(|&a| cfg.cost_rate * distance(center, a)).collect(),
        from_task: tasks_at.iter().map(|&a| cfg.cost_rate * distance(a, center)).collect(),
        to_terminal: vehicles
            .iter()
            .map(|v| cfg.cost_rate * distance(center, v.terminal))
            .collect(),
        from_terminal: vehicles
            .iter()
            .map(|v| cfg.cost_rate * distance(v.terminal, center))
            .collect(),
    };
    Ok(ProblemInstance {
        capabilities: (0..cfg.n_capabilities).map(|a| format!("a{}", a + 1)).collect(),
        vehicles,
        tasks,
        edges,
        rescue,
        params: Parameters {
            time_penalty: cfg.time_penalty,
            recourse_penalty: cfg.recourse_penalty,
        },
    })
}
