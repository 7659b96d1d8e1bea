//! Monte Carlo rollout of a plan under sampled edge energies.
//!
//! Every sample draws each selected edge cost independently from its
//! Gaussian, clamped at zero. A vehicle's `l`-th failure happens on the edge
//! where its cumulative cost first reaches `l B`; on the edge into route
//! position `i` (start at position 1) only failures `l <= i - 1` count, as
//! in the analytic recourse rule. Each failure is charged the same mean
//! replacement plus rescue cost as the analytic model.
//!
//! Samples are split into fixed-size chunks. Chunk `c` draws from a ChaCha
//! stream `c` under the run's seed, so the report is identical whether the
//! chunks run sequentially or on a rayon pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::model::{Plan, ProblemInstance};
use crate::stochastic::{failure_cost, recourse_cost, route_summary};

/// Samples per independent random stream.
pub const CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("at least one sample is required")]
    NoSamples,
    #[error("plan has {plan} routes, instance has {vehicles} vehicles")]
    Shape { plan: usize, vehicles: usize },
}

/// Sample mean with its standard error `s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Whether `x` lies within `k` standard errors of the mean.
    pub fn covers(&self, x: f64, k: f64) -> bool {
        (self.mean - x).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleRollout {
    /// Fraction of samples whose route cost exceeded the capacity.
    pub failure_rate: Estimate,
    /// Number of failures per sample.
    pub failures: Estimate,
    /// Penalized recourse cost per sample.
    pub recourse: Estimate,
    /// Sampled travel energy per sample.
    pub energy: Estimate,
    pub analytic_energy: f64,
    pub analytic_recourse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    pub samples: usize,
    pub seed: u64,
    pub vehicles: Vec<VehicleRollout>,
    /// Fleet recourse cost per sample.
    pub recourse: Estimate,
    /// Fleet travel energy per sample.
    pub energy: Estimate,
    pub analytic_energy: f64,
    pub analytic_recourse: f64,
    /// Fraction of edge draws that were negative and clamped to zero.
    pub clamped_fraction: f64,
}

impl RolloutReport {
    /// Empirical minus analytic fleet recourse.
    pub fn recourse_bias(&self) -> f64 {
        self.recourse.mean - self.analytic_recourse
    }

    /// Empirical minus analytic fleet energy; nonzero mainly from clamping.
    pub fn energy_bias(&self) -> f64 {
        self.energy.mean - self.analytic_energy
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "vehicle,failure_rate,failure_rate_se,failures,failures_se,recourse,recourse_se,analytic_recourse,energy,energy_se,analytic_energy\n",
        );
        let row = |name: &str, v: &VehicleRollout| {
            format!(
                "{name},{},{},{},{},{},{},{},{},{},{}\n",
                v.failure_rate.mean,
                v.failure_rate.std_error,
                v.failures.mean,
                v.failures.std_error,
                v.recourse.mean,
                v.recourse.std_error,
                v.analytic_recourse,
                v.energy.mean,
                v.energy.std_error,
                v.analytic_energy
            )
        };
        for (k, v) in self.vehicles.iter().enumerate() {
            out += &row(&k.to_string(), v);
        }
        let fleet = VehicleRollout {
            recourse: self.recourse,
            energy: self.energy,
            analytic_energy: self.analytic_energy,
            analytic_recourse: self.analytic_recourse,
            ..Default::default()
        };
        out += &row("all", &fleet);
        out
    }
}

/// Per-edge data of one route.
struct Leg {
    mean: f64,
    sd: f64,
    failure_cost: f64,
}

struct Route {
    legs: Vec<Leg>,
    capacity: f64,
    penalty: f64,
}

/// Running sums of `x` and `x^2`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.sum += o.sum;
        self.sq += o.sq;
    }

    fn estimate(&self, n: usize) -> Estimate {
        let nf = n as f64;
        let mean = self.sum / nf;
        let var = if n > 1 {
            ((self.sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / nf).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    failed: Vec<Moments>,
    failures: Vec<Moments>,
    recourse: Vec<Moments>,
    energy: Vec<Moments>,
    fleet_recourse: Moments,
    fleet_energy: Moments,
    draws: u64,
    clamped: u64,
}

impl Tally {
    fn new(n_v: usize) -> Self {
        Self {
            failed: vec![Moments::default(); n_v],
            failures: vec![Moments::default(); n_v],
            recourse: vec![Moments::default(); n_v],
            energy: vec![Moments::default(); n_v],
            ..Default::default()
        }
    }

    fn merge(mut self, o: &Tally) -> Self {
        for (a, b) in [
            (&mut self.failed, &o.failed),
            (&mut self.failures, &o.failures),
            (&mut self.recourse, &o.recourse),
            (&mut self.energy, &o.energy),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y));
        }
        self.fleet_recourse.merge(&o.fleet_recourse);
        self.fleet_energy.merge(&o.fleet_energy);
        self.draws += o.draws;
        self.clamped += o.clamped;
        self
    }
}

fn routes(inst: &ProblemInstance, plan: &Plan) -> Vec<Route> {
    plan.routes
        .iter()
        .enumerate()
        .map(|(k, r)| Route {
            legs: r
                .windows(2)
                .map(|w| {
                    let e = inst.edge(k, w[0], w[1]).expect("plan uses graph edges");
                    Leg {
                        mean: e.cost.mean,
                        sd: e.cost.std_dev(),
                        failure_cost: failure_cost(inst, k, w[1]),
                    }
                })
                .collect(),
            capacity: inst.vehicles[k].capacity,
            penalty: inst.params.recourse_penalty,
        })
        .collect()
}

fn run_chunk(routes: &[Route], seed: u64, chunk: usize, n: usize) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    let mut t = Tally::new(routes.len());
    for _ in 0..n {
        let mut fleet_g = 0.0;
        let mut fleet_e = 0.0;
        for (k, r) in routes.iter().enumerate() {
            let mut s = 0.0;
            let mut fails = 0usize;
            let mut g = 0.0;
            for (pos, leg) in r.legs.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut b = leg.mean + leg.sd * z;
                t.draws += 1;
                if b < 0.0 {
                    b = 0.0;
                    t.clamped += 1;
                }
                s += b;
                while fails < pos + 1 && s >= (fails + 1) as f64 * r.capacity {
                    fails += 1;
                    g += leg.failure_cost;
                }
            }
            g *= r.penalty;
            t.failed[k].push(if !r.legs.is_empty() && s > r.capacity { 1.0 } else { 0.0 });
            t.failures[k].push(fails as f64);
            t.recourse[k].push(g);
            t.energy[k].push(s);
            fleet_g += g;
            fleet_e += s;
        }
        t.fleet_recourse.push(fleet_g);
        t.fleet_energy.push(fleet_e);
    }
    t
}

fn chunks(n_samples: usize) -> Vec<(usize, usize)> {
    (0..n_samples.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(n_samples - c * CHUNK)))
        .collect()
}

fn report(inst: &ProblemInstance, plan: &Plan, n: usize, seed: u64, tally: Tally) -> RolloutReport {
    let mut vehicles = Vec::with_capacity(plan.routes.len());
    let mut analytic_energy = 0.0;
    let mut analytic_recourse = 0.0;
    for (k, r) in plan.routes.iter().enumerate() {
        let e = route_summary(inst, k, r).mean;
        let g = recourse_cost(inst, k, r).cost;
        analytic_energy += e;
        analytic_recourse += g;
        vehicles.push(VehicleRollout {
            failure_rate: tally.failed[k].estimate(n),
            failures: tally.failures[k].estimate(n),
            recourse: tally.recourse[k].estimate(n),
            energy: tally.energy[k].estimate(n),
            analytic_energy: e,
            analytic_recourse: g,
        });
    }
    RolloutReport {
        samples: n,
        seed,
        vehicles,
        recourse: tally.fleet_recourse.estimate(n),
        energy: tally.fleet_energy.estimate(n),
        analytic_energy,
        analytic_recourse,
        clamped_fraction: if tally.draws == 0 {
            0.0
        } else {
            tally.clamped as f64 / tally.draws as f64
        },
    }
}

fn prepare(inst: &ProblemInstance, plan: &Plan, n_samples: usize) -> Result<Vec<Route>, SimulateError> {
    if n_samples == 0 {
        return Err(SimulateError::NoSamples);
    }
    if plan.routes.len() != inst.n_vehicles() {
        return Err(SimulateError::Shape {
            plan: plan.routes.len(),
            vehicles: inst.n_vehicles(),
        });
    }
    Ok(routes(inst, plan))
}

/// Single-threaded rollout.
pub fn rollout_sequential(
    inst: &ProblemInstance,
    plan: &Plan,
    n_samples: usize,
    seed: u64,
) -> Result<RolloutReport, SimulateError> {
    let routes = prepare(inst, plan, n_samples)?;
    let tally = chunks(n_samples)
        .into_iter()
        .map(|(c, n)| run_chunk(&routes, seed, c, n))
        .fold(Tally::new(routes.len()), |acc, t| acc.merge(&t));
    Ok(report(inst, plan, n_samples, seed, tally))
}

/// Rollout with chunks spread over the rayon pool. Chunk results are
/// merged in chunk order, so the output equals `rollout_sequential`.
#[cfg(feature = "parallel")]
pub fn rollout_parallel(
    inst: &ProblemInstance,
    plan: &Plan,
    n_samples: usize,
    seed: u64,
) -> Result<RolloutReport, SimulateError> {
    use rayon::prelude::*;
    let routes = prepare(inst, plan, n_samples)?;
    let parts: Vec<Tally> = chunks(n_samples)
        .into_par_iter()
        .map(|(c, n)| run_chunk(&routes, seed, c, n))
        .collect();
    let tally = parts.iter().fold(Tally::new(routes.len()), |acc, t| acc.merge(t));
    Ok(report(inst, plan, n_samples, seed, tally))
}

/// Rollout using the rayon pool when the `parallel` feature is on.
pub fn rollout(
    inst: &ProblemInstance,
    plan: &Plan,
    n_samples: usize,
    seed: u64,
) -> Result<RolloutReport, SimulateError> {
    #[cfg(feature = "parallel")]
    {
        rollout_parallel(inst, plan, n_samples, seed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        rollout_sequential(inst, plan, n_samples, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::planar;
    use crate::model::{Node, RequirementExpr};

    fn line(capacity: f64, variance: f64) -> (ProblemInstance, Plan) {
        let tasks = vec![
            ([3.0, 0.0], RequirementExpr::at_least(0, 1.0)),
            ([6.0, 0.0], RequirementExpr::at_least(0, 1.0)),
        ];
        let mut inst = planar(vec![(vec![1.0], capacity)], tasks, 1, [0.0, 0.0], 10.0);
        let t = &mut inst.edges[0];
        for e in t
            .from_start
            .iter_mut()
            .chain(t.to_terminal.iter_mut())
            .chain(t.between.iter_mut())
        {
            e.cost.variance = variance;
        }
        inst.rescue = crate::model::RescueCosts::uniform(2, 1, 20.0);
        let plan = Plan::from_routes(
            &inst,
            vec![vec![Node::Start(0), Node::Task(0), Node::Task(1), Node::Terminal(0)]],
        )
        .unwrap();
        (inst, plan)
    }

    #[test]
    fn zero_variance_is_exact() {
        let (inst, plan) = line(1000.0, 0.0);
        let r = rollout(&inst, &plan, 500, 1).unwrap();
        assert_eq!(r.energy.mean, 120.0);
        assert_eq!(r.energy.std_error, 0.0);
        assert_eq!(r.vehicles[0].failure_rate.mean, 0.0);
        assert_eq!(r.recourse.mean, 0.0);
        assert_eq!(r.analytic_energy, 120.0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let (inst, plan) = line(100.0, 40.0);
        let a = rollout(&inst, &plan, 3000, 7).unwrap();
        let b = rollout(&inst, &plan, 3000, 7).unwrap();
        assert_eq!(a, b);
        let c = rollout(&inst, &plan, 3000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sequential_matches_default() {
        let (inst, plan) = line(100.0, 40.0);
        assert_eq!(
            rollout(&inst, &plan, 2500, 3).unwrap(),
            rollout_sequential(&inst, &plan, 2500, 3).unwrap()
        );
    }

    #[test]
    fn recourse_agrees_with_analytic_rule() {
        // capacity near the route mean so that failures are frequent
        let (inst, plan) = line(95.0, 60.0);
        let r = rollout(&inst, &plan, 50_000, 11).unwrap();
        assert!(r.analytic_recourse > 1.0);
        assert!(
            r.recourse.covers(r.analytic_recourse, 4.0),
            "{:?} vs {}",
            r.recourse,
            r.analytic_recourse
        );
        assert!(r.energy.covers(r.analytic_energy, 4.0));
    }

    #[test]
    fn rejects_bad_input() {
        let (inst, plan) = line(100.0, 1.0);
        assert_eq!(rollout(&inst, &plan, 0, 0), Err(SimulateError::NoSamples));
        let mut p = plan.clone();
        p.routes.push(Vec::new());
        assert!(matches!(rollout(&inst, &p, 10, 0), Err(SimulateError::Shape { .. })));
    }

    #[test]
    fn csv_has_a_row_per_vehicle_and_a_total() {
        let (inst, plan) = line(100.0, 1.0);
        let csv = rollout(&inst, &plan, 10, 0).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().last().unwrap().starts_with("all,"));
    }
}
