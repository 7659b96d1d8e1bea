use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::model::{Edge, RescueCosts, VehicleEdges};
use crate::numerics::GaussianScalar;

use super::{Cell, EnergyMap, MapError};

/// A grid path and its expected energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCost {
    /// `l_1 .. l_n`, endpoints included.
    pub cells: Vec<Cell>,
    /// Segment lengths `d_{l_i l_(i+1)}`.
    pub lengths: Vec<f64>,
    /// Sum of floored origin-cell means times segment lengths.
    pub expected: f64,
}

impl PathCost {
    pub fn length(&self) -> f64 {
        self.lengths.iter().sum()
    }
}

const STEPS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Free 8-neighbours of `c` with segment lengths. A diagonal step needs
/// both orthogonal cells it passes between to be free.
fn neighbours(map: &EnergyMap, c: Cell) -> impl Iterator<Item = (Cell, f64)> + '_ {
    let h = map.grid.cell_size;
    STEPS.iter().filter_map(move |&(dx, dy)| {
        let n = shift(c, dx, dy)?;
        if !map.is_free(n) {
            return None;
        }
        if dx != 0 && dy != 0 {
            let side_a = shift(c, dx, 0)?;
            let side_b = shift(c, 0, dy)?;
            if !map.is_free(side_a) || !map.is_free(side_b) {
                return None;
            }
            Some((n, h * std::f64::consts::SQRT_2))
        } else {
            Some((n, h))
        }
    })
}

fn shift(c: Cell, dx: isize, dy: isize) -> Option<Cell> {
    Some(Cell::new(c.x.checked_add_signed(dx)?, c.y.checked_add_signed(dy)?))
}

fn step_cost(map: &EnergyMap, from: Cell, len: f64) -> f64 {
    map.mean_at(from).max(0.0) * len
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_endpoints(map: &EnergyMap, from: Cell, to: Cell) -> Result<(), MapError> {
    for c in [from, to] {
        map.grid.check(c)?;
        if !map.is_free(c) {
            return Err(MapError::Obstacle(c.x, c.y));
        }
    }
    Ok(())
}

fn unwind(map: &EnergyMap, parent: &[usize], g: &[f64], from: Cell, to: Cell) -> PathCost {
    let grid = &map.grid;
    let mut cells = vec![to];
    let mut i = grid.index(to);
    while i != grid.index(from) {
        i = parent[i];
        cells.push(grid.cell(i));
    }
    cells.reverse();
    let lengths = cells
        .windows(2)
        .map(|w| {
            let dx = w[0].x.abs_diff(w[1].x) as f64;
            let dy = w[0].y.abs_diff(w[1].y) as f64;
            grid.cell_size * dx.hypot(dy)
        })
        .collect();
    PathCost {
        cells,
        lengths,
        expected: g[grid.index(to)],
    }
}

fn search(map: &EnergyMap, from: Cell, to: Cell, heuristic: f64) -> Result<PathCost, MapError> {
    check_endpoints(map, from, to)?;
    let grid = &map.grid;
    let goal = grid.center(to);
    let h = |c: Cell| {
        let p = grid.center(c);
        heuristic * (p[0] - goal[0]).hypot(p[1] - goal[1])
    };
    let n = grid.n_cells();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    let start = grid.index(from);
    g[start] = 0.0;
    open.push(Open {
        f: h(from),
        node: start,
    });
    let target = grid.index(to);
    while let Some(Open { f, node }) = open.pop() {
        let c = grid.cell(node);
        if f > g[node] + h(c) {
            continue;
        }
        if node == target {
            return Ok(unwind(map, &parent, &g, from, to));
        }
        for (nb, len) in neighbours(map, c) {
            let j = grid.index(nb);
            let cand = g[node] + step_cost(map, c, len);
            if cand < g[j] {
                g[j] = cand;
                parent[j] = node;
                open.push(Open {
                    f: cand + h(nb),
                    node: j,
                });
            }
        }
    }
    Err(MapError::NoPath { from, to })
}

/// Minimum expected energy path over free cells. The heuristic is the
/// smallest free-cell mean times the straight-line distance, which never
/// overestimates since no segment is cheaper per unit length.
pub fn astar_path(map: &EnergyMap, from: Cell, to: Cell) -> Result<PathCost, MapError> {
    let hmin = map.min_free_mean();
    search(map, from, to, if hmin.is_finite() { hmin } else { 0.0 })
}

/// Uniform-cost search over the same graph; the reference for `astar_path`.
pub fn dijkstra_path(map: &EnergyMap, from: Cell, to: Cell) -> Result<PathCost, MapError> {
    search(map, from, to, 0.0)
}

/// Gaussian cost of travelling `cells` in order: mean `d^T m` and variance
/// `d^T S d`, where `m` and `S` are the posterior mean and covariance of the
/// origin cells `l_1 .. l_(n-1)` of the segments.
pub fn path_distribution(map: &EnergyMap, cells: &[Cell]) -> GaussianScalar {
    if cells.len() < 2 {
        return GaussianScalar::default();
    }
    let grid = &map.grid;
    let origins = &cells[..cells.len() - 1];
    let d: Vec<f64> = cells
        .windows(2)
        .map(|w| {
            let a = grid.center(w[0]);
            let b = grid.center(w[1]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .collect();
    let mean = origins.iter().zip(&d).map(|(&c, &l)| map.mean_at(c) * l).sum();
    let mut variance = 0.0;
    for (a, (&ca, &da)) in origins.iter().zip(&d).enumerate() {
        variance += da * da * map.covariance(ca, ca);
        for (&cb, &db) in origins[a + 1..].iter().zip(&d[a + 1..]) {
            variance += 2.0 * da * db * map.covariance(ca, cb);
        }
    }
    GaussianScalar {
        mean,
        variance: variance.max(0.0),
    }
}

/// Travel time of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeModel {
    /// Time per unit of path length.
    PerLength(f64),
    /// The same time for every edge.
    Constant(f64),
}

impl TimeModel {
    fn time(self, length: f64) -> f64 {
        match self {
            TimeModel::PerLength(r) => r * length,
            TimeModel::Constant(t) => t,
        }
    }
}

/// Edge tables for a fleet together with a count of floored cell means.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeExport {
    pub edges: Vec<VehicleEdges>,
    /// Path cells whose negative posterior mean was raised to zero.
    pub floored_cells: usize,
}

#[derive(Clone, Copy)]
struct Leg {
    cost: GaussianScalar,
    length: f64,
    floored: usize,
}

struct LegCache<'a> {
    map: &'a EnergyMap,
    legs: HashMap<(Cell, Cell), Leg>,
}

impl<'a> LegCache<'a> {
    fn new(map: &'a EnergyMap) -> Self {
        Self {
            map,
            legs: HashMap::new(),
        }
    }

    /// Unit-weight cost of the minimum expected energy path; means below
    /// zero are floored.
    fn leg(&mut self, from: Cell, to: Cell) -> Result<Leg, MapError> {
        if from == to {
            return Ok(Leg {
                cost: GaussianScalar::default(),
                length: 0.0,
                floored: 0,
            });
        }
        if let Some(l) = self.legs.get(&(from, to)) {
            return Ok(*l);
        }
        let path = astar_path(self.map, from, to)?;
        let mut cost = path_distribution(self.map, &path.cells);
        cost.mean = path.expected;
        let floored = path.cells[..path.cells.len() - 1]
            .iter()
            .filter(|&&c| self.map.mean_at(c) < 0.0)
            .count();
        let leg = Leg {
            cost,
            length: path.length(),
            floored,
        };
        self.legs.insert((from, to), leg);
        Ok(leg)
    }
}

/// Per-vehicle edge tables. Vehicle `k` travels on `maps[k]` with its costs
/// scaled by `weights[k]` (mean by `w`, variance by `w^2`). Every direction
/// is searched separately; paths are shared between vehicles on the same map.
pub fn build_edge_costs(
    maps: &[&EnergyMap],
    weights: &[f64],
    starts: &[Cell],
    terminals: &[Cell],
    tasks: &[Cell],
    time: TimeModel,
) -> Result<EdgeExport, MapError> {
    let n_v = maps.len();
    if weights.len() != n_v || starts.len() != n_v || terminals.len() != n_v {
        return Err(MapError::Format(format!(
            "{n_v} maps but {} weights, {} starts and {} terminals",
            weights.len(),
            starts.len(),
            terminals.len()
        )));
    }
    let mut caches: Vec<LegCache> = Vec::new();
    let mut floored = 0;
    let mut edges = Vec::with_capacity(n_v);
    for k in 0..n_v {
        let slot = match caches.iter().position(|c| std::ptr::eq(c.map, maps[k])) {
            Some(i) => i,
            None => {
                caches.push(LegCache::new(maps[k]));
                caches.len() - 1
            }
        };
        let cache = &mut caches[slot];
        let w = weights[k];
        let mut edge = |a: Cell, b: Cell| -> Result<Edge, MapError> {
            let leg = cache.leg(a, b)?;
            floored += leg.floored;
            Ok(Edge {
                cost: leg.cost.scaled(w),
                time: time.time(leg.length),
            })
        };
        let n = tasks.len();
        let mut table = VehicleEdges::filled(n, Edge::default());
        for (i, &t) in tasks.iter().enumerate() {
            table.from_start[i] = edge(starts[k], t)?;
            table.to_terminal[i] = edge(t, terminals[k])?;
            for (j, &u) in tasks.iter().enumerate() {
                if i != j {
                    *table.task_to_task_mut(i, j) = edge(t, u)?;
                }
            }
        }
        table.start_to_terminal = edge(starts[k], terminals[k])?;
        edges.push(table);
    }
    Ok(EdgeExport {
        edges,
        floored_cells: floored,
    })
}

/// Expected costs of a rescue vehicle based at `base` travelling on `map`
/// with weight `weight`.
pub fn rescue_costs(
    map: &EnergyMap,
    weight: f64,
    base: Cell,
    tasks: &[Cell],
    terminals: &[Cell],
) -> Result<RescueCosts, MapError> {
    let mut cache = LegCache::new(map);
    let mut out = |a: Cell, b: Cell| cache.leg(a, b).map(|l| weight * l.cost.mean);
    let mut r = RescueCosts {
        to_task: Vec::with_capacity(tasks.len()),
        from_task: Vec::with_capacity(tasks.len()),
        to_terminal: Vec::with_capacity(terminals.len()),
        from_terminal: Vec::with_capacity(terminals.len()),
    };
    for &t in tasks {
        r.to_task.push(out(base, t)?);
        r.from_task.push(out(t, base)?);
    }
    for &u in terminals {
        r.to_terminal.push(out(base, u)?);
        r.from_terminal.push(out(u, base)?);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::super::{fit_gp, GpParams, Grid, Sample};
    use super::*;

    fn flat(width: usize, height: usize, value: f64) -> EnergyMap {
        let g = Grid::new(width, height, 1.0);
        let p = GpParams {
            prior_mean: value,
            ..Default::default()
        };
        fit_gp(g, vec![false; g.n_cells()], &[], p).unwrap()
    }

    fn set_mean(map: &mut EnergyMap, c: Cell, v: f64) {
        let i = map.grid.index(c);
        map.mean[i] = v;
    }

    #[test]
    fn uniform_field_takes_the_octile_path() {
        let m = flat(10, 10, 2.0);
        let p = astar_path(&m, Cell::new(0, 0), Cell::new(6, 2)).unwrap();
        let octile = 2.0 * (4.0 + 2.0 * std::f64::consts::SQRT_2);
        assert!((p.expected - octile).abs() < 1e-12);
        assert_eq!(p.cells.first(), Some(&Cell::new(0, 0)));
        assert_eq!(p.cells.last(), Some(&Cell::new(6, 2)));
        let d = dijkstra_path(&m, Cell::new(0, 0), Cell::new(6, 2)).unwrap();
        assert!((d.expected - p.expected).abs() < 1e-12);
    }

    #[test]
    fn expensive_band_forces_a_detour() {
        let mut m = flat(9, 9, 1.0);
        for y in 0..8 {
            set_mean(&mut m, Cell::new(4, y), 100.0);
        }
        let p = astar_path(&m, Cell::new(0, 0), Cell::new(8, 0)).unwrap();
        assert!(p.cells.iter().any(|c| *c == Cell::new(4, 8)), "{:?}", p.cells);
        let d = dijkstra_path(&m, Cell::new(0, 0), Cell::new(8, 0)).unwrap();
        assert!((d.expected - p.expected).abs() < 1e-9);
    }

    #[test]
    fn walled_endpoint_has_no_path() {
        let mut m = flat(7, 7, 1.0);
        for (x, y) in [(2, 2), (3, 2), (4, 2), (2, 3), (4, 3), (2, 4), (3, 4), (4, 4)] {
            let i = m.grid.index(Cell::new(x, y));
            m.obstacles[i] = true;
        }
        assert_eq!(
            astar_path(&m, Cell::new(0, 0), Cell::new(3, 3)),
            Err(MapError::NoPath {
                from: Cell::new(0, 0),
                to: Cell::new(3, 3)
            })
        );
        assert_eq!(
            astar_path(&m, Cell::new(0, 0), Cell::new(2, 2)),
            Err(MapError::Obstacle(2, 2))
        );
    }

    #[test]
    fn no_corner_cutting() {
        let mut m = flat(2, 2, 1.0);
        let i = m.grid.index(Cell::new(1, 0));
        m.obstacles[i] = true;
        let p = astar_path(&m, Cell::new(0, 0), Cell::new(1, 1)).unwrap();
        assert_eq!(p.cells, vec![Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 1)]);
    }

    #[test]
    fn single_segment_distribution() {
        let g = Grid::new(3, 1, 1.0);
        let p = GpParams {
            prior_mean: 30.0,
            signal: 2.0,
            ..Default::default()
        };
        let m = fit_gp(g, vec![false; 3], &[], p).unwrap();
        let d = path_distribution(&m, &[Cell::new(0, 0), Cell::new(1, 0)]);
        assert_eq!(d, GaussianScalar::new(30.0, 4.0).unwrap());
    }

    #[test]
    fn independent_cells_sum_variances() {
        // length scale tiny: neighbouring cells uncorrelated
        let g = Grid::new(4, 1, 1.0);
        let p = GpParams {
            prior_mean: 0.0,
            signal: 1.0,
            length_scale: 1e-3,
            ..Default::default()
        };
        let mut m = fit_gp(g, vec![false; 4], &[], p).unwrap();
        m.mean = vec![10.0, 20.0, 0.0, 0.0];
        // lengths 1 (0 -> 1) and 2 (1 -> 3)
        let d = path_distribution(&m, &[Cell::new(0, 0), Cell::new(1, 0), Cell::new(3, 0)]);
        assert!((d.mean - 50.0).abs() < 1e-12);
        assert!((d.variance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_variance() {
        // choose the length scale so that adjacent cells have covariance 0.5
        let l = 1.0 / (2.0 * 2f64.ln()).sqrt();
        let g = Grid::new(3, 1, 1.0);
        let p = GpParams {
            prior_mean: 0.0,
            signal: 1.0,
            length_scale: l,
            ..Default::default()
        };
        let m = fit_gp(g, vec![false; 3], &[], p).unwrap();
        assert!((m.covariance(Cell::new(0, 0), Cell::new(1, 0)) - 0.5).abs() < 1e-12);
        let d = path_distribution(&m, &[Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0)]);
        assert!((d.variance - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weight_scaling_and_degenerate_edges() {
        let g = Grid::new(8, 8, 10.0);
        let s = [Sample {
            position: [35.0, 35.0],
            value: 20.0,
        }];
        let m = fit_gp(g, vec![false; 64], &s, GpParams::default()).unwrap();
        let tasks = [Cell::new(1, 1), Cell::new(6, 2), Cell::new(3, 7), Cell::new(7, 7)];
        let base = Cell::new(4, 4);
        let out = build_edge_costs(
            &[&m, &m],
            &[1.0, 3.0],
            &[base, base],
            &[base, base],
            &tasks,
            TimeModel::Constant(1.0),
        )
        .unwrap();
        let (a, b) = (&out.edges[0], &out.edges[1]);
        let all = |e: &VehicleEdges| {
            let mut v: Vec<Edge> = e.from_start.iter().chain(&e.to_terminal).copied().collect();
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        v.push(*e.task_to_task(i, j));
                    }
                }
            }
            v
        };
        let (ea, eb) = (all(a), all(b));
        assert_eq!(ea.len(), 4 * 3 + 2 * 4);
        for (x, y) in ea.iter().zip(&eb) {
            assert!(x.cost.mean.is_finite() && x.cost.mean > 0.0 && x.cost.variance >= 0.0);
            assert!((y.cost.mean - 3.0 * x.cost.mean).abs() < 1e-9 * y.cost.mean);
            assert!((y.cost.variance - 9.0 * x.cost.variance).abs() < 1e-9 * y.cost.variance.max(1.0));
            assert_eq!(x.time, 1.0);
        }
        assert_eq!(a.start_to_terminal.cost, GaussianScalar::default());
        assert_eq!(out.floored_cells, 0);
    }

    #[test]
    fn scaled_map_keeps_the_argmin() {
        let g = Grid::new(12, 12, 5.0);
        let s: Vec<Sample> = (0..6)
            .map(|i| Sample {
                position: [7.0 + 9.0 * i as f64, 50.0 - 6.0 * i as f64],
                value: 10.0 + 7.0 * (i % 3) as f64,
            })
            .collect();
        let p = GpParams {
            length_scale: 15.0,
            ..Default::default()
        };
        let m = fit_gp(g, vec![false; 144], &s, p).unwrap();
        let a = astar_path(&m, Cell::new(0, 0), Cell::new(11, 9)).unwrap();
        let b = astar_path(&m.scaled(4.0), Cell::new(0, 0), Cell::new(11, 9)).unwrap();
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn rescue_costs_are_round_trips() {
        let m = flat(5, 5, 1.0);
        let r = rescue_costs(&m, 2.0, Cell::new(2, 2), &[Cell::new(2, 4)], &[Cell::new(2, 2)]).unwrap();
        assert_eq!(r.to_task, vec![4.0]);
        assert_eq!(r.from_task, vec![4.0]);
        assert_eq!(r.to_terminal, vec![0.0]);
    }
}
