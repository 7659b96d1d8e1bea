//! Separation of generalized subtour elimination rows
//! `sum_{i,j in S} x_kij <= sum_{i in S} y_ki - y_kl` for fractional points.

use std::collections::HashSet;

use crate::lp::Constraint;

use super::{Node, VariableIndex};

/// Minimum violation for a row to be returned.
pub const SUBTOUR_TOL: f64 = 1e-3;
const THRESHOLDS: [f64; 3] = [1e-6, 0.3, 0.6];

struct VehicleSupport {
    y: Vec<f64>,
    /// `w[i][j] = x_kij + x_kji`.
    w: Vec<Vec<f64>>,
}

impl VehicleSupport {
    fn new(index: &VariableIndex, k: usize, x: &[f64]) -> Self {
        let n = index.n_tasks();
        let y = (0..n).map(|m| x[index.y(k, m)]).collect();
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if let Some(c) = index.x(k, Node::Task(i), Node::Task(j)) {
                    w[i][j] += x[c];
                    w[j][i] += x[c];
                }
            }
        }
        Self { y, w }
    }

    /// Violation of the row for `set` and the task it leaves out.
    fn violation(&self, set: &[usize]) -> (f64, usize) {
        let mut inside = 0.0;
        for (a, &i) in set.iter().enumerate() {
            for &j in &set[a + 1..] {
                inside += self.w[i][j];
            }
        }
        let l = *set
            .iter()
            .max_by(|&&a, &&b| self.y[a].total_cmp(&self.y[b]))
            .expect("non-empty set");
        let rhs: f64 = set.iter().map(|&i| self.y[i]).sum::<f64>() - self.y[l];
        (inside - rhs, l)
    }

    fn components(&self, threshold: f64) -> Vec<Vec<usize>> {
        let n = self.y.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX || self.y[s] <= 1e-6 {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut head = 0;
            while head < members.len() {
                let i = members[head];
                head += 1;
                for j in 0..n {
                    if comp[j] == usize::MAX && self.w[i][j] > threshold {
                        comp[j] = id;
                        members.push(j);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Greedy growth from `seed`, keeping the most violated prefix.
    fn grow(&self, seed: usize) -> Vec<usize> {
        let n = self.y.len();
        let mut set = vec![seed];
        let mut in_set = vec![false; n];
        in_set[seed] = true;
        let mut best = Vec::new();
        let mut best_v = SUBTOUR_TOL;
        loop {
            let pick = (0..n)
                .filter(|&j| !in_set[j] && self.y[j] > 1e-6)
                .map(|j| (j, set.iter().map(|&i| self.w[i][j]).sum::<f64>() - self.y[j]))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let Some((j, _)) = pick else { break };
            set.push(j);
            in_set[j] = true;
            let (v, _) = self.violation(&set);
            if v > best_v {
                best_v = v;
                best = set.clone();
            }
        }
        best.sort_unstable();
        best
    }
}

fn subtour_row(index: &VariableIndex, k: usize, set: &[usize], keep: usize) -> Constraint {
    let mut row = Vec::new();
    for &i in set {
        for &j in set {
            if let Some(c) = index.x(k, Node::Task(i), Node::Task(j)) {
                row.push((c, 1.0));
            }
        }
        if i != keep {
            row.push((index.y(k, i), -1.0));
        }
    }
    Constraint::le(row, 0.0)
}

/// Subtour rows violated by `x` by more than [`SUBTOUR_TOL`], candidates
/// being support components at a few thresholds and greedily grown sets.
pub fn separate_subtours(index: &VariableIndex, x: &[f64]) -> Vec<Constraint> {
    let mut rows = Vec::new();
    for k in 0..index.n_vehicles() {
        let sup = VehicleSupport::new(index, k, x);
        if sup.y.iter().sum::<f64>() < 1.0 + SUBTOUR_TOL {
            continue;
        }
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut candidates: Vec<Vec<usize>> = THRESHOLDS.iter().flat_map(|&t| sup.components(t)).collect();
        candidates.extend((0..sup.y.len()).filter(|&i| sup.y[i] > 1e-6).map(|i| sup.grow(i)));
        for set in candidates {
            if set.len() < 2 || !seen.insert(set.clone()) {
                continue;
            }
            let (v, keep) = sup.violation(&set);
            if v > SUBTOUR_TOL {
                rows.push(subtour_row(index, k, &set, keep));
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::planar;
    use crate::model::{build_deterministic, RequirementExpr};

    fn three_tasks() -> crate::model::BuiltModel {
        let inst = planar(
            vec![(vec![1.0], 1e4)],
            vec![
                ([1.0, 0.0], RequirementExpr::at_least(0, 1.0)),
                ([2.0, 0.0], RequirementExpr::at_least(0, 1.0)),
                ([3.0, 0.0], RequirementExpr::at_least(0, 1.0)),
            ],
            1,
            [0.0, 0.0],
            1.0,
        );
        build_deterministic(&inst).unwrap()
    }

    #[test]
    fn finds_a_fractional_two_cycle() {
        let b = three_tasks();
        let ix = &b.index;
        let mut x = vec![0.0; ix.n_vars()];
        // a path to task 0 plus a two-cycle between tasks 1 and 2
        x[ix.x(0, Node::Start(0), Node::Task(0)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(0), Node::Terminal(0)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(1), Node::Task(2)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(2), Node::Task(1)).unwrap()] = 1.0;
        for m in 0..3 {
            x[ix.y(0, m)] = 1.0;
        }
        let rows = separate_subtours(ix, &x);
        assert!(!rows.is_empty());
        for r in &rows {
            assert!(r.violation(&x) > SUBTOUR_TOL);
        }
    }

    #[test]
    fn paths_are_not_cut() {
        let b = three_tasks();
        let ix = &b.index;
        let mut x = vec![0.0; ix.n_vars()];
        x[ix.x(0, Node::Start(0), Node::Task(0)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(0), Node::Task(1)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(1), Node::Task(2)).unwrap()] = 1.0;
        x[ix.x(0, Node::Task(2), Node::Terminal(0)).unwrap()] = 1.0;
        for m in 0..3 {
            x[ix.y(0, m)] = 1.0;
        }
        assert!(separate_subtours(ix, &x).is_empty());
    }
}
