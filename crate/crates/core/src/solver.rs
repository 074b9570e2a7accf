//! Exact optimal tours.
//!
//! The optimum is computed with Held-Karp dynamic programming over subsets.
//! For the instance sizes used here (n <= 20) this yields exactly the
//! optimal tour length that a Miller-Tucker-Zemlin MILP solve returns, with
//! no external solver. Among co-optimal tours (lengths within
//! [`LENGTH_TOLERANCE`]) the canonical lexicographic minimum is returned.
//!
//! [`brute_force_solve`] enumerates every undirected tour and is kept as the
//! independent oracle for the dynamic program.

use std::fmt;

use perm::next_permutation;
use serde::{Deserialize, Serialize};

use crate::instances::Instance;

/// Absolute tolerance for comparing tour lengths.
pub const LENGTH_TOLERANCE: f64 = 1e-9;

/// Largest instance accepted by [`solve_exact`]. Memory grows as
/// `2^(n-1) * (n-1) * 8` bytes: about 80 MB at n = 20, 3.2 GB at n = 25.
pub const MAX_EXACT_NODES: usize = 25;

/// Largest instance accepted by [`brute_force_solve`].
pub const MAX_BRUTE_FORCE_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("route is not a permutation of 1..={n}: {reason}")]
    InvalidRoute { n: usize, reason: String },
    #[error("route has {route} nodes but the instance has {instance}")]
    SizeMismatch { route: usize, instance: usize },
    #[error("exact solver supports 3..={max} nodes, got {n}")]
    OutOfBounds { n: usize, max: usize },
}

/// A closed Hamiltonian tour over node IDs `1..=n`, stored in canonical
/// open form: starting at node 1, in the direction whose second node is the
/// smaller of the two neighbours of node 1. The return edge is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Route(Vec<u32>);

impl Route {
    /// Validates that `order` is a permutation of `1..=order.len()` (with at
    /// least 3 nodes) and canonicalises it.
    pub fn new(order: Vec<u32>) -> Result<Self, SolverError> {
        let n = order.len();
        if n < 3 {
            return Err(SolverError::InvalidRoute {
                n,
                reason: "a tour needs at least 3 nodes".into(),
            });
        }
        let mut seen = vec![false; n + 1];
        for &id in &order {
            let idx = id as usize;
            if idx == 0 || idx > n {
                return Err(SolverError::InvalidRoute {
                    n,
                    reason: format!("id {id} out of range"),
                });
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(SolverError::InvalidRoute {
                    n,
                    reason: format!("id {id} repeated"),
                });
            }
        }
        Ok(Route(canonicalize(order)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let n = self.0.len();
        let mut edges: Vec<(u32, u32)> = (0..n)
            .map(|i| {
                let (a, b) = (self.0[i], self.0[(i + 1) % n]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        edges
    }
}

impl TryFrom<Vec<u32>> for Route {
    type Error = SolverError;

    fn try_from(order: Vec<u32>) -> Result<Self, Self::Error> {
        Route::new(order)
    }
}

impl From<Route> for Vec<u32> {
    fn from(route: Route) -> Self {
        route.0
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "[{}]", ids.join(", "))
    }
}

/// Rotates a permutation to start at its minimum ID and picks the
/// lexicographically smaller traversal direction.
fn canonicalize(mut order: Vec<u32>) -> Vec<u32> {
    let start = order
        .iter()
        .enumerate()
        .min_by_key(|&(_, id)| *id)
        .map(|(i, _)| i)
        .unwrap_or(0);
    order.rotate_left(start);
    if order.len() > 2 && order[order.len() - 1] < order[1] {
        order[1..].reverse();
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedInstance {
    pub instance: Instance,
    pub optimal_route: Route,
    pub optimal_length: f64,
}

/// Length of the closed tour, including the edge back to the start.
pub fn tour_length(route: &Route, instance: &Instance) -> Result<f64, SolverError> {
    if route.len() != instance.n {
        return Err(SolverError::SizeMismatch {
            route: route.len(),
            instance: instance.n,
        });
    }
    let ids = route.ids();
    let mut total = 0.0;
    for i in 0..ids.len() {
        let a = lookup(instance, ids[i])?;
        let b = lookup(instance, ids[(i + 1) % ids.len()])?;
        total += a.distance(b);
    }
    Ok(total)
}

fn lookup(instance: &Instance, id: u32) -> Result<&crate::instances::Point, SolverError> {
    instance.point(id).ok_or_else(|| SolverError::InvalidRoute {
        n: instance.n,
        reason: format!("unknown id {id}"),
    })
}

/// Held-Karp exact solve with canonical lexicographic tie-breaking.
pub fn solve_exact(instance: &Instance) -> Result<SolvedInstance, SolverError> {
    let n = instance.n;
    if !(3..=MAX_EXACT_NODES).contains(&n) {
        return Err(SolverError::OutOfBounds {
            n,
            max: MAX_EXACT_NODES,
        });
    }
    let dist = instance.distance_matrix();
    // Node 0 (ID 1) is the fixed start; subsets range over the other m nodes.
    let m = n - 1;
    let full: usize = (1 << m) - 1;
    // best[mask * m + j]: shortest path from node 0 visiting exactly the
    // nodes in `mask` and ending at node j + 1 (bit j of mask).
    let mut best = vec![f64::INFINITY; (full + 1) * m];
    for j in 0..m {
        best[(1 << j) * m + j] = dist[0][j + 1];
    }
    for mask in 1..=full {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut bits = mask;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let prev = mask ^ (1 << j);
            let row = &best[prev * m..prev * m + m];
            let mut value = f64::INFINITY;
            let mut pbits = prev;
            while pbits != 0 {
                let i = pbits.trailing_zeros() as usize;
                pbits &= pbits - 1;
                let candidate = row[i] + dist[i + 1][j + 1];
                if candidate < value {
                    value = candidate;
                }
            }
            best[mask * m + j] = value;
        }
    }
    let optimum = (0..m)
        .map(|j| best[full * m + j] + dist[j + 1][0])
        .fold(f64::INFINITY, f64::min);

    // Forward reconstruction choosing the smallest feasible next ID. The
    // remainder of a tour (from v through `rest` back to node 0) costs
    // best[rest | v][v] by symmetry, so every choice stays completable.
    let mut order = vec![1u32];
    let mut visited = 0usize;
    let mut current = 0usize;
    let mut prefix = 0.0;
    for _ in 0..m {
        let next = (0..m)
            .filter(|&v| visited & (1 << v) == 0)
            .find(|&v| {
                let remaining = full & !visited;
                let completion = best[remaining * m + v];
                prefix + dist[current][v + 1] + completion <= optimum + LENGTH_TOLERANCE
            })
            .expect("an optimal completion always exists");
        prefix += dist[current][next + 1];
        visited |= 1 << next;
        current = next + 1;
        order.push(current as u32 + 1);
    }
    finish(instance, order)
}

/// Exhaustive enumeration of all `(n-1)!/2` undirected tours.
pub fn brute_force_solve(instance: &Instance) -> Result<SolvedInstance, SolverError> {
    let n = instance.n;
    if !(3..=MAX_BRUTE_FORCE_NODES).contains(&n) {
        return Err(SolverError::OutOfBounds {
            n,
            max: MAX_BRUTE_FORCE_NODES,
        });
    }
    let dist = instance.distance_matrix();
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best_len = f64::INFINITY;
    let mut best_order: Vec<usize> = Vec::new();
    loop {
        // Each undirected tour appears twice; keep the canonical direction.
        if rest[0] < rest[n - 2] {
            let mut len = dist[0][rest[0]] + dist[rest[n - 2]][0];
            for w in rest.windows(2) {
                len += dist[w[0]][w[1]];
            }
            // Permutations arrive in lexicographic order, so the first tour
            // within tolerance of the minimum is the canonical tie-break.
            if len < best_len - LENGTH_TOLERANCE {
                best_len = len;
                best_order = rest.clone();
            }
        }
        if !next_permutation(&mut rest) {
            break;
        }
    }
    let order = std::iter::once(1u32)
        .chain(best_order.iter().map(|&i| i as u32 + 1))
        .collect();
    finish(instance, order)
}

fn finish(instance: &Instance, order: Vec<u32>) -> Result<SolvedInstance, SolverError> {
    let optimal_route = Route::new(order)?;
    let optimal_length = tour_length(&optimal_route, instance)?;
    Ok(SolvedInstance {
        instance: instance.clone(),
        optimal_route,
        optimal_length,
    })
}

mod perm {
    /// In-place lexicographic successor; returns false after the last one.
    pub fn next_permutation<T: Ord>(items: &mut [T]) -> bool {
        if items.len() < 2 {
            return false;
        }
        let mut i = items.len() - 1;
        while i > 0 && items[i - 1] >= items[i] {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        let mut j = items.len() - 1;
        while items[j] <= items[i - 1] {
            j -= 1;
        }
        items.swap(i - 1, j);
        items[i..].reverse();
        true
    }
}
