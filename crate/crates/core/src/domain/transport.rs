//! Exact transportation solver: min-cost flow by successive shortest
//! augmenting paths, with Dijkstra on reduced costs kept non-negative by node
//! potentials.
//!
//! The residual network is bipartite, so it is kept implicitly: forward arcs
//! `i -> j` have unbounded capacity and cost `d[i][j]`, reverse arcs `j -> i`
//! exist while `flow[i][j] > 0` with cost `-d[i][j]`, and a super source and
//! sink connect to suppliers and consumers that still have mass left.

use crate::error::{Error, Result};

/// Residual amounts at or below this are treated as exhausted.
const MASS_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    /// Row-major `m x n` flow matrix.
    pub flow: Vec<f64>,
    /// `sum f_ij d_ij`.
    pub total_cost: f64,
    /// `sum f_ij`.
    pub total_flow: f64,
}

/// Minimises `sum f_ij d_ij` subject to row sums `supply` and column sums
/// `demand`. Both marginals must be non-negative with equal totals (within
/// 1e-6 relative); `dist` is row-major `m x n` and non-negative.
pub fn solve(supply: &[f64], demand: &[f64], dist: &[f64]) -> Result<Transport> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptyDomain("transport problem with no nodes".into()));
    }
    if dist.len() != m * n {
        return Err(Error::shape(format!(
            "cost matrix has {} entries, expected {m}x{n}",
            dist.len()
        )));
    }
    if supply.iter().chain(demand).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("marginals must be finite and non-negative".into()));
    }
    if dist.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::InvalidInput("costs must be finite and non-negative".into()));
    }
    let (ts, td): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (ts - td).abs() > 1e-6 * ts.max(td).max(1.0) {
        return Err(Error::Unbalanced {
            source_mass: ts,
            target_mass: td,
        });
    }

    // node layout: 0..m suppliers, m..m+n consumers, then source and sink
    let source = m + n;
    let sink = m + n + 1;
    let nodes = m + n + 2;

    let mut sup_left = supply.to_vec();
    // the smaller total bounds what can be shipped; the excess on the other
    // side is below tolerance and stays unshipped
    let mut dem_left = demand.to_vec();
    let mut flow = vec![0.0; m * n];
    let mut potential = vec![0.0; nodes];
    let mut dist_to = vec![0.0; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];

    loop {
        if sup_left.iter().all(|&s| s <= MASS_EPS) || dem_left.iter().all(|&d| d <= MASS_EPS) {
            break;
        }

        dist_to.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        dist_to[source] = 0.0;

        for _ in 0..nodes {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist_to[v] < best {
                    best = dist_to[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, cost: f64, dist_to: &mut [f64], parent: &mut [usize]| {
                let reduced = (cost + potential[u] - potential[v]).max(0.0);
                let cand = best + reduced;
                if cand < dist_to[v] {
                    dist_to[v] = cand;
                    parent[v] = u;
                }
            };
            if u == source {
                for i in 0..m {
                    if sup_left[i] > MASS_EPS {
                        relax(i, 0.0, &mut dist_to, &mut parent);
                    }
                }
            } else if u < m {
                let row = &dist[u * n..(u + 1) * n];
                for (j, &d) in row.iter().enumerate() {
                    relax(m + j, d, &mut dist_to, &mut parent);
                }
            } else if u < m + n {
                let j = u - m;
                for i in 0..m {
                    if flow[i * n + j] > MASS_EPS {
                        relax(i, -dist[i * n + j], &mut dist_to, &mut parent);
                    }
                }
                if dem_left[j] > MASS_EPS {
                    relax(sink, 0.0, &mut dist_to, &mut parent);
                }
            }
        }

        if !dist_to[sink].is_finite() {
            break;
        }
        let cap = dist_to[sink];
        for v in 0..nodes {
            potential[v] += dist_to[v].min(cap);
        }

        // bottleneck along sink <- j <- i <- ... <- source
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            let residual = if u == source {
                sup_left[v]
            } else if v == sink {
                dem_left[u - m]
            } else if u >= m {
                flow[v * n + (u - m)]
            } else {
                f64::INFINITY
            };
            bottleneck = bottleneck.min(residual);
            v = u;
        }

        let mut v = sink;
        while v != source {
            let u = parent[v];
            if u == source {
                sup_left[v] -= bottleneck;
            } else if v == sink {
                dem_left[u - m] -= bottleneck;
            } else if u < m {
                flow[u * n + (v - m)] += bottleneck;
            } else {
                let cell = &mut flow[v * n + (u - m)];
                *cell -= bottleneck;
                if *cell < MASS_EPS {
                    *cell = 0.0;
                }
            }
            v = u;
        }
    }

    let total_flow: f64 = flow.iter().sum();
    let total_cost: f64 = flow.iter().zip(dist).map(|(f, d)| f * d).sum();
    Ok(Transport {
        flow,
        total_cost,
        total_flow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_example() {
        let t = solve(&[0.6, 0.4], &[0.5, 0.5], &[1.0, 2.0, 3.0, 1.0]).unwrap();
        assert!((t.total_cost - 1.1).abs() < 1e-12);
        let expected = [0.5, 0.1, 0.0, 0.4];
        for (a, b) in t.flow.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", t.flow);
        }
    }

    #[test]
    fn needs_a_reverse_arc() {
        // greedy on the cheapest cell picks (0,0) which the optimum avoids
        let t = solve(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 1.0, 1.0, 100.0]).unwrap();
        assert!((t.total_cost - 1.0).abs() < 1e-12, "{}", t.total_cost);
        let t = solve(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 2.0, 2.0, 10.0]).unwrap();
        assert!((t.total_cost - 4.0).abs() < 1e-12, "{}", t.total_cost);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            solve(&[0.5, 0.5], &[0.9], &[1.0, 1.0]),
            Err(Error::Unbalanced { .. })
        ));
        assert!(solve(&[1.0], &[1.0], &[1.0, 2.0]).is_err());
        assert!(solve(&[1.0], &[1.0], &[-1.0]).is_err());
        assert!(solve(&[], &[1.0], &[]).is_err());
    }

    #[test]
    fn zero_mass_rows_are_allowed() {
        let t = solve(&[0.0, 1.0], &[1.0], &[5.0, 2.0]).unwrap();
        assert_eq!(t.flow, vec![0.0, 1.0]);
        assert!((t.total_cost - 2.0).abs() < 1e-12);
    }
}
