//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code it checks.
#![allow(dead_code)]

use fgvc_core::{Rng, Tensor};

/// Positive weights summing to one (normalized exponential draws, i.e. a
/// flat Dirichlet).
pub fn dirichlet(rng: &mut Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.uniform_f64()).ln() + 1e-12).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Flows of the basic solution whose basis is `cells`, if the cells form a
/// spanning tree of the bipartite row/column graph. Leaves are peeled off one
/// at a time: a row or column with a single remaining basic cell fixes that
/// cell's flow.
fn basic_solution(cells: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let mut row = supply.to_vec();
    let mut col = demand.to_vec();
    let mut flow = vec![f64::NAN; cells.len()];
    let mut open: Vec<bool> = vec![true; cells.len()];
    for _ in 0..cells.len() {
        let mut peeled = false;
        for i in 0..cells.len() {
            if !open[i] {
                continue;
            }
            let (r, c) = cells[i];
            let row_deg = (0..cells.len()).filter(|&j| open[j] && cells[j].0 == r).count();
            let col_deg = (0..cells.len()).filter(|&j| open[j] && cells[j].1 == c).count();
            let f = if row_deg == 1 {
                row[r]
            } else if col_deg == 1 {
                col[c]
            } else {
                continue;
            };
            flow[i] = f;
            row[r] -= f;
            col[c] -= f;
            open[i] = false;
            peeled = true;
            break;
        }
        if !peeled {
            return None; // contains a cycle
        }
    }
    let residual = row.iter().chain(&col).map(|v| v.abs()).fold(0.0, f64::max);
    (residual < 1e-9).then_some(flow)
}

type Cells = [(usize, usize)];

/// Minimum transport cost by enumerating every basic feasible solution.
pub fn brute_force_transport(supply: &[f64], demand: &[f64], dist: &[f64]) -> f64 {
    let (m, n) = (supply.len(), demand.len());
    let k = m + n - 1;
    let all: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..n).map(move |c| (r, c))).collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn rec(
        start: usize,
        k: usize,
        all: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&Cells),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for i in start..all.len() {
            if all.len() - i < k - chosen.len() {
                break;
            }
            chosen.push(all[i]);
            rec(i + 1, k, all, chosen, visit);
            chosen.pop();
        }
    }
    rec(0, k, &all, &mut chosen, &mut |cells| {
        if let Some(flow) = basic_solution(cells, supply, demand) {
            if flow.iter().all(|&f| f >= -1e-12) {
                let cost: f64 = cells.iter().zip(&flow).map(|(&(r, c), f)| f * dist[r * n + c]).sum();
                best = best.min(cost);
            }
        }
    });
    best
}

/// `(top, bottom, left, right)` of the cells `>= theta`, found by scanning
/// rows and columns separately; the full extent when none qualifies.
pub fn scan_bbox(map: &[f64], h: usize, w: usize, theta: f64) -> (usize, usize, usize, usize) {
    let hot_row = |r: usize| (0..w).any(|c| map[r * w + c] >= theta);
    let hot_col = |c: usize| (0..h).any(|r| map[r * w + c] >= theta);
    let rows: Vec<usize> = (0..h).filter(|&r| hot_row(r)).collect();
    let cols: Vec<usize> = (0..w).filter(|&c| hot_col(c)).collect();
    if rows.is_empty() {
        return (0, h - 1, 0, w - 1);
    }
    (rows[0], *rows.last().unwrap(), cols[0], *cols.last().unwrap())
}

pub fn max_normalized(map: &[f64]) -> Vec<f64> {
    let hi = map.iter().copied().fold(0.0, f64::max);
    if hi > 0.0 {
        map.iter().map(|v| v / hi).collect()
    } else {
        vec![0.0; map.len()]
    }
}

/// Image-space crop rows/cols `[r0, r1) x [c0, c1)` for an attention grid
/// box, rounding outward.
pub fn image_box(bbox: (usize, usize, usize, usize), gh: usize, gw: usize, s: usize) -> (usize, usize, usize, usize) {
    let (t, b, l, r) = bbox;
    let sy = s as f64 / gh as f64;
    let sx = s as f64 / gw as f64;
    (
        (t as f64 * sy).floor() as usize,
        (((b + 1) as f64 * sy).ceil() as usize).min(s),
        (l as f64 * sx).floor() as usize,
        (((r + 1) as f64 * sx).ceil() as usize).min(s),
    )
}

/// Pixels erased by attention drop: the max-normalized grid is blown up by
/// block replication (the side must be a multiple of the grid) and every
/// pixel whose block value exceeds `theta` is erased.
pub fn dropped_pixels(map: &[f64], gh: usize, gw: usize, s: usize, theta: f64) -> Vec<bool> {
    assert!(s.is_multiple_of(gh) && s.is_multiple_of(gw));
    let norm = max_normalized(map);
    let mut up = vec![0.0; s * s];
    for r in 0..gh {
        for c in 0..gw {
            for y in r * (s / gh)..(r + 1) * (s / gh) {
                for x in c * (s / gw)..(c + 1) * (s / gw) {
                    up[y * s + x] = norm[r * gw + c];
                }
            }
        }
    }
    up.iter().map(|&v| v > theta).collect()
}

/// A random non-negative attention grid; about a third of the cells are
/// exactly zero so that thresholds hit ties and empty sets.
pub fn random_map(rng: &mut Rng, h: usize, w: usize) -> Tensor {
    let data = (0..h * w)
        .map(|_| if rng.uniform_f64() < 0.33 { 0.0 } else { rng.uniform_f64() * 3.0 })
        .collect();
    Tensor::new(vec![h, w], data).unwrap()
}
