//! Marching-squares extraction of the zero-level-set.
//!
//! A node is burned when `u < 0`. Crossings are placed by linear
//! interpolation along cell edges, so linear fields are reproduced exactly.
//! Saddle cells are disambiguated with the mean of the four corners.

use std::collections::BTreeMap;

use crate::field::ScalarField;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    /// Closed polylines do not repeat their first point.
    pub closed: bool,
}

/// Edge identifier: `(orientation, i, j)` with 0 = edge from node `(i, j)` to
/// `(i + 1, j)`, 1 = edge from `(i, j)` to `(i, j + 1)`.
type EdgeKey = (u8, usize, usize);

pub fn extract_zero_level_set(u: &ScalarField) -> Vec<Polyline> {
    let grid = &u.grid;
    let (nx, ny) = u.values.dim();
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let v = &u.values;
    let inside = |i: usize, j: usize| v[[i, j]] < 0.0;

    let mut points: BTreeMap<EdgeKey, (f64, f64)> = BTreeMap::new();
    let mut crossing = |key: EdgeKey| -> EdgeKey {
        points.entry(key).or_insert_with(|| {
            let (o, i, j) = key;
            let (i2, j2) = if o == 0 { (i + 1, j) } else { (i, j + 1) };
            let (ua, ub) = (v[[i, j]], v[[i2, j2]]);
            let t = ua / (ua - ub);
            let x = grid.x(i) * (1.0 - t) + grid.x(i2) * t;
            let y = grid.y(j) * (1.0 - t) + grid.y(j2) * t;
            (x, y)
        });
        key
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [inside(i, j), inside(i + 1, j), inside(i + 1, j + 1), inside(i, j + 1)];
            // bottom, right, top, left
            let edges: [EdgeKey; 4] = [(0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j)];
            let cut = [c[0] != c[1], c[1] != c[2], c[3] != c[2], c[0] != c[3]];
            let n_cut = cut.iter().filter(|&&b| b).count();
            match n_cut {
                0 => {}
                2 => {
                    let mut it = (0..4).filter(|&e| cut[e]);
                    let (a, b) = (it.next().unwrap(), it.next().unwrap());
                    segments.push((crossing(edges[a]), crossing(edges[b])));
                }
                4 => {
                    let mean = (v[[i, j]] + v[[i + 1, j]] + v[[i + 1, j + 1]] + v[[i, j + 1]]) / 4.0;
                    if (mean < 0.0) == c[0] {
                        segments.push((crossing(edges[0]), crossing(edges[1])));
                        segments.push((crossing(edges[2]), crossing(edges[3])));
                    } else {
                        segments.push((crossing(edges[3]), crossing(edges[0])));
                        segments.push((crossing(edges[1]), crossing(edges[2])));
                    }
                }
                _ => unreachable!("a square has an even number of sign changes"),
            }
        }
    }

    stitch(&segments, &points)
}

fn stitch(segments: &[(EdgeKey, EdgeKey)], points: &BTreeMap<EdgeKey, (f64, f64)>) -> Vec<Polyline> {
    let mut incident: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let degree = |k: &EdgeKey| incident.get(k).map_or(0, Vec::len);
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_key: EdgeKey, used: &mut Vec<bool>| -> (Vec<EdgeKey>, bool) {
        let mut keys = vec![start_key];
        let mut seg = start_seg;
        let mut at = start_key;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            if next == start_key {
                return (keys, true);
            }
            keys.push(next);
            at = next;
            match incident[&at].iter().copied().find(|&s| !used[s]) {
                Some(s) => seg = s,
                None => return (keys, false),
            }
        }
    };

    // open chains start at an endpoint of degree one
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        let start = if degree(&a) == 1 {
            Some(a)
        } else if degree(&b) == 1 {
            Some(b)
        } else {
            None
        };
        if let Some(k) = start {
            let (keys, closed) = walk(s, k, &mut used);
            out.push(Polyline {
                points: keys.iter().map(|k| points[k]).collect(),
                closed,
            });
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (keys, closed) = walk(s, segments[s].0, &mut used);
            out.push(Polyline {
                points: keys.iter().map(|k| points[k]).collect(),
                closed,
            });
        }
    }
    out
}

/// All vertices of a polyline set, in order.
pub fn vertices(lines: &[Polyline]) -> impl Iterator<Item = (f64, f64)> + '_ {
    lines.iter().flat_map(|l| l.points.iter().copied())
}
