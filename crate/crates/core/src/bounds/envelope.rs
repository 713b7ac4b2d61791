//! Lower convex envelopes of sampled nonincreasing functions.

/// Points whose lower hull lies below the convex envelope of any
/// nonincreasing function with the given samples on a sorted grid.
///
/// On (e_i, e_{i+1}] such a function is at least g(e_{i+1}), so the step
/// function through (e_i, g(e_{i+1})) is a pointwise lower bound.
pub fn step_lower_points(grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let n = grid.len();
    let mut pts = Vec::with_capacity(n + 1);
    for i in 0..n {
        let v = if i + 1 < n { values[i + 1] } else { values[i] };
        pts.push((grid[i], v));
    }
    pts
}

/// Lower convex hull (Andrew's monotone chain) of points sorted by abscissa.
pub fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if let Some(last) = hull.last() {
            if last.0 == p.0 {
                if p.1 < last.1 {
                    hull.pop();
                } else {
                    continue;
                }
            }
        }
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Piecewise-linear interpolation of a hull; clamps outside its range.
pub fn envelope_at(hull: &[(f64, f64)], x: f64) -> f64 {
    match hull {
        [] => f64::NAN,
        [only] => only.1,
        _ => {
            if x <= hull[0].0 {
                return hull[0].1;
            }
            if x >= hull[hull.len() - 1].0 {
                return hull[hull.len() - 1].1;
            }
            let i = hull.partition_point(|p| p.0 <= x);
            let (a, b) = (hull[i - 1], hull[i]);
            a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
        }
    }
}
