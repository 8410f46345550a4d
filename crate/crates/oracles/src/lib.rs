//! Slow, obviously-correct reference computations for the test suites.
//!
//! Everything here works on plain arrays and is written from the textbook
//! definition, not from the library's algorithm, so agreement between the two
//! is meaningful.

/// Projects `p` with the 3x4 matrix `K [R | t]` applied to `(p, 1)`.
/// Returns `(u, v, depth)`, or `None` when the point is not in front.
pub fn project_homogeneous(k: [f64; 4], r: [f64; 9], t: [f64; 3], p: [f64; 3]) -> Option<(f64, f64, f64)> {
    let [fx, fy, cx, cy] = k;
    let kmat = [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]];
    let rt = [
        [r[0], r[1], r[2], t[0]],
        [r[3], r[4], r[5], t[1]],
        [r[6], r[7], r[8], t[2]],
    ];
    let mut pm = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..4 {
            pm[i][j] = (0..3).map(|m| kmat[i][m] * rt[m][j]).sum();
        }
    }
    let x = [p[0], p[1], p[2], 1.0];
    let h: Vec<f64> = pm.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
    if h[2] <= 0.0 {
        return None;
    }
    Some((h[0] / h[2], h[1] / h[2], h[2]))
}

/// Per-pixel coverage and nearest depth, testing every pixel against every
/// projected point `(u, v, depth)`. Points outside `[-0.5, size - 0.5)` are
/// ignored.
pub fn raster(points: &[(f64, f64, f64)], width: usize, height: usize, radius: f64) -> (Vec<bool>, Vec<f64>) {
    let mut covered = vec![false; width * height];
    let mut depth = vec![f64::INFINITY; width * height];
    for y in 0..height {
        for x in 0..width {
            for &(u, v, d) in points {
                let inside = u >= -0.5 && u < width as f64 - 0.5 && v >= -0.5 && v < height as f64 - 0.5;
                let near = (x as f64 - u).powi(2) + (y as f64 - v).powi(2) <= radius * radius;
                if inside && near {
                    covered[y * width + x] = true;
                    depth[y * width + x] = depth[y * width + x].min(d);
                }
            }
        }
    }
    (covered, depth)
}

/// Visible where covered and the scene is invalid (`<= 0` or non-finite) or
/// not nearer than `obj / (1 + eps)`.
pub fn visibility(covered: &[bool], obj_depth: &[f64], scene: &[f32], eps: f64) -> Vec<bool> {
    (0..covered.len())
        .map(|i| {
            let s = scene[i];
            let invalid = !(s.is_finite() && s > 0.0);
            covered[i] && (invalid || obj_depth[i] <= s as f64 * (1.0 + eps))
        })
        .collect()
}

/// Closing by the definition: `x` is kept when every integer disc of radius
/// `r` that contains `x` also meets the set. Everything outside the image is
/// unset.
pub fn closing(set: &[bool], width: usize, height: usize, r: i64) -> Vec<bool> {
    let mut out = set.to_vec();
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height;
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut all_discs_hit = true;
            'centers: for cy in y - r..=y + r {
                for cx in x - r..=x + r {
                    if (cx - x).pow(2) + (cy - y).pow(2) > r * r {
                        continue;
                    }
                    let mut hit = false;
                    for ay in cy - r..=cy + r {
                        for ax in cx - r..=cx + r {
                            if (ax - cx).pow(2) + (ay - cy).pow(2) <= r * r
                                && inside(ax, ay)
                                && set[ay as usize * width + ax as usize]
                            {
                                hit = true;
                            }
                        }
                    }
                    if !hit {
                        all_discs_hit = false;
                        break 'centers;
                    }
                }
            }
            out[y as usize * width + x as usize] = all_discs_hit;
        }
    }
    out
}

/// 8-connected component sizes via union-find; returns the set with
/// components smaller than `min_area` cleared.
pub fn area_filter(set: &[bool], width: usize, height: usize, min_area: usize) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..set.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !set[i] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx as usize >= width || ny as usize >= height {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if set[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }
    let mut size = vec![0usize; set.len()];
    for (i, &on) in set.iter().enumerate() {
        if on {
            let root = find(&mut parent, i);
            size[root] += 1;
        }
    }
    (0..set.len())
        .map(|i| set[i] && size[find(&mut parent, i)] >= min_area)
        .collect()
}

/// Full mask pipeline from projected points and scene depth.
#[allow(clippy::too_many_arguments)]
pub fn mask(
    points: &[(f64, f64, f64)],
    scene: &[f32],
    width: usize,
    height: usize,
    radius: f64,
    eps: f64,
    closing_radius: i64,
    min_area: usize,
) -> Vec<bool> {
    let (covered, depth) = raster(points, width, height, radius);
    let vis = visibility(&covered, &depth, scene, eps);
    let closed = if closing_radius > 0 { closing(&vis, width, height, closing_radius) } else { vis };
    area_filter(&closed, width, height, min_area)
}

/// Indices of the `k` nearest points by full sort on `(squared distance, index)`.
pub fn knn(points: &[[f64; 3]], q: [f64; 3], k: usize, max_dist: Option<f64>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2), i))
        .filter(|(d, _)| max_dist.is_none_or(|m| *d <= m * m))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(_, i)| i).collect()
}

/// `s_k = mean_j cos(c_k, f_j)` with explicit loops.
pub fn mean_cosine(candidates: &[Vec<f64>], frames: &[Vec<f64>]) -> Vec<f64> {
    let mut scores = Vec::new();
    for c in candidates {
        let mut total = 0.0;
        for f in frames {
            let mut dot = 0.0;
            let mut nc = 0.0;
            let mut nf = 0.0;
            for i in 0..c.len() {
                dot += c[i] * f[i];
                nc += c[i] * c[i];
                nf += f[i] * f[i];
            }
            total += dot / (nc.sqrt() * nf.sqrt());
        }
        scores.push(total / frames.len() as f64);
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_projection() {
        let r = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let (u, v, d) = project_homogeneous([100.0, 100.0, 50.0, 40.0], r, [0.0; 3], [0.1, -0.2, 2.0]).unwrap();
        assert_eq!((u, v, d), (55.0, 30.0, 2.0));
        assert!(project_homogeneous([1.0, 1.0, 0.0, 0.0], r, [0.0; 3], [0.0, 0.0, -1.0]).is_none());
    }

    #[test]
    fn closing_fills_notch_and_keeps_border() {
        let w = 7;
        let mut s = vec![false; 49];
        for y in 1..6 {
            for x in 1..6 {
                s[y * w + x] = true;
            }
        }
        s[3 * w + 3] = false;
        let c = closing(&s, w, 7, 1);
        assert!(c[3 * w + 3]);
        assert!(!c[0]);
    }

    #[test]
    fn area_filter_diagonal_component() {
        let s = vec![true, false, false, true, false, false, false, false, true];
        assert_eq!(area_filter(&s, 3, 3, 2), vec![true, false, false, true, false, false, false, false, false]);
    }
}
