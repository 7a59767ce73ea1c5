//! Reference quadrature rules on the unit interval and the unit triangle.

use std::sync::OnceLock;

use crate::mesh::Point;

/// Gauss–Legendre nodes and weights on `[0, 1]`; exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0, "Gauss rule needs at least one point");
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of Gauss points on a segment needed to integrate polynomials of `degree` exactly.
pub fn gauss_points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are in reference coordinates and weights sum to 1/2.
pub fn triangle_rule(degree: usize) -> &'static [(Point, f64)] {
    const MAX_CACHED: usize = 16;
    static CACHE: OnceLock<Vec<Vec<(Point, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=MAX_CACHED).map(build_triangle_rule).collect());
    &cache[degree.min(MAX_CACHED)]
}

fn symmetric_orbit(a: f64, w: f64, rule: &mut Vec<(Point, f64)>) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a], [b, a], [a, b]] {
        rule.push((p, 0.5 * w));
    }
}

fn build_triangle_rule(degree: usize) -> Vec<(Point, f64)> {
    let mut rule = Vec::new();
    match degree {
        0 | 1 => rule.push(([1.0 / 3.0, 1.0 / 3.0], 0.5)),
        2 => symmetric_orbit(1.0 / 6.0, 1.0 / 3.0, &mut rule),
        3 | 4 => {
            // Dunavant degree 4.
            symmetric_orbit(0.445_948_490_915_965, 0.223_381_589_678_011, &mut rule);
            symmetric_orbit(0.091_576_213_509_771, 0.109_951_743_655_322, &mut rule);
        }
        5 => {
            // Dunavant degree 5.
            rule.push(([1.0 / 3.0, 1.0 / 3.0], 0.5 * 0.225));
            let s15 = 15f64.sqrt();
            symmetric_orbit((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0, &mut rule);
            symmetric_orbit((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0, &mut rule);
        }
        _ => {
            // Collapsed (Duffy) Gauss product rule; the Jacobian (1 - u)
            // raises the degree in u by one.
            let n = gauss_points_for_degree(degree + 1);
            let g = gauss_legendre(n);
            for &(u, wu) in &g {
                for &(v, wv) in &g {
                    rule.push(([u, v * (1.0 - u)], wu * wv * (1.0 - u)));
                }
            }
        }
    }
    rule
}

/// Maps a reference point onto the triangle `tri`.
pub fn map_to_triangle(tri: &[Point; 3], xi: Point) -> Point {
    let [a, b, c] = tri;
    [
        a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
        a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
    ]
}
