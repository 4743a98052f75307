#![allow(dead_code)]

use cuberobust::geometry::Parallelopiped;
use cuberobust::nalgebra::Vector2;

/// Closed polygon, vertices in order (either orientation).
pub type Polygon = Vec<[f64; 2]>;

/// Vertices of a two-dimensional parallelopiped, counter-clockwise.
pub fn parallelogram(body: &Parallelopiped) -> Polygon {
    assert_eq!(body.dim(), 2);
    let inv = body.normal_matrix().try_inverse().expect("invertible");
    let (l, u) = (body.lower(), body.upper());
    let corners = [[l[0], l[1]], [u[0], l[1]], [u[0], u[1]], [l[0], u[1]]];
    let mut poly: Polygon = corners
        .iter()
        .map(|c| {
            let x = &inv * Vector2::new(c[0], c[1]);
            [x[0], x[1]]
        })
        .collect();
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Keeps the part of `poly` with `x . a >= t`.
pub fn clip(poly: &Polygon, a: [f64; 2], t: f64) -> Polygon {
    let f = |p: &[f64; 2]| p[0] * a[0] + p[1] * a[1] - t;
    let mut out = Vec::new();
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (fp, fq) = (f(&p), f(&q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let s = fp / (fp - fq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

fn signed_area(poly: &Polygon) -> f64 {
    let mut a = 0.0;
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    a / 2.0
}

/// Exact integrals over a polygon: area, first and second moments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub area: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Moments {
    pub fn of(poly: &Polygon) -> Self {
        let mut m = Moments::default();
        if poly.len() < 3 {
            return m;
        }
        for k in 0..poly.len() {
            let ([x0, y0], [x1, y1]) = (poly[k], poly[(k + 1) % poly.len()]);
            let c = x0 * y1 - x1 * y0;
            m.area += c / 2.0;
            m.x += (x0 + x1) * c / 6.0;
            m.y += (y0 + y1) * c / 6.0;
            m.xx += (x0 * x0 + x0 * x1 + x1 * x1) * c / 12.0;
            m.yy += (y0 * y0 + y0 * y1 + y1 * y1) * c / 12.0;
            m.xy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * c / 24.0;
        }
        if m.area < 0.0 {
            m = Moments { area: -m.area, x: -m.x, y: -m.y, xx: -m.xx, xy: -m.xy, yy: -m.yy };
        }
        m
    }

    pub fn centroid(&self) -> [f64; 2] {
        [self.x / self.area, self.y / self.area]
    }

    /// `∫ x . v` over the polygon.
    pub fn linear(&self, v: [f64; 2]) -> f64 {
        v[0] * self.x + v[1] * self.y
    }

    /// `∫ (x . v)^2` over the polygon.
    pub fn quadratic(&self, v: [f64; 2]) -> f64 {
        v[0] * v[0] * self.xx + 2.0 * v[0] * v[1] * self.xy + v[1] * v[1] * self.yy
    }
}

/// Exact mean and variance of `(sign . x) . v` for `x` uniform on `body`
/// conditioned on `|x . a| > t`, with sign `+1` above the band and `-1`
/// below it.
pub fn exact_truncated_stats(body: &Parallelopiped, a: [f64; 2], t: f64, v: [f64; 2]) -> (f64, f64) {
    let poly = parallelogram(body);
    let up = Moments::of(&clip(&poly, a, t));
    let down = Moments::of(&clip(&poly, [-a[0], -a[1]], t));
    let area = up.area + down.area;
    let mean = (up.linear(v) - down.linear(v)) / area;
    let second = (up.quadratic(v) + down.quadratic(v)) / area;
    (mean, second - mean * mean)
}
