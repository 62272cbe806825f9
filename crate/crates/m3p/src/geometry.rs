//! 2D geometric primitives: convex polygons, point/segment distance queries
//! and segment intersection tests used for collision checking and
//! line-of-sight visibility.

use nalgebra::Vector2;

pub type Point = Vector2<f64>;

/// 2D cross product (z-component of the 3D cross product).
#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed area of a simple polygon (positive for counter-clockwise winding).
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += cross(a, b);
    }
    0.5 * acc
}

/// True if the vertex list forms a convex polygon with counter-clockwise
/// winding and no three consecutive collinear-then-reflex turns.
pub fn is_convex_ccw(vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    if signed_area(vertices) <= 0.0 {
        return false;
    }
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        if cross(b - a, c - b) < 0.0 {
            return false;
        }
    }
    true
}

/// Point-in-convex-polygon test; points exactly on the boundary count as
/// inside.
pub fn point_in_convex(p: Point, vertices: &[Point]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if cross(b - a, p - a) < 0.0 {
            return false;
        }
    }
    true
}

/// Squared distance from a point to a segment.
pub fn point_segment_dist_sq(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return (p - a).norm_squared();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}

/// Distance from a point to the boundary and interior of a convex polygon
/// (zero if the point lies inside).
pub fn point_polygon_dist(p: Point, vertices: &[Point]) -> f64 {
    if point_in_convex(p, vertices) {
        return 0.0;
    }
    let n = vertices.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = point_segment_dist_sq(p, vertices[i], vertices[(i + 1) % n]);
        if d < best {
            best = d;
        }
    }
    best.sqrt()
}

fn orientation(p: Point, q: Point, r: Point) -> i8 {
    let v = cross(q - p, r - q);
    if v.abs() < 1e-12 {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    q.x <= p.x.max(r.x) + 1e-12
        && q.x + 1e-12 >= p.x.min(r.x)
        && q.y <= p.y.max(r.y) + 1e-12
        && q.y + 1e-12 >= p.y.min(r.y)
}

/// Segment-segment intersection (closed segments, touching counts).
pub fn segments_intersect(p1: Point, q1: Point, p2: Point, q2: Point) -> bool {
    let o1 = orientation(p1, q1, p2);
    let o2 = orientation(p1, q1, q2);
    let o3 = orientation(p2, q2, p1);
    let o4 = orientation(p2, q2, q1);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(p1, p2, q1))
        || (o2 == 0 && on_segment(p1, q2, q1))
        || (o3 == 0 && on_segment(p2, p1, q2))
        || (o4 == 0 && on_segment(p2, q1, q2))
}

/// True if segment a-b intersects the convex polygon (boundary or interior).
pub fn segment_intersects_polygon(a: Point, b: Point, vertices: &[Point]) -> bool {
    if point_in_convex(a, vertices) || point_in_convex(b, vertices) {
        return true;
    }
    let n = vertices.len();
    for i in 0..n {
        if segments_intersect(a, b, vertices[i], vertices[(i + 1) % n]) {
            return true;
        }
    }
    false
}
