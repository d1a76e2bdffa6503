//! Polyline-to-polygon clipping for camera field-of-view footprints.
//!
//! Classification uses the even-odd rule on sub-segment midpoints, so the
//! polygon may be any simple ring. Fully interior segments keep their
//! original vertices verbatim.

use crate::geometry::Point2;

/// Even-odd point-in-polygon test (half-open crossing rule).
pub(crate) fn point_in_polygon(p: Point2, ring: &[Point2]) -> bool {
    let mut odd = false;
    let n = ring.len();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if (a.y <= p.y) != (b.y <= p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if x > p.x {
                odd = !odd;
            }
        }
    }
    odd
}

pub(crate) fn polygon_bbox(ring: &[Point2]) -> (Point2, Point2) {
    let mut min = ring[0];
    let mut max = ring[0];
    for p in ring {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    (min, max)
}

/// Cuts a polyline against a simple polygon, returning the maximal
/// connected pieces that lie inside. Interior vertices are preserved
/// exactly; boundary crossings introduce intersection points.
pub(crate) fn clip_polyline_to_polygon(points: &[Point2], ring: &[Point2]) -> Vec<Vec<Point2>> {
    let mut pieces: Vec<Vec<Point2>> = Vec::new();
    let mut chain: Vec<Point2> = Vec::new();
    let mut cuts: Vec<f64> = Vec::new();

    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        cuts.clear();
        cuts.push(0.0);
        segment_ring_intersections(a, b, ring, &mut cuts);
        cuts.push(1.0);
        cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-12);

        for pair in cuts.windows(2) {
            let (t0, t1) = (pair[0], pair[1]);
            if t1 - t0 < 1e-12 {
                continue;
            }
            let mid = lerp(a, b, 0.5 * (t0 + t1));
            if point_in_polygon(mid, ring) {
                let p0 = lerp(a, b, t0);
                let p1 = lerp(a, b, t1);
                let continues = chain
                    .last()
                    .is_some_and(|last| last.distance(&p0) < 1e-9);
                if continues {
                    push_distinct(&mut chain, p1);
                } else {
                    finish(&mut pieces, &mut chain);
                    chain.push(p0);
                    push_distinct(&mut chain, p1);
                }
            } else {
                finish(&mut pieces, &mut chain);
            }
        }
    }
    finish(&mut pieces, &mut chain);
    pieces
}

fn finish(pieces: &mut Vec<Vec<Point2>>, chain: &mut Vec<Point2>) {
    if chain.len() >= 2 {
        pieces.push(std::mem::take(chain));
    } else {
        chain.clear();
    }
}

fn push_distinct(chain: &mut Vec<Point2>, p: Point2) {
    if chain.last().map_or(true, |last| *last != p) {
        chain.push(p);
    }
}

/// Exact endpoints at the parameter bounds so interior vertices survive
/// clipping bit-for-bit.
fn lerp(a: Point2, b: Point2, t: f64) -> Point2 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }
}

/// Collects the parameters t in (0, 1) where segment a-b crosses a ring
/// edge.
fn segment_ring_intersections(a: Point2, b: Point2, ring: &[Point2], out: &mut Vec<f64>) {
    let r = Point2::new(b.x - a.x, b.y - a.y);
    let n = ring.len();
    for i in 0..n {
        let c = ring[i];
        let d = ring[(i + 1) % n];
        let s = Point2::new(d.x - c.x, d.y - c.y);
        let denom = r.x * s.y - r.y * s.x;
        if denom.abs() < 1e-15 {
            continue; // parallel; midpoint classification handles overlap
        }
        let qp = Point2::new(c.x - a.x, c.y - a.y);
        let t = (qp.x * s.y - qp.y * s.x) / denom;
        let u = (qp.x * r.y - qp.y * r.x) / denom;
        if t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&u) {
            out.push(t);
        }
    }
}
