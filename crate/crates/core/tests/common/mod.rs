#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reachsec::linalg::spectral_radius;
use reachsec::lti::{validate_model, GainPair, PlantModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `A Aᵀ + floor·I` with Gaussian `A`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = normal_matrix(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

pub fn random_shapes(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<DMatrix<f64>> {
    (0..k).map(|_| random_pd(rng, n, 0.05)).collect()
}

/// Stable, detectable and stabilizable plant with the given radius bound.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, radius: f64) -> PlantModel {
    loop {
        let f0 = normal_matrix(rng, n, n);
        let rho = spectral_radius(&f0);
        if rho < 1e-3 {
            continue;
        }
        let f = f0 * (radius * rng.random_range(0.5..1.0) / rho);
        let g = normal_matrix(rng, n, m);
        let c = normal_matrix(rng, p, n);
        let r1 = random_pd(rng, n, 0.1) * 0.1;
        let r2 = random_pd(rng, p, 0.1) * 0.1;
        let Ok(model) = PlantModel::new(f, g, c, r1, r2) else { continue };
        if let Ok(v) = validate_model(&model) {
            if v.diagnostics.passed() {
                return v.model;
            }
        }
    }
}

/// Small random gains that keep both loops stable.
pub fn random_gains(rng: &mut ChaCha8Rng, model: &PlantModel, scale: f64) -> GainPair {
    loop {
        let l = normal_matrix(rng, model.n(), model.p()) * scale;
        let k = normal_matrix(rng, model.m(), model.n()) * scale;
        let g = GainPair::new(l, k);
        if let Ok(s) = g.stability(model) {
            if s.observer_radius < 0.95 && s.controller_radius < 0.95 {
                return g;
            }
        }
    }
}

pub fn unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Vertices (counter-clockwise) of the Minkowski sum of polygons inscribed in
/// each centered ellipse, `per_member` vertices each, by merging edge vectors
/// in angular order.
pub fn minkowski_polygon(shapes: &[DMatrix<f64>], per_member: usize) -> Vec<[f64; 2]> {
    let mut edges: Vec<(f64, [f64; 2])> = Vec::with_capacity(shapes.len() * per_member);
    let mut start = [0.0, 0.0];
    for q in shapes {
        let l = q.clone().cholesky().expect("positive definite").l();
        let verts: Vec<[f64; 2]> = (0..per_member)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / per_member as f64;
                let (c, s) = (t.cos(), t.sin());
                [l[(0, 0)] * c + l[(0, 1)] * s, l[(1, 0)] * c + l[(1, 1)] * s]
            })
            .collect();
        // Lowest vertex (ties broken by x) starts the merged walk.
        let low = (0..per_member)
            .min_by(|&a, &b| verts[a][1].total_cmp(&verts[b][1]).then(verts[a][0].total_cmp(&verts[b][0])))
            .unwrap();
        start[0] += verts[low][0];
        start[1] += verts[low][1];
        for j in 0..per_member {
            let a = verts[j];
            let b = verts[(j + 1) % per_member];
            let e = [b[0] - a[0], b[1] - a[1]];
            let mut ang = e[1].atan2(e[0]);
            if ang < 0.0 {
                ang += std::f64::consts::TAU;
            }
            edges.push((ang, e));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(edges.len());
    let mut p = start;
    for (_, e) in edges {
        out.push(p);
        p = [p[0] + e[0], p[1] + e[1]];
    }
    out
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (cx * cx + cy * cy).sqrt()
}

/// Distance from `p` to the filled convex polygon `poly` (counter-clockwise).
pub fn distance_to_convex(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let inside = (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    });
    if inside {
        return 0.0;
    }
    (0..n).map(|i| segment_distance(p, poly[i], poly[(i + 1) % n])).fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance of two filled convex polygons; the directed distance is
/// convex along edges, so vertices suffice.
pub fn hausdorff_convex(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let ab = a.iter().map(|&p| distance_to_convex(p, b)).fold(0.0, f64::max);
    let ba = b.iter().map(|&p| distance_to_convex(p, a)).fold(0.0, f64::max);
    ab.max(ba)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
