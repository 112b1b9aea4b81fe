//! Ellipsoids `𝓔(Q, c) = {x : (x − c)ᵀ Q⁻¹ (x − c) ≤ 1}` and their calculus
//! under linear maps and geometric (Minkowski) sums.
//!
//! Sums are always over centered ellipsoids given by their shape matrices.
//! Members whose trace is negligible relative to the largest member
//! (`tr Qᵢ < DEGENERATE_TRACE · maxⱼ tr Qⱼ`) are dropped from every sum: they
//! add nothing to the set and the pairwise weights are singular for them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, symmetrize};

/// Relative trace below which a member of a sum is treated as the zero ellipsoid.
pub const DEGENERATE_TRACE: f64 = 1e-14;
const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
/// Slack on the quadratic form in membership tests.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ellipsoid {
    shape: DMatrix<f64>,
    center: DVector<f64>,
}

impl Ellipsoid {
    pub fn new(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let n = shape.nrows();
        if shape.ncols() != n {
            return Err(Error::dims("ellipsoid shape", "square", format!("{}x{}", n, shape.ncols())));
        }
        if center.len() != n {
            return Err(Error::dims("ellipsoid center", n, center.len()));
        }
        let scale = shape.norm();
        if (&shape - shape.transpose()).norm() > SYMMETRY_TOL * scale.max(1.0) {
            return Err(Error::InvalidArgument("ellipsoid shape is not symmetric".into()));
        }
        let shape = symmetrize(&shape);
        let trace = shape.trace();
        let min_eig = min_sym_eigenvalue(&shape);
        if min_eig < -PSD_TOL * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd { what: "ellipsoid shape".into(), min_eigenvalue: min_eig, trace });
        }
        Ok(Self { shape, center })
    }

    pub fn centered(shape: DMatrix<f64>) -> Result<Self> {
        let n = shape.nrows();
        Self::new(shape, DVector::zeros(n))
    }

    /// Internal constructor for results of operations that preserve PSD-ness.
    pub(crate) fn from_parts(shape: DMatrix<f64>, center: DVector<f64>) -> Self {
        Self { shape: symmetrize(&shape), center }
    }

    pub fn zero(n: usize) -> Self {
        Self { shape: DMatrix::zeros(n, n), center: DVector::zeros(n) }
    }

    pub fn unit_ball(n: usize) -> Self {
        Self { shape: DMatrix::identity(n, n), center: DVector::zeros(n) }
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.shape.trace()
    }

    /// `(x − c)ᵀ Q⁺ (x − c)`, or `+∞` when `x − c` leaves the range of `Q`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        self.membership().quadratic_form(x)
    }

    /// Precomputed eigendecomposition for repeated membership queries.
    pub fn membership(&self) -> Membership {
        let eig = SymmetricEigen::new(self.shape.clone());
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        Membership { eigenvectors: eig.eigenvectors, eigenvalues: eig.eigenvalues, lmax, center: self.center.clone() }
    }
}

/// Quadratic-form evaluator for a fixed ellipsoid.
#[derive(Debug, Clone)]
pub struct Membership {
    eigenvectors: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    lmax: f64,
    center: DVector<f64>,
}

impl Membership {
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        let cut = 1e-12 * self.lmax;
        let mut q = 0.0;
        let mut off_range = 0.0;
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            let proj = self.eigenvectors.column(i).dot(&d);
            if lam > cut {
                q += proj * proj / lam;
            } else {
                off_range += proj * proj;
            }
        }
        let tol = 1e-9 * (self.lmax.sqrt() + d.norm()).max(f64::MIN_POSITIVE);
        if off_range.sqrt() > tol {
            f64::INFINITY
        } else {
            q
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.quadratic_form(x) <= 1.0 + MEMBERSHIP_SLACK
    }
}

/// Unit-length direction for support-function evaluations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportDirection(DVector<f64>);

impl SupportDirection {
    /// Normalizes `v`; fails for a zero or non-finite vector.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument("support direction must be a nonzero finite vector".into()));
        }
        Ok(Self(v / norm))
    }

    pub fn from_angle(theta: f64) -> Self {
        Self(DVector::from_vec(vec![theta.cos(), theta.sin()]))
    }

    pub fn axis(n: usize, i: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        Self(v)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Positive pair weights `p_ij`, keyed by zero-based `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairWeights {
    p: BTreeMap<(usize, usize), f64>,
}

impl PairWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= j {
            return Err(Error::InvalidArgument(format!("pair weight key ({i}, {j}) must satisfy i < j")));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!("pair weight p[{i},{j}] = {value} is not positive")));
        }
        self.p.insert((i, j), value);
        Ok(())
    }

    /// Weights for all pairs of `k` members from `f(i, j)`.
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut w = Self::new();
        for i in 0..k {
            for j in i + 1..k {
                w.insert(i, j, f(i, j))?;
            }
        }
        Ok(w)
    }

    /// The trace-minimizing weights `p*_ij = √(tr Qⱼ / tr Qᵢ)`.
    pub fn min_trace(shapes: &[DMatrix<f64>]) -> Result<Self> {
        Self::from_fn(shapes.len(), |i, j| (shapes[j].trace() / shapes[i].trace()).sqrt())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.p.get(&(i, j)).copied()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

fn check_shapes(shapes: &[DMatrix<f64>]) -> Result<usize> {
    let n = shapes.first().map(|q| q.nrows()).ok_or_else(|| Error::InvalidArgument("empty list of shapes".into()))?;
    for (i, q) in shapes.iter().enumerate() {
        if q.shape() != (n, n) {
            return Err(Error::dims(format!("shape #{i}"), format!("{n}x{n}"), format!("{}x{}", q.nrows(), q.ncols())));
        }
    }
    Ok(n)
}

/// Members that participate in a sum: trace at least `DEGENERATE_TRACE` times the largest.
pub fn retained_members(shapes: &[DMatrix<f64>]) -> Vec<usize> {
    let max_tr = shapes.iter().map(|q| q.trace()).fold(0.0, f64::max);
    if max_tr <= 0.0 {
        return Vec::new();
    }
    (0..shapes.len()).filter(|&i| shapes[i].trace() >= DEGENERATE_TRACE * max_tr).collect()
}

fn quad(q: &DMatrix<f64>, ell: &DVector<f64>) -> f64 {
    ell.dot(&(q * ell))
}

/// Support function `ρ(ℓ | 𝓔(Q, c)) = ⟨ℓ, Qℓ⟩^{1/2} + ⟨ℓ, c⟩`.
pub fn support(e: &Ellipsoid, ell: &SupportDirection) -> f64 {
    let l = ell.as_vector();
    quad(&e.shape, l).max(0.0).sqrt() + l.dot(&e.center)
}

/// Support function of the geometric sum of centered ellipsoids, `Σᵢ ⟨ℓ, Qᵢℓ⟩^{1/2}`.
pub fn sum_support(shapes: &[DMatrix<f64>], ell: &SupportDirection) -> f64 {
    shapes.iter().map(|q| quad(q, ell.as_vector()).max(0.0).sqrt()).sum()
}

/// Image of `e` under `x ↦ a x`.
pub fn linear_map(e: &Ellipsoid, a: &DMatrix<f64>) -> Result<Ellipsoid> {
    if a.ncols() != e.dim() {
        return Err(Error::dims("linear map columns", e.dim(), a.ncols()));
    }
    Ok(Ellipsoid::from_parts(a * &e.shape * a.transpose(), a * &e.center))
}

/// Point of the exact geometric sum boundary with outward normal `ℓ`:
/// `x = Σᵢ ⟨ℓ, Qᵢℓ⟩^{-1/2} Qᵢ ℓ`.
pub fn minkowski_boundary_point(shapes: &[DMatrix<f64>], ell: &SupportDirection) -> Result<DVector<f64>> {
    let n = check_shapes(shapes)?;
    if ell.dim() != n {
        return Err(Error::dims("support direction", n, ell.dim()));
    }
    let l = ell.as_vector();
    let mut x = DVector::zeros(n);
    for i in retained_members(shapes) {
        let ql = &shapes[i] * l;
        let s = l.dot(&ql);
        // Flat along ℓ: the member's tangent point is its center.
        if s <= 1e-300 {
            continue;
        }
        x += ql / s.sqrt();
    }
    Ok(x)
}

/// Outer ellipsoid `Q = Σ Qᵢ + Σ_{i<j} (p_ij Qᵢ + p_ij⁻¹ Qⱼ)` of the geometric sum.
pub fn outer_bound(shapes: &[DMatrix<f64>], weights: &PairWeights) -> Result<Ellipsoid> {
    let n = check_shapes(shapes)?;
    let k = shapes.len();
    if let Some((&(i, j), _)) = weights.p.iter().find(|(&(_, j), _)| j >= k) {
        return Err(Error::InvalidArgument(format!("pair weight ({i}, {j}) is out of range for {k} shapes")));
    }
    let mut q = DMatrix::zeros(n, n);
    for s in shapes {
        q += s;
    }
    for i in 0..k {
        for j in i + 1..k {
            let p = weights
                .get(i, j)
                .ok_or_else(|| Error::InvalidArgument(format!("missing pair weight p[{i},{j}]")))?;
            q += &shapes[i] * p + &shapes[j] / p;
        }
    }
    Ok(Ellipsoid::from_parts(q, DVector::zeros(n)))
}

/// Minimum-trace outer ellipsoid `Q* = (Σ √tr Qᵢ)(Σ Qᵢ / √tr Qᵢ)`.
pub fn min_trace_sum(shapes: &[DMatrix<f64>]) -> Result<Ellipsoid> {
    let n = check_shapes(shapes)?;
    let kept = retained_members(shapes);
    if kept.is_empty() {
        return Ok(Ellipsoid::zero(n));
    }
    let mut root_sum = 0.0;
    let mut normalized = DMatrix::zeros(n, n);
    for &i in &kept {
        let r = shapes[i].trace().sqrt();
        root_sum += r;
        normalized += &shapes[i] / r;
    }
    Ok(Ellipsoid::from_parts(normalized * root_sum, DVector::zeros(n)))
}

/// The classic bound tangent to the sum in direction `ℓ`:
/// `Q = (Σ ⟨ℓ,Qᵢℓ⟩^{1/2})(Σ ⟨ℓ,Qᵢℓ⟩^{-1/2} Qᵢ)`.
pub fn directional_sum(shapes: &[DMatrix<f64>], ell: &SupportDirection) -> Result<Ellipsoid> {
    let n = check_shapes(shapes)?;
    if ell.dim() != n {
        return Err(Error::dims("support direction", n, ell.dim()));
    }
    let max_tr = shapes.iter().map(|q| q.trace()).fold(0.0, f64::max);
    let l = ell.as_vector();
    let mut root_sum = 0.0;
    let mut normalized = DMatrix::zeros(n, n);
    for i in retained_members(shapes) {
        let s = quad(&shapes[i], l);
        if s <= DEGENERATE_TRACE * max_tr {
            continue;
        }
        let r = s.sqrt();
        root_sum += r;
        normalized += &shapes[i] / r;
    }
    Ok(Ellipsoid::from_parts(normalized * root_sum, DVector::zeros(n)))
}

/// Quadratic-form membership with slack `1e-9`.
pub fn contains_point(e: &Ellipsoid, x: &DVector<f64>) -> Result<bool> {
    if x.len() != e.dim() {
        return Err(Error::dims("point", e.dim(), x.len()));
    }
    Ok(e.quadratic_form(x) <= 1.0 + MEMBERSHIP_SLACK)
}

/// `count` unit directions on the circle, `θ = 2π i / count`.
pub fn angular_grid(count: usize) -> Vec<SupportDirection> {
    (0..count)
        .map(|i| SupportDirection::from_angle(std::f64::consts::TAU * i as f64 / count as f64))
        .collect()
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic low-discrepancy unit directions in `ℝⁿ`.
///
/// For `n = 2` this is the uniform angular grid. Otherwise a randomly shifted
/// Halton sequence (shift drawn from `seed`) is pushed through the inverse
/// normal CDF and normalized, which spreads points evenly over the sphere.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Result<Vec<SupportDirection>> {
    if n == 0 || n > PRIMES.len() {
        return Err(Error::InvalidArgument(format!("direction sets support 1..={} dimensions, got {n}", PRIMES.len())));
    }
    if n == 2 {
        return Ok(angular_grid(count));
    }
    if n == 1 {
        return Ok((0..count).map(|i| SupportDirection(DVector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 }))).collect());
    }
    let normal = Normal::standard();
    let mut state = seed;
    let shift: Vec<f64> = (0..n).map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64).collect();
    let mut out = Vec::with_capacity(count);
    let mut idx = 1u64;
    while out.len() < count {
        let v = DVector::from_iterator(
            n,
            (0..n).map(|d| {
                let u = (radical_inverse(idx, PRIMES[d]) + shift[d]).fract();
                normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
            }),
        );
        idx += 1;
        if let Ok(dir) = SupportDirection::new(v) {
            out.push(dir);
        }
    }
    Ok(out)
}
