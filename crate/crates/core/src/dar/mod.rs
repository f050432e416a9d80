//! Difference-algebraic plant models and their exact polytopic embedding.
//!
//! A model is
//!
//! ```text
//! x+ = A1(x) x + A2(x) pi + A3(x) u
//! 0  = Ω1(x) x + Ω2(x) pi + Ω3(x) u
//! ```
//!
//! where every matrix is affine in a set of scheduling variables
//! `z_j(x) = c_jᵀ x + d_j` with known bounds `[z_j⁰, z_j¹]` over the validity
//! polytope `{x : b_jᵀ x ≤ 1}`.
//!
//! Vertices of the embedding are ordered lexicographically on the multi-index
//! `(i_1, …, i_r)` with `i_1` the most significant bit, so vertex `k` has
//! `i_j = (k >> (r - 1 - j)) & 1` (0-based `j`). Bit 0 selects the lower bound.

mod benchmark;
mod file;

pub use benchmark::cubic_benchmark;
pub use file::ModelFile;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Upper bound on the condition number of `Ω2(x)` accepted as invertible.
pub const MAX_OMEGA2_CONDITION: f64 = 1e8;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingVariable {
    pub coeffs: DVector<f64>,
    pub offset: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SchedulingVariable {
    pub fn new(coeffs: DVector<f64>, offset: f64, lower: f64, upper: f64) -> Self {
        Self {
            coeffs,
            offset,
            lower,
            upper,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.coeffs.dot(x) + self.offset
    }

    pub fn bound(&self, bit: u8) -> f64 {
        if bit == 0 {
            self.lower
        } else {
            self.upper
        }
    }

    /// `(w⁰, w¹)` for a scheduling value.
    fn membership(&self, z: f64) -> (f64, f64) {
        let w0 = (self.upper - z) / (self.upper - self.lower);
        (w0, 1.0 - w0)
    }
}

/// `M(z) = M₀ + Σ_j z_j M_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    pub base: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMatrix {
    pub fn constant(base: DMatrix<f64>) -> Self {
        Self {
            base,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, j: usize, coeff: DMatrix<f64>) -> Self {
        self.terms.push((j, coeff));
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    /// Evaluate at explicit scheduling values.
    pub fn at(&self, z: &[f64]) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (j, coeff) in &self.terms {
            m += coeff * z[*j];
        }
        m
    }
}

/// One tuple of plant matrices, either a vertex or an evaluation at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMatrices {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub omega1: DMatrix<f64>,
    pub omega2: DMatrix<f64>,
    pub omega3: DMatrix<f64>,
}

impl PlantMatrices {
    fn parts(&self) -> [&DMatrix<f64>; 6] {
        [
            &self.a1,
            &self.a2,
            &self.a3,
            &self.omega1,
            &self.omega2,
            &self.omega3,
        ]
    }

    /// Largest Frobenius norm across the six matrices.
    pub fn max_norm(&self) -> f64 {
        self.parts().iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Largest absolute entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &PlantMatrices) -> f64 {
        self.parts()
            .iter()
            .zip(other.parts())
            .map(|(a, b)| (*a - b).amax())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarModel {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub a1: AffineMatrix,
    pub a2: AffineMatrix,
    pub a3: AffineMatrix,
    pub omega1: AffineMatrix,
    pub omega2: AffineMatrix,
    pub omega3: AffineMatrix,
    pub scheduling: Vec<SchedulingVariable>,
    /// Half-planes `b_jᵀ x ≤ 1` of the validity polytope.
    pub domain: Vec<DVector<f64>>,
}

impl DarModel {
    /// Number of scheduling variables `r`.
    pub fn r(&self) -> usize {
        self.scheduling.len()
    }

    pub fn vertex_count(&self) -> usize {
        1 << self.r()
    }

    /// Structural and numerical validation. Run by every constructor that
    /// reads external input.
    pub fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.n, self.m, self.p);
        let expected = [
            ("A1", &self.a1, (n, n)),
            ("A2", &self.a2, (n, p)),
            ("A3", &self.a3, (n, m)),
            ("Omega1", &self.omega1, (p, n)),
            ("Omega2", &self.omega2, (p, p)),
            ("Omega3", &self.omega3, (p, m)),
        ];
        for (name, mat, shape) in expected {
            if mat.shape() != shape {
                return Err(Error::InvalidModel(format!(
                    "{name} base is {:?}, expected {shape:?}",
                    mat.shape()
                )));
            }
            for (j, coeff) in &mat.terms {
                if coeff.shape() != shape {
                    return Err(Error::InvalidModel(format!(
                        "{name} term j={j} is {:?}, expected {shape:?}",
                        coeff.shape()
                    )));
                }
                if *j >= self.r() {
                    return Err(Error::InvalidModel(format!(
                        "{name} term references scheduling variable {j}, only {} declared",
                        self.r()
                    )));
                }
            }
        }
        for (j, s) in self.scheduling.iter().enumerate() {
            if s.coeffs.len() != n {
                return Err(Error::InvalidModel(format!(
                    "scheduling[{j}].c has length {}, expected {n}",
                    s.coeffs.len()
                )));
            }
            if !(s.lower < s.upper) {
                return Err(Error::InvalidModel(format!(
                    "scheduling[{j}] has degenerate range [{}, {}]",
                    s.lower, s.upper
                )));
            }
        }
        if self.domain.is_empty() {
            return Err(Error::InvalidModel("domain_b is empty".into()));
        }
        if let Some(k) = self.domain.iter().position(|b| b.len() != n) {
            return Err(Error::InvalidModel(format!("domain_b[{k}] has wrong length")));
        }

        let vertices = self.domain_vertices();
        if vertices.is_empty() {
            return Err(Error::InvalidModel(
                "validity polytope has no vertices (unbounded or empty)".into(),
            ));
        }
        for (j, s) in self.scheduling.iter().enumerate() {
            for v in &vertices {
                let z = s.value(v);
                let slack = 1e-9 * (1.0 + s.lower.abs().max(s.upper.abs()));
                if z < s.lower - slack || z > s.upper + slack {
                    return Err(Error::InvalidModel(format!(
                        "scheduling[{j}] bounds [{}, {}] do not cover domain vertex {:?} (z = {z})",
                        s.lower,
                        s.upper,
                        v.as_slice()
                    )));
                }
            }
        }
        self.check_omega2_invertible(1000, 0)?;
        Ok(())
    }

    /// Checks `cond(Ω2) < 1e8` at all bound vertices and at `samples` seeded
    /// random points of the domain. The random sweep is a pragmatic guard and
    /// is not exhaustive.
    pub fn check_omega2_invertible(&self, samples: usize, seed: u64) -> Result<()> {
        for k in 0..self.vertex_count() {
            let z = self.vertex_scheduling(k);
            let cond = condition_number(&self.omega2.at(&z));
            if !(cond < MAX_OMEGA2_CONDITION) {
                return Err(Error::InvalidModel(format!(
                    "Omega2 is singular at scheduling vertex {k} (condition {cond:.3e})"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let Some(x) = self.sample_domain(&mut rng) else {
                break;
            };
            let cond = condition_number(&self.omega2.at(&self.scheduling_values(&x)));
            if !(cond < MAX_OMEGA2_CONDITION) {
                return Err(Error::InvalidModel(format!(
                    "Omega2 is singular at x = {:?} (condition {cond:.3e})",
                    x.as_slice()
                )));
            }
        }
        Ok(())
    }

    pub fn scheduling_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.scheduling.iter().map(|s| s.value(x)).collect()
    }

    /// Scheduling values of vertex `k` (each at the bound picked by its bit).
    pub fn vertex_scheduling(&self, k: usize) -> Vec<f64> {
        multi_index(k, self.r())
            .iter()
            .zip(&self.scheduling)
            .map(|(&bit, s)| s.bound(bit))
            .collect()
    }

    pub fn matrices_at_scheduling(&self, z: &[f64]) -> PlantMatrices {
        PlantMatrices {
            a1: self.a1.at(z),
            a2: self.a2.at(z),
            a3: self.a3.at(z),
            omega1: self.omega1.at(z),
            omega2: self.omega2.at(z),
            omega3: self.omega3.at(z),
        }
    }

    pub fn matrices_at(&self, x: &DVector<f64>) -> PlantMatrices {
        self.matrices_at_scheduling(&self.scheduling_values(x))
    }

    /// Convex weights `α_i(x)` in lexicographic vertex order. Never clamps.
    pub fn weights(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let mut memberships = Vec::with_capacity(self.r());
        for (index, s) in self.scheduling.iter().enumerate() {
            let z = s.value(x);
            let slack = 1e-12 * (s.upper - s.lower);
            if z < s.lower - slack || z > s.upper + slack {
                return Err(Error::DomainViolation {
                    index,
                    value: z,
                    lower: s.lower,
                    upper: s.upper,
                });
            }
            memberships.push(s.membership(z));
        }
        Ok(product_weights(&memberships))
    }

    /// Weights with every scheduling value clamped into its range. The flag
    /// reports whether any clamping happened.
    pub fn weights_clamped(&self, x: &DVector<f64>) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let memberships: Vec<(f64, f64)> = self
            .scheduling
            .iter()
            .map(|s| {
                let z = s.value(x);
                let zc = z.clamp(s.lower, s.upper);
                clamped |= zc != z;
                s.membership(zc)
            })
            .collect();
        (product_weights(&memberships), clamped)
    }

    pub fn vertexify(&self) -> PolytopicModel {
        let vertices = (0..self.vertex_count())
            .map(|k| self.matrices_at_scheduling(&self.vertex_scheduling(k)))
            .collect();
        PolytopicModel {
            r: self.r(),
            vertices,
        }
    }

    /// `π = −Ω2(x)⁻¹ [Ω1(x) x + Ω3(x) u]`.
    pub fn eval_pi(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let z = self.scheduling_values(x);
        self.eval_pi_with(&self.matrices_at_scheduling(&z), x, u)
    }

    pub(crate) fn eval_pi_with(
        &self,
        mats: &PlantMatrices,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if self.p == 0 {
            return Ok(DVector::zeros(0));
        }
        let rhs = -(&mats.omega1 * x + &mats.omega3 * u);
        solve_checked(&mats.omega2, &rhs)
    }

    /// One step of the plant.
    pub fn step_dar(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mats = self.matrices_at(x);
        let pi = self.eval_pi_with(&mats, x, u)?;
        Ok(&mats.a1 * x + &mats.a2 * &pi + &mats.a3 * u)
    }

    /// `b_jᵀ x ≤ 1` for every half-plane; the boundary counts as inside.
    pub fn in_domain(&self, x: &DVector<f64>) -> bool {
        self.domain.iter().all(|b| b.dot(x) <= 1.0)
    }

    /// Vertices of the validity polytope by enumerating every `n`-subset of
    /// half-planes. Intended for the small state dimensions this tool targets.
    pub fn domain_vertices(&self) -> Vec<DVector<f64>> {
        let n = self.n;
        let h = self.domain.len();
        let mut out: Vec<DVector<f64>> = Vec::new();
        if n == 0 || h < n {
            return out;
        }
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            let a = DMatrix::from_fn(n, n, |i, j| self.domain[subset[i]][j]);
            if let Some(x) = a.lu().solve(&DVector::from_element(n, 1.0)) {
                let feasible = x.iter().all(|v| v.is_finite())
                    && self.domain.iter().all(|b| b.dot(&x) <= 1.0 + 1e-9);
                if feasible && !out.iter().any(|v| (v - &x).amax() < 1e-9) {
                    out.push(x);
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if subset[i] < h - n + i {
                    subset[i] += 1;
                    for k in i + 1..n {
                        subset[k] = subset[k - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Uniform sample of the validity polytope by rejection from its bounding
    /// box. `None` if the polytope has no vertices.
    pub fn sample_domain<R: Rng>(&self, rng: &mut R) -> Option<DVector<f64>> {
        let vertices = self.domain_vertices();
        let first = vertices.first()?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for v in &vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        for _ in 0..100_000 {
            let x = DVector::from_fn(self.n, |i, _| {
                if hi[i] > lo[i] {
                    rng.random_range(lo[i]..=hi[i])
                } else {
                    lo[i]
                }
            });
            if self.in_domain(&x) {
                return Some(x);
            }
        }
        None
    }

    /// Largest absolute scheduling bound, used as the nominal box size `x̄`.
    pub fn box_size(&self) -> f64 {
        self.scheduling
            .iter()
            .map(|s| s.lower.abs().max(s.upper.abs()))
            .fold(0.0, f64::max)
    }

    /// Same model with scheduling bounds and validity polytope scaled so the
    /// box size becomes `xbar`. Exact for scheduling variables without
    /// offsets, which is the usual `z_j = x_j` situation.
    pub fn with_box_size(&self, xbar: f64) -> Result<DarModel> {
        let current = self.box_size();
        if !(xbar > 0.0) || !(current > 0.0) {
            return Err(Error::InvalidModel(format!(
                "cannot rescale box of size {current} to {xbar}"
            )));
        }
        let s = xbar / current;
        let mut out = self.clone();
        for v in &mut out.scheduling {
            v.lower *= s;
            v.upper *= s;
        }
        for b in &mut out.domain {
            *b /= s;
        }
        out.validate()?;
        Ok(out)
    }
}

/// Solve `A y = b`, refusing matrices with condition ≥ 1e8.
pub(crate) fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = condition_number(a);
    if !(condition < MAX_OMEGA2_CONDITION) {
        return Err(Error::AlgebraicLoop { condition });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::AlgebraicLoop { condition })
}

/// Bits of vertex `k` as the multi-index `(i_1, …, i_r)`.
pub fn multi_index(k: usize, r: usize) -> Vec<u8> {
    (0..r).map(|j| ((k >> (r - 1 - j)) & 1) as u8).collect()
}

/// Inverse of [`multi_index`].
pub fn vertex_of(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

fn product_weights(memberships: &[(f64, f64)]) -> Vec<f64> {
    let r = memberships.len();
    (0..1usize << r)
        .map(|k| {
            multi_index(k, r)
                .iter()
                .zip(memberships)
                .map(|(&bit, &(w0, w1))| if bit == 0 { w0 } else { w1 })
                .product()
        })
        .collect()
}

/// The `2^r` vertex systems of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopicModel {
    pub r: usize,
    pub vertices: Vec<PlantMatrices>,
}

impl PolytopicModel {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `Σ α_i · vertex_i`.
    pub fn reconstruct(&self, alpha: &[f64]) -> Result<PlantMatrices> {
        check_simplex(alpha, self.len())?;
        let first = &self.vertices[0];
        let mut acc = PlantMatrices {
            a1: first.a1.scale(0.0),
            a2: first.a2.scale(0.0),
            a3: first.a3.scale(0.0),
            omega1: first.omega1.scale(0.0),
            omega2: first.omega2.scale(0.0),
            omega3: first.omega3.scale(0.0),
        };
        for (a, v) in alpha.iter().zip(&self.vertices) {
            acc.a1 += &v.a1 * *a;
            acc.a2 += &v.a2 * *a;
            acc.a3 += &v.a3 * *a;
            acc.omega1 += &v.omega1 * *a;
            acc.omega2 += &v.omega2 * *a;
            acc.omega3 += &v.omega3 * *a;
        }
        Ok(acc)
    }
}

pub(crate) fn check_simplex(alpha: &[f64], len: usize) -> Result<()> {
    let sum: f64 = alpha.iter().sum();
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    if alpha.len() != len || (sum - 1.0).abs() > SIMPLEX_TOL || min < -SIMPLEX_TOL {
        return Err(Error::OffSimplex { sum, min });
    }
    Ok(())
}
