use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::EtcDesign;
use crate::error::{Error, Result};
use crate::linalg::quad;

/// Ellipsoidal estimate `{x : xᵀ P x ≤ level}` with `level = 1 − η₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoaEllipse {
    pub p: DMatrix<f64>,
    pub level: f64,
    /// `Lᵀ` of the Cholesky factor `P = L Lᵀ`, so `x = L⁻ᵀ v` maps the
    /// sphere `|v|² = level` onto the boundary.
    factor_t_inv: DMatrix<f64>,
}

pub fn roa_ellipse(design: &EtcDesign, eta0: f64) -> Result<RoaEllipse> {
    if eta0 >= 1.0 {
        return Err(Error::EmptyRegion(eta0));
    }
    if !(eta0 >= 0.0) {
        return Err(Error::Config(format!("eta0 must be non-negative, got {eta0}")));
    }
    let chol = design
        .p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("P is not positive definite".into()))?;
    let lt_inv = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Config("P factor is singular".into()))?;
    Ok(RoaEllipse {
        p: design.p.clone(),
        level: 1.0 - eta0,
        factor_t_inv: lt_inv,
    })
}

impl RoaEllipse {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `V(x) = xᵀ P x`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        quad(x, &self.p, x)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.value(x) <= self.level * (1.0 + 1e-12)
    }

    fn along_direction(&self, dir: &DVector<f64>, radius: f64) -> DVector<f64> {
        &self.factor_t_inv * (dir / dir.norm() * (radius * self.level.sqrt()))
    }

    /// `count` points with `xᵀPx = level`. In 2-D the angles are evenly
    /// spaced (deterministic); in higher dimension directions are normalized
    /// Gaussian draws from `rng`.
    pub fn boundary_points<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<DVector<f64>> {
        let n = self.dim();
        (0..count)
            .map(|k| {
                let dir = if n == 2 {
                    let t = std::f64::consts::TAU * k as f64 / count as f64;
                    DVector::from_vec(vec![t.cos(), t.sin()])
                } else {
                    random_direction(n, rng)
                };
                self.along_direction(&dir, 1.0)
            })
            .collect()
    }

    /// A point drawn with a uniform direction (uniform angle in 2-D) and a
    /// radius factor `√U`, so `V(x)/level` is uniform on `[0, 1]`.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.dim();
        let dir = if n == 2 {
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            DVector::from_vec(vec![t.cos(), t.sin()])
        } else {
            random_direction(n, rng)
        };
        let u: f64 = rng.random();
        self.along_direction(&dir, u.sqrt())
    }
}

fn random_direction<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-12 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design_with_p(p: DMatrix<f64>) -> EtcDesign {
        let n = p.nrows();
        EtcDesign {
            mode: Mode::Op2,
            k: vec![DMatrix::zeros(1, n)],
            l: vec![DMatrix::zeros(1, 1)],
            qx: DMatrix::identity(n, n),
            qe: DMatrix::identity(n, n),
            qpi: DMatrix::zeros(0, 0),
            qdelta: DMatrix::zeros(0, 0),
            x: p.clone().try_inverse().unwrap(),
            p,
            z: DMatrix::identity(1, 1),
            lambda: 1e-3,
            theta: 100.0,
            eta0: 0.0,
            sigma: 1.0,
            lambda_metric: 1.0,
            provenance: None,
        }
    }

    #[test]
    fn boundary_points_on_level_set() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.5]);
        let r = roa_ellipse(&design_with_p(p), 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in r.boundary_points(50, &mut rng) {
            assert!((r.value(&x) - 0.75).abs() < 1e-12);
        }
        let p3 = DMatrix::from_row_slice(3, 3, &[3.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 0.5]);
        let r3 = roa_ellipse(&design_with_p(p3), 0.0).unwrap();
        for x in r3.boundary_points(20, &mut rng) {
            assert!((r3.value(&x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_samples_inside() {
        let r = roa_ellipse(&design_with_p(DMatrix::identity(2, 2) * 4.0), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let levels: Vec<f64> = (0..2000).map(|_| r.value(&r.sample_interior(&mut rng))).collect();
        assert!(levels.iter().all(|&v| v <= 1.0 + 1e-12));
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        assert!((mean - 0.5).abs() < 0.03, "mean V-level {mean}");
    }

    #[test]
    fn level_shrinks_and_empty_region() {
        let d = design_with_p(DMatrix::identity(2, 2));
        assert_eq!(roa_ellipse(&d, 0.0).unwrap().level, 1.0);
        assert!(roa_ellipse(&d, 1.0 - 1e-9).unwrap().level < 1e-8);
        assert!(matches!(roa_ellipse(&d, 1.0), Err(Error::EmptyRegion(_))));
    }
}
