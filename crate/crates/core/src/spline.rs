//! Uniform B-spline basis on an extended knot grid.
//!
//! A grid with `G` intervals over `[lo, hi]` and degree `K` carries
//! `G + 2K + 1` equally spaced knots, `K` of them beyond each end of the
//! domain. That yields `G + K` basis functions which form a partition of
//! unity everywhere on `[lo, hi]`.
//!
//! Inputs outside the domain are clamped to the nearest boundary, so the
//! evaluated function is flat out there and its derivative is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    domain_lo: f64,
    domain_hi: f64,
    grid_size: usize,
    order: usize,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn new(domain_lo: f64, domain_hi: f64, grid_size: usize, order: usize) -> Result<Self> {
        if !domain_lo.is_finite() || !domain_hi.is_finite() || domain_lo >= domain_hi {
            return Err(Error::InvalidConfig(format!(
                "spline domain must satisfy lo < hi, got [{domain_lo}, {domain_hi}]"
            )));
        }
        if grid_size == 0 {
            return Err(Error::InvalidConfig("grid size must be at least 1".into()));
        }
        let h = (domain_hi - domain_lo) / grid_size as f64;
        let knots = (0..grid_size + 2 * order + 1)
            .map(|j| domain_lo + (j as f64 - order as f64) * h)
            .collect();
        Ok(Self {
            domain_lo,
            domain_hi,
            grid_size,
            order,
            knots,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn step(&self) -> f64 {
        (self.domain_hi - self.domain_lo) / self.grid_size as f64
    }

    /// Number of basis functions, `G + K`.
    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// All `G + K` basis values at `x`.
    pub fn basis_values(&self, x: f64) -> Result<Vec<f64>> {
        check_finite(x)?;
        let mut local = vec![0.0; self.order + 1];
        let start = self.eval_local(x, &mut local, None);
        let mut out = vec![0.0; self.num_basis()];
        out[start..start + local.len()].copy_from_slice(&local);
        Ok(out)
    }

    /// All `G + K` basis derivatives `dB_i/dx` at `x`.
    pub fn basis_derivatives(&self, x: f64) -> Result<Vec<f64>> {
        check_finite(x)?;
        let mut local = vec![0.0; self.order + 1];
        let mut deriv = vec![0.0; self.order + 1];
        let start = self.eval_local(x, &mut local, Some(&mut deriv));
        let mut out = vec![0.0; self.num_basis()];
        out[start..start + deriv.len()].copy_from_slice(&deriv);
        Ok(out)
    }

    /// Evaluates the `K + 1` basis functions that can be nonzero at `x`.
    ///
    /// `values` (and `derivs`, when given) must have length `K + 1`; entry `r`
    /// belongs to basis function `start + r` where `start` is returned. `x`
    /// must be finite; hot paths validate inputs once up front.
    pub(crate) fn eval_local(
        &self,
        x: f64,
        values: &mut [f64],
        derivs: Option<&mut [f64]>,
    ) -> usize {
        let k = self.order;
        debug_assert_eq!(values.len(), k + 1);
        let inside = x >= self.domain_lo && x <= self.domain_hi;
        let x = x.clamp(self.domain_lo, self.domain_hi);
        let h = self.step();

        // Interval index in 0..G; x == hi belongs to the last interval.
        let cell = (((x - self.domain_lo) / h).floor() as usize).min(self.grid_size - 1);
        let span = cell + k;
        let t = &self.knots;

        // Triangular Cox-de Boor (de Boor's local algorithm). After raising to
        // degree p, values[r] holds B_{span-p+r, p}(x). The degree K-1 row is
        // parked in `derivs` for the derivative step.
        let mut derivs = derivs;
        values[0] = 1.0;
        for p in 1..=k {
            if p == k {
                if let Some(d) = derivs.as_deref_mut() {
                    d[..k].copy_from_slice(&values[..k]);
                }
            }
            let mut saved = 0.0;
            for r in 0..p {
                let right = t[span + r + 1] - x;
                let left = x - t[span + r + 1 - p];
                let temp = values[r] / (right + left);
                values[r] = saved + right * temp;
                saved = left * temp;
            }
            values[p] = saved;
        }

        if let Some(d) = derivs {
            if k == 0 || !inside {
                d.iter_mut().for_each(|v| *v = 0.0);
            } else {
                // Uniform knots: dB_{i,K}/dx = (B_{i,K-1} - B_{i+1,K-1}) / h.
                // Descending so each lower-degree entry is read before it is
                // overwritten.
                d[k] = d[k - 1] / h;
                for r in (1..k).rev() {
                    d[r] = (d[r - 1] - d[r]) / h;
                }
                d[0] = -d[0] / h;
            }
        }

        span - k
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InputDomain(format!(
            "spline input {x} is not finite"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox-de Boor over the full knot vector with half-open
    /// intervals, except the last domain cell which is closed on the right.
    fn naive_basis(grid: &SplineGrid, i: usize, p: usize, x: f64) -> f64 {
        let t = grid.knots();
        if p == 0 {
            let last = grid.grid_size() + grid.order() - 1;
            if t[i] <= x && x < t[i + 1] || (i == last && x == t[i + 1]) {
                return 1.0;
            }
            return 0.0;
        }
        let a = (x - t[i]) / (t[i + p] - t[i]) * naive_basis(grid, i, p - 1, x);
        let b = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * naive_basis(grid, i + 1, p - 1, x);
        a + b
    }

    #[test]
    fn knot_layout() {
        let g = SplineGrid::new(-3.0, 3.0, 6, 2).unwrap();
        assert_eq!(g.knots().len(), 6 + 4 + 1);
        assert_eq!(g.num_basis(), 8);
        assert_eq!(g.knots()[0], -5.0);
        assert_eq!(g.knots()[10], 5.0);
        assert!(g.knots().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SplineGrid::new(1.0, 1.0, 4, 1).is_err());
        assert!(SplineGrid::new(0.0, 1.0, 0, 1).is_err());
        assert!(SplineGrid::new(f64::NAN, 1.0, 3, 1).is_err());
    }

    #[test]
    fn degree_zero_is_cell_indicator() {
        let g = SplineGrid::new(0.0, 1.0, 4, 0).unwrap();
        assert_eq!(g.basis_values(0.3).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.basis_values(1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.basis_derivatives(0.3).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn linear_matches_hat_functions() {
        // K=1, G=2 on [0,1]: knots -0.5, 0, 0.5, 1, 1.5; hats centred at 0, 0.5, 1.
        let g = SplineGrid::new(0.0, 1.0, 2, 1).unwrap();
        let hat = |c: f64, x: f64| (1.0 - (x - c).abs() / 0.5).max(0.0);
        for &x in &[0.0, 0.1, 0.25, 0.5, 0.6, 0.99, 1.0] {
            let expect: Vec<f64> = [0.0, 0.5, 1.0].iter().map(|&c| hat(c, x)).collect();
            let got = g.basis_values(x).unwrap();
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-14, "x={x}: {got:?} vs {expect:?}");
            }
        }
        assert_eq!(g.basis_values(0.5).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn matches_naive_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(gs, k) in &[(1, 0), (3, 1), (5, 2), (7, 3), (4, 5)] {
            let g = SplineGrid::new(-2.0, 1.5, gs, k).unwrap();
            for _ in 0..200 {
                let x = rng.random_range(-2.0..=1.5);
                let fast = g.basis_values(x).unwrap();
                for (i, v) in fast.iter().enumerate() {
                    let slow = naive_basis(&g, i, k, x);
                    assert!((v - slow).abs() < 1e-12, "G={gs} K={k} x={x} i={i}");
                }
            }
        }
    }

    #[test]
    fn clamps_outside_domain() {
        let g = SplineGrid::new(-3.0, 3.0, 10, 3).unwrap();
        assert_eq!(g.basis_values(7.5).unwrap(), g.basis_values(3.0).unwrap());
        assert_eq!(
            g.basis_values(-90.0).unwrap(),
            g.basis_values(-3.0).unwrap()
        );
        assert!(g.basis_derivatives(4.0).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let g = SplineGrid::new(-3.0, 3.0, 10, 3).unwrap();
        assert!(matches!(
            g.basis_values(f64::NAN),
            Err(Error::InputDomain(_))
        ));
        assert!(matches!(
            g.basis_derivatives(f64::INFINITY),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = 1e-5;
        for _ in 0..50 {
            let gs = rng.random_range(1..20);
            let k = rng.random_range(1..5);
            let lo = rng.random_range(-4.0..0.0);
            let hi = lo + rng.random_range(0.5..6.0);
            let g = SplineGrid::new(lo, hi, gs, k).unwrap();
            let h = g.step();
            let x = loop {
                let x: f64 = rng.random_range(lo + 2.0 * step..hi - 2.0 * step);
                // Kinks at knots for K <= 1.
                let frac = ((x - lo) / h).fract();
                if k > 1 || (frac > 1e-3 && frac < 1.0 - 1e-3) {
                    break x;
                }
            };
            let d = g.basis_derivatives(x).unwrap();
            let up = g.basis_values(x + step).unwrap();
            let dn = g.basis_values(x - step).unwrap();
            for i in 0..g.num_basis() {
                let fd = (up[i] - dn[i]) / (2.0 * step);
                let denom = d[i].abs().max(fd.abs()).max(1e-6);
                assert!((d[i] - fd).abs() / denom <= 1e-4, "i={i} {} vs {fd}", d[i]);
            }
            let s: f64 = d.iter().sum();
            assert!(s.abs() < 1e-9 * (1.0 / h));
        }
    }
}
