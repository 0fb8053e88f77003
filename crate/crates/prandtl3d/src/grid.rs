//! Discretization of Omega = T^2 x [0, z_max]: tangential Fourier collocation,
//! truncated/mapped normal grid, derivative operators and weighted quadrature.
//!
//! Tangential directions are periodic on [0, 2pi) with uniform collocation
//! points; derivatives are spectral. The normal direction is either uniform on
//! [0, z_max] or algebraically stretched, z(s) = L s / (1 - s), sampled at
//! uniform s so that nodes concentrate near the wall. Normal derivatives are
//! second-order finite differences in the mapped coordinate with the chain
//! rule applied analytically.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

/// Normal-coordinate map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stretch {
    /// Uniform nodes on [0, z_max].
    Uniform,
    /// z(s) = L s / (1 - s) sampled at uniform s in [0, s_max] with
    /// z(s_max) = z_max; smaller L packs more nodes near the wall.
    Rational { l: f64 },
}

/// Grid parameters plus precomputed nodes, map metrics and quadrature weights.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub z_max: f64,
    pub stretch: Stretch,
    /// Cap on the total tangential derivative order accepted by the spectral ops.
    pub deriv_cap: usize,
    /// Normal nodes, strictly increasing, z[0] = 0, z[nz-1] = z_max.
    z: Vec<f64>,
    /// Map derivatives z'(s)..z''''(s) at each node (uniform grid: 1, 0, 0, 0).
    zp: Vec<f64>,
    zpp: Vec<f64>,
    zppp: Vec<f64>,
    zpppp: Vec<f64>,
    /// Uniform spacing of the computational coordinate s.
    ds: f64,
    /// Composite trapezoid weights on the physical z nodes.
    wz: Vec<f64>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.z_max == other.z_max
            && self.stretch == other.stretch
    }
}

pub const DEFAULT_DERIV_CAP: usize = 40;

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, z_max: f64, stretch: Stretch) -> Result<Arc<Self>> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::validation(format!(
                "tangential point counts must be even and >= 8, got nx={nx}, ny={ny}"
            )));
        }
        if nz < 16 {
            return Err(Error::validation(format!("nz must be >= 16, got {nz}")));
        }
        if !(z_max.is_finite() && z_max >= 8.0) {
            return Err(Error::validation(format!(
                "z_max must be finite and >= 8, got {z_max}"
            )));
        }
        if let Stretch::Rational { l } = stretch {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::validation(format!(
                    "stretch parameter L must be positive, got {l}"
                )));
            }
        }

        let n = nz;
        let (mut z, mut zp, mut zpp, mut zppp, mut zpppp) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let ds;
        match stretch {
            Stretch::Uniform => {
                ds = z_max / (n - 1) as f64;
                for j in 0..n {
                    z[j] = ds * j as f64;
                    zp[j] = 1.0;
                }
                z[n - 1] = z_max;
            }
            Stretch::Rational { l } => {
                let s_max = z_max / (l + z_max);
                ds = s_max / (n - 1) as f64;
                for j in 0..n {
                    let s = ds * j as f64;
                    let om = 1.0 - s;
                    z[j] = l * s / om;
                    zp[j] = l / (om * om);
                    zpp[j] = 2.0 * l / (om * om * om);
                    zppp[j] = 6.0 * l / (om * om * om * om);
                    zpppp[j] = 24.0 * l / (om * om * om * om * om);
                }
                z[n - 1] = z_max;
            }
        }

        let mut wz = vec![0.0; n];
        for j in 0..n - 1 {
            let h = z[j + 1] - z[j];
            wz[j] += 0.5 * h;
            wz[j + 1] += 0.5 * h;
        }

        Ok(Arc::new(GridSpec {
            nx,
            ny,
            nz,
            z_max,
            stretch,
            deriv_cap: DEFAULT_DERIV_CAP,
            z,
            zp,
            zpp,
            zppp,
            zpppp,
            ds,
            wz,
        }))
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    /// Map metric z'(s) at node k.
    pub fn zp_at(&self, k: usize) -> f64 {
        self.zp[k]
    }

    /// Map metric z''(s) at node k.
    pub fn zpp_at(&self, k: usize) -> f64 {
        self.zpp[k]
    }

    /// Computational-coordinate spacing.
    pub fn ds(&self) -> f64 {
        self.ds
    }

    /// Trapezoid weights over the normal nodes.
    pub fn z_weights(&self) -> &[f64] {
        &self.wz
    }

    /// <z> = (1 + z^2)^(1/2) at node j.
    pub fn japanese_bracket(&self, j: usize) -> f64 {
        (1.0 + self.z[j] * self.z[j]).sqrt()
    }

    pub fn dx(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.ny as f64
    }

    /// Smallest normal spacing (next to the wall for stretched grids).
    pub fn dz_min(&self) -> f64 {
        let mut m = f64::INFINITY;
        for j in 0..self.nz - 1 {
            m = m.min(self.z[j + 1] - self.z[j]);
        }
        m
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.dx() * i as f64).collect()
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.ny).map(|i| self.dy() * i as f64).collect()
    }

    /// Allocate a zero field on this grid.
    pub fn zeros(self: &Arc<Self>) -> ScalarField {
        ScalarField {
            grid: Arc::clone(self),
            values: Array3::zeros((self.nx, self.ny, self.nz)),
        }
    }

    /// Sample a function f(x, y, z) at the collocation nodes.
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let xs = self.x_nodes();
        let ys = self.y_nodes();
        let mut values = Array3::zeros((self.nx, self.ny, self.nz));
        for (i, &x) in xs.iter().enumerate() {
            for (jy, &y) in ys.iter().enumerate() {
                for (k, &z) in self.z.iter().enumerate() {
                    values[[i, jy, k]] = f(x, y, z);
                }
            }
        }
        ScalarField {
            grid: Arc::clone(self),
            values,
        }
    }

    /// Sample a z-only profile.
    pub fn sample_profile(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> ScalarField {
        self.sample(|_, _, z| f(z))
    }
}

/// A real scalar field sampled on the grid, stored as (nx, ny, nz) row-major.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<GridSpec>,
    pub values: Array3<f64>,
}

impl ScalarField {
    pub fn from_values(grid: &Arc<GridSpec>, values: Array3<f64>) -> Result<Self> {
        if values.dim() != (grid.nx, grid.ny, grid.nz) {
            return Err(Error::validation(format!(
                "field shape {:?} does not match grid ({}, {}, {})",
                values.dim(),
                grid.nx,
                grid.ny,
                grid.nz
            )));
        }
        Ok(ScalarField {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Pointwise binary map against another field on the same grid.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert!(self.grid == other.grid);
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.values)
            .and(&other.values)
            .for_each(|o, &b| *o = f(*o, b));
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let mut out = self.clone();
        out.values.mapv_inplace(f);
        out
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    /// Multiply every z-plane by a z-profile value.
    pub fn mul_profile(&self, profile: &[f64]) -> ScalarField {
        assert_eq!(profile.len(), self.grid.nz);
        let mut out = self.clone();
        for ((_, _, k), v) in out.values.indexed_iter_mut() {
            *v *= profile[k];
        }
        out
    }

    /// Extract the z-plane at index k as an (nx, ny) array.
    pub fn plane(&self, k: usize) -> Array2<f64> {
        self.values.index_axis(ndarray::Axis(2), k).to_owned()
    }
}

fn check_alpha(grid: &GridSpec, a1: usize, a2: usize) -> Result<()> {
    if a1 + a2 > grid.deriv_cap {
        return Err(Error::validation(format!(
            "tangential derivative order {} exceeds the configured cap {}",
            a1 + a2,
            grid.deriv_cap
        )));
    }
    Ok(())
}

/// Spectral tangential derivative d^(a1)_x d^(a2)_y f per z-plane.
///
/// Fourier coefficients are multiplied by (i kx)^a1 (i ky)^a2; the Nyquist
/// mode is zeroed for odd orders so the result stays real.
pub fn tangential_derivative(f: &ScalarField, alpha: (usize, usize)) -> Result<ScalarField> {
    check_alpha(&f.grid, alpha.0, alpha.1)?;
    if !f.is_finite() {
        return Err(Error::numerics(
            "tangential_derivative: non-finite input field",
        ));
    }
    if alpha == (0, 0) {
        return Ok(f.clone());
    }
    Ok(spectral::derivative(f, alpha.0, alpha.1))
}

/// Second-order finite-difference normal derivative (order 1 or 2) in the
/// mapped coordinate, one-sided at both walls, chain rule applied.
pub fn normal_derivative(f: &ScalarField, order: usize) -> Result<ScalarField> {
    let g = &f.grid;
    if g.nz < 5 {
        return Err(Error::validation("normal_derivative requires nz >= 5"));
    }
    if !(order == 1 || order == 2) {
        return Err(Error::validation(format!(
            "normal_derivative order must be 1 or 2, got {order}"
        )));
    }
    let n = g.nz;
    let ds = g.ds;
    let mut out = f.clone();
    let vals = &f.values;
    let nx = g.nx;
    let ny = g.ny;

    // ds-space stencil helper closures over the raw planes
    let get = |i: usize, jy: usize, k: usize| vals[[i, jy, k]];

    for i in 0..nx {
        for jy in 0..ny {
            // first and second s-derivatives per column
            for k in 0..n {
                let (gs, gss) = if k == 0 {
                    let gs = (-1.5 * get(i, jy, 0) + 2.0 * get(i, jy, 1) - 0.5 * get(i, jy, 2)) / ds;
                    let gss = (2.0 * get(i, jy, 0) - 5.0 * get(i, jy, 1) + 4.0 * get(i, jy, 2)
                        - get(i, jy, 3))
                        / (ds * ds);
                    (gs, gss)
                } else if k == n - 1 {
                    let gs = (1.5 * get(i, jy, n - 1) - 2.0 * get(i, jy, n - 2)
                        + 0.5 * get(i, jy, n - 3))
                        / ds;
                    let gss = (2.0 * get(i, jy, n - 1) - 5.0 * get(i, jy, n - 2)
                        + 4.0 * get(i, jy, n - 3)
                        - get(i, jy, n - 4))
                        / (ds * ds);
                    (gs, gss)
                } else {
                    let gs = (get(i, jy, k + 1) - get(i, jy, k - 1)) / (2.0 * ds);
                    let gss = (get(i, jy, k + 1) - 2.0 * get(i, jy, k) + get(i, jy, k - 1))
                        / (ds * ds);
                    (gs, gss)
                };
                let zp = g.zp[k];
                out.values[[i, jy, k]] = if order == 1 {
                    gs / zp
                } else {
                    gss / (zp * zp) - g.zpp[k] * gs / (zp * zp * zp)
                };
            }
        }
    }
    Ok(out)
}

/// Weighted L2 norm ( sum <z>^{2a} f^2 w )^{1/2} with tangential trapezoid
/// (uniform, exact for periodic integrands) and composite trapezoid in z.
pub fn weighted_l2(f: &ScalarField, weight_power: f64) -> f64 {
    let g = &f.grid;
    let da = g.dx() * g.dy();
    let mut acc = 0.0;
    for k in 0..g.nz {
        let w = g.wz[k] * g.japanese_bracket(k).powf(2.0 * weight_power);
        let mut plane = 0.0;
        for i in 0..g.nx {
            for jy in 0..g.ny {
                let v = f.values[[i, jy, k]];
                plane += v * v;
            }
        }
        acc += w * plane;
    }
    (acc * da).sqrt()
}

/// Plain (unweighted) L2 norm.
pub fn l2(f: &ScalarField) -> f64 {
    weighted_l2(f, 0.0)
}

/// Weighted L2 norm restricted to z in [z_lo, z_hi].
pub fn weighted_l2_zrange(f: &ScalarField, weight_power: f64, z_lo: f64, z_hi: f64) -> f64 {
    let g = &f.grid;
    let da = g.dx() * g.dy();
    let mut acc = 0.0;
    for k in 0..g.nz {
        let z = g.z_nodes()[k];
        if z < z_lo || z > z_hi {
            continue;
        }
        let w = g.wz[k] * g.japanese_bracket(k).powf(2.0 * weight_power);
        let mut plane = 0.0;
        for i in 0..g.nx {
            for jy in 0..g.ny {
                let v = f.values[[i, jy, k]];
                plane += v * v;
            }
        }
        acc += w * plane;
    }
    (acc * da).sqrt()
}

/// F(., ., z_j) = int_0^{z_j} f dz' by composite trapezoid; F(., ., 0) = 0.
pub fn cumulative_normal_integral(f: &ScalarField) -> ScalarField {
    let g = &f.grid;
    let mut out = g.zeros();
    for i in 0..g.nx {
        for jy in 0..g.ny {
            let mut acc = 0.0;
            out.values[[i, jy, 0]] = 0.0;
            for k in 1..g.nz {
                let h = g.z[k] - g.z[k - 1];
                acc += 0.5 * h * (f.values[[i, jy, k]] + f.values[[i, jy, k - 1]]);
                out.values[[i, jy, k]] = acc;
            }
        }
    }
    out
}

/// Wall traces of d_z^k f at z = 0 for k = 1..=max_order (max 4), computed
/// with one-sided second-order stencils in the computational coordinate and
/// the inverse chain rule. Returns one (nx, ny) trace per order.
pub fn wall_normal_derivatives(f: &ScalarField, max_order: usize) -> Result<Vec<Array2<f64>>> {
    let g = &f.grid;
    assert!((1..=4).contains(&max_order));
    let need = max_order + 2;
    if g.nz < need {
        return Err(Error::validation(format!(
            "wall_normal_derivatives order {max_order} needs at least {need} normal nodes"
        )));
    }
    let ds = g.ds;
    let (zp, zpp, zppp, zpppp) = (g.zp[0], g.zpp[0], g.zppp[0], g.zpppp[0]);
    let mut out = vec![Array2::zeros((g.nx, g.ny)); max_order];
    // one-sided second-order stencils at the first node, uniform spacing
    let w1 = [-1.5, 2.0, -0.5];
    let w2 = [2.0, -5.0, 4.0, -1.0];
    let w3 = [-2.5, 9.0, -12.0, 7.0, -1.5];
    let w4 = [3.0, -14.0, 26.0, -24.0, 11.0, -2.0];
    for i in 0..g.nx {
        for jy in 0..g.ny {
            let v = |k: usize| f.values[[i, jy, k]];
            let g1 = (0..3).map(|k| w1[k] * v(k)).sum::<f64>() / ds;
            let g2 = (0..4).map(|k| w2[k] * v(k)).sum::<f64>() / (ds * ds);
            let g3 = if max_order >= 3 {
                (0..5).map(|k| w3[k] * v(k)).sum::<f64>() / (ds * ds * ds)
            } else {
                0.0
            };
            let g4 = if max_order >= 4 {
                (0..6).map(|k| w4[k] * v(k)).sum::<f64>() / (ds * ds * ds * ds)
            } else {
                0.0
            };
            // invert Faa di Bruno: g = f(z(s))
            let f1 = g1 / zp;
            let f2 = (g2 - f1 * zpp) / (zp * zp);
            let f3 = (g3 - 3.0 * f2 * zp * zpp - f1 * zppp) / (zp * zp * zp);
            let f4 = (g4
                - 6.0 * f3 * zp * zp * zpp
                - f2 * (4.0 * zp * zppp + 3.0 * zpp * zpp)
                - f1 * zpppp)
                / (zp * zp * zp * zp);
            let fs = [f1, f2, f3, f4];
            for (ord, item) in out.iter_mut().enumerate() {
                item[[i, jy]] = fs[ord];
            }
        }
    }
    Ok(out)
}

/// Divergence residual consistent with the stored trapezoid antiderivative:
/// on each z-cell, (w_{k+1} - w_k)/h + (d_k + d_{k+1})/2 with d = d_x u + d_y v
/// vanishes to rounding when w = -cumtrapz(d). Returns the discrete L2 norm of
/// the cell-centered residual.
pub fn divergence_residual_cells(div_t: &ScalarField, w: &ScalarField) -> f64 {
    let g = &div_t.grid;
    let da = g.dx() * g.dy();
    let mut acc = 0.0;
    for i in 0..g.nx {
        for jy in 0..g.ny {
            for k in 0..g.nz - 1 {
                let h = g.z[k + 1] - g.z[k];
                let dw = (w.values[[i, jy, k + 1]] - w.values[[i, jy, k]]) / h;
                let dmid = 0.5 * (div_t.values[[i, jy, k]] + div_t.values[[i, jy, k + 1]]);
                let r = dw + dmid;
                acc += r * r * h;
            }
        }
    }
    (acc * da).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, ny: usize, nz: usize, zmax: f64) -> Arc<GridSpec> {
        GridSpec::new(nx, ny, nz, zmax, Stretch::Uniform).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, 8, 32, 16.0, Stretch::Uniform).is_err());
        assert!(GridSpec::new(9, 8, 32, 16.0, Stretch::Uniform).is_err());
        assert!(GridSpec::new(8, 8, 8, 16.0, Stretch::Uniform).is_err());
        assert!(GridSpec::new(8, 8, 32, 4.0, Stretch::Uniform).is_err());
        assert!(GridSpec::new(8, 8, 32, 16.0, Stretch::Rational { l: -1.0 }).is_err());
    }

    #[test]
    fn nodes_monotone_and_pinned() {
        for st in [Stretch::Uniform, Stretch::Rational { l: 4.0 }] {
            let g = GridSpec::new(8, 8, 33, 16.0, st).unwrap();
            let z = g.z_nodes();
            assert_eq!(z[0], 0.0);
            assert!((z[g.nz - 1] - 16.0).abs() < 1e-12);
            for k in 0..g.nz - 1 {
                assert!(z[k + 1] > z[k]);
            }
            for k in 0..g.nz {
                assert!(g.japanese_bracket(k) >= 1.0);
            }
        }
    }

    #[test]
    fn spectral_derivative_single_mode() {
        let g = grid(16, 8, 16, 16.0);
        let f = g.sample(|x, _, z| x.sin() * (-z).exp());
        let d = tangential_derivative(&f, (1, 0)).unwrap();
        let exact = g.sample(|x, _, z| x.cos() * (-z).exp());
        let mut worst = 0.0f64;
        for (a, b) in d.values.iter().zip(exact.values.iter()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-12, "worst {worst}");
    }

    #[test]
    fn spectral_derivative_constant_is_zero() {
        let g = grid(8, 8, 16, 16.0);
        let f = g.sample(|_, _, z| 1.0 + z);
        for alpha in [(1, 0), (0, 1), (2, 3)] {
            let d = tangential_derivative(&f, alpha).unwrap();
            assert!(d.max_abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_derivative_mth_order_sine() {
        // roundoff in unused bins is amplified by k_max^m, so keep nx small
        let g = grid(8, 8, 16, 16.0);
        let f = g.sample(|x, _, _| x.sin());
        for m in 1..=8usize {
            let d = tangential_derivative(&f, (m, 0)).unwrap();
            let exact = g.sample(|x, _, _| (x + m as f64 * std::f64::consts::FRAC_PI_2).sin());
            let mut worst = 0.0f64;
            for (a, b) in d.values.iter().zip(exact.values.iter()) {
                worst = worst.max((a - b).abs());
            }
            let tol = 1e-12 * (g.nx as f64 / 2.0).powi(m as i32).max(1.0);
            assert!(worst < tol.max(1e-12), "m={m} worst {worst}");
        }
    }

    #[test]
    fn spectral_derivative_rejects() {
        let g = grid(8, 8, 16, 16.0);
        let f = g.sample(|_, _, _| 1.0);
        assert!(tangential_derivative(&f, (30, 30)).is_err());
        let mut bad = f.clone();
        bad.values[[0, 0, 0]] = f64::NAN;
        assert!(tangential_derivative(&bad, (1, 0)).is_err());
    }

    #[test]
    fn derivatives_commute() {
        let g = grid(16, 16, 16, 16.0);
        let f = g.sample(|x, y, z| (x.sin() + (2.0 * y).cos()) * (-z).exp() + x.cos() * y.sin());
        let dxy = tangential_derivative(&tangential_derivative(&f, (1, 0)).unwrap(), (0, 1)).unwrap();
        let dyx = tangential_derivative(&tangential_derivative(&f, (0, 1)).unwrap(), (1, 0)).unwrap();
        let diff = dxy.sub(&dyx).max_abs();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn normal_derivative_quadratic_exact() {
        let g = grid(8, 8, 32, 16.0);
        let f = g.sample(|_, _, z| z * z);
        let d = normal_derivative(&f, 1).unwrap();
        for k in 1..g.nz - 1 {
            let z = g.z_nodes()[k];
            assert!((d.values[[0, 0, k]] - 2.0 * z).abs() < 1e-11);
        }
        let d2 = normal_derivative(&f, 2).unwrap();
        for k in 0..g.nz {
            assert!((d2.values[[0, 0, k]] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normal_derivative_constant_zero() {
        let g = GridSpec::new(8, 8, 32, 16.0, Stretch::Rational { l: 3.0 }).unwrap();
        let f = g.sample(|_, _, _| 3.25);
        assert!(normal_derivative(&f, 1).unwrap().max_abs() < 1e-11);
        assert!(normal_derivative(&f, 2).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn normal_second_derivative_richardson() {
        // error on e^{-z} drops by >= 3.8 when nz doubles
        let err = |nz: usize| {
            let g = GridSpec::new(8, 8, nz, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
            let f = g.sample(|_, _, z| (-z).exp());
            let d2 = normal_derivative(&f, 2).unwrap();
            let mut worst = 0.0f64;
            for k in 0..g.nz {
                worst = worst.max((d2.values[[0, 0, k]] - (-g.z_nodes()[k]).exp()).abs());
            }
            worst
        };
        let e1 = err(64);
        let e2 = err(128);
        assert!(e1 / e2 >= 3.8, "ratio {}", e1 / e2);
    }

    #[test]
    fn weighted_l2_basics() {
        let g = grid(8, 8, 64, 16.0);
        let zero = g.zeros();
        assert_eq!(weighted_l2(&zero, 0.0), 0.0);
        let f = g.sample(|x, y, z| (x + 2.0 * y).sin() * (-z).exp());
        let n1 = weighted_l2(&f, 1.3);
        let n2 = weighted_l2(&f.scale(2.0), 1.3);
        assert!((n2 - 2.0 * n1).abs() < 1e-13 * n1.max(1.0));
    }

    #[test]
    fn weighted_l2_exponential_value() {
        // || e^{-z} ||_{L2}^2 = 4 pi^2 * 1/2 on the half-line
        let g = GridSpec::new(8, 8, 4097, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
        let f = g.sample(|_, _, z| (-z).exp());
        let exact = (4.0 * std::f64::consts::PI.powi(2) * 0.5).sqrt();
        let got = weighted_l2(&f, 0.0);
        assert!(
            (got - exact).abs() < 1e-6,
            "got {got}, exact {exact}, diff {}",
            (got - exact).abs()
        );
    }

    #[test]
    fn weighted_l2_triangle_inequality_random() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid(8, 8, 16, 16.0);
        for _ in 0..100 {
            let a = g.sample(|x, y, z| {
                (x.sin() + y.cos()) * (-z).exp() * (1.0 + 0.1 * (x * y).sin())
            });
            let c1: f64 = rng.gen_range(-2.0..2.0);
            let c2: f64 = rng.gen_range(-2.0..2.0);
            let f1 = a.scale(c1);
            let f2 = g
                .sample(|x, y, z| (2.0 * x).cos() * (-(z - 1.0).powi(2)).exp() + y.sin())
                .scale(c2);
            let lhs = weighted_l2(&f1.add(&f2), 0.7);
            let rhs = weighted_l2(&f1, 0.7) + weighted_l2(&f2, 0.7);
            assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn cumulative_integral_exactness() {
        let g = grid(8, 8, 33, 16.0);
        let one = g.sample(|_, _, _| 1.0);
        let f1 = cumulative_normal_integral(&one);
        for k in 0..g.nz {
            assert!((f1.values[[0, 0, k]] - g.z_nodes()[k]).abs() < 1e-12);
        }
        let lin = g.sample(|_, _, z| z);
        let f2 = cumulative_normal_integral(&lin);
        for k in 0..g.nz {
            let z = g.z_nodes()[k];
            assert!((f2.values[[0, 0, k]] - 0.5 * z * z).abs() < 1e-11);
        }
    }

    #[test]
    fn cumulative_integral_refinement() {
        let err = |nz: usize| {
            let g = grid(8, 8, nz, 16.0);
            let f = g.sample(|_, _, z| (-z).exp());
            let int = cumulative_normal_integral(&f);
            let mut worst = 0.0f64;
            for k in 0..g.nz {
                let exact = 1.0 - (-g.z_nodes()[k]).exp();
                worst = worst.max((int.values[[0, 0, k]] - exact).abs());
            }
            worst
        };
        let e1 = err(65);
        let e2 = err(129);
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn integral_then_derivative_second_order() {
        // measure at a fixed physical node shared by the nested grids
        let err = |nz: usize| {
            let g = grid(8, 8, nz, 16.0);
            let f = g.sample(|_, _, z| (-z).exp() * (1.0 + z));
            let int = cumulative_normal_integral(&f);
            let back = normal_derivative(&int, 1).unwrap();
            let k = (nz - 1) / 8; // z = 2
            (back.values[[0, 0, k]] - f.values[[0, 0, k]]).abs()
        };
        let e1 = err(65);
        let e2 = err(129);
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "order {order}, e1={e1}, e2={e2}");
    }

    #[test]
    fn wall_derivatives_match_closed_form() {
        // f = sin(z) e^{-z}: f'(0)=1, f''(0)=-2, f'''(0)=2, f''''(0)=0
        // one-sided stencil constants are large on the uniform grid; the
        // stretched grid clusters nodes at the wall and is much tighter
        let cases = [
            (Stretch::Uniform, [2e-3, 1e-3, 2e-2, 6e-2]),
            (Stretch::Rational { l: 2.0 }, [1e-4, 1e-4, 1e-3, 5e-3]),
        ];
        for (st, tols) in cases {
            let g = GridSpec::new(8, 8, 513, 16.0, st).unwrap();
            let f = g.sample(|_, _, z| z.sin() * (-z).exp());
            let ws = wall_normal_derivatives(&f, 4).unwrap();
            let exact = [1.0, -2.0, 2.0, 0.0];
            for (ord, ex) in exact.iter().enumerate() {
                let got = ws[ord][[3, 4]];
                assert!(
                    (got - ex).abs() < tols[ord],
                    "{st:?} order {} got {got} want {ex}",
                    ord + 1
                );
            }
        }
    }

    #[test]
    fn wall_derivatives_converge_second_order() {
        let err = |nz: usize| {
            let g = GridSpec::new(8, 8, nz, 16.0, Stretch::Rational { l: 2.0 }).unwrap();
            let f = g.sample(|_, _, z| z.sin() * (-z).exp());
            let ws = wall_normal_derivatives(&f, 4).unwrap();
            (ws[3][[0, 0]] - 0.0).abs()
        };
        let e1 = err(257);
        let e2 = err(513);
        let order = (e1 / e2).log2();
        assert!(order > 1.7, "order {order}, e1={e1}, e2={e2}");
    }
}
