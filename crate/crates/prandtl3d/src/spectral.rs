//! Tangential FFT machinery: plan cache, per-plane transforms, spectral
//! derivatives and Parseval-based weighted norms.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::{GridSpec, ScalarField};

fn plan(len: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, matches!(dir, FftDirection::Forward));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(len, dir))
        .clone()
}

/// Signed wavenumber for bin i of an n-point transform.
pub fn wavenumber(n: usize, i: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Multiplier (i k)^a for bin i; the shared Nyquist bin is zeroed for odd a.
pub fn multiplier(n: usize, i: usize, a: usize) -> Complex64 {
    if a == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if n % 2 == 0 && i == n / 2 && a % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    let k = wavenumber(n, i) as f64;
    let kp = k.powi(a as i32);
    match a % 4 {
        0 => Complex64::new(kp, 0.0),
        1 => Complex64::new(0.0, kp),
        2 => Complex64::new(-kp, 0.0),
        _ => Complex64::new(0.0, -kp),
    }
}

/// In-place 2D FFT of an (nx, ny) plane.
pub fn plane_fft(plane: &mut Array2<Complex64>, dir: FftDirection) {
    let (nx, ny) = plane.dim();
    let fy = plan(ny, dir);
    for mut row in plane.rows_mut() {
        let slice = row.as_slice_mut().expect("contiguous row");
        fy.process(slice);
    }
    let fx = plan(nx, dir);
    let mut col = vec![Complex64::default(); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = plane[[i, j]];
        }
        fx.process(&mut col);
        for i in 0..nx {
            plane[[i, j]] = col[i];
        }
    }
}

/// Forward transform of every z-plane; unnormalized coefficients.
pub fn to_spectral(f: &ScalarField) -> Array3<Complex64> {
    let g = &f.grid;
    let mut out = Array3::default((g.nx, g.ny, g.nz));
    let mut plane = Array2::default((g.nx, g.ny));
    for k in 0..g.nz {
        for i in 0..g.nx {
            for j in 0..g.ny {
                plane[[i, j]] = Complex64::new(f.values[[i, j, k]], 0.0);
            }
        }
        plane_fft(&mut plane, FftDirection::Forward);
        for i in 0..g.nx {
            for j in 0..g.ny {
                out[[i, j, k]] = plane[[i, j]];
            }
        }
    }
    out
}

/// Inverse transform back to a real field (normalized, real part taken).
pub fn from_spectral(grid: &Arc<GridSpec>, spec: &Array3<Complex64>) -> ScalarField {
    let g = grid;
    let norm = 1.0 / (g.nx * g.ny) as f64;
    let mut out = grid.zeros();
    let mut plane = Array2::default((g.nx, g.ny));
    for k in 0..g.nz {
        for i in 0..g.nx {
            for j in 0..g.ny {
                plane[[i, j]] = spec[[i, j, k]];
            }
        }
        plane_fft(&mut plane, FftDirection::Inverse);
        for i in 0..g.nx {
            for j in 0..g.ny {
                out.values[[i, j, k]] = plane[[i, j]].re * norm;
            }
        }
    }
    out
}

/// Multiply spectral coefficients by (i kx)^a1 (i ky)^a2 in place.
pub fn apply_derivative(spec: &mut Array3<Complex64>, grid: &GridSpec, a1: usize, a2: usize) {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    for i in 0..nx {
        let mx = multiplier(nx, i, a1);
        for j in 0..ny {
            let m = mx * multiplier(ny, j, a2);
            for k in 0..nz {
                spec[[i, j, k]] *= m;
            }
        }
    }
}

/// Spectral tangential derivative of a real field.
pub fn derivative(f: &ScalarField, a1: usize, a2: usize) -> ScalarField {
    let mut spec = to_spectral(f);
    apply_derivative(&mut spec, &f.grid, a1, a2);
    from_spectral(&f.grid, &spec)
}

/// Normal FD derivative applied to a complex spectral array, column by column
/// (same stencils as `grid::normal_derivative`, order 1).
pub fn dz_spectral(spec: &Array3<Complex64>, grid: &GridSpec) -> Array3<Complex64> {
    let n = grid.nz;
    let ds = grid.ds();
    let mut out = Array3::default((grid.nx, grid.ny, n));
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            for k in 0..n {
                let gs = if k == 0 {
                    (-1.5 * spec[[i, j, 0]] + 2.0 * spec[[i, j, 1]] - 0.5 * spec[[i, j, 2]]) / ds
                } else if k == n - 1 {
                    (1.5 * spec[[i, j, n - 1]] - 2.0 * spec[[i, j, n - 2]]
                        + 0.5 * spec[[i, j, n - 3]])
                        / ds
                } else {
                    (spec[[i, j, k + 1]] - spec[[i, j, k - 1]]) / (2.0 * ds)
                };
                out[[i, j, k]] = gs / grid.zp_at(k);
            }
        }
    }
    out
}

/// Parseval evaluation of || <z>^a  d^alpha F ||_{L2} from the spectral array
/// of F. Exactly matches the physical-space route (uniform tangential
/// quadrature) up to rounding.
pub fn weighted_block_norm(
    spec: &Array3<Complex64>,
    grid: &GridSpec,
    alpha: (usize, usize),
    weight_power: f64,
) -> f64 {
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let da = grid.dx() * grid.dy() / (nx * ny) as f64;
    let mut acc = 0.0;
    let zw: Vec<f64> = (0..nz)
        .map(|k| grid.z_weights()[k] * grid.japanese_bracket(k).powf(2.0 * weight_power))
        .collect();
    for i in 0..nx {
        let mx = multiplier(nx, i, alpha.0);
        for j in 0..ny {
            let m = mx * multiplier(ny, j, alpha.1);
            let m2 = m.norm_sqr();
            if m2 == 0.0 {
                continue;
            }
            let mut col = 0.0;
            for (k, w) in zw.iter().enumerate() {
                col += w * spec[[i, j, k]].norm_sqr();
            }
            acc += m2 * col;
        }
    }
    (acc * da).sqrt()
}

/// Spectral tangential derivative of a single (nx, ny) plane.
pub fn plane_derivative(plane: &Array2<f64>, a1: usize, a2: usize) -> Array2<f64> {
    let (nx, ny) = plane.dim();
    let mut spec: Array2<Complex64> = plane.mapv(|v| Complex64::new(v, 0.0));
    plane_fft(&mut spec, FftDirection::Forward);
    for i in 0..nx {
        let mx = multiplier(nx, i, a1);
        for j in 0..ny {
            spec[[i, j]] *= mx * multiplier(ny, j, a2);
        }
    }
    plane_fft(&mut spec, FftDirection::Inverse);
    let norm = 1.0 / (nx * ny) as f64;
    spec.mapv(|v| v.re * norm)
}

/// Parseval norm over the 2D torus (single plane), used for trace fields.
pub fn plane_norm(spec: &Array2<Complex64>, nx: usize, ny: usize, alpha: (usize, usize)) -> f64 {
    let da = (2.0 * std::f64::consts::PI).powi(2) / ((nx * ny) as f64).powi(2);
    let mut acc = 0.0;
    for i in 0..nx {
        let mx = multiplier(nx, i, alpha.0);
        for j in 0..ny {
            let m = mx * multiplier(ny, j, alpha.1);
            acc += m.norm_sqr() * spec[[i, j]].norm_sqr();
        }
    }
    (acc * da).sqrt()
}
