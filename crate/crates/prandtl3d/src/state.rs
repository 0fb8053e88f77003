//! Velocity fields and everything derived from them at one time instant,
//! plus the outer-flow data and the initial-data validators.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cumulative_normal_integral, divergence_residual_cells, normal_derivative,
    tangential_derivative, wall_normal_derivatives, weighted_l2, GridSpec, ScalarField,
};
use crate::spectral::plane_derivative;

/// Outer tangential velocity and pressure traces on T^2 at a fixed time.
#[derive(Debug, Clone)]
pub struct OuterTraces {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub p: Array2<f64>,
}

/// Outer-flow data (U, V, p): constants, named closed forms, or time samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterFlow {
    Constant {
        u: f64,
        v: f64,
        p: f64,
    },
    /// U = A cos(x - c t), V = 0, with p solving the Bernoulli relation
    /// d_t U + U d_x U + d_x p = 0 in closed form.
    TravelingWave {
        amplitude: f64,
        speed: f64,
    },
    /// Time samples of the traces; linear interpolation in t, central
    /// differencing for time derivatives.
    #[serde(skip)]
    Sampled(SampledOuter),
}

#[derive(Debug, Clone)]
pub struct SampledOuter {
    pub times: Vec<f64>,
    pub u: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub p: Vec<Array2<f64>>,
}

impl OuterFlow {
    pub fn zero() -> Self {
        OuterFlow::Constant {
            u: 0.0,
            v: 0.0,
            p: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, OuterFlow::Constant { .. })
    }

    fn fill(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        let xs = grid.x_nodes();
        let ys = grid.y_nodes();
        let mut out = Array2::zeros((grid.nx, grid.ny));
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                out[[i, j]] = f(x, y);
            }
        }
        out
    }

    pub fn traces(&self, grid: &GridSpec, t: f64) -> OuterTraces {
        match self {
            OuterFlow::Constant { u, v, p } => OuterTraces {
                u: Array2::from_elem((grid.nx, grid.ny), *u),
                v: Array2::from_elem((grid.nx, grid.ny), *v),
                p: Array2::from_elem((grid.nx, grid.ny), *p),
            },
            OuterFlow::TravelingWave { amplitude, speed } => {
                let (a, c) = (*amplitude, *speed);
                OuterTraces {
                    u: Self::fill(grid, |x, _| a * (x - c * t).cos()),
                    v: Array2::zeros((grid.nx, grid.ny)),
                    p: Self::fill(grid, |x, _| {
                        a * c * (x - c * t).cos() - a * a * (2.0 * (x - c * t)).cos() / 4.0
                    }),
                }
            }
            OuterFlow::Sampled(s) => {
                let (i0, i1, th) = s.bracket(t);
                let lerp = |lo: &Array2<f64>, hi: &Array2<f64>| lo * (1.0 - th) + hi * th;
                OuterTraces {
                    u: lerp(&s.u[i0], &s.u[i1]),
                    v: lerp(&s.v[i0], &s.v[i1]),
                    p: lerp(&s.p[i0], &s.p[i1]),
                }
            }
        }
    }

    /// Time derivative of the traces; sampled data need at least two samples.
    pub fn dt_traces(&self, grid: &GridSpec, t: f64) -> Result<OuterTraces> {
        match self {
            OuterFlow::Constant { .. } => Ok(OuterTraces {
                u: Array2::zeros((grid.nx, grid.ny)),
                v: Array2::zeros((grid.nx, grid.ny)),
                p: Array2::zeros((grid.nx, grid.ny)),
            }),
            OuterFlow::TravelingWave { amplitude, speed } => {
                let (a, c) = (*amplitude, *speed);
                Ok(OuterTraces {
                    u: Self::fill(grid, |x, _| a * c * (x - c * t).sin()),
                    v: Array2::zeros((grid.nx, grid.ny)),
                    p: Self::fill(grid, |x, _| {
                        a * c * c * (x - c * t).sin() - a * a * c * (2.0 * (x - c * t)).sin() / 2.0
                    }),
                })
            }
            OuterFlow::Sampled(s) => {
                if s.times.len() < 2 {
                    return Err(Error::validation(
                        "time derivative of sampled outer data needs at least two time samples",
                    ));
                }
                let (i0, i1, _) = s.bracket(t);
                let (i0, i1) = if i0 == i1 {
                    if i1 + 1 < s.times.len() {
                        (i0, i1 + 1)
                    } else {
                        (i0 - 1, i1)
                    }
                } else {
                    (i0, i1)
                };
                let dt = s.times[i1] - s.times[i0];
                Ok(OuterTraces {
                    u: (&s.u[i1] - &s.u[i0]) / dt,
                    v: (&s.v[i1] - &s.v[i0]) / dt,
                    p: (&s.p[i1] - &s.p[i0]) / dt,
                })
            }
        }
    }
}

impl SampledOuter {
    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let ts = &self.times;
        if t <= ts[0] {
            return (0, 0, 0.0);
        }
        if t >= *ts.last().unwrap() {
            let n = ts.len() - 1;
            return (n, n, 0.0);
        }
        let mut i = 0;
        while ts[i + 1] < t {
            i += 1;
        }
        let th = (t - ts[i]) / (ts[i + 1] - ts[i]);
        (i, i + 1, th)
    }
}

/// The discretized velocity fields and all derived quantities at one time.
///
/// `w`, `psi`, `eta`, `xi`, `zeta` are always consistent with `u`, `v`:
/// they are recomputed by [`FlowState::refresh_derived`], which every
/// constructor and the solver call after touching `u` or `v`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub epsilon: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
    pub psi: ScalarField,
    pub eta: ScalarField,
    pub xi: ScalarField,
    pub zeta: ScalarField,
}

impl FlowState {
    pub fn new(t: f64, epsilon: f64, u: ScalarField, v: ScalarField) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(Error::validation("epsilon must be >= 0"));
        }
        let grid = Arc::clone(&u.grid);
        let mut state = FlowState {
            t,
            epsilon,
            w: grid.zeros(),
            psi: grid.zeros(),
            eta: grid.zeros(),
            xi: grid.zeros(),
            zeta: grid.zeros(),
            u,
            v,
        };
        state.refresh_derived()?;
        Ok(state)
    }

    pub fn zero(grid: &Arc<GridSpec>, epsilon: f64) -> Self {
        FlowState::new(0.0, epsilon, grid.zeros(), grid.zeros()).expect("zero state")
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.u.grid
    }

    /// Recompute w = -int_0^z (d_x u + d_y v) and the normal-derivative
    /// ladder psi, eta, xi, zeta from the current u, v.
    pub fn refresh_derived(&mut self) -> Result<()> {
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::numerics("refresh_derived: non-finite velocity field"));
        }
        let div_t = tangential_derivative(&self.u, (1, 0))?
            .add(&tangential_derivative(&self.v, (0, 1))?);
        self.w = cumulative_normal_integral(&div_t).scale(-1.0);
        self.psi = normal_derivative(&self.u, 1)?;
        self.eta = normal_derivative(&self.v, 1)?;
        self.xi = normal_derivative(&self.psi, 1)?;
        self.zeta = normal_derivative(&self.eta, 1)?;
        Ok(())
    }

    /// Cell-centered divergence residual of the stored quadrature w, relative
    /// to ||d_x u|| + ||d_y v||. Exact (to rounding) by construction of the
    /// trapezoid antiderivative.
    pub fn divergence_residual(&self) -> Result<f64> {
        let du = tangential_derivative(&self.u, (1, 0))?;
        let dv = tangential_derivative(&self.v, (0, 1))?;
        let div_t = du.add(&dv);
        let resid = divergence_residual_cells(&div_t, &self.w);
        let scale = weighted_l2(&du, 0.0) + weighted_l2(&dv, 0.0);
        Ok(resid / scale.max(1e-300))
    }
}

/// Root-mean-square over the torus nodes.
pub fn plane_rms(a: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    (a.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
}

/// One compatibility condition: residual RMS and pass flag.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub conditions: Vec<ConditionReport>,
    pub tol: f64,
    pub pass: bool,
}

impl CompatibilityReport {
    pub fn failed_names(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Evaluate the five initial-data compatibility conditions:
/// wall values, far-field values, the wall pressure-gradient relation for
/// (d_z psi, d_z eta), and the two third-order wall relations. Residuals are
/// RMS over the torus; report-only.
pub fn check_compatibility(
    u0: &ScalarField,
    v0: &ScalarField,
    outer: &OuterFlow,
    tol: f64,
) -> Result<CompatibilityReport> {
    let grid = &u0.grid;
    if v0.grid.as_ref() != grid.as_ref() {
        return Err(Error::validation("u0 and v0 must share a grid"));
    }
    let t0 = 0.0;
    let traces = outer.traces(grid, t0);
    let dpx = plane_derivative(&traces.p, 1, 0);
    let dpy = plane_derivative(&traces.p, 0, 1);
    let dt_traces = outer.dt_traces(grid, t0)?;
    let dt_dpx = plane_derivative(&dt_traces.p, 1, 0);
    let dt_dpy = plane_derivative(&dt_traces.p, 0, 1);

    // wall traces of d_z^k u0, v0 for k = 1..4
    let wu = wall_normal_derivatives(u0, 4)?;
    let wv = wall_normal_derivatives(v0, 4)?;
    let psi0 = &wu[0];
    let eta0 = &wv[0];

    let mut conditions = Vec::new();
    let mut push = |name: &str, residual: f64| {
        conditions.push(ConditionReport {
            name: name.to_string(),
            residual,
            pass: residual <= tol,
        });
    };

    // 1: no-slip wall values
    let r1 = plane_rms(&u0.plane(0)) + plane_rms(&v0.plane(0));
    push("wall_values", r1);

    // 2: far-field match at the truncation height
    let top = grid.nz - 1;
    let r2 = plane_rms(&(&u0.plane(top) - &traces.u)) + plane_rms(&(&v0.plane(top) - &traces.v));
    push("far_field", r2);

    // 3: (d_z psi0, d_z eta0)|_0 = (d_x p, d_y p)
    let r3 = plane_rms(&(&wu[1] - &dpx)) + plane_rms(&(&wv[1] - &dpy));
    push("wall_pressure_gradient", r3);

    // 4: d_z^3 psi0|_0 = psi0 (d_x psi0 - d_y eta0) + 2 eta0 d_y psi0 + d_t d_x p
    let dx_psi0 = plane_derivative(psi0, 1, 0);
    let dy_psi0 = plane_derivative(psi0, 0, 1);
    let dx_eta0 = plane_derivative(eta0, 1, 0);
    let dy_eta0 = plane_derivative(eta0, 0, 1);
    let rhs4 = psi0 * &(&dx_psi0 - &dy_eta0) + eta0 * &dy_psi0 * 2.0 + &dt_dpx;
    let r4 = plane_rms(&(&wu[3] - &rhs4));
    push("third_order_u", r4);

    // 5: d_z^3 eta0|_0 = eta0 (d_y eta0 - d_x psi0) + 2 psi0 d_x eta0 + d_t d_y p
    let rhs5 = eta0 * &(&dy_eta0 - &dx_psi0) + psi0 * &dx_eta0 * 2.0 + &dt_dpy;
    let r5 = plane_rms(&(&wv[3] - &rhs5));
    push("third_order_v", r5);

    let pass = conditions.iter().all(|c| c.pass);
    Ok(CompatibilityReport {
        conditions,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BernoulliReport {
    pub residual_u: f64,
    pub residual_v: f64,
    pub pass: bool,
}

/// Residual RMS of both Bernoulli relations for the outer data at time t.
pub fn check_bernoulli(
    outer: &OuterFlow,
    grid: &GridSpec,
    t: f64,
    tol: f64,
) -> Result<BernoulliReport> {
    let tr = outer.traces(grid, t);
    let dt = outer.dt_traces(grid, t)?;
    let ux = plane_derivative(&tr.u, 1, 0);
    let uy = plane_derivative(&tr.u, 0, 1);
    let vx = plane_derivative(&tr.v, 1, 0);
    let vy = plane_derivative(&tr.v, 0, 1);
    let px = plane_derivative(&tr.p, 1, 0);
    let py = plane_derivative(&tr.p, 0, 1);
    let ru = &dt.u + &(&tr.u * &ux) + &(&tr.v * &uy) + &px;
    let rv = &dt.v + &(&tr.u * &vx) + &(&tr.v * &vy) + &py;
    let residual_u = plane_rms(&ru);
    let residual_v = plane_rms(&rv);
    Ok(BernoulliReport {
        residual_u,
        residual_v,
        pass: residual_u <= tol && residual_v <= tol,
    })
}
