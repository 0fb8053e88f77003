//! IMEX time integration of the epsilon-regularized system: vertical
//! diffusion via a tridiagonal solve per tangential column, the tangential
//! epsilon-Laplacian via diagonal division in Fourier space per z-plane,
//! advection and pressure forcing explicit (AB2 after an Euler start).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{tangential_derivative, GridSpec, ScalarField};
use crate::spectral;
use crate::state::{FlowState, OuterFlow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImexCnAb2,
    ImexEuler,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub scheme: Scheme,
    /// Advective CFL safety factor in (0, 1].
    pub cfl_safety: f64,
    /// Run halts when max|u| exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            t_end: 0.1,
            epsilon: 0.0,
            scheme: Scheme::ImexCnAb2,
            cfl_safety: 0.9,
            blowup_factor: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation("dt must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::validation("t_end must be >= 0"));
        }
        if self.epsilon < 0.0 {
            return Err(Error::validation("epsilon must be >= 0"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::validation("cfl_safety must lie in (0, 1]"));
        }
        if self.blowup_factor <= 1.0 {
            return Err(Error::validation("blowup_factor must exceed 1"));
        }
        Ok(())
    }
}

/// Optional volume forcing (F_u, F_v) evaluated at a given time (used by the
/// manufactured-solution machinery).
pub type Forcing<'a> = &'a dyn Fn(f64) -> (ScalarField, ScalarField);

/// Explicit advection + pressure + forcing terms for both components.
struct ExplicitTerms {
    eu: ScalarField,
    ev: ScalarField,
}

/// Cached implicit operators: tridiagonal Crank-Nicolson factors for the
/// vertical diffusion (shared by every column) and the Fourier multipliers of
/// the tangential diffusion.
pub struct Stepper {
    grid: Arc<GridSpec>,
    cfg: SolverConfig,
    /// interior rows of D_zz in the mapped coordinate: (sub, diag, super)
    dzz: Vec<(f64, f64, f64)>,
    prev_explicit: Option<ExplicitTerms>,
}

impl Stepper {
    pub fn new(grid: &Arc<GridSpec>, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.nz;
        let ds = grid.ds();
        let mut dzz = vec![(0.0, 0.0, 0.0); n];
        for k in 1..n - 1 {
            let zp = grid.zp_at(k);
            let zpp = grid.zpp_at(k);
            let a = 1.0 / (zp * zp * ds * ds);
            let b = zpp / (zp * zp * zp * 2.0 * ds);
            // d_zz f = a (f_{k-1} - 2 f_k + f_{k+1}) - b (f_{k+1} - f_{k-1})
            dzz[k] = (a + b, -2.0 * a, a - b);
        }
        Ok(Stepper {
            grid: Arc::clone(grid),
            cfg,
            dzz,
            prev_explicit: None,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Advective CFL bound for the current state.
    pub fn cfl_limit(&self, state: &FlowState) -> f64 {
        let g = &self.grid;
        let mut lim = f64::INFINITY;
        let mu = state.u.max_abs();
        let mv = state.v.max_abs();
        let mw = state.w.max_abs();
        if mu > 0.0 {
            lim = lim.min(g.dx() / mu);
        }
        if mv > 0.0 {
            lim = lim.min(g.dy() / mv);
        }
        if mw > 0.0 {
            lim = lim.min(g.dz_min() / mw);
        }
        self.cfg.cfl_safety * lim
    }

    fn explicit_terms(
        &self,
        state: &FlowState,
        outer: &OuterFlow,
        forcing: Option<Forcing>,
    ) -> Result<ExplicitTerms> {
        let g = &self.grid;
        let ux = tangential_derivative(&state.u, (1, 0))?;
        let uy = tangential_derivative(&state.u, (0, 1))?;
        let vx = tangential_derivative(&state.v, (1, 0))?;
        let vy = tangential_derivative(&state.v, (0, 1))?;
        // advection: -(u d_x + v d_y + w d_z)
        let mut eu = state
            .u
            .mul(&ux)
            .add(&state.v.mul(&uy))
            .add(&state.w.mul(&state.psi))
            .scale(-1.0);
        let mut ev = state
            .u
            .mul(&vx)
            .add(&state.v.mul(&vy))
            .add(&state.w.mul(&state.eta))
            .scale(-1.0);
        // pressure forcing: -(d_x p, d_y p), constant in z
        let traces = outer.traces(g, state.t);
        let px = spectral::plane_derivative(&traces.p, 1, 0);
        let py = spectral::plane_derivative(&traces.p, 0, 1);
        for i in 0..g.nx {
            for j in 0..g.ny {
                let (gx, gy) = (px[[i, j]], py[[i, j]]);
                if gx != 0.0 || gy != 0.0 {
                    for k in 0..g.nz {
                        eu.values[[i, j, k]] -= gx;
                        ev.values[[i, j, k]] -= gy;
                    }
                }
            }
        }
        if let Some(f) = forcing {
            let (fu, fv) = f(state.t);
            eu = eu.add(&fu);
            ev = ev.add(&fv);
        }
        Ok(ExplicitTerms { eu, ev })
    }

    /// Solve (I - theta dt D_zz) x = rhs per column with Dirichlet rows
    /// (wall value 0, far-field value from the outer trace).
    fn implicit_z(
        &self,
        rhs: &ScalarField,
        theta_dt: f64,
        top: &ndarray::Array2<f64>,
    ) -> Result<ScalarField> {
        let g = &self.grid;
        let n = g.nz;
        // Thomas algorithm factors are identical for every column
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        for k in 1..n - 1 {
            let (a, b, c) = self.dzz[k];
            sub[k] = -theta_dt * a;
            diag[k] = 1.0 - theta_dt * b;
            sup[k] = -theta_dt * c;
        }
        // forward elimination shared across columns
        let mut cp = vec![0.0; n];
        let mut denom = vec![0.0; n];
        let mut prev_cp = 0.0;
        for k in 0..n {
            let d = diag[k] - sub[k] * prev_cp;
            if d.abs() < 1e-300 {
                return Err(Error::numerics("singular tridiagonal system"));
            }
            denom[k] = d;
            cp[k] = sup[k] / d;
            prev_cp = cp[k];
        }
        let mut out = rhs.clone();
        let mut dp = vec![0.0; n];
        for i in 0..g.nx {
            for j in 0..g.ny {
                dp[0] = 0.0; // wall Dirichlet
                for k in 1..n - 1 {
                    let r = rhs.values[[i, j, k]];
                    dp[k] = (r - sub[k] * dp[k - 1]) / denom[k];
                }
                dp[n - 1] = top[[i, j]]; // far-field Dirichlet
                out.values[[i, j, n - 1]] = dp[n - 1];
                out.values[[i, j, 0]] = 0.0;
                let mut next = dp[n - 1];
                for k in (1..n - 1).rev() {
                    next = dp[k] - cp[k] * next;
                    out.values[[i, j, k]] = next;
                }
            }
        }
        Ok(out)
    }

    /// Apply (I + theta dt D_zz) with one-sided boundary rows left untouched
    /// (they are replaced by Dirichlet values afterwards anyway).
    fn explicit_dzz(&self, f: &ScalarField, theta_dt: f64) -> ScalarField {
        let g = &self.grid;
        let n = g.nz;
        let mut out = f.clone();
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 1..n - 1 {
                    let (a, b, c) = self.dzz[k];
                    let d = a * f.values[[i, j, k - 1]]
                        + b * f.values[[i, j, k]]
                        + c * f.values[[i, j, k + 1]];
                    out.values[[i, j, k]] += theta_dt * d;
                }
            }
        }
        out
    }

    /// Tangential diffusion solve: divide Fourier coefficients by
    /// (1 + theta dt eps k^2) per z-plane; identity when eps = 0.
    fn implicit_tangential(&self, f: &ScalarField, theta_dt_eps: f64) -> ScalarField {
        if theta_dt_eps == 0.0 {
            return f.clone();
        }
        let g = &self.grid;
        let mut spec = spectral::to_spectral(f);
        for i in 0..g.nx {
            let kx = spectral::wavenumber(g.nx, i) as f64;
            for j in 0..g.ny {
                let ky = spectral::wavenumber(g.ny, j) as f64;
                let denom = 1.0 + theta_dt_eps * (kx * kx + ky * ky);
                let m = Complex64::new(1.0 / denom, 0.0);
                for k in 0..g.nz {
                    spec[[i, j, k]] *= m;
                }
            }
        }
        spectral::from_spectral(&g, &spec)
    }

    fn explicit_tangential(&self, f: &ScalarField, theta_dt_eps: f64) -> Result<ScalarField> {
        if theta_dt_eps == 0.0 {
            return Ok(f.clone());
        }
        let lap = tangential_derivative(f, (2, 0))?.add(&tangential_derivative(f, (0, 2))?);
        Ok(f.add(&lap.scale(theta_dt_eps)))
    }

    /// Advance one step; `forcing` supplies manufactured volume sources.
    pub fn step(
        &mut self,
        state: &FlowState,
        outer: &OuterFlow,
        forcing: Option<Forcing>,
    ) -> Result<FlowState> {
        let dt = self.cfg.dt;
        let cfl = self.cfl_limit(state);
        if dt > cfl {
            return Err(Error::numerics(format!(
                "CFL violation: dt = {dt:.3e} exceeds the advective limit {cfl:.3e}; \
                 suggested dt <= {:.3e}",
                0.9 * cfl
            )));
        }

        let expl = self.explicit_terms(state, outer, forcing)?;
        let (wu, wv) = match (self.cfg.scheme, &self.prev_explicit) {
            (Scheme::ImexCnAb2, Some(prev)) => (
                expl.eu.scale(1.5).sub(&prev.eu.scale(0.5)),
                expl.ev.scale(1.5).sub(&prev.ev.scale(0.5)),
            ),
            _ => (expl.eu.clone(), expl.ev.clone()),
        };

        // diffusion weights: Crank-Nicolson after the Euler start
        let theta_imp = match (self.cfg.scheme, &self.prev_explicit) {
            (Scheme::ImexCnAb2, Some(_)) => 0.5,
            _ => 1.0,
        };
        let theta_exp = 1.0 - theta_imp;

        let t_next = state.t + dt;
        let top = outer.traces(&self.grid, t_next);

        let advance = |f: &ScalarField, e: &ScalarField, topv: &ndarray::Array2<f64>| {
            let mut rhs = self.explicit_dzz(f, theta_exp * dt);
            rhs = self.explicit_tangential(&rhs, theta_exp * dt * self.cfg.epsilon)?;
            rhs = rhs.add(&e.scale(dt));
            let z_solved = self.implicit_z(&rhs, theta_imp * dt, topv)?;
            let mut out = self.implicit_tangential(&z_solved, theta_imp * dt * self.cfg.epsilon);
            // reimpose Dirichlet planes touched by the Fourier division
            for i in 0..self.grid.nx {
                for j in 0..self.grid.ny {
                    out.values[[i, j, 0]] = 0.0;
                    out.values[[i, j, self.grid.nz - 1]] = topv[[i, j]];
                }
            }
            Ok::<ScalarField, Error>(out)
        };

        let u_next = advance(&state.u, &wu, &top.u)?;
        let v_next = advance(&state.v, &wv, &top.v)?;

        self.prev_explicit = Some(expl);
        let mut next = FlowState::new(t_next, self.cfg.epsilon, u_next, v_next)?;
        next.t = t_next;
        Ok(next)
    }
}

/// Why a run stopped early.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupInfo {
    pub t: f64,
    pub reason: String,
}

/// A completed run: the sampled snapshots and the stop information.
pub struct Trajectory {
    pub snapshots: Vec<FlowState>,
    pub times: Vec<f64>,
    pub blowup: Option<BlowupInfo>,
}

/// Integrate from `state0`, keeping a snapshot every `snap_every` steps
/// (always including the initial state and, on clean completion, the final
/// one). Blow-up (non-finite fields or max|u| beyond the configured ceiling)
/// halts the run and is recorded, not raised.
pub fn run(
    state0: FlowState,
    outer: &OuterFlow,
    cfg: SolverConfig,
    snap_every: usize,
    forcing: Option<Forcing>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = Arc::clone(state0.grid());
    let mut stepper = Stepper::new(&grid, cfg.clone())?;
    let initial_max = state0.u.max_abs().max(state0.v.max_abs());
    let ceiling = cfg.blowup_factor * initial_max.max(1e-12);
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let every = snap_every.max(1);

    let mut snapshots = vec![state0.clone()];
    let mut times = vec![state0.t];
    let mut state = state0;
    let mut blowup = None;

    for step_idx in 1..=n_steps {
        match stepper.step(&state, outer, forcing) {
            Ok(next) => state = next,
            Err(e) => {
                blowup = Some(BlowupInfo {
                    t: state.t,
                    reason: e.to_string(),
                });
                break;
            }
        }
        let m = state.u.max_abs().max(state.v.max_abs());
        if !m.is_finite() || m > ceiling {
            blowup = Some(BlowupInfo {
                t: state.t,
                reason: if m.is_finite() {
                    format!("amplitude {m:.3e} exceeded the blow-up ceiling {ceiling:.3e}")
                } else {
                    "non-finite field values".to_string()
                },
            });
            break;
        }
        if step_idx % every == 0 || step_idx == n_steps {
            snapshots.push(state.clone());
            times.push(state.t);
        }
    }

    Ok(Trajectory {
        snapshots,
        times,
        blowup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{weighted_l2, Stretch};
    use crate::mms;

    fn grid(nx: usize, ny: usize, nz: usize) -> Arc<GridSpec> {
        GridSpec::new(nx, ny, nz, 16.0, Stretch::Rational { l: 4.0 }).unwrap()
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let g = grid(8, 8, 33);
        let state = FlowState::zero(&g, 0.0);
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.02,
            ..Default::default()
        };
        let traj = run(state, &OuterFlow::zero(), cfg, 5, None).unwrap();
        assert!(traj.blowup.is_none());
        for s in &traj.snapshots {
            assert_eq!(s.u.max_abs(), 0.0);
            assert_eq!(s.v.max_abs(), 0.0);
        }
    }

    #[test]
    fn shear_invariance() {
        let g = grid(8, 8, 65);
        let u0 = g.sample_profile(|z| (z / 2.0).tanh() * (-0.1 * z).exp());
        let state = FlowState::new(0.0, 1e-3, u0, g.zeros()).unwrap();
        let cfg = SolverConfig {
            dt: 5e-4,
            t_end: 0.02,
            epsilon: 1e-3,
            ..Default::default()
        };
        let traj = run(state, &OuterFlow::zero(), cfg, 10, None).unwrap();
        let last = traj.snapshots.last().unwrap();
        // x, y independence is preserved
        let mut dev = 0.0f64;
        for k in 0..g.nz {
            let v0 = last.u.values[[0, 0, k]];
            for i in 0..g.nx {
                for j in 0..g.ny {
                    dev = dev.max((last.u.values[[i, j, k]] - v0).abs());
                }
            }
        }
        assert!(dev <= 1e-12, "deviation {dev}");
    }

    /// 1D Crank-Nicolson heat reference on the same mapped grid.
    fn heat_reference(
        g: &GridSpec,
        profile: impl Fn(f64) -> f64,
        t_end: f64,
        dt: f64,
        top: f64,
    ) -> Vec<f64> {
        let n = g.nz;
        let ds = g.ds();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        for k in 1..n - 1 {
            let zp = g.zp_at(k);
            let zpp = g.zpp_at(k);
            let aa = 1.0 / (zp * zp * ds * ds);
            let bb = zpp / (zp * zp * zp * 2.0 * ds);
            a[k] = aa + bb;
            b[k] = -2.0 * aa;
            c[k] = aa - bb;
        }
        let mut f: Vec<f64> = g.z_nodes().iter().map(|&z| profile(z)).collect();
        let steps = (t_end / dt).round() as usize;
        for _ in 0..steps {
            // rhs = (I + dt/2 A) f with Dirichlet rows
            let mut rhs = f.clone();
            for k in 1..n - 1 {
                rhs[k] += 0.5 * dt * (a[k] * f[k - 1] + b[k] * f[k] + c[k] * f[k + 1]);
            }
            rhs[0] = 0.0;
            rhs[n - 1] = top;
            // solve (I - dt/2 A) f = rhs
            let mut sub = vec![0.0; n];
            let mut dia = vec![1.0; n];
            let mut sup = vec![0.0; n];
            for k in 1..n - 1 {
                sub[k] = -0.5 * dt * a[k];
                dia[k] = 1.0 - 0.5 * dt * b[k];
                sup[k] = -0.5 * dt * c[k];
            }
            let mut cp = vec![0.0; n];
            let mut dp = vec![0.0; n];
            cp[0] = 0.0;
            dp[0] = rhs[0];
            for k in 1..n {
                let m = dia[k] - sub[k] * cp[k - 1];
                cp[k] = sup[k] / m;
                dp[k] = (rhs[k] - sub[k] * dp[k - 1]) / m;
            }
            f[n - 1] = dp[n - 1];
            for k in (0..n - 1).rev() {
                f[k] = dp[k] - cp[k] * f[k + 1];
            }
        }
        f
    }

    #[test]
    fn shear_matches_heat_equation_reference() {
        // tanh-type shear with u -> 1 at infinity, outer (U, V) = (1, 0)
        let g = GridSpec::new(16, 16, 129, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
        let prof = |z: f64| (1.5 * z).tanh();
        let u0 = g.sample_profile(prof);
        let state = FlowState::new(0.0, 0.0, u0, g.zeros()).unwrap();
        let outer = OuterFlow::Constant {
            u: 1.0,
            v: 0.0,
            p: 0.0,
        };
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.1,
            epsilon: 0.0,
            ..Default::default()
        };
        let traj = run(state, &outer, cfg, 1000, None).unwrap();
        assert!(traj.blowup.is_none());
        let last = traj.snapshots.last().unwrap();

        // fine reference: same map, 8x nodes in z, dt/64
        let gf = GridSpec::new(8, 8, 1025, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
        let reference = heat_reference(&gf, prof, 0.1, 1e-3 / 64.0, 1.0);
        // compare on the coarse nodes (every 8th fine node)
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..g.nz {
            let r = reference[8 * k];
            let d = last.u.values[[3, 5, k]] - r;
            num += d * d * g.z_weights()[k];
            den += r * r * g.z_weights()[k];
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-4, "relative error {rel}");
    }

    #[test]
    fn cfl_violation_rejected_with_suggestion() {
        let g = grid(8, 8, 33);
        let u0 = g.sample(|x, _, z| 5.0 * x.sin() * (1.0 - (-z).exp()));
        let state = FlowState::new(0.0, 0.0, u0, g.zeros()).unwrap();
        let cfg = SolverConfig {
            dt: 1.0,
            ..Default::default()
        };
        let mut st = Stepper::new(&g, cfg).unwrap();
        let err = st.step(&state, &OuterFlow::zero(), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("CFL") && msg.contains("suggested"), "{msg}");
    }

    #[test]
    fn epsilon_consistency_cauchy() {
        let g = grid(8, 8, 49);
        let make = || {
            let u0 = g.sample(|x, y, z| {
                0.3 * (x.sin() + (x + y).cos()) * (1.0 - (-z).exp()) * (-0.5 * z).exp()
            });
            FlowState::new(0.0, 0.0, u0, g.zeros()).unwrap()
        };
        let sol = |eps: f64| {
            let cfg = SolverConfig {
                dt: 5e-4,
                t_end: 0.05,
                epsilon: eps,
                ..Default::default()
            };
            let traj = run(make(), &OuterFlow::zero(), cfg, 1000, None).unwrap();
            traj.snapshots.last().unwrap().clone()
        };
        let s2 = sol(1e-2);
        let s3 = sol(1e-3);
        let s4 = sol(1e-4);
        let d23 = weighted_l2(&s2.u.sub(&s3.u), 0.0);
        let d34 = weighted_l2(&s3.u.sub(&s4.u), 0.0);
        assert!(d34 < d23, "differences {d23} -> {d34} should decrease");
    }

    #[test]
    fn mms_solution_error_orders() {
        // z-order: error against the planted field under z-refinement
        let case = mms::case("two-mode").unwrap();
        let err_z = |nz: usize| {
            let g = GridSpec::new(16, 16, nz, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
            let state0 = case.state(&g, 0.0, 0.0).unwrap();
            let cfg = SolverConfig {
                dt: 2.5e-4,
                t_end: 0.02,
                epsilon: 0.0,
                ..Default::default()
            };
            let f = |t: f64| case.forcing(&g, t, 0.0);
            let traj = run(state0, &OuterFlow::zero(), cfg, 10_000, Some(&f)).unwrap();
            assert!(traj.blowup.is_none());
            let last = traj.snapshots.last().unwrap();
            let exact = case.state(&g, last.t, 0.0).unwrap();
            weighted_l2(&last.u.sub(&exact.u), 0.0) / weighted_l2(&exact.u, 0.0)
        };
        let e1 = err_z(33);
        let e2 = err_z(65);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "z-order {order} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn mms_dt_orders() {
        // pure dt order measured against a dt/32 reference, z fixed
        let case = mms::case("two-mode").unwrap();
        let g = GridSpec::new(8, 8, 49, 16.0, Stretch::Rational { l: 4.0 }).unwrap();
        let sol = |dt: f64, scheme: Scheme| {
            let state0 = case.state(&g, 0.0, 0.0).unwrap();
            let cfg = SolverConfig {
                dt,
                t_end: 0.02,
                epsilon: 0.0,
                scheme,
                ..Default::default()
            };
            let f = |t: f64| case.forcing(&g, t, 0.0);
            let traj = run(state0, &OuterFlow::zero(), cfg, 100_000, Some(&f)).unwrap();
            traj.snapshots.last().unwrap().clone()
        };
        for (scheme, min_order) in [(Scheme::ImexEuler, 0.9), (Scheme::ImexCnAb2, 1.8)] {
            let reference = sol(2e-3 / 32.0, scheme);
            let e1 = weighted_l2(&sol(2e-3, scheme).u.sub(&reference.u), 0.0);
            let e2 = weighted_l2(&sol(1e-3, scheme).u.sub(&reference.u), 0.0);
            let order = (e1 / e2).log2();
            assert!(
                order >= min_order,
                "{scheme:?}: dt-order {order} (e1 {e1}, e2 {e2})"
            );
        }
    }

    #[test]
    fn blowup_ceiling_halts_run() {
        let g = grid(8, 8, 33);
        let u0 = g.sample(|x, _, z| 0.1 * x.sin() * (1.0 - (-z).exp()));
        let state = FlowState::new(0.0, 0.0, u0, g.zeros()).unwrap();
        // growing forcing with a ceiling low enough to trip quickly
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.5,
            blowup_factor: 1.5,
            ..Default::default()
        };
        let f = |_t: f64| {
            let fu = g.sample(|x, _, z| 10.0 * x.sin() * (1.0 - (-z).exp()));
            (fu, g.zeros())
        };
        let traj = run(state, &OuterFlow::zero(), cfg, 50, Some(&f)).unwrap();
        let b = traj.blowup.expect("expected blow-up record");
        assert!(b.reason.contains("ceiling"));
        assert!(b.t < 0.5);
    }

    #[test]
    fn t_end_zero_yields_single_snapshot() {
        let g = grid(8, 8, 33);
        let state = FlowState::zero(&g, 0.0);
        let cfg = SolverConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let traj = run(state, &OuterFlow::zero(), cfg, 1, None).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
    }
}
