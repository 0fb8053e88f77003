//! Manufactured solutions: a small exact-calculus engine for tensor-product
//! fields and the registry of planted cases with their symbolic forcings.
//!
//! Fields have the form
//!   sum_i  c_i * trig(kx x + ky y) * e^{-lambda t} * z^p e^{-q z} (1+z^2)^{-r/2},
//! which is closed under d_x, d_y, d_z, d_t. The vertical antiderivative is
//! closed-form when r = 0 and falls back to adaptive quadrature otherwise, so
//! the nonlocal vertical velocity of a planted field is still exact to
//! quadrature tolerance (~1e-12), independent of the solver's discretization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::state::FlowState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Trig {
    Cos,
    Sin,
}

/// c * z^p * e^{-q z} * (1+z^2)^{-r/2}
#[derive(Debug, Clone, Copy)]
pub struct ZTerm {
    pub c: f64,
    pub p: u32,
    pub q: f64,
    pub r: u32,
}

impl ZTerm {
    pub fn new(c: f64, p: u32, q: f64, r: u32) -> Self {
        ZTerm { c, p, q, r }
    }

    fn eval(&self, z: f64) -> f64 {
        let mut v = self.c * (-self.q * z).exp();
        if self.p > 0 {
            v *= z.powi(self.p as i32);
        }
        if self.r > 0 {
            v *= (1.0 + z * z).powf(-(self.r as f64) / 2.0);
        }
        v
    }
}

/// One tensor-product term trig(kx x + ky y) e^{-lambda t} * zpoly(z).
#[derive(Debug, Clone)]
struct STerm {
    trig: Trig,
    kx: i32,
    ky: i32,
    lambda: f64,
    z: Vec<ZTerm>,
}

/// A field closed under the tangential/normal/time derivatives used here.
#[derive(Debug, Clone, Default)]
pub struct SymField {
    terms: Vec<STerm>,
}

impl SymField {
    pub fn zero() -> Self {
        SymField { terms: Vec::new() }
    }

    /// trig(kx x + ky y) e^{-lambda t} * (sum of z-terms)
    pub fn mode(trig: Trig, kx: i32, ky: i32, lambda: f64, z: Vec<ZTerm>) -> Self {
        if matches!(trig, Trig::Sin) && kx == 0 && ky == 0 {
            return SymField::zero();
        }
        SymField {
            terms: vec![STerm {
                trig,
                kx,
                ky,
                lambda,
                z,
            }],
        }
    }

    /// z-profile only (constant in t, x, y).
    pub fn profile(z: Vec<ZTerm>) -> Self {
        Self::mode(Trig::Cos, 0, 0, 0.0, z)
    }

    pub fn add(&self, other: &SymField) -> SymField {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        SymField { terms }
    }

    pub fn scale(&self, c: f64) -> SymField {
        let mut out = self.clone();
        for t in &mut out.terms {
            for z in &mut t.z {
                z.c *= c;
            }
        }
        out
    }

    pub fn dt(&self) -> SymField {
        let mut out = self.clone();
        for t in &mut out.terms {
            for z in &mut t.z {
                z.c *= -t.lambda;
            }
        }
        out
    }

    pub fn dx(&self) -> SymField {
        self.d_tangential(true)
    }

    pub fn dy(&self) -> SymField {
        self.d_tangential(false)
    }

    fn d_tangential(&self, in_x: bool) -> SymField {
        let mut out = SymField::zero();
        for t in &self.terms {
            let k = if in_x { t.kx } else { t.ky } as f64;
            if k == 0.0 {
                continue;
            }
            let (trig, sign) = match t.trig {
                Trig::Cos => (Trig::Sin, -1.0),
                Trig::Sin => (Trig::Cos, 1.0),
            };
            let mut z = t.z.clone();
            for zt in &mut z {
                zt.c *= sign * k;
            }
            out.terms.push(STerm {
                trig,
                kx: t.kx,
                ky: t.ky,
                lambda: t.lambda,
                z,
            });
        }
        out
    }

    pub fn dz(&self) -> SymField {
        let mut out = SymField::zero();
        for t in &self.terms {
            let mut z = Vec::new();
            for zt in &t.z {
                if zt.p > 0 {
                    z.push(ZTerm::new(zt.c * zt.p as f64, zt.p - 1, zt.q, zt.r));
                }
                if zt.q != 0.0 {
                    z.push(ZTerm::new(-zt.c * zt.q, zt.p, zt.q, zt.r));
                }
                if zt.r > 0 {
                    z.push(ZTerm::new(-zt.c * zt.r as f64, zt.p + 1, zt.q, zt.r + 2));
                }
            }
            out.terms.push(STerm {
                trig: t.trig,
                kx: t.kx,
                ky: t.ky,
                lambda: t.lambda,
                z,
            });
        }
        out
    }

    pub fn dz_n(&self, n: usize) -> SymField {
        let mut f = self.clone();
        for _ in 0..n {
            f = f.dz();
        }
        f
    }

    pub fn dx_n(&self, n: usize) -> SymField {
        let mut f = self.clone();
        for _ in 0..n {
            f = f.dx();
        }
        f
    }

    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            let phase = term.kx as f64 * x + term.ky as f64 * y;
            let tang = match term.trig {
                Trig::Cos => phase.cos(),
                Trig::Sin => phase.sin(),
            };
            let decay = (-term.lambda * t).exp();
            let zval: f64 = term.z.iter().map(|zt| zt.eval(z)).sum();
            acc += tang * decay * zval;
        }
        acc
    }

    pub fn eval_field(&self, grid: &Arc<GridSpec>, t: f64) -> ScalarField {
        let mut out = grid.zeros();
        let xs = grid.x_nodes();
        let ys = grid.y_nodes();
        let zs = grid.z_nodes();
        for term in &self.terms {
            let decay = (-term.lambda * t).exp();
            let zvals: Vec<f64> = zs
                .iter()
                .map(|&z| term.z.iter().map(|zt| zt.eval(z)).sum())
                .collect();
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    let phase = term.kx as f64 * x + term.ky as f64 * y;
                    let tang = match term.trig {
                        Trig::Cos => phase.cos(),
                        Trig::Sin => phase.sin(),
                    } * decay;
                    for (k, zv) in zvals.iter().enumerate() {
                        out.values[[i, j, k]] += tang * zv;
                    }
                }
            }
        }
        out
    }

    /// Closed-form vertical antiderivative int_0^z, when every z-term has r = 0.
    pub fn antiderivative_z(&self) -> Option<SymField> {
        let mut out = SymField::zero();
        for term in &self.terms {
            let mut z = Vec::new();
            for zt in &term.z {
                if zt.r != 0 {
                    return None;
                }
                if zt.q == 0.0 {
                    z.push(ZTerm::new(zt.c / (zt.p + 1) as f64, zt.p + 1, 0.0, 0));
                } else {
                    // int_0^z s^p e^{-qs} ds = p!/q^{p+1} - e^{-qz} sum_j (p!/j!) z^j / q^{p+1-j}
                    let p = zt.p;
                    let q = zt.q;
                    let pfact: f64 = (1..=p).map(|k| k as f64).product();
                    z.push(ZTerm::new(zt.c * pfact / q.powi(p as i32 + 1), 0, 0.0, 0));
                    let mut jfact = 1.0;
                    for j in 0..=p {
                        if j > 0 {
                            jfact *= j as f64;
                        }
                        let coef = pfact / jfact / q.powi((p + 1 - j) as i32);
                        z.push(ZTerm::new(-zt.c * coef, j, q, 0));
                    }
                }
            }
            out.terms.push(STerm {
                trig: term.trig,
                kx: term.kx,
                ky: term.ky,
                lambda: term.lambda,
                z,
            });
        }
        Some(out)
    }

    /// int_0^{z_k} of the field at every node: symbolic when possible,
    /// adaptive Simpson (tol ~1e-12) otherwise.
    pub fn cumulative_field(&self, grid: &Arc<GridSpec>, t: f64) -> ScalarField {
        if let Some(anti) = self.antiderivative_z() {
            return anti.eval_field(grid, t);
        }
        let mut out = grid.zeros();
        let xs = grid.x_nodes();
        let ys = grid.y_nodes();
        let zs = grid.z_nodes();
        for term in &self.terms {
            let decay = (-term.lambda * t).exp();
            let prof = |z: f64| -> f64 { term.z.iter().map(|zt| zt.eval(z)).sum() };
            let mut cum = vec![0.0; zs.len()];
            for k in 1..zs.len() {
                cum[k] = cum[k - 1] + adaptive_simpson(&prof, zs[k - 1], zs[k], 1e-13, 24);
            }
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    let phase = term.kx as f64 * x + term.ky as f64 * y;
                    let tang = match term.trig {
                        Trig::Cos => phase.cos(),
                        Trig::Sin => phase.sin(),
                    } * decay;
                    for (k, c) in cum.iter().enumerate() {
                        out.values[[i, j, k]] += tang * c;
                    }
                }
            }
        }
        out
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let whole = simpson(f, a, b);
    rec(f, a, b, whole, tol, depth)
}

/// A planted case: closed-form (u, v) plus everything the verifier needs.
pub enum MmsCase {
    Symbolic {
        id: &'static str,
        u: SymField,
        v: SymField,
    },
    /// Hand-coded closed forms for fields outside the tensor-product family
    /// (analytic but not band-limited tangential dependence).
    Closed(ClosedCase),
}

type Scalar4 = Box<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

pub struct ClosedCase {
    pub id: &'static str,
    pub u: Scalar4,
    pub v: Scalar4,
    pub w: Scalar4,
    /// forcing without the -eps * lap_t u part (added generically)
    pub fu_core: Scalar4,
    pub fv_core: Scalar4,
    pub lap_t_u: Scalar4,
    pub lap_t_v: Scalar4,
}

impl MmsCase {
    pub fn id(&self) -> &'static str {
        match self {
            MmsCase::Symbolic { id, .. } => id,
            MmsCase::Closed(c) => c.id,
        }
    }

    /// Exact planted state sampled on the grid (derived fields are the
    /// discrete ones, recomputed by refresh).
    pub fn state(&self, grid: &Arc<GridSpec>, t: f64, epsilon: f64) -> Result<FlowState> {
        let (u, v) = match self {
            MmsCase::Symbolic { u, v, .. } => (u.eval_field(grid, t), v.eval_field(grid, t)),
            MmsCase::Closed(c) => (
                grid.sample(|x, y, z| (c.u)(t, x, y, z)),
                grid.sample(|x, y, z| (c.v)(t, x, y, z)),
            ),
        };
        let mut st = FlowState::new(t, epsilon, u, v)?;
        st.t = t;
        Ok(st)
    }

    /// Forcing fields (F_u, F_v) that make the planted pair solve the forced
    /// system exactly; evaluated from closed forms, not from grid operators.
    pub fn forcing(
        &self,
        grid: &Arc<GridSpec>,
        t: f64,
        epsilon: f64,
    ) -> (ScalarField, ScalarField) {
        match self {
            MmsCase::Symbolic { u, v, .. } => {
                let ue = u.eval_field(grid, t);
                let ve = v.eval_field(grid, t);
                let div = u.dx().add(&v.dy());
                let we = div.cumulative_field(grid, t).scale(-1.0);

                let mk = |f: &SymField| {
                    let ft = f.dt().eval_field(grid, t);
                    let fx = f.dx().eval_field(grid, t);
                    let fy = f.dy().eval_field(grid, t);
                    let fz = f.dz().eval_field(grid, t);
                    let fzz = f.dz_n(2).eval_field(grid, t);
                    let lap = f.dx_n(2).add(&f.dy().dy()).eval_field(grid, t);
                    let mut out = ft;
                    out = out.add(&ue.mul(&fx));
                    out = out.add(&ve.mul(&fy));
                    out = out.add(&we.mul(&fz));
                    out = out.sub(&fzz);
                    out.sub(&lap.scale(epsilon))
                };
                (mk(u), mk(v))
            }
            MmsCase::Closed(c) => {
                let fu = grid
                    .sample(|x, y, z| (c.fu_core)(t, x, y, z) - epsilon * (c.lap_t_u)(t, x, y, z));
                let fv = grid
                    .sample(|x, y, z| (c.fv_core)(t, x, y, z) - epsilon * (c.lap_t_v)(t, x, y, z));
                (fu, fv)
            }
        }
    }

    /// Symbolic (u, v) when available (for exact-derivative oracles).
    pub fn symbolic(&self) -> Option<(&SymField, &SymField)> {
        match self {
            MmsCase::Symbolic { u, v, .. } => Some((u, v)),
            MmsCase::Closed(_) => None,
        }
    }
}

fn sin_x_cos_y(kx: i32, ky: i32, lambda: f64, z: Vec<ZTerm>) -> SymField {
    // sin(kx x) cos(ky y) = 1/2 sin(kx x + ky y) + 1/2 sin(kx x - ky y)
    let half: Vec<ZTerm> = z
        .iter()
        .map(|t| ZTerm::new(t.c * 0.5, t.p, t.q, t.r))
        .collect();
    SymField::mode(Trig::Sin, kx, ky, lambda, half.clone())
        .add(&SymField::mode(Trig::Sin, kx, -ky, lambda, half))
}

fn sin_x_sin_y(kx: i32, ky: i32, lambda: f64, z: Vec<ZTerm>) -> SymField {
    // sin(kx x) sin(ky y) = 1/2 cos(kx x - ky y) - 1/2 cos(kx x + ky y)
    let half: Vec<ZTerm> = z
        .iter()
        .map(|t| ZTerm::new(t.c * 0.5, t.p, t.q, t.r))
        .collect();
    let neg: Vec<ZTerm> = z
        .iter()
        .map(|t| ZTerm::new(-t.c * 0.5, t.p, t.q, t.r))
        .collect();
    SymField::mode(Trig::Cos, kx, -ky, lambda, half)
        .add(&SymField::mode(Trig::Cos, kx, ky, lambda, neg))
}

fn cos_x_sin_y(kx: i32, ky: i32, lambda: f64, z: Vec<ZTerm>) -> SymField {
    // cos(kx x) sin(ky y) = 1/2 sin(kx x + ky y) - 1/2 sin(kx x - ky y)
    let half: Vec<ZTerm> = z
        .iter()
        .map(|t| ZTerm::new(t.c * 0.5, t.p, t.q, t.r))
        .collect();
    let neg: Vec<ZTerm> = z
        .iter()
        .map(|t| ZTerm::new(-t.c * 0.5, t.p, t.q, t.r))
        .collect();
    SymField::mode(Trig::Sin, kx, ky, lambda, half)
        .add(&SymField::mode(Trig::Sin, kx, -ky, lambda, neg))
}

/// Case registry. Unknown ids are rejected.
pub fn case(id: &str) -> Result<MmsCase> {
    match id {
        "zero" => Ok(MmsCase::Symbolic {
            id: "zero",
            u: SymField::zero(),
            v: SymField::zero(),
        }),
        // u = sin(x) (1 - e^{-z}) <z>^{-1} e^{-t}, v = 0
        "single-mode" => Ok(MmsCase::Symbolic {
            id: "single-mode",
            u: SymField::mode(
                Trig::Sin,
                1,
                0,
                1.0,
                vec![ZTerm::new(1.0, 0, 0.0, 1), ZTerm::new(-1.0, 0, 1.0, 1)],
            ),
            v: SymField::zero(),
        }),
        // genuine secondary flow, two tangential modes, all closed-form
        "two-mode" => {
            let zp = vec![ZTerm::new(1.0, 0, 1.0, 0), ZTerm::new(-1.0, 0, 2.0, 0)];
            let zp2 = vec![ZTerm::new(0.5, 0, 1.0, 0), ZTerm::new(-0.5, 0, 3.0, 0)];
            let u = sin_x_cos_y(1, 1, 1.0, zp.clone()).add(&SymField::mode(
                Trig::Sin,
                1,
                1,
                2.0,
                zp2,
            ));
            let v = cos_x_sin_y(1, 1, 1.0, zp).scale(0.7);
            Ok(MmsCase::Symbolic {
                id: "two-mode",
                u,
                v,
            })
        }
        // base shear z e^{-z} with critical curve exactly at z = 1 for all
        // (x, y), plus a small modulated perturbation that keeps the ratio
        // xi/psi tangentially constant
        "critical-shear" => {
            let a = 0.1;
            let ze = vec![ZTerm::new(1.0, 1, 1.0, 0)];
            let u = SymField::profile(ze).add(&sin_x_cos_y(
                1,
                1,
                1.0,
                vec![ZTerm::new(a, 1, 1.0, 0)],
            ));
            let v = sin_x_sin_y(
                1,
                1,
                1.0,
                vec![ZTerm::new(a, 0, 1.0, 0), ZTerm::new(-a, 0, 2.0, 0)],
            );
            Ok(MmsCase::Symbolic {
                id: "critical-shear",
                u,
                v,
            })
        }
        // analytic but not band-limited in x: u = e^{-t} e^{cos x} phi(z)
        "analytic-x" => {
            let phi = |z: f64| (-0.5 * z).exp() - (-1.5 * z).exp();
            let phi1 = |z: f64| -0.5 * (-0.5 * z).exp() + 1.5 * (-1.5 * z).exp();
            let phi2 = |z: f64| 0.25 * (-0.5 * z).exp() - 2.25 * (-1.5 * z).exp();
            let cap_phi =
                |z: f64| 2.0 * (1.0 - (-0.5 * z).exp()) - (2.0 / 3.0) * (1.0 - (-1.5 * z).exp());
            let g = |x: f64| x.cos().exp();
            let g1 = |x: f64| -x.sin() * x.cos().exp();
            let g2 = |x: f64| (x.sin() * x.sin() - x.cos()) * x.cos().exp();
            let u = move |t: f64, x: f64, _y: f64, z: f64| (-t).exp() * g(x) * phi(z);
            let w = move |t: f64, x: f64, _y: f64, z: f64| -(-t).exp() * g1(x) * cap_phi(z);
            let fu_core = move |t: f64, x: f64, _y: f64, z: f64| {
                let e = (-t).exp();
                let uu = e * g(x) * phi(z);
                let du_t = -uu;
                let du_x = e * g1(x) * phi(z);
                let du_z = e * g(x) * phi1(z);
                let du_zz = e * g(x) * phi2(z);
                let ww = -e * g1(x) * cap_phi(z);
                du_t + uu * du_x + ww * du_z - du_zz
            };
            let lap_t_u = move |t: f64, x: f64, _y: f64, z: f64| (-t).exp() * g2(x) * phi(z);
            Ok(MmsCase::Closed(ClosedCase {
                id: "analytic-x",
                u: Box::new(u),
                v: Box::new(|_, _, _, _| 0.0),
                w: Box::new(w),
                fu_core: Box::new(fu_core),
                fv_core: Box::new(|_, _, _, _| 0.0),
                lap_t_u: Box::new(lap_t_u),
                lap_t_v: Box::new(|_, _, _, _| 0.0),
            }))
        }
        other => Err(Error::validation(format!(
            "unknown manufactured case '{other}'"
        ))),
    }
}

pub fn case_ids() -> &'static [&'static str] {
    &["zero", "single-mode", "two-mode", "critical-shear", "analytic-x"]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Stretch;

    fn fd4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn symbolic_derivatives_match_finite_differences() {
        let f = SymField::mode(
            Trig::Sin,
            2,
            -1,
            0.7,
            vec![ZTerm::new(1.3, 2, 1.5, 1), ZTerm::new(-0.4, 0, 0.5, 3)],
        );
        let pts = [(0.2, 1.1, 0.4, 0.9), (1.5, 0.3, 2.0, 2.4)];
        for &(t, x, y, z) in &pts {
            let h = 1e-4;
            assert!((f.dx().eval(t, x, y, z) - fd4(|s| f.eval(t, s, y, z), x, h)).abs() < 1e-9);
            assert!((f.dy().eval(t, x, y, z) - fd4(|s| f.eval(t, x, s, z), y, h)).abs() < 1e-9);
            assert!((f.dz().eval(t, x, y, z) - fd4(|s| f.eval(t, x, y, s), z, h)).abs() < 1e-9);
            assert!((f.dt().eval(t, x, y, z) - fd4(|s| f.eval(s, x, y, z), t, h)).abs() < 1e-9);
            let d2 = f.dz().dz().eval(t, x, y, z);
            let d2fd = fd4(|s| f.dz().eval(t, x, y, s), z, h);
            assert!((d2 - d2fd).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_antiderivative() {
        let f = SymField::profile(vec![
            ZTerm::new(2.0, 3, 1.7, 0),
            ZTerm::new(-1.0, 0, 0.0, 0),
            ZTerm::new(0.5, 1, 0.0, 0),
        ]);
        let anti = f.antiderivative_z().unwrap();
        // check F' = f and F(0) = 0
        for z in [0.3, 1.0, 2.7, 9.0] {
            let dfd = fd4(|s| anti.eval(0.0, 0.0, 0.0, s), z, 1e-4);
            assert!((dfd - f.eval(0.0, 0.0, 0.0, z)).abs() < 1e-8, "z={z}");
        }
        assert!(anti.eval(0.0, 0.0, 0.0, 0.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_antiderivative_matches_symbolic_when_both_apply() {
        let g = GridSpec::new(8, 8, 33, 16.0, Stretch::Rational { l: 3.0 }).unwrap();
        let f = SymField::mode(Trig::Cos, 1, 0, 0.3, vec![ZTerm::new(1.0, 2, 1.1, 0)]);
        let sym = f.antiderivative_z().unwrap().eval_field(&g, 0.2);
        // force the quadrature path with an r > 0 ghost term of zero weight
        let f2 = f.add(&SymField::profile(vec![ZTerm::new(0.0, 0, 0.0, 1)]));
        assert!(f2.antiderivative_z().is_none());
        let quad = f2.cumulative_field(&g, 0.2);
        assert!(sym.sub(&quad).max_abs() < 1e-11);
    }

    #[test]
    fn forcing_makes_planted_field_solve_the_system() {
        // check F_u = u_t + u u_x + v u_y + w u_z - u_zz - eps lap u by
        // comparing against a fine-stencil numerical evaluation at a point
        let g = GridSpec::new(16, 16, 33, 16.0, Stretch::Uniform).unwrap();
        for id in ["single-mode", "two-mode", "critical-shear", "analytic-x"] {
            let case = case(id).unwrap();
            let eps = 0.01;
            let t = 0.15;
            let (fu, _fv) = case.forcing(&g, t, eps);

            let ueval = |t: f64, x: f64, y: f64, z: f64| match &case {
                MmsCase::Symbolic { u, .. } => u.eval(t, x, y, z),
                MmsCase::Closed(c) => (c.u)(t, x, y, z),
            };
            let veval = |t: f64, x: f64, y: f64, z: f64| match &case {
                MmsCase::Symbolic { v, .. } => v.eval(t, x, y, z),
                MmsCase::Closed(c) => (c.v)(t, x, y, z),
            };
            // w by fine quadrature of -(u_x + v_y)
            let wq = |x: f64, y: f64, z: f64| {
                let div = |zz: f64| {
                    let h = 1e-4;
                    fd4(|s| ueval(t, s, y, zz), x, h) + fd4(|s| veval(t, x, s, zz), y, h)
                };
                -adaptive_simpson(&div, 0.0, z, 1e-11, 20)
            };

            let (i, j, k) = (3, 5, 14);
            let (x, y, z) = (g.x_nodes()[i], g.y_nodes()[j], g.z_nodes()[k]);
            let h = 1e-4;
            let ut = fd4(|s| ueval(s, x, y, z), t, h);
            let ux = fd4(|s| ueval(t, s, y, z), x, h);
            let uy = fd4(|s| ueval(t, x, s, z), y, h);
            let uz = fd4(|s| ueval(t, x, y, s), z, h);
            let uzz = fd4(|s| fd4(|r| ueval(t, x, y, r), s, h), z, h);
            let uxx = fd4(|s| fd4(|r| ueval(t, r, y, z), s, h), x, h);
            let uyy = fd4(|s| fd4(|r| ueval(t, x, r, z), s, h), y, h);
            let expect = ut + ueval(t, x, y, z) * ux + veval(t, x, y, z) * uy + wq(x, y, z) * uz
                - uzz
                - eps * (uxx + uyy);
            let got = fu.values[[i, j, k]];
            assert!(
                (got - expect).abs() < 2e-5,
                "case {id}: forcing {got} vs fd {expect}"
            );
        }
    }

    #[test]
    fn critical_shear_curve_is_exactly_at_one() {
        let c = case("critical-shear").unwrap();
        let (u, _) = c.symbolic().unwrap();
        let psi = u.dz();
        for &(t, x, y) in &[(0.0, 0.3, 1.2), (0.4, 2.0, 5.0)] {
            assert!(psi.eval(t, x, y, 1.0).abs() < 1e-14);
            assert!(psi.eval(t, x, y, 0.5) > 0.0);
            assert!(psi.eval(t, x, y, 1.5) < 0.0);
        }
    }

    #[test]
    fn unknown_case_rejected() {
        assert!(case("nope").is_err());
    }
}
