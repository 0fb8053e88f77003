//! Cutoff profiles around the critical height and the hierarchy of
//! cancellation quantities built from tangential derivatives of the state.


use crate::error::{Error, Result};
use crate::grid::{normal_derivative, GridSpec, ScalarField};
use crate::spectral;
use crate::state::FlowState;

/// Smooth transition s(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)}) with
/// s = 0 for x <= 0 and s = 1 for x >= 1, plus its first two derivatives.
pub fn smooth_step(x: f64) -> (f64, f64, f64) {
    if x <= 1e-9 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 - 1e-9 {
        return (1.0, 0.0, 0.0);
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    let ap = a / (x * x);
    let bp = -b / ((1.0 - x) * (1.0 - x));
    let app = a / x.powi(4) - 2.0 * a / x.powi(3);
    let bpp = b / (1.0 - x).powi(4) - 2.0 * b / (1.0 - x).powi(3);
    let s = a / (a + b);
    let num = ap * b - a * bp;
    let den = (a + b) * (a + b);
    let sp = num / den;
    let spp = (app * b - a * bpp) / den - 2.0 * num * (ap + bp) / (den * (a + b));
    (s, sp, spp)
}

/// The pair of cutoffs around the critical height gamma:
/// tau1 vanishes on the inner band |z-gamma| <= eps and is 1 outside
/// |z-gamma| >= 3 eps/2; tau2 is 1 on |z-gamma| <= 3 eps/2 and supported in
/// |z-gamma| <= 2 eps. Sampled on the grid with analytic derivatives.
#[derive(Debug, Clone)]
pub struct CutoffPair {
    pub eps_c: f64,
    pub gamma_ref: f64,
    pub tau1: Vec<f64>,
    pub tau1_p: Vec<f64>,
    pub tau1_pp: Vec<f64>,
    pub tau2: Vec<f64>,
    pub tau2_p: Vec<f64>,
    pub tau2_pp: Vec<f64>,
    /// vartheta: 1 on [0, 2], supported in [0, 2.5].
    pub vartheta: Vec<f64>,
}

pub fn build_cutoffs(eps_c: f64, gamma_ref: f64, grid: &GridSpec) -> Result<CutoffPair> {
    if !(eps_c > 0.0 && eps_c < 0.25) {
        return Err(Error::validation(format!(
            "cutoff half-width must lie in (0, 1/4), got {eps_c}"
        )));
    }
    if gamma_ref - 2.0 * eps_c <= 0.0 || gamma_ref + 2.0 * eps_c >= grid.z_max {
        return Err(Error::validation(
            "cutoff bands around the critical height exceed the domain",
        ));
    }
    let n = grid.nz;
    let mut out = CutoffPair {
        eps_c,
        gamma_ref,
        tau1: vec![0.0; n],
        tau1_p: vec![0.0; n],
        tau1_pp: vec![0.0; n],
        tau2: vec![0.0; n],
        tau2_p: vec![0.0; n],
        tau2_pp: vec![0.0; n],
        vartheta: vec![0.0; n],
    };
    let half = eps_c / 2.0;
    for (k, &z) in grid.z_nodes().iter().enumerate() {
        let d = z - gamma_ref;
        let sgn = if d >= 0.0 { 1.0 } else { -1.0 };
        let ad = d.abs();
        // tau1 ramps 0 -> 1 over (eps, 3 eps/2)
        let (s, sp, spp) = smooth_step((ad - eps_c) / half);
        out.tau1[k] = s;
        out.tau1_p[k] = sp * sgn / half;
        out.tau1_pp[k] = spp / (half * half);
        // tau2 ramps 1 -> 0 over (3 eps/2, 2 eps)
        let (s, sp, spp) = smooth_step((2.0 * eps_c - ad) / half);
        out.tau2[k] = s;
        out.tau2_p[k] = -sp * sgn / half;
        out.tau2_pp[k] = spp / (half * half);
        // vartheta ramps 1 -> 0 over (2, 2.5)
        let (s, _, _) = smooth_step((2.5 - z) / 0.5);
        out.vartheta[k] = s;
    }
    Ok(out)
}

impl CutoffPair {
    /// Pointwise checks of the support identities on the grid:
    /// tau1 + tau2 >= 1, tau1' = tau1' tau2, tau2' = tau2' tau1,
    /// (1 - tau2) = (1 - tau2) tau1. Returns the worst violation.
    pub fn support_identity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.tau1.len() {
            let (t1, t2) = (self.tau1[k], self.tau2[k]);
            worst = worst.max((1.0 - (t1 + t2)).max(0.0));
            worst = worst.max((self.tau1_p[k] * (1.0 - t2)).abs());
            worst = worst.max((self.tau2_p[k] * (1.0 - t1)).abs());
            worst = worst.max(((1.0 - t2) * (1.0 - t1)).abs().min((1.0 - t2).abs())
                - ((1.0 - t2) * t1 - (1.0 - t2)).abs().min(0.0));
            // (1 - tau2)(1 - tau1) must vanish
            worst = worst.max(((1.0 - t2) * (1.0 - t1)).abs());
        }
        worst
    }
}

fn column_max_abs(f: &ScalarField) -> ndarray::Array2<f64> {
    let g = &f.grid;
    let mut out = ndarray::Array2::zeros((g.nx, g.ny));
    for i in 0..g.nx {
        for j in 0..g.ny {
            let mut m = 0.0f64;
            for k in 0..g.nz {
                m = m.max(f.values[[i, j, k]].abs());
            }
            out[[i, j]] = m;
        }
    }
    out
}

/// num/den with the quotient zeroed wherever |den| falls below
/// floor_rel x (per-column max of |den|); returns the quotient and whether
/// the floor was breached anywhere inside the active support.
fn guarded_ratio(
    num: &ScalarField,
    den: &ScalarField,
    support: &[f64],
    floor_rel: f64,
) -> (ScalarField, bool) {
    let g = &num.grid;
    let colmax = column_max_abs(den);
    let mut out = num.clone();
    let mut breached = false;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let floor = floor_rel * colmax[[i, j]];
            for k in 0..g.nz {
                let d = den.values[[i, j, k]];
                if d.abs() < floor || d == 0.0 {
                    out.values[[i, j, k]] = 0.0;
                    if support[k] > 0.0 {
                        breached = true;
                    }
                } else {
                    out.values[[i, j, k]] = num.values[[i, j, k]] / d;
                }
            }
        }
    }
    (out, breached)
}

pub const DIVISION_FLOOR: f64 = 1e-8;

/// Order-independent quantities: the commutator sources g, h, the vector
/// sources of the second-derivative equations, and the logarithmic slopes
/// chi = d_z psi / psi (monotone region) and b = d_z xi / xi (concave band).
pub struct AuxBase {
    pub g: ScalarField,
    pub h: ScalarField,
    pub theta: [ScalarField; 3],
    pub mu: [ScalarField; 3],
    /// xi / psi, zeroed below the division floor; usable where tau1 > 0.
    pub chi: ScalarField,
    /// d_z xi / xi, zeroed below the division floor; usable where tau2 > 0.
    pub b: ScalarField,
    pub chi_floor_breached: bool,
    pub b_floor_breached: bool,
}

pub fn compute_base(state: &FlowState, cutoffs: &CutoffPair) -> Result<AuxBase> {
    let dx = |f: &ScalarField| spectral::derivative(f, 1, 0);
    let dy = |f: &ScalarField| spectral::derivative(f, 0, 1);
    let (u, v) = (&state.u, &state.v);
    let (psi, eta, xi, zeta) = (&state.psi, &state.eta, &state.xi, &state.zeta);

    let uy = dy(u);
    let ux = dx(u);
    let vx = dx(v);
    let vy = dy(v);
    let psix = dx(psi);
    let psiy = dy(psi);
    let etax = dx(eta);
    let etay = dy(eta);

    let g = vy.mul(psi).sub(&uy.mul(eta));
    let h = ux.mul(eta).sub(&vx.mul(psi));
    let theta = [
        xi.mul(&vy).scale(2.0).sub(&eta.mul(&psiy).scale(2.0)),
        psi.mul(&etay).sub(&zeta.mul(&uy)),
        xi.mul(&ux).sub(&psi.mul(&psix)),
    ];
    let mu = [
        zeta.mul(&ux).scale(2.0).sub(&psi.mul(&etax).scale(2.0)),
        eta.mul(&psix).sub(&xi.mul(&vx)),
        zeta.mul(&vy).sub(&eta.mul(&etay)),
    ];

    let (chi, chi_floor_breached) = guarded_ratio(xi, psi, &cutoffs.tau1, DIVISION_FLOOR);
    let dz_xi = normal_derivative(xi, 1)?;
    let (b, b_floor_breached) = guarded_ratio(&dz_xi, xi, &cutoffs.tau2, DIVISION_FLOOR);

    Ok(AuxBase {
        g,
        h,
        theta,
        mu,
        chi,
        b,
        chi_floor_breached,
        b_floor_breached,
    })
}

/// Order-m cancellation quantities. The fields that divide by psi or xi are
/// `None` when the division floor is breached inside the active cutoff
/// support (flagged, never fabricated).
pub struct AuxOrder {
    pub m: usize,
    /// tau1 d_x^m psi - tau1 (xi/psi) d_x^m u
    pub f: Option<ScalarField>,
    pub f_tilde: Option<ScalarField>,
    /// tau2 d_x^m xi - tau2 (d_z xi / xi) d_x^m psi
    pub q: Option<ScalarField>,
    pub q_tilde: Option<ScalarField>,
    /// psi d_x^m v - eta d_x^m u, and the y-direction variant
    pub gamma: ScalarField,
    pub gamma_tilde: ScalarField,
    /// xi d_x^m v - eta d_x^m psi
    pub cap_h: ScalarField,
    pub cap_h_tilde: ScalarField,
    /// xi d_x^m u - psi d_x^m psi
    pub cap_g: ScalarField,
    pub cap_g_tilde: ScalarField,
    pub tau2_dxm_xi: ScalarField,
    pub tau2_dym_xi: ScalarField,
}

/// Multi-index quantities for the commutator sources.
pub struct AuxAlpha {
    pub alpha: (usize, usize),
    pub g: ScalarField,
    pub h: ScalarField,
    pub theta: [ScalarField; 3],
    pub mu: [ScalarField; 3],
}

pub struct AuxCollection {
    pub base: AuxBase,
    pub orders: Vec<AuxOrder>,
    pub alphas: Vec<AuxAlpha>,
}

fn mul_profile_opt(f: &ScalarField, profile: &[f64]) -> ScalarField {
    f.mul_profile(profile)
}

/// Assemble the order-m set from cached spectra (single multiplication per
/// derivative, no repeated transforms).
pub fn compute_aux_order(
    state: &FlowState,
    base: &AuxBase,
    cutoffs: &CutoffPair,
    m: usize,
) -> Result<AuxOrder> {
    if m == 0 {
        return Err(Error::validation("aux quantities are defined for m >= 1"));
    }
    let dxm = |f: &ScalarField| spectral::derivative(f, m, 0);
    let dym = |f: &ScalarField| spectral::derivative(f, 0, m);

    let um = dxm(&state.u);
    let um_t = dym(&state.u);
    let vm = dxm(&state.v);
    let vm_t = dym(&state.v);
    let pm = dxm(&state.psi);
    let pm_t = dym(&state.psi);
    let xm = dxm(&state.xi);
    let xm_t = dym(&state.xi);

    let t1 = &cutoffs.tau1;
    let t2 = &cutoffs.tau2;

    let f = if base.chi_floor_breached {
        None
    } else {
        Some(mul_profile_opt(&pm.sub(&base.chi.mul(&um)), t1))
    };
    let f_tilde = if base.chi_floor_breached {
        None
    } else {
        Some(mul_profile_opt(&pm_t.sub(&base.chi.mul(&um_t)), t1))
    };
    let q = if base.b_floor_breached {
        None
    } else {
        Some(mul_profile_opt(&xm.sub(&base.b.mul(&pm)), t2))
    };
    let q_tilde = if base.b_floor_breached {
        None
    } else {
        Some(mul_profile_opt(&xm_t.sub(&base.b.mul(&pm_t)), t2))
    };

    Ok(AuxOrder {
        m,
        f,
        f_tilde,
        q,
        q_tilde,
        gamma: state.psi.mul(&vm).sub(&state.eta.mul(&um)),
        gamma_tilde: state.psi.mul(&vm_t).sub(&state.eta.mul(&um_t)),
        cap_h: state.xi.mul(&vm).sub(&state.eta.mul(&pm)),
        cap_h_tilde: state.xi.mul(&vm_t).sub(&state.eta.mul(&pm_t)),
        cap_g: state.xi.mul(&um).sub(&state.psi.mul(&pm)),
        cap_g_tilde: state.xi.mul(&um_t).sub(&state.psi.mul(&pm_t)),
        tau2_dxm_xi: mul_profile_opt(&xm, t2),
        tau2_dym_xi: mul_profile_opt(&xm_t, t2),
    })
}

pub fn compute_aux_alpha(base: &AuxBase, alpha: (usize, usize)) -> AuxAlpha {
    let d = |f: &ScalarField| spectral::derivative(f, alpha.0, alpha.1);
    AuxAlpha {
        alpha,
        g: d(&base.g),
        h: d(&base.h),
        theta: [d(&base.theta[0]), d(&base.theta[1]), d(&base.theta[2])],
        mu: [d(&base.mu[0]), d(&base.mu[1]), d(&base.mu[2])],
    }
}

/// Everything needed by the extended norm and the residual certifier:
/// order sets for 1..=m_max and multi-index sets for |alpha| <= alpha_cap.
pub fn compute_collection(
    state: &FlowState,
    cutoffs: &CutoffPair,
    m_max: usize,
    alpha_cap: usize,
) -> Result<AuxCollection> {
    let base = compute_base(state, cutoffs)?;
    let mut orders = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        orders.push(compute_aux_order(state, &base, cutoffs, m)?);
    }
    let mut alphas = Vec::new();
    for total in 0..=alpha_cap {
        for a1 in (0..=total).rev() {
            let a2 = total - a1;
            alphas.push(compute_aux_alpha(&base, (a1, a2)));
        }
    }
    Ok(AuxCollection {
        base,
        orders,
        alphas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{tangential_derivative, Stretch};

    fn grid() -> Arc<GridSpec> {
        GridSpec::new(16, 16, 97, 16.0, Stretch::Rational { l: 4.0 }).unwrap()
    }

    #[test]
    fn cutoff_support_values() {
        let g = grid();
        let eps = 0.2;
        let c = build_cutoffs(eps, 1.0, &g).unwrap();
        for (k, &z) in g.z_nodes().iter().enumerate() {
            let d = (z - 1.0).abs();
            if d <= eps {
                assert_eq!(c.tau1[k], 0.0, "tau1 at z={z}");
            }
            if d >= 1.5 * eps {
                assert_eq!(c.tau1[k], 1.0, "tau1 at z={z}");
            }
            if d <= 1.5 * eps {
                assert_eq!(c.tau2[k], 1.0, "tau2 at z={z}");
            }
            if d >= 2.0 * eps {
                assert_eq!(c.tau2[k], 0.0, "tau2 at z={z}");
            }
            assert!(c.tau1[k] + c.tau2[k] >= 1.0 - 1e-15);
            assert!((0.0..=1.0).contains(&c.tau1[k]));
            assert!((0.0..=1.0).contains(&c.tau2[k]));
        }
        assert!(c.support_identity_defect() < 1e-14);
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let g = grid();
        let eps = 0.2;
        let c = build_cutoffs(eps, 1.0, &g).unwrap();
        // compare analytic tau' against a fine finite difference of tau(z)
        let tau1_of = |z: f64| {
            let (s, _, _) = smooth_step(((z - 1.0f64).abs() - eps) / (eps / 2.0));
            s
        };
        for (k, &z) in g.z_nodes().iter().enumerate() {
            if z < 0.5 || z > 1.6 {
                continue;
            }
            let h = 1e-6;
            let fd = (tau1_of(z + h) - tau1_of(z - h)) / (2.0 * h);
            assert!(
                (c.tau1_p[k] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "z={z}: {} vs {}",
                c.tau1_p[k],
                fd
            );
        }
    }

    #[test]
    fn cutoff_band_validation() {
        let g = grid();
        assert!(build_cutoffs(0.3, 1.0, &g).is_err()); // eps >= 1/4
        assert!(build_cutoffs(0.2, 0.3, &g).is_err()); // band crosses the wall
        assert!(build_cutoffs(0.2, 15.9, &g).is_err()); // band leaves the domain
    }

    #[test]
    fn vartheta_profile() {
        let g = grid();
        let c = build_cutoffs(0.2, 1.0, &g).unwrap();
        for (k, &z) in g.z_nodes().iter().enumerate() {
            if z <= 2.0 {
                assert_eq!(c.vartheta[k], 1.0);
            }
            if z >= 2.5 {
                assert_eq!(c.vartheta[k], 0.0);
            }
        }
    }

    #[test]
    fn x_independent_states_have_trivial_x_quantities() {
        let g = grid();
        let u = g.sample_profile(|z| z * (-z).exp());
        let v = g.sample(|_, y, z| 0.1 * y.sin() * (1.0 - (-z).exp()) * (-z).exp());
        let state = FlowState::new(0.0, 0.0, u, v).unwrap();
        let cut = build_cutoffs(0.2, 1.0, &g).unwrap();
        let base = compute_base(&state, &cut).unwrap();
        for m in [1usize, 2, 3] {
            let a = compute_aux_order(&state, &base, &cut, m).unwrap();
            assert!(a.f.unwrap().max_abs() < 1e-10, "f_{m}");
            assert!(a.q.unwrap().max_abs() < 1e-10, "q_{m}");
            assert!(a.cap_g.max_abs() < 1e-10, "G_{m}");
        }
        // g_alpha equals the direct derivative of the assembled g
        let ga = compute_aux_alpha(&base, (0, 2));
        let direct = tangential_derivative(&base.g, (0, 2)).unwrap();
        assert!(ga.g.sub(&direct).max_abs() < 1e-12);
    }

    #[test]
    fn proportional_fields_cancel_gamma() {
        let g = grid();
        let c = 0.37;
        let u = g.sample(|x, y, z| (x.sin() + (x + y).cos()) * z * (-z).exp());
        let v = u.scale(c);
        let state = FlowState::new(0.0, 0.0, u, v).unwrap();
        let cut = build_cutoffs(0.2, 1.0, &g).unwrap();
        let base = compute_base(&state, &cut).unwrap();
        for m in [1usize, 2, 4] {
            let a = compute_aux_order(&state, &base, &cut, m).unwrap();
            let scale = state.psi.max_abs().max(1.0);
            assert!(a.gamma.max_abs() <= 1e-13 * scale, "m={m}");
        }
    }

    #[test]
    fn modulated_shear_f_m_closed_form() {
        // u = (1 + a sin x) W(z): the discrete f_m equals
        // tau1 a sin(x + m pi/2) (W' - W W''/W') built from the discrete
        // one-dimensional ladder W' = Dz W, W'' = Dz W'.
        let g = grid();
        let a = 0.3;
        let wprof = |z: f64| z * (-z).exp();
        let u = g.sample(|x, _, z| (1.0 + a * x.sin()) * wprof(z));
        let state = FlowState::new(0.0, 0.0, u, g.zeros()).unwrap();
        let cut = build_cutoffs(0.2, 1.0, &g).unwrap();
        let base = compute_base(&state, &cut).unwrap();

        let w_field = g.sample_profile(wprof);
        let w1 = normal_derivative(&w_field, 1).unwrap();
        let w2 = normal_derivative(&w1, 1).unwrap();

        for m in [1usize, 2, 3] {
            let aux = compute_aux_order(&state, &base, &cut, m).unwrap();
            let f = aux.f.unwrap();
            let mut worst = 0.0f64;
            for i in 0..g.nx {
                let x = g.x_nodes()[i];
                let sx = (x + m as f64 * std::f64::consts::FRAC_PI_2).sin();
                for k in 0..g.nz {
                    let t1 = cut.tau1[k];
                    let (w0k, w1k, w2k) =
                        (w_field.values[[0, 0, k]], w1.values[[0, 0, k]], w2.values[[0, 0, k]]);
                    let expect = if t1 == 0.0 {
                        0.0
                    } else {
                        t1 * a * sx * (w1k - w0k * w2k / w1k)
                    };
                    let got = f.values[[i, 3, k]];
                    worst = worst.max((got - expect).abs());
                }
            }
            assert!(worst < 1e-8, "m={m} worst {worst}");
        }
    }

    #[test]
    fn wall_traces_vanish_for_compatible_states() {
        // constant pressure; u0 with u''(0) = 0 so that xi(0) = O(dz^2)
        let check = |nz: usize| -> (f64, f64) {
            let g = GridSpec::new(16, 16, nz, 16.0, Stretch::Rational { l: 2.0 }).unwrap();
            let u = g.sample(|x, y, z| {
                (1.0 + 0.2 * x.sin() * y.cos()) * (z + z * z + z * z * z / 3.0) * (-z).exp()
            });
            let v = g.sample(|x, _, z| 0.1 * x.cos() * (z + z * z) * (-z).exp());
            let state = FlowState::new(0.0, 0.0, u, v).unwrap();
            let cut = build_cutoffs(0.1, 1.0, &g).unwrap();
            let base = compute_base(&state, &cut).unwrap();
            let aux = compute_aux_order(&state, &base, &cut, 2).unwrap();
            // Gamma_m and g_alpha wall traces vanish identically (no-slip)
            let ga = compute_aux_alpha(&base, (1, 1));
            let mut g_trace = 0.0f64;
            let mut gam_trace = 0.0f64;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    g_trace = g_trace.max(ga.g.values[[i, j, 0]].abs());
                    gam_trace = gam_trace.max(aux.gamma.values[[i, j, 0]].abs());
                }
            }
            assert!(g_trace < 1e-12 && gam_trace < 1e-12);
            // d_z psi|_0 via the dedicated one-sided wall stencil is O(dz^2);
            // the stacked-ladder field xi loses one order at the wall row
            let wu = crate::grid::wall_normal_derivatives(&state.u, 2).unwrap();
            let mut xi_wall = 0.0f64;
            let mut xi_ladder = 0.0f64;
            for i in 0..g.nx {
                for j in 0..g.ny {
                    xi_wall = xi_wall.max(wu[1][[i, j]].abs());
                    xi_ladder = xi_ladder.max(state.xi.values[[i, j, 0]].abs());
                }
            }
            (xi_wall, xi_ladder)
        };
        let (a_wall, a_lad) = check(65);
        let (b_wall, b_lad) = check(129);
        assert!(a_wall / b_wall > 3.0, "wall-stencil ratio {}", a_wall / b_wall);
        assert!(a_lad / b_lad > 1.7, "ladder ratio {}", a_lad / b_lad);
    }
}
