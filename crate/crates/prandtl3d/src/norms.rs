//! Weighted anisotropic Gevrey norms, their extended variant over the
//! cancellation quantities, the shifted-threshold variant for indices below
//! 3/2, analyticity-radius estimation, and the elementary inequality checks.

use ndarray::Array3;
use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aux::AuxCollection;
use crate::error::{Error, Result};
use crate::grid::weighted_l2;
use crate::spectral;
use crate::state::{FlowState, OuterFlow};

/// Parameters of the norm family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevreyParams {
    /// radius, 0 < rho <= 1
    pub rho: f64,
    /// Gevrey index, 1 < sigma <= 2
    pub sigma: f64,
    /// weight exponent for the u block, ell > 3/2
    pub ell: f64,
    /// weight exponent for the v block, kappa >= 1
    pub kappa: f64,
    /// decay exponent, ell + 1/2 < delta <= ell + 1 (so delta > 2)
    pub delta: f64,
    /// derivative-order cap for the suprema, >= 8
    pub m_max: usize,
    /// threshold shift N >= 2 for the sigma < 3/2 variant
    pub n_shift: usize,
}

impl Default for GevreyParams {
    fn default() -> Self {
        GevreyParams {
            rho: 1.0,
            sigma: 1.8,
            ell: 1.6,
            kappa: 1.0,
            delta: 2.5,
            m_max: 16,
            n_shift: 4,
        }
    }
}

impl GevreyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::validation("rho must lie in (0, 1]"));
        }
        if !(self.sigma > 1.0 && self.sigma <= 2.0) {
            return Err(Error::validation("sigma must lie in (1, 2]"));
        }
        if self.kappa < 1.0 {
            return Err(Error::validation("kappa must be >= 1"));
        }
        if self.ell <= 1.5 {
            return Err(Error::validation("ell must exceed 3/2"));
        }
        if !(self.delta > self.ell + 0.5 && self.delta <= self.ell + 1.0) {
            return Err(Error::validation(
                "delta must satisfy ell + 1/2 < delta <= ell + 1",
            ));
        }
        if self.delta <= 2.0 {
            return Err(Error::validation("delta must exceed 2"));
        }
        if self.m_max < 8 {
            return Err(Error::validation(
                "m_max must be >= 8 (high-order suprema would be empty)",
            ));
        }
        if self.sigma < 1.5 {
            let n = self.n_shift as f64;
            if self.n_shift < 2 || (n + 1.0) / n > self.sigma {
                return Err(Error::validation(
                    "for sigma < 3/2 the shift N must satisfy N >= 2 and (N+1)/N <= sigma",
                ));
            }
        }
        Ok(())
    }
}

/// ln(n!) without overflow.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// rho^(m - base) / ((m - base - 1)!)^sigma for m >= base + 1, in log space.
fn high_factor(rho: f64, sigma: f64, m: usize, base: usize) -> f64 {
    debug_assert!(m > base);
    ((m - base) as f64 * rho.ln() - sigma * ln_factorial(m - base - 1)).exp()
}

/// One supremum with its achieving indices.
#[derive(Debug, Clone, Copy, Serialize, Default)]
pub struct SupTerm {
    pub value: f64,
    pub at_alpha: (usize, usize),
    pub at_j: usize,
}

impl SupTerm {
    fn take(&mut self, value: f64, alpha: (usize, usize), j: usize) {
        if value > self.value {
            self.value = value;
            self.at_alpha = alpha;
            self.at_j = j;
        }
    }
}

/// A named pair of suprema (orders above / below the split threshold).
#[derive(Debug, Clone, Serialize)]
pub struct NormLine {
    pub name: String,
    pub high: SupTerm,
    pub low: SupTerm,
}

impl NormLine {
    pub fn total(&self) -> f64 {
        self.high.value + self.low.value
    }
}

/// Every supremum line of a norm evaluation; the total is their sum.
#[derive(Debug, Clone, Serialize)]
pub struct NormBreakdown {
    pub rho: f64,
    pub sigma: f64,
    /// orders >= this go to the high-order suprema (7, or N+5 for the variant)
    pub high_threshold: usize,
    pub lines: Vec<NormLine>,
    pub total: f64,
}

impl NormBreakdown {
    pub fn line(&self, name: &str) -> Option<&NormLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    fn finish(mut self) -> Self {
        self.total = self.lines.iter().map(|l| l.total()).sum();
        self
    }
}

/// Noise floor: raw norms below this multiple of the |alpha| = 0 norm of the
/// same block are excluded from the suprema (spectral round-off grows like
/// k^m and would otherwise dominate at high order).
pub const NOISE_FLOOR_REL: f64 = 1e-10;

fn alphas_up_to(m_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=m_max {
        for a1 in (0..=total).rev() {
            out.push((a1, total - a1));
        }
    }
    out
}

struct BlockSpectra {
    u_rel: Array3<Complex64>,
    v_rel: Array3<Complex64>,
    psi: Array3<Complex64>,
    eta: Array3<Complex64>,
    psi_dz: Vec<Array3<Complex64>>,
    eta_dz: Vec<Array3<Complex64>>,
}

fn block_spectra(state: &FlowState, outer: &OuterFlow) -> BlockSpectra {
    let grid = state.grid().clone();
    let traces = outer.traces(&grid, state.t);
    let mut u_rel = state.u.clone();
    let mut v_rel = state.v.clone();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            for k in 0..grid.nz {
                u_rel.values[[i, j, k]] -= traces.u[[i, j]];
                v_rel.values[[i, j, k]] -= traces.v[[i, j]];
            }
        }
    }
    let psi = spectral::to_spectral(&state.psi);
    let eta = spectral::to_spectral(&state.eta);
    let mut psi_dz = Vec::with_capacity(4);
    let mut eta_dz = Vec::with_capacity(4);
    let mut p = psi.clone();
    let mut e = eta.clone();
    for _ in 0..4 {
        p = spectral::dz_spectral(&p, &grid);
        e = spectral::dz_spectral(&e, &grid);
        psi_dz.push(p.clone());
        eta_dz.push(e.clone());
    }
    BlockSpectra {
        u_rel: spectral::to_spectral(&u_rel),
        v_rel: spectral::to_spectral(&v_rel),
        psi,
        eta,
        psi_dz,
        eta_dz,
    }
}

fn velocity_norm_breakdown(
    state: &FlowState,
    outer: &OuterFlow,
    params: &GevreyParams,
    high_threshold: usize,
) -> NormBreakdown {
    let grid = state.grid().clone();
    let sp = block_spectra(state, outer);
    let (rho, sigma) = (params.rho, params.sigma);
    let hi = high_threshold;
    let alphas = alphas_up_to(params.m_max);

    let norm_of = |spec: &Array3<Complex64>, alpha: (usize, usize), w: f64| {
        spectral::weighted_block_norm(spec, &grid, alpha, w)
    };

    // block-level noise floors from the |alpha| = 0 norms
    let floor_uv = NOISE_FLOOR_REL
        * (norm_of(&sp.u_rel, (0, 0), params.ell - 1.0) + norm_of(&sp.v_rel, (0, 0), params.kappa));
    let floor_psi = NOISE_FLOOR_REL * norm_of(&sp.psi, (0, 0), params.ell);
    let floor_eta = NOISE_FLOOR_REL * norm_of(&sp.eta, (0, 0), params.kappa + 2.0);
    let floor_psi_dz: Vec<f64> = (0..4)
        .map(|j| NOISE_FLOOR_REL * norm_of(&sp.psi_dz[j], (0, 0), params.ell + 1.0))
        .collect();
    let floor_eta_dz: Vec<f64> = (0..4)
        .map(|j| NOISE_FLOOR_REL * norm_of(&sp.eta_dz[j], (0, 0), params.kappa + 2.0))
        .collect();

    let mut uv = NormLine {
        name: "u_v".into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };
    let mut psi = NormLine {
        name: "psi".into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };
    let mut eta = NormLine {
        name: "eta".into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };
    let mut mixed_psi = NormLine {
        name: "mixed_psi".into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };
    let mut mixed_eta = NormLine {
        name: "mixed_eta".into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };

    for &alpha in &alphas {
        let m = alpha.0 + alpha.1;
        // velocity block
        let raw = norm_of(&sp.u_rel, alpha, params.ell - 1.0)
            + norm_of(&sp.v_rel, alpha, params.kappa);
        if raw >= floor_uv {
            if m >= hi {
                uv.high.take(high_factor(rho, sigma, m, hi - 1) * raw, alpha, 0);
            } else {
                uv.low.take(raw, alpha, 0);
            }
        }
        // psi block
        let raw = norm_of(&sp.psi, alpha, params.ell);
        if raw >= floor_psi {
            if m >= hi {
                psi.high.take(high_factor(rho, sigma, m, hi - 1) * raw, alpha, 0);
            } else {
                psi.low.take(raw, alpha, 0);
            }
        }
        // eta block (anisotropic factor, one order shifted, |alpha| weight)
        let raw = norm_of(&sp.eta, alpha, params.kappa + 2.0);
        if raw >= floor_eta {
            if m >= hi {
                eta.high.take(
                    high_factor(rho, sigma, m, hi - 2) * m as f64 * raw,
                    alpha,
                    0,
                );
            } else {
                eta.low.take(raw, alpha, 0);
            }
        }
        // mixed blocks, 1 <= j <= 4
        for j in 1..=4usize {
            let mj = m + j;
            if mj > params.m_max {
                continue;
            }
            let raw = norm_of(&sp.psi_dz[j - 1], alpha, params.ell + 1.0);
            if raw >= floor_psi_dz[j - 1] {
                if mj >= hi {
                    mixed_psi
                        .high
                        .take(high_factor(rho, sigma, mj, hi - 1) * raw, alpha, j);
                } else {
                    mixed_psi.low.take(raw, alpha, j);
                }
            }
            let raw = norm_of(&sp.eta_dz[j - 1], alpha, params.kappa + 2.0);
            if raw >= floor_eta_dz[j - 1] {
                if mj >= hi {
                    mixed_eta.high.take(
                        high_factor(rho, sigma, mj, hi - 2) * m as f64 * raw,
                        alpha,
                        j,
                    );
                } else {
                    mixed_eta.low.take(raw, alpha, j);
                }
            }
        }
    }

    NormBreakdown {
        rho,
        sigma,
        high_threshold: hi,
        lines: vec![uv, psi, eta, mixed_psi, mixed_eta],
        total: 0.0,
    }
    .finish()
}

/// The velocity-block Gevrey norm ||(u, v)||: five weighted blocks with
/// anisotropic shifted-factorial factors, split at order 7.
pub fn trinorm(state: &FlowState, outer: &OuterFlow, params: &GevreyParams) -> Result<NormBreakdown> {
    params.validate()?;
    Ok(velocity_norm_breakdown(state, outer, params, 7))
}

fn extended_lines(
    state: &FlowState,
    aux: &AuxCollection,
    params: &GevreyParams,
    high_threshold: usize,
) -> Result<Vec<NormLine>> {
    let grid = state.grid().clone();
    let (rho, sigma) = (params.rho, params.sigma);
    let hi = high_threshold;
    if aux.orders.len() < params.m_max {
        return Err(Error::validation(format!(
            "extended norm needs aux orders 1..={}, got {}",
            params.m_max,
            aux.orders.len()
        )));
    }

    let line = |name: &str| NormLine {
        name: name.into(),
        high: SupTerm::default(),
        low: SupTerm::default(),
    };
    let mut aux_x = line("aux_x");
    let mut aux_y = line("aux_y");
    let mut vort_x = line("secondary_x");
    let mut vort_y = line("secondary_y");
    let mut comm = line("commutator");

    for ord in &aux.orders {
        let m = ord.m;
        if m > params.m_max {
            break;
        }
        let f = ord.f.as_ref().ok_or_else(|| {
            Error::validation(format!("aux order {m}: f unavailable (division floor)"))
        })?;
        let ft = ord.f_tilde.as_ref().unwrap();
        let q = ord.q.as_ref().ok_or_else(|| {
            Error::validation(format!("aux order {m}: q unavailable (division floor)"))
        })?;
        let qt = ord.q_tilde.as_ref().unwrap();

        let x_sum = weighted_l2(f, params.ell)
            + weighted_l2(q, 0.0)
            + weighted_l2(&ord.tau2_dxm_xi, 0.0);
        let y_sum = weighted_l2(ft, params.ell)
            + weighted_l2(qt, 0.0)
            + weighted_l2(&ord.tau2_dym_xi, 0.0);
        let gx_sum = weighted_l2(&ord.gamma, params.kappa + params.delta)
            + weighted_l2(&ord.cap_g, 0.0)
            + weighted_l2(&ord.cap_h, 0.0);
        let gy_sum = weighted_l2(&ord.gamma_tilde, params.kappa + params.delta)
            + weighted_l2(&ord.cap_g_tilde, 0.0)
            + weighted_l2(&ord.cap_h_tilde, 0.0);

        if m >= hi {
            let fac = high_factor(rho, sigma, m, hi - 1);
            aux_x.high.take(fac * x_sum, (m, 0), 0);
            aux_y.high.take(fac * y_sum, (0, m), 0);
            vort_x.high.take(fac * gx_sum, (m, 0), 0);
            vort_y.high.take(fac * gy_sum, (0, m), 0);
        } else {
            aux_x.low.take(x_sum + y_sum, (m, 0), 0);
            vort_x.low.take(gx_sum + gy_sum, (m, 0), 0);
        }
    }

    // commutator sources over all multi-indices, via Parseval on the spectra
    let gs = spectral::to_spectral(&aux.base.g);
    let hs = spectral::to_spectral(&aux.base.h);
    let ths: Vec<_> = aux.base.theta.iter().map(spectral::to_spectral).collect();
    let mus: Vec<_> = aux.base.mu.iter().map(spectral::to_spectral).collect();
    let wgt = params.kappa + params.delta;
    let vec_norm = |specs: &[Array3<Complex64>], alpha: (usize, usize)| -> f64 {
        specs
            .iter()
            .map(|s| spectral::weighted_block_norm(s, &grid, alpha, 0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let base_sum = spectral::weighted_block_norm(&gs, &grid, (0, 0), wgt)
        + spectral::weighted_block_norm(&hs, &grid, (0, 0), wgt)
        + vec_norm(&ths, (0, 0))
        + vec_norm(&mus, (0, 0));
    let floor = NOISE_FLOOR_REL * base_sum;
    for alpha in alphas_up_to(params.m_max) {
        let m = alpha.0 + alpha.1;
        let raw = spectral::weighted_block_norm(&gs, &grid, alpha, wgt)
            + spectral::weighted_block_norm(&hs, &grid, alpha, wgt)
            + vec_norm(&ths, alpha)
            + vec_norm(&mus, alpha);
        if raw < floor {
            continue;
        }
        if m >= hi {
            comm.high.take(
                high_factor(rho, sigma, m, hi - 2) * m as f64 * raw,
                alpha,
                0,
            );
        } else {
            comm.low.take(raw, alpha, 0);
        }
    }

    Ok(vec![aux_x, aux_y, vort_x, vort_y, comm])
}

/// The extended norm |(u, v)|: the velocity norm plus the supremum lines over
/// every cancellation quantity.
pub fn extended_norm(
    state: &FlowState,
    outer: &OuterFlow,
    aux: &AuxCollection,
    params: &GevreyParams,
) -> Result<NormBreakdown> {
    params.validate()?;
    let mut bd = velocity_norm_breakdown(state, outer, params, 7);
    bd.lines.extend(extended_lines(state, aux, params, 7)?);
    Ok(bd.finish())
}

/// The shifted-threshold variant for sigma < 3/2: split thresholds 7/6 become
/// N+5 / N+4 throughout; the factorial factors are unchanged.
pub fn norm_variant_n(
    state: &FlowState,
    outer: &OuterFlow,
    aux: Option<&AuxCollection>,
    params: &GevreyParams,
) -> Result<NormBreakdown> {
    params.validate()?;
    if params.sigma >= 1.5 {
        return Err(Error::validation(
            "the shifted-threshold norm variant applies only for sigma < 3/2",
        ));
    }
    let hi = params.n_shift + 5;
    if params.m_max < hi + 1 {
        return Err(Error::validation(format!(
            "m_max must reach beyond the shifted threshold {hi}"
        )));
    }
    let mut bd = velocity_norm_breakdown(state, outer, params, hi);
    if let Some(aux) = aux {
        bd.lines.extend(extended_lines(state, aux, params, hi)?);
    }
    Ok(bd.finish())
}

/// Empirical analyticity radius from the spectral decay of the x-derivative
/// ladder: least-squares fit of log-norm growth against the Gevrey model
/// log y_m ~ c + sigma log(m!) - m log rho over 7 <= m <= m_max. The
/// exponential rate is what fixes the radius (shifted-factorial conventions
/// only change polynomial prefactors). Returns +inf for fields at the noise
/// floor or with too few usable orders.
pub fn fit_radius(state: &FlowState, outer: &OuterFlow, params: &GevreyParams) -> Result<f64> {
    params.validate()?;
    let grid = state.grid().clone();
    if grid.nx < 8 {
        return Err(Error::validation("radius fit needs at least 8 x-modes"));
    }
    let sp = block_spectra(state, outer);
    let norms: Vec<f64> = (0..=params.m_max)
        .map(|m| spectral::weighted_block_norm(&sp.u_rel, &grid, (m, 0), params.ell - 1.0))
        .collect();
    let floor = NOISE_FLOOR_REL * norms[0];
    // w_m = ln y_m - sigma ln m!, fitted affine in m; slope = -ln rho
    let mut pts = Vec::new();
    for m in 7..=params.m_max {
        let y = norms[m];
        if y < floor || y == 0.0 {
            continue;
        }
        pts.push((m as f64, y.ln() - params.sigma * ln_factorial(m)));
    }
    if pts.len() < 3 {
        return Ok(f64::INFINITY);
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok((-slope).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    /// worst slack of k (rho/rho~)^k <= rho~^{-1} k (rho/rho~)^k <= 1/(rho~ - rho)
    pub factor_worst_slack: f64,
    pub factor_pass: bool,
    /// worst relative slack of the mixed-derivative domination on the torus
    pub realp_worst_rel_slack: f64,
    pub realp_pass: bool,
    pub trials: usize,
}

/// Verify the two elementary inequalities behind the norm estimates on
/// sampled parameters and random torus fields (seeded).
pub fn check_inequalities(trials: usize, seed: u64) -> Result<InequalityReport> {
    if trials < 1 {
        return Err(Error::validation("trials must be >= 1"));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut factor_worst = f64::INFINITY;
    for _ in 0..trials {
        let rho_t: f64 = rng.gen_range(0.05..=1.0);
        let rho: f64 = rho_t * rng.gen_range(0.01..0.999);
        for k in 1..=64usize {
            let base = k as f64 * (rho / rho_t).powi(k as i32);
            let mid = base / rho_t;
            let upper = 1.0 / (rho_t - rho);
            factor_worst = factor_worst.min(mid - base).min(upper - mid);
        }
    }

    // random band-limited torus fields, all |alpha| <= 8, spectral norms;
    // the shared Nyquist bin is removed (odd derivatives zero it by
    // convention, which would mix conventions between the two sides)
    let (nx, ny) = (16usize, 16usize);
    let mut realp_worst: f64 = f64::INFINITY;
    let field_trials = trials.min(200);
    for _ in 0..field_trials {
        let mut plane = ndarray::Array2::<f64>::zeros((nx, ny));
        for v in plane.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut spec: ndarray::Array2<Complex64> = plane.mapv(|v| Complex64::new(v, 0.0));
        spectral::plane_fft(&mut spec, rustfft::FftDirection::Forward);
        for i in 0..nx {
            for j in 0..ny {
                if i == nx / 2 || j == ny / 2 {
                    spec[[i, j]] = Complex64::new(0.0, 0.0);
                }
            }
        }
        for total in 0..=8usize {
            for a1 in 0..=total {
                let a2 = total - a1;
                let lhs = spectral::plane_norm(&spec, nx, ny, (a1, a2)).powi(2);
                let rhs = spectral::plane_norm(&spec, nx, ny, (total, 0)).powi(2)
                    + spectral::plane_norm(&spec, nx, ny, (0, total)).powi(2);
                let rel = (rhs - lhs) / rhs.max(1e-300);
                realp_worst = realp_worst.min(rel);
            }
        }
    }

    Ok(InequalityReport {
        factor_worst_slack: factor_worst,
        factor_pass: factor_worst >= -1e-12,
        realp_worst_rel_slack: realp_worst,
        realp_pass: realp_worst >= -1e-12,
        trials,
    })
}
