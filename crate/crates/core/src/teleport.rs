//! The teleportation pipeline over a noisy resource state: Bell projection,
//! displacement correction, single-shot and average fidelity, relative
//! fidelity, and Wigner functions of reconstructed states.
//!
//! One coherent parameter `β = x₋ + i p₊` feeds both the projection and the
//! corrective displacement; the fock module asserts that the two displacement
//! forms coincide under the artifact quadrature convention.

use crate::channels::ChannelSpec;
use crate::fock::{self, cr, DensityMatrix, Operator, StateVector, C64};
use crate::master::{self, TimeGrid};
use crate::metrics::{self, MetricSeries};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TeleportError {
    #[error("negligible probability {p:.3e} at outcome ({x:.3}, {pp:.3}); skip this grid point")]
    NegligibleProbability { p: f64, x: f64, pp: f64 },
    #[error(
        "quadrature resolution failure at t = {time}: doubling the grid moved F̄ by {delta:.3e}"
    )]
    Resolution { time: f64, delta: f64 },
    #[error("invalid baseline: F̄(0) = {0} must be positive")]
    InvalidBaseline(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Fock(#[from] fock::FockError),
    #[error(transparent)]
    Master(#[from] master::MasterError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Channel(#[from] crate::channels::ChannelError),
}

pub type Result<T> = std::result::Result<T, TeleportError>;

/// The state handed to Alice for teleportation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputState {
    Coherent { alpha_re: f64, alpha_im: f64 },
    Squeezed { alpha_re: f64, alpha_im: f64, r_s: f64, theta: f64 },
    Cat { alpha_re: f64, alpha_im: f64, theta_c: f64 },
}

impl InputState {
    pub fn coherent(alpha: C64) -> Self {
        InputState::Coherent {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
        }
    }

    pub fn squeezed(alpha: C64, r_s: f64, theta: f64) -> Self {
        InputState::Squeezed {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            r_s,
            theta,
        }
    }

    pub fn cat(alpha: C64, theta_c: f64) -> Self {
        InputState::Cat {
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            theta_c,
        }
    }

    pub fn alpha(&self) -> C64 {
        match *self {
            InputState::Coherent { alpha_re, alpha_im }
            | InputState::Squeezed {
                alpha_re, alpha_im, ..
            }
            | InputState::Cat {
                alpha_re, alpha_im, ..
            } => C64::new(alpha_re, alpha_im),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InputState::Coherent { .. } => "coherent".into(),
            InputState::Squeezed { r_s, .. } => format!("squeezed_rs{r_s}"),
            InputState::Cat { theta_c, .. } => {
                if (*theta_c - std::f64::consts::PI).abs() < 1e-12 {
                    "odd_cat".into()
                } else if theta_c.abs() < 1e-12 {
                    "even_cat".into()
                } else {
                    format!("cat_theta{theta_c:.3}")
                }
            }
        }
    }

    /// Builds the state at the requested truncation.
    pub fn build(&self, dim: usize) -> Result<StateVector> {
        let sv = match *self {
            InputState::Coherent { .. } => fock::coherent(dim, self.alpha())?,
            InputState::Squeezed { r_s, theta, .. } => {
                let xi = C64::from_polar(r_s, theta);
                let s = fock::squeeze(dim, xi)?;
                let d = fock::displacement(dim, self.alpha())?;
                fock::fock_state(dim, 0)?.apply(&s)?.apply(&d)?
            }
            InputState::Cat { theta_c, .. } => fock::cat(dim, self.alpha(), theta_c)?,
        };
        Ok(sv)
    }
}

/// Quadrature rule over the Bell-outcome plane. Only the trapezoid rule is
/// defined; the identifier keeps configs explicit about it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    #[default]
    Trapezoid,
}

/// Symmetric square integration grid over `(x₋, p₊)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub half_width: f64,
    pub points_per_axis: usize,
    #[serde(default)]
    pub rule: QuadRule,
}

impl QuadratureGrid {
    pub fn new(half_width: f64, points_per_axis: usize) -> Result<Self> {
        let grid = Self {
            half_width,
            points_per_axis,
            rule: QuadRule::Trapezoid,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_width <= 0.0 {
            return Err(TeleportError::InvalidParameter(format!(
                "quadrature half width {} must be positive",
                self.half_width
            )));
        }
        if self.points_per_axis < 21 || self.points_per_axis % 2 == 0 {
            return Err(TeleportError::InvalidParameter(format!(
                "points_per_axis = {} must be an odd integer >= 21",
                self.points_per_axis
            )));
        }
        Ok(())
    }

    /// Default width for a given input amplitude: `L = |α| + 4` natural
    /// units (vacuum quadrature deviation is 1/2 under the convention).
    pub fn default_for(alpha_abs: f64) -> Self {
        Self {
            half_width: alpha_abs + 4.0,
            points_per_axis: 61,
            rule: QuadRule::Trapezoid,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.points_per_axis;
        let h = 2.0 * self.half_width / (n - 1) as f64;
        (0..n).map(|k| -self.half_width + h * k as f64).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.points_per_axis;
        let h = 2.0 * self.half_width / (n - 1) as f64;
        (0..n)
            .map(|k| if k == 0 || k == n - 1 { h / 2.0 } else { h })
            .collect()
    }

    /// Same span with the step halved (2n - 1 points), reusing every node of
    /// the coarse grid; used by the convergence gate.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            points_per_axis: 2 * self.points_per_axis - 1,
            rule: self.rule,
        }
    }
}

/// Unnormalized conditional state of mode B after projecting `ρ_E ⊗ ρ_RB`
/// onto the Bell outcome `(x₋, p₊)`, and the outcome's probability density:
/// `σ̃_B = (1/π) Σ_{m,n} [D†(β) ρ_E D(β)]_{m n} · B_{m n}` with
/// `B_{m n} = (<m|_R ⊗ I_B) ρ_RB (|n>_R ⊗ I_B)`, `β = x₋ + i p₊`,
/// `P = tr σ̃_B`.
pub fn bell_project(
    rho_e: &DensityMatrix,
    rho_rb: &DensityMatrix,
    x_minus: f64,
    p_plus: f64,
) -> Result<(Operator, f64)> {
    let dims = rho_rb.dims();
    if dims.len() != 2 {
        return Err(TeleportError::ShapeMismatch(format!(
            "resource state must be bipartite, got dims {:?}",
            dims
        )));
    }
    if rho_e.side() != dims[0] {
        return Err(TeleportError::ShapeMismatch(format!(
            "input dim {} must match mode R dim {}",
            rho_e.side(),
            dims[0]
        )));
    }
    let d = fock::displacement_block(rho_e.side(), rho_e.side(), C64::new(x_minus, p_plus));
    Ok(conditional_state(rho_e, rho_rb, &d))
}

/// Shared inner kernel of [`bell_project`], taking a precomputed exact
/// block of `D(β)`. The sandwich `D†ρ_E D` over a finite-support `ρ_E` is
/// exact with the true-operator block, including far outside the truncation
/// radius where the exponentiated truncated generator degrades.
fn conditional_state(
    rho_e: &DensityMatrix,
    rho_rb: &DensityMatrix,
    disp: &Array2<C64>,
) -> (Operator, f64) {
    let n_r = rho_e.side();
    let n_b = rho_rb.dims()[1];
    // A = D†(β) ρ_E D(β)
    let a = disp
        .t()
        .mapv(|z| z.conj())
        .dot(rho_e.data())
        .dot(disp);
    let a = &a;
    let rb = rho_rb.data();
    let mut sigma = Array2::zeros((n_b, n_b));
    let inv_pi = 1.0 / std::f64::consts::PI;
    for m in 0..n_r {
        for n in 0..n_r {
            let coeff = a[[m, n]] * cr(inv_pi);
            if coeff.norm_sqr() < 1e-60 {
                continue;
            }
            for b in 0..n_b {
                for bp in 0..n_b {
                    sigma[[b, bp]] += coeff * rb[[m * n_b + b, n * n_b + bp]];
                }
            }
        }
    }
    let p: C64 = sigma.diag().sum();
    let sigma_op = Operator::new(sigma, vec![n_b]).expect("square by construction");
    (sigma_op, p.re)
}

/// Probability density and output-state fidelity product at one outcome,
/// `P·F = tr[ρ_E · D σ̃_B D†]`, evaluated without the `σ̃/P` division so the
/// integrand stays finite at negligible-probability points.
fn fidelity_density(
    rho_e_b: &DensityMatrix,
    sigma_tilde: &Operator,
    disp_b: &Array2<C64>,
) -> f64 {
    // tr[ρ_E D σ̃ D†] = tr[(D† ρ_E D) σ̃]
    let a = disp_b
        .t()
        .mapv(|z| z.conj())
        .dot(rho_e_b.data())
        .dot(disp_b);
    let s = sigma_tilde.data();
    let n = rho_e_b.side();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[[i, j]] * s[[j, i]];
        }
    }
    acc.re
}

/// Bob's corrective displacement: normalizes the conditional state by its
/// probability and conjugates with `D_B(x₋ + i p₊)`.
pub fn reconstruct(
    sigma_tilde: &Operator,
    p: f64,
    x_minus: f64,
    p_plus: f64,
) -> Result<DensityMatrix> {
    if p <= 1e-14 {
        return Err(TeleportError::NegligibleProbability {
            p,
            x: x_minus,
            pp: p_plus,
        });
    }
    let d = fock::displacement(sigma_tilde.side(), C64::new(x_minus, p_plus))?;
    let out = d.matmul(&sigma_tilde.scale(cr(1.0 / p))).matmul(&d.dagger());
    DensityMatrix::new(out).map_err(Into::into)
}

/// Teleportation fidelity for one Bell outcome: `tr[ρ_E ρ_out]`, real within
/// 1e-10 for valid states.
pub fn fidelity_single(rho_e: &DensityMatrix, rho_out: &DensityMatrix) -> Result<f64> {
    if rho_e.dims() != rho_out.dims() {
        return Err(TeleportError::ShapeMismatch(format!(
            "dims {:?} vs {:?}",
            rho_e.dims(),
            rho_out.dims()
        )));
    }
    let f = rho_e.expect(rho_out.op());
    debug_assert!(f.im.abs() <= 1e-10, "fidelity imaginary part {}", f.im);
    Ok(f.re)
}

/// Precomputed quadrature nodes, weights, and displacement operators for the
/// Bell-outcome integral; reusable across evolution times.
pub struct BellKernel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    disp_r: Vec<Array2<C64>>,
    disp_b: Vec<Array2<C64>>,
    same_dims: bool,
}

impl BellKernel {
    pub fn new(grid: &QuadratureGrid, n_r: usize, n_b: usize) -> Result<Self> {
        grid.validate()?;
        let nodes = grid.nodes();
        let weights = grid.weights();
        let n_pts = nodes.len();
        // exact D(β) blocks cached per grid point; β = x₋ + i p₊ traversed
        // row-major in x
        let build = |dim: usize| -> Vec<Array2<C64>> {
            (0..n_pts * n_pts)
                .into_par_iter()
                .map(|k| {
                    let (ix, ip) = (k / n_pts, k % n_pts);
                    fock::displacement_block(dim, dim, C64::new(nodes[ix], nodes[ip]))
                })
                .collect()
        };
        let disp_r = build(n_r);
        let disp_b = if n_r == n_b { Vec::new() } else { build(n_b) };
        Ok(Self {
            nodes,
            weights,
            disp_r,
            disp_b,
            same_dims: n_r == n_b,
        })
    }

    fn disp_b_at(&self, k: usize) -> &Array2<C64> {
        if self.same_dims {
            &self.disp_r[k]
        } else {
            &self.disp_b[k]
        }
    }

    /// `F̄ = ∬ P·F dx₋ dp₊` by the trapezoid rule. Grid rows are evaluated
    /// in parallel and reduced in a fixed order.
    pub fn average_fidelity(
        &self,
        rho_e_r: &DensityMatrix,
        rho_e_b: &DensityMatrix,
        rho_rb: &DensityMatrix,
    ) -> f64 {
        let n = self.nodes.len();
        let row_sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|ix| {
                let mut acc = 0.0;
                for ip in 0..n {
                    let k = ix * n + ip;
                    let (sigma, _) = conditional_state(rho_e_r, rho_rb, &self.disp_r[k]);
                    let pf = fidelity_density(rho_e_b, &sigma, self.disp_b_at(k));
                    acc += self.weights[ip] * pf;
                }
                self.weights[ix] * acc
            })
            .collect();
        row_sums.iter().sum()
    }

    /// `∬ P dx₋ dp₊`; approaches 1 when the grid covers the outcome
    /// distribution and truncations are adequate.
    pub fn total_probability(&self, rho_e_r: &DensityMatrix, rho_rb: &DensityMatrix) -> f64 {
        let n = self.nodes.len();
        let row_sums: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|ix| {
                let mut acc = 0.0;
                for ip in 0..n {
                    let k = ix * n + ip;
                    let (_, p) = conditional_state(rho_e_r, rho_rb, &self.disp_r[k]);
                    acc += self.weights[ip] * p;
                }
                self.weights[ix] * acc
            })
            .collect();
        row_sums.iter().sum()
    }

    /// The most likely Bell outcome on the grid (fixed traversal order, first
    /// maximum wins): `(x₋, p₊, P)`.
    pub fn modal_outcome(&self, rho_e_r: &DensityMatrix, rho_rb: &DensityMatrix) -> (f64, f64, f64) {
        let n = self.nodes.len();
        let probs: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| conditional_state(rho_e_r, rho_rb, &self.disp_r[k]).1)
            .collect();
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, &p) in probs.iter().enumerate() {
            if p > best.1 {
                best = (k, p);
            }
        }
        let (ix, ip) = (best.0 / n, best.0 % n);
        (self.nodes[ix], self.nodes[ip], best.1)
    }
}

/// Average fidelity of one experiment configuration against an evolved
/// resource state, with the doubling convergence gate applied.
pub fn average_fidelity(cfg: &TeleportConfig, rho_rb_t: &DensityMatrix) -> Result<f64> {
    cfg.validate()?;
    let e_r = cfg.input.build(cfg.n_r)?.to_density();
    let e_b = cfg.input.build(cfg.channel.mode_dim)?.to_density();
    let coarse = BellKernel::new(&cfg.grid, cfg.n_r, cfg.channel.mode_dim)?;
    let fine = BellKernel::new(&cfg.grid.refined(), cfg.n_r, cfg.channel.mode_dim)?;
    let f_coarse = coarse.average_fidelity(&e_r, &e_b, rho_rb_t);
    let f_fine = fine.average_fidelity(&e_r, &e_b, rho_rb_t);
    let delta = (f_fine - f_coarse).abs();
    if delta > 1e-3 {
        return Err(TeleportError::Resolution { time: f64::NAN, delta });
    }
    Ok(f_coarse)
}

/// Pointwise ratio `F̄(t) / F̄(0)`.
pub fn relative_fidelity(series: &MetricSeries) -> Result<MetricSeries> {
    let baseline = *series
        .values()
        .first()
        .ok_or_else(|| TeleportError::InvalidParameter("empty fidelity series".into()))?;
    if baseline <= 0.0 {
        return Err(TeleportError::InvalidBaseline(baseline));
    }
    MetricSeries::new(
        series.times().to_vec(),
        series.values().iter().map(|v| v / baseline).collect(),
        format!("{}_rel", series.label()),
    )
    .map_err(Into::into)
}

/// Wigner function by displaced parity: `W(x, p) = (2/π) tr[ρ D(β) Π D†(β)]`
/// with `β = x + i p` and `Π = diag((-1)ⁿ)`. Since `Π D(-β) = D(β) Π`, the
/// displaced parity equals `D(2β) Π`, so the trace against a finite-support
/// `ρ` needs only the exact block of `D(2β)`. Rows index `x`, columns `p`.
pub fn wigner(rho: &DensityMatrix, xs: &[f64], ps: &[f64]) -> Result<Array2<f64>> {
    if rho.dims().len() != 1 {
        return Err(TeleportError::ShapeMismatch(format!(
            "wigner needs a single-mode state, got dims {:?}",
            rho.dims()
        )));
    }
    let dim = rho.side();
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            ps.iter()
                .map(|&p| {
                    let d2 = fock::displacement_block(dim, dim, C64::new(2.0 * x, 2.0 * p));
                    // tr[ρ D(2β) Π] = Σ_{k,l} ρ_{kl} (-1)ᵏ [D(2β)]_{lk}
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..dim {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        for l in 0..dim {
                            acc += rho.data()[[k, l]] * d2[[l, k]] * cr(sign);
                        }
                    }
                    acc.re * 2.0 / std::f64::consts::PI
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((xs.len(), ps.len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(out)
}

/// Phase-space ellipse read off the second moments of a single-mode state:
/// amplitude `d`, semi-axes `h >= w`, orientation, and flattening
/// `f = (h - w)/w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseDiagnostics {
    pub amplitude: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle_deg: f64,
    pub flattening: f64,
}

pub fn ellipse_diagnostics(rho: &DensityMatrix) -> Result<EllipseDiagnostics> {
    if rho.dims().len() != 1 {
        return Err(TeleportError::ShapeMismatch(
            "ellipse diagnostics need a single-mode state".into(),
        ));
    }
    let dim = rho.side();
    let x = fock::position(dim)?;
    let p = fock::momentum(dim)?;
    let mx = rho.expect(&x).re;
    let mp = rho.expect(&p).re;
    let xx = rho.expect(&x.matmul(&x)).re - mx * mx;
    let pp = rho.expect(&p.matmul(&p)).re - mp * mp;
    let xp_op = x.matmul(&p).add(&p.matmul(&x)).scale(cr(0.5));
    let xp = rho.expect(&xp_op).re - mx * mp;
    let mean = 0.5 * (xx + pp);
    let half_diff = 0.5 * (xx - pp);
    let radius = (half_diff * half_diff + xp * xp).sqrt();
    let lam_max = (mean + radius).max(0.0);
    let lam_min = (mean - radius).max(0.0);
    let h = lam_max.sqrt();
    let w = lam_min.sqrt();
    let angle = 0.5 * (2.0 * xp).atan2(xx - pp);
    Ok(EllipseDiagnostics {
        amplitude: (mx * mx + mp * mp).sqrt(),
        semi_major: h,
        semi_minor: w,
        angle_deg: angle.to_degrees(),
        flattening: if w > 0.0 { (h - w) / w } else { f64::INFINITY },
    })
}

/// Which Bell outcome a Wigner snapshot conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WignerOutcome {
    /// The most likely outcome on the quadrature grid at each snapshot time.
    #[default]
    Modal,
    /// The origin outcome `(0, 0)`; parity-revealing for cat states.
    Origin,
    /// A fixed outcome supplied in the config.
    Fixed { x_minus: f64, p_plus: f64 },
}

/// Phase-space rendering request attached to a teleportation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerRequest {
    pub times: Vec<f64>,
    pub half_width: f64,
    pub points_per_axis: usize,
    #[serde(default)]
    pub outcome: WignerOutcome,
}

/// One experiment: input state, resource squeezing, channel, quadrature
/// grid, evolution grid, and the mode-R truncation (`N_B` and ancilla
/// truncations live in the channel spec).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportConfig {
    pub input: InputState,
    pub r: f64,
    pub channel: ChannelSpec,
    pub grid: QuadratureGrid,
    pub times: TimeGrid,
    pub n_r: usize,
    #[serde(default)]
    pub wigner: Option<WignerRequest>,
}

impl TeleportConfig {
    pub fn validate(&self) -> Result<Self> {
        if self.r < 0.0 {
            return Err(TeleportError::InvalidParameter(format!(
                "resource squeezing r = {} must be non-negative",
                self.r
            )));
        }
        if self.n_r < 2 {
            return Err(TeleportError::InvalidParameter(format!(
                "mode R dim {} must be at least 2",
                self.n_r
            )));
        }
        self.channel.validate()?;
        self.grid.validate()?;
        // the input must fit both truncations
        self.input.build(self.n_r)?;
        self.input.build(self.channel.mode_dim)?;
        Ok(self.clone())
    }
}

/// Conditional Wigner snapshot of the reconstructed output state.
#[derive(Debug, Clone)]
pub struct WignerSnapshot {
    pub time: f64,
    pub x_minus: f64,
    pub p_plus: f64,
    pub probability_density: f64,
    pub w_origin: f64,
    pub diagnostics: EllipseDiagnostics,
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub values: Array2<f64>,
}

/// Output bundle of a teleportation run.
#[derive(Debug, Clone)]
pub struct TeleportRun {
    pub fbar: MetricSeries,
    pub fbar_rel: MetricSeries,
    pub log_negativity: MetricSeries,
    pub wigner: Vec<WignerSnapshot>,
}

/// End-to-end pipeline: builds the resource state, evolves it through the
/// channel map extended by the identity on mode R, and evaluates E_N and F̄
/// (with the doubling gate) at every grid time.
pub fn run_teleportation(cfg: &TeleportConfig) -> Result<TeleportRun> {
    let cfg = cfg.validate()?;
    let n_b = cfg.channel.mode_dim;
    let rho_rb0 = fock::tmsv(cfg.n_r, n_b, cfg.r)?.to_density();
    let e_r = cfg.input.build(cfg.n_r)?.to_density();
    let e_b = cfg.input.build(n_b)?.to_density();
    let maps = master::channel_map_series(&cfg.channel, &cfg.times)?;
    let kernel = BellKernel::new(&cfg.grid, cfg.n_r, n_b)?;
    let kernel_fine = BellKernel::new(&cfg.grid.refined(), cfg.n_r, n_b)?;
    let times = cfg.times.times();

    let mut fbar_values = Vec::with_capacity(maps.len());
    let mut en_values = Vec::with_capacity(maps.len());
    let mut evolved_states = Vec::with_capacity(maps.len());
    for (k, map) in maps.iter().enumerate() {
        let rho_t = map.apply_on_second(&rho_rb0)?;
        let en = metrics::log_negativity(&rho_t, 1)?;
        let f_coarse = kernel.average_fidelity(&e_r, &e_b, &rho_t);
        let f_fine = kernel_fine.average_fidelity(&e_r, &e_b, &rho_t);
        let delta = (f_fine - f_coarse).abs();
        if delta > 1e-3 {
            return Err(TeleportError::Resolution {
                time: times[k],
                delta,
            });
        }
        fbar_values.push(f_coarse);
        en_values.push(en);
        evolved_states.push(rho_t);
    }

    let label = cfg.input.label();
    let fbar = MetricSeries::new(times.clone(), fbar_values, format!("fbar[{label}]"))?;
    let fbar_rel = relative_fidelity(&fbar)?;
    let log_neg = MetricSeries::new(times.clone(), en_values, "E_N".to_string())?;

    let mut snapshots = Vec::new();
    if let Some(req) = &cfg.wigner {
        let axis: Vec<f64> = {
            let n = req.points_per_axis.max(2);
            let h = 2.0 * req.half_width / (n - 1) as f64;
            (0..n).map(|k| -req.half_width + h * k as f64).collect()
        };
        for &t_req in &req.times {
            // snap to the nearest grid time
            let k = times
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - t_req)
                        .abs()
                        .partial_cmp(&(*b - t_req).abs())
                        .expect("finite times")
                })
                .map(|(k, _)| k)
                .expect("non-empty grid");
            let rho_t = &evolved_states[k];
            let (xm, pp, _) = match req.outcome {
                WignerOutcome::Modal => kernel.modal_outcome(&e_r, rho_t),
                WignerOutcome::Origin => (0.0, 0.0, 0.0),
                WignerOutcome::Fixed { x_minus, p_plus } => (x_minus, p_plus, 0.0),
            };
            let (sigma, p) = bell_project(&e_r, rho_t, xm, pp)?;
            let rho_out = reconstruct(&sigma, p, xm, pp)?;
            let values = wigner(&rho_out, &axis, &axis)?;
            let w_origin = wigner(&rho_out, &[0.0], &[0.0])?[[0, 0]];
            snapshots.push(WignerSnapshot {
                time: times[k],
                x_minus: xm,
                p_plus: pp,
                probability_density: p,
                w_origin,
                diagnostics: ellipse_diagnostics(&rho_out)?,
                xs: axis.clone(),
                ps: axis.clone(),
                values,
            });
        }
    }

    Ok(TeleportRun {
        fbar,
        fbar_rel,
        log_negativity: log_neg,
        wigner: snapshots,
    })
}
