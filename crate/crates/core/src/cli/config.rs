//! Experiment configuration: a nested, human-editable TOML format with
//! study-specific sections, defaults for the reference channel, and
//! fail-with-all-errors validation.

use super::CliError;
use crate::channels::{self, ChannelSpec};
use crate::master::TimeGrid;
use crate::teleport::{
    InputState, QuadratureGrid, TeleportConfig, WignerOutcome, WignerRequest,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const VALID_STUDIES: [&str; 6] = [
    "entanglement",
    "fidelity",
    "blp_surface",
    "wigner",
    "compare_inputs",
    "psd",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Entanglement,
    Fidelity,
    BlpSurface,
    Wigner,
    CompareInputs,
    Psd,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Entanglement => "entanglement",
            Study::Fidelity => "fidelity",
            Study::BlpSurface => "blp_surface",
            Study::Wigner => "wigner",
            Study::CompareInputs => "compare_inputs",
            Study::Psd => "psd",
        }
    }

    fn parse(name: &str) -> Option<Study> {
        match name {
            "entanglement" => Some(Study::Entanglement),
            "fidelity" => Some(Study::Fidelity),
            "blp_surface" => Some(Study::BlpSurface),
            "wigner" => Some(Study::Wigner),
            "compare_inputs" => Some(Study::CompareInputs),
            "psd" => Some(Study::Psd),
            _ => None,
        }
    }
}

// ---- raw (serde) layer -----------------------------------------------------

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    study: Option<String>,
    output: Option<String>,
    channel: Option<RawChannel>,
    teleport: Option<RawTeleport>,
    quadrature: Option<RawQuadrature>,
    times: Option<RawTimes>,
    blp: Option<RawBlp>,
    wigner: Option<RawWigner>,
    psd: Option<RawPsd>,
    compare: Option<RawCompare>,
    metadata: Option<toml::value::Table>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    kind: Option<String>,
    gamma0: Option<f64>,
    kappa0: Option<f64>,
    omega0: Option<f64>,
    mode_dim: Option<usize>,
    anc_dim: Option<usize>,
    omegas: Option<Vec<f64>>,
    gammas: Option<Vec<f64>>,
    kappas: Option<Vec<f64>>,
    anc_dims: Option<Vec<usize>>,
    unit_scale: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTeleport {
    input: Option<String>,
    alpha_re: Option<f64>,
    alpha_im: Option<f64>,
    r_s: Option<f64>,
    theta: Option<f64>,
    theta_c: Option<f64>,
    r: Option<f64>,
    n_r: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    half_width: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTimes {
    t0: Option<f64>,
    t_end: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBlp {
    gamma_start: Option<f64>,
    gamma_stop: Option<f64>,
    gamma_step: Option<f64>,
    kappa_values: Option<Vec<f64>>,
    candidate_alphas: Option<Vec<f64>>,
    mode_dim: Option<usize>,
    anc_dim: Option<usize>,
    t_end: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawWigner {
    times: Option<Vec<f64>>,
    half_width: Option<f64>,
    points: Option<usize>,
    outcome: Option<String>,
    x_minus: Option<f64>,
    p_plus: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPsd {
    omega_min: Option<f64>,
    omega_max: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    r_s: Option<f64>,
    alpha: Option<f64>,
    r_gaussian: Option<f64>,
    r_cat: Option<f64>,
}

// ---- resolved layer ---------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BlpSurfaceSettings {
    pub gammas: Vec<f64>,
    pub kappas: Vec<f64>,
    pub candidate_alphas: Vec<f64>,
    pub mode_dim: usize,
    pub anc_dim: usize,
    pub times: TimeGrid,
}

#[derive(Debug, Clone)]
pub struct PsdSettings {
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareSettings {
    pub alpha: f64,
    pub r_s: f64,
    /// resource squeezing for coherent and squeezed inputs
    pub r_gaussian: f64,
    /// resource squeezing for cat inputs
    pub r_cat: f64,
}

/// A fully validated experiment definition.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub study: Study,
    pub output: Option<String>,
    pub channel: ChannelSpec,
    pub unit_scale: Option<f64>,
    pub teleport: TeleportConfig,
    pub blp: BlpSurfaceSettings,
    pub psd: PsdSettings,
    pub compare: CompareSettings,
    pub metadata: Vec<(String, String)>,
    pub config_hash: String,
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingFile {
        path: path.display().to_string(),
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        message: e.to_string(),
    })?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let hash: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    resolve(raw, hash)
}

fn resolve(raw: RawConfig, config_hash: String) -> Result<ExperimentConfig, CliError> {
    let mut errors: Vec<String> = Vec::new();

    let study = match raw.study.as_deref() {
        None => {
            errors.push(format!(
                "study: missing; valid studies are {}",
                VALID_STUDIES.join(", ")
            ));
            Study::Fidelity
        }
        Some(name) => Study::parse(name).unwrap_or_else(|| {
            errors.push(format!(
                "study: unknown study '{name}'; valid studies are {}",
                VALID_STUDIES.join(", ")
            ));
            Study::Fidelity
        }),
    };

    let rc = raw.channel.unwrap_or_default();
    let unit_scale = rc.unit_scale;
    let scale = unit_scale.unwrap_or(1.0);
    if scale <= 0.0 {
        errors.push(format!(
            "channel.unit_scale: {scale} must be positive"
        ));
    }
    let kind = rc.kind.clone().unwrap_or_else(|| "lorentzian".into());
    let mode_dim = rc.mode_dim.unwrap_or(8);
    let channel = build_channel(&kind, &rc, mode_dim, scale, &mut errors);

    let rt = raw.teleport.unwrap_or_default();
    let alpha = crate::fock::C64::new(rt.alpha_re.unwrap_or(1.0), rt.alpha_im.unwrap_or(0.0));
    let input_kind = rt.input.clone().unwrap_or_else(|| "coherent".into());
    let input = match input_kind.as_str() {
        "coherent" => InputState::coherent(alpha),
        "squeezed" => InputState::squeezed(alpha, rt.r_s.unwrap_or(1.0), rt.theta.unwrap_or(0.0)),
        "cat" => InputState::cat(alpha, rt.theta_c.unwrap_or(std::f64::consts::PI)),
        other => {
            errors.push(format!(
                "teleport.input: unknown input state '{other}'; expected coherent, squeezed, or cat"
            ));
            InputState::coherent(alpha)
        }
    };
    let default_r = match input {
        InputState::Cat { .. } => 0.4,
        _ => 0.346,
    };
    let r = rt.r.unwrap_or(default_r);
    if r < 0.0 {
        errors.push(format!("teleport.r: {r} must be non-negative"));
    }
    let n_r = rt.n_r.unwrap_or(mode_dim);
    if n_r < 2 {
        errors.push(format!("teleport.n_r: {n_r} must be at least 2"));
    }

    let rq = raw.quadrature.unwrap_or_default();
    let grid = QuadratureGrid {
        half_width: rq.half_width.unwrap_or(alpha.norm() + 4.0),
        points_per_axis: rq.points.unwrap_or(61),
        rule: Default::default(),
    };
    if let Err(e) = grid.validate() {
        errors.push(format!("quadrature: {e}"));
    }

    let rtimes = raw.times.unwrap_or_default();
    let t0 = rtimes.t0.unwrap_or(0.0);
    let t_end = rtimes.t_end.unwrap_or(100.0);
    let n_steps = rtimes.n_steps.unwrap_or(400);
    let times = match TimeGrid::new(t0, t_end, n_steps) {
        Ok(g) => g,
        Err(e) => {
            errors.push(format!("times: {e}"));
            TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 1,
            }
        }
    };

    let rw = raw.wigner.unwrap_or_default();
    let wigner = if study == Study::Wigner || rw.times.is_some() {
        let outcome = match rw.outcome.as_deref().unwrap_or("modal") {
            "modal" => WignerOutcome::Modal,
            "origin" => WignerOutcome::Origin,
            "fixed" => WignerOutcome::Fixed {
                x_minus: rw.x_minus.unwrap_or(0.0),
                p_plus: rw.p_plus.unwrap_or(0.0),
            },
            other => {
                errors.push(format!(
                    "wigner.outcome: unknown mode '{other}'; expected modal, origin, or fixed"
                ));
                WignerOutcome::Modal
            }
        };
        Some(WignerRequest {
            times: rw.times.unwrap_or_else(|| vec![0.0, 10.0, 20.0]),
            half_width: rw.half_width.unwrap_or(4.0),
            points_per_axis: rw.points.unwrap_or(81),
            outcome,
        })
    } else {
        None
    };

    let teleport = TeleportConfig {
        input,
        r,
        channel: channel.clone(),
        grid,
        times: times.clone(),
        n_r,
        wigner,
    };

    let rb = raw.blp.unwrap_or_default();
    let gamma_start = rb.gamma_start.unwrap_or(0.1);
    let gamma_stop = rb.gamma_stop.unwrap_or(5.0);
    let gamma_step = rb.gamma_step.unwrap_or(0.1);
    if gamma_step <= 0.0 {
        errors.push(format!("blp.gamma_step: {gamma_step} must be positive"));
    }
    let mut gammas = Vec::new();
    if gamma_step > 0.0 {
        let mut g = gamma_start;
        while g <= gamma_stop + 1e-12 {
            gammas.push((g * 1e12).round() / 1e12);
            g += gamma_step;
        }
    }
    if gammas.iter().any(|&g| g <= 0.0) {
        errors.push("blp.gamma_start: swept gamma values must be positive".into());
    }
    let blp_mode_dim = rb.mode_dim.unwrap_or(6);
    let blp_times = match TimeGrid::new(0.0, rb.t_end.unwrap_or(20.0), rb.n_steps.unwrap_or(800)) {
        Ok(g) => g,
        Err(e) => {
            errors.push(format!("blp: {e}"));
            TimeGrid {
                t0: 0.0,
                t_end: 20.0,
                n_steps: 800,
            }
        }
    };
    let blp = BlpSurfaceSettings {
        gammas,
        kappas: rb.kappa_values.unwrap_or_else(|| vec![1.0]),
        candidate_alphas: rb.candidate_alphas.unwrap_or_else(|| vec![0.5, 1.0]),
        mode_dim: blp_mode_dim,
        anc_dim: rb.anc_dim.unwrap_or(4),
        times: blp_times,
    };

    let rpsd = raw.psd.unwrap_or_default();
    let psd = {
        let lo = rpsd.omega_min.unwrap_or(0.0);
        let hi = rpsd.omega_max.unwrap_or(2.0);
        let n = rpsd.points.unwrap_or(401).max(2);
        if hi <= lo {
            errors.push(format!("psd: omega_max {hi} must exceed omega_min {lo}"));
        }
        PsdSettings {
            omegas: (0..n)
                .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    };

    let rcomp = raw.compare.unwrap_or_default();
    let compare = CompareSettings {
        alpha: rcomp.alpha.unwrap_or(1.0),
        r_s: rcomp.r_s.unwrap_or(1.0),
        r_gaussian: rcomp.r_gaussian.unwrap_or(0.346),
        r_cat: rcomp.r_cat.unwrap_or(0.4),
    };

    let metadata: Vec<(String, String)> = raw
        .metadata
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| {
            let vs = match v {
                toml::Value::String(s) => s,
                other => other.to_string(),
            };
            (k, vs)
        })
        .collect();

    // semantic validation of the channel and teleport assembly
    if let Err(e) = channel.validate() {
        errors.push(format!("channel: {e}"));
    }
    if errors.is_empty() {
        if let Err(e) = teleport.validate() {
            errors.push(format!("teleport: {e}"));
        }
    }

    if !errors.is_empty() {
        return Err(CliError::Validation(errors));
    }
    Ok(ExperimentConfig {
        study,
        output: raw.output,
        channel,
        unit_scale,
        teleport,
        blp,
        psd,
        compare,
        metadata,
        config_hash,
    })
}

fn build_channel(
    kind: &str,
    rc: &RawChannel,
    mode_dim: usize,
    scale: f64,
    errors: &mut Vec<String>,
) -> ChannelSpec {
    let fallback = || ChannelSpec {
        mode_dim,
        omega_b: 1.0,
        ancillas: vec![],
        markovian_reference: true,
        reference_kappas: vec![0.0],
    };
    match kind {
        "lorentzian" => {
            let gamma0 = rc.gamma0.unwrap_or(0.8) / scale;
            let kappa0 = rc.kappa0.unwrap_or(4.0) / scale;
            let omega0 = rc.omega0.map(|w| w / scale).unwrap_or(1.0);
            if gamma0 <= 0.0 {
                errors.push(format!("channel.gamma0: {gamma0} must be positive"));
            }
            if kappa0 < 0.0 {
                errors.push(format!("channel.kappa0: {kappa0} must be non-negative"));
            }
            match channels::lorentzian_channel(
                gamma0.max(f64::MIN_POSITIVE),
                kappa0.max(0.0),
                omega0,
                mode_dim,
                rc.anc_dim.unwrap_or(5),
            ) {
                Ok(spec) => spec,
                Err(e) => {
                    errors.push(format!("channel: {e}"));
                    fallback()
                }
            }
        }
        "two_lorentzian" => {
            let omegas = rc.omegas.clone().unwrap_or_else(|| vec![8.0, 12.0]);
            let gammas = rc.gammas.clone().unwrap_or_else(|| vec![0.6, 0.6]);
            let kappas = rc.kappas.clone().unwrap_or_else(|| vec![2.0, 5.0]);
            let anc_dims = rc.anc_dims.clone().unwrap_or_else(|| vec![4, 4]);
            if omegas.len() != 2 || gammas.len() != 2 || kappas.len() != 2 || anc_dims.len() != 2 {
                errors.push(
                    "channel: two_lorentzian needs omegas, gammas, kappas, anc_dims of length 2"
                        .into(),
                );
                return fallback();
            }
            for (k, g) in gammas.iter().enumerate() {
                if *g <= 0.0 {
                    errors.push(format!("channel.gammas[{k}]: {g} must be positive"));
                }
            }
            match channels::two_lorentzian_channel(
                [omegas[0] / scale, omegas[1] / scale],
                [gammas[0] / scale, gammas[1] / scale],
                [kappas[0] / scale, kappas[1] / scale],
                mode_dim,
                [anc_dims[0], anc_dims[1]],
            ) {
                Ok(spec) => spec,
                Err(e) => {
                    errors.push(format!("channel: {e}"));
                    fallback()
                }
            }
        }
        "markovian" => {
            let kappas: Vec<f64> = rc
                .kappas
                .clone()
                .unwrap_or_else(|| vec![4.0])
                .iter()
                .map(|k| k / scale)
                .collect();
            match channels::markovian_reference(&kappas, mode_dim) {
                Ok(spec) => spec,
                Err(e) => {
                    errors.push(format!("channel: {e}"));
                    fallback()
                }
            }
        }
        other => {
            errors.push(format!(
                "channel.kind: unknown kind '{other}'; expected lorentzian, two_lorentzian, or markovian"
            ));
            fallback()
        }
    }
}
