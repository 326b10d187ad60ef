//! Named studies: each maps one experiment config onto deterministic result
//! tables mirroring the channel-vs-reference comparisons of the analysis.

use super::config::{ExperimentConfig, Study};
use super::table::ResultTable;
use super::CliError;
use crate::channels::{lorentzian_channel, ChannelSpec};
use crate::fock;
use crate::master::{self, TimeGrid};
use crate::metrics::{self, StatePair};
use crate::teleport::{self, InputState, TeleportConfig};
use rayon::prelude::*;

/// Runs the configured study, handing each finished table to `sink` so
/// partial results are flushed before any later failure aborts the run.
pub fn run_study_with(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match cfg.study {
        Study::Entanglement => entanglement_study(cfg, sink),
        Study::Fidelity => fidelity_study(cfg, sink),
        Study::BlpSurface => blp_surface_study(cfg, sink),
        Study::Wigner => wigner_study(cfg, sink),
        Study::CompareInputs => compare_inputs_study(cfg, sink),
        Study::Psd => psd_study(cfg, sink),
    }
}

/// Convenience wrapper collecting all tables in memory.
pub fn run_study(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let mut tables = Vec::new();
    let mut sink = |t: &ResultTable| {
        tables.push(t.clone());
        Ok(())
    };
    run_study_with(cfg, &mut sink)?;
    Ok(tables)
}

fn stamp(table: &mut ResultTable, cfg: &ExperimentConfig) {
    table.add_provenance("artifact", format!("cvteleport {}", env!("CARGO_PKG_VERSION")));
    table.add_provenance("study", cfg.study.name());
    table.add_provenance("config_hash", &cfg.config_hash);
    table.add_provenance(
        "conventions",
        "omega_b = 1 time unit; x = (a + a†)/2; vec = column stacking",
    );
    table.add_provenance("channel", describe_channel(&cfg.channel));
    if let Some(scale) = cfg.unit_scale {
        table.add_provenance("unit_scale", format!("{scale} (physical units per omega_b)"));
    }
    for (k, v) in &cfg.metadata {
        table.add_provenance(format!("meta.{k}"), v);
    }
}

fn describe_channel(spec: &ChannelSpec) -> String {
    if spec.markovian_reference {
        format!(
            "markovian kappas={:?} mode_dim={}",
            spec.reference_kappas, spec.mode_dim
        )
    } else {
        let parts: Vec<String> = spec
            .ancillas
            .iter()
            .map(|a| {
                format!(
                    "(omega={} gamma={} kappa={} dim={})",
                    a.omega, a.gamma, a.kappa, a.dim
                )
            })
            .collect();
        format!("augmented mode_dim={} ancillas={}", spec.mode_dim, parts.join(" "))
    }
}

fn stamp_teleport(table: &mut ResultTable, tc: &TeleportConfig) {
    table.add_provenance("input", tc.input.label());
    table.add_provenance("alpha", format!("{}", tc.input.alpha()));
    table.add_provenance("resource_r", format!("{}", tc.r));
    table.add_provenance("dims", format!("n_r={} n_b={}", tc.n_r, tc.channel.mode_dim));
    table.add_provenance(
        "quadrature",
        format!(
            "half_width={} points={} rule=trapezoid (doubling gate 1e-3)",
            tc.grid.half_width, tc.grid.points_per_axis
        ),
    );
    table.add_provenance(
        "times",
        format!(
            "t0={} t_end={} n_steps={}",
            tc.times.t0, tc.times.t_end, tc.times.n_steps
        ),
    );
}

/// Evolved resource state and its logarithmic negativity at every grid time.
fn entanglement_series(
    channel: &ChannelSpec,
    n_r: usize,
    r: f64,
    grid: &TimeGrid,
) -> Result<Vec<f64>, CliError> {
    let rho0 = fock::tmsv(n_r, channel.mode_dim, r)
        .map_err(teleport::TeleportError::from)?
        .to_density();
    let maps = master::channel_map_series(channel, grid).map_err(teleport::TeleportError::from)?;
    maps.iter()
        .map(|m| {
            let rho_t = m
                .apply_on_second(&rho0)
                .map_err(teleport::TeleportError::from)?;
            metrics::log_negativity(&rho_t, 1).map_err(teleport::TeleportError::from)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)
}

fn entanglement_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let tc = &cfg.teleport;
    let markov = cfg.channel.markovian_counterpart()?;
    let en_nm = entanglement_series(&cfg.channel, tc.n_r, tc.r, &tc.times)?;
    let en_m = entanglement_series(&markov, tc.n_r, tc.r, &tc.times)?;
    let mut table = ResultTable::new(
        "entanglement",
        vec![
            "time".into(),
            "en_nonmarkovian".into(),
            "en_markovian".into(),
        ],
    );
    stamp(&mut table, cfg);
    stamp_teleport(&mut table, tc);
    for ((t, a), b) in tc.times.times().iter().zip(en_nm).zip(en_m) {
        table.push_row(vec![*t, a, b]);
    }
    sink(&table)
}

fn fidelity_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let tc = &cfg.teleport;
    let run_nm = teleport::run_teleportation(tc)?;
    let mut tc_m = tc.clone();
    tc_m.channel = cfg.channel.markovian_counterpart()?;
    let run_m = teleport::run_teleportation(&tc_m)?;

    let mut table = ResultTable::new(
        "fidelity",
        vec![
            "time".into(),
            "fbar_nonmarkovian".into(),
            "fbar_rel_nonmarkovian".into(),
            "en_nonmarkovian".into(),
            "fbar_markovian".into(),
            "fbar_rel_markovian".into(),
            "en_markovian".into(),
        ],
    );
    stamp(&mut table, cfg);
    stamp_teleport(&mut table, tc);
    let times = tc.times.times();
    for (k, t) in times.iter().enumerate() {
        table.push_row(vec![
            *t,
            run_nm.fbar.values()[k],
            run_nm.fbar_rel.values()[k],
            run_nm.log_negativity.values()[k],
            run_m.fbar.values()[k],
            run_m.fbar_rel.values()[k],
            run_m.log_negativity.values()[k],
        ]);
    }
    sink(&table)
}

fn blp_surface_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let settings = &cfg.blp;
    let dim = settings.mode_dim;
    let mut candidates = vec![StatePair {
        left: fock::fock_state(dim, 0)
            .map_err(teleport::TeleportError::from)?
            .to_density(),
        right: fock::fock_state(dim, 1)
            .map_err(teleport::TeleportError::from)?
            .to_density(),
        label: "fock01".into(),
    }];
    for &alpha in &settings.candidate_alphas {
        candidates.push(StatePair {
            left: fock::coherent(dim, fock::C64::new(alpha, 0.0))
                .map_err(teleport::TeleportError::from)?
                .to_density(),
            right: fock::coherent(dim, fock::C64::new(-alpha, 0.0))
                .map_err(teleport::TeleportError::from)?
                .to_density(),
            label: format!("coherent_pm{alpha}"),
        });
    }
    let labels: Vec<String> = candidates.iter().map(|p| p.label.clone()).collect();

    let sweep: Vec<(f64, f64)> = settings
        .kappas
        .iter()
        .flat_map(|&k| settings.gammas.iter().map(move |&g| (g, k)))
        .collect();
    let results: Vec<Result<(f64, f64, f64, usize), CliError>> = sweep
        .par_iter()
        .map(|&(gamma, kappa)| {
            let spec = lorentzian_channel(gamma, kappa, 1.0, dim, settings.anc_dim)?;
            let blp = metrics::blp_max(&spec, &candidates, &settings.times)
                .map_err(teleport::TeleportError::from)?;
            let best_idx = labels
                .iter()
                .position(|l| *l == blp.best_pair)
                .unwrap_or(0);
            Ok((gamma, kappa, blp.value, best_idx))
        })
        .collect();

    let mut table = ResultTable::new(
        "blp_surface",
        vec![
            "gamma0".into(),
            "kappa0".into(),
            "blp".into(),
            "best_pair_index".into(),
        ],
    );
    stamp(&mut table, cfg);
    table.add_provenance("candidate_pairs", labels.join(";"));
    table.add_provenance(
        "blp_times",
        format!(
            "t0={} t_end={} n_steps={}",
            settings.times.t0, settings.times.t_end, settings.times.n_steps
        ),
    );
    table.add_provenance(
        "blp_dims",
        format!("mode_dim={} anc_dim={}", dim, settings.anc_dim),
    );
    for row in results {
        let (g, k, v, idx) = row?;
        table.push_row(vec![g, k, v, idx as f64]);
    }
    sink(&table)
}

fn wigner_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let tc = &cfg.teleport;
    if tc.wigner.is_none() {
        return Err(CliError::Validation(vec![
            "wigner: section required for the wigner study".into(),
        ]));
    }
    let mut tc_m = tc.clone();
    tc_m.channel = cfg.channel.markovian_counterpart()?;

    let mut summary = ResultTable::new(
        "wigner_summary",
        vec![
            "time".into(),
            "markovian".into(),
            "x_minus".into(),
            "p_plus".into(),
            "w_origin".into(),
            "amplitude_d".into(),
            "semi_major_h".into(),
            "semi_minor_w".into(),
            "angle_deg".into(),
            "flattening_f".into(),
        ],
    );
    stamp(&mut summary, cfg);
    stamp_teleport(&mut summary, tc);

    let mut grids = Vec::new();
    for (is_markov, conf) in [(0.0, tc), (1.0, &tc_m)] {
        let run = teleport::run_teleportation(conf)?;
        for snap in &run.wigner {
            summary.push_row(vec![
                snap.time,
                is_markov,
                snap.x_minus,
                snap.p_plus,
                snap.w_origin,
                snap.diagnostics.amplitude,
                snap.diagnostics.semi_major,
                snap.diagnostics.semi_minor,
                snap.diagnostics.angle_deg,
                snap.diagnostics.flattening,
            ]);
            let suffix = if is_markov > 0.5 { "markov" } else { "nonmarkov" };
            let mut grid_table = ResultTable::new(
                format!("wigner_{suffix}_t{:.2}", snap.time),
                vec!["x".into(), "p".into(), "w".into()],
            );
            stamp(&mut grid_table, cfg);
            grid_table.add_provenance("time", format!("{}", snap.time));
            grid_table.add_provenance(
                "outcome",
                format!("x_minus={} p_plus={}", snap.x_minus, snap.p_plus),
            );
            for (i, &x) in snap.xs.iter().enumerate() {
                for (j, &p) in snap.ps.iter().enumerate() {
                    grid_table.push_row(vec![x, p, snap.values[[i, j]]]);
                }
            }
            grids.push(grid_table);
        }
    }
    sink(&summary)?;
    for g in &grids {
        sink(g)?;
    }
    Ok(())
}

fn compare_inputs_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let settings = &cfg.compare;
    let alpha = fock::C64::new(settings.alpha, 0.0);
    let inputs: Vec<(InputState, f64)> = vec![
        (InputState::coherent(alpha), settings.r_gaussian),
        (
            InputState::squeezed(alpha, settings.r_s, 0.0),
            settings.r_gaussian,
        ),
        (InputState::cat(alpha, 0.0), settings.r_cat),
        (
            InputState::cat(alpha, std::f64::consts::PI),
            settings.r_cat,
        ),
    ];

    let markov = cfg.channel.markovian_counterpart()?;
    let mut columns = vec!["time".to_string()];
    let mut runs = Vec::new();
    for (input, r) in &inputs {
        for (tag, channel) in [("nm", &cfg.channel), ("m", &markov)] {
            let mut tc = cfg.teleport.clone();
            tc.input = input.clone();
            tc.r = *r;
            tc.channel = channel.clone();
            tc.grid = crate::teleport::QuadratureGrid {
                half_width: cfg.teleport.grid.half_width,
                points_per_axis: cfg.teleport.grid.points_per_axis,
                rule: Default::default(),
            };
            tc.wigner = None;
            let run = teleport::run_teleportation(&tc)?;
            columns.push(format!("fbar_{}_{}", input.label(), tag));
            columns.push(format!("fbar_rel_{}_{}", input.label(), tag));
            runs.push(run);
        }
    }

    let mut table = ResultTable::new("compare_inputs", columns);
    stamp(&mut table, cfg);
    table.add_provenance(
        "inputs",
        format!(
            "coherent, squeezed(r_s={}), even_cat, odd_cat at |alpha|={}; r_gaussian={} r_cat={}",
            settings.r_s, settings.alpha, settings.r_gaussian, settings.r_cat
        ),
    );
    let times = cfg.teleport.times.times();
    for (k, t) in times.iter().enumerate() {
        let mut row = vec![*t];
        for run in &runs {
            row.push(run.fbar.values()[k]);
            row.push(run.fbar_rel.values()[k]);
        }
        table.push_row(row);
    }
    sink(&table)
}

fn psd_study(
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&ResultTable) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let values = cfg.channel.psd(&cfg.psd.omegas)?;
    let has_scale = cfg.unit_scale.is_some();
    let mut columns = vec!["omega".to_string(), "s".to_string()];
    if has_scale {
        columns.insert(1, "omega_physical".into());
    }
    let mut table = ResultTable::new("psd", columns);
    stamp(&mut table, cfg);
    for (w, s) in cfg.psd.omegas.iter().zip(values) {
        if let Some(scale) = cfg.unit_scale {
            table.push_row(vec![*w, w * scale, s]);
        } else {
            table.push_row(vec![*w, s]);
        }
    }
    sink(&table)
}
