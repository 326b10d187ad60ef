//! Entanglement and non-Markovianity quantifiers: logarithmic negativity,
//! trace distance, and the cumulative BLP measure over channel dynamics.

use crate::channels::ChannelSpec;
use crate::fock::{self, cr, DensityMatrix, C64};
use crate::master::{self, TimeGrid};
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid split: logarithmic negativity needs at least two subsystems")]
    InvalidSplit,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(
        "time grid too coarse at step {step}: |ΔD| = {delta:.3} exceeds 0.1; refine n_steps"
    )]
    GridTooCoarse { step: usize, delta: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Fock(#[from] fock::FockError),
    #[error(transparent)]
    Master(#[from] master::MasterError),
    #[error(transparent)]
    Channel(#[from] crate::channels::ChannelError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Time-indexed record of one scalar metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    label: String,
}

impl MetricSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(MetricsError::ShapeMismatch(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MetricsError::InvalidParameter(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            values,
            label: label.into(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("non-empty series")
    }

    /// Indices `k > 0` where the value strictly increased by more than `tol`.
    pub fn rebound_indices(&self, tol: f64) -> Vec<usize> {
        self.values
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] > tol)
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Logarithmic negativity `E_N = log2 ‖ρ^{PT}‖₁` across the split given by
/// the subsystem index that gets transposed.
pub fn log_negativity(rho: &DensityMatrix, split: usize) -> Result<f64> {
    if rho.dims().len() < 2 {
        return Err(MetricsError::InvalidSplit);
    }
    let pt = fock::ptranspose(rho.op(), split)?;
    Ok(fock::trace_norm(&pt).log2())
}

/// Trace distance `tr|ρ₁ - ρ₂| / 2`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dims() != rho2.dims() {
        return Err(MetricsError::ShapeMismatch(format!(
            "dims {:?} vs {:?}",
            rho1.dims(),
            rho2.dims()
        )));
    }
    let diff = rho1.op().sub(rho2.op());
    Ok(fock::trace_norm(&diff) / 2.0)
}

/// A candidate initial-state pair for the BLP maximization.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub left: DensityMatrix,
    pub right: DensityMatrix,
    pub label: String,
}

/// Default candidate set: the Fock pair |0><0| vs |1><1| and opposite
/// coherent pairs at α = 0.5 and α = 1.
pub fn default_candidate_pairs(dim: usize) -> Result<Vec<StatePair>> {
    let mut pairs = vec![StatePair {
        left: fock::fock_state(dim, 0)?.to_density(),
        right: fock::fock_state(dim, 1)?.to_density(),
        label: "fock01".into(),
    }];
    for alpha in [0.5, 1.0] {
        pairs.push(StatePair {
            left: fock::coherent(dim, cr(alpha))?.to_density(),
            right: fock::coherent(dim, cr(-alpha))?.to_density(),
            label: format!("coherent_pm{alpha}"),
        });
    }
    Ok(pairs)
}

/// Evolves a pair of mode-B states through the channel and accumulates the
/// trace-distance series `D(t)` and the discrete BLP series
/// `N(t_n) = Σ_{k<=n} max(D(t_k) - D(t_{k-1}), 0)`.
pub fn blp_series(
    spec: &ChannelSpec,
    pair: &StatePair,
    grid: &TimeGrid,
) -> Result<(MetricSeries, MetricSeries)> {
    let evolved = master::evolve_through_channel(spec, &[&pair.left, &pair.right], grid)?;
    let d_values: Vec<f64> = evolved[0]
        .iter()
        .zip(evolved[1].iter())
        .map(|(a, b)| trace_distance(a, b))
        .collect::<Result<_>>()?;
    series_from_distances(grid, d_values, &pair.label)
}

fn series_from_distances(
    grid: &TimeGrid,
    d_values: Vec<f64>,
    label: &str,
) -> Result<(MetricSeries, MetricSeries)> {
    for (k, w) in d_values.windows(2).enumerate() {
        let delta = (w[1] - w[0]).abs();
        if delta > 0.1 {
            return Err(MetricsError::GridTooCoarse {
                step: k + 1,
                delta,
            });
        }
    }
    let mut n_values = Vec::with_capacity(d_values.len());
    let mut acc = 0.0;
    n_values.push(0.0);
    for w in d_values.windows(2) {
        acc += (w[1] - w[0]).max(0.0);
        n_values.push(acc);
    }
    let times = grid.times();
    Ok((
        MetricSeries::new(times.clone(), d_values, format!("D[{label}]"))?,
        MetricSeries::new(times, n_values, format!("N[{label}]"))?,
    ))
}

/// Result of the BLP maximization over a finite candidate set.
#[derive(Debug, Clone)]
pub struct BlpMax {
    pub value: f64,
    pub best_pair: String,
    pub per_pair: Vec<(String, f64)>,
}

/// Maximum accumulated backflow `N(t_end)` over the candidate pairs. All
/// pairs ride one exponentiated step matrix; evaluation order is fixed so
/// results do not depend on parallelism.
pub fn blp_max(spec: &ChannelSpec, candidates: &[StatePair], grid: &TimeGrid) -> Result<BlpMax> {
    if candidates.is_empty() {
        return Err(MetricsError::InvalidParameter(
            "BLP maximization needs at least one candidate pair".into(),
        ));
    }
    let states: Vec<&DensityMatrix> = candidates
        .iter()
        .flat_map(|p| [&p.left, &p.right])
        .collect();
    let evolved = master::evolve_through_channel(spec, &states, grid)?;
    let mut per_pair = Vec::with_capacity(candidates.len());
    for (idx, pair) in candidates.iter().enumerate() {
        let d_values: Vec<f64> = evolved[2 * idx]
            .iter()
            .zip(evolved[2 * idx + 1].iter())
            .map(|(a, b)| trace_distance(a, b))
            .collect::<Result<_>>()?;
        let (_, n_series) = series_from_distances(grid, d_values, &pair.label)?;
        per_pair.push((pair.label.clone(), n_series.last_value()));
    }
    let (best_pair, value) = per_pair
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite BLP values"))
        .expect("non-empty candidate set");
    Ok(BlpMax {
        value,
        best_pair,
        per_pair,
    })
}

/// Choi-based complete-positivity check used by tests and validation runs.
pub fn choi_min_eigenvalue(e: &master::Superoperator) -> Result<f64> {
    Ok(e.choi().eigvalsh()?[0])
}

#[allow(dead_code)]
fn frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{lorentzian_channel, markovian_reference};
    use crate::fock::{coherent, fock_state, tensor_ops, tmsv, Operator, StateVector};
    use approx::assert_relative_eq;
    use ndarray::Array1;

    #[test]
    fn log_negativity_product_state_vanishes() {
        let a = coherent(5, cr(0.7)).unwrap().to_density();
        let b = fock_state(5, 1).unwrap().to_density();
        let joint =
            DensityMatrix::new(tensor_ops(&[a.op(), b.op()]).unwrap()).unwrap();
        let en = log_negativity(&joint, 1).unwrap();
        assert!(en.abs() < 1e-8, "E_N of product state: {en}");
    }

    #[test]
    fn log_negativity_tmsv_closed_form() {
        let r = 0.346;
        let rho = tmsv(10, 10, r).unwrap().to_density();
        let en = log_negativity(&rho, 1).unwrap();
        assert_relative_eq!(en, 2.0 * r / std::f64::consts::LN_2, epsilon = 5e-3);
    }

    #[test]
    fn log_negativity_bell_state() {
        let mut amp = Array1::zeros(4);
        amp[0] = cr(1.0 / 2f64.sqrt());
        amp[3] = cr(1.0 / 2f64.sqrt());
        let bell = StateVector::new(amp, vec![2, 2]).unwrap().to_density();
        assert_relative_eq!(log_negativity(&bell, 1).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn log_negativity_rejects_single_subsystem() {
        let rho = fock_state(4, 0).unwrap().to_density();
        assert!(matches!(
            log_negativity(&rho, 0),
            Err(MetricsError::InvalidSplit)
        ));
    }

    #[test]
    fn trace_distance_identical_states() {
        let rho = coherent(6, cr(0.5)).unwrap().to_density();
        assert!(trace_distance(&rho, &rho).unwrap() < 1e-14);
    }

    #[test]
    fn trace_distance_orthogonal_pure_states() {
        let r0 = fock_state(4, 0).unwrap().to_density();
        let r1 = fock_state(4, 1).unwrap().to_density();
        assert_relative_eq!(trace_distance(&r0, &r1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_distance_pure_state_overlap_formula() {
        let dim = 20;
        let vac = fock_state(dim, 0).unwrap();
        let coh = coherent(dim, cr(1.0)).unwrap();
        let overlap_sq = vac.inner(&coh).norm_sqr();
        let expected = (1.0 - overlap_sq).sqrt();
        let d = trace_distance(&vac.to_density(), &coh.to_density()).unwrap();
        assert_relative_eq!(d, expected, epsilon = 1e-6);
    }

    #[test]
    fn trace_distance_shape_mismatch() {
        let a = fock_state(4, 0).unwrap().to_density();
        let b = fock_state(5, 0).unwrap().to_density();
        assert!(matches!(
            trace_distance(&a, &b),
            Err(MetricsError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn metric_series_validation() {
        assert!(MetricSeries::new(vec![0.0, 1.0], vec![1.0], "x").is_err());
        assert!(MetricSeries::new(vec![0.0, 0.0], vec![1.0, 2.0], "x").is_err());
        assert!(MetricSeries::new(vec![0.0, 1.0], vec![1.0, 2.0], "x").is_ok());
    }

    #[test]
    fn blp_markovian_reference_vanishes() {
        let spec = markovian_reference(&[4.0], 5).unwrap();
        let grid = TimeGrid::new(0.0, 5.0, 200).unwrap();
        let pairs = default_candidate_pairs(5).unwrap();
        for pair in &pairs {
            let (_, n) = blp_series(&spec, pair, &grid).unwrap();
            assert!(
                n.last_value() <= 1e-6,
                "pair {}: N = {}",
                pair.label,
                n.last_value()
            );
        }
    }

    #[test]
    fn blp_lorentzian_backflow_positive() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 5, 4).unwrap();
        let grid = TimeGrid::new(0.0, 10.0, 400).unwrap();
        let pair = StatePair {
            left: fock_state(5, 0).unwrap().to_density(),
            right: fock_state(5, 1).unwrap().to_density(),
            label: "fock01".into(),
        };
        let (d, n) = blp_series(&spec, &pair, &grid).unwrap();
        assert!(n.last_value() > 1e-3, "no backflow: {}", n.last_value());
        // N is non-decreasing and rises exactly where D rebounds
        let mut prev = 0.0;
        for (k, &nv) in n.values().iter().enumerate() {
            assert!(nv >= prev - 1e-15);
            if k > 0 {
                let dn = nv - prev;
                let dd = d.values()[k] - d.values()[k - 1];
                if dd > 0.0 {
                    assert_relative_eq!(dn, dd, epsilon = 1e-12);
                } else {
                    assert!(dn.abs() < 1e-15);
                }
            }
            prev = nv;
        }
    }

    #[test]
    fn blp_grid_refinement_stability() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 5, 4).unwrap();
        let pair = StatePair {
            left: fock_state(5, 0).unwrap().to_density(),
            right: fock_state(5, 1).unwrap().to_density(),
            label: "fock01".into(),
        };
        let coarse = blp_series(&spec, &pair, &TimeGrid::new(0.0, 10.0, 500).unwrap())
            .unwrap()
            .1;
        let fine = blp_series(&spec, &pair, &TimeGrid::new(0.0, 10.0, 1000).unwrap())
            .unwrap()
            .1;
        assert!(
            (coarse.last_value() - fine.last_value()).abs() <= 2e-3,
            "coarse {} vs fine {}",
            coarse.last_value(),
            fine.last_value()
        );
    }

    #[test]
    fn blp_max_monotone_in_set_inclusion() {
        let spec = lorentzian_channel(0.8, 1.0, 1.0, 5, 4).unwrap();
        let grid = TimeGrid::new(0.0, 5.0, 200).unwrap();
        let pairs = default_candidate_pairs(5).unwrap();
        let small = blp_max(&spec, &pairs[..1], &grid).unwrap();
        let full = blp_max(&spec, &pairs, &grid).unwrap();
        assert!(full.value >= small.value - 1e-15);
        assert_eq!(full.per_pair.len(), 3);
    }

    #[test]
    fn blp_coarse_grid_rejected() {
        // one huge step forces |ΔD| > 0.1 between snapshots
        let spec = markovian_reference(&[4.0], 4).unwrap();
        let grid = TimeGrid::new(0.0, 10.0, 2).unwrap();
        let pair = StatePair {
            left: fock_state(4, 0).unwrap().to_density(),
            right: fock_state(4, 1).unwrap().to_density(),
            label: "fock01".into(),
        };
        assert!(matches!(
            blp_series(&spec, &pair, &grid),
            Err(MetricsError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn rebound_indices_detects_increments() {
        let s = MetricSeries::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![1.0, 0.5, 0.7, 0.6],
            "test",
        )
        .unwrap();
        assert_eq!(s.rebound_indices(1e-4), vec![2]);
    }

    #[allow(unused)]
    fn operator_sanity(op: &Operator) -> f64 {
        op.frobenius_norm()
    }
}
