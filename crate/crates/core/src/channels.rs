//! Augmented-system models of quantum channels disturbed by Lorentzian and
//! two-Lorentzian noise, their Markovian references, and noise power
//! spectral densities.
//!
//! Units: the principal angular frequency fixes the time unit (`omega_b = 1`);
//! damping rates, coupling strengths and ancilla frequencies are expressed in
//! units of `omega_b`. Physical (e.g. GHz) parameter sets are rescaled by the
//! config layer before they reach a [`ChannelSpec`].

use crate::fock::{self, cr, Operator, C64};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation unsupported for this channel: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Fock(#[from] fock::FockError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// One fictitious oscillator realizing a Lorentzian line of the noise
/// spectrum: frequency, damping rate, direct coupling to the mode, and its
/// Fock truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncillaSpec {
    pub omega: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub dim: usize,
}

impl AncillaSpec {
    fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 {
            return Err(ChannelError::InvalidParameter(format!(
                "ancilla gamma = {} must be positive",
                self.gamma
            )));
        }
        if self.kappa < 0.0 {
            return Err(ChannelError::InvalidParameter(format!(
                "ancilla kappa = {} must be non-negative",
                self.kappa
            )));
        }
        if self.dim < 2 {
            return Err(ChannelError::InvalidParameter(format!(
                "ancilla dim = {} must be at least 2",
                self.dim
            )));
        }
        Ok(())
    }
}

/// Parameters and truncations of one principal mode plus its ancilla
/// oscillators. A Markovian reference carries no ancillas; its white-noise
/// damping rates live in `reference_kappas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub mode_dim: usize,
    pub omega_b: f64,
    pub ancillas: Vec<AncillaSpec>,
    pub markovian_reference: bool,
    #[serde(default)]
    pub reference_kappas: Vec<f64>,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mode_dim < 2 {
            return Err(ChannelError::InvalidParameter(format!(
                "mode_dim = {} must be at least 2",
                self.mode_dim
            )));
        }
        if self.markovian_reference {
            if !self.ancillas.is_empty() {
                return Err(ChannelError::InvalidParameter(
                    "a Markovian reference carries no ancillas".into(),
                ));
            }
            if self.reference_kappas.is_empty() {
                return Err(ChannelError::InvalidParameter(
                    "a Markovian reference needs at least one kappa".into(),
                ));
            }
            if self.reference_kappas.iter().any(|&k| k < 0.0) {
                return Err(ChannelError::InvalidParameter(
                    "Markovian kappas must be non-negative".into(),
                ));
            }
        } else {
            if self.ancillas.is_empty() {
                return Err(ChannelError::InvalidParameter(
                    "a non-Markovian channel needs at least one ancilla".into(),
                ));
            }
            for a in &self.ancillas {
                a.validate()?;
            }
        }
        Ok(())
    }

    /// Subsystem dimensions of the joint space, mode B first.
    pub fn joint_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.mode_dim];
        dims.extend(self.ancillas.iter().map(|a| a.dim));
        dims
    }

    /// The Markovian channel this spec reduces to in the white-noise limit:
    /// one collapse `sqrt(kappa_k) a_B` per ancilla, no ancillas kept.
    pub fn markovian_counterpart(&self) -> Result<ChannelSpec> {
        if self.markovian_reference {
            return Ok(self.clone());
        }
        markovian_reference(
            &self.ancillas.iter().map(|a| a.kappa).collect::<Vec<_>>(),
            self.mode_dim,
        )
    }

    /// Joint Hamiltonian on the full tensor space `[B, A1, ...]`. Mode B is
    /// described in its co-rotating frame (`H_B` is identity-proportional,
    /// carrying only a global phase), so each ancilla enters at its detuning:
    /// `(omega_k - omega_b) a_k†a_k + i(c_k†z_k - z_k†c_k)` with
    /// `c_k = -(sqrt(gamma_k)/2) a_k` and `z_k = sqrt(kappa_k) a_B`. At
    /// resonance the number term vanishes and only the exchange coupling
    /// remains, which is what makes the resonant case maximally effective.
    pub fn joint_hamiltonian(&self) -> Result<Operator> {
        let dims = self.joint_dims();
        let mut h = Operator::zeros(dims.clone());
        if self.markovian_reference {
            return Ok(h);
        }
        for (k, anc) in self.ancillas.iter().enumerate() {
            let n_k = lift(&fock::number(anc.dim)?, &dims, k + 1)?;
            h = h.add(&n_k.scale(cr(anc.omega - self.omega_b)));
            // i(c†z - z†c) = -i (sqrt(gamma kappa)/2) (a_k† a_B - a_B† a_k)
            let g = (anc.gamma * anc.kappa).sqrt() / 2.0;
            if g > 0.0 {
                let a_b = lift(&fock::destroy(self.mode_dim)?, &dims, 0)?;
                let a_k = lift(&fock::destroy(anc.dim)?, &dims, k + 1)?;
                let term = a_k.dagger().matmul(&a_b);
                let coupling = term.sub(&term.dagger()).scale(C64::new(0.0, -g));
                h = h.add(&coupling);
            }
        }
        Ok(h)
    }

    /// Collapse operators on the joint space: `sqrt(gamma_k) a_k` for each
    /// ancilla, or `sqrt(kappa_j) a_B` for a Markovian reference.
    pub fn joint_collapse(&self) -> Result<Vec<Operator>> {
        let dims = self.joint_dims();
        if self.markovian_reference {
            return self
                .reference_kappas
                .iter()
                .map(|&k| Ok(fock::destroy(self.mode_dim)?.scale(cr(k.sqrt()))))
                .collect();
        }
        self.ancillas
            .iter()
            .enumerate()
            .map(|(k, anc)| {
                let a_k = lift(&fock::destroy(anc.dim)?, &dims, k + 1)?;
                Ok(a_k.scale(cr(anc.gamma.sqrt())))
            })
            .collect()
    }

    /// Power spectral density of the channel noise, a sum of Lorentzians
    /// over the spec's ancillas.
    pub fn psd(&self, omegas: &[f64]) -> Result<Vec<f64>> {
        if self.markovian_reference {
            return Err(ChannelError::Unsupported(
                "a Markovian reference has a flat spectrum, not a Lorentzian sum".into(),
            ));
        }
        Ok(omegas
            .iter()
            .map(|&w| {
                self.ancillas
                    .iter()
                    .map(|a| {
                        let half_sq = a.gamma * a.gamma / 4.0;
                        half_sq / (half_sq + (w - a.omega).powi(2))
                    })
                    .sum()
            })
            .collect())
    }
}

/// Lifts a single-subsystem operator into the joint space at `slot`.
fn lift(op: &Operator, dims: &[usize], slot: usize) -> Result<Operator> {
    let parts: Vec<Operator> = dims
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if i == slot {
                op.clone()
            } else {
                Operator::identity(vec![d])
            }
        })
        .collect();
    let refs: Vec<&Operator> = parts.iter().collect();
    Ok(fock::tensor_ops(&refs)?)
}

/// Channel disturbed by a single Lorentzian line: one damped oscillator
/// ancilla at resonance with the mode.
pub fn lorentzian_channel(
    gamma0: f64,
    kappa0: f64,
    omega0: f64,
    mode_dim: usize,
    anc_dim: usize,
) -> Result<ChannelSpec> {
    let omega_b = 1.0;
    if (omega0 - omega_b).abs() > 1e-12 {
        return Err(ChannelError::InvalidParameter(format!(
            "resonant case required: omega0 = {omega0} must equal omega_b = {omega_b}"
        )));
    }
    let spec = ChannelSpec {
        mode_dim,
        omega_b,
        ancillas: vec![AncillaSpec {
            omega: omega0,
            gamma: gamma0,
            kappa: kappa0,
            dim: anc_dim,
        }],
        markovian_reference: false,
        reference_kappas: vec![],
    };
    spec.validate()?;
    Ok(spec)
}

/// Channel disturbed by two-Lorentzian noise: two damped oscillator
/// ancillas, each coupled directly to the mode.
pub fn two_lorentzian_channel(
    omegas: [f64; 2],
    gammas: [f64; 2],
    kappas: [f64; 2],
    mode_dim: usize,
    anc_dims: [usize; 2],
) -> Result<ChannelSpec> {
    let spec = ChannelSpec {
        mode_dim,
        omega_b: 1.0,
        ancillas: (0..2)
            .map(|k| AncillaSpec {
                omega: omegas[k],
                gamma: gammas[k],
                kappa: kappas[k],
                dim: anc_dims[k],
            })
            .collect(),
        markovian_reference: false,
        reference_kappas: vec![],
    };
    spec.validate()?;
    Ok(spec)
}

/// White-noise (Markovian) channel: collapse `sqrt(kappa_k) a_B` directly on
/// the mode, no ancillas.
pub fn markovian_reference(kappas: &[f64], mode_dim: usize) -> Result<ChannelSpec> {
    let spec = ChannelSpec {
        mode_dim,
        omega_b: 1.0,
        ancillas: vec![],
        markovian_reference: true,
        reference_kappas: kappas.to_vec(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Basis of the joint space restricted to total excitation at most
/// `max_total`. The couplings `i(c†z - z†c)` conserve total excitation and
/// every collapse operator only lowers it, so dynamics started inside the
/// sector is exactly reproduced there; the restriction only removes joint
/// basis states the evolution can never populate.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    dims: Vec<usize>,
    states: Vec<Vec<usize>>,
    lookup: Vec<Option<usize>>,
    /// sector indices grouped by ancilla occupation tuple, as (index, n_b)
    anc_groups: Vec<Vec<(usize, usize)>>,
}

impl SectorBasis {
    pub fn new(dims: &[usize], max_total: usize) -> Self {
        let full: usize = dims.iter().product();
        let mut states = Vec::new();
        let mut lookup = vec![None; full];
        for flat in 0..full {
            let tuple = unflatten(flat, dims);
            if tuple.iter().sum::<usize>() <= max_total {
                lookup[flat] = Some(states.len());
                states.push(tuple);
            }
        }
        let mut groups: std::collections::BTreeMap<Vec<usize>, Vec<(usize, usize)>> =
            std::collections::BTreeMap::new();
        for (idx, st) in states.iter().enumerate() {
            groups
                .entry(st[1..].to_vec())
                .or_default()
                .push((idx, st[0]));
        }
        SectorBasis {
            dims: dims.to_vec(),
            states,
            lookup,
            anc_groups: groups.into_values().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Sector index of the joint state `(n_b, 0, 0, ...)`.
    pub fn ground_ancilla_index(&self, n_b: usize) -> usize {
        let mut tuple = vec![0usize; self.dims.len()];
        tuple[0] = n_b;
        let flat = flatten(&tuple, &self.dims);
        self.lookup[flat].expect("mode-only excitation is always inside the sector")
    }

    /// Restriction of a full joint-space operator to the sector rows/columns.
    pub fn project(&self, full: &Array2<C64>) -> Array2<C64> {
        let s = self.len();
        let mut out = Array2::zeros((s, s));
        for (i, si) in self.states.iter().enumerate() {
            let fi = flatten(si, &self.dims);
            for (j, sj) in self.states.iter().enumerate() {
                let fj = flatten(sj, &self.dims);
                out[[i, j]] = full[[fi, fj]];
            }
        }
        out
    }

    /// Partial trace over all ancillas of a sector-represented joint matrix.
    pub fn trace_out_ancillas(&self, sector_mat: &Array2<C64>) -> Array2<C64> {
        let n_b = self.dims[0];
        let mut out = Array2::zeros((n_b, n_b));
        for group in &self.anc_groups {
            for &(i, bi) in group {
                for &(j, bj) in group {
                    out[[bi, bj]] += sector_mat[[i, j]];
                }
            }
        }
        out
    }

    /// Embeds a sector-represented joint matrix back into the full space.
    pub fn embed(&self, sector_mat: &Array2<C64>) -> Array2<C64> {
        let full: usize = self.dims.iter().product();
        let mut out = Array2::zeros((full, full));
        for (i, si) in self.states.iter().enumerate() {
            let fi = flatten(si, &self.dims);
            for (j, sj) in self.states.iter().enumerate() {
                let fj = flatten(sj, &self.dims);
                out[[fi, fj]] = sector_mat[[i, j]];
            }
        }
        out
    }
}

fn unflatten(flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut rem = flat;
    let mut tuple = vec![0usize; dims.len()];
    for k in (0..dims.len()).rev() {
        tuple[k] = rem % dims[k];
        rem /= dims[k];
    }
    tuple
}

fn flatten(tuple: &[usize], dims: &[usize]) -> usize {
    let mut flat = 0;
    for (n, d) in tuple.iter().zip(dims.iter()) {
        flat = flat * d + n;
    }
    flat
}

/// Generator ingredients restricted to the reachable excitation sector for
/// dynamics started from `X ⊗ |0...0><0...0|` with `X` on the mode.
pub struct SectorOps {
    pub basis: SectorBasis,
    pub h: Array2<C64>,
    pub collapse: Vec<Array2<C64>>,
}

impl ChannelSpec {
    /// Sector-restricted generator ingredients. Mode-only states carry at
    /// most `mode_dim - 1` quanta, which bounds the total excitation for all
    /// reachable joint states.
    pub fn sector_ops(&self) -> Result<SectorOps> {
        let dims = self.joint_dims();
        let basis = SectorBasis::new(&dims, self.mode_dim - 1);
        let h = basis.project(self.joint_hamiltonian()?.data());
        let collapse = self
            .joint_collapse()?
            .iter()
            .map(|c| basis.project(c.data()))
            .collect();
        Ok(SectorOps { basis, h, collapse })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lorentzian_paper_reference_parameters() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 8, 5).unwrap();
        assert_eq!(spec.ancillas.len(), 1);
        assert_relative_eq!(spec.ancillas[0].gamma, 0.8);
        assert_relative_eq!(spec.ancillas[0].kappa, 4.0);
        assert!(!spec.markovian_reference);
    }

    #[test]
    fn lorentzian_rejects_negative_rates() {
        assert!(lorentzian_channel(-0.1, 4.0, 1.0, 6, 4).is_err());
        assert!(lorentzian_channel(0.8, -1.0, 1.0, 6, 4).is_err());
    }

    #[test]
    fn lorentzian_rejects_detuning() {
        assert!(lorentzian_channel(0.8, 4.0, 1.3, 6, 4).is_err());
    }

    #[test]
    fn joint_hamiltonian_is_hermitian() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 6, 4).unwrap();
        let h = spec.joint_hamiltonian().unwrap();
        assert!(h.hermiticity_defect() < 1e-12);

        let two = two_lorentzian_channel([0.8, 1.2], [0.06, 0.06], [0.2, 0.5], 6, [4, 4]).unwrap();
        let h2 = two.joint_hamiltonian().unwrap();
        assert!(h2.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn coupling_matches_written_form() {
        // resonant case: the number term vanishes and the generator carries
        // only H_BA = -i (sqrt(gamma kappa)/2) (a0† aB - aB† a0)
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 3, 3).unwrap();
        let h = spec.joint_hamiltonian().unwrap();
        let dims = spec.joint_dims();
        let a_b = lift(&fock::destroy(3).unwrap(), &dims, 0).unwrap();
        let a_0 = lift(&fock::destroy(3).unwrap(), &dims, 1).unwrap();
        let g = (0.8f64 * 4.0).sqrt() / 2.0;
        let cross = a_0.dagger().matmul(&a_b);
        let expected = cross.sub(&cross.dagger()).scale(C64::new(0.0, -g));
        assert!(h.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn detuned_ancillas_carry_number_terms() {
        let spec =
            two_lorentzian_channel([0.8, 1.2], [0.06, 0.06], [0.2, 0.5], 3, [3, 3]).unwrap();
        let h = spec.joint_hamiltonian().unwrap();
        let dims = spec.joint_dims();
        // diagonal entry of |0, 1, 0>: detuning of ancilla 1 is -0.2
        let idx = 1 * 3; // tuple (0, 1, 0) flattened over [3, 3, 3]
        assert!((h.data()[[idx, idx]].re - (-0.2)).abs() < 1e-12);
        // |0, 0, 1>: detuning of ancilla 2 is +0.2
        assert!((h.data()[[1, 1]].re - 0.2).abs() < 1e-12);
    }

    #[test]
    fn markovian_reference_shape() {
        let spec = markovian_reference(&[4.0], 8).unwrap();
        assert!(spec.markovian_reference);
        assert!(spec.ancillas.is_empty());
        let collapse = spec.joint_collapse().unwrap();
        assert_eq!(collapse.len(), 1);
        assert_relative_eq!(collapse[0].data()[[0, 1]].re, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn markovian_counterpart_ignores_gamma() {
        let a = lorentzian_channel(0.8, 4.0, 1.0, 6, 4).unwrap();
        let b = lorentzian_channel(2.5, 4.0, 1.0, 6, 4).unwrap();
        assert_eq!(a.markovian_counterpart().unwrap(), b.markovian_counterpart().unwrap());
    }

    #[test]
    fn psd_single_lorentzian_peak_and_half_width() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 6, 4).unwrap();
        let vals = spec.psd(&[1.0, 1.4, 0.6]).unwrap();
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(vals[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn psd_two_lorentzian_paper_instance_peaks() {
        // GHz parameters rescaled by omega_b = 10 GHz
        let spec =
            two_lorentzian_channel([0.8, 1.2], [0.06, 0.06], [0.2, 0.5], 6, [4, 4]).unwrap();
        let vals = spec.psd(&[0.8, 1.2]).unwrap();
        for v in &vals {
            assert!(*v > 1.0 && *v < 1.12, "peak with cross-term: {v}");
        }
    }

    #[test]
    fn psd_unsupported_for_markovian() {
        let spec = markovian_reference(&[4.0], 6).unwrap();
        assert!(matches!(
            spec.psd(&[1.0]),
            Err(ChannelError::Unsupported(_))
        ));
    }

    #[test]
    fn sector_basis_counts_and_roundtrip() {
        let basis = SectorBasis::new(&[6, 4, 4], 5);
        assert_eq!(basis.len(), 48);
        // projection/embedding round-trips on a sector-supported matrix
        let spec =
            two_lorentzian_channel([0.8, 1.2], [0.06, 0.06], [0.2, 0.5], 6, [4, 4]).unwrap();
        let h = spec.joint_hamiltonian().unwrap();
        let proj = basis.project(h.data());
        let emb = basis.embed(&proj);
        let proj2 = basis.project(&emb);
        let diff = (&proj - &proj2).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn sector_trace_out_matches_full_ptrace() {
        let dims = [4usize, 3, 3];
        let basis = SectorBasis::new(&dims, 3);
        // build a sector-supported joint density matrix from a mode state
        let psi_b = fock::coherent(4, cr(0.9)).unwrap();
        let ground3 = fock::fock_state(3, 0).unwrap();
        let joint = fock::tensor_states(&[&psi_b, &ground3, &ground3])
            .unwrap()
            .to_density();
        let sector = basis.project(joint.data());
        let reduced_sector = basis.trace_out_ancillas(&sector);
        let reduced_full = fock::ptrace(&joint, &[0]).unwrap();
        let diff = (&reduced_sector - reduced_full.data())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }
}
