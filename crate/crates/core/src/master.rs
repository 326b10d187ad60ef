//! Liouvillian superoperators, density-matrix propagation by a precomputed
//! matrix-exponential step, and the reduced dynamical map of the principal
//! mode.
//!
//! Vectorization is column-stacking throughout: `vec(ρ)[j·N + i] = ρ[i, j]`,
//! under which `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use crate::channels::ChannelSpec;
use crate::fock::{self, cr, expm_array, DensityMatrix, Operator, C64};
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MasterError {
    #[error("hamiltonian is not Hermitian: defect {defect:.3e}")]
    NonHermitian { defect: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical instability at step {step}: trace drifted to {trace:.12}")]
    NumericalInstability { step: usize, trace: f64 },
    #[error(transparent)]
    Fock(#[from] fock::FockError),
    #[error(transparent)]
    Channel(#[from] crate::channels::ChannelError),
}

pub type Result<T> = std::result::Result<T, MasterError>;

/// Matrix representation of a linear map on operators, side `d²` for Hilbert
/// dimension `d`, under the fixed column-stacking vectorization.
#[derive(Debug, Clone)]
pub struct Superoperator {
    data: Array2<C64>,
    hilbert_dims: Vec<usize>,
}

impl Superoperator {
    pub fn new(data: Array2<C64>, hilbert_dims: Vec<usize>) -> Result<Self> {
        let d: usize = hilbert_dims.iter().product();
        if data.nrows() != d * d || data.ncols() != d * d {
            return Err(MasterError::ShapeMismatch(format!(
                "superoperator is {}x{} but hilbert dims {:?} require side {}",
                data.nrows(),
                data.ncols(),
                hilbert_dims,
                d * d
            )));
        }
        Ok(Self { data, hilbert_dims })
    }

    pub fn identity(hilbert_dims: Vec<usize>) -> Self {
        let d: usize = hilbert_dims.iter().product();
        Self {
            data: Array2::from_diag_elem(d * d, cr(1.0)),
            hilbert_dims,
        }
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn hilbert_dims(&self) -> &[usize] {
        &self.hilbert_dims
    }

    pub fn hilbert_side(&self) -> usize {
        self.hilbert_dims.iter().product()
    }

    /// Applies the map to an operator on the matching Hilbert space.
    pub fn apply_op(&self, x: &Operator) -> Result<Operator> {
        let d = self.hilbert_side();
        if x.side() != d {
            return Err(MasterError::ShapeMismatch(format!(
                "operator side {} vs superoperator Hilbert side {}",
                x.side(),
                d
            )));
        }
        let v = vectorize(x.data());
        let out = self.data.dot(&v);
        Operator::new(unvectorize(&out, d), x.dims().to_vec()).map_err(Into::into)
    }

    /// Applies the map to a density matrix, revalidating the result.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_op(rho.op())?;
        DensityMatrix::new(out).map_err(Into::into)
    }

    /// Extends the map by the identity on the first subsystem of `rho`
    /// (dims `[d_rest, d_mapped]`) and applies it:
    /// `out[(r b),(r' b')] = Σ_{c c'} E[(b b'),(c c')] ρ[(r c),(r' c')]`.
    pub fn apply_on_second(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let dims = rho.dims();
        if dims.len() != 2 {
            return Err(MasterError::ShapeMismatch(format!(
                "expected a bipartite state, got dims {:?}",
                dims
            )));
        }
        let (d_r, d_b) = (dims[0], dims[1]);
        if self.hilbert_side() != d_b {
            return Err(MasterError::ShapeMismatch(format!(
                "map acts on dim {} but second subsystem has dim {}",
                self.hilbert_side(),
                d_b
            )));
        }
        let data = rho.data();
        let mut out = Array2::zeros((d_r * d_b, d_r * d_b));
        for r in 0..d_r {
            for rp in 0..d_r {
                // vec of the (r, r') block of ρ over the mapped subsystem
                let mut v = Array1::zeros(d_b * d_b);
                for c in 0..d_b {
                    for cp in 0..d_b {
                        v[cp * d_b + c] = data[[r * d_b + c, rp * d_b + cp]];
                    }
                }
                let w = self.data.dot(&v);
                for b in 0..d_b {
                    for bp in 0..d_b {
                        out[[r * d_b + b, rp * d_b + bp]] = w[bp * d_b + b];
                    }
                }
            }
        }
        DensityMatrix::new(Operator::new(out, dims.to_vec())?).map_err(Into::into)
    }

    /// Choi matrix of the map (column-reshuffle), for complete-positivity
    /// checks: `C[(i k),(j l)] = E[(i j),(k l)]` so that
    /// `C = Σ_{kl} E(|k><l|) ⊗ |k><l|`.
    pub fn choi(&self) -> Operator {
        let d = self.hilbert_side();
        let mut out = Array2::zeros((d * d, d * d));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        out[[i * d + k, j * d + l]] = self.data[[j * d + i, l * d + k]];
                    }
                }
            }
        }
        Operator::new(out, vec![d, d]).expect("square by construction")
    }
}

/// Discretization of an evolution interval into equal steps. `t_end == t0`
/// is allowed as the degenerate single-snapshot case.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end >= t0) {
            return Err(MasterError::InvalidParameter(format!(
                "t_end = {t_end} must not precede t0 = {t0}"
            )));
        }
        if n_steps < 1 {
            return Err(MasterError::InvalidParameter(
                "n_steps must be at least 1".into(),
            ));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.t_end == self.t0
    }

    pub fn times(&self) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![self.t0];
        }
        (0..=self.n_steps)
            .map(|k| self.t0 + self.dt() * k as f64)
            .collect()
    }

    /// Grid sized so that `‖Δt·L‖ <= 1` by a power-iteration estimate of the
    /// generator's spectral norm.
    pub fn auto(t0: f64, t_end: f64, l: &Superoperator) -> Result<Self> {
        let norm = spectral_norm_estimate(&l.data);
        let n = ((t_end - t0) * norm).ceil().max(1.0) as usize;
        Self::new(t0, t_end, n)
    }
}

pub(crate) fn vectorize(m: &Array2<C64>) -> Array1<C64> {
    let n = m.nrows();
    let mut v = Array1::zeros(n * n);
    for j in 0..n {
        for i in 0..n {
            v[j * n + i] = m[[i, j]];
        }
    }
    v
}

pub(crate) fn unvectorize(v: &Array1<C64>, n: usize) -> Array2<C64> {
    let mut m = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            m[[i, j]] = v[j * n + i];
        }
    }
    m
}

fn spectral_norm_estimate(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut v: Array1<C64> = Array1::from_shape_fn(n, |i| {
        C64::new(((i * 37 + 11) % 101) as f64 / 101.0 + 0.1, 0.0)
    });
    let mut norm = 0.0;
    let mh = m.t().mapv(|z| z.conj());
    for _ in 0..12 {
        let w = mh.dot(&m.dot(&v));
        let wn = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        norm = wn.sqrt();
        v = w.mapv(|z| z / cr(wn));
    }
    norm
}

/// Builds the Lindblad generator in matrix form: applied to `vec(ρ)` it
/// yields `vec(-i[H,ρ] + Σ_k (L_k ρ L_k† - ½{L_k†L_k, ρ}))`.
pub fn liouvillian(h: &Operator, collapse: &[Operator]) -> Result<Superoperator> {
    let defect = h.hermiticity_defect();
    if defect > 1e-10 {
        return Err(MasterError::NonHermitian { defect });
    }
    for (k, l) in collapse.iter().enumerate() {
        if l.side() != h.side() {
            return Err(MasterError::ShapeMismatch(format!(
                "collapse operator {k} has side {} but H has side {}",
                l.side(),
                h.side()
            )));
        }
    }
    let collapse_raw: Vec<&Array2<C64>> = collapse.iter().map(|l| l.data()).collect();
    let data = liouvillian_matrix(h.data(), &collapse_raw);
    Superoperator::new(data, h.dims().to_vec())
}

/// Raw matrix build shared by the public API and the sector-restricted path.
fn liouvillian_matrix(h: &Array2<C64>, collapse: &[&Array2<C64>]) -> Array2<C64> {
    let n = h.nrows();
    let eye: Array2<C64> = Array2::from_diag_elem(n, cr(1.0));
    let i_unit = C64::new(0.0, 1.0);
    // -i[H, ρ]  →  -i (I ⊗ H - Hᵀ ⊗ I)
    let mut l = ndarray::linalg::kron(&eye, h).mapv(|z| z * (-i_unit))
        + ndarray::linalg::kron(&h.t().to_owned(), &eye).mapv(|z| z * i_unit);
    for c in collapse {
        let c_conj = c.mapv(|z| z.conj());
        let cd_c = c.t().mapv(|z| z.conj()).dot(*c);
        // L ρ L† → conj(L) ⊗ L
        l = l + ndarray::linalg::kron(&c_conj, c);
        // -½ L†L ρ → -½ I ⊗ L†L ;  -½ ρ L†L → -½ (L†L)ᵀ ⊗ I
        l = l - ndarray::linalg::kron(&eye, &cd_c).mapv(|z| z * cr(0.5));
        l = l - ndarray::linalg::kron(&cd_c.t().to_owned(), &eye).mapv(|z| z * cr(0.5));
    }
    l
}

/// One evolution step: matrix exponential of `dt·L`.
pub fn propagator(l: &Superoperator, dt: f64) -> Result<Superoperator> {
    if dt <= 0.0 {
        return Err(MasterError::InvalidParameter(format!(
            "dt = {dt} must be positive"
        )));
    }
    let scaled = l.data.mapv(|z| z * cr(dt));
    Superoperator::new(expm_array(&scaled), l.hilbert_dims.clone())
}

/// Evolves `rho0` across the grid by repeated application of one precomputed
/// step matrix, revalidating every snapshot.
pub fn evolve(
    rho0: &DensityMatrix,
    l: &Superoperator,
    grid: &TimeGrid,
) -> Result<Vec<DensityMatrix>> {
    if rho0.side() != l.hilbert_side() {
        return Err(MasterError::ShapeMismatch(format!(
            "state side {} vs generator Hilbert side {}",
            rho0.side(),
            l.hilbert_side()
        )));
    }
    if grid.is_degenerate() {
        return Ok(vec![rho0.clone()]);
    }
    let step = propagator(l, grid.dt())?;
    let mut snapshots = Vec::with_capacity(grid.n_steps + 1);
    snapshots.push(rho0.clone());
    let mut v = vectorize(rho0.data());
    for k in 1..=grid.n_steps {
        v = step.data.dot(&v);
        let m = unvectorize(&v, rho0.side());
        let trace: C64 = m.diag().sum();
        if (trace.re - 1.0).abs() > 1e-6 || trace.im.abs() > 1e-6 {
            return Err(MasterError::NumericalInstability {
                step: k,
                trace: trace.re,
            });
        }
        let op = Operator::new(m, rho0.dims().to_vec())?;
        snapshots.push(DensityMatrix::new(op)?);
    }
    Ok(snapshots)
}

/// The dynamical map `E_t` of the principal mode: evolve each basis element
/// `|i><j|` of mode B jointly with the ancilla ground state under the
/// channel's generator, then trace out the ancillas. Returned as a
/// superoperator of side `mode_dim²`.
pub fn channel_map(spec: &ChannelSpec, t: f64) -> Result<Superoperator> {
    if t < 0.0 {
        return Err(MasterError::InvalidParameter(format!(
            "time {t} must be non-negative"
        )));
    }
    spec.validate()?;
    let n_b = spec.mode_dim;
    if t == 0.0 {
        return Ok(Superoperator::identity(vec![n_b]));
    }
    let ops = spec.sector_ops()?;
    let collapse_refs: Vec<&Array2<C64>> = ops.collapse.iter().collect();
    let l = liouvillian_matrix(&ops.h, &collapse_refs);
    let step = expm_array(&l.mapv(|z| z * cr(t)));
    let cols = initial_columns(&ops.basis, n_b);
    let evolved = step.dot(&cols);
    Ok(extract_map(&ops.basis, &evolved, n_b))
}

/// `E_t` at every grid time, sharing one exponentiated step matrix. The
/// first entry is the identity map at `t0 = grid.t0` only when `t0 = 0`;
/// in general entry `k` is the map for transit time `t0 + k·dt`.
pub fn channel_map_series(spec: &ChannelSpec, grid: &TimeGrid) -> Result<Vec<Superoperator>> {
    spec.validate()?;
    let n_b = spec.mode_dim;
    let ops = spec.sector_ops()?;
    let collapse_refs: Vec<&Array2<C64>> = ops.collapse.iter().collect();
    let l = liouvillian_matrix(&ops.h, &collapse_refs);

    let mut cols = initial_columns(&ops.basis, n_b);
    if grid.t0 > 0.0 {
        let warm = expm_array(&l.mapv(|z| z * cr(grid.t0)));
        cols = warm.dot(&cols);
    }
    let mut maps = Vec::with_capacity(grid.n_steps + 1);
    maps.push(extract_map(&ops.basis, &cols, n_b));
    if grid.is_degenerate() {
        return Ok(maps);
    }
    let step = expm_array(&l.mapv(|z| z * cr(grid.dt())));
    for _ in 1..=grid.n_steps {
        cols = step.dot(&cols);
        maps.push(extract_map(&ops.basis, &cols, n_b));
    }
    Ok(maps)
}

/// Evolves mode-B states jointly with the ancilla ground state and returns
/// the reduced mode-B snapshots at every grid time, one series per input
/// state. All states ride the same exponentiated step matrix as one batched
/// column block, so the work grows additively, not multiplicatively, with
/// the number of states.
pub fn evolve_through_channel(
    spec: &ChannelSpec,
    states: &[&DensityMatrix],
    grid: &TimeGrid,
) -> Result<Vec<Vec<DensityMatrix>>> {
    spec.validate()?;
    let n_b = spec.mode_dim;
    for (k, rho) in states.iter().enumerate() {
        if rho.side() != n_b {
            return Err(MasterError::ShapeMismatch(format!(
                "state {k} has side {} but the channel mode has dim {n_b}",
                rho.side()
            )));
        }
    }
    let ops = spec.sector_ops()?;
    let collapse_refs: Vec<&Array2<C64>> = ops.collapse.iter().collect();
    let l = liouvillian_matrix(&ops.h, &collapse_refs);
    let s = ops.basis.len();

    let mut cols = Array2::zeros((s * s, states.len()));
    for (c, rho) in states.iter().enumerate() {
        for i in 0..n_b {
            let ki = ops.basis.ground_ancilla_index(i);
            for j in 0..n_b {
                let kj = ops.basis.ground_ancilla_index(j);
                cols[[kj * s + ki, c]] = rho.data()[[i, j]];
            }
        }
    }
    if grid.t0 > 0.0 {
        let warm = expm_array(&l.mapv(|z| z * cr(grid.t0)));
        cols = warm.dot(&cols);
    }

    let reduce = |cols: &Array2<C64>, out: &mut Vec<Vec<DensityMatrix>>| -> Result<()> {
        for (c, series) in out.iter_mut().enumerate() {
            let v = cols.column(c).to_owned();
            let joint = unvectorize(&v, s);
            let reduced = ops.basis.trace_out_ancillas(&joint);
            series.push(DensityMatrix::new(Operator::new(
                reduced,
                vec![n_b],
            )?)?);
        }
        Ok(())
    };

    let mut out: Vec<Vec<DensityMatrix>> = vec![Vec::with_capacity(grid.n_steps + 1); states.len()];
    reduce(&cols, &mut out)?;
    if grid.is_degenerate() {
        return Ok(out);
    }
    let step = expm_array(&l.mapv(|z| z * cr(grid.dt())));
    for _ in 1..=grid.n_steps {
        cols = step.dot(&cols);
        reduce(&cols, &mut out)?;
    }
    Ok(out)
}

/// Vectorized initial joint states `|i><j|_B ⊗ |0><0|_A`, one column per
/// mode basis element `(i, j)`, in the sector representation.
fn initial_columns(basis: &crate::channels::SectorBasis, n_b: usize) -> Array2<C64> {
    let s = basis.len();
    let mut cols = Array2::zeros((s * s, n_b * n_b));
    for j in 0..n_b {
        for i in 0..n_b {
            let ki = basis.ground_ancilla_index(i);
            let kj = basis.ground_ancilla_index(j);
            cols[[kj * s + ki, j * n_b + i]] = cr(1.0);
        }
    }
    cols
}

/// Traces the ancillas out of each evolved column, assembling the map on B.
fn extract_map(
    basis: &crate::channels::SectorBasis,
    evolved: &Array2<C64>,
    n_b: usize,
) -> Superoperator {
    let s = basis.len();
    let mut e = Array2::zeros((n_b * n_b, n_b * n_b));
    for col in 0..n_b * n_b {
        let v = evolved.column(col).to_owned();
        let joint = unvectorize(&v, s);
        let reduced = basis.trace_out_ancillas(&joint);
        for bp in 0..n_b {
            for b in 0..n_b {
                e[[bp * n_b + b, col]] = reduced[[b, bp]];
            }
        }
    }
    Superoperator {
        data: e,
        hilbert_dims: vec![n_b],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{lorentzian_channel, markovian_reference};
    use crate::fock::{coherent, destroy, fock_state, number, tensor_ops, tmsv, Operator};
    use approx::assert_relative_eq;

    fn pseudo_random_hermitian(n: usize, seed: u64) -> Operator {
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        let mut next = || {
            state = state
                .wrapping_mul(2862933555777941757)
                .wrapping_add(3037000493);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = Array2::from_shape_fn((n, n), |_| C64::new(next(), next()));
        let md = m.t().mapv(|z| z.conj());
        Operator::new((&m + &md).mapv(|z| z * cr(0.5)), vec![n]).unwrap()
    }

    fn pseudo_random_density(n: usize, seed: u64) -> DensityMatrix {
        let g = pseudo_random_hermitian(n, seed);
        let sq = g.matmul(&g.dagger());
        let tr = sq.trace();
        DensityMatrix::new(sq.scale(cr(1.0) / tr)).unwrap()
    }

    #[test]
    fn vectorization_round_trip() {
        let m = pseudo_random_hermitian(5, 1).into_data();
        let v = vectorize(&m);
        let back = unvectorize(&v, 5);
        assert_eq!(m, back);
        // column-stacking: entry (i, j) sits at j*n + i
        assert_eq!(v[3 * 5 + 2], m[[2, 3]]);
    }

    #[test]
    fn vec_of_sandwich_is_kron_action() {
        let a = pseudo_random_hermitian(4, 2).into_data();
        let x = pseudo_random_hermitian(4, 3).into_data();
        let b = pseudo_random_hermitian(4, 4).into_data();
        let lhs = vectorize(&a.dot(&x).dot(&b));
        let rhs = ndarray::linalg::kron(&b.t().to_owned(), &a).dot(&vectorize(&x));
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            assert!((l - r).norm() < 1e-12);
        }
    }

    #[test]
    fn liouvillian_zero_inputs() {
        let h = Operator::zeros(vec![4]);
        let l = liouvillian(&h, &[]).unwrap();
        assert!(l.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn liouvillian_commutator_oracle() {
        let h = pseudo_random_hermitian(4, 11);
        let l = liouvillian(&h, &[]).unwrap();
        let rho = pseudo_random_density(4, 12);
        let applied = l.apply_op(rho.op()).unwrap();
        let direct = h
            .matmul(rho.op())
            .sub(&rho.op().matmul(&h))
            .scale(C64::new(0.0, -1.0));
        assert!(applied.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn liouvillian_rejects_non_hermitian() {
        let a = destroy(4).unwrap();
        assert!(matches!(
            liouvillian(&a, &[]),
            Err(MasterError::NonHermitian { .. })
        ));
    }

    #[test]
    fn liouvillian_trace_annihilation() {
        let h = pseudo_random_hermitian(4, 21);
        let c = destroy(4).unwrap();
        let l = liouvillian(&h, &[c]).unwrap();
        for seed in 30..33 {
            let rho = pseudo_random_density(4, seed);
            let out = l.apply_op(rho.op()).unwrap();
            assert!(out.trace().norm() < 1e-10);
        }
    }

    #[test]
    fn identity_shift_leaves_generator_unchanged() {
        let h = pseudo_random_hermitian(5, 41);
        let shifted = h.add(&Operator::identity(vec![5]).scale(cr(2.7)));
        let c = destroy(5).unwrap();
        let l1 = liouvillian(&h, &[c.clone()]).unwrap();
        let l2 = liouvillian(&shifted, &[c]).unwrap();
        let diff = (l1.data() - l2.data())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn damped_mode_decay_oracle() {
        // single mode, H = 0, collapse sqrt(κ) a with κ = 1:
        // <a†a>(t) = e^{-t} <a†a>(0)
        let dim = 12;
        let a = destroy(dim).unwrap();
        let l = liouvillian(&Operator::zeros(vec![dim]), &[a]).unwrap();
        let rho0 = coherent(dim, cr(1.2)).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let states = evolve(&rho0, &l, &grid).unwrap();
        let n_op = number(dim).unwrap();
        let n0 = rho0.expect(&n_op).re;
        let n1 = states.last().unwrap().expect(&n_op).re;
        assert_relative_eq!(n1, n0 * (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn propagator_identity_at_zero_generator() {
        let l = liouvillian(&Operator::zeros(vec![3]), &[]).unwrap();
        let m = propagator(&l, 0.7).unwrap();
        let eye = Array2::from_diag_elem(9, cr(1.0));
        let diff = (m.data() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn propagator_semigroup_property() {
        let h = pseudo_random_hermitian(4, 51);
        let c = destroy(4).unwrap().scale(cr(0.6));
        let l = liouvillian(&h, &[c]).unwrap();
        let m1 = propagator(&l, 0.31).unwrap();
        let m2 = propagator(&l, 0.62).unwrap();
        let sq = m1.data().dot(m1.data());
        let diff = (&sq - m2.data())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9, "semigroup defect {diff}");
    }

    #[test]
    fn propagator_rejects_nonpositive_dt() {
        let l = liouvillian(&Operator::zeros(vec![3]), &[]).unwrap();
        assert!(propagator(&l, 0.0).is_err());
        assert!(propagator(&l, -1.0).is_err());
    }

    #[test]
    fn propagator_matches_taylor_reference() {
        // Hilbert dim 16 → superoperator side 256
        let h = pseudo_random_hermitian(16, 61);
        let c = destroy(16).unwrap().scale(cr(0.4));
        let l = liouvillian(&h, &[c]).unwrap();
        let dt = 0.37;
        let ours = propagator(&l, dt).unwrap();

        let scaled = l.data().mapv(|z| z * cr(dt));
        let norm1: f64 = {
            use ndarray_linalg::OperationNorm;
            scaled.opnorm_one().unwrap()
        };
        let k = if norm1 > 0.25 {
            (norm1 / 0.25).log2().ceil() as u32
        } else {
            0
        };
        let tiny = scaled.mapv(|z| z / cr((1u64 << k) as f64));
        let mut term: Array2<C64> = Array2::from_diag_elem(256, cr(1.0));
        let mut acc = term.clone();
        for j in 1..=20 {
            term = term.dot(&tiny).mapv(|z| z / cr(j as f64));
            acc = acc + &term;
        }
        for _ in 0..k {
            acc = acc.dot(&acc);
        }
        let diff = (ours.data() - &acc)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = acc.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-10, "relative error {}", diff / scale);
    }

    #[test]
    fn evolve_degenerate_grid_returns_initial() {
        let l = liouvillian(&Operator::zeros(vec![4]), &[]).unwrap();
        let rho = pseudo_random_density(4, 71);
        let grid = TimeGrid::new(2.0, 2.0, 5).unwrap();
        let states = evolve(&rho, &l, &grid).unwrap();
        assert_eq!(states.len(), 1);
        assert!(states[0].op().max_abs_diff(rho.op()) < 1e-15);
    }

    #[test]
    fn evolve_preserves_trace_and_hermiticity() {
        let dim = 6;
        let a = destroy(dim).unwrap();
        let h = number(dim).unwrap();
        let l = liouvillian(&h, &[a.scale(cr(0.8))]).unwrap();
        let rho0 = coherent(dim, cr(0.9)).unwrap().to_density();
        let grid = TimeGrid::new(0.0, 3.0, 60).unwrap();
        let states = evolve(&rho0, &l, &grid).unwrap();
        assert_eq!(states.len(), 61);
        for s in &states {
            assert!((s.trace().re - 1.0).abs() < 1e-8);
            assert!(s.op().hermiticity_defect() < 1e-9);
        }
    }

    #[test]
    fn evolve_step_halving_self_convergence() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 5, 4).unwrap();
        let h = spec.joint_hamiltonian().unwrap();
        let collapse = spec.joint_collapse().unwrap();
        let l = liouvillian(&h, &collapse).unwrap();
        let rho0 = {
            let b = tmsv(5, 5, 0.346).unwrap();
            let red = crate::fock::ptrace(&b.to_density(), &[1]).unwrap();
            let anc = fock_state(4, 0).unwrap().to_density();
            DensityMatrix::new(tensor_ops(&[red.op(), anc.op()]).unwrap()).unwrap()
        };
        let coarse = evolve(&rho0, &l, &TimeGrid::new(0.0, 2.0, 40).unwrap()).unwrap();
        let fine = evolve(&rho0, &l, &TimeGrid::new(0.0, 2.0, 80).unwrap()).unwrap();
        for (k, c) in coarse.iter().enumerate() {
            let f = &fine[2 * k];
            let diff = c.op().sub(f.op()).frobenius_norm();
            assert!(diff <= 1e-8, "step {k}: {diff}");
        }
    }

    #[test]
    fn channel_map_zero_time_is_identity() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 4, 3).unwrap();
        let e = channel_map(&spec, 0.0).unwrap();
        let eye = Array2::from_diag_elem(16, cr(1.0));
        let diff = (e.data() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn channel_map_decoupled_ancilla_is_identity() {
        let spec = lorentzian_channel(0.8, 0.0, 1.0, 4, 3).unwrap();
        for t in [0.5, 2.0] {
            let e = channel_map(&spec, t).unwrap();
            let eye = Array2::from_diag_elem(16, cr(1.0));
            let diff = (e.data() - &eye).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-10, "t = {t}: {diff}");
        }
    }

    #[test]
    fn channel_map_is_cptp_at_sampled_times() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 4, 3).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let e = channel_map(&spec, t).unwrap();
            let rho = pseudo_random_density(4, 80 + t as u64);
            let out = e.apply(&rho).unwrap();
            assert!((out.trace().re - 1.0).abs() < 1e-8);
            let min_eig = out.op().eigvalsh().unwrap()[0];
            assert!(min_eig >= -crate::fock::PSD_SLACK);
            // complete positivity via the Choi matrix
            let choi_min = e.choi().eigvalsh().unwrap()[0];
            assert!(choi_min >= -1e-7, "t = {t}: Choi min eig {choi_min}");
        }
    }

    #[test]
    fn channel_map_series_matches_single_calls() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 4, 3).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let series = channel_map_series(&spec, &grid).unwrap();
        for (k, t) in grid.times().iter().enumerate() {
            let single = channel_map(&spec, *t).unwrap();
            let diff = (series[k].data() - single.data())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-9, "t = {t}: {diff}");
        }
    }

    #[test]
    fn channel_map_sector_matches_full_tensor_evolution() {
        // the sector restriction must be exact, not an approximation
        let spec = lorentzian_channel(0.9, 2.0, 1.0, 4, 3).unwrap();
        let t = 0.8;
        let e = channel_map(&spec, t).unwrap();

        let h = spec.joint_hamiltonian().unwrap();
        let collapse = spec.joint_collapse().unwrap();
        let l = liouvillian(&h, &collapse).unwrap();
        let m = propagator(&l, t).unwrap();
        let rho_b = pseudo_random_density(4, 90);
        let anc = fock_state(3, 0).unwrap().to_density();
        let joint = DensityMatrix::new(tensor_ops(&[rho_b.op(), anc.op()]).unwrap()).unwrap();
        let evolved = m.apply(&joint).unwrap();
        let reduced = crate::fock::ptrace(&evolved, &[0]).unwrap();

        let via_map = e.apply(&rho_b).unwrap();
        assert!(
            via_map.op().max_abs_diff(reduced.op()) < 1e-12,
            "sector restriction drifted from full evolution"
        );
    }

    #[test]
    fn markovian_trace_distance_contraction() {
        let spec = markovian_reference(&[4.0], 6).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 100).unwrap();
        let maps = channel_map_series(&spec, &grid).unwrap();
        let r1 = fock_state(6, 0).unwrap().to_density();
        let r2 = fock_state(6, 1).unwrap().to_density();
        let mut last = f64::INFINITY;
        for e in &maps {
            let d = crate::metrics::trace_distance(&e.apply(&r1).unwrap(), &e.apply(&r2).unwrap())
                .unwrap();
            assert!(d <= last + 1e-9, "trace distance rebounded: {d} > {last}");
            last = d;
        }
    }

    #[test]
    fn apply_on_second_matches_kron_extension() {
        let spec = lorentzian_channel(0.8, 4.0, 1.0, 3, 3).unwrap();
        let e = channel_map(&spec, 0.7).unwrap();
        let rho = tmsv(3, 3, 0.4).unwrap().to_density();
        let out = e.apply_on_second(&rho).unwrap();

        // reference: explicit I ⊗ E as a big superoperator
        let d_r = 3;
        let d_b = 3;
        let n = d_r * d_b;
        let mut big = Array2::<C64>::zeros((n * n, n * n));
        for r in 0..d_r {
            for rp in 0..d_r {
                for b in 0..d_b {
                    for bp in 0..d_b {
                        for c in 0..d_b {
                            for cp in 0..d_b {
                                let row = (rp * d_b + bp) * n + (r * d_b + b);
                                let col = (rp * d_b + cp) * n + (r * d_b + c);
                                big[[row, col]] = e.data()[[bp * d_b + b, cp * d_b + c]];
                            }
                        }
                    }
                }
            }
        }
        let big_so = Superoperator::new(big, vec![d_r, d_b]).unwrap();
        let reference = big_so.apply(&rho).unwrap();
        assert!(out.op().max_abs_diff(reference.op()) < 1e-12);
    }
}
