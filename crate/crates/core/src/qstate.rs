//! Minimal dense quantum-state engine over labeled polarization/Fock modes.
//!
//! A register is an ordered set of `(mode id, polarization)` labels with a
//! common photon-number cutoff. Basis indices and occupation vectors are in
//! bijection, with the canonically first label as the most significant digit;
//! canonical label order is lexicographic on `(mode_id, polarization)` so
//! serialization and Kronecker products are deterministic.
//!
//! Everything here is immutable after construction and all operations are
//! pure functions, so values can be shared freely across threads.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::tolerances::{HERMITICITY_TOL, NORM_TOL, PSD_SLACK, ZERO_BRANCH_TOL};

/// Identifier of a physical mode (`A`, `B`, `1` … `4` in the splitting stage).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(String);

impl ModeId {
    pub fn new(id: impl Into<String>) -> Self {
        ModeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ModeId {
    fn from(s: &str) -> Self {
        ModeId(s.to_owned())
    }
}

impl std::fmt::Display for ModeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarization::H => write!(f, "H"),
            Polarization::V => write!(f, "V"),
        }
    }
}

/// One bosonic mode of the register. Ordering is the canonical basis order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub id: ModeId,
    pub pol: Polarization,
}

impl ModeLabel {
    pub fn new(id: impl Into<String>, pol: Polarization) -> Self {
        ModeLabel { id: ModeId::new(id), pol }
    }
}

impl std::fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.id, self.pol)
    }
}

/// Ordered set of mode labels with a per-mode photon cutoff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockRegister {
    labels: Vec<ModeLabel>,
    cutoff: u8,
}

impl FockRegister {
    /// Build a register; labels are sorted into canonical order and must be
    /// unique.
    pub fn new(mut labels: Vec<ModeLabel>, cutoff: u8) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidConfig("cutoff must be at least 1".into()));
        }
        labels.sort();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                return Err(Error::LabelCollision(w[0].to_string()));
            }
        }
        let reg = FockRegister { labels, cutoff };
        // Dense amplitudes only; refuse registers beyond ~67M basis states.
        match (reg.base()).checked_pow(reg.len() as u32) {
            Some(dim) if dim <= (1 << 26) => Ok(reg),
            _ => Err(Error::InvalidConfig("register dimension too large".into())),
        }
    }

    /// Register holding both polarizations of each given mode id.
    pub fn dual_pol(ids: &[&str], cutoff: u8) -> Result<Self> {
        let mut labels = Vec::with_capacity(ids.len() * 2);
        for id in ids {
            labels.push(ModeLabel::new(*id, Polarization::H));
            labels.push(ModeLabel::new(*id, Polarization::V));
        }
        FockRegister::new(labels, cutoff)
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn cutoff(&self) -> u8 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn base(&self) -> usize {
        self.cutoff as usize + 1
    }

    pub fn dimension(&self) -> usize {
        self.base().pow(self.len() as u32)
    }

    pub fn contains_id(&self, id: &ModeId) -> bool {
        self.labels.iter().any(|l| &l.id == id)
    }

    pub fn contains_label(&self, label: &ModeLabel) -> bool {
        self.labels.binary_search(label).is_ok()
    }

    pub fn position(&self, label: &ModeLabel) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }

    /// Occupation vector -> basis index. First label is the most significant
    /// digit.
    pub fn encode(&self, occupations: &[u8]) -> usize {
        debug_assert_eq!(occupations.len(), self.len());
        occupations
            .iter()
            .fold(0usize, |acc, &n| acc * self.base() + n as usize)
    }

    /// Basis index -> occupation vector.
    pub fn decode(&self, mut index: usize) -> Vec<u8> {
        let mut occ = vec![0u8; self.len()];
        for slot in occ.iter_mut().rev() {
            *slot = (index % self.base()) as u8;
            index /= self.base();
        }
        occ
    }

    /// Disjoint union with another register.
    pub fn merge(&self, other: &FockRegister) -> Result<FockRegister> {
        if self.cutoff != other.cutoff {
            return Err(Error::CutoffMismatch(self.cutoff, other.cutoff));
        }
        let mut labels = self.labels.clone();
        for l in &other.labels {
            if self.contains_label(l) {
                return Err(Error::LabelCollision(l.to_string()));
            }
            labels.push(l.clone());
        }
        FockRegister::new(labels, self.cutoff)
    }

    /// Sub-register of all labels whose mode id is in `ids`.
    pub fn subregister(&self, ids: &[ModeId]) -> Result<FockRegister> {
        for id in ids {
            if !self.contains_id(id) {
                return Err(Error::UnknownMode(id.to_string()));
            }
        }
        let labels: Vec<ModeLabel> = self
            .labels
            .iter()
            .filter(|l| ids.contains(&l.id))
            .cloned()
            .collect();
        FockRegister::new(labels, self.cutoff)
    }
}

/// Precomputed split of a register's basis indices into (subsystem, rest).
struct IndexSplit {
    sub: FockRegister,
    rest: FockRegister,
    /// global index -> (sub index, rest index)
    parts: Vec<(usize, usize)>,
    /// (sub index, rest index) -> global index
    global: Vec<usize>,
}

impl IndexSplit {
    fn new(register: &FockRegister, ids: &[ModeId]) -> Result<Self> {
        let sub = register.subregister(ids)?;
        let rest_labels: Vec<ModeLabel> = register
            .labels
            .iter()
            .filter(|l| !ids.contains(&l.id))
            .cloned()
            .collect();
        let rest = FockRegister::new(rest_labels, register.cutoff)?;
        let in_sub: Vec<bool> = register
            .labels
            .iter()
            .map(|l| ids.contains(&l.id))
            .collect();

        let dim = register.dimension();
        let rest_dim = rest.dimension();
        let mut parts = Vec::with_capacity(dim);
        let mut global = vec![0usize; dim];
        let base = register.base();
        for g in 0..dim {
            let occ = register.decode(g);
            let mut s = 0usize;
            let mut r = 0usize;
            for (k, &n) in occ.iter().enumerate() {
                if in_sub[k] {
                    s = s * base + n as usize;
                } else {
                    r = r * base + n as usize;
                }
            }
            parts.push((s, r));
            global[s * rest_dim + r] = g;
        }
        Ok(IndexSplit { sub, rest, parts, global })
    }

    fn global(&self, sub: usize, rest: usize) -> usize {
        self.global[sub * self.rest.dimension() + rest]
    }
}

/// Outcome of projecting a subsystem onto a ket.
#[derive(Debug, Clone)]
pub struct Projection<S> {
    pub probability: f64,
    /// Normalized post-measurement state on the remaining modes; `None` when
    /// the branch probability vanishes.
    pub state: Option<S>,
}

/// Pure state over a Fock register.
#[derive(Debug, Clone)]
pub struct StateVector {
    register: FockRegister,
    amplitudes: CVec,
}

impl StateVector {
    pub fn from_amplitudes(register: FockRegister, amplitudes: CVec) -> Result<Self> {
        if amplitudes.len() != register.dimension() {
            return Err(Error::DimensionMismatch {
                expected: register.dimension(),
                got: amplitudes.len(),
            });
        }
        Ok(StateVector { register, amplitudes })
    }

    /// Basis state with the given occupation numbers.
    pub fn basis_state(register: FockRegister, occupations: &[u8]) -> Result<Self> {
        if occupations.len() != register.len() {
            return Err(Error::DimensionMismatch {
                expected: register.len(),
                got: occupations.len(),
            });
        }
        if occupations.iter().any(|&n| n > register.cutoff()) {
            return Err(Error::InvalidConfig("occupation exceeds cutoff".into()));
        }
        let mut amps: CVec = Array1::zeros(register.dimension());
        amps[register.encode(occupations)] = Complex64::new(1.0, 0.0);
        Ok(StateVector { register, amplitudes: amps })
    }

    pub fn vacuum(register: FockRegister) -> Self {
        let occ = vec![0u8; register.len()];
        StateVector::basis_state(register, &occ).expect("vacuum occupation is valid")
    }

    pub fn register(&self) -> &FockRegister {
        &self.register
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupations: &[u8]) -> Complex64 {
        self.amplitudes[self.register.encode(occupations)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n < ZERO_BRANCH_TOL {
            return Err(Error::NotNormalized { norm: n });
        }
        let inv = Complex64::new(1.0 / n, 0.0);
        Ok(StateVector {
            register: self.register.clone(),
            amplitudes: self.amplitudes.mapv(|z| z * inv),
        })
    }

    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(())
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.register != other.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.dimension(),
                got: other.register.dimension(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        if self.register != other.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.dimension(),
                got: other.register.dimension(),
            });
        }
        Ok(StateVector {
            register: self.register.clone(),
            amplitudes: &self.amplitudes + &other.amplitudes,
        })
    }

    pub fn scale(&self, z: Complex64) -> StateVector {
        StateVector {
            register: self.register.clone(),
            amplitudes: self.amplitudes.mapv(|a| a * z),
        }
    }

    /// Kronecker product under canonical label ordering. Registers must be
    /// disjoint.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let merged = self.register.merge(&other.register)?;
        // For each merged label: (comes from self?, position in its source).
        let sources: Vec<(bool, usize)> = merged
            .labels()
            .iter()
            .map(|l| match self.register.position(l) {
                Some(p) => (true, p),
                None => (false, other.register.position(l).expect("label in one source")),
            })
            .collect();
        let base = merged.base();
        let mut amps: CVec = Array1::zeros(merged.dimension());
        for g in 0..merged.dimension() {
            let occ = merged.decode(g);
            let mut ia = 0usize;
            let mut ib = 0usize;
            // Rebuild each source index digit by digit in source label order.
            let mut occ_a = vec![0u8; self.register.len()];
            let mut occ_b = vec![0u8; other.register.len()];
            for (k, &(from_a, pos)) in sources.iter().enumerate() {
                if from_a {
                    occ_a[pos] = occ[k];
                } else {
                    occ_b[pos] = occ[k];
                }
            }
            for &n in &occ_a {
                ia = ia * base + n as usize;
            }
            for &n in &occ_b {
                ib = ib * base + n as usize;
            }
            amps[g] = self.amplitudes[ia] * other.amplitudes[ib];
        }
        Ok(StateVector { register: merged, amplitudes: amps })
    }

    /// Project the subsystem of `mode_id` onto `ket` and return the Born
    /// probability together with the normalized state on the remaining modes.
    ///
    /// `ket` must be a normalized state over exactly the labels of `mode_id`.
    pub fn project(&self, mode_id: &ModeId, ket: &StateVector) -> Result<Projection<StateVector>> {
        let split = IndexSplit::new(&self.register, std::slice::from_ref(mode_id))?;
        if ket.register != split.sub {
            return Err(Error::InvalidConfig(format!(
                "projector register does not match subsystem of mode {mode_id}"
            )));
        }
        ket.check_normalized()?;
        let rest_dim = split.rest.dimension();
        let mut proj: CVec = Array1::zeros(rest_dim);
        for (g, &(s, r)) in split.parts.iter().enumerate() {
            proj[r] += ket.amplitudes[s].conj() * self.amplitudes[g];
        }
        let probability: f64 = proj.iter().map(|z| z.norm_sqr()).sum();
        if probability <= ZERO_BRANCH_TOL {
            return Ok(Projection { probability, state: None });
        }
        let inv = Complex64::new(1.0 / probability.sqrt(), 0.0);
        let state = StateVector {
            register: split.rest,
            amplitudes: proj.mapv(|z| z * inv),
        };
        Ok(Projection { probability, state: Some(state) })
    }

    /// Evolve by `exp(-i H t)` where `H` is Hermitian in units hbar = 1.
    pub fn evolve(&self, generator: &CMat, time: f64) -> Result<StateVector> {
        if generator.nrows() != self.register.dimension() || !generator.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.register.dimension(),
                got: generator.nrows(),
            });
        }
        let dev = linalg::hermiticity_deviation(generator);
        if dev > HERMITICITY_TOL * (1.0 + linalg::max_abs(generator)) {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let u = linalg::expi_hermitian(generator, time)?;
        Ok(StateVector {
            register: self.register.clone(),
            amplitudes: u.dot(&self.amplitudes),
        })
    }

    /// Apply a unitary acting on the sub-register of `ids` to the full state.
    pub fn apply_on_modes(&self, unitary: &CMat, ids: &[ModeId]) -> Result<StateVector> {
        let split = IndexSplit::new(&self.register, ids)?;
        let sub_dim = split.sub.dimension();
        if unitary.nrows() != sub_dim || unitary.ncols() != sub_dim {
            return Err(Error::DimensionMismatch { expected: sub_dim, got: unitary.nrows() });
        }
        let rest_dim = split.rest.dimension();
        let mut out: CVec = Array1::zeros(self.register.dimension());
        for r in 0..rest_dim {
            for s_new in 0..sub_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for s_old in 0..sub_dim {
                    acc += unitary[[s_new, s_old]] * self.amplitudes[split.global(s_old, r)];
                }
                out[split.global(s_new, r)] = acc;
            }
        }
        Ok(StateVector { register: self.register.clone(), amplitudes: out })
    }

    /// Outer product `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.register.dimension();
        let mut m: CMat = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[[i, j]] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        DensityMatrix { register: self.register.clone(), matrix: m }
    }
}

/// Mixed state over a Fock register.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    register: FockRegister,
    matrix: CMat,
}

impl DensityMatrix {
    pub fn from_matrix(register: FockRegister, matrix: CMat) -> Result<Self> {
        if matrix.nrows() != register.dimension() || !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: register.dimension(),
                got: matrix.nrows(),
            });
        }
        Ok(DensityMatrix { register, matrix })
    }

    pub fn register(&self) -> &FockRegister {
        &self.register
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.register.dimension()).map(|i| self.matrix[[i, i]]).sum()
    }

    pub fn eigenvalues(&self) -> Array1<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    /// Hermitian within tolerance, unit trace, eigenvalues above `-PSD_SLACK`.
    pub fn check_physical(&self) -> Result<()> {
        let dev = linalg::hermiticity_deviation(&self.matrix);
        if dev > HERMITICITY_TOL {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: tr.re });
        }
        let min = self.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_SLACK {
            return Err(Error::NotAState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let merged = self.register.merge(&other.register)?;
        let sources: Vec<(bool, usize)> = merged
            .labels()
            .iter()
            .map(|l| match self.register.position(l) {
                Some(p) => (true, p),
                None => (false, other.register.position(l).expect("label in one source")),
            })
            .collect();
        let base = merged.base();
        let dim = merged.dimension();
        // Map merged basis index -> (self index, other index).
        let mut pair_of = Vec::with_capacity(dim);
        for g in 0..dim {
            let occ = merged.decode(g);
            let mut occ_a = vec![0u8; self.register.len()];
            let mut occ_b = vec![0u8; other.register.len()];
            for (k, &(from_a, pos)) in sources.iter().enumerate() {
                if from_a {
                    occ_a[pos] = occ[k];
                } else {
                    occ_b[pos] = occ[k];
                }
            }
            let mut ia = 0usize;
            let mut ib = 0usize;
            for &n in &occ_a {
                ia = ia * base + n as usize;
            }
            for &n in &occ_b {
                ib = ib * base + n as usize;
            }
            pair_of.push((ia, ib));
        }
        let mut m: CMat = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                let (ia, ib) = pair_of[i];
                let (ja, jb) = pair_of[j];
                m[[i, j]] = self.matrix[[ia, ja]] * other.matrix[[ib, jb]];
            }
        }
        Ok(DensityMatrix { register: merged, matrix: m })
    }

    /// Trace out every mode not listed in `keep`.
    pub fn partial_trace(&self, keep: &[ModeId]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let split = IndexSplit::new(&self.register, keep)?;
        let keep_dim = split.sub.dimension();
        let rest_dim = split.rest.dimension();
        let mut m: CMat = Array2::zeros((keep_dim, keep_dim));
        for ki in 0..keep_dim {
            for kj in 0..keep_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..rest_dim {
                    acc += self.matrix[[split.global(ki, t), split.global(kj, t)]];
                }
                m[[ki, kj]] = acc;
            }
        }
        Ok(DensityMatrix { register: split.sub, matrix: m })
    }

    /// Project the subsystem of `mode_id` onto `ket`; see
    /// [`StateVector::project`].
    pub fn project(&self, mode_id: &ModeId, ket: &StateVector) -> Result<Projection<DensityMatrix>> {
        let split = IndexSplit::new(&self.register, std::slice::from_ref(mode_id))?;
        if ket.register != split.sub {
            return Err(Error::InvalidConfig(format!(
                "projector register does not match subsystem of mode {mode_id}"
            )));
        }
        ket.check_normalized()?;
        let sub_dim = split.sub.dimension();
        let rest_dim = split.rest.dimension();
        let mut cond: CMat = Array2::zeros((rest_dim, rest_dim));
        for r in 0..rest_dim {
            for rp in 0..rest_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for s in 0..sub_dim {
                    for sp in 0..sub_dim {
                        acc += ket.amplitudes[s].conj()
                            * ket.amplitudes[sp]
                            * self.matrix[[split.global(s, r), split.global(sp, rp)]];
                    }
                }
                cond[[r, rp]] = acc;
            }
        }
        let probability = (0..rest_dim).map(|r| cond[[r, r]].re).sum::<f64>();
        if probability <= ZERO_BRANCH_TOL {
            return Ok(Projection { probability: probability.max(0.0), state: None });
        }
        let inv = Complex64::new(1.0 / probability, 0.0);
        let state = DensityMatrix {
            register: split.rest,
            matrix: cond.mapv(|z| z * inv),
        };
        Ok(Projection { probability, state: Some(state) })
    }

    pub fn evolve(&self, generator: &CMat, time: f64) -> Result<DensityMatrix> {
        let dev = linalg::hermiticity_deviation(generator);
        if dev > HERMITICITY_TOL * (1.0 + linalg::max_abs(generator)) {
            return Err(Error::NonHermitian { deviation: dev });
        }
        let u = linalg::expi_hermitian(generator, time)?;
        let m = u.dot(&self.matrix).dot(&linalg::dagger(&u));
        Ok(DensityMatrix { register: self.register.clone(), matrix: m })
    }

    /// `<ket| rho |ket>` for a ket over the full register.
    pub fn pure_overlap(&self, ket: &StateVector) -> Result<f64> {
        if ket.register != self.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.dimension(),
                got: ket.register.dimension(),
            });
        }
        let dim = self.register.dimension();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..dim {
            for j in 0..dim {
                acc += ket.amplitudes[i].conj() * self.matrix[[i, j]] * ket.amplitudes[j];
            }
        }
        Ok(acc.re)
    }

    /// Matrix distance `max |rho - sigma|`.
    pub fn distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.register != other.register {
            return Err(Error::DimensionMismatch {
                expected: self.register.dimension(),
                got: other.register.dimension(),
            });
        }
        Ok(linalg::max_abs(&(&self.matrix - &other.matrix)))
    }
}

// ---------------------------------------------------------------------------
// Polarization-encoding helpers
// ---------------------------------------------------------------------------

/// Single photon in mode `id` with polarization amplitudes `(alpha, beta)`
/// over (H, V).
pub fn single_photon_state(
    id: &str,
    alpha: Complex64,
    beta: Complex64,
    cutoff: u8,
) -> Result<StateVector> {
    let register = FockRegister::dual_pol(&[id], cutoff)?;
    let h = StateVector::basis_state(register.clone(), &[1, 0])?;
    let v = StateVector::basis_state(register, &[0, 1])?;
    h.scale(alpha).add(&v.scale(beta))
}

/// Two-photon polarization state over modes `(id_a, id_b)` with coefficients
/// in the (HH, HV, VH, VV) product basis, first factor `id_a`.
pub fn two_photon_state(
    id_a: &str,
    id_b: &str,
    coeffs: [Complex64; 4],
    cutoff: u8,
) -> Result<StateVector> {
    let pols = [Polarization::H, Polarization::V];
    let mut total: Option<StateVector> = None;
    for (k, &c) in coeffs.iter().enumerate() {
        let pa = pols[k / 2];
        let pb = pols[k % 2];
        let (ah, av) = match pa {
            Polarization::H => (c, Complex64::new(0.0, 0.0)),
            Polarization::V => (Complex64::new(0.0, 0.0), c),
        };
        let (bh, bv) = match pb {
            Polarization::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Polarization::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        };
        let a = single_photon_state(id_a, ah, av, cutoff)?;
        let b = single_photon_state(id_b, bh, bv, cutoff)?;
        let term = a.tensor(&b)?;
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term)?,
        });
    }
    Ok(total.expect("four coefficients"))
}

/// Extract the 4x4 one-photon-per-mode polarization block of a two-mode
/// density matrix, ordered (HH, HV, VH, VV) with `id_a` as the first factor.
///
/// Fails when the state has weight outside that sector.
pub fn polarization_block(rho: &DensityMatrix, id_a: &str, id_b: &str) -> Result<CMat> {
    let reg = rho.register();
    let ida = ModeId::new(id_a);
    let idb = ModeId::new(id_b);
    let pols = [Polarization::H, Polarization::V];
    let mut indices = [0usize; 4];
    for (k, idx) in indices.iter_mut().enumerate() {
        let pa = pols[k / 2];
        let pb = pols[k % 2];
        let mut occ = vec![0u8; reg.len()];
        let la = ModeLabel { id: ida.clone(), pol: pa };
        let lb = ModeLabel { id: idb.clone(), pol: pb };
        let qa = reg.position(&la).ok_or_else(|| Error::UnknownMode(ida.to_string()))?;
        let qb = reg.position(&lb).ok_or_else(|| Error::UnknownMode(idb.to_string()))?;
        occ[qa] = 1;
        occ[qb] = 1;
        *idx = reg.encode(&occ);
    }
    let mut block: CMat = Array2::zeros((4, 4));
    for i in 0..4 {
        for j in 0..4 {
            block[[i, j]] = rho.matrix()[[indices[i], indices[j]]];
        }
    }
    let sector_weight: f64 = (0..4).map(|i| block[[i, i]].re).sum();
    let total = rho.trace().re;
    if (sector_weight - total).abs() > 1e-9 * total.abs().max(1.0) {
        return Err(Error::NotAState(format!(
            "weight {:.6} of trace {:.6} lies in the one-photon-per-mode sector",
            sector_weight, total
        )));
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn register_orders_labels_canonically() {
        let reg = FockRegister::dual_pol(&["A", "1", "2"], 1).unwrap();
        let ids: Vec<&str> = reg.labels().iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, ["1", "1", "2", "2", "A", "A"]);
        assert_eq!(reg.dimension(), 64);
    }

    #[test]
    fn register_rejects_duplicate_labels() {
        let labels = vec![
            ModeLabel::new("A", Polarization::H),
            ModeLabel::new("A", Polarization::H),
        ];
        assert!(matches!(
            FockRegister::new(labels, 1),
            Err(Error::LabelCollision(_))
        ));
    }

    #[test]
    fn encode_decode_roundtrip() {
        let reg = FockRegister::dual_pol(&["A", "1"], 2).unwrap();
        for i in 0..reg.dimension() {
            assert_eq!(reg.encode(&reg.decode(i)), i);
        }
    }

    #[test]
    fn basis_tensor_is_concatenated_basis() {
        // |1,0> (x) |0,0| -> occupation (1,0,0,0) on the merged register
        let ra = FockRegister::dual_pol(&["1"], 1).unwrap();
        let rb = FockRegister::dual_pol(&["2"], 1).unwrap();
        let a = StateVector::basis_state(ra, &[1, 0]).unwrap();
        let b = StateVector::basis_state(rb, &[0, 0]).unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.amplitude(&[1, 0, 0, 0]), c(1.0, 0.0));
        assert!((t.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_norm_is_multiplicative() {
        let a = single_photon_state("A", c(0.6, 0.0), c(0.0, 0.8), 1).unwrap();
        let b = single_photon_state("B", c(0.48, 0.36), c(0.0, 0.8), 1).unwrap();
        let t = a.tensor(&b).unwrap();
        assert!((t.norm() - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn tensor_rejects_label_collision() {
        let a = single_photon_state("A", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        let b = single_photon_state("A", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        assert!(matches!(a.tensor(&b), Err(Error::LabelCollision(_))));
    }

    #[test]
    fn tensor_then_partial_trace_recovers_factor() {
        let a = single_photon_state("A", c(0.6, 0.0), c(0.0, 0.8), 1).unwrap();
        let b = single_photon_state("B", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        let rho = a.tensor(&b).unwrap().to_density();
        let back = rho.partial_trace(&[ModeId::new("A")]).unwrap();
        let dist = back.distance(&a.to_density()).unwrap();
        assert!(dist < 1e-10);
    }

    #[test]
    fn partial_trace_of_entangled_pair_is_maximally_mixed() {
        let inv = 1.0 / 2.0_f64.sqrt();
        let psi = two_photon_state(
            "A",
            "B",
            [c(0.0, 0.0), c(inv, 0.0), c(inv, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let rho_a = psi.to_density().partial_trace(&[ModeId::new("A")]).unwrap();
        // Single-photon block should be I/2; vacuum and two-photon entries 0.
        let reg = rho_a.register();
        let ih = reg.encode(&[1, 0]);
        let iv = reg.encode(&[0, 1]);
        assert!((rho_a.matrix()[[ih, ih]].re - 0.5).abs() < 1e-12);
        assert!((rho_a.matrix()[[iv, iv]].re - 0.5).abs() < 1e-12);
        assert!(rho_a.matrix()[[ih, iv]].norm() < 1e-12);
        assert!((rho_a.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_keep_sets() {
        let a = single_photon_state("A", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        let rho = a.to_density();
        assert!(matches!(rho.partial_trace(&[]), Err(Error::EmptyKeepSet)));
        assert!(matches!(
            rho.partial_trace(&[ModeId::new("Z")]),
            Err(Error::UnknownMode(_))
        ));
    }

    #[test]
    fn projection_probabilities_complete_over_basis() {
        let psi = single_photon_state("A", c(0.6, 0.0), c(0.0, 0.8), 1)
            .unwrap()
            .tensor(&single_photon_state("B", c(0.28, 0.96), c(0.0, 0.0), 1).unwrap())
            .unwrap();
        let sub = FockRegister::dual_pol(&["B"], 1).unwrap();
        let mut total = 0.0;
        for occ in [[0u8, 0u8], [0, 1], [1, 0], [1, 1]] {
            let ket = StateVector::basis_state(sub.clone(), &occ).unwrap();
            total += psi.project(&ModeId::new("B"), &ket).unwrap().probability;
        }
        assert!((total - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn project_onto_matching_and_orthogonal_kets() {
        let h = single_photon_state("A", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        let p = h.project(&ModeId::new("A"), &h).unwrap();
        assert!((p.probability - 1.0).abs() < 1e-12);

        let inv = 1.0 / 2.0_f64.sqrt();
        let plus = single_photon_state("A", c(inv, 0.0), c(inv, 0.0), 1).unwrap();
        let p = plus.project(&ModeId::new("A"), &h).unwrap();
        assert!((p.probability - 0.5).abs() < 1e-12);

        let v = single_photon_state("A", c(0.0, 0.0), c(1.0, 0.0), 1).unwrap();
        let p = h.project(&ModeId::new("A"), &v).unwrap();
        assert!(p.probability < ZERO_BRANCH_TOL);
        assert!(p.state.is_none());
    }

    #[test]
    fn evolve_rejects_non_hermitian_generators() {
        let psi = single_photon_state("A", c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        let mut h: CMat = Array2::zeros((4, 4));
        h[[0, 1]] = c(1.0, 0.0); // no conjugate partner
        assert!(matches!(psi.evolve(&h, 1.0), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn outer_product_is_rank_one_with_unit_trace() {
        let psi = single_photon_state("A", c(0.6, 0.0), c(0.0, 0.8), 1).unwrap();
        let rho = psi.to_density();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        let evs = rho.eigenvalues();
        let n = evs.len();
        assert!((evs[n - 1] - 1.0).abs() < 1e-12);
        assert!(evs[n - 2].abs() < 1e-10);
    }

    #[test]
    fn polarization_block_orders_first_factor_by_id_argument() {
        // |H>_3 |V>_1 written with id_a = "3": block entry (HV, HV) = 1.
        let psi = two_photon_state(
            "3",
            "1",
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let block = polarization_block(&psi.to_density(), "3", "1").unwrap();
        assert!((block[[1, 1]].re - 1.0).abs() < 1e-12);
        // Same state read with the opposite factor order is VH.
        let block_swapped = polarization_block(&psi.to_density(), "1", "3").unwrap();
        assert!((block_swapped[[2, 2]].re - 1.0).abs() < 1e-12);
    }
}
