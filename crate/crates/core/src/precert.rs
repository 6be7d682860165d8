//! Single-photon down-conversion splitting and flag heralding.
//!
//! The splitting stage couples an input mode to a signal/flag pair through
//!
//! ```text
//! H = i (a_{A,H} a†_{1,H} a†_{2,H} + a_{A,V} a†_{1,V} a†_{2,V}) + h.c.
//! ```
//!
//! in units where `hbar * chi = 1`, so the interaction strength is the gain
//! `g = chi * t`. On the single-photon subspace this is a plain rotation per
//! polarization sector,
//!
//! ```text
//! |1>_A |vac> |vac>  ->  cos g |1>_A |vac> |vac> + sin g |vac> |1>_1 |1>_2
//! ```
//!
//! and the flag measurement of mode 2 in the {pi+, pi-} basis heralds the
//! presence of a photon in mode 1 carrying the input polarization, without
//! learning anything about its amplitudes.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dagger, CMat};
use crate::qstate::{
    single_photon_state, FockRegister, ModeId, ModeLabel, Polarization, StateVector,
};
use crate::tolerances::{ENERGY_CONSERVATION_WARN, NORM_TOL};

/// Normalized polarization qubit `alpha |H> + beta |V>`.
#[derive(Debug, Clone, Copy)]
pub struct PolarizationQubit {
    alpha: Complex64,
    beta: Complex64,
}

impl PolarizationQubit {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(PolarizationQubit { alpha, beta })
    }

    /// Build from unnormalized amplitudes.
    pub fn normalized(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(PolarizationQubit { alpha: alpha / norm, beta: beta / norm })
    }

    /// Haar-random qubit.
    pub fn random(rng: &mut impl Rng) -> Self {
        loop {
            let mut g = || {
                // Box-Muller pair
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (-2.0 * u.ln()).sqrt();
                Complex64::new(r * v.cos(), r * v.sin())
            };
            let (a, b) = (g(), g());
            if let Ok(q) = PolarizationQubit::normalized(a, b) {
                return q;
            }
        }
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    /// Single-photon encoding on the dual-polarization register of `id`.
    pub fn to_state(&self, id: &str, cutoff: u8) -> Result<StateVector> {
        single_photon_state(id, self.alpha, self.beta, cutoff)
    }
}

/// Orthonormal single-photon flag measurement basis over (H, V).
#[derive(Debug, Clone, Copy)]
pub struct FlagBasis {
    pub plus: (Complex64, Complex64),
    pub minus: (Complex64, Complex64),
}

impl FlagBasis {
    /// The diagonal basis `pi± = (|H> ± |V>)/sqrt(2)`.
    pub fn diagonal() -> Self {
        let inv = Complex64::new(1.0 / 2.0_f64.sqrt(), 0.0);
        FlagBasis {
            plus: (inv, inv),
            minus: (inv, -inv),
        }
    }

    fn check_orthonormal(&self) -> Result<()> {
        let n_plus = (self.plus.0.norm_sqr() + self.plus.1.norm_sqr()).sqrt();
        let n_minus = (self.minus.0.norm_sqr() + self.minus.1.norm_sqr()).sqrt();
        let overlap = (self.plus.0.conj() * self.minus.0 + self.plus.1.conj() * self.minus.1).norm();
        if (n_plus - 1.0).abs() > NORM_TOL || (n_minus - 1.0).abs() > NORM_TOL || overlap > NORM_TOL
        {
            return Err(Error::InvalidConfig(
                "flag basis is not orthonormal".into(),
            ));
        }
        Ok(())
    }
}

/// Mode names used by one splitting stage.
#[derive(Debug, Clone)]
pub struct SplitterModes {
    pub input: ModeId,
    pub signal: ModeId,
    pub flag: ModeId,
}

impl SplitterModes {
    /// Alice's stage: photon A split into photons 1 (signal) and 2 (flag).
    pub fn side_a() -> Self {
        SplitterModes {
            input: ModeId::new("A"),
            signal: ModeId::new("1"),
            flag: ModeId::new("2"),
        }
    }

    /// Bob's stage: photon B split into photons 3 (signal) and 4 (flag).
    pub fn side_b() -> Self {
        SplitterModes {
            input: ModeId::new("B"),
            signal: ModeId::new("3"),
            flag: ModeId::new("4"),
        }
    }
}

/// Parameters of the splitting stage.
#[derive(Debug, Clone)]
pub struct SplitterConfig {
    gain_g: f64,
    pub lambda_in_nm: f64,
    pub lambda_signal_nm: f64,
    pub lambda_flag_nm: f64,
    pub flag_basis: FlagBasis,
    pub cutoff: u8,
}

impl SplitterConfig {
    /// Gain must lie in `[0, pi/2]`; the splitting probability
    /// `mu_C = sin^2 g` is single-valued there and larger gains are rejected
    /// rather than wrapped.
    pub fn new(gain_g: f64) -> Result<Self> {
        let cfg = SplitterConfig {
            gain_g,
            lambda_in_nm: 716.0,
            lambda_signal_nm: 1310.0,
            lambda_flag_nm: 1550.0,
            flag_basis: FlagBasis::diagonal(),
            cutoff: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_wavelengths(mut self, lambda_in: f64, lambda_signal: f64, lambda_flag: f64) -> Result<Self> {
        self.lambda_in_nm = lambda_in;
        self.lambda_signal_nm = lambda_signal;
        self.lambda_flag_nm = lambda_flag;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cutoff(mut self, cutoff: u8) -> Result<Self> {
        self.cutoff = cutoff;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.gain_g) {
            return Err(Error::InvalidConfig(format!(
                "gain g = {} outside [0, pi/2]",
                self.gain_g
            )));
        }
        if self.lambda_in_nm <= 0.0 || self.lambda_signal_nm <= 0.0 || self.lambda_flag_nm <= 0.0 {
            return Err(Error::InvalidConfig("wavelengths must be positive".into()));
        }
        if self.cutoff == 0 || self.cutoff > 3 {
            return Err(Error::InvalidConfig("cutoff must be in 1..=3".into()));
        }
        self.flag_basis.check_orthonormal()
    }

    pub fn gain(&self) -> f64 {
        self.gain_g
    }

    /// Splitting probability `mu_C = sin^2 g`.
    pub fn mu_c(&self) -> f64 {
        self.gain_g.sin().powi(2)
    }

    /// Relative deviation of `nu_in = nu_signal + nu_flag`.
    ///
    /// Reported, not enforced: the check warns above
    /// [`ENERGY_CONSERVATION_WARN`] but never fails, because published
    /// wavelength triples do not always satisfy it exactly.
    pub fn energy_conservation_deviation(&self) -> f64 {
        let nu_in = 1.0 / self.lambda_in_nm;
        let nu_out = 1.0 / self.lambda_signal_nm + 1.0 / self.lambda_flag_nm;
        ((nu_in - nu_out) / nu_in).abs()
    }

    pub fn energy_conservation_warns(&self) -> bool {
        self.energy_conservation_deviation() > ENERGY_CONSERVATION_WARN
    }
}

/// Flag-measurement result of one splitting stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagResult {
    PiPlus,
    PiMinus,
    /// Flag detector issued no click (only possible with lossy detection).
    NoClick,
    /// The photon did not split; it stays at the input wavelength and is
    /// removed by spectral selection.
    NoSplit,
}

/// One branch of the heralding measurement.
#[derive(Debug, Clone)]
pub struct HeraldOutcome {
    pub heralded: bool,
    pub flag_result: FlagResult,
    /// Post-measurement state on the surviving mode(s); `None` for
    /// zero-probability branches.
    pub conditional_state: Option<StateVector>,
    pub probability: f64,
}

/// Annihilation operator of one labeled mode on the register.
pub fn annihilation_operator(register: &FockRegister, label: &ModeLabel) -> Result<CMat> {
    let pos = register
        .position(label)
        .ok_or_else(|| Error::UnknownMode(label.to_string()))?;
    let dim = register.dimension();
    let mut m: CMat = CMat::zeros((dim, dim));
    for i in 0..dim {
        let occ = register.decode(i);
        let n = occ[pos];
        if n > 0 {
            let mut lower = occ.clone();
            lower[pos] = n - 1;
            m[[register.encode(&lower), i]] = Complex64::new((n as f64).sqrt(), 0.0);
        }
    }
    Ok(m)
}

/// Creation operator, the adjoint of [`annihilation_operator`].
pub fn creation_operator(register: &FockRegister, label: &ModeLabel) -> Result<CMat> {
    Ok(dagger(&annihilation_operator(register, label)?))
}

/// Interaction Hamiltonian of the splitting stage in units `hbar chi = 1`:
/// `i (a_{in,H} a†_{sig,H} a†_{flag,H} + a_{in,V} a†_{sig,V} a†_{flag,V}) + h.c.`
pub fn build_hamiltonian(register: &FockRegister, modes: &SplitterModes) -> Result<CMat> {
    for id in [&modes.input, &modes.signal, &modes.flag] {
        for pol in [Polarization::H, Polarization::V] {
            let label = ModeLabel { id: id.clone(), pol };
            if !register.contains_label(&label) {
                return Err(Error::UnknownMode(label.to_string()));
            }
        }
    }
    let dim = register.dimension();
    let mut t: CMat = CMat::zeros((dim, dim));
    for pol in [Polarization::H, Polarization::V] {
        let a_in = annihilation_operator(register, &ModeLabel { id: modes.input.clone(), pol })?;
        let c_sig = creation_operator(register, &ModeLabel { id: modes.signal.clone(), pol })?;
        let c_flag = creation_operator(register, &ModeLabel { id: modes.flag.clone(), pol })?;
        t = t + c_sig.dot(&c_flag).dot(&a_in);
    }
    let i = Complex64::new(0.0, 1.0);
    Ok(t.mapv(|z| z * i) + dagger(&t.mapv(|z| z * i)))
}

/// Splitting-stage register: dual-polarization input, signal, and flag modes.
pub fn splitter_register(modes: &SplitterModes, cutoff: u8) -> Result<FockRegister> {
    FockRegister::dual_pol(
        &[modes.input.as_str(), modes.signal.as_str(), modes.flag.as_str()],
        cutoff,
    )
}

/// Closed-form output of the splitting stage (the rotation per polarization
/// sector written out directly).
fn split_closed_form(
    input: &PolarizationQubit,
    modes: &SplitterModes,
    gain: f64,
    cutoff: u8,
) -> Result<StateVector> {
    let register = splitter_register(modes, cutoff)?;
    let (cg, sg) = (gain.cos(), gain.sin());
    let occ_of = |assignments: &[(&ModeId, Polarization)]| -> Vec<u8> {
        let mut occ = vec![0u8; register.len()];
        for (id, pol) in assignments {
            let pos = register
                .position(&ModeLabel { id: (*id).clone(), pol: *pol })
                .expect("splitter label");
            occ[pos] = 1;
        }
        occ
    };
    let mut amps = ndarray::Array1::zeros(register.dimension());
    for (pol, coeff) in [(Polarization::H, input.alpha), (Polarization::V, input.beta)] {
        let stay = occ_of(&[(&modes.input, pol)]);
        let split = occ_of(&[(&modes.signal, pol), (&modes.flag, pol)]);
        amps[register.encode(&stay)] = coeff * cg;
        amps[register.encode(&split)] = coeff * sg;
    }
    StateVector::from_amplitudes(register, amps)
}

/// Unitary of one splitting stage on its register, `exp(-i H g)`.
pub fn splitter_unitary(modes: &SplitterModes, gain: f64, cutoff: u8) -> Result<CMat> {
    let register = splitter_register(modes, cutoff)?;
    let h = build_hamiltonian(&register, modes)?;
    crate::linalg::expi_hermitian(&h, gain)
}

/// Send a polarization qubit through the splitting stage.
///
/// The state is computed twice — once by evolving with the interaction
/// Hamiltonian and once from the closed-form rotation — and the two routes
/// must agree to 1e-10. With the sign conventions above no phase fix-up is
/// needed: the splitting branch carries `+sin g` exactly.
pub fn split(input: &PolarizationQubit, config: &SplitterConfig) -> Result<StateVector> {
    let modes = SplitterModes::side_a();
    split_with_modes(input, config, &modes)
}

pub fn split_with_modes(
    input: &PolarizationQubit,
    config: &SplitterConfig,
    modes: &SplitterModes,
) -> Result<StateVector> {
    let register = splitter_register(modes, config.cutoff)?;
    let h = build_hamiltonian(&register, modes)?;
    let initial = input
        .to_state(modes.input.as_str(), config.cutoff)?
        .tensor(&StateVector::vacuum(FockRegister::dual_pol(
            &[modes.signal.as_str()],
            config.cutoff,
        )?))?
        .tensor(&StateVector::vacuum(FockRegister::dual_pol(
            &[modes.flag.as_str()],
            config.cutoff,
        )?))?;
    let evolved = initial.evolve(&h, config.gain())?;
    let closed = split_closed_form(input, modes, config.gain(), config.cutoff)?;
    let dist: f64 = evolved
        .amplitudes()
        .iter()
        .zip(closed.amplitudes().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(
        dist < 1e-10,
        "matrix-exponential and closed-form splitting disagree: {dist:.3e}"
    );
    Ok(closed)
}

fn flag_ket(basis: (Complex64, Complex64), flag: &ModeId, cutoff: u8) -> Result<StateVector> {
    single_photon_state(flag.as_str(), basis.0, basis.1, cutoff)
}

/// Measure the flag mode of a split state in the {pi+, pi-} basis and group
/// the branches, including the spectrally-selected no-split branch.
///
/// Probabilities cover the full ensemble before any detector inefficiency
/// (which the optics module applies downstream).
pub fn herald(split_state: &StateVector, config: &SplitterConfig) -> Result<Vec<HeraldOutcome>> {
    herald_with_modes(split_state, config, &SplitterModes::side_a())
}

pub fn herald_with_modes(
    split_state: &StateVector,
    config: &SplitterConfig,
    modes: &SplitterModes,
) -> Result<Vec<HeraldOutcome>> {
    let cutoff = config.cutoff;
    let mut outcomes = Vec::with_capacity(3);
    for (flag_result, basis) in [
        (FlagResult::PiPlus, config.flag_basis.plus),
        (FlagResult::PiMinus, config.flag_basis.minus),
    ] {
        let ket = flag_ket(basis, &modes.flag, cutoff)?;
        let proj = split_state.project(&modes.flag, &ket)?;
        let conditional = match proj.state {
            Some(state) => {
                // In the split branch the input mode is exactly in vacuum;
                // strip it to leave the heralded photon alone.
                let vac = StateVector::vacuum(FockRegister::dual_pol(
                    &[modes.input.as_str()],
                    cutoff,
                )?);
                let inner = state.project(&modes.input, &vac)?;
                debug_assert!((inner.probability - 1.0).abs() < 1e-9);
                inner.state
            }
            None => None,
        };
        outcomes.push(HeraldOutcome {
            heralded: true,
            flag_result,
            conditional_state: conditional,
            probability: proj.probability,
        });
    }
    // No-split branch: photon still at the input wavelength; spectral
    // selection separates it exactly.
    let vac_flag = StateVector::vacuum(FockRegister::dual_pol(&[modes.flag.as_str()], cutoff)?);
    let no_split = split_state.project(&modes.flag, &vac_flag)?;
    let conditional = match no_split.state {
        Some(state) => {
            let vac_sig =
                StateVector::vacuum(FockRegister::dual_pol(&[modes.signal.as_str()], cutoff)?);
            let inner = state.project(&modes.signal, &vac_sig)?;
            inner.state
        }
        None => None,
    };
    outcomes.push(HeraldOutcome {
        heralded: false,
        flag_result: FlagResult::NoSplit,
        conditional_state: conditional,
        probability: no_split.probability,
    });
    Ok(outcomes)
}

/// Result of two-sided precertification for one pair of flag outcomes.
#[derive(Debug, Clone)]
pub struct PairHeraldOutcome {
    pub flag_a: FlagResult,
    pub flag_b: FlagResult,
    pub probability: f64,
    /// Heralded state on the signal modes (1, 3), before feed-forward.
    pub conditional_state: Option<StateVector>,
    /// Heralded state after the exact feed-forward phase correction that
    /// undoes the pi- sign flips.
    pub corrected_state: Option<StateVector>,
}

/// Split both photons of an entangled pair and herald on both flags.
///
/// `input` must be a normalized two-photon polarization state on modes
/// (A, B). Returns the four flag branches; each occurs with probability
/// `sin^2(g_A) sin^2(g_B) / 4` and the (pi+, pi+) branch reproduces the input
/// state on modes (1, 3) exactly.
pub fn precertify_pair(
    input: &StateVector,
    config_a: &SplitterConfig,
    config_b: &SplitterConfig,
) -> Result<Vec<PairHeraldOutcome>> {
    if config_a.cutoff != config_b.cutoff {
        return Err(Error::InvalidConfig("cutoff mismatch between stages".into()));
    }
    let cutoff = config_a.cutoff;
    input.check_normalized()?;
    let expected = FockRegister::dual_pol(&["A", "B"], cutoff)?;
    if input.register() != &expected {
        return Err(Error::InvalidConfig(
            "pair input must live on dual-polarization modes A, B".into(),
        ));
    }
    let modes_a = SplitterModes::side_a();
    let modes_b = SplitterModes::side_b();

    let vac = |ids: &[&str]| -> Result<StateVector> {
        Ok(StateVector::vacuum(FockRegister::dual_pol(ids, cutoff)?))
    };
    let full = input
        .tensor(&vac(&["1", "2"])?)?
        .tensor(&vac(&["3", "4"])?)?;

    let u_a = splitter_unitary(&modes_a, config_a.gain(), cutoff)?;
    let u_b = splitter_unitary(&modes_b, config_b.gain(), cutoff)?;
    let after_a = full.apply_on_modes(
        &u_a,
        &[modes_a.input.clone(), modes_a.signal.clone(), modes_a.flag.clone()],
    )?;
    let after_b = after_a.apply_on_modes(
        &u_b,
        &[modes_b.input.clone(), modes_b.signal.clone(), modes_b.flag.clone()],
    )?;

    let mut outcomes = Vec::with_capacity(4);
    for (flag_a, basis_a) in [
        (FlagResult::PiPlus, config_a.flag_basis.plus),
        (FlagResult::PiMinus, config_a.flag_basis.minus),
    ] {
        let ket_a = flag_ket(basis_a, &modes_a.flag, cutoff)?;
        let proj_a = after_b.project(&modes_a.flag, &ket_a)?;
        for (flag_b, basis_b) in [
            (FlagResult::PiPlus, config_b.flag_basis.plus),
            (FlagResult::PiMinus, config_b.flag_basis.minus),
        ] {
            let (probability, conditional) = match &proj_a.state {
                None => (0.0, None),
                Some(state_a) => {
                    let ket_b = flag_ket(basis_b, &modes_b.flag, cutoff)?;
                    let proj_b = state_a.project(&modes_b.flag, &ket_b)?;
                    let p = proj_a.probability * proj_b.probability;
                    let cond = match proj_b.state {
                        None => None,
                        Some(state) => {
                            // Strip the input modes, exactly in vacuum here.
                            let s = state.project(&ModeId::new("A"), &vac(&["A"])?)?;
                            match s.state {
                                None => None,
                                Some(s) => s.project(&ModeId::new("B"), &vac(&["B"])?)?.state,
                            }
                        }
                    };
                    (p, cond)
                }
            };
            let corrected = conditional.as_ref().map(|state| {
                let mut corrected = state.clone();
                if flag_a == FlagResult::PiMinus {
                    corrected = phase_flip(&corrected, &ModeId::new("1"));
                }
                if flag_b == FlagResult::PiMinus {
                    corrected = phase_flip(&corrected, &ModeId::new("3"));
                }
                corrected
            });
            outcomes.push(PairHeraldOutcome {
                flag_a,
                flag_b,
                probability,
                conditional_state: conditional,
                corrected_state: corrected,
            });
        }
    }
    Ok(outcomes)
}

/// Sign flip of the V component of one mode (sigma_z feed-forward).
fn phase_flip(state: &StateVector, id: &ModeId) -> StateVector {
    let reg = state.register().clone();
    let pos = reg
        .position(&ModeLabel { id: id.clone(), pol: Polarization::V })
        .expect("mode present");
    let mut amps = state.amplitudes().clone();
    for i in 0..reg.dimension() {
        let occ = reg.decode(i);
        if occ[pos] % 2 == 1 {
            amps[i] = -amps[i];
        }
    }
    StateVector::from_amplitudes(reg, amps).expect("same register")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn qubit(alpha: f64, beta: f64) -> PolarizationQubit {
        PolarizationQubit::new(c(alpha, 0.0), c(beta, 0.0)).unwrap()
    }

    #[test]
    fn hamiltonian_matrix_element_is_i() {
        let modes = SplitterModes::side_a();
        let register = splitter_register(&modes, 1).unwrap();
        let h = build_hamiltonian(&register, &modes).unwrap();
        // <vac_A, 1_{1,H}, 1_{2,H}| H |1_{A,H}, vac, vac> = i
        let from = register.encode(&occ(&register, &[("A", Polarization::H)]));
        let to = register.encode(&occ(&register, &[("1", Polarization::H), ("2", Polarization::H)]));
        assert!((h[[to, from]] - c(0.0, 1.0)).norm() < 1e-13);
        assert!((h[[from, to]] - c(0.0, -1.0)).norm() < 1e-13);
    }

    #[test]
    fn hamiltonian_annihilates_vacuum() {
        let modes = SplitterModes::side_a();
        let register = splitter_register(&modes, 1).unwrap();
        let h = build_hamiltonian(&register, &modes).unwrap();
        let vac = StateVector::vacuum(register);
        let hv = h.dot(vac.amplitudes());
        assert!(hv.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn hamiltonian_does_not_mix_polarization_sectors() {
        let modes = SplitterModes::side_a();
        let register = splitter_register(&modes, 1).unwrap();
        let h = build_hamiltonian(&register, &modes).unwrap();
        // The interaction has no H/V mixing terms, so matrix elements between
        // different polarization sectors vanish identically.
        let from = register.encode(&occ(&register, &[("A", Polarization::H)]));
        let to = register.encode(&occ(&register, &[("1", Polarization::V), ("2", Polarization::V)]));
        assert!(h[[to, from]].norm() < 1e-15);
        let to_mixed =
            register.encode(&occ(&register, &[("1", Polarization::H), ("2", Polarization::V)]));
        assert!(h[[to_mixed, from]].norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_requires_all_modes() {
        let register = FockRegister::dual_pol(&["A", "1"], 1).unwrap();
        assert!(matches!(
            build_hamiltonian(&register, &SplitterModes::side_a()),
            Err(Error::UnknownMode(_))
        ));
    }

    fn occ(register: &FockRegister, ones: &[(&str, Polarization)]) -> Vec<u8> {
        let mut v = vec![0u8; register.len()];
        for (id, pol) in ones {
            let pos = register
                .position(&ModeLabel::new(*id, *pol))
                .expect("label");
            v[pos] = 1;
        }
        v
    }

    #[test]
    fn zero_gain_leaves_input_unchanged() {
        let config = SplitterConfig::new(0.0).unwrap();
        let q = qubit(0.6, 0.8);
        let out = split(&q, &config).unwrap();
        let expected = q
            .to_state("A", 1)
            .unwrap()
            .tensor(&StateVector::vacuum(FockRegister::dual_pol(&["1"], 1).unwrap()))
            .unwrap()
            .tensor(&StateVector::vacuum(FockRegister::dual_pol(&["2"], 1).unwrap()))
            .unwrap();
        assert!((out.fidelity(&expected).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_gain_splits_deterministically() {
        let config = SplitterConfig::new(std::f64::consts::FRAC_PI_2).unwrap();
        let q = qubit(0.6, 0.8);
        let out = split(&q, &config).unwrap();
        let register = out.register().clone();
        let hh = out.amplitude(&occ(&register, &[("1", Polarization::H), ("2", Polarization::H)]));
        let vv = out.amplitude(&occ(&register, &[("1", Polarization::V), ("2", Polarization::V)]));
        assert!((hh - c(0.6, 0.0)).norm() < 1e-12);
        assert!((vv - c(0.8, 0.0)).norm() < 1e-12);
        let stay = out.amplitude(&occ(&register, &[("A", Polarization::H)]));
        assert!(stay.norm() < 1e-12);
    }

    #[test]
    fn small_gain_splitting_weight_is_sin_squared() {
        let config = SplitterConfig::new(0.1).unwrap();
        let q = qubit(0.6, 0.8);
        let out = split(&q, &config).unwrap();
        let outcomes = herald(&out, &config).unwrap();
        let split_weight: f64 = outcomes
            .iter()
            .filter(|o| o.heralded)
            .map(|o| o.probability)
            .sum();
        assert!((split_weight - 0.1_f64.sin().powi(2)).abs() < 1e-12);
        assert!((split_weight - 9.9667e-3).abs() < 1e-6);
    }

    #[test]
    fn herald_probabilities_ignore_the_qubit() {
        let config = SplitterConfig::new(std::f64::consts::FRAC_PI_2).unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let q = PolarizationQubit::random(&mut rng);
            let out = split(&q, &config).unwrap();
            let outcomes = herald(&out, &config).unwrap();
            let p_plus = outcomes
                .iter()
                .find(|o| o.flag_result == FlagResult::PiPlus)
                .unwrap()
                .probability;
            assert!((p_plus - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn heralded_state_preserves_the_qubit() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let g: f64 = rng.gen_range(0.05..std::f64::consts::FRAC_PI_2);
            let config = SplitterConfig::new(g).unwrap();
            let q = PolarizationQubit::random(&mut rng);
            let out = split(&q, &config).unwrap();
            let outcomes = herald(&out, &config).unwrap();
            let plus = outcomes
                .iter()
                .find(|o| o.flag_result == FlagResult::PiPlus)
                .unwrap();
            assert!((plus.probability - g.sin().powi(2) / 2.0).abs() < 1e-10);
            let heralded = plus.conditional_state.as_ref().unwrap();
            let expected = q.to_state("1", 1).unwrap();
            assert!((heralded.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pi_minus_branch_carries_sign_flip() {
        let config = SplitterConfig::new(0.3).unwrap();
        let q = PolarizationQubit::new(
            c(1.0 / 2.0_f64.sqrt(), 0.0),
            c(0.0, 1.0 / 2.0_f64.sqrt()),
        )
        .unwrap();
        let out = split(&q, &config).unwrap();
        let outcomes = herald(&out, &config).unwrap();
        let minus = outcomes
            .iter()
            .find(|o| o.flag_result == FlagResult::PiMinus)
            .unwrap();
        assert!((minus.probability - 0.3_f64.sin().powi(2) / 2.0).abs() < 1e-12);
        let heralded = minus.conditional_state.as_ref().unwrap();
        let expected = single_photon_state("1", q.alpha(), -q.beta(), 1).unwrap();
        assert!((heralded.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
        // p(pi+) = sin^2(0.3)/2 = 0.0436663 for any input qubit
        let plus = outcomes
            .iter()
            .find(|o| o.flag_result == FlagResult::PiPlus)
            .unwrap();
        assert!((plus.probability - 0.3_f64.sin().powi(2) / 2.0).abs() < 1e-12);
        assert!((plus.probability - 0.0437).abs() < 1e-4);
    }

    #[test]
    fn branch_probabilities_are_complete() {
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..10 {
            let g: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            let config = SplitterConfig::new(g).unwrap();
            let q = PolarizationQubit::random(&mut rng);
            let out = split(&q, &config).unwrap();
            let total: f64 = herald(&out, &config)
                .unwrap()
                .iter()
                .map(|o| o.probability)
                .sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn vacuum_input_never_heralds() {
        let config = SplitterConfig::new(1.2).unwrap();
        let register = splitter_register(&SplitterModes::side_a(), 1).unwrap();
        let vac = StateVector::vacuum(register);
        let outcomes = herald(&vac, &config).unwrap();
        for o in &outcomes {
            match o.flag_result {
                FlagResult::PiPlus | FlagResult::PiMinus => {
                    assert!(o.probability < 1e-14);
                    assert!(o.conditional_state.is_none());
                }
                FlagResult::NoSplit => assert!((o.probability - 1.0).abs() < 1e-12),
                FlagResult::NoClick => unreachable!(),
            }
        }
    }

    #[test]
    fn gain_above_half_pi_is_rejected() {
        assert!(matches!(
            SplitterConfig::new(2.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn energy_conservation_is_a_warning_not_an_error() {
        let config = SplitterConfig::new(1.0).unwrap();
        // 716 nm -> 1310 + 1550 nm misses exact conservation by under 1%.
        let dev = config.energy_conservation_deviation();
        assert!(dev > 0.005 && dev < 0.02, "dev = {dev}");
        assert!(!config.energy_conservation_warns());
        let bad = SplitterConfig::new(1.0)
            .unwrap()
            .with_wavelengths(716.0, 1310.0, 5000.0)
            .unwrap();
        assert!(bad.energy_conservation_warns());
    }

    #[test]
    fn splitting_rotation_holds_at_higher_cutoff() {
        // Single-photon input stays in the two-dimensional invariant
        // subspace even when the register allows up to 3 photons per mode.
        let config = SplitterConfig::new(0.7).unwrap().with_cutoff(3).unwrap();
        let q = qubit(0.6, 0.8);
        let out = split(&q, &config).unwrap();
        let outcomes = herald(&out, &config).unwrap();
        let plus = outcomes
            .iter()
            .find(|o| o.flag_result == FlagResult::PiPlus)
            .unwrap();
        assert!((plus.probability - 0.7_f64.sin().powi(2) / 2.0).abs() < 1e-10);
        let expected = q.to_state("1", 3).unwrap();
        let heralded = plus.conditional_state.as_ref().unwrap();
        assert!((heralded.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pair_precertification_preserves_entangled_input() {
        let inv = 1.0 / 2.0_f64.sqrt();
        let input = crate::qstate::two_photon_state(
            "A",
            "B",
            [c(0.0, 0.0), c(inv, 0.0), c(inv, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let config = SplitterConfig::new(std::f64::consts::FRAC_PI_2).unwrap();
        let outcomes = precertify_pair(&input, &config, &config).unwrap();
        let pp = outcomes
            .iter()
            .find(|o| o.flag_a == FlagResult::PiPlus && o.flag_b == FlagResult::PiPlus)
            .unwrap();
        assert!((pp.probability - 0.25).abs() < 1e-10);
        let heralded = pp.conditional_state.as_ref().unwrap();
        let expected = crate::qstate::two_photon_state(
            "1",
            "3",
            [c(0.0, 0.0), c(inv, 0.0), c(inv, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        assert!((heralded.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pair_precertification_of_product_state() {
        let input = crate::qstate::two_photon_state(
            "A",
            "B",
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let config = SplitterConfig::new(std::f64::consts::FRAC_PI_2).unwrap();
        let outcomes = precertify_pair(&input, &config, &config).unwrap();
        let pp = outcomes
            .iter()
            .find(|o| o.flag_a == FlagResult::PiPlus && o.flag_b == FlagResult::PiPlus)
            .unwrap();
        let expected = crate::qstate::two_photon_state(
            "1",
            "3",
            [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let heralded = pp.conditional_state.as_ref().unwrap();
        assert!((heralded.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pair_feed_forward_corrects_pi_minus_branches() {
        let theta = 0.2_f64;
        let input = crate::qstate::two_photon_state(
            "A",
            "B",
            [c(0.0, 0.0), c(theta.cos(), 0.0), c(theta.sin(), 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let ga = SplitterConfig::new(1.1).unwrap();
        let gb = SplitterConfig::new(0.8).unwrap();
        let outcomes = precertify_pair(&input, &ga, &gb).unwrap();
        let expected = crate::qstate::two_photon_state(
            "1",
            "3",
            [c(0.0, 0.0), c(theta.cos(), 0.0), c(theta.sin(), 0.0), c(0.0, 0.0)],
            1,
        )
        .unwrap();
        let joint = 1.1_f64.sin().powi(2) * 0.8_f64.sin().powi(2) / 4.0;
        for o in &outcomes {
            assert!((o.probability - joint).abs() < 1e-10);
            let corrected = o.corrected_state.as_ref().unwrap();
            assert!((corrected.fidelity(&expected).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}
