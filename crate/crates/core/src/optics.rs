//! Channel and detector models, the heralded-rate calculator, and the
//! colored-noise state family.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dagger, CMat};
use crate::qstate::{DensityMatrix, FockRegister, ModeId, ModeLabel, Polarization};

/// TES efficiency used by presets; the quoted range is 0.97–0.99.
pub const TES_EFFICIENCY: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorKind {
    /// Nanowire superconducting single-photon detector (flag detection).
    Sspd,
    /// Transition-edge sensor (Bell measurement outcomes).
    Tes,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub efficiency: f64,
    pub jitter_s: f64,
    pub resolution_time_s: f64,
    pub recovery_time_s: f64,
    pub dark_count_rate_hz: f64,
}

impl DetectorModel {
    /// Flag detector: fast and low-noise, moderate overall efficiency once
    /// spectral and spatial filtering is included.
    pub fn sspd() -> Self {
        DetectorModel {
            kind: DetectorKind::Sspd,
            efficiency: 0.1,
            jitter_s: 100e-12,
            resolution_time_s: 100e-12,
            recovery_time_s: 10e-9,
            dark_count_rate_hz: 10.0,
        }
    }

    /// Measurement detector: near-unit efficiency, 100 ns resolution.
    pub fn tes() -> Self {
        DetectorModel {
            kind: DetectorKind::Tes,
            efficiency: TES_EFFICIENCY,
            jitter_s: 100e-9,
            resolution_time_s: 100e-9,
            recovery_time_s: 0.5e-6,
            dark_count_rate_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.efficiency,
            self.jitter_s,
            self.resolution_time_s,
            self.recovery_time_s,
            self.dark_count_rate_hz,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) || self.efficiency > 1.0 {
            return Err(Error::InvalidConfig("detector parameters out of range".into()));
        }
        Ok(())
    }
}

/// Parameters of the heralded-rate model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateParams {
    /// Entangled-source pair rate (1/s).
    pub r_pairs_hz: f64,
    /// Splitting probability `mu_C = sin^2 g`.
    pub mu_c: f64,
    /// Source-to-fiber coupling.
    pub eta_c: f64,
    /// Transmittance up to the splitting crystal.
    pub eta_t: f64,
    /// Overall flag detection efficiency.
    pub eta_sspd: f64,
    /// Coupling of the certified photon into the measurement fiber.
    pub eta_k: f64,
    /// Measurement detector efficiency.
    pub eta_tes: f64,
}

impl RateParams {
    /// Feasibility-estimate values: R = 2e7/s, eta_c * eta_t = 0.3,
    /// eta_sspd = 0.1, eta_k * eta_tes = 0.8.
    pub fn paper_preset(mu_c: f64) -> Self {
        RateParams {
            r_pairs_hz: 2e7,
            mu_c,
            eta_c: 1.0,
            eta_t: 0.3,
            eta_sspd: 0.1,
            eta_k: 0.8 / TES_EFFICIENCY,
            eta_tes: TES_EFFICIENCY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_pairs_hz > 0.0) || !self.r_pairs_hz.is_finite() {
            return Err(Error::InvalidConfig("pair rate must be positive".into()));
        }
        for (name, v) in [
            ("mu_c", self.mu_c),
            ("eta_c", self.eta_c),
            ("eta_t", self.eta_t),
            ("eta_sspd", self.eta_sspd),
            ("eta_k", self.eta_k),
            ("eta_tes", self.eta_tes),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Per-pair probability that one side survives, splits, and flags.
    pub fn herald_probability_per_side(&self) -> f64 {
        self.eta_c * self.eta_t * self.mu_c * self.eta_sspd
    }

    /// Combined efficiency of the final measurement stage.
    pub fn eta_measure(&self) -> f64 {
        self.eta_k * self.eta_tes
    }
}

/// Output of the heralded-rate model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateReport {
    /// Two-sided heralding rate `R mu_C^2 eta_c^2 eta_t^2 eta_SSPD^2`.
    pub heralded_hz: f64,
    /// Detected coincidence rate `R_exp (eta_k eta_TES)^2`.
    pub detected_hz: f64,
}

/// Rate at which both photons of a pair are heralded, and the final detected
/// coincidence rate behind the measurement stage.
pub fn heralded_rate(params: &RateParams) -> Result<RateReport> {
    params.validate()?;
    let per_side = params.eta_c * params.eta_t * params.mu_c * params.eta_sspd;
    let heralded = params.r_pairs_hz * per_side * per_side;
    Ok(RateReport {
        heralded_hz: heralded,
        detected_hz: heralded * params.eta_measure().powi(2),
    })
}

/// Nonmaximally entangled state angle and the colored-noise distinguishability.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ColoredNoiseParams {
    /// State angle: the noiseless state is `cos θ |HV> + sin θ |VH>`.
    pub theta: f64,
    /// Distinguishability between the H and V pair emissions.
    pub p: f64,
}

impl ColoredNoiseParams {
    pub fn new(theta: f64, p: f64) -> Result<Self> {
        let params = ColoredNoiseParams { theta, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.theta) {
            return Err(Error::InvalidConfig(format!(
                "theta = {} outside [0, pi/2]",
                self.theta
            )));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidConfig(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Heralded two-photon state with colored noise, on signal modes (1, 3):
///
/// ```text
/// C^2 |HV><HV| + (1-p)^2 C S (|HV><VH| + |VH><HV|) + S^2 |VH><VH|
/// ```
///
/// with `C = cos θ`, `S = sin θ`; the first factor is the photon in mode 1.
/// The square on `(1-p)` reflects the two independent splitting stages.
pub fn colored_noise_state(params: &ColoredNoiseParams) -> Result<DensityMatrix> {
    params.validate()?;
    let c = params.theta.cos();
    let s = params.theta.sin();
    let off = (1.0 - params.p).powi(2) * c * s;
    let register = FockRegister::dual_pol(&["1", "3"], 1)?;
    // Canonical label order (1,H),(1,V),(3,H),(3,V):
    // |HV> = H photon in mode 1, V photon in mode 3.
    let hv = register.encode(&[1, 0, 0, 1]);
    let vh = register.encode(&[0, 1, 1, 0]);
    let dim = register.dimension();
    let mut m: CMat = Array2::zeros((dim, dim));
    m[[hv, hv]] = Complex64::new(c * c, 0.0);
    m[[vh, vh]] = Complex64::new(s * s, 0.0);
    m[[hv, vh]] = Complex64::new(off, 0.0);
    m[[vh, hv]] = Complex64::new(off, 0.0);
    DensityMatrix::from_matrix(register, m)
}

/// Photon-loss channel of transmittance `eta_t` on both polarizations of one
/// mode: each photon independently survives with probability `eta_t`.
pub fn loss_channel(rho: &DensityMatrix, mode_id: &ModeId, transmittance: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&transmittance) {
        return Err(Error::InvalidConfig(format!(
            "transmittance = {transmittance} outside [0, 1]"
        )));
    }
    if !rho.register().contains_id(mode_id) {
        return Err(Error::UnknownMode(mode_id.to_string()));
    }
    let mut out = rho.clone();
    for pol in [Polarization::H, Polarization::V] {
        let label = ModeLabel { id: mode_id.clone(), pol };
        if out.register().contains_label(&label) {
            out = apply_loss_on_label(&out, &label, transmittance)?;
        }
    }
    Ok(out)
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn apply_loss_on_label(
    rho: &DensityMatrix,
    label: &ModeLabel,
    eta: f64,
) -> Result<DensityMatrix> {
    let register = rho.register().clone();
    let cutoff = register.cutoff() as u32;
    let dim = register.dimension();
    // Kraus operators K_k (lose k photons) acting on this label's digit:
    // K_k |n> = sqrt(binom(n,k) eta^(n-k) (1-eta)^k) |n-k>
    let mut total: CMat = Array2::zeros((dim, dim));
    for k in 0..=cutoff {
        let mut kraus: CMat = Array2::zeros((dim, dim));
        let pos = register.position(label).expect("label checked");
        for i in 0..dim {
            let occ = register.decode(i);
            let n = occ[pos] as u32;
            if n < k {
                continue;
            }
            let amp = (binomial(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32))
                .sqrt();
            let mut lower = occ.clone();
            lower[pos] = (n - k) as u8;
            kraus[[register.encode(&lower), i]] = Complex64::new(amp, 0.0);
        }
        total = total + kraus.dot(rho.matrix()).dot(&dagger(&kraus));
    }
    DensityMatrix::from_matrix(register, total)
}

/// Bernoulli detection decision: a present photon clicks with the detector
/// efficiency, and a dark count fires with probability
/// `dark_count_rate * window` within the coincidence window.
pub fn detect(
    photon_present: bool,
    detector: &DetectorModel,
    coincidence_window_s: f64,
    rng: &mut impl Rng,
) -> bool {
    let clicked = photon_present && rng.gen_bool(detector.efficiency);
    if clicked {
        return true;
    }
    let p_dark = (detector.dark_count_rate_hz * coincidence_window_s).clamp(0.0, 1.0);
    p_dark > 0.0 && rng.gen_bool(p_dark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::single_photon_state;
    use num_complex::Complex64 as C;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn rate_is_zero_for_zero_rate_source() {
        let mut p = RateParams::paper_preset(1e-3);
        p.r_pairs_hz = f64::MIN_POSITIVE;
        let report = heralded_rate(&p).unwrap();
        assert!(report.heralded_hz < 1e-300);
    }

    #[test]
    fn paper_preset_reproduces_printed_envelope() {
        let hi = heralded_rate(&RateParams::paper_preset(1e-3)).unwrap();
        assert!((hi.heralded_hz - 1.8e-2).abs() < 1e-12);
        let lo = heralded_rate(&RateParams::paper_preset(2e-4)).unwrap();
        assert!((lo.heralded_hz - 7.2e-4).abs() < 1e-12);
        // Detected coincidences sit behind (eta_k eta_tes)^2 = 0.64.
        assert!((hi.detected_hz / hi.heralded_hz - 0.64).abs() < 1e-12);
    }

    #[test]
    fn rate_is_quadratic_in_each_efficiency() {
        let base = RateParams::paper_preset(4e-4);
        let r0 = heralded_rate(&base).unwrap().heralded_hz;
        for field in 0..4 {
            let mut p = base;
            match field {
                0 => p.mu_c *= 2.0,
                1 => p.eta_c = (p.eta_c * 2.0).min(1.0),
                2 => p.eta_t *= 2.0,
                _ => p.eta_sspd *= 2.0,
            }
            if field == 1 {
                continue; // eta_c already saturated at 1 in the preset
            }
            let r1 = heralded_rate(&p).unwrap().heralded_hz;
            assert!((r1 / r0 - 4.0).abs() < 1e-9, "field {field}");
        }
    }

    #[test]
    fn colored_noise_limits() {
        // p = 0: pure nonmaximally entangled state (rank 1)
        let pure = colored_noise_state(&ColoredNoiseParams::new(0.7, 0.0).unwrap()).unwrap();
        let evs = pure.eigenvalues();
        assert!((evs[evs.len() - 1] - 1.0).abs() < 1e-12);
        assert!(evs[evs.len() - 2].abs() < 1e-12);
        // p = 1: classical mixture, zero off-diagonals
        let mixed = colored_noise_state(&ColoredNoiseParams::new(0.7, 1.0).unwrap()).unwrap();
        let block = crate::qstate::polarization_block(&mixed, "1", "3").unwrap();
        assert!(block[[1, 2]].norm() < 1e-15);
        assert!((block[[1, 1]].re - 0.7_f64.cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn colored_noise_off_diagonal_value() {
        let rho = colored_noise_state(
            &ColoredNoiseParams::new(std::f64::consts::FRAC_PI_4, 0.02).unwrap(),
        )
        .unwrap();
        let block = crate::qstate::polarization_block(&rho, "1", "3").unwrap();
        assert!((block[[1, 2]].re - 0.4802).abs() < 1e-12);
    }

    #[test]
    fn colored_noise_matches_outer_product_construction() {
        // Independent route: build the same matrix from projector algebra on
        // explicitly constructed two-photon states.
        let params = ColoredNoiseParams::new(0.43, 0.07).unwrap();
        let direct = colored_noise_state(&params).unwrap();
        let z = C::new(0.0, 0.0);
        let one = C::new(1.0, 0.0);
        let hv = crate::qstate::two_photon_state("1", "3", [z, one, z, z], 1).unwrap();
        let vh = crate::qstate::two_photon_state("1", "3", [z, z, one, z], 1).unwrap();
        let (c, s) = (params.theta.cos(), params.theta.sin());
        let off = (1.0 - params.p).powi(2) * c * s;
        let dim = direct.register().dimension();
        let mut m: CMat = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[[i, j]] = hv.amplitudes()[i] * hv.amplitudes()[j].conj() * c * c
                    + vh.amplitudes()[i] * vh.amplitudes()[j].conj() * s * s
                    + (hv.amplitudes()[i] * vh.amplitudes()[j].conj()
                        + vh.amplitudes()[i] * hv.amplitudes()[j].conj())
                        * off;
            }
        }
        let rebuilt = DensityMatrix::from_matrix(direct.register().clone(), m).unwrap();
        assert!(direct.distance(&rebuilt).unwrap() < 1e-15);
    }

    #[test]
    fn colored_noise_is_physical_on_a_grid() {
        for i in 0..50 {
            for j in 0..50 {
                let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 49.0;
                let p = j as f64 / 49.0;
                let rho =
                    colored_noise_state(&ColoredNoiseParams::new(theta, p).unwrap()).unwrap();
                let tr = rho.trace();
                assert!((tr.re - 1.0).abs() < 1e-12);
                let min = rho.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(min > -1e-12, "theta={theta} p={p} min={min}");
            }
        }
    }

    #[test]
    fn loss_channel_identity_and_full_loss() {
        let psi = single_photon_state("A", C::new(0.6, 0.0), C::new(0.0, 0.8), 1).unwrap();
        let rho = psi.to_density();
        let id = ModeId::new("A");
        let same = loss_channel(&rho, &id, 1.0).unwrap();
        assert!(same.distance(&rho).unwrap() < 1e-15);

        let lost = loss_channel(&rho, &id, 0.0).unwrap();
        let vac = crate::qstate::StateVector::vacuum(rho.register().clone()).to_density();
        assert!(lost.distance(&vac).unwrap() < 1e-15);
    }

    #[test]
    fn loss_channels_compose_multiplicatively() {
        let psi = single_photon_state("A", C::new(0.28, 0.96), C::new(0.0, 0.0), 2).unwrap();
        let rho = psi.to_density();
        let id = ModeId::new("A");
        let seq = loss_channel(&loss_channel(&rho, &id, 0.7).unwrap(), &id, 0.4).unwrap();
        let once = loss_channel(&rho, &id, 0.28).unwrap();
        assert!(seq.distance(&once).unwrap() < 1e-12);
    }

    #[test]
    fn loss_preserves_trace() {
        let psi = single_photon_state("A", C::new(0.6, 0.0), C::new(0.8, 0.0), 1).unwrap();
        let rho = psi.to_density();
        let out = loss_channel(&rho, &ModeId::new("A"), 0.37).unwrap();
        assert!((out.trace().re - 1.0).abs() < 1e-12);
        out.check_physical().unwrap();
    }

    #[test]
    fn detect_edge_cases() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut det = DetectorModel::tes();
        det.efficiency = 1.0;
        det.dark_count_rate_hz = 0.0;
        assert!(detect(true, &det, 10e-9, &mut rng));
        assert!(!detect(false, &det, 10e-9, &mut rng));
        det.efficiency = 0.0;
        assert!(!detect(true, &det, 10e-9, &mut rng));
        det.dark_count_rate_hz = 1e12; // dark count certain within the window
        assert!(detect(false, &det, 10e-3, &mut rng));
    }

    #[test]
    fn detect_click_fraction_matches_efficiency() {
        let mut rng = StdRng::seed_from_u64(77);
        let mut det = DetectorModel::tes();
        det.efficiency = 0.8;
        det.dark_count_rate_hz = 0.0;
        let n = 1_000_000u32;
        let clicks = (0..n).filter(|_| detect(true, &det, 10e-9, &mut rng)).count() as f64;
        let p_hat = clicks / n as f64;
        let sigma = (0.8 * 0.2 / n as f64).sqrt();
        assert!((p_hat - 0.8).abs() < 3.0 * sigma, "p_hat = {p_hat}");
    }
}
