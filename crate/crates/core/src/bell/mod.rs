//! Bell correlations with inefficient detectors and critical
//! detection-efficiency analysis.
//!
//! Measurements are linear polarization analyzers: the analyzer at angle phi
//! has "+" projector onto `cos phi |H> + sin phi |V>` and "-" onto the
//! orthogonal ket at `phi + pi/2`. Each side clicks independently with
//! probability `eta`, otherwise the outcome is "no click".
//!
//! Two oracles decide nonlocality of a behavior and must agree: membership
//! in the 81-vertex local polytope (linear programming, [`polytope`]), and
//! the maximum binned CHSH value over all liftings of the CHSH facets —
//! every per-setting assignment of the no-click outcome to + or - and all
//! eight sign patterns. Plain minus-binning alone is not equivalent: for
//! states with biased marginals the optimal binning direction flips, which
//! the lifted maximum (and the LP) capture.

pub mod polytope;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{colored_noise_state, ColoredNoiseParams};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::qstate::{polarization_block, DensityMatrix, ModeId};
use crate::tolerances::{CHSH_VIOLATION_MARGIN, ETA_BISECTION_TOL, NORM_TOL};

pub use polytope::{lhv_membership, LhvMembership};

/// Linear-polarization analyzer angle, normalized to `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    angle: f64,
}

impl MeasurementSetting {
    pub fn new(angle: f64) -> Self {
        let pi = std::f64::consts::PI;
        let mut a = angle % pi;
        if a < 0.0 {
            a += pi;
        }
        MeasurementSetting { angle: a }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// (cos, sin) components of the "+" analyzer ket; the "-" ket sits at
    /// `angle + pi/2`.
    pub fn plus_ket(&self) -> (f64, f64) {
        (self.angle.cos(), self.angle.sin())
    }
}

/// Measurement outcome of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
    NoClick,
}

impl Outcome {
    pub fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
            Outcome::NoClick => 2,
        }
    }
}

/// How the no-click outcome enters a CHSH statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoClickPolicy {
    /// Bin no-clicks into the "-" outcome (full-ensemble statistic).
    BinToMinus,
    /// Keep three outcomes; CHSH statistics then post-select on clicks
    /// (fair-sampling value).
    KeepThreeOutcome,
}

/// Two settings per side plus a symmetric detection efficiency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BellScenario {
    pub settings_a: [MeasurementSetting; 2],
    pub settings_b: [MeasurementSetting; 2],
    pub eta: f64,
    pub noclick_policy: NoClickPolicy,
}

impl BellScenario {
    pub fn new(
        settings_a: [MeasurementSetting; 2],
        settings_b: [MeasurementSetting; 2],
        eta: f64,
        noclick_policy: NoClickPolicy,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidConfig(format!("eta = {eta} outside [0, 1]")));
        }
        Ok(BellScenario { settings_a, settings_b, eta, noclick_policy })
    }

    /// Angles maximizing CHSH for the maximally entangled heralded state
    /// `(|HV> + |VH>)/sqrt(2)` in this analyzer convention.
    pub fn chsh_optimal(eta: f64) -> Result<Self> {
        let pi = std::f64::consts::PI;
        BellScenario::new(
            [MeasurementSetting::new(0.0), MeasurementSetting::new(pi / 4.0)],
            [
                MeasurementSetting::new(3.0 * pi / 8.0),
                MeasurementSetting::new(5.0 * pi / 8.0),
            ],
            eta,
            NoClickPolicy::BinToMinus,
        )
    }
}

/// Conditional outcome probabilities `p(a, b | x, y)` with an explicit
/// no-click outcome.
#[derive(Debug, Clone)]
pub struct BehaviorTable {
    p: [[[[f64; 3]; 3]; 2]; 2],
}

impl BehaviorTable {
    pub fn from_raw(p: [[[[f64; 3]; 3]; 2]; 2]) -> Self {
        BehaviorTable { p }
    }

    pub fn raw(&self) -> &[[[[f64; 3]; 3]; 2]; 2] {
        &self.p
    }

    pub fn probability(&self, x: usize, y: usize, a: Outcome, b: Outcome) -> f64 {
        self.p[x][y][a.index()][b.index()]
    }

    pub fn block_sum(&self, x: usize, y: usize) -> f64 {
        self.p[x][y].iter().flatten().sum()
    }

    pub fn marginal_a(&self, x: usize, y: usize, a: usize) -> f64 {
        self.p[x][y][a].iter().sum()
    }

    pub fn marginal_b(&self, x: usize, y: usize, b: usize) -> f64 {
        (0..3).map(|a| self.p[x][y][a][b]).sum()
    }

    /// Largest violation of the no-signaling conditions across marginals.
    pub fn no_signaling_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for x in 0..2 {
            for a in 0..3 {
                dev = dev.max((self.marginal_a(x, 0, a) - self.marginal_a(x, 1, a)).abs());
            }
        }
        for y in 0..2 {
            for b in 0..3 {
                dev = dev.max((self.marginal_b(0, y, b) - self.marginal_b(1, y, b)).abs());
            }
        }
        dev
    }

    /// Nonnegative entries, unit block sums, and no-signaling within 1e-10.
    pub fn validate(&self) -> Result<()> {
        for x in 0..2 {
            for y in 0..2 {
                if (self.block_sum(x, y) - 1.0).abs() > NORM_TOL {
                    return Err(Error::NotAState(format!(
                        "block ({x},{y}) sums to {}",
                        self.block_sum(x, y)
                    )));
                }
                for a in 0..3 {
                    for b in 0..3 {
                        if self.p[x][y][a][b] < -NORM_TOL {
                            return Err(Error::NotAState("negative probability".into()));
                        }
                    }
                }
            }
        }
        let dev = self.no_signaling_deviation();
        if dev > NORM_TOL {
            return Err(Error::NotAState(format!("no-signaling violated by {dev:.3e}")));
        }
        Ok(())
    }
}

/// Click-click Born probabilities of a two-qubit state for fixed settings;
/// everything downstream (behaviors at any efficiency, CHSH values,
/// thresholds) derives from this table.
#[derive(Debug, Clone)]
pub struct BornTable {
    /// q[x][y][a][b] for a, b in {+, -}.
    q: [[[[f64; 2]; 2]; 2]; 2],
}

impl BornTable {
    /// Born probabilities of `rho` (a two-mode polarization state; the
    /// canonically first mode is Alice's).
    pub fn new(
        rho: &DensityMatrix,
        settings_a: &[MeasurementSetting; 2],
        settings_b: &[MeasurementSetting; 2],
    ) -> Result<Self> {
        let mut ids: Vec<ModeId> = Vec::new();
        for l in rho.register().labels() {
            if !ids.contains(&l.id) {
                ids.push(l.id.clone());
            }
        }
        if ids.len() != 2 {
            return Err(Error::NotAState(format!(
                "expected a two-mode state, found {} modes",
                ids.len()
            )));
        }
        let block = polarization_block(rho, ids[0].as_str(), ids[1].as_str())?;
        let mut q = [[[[0.0; 2]; 2]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let pa = analyzer_ket(&settings_a[x], a);
                        let pb = analyzer_ket(&settings_b[y], b);
                        // v = ka (x) kb over (HH, HV, VH, VV)
                        let v = [pa.0 * pb.0, pa.0 * pb.1, pa.1 * pb.0, pa.1 * pb.1];
                        let mut acc = 0.0;
                        for (i, vi) in v.iter().enumerate() {
                            for (j, vj) in v.iter().enumerate() {
                                acc += vi * (block[[i, j]].re) * vj;
                            }
                        }
                        q[x][y][a][b] = acc.max(0.0);
                    }
                }
            }
        }
        Ok(BornTable { q })
    }

    pub fn click_probabilities(&self, x: usize, y: usize) -> [[f64; 2]; 2] {
        self.q[x][y]
    }

    fn marginal_a(&self, x: usize, a: usize) -> f64 {
        self.q[x][0][a][0] + self.q[x][0][a][1]
    }

    fn marginal_b(&self, y: usize, b: usize) -> f64 {
        self.q[0][y][0][b] + self.q[0][y][1][b]
    }

    /// Behavior with symmetric one-sided click probability `eta`.
    pub fn behavior(&self, eta: f64) -> BehaviorTable {
        let mut p = [[[[0.0; 3]; 3]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                let ma = [
                    self.q[x][y][0][0] + self.q[x][y][0][1],
                    self.q[x][y][1][0] + self.q[x][y][1][1],
                ];
                let mb = [
                    self.q[x][y][0][0] + self.q[x][y][1][0],
                    self.q[x][y][0][1] + self.q[x][y][1][1],
                ];
                for a in 0..2 {
                    for b in 0..2 {
                        p[x][y][a][b] = eta * eta * self.q[x][y][a][b];
                    }
                    p[x][y][a][2] = eta * (1.0 - eta) * ma[a];
                }
                for b in 0..2 {
                    p[x][y][2][b] = (1.0 - eta) * eta * mb[b];
                }
                p[x][y][2][2] = (1.0 - eta) * (1.0 - eta);
            }
        }
        BehaviorTable { p }
    }

    /// Canonical quantum CHSH value `E00 + E01 + E10 - E11` at unit
    /// efficiency.
    pub fn chsh_quantum(&self) -> f64 {
        let e = |x: usize, y: usize| {
            self.q[x][y][0][0] + self.q[x][y][1][1] - self.q[x][y][0][1] - self.q[x][y][1][0]
        };
        e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1)
    }

    /// Closed-form minus-binned threshold of the canonical facet.
    ///
    /// The binned CHSH value is exactly quadratic in eta,
    /// `S(eta) = eta^2 S_Q + eta(1-eta) M + 2(1-eta)^2` with
    /// `M = -2(<A_0> + <B_0>)`, so the crossing `S(eta*) = 2` solves to
    /// `eta* = (4 - M)/(2 + S_Q - M)`. For `S_Q <= 2` the expression
    /// continues smoothly above 1, which gives the threshold optimizer a
    /// gradient everywhere instead of a no-violation plateau.
    pub fn closed_form_threshold(&self) -> f64 {
        let s_q = self.chsh_quantum();
        let mean_a0 = self.marginal_a(0, 0) - self.marginal_a(0, 1);
        let mean_b0 = self.marginal_b(0, 0) - self.marginal_b(0, 1);
        let m = -2.0 * (mean_a0 + mean_b0);
        let den = 2.0 + s_q - m;
        if den <= 1e-12 {
            return 2.0;
        }
        (4.0 - m) / den
    }
}

fn analyzer_ket(setting: &MeasurementSetting, outcome: usize) -> (f64, f64) {
    let phi = setting.angle() + if outcome == 1 { std::f64::consts::FRAC_PI_2 } else { 0.0 };
    (phi.cos(), phi.sin())
}

/// Behavior of a two-qubit state under a scenario: click-click entries carry
/// `eta^2` times the Born probabilities, single no-clicks `eta(1-eta)` times
/// the marginals, and double no-clicks `(1-eta)^2`.
pub fn behavior_from_state(rho: &DensityMatrix, scenario: &BellScenario) -> Result<BehaviorTable> {
    let born = BornTable::new(rho, &scenario.settings_a, &scenario.settings_b)?;
    Ok(born.behavior(scenario.eta))
}

fn correlators(behavior: &BehaviorTable, values: &[[f64; 3]; 2], values_b: &[[f64; 3]; 2]) -> [[f64; 2]; 2] {
    let mut e = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += values[x][a] * values_b[y][b] * behavior.raw()[x][y][a][b];
                }
            }
            e[x][y] = acc;
        }
    }
    e
}

fn facet_max(e: &[[f64; 2]; 2]) -> f64 {
    let total = e[0][0] + e[0][1] + e[1][0] + e[1][1];
    let mut best = f64::NEG_INFINITY;
    for i in 0..2 {
        for j in 0..2 {
            best = best.max((total - 2.0 * e[i][j]).abs());
        }
    }
    best
}

/// CHSH statistic `S = E(0,0) + E(0,1) + E(1,0) - E(1,1)`.
///
/// With [`NoClickPolicy::BinToMinus`] the no-click outcome counts as -1 and
/// the statistic covers the full ensemble; with
/// [`NoClickPolicy::KeepThreeOutcome`] the correlators post-select on
/// click-click events (fair-sampling value). `|S| <= 4` always.
pub fn chsh_value(behavior: &BehaviorTable, policy: NoClickPolicy) -> f64 {
    let e = match policy {
        NoClickPolicy::BinToMinus => {
            let v = [[1.0, -1.0, -1.0], [1.0, -1.0, -1.0]];
            correlators(behavior, &v, &v)
        }
        NoClickPolicy::KeepThreeOutcome => {
            let mut e = [[0.0; 2]; 2];
            for x in 0..2 {
                for y in 0..2 {
                    let p = &behavior.raw()[x][y];
                    let clicks = p[0][0] + p[0][1] + p[1][0] + p[1][1];
                    e[x][y] = if clicks > 0.0 {
                        (p[0][0] + p[1][1] - p[0][1] - p[1][0]) / clicks
                    } else {
                        0.0
                    };
                }
            }
            e
        }
    };
    e[0][0] + e[0][1] + e[1][0] - e[1][1]
}

/// Maximum binned CHSH value over all per-setting no-click assignments and
/// all eight sign patterns — the complete set of CHSH liftings for this
/// scenario. A behavior of detection type is outside the local polytope
/// exactly when this exceeds 2.
pub fn lifted_chsh_max(behavior: &BehaviorTable) -> f64 {
    const MAPS: [[f64; 3]; 2] = [[1.0, -1.0, -1.0], [1.0, -1.0, 1.0]];
    let mut best = f64::NEG_INFINITY;
    for mask in 0..16usize {
        let va = [MAPS[mask & 1], MAPS[(mask >> 1) & 1]];
        let vb = [MAPS[(mask >> 2) & 1], MAPS[(mask >> 3) & 1]];
        let e = correlators(behavior, &va, &vb);
        best = best.max(facet_max(&e));
    }
    best
}

fn is_nonlocal(behavior: &BehaviorTable) -> bool {
    lifted_chsh_max(behavior) > 2.0 + CHSH_VIOLATION_MARGIN
}

/// Critical detection efficiency of a state at fixed settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalEfficiency {
    /// Smallest symmetric efficiency at which the behavior leaves the local
    /// polytope.
    Threshold(f64),
    /// The state does not violate even at unit efficiency.
    NoViolation,
}

impl CriticalEfficiency {
    pub fn value(&self) -> Option<f64> {
        match self {
            CriticalEfficiency::Threshold(v) => Some(*v),
            CriticalEfficiency::NoViolation => None,
        }
    }
}

/// Bisection for the smallest eta whose behavior is nonlocal, to absolute
/// tolerance 1e-4. The nonlocality test is the lifted CHSH maximum, which
/// agrees with LP membership.
pub fn critical_efficiency(
    rho: &DensityMatrix,
    settings_a: &[MeasurementSetting; 2],
    settings_b: &[MeasurementSetting; 2],
) -> Result<CriticalEfficiency> {
    let born = BornTable::new(rho, settings_a, settings_b)?;
    Ok(critical_efficiency_from_born(&born))
}

pub fn critical_efficiency_from_born(born: &BornTable) -> CriticalEfficiency {
    if !is_nonlocal(&born.behavior(1.0)) {
        return CriticalEfficiency::NoViolation;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while hi - lo > ETA_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if is_nonlocal(&born.behavior(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    CriticalEfficiency::Threshold(hi)
}

/// One optimized point of the threshold curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub p: f64,
    /// `None` when no (theta, angles) in the search region violates.
    pub eta_star: Option<f64>,
    pub theta_opt: f64,
    pub settings_a: [MeasurementSetting; 2],
    pub settings_b: [MeasurementSetting; 2],
}

/// Search options for [`optimize_threshold`].
#[derive(Debug, Clone)]
pub struct ThresholdSearchOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Lower edge of the theta search window. The threshold decreases
    /// monotonically as theta shrinks and converges toward its theta -> 0
    /// limit, so the optimum sits on this edge; 0.01 keeps the violation
    /// magnitudes (of order `sin^2 2 theta`) well above the bisection
    /// resolution while the threshold already agrees with the limit to
    /// about 1e-3.
    pub theta_min: f64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for ThresholdSearchOptions {
    fn default() -> Self {
        ThresholdSearchOptions {
            restarts: 20,
            seed: 1,
            theta_min: 0.01,
            nelder_mead: NelderMeadOptions {
                max_iterations: 8000,
                x_tol: 1e-10,
                f_tol: 1e-13,
                initial_step: 0.05,
            },
        }
    }
}

const THETA_MAX: f64 = std::f64::consts::FRAC_PI_4;

fn threshold_objective(p: f64, theta_min: f64) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let theta = x[0];
        if !(theta_min..=THETA_MAX).contains(&theta) {
            // Smooth pull back into the window.
            let d = if theta < theta_min { theta_min - theta } else { theta - THETA_MAX };
            return 2.5 + d;
        }
        let rho = match colored_noise_state(&ColoredNoiseParams { theta, p }) {
            Ok(r) => r,
            Err(_) => return 3.0,
        };
        let sa = [MeasurementSetting::new(x[1]), MeasurementSetting::new(x[2])];
        let sb = [MeasurementSetting::new(x[3]), MeasurementSetting::new(x[4])];
        match BornTable::new(&rho, &sa, &sb) {
            Ok(born) => born.closed_form_threshold(),
            Err(_) => 3.0,
        }
    }
}

/// Structured starts: the quantum-CHSH-optimal angle family for moderate
/// theta and the collapsed small-theta family, on a theta grid.
fn threshold_seeds(p: f64, theta_min: f64) -> Vec<Vec<f64>> {
    let pi = std::f64::consts::PI;
    let mut thetas = vec![theta_min];
    for i in 0..9 {
        thetas.push(0.02 + (THETA_MAX - 0.02) * i as f64 / 8.0);
    }
    let mut seeds = Vec::new();
    for &theta in &thetas {
        let w = (1.0 - p).powi(2) * (2.0 * theta).sin();
        let t = w.atan();
        seeds.push(vec![theta, 0.0, pi / 4.0, (pi - t) / 2.0, (pi + t) / 2.0]);
        // Collapsed small-theta family at two offset scales.
        seeds.push(vec![theta, pi / 2.0, pi / 2.0 + 0.2, 0.0, 0.2]);
        seeds.push(vec![theta, pi / 2.0, pi / 2.0 - 0.2, 0.0, -0.2]);
        seeds.push(vec![theta, pi / 2.0, pi / 2.0 + 0.05, 0.0, 0.05]);
    }
    seeds
}

/// Minimize the critical efficiency over the state angle and the four
/// analyzer angles at fixed noise `p`, by grid-seeded Nelder-Mead restarts.
///
/// The returned `eta_star` is re-validated by the full lifted-CHSH bisection
/// at the optimizing arguments.
pub fn optimize_threshold(p: f64, opts: &ThresholdSearchOptions) -> Result<ThresholdPoint> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("p = {p} outside [0, 1]")));
    }
    let objective = threshold_objective(p, opts.theta_min);
    let seeds = threshold_seeds(p, opts.theta_min);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    use rand::Rng;

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts);
    for i in 0..opts.restarts {
        let mut s = seeds[i % seeds.len()].clone();
        if i >= seeds.len() {
            for v in s.iter_mut().skip(1) {
                *v += rng.gen_range(-0.15..0.15);
            }
        }
        starts.push(s);
    }

    use rayon::prelude::*;
    let results: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|s| {
            let r = nelder_mead(&objective, s, &opts.nelder_mead);
            (r.f_min, r.x)
        })
        .collect();
    let (mut best_f, mut best_x) = (f64::INFINITY, Vec::new());
    for (f, x) in results {
        if f < best_f {
            best_f = f;
            best_x = x;
        }
    }
    if best_x.is_empty() {
        return Err(Error::NonConvergence("threshold optimizer produced no result".into()));
    }

    let theta = best_x[0].clamp(opts.theta_min, THETA_MAX);
    let sa = [
        MeasurementSetting::new(best_x[1]),
        MeasurementSetting::new(best_x[2]),
    ];
    let sb = [
        MeasurementSetting::new(best_x[3]),
        MeasurementSetting::new(best_x[4]),
    ];
    let rho = colored_noise_state(&ColoredNoiseParams { theta, p })?;
    // Re-validate with the complete lifted-CHSH bisection; at the optimum the
    // canonical minus-binned facet is the binding lifting, so the two values
    // agree up to optimizer tolerance.
    let eta_star = match critical_efficiency(&rho, &sa, &sb)? {
        CriticalEfficiency::Threshold(v) => Some(v),
        CriticalEfficiency::NoViolation => None,
    };
    Ok(ThresholdPoint { p, eta_star, theta_opt: theta, settings_a: sa, settings_b: sb })
}

/// Like [`optimize_threshold`] but with the state angle held fixed; only the
/// four analyzer angles are optimized.
pub fn optimize_threshold_at_theta(
    theta: f64,
    p: f64,
    opts: &ThresholdSearchOptions,
) -> Result<ThresholdPoint> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("p = {p} outside [0, 1]")));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidConfig(format!("theta = {theta} outside [0, pi/2]")));
    }
    let rho = colored_noise_state(&ColoredNoiseParams { theta, p })?;
    let objective = |x: &[f64]| {
        let sa = [MeasurementSetting::new(x[0]), MeasurementSetting::new(x[1])];
        let sb = [MeasurementSetting::new(x[2]), MeasurementSetting::new(x[3])];
        match BornTable::new(&rho, &sa, &sb) {
            Ok(born) => born.closed_form_threshold(),
            Err(_) => 3.0,
        }
    };
    let pi = std::f64::consts::PI;
    let w = (1.0 - p).powi(2) * (2.0 * theta).sin();
    let t = w.atan();
    let seeds = [
        vec![0.0, pi / 4.0, (pi - t) / 2.0, (pi + t) / 2.0],
        vec![pi / 2.0, pi / 2.0 + 0.2, 0.0, 0.2],
        vec![pi / 2.0, pi / 2.0 - 0.2, 0.0, -0.2],
        vec![pi / 2.0, pi / 2.0 + 0.05, 0.0, 0.05],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    use rand::Rng;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..opts.restarts.max(seeds.len()) {
        let mut s = seeds[i % seeds.len()].clone();
        if i >= seeds.len() {
            for v in s.iter_mut() {
                *v += rng.gen_range(-0.15..0.15);
            }
        }
        let r = nelder_mead(&objective, &s, &opts.nelder_mead);
        if best.as_ref().map_or(true, |(f, _)| r.f_min < *f) {
            best = Some((r.f_min, r.x));
        }
    }
    let (_, x) = best.expect("at least one start");
    let sa = [MeasurementSetting::new(x[0]), MeasurementSetting::new(x[1])];
    let sb = [MeasurementSetting::new(x[2]), MeasurementSetting::new(x[3])];
    let eta_star = match critical_efficiency(&rho, &sa, &sb)? {
        CriticalEfficiency::Threshold(v) => Some(v),
        CriticalEfficiency::NoViolation => None,
    };
    Ok(ThresholdPoint { p, eta_star, theta_opt: theta, settings_a: sa, settings_b: sb })
}

/// Optimize the threshold for each `p`; the resulting curve must be monotone
/// nondecreasing within the optimizer reproducibility tolerance.
pub fn threshold_curve(p_values: &[f64], opts: &ThresholdSearchOptions) -> Result<Vec<ThresholdPoint>> {
    use rayon::prelude::*;
    let points: Result<Vec<ThresholdPoint>> = p_values
        .par_iter()
        .map(|&p| optimize_threshold(p, opts))
        .collect();
    let points = points?;
    for w in points.windows(2) {
        let lo = w[0].eta_star.unwrap_or(1.1);
        let hi = w[1].eta_star.unwrap_or(1.1);
        if hi < lo - crate::tolerances::OPTIMIZER_REPRODUCIBILITY_TOL {
            return Err(Error::NonConvergence(format!(
                "threshold curve not monotone: eta*({}) = {lo:.5} > eta*({}) = {hi:.5}",
                w[0].p, w[1].p
            )));
        }
    }
    Ok(points)
}

/// CSV rendering of a threshold curve (9 significant digits).
pub fn threshold_curve_csv(points: &[ThresholdPoint]) -> String {
    let mut out = String::from("p,eta_star,theta_opt,angle_a0,angle_a1,angle_b0,angle_b1\n");
    for pt in points {
        let eta = pt
            .eta_star
            .map(|v| format!("{v:.9}"))
            .unwrap_or_else(|| "nan".into());
        out.push_str(&format!(
            "{:.9},{},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            pt.p,
            eta,
            pt.theta_opt,
            pt.settings_a[0].angle(),
            pt.settings_a[1].angle(),
            pt.settings_b[0].angle(),
            pt.settings_b[1].angle(),
        ));
    }
    out
}

/// Configuration chosen for running the experiment at a fixed measurement
/// efficiency: state angle and settings maximizing the canonical
/// minus-binned CHSH value there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub theta: f64,
    pub settings_a: [MeasurementSetting; 2],
    pub settings_b: [MeasurementSetting; 2],
    /// Canonical binned CHSH value at the operating efficiency.
    pub s_binned: f64,
    /// Fair-sampling (quantum) CHSH value of the same configuration.
    pub s_quantum: f64,
    pub threshold: CriticalEfficiency,
}

/// Maximize the canonical minus-binned CHSH value at efficiency `eta` over
/// the colored-noise family at fixed `p`.
pub fn optimize_operating_point(eta: f64, p: f64) -> Result<OperatingPoint> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!("eta = {eta} outside [0, 1]")));
    }
    let pi = std::f64::consts::PI;
    let theta_lo = 0.01;
    let objective = move |x: &[f64]| {
        let theta = x[0];
        if !(theta_lo..=THETA_MAX).contains(&theta) {
            let d = if theta < theta_lo { theta_lo - theta } else { theta - THETA_MAX };
            return 10.0 + d;
        }
        let rho = match colored_noise_state(&ColoredNoiseParams { theta, p }) {
            Ok(r) => r,
            Err(_) => return 10.0,
        };
        let sa = [MeasurementSetting::new(x[1]), MeasurementSetting::new(x[2])];
        let sb = [MeasurementSetting::new(x[3]), MeasurementSetting::new(x[4])];
        match BornTable::new(&rho, &sa, &sb) {
            Ok(born) => -chsh_value(&born.behavior(eta), NoClickPolicy::BinToMinus),
            Err(_) => 10.0,
        }
    };
    let nm = NelderMeadOptions {
        max_iterations: 10_000,
        x_tol: 1e-10,
        f_tol: 1e-13,
        initial_step: 0.05,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..8 {
        let theta0 = 0.1 + (THETA_MAX - 0.1) * i as f64 / 7.0;
        let w = (1.0 - p).powi(2) * (2.0 * theta0).sin();
        let t = w.atan();
        let x0 = vec![theta0, 0.0, pi / 4.0, (pi - t) / 2.0, (pi + t) / 2.0];
        let r = nelder_mead(&objective, &x0, &nm);
        if best.as_ref().map_or(true, |(f, _)| r.f_min < *f) {
            best = Some((r.f_min, r.x));
        }
    }
    let (f_min, x) = best.expect("at least one start");
    let theta = x[0].clamp(theta_lo, THETA_MAX);
    let sa = [MeasurementSetting::new(x[1]), MeasurementSetting::new(x[2])];
    let sb = [MeasurementSetting::new(x[3]), MeasurementSetting::new(x[4])];
    let rho = colored_noise_state(&ColoredNoiseParams { theta, p })?;
    let born = BornTable::new(&rho, &sa, &sb)?;
    Ok(OperatingPoint {
        theta,
        settings_a: sa,
        settings_b: sb,
        s_binned: -f_min,
        s_quantum: chsh_value(&born.behavior(1.0), NoClickPolicy::BinToMinus),
        threshold: critical_efficiency_from_born(&born),
    })
}
