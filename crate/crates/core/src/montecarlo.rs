//! Event-level stochastic simulation of the full experiment.
//!
//! Each emitted pair is one trial: both photons pass their channels, split
//! with probability `sin^2 g`, flag detectors fire, and only trials with
//! both flags clicked enter the Bell statistics. Settings are drawn after
//! heralding, mirroring the temporal order the space-time analysis requires;
//! the distributions are identical either way but the audit trail stays
//! honest.
//!
//! Reproducibility: one root seed expands into one counter-based stream per
//! trial (ChaCha stream = trial index), so results are bit-identical for a
//! fixed config regardless of how trials are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{BellScenario, BornTable, NoClickPolicy, Outcome};
use crate::error::{Error, Result};
use crate::optics::{colored_noise_state, ColoredNoiseParams, DetectorModel, RateParams};
use crate::precert::FlagResult;

/// What to do with pi- heralds: discard them (halving the usable rate per
/// side) or keep them with the exact feed-forward phase correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PiMinusPolicy {
    Discard,
    FeedForward,
}

/// Optional dark-count model; analytic paths keep dark counts at zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DarkCounts {
    pub sspd: DetectorModel,
    pub tes: DetectorModel,
    pub coincidence_window_s: f64,
}

impl DarkCounts {
    pub fn default_model() -> Self {
        DarkCounts {
            sspd: DetectorModel::sspd(),
            tes: DetectorModel::tes(),
            coincidence_window_s: 10e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub n_pairs: u64,
    pub rate: RateParams,
    /// Heralded-state family (after feed-forward both flag branches carry
    /// the same state).
    pub state: ColoredNoiseParams,
    /// Measurement settings; `scenario.eta` must equal the measurement-stage
    /// efficiency `eta_k * eta_tes` so analytic cross-checks are
    /// well-defined.
    pub scenario: BellScenario,
    pub gain_g: f64,
    pub pi_minus_policy: PiMinusPolicy,
    #[serde(default)]
    pub dark: Option<DarkCounts>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 {
            return Err(Error::InvalidConfig("n_pairs must be positive".into()));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.gain_g) {
            return Err(Error::InvalidConfig(format!(
                "gain g = {} outside [0, pi/2]",
                self.gain_g
            )));
        }
        self.rate.validate()?;
        self.state.validate()?;
        if (self.scenario.eta - self.rate.eta_measure()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "scenario eta {} != eta_k * eta_tes = {}",
                self.scenario.eta,
                self.rate.eta_measure()
            )));
        }
        Ok(())
    }

    /// Gain synced to the rate model's `mu_C`.
    pub fn gain_from_mu_c(mu_c: f64) -> f64 {
        mu_c.sqrt().asin()
    }
}

/// Per-side record of one trial.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SideRecord {
    pub survived: bool,
    pub split: bool,
    pub flag_click: bool,
    pub flag: FlagResult,
}

/// One emitted pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub t_s: f64,
    pub side_a: SideRecord,
    pub side_b: SideRecord,
    pub heralded: bool,
    /// Settings and outcomes are only present on heralded trials.
    pub settings: Option<(u8, u8)>,
    pub outcomes: Option<(Outcome, Outcome)>,
}

impl Serialize for FlagResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = match self {
            FlagResult::PiPlus => "pi_plus",
            FlagResult::PiMinus => "pi_minus",
            FlagResult::NoClick => "no_click",
            FlagResult::NoSplit => "no_split",
        };
        s.serialize_str(v)
    }
}

impl<'de> Deserialize<'de> for FlagResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "pi_plus" => Ok(FlagResult::PiPlus),
            "pi_minus" => Ok(FlagResult::PiMinus),
            "no_click" => Ok(FlagResult::NoClick),
            "no_split" => Ok(FlagResult::NoSplit),
            other => Err(serde::de::Error::custom(format!("unknown flag result {other}"))),
        }
    }
}

/// Mean and standard error of a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub stderr: f64,
}

impl BinomialEstimate {
    fn from_counts(successes: u64, trials: u64) -> Self {
        let p_hat = if trials > 0 { successes as f64 / trials as f64 } else { f64::NAN };
        let stderr = if trials > 0 {
            (p_hat * (1.0 - p_hat) / trials as f64).sqrt()
        } else {
            f64::NAN
        };
        BinomialEstimate { successes, trials, p_hat, stderr }
    }

    /// Two-proportion z statistic.
    pub fn z_against(&self, other: &BinomialEstimate) -> f64 {
        (self.p_hat - other.p_hat).abs() / (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Aggregated outcome of a run. All derived floats are functions of the
/// integer counts, so two runs with the same config are bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n_pairs: u64,
    pub n_heralded: u64,
    pub duration_s: f64,
    pub heralded_rate_hz: f64,
    pub conditional_tes_a: BinomialEstimate,
    pub conditional_tes_b: BinomialEstimate,
    /// counts[x][y][a][b] over heralded trials (outcome order +, -, no
    /// click).
    pub counts: [[[[u64; 3]; 3]; 2]; 2],
    pub setting_counts: [[u64; 2]; 2],
    pub chsh_binned: Estimate,
    pub chsh_fair_sampling: Estimate,
}

#[derive(Default, Clone)]
struct Accumulator {
    n_heralded: u64,
    counts: [[[[u64; 3]; 3]; 2]; 2],
    tes_clicks_a: u64,
    tes_clicks_b: u64,
}

impl Accumulator {
    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.n_heralded += other.n_heralded;
        self.tes_clicks_a += other.tes_clicks_a;
        self.tes_clicks_b += other.tes_clicks_b;
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..3 {
                    for b in 0..3 {
                        self.counts[x][y][a][b] += other.counts[x][y][a][b];
                    }
                }
            }
        }
        self
    }
}

struct TrialSampler<'a> {
    config: &'a RunConfig,
    mu: f64,
    p_channel: f64,
    p_flag: f64,
    p_measure: f64,
    joint: [[[f64; 4]; 2]; 2],
}

impl<'a> TrialSampler<'a> {
    fn new(config: &'a RunConfig) -> Result<Self> {
        let rho = colored_noise_state(&config.state)?;
        let born = BornTable::new(&rho, &config.scenario.settings_a, &config.scenario.settings_b)?;
        let mut joint = [[[0.0; 4]; 2]; 2];
        for x in 0..2 {
            for y in 0..2 {
                let q = born.click_probabilities(x, y);
                joint[x][y] = [q[0][0], q[0][1], q[1][0], q[1][1]];
            }
        }
        Ok(TrialSampler {
            config,
            mu: config.gain_g.sin().powi(2),
            p_channel: config.rate.eta_c * config.rate.eta_t,
            p_flag: config.rate.eta_sspd,
            p_measure: config.rate.eta_measure(),
            joint,
        })
    }

    fn side(&self, rng: &mut ChaCha8Rng, dark: Option<&DarkCounts>) -> SideRecord {
        let survived = rng.gen_bool(self.p_channel);
        let split = survived && rng.gen_bool(self.mu);
        let mut flag_click = split && rng.gen_bool(self.p_flag);
        if !flag_click {
            if let Some(d) = dark {
                let p_dark =
                    (d.sspd.dark_count_rate_hz * d.coincidence_window_s).clamp(0.0, 1.0);
                if p_dark > 0.0 && rng.gen_bool(p_dark) {
                    flag_click = true; // false herald: no photon behind it
                }
            }
        }
        let flag = if flag_click {
            if rng.gen_bool(0.5) {
                FlagResult::PiPlus
            } else {
                FlagResult::PiMinus
            }
        } else if split {
            FlagResult::NoClick
        } else {
            FlagResult::NoSplit
        };
        SideRecord { survived, split, flag_click, flag }
    }

    fn run_trial(&self, index: u64) -> TrialRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(index);
        let dark = self.config.dark.as_ref();
        let side_a = self.side(&mut rng, dark);
        let side_b = self.side(&mut rng, dark);
        let flags_ok = match self.config.pi_minus_policy {
            PiMinusPolicy::FeedForward => true,
            PiMinusPolicy::Discard => {
                side_a.flag == FlagResult::PiPlus && side_b.flag == FlagResult::PiPlus
            }
        };
        let heralded = side_a.flag_click && side_b.flag_click && flags_ok;
        let t_s = index as f64 / self.config.rate.r_pairs_hz;
        if !heralded {
            return TrialRecord {
                index,
                t_s,
                side_a,
                side_b,
                heralded,
                settings: None,
                outcomes: None,
            };
        }
        let x = usize::from(rng.gen_bool(0.5));
        let y = usize::from(rng.gen_bool(0.5));
        // Joint Born sample from the (feed-forward corrected) heralded state;
        // each side then keeps its outcome only if its detector clicks.
        let u: f64 = rng.gen();
        let q = &self.joint[x][y];
        let mut acc = 0.0;
        let mut k = 3;
        for (i, qi) in q.iter().enumerate() {
            acc += qi;
            if u < acc {
                k = i;
                break;
            }
        }
        let born_a = if k / 2 == 0 { Outcome::Plus } else { Outcome::Minus };
        let born_b = if k % 2 == 0 { Outcome::Plus } else { Outcome::Minus };
        let photon_a = side_a.split;
        let photon_b = side_b.split;
        let mut sample_outcome = |photon: bool, born: Outcome| -> Outcome {
            let mut click = photon && rng.gen_bool(self.p_measure);
            let mut from_dark = false;
            if !click {
                if let Some(d) = dark {
                    let p_dark =
                        (d.tes.dark_count_rate_hz * d.coincidence_window_s).clamp(0.0, 1.0);
                    if p_dark > 0.0 && rng.gen_bool(p_dark) {
                        click = true;
                        from_dark = true;
                    }
                }
            }
            if !click {
                Outcome::NoClick
            } else if from_dark || !photon {
                if rng.gen_bool(0.5) {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                }
            } else {
                born
            }
        };
        let a = sample_outcome(photon_a, born_a);
        let b = sample_outcome(photon_b, born_b);
        TrialRecord {
            index,
            t_s,
            side_a,
            side_b,
            heralded,
            settings: Some((x as u8, y as u8)),
            outcomes: Some((a, b)),
        }
    }
}

fn accumulate(acc: &mut Accumulator, trial: &TrialRecord) {
    if !trial.heralded {
        return;
    }
    acc.n_heralded += 1;
    let (x, y) = trial.settings.expect("heralded trial has settings");
    let (a, b) = trial.outcomes.expect("heralded trial has outcomes");
    acc.counts[x as usize][y as usize][a.index()][b.index()] += 1;
    if a != Outcome::NoClick {
        acc.tes_clicks_a += 1;
    }
    if b != Outcome::NoClick {
        acc.tes_clicks_b += 1;
    }
}

fn summarize(config: &RunConfig, acc: Accumulator) -> Result<RunSummary> {
    let duration_s = config.n_pairs as f64 / config.rate.r_pairs_hz;
    let mut setting_counts = [[0u64; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            setting_counts[x][y] = acc.counts[x][y].iter().flatten().sum();
        }
    }
    let chsh_binned = chsh_from_counts(&acc.counts, NoClickPolicy::BinToMinus);
    let chsh_fair = chsh_from_counts(&acc.counts, NoClickPolicy::KeepThreeOutcome);
    Ok(RunSummary {
        seed: config.seed,
        n_pairs: config.n_pairs,
        n_heralded: acc.n_heralded,
        duration_s,
        heralded_rate_hz: acc.n_heralded as f64 / duration_s,
        conditional_tes_a: BinomialEstimate::from_counts(acc.tes_clicks_a, acc.n_heralded),
        conditional_tes_b: BinomialEstimate::from_counts(acc.tes_clicks_b, acc.n_heralded),
        counts: acc.counts,
        setting_counts,
        chsh_binned: chsh_binned.unwrap_or(Estimate { value: f64::NAN, stderr: f64::NAN }),
        chsh_fair_sampling: chsh_fair.unwrap_or(Estimate { value: f64::NAN, stderr: f64::NAN }),
    })
}

/// Run the full simulation; deterministic in the config.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let sampler = TrialSampler::new(config)?;
    let acc = (0..config.n_pairs)
        .into_par_iter()
        .fold(Accumulator::default, |mut acc, i| {
            accumulate(&mut acc, &sampler.run_trial(i));
            acc
        })
        .reduce(Accumulator::default, Accumulator::merge);
    summarize(config, acc)
}

/// Run single-threaded, streaming every trial record to `sink` (CSV export).
pub fn run_with_sink(
    config: &RunConfig,
    mut sink: impl FnMut(&TrialRecord),
) -> Result<RunSummary> {
    config.validate()?;
    let sampler = TrialSampler::new(config)?;
    let mut acc = Accumulator::default();
    for i in 0..config.n_pairs {
        let trial = sampler.run_trial(i);
        sink(&trial);
        accumulate(&mut acc, &trial);
    }
    summarize(config, acc)
}

/// CHSH estimate from heralded counts with no-clicks handled per policy;
/// the standard error propagates the multinomial variance of each
/// correlator. Fails on an empty setting block.
pub fn chsh_from_counts(
    counts: &[[[[u64; 3]; 3]; 2]; 2],
    policy: NoClickPolicy,
) -> Result<Estimate> {
    let mut e = [[0.0f64; 2]; 2];
    let mut var = [[0.0f64; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            let block = &counts[x][y];
            match policy {
                NoClickPolicy::BinToMinus => {
                    let n: u64 = block.iter().flatten().sum();
                    if n == 0 {
                        return Err(Error::EmptySettingBlock { x: x as u8, y: y as u8 });
                    }
                    let v = [1.0, -1.0, -1.0];
                    let mut sum = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            sum += v[a] * v[b] * block[a][b] as f64;
                        }
                    }
                    let mean = sum / n as f64;
                    e[x][y] = mean;
                    var[x][y] = (1.0 - mean * mean) / n as f64;
                }
                NoClickPolicy::KeepThreeOutcome => {
                    let n_cc: u64 = block[0][0] + block[0][1] + block[1][0] + block[1][1];
                    if n_cc == 0 {
                        return Err(Error::EmptySettingBlock { x: x as u8, y: y as u8 });
                    }
                    let sum = block[0][0] as f64 + block[1][1] as f64
                        - block[0][1] as f64
                        - block[1][0] as f64;
                    let mean = sum / n_cc as f64;
                    e[x][y] = mean;
                    var[x][y] = (1.0 - mean * mean) / n_cc as f64;
                }
            }
        }
    }
    let s = e[0][0] + e[0][1] + e[1][0] - e[1][1];
    let stderr = (var[0][0] + var[0][1] + var[1][0] + var[1][1]).sqrt();
    Ok(Estimate { value: s, stderr })
}

/// One row of the loss-independence experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossIndependencePoint {
    pub eta_t: f64,
    pub n_heralded: u64,
    pub expected_heralded: f64,
    pub heralded_within_3_sigma: bool,
    pub tes_a: BinomialEstimate,
    pub tes_b: BinomialEstimate,
    /// Fewer than 100 heralded samples: reported but excluded from the
    /// consistency assertions.
    pub underpowered: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossIndependenceTable {
    pub points: Vec<LossIndependencePoint>,
    pub max_pairwise_z: f64,
    /// Conditional TES efficiencies statistically constant (pairwise 3
    /// sigma) across the powered points.
    pub conditional_consistent: bool,
    /// Heralded counts scale as eta_t^2 within 3 sigma at every point.
    pub scaling_consistent: bool,
}

/// Rerun the simulation across transmittance values with identical
/// seed-derived substreams, demonstrating that losses before the splitter
/// change the rate but not the conditional measurement efficiency.
pub fn loss_independence_experiment(
    base: &RunConfig,
    eta_t_values: &[f64],
) -> Result<LossIndependenceTable> {
    if eta_t_values.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two transmittance values".into(),
        ));
    }
    let mut points = Vec::with_capacity(eta_t_values.len());
    for &eta_t in eta_t_values {
        let mut config = base.clone();
        config.rate.eta_t = eta_t;
        config.validate()?;
        let summary = run(&config)?;
        let q = (config.rate.eta_c * eta_t * config.gain_g.sin().powi(2) * config.rate.eta_sspd)
            .powi(2)
            * match config.pi_minus_policy {
                PiMinusPolicy::FeedForward => 1.0,
                PiMinusPolicy::Discard => 0.25,
            };
        let expected = config.n_pairs as f64 * q;
        let sigma = (config.n_pairs as f64 * q * (1.0 - q)).sqrt();
        let within = (summary.n_heralded as f64 - expected).abs() <= 3.0 * sigma.max(1.0);
        points.push(LossIndependencePoint {
            eta_t,
            n_heralded: summary.n_heralded,
            expected_heralded: expected,
            heralded_within_3_sigma: within,
            tes_a: summary.conditional_tes_a,
            tes_b: summary.conditional_tes_b,
            underpowered: summary.n_heralded < 100,
        });
    }
    let mut max_z = 0.0f64;
    let powered: Vec<&LossIndependencePoint> =
        points.iter().filter(|p| !p.underpowered).collect();
    for i in 0..powered.len() {
        for j in (i + 1)..powered.len() {
            max_z = max_z.max(powered[i].tes_a.z_against(&powered[j].tes_a));
            max_z = max_z.max(powered[i].tes_b.z_against(&powered[j].tes_b));
        }
    }
    let conditional_consistent = max_z <= 3.0;
    let scaling_consistent = points.iter().all(|p| p.heralded_within_3_sigma);
    Ok(LossIndependenceTable {
        points,
        max_pairwise_z: max_z,
        conditional_consistent,
        scaling_consistent,
    })
}
