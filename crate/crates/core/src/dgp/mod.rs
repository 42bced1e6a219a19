//! Simulated policy worlds: random staggered adoption, the time-varying
//! effect scenarios, outcome augmentation and synthetic-state expansion.

mod reference;

pub use reference::{reference_panel, REFERENCE_SEED, FIRST_YEAR as REFERENCE_FIRST_YEAR, LAST_YEAR as REFERENCE_LAST_YEAR, STATE_NAMES};

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError, PanelObservation, TreatmentSchedule};

/// Post-adoption years with a distinct effect; later years repeat the last.
pub const EFFECT_YEARS: usize = 5;

#[derive(Debug, Error)]
pub enum DgpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scenario {
    RampUp,
    RampDown,
    Temporary,
    Inconsistent,
    /// Zero effects, for calibration runs.
    Null,
}

impl Scenario {
    /// The four effect scenarios of the simulation study.
    pub const STUDY: [Scenario; 4] = [
        Scenario::RampUp,
        Scenario::RampDown,
        Scenario::Temporary,
        Scenario::Inconsistent,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::RampUp => "ramp_up",
            Scenario::RampDown => "ramp_down",
            Scenario::Temporary => "temporary",
            Scenario::Inconsistent => "inconsistent",
            Scenario::Null => "null",
        }
    }

    pub fn index(self) -> u64 {
        match self {
            Scenario::RampUp => 0,
            Scenario::RampDown => 1,
            Scenario::Temporary => 2,
            Scenario::Inconsistent => 3,
            Scenario::Null => 4,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.label().to_string()
    }
}

impl TryFrom<String> for Scenario {
    type Error = DgpError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Scenario {
    type Err = DgpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "ramp_up" | "rampup" => Ok(Scenario::RampUp),
            "ramp_down" | "rampdown" => Ok(Scenario::RampDown),
            "temporary" => Ok(Scenario::Temporary),
            "inconsistent" => Ok(Scenario::Inconsistent),
            "null" => Ok(Scenario::Null),
            _ => Err(DgpError::Config(format!(
                "unknown scenario `{s}` (expected ramp_up, ramp_down, temporary, inconsistent, null)"
            ))),
        }
    }
}

/// Percent reduction in the outcome for post-adoption years 1..5. Years
/// after the fifth keep the fifth-year effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectProfile {
    pub percents: [f64; EFFECT_YEARS],
}

impl EffectProfile {
    /// Percent effect at event time `k` (≥ 1); zero before adoption.
    pub fn percent_at(&self, k: i32) -> f64 {
        if k < 1 {
            0.0
        } else {
            self.percents[(k as usize).min(EFFECT_YEARS) - 1]
        }
    }

    pub fn mean(&self) -> f64 {
        self.percents.iter().sum::<f64>() / EFFECT_YEARS as f64
    }
}

/// Fixed effect profile for each scenario. Every study scenario averages a
/// 5% reduction with no year above 10%.
pub fn effect_profile(scenario: Scenario) -> EffectProfile {
    let full = 25.0 / 3.0;
    let percents = match scenario {
        Scenario::RampUp => [0.2, 0.4, 0.6, 0.8, 1.0].map(|f| f * full),
        Scenario::RampDown => [1.0, 0.8, 0.6, 0.4, 0.2].map(|f| f * full),
        Scenario::Temporary => [5.0, 10.0, 7.5, 2.5, 0.0],
        Scenario::Inconsistent => [5.0, 9.0, 3.0, 4.0, 4.0],
        Scenario::Null => [0.0; EFFECT_YEARS],
    };
    EffectProfile { percents }
}

/// Known effects for one simulated world.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    /// Additive effect `Y* - Y` per observation, aligned with the panel.
    pub observation_effects: Vec<f64>,
    /// Average additive effect over treated observations at event times
    /// 1..5 (`None` when no treated observation reaches that event time).
    pub event_time_effects: [Option<f64>; EFFECT_YEARS],
}

impl TruthTable {
    pub fn at_event_time(&self, k: i32) -> Option<f64> {
        if (1..=EFFECT_YEARS as i32).contains(&k) {
            self.event_time_effects[k as usize - 1]
        } else {
            None
        }
    }
}

/// Picks `n_treated` states uniformly without replacement and gives each an
/// adoption year uniform on `adoption_range`.
pub fn draw_treatment<R: Rng + ?Sized>(
    data: &PanelDataset,
    n_treated: usize,
    adoption_range: RangeInclusive<i32>,
    rng: &mut R,
) -> Result<TreatmentSchedule, DgpError> {
    let n_states = data.n_states();
    if n_treated == 0 || n_treated >= n_states {
        return Err(DgpError::Config(format!(
            "n_treated must be between 1 and {} (leaving a control pool), got {n_treated}",
            n_states.saturating_sub(1)
        )));
    }
    let (lo, hi) = (*adoption_range.start(), *adoption_range.end());
    if lo > hi || lo < data.first_year() || hi > data.last_year() {
        return Err(DgpError::Config(format!(
            "adoption range {lo}-{hi} must lie within {}-{}",
            data.first_year(),
            data.last_year()
        )));
    }
    let mut adoption = vec![None; n_states];
    let mut chosen = sample(rng, n_states, n_treated).into_vec();
    chosen.sort_unstable();
    for s in chosen {
        adoption[s] = Some(rng.random_range(lo..=hi));
    }
    Ok(TreatmentSchedule::from_parts(data, adoption)?)
}

/// Applies the scenario effects multiplicatively to treated observations
/// and sets the treated flags; controls are untouched.
pub fn apply_effects(
    data: &PanelDataset,
    schedule: &TreatmentSchedule,
    profile: &EffectProfile,
) -> Result<(PanelDataset, TruthTable), DgpError> {
    data.require_balanced()?;
    let n_years = data.n_years();
    let mut sums = [0.0; EFFECT_YEARS];
    let mut counts = [0usize; EFFECT_YEARS];
    let mut effects = Vec::with_capacity(data.observations().len());
    let observations = data
        .observations()
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let state = i / n_years;
            let (outcome, treated, effect) = match schedule.event_time_at(state, o.year) {
                Some(k) if k >= 1 => {
                    let augmented = o.outcome * (1.0 - profile.percent_at(k) / 100.0);
                    let effect = augmented - o.outcome;
                    if k as usize <= EFFECT_YEARS {
                        sums[k as usize - 1] += effect;
                        counts[k as usize - 1] += 1;
                    }
                    (augmented, true, effect)
                }
                _ => (o.outcome, false, 0.0),
            };
            effects.push(effect);
            PanelObservation {
                outcome,
                treated,
                ..o.clone()
            }
        })
        .collect();
    let mut event_time_effects = [None; EFFECT_YEARS];
    for k in 0..EFFECT_YEARS {
        if counts[k] > 0 {
            event_time_effects[k] = Some(sums[k] / counts[k] as f64);
        }
    }
    Ok((
        data.with_observations(observations),
        TruthTable {
            observation_effects: effects,
            event_time_effects,
        },
    ))
}

/// Noise scale of the multiplicative perturbation applied to resampled donors.
pub const SYNTHETIC_NOISE_SD: f64 = 0.05;

/// Appends `n_new` synthetic states. Each copies a randomly chosen
/// original state's trajectory, perturbs every value by independent
/// lognormal noise and smooths the result with a centred 3-point moving
/// average (2-point at the ends).
pub fn synthesize_states<R: RngCore + ?Sized>(
    data: &PanelDataset,
    n_new: usize,
    rng: &mut R,
) -> Result<PanelDataset, DgpError> {
    if n_new == 0 {
        return Err(DgpError::Config("n_new must be at least 1".into()));
    }
    data.require_balanced()?;
    let n_states = data.n_states();
    let n_years = data.n_years();
    let noise = Normal::new(0.0, SYNTHETIC_NOISE_SD).expect("valid normal");
    let width = (data.n_states() + n_new).to_string().len().max(3);
    let mut observations = data
        .observations()
        .iter()
        .map(|o| PanelObservation {
            treated: false,
            ..o.clone()
        })
        .collect::<Vec<_>>();
    let mut next_id = 1usize;
    for _ in 0..n_new {
        let id = loop {
            let candidate = format!("synthetic-{next_id:0width$}");
            next_id += 1;
            if data.state_index(&candidate).is_none() {
                break candidate;
            }
        };
        let donor = rng.random_range(0..n_states);
        let mut outcome: Vec<f64> = Vec::with_capacity(n_years);
        let mut covariate: Vec<f64> = Vec::with_capacity(n_years);
        for t in 0..n_years {
            let o = data.at(donor, t);
            outcome.push(o.outcome * noise.sample(rng).exp());
            covariate.push(o.covariate * noise.sample(rng).exp());
        }
        let outcome = smooth3(&outcome);
        let covariate = smooth3(&covariate);
        for t in 0..n_years {
            observations.push(PanelObservation {
                state: id.clone(),
                year: data.years()[t],
                outcome: outcome[t].max(0.0),
                covariate: covariate[t].max(0.0),
                treated: false,
            });
        }
    }
    Ok(PanelDataset::from_observations(observations))
}

fn smooth3(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn panel() -> PanelDataset {
        reference_panel(7)
    }

    #[test]
    fn profiles_meet_constraints() {
        for s in Scenario::STUDY {
            let p = effect_profile(s);
            assert!((p.mean() - 5.0).abs() < 1e-12, "{s}");
            assert!(p.percents.iter().all(|&x| (0.0..=10.0).contains(&x)));
        }
        assert_eq!(effect_profile(Scenario::Null).percents, [0.0; 5]);
        let up = effect_profile(Scenario::RampUp).percents;
        let expected = [1.6667, 3.3333, 5.0, 6.6667, 8.3333];
        for (a, b) in up.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4);
        }
        let mut down = effect_profile(Scenario::RampDown).percents;
        down.reverse();
        assert_eq!(down, up);
    }

    #[test]
    fn scenario_labels_round_trip() {
        for s in Scenario::STUDY.into_iter().chain([Scenario::Null]) {
            assert_eq!(s.label().parse::<Scenario>().unwrap(), s);
        }
        assert!("sideways".parse::<Scenario>().is_err());
    }

    #[test]
    fn draw_is_deterministic_and_sized() {
        let data = panel();
        let a = draw_treatment(&data, 25, 2002..=2011, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = draw_treatment(&data, 25, 2002..=2011, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_treated(), 25);
        assert!(a
            .adoption_years()
            .iter()
            .flatten()
            .all(|y| (2002..=2011).contains(y)));
        let err = draw_treatment(&data, 50, 2002..=2011, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(matches!(err, Err(DgpError::Config(_))));
    }

    #[test]
    fn effects_applied_multiplicatively() {
        let data = panel();
        let adoption: Vec<Option<i32>> = (0..data.n_states()).map(|s| (s == 0).then_some(2005)).collect();
        let schedule = TreatmentSchedule::from_parts(&data, adoption).unwrap();
        let (out, truth) = apply_effects(&data, &schedule, &effect_profile(Scenario::RampUp)).unwrap();
        // 2007 is event time 3: p = 5%.
        let t = (2007 - data.first_year()) as usize;
        assert!((out.at(0, t).outcome - data.at(0, t).outcome * 0.95).abs() < 1e-12);
        assert!(out.at(0, t).treated && !out.at(0, t - 3).treated);
        assert_eq!(out.at(1, t).outcome, data.at(1, t).outcome);
        assert!((truth.at_event_time(3).unwrap() + data.at(0, t).outcome * 0.05).abs() < 1e-12);

        let (down, _) = apply_effects(&data, &schedule, &effect_profile(Scenario::RampDown)).unwrap();
        let t7 = (2011 - data.first_year()) as usize;
        let ratio = down.at(0, t7).outcome / data.at(0, t7).outcome;
        assert!((ratio - (1.0 - 1.0 / 60.0)).abs() < 1e-12);
        assert!((ratio - 0.983333).abs() < 1e-6);
    }

    #[test]
    fn synthesize_adds_unique_states() {
        let data = panel();
        let out = synthesize_states(&data, 1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.n_states(), 51);
        assert!(out.is_balanced());
        let big = synthesize_states(&data, 28, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(big.n_states(), 78);
        assert!(big.observations().iter().all(|o| o.outcome >= 0.0 && o.covariate >= 0.0));
        assert!(synthesize_states(&data, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
