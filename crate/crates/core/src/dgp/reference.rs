//! A deterministic stand-in for the empirical state overdose panel.
//!
//! The generated panel follows the published schema and mimics the broad
//! features of 1999-2016 state drug-overdose mortality: right-skewed
//! levels around 6 per 100,000 in 1999, state-specific log-linear growth,
//! an accelerating post-2010 surge in a subset of states, and
//! autocorrelated year-to-year noise. Unemployment follows the national
//! business cycle with state-level offsets and sensitivities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::panel::{PanelDataset, PanelObservation};

pub const STATE_NAMES: [&str; 50] = [
    "Alabama", "Alaska", "Arizona", "Arkansas", "California", "Colorado", "Connecticut", "Delaware",
    "Florida", "Georgia", "Hawaii", "Idaho", "Illinois", "Indiana", "Iowa", "Kansas", "Kentucky",
    "Louisiana", "Maine", "Maryland", "Massachusetts", "Michigan", "Minnesota", "Mississippi",
    "Missouri", "Montana", "Nebraska", "Nevada", "New Hampshire", "New Jersey", "New Mexico",
    "New York", "North Carolina", "North Dakota", "Ohio", "Oklahoma", "Oregon", "Pennsylvania",
    "Rhode Island", "South Carolina", "South Dakota", "Tennessee", "Texas", "Utah", "Vermont",
    "Virginia", "Washington", "West Virginia", "Wisconsin", "Wyoming",
];

/// Seed of the panel shipped as `data/reference_panel.csv`.
pub const REFERENCE_SEED: u64 = 20_240_501;

pub const FIRST_YEAR: i32 = 1999;
pub const LAST_YEAR: i32 = 2016;

/// National unemployment rate, 1999-2016.
const NATIONAL_UNEMPLOYMENT: [f64; 18] = [
    4.2, 4.0, 4.7, 5.8, 6.0, 5.5, 5.1, 4.6, 4.6, 5.8, 9.3, 9.6, 8.9, 8.1, 7.4, 6.2, 5.3, 4.9,
];

fn round_to(v: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (v * f).round() / f
}

/// 50 states × 1999-2016, fully determined by `seed`.
pub fn reference_panel(seed: u64) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let mut observations = Vec::with_capacity(STATE_NAMES.len() * NATIONAL_UNEMPLOYMENT.len());
    for name in STATE_NAMES {
        let level = 6.0f64.ln() + 0.35 * std.sample(&mut rng);
        let growth = 0.06 + 0.025 * std.sample(&mut rng);
        let surge = if rng.random_bool(0.35) {
            0.02 + 0.04 * std.sample(&mut rng).abs()
        } else {
            0.005 * std.sample(&mut rng).abs()
        };
        let noise_sd = rng.random_range(0.04..0.10);
        let unemployment_offset = 0.9 * std.sample(&mut rng);
        let cycle_sensitivity = 1.0 + 0.25 * std.sample(&mut rng);

        let mut shock = noise_sd * std.sample(&mut rng);
        for (t, national) in NATIONAL_UNEMPLOYMENT.iter().enumerate() {
            let year = FIRST_YEAR + t as i32;
            if t > 0 {
                shock = 0.5 * shock + noise_sd * (0.75f64).sqrt() * std.sample(&mut rng);
            }
            let years_after_2010 = (year - 2010).max(0) as f64;
            let log_rate = level + growth * t as f64 + surge * years_after_2010.powf(1.5) + shock;
            let unemployment = national
                + unemployment_offset
                + (cycle_sensitivity - 1.0) * (national - 5.5)
                + 0.25 * std.sample(&mut rng);
            observations.push(PanelObservation {
                state: name.to_string(),
                year,
                outcome: round_to(log_rate.exp(), 2),
                covariate: round_to(unemployment.max(2.0), 1),
                treated: false,
            });
        }
    }
    PanelDataset::from_observations(observations)
}
