//! Named operating scenarios and the reference temperatures they are calibrated to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::{calibrate_resistance, Mode, OperatingProfile, VrfbParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub current_a: f64,
    pub mode: Mode,
    #[serde(default = "default_flow")]
    pub flow_l_min: f64,
    /// Seconds. When absent, 80 % of the nominal capacity is passed at `current_a`.
    #[serde(default)]
    pub duration_s: Option<f64>,
    /// Defaults to 0.1 for charging and 0.9 for discharging.
    #[serde(default)]
    pub soc_initial: Option<f64>,
    pub t_initial_c: f64,
    /// Mean stack temperature to calibrate the mode resistance against.
    #[serde(default)]
    pub target_mean_c: Option<f64>,
    /// Measured peak temperature, carried for reporting only.
    #[serde(default)]
    pub reference_max_c: Option<f64>,
}

fn default_flow() -> f64 {
    10.0
}

impl Scenario {
    pub fn duration(&self, params: &VrfbParams) -> f64 {
        match self.duration_s {
            Some(d) => d,
            None if self.current_a > 0.0 => 0.8 * params.capacity_ah * 3600.0 / self.current_a,
            None => 3600.0,
        }
    }

    pub fn profile(&self, params: &VrfbParams) -> Result<OperatingProfile> {
        let soc_initial = self.soc_initial.unwrap_or(match self.mode {
            Mode::Charging => 0.1,
            Mode::Discharging => 0.9,
        });
        let profile = OperatingProfile {
            mode: self.mode,
            current: self.current_a,
            flow_rate: self.flow_l_min,
            duration: self.duration(params),
            soc_initial,
            t_initial: self.t_initial_c,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Parameters with the mode resistance calibrated to `target_mean_c`, or
    /// unchanged when no target is set.
    pub fn calibrated_params(
        &self,
        params: &VrfbParams,
        dt: f64,
    ) -> Result<(VrfbParams, Option<f64>)> {
        let profile = self.profile(params)?;
        match self.target_mean_c {
            Some(target) => {
                let r = calibrate_resistance(params, &profile, target, dt)?;
                Ok((params.with_resistance(self.mode, r), Some(r)))
            }
            None => Ok((params.clone(), None)),
        }
    }
}

/// The eight (current, mode) operating points with their measured mean and
/// peak stack temperatures at 10 L/min and 30 °C ambient.
pub fn reference_scenarios() -> Vec<Scenario> {
    const ROWS: [(f64, Mode, f64, f64, f64); 8] = [
        (40.0, Mode::Charging, 21.0, 27.743, 31.2529),
        (40.0, Mode::Discharging, 17.0, 25.719, 33.3343),
        (45.0, Mode::Charging, 25.0, 31.302, 35.5717),
        (45.0, Mode::Discharging, 26.0, 33.222, 38.2843),
        (50.0, Mode::Charging, 27.0, 33.926, 40.0213),
        (50.0, Mode::Discharging, 29.0, 36.236, 42.2443),
        (60.0, Mode::Charging, 30.0, 37.307, 44.8636),
        (60.0, Mode::Discharging, 32.0, 39.422, 47.0195),
    ];
    ROWS.iter()
        .map(|&(current, mode, t0, mean, max)| Scenario {
            id: format!("{}a-{}", current as u32, mode),
            current_a: current,
            mode,
            flow_l_min: 10.0,
            duration_s: None,
            soc_initial: None,
            t_initial_c: t0,
            target_mean_c: Some(mean),
            reference_max_c: Some(max),
        })
        .collect()
}

/// Checks that scenario ids and (current, mode) pairs are unique.
pub fn check_unique(scenarios: &[Scenario]) -> Result<()> {
    for (i, a) in scenarios.iter().enumerate() {
        for b in &scenarios[..i] {
            if a.id == b.id {
                return Err(Error::InvalidDataset(format!(
                    "duplicate scenario id `{}`",
                    a.id
                )));
            }
            if a.current_a == b.current_a && a.mode == b.mode {
                return Err(Error::InvalidDataset(format!(
                    "scenarios `{}` and `{}` share {} A {}",
                    b.id, a.id, a.current_a, a.mode
                )));
            }
        }
    }
    Ok(())
}
