//! Lumped thermal model of a VRFB: one stack control volume exchanging
//! electrolyte with a positive and a negative tank, Joule and entropic heat in
//! the stack, and convective loss from the tanks to ambient.
//!
//! Internal units are SI (m³, m³ s⁻¹, s). Temperatures are carried in °C; the
//! entropic term converts the stack temperature to kelvin. Volumes are given in
//! litres and flow rates in L min⁻¹ at the serialization boundary.

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, ScenarioMeta, Source, TimeSeriesDataset};
use crate::error::{Error, Result};

pub const KELVIN_OFFSET: f64 = 273.15;
pub const FARADAY: f64 = 96485.33212;
pub const GAS_CONSTANT: f64 = 8.3144;

/// Rated stack terminal current of the reference 1 kW / 6 kWh plant.
pub const RATED_CURRENT_A: f64 = 60.0;
/// Manufacturer flow-rate range of the reference plant, L min⁻¹.
pub const FLOW_RANGE_L_MIN: (f64, f64) = (1.0, 18.0);

pub const SOC_MIN: f64 = 0.01;
pub const SOC_MAX: f64 = 0.99;

/// Upper end of the resistance bracket searched by [`calibrate_resistance`].
pub const DEFAULT_MAX_RESISTANCE: f64 = 20.0;

const LITRE: f64 = 1e-3;
const LITRES_PER_M3: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Charging,
    Discharging,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Charging => "charging",
            Mode::Discharging => "discharging",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "charging" => Ok(Mode::Charging),
            "discharging" => Ok(Mode::Discharging),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Physical constants and plant parameters of the thermal model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParamsFile", into = "ParamsFile")]
pub struct VrfbParams {
    /// Specific heat of the electrolyte, J g⁻¹ K⁻¹.
    pub cp: f64,
    /// Electrolyte density, g m⁻³.
    pub rho: f64,
    /// Electrolyte volume inside the stack, m³.
    pub v_stack: f64,
    pub v_pos: f64,
    pub v_neg: f64,
    /// Tank surface areas, m².
    pub a_pos: f64,
    pub a_neg: f64,
    /// Overall tank heat-transfer coefficients, W m⁻² K⁻¹.
    pub u_pos: f64,
    pub u_neg: f64,
    /// Overall stack resistance while charging, Ω.
    pub r_charge: f64,
    /// Overall stack resistance while discharging, Ω.
    pub r_discharge: f64,
    /// Entropic coefficient dE/dT, V K⁻¹.
    pub de_dt: f64,
    pub n_cells: u32,
    /// Per-cell equilibrium potential at 50 % SOC, V.
    pub e0: f64,
    /// Self-discharge equivalent resistance, Ω.
    pub r_sd: f64,
    /// Diffusion current, A.
    pub i_diff: f64,
    pub faraday: f64,
    pub r_gas: f64,
    /// Ambient temperature, °C.
    pub t_ambient: f64,
    /// Nominal charge capacity used for coulomb counting, A h.
    pub capacity_ah: f64,
}

impl Default for VrfbParams {
    fn default() -> Self {
        Self {
            cp: 3.2,
            rho: 1.35e6,
            v_stack: 7.5 * LITRE,
            v_pos: 150.0 * LITRE,
            v_neg: 150.0 * LITRE,
            a_pos: 4.0,
            a_neg: 4.0,
            u_pos: 25.0,
            u_neg: 25.0,
            r_charge: 0.3,
            r_discharge: 0.3,
            de_dt: 0.0,
            n_cells: 20,
            e0: 1.4,
            r_sd: 0.0,
            i_diff: 0.0,
            faraday: FARADAY,
            r_gas: GAS_CONSTANT,
            t_ambient: 30.0,
            // 6 kWh at a 26 V nominal stack voltage
            capacity_ah: 6000.0 / 26.0,
        }
    }
}

impl VrfbParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cp", self.cp),
            ("rho", self.rho),
            ("v_stack", self.v_stack),
            ("v_pos", self.v_pos),
            ("v_neg", self.v_neg),
            ("a_pos", self.a_pos),
            ("a_neg", self.a_neg),
            ("capacity_ah", self.capacity_ah),
            ("faraday", self.faraday),
            ("r_gas", self.r_gas),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        let non_negative = [
            ("u_pos", self.u_pos),
            ("u_neg", self.u_neg),
            ("r_charge", self.r_charge),
            ("r_discharge", self.r_discharge),
            ("r_sd", self.r_sd),
            ("i_diff", self.i_diff),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        for (name, value) in [
            ("de_dt", self.de_dt),
            ("e0", self.e0),
            ("t_ambient", self.t_ambient),
        ] {
            if !value.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.n_cells == 0 {
            return Err(Error::param("n_cells", "must be >= 1"));
        }
        Ok(())
    }

    pub fn resistance(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Charging => self.r_charge,
            Mode::Discharging => self.r_discharge,
        }
    }

    pub fn with_resistance(&self, mode: Mode, ohms: f64) -> Self {
        let mut params = self.clone();
        match mode {
            Mode::Charging => params.r_charge = ohms,
            Mode::Discharging => params.r_discharge = ohms,
        }
        params
    }

    /// Volumetric heat capacity cp·ρ, J m⁻³ K⁻¹.
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.cp * self.rho
    }

    /// cp·ρ·(V_s·T_s + V₊·T₊ + V₋·T₋), the electrolyte heat content relative to 0 °C.
    pub fn heat_content(&self, state: &ThermalState) -> f64 {
        self.volumetric_heat_capacity()
            * (self.v_stack * state.t_stack + self.v_pos * state.t_pos + self.v_neg * state.t_neg)
    }
}

/// Serialized form of [`VrfbParams`]; volumes in litres.
#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParamsFile {
    cp: f64,
    rho: f64,
    v_stack_l: f64,
    v_pos_l: f64,
    v_neg_l: f64,
    a_pos: f64,
    a_neg: f64,
    u_pos: f64,
    u_neg: f64,
    r_charge: f64,
    r_discharge: f64,
    de_dt: f64,
    n_cells: u32,
    e0: f64,
    r_sd: f64,
    i_diff: f64,
    faraday: f64,
    r_gas: f64,
    t_ambient: f64,
    capacity_ah: f64,
}

impl Default for ParamsFile {
    fn default() -> Self {
        VrfbParams::default().into()
    }
}

impl From<VrfbParams> for ParamsFile {
    fn from(p: VrfbParams) -> Self {
        Self {
            cp: p.cp,
            rho: p.rho,
            v_stack_l: p.v_stack * LITRES_PER_M3,
            v_pos_l: p.v_pos * LITRES_PER_M3,
            v_neg_l: p.v_neg * LITRES_PER_M3,
            a_pos: p.a_pos,
            a_neg: p.a_neg,
            u_pos: p.u_pos,
            u_neg: p.u_neg,
            r_charge: p.r_charge,
            r_discharge: p.r_discharge,
            de_dt: p.de_dt,
            n_cells: p.n_cells,
            e0: p.e0,
            r_sd: p.r_sd,
            i_diff: p.i_diff,
            faraday: p.faraday,
            r_gas: p.r_gas,
            t_ambient: p.t_ambient,
            capacity_ah: p.capacity_ah,
        }
    }
}

impl From<ParamsFile> for VrfbParams {
    fn from(f: ParamsFile) -> Self {
        Self {
            cp: f.cp,
            rho: f.rho,
            v_stack: f.v_stack_l * LITRE,
            v_pos: f.v_pos_l * LITRE,
            v_neg: f.v_neg_l * LITRE,
            a_pos: f.a_pos,
            a_neg: f.a_neg,
            u_pos: f.u_pos,
            u_neg: f.u_neg,
            r_charge: f.r_charge,
            r_discharge: f.r_discharge,
            de_dt: f.de_dt,
            n_cells: f.n_cells,
            e0: f.e0,
            r_sd: f.r_sd,
            i_diff: f.i_diff,
            faraday: f.faraday,
            r_gas: f.r_gas,
            t_ambient: f.t_ambient,
            capacity_ah: f.capacity_ah,
        }
    }
}

/// One constant-current charge or discharge run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingProfile {
    pub mode: Mode,
    /// Stack terminal current magnitude, A.
    pub current: f64,
    /// Electrolyte flow rate Q = Q₊ = Q₋, L min⁻¹.
    pub flow_rate: f64,
    /// Simulated time, s.
    pub duration: f64,
    pub soc_initial: f64,
    /// Initial temperature of the stack and both tanks, °C.
    pub t_initial: f64,
}

impl OperatingProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.current.is_finite() && self.current >= 0.0) {
            return Err(Error::param(
                "current",
                format!("must be >= 0, got {}", self.current),
            ));
        }
        if !(self.flow_rate.is_finite() && self.flow_rate >= 0.0) {
            return Err(Error::param(
                "flow_rate",
                format!("must be >= 0, got {}", self.flow_rate),
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param(
                "duration",
                format!("must be > 0, got {}", self.duration),
            ));
        }
        if !(self.soc_initial > 0.0 && self.soc_initial < 1.0) {
            return Err(Error::param(
                "soc_initial",
                format!("must lie in (0, 1), got {}", self.soc_initial),
            ));
        }
        if !self.t_initial.is_finite() {
            return Err(Error::param("t_initial", "must be finite"));
        }
        Ok(())
    }

    /// Flow rate in m³ s⁻¹.
    pub fn flow_m3_per_s(&self) -> f64 {
        self.flow_rate * LITRE / 60.0
    }

    /// Signed current: positive while charging, negative while discharging.
    pub fn signed_current(&self) -> f64 {
        match self.mode {
            Mode::Charging => self.current,
            Mode::Discharging => -self.current,
        }
    }

    /// Operating-envelope warnings against the reference plant ratings.
    pub fn rating_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.current > RATED_CURRENT_A {
            warnings.push(format!(
                "current {} A exceeds the rated stack current of {RATED_CURRENT_A} A",
                self.current
            ));
        }
        let (lo, hi) = FLOW_RANGE_L_MIN;
        if self.flow_rate < lo || self.flow_rate > hi {
            warnings.push(format!(
                "flow rate {} L/min is outside the rated range {lo}-{hi} L/min",
                self.flow_rate
            ));
        }
        warnings
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Elapsed time, s.
    pub t: f64,
    pub t_stack: f64,
    pub t_pos: f64,
    pub t_neg: f64,
    pub soc: f64,
}

impl ThermalState {
    pub fn initial(profile: &OperatingProfile) -> Self {
        Self {
            t: 0.0,
            t_stack: profile.t_initial,
            t_pos: profile.t_initial,
            t_neg: profile.t_initial,
            soc: profile.soc_initial.clamp(SOC_MIN, SOC_MAX),
        }
    }

    fn vector(&self) -> [f64; 4] {
        [self.t_stack, self.t_pos, self.t_neg, self.soc]
    }

    fn from_vector(t: f64, v: [f64; 4]) -> Self {
        Self {
            t,
            t_stack: v[0],
            t_pos: v[1],
            t_neg: v[2],
            soc: v[3],
        }
    }
}

/// Time derivatives of the state components, per second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub t_stack: f64,
    pub t_pos: f64,
    pub t_neg: f64,
    pub soc: f64,
}

/// Open-circuit stack voltage from the Nernst relation, V.
pub fn nernst_ocv(params: &VrfbParams, soc: f64, temperature_k: f64) -> Result<f64> {
    if !(soc > 0.0 && soc < 1.0) {
        return Err(Error::Domain(format!("soc must lie in (0, 1), got {soc}")));
    }
    if temperature_k.is_nan() || temperature_k <= 0.0 {
        return Err(Error::Domain(format!(
            "temperature must be > 0 K, got {temperature_k}"
        )));
    }
    let log_term = 2.0 * params.r_gas * temperature_k / params.faraday * (soc / (1.0 - soc)).ln();
    let per_cell = params.e0 + log_term - params.i_diff * params.r_sd;
    Ok(f64::from(params.n_cells) * per_cell)
}

/// Right-hand side of the coupled stack/tank energy balances plus coulomb counting.
pub fn ode_rhs(
    state: &ThermalState,
    params: &VrfbParams,
    profile: &OperatingProfile,
) -> StateDerivative {
    let heat_cap = params.volumetric_heat_capacity();
    let flow_cap = profile.flow_m3_per_s() * heat_cap;
    let current = profile.signed_current();
    let resistance = params.resistance(profile.mode);

    let stack_kelvin = state.t_stack + KELVIN_OFFSET;
    let stack_power = flow_cap * (state.t_pos - state.t_stack)
        + flow_cap * (state.t_neg - state.t_stack)
        + current * current * resistance
        + current * stack_kelvin * params.de_dt;
    let pos_power = flow_cap * (state.t_stack - state.t_pos)
        + params.u_pos * params.a_pos * (params.t_ambient - state.t_pos);
    let neg_power = flow_cap * (state.t_stack - state.t_neg)
        + params.u_neg * params.a_neg * (params.t_ambient - state.t_neg);

    StateDerivative {
        t_stack: stack_power / (heat_cap * params.v_stack),
        t_pos: pos_power / (heat_cap * params.v_pos),
        t_neg: neg_power / (heat_cap * params.v_neg),
        soc: current / (params.capacity_ah * 3600.0),
    }
}

fn rhs_vector(t: f64, v: [f64; 4], params: &VrfbParams, profile: &OperatingProfile) -> [f64; 4] {
    let d = ode_rhs(&ThermalState::from_vector(t, v), params, profile);
    [d.t_stack, d.t_pos, d.t_neg, d.soc]
}

fn axpy(y: [f64; 4], a: f64, x: [f64; 4]) -> [f64; 4] {
    [
        y[0] + a * x[0],
        y[1] + a * x[1],
        y[2] + a * x[2],
        y[3] + a * x[3],
    ]
}

/// One classical fourth-order Runge–Kutta step of length `h`, SOC clamped afterwards.
pub fn rk4_step(
    state: &ThermalState,
    params: &VrfbParams,
    profile: &OperatingProfile,
    h: f64,
) -> ThermalState {
    let (t, y) = (state.t, state.vector());
    let k1 = rhs_vector(t, y, params, profile);
    let k2 = rhs_vector(t + 0.5 * h, axpy(y, 0.5 * h, k1), params, profile);
    let k3 = rhs_vector(t + 0.5 * h, axpy(y, 0.5 * h, k2), params, profile);
    let k4 = rhs_vector(t + h, axpy(y, h, k3), params, profile);
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next[3] = next[3].clamp(SOC_MIN, SOC_MAX);
    ThermalState::from_vector(t + h, next)
}

/// Fixed-step RK4 trajectory, yielding the initial state followed by every step.
///
/// The final step is shortened when `duration` is not a multiple of `dt`, so the
/// last yielded state sits exactly at `duration`.
pub struct Trajectory<'a> {
    params: &'a VrfbParams,
    profile: &'a OperatingProfile,
    dt: f64,
    state: ThermalState,
    step: u64,
    full_steps: u64,
    finished: bool,
}

impl<'a> Trajectory<'a> {
    pub fn new(params: &'a VrfbParams, profile: &'a OperatingProfile, dt: f64) -> Result<Self> {
        params.validate()?;
        profile.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {dt}")));
        }
        if dt > profile.duration * (1.0 + 1e-12) {
            return Err(Error::param(
                "dt",
                format!("{dt} s exceeds the profile duration {} s", profile.duration),
            ));
        }
        let full_steps = (profile.duration / dt * (1.0 + 1e-12)).floor() as u64;
        Ok(Self {
            params,
            profile,
            dt,
            state: ThermalState::initial(profile),
            step: 0,
            full_steps,
            finished: false,
        })
    }
}

impl Iterator for Trajectory<'_> {
    type Item = ThermalState;

    fn next(&mut self) -> Option<ThermalState> {
        if self.finished {
            return None;
        }
        let current = self.state;
        let duration = self.profile.duration;
        if self.step < self.full_steps {
            let mut next = rk4_step(&self.state, self.params, self.profile, self.dt);
            self.step += 1;
            // pin the clock to step·dt so long runs do not accumulate drift
            next.t = (self.step as f64 * self.dt).min(duration);
            self.state = next;
        } else {
            let remaining = duration - self.state.t;
            if remaining > duration * 1e-12 {
                let mut next = rk4_step(&self.state, self.params, self.profile, remaining);
                next.t = duration;
                self.state = next;
                self.full_steps = self.step;
            } else {
                self.finished = true;
            }
        }
        Some(current)
    }
}

/// Output of a simulation run.
#[derive(Clone, Debug)]
pub struct SimulationRun {
    pub dataset: TimeSeriesDataset,
    pub final_state: ThermalState,
}

/// Integrates one operating profile with fixed-step RK4 and records the stack
/// temperature at t = 0 and after every step.
pub fn simulate_cycle(
    params: &VrfbParams,
    profile: &OperatingProfile,
    dt: f64,
) -> Result<SimulationRun> {
    simulate_sampled(params, profile, dt, 1)
}

/// Like [`simulate_cycle`] but records only every `record_every`-th step (the
/// final state is always recorded).
pub fn simulate_sampled(
    params: &VrfbParams,
    profile: &OperatingProfile,
    dt: f64,
    record_every: usize,
) -> Result<SimulationRun> {
    if record_every == 0 {
        return Err(Error::param("record_every", "must be >= 1"));
    }
    let mut samples = Vec::new();
    let mut last = ThermalState::initial(profile);
    let mut last_recorded = true;
    for (i, state) in Trajectory::new(params, profile, dt)?.enumerate() {
        last_recorded = i % record_every == 0;
        if last_recorded {
            samples.push(Sample::new(state.t, state.t_stack));
        }
        last = state;
    }
    if !last_recorded {
        samples.push(Sample::new(last.t, last.t_stack));
    }
    for (what, v) in [
        ("t_stack", last.t_stack),
        ("t_pos", last.t_pos),
        ("t_neg", last.t_neg),
    ] {
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "simulation diverged: {what} is not finite"
            )));
        }
    }
    let meta = ScenarioMeta {
        current_a: profile.current,
        mode: profile.mode,
        flow_l_min: profile.flow_rate,
        ambient_c: params.t_ambient,
        source: Source::Synthetic,
        seed: None,
    };
    Ok(SimulationRun {
        dataset: TimeSeriesDataset::new(samples, meta)?,
        final_state: last,
    })
}

/// Time-mean of the stack temperature over every integration step, t = 0 included.
pub fn mean_stack_temperature(
    params: &VrfbParams,
    profile: &OperatingProfile,
    dt: f64,
) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for state in Trajectory::new(params, profile, dt)? {
        sum += state.t_stack;
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Closed-form stack temperature for a constant tank temperature, evaluated
/// term for term as published.
///
/// Quantities enter in the units of the published symbol list: stack volume in
/// litres, flow in L min⁻¹ and elapsed time in hours (`elapsed` itself is given
/// in seconds). The expression is not dimensionally consistent and is kept for
/// traceability only; [`simulate_cycle`] is the physical reference.
pub fn closed_form_temp(
    params: &VrfbParams,
    profile: &OperatingProfile,
    tank_temp: f64,
    elapsed: f64,
) -> Result<f64> {
    if elapsed.is_nan() || elapsed < 0.0 {
        return Err(Error::Domain(format!(
            "elapsed time must be >= 0, got {elapsed}"
        )));
    }
    let heat_cap = params.volumetric_heat_capacity();
    let v_stack_l = params.v_stack * LITRES_PER_M3;
    let flow = profile.flow_rate;
    let hours = elapsed / 3600.0;
    let current = profile.current;
    let resistance = params.resistance(profile.mode);

    let denominator =
        heat_cap * (v_stack_l + 2.0 * flow * hours - current * params.de_dt / heat_cap);
    if denominator == 0.0 {
        return Err(Error::DivisionByZero(
            "closed-form stack temperature denominator",
        ));
    }
    Ok((flow / v_stack_l) * hours * tank_temp / denominator
        + current * current * resistance * hours / denominator)
}

/// Finds the stack resistance for the profile's mode whose simulated mean stack
/// temperature equals `target_mean_temp`, by bisection on [0, 20 Ω].
pub fn calibrate_resistance(
    params: &VrfbParams,
    profile: &OperatingProfile,
    target_mean_temp: f64,
    dt: f64,
) -> Result<f64> {
    calibrate_resistance_bounded(
        params,
        profile,
        target_mean_temp,
        dt,
        DEFAULT_MAX_RESISTANCE,
    )
}

pub fn calibrate_resistance_bounded(
    params: &VrfbParams,
    profile: &OperatingProfile,
    target_mean_temp: f64,
    dt: f64,
    max_resistance: f64,
) -> Result<f64> {
    const TEMP_TOL: f64 = 1e-6;
    if !target_mean_temp.is_finite() {
        return Err(Error::param("target_mean_temp", "must be finite"));
    }
    if !(max_resistance.is_finite() && max_resistance > 0.0) {
        return Err(Error::param("max_resistance", "must be finite and > 0"));
    }
    let mean_at = |ohms: f64| {
        mean_stack_temperature(&params.with_resistance(profile.mode, ohms), profile, dt)
    };

    let floor = mean_at(0.0)?;
    if (floor - target_mean_temp).abs() <= TEMP_TOL {
        return Ok(0.0);
    }
    if floor > target_mean_temp {
        return Err(Error::NoBracket {
            target: target_mean_temp,
            resistance: 0.0,
            achieved: floor,
        });
    }
    let ceiling = mean_at(max_resistance)?;
    if ceiling < target_mean_temp - TEMP_TOL {
        return Err(Error::NoBracket {
            target: target_mean_temp,
            resistance: max_resistance,
            achieved: ceiling,
        });
    }

    let (mut lo, mut hi) = (0.0, max_resistance);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let mean = mean_at(mid)?;
        if (mean - target_mean_temp).abs() <= TEMP_TOL || hi - lo <= 1e-13 {
            break;
        }
        if mean < target_mean_temp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(mode: Mode, current: f64) -> OperatingProfile {
        OperatingProfile {
            mode,
            current,
            flow_rate: 10.0,
            duration: 3600.0,
            soc_initial: 0.2,
            t_initial: 25.0,
        }
    }

    fn isolated_params() -> VrfbParams {
        VrfbParams {
            u_pos: 0.0,
            u_neg: 0.0,
            ..VrfbParams::default()
        }
    }

    #[test]
    fn ocv_at_half_charge_is_n_times_e0() {
        let params = VrfbParams::default();
        let v = nernst_ocv(&params, 0.5, 303.15).unwrap();
        assert!((v - 28.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ocv_at_eighty_percent() {
        // 20 × (1.40 + 2·8.3144·303.15/96485.33212 · ln 4), evaluated independently
        let params = VrfbParams::default();
        let v = nernst_ocv(&params, 0.8, 303.15).unwrap();
        assert!((v - 29.448_580_513_716_437).abs() < 1e-9, "{v}");
    }

    #[test]
    fn ocv_rejects_soc_outside_open_interval() {
        let params = VrfbParams::default();
        for soc in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                nernst_ocv(&params, soc, 300.0),
                Err(Error::Domain(_))
            ));
        }
        assert!(nernst_ocv(&params, 0.5, 0.0).is_err());
    }

    #[test]
    fn rhs_fixed_point_at_ambient() {
        let params = VrfbParams::default();
        let mut p = profile(Mode::Charging, 0.0);
        p.flow_rate = 0.0;
        p.t_initial = params.t_ambient;
        let d = ode_rhs(&ThermalState::initial(&p), &params, &p);
        assert_eq!((d.t_stack, d.t_pos, d.t_neg, d.soc), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rhs_flow_only_redistributes_heat() {
        let params = isolated_params();
        let p = profile(Mode::Charging, 0.0);
        let state = ThermalState {
            t: 0.0,
            t_stack: 35.0,
            t_pos: 22.0,
            t_neg: 27.5,
            soc: 0.5,
        };
        let d = ode_rhs(&state, &params, &p);
        let net = params.volumetric_heat_capacity()
            * (params.v_stack * d.t_stack + params.v_pos * d.t_pos + params.v_neg * d.t_neg);
        let scale = params.volumetric_heat_capacity() * params.v_stack * d.t_stack.abs();
        assert!(net.abs() <= 1e-12 * scale, "{net}");
    }

    #[test]
    fn rhs_joule_term_only() {
        let params = VrfbParams {
            r_charge: 0.05,
            ..VrfbParams::default()
        };
        let mut p = profile(Mode::Charging, 40.0);
        p.flow_rate = 0.0;
        let d = ode_rhs(&ThermalState::initial(&p), &params, &p);
        // 40² · 0.05 / (3.2 · 1.35e6 · 0.0075)
        assert!((d.t_stack - 80.0 / 32_400.0).abs() < 1e-15, "{}", d.t_stack);
    }

    #[test]
    fn rhs_soc_sign_follows_mode() {
        let params = VrfbParams::default();
        let up = ode_rhs(
            &ThermalState::initial(&profile(Mode::Charging, 40.0)),
            &params,
            &profile(Mode::Charging, 40.0),
        );
        let down = ode_rhs(
            &ThermalState::initial(&profile(Mode::Discharging, 40.0)),
            &params,
            &profile(Mode::Discharging, 40.0),
        );
        assert!(up.soc > 0.0 && down.soc < 0.0);
        assert_eq!(up.soc, -down.soc);
    }

    #[test]
    fn simulation_preserves_fixed_point() {
        let params = VrfbParams::default();
        let mut p = profile(Mode::Charging, 0.0);
        p.t_initial = params.t_ambient;
        let run = simulate_cycle(&params, &p, 1.0).unwrap();
        assert_eq!(run.dataset.len(), 3601);
        assert!(run
            .dataset
            .samples()
            .iter()
            .all(|s| s.temperature_c == params.t_ambient));
    }

    #[test]
    fn simulation_samples_include_endpoints() {
        let params = VrfbParams::default();
        let mut p = profile(Mode::Charging, 40.0);
        p.duration = 10.5;
        let run = simulate_cycle(&params, &p, 1.0).unwrap();
        let times: Vec<f64> = run.dataset.samples().iter().map(|s| s.time_s).collect();
        assert_eq!(times.first(), Some(&0.0));
        assert_eq!(times.last(), Some(&10.5));
        assert_eq!(times.len(), 12);
        assert_eq!(run.final_state.t, 10.5);

        let sparse = simulate_sampled(&params, &p, 1.0, 4).unwrap();
        let times: Vec<f64> = sparse.dataset.samples().iter().map(|s| s.time_s).collect();
        assert_eq!(times, vec![0.0, 4.0, 8.0, 10.5]);
    }

    #[test]
    fn simulation_rejects_bad_step() {
        let params = VrfbParams::default();
        let p = profile(Mode::Charging, 40.0);
        assert!(simulate_cycle(&params, &p, 0.0).is_err());
        assert!(simulate_cycle(&params, &p, 7200.0).is_err());
        let bad = VrfbParams {
            cp: 0.0,
            ..VrfbParams::default()
        };
        assert!(matches!(
            simulate_cycle(&bad, &p, 1.0),
            Err(Error::InvalidParameter { name: "cp", .. })
        ));
    }

    #[test]
    fn closed_form_is_zero_at_start() {
        let params = VrfbParams::default();
        for mode in [Mode::Charging, Mode::Discharging] {
            let v = closed_form_temp(&params, &profile(mode, 40.0), 30.0, 0.0).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn closed_form_is_mode_symmetric() {
        let params = VrfbParams {
            r_charge: 0.12,
            r_discharge: 0.12,
            de_dt: 1e-3,
            ..VrfbParams::default()
        };
        let c = closed_form_temp(&params, &profile(Mode::Charging, 45.0), 29.0, 5400.0).unwrap();
        let d = closed_form_temp(&params, &profile(Mode::Discharging, 45.0), 29.0, 5400.0).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn closed_form_matches_scalar_evaluation() {
        let params = VrfbParams {
            r_charge: 0.25,
            de_dt: 0.002,
            ..VrfbParams::default()
        };
        let p = profile(Mode::Charging, 50.0);
        let v = closed_form_temp(&params, &p, 28.5, 7200.0).unwrap();
        // evaluated separately with V_s = 7.5 L, Q = 10 L/min, t = 2 h
        let expected = 6.461_988_307_242_684e-6;
        assert!(((v - expected) / expected).abs() < 1e-12, "{v:e}");
    }

    #[test]
    fn closed_form_reports_zero_denominator() {
        let heat_cap = 3.2 * 1.35e6;
        // choose dE/dT so that V_s − I·dE/dT/(cp·ρ) vanishes at t = 0
        let params = VrfbParams {
            de_dt: 7.5 * heat_cap / 40.0,
            ..VrfbParams::default()
        };
        let p = profile(Mode::Charging, 40.0);
        assert!(matches!(
            closed_form_temp(&params, &p, 30.0, 0.0),
            Err(Error::DivisionByZero(_))
        ));
        assert!(closed_form_temp(&params, &p, 30.0, -1.0).is_err());
    }

    #[test]
    fn calibration_round_trip() {
        let params = VrfbParams {
            r_charge: 0.05,
            ..VrfbParams::default()
        };
        let p = profile(Mode::Charging, 40.0);
        let target = mean_stack_temperature(&params, &p, 1.0).unwrap();
        let r = calibrate_resistance(&params, &p, target, 1.0).unwrap();
        assert!((r - 0.05).abs() < 1e-4, "{r}");
    }

    #[test]
    fn calibration_cannot_cool_below_initial() {
        // ambient above the start temperature: even R = 0 overshoots t_initial
        let params = VrfbParams::default();
        let p = profile(Mode::Charging, 40.0);
        let err = calibrate_resistance(&params, &p, p.t_initial, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoBracket { resistance, .. } if resistance == 0.0));

        // isolated tanks at ambient: the target is met with zero resistance
        let iso = VrfbParams {
            t_ambient: 25.0,
            ..isolated_params()
        };
        assert_eq!(
            calibrate_resistance(&iso, &p, p.t_initial, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn calibration_reports_unreachable_target() {
        let params = VrfbParams::default();
        let p = profile(Mode::Charging, 40.0);
        let err = calibrate_resistance_bounded(&params, &p, 90.0, 10.0, 1.0).unwrap_err();
        match err {
            Error::NoBracket { achieved, .. } => assert!(achieved < 90.0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rating_warnings() {
        let mut p = profile(Mode::Charging, 60.0);
        assert!(p.rating_warnings().is_empty());
        p.current = 65.0;
        p.flow_rate = 20.0;
        assert_eq!(p.rating_warnings().len(), 2);
    }

    #[test]
    fn params_serialize_volumes_in_litres() {
        let json = serde_json::to_value(VrfbParams::default()).unwrap();
        assert_eq!(json["v_stack_l"], 7.5);
        assert_eq!(json["v_pos_l"], 150.0);
        let back: VrfbParams = serde_json::from_value(json).unwrap();
        assert!((back.v_stack - 7.5e-3).abs() < 1e-18);
        let partial: VrfbParams = serde_json::from_str(r#"{"r_charge": 0.4}"#).unwrap();
        assert_eq!(partial.r_charge, 0.4);
        assert_eq!(partial.n_cells, 20);
    }

    proptest! {
        #[test]
        fn ocv_symmetry(s in 0.011f64..0.989, t in 250.0f64..350.0, i_d in 0.0f64..1e-3, r_sd in 0.0f64..100.0) {
            let params = VrfbParams { i_diff: i_d, r_sd, ..VrfbParams::default() };
            let sum = nernst_ocv(&params, s, t).unwrap() + nernst_ocv(&params, 1.0 - s, t).unwrap();
            let expected = 2.0 * 20.0 * (params.e0 - i_d * r_sd);
            prop_assert!(((sum - expected) / expected).abs() <= 1e-12);
        }

        #[test]
        fn soc_stays_clamped(current in 0.0f64..120.0, soc0 in 0.001f64..0.999, charging in any::<bool>()) {
            let params = VrfbParams { capacity_ah: 1.0, ..VrfbParams::default() };
            let p = OperatingProfile {
                mode: if charging { Mode::Charging } else { Mode::Discharging },
                current,
                flow_rate: 10.0,
                duration: 600.0,
                soc_initial: soc0,
                t_initial: 25.0,
            };
            for state in Trajectory::new(&params, &p, 5.0).unwrap() {
                prop_assert!((SOC_MIN..=SOC_MAX).contains(&state.soc));
            }
        }

        #[test]
        fn relaxation_towards_ambient(ts in 10.0f64..50.0, tp in 10.0f64..50.0, flow in 1.0f64..18.0) {
            let params = VrfbParams::default();
            let p = OperatingProfile {
                mode: Mode::Charging,
                current: 0.0,
                flow_rate: flow,
                duration: 3600.0,
                soc_initial: 0.5,
                t_initial: tp,
            };
            let mut state = ThermalState { t_stack: ts, ..ThermalState::initial(&p) };
            let dev = |s: &ThermalState| {
                (s.t_stack - params.t_ambient).abs()
                    .max((s.t_pos - params.t_ambient).abs())
                    .max((s.t_neg - params.t_ambient).abs())
            };
            let mut prev = dev(&state);
            for _ in 0..600 {
                state = rk4_step(&state, &params, &p, 6.0);
                let d = dev(&state);
                prop_assert!(d <= prev * (1.0 + 1e-12));
                prev = d;
            }
        }

        #[test]
        fn final_stack_temperature_monotone_in_current(i1 in 0.0f64..60.0, i2 in 0.0f64..60.0) {
            let params = VrfbParams::default();
            let (lo, hi) = if i1 <= i2 { (i1, i2) } else { (i2, i1) };
            let mut p = profile(Mode::Discharging, lo);
            p.duration = 1800.0;
            let a = simulate_cycle(&params, &p, 10.0).unwrap().final_state.t_stack;
            p.current = hi;
            let b = simulate_cycle(&params, &p, 10.0).unwrap().final_state.t_stack;
            prop_assert!(b >= a);
        }
    }
}
