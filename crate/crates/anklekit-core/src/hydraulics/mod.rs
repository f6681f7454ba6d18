//! Lumped-parameter simulation of the four-phase electro-hydraulic ankle
//! circuit.
//!
//! The circuit couples a single-rod cylinder (upper chamber `P2`, lower
//! chamber `P3`) to three gas accumulators through four switching valves and
//! a fixed-displacement pump:
//!
//! * `A` is the high-pressure store the pump charges during stance,
//! * `C` recovers the work the body does on the piston during controlled
//!   dorsiflexion,
//! * `B` is a large, soft low-pressure accumulator standing in for the tank.
//!
//! Valve lines, with their canonical positive flow directions:
//! `v1: A -> lower`, `v2: C -> lower`, `v3: B -> lower`, `v4: upper -> B`.
//! Which lines are open, and where the pump discharges, is a per-phase table
//! ([`PhaseValveConfig`]); the bundled default connects both chambers through
//! B during controlled plantarflexion (damping), charges C during controlled
//! dorsiflexion (recovery), discharges A and C into the lower chamber during
//! powered plantarflexion (thrust), and uses the pump directly on the upper
//! chamber during swing (reset).
//!
//! Sign conventions: piston position `y_a` grows in the direction that
//! compresses the lower chamber, which is the dorsiflexion direction of the
//! linkage; positive load `F_A` pushes the piston toward +y. Push-off thrust
//! therefore drives the piston toward -y.

mod circuit;
mod ops;

pub use circuit::{
    energy_audit, pearson, simulate_cycle, timeseries_csv_string, write_timeseries_csv, Circuit,
    EnergyReport, Record, TimeSeries, MIN_SIM_STEPS, TIMESERIES_CSV_HEADER,
};
pub use ops::{
    accumulator_power, accumulator_update, chamber_pressure_rate, cylinder_accel, friction_force,
    orifice_flow, orifice_flow_smooth, pump_flow, pump_power, ChamberSide,
};

use crate::gait::{GaitPhase, LinkageMap, PhaseBounds};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HydraulicError {
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParam {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("{side:?} chamber volume {volume_m3} m3 is not positive (piston out of envelope)")]
    ChamberVolume { side: ChamberSide, volume_m3: f64 },
    #[error("accumulator over-charge: gas volume would fall to {gas_m3} m3")]
    OverCharge { gas_m3: f64 },
    #[error("accumulator over-discharge: gas volume {gas_m3} m3 would exceed capacity {capacity_m3} m3")]
    OverDischarge { gas_m3: f64, capacity_m3: f64 },
    #[error("non-finite state at step {step} ({phase}); integration blew up")]
    NonFinite { step: usize, phase: GaitPhase },
    #[error("simulation needs at least {min} steps, got {got}")]
    TooFewSteps { got: usize, min: usize },
    #[error("load series must cover t_frac in [0, 1], got [{0}, {1}]")]
    LoadCoverage(f64, f64),
    #[error("time series is empty")]
    EmptySeries,
    #[error(transparent)]
    Gait(#[from] crate::gait::GaitError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn check_pos(name: &'static str, value: f64) -> Result<(), HydraulicError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(HydraulicError::InvalidParam { name, requirement: "positive and finite", value })
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), HydraulicError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(HydraulicError::InvalidParam { name, requirement: "nonnegative and finite", value })
    }
}

/// Working-fluid properties.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluidProps {
    pub bulk_modulus_pa: f64,
    pub density_kg_m3: f64,
    pub kinematic_viscosity_m2_s: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        Self {
            bulk_modulus_pa: 1.4e9,
            density_kg_m3: 850.0,
            kinematic_viscosity_m2_s: 46e-6,
        }
    }
}

impl FluidProps {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        check_pos("bulk_modulus_pa", self.bulk_modulus_pa)?;
        check_pos("density_kg_m3", self.density_kg_m3)?;
        check_pos("kinematic_viscosity_m2_s", self.kinematic_viscosity_m2_s)
    }
}

/// Cylinder geometry, inertia and friction.
///
/// Chamber volumes are affine in piston position: upper `V2 = V2_0 + A*y`,
/// lower `V3 = V3_0 - A*y`, so `dead_volume_lower_m3` must exceed
/// `area * stroke` for the lower chamber to stay open over the full stroke.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CylinderParams {
    pub area_m2: f64,
    pub stroke_m: f64,
    pub dead_volume_upper_m3: f64,
    pub dead_volume_lower_m3: f64,
    pub moving_mass_kg: f64,
    pub coulomb_friction_n: f64,
    pub viscous_friction_n_s_m: f64,
    pub friction_smoothing_m_s: f64,
}

impl Default for CylinderParams {
    fn default() -> Self {
        Self {
            area_m2: 160e-6,
            stroke_m: 0.040,
            dead_volume_upper_m3: 3e-6,
            dead_volume_lower_m3: 9.4e-6,
            moving_mass_kg: 0.5,
            coulomb_friction_n: 20.0,
            viscous_friction_n_s_m: 100.0,
            friction_smoothing_m_s: 2e-3,
        }
    }
}

impl CylinderParams {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        check_pos("area_m2", self.area_m2)?;
        check_pos("stroke_m", self.stroke_m)?;
        check_pos("dead_volume_upper_m3", self.dead_volume_upper_m3)?;
        check_pos("dead_volume_lower_m3", self.dead_volume_lower_m3)?;
        check_pos("moving_mass_kg", self.moving_mass_kg)?;
        check_nonneg("coulomb_friction_n", self.coulomb_friction_n)?;
        check_nonneg("viscous_friction_n_s_m", self.viscous_friction_n_s_m)?;
        check_pos("friction_smoothing_m_s", self.friction_smoothing_m_s)?;
        if self.dead_volume_lower_m3 <= self.area_m2 * self.stroke_m {
            return Err(HydraulicError::InvalidParam {
                name: "dead_volume_lower_m3",
                requirement: "greater than area_m2 * stroke_m",
                value: self.dead_volume_lower_m3,
            });
        }
        Ok(())
    }
}

/// Gas accumulator obeying the polytropic law `P * V_gas^n = const`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccumulatorState {
    pub capacity_m3: f64,
    pub precharge_pa: f64,
    pub polytropic_n: f64,
    pub gas_volume_m3: f64,
    pub pressure_pa: f64,
}

impl AccumulatorState {
    /// Accumulator at rest: all gas, pressure at precharge.
    pub fn precharged(capacity_m3: f64, precharge_pa: f64, polytropic_n: f64) -> Self {
        Self {
            capacity_m3,
            precharge_pa,
            polytropic_n,
            gas_volume_m3: capacity_m3,
            pressure_pa: precharge_pa,
        }
    }

    /// Accumulator holding enough liquid to sit at `pressure_pa >= precharge`.
    pub fn charged_to(
        capacity_m3: f64,
        precharge_pa: f64,
        polytropic_n: f64,
        pressure_pa: f64,
    ) -> Self {
        let gas_volume_m3 =
            capacity_m3 * (precharge_pa / pressure_pa).powf(1.0 / polytropic_n);
        Self { capacity_m3, precharge_pa, polytropic_n, gas_volume_m3, pressure_pa }
    }

    pub fn liquid_volume_m3(&self) -> f64 {
        self.capacity_m3 - self.gas_volume_m3
    }

    /// Rebuilds the state at a new gas volume, pressure from the gas law.
    pub fn with_gas_volume(&self, gas_volume_m3: f64) -> Self {
        Self {
            gas_volume_m3,
            pressure_pa: self.precharge_pa
                * (self.capacity_m3 / gas_volume_m3).powf(self.polytropic_n),
            ..*self
        }
    }

    /// Relative departure from `P * V_gas^n = P_pre * V0^n`; ~1e-16 by
    /// construction, larger only if fields were mutated inconsistently.
    pub fn polytropic_residual(&self) -> f64 {
        let reference = self.precharge_pa * self.capacity_m3.powf(self.polytropic_n);
        (self.pressure_pa * self.gas_volume_m3.powf(self.polytropic_n) / reference - 1.0).abs()
    }

    pub fn validate(&self) -> Result<(), HydraulicError> {
        check_pos("capacity_m3", self.capacity_m3)?;
        check_pos("precharge_pa", self.precharge_pa)?;
        check_pos("polytropic_n", self.polytropic_n)?;
        check_pos("gas_volume_m3", self.gas_volume_m3)?;
        if self.gas_volume_m3 > self.capacity_m3 * (1.0 + 1e-12) {
            return Err(HydraulicError::OverDischarge {
                gas_m3: self.gas_volume_m3,
                capacity_m3: self.capacity_m3,
            });
        }
        Ok(())
    }
}

/// Fixed-displacement pump on a speed source.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PumpParams {
    pub displacement_m3_rev: f64,
    pub speed_rpm: f64,
    pub efficiency: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        Self { displacement_m3_rev: 65.6e-9, speed_rpm: 3850.0, efficiency: 0.6 }
    }
}

impl PumpParams {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        check_pos("displacement_m3_rev", self.displacement_m3_rev)?;
        check_nonneg("speed_rpm", self.speed_rpm)?;
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(HydraulicError::InvalidParam {
                name: "efficiency",
                requirement: "in (0, 1]",
                value: self.efficiency,
            });
        }
        Ok(())
    }
}

/// Switching-valve orifice.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValveParams {
    pub orifice_diameter_m: f64,
    pub discharge_coeff: f64,
    pub normally_open: bool,
}

impl Default for ValveParams {
    fn default() -> Self {
        Self { orifice_diameter_m: 0.76e-3, discharge_coeff: 0.7, normally_open: true }
    }
}

impl ValveParams {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        check_pos("orifice_diameter_m", self.orifice_diameter_m)?;
        if !(self.discharge_coeff > 0.0 && self.discharge_coeff <= 1.0) {
            return Err(HydraulicError::InvalidParam {
                name: "discharge_coeff",
                requirement: "in (0, 1]",
                value: self.discharge_coeff,
            });
        }
        Ok(())
    }
}

/// Where the pump discharges during a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpRoute {
    Off,
    /// Charge accumulator A (suction from B).
    ChargeA,
    /// Feed the upper chamber directly (suction from B).
    DriveUpper,
}

/// Valve states and pump routing for one phase.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseValveEntry {
    pub v1: bool,
    pub v2: bool,
    pub v3: bool,
    pub v4: bool,
    pub pump: PumpRoute,
}

/// One [`PhaseValveEntry`] per gait phase.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseValveConfig {
    pub cp: PhaseValveEntry,
    pub cd: PhaseValveEntry,
    pub pp: PhaseValveEntry,
    pub sw: PhaseValveEntry,
}

impl PhaseValveConfig {
    pub fn entry(&self, phase: GaitPhase) -> PhaseValveEntry {
        match phase {
            GaitPhase::ControlledPlantar => self.cp,
            GaitPhase::ControlledDorsi => self.cd,
            GaitPhase::PoweredPlantar => self.pp,
            GaitPhase::Swing => self.sw,
        }
    }

    /// No line open, pump off, for every phase.
    pub fn all_closed() -> Self {
        let closed = PhaseValveEntry { v1: false, v2: false, v3: false, v4: false, pump: PumpRoute::Off };
        Self { cp: closed, cd: closed, pp: closed, sw: closed }
    }
}

impl Default for PhaseValveConfig {
    fn default() -> Self {
        Self {
            // damping: chambers exchange through B
            cp: PhaseValveEntry { v1: false, v2: false, v3: true, v4: true, pump: PumpRoute::ChargeA },
            // recovery: lower chamber charges C, upper refills from B
            cd: PhaseValveEntry { v1: false, v2: true, v3: false, v4: true, pump: PumpRoute::ChargeA },
            // thrust: A and C discharge into the lower chamber, upper vents to B
            pp: PhaseValveEntry { v1: true, v2: true, v3: false, v4: true, pump: PumpRoute::ChargeA },
            // reset: pump drives the upper chamber, lower vents to B
            sw: PhaseValveEntry { v1: false, v2: false, v3: true, v4: false, pump: PumpRoute::DriveUpper },
        }
    }
}

/// Initial condition for one accumulator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccumulatorInit {
    pub capacity_m3: f64,
    pub precharge_pa: f64,
    pub polytropic_n: f64,
    pub initial_pressure_pa: f64,
}

impl AccumulatorInit {
    pub fn state(&self) -> AccumulatorState {
        if self.initial_pressure_pa <= self.precharge_pa {
            AccumulatorState::precharged(self.capacity_m3, self.precharge_pa, self.polytropic_n)
        } else {
            AccumulatorState::charged_to(
                self.capacity_m3,
                self.precharge_pa,
                self.polytropic_n,
                self.initial_pressure_pa,
            )
        }
    }

    pub fn validate(&self) -> Result<(), HydraulicError> {
        self.state().validate()?;
        check_pos("initial_pressure_pa", self.initial_pressure_pa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AccumulatorsConfig {
    pub a: AccumulatorInit,
    pub b: AccumulatorInit,
    pub c: AccumulatorInit,
}

/// Full simulation configuration. `Default` carries the bundled component
/// values (pump 65.6 mm3/rev at 3850 rpm, 160 mm2 cylinder with 40 mm
/// stroke, 0.76 mm valves, 80/70/20 bar accumulators).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HydraulicConfig {
    pub fluid: FluidProps,
    pub cylinder: CylinderParams,
    pub pump: PumpParams,
    /// Valve parameters for lines v1..v4 in order.
    pub valves: [ValveParams; 4],
    pub accumulators: AccumulatorsConfig,
    pub phase_bounds: PhaseBounds,
    pub phase_valve_table: PhaseValveConfig,
    pub n_steps: usize,
    pub cadence_s: f64,
    pub linkage: LinkageMap,
    /// Pressure scale of the orifice-law regularization (see
    /// [`orifice_flow_smooth`]).
    pub smoothing_dp_pa: f64,
    /// Pump unloads (flow tapers to zero) as the destination pressure
    /// approaches this value.
    pub pump_unload_pa: f64,
    /// Width of the unload taper.
    pub pump_unload_band_pa: f64,
}

impl Default for HydraulicConfig {
    fn default() -> Self {
        Self {
            fluid: FluidProps::default(),
            cylinder: CylinderParams::default(),
            pump: PumpParams::default(),
            valves: [
                ValveParams { normally_open: false, ..ValveParams::default() },
                ValveParams { normally_open: false, ..ValveParams::default() },
                ValveParams::default(),
                ValveParams::default(),
            ],
            accumulators: AccumulatorsConfig {
                a: AccumulatorInit {
                    capacity_m3: 1.3e-5,
                    precharge_pa: 8.0e6,
                    polytropic_n: 1.4,
                    initial_pressure_pa: 1.6e7,
                },
                b: AccumulatorInit {
                    capacity_m3: 1.3e-4,
                    precharge_pa: 2.0e6,
                    polytropic_n: 1.4,
                    initial_pressure_pa: 2.2e6,
                },
                c: AccumulatorInit {
                    capacity_m3: 1.3e-5,
                    precharge_pa: 7.0e6,
                    polytropic_n: 1.4,
                    initial_pressure_pa: 7.0e6,
                },
            },
            phase_bounds: PhaseBounds::default(),
            phase_valve_table: PhaseValveConfig::default(),
            n_steps: 20_000,
            cadence_s: 1.1,
            linkage: LinkageMap { moment_arm_m: 0.09, neutral_angle_rad: -0.25 },
            smoothing_dp_pa: 2e5,
            pump_unload_pa: 1.8e7,
            pump_unload_band_pa: 5e5,
        }
    }
}

impl HydraulicConfig {
    pub fn validate(&self) -> Result<(), HydraulicError> {
        self.fluid.validate()?;
        self.cylinder.validate()?;
        self.pump.validate()?;
        for v in &self.valves {
            v.validate()?;
        }
        self.accumulators.a.validate()?;
        self.accumulators.b.validate()?;
        self.accumulators.c.validate()?;
        self.phase_bounds.validate()?;
        self.linkage.validate()?;
        check_pos("cadence_s", self.cadence_s)?;
        check_pos("smoothing_dp_pa", self.smoothing_dp_pa)?;
        check_pos("pump_unload_pa", self.pump_unload_pa)?;
        check_pos("pump_unload_band_pa", self.pump_unload_band_pa)?;
        Ok(())
    }
}

/// Instantaneous circuit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydraulicState {
    pub y_a_m: f64,
    pub v_m_s: f64,
    pub p2_pa: f64,
    pub p3_pa: f64,
    pub acc_a: AccumulatorState,
    pub acc_b: AccumulatorState,
    pub acc_c: AccumulatorState,
    pub t_s: f64,
}

impl HydraulicState {
    /// Rest state with both chambers at B's pressure and accumulators at
    /// their configured initial charge.
    pub fn initial(config: &HydraulicConfig, y0_m: f64) -> Self {
        let acc_b = config.accumulators.b.state();
        Self {
            y_a_m: y0_m.clamp(0.0, config.cylinder.stroke_m),
            v_m_s: 0.0,
            p2_pa: acc_b.pressure_pa,
            p3_pa: acc_b.pressure_pa,
            acc_a: config.accumulators.a.state(),
            acc_b,
            acc_c: config.accumulators.c.state(),
            t_s: 0.0,
        }
    }
}
