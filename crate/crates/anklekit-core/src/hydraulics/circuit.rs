//! Whole-circuit integration: a fixed-step RK4 march of the seven-state ODE
//! (piston position/velocity, two chamber pressures, three accumulator
//! liquid volumes) under the per-phase valve table, plus the per-step record
//! stream and the cycle energy audit.
//!
//! Accumulator pressures are not integrated; they are evaluated from the gas
//! law at the current liquid volume, so the polytropic invariant holds by
//! construction at every stage. Discharging flows taper smoothly to zero as
//! an accumulator runs out of liquid, and pump delivery tapers to zero as
//! the destination approaches the unload pressure, keeping the right-hand
//! side continuous.
//!
//! Energy bookkeeping measures stored and pumped energy against the
//! instantaneous pressure of the low-pressure accumulator B (a tank datum).
//! Because liquid volume is conserved across the network, referencing every
//! node to B's pressure changes no dissipation term and removes B's own
//! storage from the ledger, which is what makes the closure identity
//! `pump + recovered = stored_A + stored_C + output + friction + valves`
//! testable without a stored-B term.

use super::ops::{friction_force, orifice_flow_smooth, pump_flow};
use super::{
    AccumulatorState, HydraulicConfig, HydraulicError, HydraulicState, PhaseValveConfig,
    PumpRoute,
};
use crate::gait::{phase_at, CylinderLoad, GaitPhase};
use std::path::Path;

/// Minimum step count [`simulate_cycle`] accepts.
pub const MIN_SIM_STEPS: usize = 1000;

/// Column header of the time-series CSV.
pub const TIMESERIES_CSV_HEADER: &str =
    "t_s,phase,y_a_m,v_m_s,P2_Pa,P3_Pa,PA_Pa,PB_Pa,PC_Pa,Q_pump_m3_s,pump_W,accA_W,accC_W";

/// Fraction of an accumulator's capacity over which a discharging flow is
/// tapered to zero as the liquid runs out.
const DRAIN_BAND_FRAC: f64 = 0.02;

/// One sample of the simulation output. The CSV carries the first 13
/// columns; the remaining channels feed the energy audit and tests.
#[derive(Debug, Clone, Copy)]
pub struct Record {
    pub t_s: f64,
    pub phase: GaitPhase,
    pub y_a_m: f64,
    pub v_m_s: f64,
    pub p2_pa: f64,
    pub p3_pa: f64,
    pub p_a_pa: f64,
    pub p_b_pa: f64,
    pub p_c_pa: f64,
    pub q_pump_m3_s: f64,
    /// Hydraulic power the pump adds, `(P_dest - P_B) * Q`.
    pub pump_w: f64,
    /// Absolute charging power of A, `P_A * Q_in_A`.
    pub acc_a_w: f64,
    /// Absolute charging power of C.
    pub acc_c_w: f64,
    /// Tank-referenced charging power of A, `(P_A - P_B) * Q_in_A`.
    pub acc_a_gauge_w: f64,
    pub acc_c_gauge_w: f64,
    pub friction_w: f64,
    pub valve_w: f64,
    /// Load power `F_A * v`; positive while the body works on the piston.
    pub load_w: f64,
    /// Commanded piston position from the load series, m.
    pub commanded_m: f64,
    pub f_a_n: f64,
    /// Signed flow in lines v1..v4 (canonical directions: A->lower,
    /// C->lower, B->lower, upper->B).
    pub line_q_m3_s: [f64; 4],
    pub acc_a_gas_m3: f64,
    pub acc_b_gas_m3: f64,
    pub acc_c_gas_m3: f64,
}

/// Full simulation output: one record per step plus the initial sample.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub records: Vec<Record>,
    pub cadence_s: f64,
}

impl TimeSeries {
    pub fn displacement(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_a_m).collect()
    }

    pub fn commanded(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.commanded_m).collect()
    }
}

/// Cycle energy totals in joules. `stored_*` are net changes over the run
/// (negative when an accumulator ends the cycle with less energy than it
/// started, both measured against the tank datum).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyReport {
    pub pump_input_j: f64,
    pub stored_a_j: f64,
    pub stored_c_j: f64,
    pub recovered_gravity_j: f64,
    pub released_pp_j: f64,
    pub friction_loss_j: f64,
    pub valve_loss_j: f64,
    pub net_output_j: f64,
}

impl EnergyReport {
    /// Left side of the closure identity: everything that entered the
    /// hydraulic system.
    pub fn closure_lhs_j(&self) -> f64 {
        self.pump_input_j + self.recovered_gravity_j
    }

    /// `|lhs - (stored_A + stored_C + output + friction + valves)|`.
    pub fn closure_residual_j(&self) -> f64 {
        (self.closure_lhs_j()
            - (self.stored_a_j
                + self.stored_c_j
                + self.net_output_j
                + self.friction_loss_j
                + self.valve_loss_j))
            .abs()
    }

    /// Residual as a fraction of the energy input.
    pub fn closure_residual_frac(&self) -> f64 {
        self.closure_residual_j() / self.closure_lhs_j().max(1e-12)
    }
}

fn smoothstep01(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Per-accumulator constants extracted from a state.
#[derive(Clone, Copy)]
struct AccParams {
    capacity_m3: f64,
    precharge_pa: f64,
    polytropic_n: f64,
}

impl AccParams {
    fn of(acc: &AccumulatorState) -> Self {
        Self {
            capacity_m3: acc.capacity_m3,
            precharge_pa: acc.precharge_pa,
            polytropic_n: acc.polytropic_n,
        }
    }

    fn pressure(&self, liquid_m3: f64) -> Result<f64, HydraulicError> {
        let gas = self.capacity_m3 - liquid_m3;
        if gas <= 0.0 {
            return Err(HydraulicError::OverCharge { gas_m3: gas });
        }
        Ok(self.precharge_pa * (self.capacity_m3 / gas).powf(self.polytropic_n))
    }

    fn drain_gate(&self, liquid_m3: f64) -> f64 {
        smoothstep01(liquid_m3 / (DRAIN_BAND_FRAC * self.capacity_m3))
    }

    fn state_with_liquid(&self, liquid_m3: f64) -> AccumulatorState {
        AccumulatorState::precharged(self.capacity_m3, self.precharge_pa, self.polytropic_n)
            .with_gas_volume(self.capacity_m3 - liquid_m3)
    }
}

/// State layout: [y, v, P2, P3, liq_A, liq_B, liq_C].
type StateVec = [f64; 7];

/// Instantaneous flow/power resolution at one state.
struct Flows {
    line_q: [f64; 4],
    q_pump: f64,
    pump_w: f64,
    qin_upper: f64,
    qin_lower: f64,
    qin_a: f64,
    qin_b: f64,
    qin_c: f64,
    valve_w: f64,
    p_a: f64,
    p_b: f64,
    p_c: f64,
}

/// The assembled circuit: configuration plus derived constants.
pub struct Circuit {
    cfg: HydraulicConfig,
    pump_q: f64,
}

impl Circuit {
    pub fn new(cfg: HydraulicConfig) -> Result<Self, HydraulicError> {
        cfg.validate()?;
        let pump_q = pump_flow(&cfg.pump);
        Ok(Self { cfg, pump_q })
    }

    pub fn config(&self) -> &HydraulicConfig {
        &self.cfg
    }

    fn flows(
        &self,
        s: &StateVec,
        acc: &[AccParams; 3],
        phase: GaitPhase,
        valves: &PhaseValveConfig,
    ) -> Result<Flows, HydraulicError> {
        let entry = valves.entry(phase);
        let [_, _, p2, p3, liq_a, liq_b, liq_c] = *s;
        let p_a = acc[0].pressure(liq_a)?;
        let p_b = acc[1].pressure(liq_b)?;
        let p_c = acc[2].pressure(liq_c)?;
        let lam = self.cfg.smoothing_dp_pa;

        let mut line_q = [0.0; 4];
        // canonical line directions: v1 A->lower, v2 C->lower, v3 B->lower,
        // v4 upper->B; a discharging accumulator gates its own outflow
        let opens = [entry.v1, entry.v2, entry.v3, entry.v4];
        let dps = [p_a - p3, p_c - p3, p_b - p3, p2 - p_b];
        let src_gate = [
            acc[0].drain_gate(liq_a),
            acc[2].drain_gate(liq_c),
            acc[1].drain_gate(liq_b),
            1.0, // the upper chamber never runs dry; volume is geometric
        ];
        // reverse flow through v4 drains B
        let rev_gate = [1.0, 1.0, 1.0, acc[1].drain_gate(liq_b)];
        let mut valve_w = 0.0;
        for i in 0..4 {
            if !opens[i] {
                continue;
            }
            let v = &self.cfg.valves[i];
            let q = orifice_flow_smooth(
                dps[i],
                v.orifice_diameter_m,
                v.discharge_coeff,
                &self.cfg.fluid,
                lam,
            );
            let q = q * if q >= 0.0 { src_gate[i] } else { rev_gate[i] };
            line_q[i] = q;
            valve_w += dps[i] * q;
        }

        let (q_pump, pump_w, pump_to_upper) = match entry.pump {
            PumpRoute::Off => (0.0, 0.0, false),
            PumpRoute::ChargeA => {
                let gate = self.unload_gate(p_a) * acc[1].drain_gate(liq_b);
                let q = self.pump_q * gate;
                (q, (p_a - p_b) * q, false)
            }
            PumpRoute::DriveUpper => {
                let gate = self.unload_gate(p2) * acc[1].drain_gate(liq_b);
                let q = self.pump_q * gate;
                (q, (p2 - p_b) * q, true)
            }
        };

        Ok(Flows {
            line_q,
            q_pump,
            pump_w,
            qin_upper: if pump_to_upper { q_pump } else { 0.0 } - line_q[3],
            qin_lower: line_q[0] + line_q[1] + line_q[2],
            qin_a: if pump_to_upper { 0.0 } else { q_pump } - line_q[0],
            qin_b: line_q[3] - line_q[2] - q_pump,
            qin_c: -line_q[1],
            valve_w,
            p_a,
            p_b,
            p_c,
        })
    }

    fn unload_gate(&self, p_dest: f64) -> f64 {
        let start = self.cfg.pump_unload_pa - self.cfg.pump_unload_band_pa;
        1.0 - smoothstep01((p_dest - start) / self.cfg.pump_unload_band_pa)
    }

    fn rhs(
        &self,
        s: &StateVec,
        acc: &[AccParams; 3],
        phase: GaitPhase,
        valves: &PhaseValveConfig,
        f_a: f64,
    ) -> Result<StateVec, HydraulicError> {
        let cyl = &self.cfg.cylinder;
        let [y, v, p2, p3, ..] = *s;
        let v2 = cyl.dead_volume_upper_m3 + cyl.area_m2 * y;
        let v3 = cyl.dead_volume_lower_m3 - cyl.area_m2 * y;
        if v2 <= 0.0 {
            return Err(HydraulicError::ChamberVolume {
                side: super::ChamberSide::Upper,
                volume_m3: v2,
            });
        }
        if v3 <= 0.0 {
            return Err(HydraulicError::ChamberVolume {
                side: super::ChamberSide::Lower,
                volume_m3: v3,
            });
        }
        let fl = self.flows(s, acc, phase, valves)?;
        let beta = self.cfg.fluid.bulk_modulus_pa;
        let a = (f_a + (p2 - p3) * cyl.area_m2 - friction_force(v, cyl)) / cyl.moving_mass_kg;
        Ok([
            v,
            a,
            beta / v2 * (fl.qin_upper - cyl.area_m2 * v),
            beta / v3 * (fl.qin_lower + cyl.area_m2 * v),
            fl.qin_a,
            fl.qin_b,
            fl.qin_c,
        ])
    }

    /// One RK4 step with the load sampled at the start, middle and end of
    /// the interval. The valve topology is held fixed across the step.
    fn step_vec(
        &self,
        s: &StateVec,
        acc: &[AccParams; 3],
        phase: GaitPhase,
        valves: &PhaseValveConfig,
        f_a: [f64; 3],
        dt: f64,
    ) -> Result<StateVec, HydraulicError> {
        let add = |a: &StateVec, b: &StateVec, h: f64| {
            let mut out = *a;
            for i in 0..7 {
                out[i] += h * b[i];
            }
            out
        };
        let k1 = self.rhs(s, acc, phase, valves, f_a[0])?;
        let k2 = self.rhs(&add(s, &k1, dt / 2.0), acc, phase, valves, f_a[1])?;
        let k3 = self.rhs(&add(s, &k2, dt / 2.0), acc, phase, valves, f_a[1])?;
        let k4 = self.rhs(&add(s, &k3, dt), acc, phase, valves, f_a[2])?;
        let mut out = *s;
        for i in 0..7 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        // inelastic end stops and liquid floors
        let cyl = &self.cfg.cylinder;
        if out[0] <= 0.0 {
            out[0] = 0.0;
            out[1] = out[1].max(0.0);
        } else if out[0] >= cyl.stroke_m {
            out[0] = cyl.stroke_m;
            out[1] = out[1].min(0.0);
        }
        for i in 4..7 {
            out[i] = out[i].max(0.0);
        }
        Ok(out)
    }

    /// One RK4 update of the full state under a constant load, the
    /// component-level stepping contract. The piston is clamped to
    /// `[0, stroke]` with its velocity zeroed at the end stops.
    pub fn step(
        &self,
        state: &HydraulicState,
        phase: GaitPhase,
        valves: &PhaseValveConfig,
        f_a: f64,
        dt: f64,
    ) -> Result<HydraulicState, HydraulicError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(HydraulicError::InvalidParam {
                name: "dt",
                requirement: "positive and finite",
                value: dt,
            });
        }
        let acc = [
            AccParams::of(&state.acc_a),
            AccParams::of(&state.acc_b),
            AccParams::of(&state.acc_c),
        ];
        let s = [
            state.y_a_m,
            state.v_m_s,
            state.p2_pa,
            state.p3_pa,
            state.acc_a.liquid_volume_m3(),
            state.acc_b.liquid_volume_m3(),
            state.acc_c.liquid_volume_m3(),
        ];
        let out = self.step_vec(&s, &acc, phase, valves, [f_a; 3], dt)?;
        Ok(HydraulicState {
            y_a_m: out[0],
            v_m_s: out[1],
            p2_pa: out[2],
            p3_pa: out[3],
            acc_a: acc[0].state_with_liquid(out[4]),
            acc_b: acc[1].state_with_liquid(out[5]),
            acc_c: acc[2].state_with_liquid(out[6]),
            t_s: state.t_s + dt,
        })
    }

    fn record(
        &self,
        t_s: f64,
        s: &StateVec,
        acc: &[AccParams; 3],
        phase: GaitPhase,
        f_a: f64,
        commanded_m: f64,
    ) -> Result<Record, HydraulicError> {
        let fl = self.flows(s, acc, phase, &self.cfg.phase_valve_table)?;
        let v = s[1];
        Ok(Record {
            t_s,
            phase,
            y_a_m: s[0],
            v_m_s: v,
            p2_pa: s[2],
            p3_pa: s[3],
            p_a_pa: fl.p_a,
            p_b_pa: fl.p_b,
            p_c_pa: fl.p_c,
            q_pump_m3_s: fl.q_pump,
            pump_w: fl.pump_w,
            acc_a_w: fl.p_a * fl.qin_a,
            acc_c_w: fl.p_c * fl.qin_c,
            acc_a_gauge_w: (fl.p_a - fl.p_b) * fl.qin_a,
            acc_c_gauge_w: (fl.p_c - fl.p_b) * fl.qin_c,
            friction_w: friction_force(v, &self.cfg.cylinder) * v,
            valve_w: fl.valve_w,
            load_w: f_a * v,
            commanded_m,
            f_a_n: f_a,
            line_q_m3_s: fl.line_q,
            acc_a_gas_m3: acc[0].capacity_m3 - s[4],
            acc_b_gas_m3: acc[1].capacity_m3 - s[5],
            acc_c_gas_m3: acc[2].capacity_m3 - s[6],
        })
    }
}

/// Integrates one gait cycle of `config.cadence_s` seconds in `n_steps`
/// fixed RK4 steps under the given cylinder load/command series, producing
/// the per-step record stream and its energy audit.
///
/// The piston starts at the commanded position of the load series at
/// `t_frac = 0`, at rest, with both chambers at B's initial pressure.
pub fn simulate_cycle(
    config: &HydraulicConfig,
    load: &CylinderLoad,
    n_steps: usize,
) -> Result<(TimeSeries, EnergyReport), HydraulicError> {
    if n_steps < MIN_SIM_STEPS {
        return Err(HydraulicError::TooFewSteps { got: n_steps, min: MIN_SIM_STEPS });
    }
    if load.samples.is_empty() {
        return Err(HydraulicError::LoadCoverage(f64::NAN, f64::NAN));
    }
    let (t0, t1) = (
        load.samples[0].t_frac,
        load.samples[load.samples.len() - 1].t_frac,
    );
    if t0 > 1e-9 || t1 < 1.0 - 1e-9 {
        return Err(HydraulicError::LoadCoverage(t0, t1));
    }
    let circuit = Circuit::new(config.clone())?;
    let cfg = circuit.config();
    let dt = cfg.cadence_s / n_steps as f64;

    let init = HydraulicState::initial(cfg, load.interpolate(0.0).1);
    let acc = [
        AccParams::of(&init.acc_a),
        AccParams::of(&init.acc_b),
        AccParams::of(&init.acc_c),
    ];
    let mut s: StateVec = [
        init.y_a_m,
        init.v_m_s,
        init.p2_pa,
        init.p3_pa,
        init.acc_a.liquid_volume_m3(),
        init.acc_b.liquid_volume_m3(),
        init.acc_c.liquid_volume_m3(),
    ];

    let mut records = Vec::with_capacity(n_steps + 1);
    let (f0, c0) = load.interpolate(0.0);
    let phase0 = phase_at(0.0, &cfg.phase_bounds)?;
    records.push(circuit.record(0.0, &s, &acc, phase0, f0, c0)?);

    for i in 0..n_steps {
        let t = i as f64 * dt;
        let t_frac = t / cfg.cadence_s;
        let phase = phase_at(t_frac.min(1.0), &cfg.phase_bounds)?;
        let fa = [
            load.interpolate(t_frac).0,
            load.interpolate((t + dt / 2.0) / cfg.cadence_s).0,
            load.interpolate((t + dt) / cfg.cadence_s).0,
        ];
        s = circuit.step_vec(&s, &acc, phase, &cfg.phase_valve_table, fa, dt)?;
        if s.iter().any(|x| !x.is_finite()) {
            return Err(HydraulicError::NonFinite { step: i, phase });
        }
        let t_next = (i + 1) as f64 * dt;
        let frac_next = (t_next / cfg.cadence_s).min(1.0);
        let phase_next = phase_at(frac_next, &cfg.phase_bounds)?;
        let (f_a, commanded) = load.interpolate(frac_next);
        records.push(circuit.record(t_next, &s, &acc, phase_next, f_a, commanded)?);
    }

    let series = TimeSeries { records, cadence_s: cfg.cadence_s };
    let report = energy_audit(&series)?;
    Ok((series, report))
}

/// Trapezoidal integration of every power channel of the series into an
/// [`EnergyReport`]. A single-sample series integrates to all zeros.
pub fn energy_audit(series: &TimeSeries) -> Result<EnergyReport, HydraulicError> {
    if series.records.is_empty() {
        return Err(HydraulicError::EmptySeries);
    }
    let trap = |f: &dyn Fn(&Record) -> f64| -> f64 {
        let r = &series.records;
        let mut acc = 0.0;
        for i in 1..r.len() {
            acc += 0.5 * (f(&r[i]) + f(&r[i - 1])) * (r[i].t_s - r[i - 1].t_s);
        }
        acc
    };
    let trap_pp = |f: &dyn Fn(&Record) -> f64| -> f64 {
        let r = &series.records;
        let mut acc = 0.0;
        for i in 1..r.len() {
            if r[i].phase == GaitPhase::PoweredPlantar
                && r[i - 1].phase == GaitPhase::PoweredPlantar
            {
                acc += 0.5 * (f(&r[i]) + f(&r[i - 1])) * (r[i].t_s - r[i - 1].t_s);
            }
        }
        acc
    };
    Ok(EnergyReport {
        pump_input_j: trap(&|r| r.pump_w),
        stored_a_j: trap(&|r| r.acc_a_gauge_w),
        stored_c_j: trap(&|r| r.acc_c_gauge_w),
        recovered_gravity_j: trap(&|r| r.load_w.max(0.0)),
        released_pp_j: trap_pp(&|r| -(r.acc_a_gauge_w + r.acc_c_gauge_w)).max(0.0),
        friction_loss_j: trap(&|r| r.friction_w),
        valve_loss_j: trap(&|r| r.valve_w),
        net_output_j: trap(&|r| (-r.load_w).max(0.0)),
    })
}

/// Writes the 13-column time-series CSV.
pub fn write_timeseries_csv(series: &TimeSeries, path: &Path) -> Result<(), HydraulicError> {
    std::fs::write(path, timeseries_csv_string(series)).map_err(|source| HydraulicError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Renders the 13-column time-series CSV as a string.
pub fn timeseries_csv_string(series: &TimeSeries) -> String {
    let mut out = String::with_capacity(series.records.len() * 96 + 128);
    out.push_str(TIMESERIES_CSV_HEADER);
    out.push('\n');
    for r in &series.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t_s,
            r.phase.tag(),
            r.y_a_m,
            r.v_m_s,
            r.p2_pa,
            r.p3_pa,
            r.p_a_pa,
            r.p_b_pa,
            r.p_c_pa,
            r.q_pump_m3_s,
            r.pump_w,
            r.acc_a_w,
            r.acc_c_w
        ));
    }
    out
}

/// Pearson correlation coefficient of two equal-length series; 0 when either
/// side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
