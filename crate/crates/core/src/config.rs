//! TOML run configuration. User-facing units are Hz, kHz, µs, Å and degrees.
//!
//! ```toml
//! s_spin = "S"
//! spinning_hz = 20000.0
//!
//! [[spin]]
//! label = "S"
//! nucleus = "13C"
//! shift_hz = 0.0
//!
//! [[spin]]
//! label = "I"
//! shift_hz = -12000.0
//! csa_aniso_hz = 5000.0
//! csa_eta = 0.3
//! csa_euler_deg = [0.0, 30.0, 0.0]
//!
//! [[dipolar]]
//! spins = ["I", "S"]
//! distance_a = 1.5          # or b_hz = -2251.0
//! euler_deg = [0.0, 0.0, 0.0]
//!
//! [[scalar]]
//! spins = ["I", "S"]
//! j_hz = 35.0
//!
//! [tofu]
//! b_over_wr = 3.0
//! condition = "quarter"     # or c_over_wr = 0.25
//! steps = 200
//!
//! [experiment]
//! n_list = [1, 2, 3]
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::num::{deg, hz, lit, Real};
use crate::powder::{generate_orientations, OrientationSet, PowderSpec, Scheme};
use crate::propagator::{Detection, Resolution};
use crate::rfgen::{Condition, Playback, TofuParams};
use crate::sequence::{ExperimentParams, HardPulse, SelectivePulseParams};
use crate::spinsys::{
    dipole_coupling_constant, DipolarCoupling, EulerAngles, ScalarCoupling, Spin, SpinSystem, GAMMA_13C, GAMMA_15N,
    GAMMA_1H,
};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label of the dephasing S spin.
    pub s_spin: String,
    pub spinning_hz: f64,
    #[serde(default, rename = "spin")]
    pub spins: Vec<SpinConfig>,
    #[serde(default)]
    pub dipolar: Vec<DipolarConfig>,
    #[serde(default)]
    pub scalar: Vec<ScalarConfig>,
    #[serde(default)]
    pub tofu: TofuConfig,
    #[serde(default)]
    pub selective: SelectiveConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub powder: PowderConfig,
    #[serde(default)]
    pub chart: ChartConfig,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub label: String,
    pub nucleus: Option<String>,
    /// rad s⁻¹ T⁻¹, overrides `nucleus`.
    pub gyromagnetic_ratio: Option<f64>,
    #[serde(default)]
    pub shift_hz: f64,
    #[serde(default)]
    pub csa_aniso_hz: f64,
    #[serde(default)]
    pub csa_eta: f64,
    #[serde(default)]
    pub csa_euler_deg: [f64; 3],
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DipolarConfig {
    pub spins: [String; 2],
    pub b_hz: Option<f64>,
    pub distance_a: Option<f64>,
    #[serde(default)]
    pub euler_deg: [f64; 3],
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScalarConfig {
    pub spins: [String; 2],
    pub j_hz: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TofuConfig {
    pub b_over_wr: f64,
    pub condition: Option<String>,
    pub c_over_wr: Option<f64>,
    pub steps: usize,
}

impl Default for TofuConfig {
    fn default() -> Self {
        Self { b_over_wr: 3.0, condition: None, c_over_wr: None, steps: 200 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SelectiveConfig {
    pub duration_us: f64,
    /// Gaussian edge amplitude relative to the peak.
    pub truncation: f64,
    pub dwell_us: f64,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        Self { duration_us: 250.0, truncation: 0.01, dwell_us: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_list: Vec<usize>,
    /// Hard π nutation frequency; 0 selects ideal instantaneous pulses.
    pub hard_pulse_khz: f64,
    pub lambda_s: f64,
    pub detect: String,
    pub playback: String,
    pub substeps_per_rotor: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_list: (1..=15).collect(),
            hard_pulse_khz: 0.0,
            lambda_s: 0.0,
            detect: "real".into(),
            playback: "explicit".into(),
            substeps_per_rotor: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PowderConfig {
    pub scheme: String,
    pub n_ab: usize,
    pub n_gamma: usize,
    /// Orientation for `scheme = "single"`.
    pub crystal_deg: [f64; 3],
    pub file: Option<String>,
}

impl Default for PowderConfig {
    fn default() -> Self {
        Self { scheme: "golden".into(), n_ab: 144, n_gamma: 5, crystal_deg: [0.0, 45.0, 0.0], file: None }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChartConfig {
    pub r_min_a: f64,
    pub r_max_a: f64,
    pub r_step_a: f64,
    /// Nuclei of the coupled pair.
    pub nuclei: [String; 2],
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self { r_min_a: 1.0, r_max_a: 6.0, r_step_a: 0.5, nuclei: ["13C".into(), "13C".into()] }
    }
}

/// Gyromagnetic ratio of a named nucleus.
pub fn nucleus_gamma(name: &str) -> Result<f64> {
    match name {
        "1H" | "H" => Ok(GAMMA_1H),
        "13C" | "C" => Ok(GAMMA_13C),
        "15N" | "N" => Ok(GAMMA_15N),
        _ => Err(Error::Config(format!("unknown nucleus '{name}' (expected 1H, 13C or 15N)"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(cfg.spinning_hz > 0.0) {
            return Err(Error::Config("spinning_hz must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn omega_r<T: Real>(&self) -> T {
        hz(self.spinning_hz)
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.spins
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::Config(format!("unknown spin label '{label}'")))
    }

    fn gamma_of(&self, s: &SpinConfig) -> Result<f64> {
        match (&s.gyromagnetic_ratio, &s.nucleus) {
            (Some(g), _) => Ok(*g),
            (None, Some(n)) => nucleus_gamma(n),
            (None, None) => Ok(GAMMA_13C),
        }
    }

    pub fn spin_system<T: Real>(&self) -> Result<SpinSystem<T>> {
        for (i, s) in self.spins.iter().enumerate() {
            if self.spins[..i].iter().any(|o| o.label == s.label) {
                return Err(Error::Config(format!("duplicate spin label '{}'", s.label)));
            }
        }
        let mut spins = Vec::with_capacity(self.spins.len());
        for s in &self.spins {
            let [a, b, g] = s.csa_euler_deg;
            spins.push(Spin::new(s.label.clone(), lit::<T>(self.gamma_of(s)?), hz(s.shift_hz)).with_csa(
                hz(s.csa_aniso_hz),
                lit(s.csa_eta),
                EulerAngles::from_degrees(a, b, g),
            ));
        }
        let mut dipolar = Vec::new();
        for d in &self.dipolar {
            let (ia, ib) = (self.index_of(&d.spins[0])?, self.index_of(&d.spins[1])?);
            let b_is = match (d.b_hz, d.distance_a) {
                (Some(b), None) => hz(b),
                (None, Some(r)) => {
                    let ga = self.gamma_of(&self.spins[ia])?;
                    let gb = self.gamma_of(&self.spins[ib])?;
                    lit(dipole_coupling_constant(r * 1e-10, ga, gb)?)
                }
                _ => {
                    return Err(Error::Config(format!(
                        "dipolar coupling {}-{}: give exactly one of b_hz or distance_a",
                        d.spins[0], d.spins[1]
                    )))
                }
            };
            let [a, b, g] = d.euler_deg;
            dipolar.push(DipolarCoupling {
                spin_a: ia,
                spin_b: ib,
                b_is,
                pc_euler: EulerAngles::from_degrees(a, b, g),
            });
        }
        let mut scalar = Vec::new();
        for j in &self.scalar {
            scalar.push(ScalarCoupling {
                spin_a: self.index_of(&j.spins[0])?,
                spin_b: self.index_of(&j.spins[1])?,
                j: lit(j.j_hz),
            });
        }
        let s = self.index_of(&self.s_spin)?;
        SpinSystem::new(spins, dipolar, scalar, s)
    }

    pub fn condition(&self) -> Result<Option<Condition>> {
        self.tofu.condition.as_deref().map(str::parse).transpose()
    }

    /// TOFU parameters; `condition` overrides the configured condition.
    pub fn tofu_params<T: Real>(&self, condition: Option<Condition>) -> Result<TofuParams<T>> {
        let wr = self.omega_r::<T>();
        let c_over_wr = match (condition.or(self.condition()?), self.tofu.c_over_wr) {
            (Some(c), _) => c.c_over_wr(),
            (None, Some(c)) => c,
            (None, None) => Condition::Quarter.c_over_wr(),
        };
        TofuParams::new(lit::<T>(self.tofu.b_over_wr) * wr, lit::<T>(c_over_wr) * wr, wr, self.tofu.steps)
    }

    pub fn detection(&self) -> Result<Detection> {
        self.experiment.detect.parse()
    }

    pub fn playback(&self) -> Result<Playback> {
        match self.experiment.playback.as_str() {
            "explicit" => Ok(Playback::Explicit),
            "folded" => Ok(Playback::Folded),
            other => Err(Error::Config(format!("unknown playback '{other}' (expected explicit|folded)"))),
        }
    }

    pub fn resolution(&self) -> Result<Resolution> {
        if self.experiment.substeps_per_rotor == 0 {
            return Err(Error::Config("substeps_per_rotor must be positive".into()));
        }
        Ok(Resolution { substeps_per_rotor: self.experiment.substeps_per_rotor })
    }

    pub fn crystal<T: Real>(&self) -> EulerAngles<T> {
        let [a, b, g] = self.powder.crystal_deg;
        EulerAngles::new(deg(a), deg(b), deg(g))
    }

    /// Powder from `spec` when given, else from the `[powder]` table.
    pub fn orientations<T: Real>(&self, spec: Option<&PowderSpec>) -> Result<OrientationSet<T>> {
        if let Some(spec) = spec {
            return spec.generate();
        }
        let scheme = match (self.powder.scheme.as_str(), &self.powder.file) {
            ("single", _) => return Ok(OrientationSet::single(self.crystal())),
            ("file", Some(path)) => Scheme::File(path.clone()),
            ("file", None) => return Err(Error::Config("powder scheme 'file' needs powder.file".into())),
            (other, _) => other.parse()?,
        };
        generate_orientations(&scheme, self.powder.n_ab, self.powder.n_gamma)
    }

    pub fn experiment_params<T: Real>(
        &self,
        system: &SpinSystem<T>,
        condition: Option<Condition>,
    ) -> Result<ExperimentParams<T>> {
        let sel = &self.selective;
        if !(sel.duration_us > 0.0 && sel.dwell_us > 0.0 && sel.truncation > 0.0 && sel.truncation < 1.0) {
            return Err(Error::Config(
                "selective pulse needs positive duration and dwell and 0 < truncation < 1".into(),
            ));
        }
        let hard = self.experiment.hard_pulse_khz;
        if hard < 0.0 {
            return Err(Error::Config("hard_pulse_khz must not be negative".into()));
        }
        Ok(ExperimentParams {
            tofu: self.tofu_params(condition)?,
            selective: SelectivePulseParams {
                duration: lit(sel.duration_us * 1e-6),
                truncation: lit(sel.truncation),
                target: system.s_spin,
                dwell: lit(sel.dwell_us * 1e-6),
            },
            hard_pulse: if hard == 0.0 { HardPulse::Ideal } else { HardPulse::Finite { nutation: hz(hard * 1e3) } },
            playback: self.playback()?,
        })
    }
}

/// Parses a TOML config and returns its validated spin system.
pub fn build_spin_system<T: Real>(text: &str) -> Result<SpinSystem<T>> {
    RunConfig::parse(text)?.spin_system()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    const FIG1: &str = r#"
        s_spin = "I1"
        spinning_hz = 20000.0
        [[spin]]
        label = "I1"
        shift_hz = -12000.0
        [[spin]]
        label = "I2"
        shift_hz = 0.0
        [[spin]]
        label = "I3"
        shift_hz = -15500.0
        [[dipolar]]
        spins = ["I1", "I2"]
        b_hz = -2100.0
        [[dipolar]]
        spins = ["I1", "I3"]
        b_hz = -300.0
        euler_deg = [0.0, 90.0, 0.0]
    "#;

    #[test]
    fn three_spin_system_parses() {
        let sys = build_spin_system::<f64>(FIG1).unwrap();
        assert_eq!(sys.len(), 3);
        assert_eq!(sys.s_spin, 0);
        assert_abs_diff_eq!(sys.spins[2].iso_shift, -2.0 * PI * 15500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sys.dipolar[1].pc_euler.beta, PI / 2.0, epsilon = 1e-15);
        assert_eq!(sys.observed(), vec![1, 2]);
    }

    #[test]
    fn distance_is_converted() {
        let text = r#"
            s_spin = "S"
            spinning_hz = 20000.0
            [[spin]]
            label = "S"
            [[spin]]
            label = "I"
            nucleus = "13C"
            [[dipolar]]
            spins = ["I", "S"]
            distance_a = 1.5
        "#;
        let sys = build_spin_system::<f64>(text).unwrap();
        assert_abs_diff_eq!(sys.dipolar[0].b_is / (2.0 * PI), -2251.286, epsilon = 1e-3);
    }

    fn expect_config_error(text: &str) {
        match build_spin_system::<f64>(text) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_spin_list_rejected() {
        expect_config_error("s_spin = \"S\"\nspinning_hz = 20000.0\n");
    }

    #[test]
    fn undefined_label_rejected() {
        expect_config_error(&FIG1.replace("spins = [\"I1\", \"I3\"]", "spins = [\"I1\", \"I9\"]"));
    }

    #[test]
    fn duplicate_coupling_rejected() {
        expect_config_error(&FIG1.replace("spins = [\"I1\", \"I3\"]", "spins = [\"I2\", \"I1\"]"));
    }

    #[test]
    fn too_many_spins_rejected() {
        let mut t = String::from("s_spin = \"A0\"\nspinning_hz = 1e4\n");
        for k in 0..7 {
            t.push_str(&format!("[[spin]]\nlabel = \"A{k}\"\n"));
        }
        expect_config_error(&t);
    }

    #[test]
    fn unknown_keys_rejected() {
        expect_config_error(&format!("{FIG1}\n[tofu]\nbee = 3.0\n"));
        expect_config_error(&FIG1.replace("b_hz = -2100.0", "b_hz = -2100.0\ndistance_a = 2.0"));
    }

    #[test]
    fn tofu_defaults_and_overrides() {
        let cfg = RunConfig::parse(FIG1).unwrap();
        let p = cfg.tofu_params::<f64>(None).unwrap();
        assert_abs_diff_eq!(p.c_field, 2.0 * PI * 5000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.b_field, 2.0 * PI * 60000.0, epsilon = 1e-9);
        let h = cfg.tofu_params::<f64>(Some(Condition::Half)).unwrap();
        assert_abs_diff_eq!(h.c_field, 2.0 * PI * 10000.0, epsilon = 1e-9);
        assert_eq!(cfg.detection().unwrap(), Detection::Real);
        assert_eq!(cfg.playback().unwrap(), Playback::Explicit);
    }

    #[test]
    fn powder_table_and_override() {
        let mut cfg = RunConfig::parse(FIG1).unwrap();
        assert_eq!(cfg.orientations::<f64>(None).unwrap().len(), 144 * 5);
        cfg.powder.scheme = "single".into();
        let one = cfg.orientations::<f64>(None).unwrap();
        assert_eq!(one.len(), 1);
        assert_abs_diff_eq!(one.entries[0].euler.beta, PI / 4.0, epsilon = 1e-15);
        let spec: PowderSpec = "grid:10:2".parse().unwrap();
        assert_eq!(cfg.orientations::<f64>(Some(&spec)).unwrap().len(), 20);
        cfg.powder.scheme = "cones".into();
        assert!(cfg.orientations::<f64>(None).unwrap_err().is_config());
    }

    #[test]
    fn experiment_params_from_tables() {
        let mut cfg = RunConfig::parse(FIG1).unwrap();
        let sys = cfg.spin_system::<f64>().unwrap();
        let p = cfg.experiment_params(&sys, None).unwrap();
        assert_eq!(p.selective.target, 0);
        assert_abs_diff_eq!(p.selective.duration, 250e-6, epsilon = 1e-18);
        assert_eq!(p.hard_pulse, HardPulse::Ideal);
        cfg.experiment.hard_pulse_khz = 80.0;
        let p = cfg.experiment_params(&sys, None).unwrap();
        assert_eq!(p.hard_pulse, HardPulse::Finite { nutation: 2.0 * PI * 80e3 });
        cfg.selective.truncation = 1.5;
        assert!(cfg.experiment_params(&sys, None).unwrap_err().is_config());
    }
}
