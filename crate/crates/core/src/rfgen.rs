//! Triple-oscillating-field waveform synthesis, POST-C7, and shape files.
//!
//! The rf Hamiltonian of the element is
//! `C F_x + C e^{-iCtF_x} F_y e^{iCtF_x} + B e^{-iCtF_x} e^{-iCtF_y} F_z e^{iCtF_y} e^{iCtF_x}`,
//! whose Cartesian expansion with `θ = Ct` is
//! `h_x = C + B sinθ`, `h_y = C cosθ − B cosθ sinθ`, `h_z = C sinθ + B cos²θ`.
//!
//! A sample `(A, φ, ω)` plays as `A (cosφ F_x + sinφ F_y) + ω F_z`. Folded
//! (constant-carrier) playback uses `ψ = φ − ∫ω` instead and drops the `F_z`
//! term; the two differ by a frame rotation about z that commutes with the
//! secular spin Hamiltonian.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    /// `C = ω_r/4`
    Quarter,
    /// `C = ω_r/2`
    Half,
}

impl Condition {
    pub fn c_over_wr(self) -> f64 {
        match self {
            Condition::Quarter => 0.25,
            Condition::Half => 0.5,
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quarter" => Ok(Condition::Quarter),
            "half" => Ok(Condition::Half),
            _ => Err(Error::Config(format!("unknown condition '{s}' (expected quarter|half)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Playback {
    /// Phase and explicit time-dependent offset.
    #[default]
    Explicit,
    /// Offset folded into the phase at constant carrier.
    Folded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofuParams<T> {
    /// B, rad/s
    pub b_field: T,
    /// C, rad/s
    pub c_field: T,
    pub omega_r: T,
    pub steps_per_element: usize,
}

pub const MIN_STEPS: usize = 16;

impl<T: Real> TofuParams<T> {
    pub fn new(b_field: T, c_field: T, omega_r: T, steps_per_element: usize) -> Result<Self> {
        if !(omega_r > T::zero()) || !(c_field > T::zero()) {
            return Err(Error::Config("spinning rate and C must be positive".into()));
        }
        if !(b_field > lit::<T>(4.0) * c_field) {
            return Err(Error::Config(format!("B must exceed 4C (B = {b_field}, C = {c_field} rad/s)")));
        }
        if steps_per_element < MIN_STEPS {
            return Err(Error::Config(format!(
                "{steps_per_element} steps per element undersamples the waveform (minimum {MIN_STEPS})"
            )));
        }
        Ok(Self { b_field, c_field, omega_r, steps_per_element })
    }

    /// Paper-style parameters: `C` from the condition, `B = b_over_wr·ω_r`.
    pub fn for_condition(condition: Condition, b_over_wr: f64, omega_r: T, steps: usize) -> Result<Self> {
        Self::new(lit::<T>(b_over_wr) * omega_r, lit::<T>(condition.c_over_wr()) * omega_r, omega_r, steps)
    }

    pub fn condition(&self) -> Option<Condition> {
        let r = to_f64(self.c_field / self.omega_r);
        [Condition::Quarter, Condition::Half].into_iter().find(|c| (r - c.c_over_wr()).abs() < 1e-9)
    }

    /// One element: `2π/C`.
    pub fn element_duration(&self) -> T {
        T::two_pi() / self.c_field
    }

    pub fn dwell(&self) -> T {
        self.element_duration() / lit::<T>(self.steps_per_element as f64)
    }

    /// True when the element returns the rf frame to the identity (B/C an even integer).
    pub fn frame_cyclic(&self) -> bool {
        let r = to_f64(self.b_field / self.c_field);
        (r / 2.0 - (r / 2.0).round()).abs() < 1e-9
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.condition().is_none() {
            w.push("C is neither ω_r/4 nor ω_r/2: exploratory recoupling condition".to_string());
        }
        if !self.frame_cyclic() {
            w.push("B/C is not an even integer: the element does not close the rf frame".to_string());
        }
        w
    }
}

/// Coefficients `(h_x, h_y, h_z)` of `F_x, F_y, F_z` at time `t` within an element.
pub fn tofu_cartesian_field<T: Real>(t: T, p: &TofuParams<T>) -> [T; 3] {
    let (b, c) = (p.b_field, p.c_field);
    let (s, co) = (c * t).sin_cos();
    [c + b * s, c * co - b * co * s, c * s + b * co * co]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSample<T> {
    /// rad/s, non-negative
    pub amplitude: T,
    /// rad
    pub phase: T,
    /// rad/s
    pub offset: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfWaveform<T> {
    pub dwell: T,
    pub samples: Vec<RfSample<T>>,
    /// `φ_k − (Σ_{j<k} ω_j τ + ω_k τ/2)`: the phase at constant carrier, midpoint rule.
    pub total_phase: Vec<T>,
}

impl<T: Real> RfWaveform<T> {
    pub fn new(dwell: T, samples: Vec<RfSample<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("waveform has no samples".into()));
        }
        if !(dwell > T::zero()) {
            return Err(Error::Config("waveform dwell must be positive".into()));
        }
        if samples.iter().any(|s| s.amplitude < T::zero()) {
            return Err(Error::Config("negative rf amplitude".into()));
        }
        let half = lit::<T>(0.5);
        let mut acc = T::zero();
        let total_phase = samples
            .iter()
            .map(|s| {
                let v = s.phase - (acc + half * s.offset * dwell);
                acc += s.offset * dwell;
                v
            })
            .collect();
        Ok(Self { dwell, samples, total_phase })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> T {
        self.dwell * lit::<T>(self.samples.len() as f64)
    }

    pub fn max_amplitude(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.amplitude))
    }

    /// Field coefficients `(h_x, h_y, h_z)` of sample `k` in the chosen playback.
    pub fn field(&self, k: usize, playback: Playback) -> [T; 3] {
        let s = &self.samples[k];
        match playback {
            Playback::Explicit => {
                let (sn, cs) = s.phase.sin_cos();
                [s.amplitude * cs, s.amplitude * sn, s.offset]
            }
            Playback::Folded => {
                let (sn, cs) = self.total_phase[k].sin_cos();
                [s.amplitude * cs, s.amplitude * sn, T::zero()]
            }
        }
    }

    /// Sub-range of samples as a new waveform.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.dwell, self.samples[range].to_vec())
    }

    /// Same samples with a constant phase added.
    pub fn phase_shifted(&self, dphi: T) -> Self {
        let samples = self.samples.iter().map(|s| RfSample { phase: s.phase + dphi, ..*s }).collect();
        let total_phase = self.total_phase.iter().map(|&p| p + dphi).collect();
        Self { dwell: self.dwell, samples, total_phase }
    }
}

/// Continuous branch of `atan2` nearest to the previous value.
fn unwrap(prev: Option<f64>, raw: f64) -> f64 {
    match prev {
        None => raw,
        Some(p) => raw + (std::f64::consts::TAU) * ((p - raw) / std::f64::consts::TAU).round(),
    }
}

/// One TOFU element sampled at dwell midpoints.
pub fn tofu_waveform<T: Real>(p: &TofuParams<T>) -> Result<RfWaveform<T>> {
    if p.steps_per_element < MIN_STEPS {
        return Err(Error::Config(format!(
            "{} steps per element undersamples the waveform (minimum {MIN_STEPS})",
            p.steps_per_element
        )));
    }
    let dw = p.dwell();
    let half = lit::<T>(0.5);
    let mut prev = None;
    let samples = (0..p.steps_per_element)
        .map(|k| {
            let t = (lit::<T>(k as f64) + half) * dw;
            let [hx, hy, hz] = tofu_cartesian_field(t, p);
            let phase = unwrap(prev, to_f64(hy.atan2(hx)));
            prev = Some(phase);
            RfSample { amplitude: (hx * hx + hy * hy).sqrt(), phase: lit(phase), offset: hz }
        })
        .collect();
    RfWaveform::new(dw, samples)
}

/// POST-C7 cycle over two rotor periods: seven elements `90°_φ 360°_{φ+π} 270°_φ`,
/// `φ = 2πk/7`, amplitude `7ω_r`. `per_quarter` samples per 90° of nutation.
pub fn postc7_waveform<T: Real>(omega_r: T, per_quarter: usize) -> Result<RfWaveform<T>> {
    let per_quarter = per_quarter.max(1);
    let amp = lit::<T>(7.0) * omega_r;
    let tel = lit::<T>(4.0) * T::pi() / omega_r / lit(7.0);
    let n_el = 8 * per_quarter;
    let dw = tel / lit(n_el as f64);
    let mut samples = Vec::with_capacity(7 * n_el);
    for k in 0..7 {
        let phi = T::two_pi() * lit::<T>(k as f64) / lit(7.0);
        for s in 0..n_el {
            let quarter = s / per_quarter;
            let phase = if (1..5).contains(&quarter) { phi + T::pi() } else { phi };
            samples.push(RfSample { amplitude: amp, phase, offset: T::zero() });
        }
    }
    RfWaveform::new(dw, samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    /// amplitude %, total phase (deg)
    TwoColumn,
    /// amplitude %, phase (deg), offset (Hz)
    ThreeColumn,
}

fn wrap_deg(x: f64) -> f64 {
    let d = x.to_degrees().rem_euclid(360.0);
    if d >= 360.0 - 5e-9 {
        0.0
    } else {
        d
    }
}

/// Renders the shape file. `header` pairs are written as `# key = value` comments.
pub fn format_waveform<T: Real>(w: &RfWaveform<T>, format: ShapeFormat, header: &[(String, String)]) -> String {
    let max = to_f64(w.max_amplitude());
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# dwell_s = {:e}", to_f64(w.dwell));
    let _ = writeln!(out, "# max_amplitude_hz = {:e}", max / std::f64::consts::TAU);
    let _ = writeln!(out, "# samples = {}", w.len());
    for (k, s) in w.samples.iter().enumerate() {
        let pct = if max > 0.0 { 100.0 * to_f64(s.amplitude) / max } else { 0.0 };
        match format {
            ShapeFormat::TwoColumn => {
                let _ = writeln!(out, "{pct:.9} {:.9}", wrap_deg(to_f64(w.total_phase[k])));
            }
            ShapeFormat::ThreeColumn => {
                let off = to_f64(s.offset) / std::f64::consts::TAU;
                let _ = writeln!(out, "{pct:.9} {:.9} {off:.9}", wrap_deg(to_f64(s.phase)));
            }
        }
    }
    out
}

pub fn export_waveform<T: Real>(
    w: &RfWaveform<T>,
    path: &Path,
    format: ShapeFormat,
    header: &[(String, String)],
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(format_waveform(w, format, header).as_bytes())?;
    Ok(())
}

/// Parses a shape file written by [`format_waveform`]. Two-column files come back
/// with zero offset and the total phase as the phase.
pub fn parse_waveform<T: Real>(text: &str) -> Result<RfWaveform<T>> {
    let mut dwell = None;
    let mut max_hz = None;
    let mut samples = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                let v = v.trim().parse::<f64>();
                match (k.trim(), v) {
                    ("dwell_s", Ok(v)) => dwell = Some(v),
                    ("max_amplitude_hz", Ok(v)) => max_hz = Some(v),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("shape line {}: {e}", ln + 1)))?;
        let max = max_hz.ok_or_else(|| Error::Config("shape file lacks max_amplitude_hz".into()))?;
        let amp = cols[0] / 100.0 * max * std::f64::consts::TAU;
        let s = match cols.len() {
            2 => RfSample { amplitude: lit(amp), phase: lit(cols[1].to_radians()), offset: T::zero() },
            3 => RfSample {
                amplitude: lit(amp),
                phase: lit(cols[1].to_radians()),
                offset: lit(cols[2] * std::f64::consts::TAU),
            },
            n => return Err(Error::Config(format!("shape line {}: {n} columns", ln + 1))),
        };
        samples.push(s);
    }
    let dwell = dwell.ok_or_else(|| Error::Config("shape file lacks dwell_s".into()))?;
    RfWaveform::new(lit(dwell), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix2;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    type M2 = Matrix2<Complex64>;

    fn pauli() -> [M2; 3] {
        let (z, o, i) = (Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.5));
        [M2::new(z, o, o, z), M2::new(z, -i, i, z), M2::new(o, z, z, -o)]
    }

    // exp(-iθ F_q) for a single spin-1/2
    fn rot(q: usize, theta: f64) -> M2 {
        let f = pauli();
        M2::identity() * Complex64::new((theta / 2.0).cos(), 0.0)
            - f[q] * Complex64::new(0.0, 2.0 * (theta / 2.0).sin())
    }

    // Builds the element Hamiltonian by explicit conjugation and projects on F_q.
    fn oracle(t: f64, b: f64, c: f64) -> [f64; 3] {
        let f = pauli();
        let ux = rot(0, c * t);
        let uy = rot(1, c * t);
        let h = f[0] * Complex64::new(c, 0.0)
            + ux * f[1] * ux.adjoint() * Complex64::new(c, 0.0)
            + ux * uy * f[2] * uy.adjoint() * ux.adjoint() * Complex64::new(b, 0.0);
        [0, 1, 2].map(|q| 2.0 * (h * f[q]).trace().re)
    }

    fn paper_params(steps: usize) -> TofuParams<f64> {
        TofuParams::for_condition(Condition::Quarter, 3.0, 2.0 * PI * 20e3, steps).unwrap()
    }

    #[test]
    fn field_at_origin_and_quarter_turn() {
        let p = paper_params(200);
        let (b, c) = (p.b_field, p.c_field);
        let h = tofu_cartesian_field(0.0, &p);
        assert_abs_diff_eq!(h[0], c, epsilon = 1e-9);
        assert_abs_diff_eq!(h[1], c, epsilon = 1e-9);
        assert_abs_diff_eq!(h[2], b, epsilon = 1e-9);
        let h = tofu_cartesian_field(PI / 2.0 / c, &p);
        let o = oracle(PI / 2.0 / c, b, c);
        for q in 0..3 {
            assert_abs_diff_eq!(h[q], o[q], epsilon = 1e-6);
        }
        assert_abs_diff_eq!(h[0], c + b, epsilon = 1e-6);
        assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(h[2], c, epsilon = 1e-6);
    }

    #[test]
    fn field_is_periodic() {
        let p = paper_params(200);
        let period = p.element_duration();
        for k in 0..17 {
            let t = k as f64 * 7.3e-6;
            let (a, b) = (tofu_cartesian_field(t, &p), tofu_cartesian_field(t + period, &p));
            for q in 0..3 {
                assert!((a[q] - b[q]).abs() < 1e-12 * p.b_field.max(1.0) * 10.0);
            }
        }
    }

    #[test]
    fn paper_element_shape() {
        let p = paper_params(200);
        let w = tofu_waveform(&p).unwrap();
        assert_eq!(w.len(), 200);
        assert_abs_diff_eq!(w.dwell, 1e-6, epsilon = 1e-15);
        assert_abs_diff_eq!(w.duration(), 200e-6, epsilon = 1e-15);
        assert!(tofu_waveform(&TofuParams { steps_per_element: 15, ..p }).is_err());
        assert!(TofuParams::new(p.b_field, p.c_field, p.omega_r, 8).is_err());
        assert!(p.frame_cyclic());
        assert_eq!(p.condition(), Some(Condition::Quarter));
    }

    #[test]
    fn amplitude_and_offset_at_origin() {
        // evaluated at t = 0 directly, the sampled waveform starts half a dwell later
        let p = paper_params(200);
        let [hx, hy, hz] = tofu_cartesian_field(0.0, &p);
        assert_abs_diff_eq!((hx * hx + hy * hy).sqrt(), p.c_field * 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(hz, p.b_field, epsilon = 1e-9);
        let w = tofu_waveform(&TofuParams { steps_per_element: 20000, ..p }).unwrap();
        assert_abs_diff_eq!(w.samples[0].amplitude, p.c_field * 2f64.sqrt(), epsilon = 1e-3 * p.c_field);
    }

    #[test]
    fn total_phase_follows_midpoint_rule() {
        let w = tofu_waveform(&paper_params(200)).unwrap();
        let mut acc = 0.0;
        for (k, s) in w.samples.iter().enumerate() {
            let expect = s.phase - (acc + 0.5 * s.offset * w.dwell);
            assert!((w.total_phase[k] - expect).abs() < 1e-12 * expect.abs().max(1.0));
            acc += s.offset * w.dwell;
        }
        // the integrated offset over one element is πB/C
        let p = paper_params(200);
        assert_abs_diff_eq!(acc, PI * p.b_field / p.c_field, epsilon = 1e-9);
    }

    #[test]
    fn phases_are_continuous() {
        let w = tofu_waveform(&paper_params(200)).unwrap();
        for k in 1..w.len() {
            assert!((w.samples[k].phase - w.samples[k - 1].phase).abs() < PI);
            assert!((w.total_phase[k] - w.total_phase[k - 1]).abs() < PI);
        }
    }

    #[test]
    fn postc7_schedule() {
        let wr = 2.0 * PI * 20e3;
        let w = postc7_waveform(wr, 1).unwrap();
        assert_abs_diff_eq!(w.duration(), 2.0 / 20e3, epsilon = 1e-15);
        for s in &w.samples {
            assert_abs_diff_eq!(s.amplitude, 2.0 * PI * 140e3, epsilon = 1e-6);
            assert_eq!(s.offset, 0.0);
        }
        for k in 0..7 {
            assert_abs_diff_eq!(w.samples[8 * k].phase, 2.0 * PI * k as f64 / 7.0, epsilon = 1e-12);
            assert_abs_diff_eq!(w.samples[8 * k + 1].phase, 2.0 * PI * k as f64 / 7.0 + PI, epsilon = 1e-12);
            assert_abs_diff_eq!(w.samples[8 * k + 5].phase, 2.0 * PI * k as f64 / 7.0, epsilon = 1e-12);
        }
        // nutation per element: 720°
        let per_el: f64 = w.samples[..8].iter().map(|s| s.amplitude * w.dwell).sum();
        assert_abs_diff_eq!(per_el, 4.0 * PI, epsilon = 1e-9);
    }

    #[test]
    fn shape_round_trip() {
        let p = paper_params(200);
        let w = tofu_waveform(&p).unwrap();
        let head = vec![("B_hz".to_string(), format!("{}", p.b_field / (2.0 * PI)))];
        let txt = format_waveform(&w, ShapeFormat::TwoColumn, &head);
        assert_eq!(txt.lines().filter(|l| !l.starts_with('#')).count(), 200);
        assert!(txt.contains("# B_hz = 60000"));
        let first_max = txt
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().next().unwrap().parse::<f64>().unwrap())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(first_max, 100.0, epsilon = 1e-9);
        let back: RfWaveform<f64> = parse_waveform(&txt).unwrap();
        for k in 0..w.len() {
            let a = w.samples[k].amplitude;
            assert!((back.samples[k].amplitude - a).abs() <= 1e-6 * a);
            let d = (back.samples[k].phase - w.total_phase[k]).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) < 1e-6);
        }
        let three = format_waveform(&w, ShapeFormat::ThreeColumn, &[]);
        let back3: RfWaveform<f64> = parse_waveform(&three).unwrap();
        for k in 0..w.len() {
            assert!((back3.samples[k].offset - w.samples[k].offset).abs() <= 1e-6 * p.b_field);
        }
    }

    #[test]
    fn malformed_shape_is_rejected() {
        assert!(parse_waveform::<f64>("# dwell_s = 1e-6\n100 0\n").is_err());
        assert!(parse_waveform::<f64>("# max_amplitude_hz = 1\n100 0\n").is_err());
        assert!(parse_waveform::<f64>("# dwell_s = 1e-6\n# max_amplitude_hz = 1\n100 x\n").is_err());
    }

    proptest! {
        #[test]
        fn cartesian_expansion_matches_conjugation(
            b_over_c in 4.5f64..60.0, c_hz in 1e3f64..2e4, frac in 0.0f64..1.0,
        ) {
            let c = 2.0 * PI * c_hz;
            let p = TofuParams::new(b_over_c * c, c, 4.0 * c, 200).unwrap();
            let t = frac * p.element_duration();
            let h = tofu_cartesian_field(t, &p);
            let o = oracle(t, p.b_field, c);
            let scale = p.b_field + 2.0 * c;
            for q in 0..3 {
                prop_assert!((h[q] - o[q]).abs() < 1e-9 * scale);
            }
        }

        #[test]
        fn elements_repeat_identically(steps in 16usize..400) {
            let p = paper_params(steps);
            let w = tofu_waveform(&p).unwrap();
            // sampling element n+1 gives the same samples as element n
            let dw = p.dwell();
            for k in (0..steps).step_by(7) {
                let a = tofu_cartesian_field((k as f64 + 0.5) * dw, &p);
                let b = tofu_cartesian_field((k as f64 + 0.5) * dw + p.element_duration(), &p);
                for q in 0..3 {
                    prop_assert!((a[q] - b[q]).abs() < 1e-6);
                }
                prop_assert!((w.samples[k].amplitude - (a[0] * a[0] + a[1] * a[1]).sqrt()).abs() < 1e-6);
            }
        }
    }
}
