//! TOFU-RADAR main and reference experiments and dephasing series.
//!
//! With `q` TOFU elements per quarter of the recoupling time `T = n·16τ_r`,
//! `w` the hard-pulse width (0 when ideal) and `G` the rotor-synchronised
//! selective Gaussian on S:
//!
//! ```text
//! MAIN       TOFU(2q) · 3τr/4 − w/2 · G · π · 3τr/4 + G − w/2 · TOFU(2q)
//! REFERENCE  TOFU(q) · τr/2 · TOFU(q) · τr/4 − w/2 · G · π · τr/4 + G − w/2 · TOFU(q) · τr/2 · TOFU(q)
//! ```
//!
//! Free precession is symmetric about the hard π, both layouts have the same
//! length, and the Gaussian starts at the same rotor phase in both, so its
//! Bloch–Siegert phase on the I spins is common to the two experiments.
//!
//! In MAIN the second TOFU half starts half a rotor period out of step with the
//! first, which flips the sign of the `cos γ` recoupled coupling. The π pulse
//! flips every I spin while the selective π returns S to itself, so I–S
//! couplings keep accumulating and I–I couplings refocus. In REFERENCE every
//! coupling refocuses within each half.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::num::{lit, to_f64, Real};
use crate::powder::{powder_average_vec, OrientationSet};
use crate::propagator::{observe, spin_operators, DensityState, Detection, Engine, Resolution, Segment, Timeline};
use crate::rfgen::{tofu_waveform, Playback, RfSample, RfWaveform, TofuParams};
use crate::spinsys::SpinSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    Main,
    Reference,
    /// Continuous TOFU recoupling for the whole of `T`.
    Plain,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Main => "main",
            Layout::Reference => "reference",
            Layout::Plain => "plain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectivePulseParams<T> {
    /// Seconds; must be a whole number of rotor periods.
    pub duration: T,
    /// Edge amplitude relative to the peak.
    pub truncation: T,
    pub target: usize,
    pub dwell: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HardPulse<T> {
    Ideal,
    /// Rectangular π at the given nutation rate, rad/s.
    Finite {
        nutation: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentParams<T> {
    pub tofu: TofuParams<T>,
    pub selective: SelectivePulseParams<T>,
    pub hard_pulse: HardPulse<T>,
    pub playback: Playback,
}

/// On-resonance Gaussian π pulse, truncated where the envelope falls to
/// `truncation` of its peak and scaled to a flip angle of exactly π.
pub fn gaussian_selective_pi<T: Real>(p: &SelectivePulseParams<T>) -> Result<RfWaveform<T>> {
    let n = to_f64(p.duration / p.dwell).round() as usize;
    if n < 8 || !(p.truncation > T::zero() && p.truncation < T::one()) {
        return Err(Error::Config("selective pulse needs ≥ 8 samples and truncation in (0, 1)".into()));
    }
    let dwell = p.duration / lit::<T>(n as f64);
    let half = lit::<T>(0.5) * p.duration;
    let sigma = half / (-lit::<T>(2.0) * p.truncation.ln()).sqrt();
    let env: Vec<T> = (0..n)
        .map(|k| {
            let x = ((lit::<T>(k as f64) + lit(0.5)) * dwell - half) / sigma;
            (-lit::<T>(0.5) * x * x).exp()
        })
        .collect();
    let area = env.iter().fold(T::zero(), |a, &e| a + e) * dwell;
    let scale = T::pi() / area;
    let samples =
        env.into_iter().map(|e| RfSample { amplitude: e * scale, phase: T::zero(), offset: T::zero() }).collect();
    RfWaveform::new(dwell, samples)
}

/// Adds the phase ramp `ω (t − t_ref)` (sample midpoints, time from waveform start)
/// so the pulse follows a spin precessing at offset `ω`.
pub fn follow_offset<T: Real>(w: &RfWaveform<T>, omega: T, t_ref: T) -> Result<RfWaveform<T>> {
    let samples = w
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let t = (lit::<T>(k as f64) + lit(0.5)) * w.dwell;
            RfSample { phase: s.phase + omega * (t - t_ref), ..*s }
        })
        .collect();
    RfWaveform::new(w.dwell, samples)
}

/// Prebuilt waveforms for one parameter set; timelines share them so propagator
/// caches carry over between layouts and increments.
#[derive(Debug, Clone)]
pub struct Experiment<T: Real> {
    pub params: ExperimentParams<T>,
    pub tofu: Arc<RfWaveform<T>>,
    /// Selective Gaussian, phase-referenced to the centre of the hard pulse.
    pub gauss: Arc<RfWaveform<T>>,
    pub hard: Option<Arc<RfWaveform<T>>>,
    pub channel: Vec<usize>,
    /// TOFU elements per `4τ_r`.
    pub elements_per_4tr: usize,
}

impl<T: Real> Experiment<T> {
    pub fn new(params: ExperimentParams<T>, system: &SpinSystem<T>) -> Result<Self> {
        let tofu = &params.tofu;
        let tr = T::two_pi() / tofu.omega_r;
        let per = to_f64(lit::<T>(4.0) * tr / tofu.element_duration());
        if (per - per.round()).abs() > 1e-9 || per.round() < 1.0 {
            return Err(Error::Config("TOFU element must divide 4 rotor periods".into()));
        }
        let sel = &params.selective;
        if sel.target >= system.len() {
            return Err(Error::Config("selective pulse targets an undefined spin".into()));
        }
        let p = to_f64(sel.duration / tr);
        if (p - p.round()).abs() > 1e-6 || p.round() < 1.0 {
            let suggest = p.round().max(1.0);
            return Err(Error::Config(format!(
                "selective pulse of {:.3} µs is not rotor synchronised; use p = {suggest} ({:.3} µs)",
                to_f64(sel.duration) * 1e6,
                suggest * to_f64(tr) * 1e6
            )));
        }
        let width = match params.hard_pulse {
            HardPulse::Ideal => T::zero(),
            HardPulse::Finite { nutation } => {
                if !(nutation > T::zero()) {
                    return Err(Error::Config("hard pulse nutation must be positive".into()));
                }
                T::pi() / nutation
            }
        };
        if width > lit::<T>(0.5) * tr {
            return Err(Error::Config("hard π pulse longer than half a rotor period".into()));
        }
        let g = gaussian_selective_pi(sel)?;
        let omega_s = system.spins[sel.target].iso_shift;
        let gauss = follow_offset(&g, omega_s, g.duration() + lit::<T>(0.5) * width)?;
        let channel = system.rf_channel();
        let hard = match params.hard_pulse {
            HardPulse::Ideal => None,
            HardPulse::Finite { nutation } => Some(Arc::new(RfWaveform::new(
                width,
                vec![RfSample { amplitude: nutation, phase: T::zero(), offset: T::zero() }],
            )?)),
        };
        Ok(Self {
            tofu: Arc::new(tofu_waveform(tofu)?),
            gauss: Arc::new(gauss),
            hard,
            channel,
            elements_per_4tr: per.round() as usize,
            params,
        })
    }

    pub fn rotor_period(&self) -> T {
        T::two_pi() / self.params.tofu.omega_r
    }

    /// Recoupling time `T = n·16τ_r`.
    pub fn recoupling_time(&self, n: usize) -> T {
        lit::<T>(16.0 * n as f64) * self.rotor_period()
    }

    fn hard_width(&self) -> T {
        self.hard.as_ref().map_or(T::zero(), |h| h.duration())
    }

    fn tofu_block(&self, elements: usize) -> Segment<T> {
        Segment::Rf { wave: self.tofu.clone(), playback: self.params.playback, repeat: elements }
    }

    fn central_block(&self, pad: T) -> Vec<Segment<T>> {
        let pb = self.params.playback;
        let hard = match &self.hard {
            None => Segment::Ideal { angle: T::pi(), phase: T::zero(), spins: self.channel.clone() },
            Some(h) => Segment::Rf { wave: h.clone(), playback: pb, repeat: 1 },
        };
        vec![
            Segment::Delay(pad),
            Segment::Rf { wave: self.gauss.clone(), playback: pb, repeat: 1 },
            hard,
            Segment::Delay(pad + self.gauss.duration()),
        ]
    }

    /// Timeline of `layout` at increment `n`.
    pub fn timeline(&self, layout: Layout, n: usize) -> Timeline<T> {
        let q = n * self.elements_per_4tr;
        let tr = self.rotor_period();
        let hw = lit::<T>(0.5) * self.hard_width();
        let mut s = Vec::new();
        match layout {
            Layout::Main => {
                s.push(self.tofu_block(2 * q));
                s.extend(self.central_block(lit::<T>(0.75) * tr - hw));
                s.push(self.tofu_block(2 * q));
            }
            Layout::Reference => {
                s.extend([self.tofu_block(q), Segment::Delay(lit::<T>(0.5) * tr), self.tofu_block(q)]);
                s.extend(self.central_block(lit::<T>(0.25) * tr - hw));
                s.extend([self.tofu_block(q), Segment::Delay(lit::<T>(0.5) * tr), self.tofu_block(q)]);
            }
            Layout::Plain => s.push(self.tofu_block(4 * q)),
        }
        Timeline::new(s)
    }
}

/// A waveform repeated back to back, starting at rotor phase zero.
pub fn recoupling_timeline<T: Real>(wave: &Arc<RfWaveform<T>>, playback: Playback, repeat: usize) -> Timeline<T> {
    Timeline::new(vec![Segment::Rf { wave: wave.clone(), playback, repeat }])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions<T> {
    pub resolution: Resolution,
    pub detection: Detection,
    /// Relaxation rate applied as `e^{−λT}` to detected signals, s⁻¹.
    pub lambda: T,
}

impl<T: Real> Default for RunOptions<T> {
    fn default() -> Self {
        Self { resolution: Resolution::default(), detection: Detection::Real, lambda: T::zero() }
    }
}

/// Powder-averaged signals of `spins` after each timeline, starting from `F_x`
/// on the rf channel. Returns `[timeline][spin]`.
pub fn simulate<T: Real>(
    system: &SpinSystem<T>,
    powder: &OrientationSet<T>,
    omega_r: T,
    resolution: Resolution,
    detection: Detection,
    timelines: &[Timeline<T>],
    spins: &[usize],
) -> Result<Vec<Vec<T>>> {
    let ops = spin_operators::<T>(system.len())?;
    let rho0 = DensityState::new(ops.channel(&system.rf_channel())[0].clone());
    let per: Vec<Vec<T>> = powder
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, o)| {
            let mut engine = Engine::new(system, &ops, &o.euler, omega_r, resolution);
            let mut out = Vec::with_capacity(timelines.len() * spins.len());
            for tl in timelines {
                let u =
                    engine.propagator(tl, T::zero()).map_err(|e| Error::Crystallite { index, source: Box::new(e) })?;
                let rho = rho0.evolve(&u);
                out.extend(spins.iter().map(|&k| observe(&rho, &ops, k, detection)));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = powder_average_vec(&per, powder)?;
    Ok(avg.chunks(spins.len().max(1)).map(<[T]>::to_vec).collect())
}

/// Signal per observed spin against recoupling time for one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingCurve<T> {
    pub layout: Layout,
    pub n_values: Vec<usize>,
    /// Seconds.
    pub t_values: Vec<T>,
    pub rotor_periods: Vec<T>,
    pub spins: Vec<usize>,
    pub labels: Vec<String>,
    /// `signals[spin][point]`
    pub signals: Vec<Vec<T>>,
    pub powder: String,
}

impl<T: Real> DephasingCurve<T> {
    pub fn signal(&self, spin: usize) -> Option<&[T]> {
        self.spins.iter().position(|&s| s == spin).map(|i| self.signals[i].as_slice())
    }
}

/// Simulates each layout at every `n` and powder-averages the observed spins.
pub fn run_dephasing_series<T: Real>(
    system: &SpinSystem<T>,
    experiment: &Experiment<T>,
    powder: &OrientationSet<T>,
    n_list: &[usize],
    layouts: &[Layout],
    options: &RunOptions<T>,
) -> Result<Vec<DephasingCurve<T>>> {
    let spins = system.observed();
    let timelines: Vec<Timeline<T>> =
        layouts.iter().flat_map(|&l| n_list.iter().map(move |&n| experiment.timeline(l, n))).collect();
    let sig = simulate(
        system,
        powder,
        experiment.params.tofu.omega_r,
        options.resolution,
        options.detection,
        &timelines,
        &spins,
    )?;
    let tr = experiment.rotor_period();
    let t_values: Vec<T> = n_list.iter().map(|&n| experiment.recoupling_time(n)).collect();
    Ok(layouts
        .iter()
        .enumerate()
        .map(|(li, &layout)| {
            let signals = (0..spins.len())
                .map(|si| {
                    n_list
                        .iter()
                        .enumerate()
                        .map(|(ni, _)| sig[li * n_list.len() + ni][si] * (-options.lambda * t_values[ni]).exp())
                        .collect()
                })
                .collect();
            DephasingCurve {
                layout,
                n_values: n_list.to_vec(),
                rotor_periods: t_values.iter().map(|&t| t / tr).collect(),
                t_values: t_values.clone(),
                labels: spins.iter().map(|&k| system.spins[k].label.clone()).collect(),
                spins: spins.clone(),
                signals,
                powder: powder.label(),
            }
        })
        .collect())
}
