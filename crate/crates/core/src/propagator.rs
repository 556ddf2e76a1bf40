//! Exact propagation under the MAS Hamiltonian plus rf.
//!
//! Time is cut into substeps no longer than the configured maximum (default
//! `τ_r/100`), with rf samples honoured exactly as substep boundaries. Each
//! substep uses the fourth-order Magnus exponent built from the Hamiltonian at
//! the two Gauss–Legendre nodes, exponentiated by Hermitian eigendecomposition.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::{cabs, cis, lit, to_f64, CMatrix, Cplx, Real};
use crate::rfgen::{Playback, RfWaveform};
use crate::spinsys::{eval_series, fourier_coefficients, Coeffs, EulerAngles, FourierCoeffs, SpinSystem};

/// Spin-½ operators on the `2ⁿ` product space; spin 0 is the most significant factor.
#[derive(Debug, Clone)]
pub struct OperatorSet<T: Real> {
    pub n: usize,
    pub ix: Vec<CMatrix<T>>,
    pub iy: Vec<CMatrix<T>>,
    pub iz: Vec<CMatrix<T>>,
    pub fx: CMatrix<T>,
    pub fy: CMatrix<T>,
    pub fz: CMatrix<T>,
}

fn kron_single<T: Real>(n: usize, k: usize, p: [[Cplx<T>; 2]; 2]) -> CMatrix<T> {
    let mut m = DMatrix::from_element(1, 1, Complex::new(T::one(), T::zero()));
    for j in 0..n {
        let f = if j == k {
            DMatrix::from_row_slice(2, 2, &[p[0][0], p[0][1], p[1][0], p[1][1]])
        } else {
            DMatrix::identity(2, 2)
        };
        m = m.kronecker(&f);
    }
    m
}

pub fn spin_operators<T: Real>(n: usize) -> Result<OperatorSet<T>> {
    if !(1..=crate::spinsys::MAX_SPINS).contains(&n) {
        return Err(Error::Domain(format!("spin count {n} outside 1..={}", crate::spinsys::MAX_SPINS)));
    }
    let (z, h) = (T::zero(), lit::<T>(0.5));
    let c = |re, im| Complex::new(re, im);
    let px = [[c(z, z), c(h, z)], [c(h, z), c(z, z)]];
    let py = [[c(z, z), c(z, -h)], [c(z, h), c(z, z)]];
    let pz = [[c(h, z), c(z, z)], [c(z, z), c(-h, z)]];
    let ix: Vec<_> = (0..n).map(|k| kron_single(n, k, px)).collect();
    let iy: Vec<_> = (0..n).map(|k| kron_single(n, k, py)).collect();
    let iz: Vec<_> = (0..n).map(|k| kron_single(n, k, pz)).collect();
    let sum = |v: &[CMatrix<T>]| v.iter().fold(CMatrix::zeros(1 << n, 1 << n), |a, b| a + b);
    let (fx, fy, fz) = (sum(&ix), sum(&iy), sum(&iz));
    Ok(OperatorSet { n, ix, iy, iz, fx, fy, fz })
}

impl<T: Real> OperatorSet<T> {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `(Σ I_x, Σ I_y, Σ I_z)` over the given spins.
    pub fn channel(&self, spins: &[usize]) -> [CMatrix<T>; 3] {
        let d = self.dim();
        let mut out = [CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d)];
        for &k in spins {
            out[0] += &self.ix[k];
            out[1] += &self.iy[k];
            out[2] += &self.iz[k];
        }
        out
    }

    pub fn iplus(&self, k: usize) -> CMatrix<T> {
        &self.ix[k] + &self.iy[k] * Complex::new(T::zero(), T::one())
    }

    /// `I·S`
    pub fn dot(&self, a: usize, b: usize) -> CMatrix<T> {
        &self.ix[a] * &self.ix[b] + &self.iy[a] * &self.iy[b] + &self.iz[a] * &self.iz[b]
    }

    /// Operator multiplying `ω_ab(t)` for a dipolar coupling.
    pub fn dipolar_operator(&self, a: usize, b: usize, homonuclear: bool) -> CMatrix<T> {
        let zz = &self.iz[a] * &self.iz[b];
        if homonuclear {
            zz * Complex::new(lit::<T>(3.0), T::zero()) - self.dot(a, b)
        } else {
            zz * Complex::new(lit::<T>(2.0), T::zero())
        }
    }

    /// Operator multiplying `2πJ` for a scalar coupling.
    pub fn scalar_operator(&self, a: usize, b: usize, homonuclear: bool) -> CMatrix<T> {
        if homonuclear {
            self.dot(a, b)
        } else {
            &self.iz[a] * &self.iz[b]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState<T: Real> {
    pub rho: CMatrix<T>,
}

impl<T: Real> DensityState<T> {
    pub fn new(rho: CMatrix<T>) -> Self {
        Self { rho }
    }

    pub fn evolve(&self, u: &CMatrix<T>) -> Self {
        Self { rho: u * &self.rho * u.adjoint() }
    }

    pub fn hermiticity_error(&self) -> T {
        (&self.rho - self.rho.adjoint()).iter().fold(T::zero(), |m, z| m.max(cabs(*z)))
    }

    pub fn trace(&self) -> Cplx<T> {
        self.rho.trace()
    }
}

/// One event of a pulse-sequence timeline.
#[derive(Debug, Clone)]
pub enum Segment<T: Real> {
    /// A waveform on the rf channel, played `repeat` times back to back.
    Rf { wave: Arc<RfWaveform<T>>, playback: Playback, repeat: usize },
    /// Free evolution.
    Delay(T),
    /// Instantaneous rotation `exp(−iθ(cosφ I_x + sinφ I_y))` of the listed spins.
    Ideal { angle: T, phase: T, spins: Vec<usize> },
}

impl<T: Real> Segment<T> {
    pub fn duration(&self) -> T {
        match self {
            Segment::Rf { wave, repeat, .. } => wave.duration() * lit::<T>(*repeat as f64),
            Segment::Delay(d) => *d,
            Segment::Ideal { .. } => T::zero(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timeline<T: Real> {
    pub segments: Vec<Segment<T>>,
}

impl<T: Real> Timeline<T> {
    pub fn new(segments: Vec<Segment<T>>) -> Self {
        Self { segments }
    }

    pub fn duration(&self) -> T {
        self.segments.iter().fold(T::zero(), |a, s| a + s.duration())
    }
}

/// Integration step control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    /// Substeps per rotor period (upper bound on the substep length).
    pub substeps_per_rotor: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { substeps_per_rotor: 100 }
    }
}

/// Internal Hamiltonian at time `t` built term by term (reference path).
/// `rf` adds `h_x F_x + h_y F_y + h_z F_z` over the rf channel.
pub fn hamiltonian_at<T: Real>(
    t: T,
    system: &SpinSystem<T>,
    ops: &OperatorSet<T>,
    coeffs: &FourierCoeffs<T>,
    omega_r: T,
    rf: Option<[T; 3]>,
) -> CMatrix<T> {
    let d = ops.dim();
    let mut h = CMatrix::zeros(d, d);
    for (k, c) in coeffs.shifts.iter().enumerate() {
        h += &ops.iz[k] * Complex::new(eval_series(c, omega_r, t), T::zero());
    }
    for (dc, c) in system.dipolar.iter().zip(&coeffs.dipolar) {
        let m = ops.dipolar_operator(dc.spin_a, dc.spin_b, system.homonuclear(dc.spin_a, dc.spin_b));
        h += m * Complex::new(eval_series(c, omega_r, t), T::zero());
    }
    for j in &system.scalar {
        let m = ops.scalar_operator(j.spin_a, j.spin_b, system.homonuclear(j.spin_a, j.spin_b));
        h += m * Complex::new(T::two_pi() * j.j, T::zero());
    }
    if let Some([hx, hy, hz]) = rf {
        let f = ops.channel(&system.rf_channel());
        h += &f[0] * Complex::new(hx, T::zero())
            + &f[1] * Complex::new(hy, T::zero())
            + &f[2] * Complex::new(hz, T::zero());
    }
    h
}

/// `exp(−iHt)` for Hermitian `H`.
pub fn expm_hermitian<T: Real>(h: &CMatrix<T>, t: T) -> Result<CMatrix<T>> {
    let n = h.nrows();
    let eig = h
        .clone()
        .try_symmetric_eigen(T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numerical("Hermitian eigendecomposition did not converge".into()))?;
    let mut vd = eig.eigenvectors.clone();
    for j in 0..n {
        let ph = cis(-eig.eigenvalues[j] * t);
        for i in 0..n {
            vd[(i, j)] *= ph;
        }
    }
    Ok(vd * eig.eigenvectors.adjoint())
}

/// `max |(U†U − 1)_ij|`
pub fn unitarity_error<T: Real>(u: &CMatrix<T>) -> T {
    let p = u.adjoint() * u;
    let mut m = T::zero();
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            m = m.max(cabs(p[(i, j)] - Complex::new(target, T::zero())));
        }
    }
    m
}

pub const UNITARITY_TOL: f64 = 1e-10;

/// Unitarity bound enforced on every total propagator: [`UNITARITY_TOL`], widened
/// to `10⁴ ε` for scalars coarser than `f64`.
pub fn unitarity_tolerance<T: Real>() -> f64 {
    UNITARITY_TOL.max(1e4 * to_f64(T::default_epsilon()))
}

/// One Newton–Schulz step `U(3 − U†U)/2` towards the nearest unitary. Removes the
/// rounding drift of long products (quadratic in the deviation), which would
/// otherwise grow linearly under powering.
pub fn polar_step<T: Real>(u: CMatrix<T>) -> CMatrix<T> {
    let d = u.nrows();
    let g = u.adjoint() * &u;
    let corr = (CMatrix::<T>::identity(d, d) * Complex::new(lit::<T>(3.0), T::zero()) - g)
        * Complex::new(lit::<T>(0.5), T::zero());
    u * corr
}

/// Decomposes the interaction Hamiltonian of one crystallite as
/// `A₀ + Σ_{m=1,2} (e^{imω_r t} A_m + h.c.)`.
#[derive(Debug, Clone)]
struct Harmonics<T: Real> {
    a: [CMatrix<T>; 3],
}

impl<T: Real> Harmonics<T> {
    fn build(system: &SpinSystem<T>, ops: &OperatorSet<T>, coeffs: &FourierCoeffs<T>) -> Self {
        let d = ops.dim();
        let mut a = [CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d)];
        let mut add = |c: &Coeffs<T>, m: &CMatrix<T>| {
            for (q, slot) in a.iter_mut().enumerate() {
                *slot += m * c[2 + q];
            }
        };
        for (k, c) in coeffs.shifts.iter().enumerate() {
            add(c, &ops.iz[k]);
        }
        for (dc, c) in system.dipolar.iter().zip(&coeffs.dipolar) {
            add(c, &ops.dipolar_operator(dc.spin_a, dc.spin_b, system.homonuclear(dc.spin_a, dc.spin_b)));
        }
        for j in &system.scalar {
            let m = ops.scalar_operator(j.spin_a, j.spin_b, system.homonuclear(j.spin_a, j.spin_b));
            a[0] += m * Complex::new(T::two_pi() * j.j, T::zero());
        }
        // the m = 0 part is real by construction; drop rounding in the imaginary part
        a[0] = (&a[0] + a[0].adjoint()) * Complex::new(lit::<T>(0.5), T::zero());
        Self { a }
    }

    fn at(&self, phase: T) -> CMatrix<T> {
        let mut h = self.a[0].clone();
        for m in 1..=2usize {
            let e = cis(lit::<T>(m as f64) * phase);
            let term = &self.a[m] * e;
            h += &term + term.adjoint();
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheKey {
    Element { wave: usize, playback: Playback, phase: i64 },
    Delay { len: i64, phase: i64 },
}

/// Propagation engine for one crystallite. Segment propagators are cached by
/// rotor phase, so repeated timelines (dephasing series) reuse work.
pub struct Engine<'a, T: Real> {
    pub system: &'a SpinSystem<T>,
    pub ops: &'a OperatorSet<T>,
    pub omega_r: T,
    pub resolution: Resolution,
    harmonics: Harmonics<T>,
    channel: [CMatrix<T>; 3],
    cache: HashMap<CacheKey, CMatrix<T>>,
}

impl<'a, T: Real> Engine<'a, T> {
    pub fn new(
        system: &'a SpinSystem<T>,
        ops: &'a OperatorSet<T>,
        crystallite: &EulerAngles<T>,
        omega_r: T,
        resolution: Resolution,
    ) -> Self {
        let coeffs = fourier_coefficients(system, crystallite);
        let harmonics = Harmonics::build(system, ops, &coeffs);
        let channel = ops.channel(&system.rf_channel());
        Self { system, ops, omega_r, resolution, harmonics, channel, cache: HashMap::new() }
    }

    pub fn rotor_period(&self) -> T {
        T::two_pi() / self.omega_r
    }

    fn max_substep(&self) -> T {
        self.rotor_period() / lit::<T>(self.resolution.substeps_per_rotor as f64)
    }

    /// Interaction Hamiltonian (no rf) at time `t`.
    pub fn h_int(&self, t: T) -> CMatrix<T> {
        self.harmonics.at(self.omega_r * t)
    }

    fn phase_key(&self, t: T) -> i64 {
        let f = to_f64(t / self.rotor_period());
        ((f - f.floor()) * 1e9).round() as i64 % 1_000_000_000
    }

    /// Propagator of a constant rf field `h` over `[t0, t0 + len]`.
    fn stretch(&self, t0: T, len: T, h: Option<[T; 3]>) -> Result<CMatrix<T>> {
        let d = self.ops.dim();
        let mut u = CMatrix::identity(d, d);
        if len <= T::zero() {
            return Ok(u);
        }
        let n = to_f64(len / self.max_substep() - lit(1e-9)).ceil().max(1.0) as usize;
        let dt = len / lit::<T>(n as f64);
        let rf = h.map(|[hx, hy, hz]| {
            &self.channel[0] * Complex::new(hx, T::zero())
                + &self.channel[1] * Complex::new(hy, T::zero())
                + &self.channel[2] * Complex::new(hz, T::zero())
        });
        // fourth-order Magnus step on the two Gauss–Legendre nodes
        let off = lit::<T>(3f64.sqrt() / 6.0);
        let half = lit::<T>(0.5);
        let k = Complex::new(T::zero(), -lit::<T>(3f64.sqrt() / 12.0) * dt);
        for s in 0..n {
            let ts = t0 + lit::<T>(s as f64) * dt;
            let mut h1 = self.h_int(ts + (half - off) * dt);
            let mut h2 = self.h_int(ts + (half + off) * dt);
            if let Some(r) = &rf {
                h1 += r;
                h2 += r;
            }
            let comm = &h2 * &h1 - &h1 * &h2;
            let ham = (h1 + h2) * Complex::new(half, T::zero()) + comm * k;
            u = expm_hermitian(&ham, dt)? * u;
        }
        Ok(polar_step(u))
    }

    fn element(&mut self, wave: &Arc<RfWaveform<T>>, playback: Playback, t0: T) -> Result<CMatrix<T>> {
        let key = CacheKey::Element { wave: Arc::as_ptr(wave) as usize, playback, phase: self.phase_key(t0) };
        if let Some(u) = self.cache.get(&key) {
            return Ok(u.clone());
        }
        let d = self.ops.dim();
        let mut u = CMatrix::identity(d, d);
        for k in 0..wave.len() {
            let ts = t0 + lit::<T>(k as f64) * wave.dwell;
            u = self.stretch(ts, wave.dwell, Some(wave.field(k, playback)))? * u;
        }
        self.cache.insert(key, u.clone());
        Ok(u)
    }

    fn delay(&mut self, t0: T, len: T) -> Result<CMatrix<T>> {
        let key = CacheKey::Delay { len: (to_f64(len) * 1e15).round() as i64, phase: self.phase_key(t0) };
        if let Some(u) = self.cache.get(&key) {
            return Ok(u.clone());
        }
        let u = self.stretch(t0, len, None)?;
        self.cache.insert(key, u.clone());
        Ok(u)
    }

    fn ideal(&self, angle: T, phase: T, spins: &[usize]) -> Result<CMatrix<T>> {
        let f = self.ops.channel(spins);
        let (s, c) = phase.sin_cos();
        let g = &f[0] * Complex::new(c, T::zero()) + &f[1] * Complex::new(s, T::zero());
        expm_hermitian(&g, angle)
    }

    /// Total propagator of a timeline starting at `t0`.
    pub fn propagator(&mut self, timeline: &Timeline<T>, t0: T) -> Result<CMatrix<T>> {
        let d = self.ops.dim();
        let mut u = CMatrix::identity(d, d);
        let mut t = t0;
        let tr = self.rotor_period();
        for (index, seg) in timeline.segments.iter().enumerate() {
            let err = |reason: String| Error::Timeline { index, reason };
            let step = match seg {
                Segment::Rf { wave, playback, repeat } => {
                    if wave.is_empty() || !(wave.dwell > T::zero()) {
                        return Err(err("empty waveform or non-positive dwell".into()));
                    }
                    let el = wave.duration();
                    let ratio = to_f64(el / tr);
                    if (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0 {
                        let one = self.element(wave, *playback, t)?;
                        matrix_power(&one, *repeat)
                    } else {
                        let mut acc = CMatrix::identity(d, d);
                        for r in 0..*repeat {
                            let ts = t + lit::<T>(r as f64) * el;
                            acc = self.element(wave, *playback, ts)? * acc;
                        }
                        acc
                    }
                }
                Segment::Delay(len) => {
                    if *len < T::zero() || !to_f64(*len).is_finite() {
                        return Err(err(format!("invalid delay {len} s")));
                    }
                    self.delay(t, *len)?
                }
                Segment::Ideal { angle, phase, spins } => {
                    if spins.iter().any(|&k| k >= self.ops.n) {
                        return Err(err("pulse addresses an undefined spin".into()));
                    }
                    self.ideal(*angle, *phase, spins)?
                }
            };
            u = step * u;
            t += seg.duration();
        }
        let e = unitarity_error(&u);
        if !(to_f64(e) < unitarity_tolerance::<T>()) {
            return Err(Error::Numerical(format!("propagator unitarity error {:e}", to_f64(e))));
        }
        Ok(u)
    }
}

/// `U^n` by binary powering.
pub fn matrix_power<T: Real>(u: &CMatrix<T>, mut n: usize) -> CMatrix<T> {
    let d = u.nrows();
    let mut result = CMatrix::identity(d, d);
    let mut base = u.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &base * &result;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Evolves `rho0` through `timeline` for one crystallite; returns the final state
/// and the total propagator.
pub fn propagate<T: Real>(
    rho0: &DensityState<T>,
    timeline: &Timeline<T>,
    system: &SpinSystem<T>,
    crystallite: &EulerAngles<T>,
    omega_r: T,
    resolution: Resolution,
) -> Result<(DensityState<T>, CMatrix<T>)> {
    let ops = spin_operators(system.len())?;
    let mut engine = Engine::new(system, &ops, crystallite, omega_r, resolution);
    let u = engine.propagator(timeline, T::zero())?;
    Ok((rho0.evolve(&u), u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detection {
    /// `Re tr(ρ I_kx)`
    #[default]
    Real,
    /// `|tr(ρ I_k⁺)|`
    Abs,
}

impl std::str::FromStr for Detection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Detection::Real),
            "abs" => Ok(Detection::Abs),
            _ => Err(Error::Config(format!("unknown detection '{s}' (expected real|abs)"))),
        }
    }
}

/// `Re tr(ρ·op)` normalised so that `ρ = I_kx`, `op = I_kx` gives 1.
pub fn detect<T: Real>(rho: &DensityState<T>, op: &CMatrix<T>) -> T {
    let norm = lit::<T>(rho.rho.nrows() as f64 / 4.0);
    (&rho.rho * op).trace().re / norm
}

/// Transverse signal of spin `k` in the chosen detection mode.
pub fn observe<T: Real>(rho: &DensityState<T>, ops: &OperatorSet<T>, k: usize, mode: Detection) -> T {
    match mode {
        Detection::Real => detect(rho, &ops.ix[k]),
        Detection::Abs => {
            let norm = lit::<T>(rho.rho.nrows() as f64 / 4.0);
            cabs((&rho.rho * ops.iplus(k)).trace()) / norm
        }
    }
}
