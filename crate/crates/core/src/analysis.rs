//! Closed-form dephasing signals, Fresnel charts, first-order average
//! Hamiltonians, truncation margins and distance fitting.
//!
//! In the closed form the MAIN experiment evolves each crystallite under the
//! recoupled Ising coupling `ω_DD·2I_zS_z` with `ω_DD = (3/16)·c1(β)·cos γ`, so
//! `S_m = S_r·⟨cos(ω_DD T)⟩` and `η = 1 − ⟨cos(ω_DD T)⟩`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::num::{cabs, lit, to_f64, CMatrix, Cplx, Real};
use crate::powder::OrientationSet;
use crate::propagator::{expm_hermitian, hamiltonian_at};
use crate::rfgen::{Condition, TofuParams};
use crate::spinsys::{
    dipolar_fourier_factors, dipole_coupling_constant, fourier_coefficients, EulerAngles, SpinSystem,
};

/// Ising prefactor of the quarter condition.
pub const ISING_PREFACTOR: f64 = 3.0 / 16.0;

/// Powder quadrature over the two angles the recoupled coupling depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature<T> {
    /// `(β, γ, weight)`, weights summing to one
    pub nodes: Vec<(T, T, T)>,
}

impl<T: Real> Quadrature<T> {
    /// Gauss–Legendre in `cos β` times a uniform `γ` grid.
    pub fn product(n_beta: usize, n_gamma: usize) -> Self {
        let (x, w) = gauss_legendre(n_beta);
        let mut nodes = Vec::with_capacity(n_beta * n_gamma);
        let ng = lit::<T>(n_gamma as f64);
        for (xi, wi) in x.iter().zip(&w) {
            let beta = lit::<T>(xi.acos());
            for j in 0..n_gamma {
                let gamma = T::two_pi() * lit::<T>(j as f64) / ng;
                nodes.push((beta, gamma, lit::<T>(wi / 2.0) / ng));
            }
        }
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `⟨cos(κ·c1(β)·cos γ·t)⟩`
    fn mean_cos(&self, kappa: T, b: T, t: T) -> T {
        self.nodes.iter().fold(T::zero(), |acc, &(beta, gamma, w)| {
            let (c1, _) = dipolar_fourier_factors(b, beta);
            acc + w * (kappa * c1 * gamma.cos() * t).cos()
        })
    }
}

impl<T: Real> Default for Quadrature<T> {
    fn default() -> Self {
        Self::product(256, 128)
    }
}

impl<T: Real> From<&OrientationSet<T>> for Quadrature<T> {
    fn from(set: &OrientationSet<T>) -> Self {
        Self { nodes: set.entries.iter().map(|o| (o.euler.beta, o.euler.gamma, o.weight)).collect() }
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `S_r(T) = e^{−λT}·Π cos(πJ T)`, with `J` in Hz.
pub fn reference_signal<T: Real>(t: T, j_list: &[T], lambda: T) -> T {
    j_list.iter().fold((-lambda * t).exp(), |acc, &j| acc * (T::pi() * j * t).cos())
}

/// `S_m(T) = S_r(T)·⟨cos(ω_DD T)⟩`, with `b` in rad/s.
pub fn main_signal<T: Real>(t: T, j_list: &[T], lambda: T, b: T, quad: &Quadrature<T>) -> T {
    reference_signal(t, j_list, lambda) * quad.mean_cos(lit(ISING_PREFACTOR), b, t)
}

/// `1 − ⟨cos(ω_DD T)⟩` directly.
pub fn fresnel_eta<T: Real>(t: T, b: T, quad: &Quadrature<T>) -> T {
    T::one() - quad.mean_cos(lit(ISING_PREFACTOR), b, t)
}

/// Default floor below which `|S_r|` is not divided by.
pub const ETA_FLOOR: f64 = 1e-6;

/// `η = (S_r − S_m)/S_r` pointwise; points where `|S_r| ≤ floor` are `None`.
pub fn eta<T: Real>(s_r: &[T], s_m: &[T], floor: T) -> Result<Vec<Option<T>>> {
    if s_r.len() != s_m.len() {
        return Err(Error::Domain(format!("η needs matching grids, got {} and {}", s_r.len(), s_m.len())));
    }
    Ok(s_r.iter().zip(s_m).map(|(&r, &m)| if r.abs() > floor { Some((r - m) / r) } else { None }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FresnelChart<T> {
    /// Å
    pub distances: Vec<T>,
    /// s
    pub t_grid: Vec<T>,
    /// `curves[distance][time]`
    pub curves: Vec<Vec<T>>,
    /// rad s⁻¹ T⁻¹
    pub gammas: (T, T),
}

/// Closed-form η curves for each distance, computed in parallel.
pub fn fresnel_chart<T: Real>(
    distances: &[T],
    t_grid: &[T],
    gammas: (T, T),
    quad: &Quadrature<T>,
) -> Result<FresnelChart<T>> {
    let curves = distances
        .par_iter()
        .map(|&r| {
            let b = dipole_coupling_constant(r * lit::<T>(1e-10), gammas.0, gammas.1)?;
            Ok(t_grid.iter().map(|&t| fresnel_eta(t, b, quad)).collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(FresnelChart { distances: distances.to_vec(), t_grid: t_grid.to_vec(), curves, gammas })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonianReport<T: Real> {
    pub condition: Condition,
    /// rad/s
    pub matrix: CMatrix<T>,
    /// coefficient of `I_z` per spin
    pub shifts: Vec<T>,
    /// `(a, b, d)` for `d·2I_zS_z`
    pub ising: Vec<(usize, usize, T)>,
    /// `(a, b, d)` for `d·(I_xS_x + I_yS_y)`
    pub planar: Vec<(usize, usize, T)>,
}

impl<T: Real> EffectiveHamiltonianReport<T> {
    pub fn condition_label(&self) -> &'static str {
        match self.condition {
            Condition::Quarter => "C = ωr/4",
            Condition::Half => "C = ωr/2",
        }
    }
}

/// Scale applied to a spin-linear term on the rf channel.
fn linear_scale<T: Real>(c: &[Cplx<T>; 5], condition: Condition) -> T {
    let half = lit::<T>(0.5);
    match condition {
        Condition::Quarter => half * c[2].re,
        Condition::Half => half * c[2].re + lit::<T>(0.25) * (c[3].re + c[1].re),
    }
}

/// Secular first-order average Hamiltonian of a TOFU element for one crystallite.
pub fn effective_hamiltonian<T: Real>(
    system: &SpinSystem<T>,
    crystallite: &EulerAngles<T>,
    condition: Condition,
) -> Result<EffectiveHamiltonianReport<T>> {
    let ops = crate::propagator::spin_operators::<T>(system.len())?;
    let coeffs = fourier_coefficients(system, crystallite);
    let channel = system.rf_channel();
    let on = |k: usize| channel.contains(&k);
    let shifts: Vec<T> = coeffs
        .shifts
        .iter()
        .enumerate()
        .map(|(k, c)| if on(k) { linear_scale(c, condition) } else { c[2].re })
        .collect();
    let mut ising = Vec::new();
    let mut planar = Vec::new();
    for (d, c) in system.dipolar.iter().zip(&coeffs.dipolar) {
        let (a, b) = (d.spin_a, d.spin_b);
        let v = match (on(a), on(b)) {
            (true, true) => {
                let w1 = c[3].re + c[1].re;
                let w2 = c[4].re + c[0].re;
                let k = match condition {
                    Condition::Quarter => lit::<T>(3.0 / 32.0) * w1,
                    Condition::Half => lit::<T>(1.5) * (lit::<T>(0.25) * w1 + lit::<T>(1.0 / 16.0) * w2),
                };
                ising.push((a, b, k));
                planar.push((a, b, -k));
                continue;
            }
            // 2I_zX_z with one rf spin scales like that spin's shift
            (true, false) | (false, true) => linear_scale(c, condition),
            (false, false) => c[2].re,
        };
        ising.push((a, b, v));
    }
    for j in &system.scalar {
        let (a, b) = (j.spin_a, j.spin_b);
        let w = T::two_pi() * j.j;
        if system.homonuclear(a, b) && on(a) && on(b) {
            ising.push((a, b, lit::<T>(0.5) * w));
            planar.push((a, b, w));
        } else {
            let k = if on(a) || on(b) { lit::<T>(0.5) } else { T::one() };
            ising.push((a, b, lit::<T>(0.5) * k * w));
        }
    }

    let d = ops.dim();
    let mut h = CMatrix::<T>::zeros(d, d);
    let re = |x: T| Cplx::new(x, T::zero());
    for (k, &s) in shifts.iter().enumerate() {
        h += &ops.iz[k] * re(s);
    }
    for &(a, b, v) in &ising {
        h += &ops.iz[a] * &ops.iz[b] * re(lit::<T>(2.0) * v);
    }
    for &(a, b, v) in &planar {
        h += (&ops.ix[a] * &ops.ix[b] + &ops.iy[a] * &ops.iy[b]) * re(v);
    }
    Ok(EffectiveHamiltonianReport { condition, matrix: h, shifts, ising, planar })
}

/// rf-frame propagator `e^{−iCtF_x}e^{−iCtF_y}e^{−iBtF_z}` of the TOFU field.
pub fn rf_frame<T: Real>(t: T, tofu: &TofuParams<T>, f: &[CMatrix<T>; 3]) -> Result<CMatrix<T>> {
    let c = tofu.c_field * t;
    Ok(expm_hermitian(&f[0], c)? * expm_hermitian(&f[1], c)? * expm_hermitian(&f[2], tofu.b_field * t)?)
}

/// Time average of the interaction-frame Hamiltonian over one element by
/// `n_points` uniform samples. With `secular`, only blocks of equal total
/// rf-channel `F_z` are kept.
pub fn average_hamiltonian<T: Real>(
    system: &SpinSystem<T>,
    crystallite: &EulerAngles<T>,
    tofu: &TofuParams<T>,
    n_points: usize,
    secular: bool,
) -> Result<CMatrix<T>> {
    let ops = crate::propagator::spin_operators::<T>(system.len())?;
    let coeffs = fourier_coefficients(system, crystallite);
    let f = ops.channel(&system.rf_channel());
    let tau = tofu.element_duration();
    let d = ops.dim();
    let mut acc = CMatrix::<T>::zeros(d, d);
    let np = lit::<T>(n_points as f64);
    for k in 0..n_points {
        let t = tau * lit::<T>(k as f64) / np;
        let h = hamiltonian_at(t, system, &ops, &coeffs, tofu.omega_r, None);
        let u = rf_frame(t, tofu, &f)?;
        acc += u.adjoint() * h * &u;
    }
    acc /= Cplx::new(np, T::zero());
    if secular {
        let m: Vec<T> = (0..d).map(|i| f[2][(i, i)].re).collect();
        for i in 0..d {
            for j in 0..d {
                if (m[i] - m[j]).abs() > lit(1e-9) {
                    acc[(i, j)] = Cplx::new(T::zero(), T::zero());
                }
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub warn: f64,
    pub fail: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { warn: 5.0, fail: 2.0 }
    }
}

impl Thresholds {
    pub fn classify(&self, margin: f64) -> Tier {
        if margin < self.fail {
            Tier::Fail
        } else if margin < self.warn {
            Tier::Warn
        } else {
            Tier::Pass
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Margin {
    pub spin: usize,
    /// e.g. `B-2C`
    pub branch: &'static str,
    pub value: f64,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationDiagnostics {
    pub margins: Vec<Margin>,
    pub thresholds: Thresholds,
    /// `(ΔM, k, m)` with `ΔM·B + kC + mω_r = 0`: dipolar terms that survive averaging
    pub resonances: Vec<(i32, i32, i32)>,
}

impl TruncationDiagnostics {
    pub fn worst(&self) -> Tier {
        self.margins.iter().map(|m| m.tier).max().unwrap_or(Tier::Pass)
    }
}

/// Margins `|B ± 2C|/|ω⁽⁰⁾|`, `|B ± (2C+ω_r)|/|ω⁽±¹⁾|`, `|B ± 2(C+ω_r)|/|ω⁽±²⁾|`
/// for every rf-channel spin, taking the largest `|ω⁽ᵐ⁾|` over `orientations`.
pub fn truncation_check<T: Real>(
    system: &SpinSystem<T>,
    tofu: &TofuParams<T>,
    orientations: &OrientationSet<T>,
    thresholds: Thresholds,
) -> TruncationDiagnostics {
    let (b, c, wr) = (to_f64(tofu.b_field), to_f64(tofu.c_field), to_f64(tofu.omega_r));
    let mut margins = Vec::new();
    for k in system.rf_channel() {
        let mut amp = [0.0f64; 3];
        for o in &orientations.entries {
            let co = fourier_coefficients(system, &o.euler);
            for (m, a) in amp.iter_mut().enumerate() {
                *a = a.max(to_f64(cabs(co.shifts[k][2 + m])));
            }
        }
        let branches: [(&'static str, f64, usize); 6] = [
            ("B-2C", b - 2.0 * c, 0),
            ("B+2C", b + 2.0 * c, 0),
            ("B-(2C+wr)", b - (2.0 * c + wr), 1),
            ("B+(2C+wr)", b + (2.0 * c + wr), 1),
            ("B-2(C+wr)", b - 2.0 * (c + wr), 2),
            ("B+2(C+wr)", b + 2.0 * (c + wr), 2),
        ];
        for (branch, gap, m) in branches {
            let value = if amp[m] == 0.0 { f64::INFINITY } else { gap.abs() / amp[m] };
            margins.push(Margin { spin: k, branch, value, tier: thresholds.classify(value) });
        }
    }
    let mut resonances = Vec::new();
    for dm in 1..=2 {
        for k in -4..=4 {
            for m in -2..=2 {
                if (dm as f64 * b + k as f64 * c + m as f64 * wr).abs() < 1e-9 * wr {
                    resonances.push((dm, k, m));
                }
            }
        }
    }
    TruncationDiagnostics { margins, thresholds, resonances }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Å
    pub r_min: f64,
    pub r_max: f64,
    pub step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { r_min: 1.0, r_max: 6.0, step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceFit {
    /// Å
    pub r: f64,
    /// sum of squared η deviations at `r`
    pub residual: f64,
    /// Å, half-width of the region where the residual is within twice its minimum
    pub uncertainty: f64,
    pub n_points: usize,
    /// the minimum sits on the upper grid bound
    pub no_coupling: bool,
}

/// Least-squares distance from η data on a distance grid, refined by a parabola
/// through the grid minimum and its neighbours.
pub fn fit_distance<T: Real>(
    eta_data: &[Option<T>],
    t_grid: &[T],
    gammas: (T, T),
    quad: &Quadrature<T>,
    opts: FitOptions,
) -> Result<DistanceFit> {
    if eta_data.len() != t_grid.len() {
        return Err(Error::Domain(format!("{} η points for {} times", eta_data.len(), t_grid.len())));
    }
    let pts: Vec<(T, T)> = t_grid.iter().zip(eta_data).filter_map(|(&t, e)| e.map(|e| (t, e))).collect();
    if pts.len() < 3 {
        return Err(Error::Domain(format!("distance fit needs at least 3 valid η points, got {}", pts.len())));
    }
    if !(opts.step > 0.0 && opts.r_max > opts.r_min && opts.r_min > 0.0) {
        return Err(Error::Config("distance grid must satisfy 0 < r_min < r_max and step > 0".into()));
    }
    let n = ((opts.r_max - opts.r_min) / opts.step).round() as usize + 1;
    let residual_at = |r: f64| -> Result<f64> {
        let b = dipole_coupling_constant(lit::<T>(r * 1e-10), gammas.0, gammas.1)?;
        Ok(pts.iter().map(|&(t, e)| to_f64(e - fresnel_eta(t, b, quad)).powi(2)).sum())
    };
    let grid: Vec<f64> = (0..n).map(|i| opts.r_min + i as f64 * opts.step).collect();
    let res = grid.par_iter().map(|&r| residual_at(r)).collect::<Result<Vec<f64>>>()?;
    let i = (0..n).fold(0, |best, k| if res[k] < res[best] { k } else { best });
    let (mut r, mut rmin) = (grid[i], res[i]);
    if i > 0 && i + 1 < n {
        let (a, b, c) = (res[i - 1], res[i], res[i + 1]);
        let den = a - 2.0 * b + c;
        if den > 0.0 {
            let off = 0.5 * (a - c) / den;
            r = grid[i] + off * opts.step;
            rmin = rmin.min(residual_at(r)?);
        }
    }
    let limit = 2.0 * res[i];
    let (mut lo, mut hi) = (i, i);
    while lo > 0 && res[lo - 1] <= limit {
        lo -= 1;
    }
    while hi + 1 < n && res[hi + 1] <= limit {
        hi += 1;
    }
    let uncertainty = (0.5 * (grid[hi] - grid[lo])).max(opts.step);
    Ok(DistanceFit { r, residual: rmin, uncertainty, n_points: pts.len(), no_coupling: i + 1 == n })
}

/// Least-squares `κ` in `η = 1 − ⟨cos(κ·c1·cos γ·T)⟩` for a coupling `b` (rad/s).
pub fn fit_ising_prefactor<T: Real>(eta_data: &[T], t_grid: &[T], b: T, quad: &Quadrature<T>) -> Result<f64> {
    if eta_data.len() != t_grid.len() || eta_data.is_empty() {
        return Err(Error::Domain("prefactor fit needs matching, non-empty grids".into()));
    }
    let cost = |kappa: f64| -> f64 {
        let k = lit::<T>(kappa);
        eta_data.iter().zip(t_grid).map(|(&e, &t)| to_f64(e - (T::one() - quad.mean_cos(k, b, t))).powi(2)).sum()
    };
    let n = 400;
    let hi = 0.5;
    let costs: Vec<f64> = (0..=n).into_par_iter().map(|i| cost(hi * i as f64 / n as f64)).collect();
    let i = (0..=n).fold(0, |best, k| if costs[k] < costs[best] { k } else { best });
    // golden-section search inside the bracketing cells
    let h = hi / n as f64;
    let (mut a, mut c) = ((i as f64 - 1.0).max(0.0) * h, (i as f64 + 1.0).min(n as f64) * h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = c - g * (c - a);
    let mut x2 = a + g * (c - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while c - a > 1e-9 {
        if f1 < f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - g * (c - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (c - a);
            f2 = cost(x2);
        }
    }
    Ok(0.5 * (a + c))
}

/// Relative Frobenius distance `‖a − b‖/‖b‖`.
pub fn relative_difference<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> f64 {
    let diff: f64 = (a - b).iter().map(|z| to_f64(z.norm_sqr())).sum();
    let norm: f64 = b.iter().map(|z| to_f64(z.norm_sqr())).sum();
    (diff / norm).sqrt()
}
