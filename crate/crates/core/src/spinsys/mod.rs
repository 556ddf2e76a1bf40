//! Spin systems, orientations and the MAS Fourier series of every interaction.
//!
//! Each interaction frequency is written as `ω(t) = Σ_m ω⁽ᵐ⁾ e^{imω_r t}`.
//! Tensors are carried PAS → crystal (per-interaction Euler angles) → rotor
//! (crystallite angles) → lab, the last step being the rotation
//! `(−ω_r t, −θ_m, 0)` about the spinning axis inclined at the magic angle.

pub mod wigner;

use nalgebra::Matrix3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::num::{lit, Cplx, Real};

pub use crate::config::build_spin_system;

/// Vacuum permeability over 4π, T²·m³/J.
pub const MU0_OVER_4PI: f64 = 1e-7;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Gyromagnetic ratios, rad·s⁻¹·T⁻¹.
pub const GAMMA_1H: f64 = 267.522_187_44e6;
pub const GAMMA_13C: f64 = 67.282_8e6;
pub const GAMMA_15N: f64 = -27.116e6;

pub const MAX_SPINS: usize = 6;

/// `arccos(1/√3)` at full working precision.
pub fn magic_angle<T: Real>() -> T {
    (T::one() / lit::<T>(3.0).sqrt()).acos()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> EulerAngles<T> {
    pub fn new(alpha: T, beta: T, gamma: T) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_degrees(a: f64, b: f64, g: f64) -> Self {
        Self::new(lit(a.to_radians()), lit(b.to_radians()), lit(g.to_radians()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spin<T> {
    pub label: String,
    /// rad·s⁻¹·T⁻¹
    pub gyromagnetic_ratio: T,
    /// Offset from the rf carrier, rad/s. Positive values add to the `I_z` coefficient.
    pub iso_shift: T,
    /// Anisotropy δ (Haeberlen), rad/s.
    pub csa_aniso: T,
    pub csa_asymmetry: T,
    pub csa_euler: EulerAngles<T>,
}

impl<T: Real> Spin<T> {
    pub fn new(label: impl Into<String>, gyromagnetic_ratio: T, iso_shift: T) -> Self {
        Self {
            label: label.into(),
            gyromagnetic_ratio,
            iso_shift,
            csa_aniso: T::zero(),
            csa_asymmetry: T::zero(),
            csa_euler: EulerAngles::zero(),
        }
    }

    pub fn with_csa(mut self, aniso: T, asymmetry: T, euler: EulerAngles<T>) -> Self {
        self.csa_aniso = aniso;
        self.csa_asymmetry = asymmetry;
        self.csa_euler = euler;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipolarCoupling<T> {
    pub spin_a: usize,
    pub spin_b: usize,
    /// Dipole-dipole coupling constant, rad/s.
    pub b_is: T,
    pub pc_euler: EulerAngles<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCoupling<T> {
    pub spin_a: usize,
    pub spin_b: usize,
    /// Hz
    pub j: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem<T> {
    pub spins: Vec<Spin<T>>,
    pub dipolar: Vec<DipolarCoupling<T>>,
    pub scalar: Vec<ScalarCoupling<T>>,
    pub s_spin: usize,
}

impl<T: Real> SpinSystem<T> {
    pub fn new(
        spins: Vec<Spin<T>>,
        dipolar: Vec<DipolarCoupling<T>>,
        scalar: Vec<ScalarCoupling<T>>,
        s_spin: usize,
    ) -> Result<Self> {
        let sys = Self { spins, dipolar, scalar, s_spin };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let n = self.spins.len();
        if n == 0 {
            return Err(Error::Config("spin system has no spins".into()));
        }
        if n > MAX_SPINS {
            return Err(Error::Config(format!("{n} spins exceeds the limit of {MAX_SPINS}")));
        }
        if self.s_spin >= n {
            return Err(Error::Config(format!("S spin index {} out of range", self.s_spin)));
        }
        for s in &self.spins {
            if s.gyromagnetic_ratio == T::zero() {
                return Err(Error::Config(format!("spin {}: zero gyromagnetic ratio", s.label)));
            }
            if s.csa_asymmetry < T::zero() || s.csa_asymmetry > T::one() {
                return Err(Error::Config(format!("spin {}: CSA asymmetry outside [0, 1]", s.label)));
            }
        }
        let mut seen = Vec::new();
        for d in &self.dipolar {
            self.check_pair(d.spin_a, d.spin_b, "dipolar")?;
            let key = (d.spin_a.min(d.spin_b), d.spin_a.max(d.spin_b));
            if seen.contains(&key) {
                return Err(Error::Config(format!(
                    "duplicate dipolar coupling {}-{}",
                    self.spins[key.0].label, self.spins[key.1].label
                )));
            }
            seen.push(key);
            let like = self.spins[d.spin_a].gyromagnetic_ratio * self.spins[d.spin_b].gyromagnetic_ratio > T::zero();
            if like && d.b_is > T::zero() {
                return Err(Error::Config(format!(
                    "dipolar coupling {}-{}: b must be <= 0 for like-sign gyromagnetic ratios",
                    self.spins[d.spin_a].label, self.spins[d.spin_b].label
                )));
            }
        }
        let mut seen = Vec::new();
        for j in &self.scalar {
            self.check_pair(j.spin_a, j.spin_b, "scalar")?;
            let key = (j.spin_a.min(j.spin_b), j.spin_a.max(j.spin_b));
            if seen.contains(&key) {
                return Err(Error::Config("duplicate scalar coupling".into()));
            }
            seen.push(key);
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize, what: &str) -> Result<()> {
        let n = self.spins.len();
        if a >= n || b >= n {
            return Err(Error::Config(format!("{what} coupling references undefined spin")));
        }
        if a == b {
            return Err(Error::Config(format!("{what} coupling of a spin with itself")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Same nuclear species (identical gyromagnetic ratio).
    pub fn homonuclear(&self, a: usize, b: usize) -> bool {
        let (ga, gb) = (self.spins[a].gyromagnetic_ratio, self.spins[b].gyromagnetic_ratio);
        (ga - gb).abs() <= lit::<T>(1e-9) * ga.abs()
    }

    /// Spins irradiated by the rf channel: those of the same species as S.
    pub fn rf_channel(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.homonuclear(k, self.s_spin)).collect()
    }

    /// Channel spins other than S, whose signals are reported.
    pub fn observed(&self) -> Vec<usize> {
        self.rf_channel().into_iter().filter(|&k| k != self.s_spin).collect()
    }

    /// Copy without the given spin; couplings involving it are dropped and indices remapped.
    pub fn without_spin(&self, k: usize) -> Result<Self> {
        if k == self.s_spin {
            return Err(Error::Config("cannot remove the S spin".into()));
        }
        let remap = |i: usize| if i > k { i - 1 } else { i };
        let spins = self.spins.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| s.clone()).collect();
        let dipolar = self
            .dipolar
            .iter()
            .filter(|d| d.spin_a != k && d.spin_b != k)
            .map(|d| DipolarCoupling { spin_a: remap(d.spin_a), spin_b: remap(d.spin_b), ..d.clone() })
            .collect();
        let scalar = self
            .scalar
            .iter()
            .filter(|j| j.spin_a != k && j.spin_b != k)
            .map(|j| ScalarCoupling { spin_a: remap(j.spin_a), spin_b: remap(j.spin_b), ..j.clone() })
            .collect();
        Self::new(spins, dipolar, scalar, remap(self.s_spin))
    }
}

/// `b = −(μ0/4π) γ_a γ_b ħ / r³` in rad/s.
pub fn dipole_coupling_constant<T: Real>(r: T, gamma_a: T, gamma_b: T) -> Result<T> {
    if !(r > T::zero()) {
        return Err(Error::Domain(format!("internuclear distance must be positive, got {r}")));
    }
    Ok(-lit::<T>(MU0_OVER_4PI * HBAR) * gamma_a * gamma_b / (r * r * r))
}

/// Inverse of [`dipole_coupling_constant`]: distance in metres for a coupling `b`.
pub fn distance_from_coupling<T: Real>(b: T, gamma_a: T, gamma_b: T) -> Result<T> {
    let k = -lit::<T>(MU0_OVER_4PI * HBAR) * gamma_a * gamma_b / b;
    if !(k > T::zero()) {
        return Err(Error::Domain("coupling sign inconsistent with gyromagnetic ratios".into()));
    }
    Ok(k.cbrt())
}

/// Dipolar Fourier factors `(c1, c2) = (b sin2β / 2√2, −b sin²β / 4)`.
pub fn dipolar_fourier_factors<T: Real>(b_is: T, beta: T) -> (T, T) {
    let c1 = b_is * (lit::<T>(2.0) * beta).sin() / lit::<T>(8f64.sqrt());
    let s = beta.sin();
    (c1, -b_is * s * s / lit(4.0))
}

pub type Coeffs<T> = [Cplx<T>; 5];

/// Fourier coefficients `ω⁽ᵐ⁾`, `m = −2..=2`, of every interaction for one crystallite.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs<T> {
    pub shifts: Vec<Coeffs<T>>,
    pub dipolar: Vec<Coeffs<T>>,
}

/// Evaluates `Σ_m ω⁽ᵐ⁾ e^{imω_r t}` (real for a valid series).
pub fn eval_series<T: Real>(c: &Coeffs<T>, omega_r: T, t: T) -> T {
    let mut v = c[2].re;
    for m in 1..=2usize {
        let ph = lit::<T>(m as f64) * omega_r * t;
        // ω⁽ᵐ⁾e^{iφ} + ω⁽⁻ᵐ⁾e^{−iφ} = 2 Re(ω⁽ᵐ⁾e^{iφ}) under conjugate symmetry
        v += lit::<T>(2.0) * (c[2 + m].re * ph.cos() - c[2 + m].im * ph.sin());
    }
    v
}

fn lab_coeffs<T: Real>(pas: &Matrix3<T>, iso: T, frames: &[EulerAngles<T>]) -> Coeffs<T> {
    let mut a = wigner::cartesian_to_spherical(pas);
    for e in frames {
        a = wigner::rotate(&a, e);
    }
    let d = wigner::small_d2(-magic_angle::<T>());
    let k = lit::<T>((2.0f64 / 3.0).sqrt());
    let mut w = [Complex::new(T::zero(), T::zero()); 5];
    for m in 0..5 {
        w[m] = a[m] * (k * d[m][2]);
    }
    w[2].re += iso;
    w
}

/// PAS tensor of a dipolar coupling: `b·diag(−½, −½, 1)`, so `ω(t) = b·P₂(cos θ(t))`.
pub fn dipolar_pas<T: Real>(b: T) -> Matrix3<T> {
    let h = -lit::<T>(0.5) * b;
    Matrix3::from_diagonal(&nalgebra::Vector3::new(h, h, b))
}

/// PAS shielding tensor in the Haeberlen convention.
pub fn csa_pas<T: Real>(aniso: T, eta: T) -> Matrix3<T> {
    let h = lit::<T>(0.5) * aniso;
    Matrix3::from_diagonal(&nalgebra::Vector3::new(-h * (T::one() + eta), -h * (T::one() - eta), aniso))
}

pub fn fourier_coefficients<T: Real>(sys: &SpinSystem<T>, crystallite: &EulerAngles<T>) -> FourierCoeffs<T> {
    let shifts = sys
        .spins
        .iter()
        .map(|s| lab_coeffs(&csa_pas(s.csa_aniso, s.csa_asymmetry), s.iso_shift, &[s.csa_euler, *crystallite]))
        .collect();
    let dipolar =
        sys.dipolar.iter().map(|d| lab_coeffs(&dipolar_pas(d.b_is), T::zero(), &[d.pc_euler, *crystallite])).collect();
    FourierCoeffs { shifts, dipolar }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rz(a: f64) -> Matrix3<f64> {
        let (c, s) = (a.cos(), a.sin());
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }
    fn ry(a: f64) -> Matrix3<f64> {
        let (c, s) = (a.cos(), a.sin());
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    }

    // Cartesian oracle: rotate the tensor into the lab frame at time t and read T_zz.
    fn brute(pas: Matrix3<f64>, iso: f64, frames: &[(f64, f64, f64)], wr: f64, t: f64) -> f64 {
        let mut m = pas;
        let lab = (-wr * t, -magic_angle::<f64>(), 0.0);
        for &(a, b, g) in frames.iter().chain(std::iter::once(&lab)) {
            let r = rz(a) * ry(b) * rz(g);
            m = r.transpose() * m * r;
        }
        m[(2, 2)] + iso
    }

    fn pair(b_hz: f64, pc: (f64, f64, f64)) -> SpinSystem<f64> {
        SpinSystem::new(
            vec![Spin::new("I", GAMMA_13C, 0.0), Spin::new("S", GAMMA_13C, 0.0)],
            vec![DipolarCoupling {
                spin_a: 0,
                spin_b: 1,
                b_is: 2.0 * PI * b_hz,
                pc_euler: EulerAngles::from_degrees(pc.0, pc.1, pc.2),
            }],
            vec![],
            1,
        )
        .unwrap()
    }

    #[test]
    fn dipole_constant_for_carbon_pair() {
        let b = dipole_coupling_constant(1.5e-10, GAMMA_13C, GAMMA_13C).unwrap();
        // frozen from the closed formula with the constants above
        assert_abs_diff_eq!(b / (2.0 * PI), -2251.286, epsilon = 1e-3);
        let b2 = dipole_coupling_constant(3.0e-10, GAMMA_13C, GAMMA_13C).unwrap();
        assert_abs_diff_eq!(b2 / b, 0.125, epsilon = 1e-15);
        assert!(dipole_coupling_constant(0.0, GAMMA_13C, GAMMA_13C).is_err());
        assert!(dipole_coupling_constant(-1e-10, GAMMA_13C, GAMMA_13C).is_err());
        let r = distance_from_coupling(b, GAMMA_13C, GAMMA_13C).unwrap();
        assert_abs_diff_eq!(r, 1.5e-10, epsilon = 1e-22);
    }

    #[test]
    fn fourier_factors() {
        let b = -2.0 * PI * 2251.0;
        assert_eq!(dipolar_fourier_factors(b, 0.0), (0.0, 0.0));
        let (c1, c2) = dipolar_fourier_factors(b, PI / 4.0);
        assert_abs_diff_eq!(c1 / (2.0 * PI), -795.85, epsilon = 0.01);
        assert_abs_diff_eq!(c2 / (2.0 * PI), 281.375, epsilon = 0.001);
        let (c1, c2) = dipolar_fourier_factors(b, PI / 2.0);
        assert_abs_diff_eq!(c1, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c2, -b / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn isotropic_shift_only_has_m0() {
        let sys = SpinSystem::new(vec![Spin::new("A", GAMMA_13C, 2.0 * PI * 1000.0)], vec![], vec![], 0).unwrap();
        let c = fourier_coefficients(&sys, &EulerAngles::from_degrees(10.0, 20.0, 30.0));
        assert_abs_diff_eq!(c.shifts[0][2].re, 2.0 * PI * 1000.0, epsilon = 1e-9);
        for m in [0, 1, 3, 4] {
            assert_abs_diff_eq!(c.shifts[0][m].norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn vector_on_rotor_axis_is_not_modulated() {
        let sys = pair(-2000.0, (0.0, 0.0, 0.0));
        let c = fourier_coefficients(&sys, &EulerAngles::zero());
        for m in [0, 1, 3, 4] {
            assert_abs_diff_eq!(c.dipolar[0][m].norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn figure_one_weak_coupling_matches_brute_force() {
        let wr = 2.0 * PI * 20e3;
        let b = 2.0 * PI * -300.0;
        let sys = pair(-300.0, (0.0, 90.0, 0.0));
        let cr = EulerAngles::from_degrees(0.0, 45.0, 0.0);
        let c = fourier_coefficients(&sys, &cr);
        let frames = [(0.0, PI / 2.0, 0.0), (0.0, PI / 4.0, 0.0)];
        let tr = 2.0 * PI / wr;
        let mut worst = 0.0f64;
        for k in 0..1000 {
            let t = tr * k as f64 / 1000.0;
            let v = eval_series(&c.dipolar[0], wr, t);
            worst = worst.max((v - brute(dipolar_pas(b), 0.0, &frames, wr, t)).abs());
        }
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn csa_with_two_frames_matches_brute_force() {
        let wr = 2.0 * PI * 12.5e3;
        let (d, eta) = (2.0 * PI * 5000.0, 0.4);
        let pc = (0.3, 1.1, -0.6);
        let cr = (1.9, 0.7, 2.4);
        let spin = Spin::new("A", GAMMA_13C, 2.0 * PI * -700.0).with_csa(d, eta, EulerAngles::new(pc.0, pc.1, pc.2));
        let sys = SpinSystem::new(vec![spin], vec![], vec![], 0).unwrap();
        let c = fourier_coefficients(&sys, &EulerAngles::new(cr.0, cr.1, cr.2));
        for k in 0..97 {
            let t = k as f64 * 3.7e-6;
            let v = eval_series(&c.shifts[0], wr, t);
            let o = brute(csa_pas(d, eta), 2.0 * PI * -700.0, &[pc, cr], wr, t);
            assert_abs_diff_eq!(v, o, epsilon = 1e-9);
        }
    }

    #[test]
    fn factor_consistency_first_harmonic() {
        let b = -2.0 * PI * 2251.0;
        for &(beta, gamma) in &[(0.6, 0.9), (PI / 4.0, 0.0), (2.1, -1.3)] {
            let sys = pair(-2251.0, (0.0, 0.0, 0.0));
            let c = fourier_coefficients(&sys, &EulerAngles::new(0.0, beta, gamma));
            let (c1, _) = dipolar_fourier_factors(b, beta);
            let sum = (c.dipolar[0][3] + c.dipolar[0][1]).re;
            assert!((sum - 2.0 * c1 * gamma.cos()).abs() <= 1e-9 * (2.0 * c1).abs());
        }
    }

    #[test]
    fn second_harmonic_has_opposite_sign_to_quoted_c2() {
        // ω⁽²⁾ + ω⁽⁻²⁾ = −2 c2 cos 2γ with c2 = −b sin²β / 4
        let b = -2.0 * PI * 2251.0;
        let (beta, gamma) = (0.8, 0.35);
        let c = fourier_coefficients(&pair(-2251.0, (0.0, 0.0, 0.0)), &EulerAngles::new(0.0, beta, gamma));
        let (_, c2) = dipolar_fourier_factors(b, beta);
        let sum = (c.dipolar[0][4] + c.dipolar[0][0]).re;
        assert_abs_diff_eq!(sum, -2.0 * c2 * (2.0 * gamma).cos(), epsilon = 1e-9);
    }

    #[test]
    fn f32_path_agrees_with_f64() {
        let sys64 = pair(-2100.0, (0.0, 30.0, 10.0));
        let c64 = fourier_coefficients(&sys64, &EulerAngles::from_degrees(5.0, 45.0, 20.0));
        let s = &sys64.dipolar[0];
        let sys32 = SpinSystem::<f32>::new(
            vec![Spin::new("I", GAMMA_13C as f32, 0.0), Spin::new("S", GAMMA_13C as f32, 0.0)],
            vec![DipolarCoupling {
                spin_a: 0,
                spin_b: 1,
                b_is: s.b_is as f32,
                pc_euler: EulerAngles::from_degrees(0.0, 30.0, 10.0),
            }],
            vec![],
            1,
        )
        .unwrap();
        let c32 = fourier_coefficients(&sys32, &EulerAngles::from_degrees(5.0, 45.0, 20.0));
        for m in 0..5 {
            assert!((c32.dipolar[0][m].re as f64 - c64.dipolar[0][m].re).abs() < 1e-2);
            assert!((c32.dipolar[0][m].im as f64 - c64.dipolar[0][m].im).abs() < 1e-2);
        }
    }

    #[test]
    fn validation_errors() {
        assert!(SpinSystem::<f64>::new(vec![], vec![], vec![], 0).is_err());
        let spins = || vec![Spin::new("I", GAMMA_13C, 0.0), Spin::new("S", GAMMA_13C, 0.0)];
        let dc = |a, b, bb| DipolarCoupling { spin_a: a, spin_b: b, b_is: bb, pc_euler: EulerAngles::zero() };
        assert!(SpinSystem::new(spins(), vec![dc(0, 2, -1.0)], vec![], 1).is_err());
        assert!(SpinSystem::new(spins(), vec![dc(0, 0, -1.0)], vec![], 1).is_err());
        assert!(SpinSystem::new(spins(), vec![dc(0, 1, 1.0)], vec![], 1).is_err());
        assert!(SpinSystem::new(spins(), vec![dc(0, 1, -1.0), dc(1, 0, -1.0)], vec![], 1).is_err());
        assert!(SpinSystem::new(spins(), vec![], vec![], 2).is_err());
        let many = (0..7).map(|k| Spin::new(format!("C{k}"), GAMMA_13C, 0.0)).collect();
        assert!(SpinSystem::new(many, vec![], vec![], 0).is_err());
    }

    #[test]
    fn without_spin_remaps_indices() {
        let sys = SpinSystem::new(
            vec![Spin::new("I1", GAMMA_13C, 0.0), Spin::new("I2", GAMMA_13C, 0.0), Spin::new("I3", GAMMA_13C, 0.0)],
            vec![
                DipolarCoupling { spin_a: 0, spin_b: 1, b_is: -1.0, pc_euler: EulerAngles::zero() },
                DipolarCoupling { spin_a: 0, spin_b: 2, b_is: -2.0, pc_euler: EulerAngles::zero() },
            ],
            vec![],
            0,
        )
        .unwrap();
        let red = sys.without_spin(1).unwrap();
        assert_eq!(red.len(), 2);
        assert_eq!(red.dipolar.len(), 1);
        assert_eq!((red.dipolar[0].spin_a, red.dipolar[0].spin_b, red.dipolar[0].b_is), (0, 1, -2.0));
        assert_eq!(red.spins[1].label, "I3");
    }

    proptest! {
        #[test]
        fn series_is_real_and_conjugate_symmetric(
            a in -PI..PI, b in 0.0..PI, g in -PI..PI,
            ca in -PI..PI, cb in 0.0..PI, cg in -PI..PI,
            t in 0.0f64..1e-3,
        ) {
            let sys = SpinSystem::new(
                vec![
                    Spin::new("I", GAMMA_13C, 1e4).with_csa(3e4, 0.3, EulerAngles::new(a, b, g)),
                    Spin::new("S", GAMMA_13C, 0.0),
                ],
                vec![DipolarCoupling { spin_a: 0, spin_b: 1, b_is: -1.4e4, pc_euler: EulerAngles::new(g, b, a) }],
                vec![],
                1,
            ).unwrap();
            let c = fourier_coefficients(&sys, &EulerAngles::new(ca, cb, cg));
            let wr = 2.0 * PI * 20e3;
            for series in c.shifts.iter().chain(c.dipolar.iter()) {
                for m in 1..=2 {
                    prop_assert!((series[2 + m] - series[2 - m].conj()).norm() < 1e-9);
                }
                let full: Cplx<f64> = (0..5)
                    .map(|k| series[k] * Complex::from_polar(1.0, (k as f64 - 2.0) * wr * t))
                    .sum();
                prop_assert!(full.im.abs() <= 1e-12 * full.norm().max(1.0));
                prop_assert!((full.re - eval_series(series, wr, t)).abs() < 1e-8);
            }
            // magic-angle zeroing of the dipolar m = 0 term
            prop_assert!(c.dipolar[0][2].norm() < 1e-9);
        }

        #[test]
        fn rotor_average_is_m0(cb in 0.0..PI, cg in -PI..PI) {
            let sys = pair(-2251.0, (0.0, 30.0, 0.0));
            let c = fourier_coefficients(&sys, &EulerAngles::new(0.2, cb, cg));
            let wr = 2.0 * PI * 20e3;
            let n = 64;
            let avg: f64 = (0..n).map(|k| eval_series(&c.dipolar[0], wr, (k as f64) / (n as f64) * 2.0 * PI / wr)).sum::<f64>() / n as f64;
            prop_assert!((avg - c.dipolar[0][2].re).abs() < 1e-9);
            prop_assert!(avg.abs() < 1e-9);
        }
    }
}
