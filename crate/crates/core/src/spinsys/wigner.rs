//! Rank-2 Wigner rotation matrices and spherical-tensor components.
//!
//! Conventions: `D_{m'm}(α,β,γ) = e^{-im'α} d_{m'm}(β) e^{-imγ}`, and a frame
//! change by Euler angles Ω maps components as `A'_m = Σ_{m'} D_{m'm}(Ω) A_{m'}`.
//! For Cartesian tensors this is `T' = Rᵀ T R` with `R = R_z(α) R_y(β) R_z(γ)`.
//! Arrays are indexed by `m + 2`.

use nalgebra::Matrix3;

use crate::num::{cis, cplx, lit, Cplx, Real};

use super::EulerAngles;

/// Reduced Wigner matrix `d²_{m'm}(β)`, indexed `[m'+2][m+2]`.
pub fn small_d2<T: Real>(beta: T) -> [[T; 5]; 5] {
    let c = beta.cos();
    let s = beta.sin();
    let one = T::one();
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);
    let r38 = lit::<T>((3.0f64 / 8.0).sqrt());
    let r32 = lit::<T>(1.5f64.sqrt());

    let mut d = [[T::zero(); 5]; 5];
    // independent entries with m' >= |m|
    let d22 = (one + c) * (one + c) / lit(4.0);
    let d21 = -(one + c) * s * half;
    let d20 = r38 * s * s;
    let d2m1 = -(one - c) * s * half;
    let d2m2 = (one - c) * (one - c) / lit(4.0);
    let d11 = (one + c) * (two * c - one) * half;
    let d10 = -r32 * s * c;
    let d1m1 = (one - c) * (two * c + one) * half;
    let d00 = (lit::<T>(3.0) * c * c - one) * half;

    let set = |d: &mut [[T; 5]; 5], mp: i32, m: i32, v: T| {
        // d_{m'm} = (-1)^{m-m'} d_{mm'} = d_{-m,-m'}
        let sign = if (m - mp).rem_euclid(2) == 0 { one } else { -one };
        d[(mp + 2) as usize][(m + 2) as usize] = v;
        d[(m + 2) as usize][(mp + 2) as usize] = sign * v;
        d[(-m + 2) as usize][(-mp + 2) as usize] = v;
        d[(-mp + 2) as usize][(-m + 2) as usize] = sign * v;
    };
    set(&mut d, 2, 2, d22);
    set(&mut d, 2, 1, d21);
    set(&mut d, 2, 0, d20);
    set(&mut d, 2, -1, d2m1);
    set(&mut d, 2, -2, d2m2);
    set(&mut d, 1, 1, d11);
    set(&mut d, 1, 0, d10);
    set(&mut d, 1, -1, d1m1);
    set(&mut d, 0, 0, d00);
    d
}

/// Full Wigner matrix `D²_{m'm}(α,β,γ)`, indexed `[m'+2][m+2]`.
pub fn big_d2<T: Real>(e: &EulerAngles<T>) -> [[Cplx<T>; 5]; 5] {
    let d = small_d2(e.beta);
    let mut out = [[Cplx::new(T::zero(), T::zero()); 5]; 5];
    for mp in -2i32..=2 {
        for m in -2i32..=2 {
            let phase = -(lit::<T>(mp as f64) * e.alpha + lit::<T>(m as f64) * e.gamma);
            out[(mp + 2) as usize][(m + 2) as usize] = cis(phase) * d[(mp + 2) as usize][(m + 2) as usize];
        }
    }
    out
}

/// Rank-2 spherical components of the traceless part of a symmetric Cartesian tensor.
pub fn cartesian_to_spherical<T: Real>(t: &Matrix3<T>) -> [Cplx<T>; 5] {
    let half = lit::<T>(0.5);
    let trace3 = (t[(0, 0)] + t[(1, 1)] + t[(2, 2)]) / lit(3.0);
    let xx_yy = t[(0, 0)] - t[(1, 1)];
    [
        cplx(half * xx_yy, -t[(0, 1)]),
        cplx(t[(0, 2)], -t[(1, 2)]),
        cplx(lit::<T>(1.5f64.sqrt()) * (t[(2, 2)] - trace3), T::zero()),
        cplx(-t[(0, 2)], -t[(1, 2)]),
        cplx(half * xx_yy, t[(0, 1)]),
    ]
}

/// Frame change of spherical components: `A'_m = Σ_{m'} D_{m'm}(Ω) A_{m'}`.
pub fn rotate<T: Real>(a: &[Cplx<T>; 5], e: &EulerAngles<T>) -> [Cplx<T>; 5] {
    let dm = big_d2(e);
    let mut out = [Cplx::new(T::zero(), T::zero()); 5];
    for (m, o) in out.iter_mut().enumerate() {
        for (mp, av) in a.iter().enumerate() {
            *o += dm[mp][m] * av;
        }
    }
    out
}
