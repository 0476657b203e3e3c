//! The potential `f = c(f₀ + f_ε)` on the blow-up and its smooth derived data.
//!
//! `f₀` is the Fubini–Study-type potential of the exceptional divisor. In
//! chart 0 it carries the pluriharmonic singular term `log|u₀|²`, which is
//! dropped analytically from `dd^c f` and whose Hamiltonian contribution is
//! folded into a closed form that is smooth across `{u₀ = 0}`.

use serde::{Deserialize, Serialize};

use crate::calculus::{ddc_constant, grad_hessian, gradient, DcSign};
use crate::scalar::{Dual, Scalar};
use crate::tensor::{standard_complex, Form2, Mat4, Vec4};

use super::atlas::{abs2, lift_poisson, radius_sq, Chart};
use super::BlowupError;

/// Constant `c` and radii `r0 < r1 < r2` of the neighbourhoods
/// `U_E = {r < r0}`, `K = {r ≤ r1}` and the flow region `{r < r2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub c: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec { c: 0.1, r0: 0.2, r1: 0.45, r2: 0.7 }
    }
}

/// Where a point sits relative to the support of the deformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    /// `r < r0`.
    InsideUE,
    /// `r0 ≤ r ≤ r1`.
    Collar,
    /// `r > r1`.
    OutsideK,
}

impl PotentialSpec {
    pub fn with_c(&self, c: f64) -> Self {
        PotentialSpec { c, ..*self }
    }

    pub fn validate(&self) -> Result<(), BlowupError> {
        let finite = [self.c, self.r0, self.r1, self.r2].iter().all(|x| x.is_finite());
        if !finite || self.c <= 0.0 {
            return Err(BlowupError::InvalidSpec(format!("c = {} must be positive", self.c)));
        }
        if !(0.0 < self.r0 && self.r0 < self.r1 && self.r1 < self.r2) {
            return Err(BlowupError::InvalidSpec(format!(
                "radii must satisfy 0 < r0 < r1 < r2, got {} / {} / {}",
                self.r0, self.r1, self.r2
            )));
        }
        Ok(())
    }

    pub fn zone(&self, r: f64) -> Zone {
        if r < self.r0 {
            Zone::InsideUE
        } else if r <= self.r1 {
            Zone::Collar
        } else {
            Zone::OutsideK
        }
    }
}

/// Below this, `exp(−1/s)` underflows and its dual derivatives would be `0·∞`.
const FLUSH: f64 = 1e-6;

/// The C^∞ smoothstep `ψ(s) = e^{−1/s} / (e^{−1/s} + e^{−1/(1−s)})`, exactly 0
/// for `s ≤ 0` and exactly 1 for `s ≥ 1`.
pub fn smoothstep<S: Scalar>(s: S) -> S {
    let x = s.re();
    if x <= FLUSH {
        return S::zero();
    }
    if x >= 1.0 - FLUSH {
        return S::one();
    }
    let a = (-s.recip()).exp();
    let b = (-(S::one() - s).recip()).exp();
    a / (a + b)
}

/// `(ε, f_ε)` with `ε = ψ((r − r0)/(r1 − r0))` and `f_ε = ε·log r²`.
pub fn bump_and_feps<S: Scalar>(spec: &PotentialSpec, chart: Chart, p: &[S; 4]) -> (S, S) {
    let rr = radius_sq(chart, p);
    let r = rr.re().sqrt();
    if r <= spec.r0 {
        return (S::zero(), S::zero());
    }
    let eps = if r >= spec.r1 {
        S::one()
    } else {
        smoothstep((rr.sqrt() - spec.r0) / (spec.r1 - spec.r0))
    };
    (eps, eps * rr.ln())
}

/// Smooth part of `f₀`: `−log(1+|u₀|²)` in chart 0 and `−log(1+|v₁|²)` in chart 1.
pub fn fs_smooth_part<S: Scalar>(chart: Chart, p: &[S; 4]) -> S {
    let [a, b] = chart.along_divisor_slots();
    -(abs2((p[a], p[b])) + 1.0).ln()
}

/// `f₀` itself: `log(|u₀|²/(1+|u₀|²))` in chart 0, `log(1/(1+|v₁|²))` in chart 1.
pub fn fs_potential<S: Scalar>(chart: Chart, p: &[S; 4]) -> Result<S, BlowupError> {
    match chart {
        Chart::Zero => {
            let m = abs2((p[0], p[1]));
            if m.re() == 0.0 {
                return Err(BlowupError::SingularPotential { point: p.map(|x| x.re()) });
            }
            Ok(m.ln() + fs_smooth_part(chart, p))
        }
        Chart::One => Ok(fs_smooth_part(chart, p)),
    }
}

/// The full potential `c(f₀ + f_ε)`, singular on `{u₀ = 0}` in chart 0.
pub fn potential<S: Scalar>(spec: &PotentialSpec, chart: Chart, p: &[S; 4]) -> Result<S, BlowupError> {
    Ok((fs_potential(chart, p)? + bump_and_feps(spec, chart, p).1) * spec.c)
}

/// `Q̃(df₀)`, closed form that extends smoothly over `{u₀ = 0}`.
fn fs_hamiltonian<S: Scalar>(chart: Chart, p: &[S; 4]) -> Vec4<S> {
    match chart {
        // (1/(1+|u₀|²)) Re ∂v₀
        Chart::Zero => {
            let w = (abs2((p[0], p[1])) + 1.0).recip() * 0.5;
            [S::zero(), S::zero(), w, S::zero()]
        }
        // Re(−v̄₁/(1+|v₁|²) ∂u₁)
        Chart::One => {
            let w = (abs2((p[2], p[3])) + 1.0).recip() * 0.5;
            [p[2] * w, -p[3] * w, S::zero(), S::zero()]
        }
    }
}

/// Hamiltonian field `X = Q̃(df)` of the potential, smooth on the whole atlas.
pub fn smooth_x<S: Scalar>(spec: &PotentialSpec, chart: Chart, p: &[S; 4]) -> Vec4<S> {
    let x0 = fs_hamiltonian(chart, p);
    let (_, dfe) = gradient(|y: &[Dual<S>; 4]| bump_and_feps(spec, chart, y).1, p);
    let xe = lift_poisson(chart, p).contract(&dfe);
    std::array::from_fn(|k| (x0[k] + xe[k]) * spec.c)
}

/// `dd^c f` with the pluriharmonic `log|u₀|²` removed, for the chart's
/// constant complex structure.
pub fn smooth_ddcf<S: Scalar>(spec: &PotentialSpec, chart: Chart, p: &[S; 4], sign: DcSign) -> Form2<S> {
    let r = radius_sq(chart, p).re().sqrt();
    if r >= spec.r1 {
        return Form2::zero();
    }
    if r < spec.r0 {
        return Form2(divisor_form(chart, p, sign).scale(spec.c));
    }
    let (_, _, h) = grad_hessian(
        |y: &[Dual<Dual<S>>; 4]| fs_smooth_part(chart, y) + bump_and_feps(spec, chart, y).1,
        p,
    );
    Form2::from_mat(&ddc_constant(&h, &standard_complex(), sign).0.scale(spec.c))
}

/// Closed form of `dd^c(−log(1+|z|²))` for the coordinate `z` along E.
fn divisor_form<S: Scalar>(chart: Chart, p: &[S; 4], sign: DcSign) -> Mat4<S> {
    let [a, b] = chart.along_divisor_slots();
    let den = abs2((p[a], p[b])) + 1.0;
    let w = (den * den).recip() * (4.0 * sign.factor());
    let mut m = Mat4::zero();
    m.0[a][b] = w;
    m.0[b][a] = -w;
    m
}

/// `h̃ = −(dd^c f)·I₀`, the limit of `(1/t)` times the first-order metric change.
pub fn psh_limit<S: Scalar>(spec: &PotentialSpec, chart: Chart, p: &[S; 4], sign: DcSign) -> Mat4<S> {
    -(smooth_ddcf(spec, chart, p, sign).0 * standard_complex())
}
