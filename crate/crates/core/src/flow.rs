//! Hamiltonian flows and the time-integrated pullback of `dd^c f`.
//!
//! Position, the variational Jacobian and the accumulated 2-form are advanced
//! together as one 26-dimensional RK4 system:
//! `ẋ = X(x)`, `J̇ = DX(x) J`, `Ḟ = Jᵀ A(x) J` with `A = dd^c f`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{
    dc_covector, ddc_constant, grad_hessian, gradient, BivecKind, ChartDomain, DcSign, Field,
    FieldError, FormKind, OneFormKind, ScalarKind, VectorKind,
};
use crate::scalar::{seed, Scalar};
use crate::tensor::{Form2, Mat4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("LeftDomain: trajectory left guard `{domain}` at step {step} (point {point:?})")]
    LeftDomain { domain: String, step: usize, point: [f64; 4] },
    #[error("flow needs {needed} steps, limit is {max}")]
    MaxSteps { needed: usize, max: usize },
    #[error(
        "no sign of the model time gives a positive metric (min eigenvalues {plus:.3e} / {minus:.3e})"
    )]
    NotPositive { plus: f64, minus: f64 },
    #[error("field domains differ: `{0}` vs `{1}`")]
    DomainMismatch(String, String),
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl FlowError {
    pub fn is_left_domain(&self) -> bool {
        match self {
            FlowError::LeftDomain { .. } => true,
            FlowError::Field(FieldError::Flow(inner)) => inner.is_left_domain(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step: f64,
    pub max_steps: usize,
    pub guard: ChartDomain,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { step: 1e-2, max_steps: 100_000, guard: ChartDomain::cube("guard", 1.5) }
    }
}

impl FlowConfig {
    pub fn with_step(&self, step: f64) -> Self {
        FlowConfig { step, ..self.clone() }
    }

    /// Number of uniform steps and their signed length for time `t`.
    pub fn steps_for(&self, t: f64) -> Result<(usize, f64), FlowError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(FlowError::InvalidConfig(format!("step {} must be positive", self.step)));
        }
        if !t.is_finite() {
            return Err(FlowError::InvalidConfig(format!("flow time {t} is not finite")));
        }
        if t == 0.0 {
            return Ok((0, 0.0));
        }
        let ratio = t.abs() / self.step;
        // Exact multiples of the step must not gain an extra step from rounding.
        let n = (ratio * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        if n > self.max_steps {
            return Err(FlowError::MaxSteps { needed: n, max: self.max_steps });
        }
        Ok((n, t / n as f64))
    }
}

/// Joint state of the flow ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState<S = f64> {
    pub x: [S; 4],
    pub jac: Mat4<S>,
    /// Accumulated 2-form at the start point (antisymmetric up to rounding).
    pub f: Mat4<S>,
}

impl<S: Scalar> FlowState<S> {
    pub fn start(p: [S; 4]) -> Self {
        FlowState { x: p, jac: Mat4::identity(), f: Mat4::zero() }
    }

    fn axpy(&self, k: &Self, h: f64) -> Self {
        FlowState {
            x: std::array::from_fn(|i| self.x[i] + k.x[i] * h),
            jac: self.jac + k.jac.scale(h),
            f: self.f + k.f.scale(h),
        }
    }

    pub fn position_re(&self) -> [f64; 4] {
        self.x.map(|v| v.re())
    }
}

/// One classical RK4 step of the joint system.
pub fn rk4_step<S: Scalar>(
    s: &FlowState<S>,
    dt: f64,
    rhs: &impl Fn(&FlowState<S>) -> Result<FlowState<S>, FieldError>,
) -> Result<FlowState<S>, FieldError> {
    let k1 = rhs(s)?;
    let k2 = rhs(&s.axpy(&k1, 0.5 * dt))?;
    let k3 = rhs(&s.axpy(&k2, 0.5 * dt))?;
    let k4 = rhs(&s.axpy(&k3, dt))?;
    let w = dt / 6.0;
    Ok(FlowState {
        x: std::array::from_fn(|i| {
            s.x[i] + (k1.x[i] + k2.x[i] * 2.0 + k3.x[i] * 2.0 + k4.x[i]) * w
        }),
        jac: s.jac + (k1.jac + k2.jac.scale(2.0) + k3.jac.scale(2.0) + k4.jac).scale(w),
        f: s.f + (k1.f + k2.f.scale(2.0) + k3.f.scale(2.0) + k4.f).scale(w),
    })
}

/// Value and Jacobian `DX` of a vector field.
pub fn velocity_jet<S: Scalar, X: Field<VectorKind>>(
    x: &X,
    at: &[S; 4],
) -> Result<([S; 4], Mat4<S>), FieldError> {
    let v = x.eval(&seed(at))?;
    Ok((v.map(|c| c.re), Mat4::from_fn(|i, k| v[i].eps[k])))
}

/// Right-hand side of the joint system for a field and an optional integrand.
pub fn joint_rhs<'a, S: Scalar, X: Field<VectorKind>, A: Field<FormKind>>(
    x: &'a X,
    a: Option<&'a A>,
) -> impl Fn(&FlowState<S>) -> Result<FlowState<S>, FieldError> + 'a {
    move |s| {
        let (v, dx) = velocity_jet(x, &s.x)?;
        let f = match a {
            Some(a) => s.jac.transpose() * a.eval(&s.x)?.0 * s.jac,
            None => Mat4::zero(),
        };
        Ok(FlowState { x: v, jac: dx * s.jac, f })
    }
}

/// Integrates `rhs` from `p` for time `t`, checking the guard after every step.
pub fn integrate<S: Scalar>(
    p: [S; 4],
    t: f64,
    cfg: &FlowConfig,
    rhs: &impl Fn(&FlowState<S>) -> Result<FlowState<S>, FieldError>,
) -> Result<(FlowState<S>, usize), FlowError> {
    let guard = |s: &FlowState<S>, step: usize| -> Result<(), FlowError> {
        let x = s.position_re();
        if cfg.guard.check(&x).is_err() {
            return Err(FlowError::LeftDomain { domain: cfg.guard.name.clone(), step, point: x });
        }
        Ok(())
    };
    let (n, dt) = cfg.steps_for(t)?;
    let mut s = FlowState::start(p);
    guard(&s, 0)?;
    for k in 0..n {
        s = rk4_step(&s, dt, rhs)?;
        guard(&s, k + 1)?;
    }
    Ok((s, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult<S = f64> {
    pub endpoint: [S; 4],
    /// `Dφ_t` at the start point.
    pub jac: Mat4<S>,
    pub ft: Option<Form2<S>>,
    pub steps_taken: usize,
}

impl FlowResult<f64> {
    pub fn jac_determinant(&self) -> f64 {
        self.jac.to_nalgebra().determinant()
    }
}

/// Marker for flows without an integrand.
pub struct NoIntegrand;

impl Field<FormKind> for NoIntegrand {
    fn domain(&self) -> &ChartDomain {
        unreachable!("NoIntegrand is never evaluated")
    }
    fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<Form2<S>, FieldError> {
        Ok(Form2::zero())
    }
}

/// Flow (and optionally the accumulated form) at any scalar type.
pub fn flow_generic<S: Scalar, X: Field<VectorKind>, A: Field<FormKind>>(
    x: &X,
    a: Option<&A>,
    p: &[S; 4],
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowResult<S>, FlowError> {
    let (s, n) = integrate(*p, t, cfg, &joint_rhs(x, a))?;
    Ok(FlowResult {
        endpoint: s.x,
        jac: s.jac,
        ft: a.map(|_| Form2::from_mat(&s.f)),
        steps_taken: n,
    })
}

pub fn flow_map<X: Field<VectorKind>>(
    x: &X,
    p: &[f64; 4],
    t: f64,
    cfg: &FlowConfig,
) -> Result<FlowResult, FlowError> {
    flow_generic::<f64, X, NoIntegrand>(x, None, p, t, cfg)
}

/// `F_t(p) = ∫₀ᵗ Dφ_sᵀ A(φ_s p) Dφ_s ds`.
pub fn accumulate_f<A: Field<FormKind>, X: Field<VectorKind>>(
    ddcf: &A,
    x: &X,
    p: &[f64; 4],
    t: f64,
    cfg: &FlowConfig,
) -> Result<Form2, FlowError> {
    let r = flow_generic(x, Some(ddcf), p, t, cfg)?;
    Ok(r.ft.unwrap_or_else(Form2::zero))
}

/// `X = Q(df)`, the bivector contracted with a covector in its first slot.
pub struct HamiltonianField<Q, D> {
    pub poisson: Q,
    pub differential: D,
}

pub fn hamiltonian_field<Q: Field<BivecKind>, D: Field<OneFormKind>>(
    poisson: Q,
    differential: D,
) -> Result<HamiltonianField<Q, D>, FlowError> {
    if poisson.domain() != differential.domain() {
        return Err(FlowError::DomainMismatch(
            poisson.domain().name.clone(),
            differential.domain().name.clone(),
        ));
    }
    Ok(HamiltonianField { poisson, differential })
}

impl<Q: Field<BivecKind>, D: Field<OneFormKind>> Field<VectorKind> for HamiltonianField<Q, D> {
    fn domain(&self) -> &ChartDomain {
        self.poisson.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[S; 4], FieldError> {
        Ok(self.poisson.eval(p)?.contract(&self.differential.eval(p)?))
    }
}

/// `df` of a scalar field.
pub struct Differential<F>(pub F);

impl<F: Field<ScalarKind>> Field<OneFormKind> for Differential<F> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[S; 4], FieldError> {
        let v = self.0.eval(&seed(p))?;
        Ok(v.eps)
    }
}

/// `dd^c f` for a constant complex structure.
pub struct DdcIntegrand<F> {
    pub potential: F,
    pub complex: Mat4,
    pub sign: DcSign,
}

impl<F: Field<ScalarKind>> Field<FormKind> for DdcIntegrand<F> {
    fn domain(&self) -> &ChartDomain {
        self.potential.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Form2<S>, FieldError> {
        let mut err = None;
        let (_, _, h) = grad_hessian(
            |x| match self.potential.eval(x) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    Scalar::zero()
                }
            },
            p,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok(ddc_constant(&h, &Mat4::from_f64(&self.complex), self.sign))
    }
}

/// `d^c f` for a constant complex structure.
pub fn dc_constant<S: Scalar, F: Field<ScalarKind>>(
    f: &F,
    i: &Mat4,
    p: &[S; 4],
    sign: DcSign,
) -> Result<[S; 4], FieldError> {
    let mut err = None;
    let (_, g) = gradient(
        |x| match f.eval(x) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                Scalar::zero()
            }
        },
        p,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(dc_covector(&g, &Mat4::from_f64(i), sign)),
    }
}

/// Linear vector field `x ↦ A x`.
pub struct LinearField {
    pub a: Mat4,
    pub domain: ChartDomain,
}

impl Field<VectorKind> for LinearField {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[S; 4], FieldError> {
        Ok(Mat4::from_f64(&self.a).mul_vec(p))
    }
}

/// Constant vector field.
pub struct ConstantField {
    pub v: [f64; 4],
    pub domain: ChartDomain,
}

impl Field<VectorKind> for ConstantField {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<[S; 4], FieldError> {
        Ok(self.v.map(S::cst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::wedge_basis;

    fn cfg() -> FlowConfig {
        FlowConfig { step: 1e-2, max_steps: 10_000, guard: ChartDomain::cube("g", 10.0) }
    }

    #[test]
    fn zero_time_is_identity() {
        let x = ConstantField { v: [1.0, 0.0, 0.0, 0.0], domain: cfg().guard };
        let r = flow_map(&x, &[0.1, 0.2, 0.3, 0.4], 0.0, &cfg()).unwrap();
        assert_eq!(r.endpoint, [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(r.jac, Mat4::identity());
        assert_eq!(r.steps_taken, 0);
    }

    #[test]
    fn constant_field_translates() {
        let x = ConstantField { v: [1.0, 0.0, 0.0, 0.0], domain: cfg().guard };
        let r = flow_map(&x, &[0.1, 0.2, 0.3, 0.4], 1.0, &cfg()).unwrap();
        assert!((r.endpoint[0] - 1.1).abs() < 1e-13);
        assert_eq!(r.jac, Mat4::identity());
        assert_eq!(r.steps_taken, 100);
    }

    #[test]
    fn step_count_respects_exact_multiples() {
        assert_eq!(cfg().steps_for(0.05).unwrap().0, 5);
        assert_eq!(cfg().steps_for(-0.08).unwrap().0, 8);
        assert_eq!(cfg().with_step(5e-3).steps_for(0.02).unwrap().0, 4);
        assert_eq!(cfg().steps_for(0.051).unwrap().0, 6);
        let tight = FlowConfig { max_steps: 3, ..cfg() };
        assert!(matches!(tight.steps_for(1.0), Err(FlowError::MaxSteps { needed: 100, max: 3 })));
    }

    #[test]
    fn leaving_the_guard_is_reported() {
        let x = ConstantField { v: [1.0, 0.0, 0.0, 0.0], domain: cfg().guard };
        let small = FlowConfig { guard: ChartDomain::cube("small", 0.5), ..cfg() };
        let err = flow_map(&x, &[0.005, 0.0, 0.0, 0.0], 1.0, &small).unwrap_err();
        assert!(matches!(err, FlowError::LeftDomain { step: 50, .. }), "{err:?}");
        assert!(err.is_left_domain());
    }

    #[test]
    fn frozen_flow_accumulates_linearly() {
        let x = ConstantField { v: [0.0; 4], domain: cfg().guard };
        struct Quad(ChartDomain);
        impl Field<FormKind> for Quad {
            fn domain(&self) -> &ChartDomain {
                &self.0
            }
            fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Form2<S>, FieldError> {
                Ok(Form2(Mat4::from_f64(&wedge_basis(0, 2)).scale_by(p[1] * p[1])))
            }
        }
        let a = Quad(cfg().guard);
        let f = accumulate_f(&a, &x, &[0.0, 2.0, 0.0, 0.0], 0.3, &cfg()).unwrap();
        assert!((f.0.at(0, 2) - 0.3 * 4.0).abs() < 1e-14);
        assert_eq!(accumulate_f(&a, &x, &[0.0, 2.0, 0.0, 0.0], 0.0, &cfg()).unwrap(), Form2::zero());
    }

    #[test]
    fn zero_potential_or_zero_bivector_gives_zero_field() {
        struct Zero(ChartDomain);
        impl Field<BivecKind> for Zero {
            fn domain(&self) -> &ChartDomain {
                &self.0
            }
            fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<crate::tensor::Bivec<S>, FieldError> {
                Ok(crate::tensor::Bivec::zero())
            }
        }
        struct Flat(ChartDomain);
        impl Field<ScalarKind> for Flat {
            fn domain(&self) -> &ChartDomain {
                &self.0
            }
            fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<S, FieldError> {
                Ok(S::cst(2.5))
            }
        }
        let d = cfg().guard;
        let x = hamiltonian_field(Zero(d.clone()), Differential(Flat(d.clone()))).unwrap();
        assert_eq!(x.eval(&[0.3, 0.1, 0.2, 0.5]).unwrap(), [0.0; 4]);
        let other = ChartDomain::cube("other", 1.0);
        assert!(matches!(
            hamiltonian_field(Zero(d), Differential(Flat(other))),
            Err(FlowError::DomainMismatch(..))
        ));
    }
}
