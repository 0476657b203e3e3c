//! Generalized Kähler local model around a nondegenerate zero of the
//! holomorphic Poisson structure `u ∂u∧∂v`.
//!
//! The model is manufactured by flowing the potential `|u|² + |v|²` for a
//! short time `t0`: with `I₊` the standard structure and `F = F_{t0}`, the
//! second complex structure is `I₋ = I₊ + QF` and `ω = −F` is a morphism from
//! `I₋` back to `I₊`, which yields `(g, b)`.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    BiHermitian, BiHermitianKind, BivecKind, ChartDomain, DcSign, EndoKind, Field, FieldError,
    FormKind, ScalarKind, SymKind,
};
use crate::flow::{flow_generic, DdcIntegrand, Differential, FlowConfig, FlowError, HamiltonianField};
use crate::scalar::Scalar;
use crate::tensor::{
    derived_structures_unchecked, min_eigenvalue, standard_complex, Bivec, Form2, Mat4, Sym4,
};

/// `|u|² + |v|²`.
#[derive(Debug, Clone)]
pub struct SquaredNorm {
    pub domain: ChartDomain,
}

impl Field<ScalarKind> for SquaredNorm {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<S, FieldError> {
        Ok(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3])
    }
}

/// `Re(u ∂u∧∂v)`.
#[derive(Debug, Clone)]
pub struct NormalFormPoisson {
    pub domain: ChartDomain,
}

pub fn normal_form_poisson<S: Scalar>(p: &[S; 4]) -> Bivec<S> {
    Bivec::re_holomorphic(p[0], p[1])
}

impl Field<BivecKind> for NormalFormPoisson {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Bivec<S>, FieldError> {
        Ok(normal_form_poisson(p))
    }
}

pub type ModelHamiltonian = HamiltonianField<NormalFormPoisson, Differential<SquaredNorm>>;

#[derive(Debug, Clone, PartialEq)]
pub struct BiHermitianModel {
    pub domain: ChartDomain,
    pub t0: f64,
    /// Flow settings used to build `F_{t0}`; the guard encloses `domain`.
    pub flow: FlowConfig,
    pub dc_sign: DcSign,
}

/// Everything the model carries at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPoint<S = f64> {
    pub f_t0: Form2<S>,
    pub omega: Form2<S>,
    pub q: Bivec<S>,
    pub ip: Mat4<S>,
    pub im: Mat4<S>,
    pub g: Sym4<S>,
    pub b: Form2<S>,
}

impl<S: Scalar> ModelPoint<S> {
    pub fn bi_hermitian(&self) -> BiHermitian<S> {
        BiHermitian { g: self.g, b: self.b, ip: self.ip, im: self.im }
    }
}

impl BiHermitianModel {
    /// Builds the model without the positivity search of [`make_local_model`].
    pub fn with_time(domain: ChartDomain, t0: f64, flow: &FlowConfig, dc_sign: DcSign) -> Self {
        let guard = domain.enlarged(1.25);
        BiHermitianModel { domain, t0, flow: FlowConfig { guard, ..flow.clone() }, dc_sign }
    }

    pub fn hamiltonian(&self) -> ModelHamiltonian {
        let d = self.flow.guard.clone();
        HamiltonianField {
            poisson: NormalFormPoisson { domain: d.clone() },
            differential: Differential(SquaredNorm { domain: d }),
        }
    }

    pub fn integrand(&self) -> DdcIntegrand<SquaredNorm> {
        DdcIntegrand {
            potential: SquaredNorm { domain: self.flow.guard.clone() },
            complex: standard_complex(),
            sign: self.dc_sign,
        }
    }

    /// `F_t` of the model potential at `p`, with the model's flow settings.
    pub fn flow_form<S: Scalar>(
        &self,
        p: &[S; 4],
        t: f64,
        cfg: &FlowConfig,
    ) -> Result<Form2<S>, FlowError> {
        let r = flow_generic(&self.hamiltonian(), Some(&self.integrand()), p, t, cfg)?;
        Ok(r.ft.unwrap_or_else(Form2::zero))
    }

    pub fn point<S: Scalar>(&self, p: &[S; 4]) -> Result<ModelPoint<S>, FieldError> {
        let f_t0 = self.flow_form(p, self.t0, &self.flow)?;
        let q = normal_form_poisson(p);
        let ip = standard_complex::<S>();
        let im = ip + q.0 * f_t0.0;
        let omega = -f_t0;
        let d = derived_structures_unchecked(&omega, &im, &q);
        Ok(ModelPoint { f_t0, omega, q, ip, im, g: d.g, b: d.b })
    }

    /// `h = −(dd^c f)·I₀` for the model potential, a constant metric.
    pub fn psh_metric(&self) -> Sym4 {
        let a = self
            .integrand()
            .eval(&[0.0; 4])
            .expect("model potential is defined everywhere");
        Sym4::from_mat(&(-(a.0 * standard_complex())))
    }
}

impl Field<BiHermitianKind> for BiHermitianModel {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<BiHermitian<S>, FieldError> {
        Ok(self.point(p)?.bi_hermitian())
    }
}

macro_rules! model_part {
    ($(#[$doc:meta])* $name:ident, $kind:ty, $ty:ident, $field:ident) => {
        $(#[$doc])*
        pub struct $name<'a>(pub &'a BiHermitianModel);
        impl<'a> Field<$kind> for $name<'a> {
            fn domain(&self) -> &ChartDomain {
                &self.0.domain
            }
            fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<$ty<S>, FieldError> {
                Ok(self.0.point(p)?.$field)
            }
        }
    };
}

model_part!(ModelIPlus, EndoKind, Mat4, ip);
model_part!(ModelIMinus, EndoKind, Mat4, im);
model_part!(ModelG, SymKind, Sym4, g);
model_part!(ModelB, FormKind, Form2, b);
model_part!(
    /// The generating morphism `ω = −F_{t0}`.
    ModelOmega,
    FormKind,
    Form2,
    omega
);
model_part!(ModelQ, BivecKind, Bivec, q);

/// Record of the empirical choice of the model time's sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCalibration {
    pub t0_requested: f64,
    pub t0_chosen: f64,
    /// Smallest eigenvalue of `g` over the samples for `+|t0|` and `−|t0|`;
    /// `None` when that flow failed.
    pub min_eig_positive_time: Option<f64>,
    pub min_eig_negative_time: Option<f64>,
    pub samples: usize,
}

/// Points of a uniform `n⁴` lattice spanning the box of `domain`.
pub fn box_lattice(domain: &ChartDomain, n: usize) -> Vec<[f64; 4]> {
    let axis = |k: usize, i: usize| -> f64 {
        if n == 1 {
            0.5 * (domain.lo[k] + domain.hi[k])
        } else {
            domain.lo[k] + (domain.hi[k] - domain.lo[k]) * i as f64 / (n - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    pts.push([axis(0, a), axis(1, b), axis(2, c), axis(3, d)]);
                }
            }
        }
    }
    pts
}

/// Builds the local model, choosing the sign of `t0` that makes `g`
/// positive-definite on a `3⁴` lattice spanning `domain`.
pub fn make_local_model(
    t0: f64,
    domain: ChartDomain,
    cfg: &FlowConfig,
    dc_sign: DcSign,
) -> Result<(BiHermitianModel, ModelCalibration), FlowError> {
    if t0 == 0.0 || !t0.is_finite() {
        return Err(FlowError::InvalidConfig(format!("model time {t0} must be finite and nonzero")));
    }
    let samples = box_lattice(&domain, 3);
    let try_sign = |t: f64| -> Result<(BiHermitianModel, f64), FlowError> {
        let m = BiHermitianModel::with_time(domain.clone(), t, cfg, dc_sign);
        let mut worst = f64::INFINITY;
        for p in &samples {
            let g = m.point(p).map_err(FlowError::from)?.g;
            worst = worst.min(min_eigenvalue(&g));
        }
        Ok((m, worst))
    };
    let requested = try_sign(t0);
    let flipped = try_sign(-t0);
    let min_of = |r: &Result<(BiHermitianModel, f64), FlowError>| r.as_ref().ok().map(|x| x.1);
    let (pos, neg) = if t0 > 0.0 {
        (min_of(&requested), min_of(&flipped))
    } else {
        (min_of(&flipped), min_of(&requested))
    };
    let calibration = |chosen: f64| ModelCalibration {
        t0_requested: t0,
        t0_chosen: chosen,
        min_eig_positive_time: pos,
        min_eig_negative_time: neg,
        samples: samples.len(),
    };
    for r in [&requested, &flipped] {
        if let Ok((m, worst)) = r {
            if *worst > 0.0 {
                return Ok((m.clone(), calibration(m.t0)));
            }
        }
    }
    match (requested, flipped) {
        (Err(e), Err(_)) => Err(e),
        _ => Err(FlowError::NotPositive {
            plus: pos.unwrap_or(f64::NAN),
            minus: neg.unwrap_or(f64::NAN),
        }),
    }
}
