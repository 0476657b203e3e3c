//! Fields over boxed chart domains and the exterior calculus built on them.
//!
//! A [`Field`] is evaluated generically over [`Scalar`], so the same code runs
//! on plain floats, on duals (first derivatives) and on nested duals. Finite
//! differences are available as an independent cross-check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{seed, Dual, Scalar};
use crate::tensor::{Bivec, Form2, Mat4, Sym4, Vec4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("point {point:?} lies outside domain `{domain}`")]
    OutOfDomain { domain: String, point: [f64; 4] },
    #[error("point {point:?} is within {margin:.1e} of excluded locus {locus:?}")]
    SingularLocus { locus: Locus, point: [f64; 4], margin: f64 },
    #[error("invalid derivative configuration: {0}")]
    InvalidDerivConfig(String),
    #[error("flow failed: {0}")]
    Flow(Box<crate::flow::FlowError>),
}

impl From<crate::flow::FlowError> for FieldError {
    fn from(e: crate::flow::FlowError) -> Self {
        match e {
            crate::flow::FlowError::Field(f) => f,
            other => FieldError::Flow(Box::new(other)),
        }
    }
}

/// Analytic subsets described by vanishing complex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Locus {
    /// First complex coordinate vanishes.
    UZero,
    /// Second complex coordinate vanishes.
    VZero,
    Origin,
}

impl Locus {
    pub fn distance(&self, p: &[f64; 4]) -> f64 {
        let u = p[0].hypot(p[1]);
        let v = p[2].hypot(p[3]);
        match self {
            Locus::UZero => u,
            Locus::VZero => v,
            Locus::Origin => u.hypot(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDomain {
    pub name: String,
    pub lo: [f64; 4],
    pub hi: [f64; 4],
    pub excluded: Vec<Locus>,
    /// Minimum distance kept from every excluded locus.
    pub margin: f64,
}

impl ChartDomain {
    pub fn cube(name: &str, half_width: f64) -> Self {
        ChartDomain {
            name: name.to_string(),
            lo: [-half_width; 4],
            hi: [half_width; 4],
            excluded: Vec::new(),
            margin: 0.0,
        }
    }

    pub fn excluding(mut self, locus: Locus, margin: f64) -> Self {
        self.excluded.push(locus);
        self.margin = self.margin.max(margin);
        self
    }

    /// Box scaled about its centre by `factor`.
    pub fn enlarged(&self, factor: f64) -> Self {
        let mut d = self.clone();
        for k in 0..4 {
            let mid = 0.5 * (self.lo[k] + self.hi[k]);
            let half = 0.5 * (self.hi[k] - self.lo[k]) * factor;
            d.lo[k] = mid - half;
            d.hi[k] = mid + half;
        }
        d.name = format!("{}*{}", self.name, factor);
        d
    }

    pub fn in_box(&self, p: &[f64; 4]) -> bool {
        (0..4).all(|k| p[k].is_finite() && p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn contains(&self, p: &[f64; 4]) -> bool {
        self.check(p).is_ok()
    }

    pub fn check(&self, p: &[f64; 4]) -> Result<(), FieldError> {
        if !self.in_box(p) {
            return Err(FieldError::OutOfDomain { domain: self.name.clone(), point: *p });
        }
        for locus in &self.excluded {
            if locus.distance(p) <= self.margin {
                return Err(FieldError::SingularLocus {
                    locus: *locus,
                    point: *p,
                    margin: self.margin,
                });
            }
        }
        Ok(())
    }

    /// Every point of a central stencil of half-width `h` must be admissible.
    pub fn check_stencil(&self, p: &[f64; 4], h: f64) -> Result<(), FieldError> {
        self.check(p)?;
        for k in 0..4 {
            for s in [-h, h] {
                let mut q = *p;
                q[k] += s;
                self.check(&q)?;
            }
        }
        Ok(())
    }
}

/// Flattening of a tensor value into its components.
pub trait Components<S> {
    fn components(&self) -> Vec<S>;
}

impl<S: Scalar> Components<S> for S {
    fn components(&self) -> Vec<S> {
        vec![*self]
    }
}

impl<S: Scalar> Components<S> for [S; 4] {
    fn components(&self) -> Vec<S> {
        self.to_vec()
    }
}

impl<S: Scalar> Components<S> for Mat4<S> {
    fn components(&self) -> Vec<S> {
        self.flatten().to_vec()
    }
}

macro_rules! newtype_components {
    ($($t:ident),*) => {$(
        impl<S: Scalar> Components<S> for $t<S> {
            fn components(&self) -> Vec<S> {
                self.0.flatten().to_vec()
            }
        }
    )*};
}
newtype_components!(Form2, Bivec, Sym4);

impl<S: Scalar, const N: usize> Components<S> for [Mat4<S>; N] {
    fn components(&self) -> Vec<S> {
        self.iter().flat_map(|m| m.flatten()).collect()
    }
}

/// Tensor type of a field's values, fixed across every scalar level.
pub trait Kind: 'static {
    type Value<S: Scalar>: Components<S> + Copy;
}

macro_rules! kinds {
    ($($(#[$doc:meta])* $name:ident => $v:ty;)*) => {$(
        $(#[$doc])*
        pub struct $name;
        impl Kind for $name {
            type Value<S: Scalar> = $v;
        }
    )*};
}

kinds! {
    ScalarKind => S;
    VectorKind => [S; 4];
    /// Covectors.
    OneFormKind => [S; 4];
    EndoKind => Mat4<S>;
    FormKind => Form2<S>;
    BivecKind => Bivec<S>;
    SymKind => Sym4<S>;
    BiHermitianKind => BiHermitian<S>;
    /// Three stacked 4×4 values.
    TripleKind => [Mat4<S>; 3];
}

/// A tensor-valued map on a chart domain.
pub trait Field<K: Kind>: Sync {
    fn domain(&self) -> &ChartDomain;

    /// Evaluation without the domain check; see [`eval_checked`].
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<K::Value<S>, FieldError>;
}

pub fn eval_checked<K: Kind, F: Field<K>>(
    field: &F,
    p: &[f64; 4],
) -> Result<K::Value<f64>, FieldError> {
    field.domain().check(p)?;
    field.eval(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivMode {
    Dual,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivConfig {
    pub mode: DerivMode,
    pub fd_step: f64,
    pub richardson: bool,
}

impl Default for DerivConfig {
    fn default() -> Self {
        DerivConfig { mode: DerivMode::Dual, fd_step: 1e-5, richardson: false }
    }
}

impl DerivConfig {
    pub fn fd(step: f64, richardson: bool) -> Self {
        DerivConfig { mode: DerivMode::Fd, fd_step: step, richardson }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(1e-9..=1e-2).contains(&self.fd_step) {
            return Err(FieldError::InvalidDerivConfig(format!(
                "fd_step {} outside [1e-9, 1e-2]",
                self.fd_step
            )));
        }
        Ok(())
    }
}

/// Value and partial derivatives of every component at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: Vec<f64>,
    /// `d[c][k] = ∂(component c)/∂(coordinate k)`.
    pub d: Vec<[f64; 4]>,
    pub mode: DerivMode,
}

pub fn jacobian<K: Kind, F: Field<K>>(
    field: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
) -> Result<Jet, FieldError> {
    cfg.validate()?;
    match cfg.mode {
        DerivMode::Dual => {
            field.domain().check(p)?;
            let vals = field.eval(&seed(p))?.components();
            Ok(Jet {
                value: vals.iter().map(|v| v.re).collect(),
                d: vals.iter().map(|v| v.eps).collect(),
                mode: DerivMode::Dual,
            })
        }
        DerivMode::Fd => {
            let h = cfg.fd_step;
            field.domain().check_stencil(p, h)?;
            let value: Vec<f64> = field.eval(p)?.components();
            let central = |h: f64| -> Result<Vec<[f64; 4]>, FieldError> {
                let mut d = vec![[0.0; 4]; value.len()];
                for k in 0..4 {
                    let mut a = *p;
                    let mut b = *p;
                    a[k] += h;
                    b[k] -= h;
                    let fa = field.eval(&a)?.components();
                    let fb = field.eval(&b)?.components();
                    for c in 0..value.len() {
                        d[c][k] = (fa[c] - fb[c]) / (2.0 * h);
                    }
                }
                Ok(d)
            };
            let coarse = central(h)?;
            let d = if cfg.richardson {
                let fine = central(0.5 * h)?;
                coarse
                    .iter()
                    .zip(&fine)
                    .map(|(c, f)| std::array::from_fn(|k| (4.0 * f[k] - c[k]) / 3.0))
                    .collect()
            } else {
                coarse
            };
            Ok(Jet { value, d, mode: DerivMode::Fd })
        }
    }
}

/// Fully antisymmetric covariant 3-tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Form3(pub [[[f64; 4]; 4]; 4]);

impl Form3 {
    pub fn zero() -> Self {
        Form3([[[0.0; 4]; 4]; 4])
    }

    pub fn from_fn(f: impl Fn(usize, usize, usize) -> f64) -> Self {
        Form3(std::array::from_fn(|i| {
            std::array::from_fn(|j| std::array::from_fn(|k| f(i, j, k)))
        }))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        Form3::from_fn(|i, j, k| self.0[i][j][k] - o.0[i][j][k]).max_abs()
    }

    pub fn add(&self, o: &Self) -> Self {
        Form3::from_fn(|i, j, k| self.0[i][j][k] + o.0[i][j][k])
    }

    /// `ω(A·, A·, A·)`.
    pub fn pull_by(&self, a: &Mat4) -> Self {
        let m = &self.0;
        Form3::from_fn(|i, j, k| {
            let mut acc = 0.0;
            for x in 0..4 {
                for y in 0..4 {
                    for z in 0..4 {
                        acc += m[x][y][z] * a.0[x][i] * a.0[y][j] * a.0[z][k];
                    }
                }
            }
            acc
        })
    }
}

fn entry(i: usize, j: usize) -> usize {
    4 * i + j
}

pub fn d_function<F: Field<ScalarKind>>(
    f: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
) -> Result<Vec4, FieldError> {
    Ok(jacobian(f, p, cfg)?.d[0])
}

/// `(dα)ᵢⱼ = ∂ᵢαⱼ − ∂ⱼαᵢ`.
pub fn d_one_form<F: Field<OneFormKind>>(
    alpha: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
) -> Result<Form2, FieldError> {
    let jet = jacobian(alpha, p, cfg)?;
    Ok(Form2(Mat4::from_fn(|i, j| jet.d[j][i] - jet.d[i][j])))
}

fn d_two_form_from_jet(jet: &Jet, offset: usize) -> Form3 {
    let dw = |a: usize, b: usize, c: usize| jet.d[offset + entry(b, c)][a];
    Form3::from_fn(|i, j, k| dw(i, j, k) + dw(j, k, i) + dw(k, i, j))
}

/// `(dω)ᵢⱼₖ = ∂ᵢωⱼₖ + ∂ⱼωₖᵢ + ∂ₖωᵢⱼ`.
pub fn d_two_form<F: Field<FormKind>>(
    omega: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
) -> Result<Form3, FieldError> {
    Ok(d_two_form_from_jet(&jacobian(omega, p, cfg)?, 0))
}

/// Global sign of `d^c`. `Flipped` means `d^c f = df∘I` and
/// `d^cω = (dω)(I·, I·, I·)`; `Standard` carries a minus sign on both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcSign {
    Standard,
    Flipped,
}

impl DcSign {
    pub fn factor(self) -> f64 {
        match self {
            DcSign::Standard => -1.0,
            DcSign::Flipped => 1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            DcSign::Standard => DcSign::Flipped,
            DcSign::Flipped => DcSign::Standard,
        }
    }
}

/// `d^c f` from a gradient.
pub fn dc_covector<S: Scalar>(grad: &Vec4<S>, i: &Mat4<S>, sign: DcSign) -> Vec4<S> {
    i.vec_mul(grad).map(|x| x * sign.factor())
}

/// `dd^c f` for a constant complex structure from the Hessian: `±(H I − Iᵀ H)`.
pub fn ddc_constant<S: Scalar>(hess: &Mat4<S>, i: &Mat4<S>, sign: DcSign) -> Form2<S> {
    Form2((*hess * *i - i.transpose() * *hess).scale(sign.factor()))
}

pub fn gradient<S: Scalar>(f: impl FnOnce(&[Dual<S>; 4]) -> Dual<S>, p: &[S; 4]) -> (S, Vec4<S>) {
    let v = f(&seed(p));
    (v.re, v.eps)
}

/// Value, gradient and Hessian through two dual levels.
pub fn grad_hessian<S: Scalar>(
    f: impl FnOnce(&[Dual<Dual<S>>; 4]) -> Dual<Dual<S>>,
    p: &[S; 4],
) -> (S, Vec4<S>, Mat4<S>) {
    let v = f(&seed(&seed(p)));
    let grad = std::array::from_fn(|k| v.eps[k].re);
    let hess = Mat4::from_fn(|i, j| v.eps[i].eps[j]);
    (v.re.re, grad, hess)
}

/// The covector field `d^c f`.
pub struct DcField<'a, F, I> {
    pub f: &'a F,
    pub i: &'a I,
    pub sign: DcSign,
}

impl<'a, F: Field<ScalarKind>, I: Field<EndoKind>> Field<OneFormKind> for DcField<'a, F, I> {
    fn domain(&self) -> &ChartDomain {
        self.f.domain()
    }

    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[S; 4], FieldError> {
        let grad = self.f.eval(&seed(p))?.eps;
        Ok(dc_covector(&grad, &self.i.eval(p)?, self.sign))
    }
}

/// Constant endomorphism field.
pub struct ConstMat {
    pub value: Mat4,
    pub domain: ChartDomain,
}

impl Field<EndoKind> for ConstMat {
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<Mat4<S>, FieldError> {
        Ok(Mat4::from_f64(&self.value))
    }
}

pub fn dc_scalar<F: Field<ScalarKind>, I: Field<EndoKind>>(
    f: &F,
    i: &I,
    p: &[f64; 4],
    sign: DcSign,
) -> Result<Vec4, FieldError> {
    f.domain().check(p)?;
    DcField { f, i, sign }.eval(p)
}

/// `d(d^c f)`, with `d^c` taken for a possibly varying `I`.
pub fn ddc_scalar<F: Field<ScalarKind>, I: Field<EndoKind>>(
    f: &F,
    i: &I,
    p: &[f64; 4],
    sign: DcSign,
) -> Result<Form2, FieldError> {
    d_one_form(&DcField { f, i, sign }, p, &DerivConfig::default())
}

pub fn dc_from_d(dw: &Form3, i: &Mat4, sign: DcSign) -> Form3 {
    let pulled = dw.pull_by(i);
    Form3::from_fn(|a, b, c| sign.factor() * pulled.0[a][b][c])
}

/// `d^cω = ±(dω)(I·, I·, I·)`.
pub fn dc_two_form<W: Field<FormKind>, I: Field<EndoKind>>(
    omega: &W,
    i: &I,
    p: &[f64; 4],
    cfg: &DerivConfig,
    sign: DcSign,
) -> Result<Form3, FieldError> {
    let dw = d_two_form(omega, p, cfg)?;
    Ok(dc_from_d(&dw, &i.eval(p)?, sign))
}

/// Max-norm of `N(eⱼ, eₖ)` over coordinate frame pairs, from the value of `I`
/// and its partial derivatives `di[4a + b][k] = ∂ₖ I_ab`.
pub fn nijenhuis_from_jet(i: &Mat4, di: &[[f64; 4]]) -> f64 {
    // A coordinate-expressed vector field near the point: value and Jacobian.
    type Local = ([f64; 4], Mat4);
    let column = |j: usize| -> Local {
        (std::array::from_fn(|a| i.0[a][j]), Mat4::from_fn(|a, k| di[entry(a, j)][k]))
    };
    let unit = |j: usize| -> Local {
        let mut v = [0.0; 4];
        v[j] = 1.0;
        (v, Mat4::zero())
    };
    let bracket = |a: &Local, b: &Local| -> [f64; 4] {
        let x = b.1.mul_vec(&a.0);
        let y = a.1.mul_vec(&b.0);
        std::array::from_fn(|r| x[r] - y[r])
    };
    let mut worst: f64 = 0.0;
    for j in 0..4 {
        for k in 0..4 {
            let (ij, ik) = (column(j), column(k));
            let t1 = bracket(&ij, &ik);
            let t2 = i.mul_vec(&bracket(&ij, &unit(k)));
            let t3 = i.mul_vec(&bracket(&unit(j), &ik));
            for r in 0..4 {
                worst = worst.max((t1[r] - t2[r] - t3[r]).abs());
            }
        }
    }
    worst
}

pub fn nijenhuis<F: Field<EndoKind>>(
    i: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
) -> Result<f64, FieldError> {
    let jet = jacobian(i, p, cfg)?;
    let m = Mat4::from_fn(|a, b| jet.value[entry(a, b)]);
    Ok(nijenhuis_from_jet(&m, &jet.d))
}

/// Pointwise bi-Hermitian data `(g, b, I₊, I₋)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiHermitian<S = f64> {
    pub g: Sym4<S>,
    pub b: Form2<S>,
    pub ip: Mat4<S>,
    pub im: Mat4<S>,
}

impl<S: Scalar> BiHermitian<S> {
    pub fn omega_plus(&self) -> Form2<S> {
        Form2(self.g.0 * self.ip)
    }

    pub fn omega_minus(&self) -> Form2<S> {
        Form2(self.g.0 * self.im)
    }

    pub fn re(&self) -> BiHermitian<f64> {
        BiHermitian { g: self.g.re(), b: self.b.re(), ip: self.ip.re(), im: self.im.re() }
    }
}

impl<S: Scalar> Components<S> for BiHermitian<S> {
    fn components(&self) -> Vec<S> {
        [self.g.0, self.b.0, self.ip, self.im].components()
    }
}

/// Bundles four separate fields into one quadruple field.
pub struct Quadruple<G, B, P, M> {
    pub g: G,
    pub b: B,
    pub ip: P,
    pub im: M,
}

impl<G, B, P, M> Field<BiHermitianKind> for Quadruple<G, B, P, M>
where
    G: Field<SymKind>,
    B: Field<FormKind>,
    P: Field<EndoKind>,
    M: Field<EndoKind>,
{
    fn domain(&self) -> &ChartDomain {
        self.g.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<BiHermitian<S>, FieldError> {
        Ok(BiHermitian {
            g: self.g.eval(p)?,
            b: self.b.eval(p)?,
            ip: self.ip.eval(p)?,
            im: self.im.eval(p)?,
        })
    }
}

/// `(‖d^c₊ω₊ − db‖, ‖d^c₋ω₋ + db‖)`, max norm over 3-form components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkResidual {
    pub plus: f64,
    pub minus: f64,
}

impl GkResidual {
    pub fn max(&self) -> f64 {
        self.plus.max(self.minus)
    }
}

/// `(ω₊, ω₋, b)` with `ω± = g I±`.
struct HermitianForms<'a, F>(&'a F);

impl<'a, F: Field<BiHermitianKind>> Field<TripleKind> for HermitianForms<'a, F> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[Mat4<S>; 3], FieldError> {
        let q = self.0.eval(p)?;
        Ok([q.omega_plus().0, q.omega_minus().0, q.b.0])
    }
}

/// Generalized Kähler residual of a quadruple-valued field.
pub fn gk_condition_residual<F: Field<BiHermitianKind>>(
    field: &F,
    p: &[f64; 4],
    cfg: &DerivConfig,
    sign: DcSign,
) -> Result<GkResidual, FieldError> {
    let jet = jacobian(&HermitianForms(field), p, cfg)?;
    let at = field.eval(p)?;
    gk_residual_from_jet(&jet, &at.ip, &at.im, sign)
}

fn gk_residual_from_jet(
    jet: &Jet,
    ip: &Mat4,
    im: &Mat4,
    sign: DcSign,
) -> Result<GkResidual, FieldError> {
    let db = d_two_form_from_jet(jet, 32);
    let dc_p = dc_from_d(&d_two_form_from_jet(jet, 0), ip, sign);
    let dc_m = dc_from_d(&d_two_form_from_jet(jet, 16), im, sign);
    let minus_db = Form3::from_fn(|i, j, k| -db.0[i][j][k]);
    Ok(GkResidual { plus: dc_p.add(&minus_db).max_abs(), minus: dc_m.add(&db).max_abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::standard_complex;

    fn whole() -> ChartDomain {
        ChartDomain::cube("test", 3.0)
    }

    struct Poly(ChartDomain);
    impl Field<ScalarKind> for Poly {
        fn domain(&self) -> &ChartDomain {
            &self.0
        }
        fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<S, FieldError> {
            Ok(p[0] * p[2])
        }
    }

    struct Constant(ChartDomain);
    impl Field<FormKind> for Constant {
        fn domain(&self) -> &ChartDomain {
            &self.0
        }
        fn eval<S: Scalar>(&self, _p: &[S; 4]) -> Result<Form2<S>, FieldError> {
            Ok(Form2(Mat4::from_f64(&crate::tensor::wedge_basis(0, 3))))
        }
    }

    /// x₀ dx₁
    struct XDy(ChartDomain);
    impl Field<OneFormKind> for XDy {
        fn domain(&self) -> &ChartDomain {
            &self.0
        }
        fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<[S; 4], FieldError> {
            Ok([S::zero(), p[0], S::zero(), S::zero()])
        }
    }

    fn std_i() -> ConstMat {
        ConstMat { value: standard_complex(), domain: whole() }
    }

    #[test]
    fn polynomial_gradient_both_modes() {
        let f = Poly(whole());
        let p = [1.0, 0.0, 2.0, 0.0];
        assert_eq!(d_function(&f, &p, &DerivConfig::default()).unwrap(), [2.0, 0.0, 1.0, 0.0]);
        let fd = d_function(&f, &p, &DerivConfig::fd(1e-4, true)).unwrap();
        for (a, b) in fd.iter().zip([2.0, 0.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_and_exact_forms() {
        let p = [0.3, -0.2, 0.1, 0.7];
        let c = Constant(whole());
        assert_eq!(d_two_form(&c, &p, &DerivConfig::default()).unwrap().max_abs(), 0.0);
        let dx = d_one_form(&XDy(whole()), &p, &DerivConfig::default()).unwrap();
        assert_eq!(dx.0, crate::tensor::wedge_basis(0, 1));
    }

    #[test]
    fn fd_step_is_validated() {
        let f = Poly(whole());
        let err = d_function(&f, &[0.0; 4], &DerivConfig::fd(0.1, false)).unwrap_err();
        assert!(matches!(err, FieldError::InvalidDerivConfig(_)));
    }

    #[test]
    fn domain_errors() {
        let f = Poly(whole().excluding(Locus::UZero, 1e-3));
        let cfg = DerivConfig::default();
        assert!(matches!(
            d_function(&f, &[5.0, 0.0, 0.0, 0.0], &cfg),
            Err(FieldError::OutOfDomain { .. })
        ));
        assert!(matches!(
            d_function(&f, &[0.0, 0.0, 1.0, 0.0], &cfg),
            Err(FieldError::SingularLocus { locus: Locus::UZero, .. })
        ));
    }

    #[test]
    fn dc_of_first_coordinate() {
        // d^c x₀ = ±dx₀∘I = ±(Iᵀe₀) = ∓dy₀
        let f = Coord(whole(), 0);
        let dc = dc_scalar(&f, &std_i(), &[0.1, 0.2, 0.3, 0.4], DcSign::Flipped).unwrap();
        assert_eq!(dc, [0.0, -1.0, 0.0, 0.0]);
        let dc = dc_scalar(&f, &std_i(), &[0.1, 0.2, 0.3, 0.4], DcSign::Standard).unwrap();
        assert_eq!(dc, [0.0, 1.0, 0.0, 0.0]);
    }

    struct Coord(ChartDomain, usize);
    impl Field<ScalarKind> for Coord {
        fn domain(&self) -> &ChartDomain {
            &self.0
        }
        fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<S, FieldError> {
            Ok(p[self.1])
        }
    }

    #[test]
    fn standard_structure_is_integrable() {
        let n = nijenhuis(&std_i(), &[0.2, 0.1, -0.4, 0.5], &DerivConfig::default()).unwrap();
        assert_eq!(n, 0.0);
    }
}
