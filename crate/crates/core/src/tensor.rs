//! Pointwise linear algebra on one real tangent space of ℂ².
//!
//! Coordinates are ordered `(Re u, Im u, Re v, Im v)`. Every tensor is a 4×4
//! array; the newtypes only record which index positions are covariant.
//! A covariant 2-tensor `F` evaluates as `F(X, Y) = Xᵀ F Y`, endomorphisms act
//! on columns, and every juxtaposition in a formula is the plain matrix
//! product. The dual action of an endomorphism on covectors is its transpose.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix4, SMatrix, SymmetricEigen};
use thiserror::Error;

use crate::scalar::Scalar;

pub type Vec4<S = f64> = [S; 4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("result is not antisymmetric (defect {defect:.3e})")]
    NotAntisymmetric { defect: f64 },
    #[error("2-form is singular and has no inverse")]
    SingularForm,
    #[error("brane equation violated (residual {residual:.3e} > {tol:.1e})")]
    BraneViolated { residual: f64, tol: f64 },
    #[error("morphism {which} violates its brane equation (residual {residual:.3e})")]
    MorphismViolated { which: &'static str, residual: f64 },
}

/// Default tolerance tiers used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Exact algebra carried out in floating point.
    pub algebraic: f64,
    /// Identities that follow from other identities.
    pub derived: f64,
    /// Anything limited by flow or derivative discretization.
    pub discretization: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { algebraic: 1e-12, derived: 1e-10, discretization: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4<S = f64>(pub [[S; 4]; 4]);

impl<S: Scalar> Mat4<S> {
    pub fn from_fn(f: impl Fn(usize, usize) -> S) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| f(i, j))))
    }

    pub fn zero() -> Self {
        Self::from_fn(|_, _| S::zero())
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { S::one() } else { S::zero() })
    }

    pub fn from_f64(m: &Mat4<f64>) -> Self {
        Self::from_fn(|i, j| S::cst(m.0[i][j]))
    }

    /// Drops derivative parts.
    pub fn re(&self) -> Mat4<f64> {
        Mat4::from_fn(|i, j| self.0[i][j].re())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * k)
    }

    pub fn scale_by(&self, k: S) -> Self {
        Self::from_fn(|i, j| self.0[i][j] * k)
    }

    pub fn mul_vec(&self, v: &Vec4<S>) -> Vec4<S> {
        std::array::from_fn(|i| {
            let mut acc = self.0[i][0] * v[0];
            for k in 1..4 {
                acc += self.0[i][k] * v[k];
            }
            acc
        })
    }

    /// Row vector times matrix, `vᵀ M`.
    pub fn vec_mul(&self, v: &Vec4<S>) -> Vec4<S> {
        std::array::from_fn(|j| {
            let mut acc = v[0] * self.0[0][j];
            for k in 1..4 {
                acc += v[k] * self.0[k][j];
            }
            acc
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|x| x.re().abs()).fold(0.0, f64::max)
    }

    /// `(M − Mᵀ)/2`; exactly antisymmetric in floating point.
    pub fn antisymmetric_part(&self) -> Self {
        Self::from_fn(|i, j| (self.0[i][j] - self.0[j][i]) * 0.5)
    }

    /// `(M + Mᵀ)/2`; exactly symmetric in floating point.
    pub fn symmetric_part(&self) -> Self {
        Self::from_fn(|i, j| (self.0[i][j] + self.0[j][i]) * 0.5)
    }

    /// Every entry, derivative parts included, is exactly zero.
    pub fn is_exactly_zero(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_exact_zero())
    }

    pub fn flatten(&self) -> [S; 16] {
        std::array::from_fn(|k| self.0[k / 4][k % 4])
    }
}

impl Mat4<f64> {
    pub fn to_nalgebra(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.0[i][j])
    }

    pub fn from_nalgebra(m: &Matrix4<f64>) -> Self {
        Mat4::from_fn(|i, j| m[(i, j)])
    }

    pub fn try_inverse(&self) -> Option<Self> {
        let m = self.to_nalgebra();
        // Reject matrices nalgebra would happily invert into garbage.
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if m.determinant().abs() <= 1e-13 * scale.powi(4) {
            return None;
        }
        m.try_inverse().map(|i| Self::from_nalgebra(&i))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    /// `max |Mᵢⱼ + Mⱼᵢ|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.0[i][j] + self.0[j][i]).abs());
            }
        }
        d
    }

    /// `max |Mᵢⱼ − Mⱼᵢ|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.0[i][j] - self.0[j][i]).abs());
            }
        }
        d
    }
}

impl<S: Scalar> Add for Mat4<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + o.0[i][j])
    }
}

impl<S: Scalar> Sub for Mat4<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - o.0[i][j])
    }
}

impl<S: Scalar> Neg for Mat4<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_fn(|i, j| -self.0[i][j])
    }
}

impl<S: Scalar> Mul for Mat4<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::from_fn(|i, j| {
            let mut acc = self.0[i][0] * o.0[0][j];
            for k in 1..4 {
                acc += self.0[i][k] * o.0[k][j];
            }
            acc
        })
    }
}

/// The constant complex structure of ℂ²: `∂x ↦ ∂y` in both factors.
pub fn standard_complex<S: Scalar>() -> Mat4<S> {
    let mut m = Mat4::zero();
    m.0[1][0] = S::one();
    m.0[0][1] = -S::one();
    m.0[3][2] = S::one();
    m.0[2][3] = -S::one();
    m
}

/// `eᵢ ∧ eⱼ` as the matrix `Eᵢⱼ − Eⱼᵢ`.
pub fn wedge_basis<S: Scalar>(i: usize, j: usize) -> Mat4<S> {
    let mut m = Mat4::zero();
    m.0[i][j] = S::one();
    m.0[j][i] = -S::one();
    m
}

macro_rules! tensor_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq)]
        pub struct $name<S = f64>(pub Mat4<S>);

        impl<S: Scalar> $name<S> {
            pub fn zero() -> Self {
                $name(Mat4::zero())
            }
            pub fn mat(&self) -> &Mat4<S> {
                &self.0
            }
            pub fn re(&self) -> $name<f64> {
                $name(self.0.re())
            }
            pub fn max_abs(&self) -> f64 {
                self.0.max_abs()
            }
        }

        impl<S: Scalar> Add for $name<S> {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                $name(self.0 + o.0)
            }
        }

        impl<S: Scalar> Sub for $name<S> {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                $name(self.0 - o.0)
            }
        }

        impl<S: Scalar> Neg for $name<S> {
            type Output = Self;
            fn neg(self) -> Self {
                $name(-self.0)
            }
        }
    };
}

tensor_newtype!(
    /// Covariant antisymmetric 2-tensor.
    Form2
);
tensor_newtype!(
    /// Contravariant antisymmetric 2-tensor.
    Bivec
);
tensor_newtype!(
    /// Covariant symmetric 2-tensor.
    Sym4
);

impl<S: Scalar> Form2<S> {
    /// Antisymmetric part of `m`.
    pub fn from_mat(m: &Mat4<S>) -> Self {
        Form2(m.antisymmetric_part())
    }

    pub fn scale(&self, k: f64) -> Self {
        Form2(self.0.scale(k))
    }
}

impl Form2<f64> {
    pub fn try_new(m: Mat4<f64>, tol: f64) -> Result<Self, TensorError> {
        let defect = m.antisymmetry_defect();
        if defect > tol {
            return Err(TensorError::NotAntisymmetric { defect });
        }
        Ok(Form2(m.antisymmetric_part()))
    }

    pub fn inverse(&self) -> Result<Bivec<f64>, TensorError> {
        self.0
            .try_inverse()
            .map(|m| Bivec(m.antisymmetric_part()))
            .ok_or(TensorError::SingularForm)
    }
}

impl<S: Scalar> Bivec<S> {
    pub fn from_mat(m: &Mat4<S>) -> Self {
        Bivec(m.antisymmetric_part())
    }

    /// `Re(α ∂z₁∧∂z₂)` for `α = p + iq`, with `∂z = (∂x − i∂y)/2`.
    pub fn re_holomorphic(p: S, q: S) -> Self {
        let a = wedge_basis::<S>(0, 2) - wedge_basis(1, 3);
        let b = wedge_basis::<S>(0, 3) + wedge_basis(1, 2);
        Bivec((a.scale_by(p) + b.scale_by(q)).scale(0.25))
    }

    /// Contraction of a covector into the first slot, `α ↦ Q(α, ·)`.
    pub fn contract(&self, alpha: &Vec4<S>) -> Vec4<S> {
        self.0.vec_mul(alpha)
    }

    pub fn scale(&self, k: f64) -> Self {
        Bivec(self.0.scale(k))
    }
}

impl<S: Scalar> Sym4<S> {
    pub fn from_mat(m: &Mat4<S>) -> Self {
        Sym4(m.symmetric_part())
    }
}

impl Sym4<f64> {
    pub fn try_new(m: Mat4<f64>, tol: f64) -> Result<Self, TensorError> {
        let defect = m.symmetry_defect();
        if defect > tol {
            return Err(TensorError::NotAntisymmetric { defect });
        }
        Ok(Sym4(m.symmetric_part()))
    }
}

/// Endomorphism of `T ⊕ T*` in block form `[[TT, T*T], [TT*, T*T*]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GCMat(pub [[f64; 8]; 8]);

impl GCMat {
    pub fn from_blocks(a: &Mat4, b: &Mat4, c: &Mat4, d: &Mat4) -> Self {
        let mut m = [[0.0; 8]; 8];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = a.0[i][j];
                m[i][j + 4] = b.0[i][j];
                m[i + 4][j] = c.0[i][j];
                m[i + 4][j + 4] = d.0[i][j];
            }
        }
        GCMat(m)
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 8]; 8];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        GCMat(m)
    }

    fn na(&self) -> SMatrix<f64, 8, 8> {
        SMatrix::from_fn(|i, j| self.0[i][j])
    }

    fn from_na(m: &SMatrix<f64, 8, 8>) -> Self {
        GCMat(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::from_na(&(self.na() * o.na()))
    }

    pub fn block(&self, bi: usize, bj: usize) -> Mat4 {
        Mat4::from_fn(|i, j| self.0[4 * bi + i][4 * bj + j])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `max |J² + Id|`.
    pub fn square_defect(&self) -> f64 {
        let sq = self.na() * self.na() + SMatrix::<f64, 8, 8>::identity();
        sq.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `max |[A, B]|`.
    pub fn commutator_norm(&self, o: &Self) -> f64 {
        let c = self.na() * o.na() - o.na() * self.na();
        c.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PoissonSign {
    Plus,
    Minus,
}

impl PoissonSign {
    pub fn factor(self) -> f64 {
        match self {
            PoissonSign::Plus => 1.0,
            PoissonSign::Minus => -1.0,
        }
    }
}

pub fn commutator<S: Scalar>(a: &Mat4<S>, b: &Mat4<S>) -> Mat4<S> {
    *a * *b - *b * *a
}

/// Factor turning [`compute_q`] into the real part of the holomorphic Poisson
/// structure in the local normal form. The commutator of the two complex
/// structures of a model built from `Re(u∂u∧∂v)` gives `(1/8)[I₊,I₋]g⁻¹ =
/// −(1/4)·Re(u∂u∧∂v)`, i.e. the same tensor as `−(1/2)[I₊,I₋]g⁻¹`.
pub const Q_CALIBRATION: f64 = -4.0;

/// `(1/8)[I₊, I₋] g⁻¹`, checked for antisymmetry.
pub fn compute_q(ip: &Mat4, im: &Mat4, ginv: &Mat4, tol: f64) -> Result<Bivec, TensorError> {
    let q = (commutator(ip, im) * *ginv).scale(0.125);
    let defect = q.antisymmetry_defect();
    if defect > tol {
        return Err(TensorError::NotAntisymmetric { defect });
    }
    Ok(Bivec(q.antisymmetric_part()))
}

/// `(1/2)(I₊ ∓ I₋) g⁻¹`.
pub fn real_poisson(ip: &Mat4, im: &Mat4, ginv: &Mat4, sign: PoissonSign) -> Bivec {
    let s = sign.factor();
    Bivec(((*ip - im.scale(s)) * *ginv).scale(0.5))
}

/// `−(1/2)(ω₊⁻¹ ∓ ω₋⁻¹)`, the form-side expression for the same bivector.
pub fn real_poisson_from_forms(
    wp: &Form2,
    wm: &Form2,
    sign: PoissonSign,
) -> Result<Bivec, TensorError> {
    let s = sign.factor();
    let a = wp.0.try_inverse().ok_or(TensorError::SingularForm)?;
    let b = wm.0.try_inverse().ok_or(TensorError::SingularForm)?;
    Ok(Bivec((a - b.scale(s)).scale(-0.5)))
}

/// Generalized complex structure on `T ⊕ T*` from bi-Hermitian data,
/// conjugated by the B-field transform of `b`.
pub fn reconstruct_j(
    b: &Form2,
    ip: &Mat4,
    im: &Mat4,
    wp: &Form2,
    wm: &Form2,
    sign: PoissonSign,
) -> Result<GCMat, TensorError> {
    let s = sign.factor();
    let wpi = wp.0.try_inverse().ok_or(TensorError::SingularForm)?;
    let wmi = wm.0.try_inverse().ok_or(TensorError::SingularForm)?;
    let core = GCMat::from_blocks(
        &(*ip + im.scale(s)).scale(0.5),
        &(wpi - wmi.scale(s)).scale(-0.5),
        &(wp.0 - wm.0.scale(s)).scale(0.5),
        &(ip.transpose() + im.transpose().scale(s)).scale(-0.5),
    );
    let id = Mat4::identity();
    let zero = Mat4::zero();
    let left = GCMat::from_blocks(&id, &zero, &(-b.0), &id);
    let right = GCMat::from_blocks(&id, &zero, &b.0, &id);
    Ok(left.mul(&core).mul(&right))
}

/// `F I₀ + I₀ᵀ F + F Q F`.
pub fn brane_residual<S: Scalar>(f: &Form2<S>, i0: &Mat4<S>, q: &Bivec<S>) -> Mat4<S> {
    f.0 * *i0 + i0.transpose() * f.0 + f.0 * q.0 * f.0
}

/// Structures carried by a solution of the brane equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derived<S = f64> {
    pub i1: Mat4<S>,
    pub g: Sym4<S>,
    pub b: Form2<S>,
}

/// `I₁ = I₀ + QF`, `g = −(1/2)F(I₀+I₁)`, `b = −(1/2)F(−I₀+I₁)`, without checks.
/// `g` and `b` are projected onto their (anti)symmetric parts.
pub fn derived_structures_unchecked<S: Scalar>(
    f: &Form2<S>,
    i0: &Mat4<S>,
    q: &Bivec<S>,
) -> Derived<S> {
    let i1 = *i0 + q.0 * f.0;
    let g = (f.0 * (*i0 + i1)).scale(-0.5);
    let b = (f.0 * (i1 - *i0)).scale(-0.5);
    Derived { i1, g: Sym4::from_mat(&g), b: Form2::from_mat(&b) }
}

pub fn derived_structures(
    f: &Form2,
    i0: &Mat4,
    q: &Bivec,
    tol: f64,
) -> Result<Derived, TensorError> {
    let residual = brane_residual(f, i0, q).max_abs();
    if residual > tol {
        return Err(TensorError::BraneViolated { residual, tol });
    }
    Ok(derived_structures_unchecked(f, i0, q))
}

/// Composition of morphisms `I₀ → I₁ → I₂` is addition of their 2-forms.
pub fn compose_morphisms(
    f01: &Form2,
    f12: &Form2,
    i0: &Mat4,
    q: &Bivec,
    tol: f64,
) -> Result<Form2, TensorError> {
    let r01 = brane_residual(f01, i0, q).max_abs();
    if r01 > tol {
        return Err(TensorError::MorphismViolated { which: "first", residual: r01 });
    }
    let i1 = *i0 + q.0 * f01.0;
    let r12 = brane_residual(f12, &i1, q).max_abs();
    if r12 > tol {
        return Err(TensorError::MorphismViolated { which: "second", residual: r12 });
    }
    Ok(*f01 + *f12)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymEigen {
    /// Ascending.
    pub values: [f64; 4],
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: Mat4,
}

impl SymEigen {
    pub fn reconstruction_residual(&self, s: &Sym4) -> f64 {
        let l = Mat4::from_fn(|i, j| if i == j { self.values[i] } else { 0.0 });
        let v = self.vectors;
        (v * l * v.transpose() - s.0).max_abs()
    }
}

pub fn sym_eigen(s: &Sym4) -> SymEigen {
    let eig = SymmetricEigen::new(s.0.to_nalgebra());
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    SymEigen {
        values: order.map(|k| eig.eigenvalues[k]),
        vectors: Mat4::from_fn(|i, j| eig.eigenvectors[(i, order[j])]),
    }
}

pub fn min_eigenvalue(s: &Sym4) -> f64 {
    sym_eigen(s).values[0]
}
