//! Lift of the local model to the blow-up, the compactly supported
//! deformation and the assembled metric of the deformed structure.

use std::cell::Cell;

use nalgebra::Complex;

use crate::calculus::{
    BiHermitian, BiHermitianKind, ChartDomain, DcSign, EndoKind, Field, FieldError, FormKind,
    SymKind,
};
use crate::flow::{rk4_step, FlowConfig, FlowError, FlowState};
use crate::model::BiHermitianModel;
use crate::scalar::{seed, Scalar};
use crate::tensor::{standard_complex, Bivec, Form2, Mat4, Sym4};

use super::atlas::{
    blowdown, blowdown_jacobian, lift_poisson, pull_covariant, radius_sq, transition,
    transition_jacobian, BlowupAtlas, Chart,
};
use super::potential::{psh_limit, smooth_ddcf, smooth_x, PotentialSpec};
use super::BlowupError;

/// The model pulled back to the blow-up, together with the potential
/// that drives the deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct BlownUpStructure {
    pub atlas: BlowupAtlas,
    pub model: BiHermitianModel,
    pub spec: PotentialSpec,
}

/// Lifted data at one chart point. `ip` is the chart's standard structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedPoint<S = f64> {
    pub chart: Chart,
    /// Blown-down point in the model.
    pub base: [S; 4],
    /// `Dπ`.
    pub jac: Mat4<S>,
    pub g: Mat4<S>,
    pub b: Mat4<S>,
    pub omega: Form2<S>,
    pub q: Bivec<S>,
    pub ip: Mat4<S>,
    pub im: Mat4<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deformation<S = f64> {
    /// Accumulated form at the start point, in start-chart coordinates.
    pub f_t: Form2<S>,
    /// `Ĩ₊ + Q̃F_t`.
    pub ip_t: Mat4<S>,
    pub endpoint: [S; 4],
    pub end_chart: Chart,
    pub steps: usize,
    pub switches: usize,
    /// Smallest `r` at which the integrand was evaluated.
    pub trace_min_radius: f64,
}

/// `g̃ₜ` and `b̃ₜ` with the pieces they are assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformedPoint<S = f64> {
    pub lifted: LiftedPoint<S>,
    pub deformation: Deformation<S>,
    pub g_t: Sym4<S>,
    pub b_t: Form2<S>,
    /// `−(1/2)F_t(Ĩ₊ + Ĩ₊ᵗ)`.
    pub g_prime: Mat4<S>,
    /// `−(1/2)(ω̃Q̃F_t − F_tQ̃ω̃)`.
    pub third: Mat4<S>,
    /// `−(1/2)(ω̃ + F_t)(Ĩ₋ + Ĩ₊ᵗ)`, unsymmetrized.
    pub g_direct: Mat4<S>,
}

impl<S: Scalar> DeformedPoint<S> {
    pub fn bi_hermitian(&self) -> BiHermitian<S> {
        BiHermitian { g: self.g_t, b: self.b_t, ip: self.deformation.ip_t, im: self.lifted.im }
    }

    /// `ω̃ + F_t`, the morphism from `Ĩ₋` to `Ĩ₊ᵗ`.
    pub fn total_form(&self) -> Form2<S> {
        self.lifted.omega + self.deformation.f_t
    }
}

pub fn lift_model(model: BiHermitianModel, spec: PotentialSpec) -> Result<BlownUpStructure, BlowupError> {
    spec.validate()?;
    let d = &model.domain;
    if (0..4).any(|k| d.lo[k] > -spec.r2 || d.hi[k] < spec.r2) {
        return Err(BlowupError::DomainMismatch { domain: d.name.clone(), needed: spec.r2 });
    }
    Ok(BlownUpStructure { atlas: BlowupAtlas::new(spec.r2), model, spec })
}

impl BlownUpStructure {
    pub fn dc_sign(&self) -> DcSign {
        self.model.dc_sign
    }

    pub fn with_spec(&self, spec: PotentialSpec) -> Result<Self, BlowupError> {
        lift_model(self.model.clone(), spec)
    }

    pub fn lifted<S: Scalar>(&self, chart: Chart, p: &[S; 4]) -> Result<LiftedPoint<S>, FieldError> {
        let base = blowdown(chart, p);
        self.model.domain.check(&base.map(|x| x.re()))?;
        let m = self.model.point(&base)?;
        let jac = blowdown_jacobian(chart, p);
        let g = pull_covariant(&m.g.0, &jac);
        let b = pull_covariant(&m.b.0, &jac);
        let omega = Form2(pull_covariant(&m.omega.0, &jac));
        let q = lift_poisson(chart, p);
        let ip = standard_complex();
        let im = ip - q.0 * omega.0;
        Ok(LiftedPoint { chart, base, jac, g, b, omega, q, ip, im })
    }

    /// `‖(g̃ + b̃) − π*(g + b)‖` and the split check against separate pullbacks.
    pub fn pullback_defects(&self, chart: Chart, p: &[f64; 4]) -> Result<(f64, f64), FieldError> {
        let l = self.lifted(chart, p)?;
        let m = self.model.point(&l.base)?;
        let whole = pull_covariant(&(m.g.0 + m.b.0), &l.jac);
        let sum = (l.g + l.b).max_abs_diff(&whole);
        let sym = Sym4::from_mat(&whole).0.max_abs_diff(&l.g);
        let anti = Form2::from_mat(&whole).0.max_abs_diff(&l.b);
        Ok((sum, sym.max(anti)))
    }

    fn left(&self, step: usize, x: [f64; 4]) -> FlowError {
        FlowError::LeftDomain { domain: format!("r < {}", self.spec.r2), step, point: x }
    }

    /// Flow of the smooth Hamiltonian field for time `t` from `p`, with chart
    /// switching, accumulating `F_t`.
    pub fn deform<S: Scalar>(
        &self,
        chart: Chart,
        p: &[S; 4],
        t: f64,
        cfg: &FlowConfig,
    ) -> Result<Deformation<S>, FlowError> {
        let r2 = self.spec.r2 * self.spec.r2;
        if radius_sq(chart, p).re() >= r2 {
            return Err(self.left(0, p.map(|x| x.re())));
        }
        let (n, dt) = cfg.steps_for(t)?;
        let sign = self.dc_sign();
        let spec = self.spec;
        let mut cur = chart;
        let mut s = FlowState::start(*p);
        let mut switches = 0;
        let min_rr = Cell::new(radius_sq(chart, p).re());
        for k in 0..n {
            let rhs = |st: &FlowState<S>| -> Result<FlowState<S>, FieldError> {
                min_rr.set(min_rr.get().min(radius_sq(cur, &st.x).re()));
                let v = smooth_x(&spec, cur, &seed(&st.x));
                let dx = Mat4::from_fn(|i, j| v[i].eps[j]);
                let a = smooth_ddcf(&spec, cur, &st.x, sign);
                let f = if a.0.is_exactly_zero() {
                    Mat4::zero()
                } else {
                    st.jac.transpose() * a.0 * st.jac
                };
                Ok(FlowState { x: v.map(|c| c.re), jac: dx * st.jac, f })
            };
            s = rk4_step(&s, dt, &rhs)?;
            let x = s.position_re();
            if !x.iter().all(|c| c.is_finite()) || radius_sq(cur, &x) >= r2 {
                return Err(self.left(k + 1, x));
            }
            if self.atlas.should_switch(cur, &x) {
                let to_flow = |e: BlowupError| FlowError::InvalidConfig(e.to_string());
                let tj = transition_jacobian(cur, &s.x).map_err(to_flow)?;
                s.x = transition(cur, &s.x).map_err(to_flow)?;
                s.jac = tj * s.jac;
                cur = cur.other();
                switches += 1;
            }
        }
        let f_t = Form2::from_mat(&s.f);
        let ip_t = standard_complex::<S>() + lift_poisson(chart, p).0 * f_t.0;
        Ok(Deformation {
            f_t,
            ip_t,
            endpoint: s.x,
            end_chart: cur,
            steps: n,
            switches,
            trace_min_radius: min_rr.get().sqrt(),
        })
    }

    /// `g̃ₜ = g̃ + g̃′ₜ − (1/2)(ω̃Q̃F_t − F_tQ̃ω̃)` and the matching `b̃ₜ`.
    ///
    /// When `F_t` vanishes identically the lifted `(g̃, b̃)` are returned
    /// unchanged, so the deformed metric is bitwise equal to `g̃` there.
    pub fn assemble_gt<S: Scalar>(
        &self,
        chart: Chart,
        p: &[S; 4],
        t: f64,
        cfg: &FlowConfig,
    ) -> Result<DeformedPoint<S>, FieldError> {
        let lifted = self.lifted(chart, p)?;
        let deformation = self.deform(chart, p, t, cfg)?;
        let f = deformation.f_t.0;
        let (w, q, i0) = (lifted.omega.0, lifted.q.0, lifted.ip);
        let ipt = deformation.ip_t;
        let g_direct = ((w + f) * (lifted.im + ipt)).scale(-0.5);
        if f.is_exactly_zero() {
            return Ok(DeformedPoint {
                lifted,
                deformation,
                g_t: Sym4(lifted.g),
                b_t: Form2(lifted.b),
                g_prime: Mat4::zero(),
                third: Mat4::zero(),
                g_direct,
            });
        }
        let g_prime = (f * (i0 + ipt)).scale(-0.5);
        let third = (w * q * f - f * q * w).scale(-0.5);
        let g_t = Sym4::from_mat(&(lifted.g + g_prime + third));
        let b_prime = (f * q * f).scale(-0.5);
        let b_third = (w * q * f + f * q * w).scale(-0.5);
        let b_t = Form2::from_mat(&(lifted.b + b_prime + b_third));
        Ok(DeformedPoint { lifted, deformation, g_t, b_t, g_prime, third, g_direct })
    }

    /// `h̃`, the `t → 0` limit of `(1/t)g̃′ₜ`.
    pub fn limit_metric(&self, chart: Chart, p: &[f64; 4]) -> Mat4 {
        psh_limit(&self.spec, chart, p, self.dc_sign())
    }

    pub fn domain(&self, chart: Chart) -> &ChartDomain {
        self.atlas.domain(chart)
    }

    pub fn lifted_i_minus(&self, chart: Chart) -> LiftedIMinus<'_> {
        LiftedIMinus { s: self, chart }
    }

    pub fn deformed(&self, chart: Chart, t: f64, cfg: &FlowConfig) -> DeformedField<'_> {
        DeformedField { s: self, chart, t, cfg: cfg.clone() }
    }
}

/// `Ĩ₋` as a field on one chart.
pub struct LiftedIMinus<'a> {
    pub s: &'a BlownUpStructure,
    pub chart: Chart,
}

impl Field<EndoKind> for LiftedIMinus<'_> {
    fn domain(&self) -> &ChartDomain {
        self.s.domain(self.chart)
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Mat4<S>, FieldError> {
        Ok(self.s.lifted(self.chart, p)?.im)
    }
}

/// The deformed structure at a fixed time as a field on one chart.
pub struct DeformedField<'a> {
    pub s: &'a BlownUpStructure,
    pub chart: Chart,
    pub t: f64,
    pub cfg: FlowConfig,
}

impl DeformedField<'_> {
    pub fn i_plus(&self) -> DeformedPart<'_, IPlusT> {
        DeformedPart(self, IPlusT)
    }
    pub fn f_t(&self) -> DeformedPart<'_, FormT> {
        DeformedPart(self, FormT)
    }
    pub fn metric(&self) -> DeformedPart<'_, MetricT> {
        DeformedPart(self, MetricT)
    }
}

impl Field<BiHermitianKind> for DeformedField<'_> {
    fn domain(&self) -> &ChartDomain {
        self.s.domain(self.chart)
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<BiHermitian<S>, FieldError> {
        Ok(self.s.assemble_gt(self.chart, p, self.t, &self.cfg)?.bi_hermitian())
    }
}

pub struct IPlusT;
pub struct FormT;
pub struct MetricT;

/// One component of [`DeformedField`].
pub struct DeformedPart<'a, P>(&'a DeformedField<'a>, P);

impl Field<EndoKind> for DeformedPart<'_, IPlusT> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Mat4<S>, FieldError> {
        let d = self.0;
        Ok(d.s.deform(d.chart, p, d.t, &d.cfg)?.ip_t)
    }
}

impl Field<FormKind> for DeformedPart<'_, FormT> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Form2<S>, FieldError> {
        let d = self.0;
        Ok(d.s.deform(d.chart, p, d.t, &d.cfg)?.f_t)
    }
}

impl Field<SymKind> for DeformedPart<'_, MetricT> {
    fn domain(&self) -> &ChartDomain {
        self.0.domain()
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<Sym4<S>, FieldError> {
        Ok(self.0.eval(p)?.g)
    }
}

/// Coefficients `(a, b)` of `Z^{1,0} = a∂u + b∂v` in chart coordinates,
/// where `X = Re Z` is the smooth Hamiltonian field; only defined on the
/// annulus `r1 < r < r2` off E.
pub fn deformation_class_z(
    spec: &PotentialSpec,
    chart: Chart,
    p: &[f64; 4],
) -> Result<[Complex<f64>; 2], BlowupError> {
    let [a, b] = chart.divisor_slots();
    if p[a] == 0.0 && p[b] == 0.0 {
        return Err(BlowupError::OnExcludedLocus { chart, point: *p });
    }
    let r = radius_sq(chart, p).sqrt();
    if !(r > spec.r1 && r < spec.r2) {
        return Err(BlowupError::NotInAnnulus { r, lo: spec.r1, hi: spec.r2 });
    }
    let x = smooth_x(spec, chart, p);
    Ok([Complex::new(2.0 * x[0], 2.0 * x[1]), Complex::new(2.0 * x[2], 2.0 * x[3])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{brane_residual, min_eigenvalue, sym_eigen};

    fn structure(c: f64) -> BlownUpStructure {
        let model = BiHermitianModel::with_time(
            ChartDomain::cube("model", 1.2),
            -0.05,
            &FlowConfig::default().with_step(2.5e-3),
            DcSign::Flipped,
        );
        lift_model(model, PotentialSpec { c, ..PotentialSpec::default() }).unwrap()
    }

    fn cfg() -> FlowConfig {
        FlowConfig::default()
    }

    #[test]
    fn lift_rejects_small_model_domain() {
        let model = BiHermitianModel::with_time(
            ChartDomain::cube("tiny", 0.5),
            -0.05,
            &FlowConfig::default(),
            DcSign::Flipped,
        );
        assert!(matches!(
            lift_model(model, PotentialSpec::default()),
            Err(BlowupError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn lifted_metric_is_degenerate_on_the_divisor() {
        let s = structure(0.1);
        for (chart, p) in [(Chart::Zero, [0.3, -0.2, 0.0, 0.0]), (Chart::One, [0.0, 0.0, 1.1, 0.4])] {
            let l = s.lifted(chart, &p).unwrap();
            let e = sym_eigen(&Sym4::from_mat(&l.g));
            assert!(e.values[0].abs() <= 1e-9 && e.values[1].abs() <= 1e-9, "{:?}", e.values);
            assert!(e.values[2] > 1e-4);
        }
    }

    #[test]
    fn lifted_structures_conjugate_the_base_off_the_divisor() {
        let s = structure(0.1);
        let p = [1.0, 0.0, 0.5, 0.0];
        let l = s.lifted(Chart::Zero, &p).unwrap();
        let m = s.model.point(&l.base).unwrap();
        let inv = l.jac.try_inverse().unwrap();
        assert!((inv * m.ip * l.jac).max_abs_diff(&l.ip) <= 1e-10);
        assert!((inv * m.im * l.jac).max_abs_diff(&l.im) <= 1e-10);
        let (sum, split) = s.pullback_defects(Chart::Zero, &p).unwrap();
        assert!(sum <= 1e-12 && split <= 1e-12);
        // Ĩ₊ = Ĩ₋ + Q̃ω̃.
        assert!((l.im + l.q.0 * l.omega.0).max_abs_diff(&l.ip) <= 1e-15);
    }

    #[test]
    fn zero_time_deformation_is_trivial() {
        let s = structure(0.1);
        let p = [0.4, 0.2, 0.3, -0.1];
        let d = s.deform(Chart::Zero, &p, 0.0, &cfg()).unwrap();
        assert!(d.f_t.0.is_exactly_zero());
        assert_eq!(d.ip_t, standard_complex());
        let g = s.assemble_gt(Chart::Zero, &p, 0.0, &cfg()).unwrap();
        let l = s.lifted(Chart::Zero, &p).unwrap();
        assert_eq!(g.g_t.0, l.g);
        assert_eq!(g.b_t.0, l.b);
    }

    #[test]
    fn deformation_is_supported_near_the_divisor() {
        let s = structure(0.1);
        // r ≈ 0.62 stays well above r1 for this short time.
        let p = [0.3, 0.1, 0.55, 0.2];
        let d = s.assemble_gt(Chart::Zero, &p, -0.04, &cfg()).unwrap();
        assert!(d.deformation.f_t.0.is_exactly_zero());
        assert_eq!(d.g_t.0, d.lifted.g);
    }

    #[test]
    fn deformation_in_the_collar_is_a_brane() {
        let s = structure(0.1);
        let p = [0.6, 0.3, 0.25, -0.1];
        let d = s.assemble_gt(Chart::Zero, &p, -0.04, &cfg()).unwrap();
        let f = d.deformation.f_t;
        assert!(f.max_abs() > 1e-4);
        assert!(brane_residual(&f, &d.lifted.ip, &d.lifted.q).max_abs() <= 1e-6);
        assert!(brane_residual(&d.total_form(), &d.lifted.im, &d.lifted.q).max_abs() <= 1e-6);
        let three = d.lifted.g + d.g_prime + d.third;
        assert!(three.max_abs_diff(&d.g_direct) <= 1e-9);
        assert!(d.g_direct.symmetry_defect() <= 1e-10);
    }

    #[test]
    fn third_summand_vanishes_on_the_divisor_tangent_block() {
        let s = structure(0.1);
        for p in [[0.3, 0.1, 0.0, 0.0], [1.0, -0.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]] {
            let d = s.assemble_gt(Chart::Zero, &p, -0.04, &cfg()).unwrap();
            let [a, b] = Chart::Zero.along_divisor_slots();
            let block = [d.third.0[a][a], d.third.0[a][b], d.third.0[b][a], d.third.0[b][b]];
            assert!(block.iter().all(|x| x.abs() <= 1e-10), "{block:?}");
            let tangent = [d.lifted.omega.0 .0[a][b], d.lifted.omega.0 .0[b][a]];
            assert!(tangent.iter().all(|x| x.abs() <= 1e-12));
        }
        // Off the tangent block the summand does not vanish where u₀ ≠ 0.
        let d = s.assemble_gt(Chart::Zero, &[0.3, 0.1, 0.0, 0.0], -0.04, &cfg()).unwrap();
        assert!(d.third.max_abs() > 1e-6);
    }

    #[test]
    fn small_deformation_is_positive_on_the_divisor() {
        let s = structure(0.025);
        let d = s.assemble_gt(Chart::Zero, &[0.3, 0.1, 0.0, 0.0], -0.02, &cfg()).unwrap();
        assert!(min_eigenvalue(&d.g_t) > 0.0);
    }

    #[test]
    fn chart_switching_keeps_the_form() {
        let s = structure(0.1);
        // |u₀| just below the threshold; the flow along Re ∂v₀ does not move u₀
        // inside U_E, so compare against the same point seen from chart 1.
        let p = [1.95, 0.3, 0.08, 0.01];
        let d0 = s.deform(Chart::Zero, &p, -0.08, &cfg()).unwrap();
        let q = transition(Chart::Zero, &p).unwrap();
        let d1 = s.deform(Chart::One, &q, -0.08, &cfg()).unwrap();
        let tj = transition_jacobian(Chart::Zero, &p).unwrap();
        let pulled = pull_covariant(&d1.f_t.0, &tj);
        assert!(pulled.max_abs_diff(&d0.f_t.0) <= 1e-9);
    }

    #[test]
    fn leaving_the_flow_region_is_reported() {
        let s = structure(0.4);
        let p = [0.0, 0.0, 0.69, 0.0];
        let e = s.deform(Chart::Zero, &p, 0.5, &cfg()).unwrap_err();
        assert!(e.is_left_domain());
    }

    #[test]
    fn z_examples() {
        let spec = PotentialSpec { c: 0.3, ..PotentialSpec::default() };
        let z = deformation_class_z(&spec, Chart::Zero, &[0.0, 0.0, 0.5, 0.0]).unwrap();
        assert!((z[0] - Complex::new(0.0, 0.0)).norm() <= 1e-12);
        assert!((z[1] - Complex::new(0.3, 0.0)).norm() <= 1e-12);
        let z = deformation_class_z(&spec, Chart::Zero, &[1.0, 0.0, 0.4, 0.0]).unwrap();
        assert!((z[0] - Complex::new(-0.3 / 0.4, 0.0)).norm() <= 1e-12);
        assert!((z[1] - Complex::new(0.3, 0.0)).norm() <= 1e-12);
        assert!(matches!(
            deformation_class_z(&spec, Chart::Zero, &[1.0, 0.0, 0.0, 0.0]),
            Err(BlowupError::OnExcludedLocus { .. })
        ));
        assert!(matches!(
            deformation_class_z(&spec, Chart::Zero, &[0.0, 0.0, 0.1, 0.0]),
            Err(BlowupError::NotInAnnulus { .. })
        ));
        let wide = PotentialSpec { r2: 1.5, ..spec };
        let z = deformation_class_z(&wide, Chart::Zero, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((z[0] - Complex::new(-0.3, 0.0)).norm() <= 1e-12);
        assert!((z[1] - Complex::new(0.3, 0.0)).norm() <= 1e-12);
        // Blow-down pushforward is c Re ∂v.
        let p = [0.4, -0.7, 0.3, 0.35];
        let x = smooth_x(&spec, Chart::One, &transition(Chart::Zero, &p).unwrap());
        let y = blowdown_jacobian(Chart::One, &transition(Chart::Zero, &p).unwrap()).mul_vec(&x);
        let expect = [0.0, 0.0, 0.15, 0.0];
        for k in 0..4 {
            assert!((y[k] - expect[k]).abs() <= 1e-12, "{y:?}");
        }
    }
}
