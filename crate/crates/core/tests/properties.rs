use gk_blowup::blowup::{
    blowdown, bump_and_feps, lift_model, lift_poisson, radius_sq, smoothstep, transition,
    transition_jacobian, BlownUpStructure, Chart, PotentialSpec,
};
use gk_blowup::blowup::atlas::push_bivector;
use gk_blowup::calculus::{
    d_one_form, ChartDomain, DcSign, DerivConfig, Field, FieldError, ScalarKind,
};
use gk_blowup::flow::{Differential, FlowConfig};
use gk_blowup::model::BiHermitianModel;
use gk_blowup::scalar::Scalar;
use gk_blowup::tensor::{
    min_eigenvalue, real_poisson, real_poisson_from_forms, Mat4, PoissonSign,
};
use gk_blowup::verify::GridSpec;
use proptest::prelude::*;
use std::sync::OnceLock;

fn structure() -> &'static BlownUpStructure {
    static S: OnceLock<BlownUpStructure> = OnceLock::new();
    S.get_or_init(|| {
        let model = BiHermitianModel::with_time(
            ChartDomain::cube("model", 1.2),
            -0.05,
            &FlowConfig::default().with_step(2.5e-3),
            DcSign::Flipped,
        );
        lift_model(model, PotentialSpec::default()).unwrap()
    })
}

fn max_diff(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (0..4).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max)
}

/// A point of chart 0 off the transition locus.
fn chart0_point() -> impl Strategy<Value = [f64; 4]> {
    (0.15f64..2.5, 0.0f64..std::f64::consts::TAU, -0.6f64..0.6, -0.6f64..0.6)
        .prop_map(|(m, a, x, y)| [m * a.cos(), m * a.sin(), x, y])
}

struct Polynomial(ChartDomain);

impl Field<ScalarKind> for Polynomial {
    fn domain(&self) -> &ChartDomain {
        &self.0
    }
    fn eval<S: Scalar>(&self, p: &[S; 4]) -> Result<S, FieldError> {
        Ok(p[0] * p[0] * p[0] * p[1] + p[2] * p[3] * p[3] - p[0] * p[3] * 2.0 + p[1] * p[2])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn atlas_round_trip(p in chart0_point()) {
        let q = transition(Chart::Zero, &p).unwrap();
        let back = transition(Chart::One, &q).unwrap();
        prop_assert!(max_diff(&back, &p) <= 1e-12);
        prop_assert!(max_diff(&blowdown(Chart::Zero, &p), &blowdown(Chart::One, &q)) <= 1e-12);
        prop_assert!((radius_sq(Chart::Zero, &p) - radius_sq(Chart::One, &q)).abs() <= 1e-12);
    }

    #[test]
    fn transition_jacobians_invert(p in chart0_point()) {
        let q = transition(Chart::Zero, &p).unwrap();
        let a = transition_jacobian(Chart::Zero, &p).unwrap();
        let b = transition_jacobian(Chart::One, &q).unwrap();
        prop_assert!((b * a).max_abs_diff(&Mat4::identity()) <= 1e-10);
    }

    #[test]
    fn lifted_poisson_is_chart_independent(p in chart0_point()) {
        let q = transition(Chart::Zero, &p).unwrap();
        let a = transition_jacobian(Chart::Zero, &p).unwrap();
        let pushed = push_bivector(&lift_poisson(Chart::Zero, &p), &a);
        prop_assert!(pushed.0.max_abs_diff(&lift_poisson(Chart::One, &q).0) <= 1e-12);
    }

    #[test]
    fn exterior_derivative_squares_to_zero(p in prop::array::uniform4(-1.0f64..1.0)) {
        let df = Differential(Polynomial(ChartDomain::cube("poly", 2.0)));
        let ddf = d_one_form(&df, &p, &DerivConfig::default()).unwrap();
        prop_assert!(ddf.max_abs() <= 1e-12);
    }

    #[test]
    fn smoothstep_is_monotone_and_bounded(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (sl, sh) = (smoothstep(lo), smoothstep(hi));
        prop_assert!((0.0..=1.0).contains(&sl) && (0.0..=1.0).contains(&sh));
        prop_assert!(sl <= sh);
    }

    #[test]
    fn bump_is_flat_off_the_collar(p in chart0_point()) {
        let spec = PotentialSpec::default();
        let r = radius_sq(Chart::Zero, &p).sqrt();
        let (eps, _) = bump_and_feps(&spec, Chart::Zero, &p);
        if r >= spec.r1 {
            prop_assert_eq!(eps, 1.0);
        }
        if r <= spec.r0 {
            prop_assert_eq!(eps, 0.0);
        }
    }

    #[test]
    fn grid_points_respect_filters(
        n in 2usize..5,
        margin in 0.0f64..0.2,
        rmax in 0.1f64..0.8,
    ) {
        let g = GridSpec {
            chart: Chart::One,
            lo: [-0.5, -0.5, -1.0, -1.0],
            hi: [0.5, 0.5, 1.0, 1.0],
            counts: [n, n, n, n],
            margin,
            radius: Some([0.0, rmax]),
        };
        for p in g.points().unwrap() {
            prop_assert!(p[0].hypot(p[1]) >= margin);
            prop_assert!(radius_sq(Chart::One, &p).sqrt() < rmax);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_structures_are_consistent(p in prop::array::uniform4(-1.0f64..1.0)) {
        let s = structure();
        let m = s.model.point(&p).unwrap();
        let id = Mat4::identity();
        prop_assert!((m.ip * m.ip + id).max_abs() <= 1e-10);
        prop_assert!((m.im * m.im + id).max_abs() <= 1e-10);
        prop_assert!(min_eigenvalue(&m.g) > 0.0);
        let q = m.bi_hermitian();
        let ginv = m.g.0.try_inverse().unwrap();
        for sign in [PoissonSign::Plus, PoissonSign::Minus] {
            let from_forms = real_poisson_from_forms(&q.omega_plus(), &q.omega_minus(), sign).unwrap();
            let direct = real_poisson(&m.ip, &m.im, &ginv, sign);
            prop_assert!(from_forms.0.max_abs_diff(&direct.0) <= 1e-10);
        }
    }

    #[test]
    fn lift_pulls_back_off_the_divisor(p in chart0_point()) {
        prop_assume!(p[2].hypot(p[3]) > 1e-3 && radius_sq(Chart::Zero, &p) < 0.64);
        let (sum, split) = structure().pullback_defects(Chart::Zero, &p).unwrap();
        prop_assert!(sum <= 1e-12 && split <= 1e-12);
    }

    #[test]
    fn zero_time_is_the_identity(p in chart0_point()) {
        prop_assume!(radius_sq(Chart::Zero, &p) < 0.49);
        let d = structure().assemble_gt(Chart::Zero, &p, 0.0, &FlowConfig::default()).unwrap();
        prop_assert!(d.deformation.f_t.0.is_exactly_zero());
        prop_assert_eq!(d.g_t.0, d.lifted.g);
    }
}
