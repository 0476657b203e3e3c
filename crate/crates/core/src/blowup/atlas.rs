//! The two standard charts of the blow-up of ℂ² at the origin.
//!
//! Chart 0 has coordinates `(u₀, v₀) = (u/v, v)` and chart 1 has
//! `(u₁, v₁) = (u, v/u)`. The exceptional divisor is `{v₀ = 0} ∪ {u₁ = 0}`.

use serde::{Deserialize, Serialize};

use crate::calculus::{ChartDomain, Locus};
use crate::scalar::{seed, Scalar};
use crate::tensor::{Bivec, Mat4};

use super::BlowupError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chart {
    #[serde(rename = "chart0")]
    Zero,
    #[serde(rename = "chart1")]
    One,
}

impl Chart {
    pub fn other(self) -> Self {
        match self {
            Chart::Zero => Chart::One,
            Chart::One => Chart::Zero,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Chart::Zero => "chart0",
            Chart::One => "chart1",
        }
    }

    /// Coordinate slots of the chart's fibre coordinate, which cuts out E.
    pub fn divisor_slots(self) -> [usize; 2] {
        match self {
            Chart::Zero => [2, 3],
            Chart::One => [0, 1],
        }
    }

    /// Coordinate slots of the chart's coordinate along E.
    pub fn along_divisor_slots(self) -> [usize; 2] {
        match self {
            Chart::Zero => [0, 1],
            Chart::One => [2, 3],
        }
    }
}

/// Complex arithmetic on `(re, im)` pairs of any scalar.
pub(crate) fn cmul<S: Scalar>(a: (S, S), b: (S, S)) -> (S, S) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

pub(crate) fn cinv<S: Scalar>(a: (S, S)) -> (S, S) {
    let n = a.0 * a.0 + a.1 * a.1;
    (a.0 / n, -a.1 / n)
}

pub(crate) fn abs2<S: Scalar>(a: (S, S)) -> S {
    a.0 * a.0 + a.1 * a.1
}

pub(crate) fn split<S: Scalar>(p: &[S; 4]) -> ((S, S), (S, S)) {
    ((p[0], p[1]), (p[2], p[3]))
}

pub(crate) fn join<S: Scalar>(a: (S, S), b: (S, S)) -> [S; 4] {
    [a.0, a.1, b.0, b.1]
}

pub fn blowdown<S: Scalar>(chart: Chart, p: &[S; 4]) -> [S; 4] {
    let (a, b) = split(p);
    match chart {
        Chart::Zero => join(cmul(a, b), b),
        Chart::One => join(a, cmul(a, b)),
    }
}

/// `Dπ` at `p`, a real 4×4 matrix.
pub fn blowdown_jacobian<S: Scalar>(chart: Chart, p: &[S; 4]) -> Mat4<S> {
    let y = blowdown(chart, &seed(p));
    Mat4::from_fn(|i, k| y[i].eps[k])
}

/// `r² = |u|² + |v|²` of the blown-down point.
pub fn radius_sq<S: Scalar>(chart: Chart, p: &[S; 4]) -> S {
    let (a, b) = split(p);
    match chart {
        Chart::Zero => abs2(b) * (abs2(a) + 1.0),
        Chart::One => abs2(a) * (abs2(b) + 1.0),
    }
}

/// The coordinate that must be invertible for the transition out of `chart`.
fn transition_pivot<S: Scalar>(chart: Chart, p: &[S; 4]) -> (S, S) {
    let (a, b) = split(p);
    match chart {
        Chart::Zero => a,
        Chart::One => b,
    }
}

pub fn transition<S: Scalar>(from: Chart, p: &[S; 4]) -> Result<[S; 4], BlowupError> {
    let pivot = transition_pivot(from, p);
    if abs2(pivot).re() == 0.0 {
        return Err(BlowupError::OnExcludedLocus {
            chart: from,
            point: p.map(|x| x.re()),
        });
    }
    let (a, b) = split(p);
    Ok(match from {
        // (u₁, v₁) = (u₀v₀, 1/u₀)
        Chart::Zero => join(cmul(a, b), cinv(a)),
        // (u₀, v₀) = (1/v₁, u₁v₁)
        Chart::One => join(cinv(b), cmul(a, b)),
    })
}

pub fn transition_jacobian<S: Scalar>(from: Chart, p: &[S; 4]) -> Result<Mat4<S>, BlowupError> {
    let y = transition(from, &seed(p))?;
    Ok(Mat4::from_fn(|i, k| y[i].eps[k]))
}

/// Real part of the lifted Poisson structure:
/// `Re(u₀ ∂u₀∧∂v₀)` in chart 0 and `Re(∂u₁∧∂v₁)` in chart 1.
pub fn lift_poisson<S: Scalar>(chart: Chart, p: &[S; 4]) -> Bivec<S> {
    match chart {
        Chart::Zero => Bivec::re_holomorphic(p[0], p[1]),
        Chart::One => Bivec::re_holomorphic(S::one(), S::zero()),
    }
}

/// `A Q Aᵀ`, the pushforward of a bivector through a map with Jacobian `A`.
pub fn push_bivector<S: Scalar>(q: &Bivec<S>, a: &Mat4<S>) -> Bivec<S> {
    Bivec(*a * q.0 * a.transpose())
}

/// `Aᵀ T A`, the pullback of a covariant 2-tensor.
pub fn pull_covariant<S: Scalar>(t: &Mat4<S>, a: &Mat4<S>) -> Mat4<S> {
    a.transpose() * *t * *a
}

/// Chart boxes for the region of interest `r < r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupAtlas {
    pub chart0: ChartDomain,
    pub chart1: ChartDomain,
    /// Chart 0 is left once `|u₀|` exceeds this, chart 1 once `|v₁|` does.
    pub switch_modulus: f64,
}

impl BlowupAtlas {
    pub fn new(r_max: f64) -> Self {
        let along = 3.0;
        let fibre = r_max.max(1e-3) * 1.5;
        let mk = |name: &str, chart: Chart| {
            let mut lo = [0.0; 4];
            let mut hi = [0.0; 4];
            for k in chart.along_divisor_slots() {
                lo[k] = -along;
                hi[k] = along;
            }
            for k in chart.divisor_slots() {
                lo[k] = -fibre;
                hi[k] = fibre;
            }
            ChartDomain { name: name.into(), lo, hi, excluded: Vec::new(), margin: 0.0 }
        };
        BlowupAtlas { chart0: mk("chart0", Chart::Zero), chart1: mk("chart1", Chart::One), switch_modulus: 2.0 }
    }

    pub fn domain(&self, chart: Chart) -> &ChartDomain {
        match chart {
            Chart::Zero => &self.chart0,
            Chart::One => &self.chart1,
        }
    }

    /// Domain of a chart with the locus where the transition is undefined removed.
    pub fn overlap_domain(&self, chart: Chart, margin: f64) -> ChartDomain {
        let locus = match chart {
            Chart::Zero => Locus::UZero,
            Chart::One => Locus::VZero,
        };
        self.domain(chart).clone().excluding(locus, margin)
    }

    /// Whether a flow in `chart` at `p` should continue in the other chart.
    pub fn should_switch(&self, chart: Chart, p: &[f64; 4]) -> bool {
        let [a, b] = chart.along_divisor_slots();
        p[a].hypot(p[b]) > self.switch_modulus
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blowdown_examples() {
        assert_eq!(blowdown(Chart::Zero, &[2.0, 0.0, 3.0, 0.0]), [6.0, 0.0, 3.0, 0.0]);
        assert_eq!(blowdown(Chart::Zero, &[0.7, -1.1, 0.0, 0.0]), [0.0; 4]);
        assert_eq!(blowdown(Chart::One, &[1.0, 1.0, 0.0, 0.0]), [1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transition(Chart::Zero, &[1.0, 0.0, 1.0, 0.0]).unwrap(), [1.0, 0.0, 1.0, 0.0]);
        assert_eq!(transition(Chart::Zero, &[2.0, 0.0, 0.0, 0.0]).unwrap(), [0.0, 0.0, 0.5, 0.0]);
        let p = [0.5, 0.0, 1.5, 1.0];
        let q = transition(Chart::Zero, &p).unwrap();
        let back = transition(Chart::One, &q).unwrap();
        for k in 0..4 {
            assert!((back[k] - p[k]).abs() <= 1e-15);
        }
        assert!(matches!(
            transition(Chart::Zero, &[0.0, 0.0, 0.3, 0.0]),
            Err(BlowupError::OnExcludedLocus { chart: Chart::Zero, .. })
        ));
    }

    #[test]
    fn lifted_poisson_examples() {
        let q1 = lift_poisson(Chart::One, &[0.3, -0.2, 5.0, 1.0]);
        assert_eq!(q1, Bivec::re_holomorphic(1.0, 0.0));
        assert!(lift_poisson(Chart::Zero, &[0.0, 0.0, 0.4, 0.1]).0.is_exactly_zero());
        // Overlap point (u₀, v₀) = (1, 2).
        let p = [1.0, 0.0, 2.0, 0.0];
        let t = transition_jacobian(Chart::Zero, &p).unwrap();
        let pushed = push_bivector(&lift_poisson(Chart::Zero, &p), &t);
        let q = transition(Chart::Zero, &p).unwrap();
        assert!((pushed.0 - lift_poisson(Chart::One, &q).0).max_abs() <= 1e-12);
    }

    #[test]
    fn radius_is_chart_independent() {
        let p = [0.4, -0.9, 0.2, 0.1];
        let q = transition(Chart::Zero, &p).unwrap();
        assert!((radius_sq(Chart::Zero, &p) - radius_sq(Chart::One, &q)).abs() < 1e-15);
        let y = blowdown(Chart::Zero, &p);
        let direct: f64 = y.iter().map(|x| x * x).sum();
        assert!((direct - radius_sq(Chart::Zero, &p)).abs() < 1e-15);
    }

    #[test]
    fn switching_threshold() {
        let atlas = BlowupAtlas::new(0.7);
        assert!(!atlas.should_switch(Chart::Zero, &[1.9, 0.0, 0.1, 0.0]));
        assert!(atlas.should_switch(Chart::Zero, &[1.9, 0.9, 0.1, 0.0]));
        assert!(atlas.should_switch(Chart::One, &[0.1, 0.0, 0.0, -2.5]));
    }
}
