//! Cox–de Boor evaluation of planar B-spline curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BSplineCurve {
    pub control_points: Vec<[f64; 2]>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Knot vector; left empty it is filled with a clamped uniform one.
    #[serde(default)]
    pub knots: Vec<f64>,
}

fn default_degree() -> usize {
    3
}

impl BSplineCurve {
    /// Curve with a clamped uniform knot vector (end knots repeated
    /// `degree + 1` times).
    pub fn clamped(control_points: Vec<[f64; 2]>, degree: usize) -> Result<Self> {
        let knots = clamped_uniform_knots(control_points.len(), degree)?;
        let curve = BSplineCurve {
            control_points,
            degree,
            knots,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Fills in default knots if missing and checks the invariants.
    pub fn normalized(mut self) -> Result<Self> {
        if self.knots.is_empty() {
            self.knots = clamped_uniform_knots(self.control_points.len(), self.degree)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::invalid("B-spline degree must be at least 1"));
        }
        if self.control_points.len() <= self.degree {
            return Err(Error::invalid(format!(
                "degree {} needs more than {} control points",
                self.degree,
                self.control_points.len()
            )));
        }
        if self.knots.len() != self.control_points.len() + self.degree + 1 {
            return Err(Error::invalid(format!(
                "expected {} knots, found {}",
                self.control_points.len() + self.degree + 1,
                self.knots.len()
            )));
        }
        if self.knots.windows(2).any(|w| w[1] < w[0]) || self.knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("knot vector must be finite and non-decreasing"));
        }
        if self.domain().1 <= self.domain().0 {
            return Err(Error::invalid("knot vector spans an empty parameter domain"));
        }
        Ok(())
    }

    /// Parameter range `[u_p, u_{n}]` on which the basis sums to one.
    pub fn domain(&self) -> (f64, f64) {
        let p = self.degree;
        (self.knots[p], self.knots[self.control_points.len()])
    }

    /// `N_{i,p}(t)`, degree taken from the curve.
    pub fn basis(&self, i: usize, t: f64) -> f64 {
        self.basis_deg(i, self.degree, t)
    }

    fn basis_deg(&self, i: usize, p: usize, t: f64) -> f64 {
        let u = &self.knots;
        if p == 0 {
            return if (u[i] <= t && t < u[i + 1]) || (t == self.domain().1 && i == self.last_span()) {
                1.0
            } else {
                0.0
            };
        }
        let mut value = 0.0;
        let left = u[i + p] - u[i];
        if left > 0.0 {
            value += (t - u[i]) / left * self.basis_deg(i, p - 1, t);
        }
        let right = u[i + p + 1] - u[i + 1];
        if right > 0.0 {
            value += (u[i + p + 1] - t) / right * self.basis_deg(i + 1, p - 1, t);
        }
        value
    }

    /// Index of the last non-empty knot span inside the domain, which owns
    /// the right end point.
    fn last_span(&self) -> usize {
        let end = self.domain().1;
        (0..self.knots.len() - 1)
            .rev()
            .find(|&i| self.knots[i] < self.knots[i + 1] && self.knots[i + 1] <= end)
            .unwrap_or(0)
    }

    /// `C(t) = sum N_{i,p}(t) P_i` for `t` in `[0, 1]`, mapped onto the knot domain.
    pub fn eval(&self, t: f64) -> Result<[f64; 2]> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("parameter {t} outside [0, 1]")));
        }
        let (a, b) = self.domain();
        let u = if t == 1.0 { b } else { a + t * (b - a) };
        let mut out = [0.0, 0.0];
        for (i, p) in self.control_points.iter().enumerate() {
            let w = self.basis(i, u);
            if w != 0.0 {
                out[0] += w * p[0];
                out[1] += w * p[1];
            }
        }
        Ok(out)
    }
}

pub fn clamped_uniform_knots(n_points: usize, degree: usize) -> Result<Vec<f64>> {
    if degree < 1 || n_points <= degree {
        return Err(Error::invalid(format!(
            "cannot build clamped knots for {n_points} points of degree {degree}"
        )));
    }
    let interior = n_points - degree - 1;
    let spans = (interior + 1) as f64;
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..=interior).map(|k| k as f64 / spans));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn de_casteljau(pts: &[[f64; 2]], t: f64) -> [f64; 2] {
        let mut v = pts.to_vec();
        while v.len() > 1 {
            v = v
                .windows(2)
                .map(|w| [(1.0 - t) * w[0][0] + t * w[1][0], (1.0 - t) * w[0][1] + t * w[1][1]])
                .collect();
        }
        v[0]
    }

    #[test]
    fn clamped_ends_hit_control_points() {
        let pts = vec![[0.0, 0.0], [1.0, 2.0], [3.0, 3.0], [4.0, 0.0]];
        let c = BSplineCurve::clamped(pts.clone(), 3).unwrap();
        assert_eq!(c.eval(0.0).unwrap(), pts[0]);
        assert_eq!(c.eval(1.0).unwrap(), pts[3]);
    }

    #[test]
    fn single_span_matches_bezier() {
        let pts = vec![[0.0, 0.0], [1.0, 2.0], [3.0, 3.0], [4.0, 0.0]];
        let c = BSplineCurve::clamped(pts.clone(), 3).unwrap();
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let a = c.eval(t).unwrap();
            let b = de_casteljau(&pts, t);
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_points_stay_on_line() {
        let pts: Vec<[f64; 2]> = (0..4).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let c = BSplineCurve::clamped(pts.clone(), 3).unwrap();
        for k in 0..100 {
            let t = k as f64 / 99.0;
            let p = c.eval(t).unwrap();
            let q = de_casteljau(&pts, t);
            assert!((p[1] - 2.0 * p[0]).abs() < 1e-12);
            assert!((p[0] - q[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_knots_rejected() {
        let c = BSplineCurve {
            control_points: vec![[0.0, 0.0]; 4],
            degree: 3,
            knots: vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 1.0],
        };
        assert!(c.validate().is_err());
        let c = BSplineCurve {
            control_points: vec![[0.0, 0.0]; 4],
            degree: 3,
            knots: vec![0.0; 7],
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity(t in 0.0f64..=1.0) {
            let pts: Vec<[f64; 2]> = (0..9).map(|i| [i as f64, 0.0]).collect();
            let c = BSplineCurve::clamped(pts, 3).unwrap();
            let sum: f64 = (0..9).map(|i| c.basis(i, t)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
