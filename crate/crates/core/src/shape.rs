//! Linear shape restrictions on a response curve over the treatment grid.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, TreatmentGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    #[default]
    None,
    Decreasing,
    Increasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    #[default]
    None,
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    #[serde(default)]
    pub monotone: Monotone,
    #[serde(default)]
    pub curvature: Curvature,
    #[serde(default)]
    pub bounds: Option<[f64; 2]>,
    /// Bound on `|m(d') - m(d)| / |d' - d|` between adjacent levels.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

impl ShapeSpec {
    pub fn decreasing_convex_unit() -> Self {
        Self {
            monotone: Monotone::Decreasing,
            curvature: Curvature::Convex,
            bounds: Some([0.0, 1.0]),
            lipschitz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some([lo, hi]) = self.bounds {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "invalid Lipschitz constant {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.monotone == Monotone::None
            && self.curvature == Curvature::None
            && self.bounds.is_none()
            && self.lipschitz.is_none()
    }
}

/// `{ m : S m <= r }` together with the selection matrix `F` picking the
/// observed levels out of a full response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub s: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    observed: Vec<usize>,
    bounded: bool,
}

impl ConstraintSystem {
    pub fn levels(&self) -> usize {
        self.f
            .first()
            .map_or(self.s.first().map_or(0, Vec::len), Vec::len)
    }

    pub fn rows(&self) -> usize {
        self.s.len()
    }

    /// Grid indices selected by the rows of `F`.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    /// Whether explicit bounds rows make the shape set compact.
    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    /// `max_i (S m - r)_i`, or `-inf` for an empty system.
    pub fn max_violation(&self, m: &[f64]) -> f64 {
        self.s
            .iter()
            .zip(&self.r)
            .map(|(row, r)| row.iter().zip(m).map(|(a, v)| a * v).sum::<f64>() - r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, m: &[f64], tol: f64) -> bool {
        assert_eq!(
            m.len(),
            self.levels(),
            "response vector length must equal the grid size"
        );
        self.max_violation(m) <= tol
    }

    /// `F m`.
    pub fn select(&self, m: &[f64]) -> Vec<f64> {
        self.observed.iter().map(|&j| m[j]).collect()
    }

    /// Adds a row `a . m <= b`. Used to tighten a system in place.
    pub fn push_row(&mut self, a: Vec<f64>, b: f64) {
        assert_eq!(a.len(), self.levels());
        self.s.push(a);
        self.r.push(b);
    }
}

/// Builds `(S, r, F)` for `spec` on `grid`.
///
/// Row blocks, in order: lower bounds (`-I`), upper bounds (`I`), spacing
/// normalized first differences, second differences, and two Lipschitz rows
/// per gap. Difference rows divide by `d_{j+1} - d_j`, so unit spacing gives
/// the plain `(1, -1)` and `(1, -2, 1)` patterns.
pub fn build_constraints(grid: &TreatmentGrid, spec: &ShapeSpec) -> Result<ConstraintSystem> {
    spec.validate()?;
    if spec.is_empty() {
        return Err(Error::EmptySpec);
    }
    let d = grid.values();
    let n = grid.len();
    let mut s: Vec<Vec<f64>> = Vec::new();
    let mut r: Vec<f64> = Vec::new();

    if let Some([lo, hi]) = spec.bounds {
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            s.push(row);
            r.push(0.0 - lo);
        }
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            s.push(row);
            r.push(hi);
        }
    }

    // Rows of the form (-1/h, 1/h) <= 0 encode a decreasing curve.
    let monotone_sign = match spec.monotone {
        Monotone::None => None,
        Monotone::Decreasing => Some(1.0),
        Monotone::Increasing => Some(-1.0),
    };
    if let Some(sign) = monotone_sign {
        for j in 0..n - 1 {
            let h = d[j + 1] - d[j];
            let mut row = vec![0.0; n];
            row[j] = -sign / h;
            row[j + 1] = sign / h;
            s.push(row);
            r.push(0.0);
        }
    }

    // (-1/h1, 1/h1 + 1/h2, -1/h2) <= 0 says slopes are nondecreasing.
    let curvature_sign = match spec.curvature {
        Curvature::None => None,
        Curvature::Convex => Some(1.0),
        Curvature::Concave => Some(-1.0),
    };
    if let Some(sign) = curvature_sign {
        for j in 0..n.saturating_sub(2) {
            let h1 = d[j + 1] - d[j];
            let h2 = d[j + 2] - d[j + 1];
            let mut row = vec![0.0; n];
            row[j] = -sign / h1;
            row[j + 1] = sign * (1.0 / h1 + 1.0 / h2);
            row[j + 2] = -sign / h2;
            s.push(row);
            r.push(0.0);
        }
    }

    if let Some(l) = spec.lipschitz {
        for j in 0..n - 1 {
            let h = d[j + 1] - d[j];
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; n];
                row[j + 1] = sign;
                row[j] = -sign;
                s.push(row);
                r.push(l * h);
            }
        }
    }

    let observed = grid.observed_indices();
    let f = observed
        .iter()
        .map(|&j| {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            row
        })
        .collect();
    Ok(ConstraintSystem {
        s,
        r,
        f,
        observed,
        bounded: spec.bounds.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: &[f64], observed: &[f64]) -> TreatmentGrid {
        TreatmentGrid::new(values.to_vec(), observed).unwrap()
    }

    #[test]
    fn increasing_concave_unit_spacing() {
        let g = grid(&[1.0, 2.0, 3.0, 4.0], &[1.0]);
        let spec = ShapeSpec {
            monotone: Monotone::Increasing,
            curvature: Curvature::Concave,
            ..Default::default()
        };
        let cs = build_constraints(&g, &spec).unwrap();
        let expected = vec![
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0, -1.0],
            vec![1.0, -2.0, 1.0, 0.0],
            vec![0.0, 1.0, -2.0, 1.0],
        ];
        assert_eq!(cs.s, expected);
        assert_eq!(cs.r, vec![0.0; 5]);
    }

    #[test]
    fn bounds_only_stack_identity() {
        let g = grid(&[0.0, 1.0, 2.0], &[0.0]);
        let spec = ShapeSpec {
            bounds: Some([0.0, 1.0]),
            ..Default::default()
        };
        let cs = build_constraints(&g, &spec).unwrap();
        assert_eq!(cs.rows(), 6);
        assert_eq!(cs.s[0], vec![-1.0, 0.0, 0.0]);
        assert_eq!(cs.s[4], vec![0.0, 1.0, 0.0]);
        assert_eq!(cs.r, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn decreasing_convex_feasibility() {
        let g = grid(&[0.0, 1.0, 2.0], &[0.0, 2.0]);
        let cs = build_constraints(&g, &ShapeSpec::decreasing_convex_unit()).unwrap();
        assert!(cs.is_feasible(&[1.0, 0.5, 0.0], 1e-12));
        assert!(!cs.is_feasible(&[1.0, 0.6, 0.0], 1e-12));
        assert!(cs.is_feasible(&[0.0, 0.0, 0.0], 0.0));
    }

    #[test]
    fn linear_curve_is_on_the_convexity_boundary() {
        let g = grid(&[0.0, 1.0, 2.0, 3.0], &[0.0, 3.0]);
        let spec = ShapeSpec {
            monotone: Monotone::Decreasing,
            curvature: Curvature::Convex,
            ..Default::default()
        };
        let cs = build_constraints(&g, &spec).unwrap();
        let m = [0.9, 0.6, 0.3, 0.0];
        assert!(cs.is_feasible(&m, 1e-12));
        assert!(cs.max_violation(&m).abs() < 1e-12);
    }

    #[test]
    fn tolerance_semantics() {
        let g = grid(&[0.0, 1.0], &[0.0]);
        let cs = build_constraints(
            &g,
            &ShapeSpec {
                bounds: Some([0.0, 1.0]),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!cs.is_feasible(&[1.0 + 1e-6, 0.5], 1e-9));
        assert!(cs.is_feasible(&[1.0 + 1e-10, 0.5], 1e-9));
    }

    #[test]
    fn uneven_spacing_uses_normalized_differences() {
        let g = grid(&[0.0, 1.0, 3.0], &[0.0]);
        let spec = ShapeSpec {
            curvature: Curvature::Convex,
            ..Default::default()
        };
        let cs = build_constraints(&g, &spec).unwrap();
        assert_eq!(cs.s, vec![vec![-1.0, 1.5, -0.5]]);
        // m(d) = d^2 is convex on any grid.
        assert!(cs.is_feasible(&[0.0, 1.0, 9.0], 1e-12));
        // Linear in d is on the boundary despite unequal gaps.
        assert!(cs.max_violation(&[0.0, 1.0, 3.0]).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_rows() {
        let g = grid(&[0.0, 0.5, 1.0], &[0.0]);
        let spec = ShapeSpec {
            lipschitz: Some(2.0),
            ..Default::default()
        };
        let cs = build_constraints(&g, &spec).unwrap();
        assert_eq!(cs.rows(), 4);
        assert!(cs.is_feasible(&[0.0, 1.0, 0.0], 1e-12));
        assert!(!cs.is_feasible(&[0.0, 1.1, 0.0], 1e-12));
    }

    #[test]
    fn empty_spec_is_rejected() {
        let g = grid(&[0.0, 1.0], &[0.0]);
        assert_eq!(
            build_constraints(&g, &ShapeSpec::default()),
            Err(Error::EmptySpec)
        );
    }

    #[test]
    fn selection_rows_are_orthonormal() {
        let g = grid(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 3.0]);
        let cs = build_constraints(&g, &ShapeSpec::decreasing_convex_unit()).unwrap();
        for (a, ra) in cs.f.iter().enumerate() {
            assert_eq!(ra.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(ra.iter().filter(|&&v| v != 0.0).count(), 1);
            for (b, rb) in cs.f.iter().enumerate() {
                let ip: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                assert_eq!(ip, if a == b { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(cs.select(&[5.0, 4.0, 3.0, 2.0, 1.0]), vec![5.0, 3.0, 2.0]);
    }
}
