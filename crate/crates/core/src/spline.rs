//! Univariate basis families for KAN edge functions.
//!
//! Two families are supported:
//!
//! * `BSpline`: uniform-knot B-splines of degree `K` over `G` intervals,
//!   `G + K` basis functions, evaluated with the Cox-de Boor recursion.
//! * `Rbf`: `G` Gaussian bumps `exp(-((x - c_m) / h)^2)` with centers spread
//!   uniformly over the domain and bandwidth `h = (b - a) / (G - 1)`.
//!
//! Inputs outside the domain are clamped to the nearest endpoint before
//! evaluation, and the derivative there is zero.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    BSpline,
    Rbf,
}

impl BasisFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisFamily::BSpline => "bspline",
            BasisFamily::Rbf => "rbf",
        }
    }
}

impl std::str::FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bspline" | "b-spline" | "spline" => Ok(BasisFamily::BSpline),
            "rbf" | "fastkan" | "gaussian" => Ok(BasisFamily::Rbf),
            other => Err(Error::Config(format!("unknown basis family '{other}'"))),
        }
    }
}

/// Basis configuration shared by every edge of a KAN layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub family: BasisFamily,
    /// Spline intervals (B-spline) or center count (RBF).
    pub grid: usize,
    /// Polynomial degree; ignored by the RBF family.
    pub degree: usize,
    pub lo: f64,
    pub hi: f64,
}

impl SplineSpec {
    /// B-spline basis on the default domain `[-1, 1]`.
    pub fn bspline(grid: usize, degree: usize) -> Result<Self> {
        Self::new(BasisFamily::BSpline, grid, degree, -1.0, 1.0)
    }

    /// Gaussian RBF basis on the default domain `[-2, 2]`.
    pub fn rbf(grid: usize) -> Result<Self> {
        Self::new(BasisFamily::Rbf, grid, 0, -2.0, 2.0)
    }

    /// Spec with the family's default domain.
    pub fn with_family(family: BasisFamily, grid: usize, degree: usize) -> Result<Self> {
        match family {
            BasisFamily::BSpline => Self::bspline(grid, degree),
            BasisFamily::Rbf => Self::rbf(grid),
        }
    }

    pub fn new(family: BasisFamily, grid: usize, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if grid == 0 {
            return Err(arg_err!("grid size must be positive"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(arg_err!("invalid spline domain [{lo}, {hi}]"));
        }
        let degree = if family == BasisFamily::Rbf { 0 } else { degree };
        Ok(Self {
            family,
            grid,
            degree,
            lo,
            hi,
        })
    }

    /// Number of basis functions `B`.
    pub fn basis_count(&self) -> usize {
        match self.family {
            BasisFamily::BSpline => self.grid + self.degree,
            BasisFamily::Rbf => self.grid,
        }
    }

    /// Interval width for B-splines, bandwidth for RBF.
    pub fn spacing(&self) -> f64 {
        let width = self.hi - self.lo;
        match self.family {
            BasisFamily::BSpline => width / self.grid as f64,
            BasisFamily::Rbf if self.grid > 1 => width / (self.grid - 1) as f64,
            BasisFamily::Rbf => width,
        }
    }
}

/// Uniform knot vector of length `G + 2K + 1`, extended `K` knots past each end.
pub fn make_knots(spec: &SplineSpec) -> Result<Vec<f64>> {
    if spec.family != BasisFamily::BSpline {
        return Err(Error::UnsupportedFamily(format!(
            "knots are only defined for bspline, got {}",
            spec.family.as_str()
        )));
    }
    let h = spec.spacing();
    let k = spec.degree as i64;
    Ok((-k..=spec.grid as i64 + k)
        .map(|i| spec.lo + i as f64 * h)
        .collect())
}

/// RBF centers, uniform over the domain (a single center sits at the midpoint).
pub fn rbf_centers(spec: &SplineSpec) -> Vec<f64> {
    if spec.grid == 1 {
        return vec![0.5 * (spec.lo + spec.hi)];
    }
    let h = spec.spacing();
    (0..spec.grid).map(|m| spec.lo + m as f64 * h).collect()
}

/// Precomputed evaluator for one [`SplineSpec`] at scalar width `T`.
#[derive(Debug, Clone)]
pub struct Basis<T> {
    spec: SplineSpec,
    /// Knots (B-spline) or centers (RBF).
    nodes: Vec<T>,
    lo: T,
    hi: T,
    inv_h: T,
}

impl<T: Scalar> Basis<T> {
    pub fn new(spec: SplineSpec) -> Self {
        let nodes = match spec.family {
            BasisFamily::BSpline => make_knots(&spec).expect("bspline family"),
            BasisFamily::Rbf => rbf_centers(&spec),
        };
        Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            lo: T::lit(spec.lo),
            hi: T::lit(spec.hi),
            inv_h: T::lit(1.0 / spec.spacing()),
            spec,
        }
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn count(&self) -> usize {
        self.spec.basis_count()
    }

    /// Writes all basis values at `x` into `out` (length `B`).
    pub fn eval_into(&self, x: T, out: &mut [T]) {
        self.eval_impl(x, out, None);
    }

    /// Writes basis values and their derivatives at `x`.
    pub fn eval_with_deriv_into(&self, x: T, out: &mut [T], deriv: &mut [T]) {
        self.eval_impl(x, out, Some(deriv));
    }

    fn eval_impl(&self, x: T, out: &mut [T], deriv: Option<&mut [T]>) {
        debug_assert_eq!(out.len(), self.count());
        let clamped = x < self.lo || x > self.hi;
        let x = x.max(self.lo).min(self.hi);
        match self.spec.family {
            BasisFamily::Rbf => {
                for (o, &c) in out.iter_mut().zip(&self.nodes) {
                    let z = (x - c) * self.inv_h;
                    *o = (-z * z).exp();
                }
                if let Some(d) = deriv {
                    if clamped {
                        d.fill(T::zero());
                    } else {
                        let two = T::lit(2.0);
                        for ((d, &o), &c) in d.iter_mut().zip(out.iter()).zip(&self.nodes) {
                            let z = (x - c) * self.inv_h;
                            *d = -two * z * self.inv_h * o;
                        }
                    }
                }
            }
            BasisFamily::BSpline => {
                let span = self.span(x);
                out.fill(T::zero());
                if self.spec.degree < 16 {
                    let mut vals = [T::zero(); 16];
                    let mut lower = [T::zero(); 16];
                    self.bspline_at(x, span, clamped, out, deriv, &mut vals, &mut lower);
                } else {
                    let mut vals = vec![T::zero(); self.spec.degree + 1];
                    let mut lower = vec![T::zero(); self.spec.degree + 1];
                    self.bspline_at(x, span, clamped, out, deriv, &mut vals, &mut lower);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bspline_at(
        &self,
        x: T,
        span: usize,
        clamped: bool,
        out: &mut [T],
        deriv: Option<&mut [T]>,
        vals: &mut [T],
        lower: &mut [T],
    ) {
        let k = self.spec.degree;
        let vals = &mut vals[..k + 1];
        cox_de_boor(&self.nodes, span, k, x, vals);
        out[span - k..=span].copy_from_slice(vals);
        if let Some(d) = deriv {
            d.fill(T::zero());
            if k == 0 || clamped {
                return;
            }
            let lower = &mut lower[..k];
            cox_de_boor(&self.nodes, span, k - 1, x, lower);
            bspline_deriv(&self.nodes, span, k, lower, &mut d[span - k..=span]);
        }
    }

    /// Knot span `s` with `t_s <= x < t_{s+1}`, restricted to the domain's
    /// intervals so `x = b` lands in the last one.
    fn span(&self, x: T) -> usize {
        let k = self.spec.degree;
        let g = self.spec.grid;
        let guess = ((x - self.lo) * self.inv_h).floor().to_usize().unwrap_or(0);
        let mut s = (k + guess).min(k + g - 1);
        while s > k && x < self.nodes[s] {
            s -= 1;
        }
        while s < k + g - 1 && x >= self.nodes[s + 1] {
            s += 1;
        }
        s
    }
}

/// Triangular Cox-de Boor recursion: the `degree + 1` basis functions of the
/// given degree that are nonzero on knot span `span`.
fn cox_de_boor<T: Scalar>(knots: &[T], span: usize, degree: usize, x: T, out: &mut [T]) {
    debug_assert_eq!(out.len(), degree + 1);
    out[0] = T::one();
    for d in 1..=degree {
        let mut saved = T::zero();
        for r in 0..d {
            let left = x - knots[span + 1 + r - d];
            let right = knots[span + 1 + r] - x;
            let denom = knots[span + 1 + r] - knots[span + 1 + r - d];
            let temp = out[r] / denom;
            out[r] = saved + right * temp;
            saved = left * temp;
        }
        out[d] = saved;
    }
}

/// Degree-reduction derivative of the `degree + 1` nonzero functions on `span`,
/// given the `degree` nonzero functions one degree lower.
fn bspline_deriv<T: Scalar>(knots: &[T], span: usize, degree: usize, lower: &[T], out: &mut [T]) {
    let kf = T::lit(degree as f64);
    for (j, o) in out.iter_mut().enumerate() {
        let i = span - degree + j;
        let mut v = T::zero();
        if j >= 1 {
            v += kf / (knots[i + degree] - knots[i]) * lower[j - 1];
        }
        if j < degree {
            v -= kf / (knots[i + degree + 1] - knots[i + 1]) * lower[j];
        }
        *o = v;
    }
}

/// All `B` basis values at `x`.
pub fn basis_eval(x: f64, spec: &SplineSpec) -> Vec<f64> {
    let basis = Basis::<f64>::new(*spec);
    let mut out = vec![0.0; basis.count()];
    basis.eval_into(x, &mut out);
    out
}

/// Derivatives of all `B` basis functions at `x`.
pub fn basis_deriv(x: f64, spec: &SplineSpec) -> Vec<f64> {
    let basis = Basis::<f64>::new(*spec);
    let mut out = vec![0.0; basis.count()];
    let mut d = vec![0.0; basis.count()];
    basis.eval_with_deriv_into(x, &mut out, &mut d);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Textbook recursive definition, used as an independent check.
    fn naive_bspline(knots: &[f64], i: usize, k: usize, x: f64, last: usize) -> f64 {
        if k == 0 {
            let inside = knots[i] <= x && x < knots[i + 1];
            // Close the last domain interval on the right.
            let right_end = i == last && x == knots[i + 1];
            return if inside || right_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + k] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * naive_bspline(knots, i, k - 1, x, last);
        }
        let d2 = knots[i + k + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + k + 1] - x) / d2 * naive_bspline(knots, i + 1, k - 1, x, last);
        }
        v
    }

    #[test]
    fn knot_vectors() {
        let s = SplineSpec::new(BasisFamily::BSpline, 2, 0, 0.0, 1.0).unwrap();
        assert!(close(&make_knots(&s).unwrap(), &[0.0, 0.5, 1.0], 1e-15));
        let s = SplineSpec::new(BasisFamily::BSpline, 2, 1, 0.0, 1.0).unwrap();
        assert!(close(&make_knots(&s).unwrap(), &[-0.5, 0.0, 0.5, 1.0, 1.5], 1e-15));
        let s = SplineSpec::bspline(5, 3).unwrap();
        let k = make_knots(&s).unwrap();
        assert_eq!(k.len(), 12);
        for w in k.windows(2) {
            assert!((w[1] - w[0] - 0.4).abs() < 1e-12);
        }
        assert!(matches!(
            make_knots(&SplineSpec::rbf(4).unwrap()),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(SplineSpec::bspline(0, 3).is_err());
        assert!(SplineSpec::new(BasisFamily::Rbf, 3, 0, 1.0, 1.0).is_err());
        assert_eq!(SplineSpec::bspline(5, 3).unwrap().basis_count(), 8);
        assert_eq!(SplineSpec::rbf(4).unwrap().basis_count(), 4);
    }

    #[test]
    fn degree_zero_indicator() {
        let s = SplineSpec::new(BasisFamily::BSpline, 4, 0, 0.0, 1.0).unwrap();
        assert_eq!(basis_eval(0.1, &s), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(basis_eval(1.0, &s), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(basis_deriv(0.3, &s), vec![0.0; 4]);
    }

    #[test]
    fn rbf_closed_form() {
        let s = SplineSpec::rbf(3).unwrap();
        let v = basis_eval(0.0, &s);
        let e = (-1.0f64).exp();
        assert!(close(&v, &[e, 1.0, e], 1e-12));
        // Peak of each bump has zero slope.
        for (m, c) in rbf_centers(&s).into_iter().enumerate() {
            if c > s.lo && c < s.hi {
                assert!(basis_deriv(c, &s)[m].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamps_outside_domain() {
        let s = SplineSpec::bspline(5, 3).unwrap();
        assert_eq!(basis_eval(7.0, &s), basis_eval(1.0, &s));
        assert_eq!(basis_eval(-7.0, &s), basis_eval(-1.0, &s));
        assert!(basis_deriv(7.0, &s).iter().all(|&d| d == 0.0));
        let r = SplineSpec::rbf(4).unwrap();
        assert!(basis_deriv(-3.0, &r).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn matches_recursive_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(g, k) in &[(1, 0), (3, 1), (5, 3), (4, 2), (7, 5)] {
            let s = SplineSpec::bspline(g, k).unwrap();
            let knots = make_knots(&s).unwrap();
            let last = k + g - 1;
            for _ in 0..50 {
                let x: f64 = rng.gen_range(-1.0..=1.0);
                let fast = basis_eval(x, &s);
                let slow: Vec<f64> = (0..g + k).map(|i| naive_bspline(&knots, i, k, x, last)).collect();
                assert!(close(&fast, &slow, 1e-12), "g={g} k={k} x={x}");
            }
        }
    }

    #[test]
    fn partition_of_unity_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for g in 1..10 {
            for k in 0..6 {
                let s = SplineSpec::bspline(g, k).unwrap();
                for x in [-1.0, 1.0].into_iter().chain((0..40).map(|_| rng.gen_range(-1.0..1.0))) {
                    let v = basis_eval(x, &s);
                    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    assert!(v.iter().all(|&b| b >= 0.0));
                }
            }
        }
        let r = SplineSpec::rbf(6).unwrap();
        assert!(basis_eval(0.3, &r).iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn local_support() {
        let s = SplineSpec::bspline(6, 2).unwrap();
        let knots = make_knots(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let v = basis_eval(x, &s);
            for (m, &b) in v.iter().enumerate() {
                let inside = knots[m] <= x && x < knots[m + s.degree + 1];
                if !inside {
                    assert_eq!(b, 0.0, "basis {m} nonzero at {x}");
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let specs = [
            SplineSpec::bspline(5, 3).unwrap(),
            SplineSpec::bspline(3, 1).unwrap(),
            SplineSpec::bspline(8, 2).unwrap(),
            SplineSpec::rbf(4).unwrap(),
            SplineSpec::rbf(9).unwrap(),
        ];
        let step = 1e-5;
        for s in &specs {
            let knots = if s.family == BasisFamily::BSpline {
                make_knots(s).unwrap()
            } else {
                vec![]
            };
            let mut checked = 0;
            while checked < 100 {
                let x: f64 = rng.gen_range(s.lo + 0.01..s.hi - 0.01);
                // Skip points within a step of a knot where a low-degree
                // spline has a kink.
                if knots.iter().any(|&t| (t - x).abs() < 2.0 * step) {
                    continue;
                }
                let up = basis_eval(x + step, s);
                let dn = basis_eval(x - step, s);
                let fd: Vec<f64> = up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * step)).collect();
                assert!(close(&basis_deriv(x, s), &fd, 1e-6), "{s:?} x={x}");
                checked += 1;
            }
        }
    }

    #[test]
    fn f32_matches_f64() {
        let s = SplineSpec::bspline(5, 3).unwrap();
        let b32 = Basis::<f32>::new(s);
        let mut out = vec![0.0f32; 8];
        b32.eval_into(0.37, &mut out);
        let want = basis_eval(0.37f32 as f64, &s);
        for (a, b) in out.iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}
