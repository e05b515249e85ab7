//! Model phase spaces: flows on tori given by trigonometric polynomials,
//! closed-form flows on R³ (Nosé–Hoover), torus maps and contact data.
//!
//! Torus convention: coordinates in `[0, 2π)^d`, Fourier modes `e^{ik·x}`
//! with integer `k`, normalized measure `dx / (2π)^d`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// One real trigonometric term `cos_coeff·cos(k·x) + sin_coeff·sin(k·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    pub cos: f64,
    pub sin: f64,
}

impl TrigTerm {
    pub fn new(k: Vec<i64>, cos: f64, sin: f64) -> Self {
        TrigTerm { k, cos, sin }
    }
}

/// Reduce an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

fn is_canonical(k: &[i64]) -> bool {
    match k.iter().find(|&&v| v != 0) {
        Some(&v) => v > 0,
        None => true,
    }
}

fn dot_k(k: &[i64], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum()
}

/// Real trigonometric polynomial on `T^d`, stored in canonical form (one
/// term per `±k` pair, first nonzero entry of `k` positive).
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn from_terms(dim: usize, terms: &[TrigTerm]) -> Result<Self> {
        let mut merged: BTreeMap<Vec<i64>, (f64, f64)> = BTreeMap::new();
        for t in terms {
            if t.k.len() != dim {
                return Err(Error::arg(format!(
                    "trig term wave vector {:?} has length {}, expected {dim}",
                    t.k,
                    t.k.len()
                )));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(Error::arg("trig term coefficients must be finite"));
            }
            let (k, a, b) = if is_canonical(&t.k) {
                (t.k.clone(), t.cos, t.sin)
            } else {
                (t.k.iter().map(|v| -v).collect(), t.cos, -t.sin)
            };
            let b = if k.iter().all(|&v| v == 0) { 0.0 } else { b };
            let e = merged.entry(k).or_insert((0.0, 0.0));
            e.0 += a;
            e.1 += b;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, (a, b))| *a != 0.0 || *b != 0.0)
            .map(|(k, (a, b))| TrigTerm { k, cos: a, sin: b })
            .collect();
        Ok(TrigPoly { dim, terms })
    }

    /// Build from complex Fourier coefficients, which must be Hermitian
    /// symmetric (`c_{-k} = conj(c_k)`).
    pub fn from_coefficients(dim: usize, coeffs: &[(Vec<i64>, C64)]) -> Result<Self> {
        let mut map: BTreeMap<Vec<i64>, C64> = BTreeMap::new();
        let mut scale = 0.0f64;
        for (k, c) in coeffs {
            if k.len() != dim {
                return Err(Error::arg(format!("wave vector {k:?} has wrong dimension")));
            }
            *map.entry(k.clone()).or_insert(C64::new(0.0, 0.0)) += c;
            scale = scale.max(c.norm());
        }
        let tol = 1e-14 * scale.max(1.0);
        let mut terms = Vec::new();
        for (k, c) in &map {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let partner = map.get(&neg).copied().unwrap_or(C64::new(0.0, 0.0));
            if (partner - c.conj()).norm() > tol {
                return Err(Error::arg(format!(
                    "coefficients are not Hermitian symmetric at k = {k:?}; the field would not be real"
                )));
            }
            if k.iter().all(|&v| v == 0) {
                terms.push(TrigTerm { k: k.clone(), cos: c.re, sin: 0.0 });
            } else if is_canonical(k) {
                terms.push(TrigTerm { k: k.clone(), cos: 2.0 * c.re, sin: -2.0 * c.im });
            }
        }
        Self::from_terms(dim, &terms)
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::from_terms(dim, &[TrigTerm::new(vec![0; dim], value, 0.0)]).expect("valid constant")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let ph = dot_k(&t.k, x);
                t.cos * ph.cos() + t.sin * ph.sin()
            })
            .sum()
    }

    /// Evaluate through the complex Fourier series, summing each `±k` pair
    /// as `c e^{ikx} + conj(c e^{ikx})` so the imaginary part cancels exactly.
    pub fn eval_fourier(&self, x: &[f64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, c) in self.coefficients() {
            if !is_canonical(&k) {
                continue;
            }
            let z = c * C64::from_polar(1.0, dot_k(&k, x));
            if k.iter().all(|&v| v == 0) {
                acc += C64::new(z.re, 0.0);
            } else {
                acc += z + z.conj();
            }
        }
        acc
    }

    /// `∂_j` of the polynomial.
    pub fn partial(&self, j: usize, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let kj = t.k[j] as f64;
                if kj == 0.0 {
                    return 0.0;
                }
                let ph = dot_k(&t.k, x);
                kj * (-t.cos * ph.sin() + t.sin * ph.cos())
            })
            .sum()
    }

    /// Complex Fourier coefficients, both members of every `±k` pair.
    pub fn coefficients(&self) -> Vec<(Vec<i64>, C64)> {
        let mut out = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.k.iter().all(|&v| v == 0) {
                out.push((t.k.clone(), C64::new(t.cos, 0.0)));
            } else {
                let c = C64::new(t.cos / 2.0, -t.sin / 2.0);
                out.push((t.k.clone(), c));
                out.push((t.k.iter().map(|v| -v).collect(), c.conj()));
            }
        }
        out
    }

    pub fn max_harmonic(&self) -> i64 {
        self.terms.iter().flat_map(|t| t.k.iter().map(|v| v.abs())).max().unwrap_or(0)
    }

    /// Sum of coefficient magnitudes; bounds `sup |p|`.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.hypot(t.sin)).sum()
    }
}

/// Closed-form vector fields on R³.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClosedForm {
    /// `W = x₂∂₁ + (−x₁ + x₂x₃)∂₂ + (1 − x₂²)∂₃`
    NoseHooverW,
    /// `V = e^{|x|²/2} W`, the Reeb field of `α = e^{−|x|²/2}(x₂dx₁ + dx₃)`.
    NoseHooverV,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldRepr {
    TorusTrig(Vec<TrigPoly>),
    ClosedFormR3(ClosedForm),
}

/// A vector field on a model phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    name: String,
    repr: FieldRepr,
}

impl fmt::Display for FlowField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (dim {})", self.name, self.dimension())
    }
}

impl FlowField {
    /// Field on `T^d` from per-component lists of `(k, cos, sin)` triples.
    pub fn torus(name: impl Into<String>, dim: usize, components: &[Vec<TrigTerm>]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::arg(format!("torus dimension must be 1..=3, got {dim}")));
        }
        if components.len() != dim {
            return Err(Error::arg(format!(
                "field on T^{dim} needs {dim} components, got {}",
                components.len()
            )));
        }
        let polys = components.iter().map(|c| TrigPoly::from_terms(dim, c)).collect::<Result<Vec<_>>>()?;
        Ok(FlowField { name: name.into(), repr: FieldRepr::TorusTrig(polys) })
    }

    pub fn torus_from_polys(name: impl Into<String>, polys: Vec<TrigPoly>) -> Result<Self> {
        let dim = polys.len();
        if !(1..=3).contains(&dim) || polys.iter().any(|p| p.dim() != dim) {
            return Err(Error::arg("torus field components must all live on T^d with d = component count"));
        }
        Ok(FlowField { name: name.into(), repr: FieldRepr::TorusTrig(polys) })
    }

    /// `∂_θ` on the circle.
    pub fn rotation() -> Self {
        Self::torus("rotation", 1, &[vec![TrigTerm::new(vec![0], 1.0, 0.0)]]).unwrap()
    }

    /// Constant field `a∂₁ + b∂₂` on `T²`.
    pub fn translation(a: f64, b: f64) -> Self {
        Self::torus(
            "translation",
            2,
            &[vec![TrigTerm::new(vec![0, 0], a, 0.0)], vec![TrigTerm::new(vec![0, 0], b, 0.0)]],
        )
        .unwrap()
    }

    /// `(sin x₂) ∂₁` on `T²`.
    pub fn sin_shear() -> Self {
        Self::torus("sin_shear", 2, &[vec![TrigTerm::new(vec![0, 1], 0.0, 1.0)], vec![]]).unwrap()
    }

    /// `(a + sin x₂) ∂₁ + b ∂₂` on `T²`: shear riding on a translation.
    pub fn shear_translation(a: f64, b: f64) -> Self {
        Self::torus(
            "shear_translation",
            2,
            &[
                vec![TrigTerm::new(vec![0, 0], a, 0.0), TrigTerm::new(vec![0, 1], 0.0, 1.0)],
                vec![TrigTerm::new(vec![0, 0], b, 0.0)],
            ],
        )
        .unwrap()
    }

    /// Divergence-free variable-coefficient benchmark on `T²`:
    /// `(1 + ½ sin x₂) ∂₁ + (0.7 + ½ cos x₁) ∂₂`.
    pub fn t2_benchmark() -> Self {
        Self::torus(
            "t2_benchmark",
            2,
            &[
                vec![TrigTerm::new(vec![0, 0], 1.0, 0.0), TrigTerm::new(vec![0, 1], 0.0, 0.5)],
                vec![TrigTerm::new(vec![0, 0], 0.7, 0.0), TrigTerm::new(vec![1, 0], 0.5, 0.0)],
            ],
        )
        .unwrap()
    }

    /// `(1 + a sin θ) ∂_θ` on the circle; compressible for `a ≠ 0`.
    pub fn variable_circle(a: f64) -> Self {
        Self::torus(
            "variable_circle",
            1,
            &[vec![TrigTerm::new(vec![0], 1.0, 0.0), TrigTerm::new(vec![1], 0.0, a)]],
        )
        .unwrap()
    }

    /// Constant vertical field `∂₃` on `T³`.
    pub fn vertical_t3() -> Self {
        Self::torus("vertical_t3", 3, &[vec![], vec![], vec![TrigTerm::new(vec![0, 0, 0], 1.0, 0.0)]]).unwrap()
    }

    pub fn nose_hoover_w() -> Self {
        FlowField { name: "nose_hoover_w".into(), repr: FieldRepr::ClosedFormR3(ClosedForm::NoseHooverW) }
    }

    pub fn nose_hoover_v() -> Self {
        FlowField { name: "nose_hoover_v".into(), repr: FieldRepr::ClosedFormR3(ClosedForm::NoseHooverV) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn repr(&self) -> &FieldRepr {
        &self.repr
    }

    pub fn dimension(&self) -> usize {
        match &self.repr {
            FieldRepr::TorusTrig(p) => p.len(),
            FieldRepr::ClosedFormR3(_) => 3,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.repr, FieldRepr::TorusTrig(_))
    }

    /// Component polynomials for torus fields.
    pub fn components(&self) -> Option<&[TrigPoly]> {
        match &self.repr {
            FieldRepr::TorusTrig(p) => Some(p),
            FieldRepr::ClosedFormR3(_) => None,
        }
    }

    /// Largest `|k|_∞` among all component harmonics (0 for R³ fields).
    pub fn max_harmonic(&self) -> i64 {
        self.components().map(|c| c.iter().map(TrigPoly::max_harmonic).max().unwrap_or(0)).unwrap_or(0)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::arg(format!(
                "point has dimension {}, field {} has dimension {}",
                x.len(),
                self.name,
                self.dimension()
            )));
        }
        Ok(())
    }

    /// Velocity at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            FieldRepr::TorusTrig(p) => p.iter().map(|c| c.eval(x)).collect(),
            FieldRepr::ClosedFormR3(cf) => {
                let w = nose_hoover_w(x);
                match cf {
                    ClosedForm::NoseHooverW => w.to_vec(),
                    ClosedForm::NoseHooverV => {
                        let g = (0.5 * norm_sq(x)).exp();
                        w.iter().map(|v| g * v).collect()
                    }
                }
            }
        }
    }

    /// Velocity through the complex Fourier series (torus fields only).
    pub fn eval_fourier(&self, x: &[f64]) -> Result<Vec<C64>> {
        self.check_dim(x)?;
        match &self.repr {
            FieldRepr::TorusTrig(p) => Ok(p.iter().map(|c| c.eval_fourier(x)).collect()),
            FieldRepr::ClosedFormR3(_) => Err(Error::arg("closed-form fields have no Fourier series")),
        }
    }

    /// Jacobian `J[i][j] = ∂_j V_i`.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(self.jacobian_unchecked(x))
    }

    pub(crate) fn jacobian_unchecked(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match &self.repr {
            FieldRepr::TorusTrig(p) => {
                let d = p.len();
                p.iter().map(|c| (0..d).map(|j| c.partial(j, x)).collect()).collect()
            }
            FieldRepr::ClosedFormR3(cf) => {
                let jw = nose_hoover_w_jacobian(x);
                match cf {
                    ClosedForm::NoseHooverW => jw.iter().map(|r| r.to_vec()).collect(),
                    ClosedForm::NoseHooverV => {
                        let g = (0.5 * norm_sq(x)).exp();
                        let w = nose_hoover_w(x);
                        (0..3).map(|i| (0..3).map(|j| g * (x[j] * w[i] + jw[i][j])).collect()).collect()
                    }
                }
            }
        }
    }

    /// Divergence with respect to the flat volume.
    pub fn divergence(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.repr {
            FieldRepr::TorusTrig(p) => p.iter().enumerate().map(|(j, c)| c.partial(j, x)).sum(),
            FieldRepr::ClosedFormR3(ClosedForm::NoseHooverW) => x[2],
            // div(gW) = g (x·W + div W) and x·W = x₃
            FieldRepr::ClosedFormR3(ClosedForm::NoseHooverV) => (0.5 * norm_sq(x)).exp() * 2.0 * x[2],
        })
    }

    /// `max_x ½ div V(x)` on the torus: grid search followed by coordinate
    /// Newton refinement of the best grid points.
    pub fn max_half_divergence(&self) -> Result<f64> {
        let polys = self.components().ok_or_else(|| Error::arg("max_half_divergence needs a torus field"))?;
        let d = polys.len();
        let div = |x: &[f64]| -> f64 { 0.5 * polys.iter().enumerate().map(|(j, c)| c.partial(j, x)).sum::<f64>() };
        if polys.iter().all(|p| p.terms().iter().all(|t| t.k.iter().all(|&v| v == 0))) {
            return Ok(0.0);
        }
        let n: usize = match d {
            1 => 1024,
            2 => 128,
            _ => 32,
        };
        let h = TWO_PI / n as f64;
        let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
        let total = n.pow(d as u32);
        for idx in 0..total {
            let mut x = vec![0.0; d];
            let mut r = idx;
            for xi in x.iter_mut() {
                *xi = (r % n) as f64 * h;
                r /= n;
            }
            let v = div(&x);
            best.push((v, x));
            if best.len() > 64 {
                best.sort_by(|a, b| b.0.total_cmp(&a.0));
                best.truncate(8);
            }
        }
        best.sort_by(|a, b| b.0.total_cmp(&a.0));
        best.truncate(8);
        let mut out = f64::NEG_INFINITY;
        for (_, mut x) in best {
            // ascent by golden-section line search along each coordinate
            for _ in 0..20 {
                for j in 0..d {
                    let (mut a, mut b) = (x[j] - h, x[j] + h);
                    let gr = 0.5 * (5f64.sqrt() - 1.0);
                    for _ in 0..60 {
                        let c = b - gr * (b - a);
                        let e = a + gr * (b - a);
                        let mut xc = x.clone();
                        xc[j] = c;
                        let mut xe = x.clone();
                        xe[j] = e;
                        if div(&xc) > div(&xe) {
                            b = e;
                        } else {
                            a = c;
                        }
                    }
                    let mut cand = x.clone();
                    cand[j] = 0.5 * (a + b);
                    if div(&cand) >= div(&x) {
                        x = cand;
                    }
                }
            }
            out = out.max(div(&x));
        }
        Ok(out)
    }

    /// `sup |V|` bound for torus fields (Euclidean norm of the per-component
    /// coefficient ℓ¹ sums).
    pub fn speed_bound(&self) -> Option<f64> {
        self.components().map(|c| c.iter().map(|p| p.coefficient_l1().powi(2)).sum::<f64>().sqrt())
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn nose_hoover_w(x: &[f64]) -> [f64; 3] {
    [x[1], -x[0] + x[1] * x[2], 1.0 - x[1] * x[1]]
}

fn nose_hoover_w_jacobian(x: &[f64]) -> [[f64; 3]; 3] {
    [[0.0, 1.0, 0.0], [-1.0, x[2], x[1]], [0.0, -2.0 * x[1], 0.0]]
}

/// Torus map `x ↦ A (x + p(x)) mod 2π` with `A ∈ GL(2, Z)`, `|det A| = 1`,
/// and an optional trigonometric displacement `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSystem {
    name: String,
    matrix: [[i64; 2]; 2],
    perturbation: Option<[TrigPoly; 2]>,
}

impl MapSystem {
    pub fn new(name: impl Into<String>, matrix: [[i64; 2]; 2], perturbation: Option<[TrigPoly; 2]>) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det.abs() != 1 {
            return Err(Error::arg(format!("map matrix must have determinant ±1, got {det}")));
        }
        if let Some(p) = &perturbation {
            if p.iter().any(|c| c.dim() != 2) {
                return Err(Error::arg("map perturbation must be a field on T²"));
            }
        }
        let m = MapSystem { name: name.into(), matrix, perturbation };
        let min_det = m.min_displacement_jacobian_det(64);
        if min_det <= 1e-8 {
            return Err(Error::arg(format!(
                "perturbation too large: det(I + Dp) reaches {min_det:.3e} on the verification grid"
            )));
        }
        Ok(m)
    }

    /// Arnold's cat map `[[2, 1], [1, 1]]`.
    pub fn cat_map() -> Self {
        Self::new("cat_map", [[2, 1], [1, 1]], None).unwrap()
    }

    /// Cat map composed with the area-preserving shear `x₂ ↦ x₂ + δ sin x₁`.
    pub fn perturbed_cat_map(delta: f64) -> Result<Self> {
        let p1 = TrigPoly::from_terms(2, &[])?;
        let p2 = TrigPoly::from_terms(2, &[TrigTerm::new(vec![1, 0], 0.0, delta)])?;
        Self::new("perturbed_cat_map", [[2, 1], [1, 1]], Some([p1, p2]))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        self.matrix
    }

    pub fn perturbation(&self) -> Option<&[TrigPoly; 2]> {
        self.perturbation.as_ref()
    }

    fn displacement(&self, x: &[f64]) -> [f64; 2] {
        match &self.perturbation {
            Some(p) => [p[0].eval(x), p[1].eval(x)],
            None => [0.0, 0.0],
        }
    }

    fn displacement_jacobian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        match &self.perturbation {
            Some(p) => [[p[0].partial(0, x), p[0].partial(1, x)], [p[1].partial(0, x), p[1].partial(1, x)]],
            None => [[0.0; 2]; 2],
        }
    }

    fn min_displacement_jacobian_det(&self, n: usize) -> f64 {
        if self.perturbation.is_none() {
            return 1.0;
        }
        let h = TWO_PI / n as f64;
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let x = [i as f64 * h, j as f64 * h];
                let d = self.displacement_jacobian(&x);
                let det = (1.0 + d[0][0]) * (1.0 + d[1][1]) - d[0][1] * d[1][0];
                m = m.min(det);
            }
        }
        m
    }

    /// Image of `x` reduced into `[0, 2π)²`.
    pub fn apply(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != 2 {
            return Err(Error::arg("torus maps act on points of T²"));
        }
        let y = self.apply_lifted(x);
        Ok([wrap_angle(y[0]), wrap_angle(y[1])])
    }

    /// Image without reduction mod 2π.
    pub fn apply_lifted(&self, x: &[f64]) -> [f64; 2] {
        let p = self.displacement(x);
        let u = [x[0] + p[0], x[1] + p[1]];
        let a = &self.matrix;
        [a[0][0] as f64 * u[0] + a[0][1] as f64 * u[1], a[1][0] as f64 * u[0] + a[1][1] as f64 * u[1]]
    }

    /// Jacobian `A (I + Dp(x))`.
    pub fn jacobian(&self, x: &[f64]) -> Result<[[f64; 2]; 2]> {
        if x.len() != 2 {
            return Err(Error::arg("torus maps act on points of T²"));
        }
        let d = self.displacement_jacobian(x);
        let b = [[1.0 + d[0][0], d[0][1]], [d[1][0], 1.0 + d[1][1]]];
        let a = &self.matrix;
        let mut j = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] = a[r][0] as f64 * b[0][c] + a[r][1] as f64 * b[1][c];
            }
        }
        Ok(j)
    }
}

/// Coefficients of a 1-form on R³ at a point.
#[derive(Clone)]
pub enum OneForm {
    /// `α = e^{−|x|²/2}(x₂dx₁ + dx₃)`
    NoseHoover,
    Constant([f64; 3]),
    Custom(Arc<dyn Fn(&[f64]) -> [f64; 3] + Send + Sync>),
}

impl fmt::Debug for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OneForm::NoseHoover => write!(f, "NoseHoover"),
            OneForm::Constant(c) => write!(f, "Constant({c:?})"),
            OneForm::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl OneForm {
    pub fn eval(&self, x: &[f64]) -> [f64; 3] {
        match self {
            OneForm::NoseHoover => {
                let g = (-0.5 * norm_sq(x)).exp();
                [g * x[1], 0.0, g]
            }
            OneForm::Constant(c) => *c,
            OneForm::Custom(f) => f(x),
        }
    }
}

/// A 1-form together with its Reeb-field candidate.
#[derive(Clone, Debug)]
pub struct ContactStructure {
    pub one_form: OneForm,
    pub reference_field: FlowField,
}

impl ContactStructure {
    pub fn nose_hoover() -> Self {
        ContactStructure { one_form: OneForm::NoseHoover, reference_field: FlowField::nose_hoover_v() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContactReport {
    /// `max |α(V) − 1|`
    pub max_alpha_v_error: f64,
    /// `max ‖dα(V, ·)‖` over the samples (Euclidean norm of the covector,
    /// i.e. the worst case over unit test vectors).
    pub max_dalpha_v: f64,
    pub points: usize,
}

/// Check `α(V) = 1` and `dα(V, ·) = 0` at the sample points. `dα` comes
/// from Richardson-extrapolated central differences with base step `h`.
pub fn verify_contact(cs: &ContactStructure, points: &[Vec<f64>], h: f64) -> Result<ContactReport> {
    if cs.reference_field.dimension() != 3 {
        return Err(Error::arg("contact verification is defined on three-dimensional phase spaces"));
    }
    let mut max_a = 0.0f64;
    let mut max_d = 0.0f64;
    for x in points {
        let v = cs.reference_field.eval(x)?;
        let a = cs.one_form.eval(x);
        if v.iter().chain(a.iter()).any(|z| !z.is_finite()) {
            return Err(Error::Evaluation(format!("non-finite field or form value at {x:?}")));
        }
        let av: f64 = a.iter().zip(&v).map(|(p, q)| p * q).sum();
        max_a = max_a.max((av - 1.0).abs());

        // grad[i][j] = ∂_i α_j
        let mut grad = [[0.0; 3]; 3];
        for (i, row) in grad.iter_mut().enumerate() {
            let diff = |step: f64| -> [f64; 3] {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                let ap = cs.one_form.eval(&xp);
                let am = cs.one_form.eval(&xm);
                [(ap[0] - am[0]) / (2.0 * step), (ap[1] - am[1]) / (2.0 * step), (ap[2] - am[2]) / (2.0 * step)]
            };
            let d1 = diff(h);
            let d2 = diff(0.5 * h);
            for j in 0..3 {
                row[j] = (4.0 * d2[j] - d1[j]) / 3.0;
            }
        }
        // (ι_V dα)_j = Σ_i V^i (∂_i α_j − ∂_j α_i)
        let cov: Vec<f64> = (0..3).map(|j| (0..3).map(|i| v[i] * (grad[i][j] - grad[j][i])).sum()).collect();
        let n = norm_sq(&cov).sqrt();
        if !n.is_finite() {
            return Err(Error::Evaluation(format!("non-finite dα at {x:?}")));
        }
        max_d = max_d.max(n);
    }
    Ok(ContactReport { max_alpha_v_error: max_a, max_dalpha_v: max_d, points: points.len() })
}
