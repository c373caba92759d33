//! Concrete Lipschitz self-maps of ℝ^d with exact Lipschitz constants,
//! composition and fixed points.
//!
//! Three families are supported: general affine maps `x ↦ Ax + b`,
//! similarities `x ↦ ρUx + b` with `U` orthogonal, and continuous piecewise
//! linear maps of ℝ. All values are immutable after construction and all
//! operations are pure.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Condition-number cutoff above which `I - A` is treated as singular.
pub const FIXED_POINT_COND_LIMIT: f64 = 1e12;

/// Knot cap for piecewise composition; long products of piecewise maps can
/// otherwise blow up silently.
pub const KNOT_CAP: usize = 1_000_000;

/// A point of the ambient space ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: DVector<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("point must have dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinate"));
        }
        Ok(Self { coords: DVector::from_vec(coords) })
    }

    pub fn origin(dim: usize) -> Self {
        Self { coords: DVector::zeros(dim) }
    }

    pub fn scalar(x: f64) -> Self {
        Self::new(vec![x]).expect("finite scalar")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &Point) -> f64 {
        (&self.coords - &other.coords).norm()
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Self { coords: v }
    }
}

/// An affine map `x ↦ Ax + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !linear.is_square() || linear.nrows() != translation.len() {
            return Err(Error::InvalidMap(format!(
                "linear part is {}x{}, translation has length {}",
                linear.nrows(),
                linear.ncols(),
                translation.len()
            )));
        }
        if linear.iter().any(|v| !v.is_finite()) || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affine map entry"));
        }
        Ok(Self { linear, translation })
    }

    /// 1D convenience: `x ↦ a x + b`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, b))
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }
}

/// A similarity `x ↦ ρUx + b` with scale `ρ > 0` and `U` orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    scale: f64,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl Similarity {
    pub fn new(scale: f64, rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidMap(format!("similarity scale must be > 0, got {scale}")));
        }
        if !rotation.is_square() || rotation.nrows() != translation.len() {
            return Err(Error::InvalidMap("rotation/translation dimensions disagree".into()));
        }
        if rotation.iter().any(|v| !v.is_finite()) || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("similarity entry"));
        }
        let gram = rotation.transpose() * &rotation;
        let d = rotation.nrows();
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).abs() > 1e-10 {
                    return Err(Error::InvalidMap("rotation is not orthogonal within 1e-10".into()));
                }
            }
        }
        Ok(Self { scale, rotation, translation })
    }

    /// 1D convenience: `x ↦ a x + b` with `a != 0`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(
            a.abs(),
            DMatrix::from_element(1, 1, a.signum()),
            DVector::from_element(1, b),
        )
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    /// The same map viewed as a general affine map, `A = ρU`.
    pub fn to_affine(&self) -> AffineMap {
        AffineMap {
            linear: &self.rotation * self.scale,
            translation: self.translation.clone(),
        }
    }
}

/// A continuous piecewise linear self-map of ℝ: prescribed values at the
/// knots, linear in between, and the stated slopes outside.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear1D {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear1D {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidMap("need equally many knots and values, at least one".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidMap("knots must be strictly increasing".into()));
        }
        let all = knots
            .iter()
            .chain(values.iter())
            .chain([&left_slope, &right_slope]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("piecewise map parameter"));
        }
        Ok(Self { knots, values, left_slope, right_slope })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        if x <= k[0] {
            return v[0] + self.left_slope * (x - k[0]);
        }
        let last = k.len() - 1;
        if x >= k[last] {
            return v[last] + self.right_slope * (x - k[last]);
        }
        // k[i] < x < k[i+1]
        let i = match k.binary_search_by(|probe| probe.partial_cmp(&x).unwrap()) {
            Ok(i) => return v[i],
            Err(i) => i - 1,
        };
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        v[i] + t * (v[i + 1] - v[i])
    }

    /// Slopes of all pieces, outer pieces first.
    fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        let inner = self
            .knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]));
        [self.left_slope, self.right_slope].into_iter().chain(inner)
    }
}

/// A concrete Lipschitz map, tagged by family so composition can stay exact
/// within each class.
#[derive(Debug, Clone, PartialEq)]
pub enum LipschitzMap {
    Affine(AffineMap),
    Similarity(Similarity),
    Piecewise(PiecewiseLinear1D),
}

impl From<AffineMap> for LipschitzMap {
    fn from(m: AffineMap) -> Self {
        Self::Affine(m)
    }
}

impl From<Similarity> for LipschitzMap {
    fn from(m: Similarity) -> Self {
        Self::Similarity(m)
    }
}

impl From<PiecewiseLinear1D> for LipschitzMap {
    fn from(m: PiecewiseLinear1D) -> Self {
        Self::Piecewise(m)
    }
}

impl LipschitzMap {
    pub fn dim(&self) -> usize {
        match self {
            Self::Affine(m) => m.dim(),
            Self::Similarity(m) => m.dim(),
            Self::Piecewise(_) => 1,
        }
    }

    /// Evaluate `g(x)`.
    pub fn apply(&self, x: &Point) -> Result<Point> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        let v = match self {
            Self::Affine(m) => &m.linear * x.coords() + &m.translation,
            Self::Similarity(m) => (&m.rotation * x.coords()) * m.scale + &m.translation,
            Self::Piecewise(m) => DVector::from_element(1, m.eval(x.coords()[0])),
        };
        Ok(Point::from_vector(v))
    }

    /// The exact Lipschitz constant ρ(g): largest singular value of the
    /// linear part (affine), the scale (similarity), or the largest absolute
    /// slope (piecewise).
    pub fn lipschitz_constant(&self) -> Result<f64> {
        match self {
            Self::Affine(m) => operator_norm(&m.linear),
            Self::Similarity(m) => Ok(m.scale),
            Self::Piecewise(m) => Ok(m.slopes().map(f64::abs).fold(0.0, f64::max)),
        }
    }

    /// The composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &LipschitzMap) -> Result<LipschitzMap> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        use LipschitzMap::*;
        Ok(match (self, other) {
            (Similarity(g), Similarity(h)) => Similarity(crate::maps::Similarity {
                scale: g.scale * h.scale,
                rotation: &g.rotation * &h.rotation,
                translation: (&g.rotation * &h.translation) * g.scale + &g.translation,
            }),
            (Piecewise(_), _) | (_, Piecewise(_)) => {
                Piecewise(compose_piecewise(&self.as_piecewise()?, &other.as_piecewise()?)?)
            }
            (g, h) => {
                let (ga, gb) = g.linear_parts();
                let (ha, hb) = h.linear_parts();
                Affine(AffineMap { linear: &ga * &ha, translation: &ga * &hb + &gb })
            }
        })
    }

    /// The unique fixed point of an affine map or similarity, solving
    /// `(I - A)x = b`.
    pub fn fixed_point(&self) -> Result<Point> {
        let (a, b) = match self {
            Self::Piecewise(_) => {
                return Err(Error::InvalidArgument(
                    "fixed_point is defined for affine maps and similarities".into(),
                ))
            }
            _ => self.linear_parts(),
        };
        let d = a.nrows();
        let m = DMatrix::identity(d, d) - &a;
        let svd = m.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin == 0.0 || smax / smin > FIXED_POINT_COND_LIMIT {
            return Err(Error::SingularSystem(FIXED_POINT_COND_LIMIT));
        }
        let x0 = svd
            .solve(&b, 0.0)
            .map_err(|_| Error::SingularSystem(FIXED_POINT_COND_LIMIT))?;
        let residual = (&a * &x0 + &b - &x0).norm();
        if residual > 1e-9 * (1.0 + x0.norm()) {
            return Err(Error::SingularSystem(FIXED_POINT_COND_LIMIT));
        }
        Ok(Point::from_vector(x0))
    }

    /// Linear part and translation for affine/similarity maps.
    /// Panics on piecewise maps; callers check the variant first.
    pub(crate) fn linear_parts(&self) -> (DMatrix<f64>, DVector<f64>) {
        match self {
            Self::Affine(m) => (m.linear.clone(), m.translation.clone()),
            Self::Similarity(m) => (&m.rotation * m.scale, m.translation.clone()),
            Self::Piecewise(_) => unreachable!("piecewise map has no global linear part"),
        }
    }

    /// View a 1D map of any family as a piecewise linear map.
    fn as_piecewise(&self) -> Result<PiecewiseLinear1D> {
        match self {
            Self::Piecewise(m) => Ok(m.clone()),
            _ if self.dim() == 1 => {
                let (a, b) = self.linear_parts();
                PiecewiseLinear1D::new(vec![0.0], vec![b[0]], a[(0, 0)], a[(0, 0)])
            }
            _ => Err(Error::DimensionMismatch { expected: 1, got: self.dim() }),
        }
    }
}

/// Largest singular value, via the symmetric eigendecomposition of AᵀA.
pub(crate) fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    let ata = a.transpose() * a;
    let eig = ata.try_symmetric_eigen(f64::EPSILON, 1000).ok_or(Error::SvdFailed)?;
    Ok(eig.eigenvalues.max().max(0.0).sqrt())
}

/// Composition `g ∘ h` of piecewise maps: the knot set of the result is the
/// knots of `h` together with the pullbacks of the knots of `g` through `h`.
fn compose_piecewise(g: &PiecewiseLinear1D, h: &PiecewiseLinear1D) -> Result<PiecewiseLinear1D> {
    let mut knots: Vec<f64> = h.knots.clone();

    // Pieces of h as (lo, hi, slope, anchor_x, anchor_y); outer pieces use
    // infinite endpoints.
    let n = h.knots.len();
    let mut pieces = Vec::with_capacity(n + 1);
    pieces.push((f64::NEG_INFINITY, h.knots[0], h.left_slope, h.knots[0], h.values[0]));
    for i in 0..n - 1 {
        let s = (h.values[i + 1] - h.values[i]) / (h.knots[i + 1] - h.knots[i]);
        pieces.push((h.knots[i], h.knots[i + 1], s, h.knots[i], h.values[i]));
    }
    pieces.push((h.knots[n - 1], f64::INFINITY, h.right_slope, h.knots[n - 1], h.values[n - 1]));

    for &kg in &g.knots {
        for &(lo, hi, s, ax, ay) in &pieces {
            if s == 0.0 {
                continue; // constant piece: g is evaluated at a single value
            }
            let x = ax + (kg - ay) / s;
            if x > lo && x < hi {
                knots.push(x);
                if knots.len() > KNOT_CAP {
                    return Err(Error::KnotOverflow(KNOT_CAP));
                }
            }
        }
    }
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = knots.iter().fold(1.0f64, |m, k| m.max(k.abs()));
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);

    let values: Vec<f64> = knots.iter().map(|&k| g.eval(h.eval(k))).collect();
    // Outer slopes: the direction h escapes to selects the outer slope of g.
    let outer = |h_slope: f64, towards_plus: bool| -> f64 {
        if h_slope == 0.0 {
            0.0
        } else {
            let escapes_plus = (h_slope > 0.0) == towards_plus;
            h_slope * if escapes_plus { g.right_slope } else { g.left_slope }
        }
    };
    PiecewiseLinear1D::new(
        knots,
        values,
        outer(h.left_slope, false),
        outer(h.right_slope, true),
    )
}
