//! Laplace-type asymptotics of Gibbs averages `<g> = int g e^{-lambda psi} / int e^{-lambda psi}`
//! in low dimension, with an adaptive quadrature oracle.
//!
//! The leading estimate is `g(z0) + (1/(2 lambda)) grad^2 g(z0) : [grad^2 psi(z0)]^-1`,
//! valid when `grad g(z0) = 0`; its error is `O(lambda^-2)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Field = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type HessianField = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Step for finite-difference gradients and Hessians.
const FD_STEP: f64 = 1e-3;

/// Weight `e^{-lambda (psi - psi0)}` allowed on the boundary of a quadrature box.
pub const BOUNDARY_WEIGHT_LIMIT: f64 = 1e-16;

/// Errors below this are indistinguishable from quadrature noise.
const FIT_NOISE_FLOOR: f64 = 1e-11;

/// An observable `g` and a potential `psi` with a nondegenerate minimum at `z0`.
pub struct ScalarFieldPair {
    dim: usize,
    g: Field,
    psi: Field,
    z0: Vec<f64>,
    g_hessian: Option<HessianField>,
    psi_hessian: Option<HessianField>,
}

impl std::fmt::Debug for ScalarFieldPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarFieldPair").field("dim", &self.dim).field("z0", &self.z0).finish()
    }
}

impl ScalarFieldPair {
    /// Validates the stationarity of `psi` and `g` at `z0` and the definiteness of `grad^2 psi(z0)`.
    pub fn new(g: Field, psi: Field, z0: Vec<f64>) -> Result<Self> {
        Self::with_hessians(g, psi, z0, None, None)
    }

    pub fn with_hessians(
        g: Field,
        psi: Field,
        z0: Vec<f64>,
        g_hessian: Option<HessianField>,
        psi_hessian: Option<HessianField>,
    ) -> Result<Self> {
        let dim = z0.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidField(format!("dimension must be 1..=3, got {dim}")));
        }
        let pair = ScalarFieldPair {
            dim,
            g,
            psi,
            z0,
            g_hessian,
            psi_hessian,
        };
        let scale = |f: &Field| 1.0 + f(&pair.z0).abs();
        let gp = gradient(&pair.psi, &pair.z0);
        if gp.iter().any(|c| c.abs() > 1e-6 * scale(&pair.psi)) {
            return Err(Error::InvalidField(format!("psi is not stationary at z0: gradient {gp:?}")));
        }
        let gg = gradient(&pair.g, &pair.z0);
        if gg.iter().any(|c| c.abs() > 1e-6 * scale(&pair.g)) {
            return Err(Error::InvalidField(format!(
                "the estimator needs grad g(z0) = 0, got {gg:?}"
            )));
        }
        pair.psi_curvature_inverse()?;
        Ok(pair)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn g(&self, z: &[f64]) -> f64 {
        (self.g)(z)
    }

    pub fn psi(&self, z: &[f64]) -> f64 {
        (self.psi)(z)
    }

    pub fn g_hessian(&self) -> DMatrix<f64> {
        match &self.g_hessian {
            Some(h) => h(&self.z0),
            None => hessian(&self.g, &self.z0),
        }
    }

    pub fn psi_hessian(&self) -> DMatrix<f64> {
        match &self.psi_hessian {
            Some(h) => h(&self.z0),
            None => hessian(&self.psi, &self.z0),
        }
    }

    fn psi_curvature_inverse(&self) -> Result<DMatrix<f64>> {
        let h = self.psi_hessian();
        let h = (&h + h.transpose()) * 0.5;
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidField(format!("Hessian of psi at z0 is not positive definite: {h}")))?;
        Ok(chol.inverse())
    }

    /// Smallest curvature of `psi` at `z0`.
    pub fn min_curvature(&self) -> f64 {
        let h = self.psi_hessian();
        ((&h + h.transpose()) * 0.5).symmetric_eigenvalues().min()
    }
}

fn gradient(f: &Field, z: &[f64]) -> Vec<f64> {
    let h = FD_STEP;
    (0..z.len())
        .map(|i| {
            let at = |s: f64| {
                let mut p = z.to_vec();
                p[i] += s;
                f(&p)
            };
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
        })
        .collect()
}

fn hessian(f: &Field, z: &[f64]) -> DMatrix<f64> {
    let h = FD_STEP;
    let n = z.len();
    let at = |di: (usize, f64), dj: (usize, f64)| {
        let mut p = z.to_vec();
        p[di.0] += di.1;
        p[dj.0] += dj.1;
        f(&p)
    };
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let f0 = f(z);
        m[(i, i)] = (-at((i, 2.0 * h), (i, 0.0)) + 16.0 * at((i, h), (i, 0.0)) - 30.0 * f0
            + 16.0 * at((i, -h), (i, 0.0))
            - at((i, -2.0 * h), (i, 0.0)))
            / (12.0 * h * h);
        for j in 0..i {
            let v = (at((i, h), (j, h)) - at((i, h), (j, -h)) - at((i, -h), (j, h)) + at((i, -h), (j, -h)))
                / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")))
    }
}

/// Leading-order Laplace estimate of the Gibbs average of `g`.
pub fn laplace_ratio_estimate(f: &ScalarFieldPair, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let inv = f.psi_curvature_inverse()?;
    let hg = f.g_hessian();
    let contraction: f64 = hg.iter().zip(inv.iter()).map(|(a, b)| a * b).sum();
    Ok(f.g(&f.z0) + contraction / (2.0 * lambda))
}

/// Axis-aligned integration box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    /// Cube about `z0` wide enough that the Gaussian approximation of the
    /// weight drops far below [`BOUNDARY_WEIGHT_LIMIT`] at the faces.
    pub fn around(f: &ScalarFieldPair, lambda: f64) -> Self {
        let half = (90.0 / (lambda * f.min_curvature())).sqrt();
        Domain {
            lower: f.z0.iter().map(|z| z - half).collect(),
            upper: f.z0.iter().map(|z| z + half).collect(),
        }
    }
}

// Kronrod 15-point nodes and weights; every other node carries a Gauss 7-point weight.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: u32 = 40;

/// Integrates a pair of functions together over `[a, b]` by recursive
/// Gauss-Kronrod bisection, to absolute tolerance `tol` on each component.
fn adaptive_pair(f: &mut dyn FnMut(f64) -> [f64; 2], a: f64, b: f64, tol: f64) -> [f64; 2] {
    fn rule(f: &mut dyn FnMut(f64) -> [f64; 2], a: f64, b: f64) -> ([f64; 2], f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut values = [[[0.0; 2]; 2]; 8];
        for k in 0..8 {
            values[k][0] = f(c - h * XGK[k]);
            values[k][1] = if k == 7 { values[k][0] } else { f(c + h * XGK[k]) };
        }
        let mut result = [0.0; 2];
        let mut err: f64 = 0.0;
        for m in 0..2 {
            let pair = |k: usize| if k == 7 { values[k][0][m] } else { values[k][0][m] + values[k][1][m] };
            let kron: f64 = (0..8).map(|k| WGK[k] * pair(k)).sum();
            let gauss: f64 = (0..4).map(|k| WG[k] * pair(2 * k + 1)).sum();
            let mean = 0.5 * kron;
            let spread: f64 = (0..8)
                .map(|k| {
                    let d = |v: f64| (v - mean).abs();
                    WGK[k] * if k == 7 { d(values[k][0][m]) } else { d(values[k][0][m]) + d(values[k][1][m]) }
                })
                .sum::<f64>()
                * h;
            // Error scaling as in QUADPACK's qk15.
            let mut e = (h * (kron - gauss)).abs();
            if spread > 0.0 && e > 0.0 {
                e = spread * (1.0f64).min((200.0 * e / spread).powf(1.5));
            }
            err = err.max(e);
            result[m] = h * kron;
        }
        (result, err)
    }
    fn recurse(f: &mut dyn FnMut(f64) -> [f64; 2], a: f64, b: f64, tol: f64, depth: u32) -> [f64; 2] {
        let (v, err) = rule(f, a, b);
        if err <= tol || depth >= MAX_DEPTH {
            return v;
        }
        let m = 0.5 * (a + b);
        let l = recurse(f, a, m, 0.5 * tol, depth + 1);
        let r = recurse(f, m, b, 0.5 * tol, depth + 1);
        [l[0] + r[0], l[1] + r[1]]
    }
    recurse(f, a, b, tol, 0)
}

/// Nested tensor-product integration of `[g w, w]` with `w = e^{-lambda (psi - psi0)}`.
fn integrate_weighted(f: &ScalarFieldPair, lambda: f64, domain: &Domain, tol: f64) -> [f64; 2] {
    let psi0 = f.psi(&f.z0);
    let mut point = f.z0.clone();
    nested(f, lambda, psi0, domain, 0, &mut point, tol)
}

fn nested(
    f: &ScalarFieldPair,
    lambda: f64,
    psi0: f64,
    domain: &Domain,
    axis: usize,
    point: &mut Vec<f64>,
    tol: f64,
) -> [f64; 2] {
    let (a, b) = (domain.lower[axis], domain.upper[axis]);
    let last = axis + 1 == f.dim;
    let inner_tol = 0.1 * tol / (b - a);
    let mut integrand = |z: f64| -> [f64; 2] {
        point[axis] = z;
        if last {
            let w = (-lambda * (f.psi(point) - psi0)).exp();
            [f.g(point) * w, w]
        } else {
            nested(f, lambda, psi0, domain, axis + 1, point, inner_tol)
        }
    };
    adaptive_pair(&mut integrand, a, b, tol)
}

/// Largest Boltzmann weight found on a grid of points over the faces of `domain`.
pub fn boundary_weight(f: &ScalarFieldPair, lambda: f64, domain: &Domain) -> f64 {
    const SAMPLES: usize = 41;
    let psi0 = f.psi(&f.z0);
    let d = f.dim;
    let mut worst: f64 = 0.0;
    let per_face = SAMPLES.pow((d - 1) as u32);
    for axis in 0..d {
        for side in [&domain.lower, &domain.upper] {
            for idx in 0..per_face {
                let mut rem = idx;
                let mut z = vec![0.0; d];
                for k in 0..d {
                    if k == axis {
                        z[k] = side[k];
                    } else {
                        let t = (rem % SAMPLES) as f64 / (SAMPLES - 1) as f64;
                        rem /= SAMPLES;
                        z[k] = domain.lower[k] + t * (domain.upper[k] - domain.lower[k]);
                    }
                }
                worst = worst.max((-lambda * (f.psi(&z) - psi0)).exp());
            }
        }
    }
    worst
}

/// Gibbs average of `g` by adaptive quadrature over `domain`, to absolute
/// accuracy of about 1e-12.
pub fn quadrature_ratio_oracle(f: &ScalarFieldPair, lambda: f64, domain: &Domain) -> Result<f64> {
    check_lambda(lambda)?;
    if domain.lower.len() != f.dim || domain.upper.len() != f.dim {
        return Err(Error::InvalidArgument("domain dimension does not match the field".into()));
    }
    if (0..f.dim).any(|k| !(domain.lower[k] < f.z0[k] && f.z0[k] < domain.upper[k])) {
        return Err(Error::InvalidArgument("domain must contain z0 in its interior".into()));
    }
    let weight = boundary_weight(f, lambda, domain);
    if weight > BOUNDARY_WEIGHT_LIMIT {
        return Err(Error::DomainTooSmall { weight });
    }
    // Tolerances relative to the Gaussian estimate of the partition function.
    let det = f.psi_hessian().determinant();
    let z_scale = (2.0 * std::f64::consts::PI / lambda).powf(0.5 * f.dim as f64) / det.sqrt();
    let [num, den] = integrate_weighted(f, lambda, domain, 1e-14 * z_scale);
    Ok(num / den)
}

/// Least-squares slope of `ln |estimate - oracle|` against `ln lambda`.
pub fn error_order_fit(f: &ScalarFieldPair, lambdas: &[f64]) -> Result<f64> {
    if lambdas.len() < 4 {
        return Err(Error::InvalidArgument("need at least 4 lambda values".into()));
    }
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0 && hi >= 10.0 * lo) {
        return Err(Error::InvalidArgument("lambda values must span at least one decade".into()));
    }
    let mut xs = Vec::with_capacity(lambdas.len());
    let mut ys = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let err = (laplace_ratio_estimate(f, lambda)? - quadrature_ratio_oracle(f, lambda, &Domain::around(f, lambda))?).abs();
        if err < FIT_NOISE_FLOOR {
            return Err(Error::DegenerateFit { lambda });
        }
        xs.push(lambda.ln());
        ys.push(err.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Named test fields, all with `z0 = 0` and harmonic `psi = |z|^2 / 2`.
///
/// * `const`: `g = 1`
/// * `z2`: `g = z^2`
/// * `cos`: `g = cos z - 1`
/// * `quartic`: `g = z^4`
/// * `product2d`: `g = z1^2 z2^2`
/// * `cos3d`: `g = cos z1 + cos z2 + cos z3 - 3` with an anisotropic `psi`
pub fn named_field(name: &str) -> Result<ScalarFieldPair> {
    let harmonic = |d: usize| -> Field { Box::new(move |z: &[f64]| z[..d].iter().map(|x| 0.5 * x * x).sum()) };
    let field = match name {
        "const" => ScalarFieldPair::new(Box::new(|_| 1.0), harmonic(1), vec![0.0])?,
        "z2" => ScalarFieldPair::new(Box::new(|z| z[0] * z[0]), harmonic(1), vec![0.0])?,
        "cos" => ScalarFieldPair::new(Box::new(|z| z[0].cos() - 1.0), harmonic(1), vec![0.0])?,
        "quartic" => ScalarFieldPair::new(Box::new(|z| z[0].powi(4)), harmonic(1), vec![0.0])?,
        "product2d" => {
            ScalarFieldPair::new(Box::new(|z| z[0] * z[0] * z[1] * z[1]), harmonic(2), vec![0.0, 0.0])?
        }
        "cos3d" => ScalarFieldPair::new(
            Box::new(|z| z.iter().map(|x| x.cos() - 1.0).sum()),
            Box::new(|z| 0.5 * (z[0] * z[0] + 2.0 * z[1] * z[1] + 3.0 * z[2] * z[2])),
            vec![0.0; 3],
        )?,
        other => return Err(Error::InvalidArgument(format!("unknown field `{other}`"))),
    };
    Ok(field)
}
