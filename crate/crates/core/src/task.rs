//! Transfer problem instances and the random design model.
//!
//! A [`TaskPair`] fixes everything deterministic about the source/target
//! problem. Designs are `X = Z Σ^{1/2}` with iid standardized entries in `Z`,
//! responses are `y = X w + ε` with Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, Mat, SpdMatrix, Vector};

/// Population covariance of one task's features.
#[derive(Debug, Clone)]
pub enum Covariance {
    Identity(usize),
    /// Diagonal in the standard basis.
    Diagonal(Vector),
    Dense { matrix: SpdMatrix, sqrt: Mat },
}

impl Covariance {
    pub fn identity(p: usize) -> Self {
        Covariance::Identity(p)
    }

    pub fn diagonal(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("spectrum", "must be nonempty"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid("spectrum", format!("eigenvalue {bad} is not finite and >= 0")));
        }
        if values.iter().all(|&v| v == 1.0) {
            return Ok(Covariance::Identity(values.len()));
        }
        Ok(Covariance::Diagonal(Vector::from_vec(values)))
    }

    pub fn dense(matrix: SpdMatrix) -> Result<Self> {
        let sqrt = spd_sqrt(&matrix)?;
        Ok(Covariance::Dense { matrix, sqrt })
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Identity(p) => *p,
            Covariance::Diagonal(d) => d.len(),
            Covariance::Dense { matrix, .. } => matrix.dim(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Covariance::Identity(_))
    }

    /// Diagonal in the standard basis (identity included).
    pub fn is_diagonal(&self) -> bool {
        !matches!(self, Covariance::Dense { .. })
    }

    /// Eigenvalues. For diagonal covariances these are in coordinate order
    /// and the eigenbasis is the standard one; dense covariances report them
    /// descending, matched with [`Covariance::eigenbasis`].
    pub fn spectrum(&self) -> Vec<f64> {
        match self {
            Covariance::Identity(p) => vec![1.0; *p],
            Covariance::Diagonal(d) => d.iter().copied().collect(),
            Covariance::Dense { matrix, .. } => matrix.eig().values.iter().copied().collect(),
        }
    }

    /// `None` means the standard basis.
    pub fn eigenbasis(&self) -> Option<&Mat> {
        match self {
            Covariance::Dense { matrix, .. } => Some(&matrix.eig().vectors),
            _ => None,
        }
    }

    pub fn to_matrix(&self) -> Mat {
        match self {
            Covariance::Identity(p) => Mat::identity(*p, *p),
            Covariance::Diagonal(d) => Mat::from_diagonal(d),
            Covariance::Dense { matrix, .. } => matrix.as_mat().clone(),
        }
    }

    pub fn to_spd(&self) -> SpdMatrix {
        match self {
            Covariance::Identity(p) => SpdMatrix::identity(*p),
            Covariance::Dense { matrix, .. } => matrix.clone(),
            Covariance::Diagonal(_) => {
                SpdMatrix::new(self.to_matrix()).expect("nonnegative diagonal is PSD")
            }
        }
    }

    /// `Σ v`.
    pub fn apply(&self, v: &Vector) -> Vector {
        match self {
            Covariance::Identity(_) => v.clone(),
            Covariance::Diagonal(d) => d.component_mul(v),
            Covariance::Dense { matrix, .. } => matrix.as_mat() * v,
        }
    }

    /// `Σ A`.
    pub fn apply_mat(&self, a: &Mat) -> Mat {
        match self {
            Covariance::Identity(_) => a.clone(),
            Covariance::Diagonal(d) => {
                let mut out = a.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                out
            }
            Covariance::Dense { matrix, .. } => matrix.as_mat() * a,
        }
    }

    pub fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(&self.apply(v))
    }

    pub fn norm_sq(&self, v: &Vector) -> f64 {
        self.inner(v, v).max(0.0)
    }

    /// `Tr(Aᵀ Σ A)`.
    pub fn frob_sq(&self, a: &Mat) -> f64 {
        match self {
            Covariance::Identity(_) => a.norm_squared(),
            Covariance::Diagonal(d) => a
                .row_iter()
                .enumerate()
                .map(|(i, row)| d[i] * row.norm_squared())
                .sum(),
            Covariance::Dense { .. } => a.dot(&self.apply_mat(a)).max(0.0),
        }
    }

    /// `Z Σ^{1/2}` for a standardized `n × p` matrix `Z`.
    pub fn color(&self, mut z: Mat) -> Mat {
        match self {
            Covariance::Identity(_) => z,
            Covariance::Diagonal(d) => {
                for (j, mut col) in z.column_iter_mut().enumerate() {
                    col *= d[j].sqrt();
                }
                z
            }
            Covariance::Dense { sqrt, .. } => z * sqrt,
        }
    }
}

/// Law of the standardized design entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryLaw {
    #[default]
    Gaussian,
    /// ±1 with equal probability.
    Rademacher,
}

/// A source/target problem instance.
#[derive(Debug, Clone)]
pub struct TaskPair {
    p: usize,
    n0: usize,
    n1: usize,
    sigma0: f64,
    sigma1: f64,
    cov0: Covariance,
    cov1: Covariance,
    w0: Vector,
    w1: Vector,
    entry_law: EntryLaw,
}

fn check_noise(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("noise level must be finite and >= 0, got {v}")))
    }
}

fn check_overparameterized(name: &'static str, n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid(name, "sample count must be positive"));
    }
    if n + 1 >= p {
        return Err(Error::invalid(name, format!("need n < p - 1, got n = {n}, p = {p}")));
    }
    Ok(())
}

impl TaskPair {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n0: usize,
        n1: usize,
        sigma0: f64,
        sigma1: f64,
        cov0: Covariance,
        cov1: Covariance,
        w0: Vector,
        w1: Vector,
    ) -> Result<Self> {
        let p = w0.len();
        check_overparameterized("n0", n0, p)?;
        check_overparameterized("n1", n1, p)?;
        check_noise("sigma0", sigma0)?;
        check_noise("sigma1", sigma1)?;
        for (name, d) in [("w1", w1.len()), ("Sigma0", cov0.dim()), ("Sigma1", cov1.dim())] {
            if d != p {
                return Err(Error::mismatch("TaskPair", format!("{name} of dimension {p}"), d));
            }
        }
        if !w0.iter().chain(w1.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("signal vector"));
        }
        Ok(Self {
            p,
            n0,
            n1,
            sigma0,
            sigma1,
            cov0,
            cov1,
            w0,
            w1,
            entry_law: EntryLaw::Gaussian,
        })
    }

    pub fn with_entry_law(mut self, law: EntryLaw) -> Self {
        self.entry_law = law;
        self
    }

    pub fn with_noise(mut self, sigma0: f64, sigma1: f64) -> Result<Self> {
        check_noise("sigma0", sigma0)?;
        check_noise("sigma1", sigma1)?;
        self.sigma0 = sigma0;
        self.sigma1 = sigma1;
        Ok(self)
    }

    pub fn with_sample_sizes(mut self, n0: usize, n1: usize) -> Result<Self> {
        check_overparameterized("n0", n0, self.p)?;
        check_overparameterized("n1", n1, self.p)?;
        self.n0 = n0;
        self.n1 = n1;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn n0(&self) -> usize {
        self.n0
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }
    pub fn cov0(&self) -> &Covariance {
        &self.cov0
    }
    pub fn cov1(&self) -> &Covariance {
        &self.cov1
    }
    pub fn w0(&self) -> &Vector {
        &self.w0
    }
    pub fn w1(&self) -> &Vector {
        &self.w1
    }
    pub fn entry_law(&self) -> EntryLaw {
        self.entry_law
    }

    /// `p / n0`
    pub fn gamma0(&self) -> f64 {
        self.p as f64 / self.n0 as f64
    }

    /// `p / n1`
    pub fn gamma1(&self) -> f64 {
        self.p as f64 / self.n1 as f64
    }

    pub fn is_isotropic(&self) -> bool {
        self.cov0.is_identity() && self.cov1.is_identity()
    }
}

/// Scalars describing an isotropic-style instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub p: usize,
    pub n0: usize,
    pub n1: usize,
    pub w0_norm: f64,
    pub rho: f64,
    pub w1_norm: f64,
    pub sigma0: f64,
    pub sigma1: f64,
}

/// The two orthonormal directions signal vectors are built from: the
/// normalized all-ones vector and the alternating-sign vector made orthogonal
/// to it.
pub fn signal_frame(p: usize) -> (Vector, Vector) {
    let q1 = Vector::from_element(p, 1.0 / (p as f64).sqrt());
    let alt = Vector::from_fn(p, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let mut q2 = &alt - &q1 * q1.dot(&alt);
    q2 /= q2.norm();
    (q1, q2)
}

/// Signal vectors with `‖w0‖ = w0_norm`, `‖w1‖ = w1_norm` and `⟨w0, w1⟩ = rho`.
pub fn signal_pair(p: usize, w0_norm: f64, rho: f64, w1_norm: f64) -> Result<(Vector, Vector)> {
    if p < 2 {
        return Err(Error::invalid("p", "need at least two features"));
    }
    for (name, v) in [("w0_norm", w0_norm), ("w1_norm", w1_norm)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    if !rho.is_finite() {
        return Err(Error::NonFinite("rho"));
    }
    let bound = w0_norm * w1_norm;
    if rho.abs() > bound * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "rho",
            format!("|rho| = {} exceeds the Cauchy-Schwarz bound {bound}", rho.abs()),
        ));
    }
    let (q1, q2) = signal_frame(p);
    let along = if w0_norm > 0.0 { rho / w0_norm } else { 0.0 };
    let across = (w1_norm * w1_norm - along * along).max(0.0).sqrt();
    let w0 = &q1 * w0_norm;
    let w1 = &q1 * along + &q2 * across;
    Ok((w0, w1))
}

/// Isotropic instance (`Σ0 = Σ1 = I`) with exactly the requested geometry.
pub fn make_isotropic_pair(spec: &PairSpec) -> Result<TaskPair> {
    let (w0, w1) = signal_pair(spec.p, spec.w0_norm, spec.rho, spec.w1_norm)?;
    TaskPair::new(
        spec.n0,
        spec.n1,
        spec.sigma0,
        spec.sigma1,
        Covariance::identity(spec.p),
        Covariance::identity(spec.p),
        w0,
        w1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub rho: f64,
    pub w0_norm_sq: f64,
    pub w1_norm_sq: f64,
}

pub fn alignment(tp: &TaskPair) -> AlignmentSummary {
    AlignmentSummary {
        rho: tp.w0.dot(&tp.w1),
        w0_norm_sq: tp.w0.norm_squared(),
        w1_norm_sq: tp.w1.norm_squared(),
    }
}

/// Independent random streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Z0 = 0,
    Z1 = 1,
    Eps0 = 2,
    Eps1 = 3,
}

/// RNG for `(master seed, replicate, stream)`. ChaCha's 64-bit stream id
/// carries `(replicate, stream)`, so every draw is addressable without
/// generating any other replicate first.
pub fn stream_rng(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(4).wrapping_add(stream as u64));
    rng
}

fn standardized(n: usize, p: usize, law: EntryLaw, rng: &mut ChaCha8Rng) -> Mat {
    match law {
        EntryLaw::Gaussian => Mat::from_fn(n, p, |_, _| StandardNormal.sample(rng)),
        EntryLaw::Rademacher => {
            Mat::from_fn(n, p, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
        }
    }
}

fn noise(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

/// One Monte Carlo draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSample {
    pub x0: Mat,
    pub y0: Vector,
    pub x1: Mat,
    pub y1: Vector,
    pub seed: u64,
    pub replicate_index: u64,
}

/// Design matrices only; the noise streams are never touched.
pub fn sample_designs(tp: &TaskPair, seed: u64, replicate: u64) -> (Mat, Mat) {
    let z0 = standardized(tp.n0, tp.p, tp.entry_law, &mut stream_rng(seed, replicate, Stream::Z0));
    let z1 = standardized(tp.n1, tp.p, tp.entry_law, &mut stream_rng(seed, replicate, Stream::Z1));
    (tp.cov0.color(z0), tp.cov1.color(z1))
}

pub fn sample_design(tp: &TaskPair, seed: u64, replicate: u64) -> DesignSample {
    let (x0, x1) = sample_designs(tp, seed, replicate);
    let y0 = &x0 * &tp.w0 + noise(tp.n0, tp.sigma0, &mut stream_rng(seed, replicate, Stream::Eps0));
    let y1 = &x1 * &tp.w1 + noise(tp.n1, tp.sigma1, &mut stream_rng(seed, replicate, Stream::Eps1));
    DesignSample {
        x0,
        y0,
        x1,
        y1,
        seed,
        replicate_index: replicate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(w0_norm: f64, rho: f64, w1_norm: f64) -> PairSpec {
        PairSpec {
            p: 20,
            n0: 8,
            n1: 6,
            w0_norm,
            rho,
            w1_norm,
            sigma0: 0.5,
            sigma1: 0.25,
        }
    }

    #[test]
    fn aligned_pair_is_identical() {
        let tp = make_isotropic_pair(&spec(1.0, 1.0, 1.0)).unwrap();
        assert!((tp.w0() - tp.w1()).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_pair() {
        let tp = make_isotropic_pair(&spec(1.3, 0.0, 0.7)).unwrap();
        assert!(tp.w0().dot(tp.w1()).abs() < 1e-12);
        assert_relative_eq!(tp.w1().norm(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn sixty_degree_pair() {
        let tp = make_isotropic_pair(&spec(1.0, 0.5, 1.0)).unwrap();
        let a = alignment(&tp);
        assert_relative_eq!(a.rho, 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.w0_norm_sq, 1.0, epsilon = 1e-12);
        assert_relative_eq!(a.w1_norm_sq, 1.0, epsilon = 1e-12);
        let angle = (a.rho / (a.w0_norm_sq * a.w1_norm_sq).sqrt()).acos().to_degrees();
        assert_relative_eq!(angle, 60.0, epsilon = 1e-9);
    }

    #[test]
    fn alignment_signs() {
        let w = Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let mk = |w1: Vector| {
            TaskPair::new(1, 1, 0.0, 0.0, Covariance::identity(4), Covariance::identity(4), w.clone(), w1)
                .unwrap()
        };
        assert_relative_eq!(alignment(&mk(w.clone())).rho, w.norm_squared());
        assert_relative_eq!(alignment(&mk(-w.clone())).rho, -w.norm_squared());
    }

    #[test]
    fn rejects_infeasible_geometry() {
        assert!(make_isotropic_pair(&spec(1.0, 1.5, 1.0)).is_err());
        let mut s = spec(1.0, 0.5, 1.0);
        s.n0 = 19;
        assert!(make_isotropic_pair(&s).is_err());
        s.n0 = 18;
        assert!(make_isotropic_pair(&s).is_ok());
    }

    #[test]
    fn noiseless_labels_are_exact() {
        let mut s = spec(1.0, 0.5, 1.0);
        s.sigma0 = 0.0;
        s.sigma1 = 0.0;
        let tp = make_isotropic_pair(&s).unwrap();
        let d = sample_design(&tp, 3, 0);
        assert_eq!(d.y0, &d.x0 * tp.w0());
        assert_eq!(d.y1, &d.x1 * tp.w1());
    }

    #[test]
    fn sampling_is_deterministic_and_addressable() {
        let tp = make_isotropic_pair(&spec(1.0, 0.5, 1.0)).unwrap();
        let a = sample_design(&tp, 11, 5);
        let b = sample_design(&tp, 11, 5);
        assert_eq!(a, b);
        let c = sample_design(&tp, 11, 6);
        assert_ne!(a.x0, c.x0);
        assert_ne!(a.x0.row(0), a.x1.row(0));
    }

    #[test]
    fn moments_of_isotropic_design() {
        let s = PairSpec {
            p: 400,
            n0: 300,
            n1: 10,
            w0_norm: 1.0,
            rho: 0.0,
            w1_norm: 1.0,
            sigma0: 0.7,
            sigma1: 0.0,
        };
        let tp = make_isotropic_pair(&s).unwrap();
        let d = sample_design(&tp, 1, 0);
        let count = d.x0.len() as f64;
        let mean = d.x0.sum() / count;
        let var = d.x0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.05);

        let resid = &d.y0 - &d.x0 * tp.w0();
        let rvar = resid.norm_squared() / resid.len() as f64;
        assert!((rvar / 0.49 - 1.0).abs() < 0.2, "{rvar}");
    }

    #[test]
    fn rademacher_entries() {
        let tp = make_isotropic_pair(&spec(1.0, 0.5, 1.0))
            .unwrap()
            .with_entry_law(EntryLaw::Rademacher);
        let (x0, _) = sample_designs(&tp, 2, 0);
        assert!(x0.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn coloring_with_diagonal_covariance() {
        let cov = Covariance::diagonal(vec![4.0, 1.0, 0.25]).unwrap();
        let z = Mat::from_element(2, 3, 1.0);
        let x = cov.color(z);
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 0.5]);
        assert!(Covariance::diagonal(vec![1.0; 5]).unwrap().is_identity());
        assert!(Covariance::diagonal(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn covariance_variants_agree() {
        let d = vec![2.0, 1.0, 0.5, 3.0];
        let diag = Covariance::diagonal(d.clone()).unwrap();
        let dense = Covariance::dense(SpdMatrix::new(Mat::from_diagonal(&Vector::from_vec(d))).unwrap()).unwrap();
        let v = Vector::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let a = Mat::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.3 + 0.1);
        assert_relative_eq!(diag.norm_sq(&v), dense.norm_sq(&v), epsilon = 1e-12);
        assert_relative_eq!(diag.frob_sq(&a), dense.frob_sq(&a), epsilon = 1e-12);
        let z = Mat::from_fn(2, 4, |i, j| (i + j) as f64);
        assert!((diag.color(z.clone()) - dense.color(z)).norm() < 1e-12);
    }
}
