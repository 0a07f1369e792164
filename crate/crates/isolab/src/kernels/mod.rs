//! The kernel families behind every loss in this crate.
//!
//! Four of the five families are a scalar profile `φ` applied to either the
//! inner product or the squared distance of the two arguments; the fifth is
//! a sparse degree-4 polynomial in the four components of a pair of planar
//! edge vectors. All of them evaluate at any derivative order: plain `f64`,
//! or the [`Jet2`] scalar for exact gradients and Hessians.

pub mod jet;

pub use jet::{Jet2, Scalar};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `‖a-b‖ < 1e-12` counts as a near-singular evaluation of the repulsive
/// kernel (squared-distance form).
pub const NEAR_SINGULAR_SEPARATION_SQ: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel arguments have different dimensions ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("repulsive kernel evaluated at near-coincident points (separation^2 = {separation_sq:e})")]
    NearSingularity { separation_sq: f64 },
    #[error("invalid kernel parameters: {0}")]
    InvalidParameters(String),
    #[error("sparse polynomial kernels take planar edge vectors, got dimension {0}")]
    Poly4Dimension(usize),
}

/// One term `coeff * a1^e1 * a2^e2 * b1^e3 * b2^e4`; serialized as
/// `[coeff, [e1, e2, e3, e4]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, [u8; 4])", into = "(f64, [u8; 4])")]
pub struct Monomial {
    pub coeff: f64,
    pub exps: [u8; 4],
}

impl From<(f64, [u8; 4])> for Monomial {
    fn from((coeff, exps): (f64, [u8; 4])) -> Self {
        Self { coeff, exps }
    }
}

impl From<Monomial> for (f64, [u8; 4]) {
    fn from(m: Monomial) -> Self {
        (m.coeff, m.exps)
    }
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&e| e as u32).sum()
    }
}

/// The five kernel families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Kernel {
    /// `κ(a,b) = <a,b>^d`
    InnerPower {
        #[serde(rename = "d")]
        degree: u32,
    },
    /// `κ(a,b) = <a,b>^d - c <a,b>^q`
    InnerPowerPair {
        #[serde(rename = "d")]
        degree: u32,
        #[serde(rename = "q")]
        q_exp: u32,
        c: f64,
    },
    /// `κ(a,b) = ‖a-b‖^{2p} - c ‖a-b‖^{2q}`
    DistancePower {
        #[serde(rename = "p")]
        p_exp: u32,
        #[serde(rename = "q")]
        q_exp: u32,
        c: f64,
    },
    /// `κ(a,b) = ‖a-b‖² + 1/‖a-b‖²` for `a ≠ b`, else 0
    Repulsive,
    /// Sparse polynomial in `(a1, a2, b1, b2)`, degree ≤ 4.
    SparsePoly { monomials: Vec<Monomial> },
}

/// How the kernel consumes its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelStructure {
    /// `φ(<a,b>)`
    InnerProduct,
    /// `φ(‖a-b‖²)`
    SquaredDistance,
    /// general polynomial in the four components
    Poly4,
}

/// `φ(s)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[inline]
fn pow_term(s: f64, e: i32) -> f64 {
    if e < 0 { 0.0 } else { s.powi(e) }
}

impl Kernel {
    pub fn inner_power(degree: u32) -> Result<Self, KernelError> {
        if degree == 0 {
            return Err(KernelError::InvalidParameters("degree must be positive".into()));
        }
        Ok(Self::InnerPower { degree })
    }

    pub fn inner_power_pair(degree: u32, q_exp: u32, c: f64) -> Result<Self, KernelError> {
        if degree % 2 != 0 {
            return Err(KernelError::InvalidParameters(format!(
                "leading exponent {degree} must be even"
            )));
        }
        if q_exp >= degree {
            return Err(KernelError::InvalidParameters(format!(
                "secondary exponent {q_exp} must be below the leading {degree}"
            )));
        }
        if c <= 0.0 {
            return Err(KernelError::InvalidParameters("coefficient c must be positive".into()));
        }
        Ok(Self::InnerPowerPair { degree, q_exp, c })
    }

    pub fn distance_power(p_exp: u32, q_exp: u32, c: f64) -> Result<Self, KernelError> {
        if p_exp == 0 || q_exp >= p_exp {
            return Err(KernelError::InvalidParameters(format!(
                "need 0 < q ({q_exp}) < p ({p_exp})"
            )));
        }
        if c <= 0.0 {
            return Err(KernelError::InvalidParameters("coefficient c must be positive".into()));
        }
        Ok(Self::DistancePower { p_exp, q_exp, c })
    }

    pub fn sparse_poly(monomials: Vec<Monomial>) -> Result<Self, KernelError> {
        for m in &monomials {
            if m.degree() > 4 {
                return Err(KernelError::InvalidParameters(format!(
                    "monomial {:?} exceeds degree 4",
                    m.exps
                )));
            }
        }
        Ok(Self::SparsePoly { monomials })
    }

    /// Re-checks the construction invariants (for kernels built through
    /// deserialization).
    pub fn validate(&self) -> Result<(), KernelError> {
        match self.clone() {
            Self::InnerPower { degree } => Self::inner_power(degree).map(|_| ()),
            Self::InnerPowerPair { degree, q_exp, c } => {
                Self::inner_power_pair(degree, q_exp, c).map(|_| ())
            }
            Self::DistancePower { p_exp, q_exp, c } => {
                Self::distance_power(p_exp, q_exp, c).map(|_| ())
            }
            Self::Repulsive => Ok(()),
            Self::SparsePoly { monomials } => Self::sparse_poly(monomials).map(|_| ()),
        }
    }

    pub fn structure(&self) -> KernelStructure {
        match self {
            Self::InnerPower { .. } | Self::InnerPowerPair { .. } => KernelStructure::InnerProduct,
            Self::DistancePower { .. } | Self::Repulsive => KernelStructure::SquaredDistance,
            Self::SparsePoly { .. } => KernelStructure::Poly4,
        }
    }

    /// Exact kernel value.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::DimensionMismatch { left: a.len(), right: b.len() });
        }
        match self {
            Self::InnerPower { .. } | Self::InnerPowerPair { .. } => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                Ok(self.profile(s)?.value)
            }
            Self::DistancePower { .. } | Self::Repulsive => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                Ok(self.profile(s)?.value)
            }
            Self::SparsePoly { monomials } => {
                if a.len() != 2 {
                    return Err(KernelError::Poly4Dimension(a.len()));
                }
                let vars = [a[0], a[1], b[0], b[1]];
                let mut acc = 0.0;
                for m in monomials {
                    acc += m.coeff
                        * pow_term(vars[0], m.exps[0] as i32)
                        * pow_term(vars[1], m.exps[1] as i32)
                        * pow_term(vars[2], m.exps[2] as i32)
                        * pow_term(vars[3], m.exps[3] as i32);
                }
                Ok(acc)
            }
        }
    }

    /// `φ(s)`, `φ'(s)`, `φ''(s)` for the inner-product and squared-distance
    /// families. For the repulsive kernel, `s == 0` means coincident points
    /// and evaluates to the defined value 0 with vanishing derivatives.
    pub fn profile(&self, s: f64) -> Result<Profile, KernelError> {
        match *self {
            Self::InnerPower { degree } => {
                let d = degree as i32;
                Ok(Profile {
                    value: pow_term(s, d),
                    d1: d as f64 * pow_term(s, d - 1),
                    d2: (d * (d - 1)) as f64 * pow_term(s, d - 2),
                })
            }
            Self::InnerPowerPair { degree, q_exp, c } => {
                let d = degree as i32;
                let q = q_exp as i32;
                Ok(Profile {
                    value: pow_term(s, d) - c * pow_term(s, q),
                    d1: d as f64 * pow_term(s, d - 1) - c * q as f64 * pow_term(s, q - 1),
                    d2: (d * (d - 1)) as f64 * pow_term(s, d - 2)
                        - c * (q * (q - 1)) as f64 * pow_term(s, q - 2),
                })
            }
            Self::DistancePower { p_exp, q_exp, c } => {
                let p = p_exp as i32;
                let q = q_exp as i32;
                Ok(Profile {
                    value: pow_term(s, p) - c * pow_term(s, q),
                    d1: p as f64 * pow_term(s, p - 1) - c * q as f64 * pow_term(s, q - 1),
                    d2: (p * (p - 1)) as f64 * pow_term(s, p - 2)
                        - c * (q * (q - 1)) as f64 * pow_term(s, q - 2),
                })
            }
            Self::Repulsive => {
                if s == 0.0 {
                    return Ok(Profile { value: 0.0, d1: 0.0, d2: 0.0 });
                }
                if s < NEAR_SINGULAR_SEPARATION_SQ {
                    return Err(KernelError::NearSingularity { separation_sq: s });
                }
                let inv = 1.0 / s;
                Ok(Profile {
                    value: s + inv,
                    d1: 1.0 - inv * inv,
                    d2: 2.0 * inv * inv * inv,
                })
            }
            Self::SparsePoly { .. } => Err(KernelError::InvalidParameters(
                "sparse polynomial kernels have no scalar profile".into(),
            )),
        }
    }

    /// Value, gradient and Hessian of a sparse polynomial kernel with
    /// respect to `(a1, a2, b1, b2)`.
    pub fn poly4_jet(&self, vars: [f64; 4]) -> Result<(f64, [f64; 4], [[f64; 4]; 4]), KernelError> {
        let Self::SparsePoly { monomials } = self else {
            return Err(KernelError::InvalidParameters(
                "poly4_jet is defined for sparse polynomial kernels".into(),
            ));
        };
        // powers v^0..v^4 per variable
        let mut pw = [[1.0f64; 5]; 4];
        for v in 0..4 {
            for e in 1..5 {
                pw[v][e] = pw[v][e - 1] * vars[v];
            }
        }
        let mut value = 0.0;
        let mut grad = [0.0f64; 4];
        let mut hess = [[0.0f64; 4]; 4];
        for m in monomials {
            let e = [m.exps[0] as usize, m.exps[1] as usize, m.exps[2] as usize, m.exps[3] as usize];
            let full = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]] * pw[3][e[3]];
            value += m.coeff * full;
            for i in 0..4 {
                if e[i] == 0 {
                    continue;
                }
                let mut di = m.coeff * e[i] as f64 * pw[i][e[i] - 1];
                for j in 0..4 {
                    if j != i {
                        di *= pw[j][e[j]];
                    }
                }
                grad[i] += di;
                // second derivatives of this monomial
                for j in i..4 {
                    let dij = if j == i {
                        if e[i] < 2 {
                            continue;
                        }
                        let mut t = m.coeff * (e[i] * (e[i] - 1)) as f64 * pw[i][e[i] - 2];
                        for k in 0..4 {
                            if k != i {
                                t *= pw[k][e[k]];
                            }
                        }
                        t
                    } else {
                        if e[j] == 0 {
                            continue;
                        }
                        let mut t = m.coeff * (e[i] * e[j]) as f64 * pw[i][e[i] - 1] * pw[j][e[j] - 1];
                        for k in 0..4 {
                            if k != i && k != j {
                                t *= pw[k][e[k]];
                            }
                        }
                        t
                    };
                    hess[i][j] += dij;
                    if j != i {
                        hess[j][i] += dij;
                    }
                }
            }
        }
        Ok((value, grad, hess))
    }

    /// Kernel evaluation over any [`Scalar`], identical formulas to `eval`.
    pub fn eval_scalar<S: Scalar>(&self, a: &[S], b: &[S]) -> Result<S, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::DimensionMismatch { left: a.len(), right: b.len() });
        }
        if a.is_empty() {
            return Err(KernelError::DimensionMismatch { left: 0, right: 0 });
        }
        match self {
            Self::InnerPower { degree } => {
                let mut s = a[0].zero_like();
                for (x, y) in a.iter().zip(b) {
                    s = s.add(&x.mul(y));
                }
                Ok(s.powu(*degree))
            }
            Self::InnerPowerPair { degree, q_exp, c } => {
                let mut s = a[0].zero_like();
                for (x, y) in a.iter().zip(b) {
                    s = s.add(&x.mul(y));
                }
                Ok(s.powu(*degree).sub(&s.powu(*q_exp).scale(*c)))
            }
            Self::DistancePower { p_exp, q_exp, c } => {
                let mut s = a[0].zero_like();
                for (x, y) in a.iter().zip(b) {
                    let d = x.sub(y);
                    s = s.add(&d.mul(&d));
                }
                Ok(s.powu(*p_exp).sub(&s.powu(*q_exp).scale(*c)))
            }
            Self::Repulsive => {
                let mut s = a[0].zero_like();
                for (x, y) in a.iter().zip(b) {
                    let d = x.sub(y);
                    s = s.add(&d.mul(&d));
                }
                if s.value() == 0.0 {
                    return Ok(a[0].zero_like());
                }
                if s.value() < NEAR_SINGULAR_SEPARATION_SQ {
                    return Err(KernelError::NearSingularity { separation_sq: s.value() });
                }
                Ok(s.add(&s.recip()))
            }
            Self::SparsePoly { monomials } => {
                if a.len() != 2 {
                    return Err(KernelError::Poly4Dimension(a.len()));
                }
                let vars = [&a[0], &a[1], &b[0], &b[1]];
                let mut acc = a[0].zero_like();
                for m in monomials {
                    let mut term = vars[0].one_like();
                    for (v, &e) in vars.iter().zip(&m.exps) {
                        if e > 0 {
                            term = term.mul(&v.powu(e as u32));
                        }
                    }
                    acc = acc.add(&term.scale(m.coeff));
                }
                Ok(acc)
            }
        }
    }

    /// Kernel evaluation with exact gradient and Hessian carried by jets.
    pub fn eval_jet(&self, a: &[Jet2], b: &[Jet2]) -> Result<Jet2, KernelError> {
        self.eval_scalar(a, b)
    }
}

const POOL_DEGREE4_EVEN: usize = 10;
const POOL_LOWER_DEGREE: usize = 35;
/// Admissible monomials for random generation: all of degree ≤ 3 plus the
/// even-exponent quartics.
pub const RANDOM_POOL_SIZE: usize = POOL_DEGREE4_EVEN + POOL_LOWER_DEGREE;

/// Draws a random bounded-below degree-4 polynomial kernel.
///
/// Quartic monomials are restricted to even exponent tuples with positive
/// coefficients, and the four pure quartics `a1^4, a2^4, b1^4, b2^4` are
/// always included so the polynomial grows along every ray. The remaining
/// monomials are sampled without replacement from the admissible pool, with
/// standard-normal coefficients.
pub fn random_sparse_poly(seed: u64, monomial_count: usize) -> Result<Kernel, KernelError> {
    if monomial_count < 4 || monomial_count > RANDOM_POOL_SIZE {
        return Err(KernelError::InvalidParameters(format!(
            "monomial count must lie in 4..={RANDOM_POOL_SIZE}, got {monomial_count}"
        )));
    }
    let mut pool: Vec<[u8; 4]> = Vec::new();
    for e1 in 0..=4u8 {
        for e2 in 0..=4u8 {
            for e3 in 0..=4u8 {
                for e4 in 0..=4u8 {
                    let deg = e1 + e2 + e3 + e4;
                    let even = e1 % 2 == 0 && e2 % 2 == 0 && e3 % 2 == 0 && e4 % 2 == 0;
                    let pure_quartic = deg == 4 && [e1, e2, e3, e4].contains(&4);
                    if deg < 4 || (deg == 4 && even && !pure_quartic) {
                        pool.push([e1, e2, e3, e4]);
                    }
                }
            }
        }
    }
    debug_assert_eq!(pool.len(), RANDOM_POOL_SIZE - 4);

    let mut rng = crate::rng::SplitMix64::new(seed);
    let mut monomials: Vec<Monomial> = vec![
        [4, 0, 0, 0],
        [0, 4, 0, 0],
        [0, 0, 4, 0],
        [0, 0, 0, 4],
    ]
    .into_iter()
    .map(|exps| Monomial { coeff: rng.next_normal().abs(), exps })
    .collect();

    // partial Fisher-Yates over the remaining pool
    let extra = monomial_count - 4;
    let mut pool = pool;
    for k in 0..extra {
        let pick = k + rng.next_index(pool.len() - k);
        pool.swap(k, pick);
        let exps = pool[k];
        let raw = rng.next_normal();
        let degree: u8 = exps.iter().sum();
        let coeff = if degree == 4 { raw.abs() } else { raw };
        monomials.push(Monomial { coeff, exps });
    }
    Kernel::sparse_poly(monomials)
}

#[derive(Deserialize)]
struct ShippedTables {
    experiments: Vec<Vec<Monomial>>,
}

/// One of the five fixed degree-4 kernel coefficient tables shipped with
/// the crate (`experiment` in `1..=5`).
pub fn shipped_random_kernel(experiment: usize) -> Result<Kernel, KernelError> {
    static RAW: &str = include_str!("../../data/random_kernels.json");
    let tables: ShippedTables = serde_json::from_str(RAW)
        .map_err(|e| KernelError::InvalidParameters(format!("shipped table parse error: {e}")))?;
    if experiment == 0 || experiment > tables.experiments.len() {
        return Err(KernelError::InvalidParameters(format!(
            "experiment index {experiment} out of range 1..={}",
            tables.experiments.len()
        )));
    }
    Kernel::sparse_poly(tables.experiments[experiment - 1].clone())
}
