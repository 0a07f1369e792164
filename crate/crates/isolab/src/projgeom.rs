//! Finite projective spaces `P^n(F_q)` and the action of `PGL(n+1, F_q)`.
//!
//! Everything here is exact integer arithmetic. Points and matrices are kept
//! in a canonical scale: the first nonzero entry equals 1. Over a prime
//! field every scalar class contains exactly one such representative, so
//! canonical matrices enumerate `PGL` directly with no quotient step, and
//! canonical coordinates give O(1) hashing and a deterministic
//! (lexicographic) enumeration order.

use std::collections::HashMap;
use thiserror::Error;

pub const DEFAULT_POINT_CAP: u128 = 1_000_000;
pub const DEFAULT_GROUP_CAP: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum ProjGeomError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("projective space has {size} points, exceeding the cap {cap}")]
    PointCapExceeded { size: u128, cap: u128 },
    #[error("group order {order} exceeds the cap {cap}")]
    GroupCapExceeded { order: u128, cap: u128 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("projective dimension must be at least 1")]
    DimensionTooSmall,
}

/// The prime field `F_q`, with arithmetic on `u64` residues in `0..q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    /// Constructs `F_q`, verifying primality by trial division.
    pub fn new(q: u64) -> Result<Self, ProjGeomError> {
        if q < 2 {
            return Err(ProjGeomError::NotPrime(q));
        }
        let mut d = 2u64;
        while d * d <= q {
            if q % d == 0 {
                return Err(ProjGeomError::NotPrime(q));
            }
            d += 1;
        }
        Ok(Self { q })
    }

    #[inline]
    pub fn q(&self) -> u64 {
        self.q
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        (a + b) % self.q
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        (a + self.q - b % self.q) % self.q
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.q
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        (self.q - a % self.q) % self.q
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem; rejects 0.
    pub fn inv(&self, a: u64) -> Result<u64, ProjGeomError> {
        if a % self.q == 0 {
            return Err(ProjGeomError::DimensionMismatch(
                "inverse of zero requested".into(),
            ));
        }
        Ok(self.pow(a, self.q - 2))
    }
}

/// Normalizes a nonzero coordinate vector so its first nonzero entry is 1.
/// Returns `None` for the zero vector.
pub fn normalize_point(field: &PrimeField, coords: &[u64]) -> Option<Vec<u8>> {
    let lead = coords.iter().position(|&c| c % field.q != 0)?;
    let scale = field.inv(coords[lead] % field.q).expect("nonzero lead");
    Some(
        coords
            .iter()
            .map(|&c| field.mul(c % field.q, scale) as u8)
            .collect(),
    )
}

/// All points of `P^n(F_q)` in lexicographic order of canonical coordinates,
/// with an index for O(1) lookup.
#[derive(Debug, Clone)]
pub struct ProjectiveAtlas {
    n: usize,
    field: PrimeField,
    points: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

/// `(q^{n+1} - 1) / (q - 1)`.
pub fn point_count(n: usize, q: u64) -> u128 {
    let q = q as u128;
    (q.pow(n as u32 + 1) - 1) / (q - 1)
}

/// `|PGL(n+1, q)| = (1/(q-1)) * prod_{k=0}^{n} (q^{n+1} - q^k)`.
pub fn pgl_order(n: usize, q: u64) -> u128 {
    let q = q as u128;
    let qn1 = q.pow(n as u32 + 1);
    let mut order: u128 = 1;
    for k in 0..=n as u32 {
        order *= qn1 - q.pow(k);
    }
    order / (q - 1)
}

pub fn enumerate_atlas(n: usize, q: u64) -> Result<ProjectiveAtlas, ProjGeomError> {
    enumerate_atlas_capped(n, q, DEFAULT_POINT_CAP)
}

/// Enumerates `P^n(F_q)` by scanning coordinate vectors in lexicographic
/// order and keeping the canonical representatives.
pub fn enumerate_atlas_capped(
    n: usize,
    q: u64,
    cap: u128,
) -> Result<ProjectiveAtlas, ProjGeomError> {
    let field = PrimeField::new(q)?;
    if n < 1 {
        return Err(ProjGeomError::DimensionTooSmall);
    }
    let size = point_count(n, q);
    if size > cap {
        return Err(ProjGeomError::PointCapExceeded { size, cap });
    }

    let dim = n + 1;
    let mut points = Vec::with_capacity(size as usize);
    let mut digits = vec![0u64; dim];
    'outer: loop {
        // canonical <=> first nonzero digit is 1
        if let Some(lead) = digits.iter().position(|&d| d != 0) {
            if digits[lead] == 1 {
                points.push(digits.iter().map(|&d| d as u8).collect::<Vec<u8>>());
            }
        }
        // lexicographic odometer, most significant digit first
        for pos in (0..dim).rev() {
            digits[pos] += 1;
            if digits[pos] < q {
                continue 'outer;
            }
            digits[pos] = 0;
        }
        break;
    }
    debug_assert_eq!(points.len() as u128, size);

    let index = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect();
    Ok(ProjectiveAtlas { n, field, points, index })
}

impl ProjectiveAtlas {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[u8] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<u8>] {
        &self.points
    }

    pub fn index_of(&self, coords: &[u8]) -> Option<usize> {
        self.index.get(coords).copied()
    }

    /// Index of the image of point `i` under the matrix (row-major, side n+1).
    fn apply_matrix(&self, matrix: &[u8], i: usize) -> Option<usize> {
        let dim = self.n + 1;
        let p = &self.points[i];
        let mut out = vec![0u64; dim];
        for r in 0..dim {
            let mut acc = 0u64;
            for c in 0..dim {
                acc += matrix[r * dim + c] as u64 * p[c] as u64;
            }
            out[r] = acc % self.field.q;
        }
        let canon = normalize_point(&self.field, &out)?;
        self.index_of(&canon)
    }
}

/// One element of `PGL(n+1, F_q)`: a scalar-normalized invertible matrix
/// together with the permutation it induces on the atlas points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PglElement {
    /// Row-major `(n+1) x (n+1)` entries; first nonzero entry equals 1.
    pub matrix: Vec<u8>,
    /// `point_perm[i]` is the atlas index of `g · point_i`.
    pub point_perm: Vec<u16>,
}

impl PglElement {
    /// Atlas index of `g^{-1} · point_i`, read off the inverse permutation.
    pub fn inverse_perm(&self) -> Vec<u16> {
        let mut inv = vec![0u16; self.point_perm.len()];
        for (i, &img) in self.point_perm.iter().enumerate() {
            inv[img as usize] = i as u16;
        }
        inv
    }
}

fn det_mod(field: &PrimeField, matrix: &[u8], dim: usize) -> u64 {
    let q = field.q;
    match dim {
        1 => matrix[0] as u64 % q,
        2 => {
            let (a, b, c, d) = (matrix[0] as u64, matrix[1] as u64, matrix[2] as u64, matrix[3] as u64);
            field.sub(field.mul(a, d), field.mul(b, c))
        }
        3 => {
            let m = |i: usize| matrix[i] as u64;
            let t1 = field.mul(m(0), field.sub(field.mul(m(4), m(8)), field.mul(m(5), m(7))));
            let t2 = field.mul(m(1), field.sub(field.mul(m(3), m(8)), field.mul(m(5), m(6))));
            let t3 = field.mul(m(2), field.sub(field.mul(m(3), m(7)), field.mul(m(4), m(6))));
            field.add(field.sub(t1, t2), t3)
        }
        _ => {
            // Gaussian elimination on a scratch copy.
            let mut a: Vec<u64> = matrix.iter().map(|&x| x as u64).collect();
            let mut det = 1u64;
            for col in 0..dim {
                let pivot = (col..dim).find(|&r| a[r * dim + col] % q != 0);
                let Some(pr) = pivot else { return 0 };
                if pr != col {
                    for c in 0..dim {
                        a.swap(pr * dim + c, col * dim + c);
                    }
                    det = field.neg(det);
                }
                let pinv = field.inv(a[col * dim + col]).expect("pivot nonzero");
                det = field.mul(det, a[col * dim + col]);
                for r in (col + 1)..dim {
                    let factor = field.mul(a[r * dim + col], pinv);
                    if factor == 0 {
                        continue;
                    }
                    for c in col..dim {
                        let sub = field.mul(factor, a[col * dim + c]);
                        a[r * dim + c] = field.sub(a[r * dim + c], sub);
                    }
                }
            }
            det
        }
    }
}

pub fn enumerate_pgl(atlas: &ProjectiveAtlas) -> Result<Vec<PglElement>, ProjGeomError> {
    enumerate_pgl_capped(atlas, DEFAULT_GROUP_CAP)
}

/// Enumerates `PGL(n+1, F_q)` as the invertible matrices whose first nonzero
/// entry is 1 (one representative per scalar class), in lexicographic order
/// of the flattened matrix, and records each element's point permutation.
pub fn enumerate_pgl_capped(
    atlas: &ProjectiveAtlas,
    cap: u128,
) -> Result<Vec<PglElement>, ProjGeomError> {
    let order = pgl_order(atlas.n, atlas.field.q);
    if order > cap {
        return Err(ProjGeomError::GroupCapExceeded { order, cap });
    }
    let dim = atlas.n + 1;
    let q = atlas.field.q;
    let cells = dim * dim;
    let mut elements = Vec::with_capacity(order as usize);
    let mut digits = vec![0u64; cells];
    'outer: loop {
        if let Some(lead) = digits.iter().position(|&d| d != 0) {
            if digits[lead] == 1 {
                let matrix: Vec<u8> = digits.iter().map(|&d| d as u8).collect();
                if det_mod(&atlas.field, &matrix, dim) != 0 {
                    let mut point_perm = vec![0u16; atlas.len()];
                    for i in 0..atlas.len() {
                        let img = atlas
                            .apply_matrix(&matrix, i)
                            .expect("invertible matrix maps points to points");
                        point_perm[i] = img as u16;
                    }
                    elements.push(PglElement { matrix, point_perm });
                }
            }
        }
        for pos in (0..cells).rev() {
            digits[pos] += 1;
            if digits[pos] < q {
                continue 'outer;
            }
            digits[pos] = 0;
        }
        break;
    }
    debug_assert_eq!(elements.len() as u128, order);
    Ok(elements)
}

/// Matrix product `g1 · g2` in canonical scale, with the composed point
/// permutation.
pub fn compose(
    atlas: &ProjectiveAtlas,
    g1: &PglElement,
    g2: &PglElement,
) -> PglElement {
    let dim = atlas.n + 1;
    let field = &atlas.field;
    let mut prod = vec![0u64; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let mut acc = 0u64;
            for k in 0..dim {
                acc = field.add(
                    acc,
                    field.mul(g1.matrix[r * dim + k] as u64, g2.matrix[k * dim + c] as u64),
                );
            }
            prod[r * dim + c] = acc;
        }
    }
    let matrix = normalize_point(field, &prod).expect("product of invertibles is nonzero");
    let point_perm = g2
        .point_perm
        .iter()
        .map(|&mid| g1.point_perm[mid as usize])
        .collect();
    PglElement { matrix, point_perm }
}

/// `(g · f)(x) = f(g^{-1} x)` on a function given by its atlas values.
pub fn act_on_function(g: &PglElement, f: &[f64]) -> Result<Vec<f64>, ProjGeomError> {
    if f.len() != g.point_perm.len() {
        return Err(ProjGeomError::DimensionMismatch(format!(
            "function has {} values but the group acts on {} points",
            f.len(),
            g.point_perm.len()
        )));
    }
    let mut out = vec![0.0; f.len()];
    for (i, &img) in g.point_perm.iter().enumerate() {
        // (g·f)(g·x_i) = f(x_i)
        out[img as usize] = f[i];
    }
    Ok(out)
}

/// Pullback index data for `f ↦ r(g·f)`: entry `k` is the atlas index of
/// `g^{-1} · i(x_k)` where `i(x) = [x : 0]` embeds the hyperplane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionMap {
    pub targets: Vec<u32>,
    /// Number of group elements inducing this map (1 in raw mode).
    pub coset_size: usize,
}

/// Builds the restriction maps of a group through the hyperplane embedding.
///
/// With `dedup` set, one map is kept per distinct target vector and
/// `coset_size` counts the elements inducing it; these are the right cosets
/// of the pointwise stabilizer of the embedded hyperplane. Without `dedup`
/// there is one map per group element, in group enumeration order.
pub fn restriction_maps(
    atlas: &ProjectiveAtlas,
    sub_atlas: &ProjectiveAtlas,
    group: &[PglElement],
    dedup: bool,
) -> Result<Vec<RestrictionMap>, ProjGeomError> {
    if atlas.n != sub_atlas.n + 1 {
        return Err(ProjGeomError::DimensionMismatch(format!(
            "expected dimensions to differ by one, got {} and {}",
            atlas.n, sub_atlas.n
        )));
    }
    if atlas.field.q != sub_atlas.field.q {
        return Err(ProjGeomError::DimensionMismatch(
            "atlases over different fields".into(),
        ));
    }
    // Embedded hyperplane point indices e_k = index of [x_k : 0].
    let embedded: Vec<usize> = sub_atlas
        .points
        .iter()
        .map(|p| {
            let mut coords = p.clone();
            coords.push(0);
            atlas
                .index_of(&coords)
                .expect("embedded point is canonical in the larger atlas")
        })
        .collect();

    let maps_iter = group.iter().map(|g| {
        let inv = g.inverse_perm();
        embedded
            .iter()
            .map(|&e| inv[e] as u32)
            .collect::<Vec<u32>>()
    });

    if !dedup {
        return Ok(maps_iter
            .map(|targets| RestrictionMap { targets, coset_size: 1 })
            .collect());
    }

    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for targets in maps_iter {
        *counts.entry(targets).or_insert(0) += 1;
    }
    let mut maps: Vec<RestrictionMap> = counts
        .into_iter()
        .map(|(targets, coset_size)| RestrictionMap { targets, coset_size })
        .collect();
    maps.sort_by(|a, b| a.targets.cmp(&b.targets));
    Ok(maps)
}
