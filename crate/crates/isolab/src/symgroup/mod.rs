//! Permutation groups on small index sets.
//!
//! Supplies graph automorphism search, subgroup closure, and the
//! isomorphism-invariant fingerprint (order, element-order histogram,
//! center, abelianization, derived subgroup) that backs the human-readable
//! naming of small groups in [`naming`].

pub mod naming;

use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

pub use naming::{name_group, name_permutation_group, GroupName};

/// Full histograms are computed exactly up to this order; larger groups get
/// a sampled histogram flagged as incomplete.
pub const FULL_FINGERPRINT_CAP: usize = 100_000;
pub const DEFAULT_CLOSURE_CAP: usize = 10_000_000;
/// Brute-force bound for graph automorphism search.
pub const MAX_AUTOMORPHISM_VERTICES: usize = 10;

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("permutations have mismatched degrees ({0} vs {1})")]
    DegreeMismatch(usize, usize),
    #[error("closure exceeded the cap of {0} elements")]
    ClosureCapExceeded(usize),
    #[error("graph has {0} vertices, above the brute-force bound {MAX_AUTOMORPHISM_VERTICES}")]
    TooManyVertices(usize),
    #[error("vector {0:?} is not a bijection")]
    NotABijection(Vec<u16>),
    #[error("edge endpoint {0} is out of range for {1} vertices")]
    EdgeOutOfRange(usize, usize),
}

/// A permutation of `{0, …, N-1}` stored as its image vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<u16>,
}

impl Permutation {
    pub fn new(images: Vec<u16>) -> Result<Self, GroupError> {
        let mut seen = vec![false; images.len()];
        for &img in &images {
            if img as usize >= images.len() || seen[img as usize] {
                return Err(GroupError::NotABijection(images));
            }
            seen[img as usize] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(degree: usize) -> Self {
        Self { images: (0..degree as u16).collect() }
    }

    /// Permutation from disjoint cycles, e.g. `(0 1)(2 3)`.
    pub fn from_cycles(degree: usize, cycles: &[&[u16]]) -> Self {
        let mut images: Vec<u16> = (0..degree as u16).collect();
        for cyc in cycles {
            for i in 0..cyc.len() {
                images[cyc[i] as usize] = cyc[(i + 1) % cyc.len()];
            }
        }
        Self { images }
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn apply(&self, point: usize) -> usize {
        self.images[point] as usize
    }

    pub fn images(&self) -> &[u16] {
        &self.images
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        debug_assert_eq!(self.degree(), other.degree());
        Self {
            images: other.images.iter().map(|&m| self.images[m as usize]).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut images = vec![0u16; self.images.len()];
        for (i, &img) in self.images.iter().enumerate() {
            images[img as usize] = i as u16;
        }
        Self { images }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &img)| img as usize == i)
    }

    /// Order as the lcm of cycle lengths.
    pub fn order(&self) -> u64 {
        let n = self.images.len();
        let mut seen = vec![false; n];
        let mut ord = 1u64;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0u64;
            let mut cur = start;
            while !seen[cur] {
                seen[cur] = true;
                cur = self.images[cur] as usize;
                len += 1;
            }
            ord = lcm(ord, len);
        }
        ord
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// A finite permutation group: deduplicated elements in sorted order plus a
/// small generating subset.
#[derive(Debug, Clone)]
pub struct PermutationGroup {
    degree: usize,
    elements: Vec<Permutation>,
    generators: Vec<Permutation>,
}

impl PermutationGroup {
    pub fn trivial(degree: usize) -> Self {
        Self {
            degree,
            elements: vec![Permutation::identity(degree)],
            generators: vec![],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Permutation] {
        &self.elements
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    pub fn contains(&self, p: &Permutation) -> bool {
        p.degree() == self.degree && self.elements.binary_search(p).is_ok()
    }

    /// Wraps an element list that is already known to be a group, sorting it
    /// and finding a small generating set. Closure is the caller's contract;
    /// use [`subgroup_test`] to verify when in doubt.
    pub fn from_element_list(degree: usize, mut elements: Vec<Permutation>) -> Self {
        elements.sort();
        elements.dedup();
        let generators = find_generators(degree, &elements);
        Self { degree, elements, generators }
    }
}

/// Smallest group containing the generators, by breadth-first multiplication.
pub fn closure(generators: &[Permutation]) -> Result<PermutationGroup, GroupError> {
    closure_capped(generators, DEFAULT_CLOSURE_CAP)
}

pub fn closure_capped(
    generators: &[Permutation],
    cap: usize,
) -> Result<PermutationGroup, GroupError> {
    let degree = match generators.first() {
        Some(g) => g.degree(),
        None => return Ok(PermutationGroup::trivial(0)),
    };
    for g in generators {
        if g.degree() != degree {
            return Err(GroupError::DegreeMismatch(degree, g.degree()));
        }
    }
    let set = closure_set(degree, generators, cap)?;
    let mut elements: Vec<Permutation> = set.into_iter().collect();
    elements.sort();
    Ok(PermutationGroup {
        degree,
        elements,
        generators: generators.to_vec(),
    })
}

fn closure_set(
    degree: usize,
    generators: &[Permutation],
    cap: usize,
) -> Result<HashSet<Permutation>, GroupError> {
    let mut set: HashSet<Permutation> = HashSet::new();
    let id = Permutation::identity(degree);
    set.insert(id.clone());
    let mut frontier = vec![id];
    while let Some(cur) = frontier.pop() {
        for g in generators {
            let next = g.compose(&cur);
            if !set.contains(&next) {
                if set.len() >= cap {
                    return Err(GroupError::ClosureCapExceeded(cap));
                }
                set.insert(next.clone());
                frontier.push(next);
            }
        }
    }
    Ok(set)
}

/// Greedy generating subset: scan sorted elements and keep those not yet
/// generated. Produces at most `log2 |G|` generators.
fn find_generators(degree: usize, sorted_elements: &[Permutation]) -> Vec<Permutation> {
    let mut gens: Vec<Permutation> = Vec::new();
    let mut known: HashSet<Permutation> = HashSet::new();
    known.insert(Permutation::identity(degree));
    for e in sorted_elements {
        if !known.contains(e) {
            gens.push(e.clone());
            known = closure_set(degree, &gens, usize::MAX).expect("uncapped");
            if known.len() == sorted_elements.len() {
                break;
            }
        }
    }
    gens
}

/// The full symmetric group `S_n` in lexicographic order.
pub fn symmetric_group(n: usize) -> PermutationGroup {
    assert!(n <= 8, "S_n enumeration is meant for small degrees");
    let mut elements = Vec::new();
    let mut images: Vec<u16> = (0..n as u16).collect();
    loop {
        elements.push(Permutation { images: images.clone() });
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| images[i] < images[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| images[j] > images[i]).unwrap();
        images.swap(i, j);
        images[i + 1..].reverse();
    }
    let generators = if n >= 2 {
        let mut transposition: Vec<u16> = (0..n as u16).collect();
        transposition.swap(0, 1);
        let cycle: Vec<u16> = (0..n as u16).map(|i| (i + 1) % n as u16).collect();
        vec![
            Permutation { images: transposition },
            Permutation { images: cycle },
        ]
    } else {
        vec![]
    };
    PermutationGroup { degree: n, elements, generators }
}

/// All vertex bijections preserving the undirected edge set, by pruned
/// backtracking over partial images.
pub fn graph_automorphisms(
    vertices: usize,
    edges: &[(usize, usize)],
) -> Result<PermutationGroup, GroupError> {
    if vertices > MAX_AUTOMORPHISM_VERTICES {
        return Err(GroupError::TooManyVertices(vertices));
    }
    let mut adj = vec![vec![false; vertices]; vertices];
    for &(a, b) in edges {
        if a >= vertices || b >= vertices {
            return Err(GroupError::EdgeOutOfRange(a.max(b), vertices));
        }
        adj[a][b] = true;
        adj[b][a] = true;
    }

    let mut found: Vec<Permutation> = Vec::new();
    let mut images = vec![0u16; vertices];
    let mut used = vec![false; vertices];
    fn recurse(
        pos: usize,
        vertices: usize,
        adj: &[Vec<bool>],
        images: &mut [u16],
        used: &mut [bool],
        found: &mut Vec<Permutation>,
    ) {
        if pos == vertices {
            found.push(Permutation { images: images.to_vec() });
            return;
        }
        for cand in 0..vertices {
            if used[cand] {
                continue;
            }
            let consistent = (0..pos)
                .all(|k| adj[pos][k] == adj[cand][images[k] as usize]);
            if consistent {
                images[pos] = cand as u16;
                used[cand] = true;
                recurse(pos + 1, vertices, adj, images, used, found);
                used[cand] = false;
            }
        }
    }
    recurse(0, vertices, &adj, &mut images, &mut used, &mut found);
    Ok(PermutationGroup::from_element_list(vertices, found))
}

/// True iff the candidate set is closed, contains the identity, and lies
/// inside `group`.
pub fn subgroup_test(candidate: &[Permutation], group: &PermutationGroup) -> bool {
    if candidate.iter().any(|p| p.degree() != group.degree()) {
        return false;
    }
    let set: HashSet<&Permutation> = candidate.iter().collect();
    if !candidate.iter().any(|p| p.is_identity()) {
        return false;
    }
    for p in candidate {
        if !group.contains(p) {
            return false;
        }
        for q in candidate {
            if !set.contains(&p.compose(q)) {
                return false;
            }
        }
    }
    true
}

/// Isomorphism-invariant summary of a permutation group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupFingerprint {
    pub order: u64,
    /// element order -> count
    pub element_order_histogram: BTreeMap<u64, u64>,
    pub is_abelian: bool,
    pub center_order: u64,
    /// Invariant factors of G/[G,G], ascending (each divides the next).
    pub abelianization: Vec<u64>,
    pub derived_order: u64,
    /// False when the order exceeded [`FULL_FINGERPRINT_CAP`] and the
    /// histogram was sampled instead of enumerated.
    pub complete: bool,
}

impl GroupFingerprint {
    pub fn trivial() -> Self {
        Self {
            order: 1,
            element_order_histogram: BTreeMap::from([(1, 1)]),
            is_abelian: true,
            center_order: 1,
            abelianization: vec![],
            derived_order: 1,
            complete: true,
        }
    }
}

pub fn fingerprint(group: &PermutationGroup) -> GroupFingerprint {
    let order = group.order() as u64;
    let gens = group.generators();
    let is_abelian = gens
        .iter()
        .enumerate()
        .all(|(i, a)| gens[i..].iter().all(|b| a.compose(b) == b.compose(a)));

    if group.order() > FULL_FINGERPRINT_CAP {
        let mut histogram = BTreeMap::new();
        let mut rng = crate::rng::SplitMix64::new(0x1507_AB1E);
        for _ in 0..10_000 {
            let e = &group.elements()[rng.next_index(group.order())];
            *histogram.entry(e.order()).or_insert(0) += 1;
        }
        return GroupFingerprint {
            order,
            element_order_histogram: histogram,
            is_abelian,
            center_order: 0,
            abelianization: vec![],
            derived_order: 0,
            complete: false,
        };
    }

    let mut histogram = BTreeMap::new();
    for e in group.elements() {
        *histogram.entry(e.order()).or_insert(0) += 1;
    }

    let center_order = group
        .elements()
        .iter()
        .filter(|x| gens.iter().all(|g| x.compose(g) == g.compose(x)))
        .count() as u64;

    let derived = derived_subgroup(group);
    let derived_order = derived.len() as u64;
    let abelianization = abelian_invariant_factors(group, &derived);

    GroupFingerprint {
        order,
        element_order_histogram: histogram,
        is_abelian,
        center_order,
        abelianization,
        derived_order,
        complete: true,
    }
}

/// Normal closure of the generator commutators.
fn derived_subgroup(group: &PermutationGroup) -> HashSet<Permutation> {
    let degree = group.degree();
    let gens = group.generators();
    let mut dgens: Vec<Permutation> = Vec::new();
    for a in gens {
        for b in gens {
            let comm = a.inverse().compose(&b.inverse()).compose(a).compose(b);
            if !comm.is_identity() && !dgens.contains(&comm) {
                dgens.push(comm);
            }
        }
    }
    loop {
        let closed = closure_set(degree, &dgens, usize::MAX).expect("uncapped");
        let mut grew = false;
        'scan: for d in &closed {
            for g in gens {
                let conj = g.inverse().compose(d).compose(g);
                if !closed.contains(&conj) {
                    dgens.push(conj);
                    grew = true;
                    break 'scan;
                }
            }
        }
        if !grew {
            return closed;
        }
    }
}

/// Invariant factors of the abelian quotient G/D from the coset order
/// statistics: for each prime, the counts of elements of order dividing
/// `p^i` determine the partition of the p-part.
fn abelian_invariant_factors(
    group: &PermutationGroup,
    derived: &HashSet<Permutation>,
) -> Vec<u64> {
    let q_order = group.order() as u64 / derived.len() as u64;
    if q_order == 1 {
        return vec![];
    }
    // order of each coset gD: least k with g^k in D
    let mut coset_orders: Vec<u64> = Vec::new();
    let mut seen_cosets: HashSet<Permutation> = HashSet::new();
    for g in group.elements() {
        if seen_cosets.contains(g) {
            continue;
        }
        for d in derived {
            seen_cosets.insert(g.compose(d));
        }
        let mut power = g.clone();
        let mut k = 1u64;
        while !derived.contains(&power) {
            power = power.compose(g);
            k += 1;
        }
        coset_orders.push(k);
    }
    debug_assert_eq!(coset_orders.len() as u64, q_order);

    // partition of each p-part from counts of orders dividing p^i
    let mut primes: Vec<u64> = Vec::new();
    let mut rem = q_order;
    let mut p = 2;
    while p * p <= rem {
        if rem % p == 0 {
            primes.push(p);
            while rem % p == 0 {
                rem /= p;
            }
        }
        p += 1;
    }
    if rem > 1 {
        primes.push(rem);
    }

    let p_part = |o: u64, p: u64| {
        let mut op = o;
        while op % p == 0 {
            op /= p;
        }
        o / op
    };
    let mut per_prime: Vec<Vec<u32>> = Vec::new();
    for &p in &primes {
        // raw_i counts cosets whose order has p-part dividing p^i; dividing
        // by raw_0 strips the complement and leaves the Sylow-p counts.
        let mut counts: Vec<u64> = Vec::new();
        let mut i = 0u32;
        loop {
            let pi = p.pow(i);
            let c = coset_orders
                .iter()
                .filter(|&&o| p_part(o, p) <= pi)
                .count() as u64;
            if i > 0 && c == counts[counts.len() - 1] {
                break;
            }
            counts.push(c);
            i += 1;
        }
        let base = counts[0];
        // n_i = log_p (raw_i / raw_0); lambda_j = #{i >= 1 : n_i - n_{i-1} >= j}
        let logs: Vec<u32> = counts
            .iter()
            .map(|&c| {
                debug_assert_eq!(c % base, 0);
                let mut l = 0;
                let mut v = c / base;
                while v > 1 {
                    debug_assert_eq!(v % p, 0);
                    v /= p;
                    l += 1;
                }
                l
            })
            .collect();
        let diffs: Vec<u32> = (1..logs.len()).map(|i| logs[i] - logs[i - 1]).collect();
        let max_mult = diffs.first().copied().unwrap_or(0);
        let mut partition: Vec<u32> = Vec::new();
        for j in 1..=max_mult {
            let lam = diffs.iter().filter(|&&d| d >= j).count() as u32;
            partition.push(lam);
        }
        // partition holds exponents, largest first
        per_prime.push(partition);
    }

    // invariant factors: align the per-prime partitions by rank
    let rank = per_prime.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut factors: Vec<u64> = Vec::new();
    for r in 0..rank {
        let mut f = 1u64;
        for (pi, partition) in per_prime.iter().enumerate() {
            if let Some(&e) = partition.get(r) {
                f *= primes[pi].pow(e);
            }
        }
        factors.push(f);
    }
    factors.sort();
    factors
}
