//! Human-readable names for small groups, matched by fingerprint.
//!
//! The catalog holds the fingerprints of: cyclic groups up to order 5040,
//! elementary abelian `C2^2`/`C2^3`, symmetric and alternating groups up to
//! degree 7, dihedral groups up to `D20`, the simple group `PGL(3,2)`, the
//! order-72 wreath product `S3^2 : C2`, and all direct products of at most
//! three factors drawn from `{C2, C2^2, C2^3, C3, C4, S3, S4, S5, D4, D6,
//! D7}`. Within the catalog these invariants separate every pair of
//! non-isomorphic groups, so a fingerprint match is an identification; a
//! miss is reported as the raw fingerprint rather than a guess.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::{
    closure, fingerprint, symmetric_group, GroupFingerprint, Permutation, PermutationGroup,
};

/// Symbolic name for a group, e.g. `"C2 x S4"`. When `exact` is false the
/// label carries the raw fingerprint instead of a catalog name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupName {
    pub label: String,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct FpKey {
    order: u64,
    hist: Vec<(u64, u64)>,
    abelian: bool,
    center: u64,
    derived: u64,
    abelianization: Vec<u64>,
}

impl FpKey {
    fn of(fp: &GroupFingerprint) -> Self {
        Self {
            order: fp.order,
            hist: fp
                .element_order_histogram
                .iter()
                .map(|(&k, &v)| (k, v))
                .collect(),
            abelian: fp.is_abelian,
            center: fp.center_order,
            derived: fp.derived_order,
            abelianization: fp.abelianization.clone(),
        }
    }
}

fn euler_phi(mut n: u64) -> u64 {
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

fn cyclic_fp(n: u64) -> GroupFingerprint {
    let mut hist = BTreeMap::new();
    for d in 1..=n {
        if n % d == 0 {
            hist.insert(d, euler_phi(d));
        }
    }
    GroupFingerprint {
        order: n,
        element_order_histogram: hist,
        is_abelian: true,
        center_order: n,
        abelianization: if n == 1 { vec![] } else { vec![n] },
        derived_order: 1,
        complete: true,
    }
}

/// Canonical invariant factors (ascending, each dividing the next) from an
/// arbitrary list of cyclic factor sizes.
fn invariant_factors(cyclic_factors: &[u64]) -> Vec<u64> {
    // per-prime partitions of exponents, largest first
    let mut per_prime: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for &f in cyclic_factors {
        let mut rem = f;
        let mut p = 2u64;
        while p * p <= rem {
            if rem % p == 0 {
                let mut e = 0;
                while rem % p == 0 {
                    rem /= p;
                    e += 1;
                }
                per_prime.entry(p).or_default().push(e);
            }
            p += 1;
        }
        if rem > 1 {
            per_prime.entry(rem).or_default().push(1);
        }
    }
    for part in per_prime.values_mut() {
        part.sort_unstable_by(|a, b| b.cmp(a));
    }
    let rank = per_prime.values().map(|p| p.len()).max().unwrap_or(0);
    let mut factors = Vec::new();
    for r in 0..rank {
        let mut f = 1u64;
        for (&p, part) in &per_prime {
            if let Some(&e) = part.get(r) {
                f *= p.pow(e);
            }
        }
        factors.push(f);
    }
    factors.sort_unstable();
    factors
}

fn product_fp(a: &GroupFingerprint, b: &GroupFingerprint) -> GroupFingerprint {
    let mut hist = BTreeMap::new();
    for (&da, &ca) in &a.element_order_histogram {
        for (&db, &cb) in &b.element_order_histogram {
            let l = da / gcd64(da, db) * db;
            *hist.entry(l).or_insert(0) += ca * cb;
        }
    }
    let mut combined = a.abelianization.clone();
    combined.extend_from_slice(&b.abelianization);
    GroupFingerprint {
        order: a.order * b.order,
        element_order_histogram: hist,
        is_abelian: a.is_abelian && b.is_abelian,
        center_order: a.center_order * b.center_order,
        abelianization: invariant_factors(&combined),
        derived_order: a.derived_order * b.derived_order,
        complete: true,
    }
}

fn gcd64(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd64(b, a % b) }
}

fn dihedral_group(n: usize) -> PermutationGroup {
    let rotation: Vec<u16> = (0..n as u16).map(|i| (i + 1) % n as u16).collect();
    let reflection: Vec<u16> = (0..n as u16).map(|i| (n as u16 - i) % n as u16).collect();
    closure(&[
        Permutation::new(rotation).unwrap(),
        Permutation::new(reflection).unwrap(),
    ])
    .unwrap()
}

fn alternating_group(n: usize) -> PermutationGroup {
    let all = symmetric_group(n);
    let evens: Vec<Permutation> = all
        .elements()
        .iter()
        .filter(|p| perm_is_even(p))
        .cloned()
        .collect();
    PermutationGroup::from_element_list(n, evens)
}

fn perm_is_even(p: &Permutation) -> bool {
    let n = p.degree();
    let mut seen = vec![false; n];
    let mut transpositions = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut cur = start;
        while !seen[cur] {
            seen[cur] = true;
            cur = p.apply(cur);
            len += 1;
        }
        transpositions += len - 1;
    }
    transpositions % 2 == 0
}

/// Automorphisms of the Fano plane: all invertible 3x3 matrices over F_2
/// acting on the 7 nonzero vectors (as bitmasks 1..=7).
fn pgl_3_2_group() -> PermutationGroup {
    let mut elements = Vec::new();
    for rows in 0u32..512 {
        let r = [
            (rows & 0b111) as u16,
            ((rows >> 3) & 0b111) as u16,
            ((rows >> 6) & 0b111) as u16,
        ];
        // invertible over F_2 <=> rows are linearly independent
        let span_ok = r[0] != 0
            && r[1] != 0
            && r[2] != 0
            && r[0] != r[1]
            && r[0] != r[2]
            && r[1] != r[2]
            && (r[0] ^ r[1]) != r[2]
            && (r[0] ^ r[1]) != 0;
        if !span_ok {
            continue;
        }
        let mut images = vec![0u16; 7];
        for v in 1u16..=7 {
            let mut img = 0u16;
            for (i, &row) in r.iter().enumerate() {
                let parity = (row & v).count_ones() % 2;
                img |= (parity as u16) << i;
            }
            images[(v - 1) as usize] = img - 1;
        }
        if let Ok(p) = Permutation::new(images) {
            elements.push(p);
        }
    }
    PermutationGroup::from_element_list(7, elements)
}

/// The wreath product `S3 ≀ C2` of order 72 on six points.
fn s3_wr_c2_group() -> PermutationGroup {
    closure(&[
        Permutation::from_cycles(6, &[&[0, 1]]),
        Permutation::from_cycles(6, &[&[0, 1, 2]]),
        Permutation::from_cycles(6, &[&[3, 4]]),
        Permutation::from_cycles(6, &[&[3, 4, 5]]),
        Permutation::from_cycles(6, &[&[0, 3], &[1, 4], &[2, 5]]),
    ])
    .unwrap()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BaseKind {
    CyclicPower, // C2, C2^2, C2^3 (collapsed in labels)
    Cyclic,
    Dihedral,
    Symmetric,
}

struct Base {
    label: &'static str,
    kind: BaseKind,
    size: u64,
    c2_exponent: u32,
    fp: GroupFingerprint,
}

fn product_bases() -> Vec<Base> {
    let fp_of = |g: &PermutationGroup| fingerprint(g);
    let elementary = |k: usize| {
        let gens: Vec<Permutation> = (0..k)
            .map(|i| Permutation::from_cycles(2 * k, &[&[2 * i as u16, 2 * i as u16 + 1]]))
            .collect();
        closure(&gens).unwrap()
    };
    vec![
        Base { label: "C2", kind: BaseKind::CyclicPower, size: 2, c2_exponent: 1, fp: cyclic_fp(2) },
        Base { label: "C2^2", kind: BaseKind::CyclicPower, size: 4, c2_exponent: 2, fp: fp_of(&elementary(2)) },
        Base { label: "C2^3", kind: BaseKind::CyclicPower, size: 8, c2_exponent: 3, fp: fp_of(&elementary(3)) },
        Base { label: "C3", kind: BaseKind::Cyclic, size: 3, c2_exponent: 0, fp: cyclic_fp(3) },
        Base { label: "C4", kind: BaseKind::Cyclic, size: 4, c2_exponent: 0, fp: cyclic_fp(4) },
        Base { label: "S3", kind: BaseKind::Symmetric, size: 6, c2_exponent: 0, fp: fp_of(&symmetric_group(3)) },
        Base { label: "S4", kind: BaseKind::Symmetric, size: 24, c2_exponent: 0, fp: fp_of(&symmetric_group(4)) },
        Base { label: "S5", kind: BaseKind::Symmetric, size: 120, c2_exponent: 0, fp: fp_of(&symmetric_group(5)) },
        Base { label: "D4", kind: BaseKind::Dihedral, size: 8, c2_exponent: 0, fp: fp_of(&dihedral_group(4)) },
        Base { label: "D6", kind: BaseKind::Dihedral, size: 12, c2_exponent: 0, fp: fp_of(&dihedral_group(6)) },
        Base { label: "D7", kind: BaseKind::Dihedral, size: 14, c2_exponent: 0, fp: fp_of(&dihedral_group(7)) },
    ]
}

/// Canonical product label: C2-powers collapsed and leading, then the
/// remaining factors ordered C, D, S and by size.
fn product_label(factors: &[&Base]) -> String {
    let c2_total: u32 = factors.iter().map(|b| b.c2_exponent).sum();
    let mut rest: Vec<&Base> = factors
        .iter()
        .filter(|b| b.kind != BaseKind::CyclicPower)
        .copied()
        .collect();
    rest.sort_by_key(|b| (b.kind, b.size));
    let mut parts: Vec<String> = Vec::new();
    match c2_total {
        0 => {}
        1 => parts.push("C2".into()),
        k => parts.push(format!("C2^{k}")),
    }
    parts.extend(rest.iter().map(|b| b.label.to_string()));
    parts.join(" x ")
}

fn build_catalog() -> BTreeMap<FpKey, String> {
    let mut catalog: BTreeMap<FpKey, String> = BTreeMap::new();
    let mut insert = |fp: &GroupFingerprint, label: String| {
        catalog.entry(FpKey::of(fp)).or_insert(label);
    };

    insert(&GroupFingerprint::trivial(), "I".into());
    for n in 2..=5040u64 {
        insert(&cyclic_fp(n), format!("C{n}"));
    }

    let bases = product_bases();
    let base = |label: &str| bases.iter().find(|b| b.label == label).unwrap();
    insert(&base("C2^2").fp, "C2^2".into());
    insert(&base("C2^3").fp, "C2^3".into());

    for n in 3..=7usize {
        insert(&fingerprint(&symmetric_group(n)), format!("S{n}"));
    }
    for n in 4..=7usize {
        insert(&fingerprint(&alternating_group(n)), format!("A{n}"));
    }
    for n in 3..=20usize {
        insert(&fingerprint(&dihedral_group(n)), format!("D{n}"));
    }
    insert(&fingerprint(&pgl_3_2_group()), "PGL(3,2)".into());
    insert(&fingerprint(&s3_wr_c2_group()), "S3^2 : C2".into());

    // Spellings preferred by the result tables come before the generic scan.
    for pair in [
        ["C2", "S4"],
        ["C2", "S5"],
        ["C2^2", "S3"],
        ["S3", "S3"],
        ["D4", "S3"],
        ["C2", "D4"],
        ["C2^2", "S4"],
    ] {
        let (a, b) = (base(pair[0]), base(pair[1]));
        insert(&product_fp(&a.fp, &b.fp), product_label(&[a, b]));
    }

    for i in 0..bases.len() {
        for j in i..bases.len() {
            let fp = product_fp(&bases[i].fp, &bases[j].fp);
            insert(&fp, product_label(&[&bases[i], &bases[j]]));
            for k in j..bases.len() {
                let fp3 = product_fp(&fp, &bases[k].fp);
                insert(&fp3, product_label(&[&bases[i], &bases[j], &bases[k]]));
            }
        }
    }
    catalog
}

fn catalog() -> &'static BTreeMap<FpKey, String> {
    static CATALOG: OnceLock<BTreeMap<FpKey, String>> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

fn fingerprint_label(fp: &GroupFingerprint) -> String {
    let hist: Vec<String> = fp
        .element_order_histogram
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    format!(
        "order={} hist={{{}}} center={} derived={} ab={:?}",
        fp.order,
        hist.join(","),
        fp.center_order,
        fp.derived_order,
        fp.abelianization
    )
}

/// Looks the fingerprint up in the catalog. A miss or an incomplete
/// fingerprint yields the raw fingerprint as the label with `exact: false`.
pub fn name_group(fp: &GroupFingerprint) -> GroupName {
    if !fp.complete {
        return GroupName { label: fingerprint_label(fp), exact: false };
    }
    match catalog().get(&FpKey::of(fp)) {
        Some(label) => GroupName { label: label.clone(), exact: true },
        None => GroupName { label: fingerprint_label(fp), exact: false },
    }
}

fn factorial_u128(n: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for k in 2..=n as u128 {
        acc = acc.checked_mul(k)?;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc)
}

/// Names a concrete permutation group. A group equal to the full symmetric
/// group of its degree is named `S{degree}` directly, skipping the
/// fingerprint at order `degree!`.
pub fn name_permutation_group(group: &PermutationGroup) -> GroupName {
    let degree = group.degree();
    if degree >= 3 {
        if let Some(fact) = factorial_u128(degree) {
            if group.order() as u128 == fact {
                return GroupName { label: format!("S{degree}"), exact: true };
            }
        }
    }
    name_group(&fingerprint(group))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symgroup::subgroup_test;

    /// Direct product acting on disjoint point sets.
    fn direct_product(a: &PermutationGroup, b: &PermutationGroup) -> PermutationGroup {
        let da = a.degree();
        let degree = da + b.degree();
        let mut elements = Vec::with_capacity(a.order() * b.order());
        for ga in a.elements() {
            for gb in b.elements() {
                let mut images: Vec<u16> = Vec::with_capacity(degree);
                images.extend(ga.images().iter().copied());
                images.extend(gb.images().iter().map(|&x| x + da as u16));
                elements.push(Permutation::new(images).unwrap());
            }
        }
        PermutationGroup::from_element_list(degree, elements)
    }

    #[test]
    fn names_of_small_groups() {
        assert_eq!(name_group(&GroupFingerprint::trivial()).label, "I");
        let c2 = closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap();
        assert_eq!(name_permutation_group(&c2).label, "C2");
        let s3 = symmetric_group(3);
        assert_eq!(name_permutation_group(&s3).label, "S3");
        let d4 = dihedral_group(4);
        assert_eq!(name_permutation_group(&d4).label, "D4");
        let d6 = dihedral_group(6);
        assert_eq!(name_permutation_group(&d6).label, "D6");
        let a4 = alternating_group(4);
        assert_eq!(name_permutation_group(&a4).label, "A4");
    }

    #[test]
    fn symmetric_fast_path() {
        let s7 = symmetric_group(7);
        let name = name_permutation_group(&s7);
        assert_eq!(name.label, "S7");
        assert!(name.exact);
        let s4 = symmetric_group(4);
        assert_eq!(name_permutation_group(&s4).label, "S4");
    }

    #[test]
    fn octahedral_automorphisms_are_c2_x_s4() {
        let octahedron: [(usize, usize); 12] = [
            (0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3),
            (1, 5), (2, 4), (2, 5), (3, 4), (3, 5), (4, 5),
        ];
        let oct = crate::symgroup::graph_automorphisms(6, &octahedron).unwrap();
        let name = name_permutation_group(&oct);
        assert_eq!(name.label, "C2 x S4");
        assert!(name.exact);
        // the perfect matching graph has the same abstract automorphism group
        let pm = crate::symgroup::graph_automorphisms(6, &[(0, 3), (1, 4), (2, 5)]).unwrap();
        assert_eq!(name_permutation_group(&pm).label, "C2 x S4");
    }

    #[test]
    fn pgl_3_2_is_named() {
        let g = pgl_3_2_group();
        assert_eq!(g.order(), 168);
        let name = name_permutation_group(&g);
        assert_eq!(name.label, "PGL(3,2)");
        assert!(name.exact);
    }

    #[test]
    fn product_fingerprints_match_explicit_groups() {
        // convolution route vs an explicitly constructed product group
        let cases: Vec<(PermutationGroup, &str)> = vec![
            (
                direct_product(
                    &closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap(),
                    &symmetric_group(4),
                ),
                "C2 x S4",
            ),
            (direct_product(&symmetric_group(3), &symmetric_group(3)), "S3 x S3"),
            (
                direct_product(
                    &closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap(),
                    &dihedral_group(4),
                ),
                "C2 x D4",
            ),
            (direct_product(&dihedral_group(4), &symmetric_group(3)), "D4 x S3"),
            (
                direct_product(
                    &closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap(),
                    &symmetric_group(5),
                ),
                "C2 x S5",
            ),
        ];
        for (group, expect) in cases {
            let name = name_permutation_group(&group);
            assert_eq!(name.label, expect);
            assert!(name.exact);
        }
    }

    #[test]
    fn c2sq_x_s3_prefers_the_table_spelling() {
        let c2 = closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap();
        let c2sq = direct_product(&c2, &c2);
        let g = direct_product(&c2sq, &symmetric_group(3));
        assert_eq!(name_permutation_group(&g).label, "C2^2 x S3");
    }

    #[test]
    fn wreath_product_is_distinguished_from_the_direct_product() {
        let wreath = s3_wr_c2_group();
        assert_eq!(wreath.order(), 72);
        assert_eq!(name_permutation_group(&wreath).label, "S3^2 : C2");
        let c2 = closure(&[Permutation::from_cycles(2, &[&[0, 1]])]).unwrap();
        let direct = direct_product(&direct_product(&symmetric_group(3), &symmetric_group(3)), &c2);
        assert_eq!(direct.order(), 72);
        assert_ne!(
            name_permutation_group(&direct).label,
            "S3^2 : C2",
            "direct and wreath order-72 groups must not collide"
        );
    }

    #[test]
    fn unknown_group_reports_fingerprint() {
        // C11 x C11 is far outside the catalog (not cyclic, order 121)
        let a = Permutation::from_cycles(22, &[&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]]);
        let b = Permutation::from_cycles(
            22,
            &[&[11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21]],
        );
        let g = closure(&[a, b]).unwrap();
        assert_eq!(g.order(), 121);
        let name = name_permutation_group(&g);
        assert!(!name.exact);
        assert!(name.label.contains("order=121"));
    }

    #[test]
    fn naming_round_trips_on_sample_catalog_groups() {
        let mut groups: Vec<(PermutationGroup, String)> = vec![
            (symmetric_group(5), "S5".into()),
            (alternating_group(5), "A5".into()),
            (dihedral_group(12), "D12".into()),
            (closure(&[Permutation::from_cycles(6, &[&[0, 1, 2, 3, 4, 5]])]).unwrap(), "C6".into()),
            (s3_wr_c2_group(), "S3^2 : C2".into()),
        ];
        for n in [2usize, 3, 4] {
            let gens: Vec<Permutation> = (0..n)
                .map(|i| Permutation::from_cycles(2 * n, &[&[2 * i as u16, 2 * i as u16 + 1]]))
                .collect();
            let label = if n == 1 { "C2".to_string() } else { format!("C2^{n}") };
            groups.push((closure(&gens).unwrap(), label));
        }
        for (group, expect) in groups {
            let name = name_permutation_group(&group);
            assert_eq!(name.label, expect);
            assert!(name.exact, "{expect} should be an exact catalog match");
        }
    }

    #[test]
    fn alternating_groups_are_subgroups() {
        for n in 4..=6 {
            let a = alternating_group(n);
            let s = symmetric_group(n);
            assert_eq!(a.order() * 2, s.order());
            assert!(subgroup_test(a.elements(), &s));
        }
    }
}
