//! Detection and naming of the symmetry a critical point retains.
//!
//! The vertex isotropy group `I_V` collects the ambient permutations that
//! fix every site value of a configuration; the edge isotropy group `I_E`
//! collects those preserving all pairwise kernel values, so `I_V ⊆ I_E`
//! always. Detected sets are verified to be groups: borderline numerics
//! trigger a tolerance tightening, and only if that fails is the set pruned
//! to a closed subset and flagged.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::losses::{Configuration, FamilyKind, Gauge, Geometry, LossError, LossInstance};
use crate::optimize::CriticalPointRecord;
use crate::symgroup::{name_permutation_group, GroupName, Permutation, PermutationGroup};

#[derive(Debug, Error)]
pub enum IsotropyError {
    #[error("ambient group degree {ambient} does not match the {sites} configuration sites")]
    DegreeMismatch { ambient: usize, sites: usize },
    #[error("edge isotropy is not defined for this loss family")]
    EdgeIsotropyUndefined,
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// A detected isotropy group with its name and detection diagnostics.
#[derive(Debug, Clone)]
pub struct IsotropyReport {
    pub group: PermutationGroup,
    pub name: GroupName,
    pub tolerance_used: f64,
    /// Rejected elements that came within 10x of the acceptance threshold:
    /// `(ambient element index, deviation)`.
    pub near_misses: Vec<(usize, f64)>,
    /// Set when the accepted set had to be pruned to restore closure.
    pub flagged: bool,
}

/// Site values a permutation acts on: one scalar or one plane point per site.
fn site_vectors(x: &Configuration) -> Vec<Vec<f64>> {
    match x.geometry {
        Geometry::FunctionOnPoints { .. } | Geometry::ScalarPerVertex { .. } => {
            x.values.iter().map(|&v| vec![v]).collect()
        }
        Geometry::ParticlesInPlane { .. } => {
            x.positions().iter().map(|p| p.to_vec()).collect()
        }
    }
}

fn site_scale(sites: &[Vec<f64>]) -> f64 {
    1.0 + sites
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn is_closed(elements: &[&Permutation]) -> bool {
    let set: HashSet<&Permutation> = elements.iter().copied().collect();
    for a in elements {
        for b in elements {
            if !set.contains(&a.compose(b)) {
                return false;
            }
        }
    }
    true
}

/// Accepts ambient elements by deviation threshold, tightening the
/// tolerance up to three times if the accepted set fails closure, and
/// pruning (with a flag) as the last resort.
fn detect_group(
    ambient: &PermutationGroup,
    deviations: &[f64],
    tol: f64,
    scale: f64,
) -> (PermutationGroup, f64, Vec<(usize, f64)>, bool) {
    let near_threshold = 10.0 * tol * scale;
    let near_misses: Vec<(usize, f64)> = deviations
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > tol * scale && d <= near_threshold)
        .map(|(i, &d)| (i, d))
        .collect();

    let mut tol_used = tol;
    for _attempt in 0..4 {
        let threshold = tol_used * scale;
        let accepted: Vec<&Permutation> = ambient
            .elements()
            .iter()
            .zip(deviations)
            .filter(|(_, &d)| d <= threshold)
            .map(|(p, _)| p)
            .collect();
        // the full ambient group is closed by construction
        let closed = accepted.len() == ambient.order() || is_closed(&accepted);
        if closed {
            let group = PermutationGroup::from_element_list(
                ambient.degree(),
                accepted.into_iter().cloned().collect(),
            );
            return (group, tol_used, near_misses, false);
        }
        tol_used *= 0.1;
    }

    // prune to a closed subset: drop elements whose products escape the set
    let threshold = tol * scale;
    let mut kept: Vec<Permutation> = ambient
        .elements()
        .iter()
        .zip(deviations)
        .filter(|(_, &d)| d <= threshold)
        .map(|(p, _)| p.clone())
        .collect();
    loop {
        let set: HashSet<Permutation> = kept.iter().cloned().collect();
        let bad: Vec<usize> = (0..kept.len())
            .filter(|&i| kept.iter().any(|b| !set.contains(&kept[i].compose(b))))
            .collect();
        if bad.is_empty() {
            break;
        }
        for &i in bad.iter().rev() {
            if kept.len() > 1 {
                kept.remove(i);
            }
        }
        if kept.len() <= 1 {
            break;
        }
    }
    if !kept.iter().any(|p| p.is_identity()) {
        kept.push(Permutation::identity(ambient.degree()));
    }
    let group = PermutationGroup::from_element_list(ambient.degree(), kept);
    (group, tol, near_misses, true)
}

fn build_report(
    ambient: &PermutationGroup,
    deviations: &[f64],
    tol: f64,
    scale: f64,
) -> IsotropyReport {
    let (group, tolerance_used, near_misses, flagged) =
        detect_group(ambient, deviations, tol, scale);
    let name = name_permutation_group(&group);
    IsotropyReport { group, name, tolerance_used, near_misses, flagged }
}

/// `I_V`: ambient permutations fixing every site value, to relative
/// tolerance `tol · (1 + ‖x‖_∞)`.
pub fn vertex_isotropy(
    ambient: &PermutationGroup,
    x: &Configuration,
    tol: f64,
) -> Result<IsotropyReport, IsotropyError> {
    let sites = site_vectors(x);
    if ambient.degree() != sites.len() {
        return Err(IsotropyError::DegreeMismatch {
            ambient: ambient.degree(),
            sites: sites.len(),
        });
    }
    let scale = site_scale(&sites);
    let deviations: Vec<f64> = ambient
        .elements()
        .iter()
        .map(|sigma| {
            let mut worst: f64 = 0.0;
            for (i, site) in sites.iter().enumerate() {
                let image = &sites[sigma.apply(i)];
                for (a, b) in image.iter().zip(site) {
                    worst = worst.max((a - b).abs());
                }
            }
            worst
        })
        .collect();
    Ok(build_report(ambient, &deviations, tol, scale))
}

/// The pairwise kernel-value table the edge isotropy test preserves, and
/// the index set the permutations act on.
fn kernel_table(
    instance: &LossInstance,
    x: &Configuration,
) -> Result<(Vec<Vec<f64>>, Option<Vec<(usize, usize)>>), IsotropyError> {
    match instance.kind() {
        FamilyKind::GraphEdgePairs => {
            let edges = instance
                .directed_edges()
                .expect("graph instances carry their directed edges");
            let kernel = instance.kernel();
            let n = edges.len();
            let mut table = vec![vec![0.0; n]; n];
            let v = &x.values;
            for (i, &(a, b)) in edges.iter().enumerate() {
                for (j, &(c, d)) in edges.iter().enumerate() {
                    table[i][j] = kernel
                        .eval(&[v[a], v[b]], &[v[c], v[d]])
                        .map_err(LossError::from)?;
                }
            }
            Ok((table, Some(edges)))
        }
        FamilyKind::ParticlePairs => {
            let pos = x.positions();
            let kernel = instance.kernel();
            let n = pos.len();
            let mut table = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    table[i][j] = kernel.eval(&pos[i], &pos[j]).map_err(LossError::from)?;
                }
            }
            Ok((table, None))
        }
        FamilyKind::ProjectiveTarget | FamilyKind::ProjectiveFree => {
            Err(IsotropyError::EdgeIsotropyUndefined)
        }
    }
}

/// `I_E`: ambient permutations preserving every pairwise kernel value, to
/// relative tolerance `tol · (1 + max |κ|)`. Defined for graph and particle
/// instances.
pub fn edge_isotropy(
    ambient: &PermutationGroup,
    instance: &LossInstance,
    x: &Configuration,
    tol: f64,
) -> Result<IsotropyReport, IsotropyError> {
    if ambient.degree() != instance.geometry().sites() {
        return Err(IsotropyError::DegreeMismatch {
            ambient: ambient.degree(),
            sites: instance.geometry().sites(),
        });
    }
    let (table, edges) = kernel_table(instance, x)?;
    let scale = 1.0
        + table
            .iter()
            .flatten()
            .fold(0.0f64, |m, &v| m.max(v.abs()));

    let deviations: Vec<f64> = match edges {
        Some(edges) => {
            // permutations act on directed edges through their endpoints
            let index: HashMap<(usize, usize), usize> = edges
                .iter()
                .enumerate()
                .map(|(i, &e)| (e, i))
                .collect();
            ambient
                .elements()
                .iter()
                .map(|sigma| {
                    let image: Vec<usize> = edges
                        .iter()
                        .map(|&(a, b)| index[&(sigma.apply(a), sigma.apply(b))])
                        .collect();
                    let mut worst: f64 = 0.0;
                    for i in 0..edges.len() {
                        for j in 0..edges.len() {
                            worst = worst.max((table[image[i]][image[j]] - table[i][j]).abs());
                        }
                    }
                    worst
                })
                .collect()
        }
        None => ambient
            .elements()
            .iter()
            .map(|sigma| {
                let n = table.len();
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        worst =
                            worst.max((table[sigma.apply(i)][sigma.apply(j)] - table[i][j]).abs());
                    }
                }
                worst
            })
            .collect(),
    };
    Ok(build_report(ambient, &deviations, tol, scale))
}

pub fn group_contains(sup: &PermutationGroup, sub: &PermutationGroup) -> bool {
    sub.elements().iter().all(|p| sup.contains(p))
}

/// Continuous symmetry quotient applied when comparing configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousQuotient {
    None,
    /// Translations, rotations and reflections of the plane.
    PlanarIsometry,
    /// Residual symmetry of the gauge-fixed inner-product losses: the
    /// rotation restoring the gauge plus independent axis sign flips.
    SignFlipsAndGauge,
}

/// Critical points grouped into ambient-group orbits.
#[derive(Debug, Clone)]
pub struct OrbitCatalog {
    /// Lowest-loss member of each orbit, sorted by loss.
    pub representatives: Vec<CriticalPointRecord>,
    /// How many records matched each representative.
    pub multiplicities: Vec<usize>,
    pub tolerance: f64,
}

fn flatten_positions(pos: &[[f64; 2]]) -> Vec<f64> {
    pos.iter().flatten().copied().collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Optimal rigid alignment (rotation, optionally with reflection, plus
/// translation) of `p` onto `q`; returns the aligned copy of `p`.
fn procrustes_align(p: &[[f64; 2]], q: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = p.len() as f64;
    let centroid = |pts: &[[f64; 2]]| {
        let mut c = [0.0; 2];
        for pt in pts {
            c[0] += pt[0];
            c[1] += pt[1];
        }
        [c[0] / n, c[1] / n]
    };
    let cp = centroid(p);
    let cq = centroid(q);
    let pc: Vec<[f64; 2]> = p.iter().map(|v| [v[0] - cp[0], v[1] - cp[1]]).collect();
    let qc: Vec<[f64; 2]> = q.iter().map(|v| [v[0] - cq[0], v[1] - cq[1]]).collect();

    let apply = |pts: &[[f64; 2]], c: f64, s: f64, reflect: bool| -> Vec<[f64; 2]> {
        pts.iter()
            .map(|v| {
                let y = if reflect { -v[1] } else { v[1] };
                [c * v[0] - s * y + cq[0], s * v[0] + c * y + cq[1]]
            })
            .collect()
    };
    let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
    for reflect in [false, true] {
        let mut dot = 0.0;
        let mut cross = 0.0;
        for (pv, qv) in pc.iter().zip(&qc) {
            let py = if reflect { -pv[1] } else { pv[1] };
            dot += pv[0] * qv[0] + py * qv[1];
            cross += pv[0] * qv[1] - py * qv[0];
        }
        let norm = (dot * dot + cross * cross).sqrt();
        let (c, s) = if norm > 0.0 { (dot / norm, cross / norm) } else { (1.0, 0.0) };
        let aligned = apply(&pc, c, s, reflect);
        let residual: f64 = aligned
            .iter()
            .zip(q)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum();
        if best.as_ref().map_or(true, |(r, _)| residual < *r) {
            best = Some((residual, aligned));
        }
    }
    best.unwrap().1
}

/// Rotates positions so the first particle lies on the non-negative x-axis.
fn rotate_to_gauge(pos: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let r = (pos[0][0] * pos[0][0] + pos[0][1] * pos[0][1]).sqrt();
    if r < 1e-12 {
        return pos.to_vec();
    }
    let c = pos[0][0] / r;
    let s = -pos[0][1] / r;
    pos.iter()
        .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect()
}

fn sign_flip(pos: &[[f64; 2]], fx: bool, fy: bool) -> Vec<[f64; 2]> {
    pos.iter()
        .map(|p| [if fx { -p[0] } else { p[0] }, if fy { -p[1] } else { p[1] }])
        .collect()
}

/// All gauge-compatible images of a particle configuration under the
/// ambient permutation and residual continuous action.
fn gauge_images(pos: &[[f64; 2]], ambient: &PermutationGroup) -> Vec<Vec<f64>> {
    let n = pos.len();
    let mut images = Vec::with_capacity(ambient.order() * 4);
    for sigma in ambient.elements() {
        let mut permuted = vec![[0.0; 2]; n];
        for (i, &p) in pos.iter().enumerate() {
            permuted[sigma.apply(i)] = p;
        }
        let rotated = rotate_to_gauge(&permuted);
        for fx in [false, true] {
            for fy in [false, true] {
                images.push(flatten_positions(&sign_flip(&rotated, fx, fy)));
            }
        }
    }
    images
}

/// True when some ambient element (plus the continuous alignment, when
/// enabled) carries `a` onto `b` within the tolerance.
pub fn configs_equivalent(
    a: &Configuration,
    b: &Configuration,
    ambient: &PermutationGroup,
    continuous: ContinuousQuotient,
    tol: f64,
) -> bool {
    let scale = 1.0
        + b.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let threshold = tol * scale;
    match continuous {
        ContinuousQuotient::None => {
            let sa = site_vectors(a);
            let sb = site_vectors(b);
            if sa.len() != sb.len() {
                return false;
            }
            ambient.elements().iter().any(|sigma| {
                sa.iter().enumerate().all(|(i, site)| {
                    sb[sigma.apply(i)]
                        .iter()
                        .zip(site)
                        .all(|(x, y)| (x - y).abs() <= threshold)
                })
            })
        }
        ContinuousQuotient::PlanarIsometry => {
            let pa = a.positions();
            let pb = b.positions();
            let flat_b = flatten_positions(&pb);
            ambient.elements().iter().any(|sigma| {
                let mut permuted = vec![[0.0; 2]; pa.len()];
                for (i, &p) in pa.iter().enumerate() {
                    permuted[sigma.apply(i)] = p;
                }
                let aligned = procrustes_align(&permuted, &pb);
                max_abs_diff(&flatten_positions(&aligned), &flat_b) <= threshold
            })
        }
        ContinuousQuotient::SignFlipsAndGauge => {
            let pb = flatten_positions(&b.positions());
            gauge_images(&a.positions(), ambient)
                .iter()
                .any(|img| max_abs_diff(img, &pb) <= threshold)
        }
    }
}

/// Greedy orbit clustering: records are scanned in (loss, configuration)
/// order, so each orbit's representative is its lowest-loss member.
pub fn dedup_orbits(
    records: &[CriticalPointRecord],
    ambient: &PermutationGroup,
    continuous: ContinuousQuotient,
    tol: f64,
) -> OrbitCatalog {
    // (loss, values) ordering makes the scan deterministic and puts each
    // orbit's lowest-loss member first
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&i, &j| {
        records[i].loss.total_cmp(&records[j].loss).then_with(|| {
            for (a, b) in records[i].config.values.iter().zip(&records[j].config.values) {
                let c = a.total_cmp(b);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    let mut representatives: Vec<CriticalPointRecord> = Vec::new();
    let mut multiplicities: Vec<usize> = Vec::new();
    for &idx in &order {
        let rec = &records[idx];
        let mut matched = None;
        for (r, rep) in representatives.iter().enumerate() {
            // cheap loss prefilter: same-orbit losses agree far tighter
            if (rec.loss - rep.loss).abs() > 1e-4 * (1.0 + rep.loss.abs()) {
                continue;
            }
            if configs_equivalent(&rec.config, &rep.config, ambient, continuous, tol) {
                matched = Some(r);
                break;
            }
        }
        match matched {
            Some(r) => multiplicities[r] += 1,
            None => {
                representatives.push(rec.clone());
                multiplicities.push(1);
            }
        }
    }
    OrbitCatalog { representatives, multiplicities, tolerance: tol }
}

/// Size of the ambient-group orbit of a configuration after quotienting by
/// the enabled continuous symmetry, by explicit image enumeration.
pub fn count_orbit_members(
    config: &Configuration,
    ambient: &PermutationGroup,
    continuous: ContinuousQuotient,
    tol: f64,
) -> usize {
    let scale = 1.0 + config.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let threshold = tol * scale;
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut push_unique = |img: Vec<f64>, kept: &mut Vec<Vec<f64>>| {
        if !kept.iter().any(|k| max_abs_diff(k, &img) <= threshold) {
            kept.push(img);
        }
    };
    match continuous {
        ContinuousQuotient::None => {
            let sites = site_vectors(config);
            for sigma in ambient.elements() {
                let mut image = vec![vec![]; sites.len()];
                for (i, s) in sites.iter().enumerate() {
                    image[sigma.apply(i)] = s.clone();
                }
                push_unique(image.into_iter().flatten().collect(), &mut kept);
            }
        }
        ContinuousQuotient::SignFlipsAndGauge => {
            for img in gauge_images(&config.positions(), ambient) {
                push_unique(img, &mut kept);
            }
        }
        ContinuousQuotient::PlanarIsometry => {
            let pos = config.positions();
            let mut images: Vec<Vec<[f64; 2]>> = Vec::new();
            'outer: for sigma in ambient.elements() {
                let mut permuted = vec![[0.0; 2]; pos.len()];
                for (i, &p) in pos.iter().enumerate() {
                    permuted[sigma.apply(i)] = p;
                }
                for kept_img in &images {
                    let aligned = procrustes_align(&permuted, kept_img);
                    if max_abs_diff(
                        &flatten_positions(&aligned),
                        &flatten_positions(kept_img),
                    ) <= threshold
                    {
                        continue 'outer;
                    }
                }
                images.push(permuted);
            }
            return images.len();
        }
    }
    kept.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::losses::{Gauge, LossInstance, OCTAHEDRAL_EDGES};
    use crate::optimize::{Classification, Method};

    const TOL: f64 = 1e-6;

    fn octahedral_instance() -> LossInstance {
        LossInstance::graph_edge_pairs(
            6,
            &OCTAHEDRAL_EDGES,
            Kernel::inner_power_pair(6, 4, 7.0).unwrap(),
        )
        .unwrap()
    }

    fn repulsive_instance() -> LossInstance {
        LossInstance::particle_pairs(4, Kernel::Repulsive, Gauge::None, true).unwrap()
    }

    fn square_config() -> Configuration {
        let side = 0.625f64.sqrt().sqrt();
        Configuration::from_positions(
            &[[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]],
            Gauge::None,
        )
    }

    #[test]
    fn uniform_octahedral_configuration_has_full_isotropy() {
        let inst = octahedral_instance();
        let x = Configuration::constant(1.0393, inst.geometry());
        let report = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
        assert_eq!(report.group.order(), 48);
        assert_eq!(report.name.label, "C2 x S4");
        assert!(report.name.exact);
        assert!(!report.flagged);
        assert!(crate::symgroup::subgroup_test(
            report.group.elements(),
            inst.symmetry()
        ));
    }

    #[test]
    fn projective_zero_function_has_full_pgl_isotropy() {
        let atlas = crate::projgeom::enumerate_atlas(2, 2).unwrap();
        let line = crate::projgeom::enumerate_atlas(1, 2).unwrap();
        let group = crate::projgeom::enumerate_pgl(&atlas).unwrap();
        let inst = LossInstance::projective_target(
            &atlas,
            &line,
            &group,
            Kernel::inner_power(8).unwrap(),
            true,
        )
        .unwrap();
        let x = Configuration::zeros(inst.geometry());
        let report = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
        assert_eq!(report.group.order(), 168);
        assert_eq!(report.name.label, "PGL(3,2)");
    }

    #[test]
    fn repulsive_square_has_trivial_iv_but_dihedral_ie() {
        let inst = repulsive_instance();
        let x = square_config();
        let iv = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
        assert_eq!(iv.group.order(), 1);
        assert_eq!(iv.name.label, "I");
        let ie = edge_isotropy(inst.symmetry(), &inst, &x, TOL).unwrap();
        assert_eq!(ie.group.order(), 8);
        assert_eq!(ie.name.label, "D4");
        assert!(group_contains(&ie.group, &iv.group));
    }

    #[test]
    fn doubled_vertex_triangle_has_iv_c2_inside_ie_klein() {
        let kernel = Kernel::distance_power(6, 4, 1.0).unwrap();
        let inst = LossInstance::particle_pairs(4, kernel, Gauge::None, true).unwrap();
        let u = (2.0f64 / 3.0).sqrt();
        let side = u.sqrt();
        let x = Configuration::from_positions(
            &[
                [0.0, 0.0],
                [side, 0.0],
                [side / 2.0, side * 3.0f64.sqrt() / 2.0],
                [0.0, 0.0],
            ],
            Gauge::None,
        );
        let iv = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
        assert_eq!(iv.group.order(), 2, "swap of the coincident pair");
        assert_eq!(iv.name.label, "C2");
        let ie = edge_isotropy(inst.symmetry(), &inst, &x, TOL).unwrap();
        assert_eq!(ie.group.order(), 4);
        assert_eq!(ie.name.label, "C2^2");
        assert!(group_contains(&ie.group, &iv.group));
    }

    #[test]
    fn graph_edge_isotropy_contains_vertex_isotropy() {
        let inst = octahedral_instance();
        let mut rng = crate::rng::SplitMix64::new(14);
        for _ in 0..5 {
            let x = Configuration::new(
                (0..6).map(|_| rng.next_normal()).collect(),
                inst.geometry(),
            )
            .unwrap();
            let iv = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
            let ie = edge_isotropy(inst.symmetry(), &inst, &x, TOL).unwrap();
            assert!(group_contains(&ie.group, &iv.group));
        }
    }

    #[test]
    fn conjugation_covariance() {
        let inst = octahedral_instance();
        // a configuration with a nontrivial stabilizer: one vertex differs
        let x = Configuration::new(
            vec![-1.0393, 1.0393, 1.0393, 1.0393, 1.0393, 1.0393],
            inst.geometry(),
        )
        .unwrap();
        let base = vertex_isotropy(inst.symmetry(), &x, TOL).unwrap();
        assert_eq!(base.group.order(), 8, "stabilizer of one vertex is D4");
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..5 {
            let g = &inst.symmetry().elements()[rng.next_index(48)];
            let moved = inst.apply_symmetry(&x, g).unwrap();
            let report = vertex_isotropy(inst.symmetry(), &moved, TOL).unwrap();
            let conjugated: Vec<Permutation> = base
                .group
                .elements()
                .iter()
                .map(|h| g.compose(h).compose(&g.inverse()))
                .collect();
            let expected = PermutationGroup::from_element_list(6, conjugated);
            assert_eq!(report.group.order(), expected.order());
            assert!(expected.elements().iter().all(|p| report.group.contains(p)));
        }
    }

    #[test]
    fn tolerance_window_is_stable_on_golden_configurations() {
        let inst = octahedral_instance();
        let x = Configuration::new(
            vec![-1.0393, 1.0393, 1.0393, 1.0393, 1.0393, 1.0393],
            inst.geometry(),
        )
        .unwrap();
        for tol in [1e-7, 1e-6, 1e-5] {
            let report = vertex_isotropy(inst.symmetry(), &x, tol).unwrap();
            assert_eq!(report.group.order(), 8, "unstable at tol {tol}");
        }
    }

    #[test]
    fn degree_mismatch_is_rejected() {
        let inst = octahedral_instance();
        let other = crate::symgroup::symmetric_group(4);
        let x = Configuration::constant(1.0, inst.geometry());
        assert!(matches!(
            vertex_isotropy(&other, &x, TOL),
            Err(IsotropyError::DegreeMismatch { .. })
        ));
    }

    fn record(config: Configuration, loss: f64) -> CriticalPointRecord {
        CriticalPointRecord {
            config,
            loss,
            grad_norm: 0.0,
            hess_spectrum: vec![],
            classification: Classification::Minimum,
            null_count: 0,
            method: Method::Gd,
            seed: 0,
            iterations: 0,
        }
    }

    #[test]
    fn dedup_merges_duplicates_and_group_images() {
        let inst = octahedral_instance();
        let x = Configuration::new(
            vec![-1.0393, 1.0393, 1.0393, 1.0393, 1.0393, 1.0393],
            inst.geometry(),
        )
        .unwrap();
        let sigma = &inst.symmetry().elements()[13];
        let moved = inst.apply_symmetry(&x, sigma).unwrap();
        let distinct = Configuration::constant(1.0393, inst.geometry());
        let records = vec![
            record(x.clone(), -16261.0),
            record(moved, -16261.0),
            record(x.clone(), -16261.0),
            record(distinct, -29269.33),
        ];
        let catalog = dedup_orbits(&records, inst.symmetry(), ContinuousQuotient::None, TOL);
        assert_eq!(catalog.representatives.len(), 2);
        // sorted by loss: the uniform minimum first
        assert_eq!(catalog.multiplicities, vec![1, 3]);
    }

    #[test]
    fn planar_isometry_dedup_aligns_rotated_copies() {
        let inst = LossInstance::particle_pairs(
            4,
            Kernel::distance_power(6, 4, 1.0).unwrap(),
            Gauge::None,
            true,
        )
        .unwrap();
        let x = square_config();
        // rotate by an arbitrary angle, translate, and relabel
        let (c, s) = (0.6f64, 0.8f64);
        let rotated: Vec<[f64; 2]> = x
            .positions()
            .iter()
            .map(|p| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.5])
            .collect();
        let mut relabeled = vec![[0.0; 2]; 4];
        let sigma = &inst.symmetry().elements()[7];
        for (i, &p) in rotated.iter().enumerate() {
            relabeled[sigma.apply(i)] = p;
        }
        let y = Configuration::from_positions(&relabeled, Gauge::None);
        let records = vec![record(x, 25.298), record(y, 25.298)];
        let catalog =
            dedup_orbits(&records, inst.symmetry(), ContinuousQuotient::PlanarIsometry, 1e-6);
        assert_eq!(catalog.representatives.len(), 1);
        assert_eq!(catalog.multiplicities, vec![2]);
    }

    #[test]
    fn orbit_member_counts_for_coincidence_patterns() {
        let ambient = crate::symgroup::symmetric_group(4);
        let v = (3.0f64 / 8.0).powf(0.1);
        // all four particles coincident on the x-axis: 2 members
        let p1 = Configuration::from_positions(&[[v, 0.0]; 4], Gauge::FixYOfFirst);
        assert_eq!(
            count_orbit_members(&p1, &ambient, ContinuousQuotient::SignFlipsAndGauge, 1e-6),
            2
        );
        // 2 + 2 split across orthogonal axes: 12 members
        let p2 = Configuration::from_positions(
            &[[v, 0.0], [v, 0.0], [0.0, v], [0.0, v]],
            Gauge::FixYOfFirst,
        );
        assert_eq!(
            count_orbit_members(&p2, &ambient, ContinuousQuotient::SignFlipsAndGauge, 1e-6),
            12
        );
        // 3 + 1 split: 16 members
        let p3 = Configuration::from_positions(
            &[[v, 0.0], [v, 0.0], [v, 0.0], [0.0, v]],
            Gauge::FixYOfFirst,
        );
        assert_eq!(
            count_orbit_members(&p3, &ambient, ContinuousQuotient::SignFlipsAndGauge, 1e-6),
            16
        );
    }

    #[test]
    fn discrete_orbit_count_matches_stabilizer_index() {
        let inst = octahedral_instance();
        let x = Configuration::new(
            vec![-1.0393, 1.0393, 1.0393, 1.0393, 1.0393, 1.0393],
            inst.geometry(),
        )
        .unwrap();
        // |orbit| = |G| / |stabilizer| = 48 / 8
        assert_eq!(
            count_orbit_members(&x, inst.symmetry(), ContinuousQuotient::None, 1e-6),
            6
        );
    }
}
