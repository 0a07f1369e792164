//! The group-invariant kernel-sum loss families.
//!
//! A [`LossInstance`] pairs one of the loss bodies with its ambient symmetry
//! group acting by permutations of the sites:
//!
//! * projective losses sum the kernel over ordered pairs of restriction
//!   maps, either against the constant-function target (three-term form) or
//!   free-standing,
//! * graph losses sum over ordered pairs of directed edges, with each
//!   undirected edge contributing both orientations,
//! * particle losses sum over all ordered particle pairs, diagonal included.
//!
//! Gradients and Hessians come from the chain rule through each kernel's
//! scalar profile (or the explicit degree-4 polynomial jet), accumulated in
//! fixed pair-index order so evaluations are bit-reproducible. The slower
//! whole-loss [`Jet2`] route is kept alongside as an independent check.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Jet2, Kernel, KernelError, KernelStructure, Scalar};
use crate::linalg::Matrix;
use crate::projgeom::{PglElement, ProjectiveAtlas, RestrictionMap};
use crate::symgroup::{graph_automorphisms, symmetric_group, Permutation, PermutationGroup};

/// Octahedron on vertices 0..6: 12 undirected edges.
pub const OCTAHEDRAL_EDGES: [(usize, usize); 12] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3),
    (1, 5), (2, 4), (2, 5), (3, 4), (3, 5), (4, 5),
];

/// Perfect matching on `2k` vertices: edges `(i, i+k)`.
pub fn perfect_matching_edges(k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|i| (i, i + k)).collect()
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("configuration does not match the instance geometry: {0}")]
    GeometryMismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid loss instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Group(#[from] crate::symgroup::GroupError),
    #[error(transparent)]
    ProjGeom(#[from] crate::projgeom::ProjGeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    None,
    /// The second coordinate of the first particle is pinned to zero and
    /// removed from the optimization vector.
    FixYOfFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Geometry {
    FunctionOnPoints { points: usize },
    ScalarPerVertex { vertices: usize },
    ParticlesInPlane { n: usize, gauge: Gauge },
}

impl Geometry {
    /// Length of the optimization vector.
    pub fn dof(&self) -> usize {
        match *self {
            Geometry::FunctionOnPoints { points } => points,
            Geometry::ScalarPerVertex { vertices } => vertices,
            Geometry::ParticlesInPlane { n, gauge } => match gauge {
                Gauge::None => 2 * n,
                Gauge::FixYOfFirst => 2 * n - 1,
            },
        }
    }

    /// Number of sites the symmetry group permutes.
    pub fn sites(&self) -> usize {
        match *self {
            Geometry::FunctionOnPoints { points } => points,
            Geometry::ScalarPerVertex { vertices } => vertices,
            Geometry::ParticlesInPlane { n, .. } => n,
        }
    }
}

/// The flat real vector being optimized, tagged with its geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<f64>,
    pub geometry: Geometry,
}

impl Configuration {
    pub fn new(values: Vec<f64>, geometry: Geometry) -> Result<Self, LossError> {
        if values.len() != geometry.dof() {
            return Err(LossError::GeometryMismatch(format!(
                "expected {} values, got {}",
                geometry.dof(),
                values.len()
            )));
        }
        Ok(Self { values, geometry })
    }

    pub fn zeros(geometry: Geometry) -> Self {
        Self { values: vec![0.0; geometry.dof()], geometry }
    }

    pub fn constant(value: f64, geometry: Geometry) -> Self {
        Self { values: vec![value; geometry.dof()], geometry }
    }

    /// Full planar positions, reinserting the gauge-fixed zero.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        match self.geometry {
            Geometry::ParticlesInPlane { n, gauge: Gauge::None } => (0..n)
                .map(|i| [self.values[2 * i], self.values[2 * i + 1]])
                .collect(),
            Geometry::ParticlesInPlane { n, gauge: Gauge::FixYOfFirst } => {
                let mut out = Vec::with_capacity(n);
                out.push([self.values[0], 0.0]);
                for i in 1..n {
                    out.push([self.values[2 * i - 1], self.values[2 * i]]);
                }
                out
            }
            _ => panic!("positions() is defined for particle configurations"),
        }
    }

    /// Packs planar positions into this geometry's vector layout. For the
    /// gauge-fixed layout the first particle's second coordinate must be
    /// zero (it is dropped).
    pub fn from_positions(positions: &[[f64; 2]], gauge: Gauge) -> Self {
        let n = positions.len();
        let values = match gauge {
            Gauge::None => positions.iter().flatten().copied().collect(),
            Gauge::FixYOfFirst => {
                let mut v = Vec::with_capacity(2 * n - 1);
                v.push(positions[0][0]);
                for p in &positions[1..] {
                    v.push(p[0]);
                    v.push(p[1]);
                }
                v
            }
        };
        Self { values, geometry: Geometry::ParticlesInPlane { n, gauge } }
    }
}

/// Which loss family an instance embodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    ProjectiveTarget,
    ProjectiveFree,
    GraphEdgePairs,
    ParticlePairs,
}

#[derive(Debug, Clone)]
enum Body {
    Projective {
        maps: Vec<RestrictionMap>,
        /// points of the embedded hyperplane (length of each target vector)
        hyperplane_points: usize,
        kernel: Kernel,
        /// three-term target form vs. the free pair sum
        with_target: bool,
    },
    Pairs {
        /// slot quadruples `(a1, a2, b1, b2)` into the expanded coordinates
        pairs: Vec<[u32; 4]>,
        kernel: Kernel,
        expanded: usize,
        /// expanded slot -> optimization index; `None` is the gauge-fixed 0
        slot_map: Vec<Option<u32>>,
        /// directed edge list for graph instances
        edges: Option<Vec<(usize, usize)>>,
    },
}

/// A loss body together with the ambient symmetry group acting on sites.
#[derive(Debug, Clone)]
pub struct LossInstance {
    kind: FamilyKind,
    geometry: Geometry,
    symmetry: Arc<PermutationGroup>,
    body: Body,
}

fn identity_slot_map(n: usize) -> Vec<Option<u32>> {
    (0..n as u32).map(Some).collect()
}

fn particle_slot_map(n: usize, gauge: Gauge) -> Vec<Option<u32>> {
    match gauge {
        Gauge::None => identity_slot_map(2 * n),
        Gauge::FixYOfFirst => {
            let mut map = Vec::with_capacity(2 * n);
            map.push(Some(0));
            map.push(None);
            for e in 2..2 * n {
                map.push(Some(e as u32 - 1));
            }
            map
        }
    }
}

impl LossInstance {
    /// The three-term loss against the constant-function target, summed
    /// over restriction-map pairs. The kernel must be an inner power.
    pub fn projective_target(
        atlas: &ProjectiveAtlas,
        sub_atlas: &ProjectiveAtlas,
        group: &[PglElement],
        kernel: Kernel,
        dedup: bool,
    ) -> Result<Self, LossError> {
        if !matches!(kernel, Kernel::InnerPower { .. }) {
            return Err(LossError::InvalidInstance(
                "the target form takes an inner-power kernel".into(),
            ));
        }
        Self::projective_common(atlas, sub_atlas, group, kernel, dedup, true)
    }

    /// The free pair sum with an inner power-pair kernel (no target).
    pub fn projective_free(
        atlas: &ProjectiveAtlas,
        sub_atlas: &ProjectiveAtlas,
        group: &[PglElement],
        kernel: Kernel,
        dedup: bool,
    ) -> Result<Self, LossError> {
        if !matches!(kernel, Kernel::InnerPowerPair { .. }) {
            return Err(LossError::InvalidInstance(
                "the free form takes an inner power-pair kernel".into(),
            ));
        }
        Self::projective_common(atlas, sub_atlas, group, kernel, dedup, false)
    }

    fn projective_common(
        atlas: &ProjectiveAtlas,
        sub_atlas: &ProjectiveAtlas,
        group: &[PglElement],
        kernel: Kernel,
        dedup: bool,
        with_target: bool,
    ) -> Result<Self, LossError> {
        kernel.validate()?;
        let maps = crate::projgeom::restriction_maps(atlas, sub_atlas, group, dedup)?;
        let perms: Vec<Permutation> = group
            .iter()
            .map(|g| {
                Permutation::new(g.point_perm.clone()).expect("group actions are bijections")
            })
            .collect();
        let symmetry = PermutationGroup::from_element_list(atlas.len(), perms);
        Ok(Self {
            kind: if with_target { FamilyKind::ProjectiveTarget } else { FamilyKind::ProjectiveFree },
            geometry: Geometry::FunctionOnPoints { points: atlas.len() },
            symmetry: Arc::new(symmetry),
            body: Body::Projective {
                maps,
                hyperplane_points: sub_atlas.len(),
                kernel,
                with_target,
            },
        })
    }

    /// Sum of the kernel over all ordered pairs of directed edges; each
    /// undirected edge contributes both orientations.
    pub fn graph_edge_pairs(
        vertices: usize,
        undirected_edges: &[(usize, usize)],
        kernel: Kernel,
    ) -> Result<Self, LossError> {
        kernel.validate()?;
        let symmetry = graph_automorphisms(vertices, undirected_edges)?;
        let mut directed: Vec<(u32, u32)> = Vec::with_capacity(2 * undirected_edges.len());
        for &(i, j) in undirected_edges {
            directed.push((i as u32, j as u32));
            directed.push((j as u32, i as u32));
        }
        let mut pairs = Vec::with_capacity(directed.len() * directed.len());
        for &(i, j) in &directed {
            for &(k, l) in &directed {
                pairs.push([i, j, k, l]);
            }
        }
        let edges = directed
            .iter()
            .map(|&(i, j)| (i as usize, j as usize))
            .collect();
        Ok(Self {
            kind: FamilyKind::GraphEdgePairs,
            geometry: Geometry::ScalarPerVertex { vertices },
            symmetry: Arc::new(symmetry),
            body: Body::Pairs {
                pairs,
                kernel,
                expanded: vertices,
                slot_map: identity_slot_map(vertices),
                edges: Some(edges),
            },
        })
    }

    /// Sum of the kernel over ordered particle pairs in the plane.
    pub fn particle_pairs(
        n: usize,
        kernel: Kernel,
        gauge: Gauge,
        include_diagonal: bool,
    ) -> Result<Self, LossError> {
        kernel.validate()?;
        if n == 0 {
            return Err(LossError::InvalidInstance("need at least one particle".into()));
        }
        let mut pairs = Vec::with_capacity(n * n);
        for i in 0..n as u32 {
            for j in 0..n as u32 {
                if !include_diagonal && i == j {
                    continue;
                }
                pairs.push([2 * i, 2 * i + 1, 2 * j, 2 * j + 1]);
            }
        }
        Ok(Self {
            kind: FamilyKind::ParticlePairs,
            geometry: Geometry::ParticlesInPlane { n, gauge },
            symmetry: Arc::new(symmetric_group(n)),
            body: Body::Pairs {
                pairs,
                kernel,
                expanded: 2 * n,
                slot_map: particle_slot_map(n, gauge),
                edges: None,
            },
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn dof(&self) -> usize {
        self.geometry.dof()
    }

    pub fn symmetry(&self) -> &Arc<PermutationGroup> {
        &self.symmetry
    }

    pub fn kernel(&self) -> &Kernel {
        match &self.body {
            Body::Projective { kernel, .. } | Body::Pairs { kernel, .. } => kernel,
        }
    }

    /// Number of restriction maps (projective bodies only).
    pub fn map_count(&self) -> Option<usize> {
        match &self.body {
            Body::Projective { maps, .. } => Some(maps.len()),
            _ => None,
        }
    }

    /// Directed edge list (graph instances only).
    pub fn directed_edges(&self) -> Option<Vec<(usize, usize)>> {
        match &self.body {
            Body::Pairs { edges, .. } => edges.clone(),
            _ => None,
        }
    }

    fn check_geometry(&self, x: &Configuration) -> Result<(), LossError> {
        if x.geometry != self.geometry || x.values.len() != self.geometry.dof() {
            return Err(LossError::GeometryMismatch(format!(
                "instance expects {:?}, configuration carries {:?}",
                self.geometry, x.geometry
            )));
        }
        Ok(())
    }

    /// Expanded coordinates with gauge-fixed slots reinserted as zeros.
    fn expand(&self, x: &Configuration) -> Vec<f64> {
        match &self.body {
            Body::Projective { .. } => x.values.clone(),
            Body::Pairs { expanded, slot_map, .. } => (0..*expanded)
                .map(|e| slot_map[e].map(|d| x.values[d as usize]).unwrap_or(0.0))
                .collect(),
        }
    }

    pub fn loss(&self, x: &Configuration) -> Result<f64, LossError> {
        self.check_geometry(x)?;
        match &self.body {
            Body::Projective { maps, hyperplane_points, kernel, with_target } => {
                let f = &x.values;
                let m = maps.len();
                let msub = *hyperplane_points;
                let mut restricted = vec![0.0; m * msub];
                for (i, map) in maps.iter().enumerate() {
                    for (k, &t) in map.targets.iter().enumerate() {
                        restricted[i * msub + k] = f[t as usize];
                    }
                }
                let mut total = 0.0;
                for i in 0..m {
                    let ri = &restricted[i * msub..(i + 1) * msub];
                    for j in 0..m {
                        let rj = &restricted[j * msub..(j + 1) * msub];
                        let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                        total += kernel.profile(s)?.value;
                    }
                }
                if *with_target {
                    let mut middle = 0.0;
                    for i in 0..m {
                        let s: f64 = restricted[i * msub..(i + 1) * msub].iter().sum();
                        middle += kernel.profile(s)?.value;
                    }
                    let constant = kernel.profile(msub as f64)?.value;
                    total += -2.0 * m as f64 * middle + (m * m) as f64 * constant;
                }
                Ok(total)
            }
            Body::Pairs { pairs, kernel, .. } => {
                let xe = self.expand(x);
                let mut total = 0.0;
                match kernel.structure() {
                    KernelStructure::InnerProduct => {
                        for p in pairs {
                            let s = xe[p[0] as usize] * xe[p[2] as usize]
                                + xe[p[1] as usize] * xe[p[3] as usize];
                            total += kernel.profile(s)?.value;
                        }
                    }
                    KernelStructure::SquaredDistance => {
                        for p in pairs {
                            let d0 = xe[p[0] as usize] - xe[p[2] as usize];
                            let d1 = xe[p[1] as usize] - xe[p[3] as usize];
                            total += kernel.profile(d0 * d0 + d1 * d1)?.value;
                        }
                    }
                    KernelStructure::Poly4 => {
                        for p in pairs {
                            total += kernel.eval(
                                &[xe[p[0] as usize], xe[p[1] as usize]],
                                &[xe[p[2] as usize], xe[p[3] as usize]],
                            )?;
                        }
                    }
                }
                Ok(total)
            }
        }
    }

    pub fn loss_grad(&self, x: &Configuration) -> Result<(f64, Vec<f64>), LossError> {
        let (value, grad, _) = self.eval_impl(x, false)?;
        Ok((value, grad))
    }

    pub fn loss_grad_hess(&self, x: &Configuration) -> Result<(f64, Vec<f64>, Matrix), LossError> {
        let (value, grad, hess) = self.eval_impl(x, true)?;
        Ok((value, grad, hess.expect("hessian requested")))
    }

    fn eval_impl(
        &self,
        x: &Configuration,
        want_hess: bool,
    ) -> Result<(f64, Vec<f64>, Option<Matrix>), LossError> {
        self.check_geometry(x)?;
        let dof = self.dof();
        let mut grad = vec![0.0; dof];
        let mut hess = if want_hess { Some(Matrix::zeros(dof)) } else { None };
        let mut total = 0.0;

        match &self.body {
            Body::Projective { maps, hyperplane_points, kernel, with_target } => {
                let f = &x.values;
                let m = maps.len();
                let msub = *hyperplane_points;
                let mut restricted = vec![0.0; m * msub];
                for (i, map) in maps.iter().enumerate() {
                    for (k, &t) in map.targets.iter().enumerate() {
                        restricted[i * msub + k] = f[t as usize];
                    }
                }
                // sparse ds/df support: up to 2*msub (slot, weight) entries
                let mut support: Vec<(u32, f64)> = Vec::with_capacity(2 * msub);
                for i in 0..m {
                    let ri = i * msub;
                    for j in 0..m {
                        let rj = j * msub;
                        let mut s = 0.0;
                        for k in 0..msub {
                            s += restricted[ri + k] * restricted[rj + k];
                        }
                        let pr = kernel.profile(s)?;
                        total += pr.value;
                        let ti = &maps[i].targets;
                        let tj = &maps[j].targets;
                        support.clear();
                        for k in 0..msub {
                            support.push((ti[k], restricted[rj + k]));
                            support.push((tj[k], restricted[ri + k]));
                        }
                        for &(slot, w) in &support {
                            grad[slot as usize] += pr.d1 * w;
                        }
                        if let Some(h) = hess.as_mut() {
                            for &(p, wp) in &support {
                                for &(q, wq) in &support {
                                    h.add_at(p as usize, q as usize, pr.d2 * wp * wq);
                                }
                            }
                            // d²s/df² couples paired slots with weight 1
                            for k in 0..msub {
                                h.add_at(ti[k] as usize, tj[k] as usize, pr.d1);
                                h.add_at(tj[k] as usize, ti[k] as usize, pr.d1);
                            }
                        }
                    }
                }
                if *with_target {
                    let scale = -2.0 * m as f64;
                    for i in 0..m {
                        let s: f64 = restricted[i * msub..(i + 1) * msub].iter().sum();
                        let pr = kernel.profile(s)?;
                        total += scale * pr.value;
                        let ti = &maps[i].targets;
                        for &t in ti {
                            grad[t as usize] += scale * pr.d1;
                        }
                        if let Some(h) = hess.as_mut() {
                            for &p in ti {
                                for &q in ti {
                                    h.add_at(p as usize, q as usize, scale * pr.d2);
                                }
                            }
                        }
                    }
                    total += (m * m) as f64 * kernel.profile(msub as f64)?.value;
                }
            }
            Body::Pairs { pairs, kernel, slot_map, .. } => {
                let xe = self.expand(x);
                let mut scatter_grad = |slot: u32, v: f64, grad: &mut [f64]| {
                    if let Some(d) = slot_map[slot as usize] {
                        grad[d as usize] += v;
                    }
                };
                let mut add_hess = |p: u32, q: u32, v: f64, h: &mut Matrix| {
                    if let (Some(dp), Some(dq)) = (slot_map[p as usize], slot_map[q as usize]) {
                        h.add_at(dp as usize, dq as usize, v);
                    }
                };
                match kernel.structure() {
                    KernelStructure::Poly4 => {
                        for p in pairs {
                            let vars = [
                                xe[p[0] as usize],
                                xe[p[1] as usize],
                                xe[p[2] as usize],
                                xe[p[3] as usize],
                            ];
                            let (v, g4, h4) = kernel.poly4_jet(vars)?;
                            total += v;
                            for (slot, gv) in p.iter().zip(g4) {
                                scatter_grad(*slot, gv, &mut grad);
                            }
                            if let Some(h) = hess.as_mut() {
                                for a in 0..4 {
                                    for b in 0..4 {
                                        add_hess(p[a], p[b], h4[a][b], h);
                                    }
                                }
                            }
                        }
                    }
                    structure => {
                        for p in pairs {
                            let (a0, a1, b0, b1) = (
                                xe[p[0] as usize],
                                xe[p[1] as usize],
                                xe[p[2] as usize],
                                xe[p[3] as usize],
                            );
                            // ds as four (slot, weight) entries plus the
                            // constant second-derivative pattern
                            let (s, ds) = match structure {
                                KernelStructure::InnerProduct => {
                                    (a0 * b0 + a1 * b1, [b0, b1, a0, a1])
                                }
                                KernelStructure::SquaredDistance => {
                                    let d0 = a0 - b0;
                                    let d1 = a1 - b1;
                                    (d0 * d0 + d1 * d1, [2.0 * d0, 2.0 * d1, -2.0 * d0, -2.0 * d1])
                                }
                                KernelStructure::Poly4 => unreachable!(),
                            };
                            let pr = kernel.profile(s)?;
                            total += pr.value;
                            for (slot, w) in p.iter().zip(ds) {
                                scatter_grad(*slot, pr.d1 * w, &mut grad);
                            }
                            if let Some(h) = hess.as_mut() {
                                for a in 0..4 {
                                    for b in 0..4 {
                                        add_hess(p[a], p[b], pr.d2 * ds[a] * ds[b], h);
                                    }
                                }
                                match structure {
                                    KernelStructure::InnerProduct => {
                                        // d²s couples a_k with b_k
                                        add_hess(p[0], p[2], pr.d1, h);
                                        add_hess(p[2], p[0], pr.d1, h);
                                        add_hess(p[1], p[3], pr.d1, h);
                                        add_hess(p[3], p[1], pr.d1, h);
                                    }
                                    KernelStructure::SquaredDistance => {
                                        for k in 0..2 {
                                            add_hess(p[k], p[k], 2.0 * pr.d1, h);
                                            add_hess(p[k + 2], p[k + 2], 2.0 * pr.d1, h);
                                            add_hess(p[k], p[k + 2], -2.0 * pr.d1, h);
                                            add_hess(p[k + 2], p[k], -2.0 * pr.d1, h);
                                        }
                                    }
                                    KernelStructure::Poly4 => unreachable!(),
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((total, grad, hess))
    }

    /// Whole-loss evaluation through second-order forward AD. Slower than
    /// the chain-rule path, kept as an independent derivative oracle.
    pub fn loss_grad_hess_jet(
        &self,
        x: &Configuration,
    ) -> Result<(f64, Vec<f64>, Matrix), LossError> {
        self.check_geometry(x)?;
        let dof = self.dof();
        let mut total = Jet2::constant(0.0, dof);
        match &self.body {
            Body::Projective { maps, hyperplane_points, kernel, with_target } => {
                let f: Vec<Jet2> = x
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| Jet2::variable(v, i, dof))
                    .collect();
                let msub = *hyperplane_points;
                let m = maps.len();
                let restricted: Vec<Vec<Jet2>> = maps
                    .iter()
                    .map(|map| map.targets.iter().map(|&t| f[t as usize].clone()).collect())
                    .collect();
                for ri in &restricted {
                    for rj in &restricted {
                        total = total.add(&kernel.eval_scalar(ri, rj)?);
                    }
                }
                if *with_target {
                    let ones = vec![Jet2::constant(1.0, dof); msub];
                    let mut middle = Jet2::constant(0.0, dof);
                    for ri in &restricted {
                        middle = middle.add(&kernel.eval_scalar(ri, &ones)?);
                    }
                    total = total.add(&middle.scale(-2.0 * m as f64));
                    let constant = kernel.profile(msub as f64)?.value;
                    total = total.add(&Jet2::constant((m * m) as f64 * constant, dof));
                }
            }
            Body::Pairs { pairs, kernel, expanded, slot_map, .. } => {
                let xe: Vec<Jet2> = (0..*expanded)
                    .map(|e| match slot_map[e] {
                        Some(d) => Jet2::variable(x.values[d as usize], d as usize, dof),
                        None => Jet2::constant(0.0, dof),
                    })
                    .collect();
                for p in pairs {
                    let a = [xe[p[0] as usize].clone(), xe[p[1] as usize].clone()];
                    let b = [xe[p[2] as usize].clone(), xe[p[3] as usize].clone()];
                    total = total.add(&kernel.eval_scalar(&a, &b)?);
                }
            }
        }
        let mut hess = Matrix::zeros(dof);
        hess.data.copy_from_slice(&total.hess);
        Ok((total.value, total.grad, hess))
    }

    /// Image of a configuration under a site permutation: site `i` of the
    /// result carries what site `σ^{-1}(i)` carried, i.e. values move with
    /// the permutation. Errors if a gauge constraint is broken.
    pub fn apply_symmetry(
        &self,
        x: &Configuration,
        sigma: &Permutation,
    ) -> Result<Configuration, LossError> {
        self.check_geometry(x)?;
        if sigma.degree() != self.geometry.sites() {
            return Err(LossError::GeometryMismatch(format!(
                "permutation degree {} does not match {} sites",
                sigma.degree(),
                self.geometry.sites()
            )));
        }
        match self.geometry {
            Geometry::FunctionOnPoints { .. } | Geometry::ScalarPerVertex { .. } => {
                let mut values = vec![0.0; x.values.len()];
                for (i, &v) in x.values.iter().enumerate() {
                    values[sigma.apply(i)] = v;
                }
                Ok(Configuration { values, geometry: self.geometry })
            }
            Geometry::ParticlesInPlane { n, gauge } => {
                let pos = x.positions();
                let mut out = vec![[0.0; 2]; n];
                for i in 0..n {
                    out[sigma.apply(i)] = pos[i];
                }
                if gauge == Gauge::FixYOfFirst && out[0][1] != 0.0 {
                    return Err(LossError::GeometryMismatch(
                        "permutation moves a particle with nonzero y into the gauge slot".into(),
                    ));
                }
                Ok(Configuration::from_positions(&out, gauge))
            }
        }
    }

    /// Max relative loss deviation over `trials` random symmetry elements.
    /// For gauge-fixed particle instances only gauge-preserving
    /// permutations (those fixing particle 0) are sampled.
    pub fn invariance_check(
        &self,
        x: &Configuration,
        trials: usize,
        seed: u64,
    ) -> Result<f64, LossError> {
        self.check_geometry(x)?;
        let base = self.loss(x)?;
        let denom = 1.0 + base.abs();
        let mut rng = crate::rng::SplitMix64::new(seed);
        let gauge_fixed = matches!(
            self.geometry,
            Geometry::ParticlesInPlane { gauge: Gauge::FixYOfFirst, .. }
        );
        let elements = self.symmetry.elements();
        let mut worst: f64 = 0.0;
        let mut done = 0;
        let mut attempts = 0;
        while done < trials && attempts < trials * 100 {
            attempts += 1;
            let sigma = &elements[rng.next_index(elements.len())];
            if gauge_fixed && sigma.apply(0) != 0 {
                continue;
            }
            let moved = self.apply_symmetry(x, sigma)?;
            worst = worst.max((self.loss(&moved)? - base).abs() / denom);
            done += 1;
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::projgeom::{enumerate_atlas, enumerate_pgl};

    fn fano_target(dedup: bool, degree: u32) -> LossInstance {
        let atlas = enumerate_atlas(2, 2).unwrap();
        let line = enumerate_atlas(1, 2).unwrap();
        let group = enumerate_pgl(&atlas).unwrap();
        LossInstance::projective_target(
            &atlas,
            &line,
            &group,
            Kernel::inner_power(degree).unwrap(),
            dedup,
        )
        .unwrap()
    }

    fn octahedral_instance() -> LossInstance {
        LossInstance::graph_edge_pairs(
            6,
            &OCTAHEDRAL_EDGES,
            Kernel::inner_power_pair(6, 4, 7.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn projective_anchor_identities() {
        let inst = fano_target(true, 8);
        assert_eq!(inst.map_count(), Some(42));
        let geom = inst.geometry();
        // all-zero function: only the constant term survives, 42² · 3⁸
        let zero = Configuration::zeros(geom);
        assert_eq!(inst.loss(&zero).unwrap(), 11_573_604.0);
        // the global minima f ≡ ±1 sit exactly at zero
        assert_eq!(inst.loss(&Configuration::constant(1.0, geom)).unwrap(), 0.0);
        assert_eq!(inst.loss(&Configuration::constant(-1.0, geom)).unwrap(), 0.0);
        // gradient vanishes at the global minimum
        let (_, grad) = inst.loss_grad(&Configuration::constant(1.0, geom)).unwrap();
        assert!(crate::linalg::norm2(&grad) < 1e-9);
    }

    #[test]
    fn raw_sum_is_coset_size_squared_times_dedup() {
        let dedup = fano_target(true, 8);
        let raw = fano_target(false, 8);
        assert_eq!(raw.map_count(), Some(168));
        let mut rng = crate::rng::SplitMix64::new(17);
        for _ in 0..20 {
            let f = Configuration::new(
                (0..7).map(|_| rng.next_normal()).collect(),
                dedup.geometry(),
            )
            .unwrap();
            let ld = dedup.loss(&f).unwrap();
            let lr = raw.loss(&f).unwrap();
            assert!(
                (lr - 16.0 * ld).abs() <= 1e-9 * (1.0 + lr.abs()),
                "{lr} vs 16·{ld}"
            );
        }
    }

    #[test]
    fn projective_target_nonnegative_for_even_degree() {
        let inst = fano_target(true, 8);
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..100 {
            let f = Configuration::new(
                (0..7).map(|_| rng.next_normal()).collect(),
                inst.geometry(),
            )
            .unwrap();
            assert!(inst.loss(&f).unwrap() >= 0.0);
        }
    }

    #[test]
    fn octahedral_uniform_value() {
        let inst = octahedral_instance();
        let t = (14.0f64 / 3.0).sqrt();
        let v = (t / 2.0).sqrt();
        let x = Configuration::constant(v, inst.geometry());
        let got = inst.loss(&x).unwrap();
        let expect = -790272.0 / 27.0;
        assert!((got - expect).abs() <= 1e-10 * expect.abs(), "{got} vs {expect}");
        // and the gradient vanishes there
        let (_, grad) = inst.loss_grad(&x).unwrap();
        assert!(crate::linalg::norm2(&grad) < 1e-8, "{}", crate::linalg::norm2(&grad));
    }

    #[test]
    fn particle_five_optimal_pairs_value() {
        // equilateral triangle at the optimal squared distance plus one
        // doubled vertex: five unordered pairs at the profile minimum -4/27
        let kernel = Kernel::distance_power(6, 4, 1.0).unwrap();
        let inst = LossInstance::particle_pairs(4, kernel, Gauge::None, true).unwrap();
        let u = (2.0f64 / 3.0).sqrt(); // optimal squared distance
        let side = u.sqrt();
        let positions = [
            [0.0, 0.0],
            [side, 0.0],
            [side / 2.0, side * 3.0f64.sqrt() / 2.0],
            [0.0, 0.0],
        ];
        let x = Configuration::from_positions(&positions, Gauge::None);
        let got = inst.loss(&x).unwrap();
        let expect = -40.0 / 27.0;
        assert!((got - expect).abs() <= 1e-12 * expect.abs(), "{got} vs {expect}");
    }

    #[test]
    fn repulsive_square_value() {
        let inst = LossInstance::particle_pairs(4, Kernel::Repulsive, Gauge::None, true).unwrap();
        let u = 0.625f64.sqrt();
        let side = u.sqrt();
        let positions = [[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]];
        let x = Configuration::from_positions(&positions, Gauge::None);
        let got = inst.loss(&x).unwrap();
        let expect = 2.0 * 160.0f64.sqrt(); // min of 16u + 10/u
        assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn coincident_particles_all_at_one_point_on_axis() {
        // all particles at (v, 0) with v^2 = (3/8)^{1/5}: the 16 ordered
        // pairs each contribute t^8 - t^3 at t = v^2
        let kernel = Kernel::inner_power_pair(8, 3, 1.0).unwrap();
        let inst = LossInstance::particle_pairs(4, kernel, Gauge::None, true).unwrap();
        let t = (3.0f64 / 8.0).powf(0.2);
        let v = t.sqrt();
        let x = Configuration::from_positions(&[[v, 0.0]; 4], Gauge::None);
        let got = inst.loss(&x).unwrap();
        let expect = 16.0 * ((3.0f64 / 8.0).powf(1.6) - (3.0f64 / 8.0).powf(0.6));
        assert!((got - expect).abs() <= 1e-12 * expect.abs(), "{got} vs {expect}");
        assert!((expect - -5.5516).abs() < 1e-3);
        // the same point expressed in the gauge-fixed layout
        let gauged = LossInstance::particle_pairs(
            4,
            Kernel::inner_power_pair(8, 3, 1.0).unwrap(),
            Gauge::FixYOfFirst,
            true,
        )
        .unwrap();
        let xg = Configuration::from_positions(&[[v, 0.0]; 4], Gauge::FixYOfFirst);
        assert_eq!(xg.values.len(), 7);
        let got_g = gauged.loss(&xg).unwrap();
        assert!((got_g - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn diagonal_pairs_matter_for_inner_kernels_only() {
        let with = LossInstance::particle_pairs(
            3,
            Kernel::inner_power_pair(8, 3, 1.0).unwrap(),
            Gauge::None,
            true,
        )
        .unwrap();
        let without = LossInstance::particle_pairs(
            3,
            Kernel::inner_power_pair(8, 3, 1.0).unwrap(),
            Gauge::None,
            false,
        )
        .unwrap();
        let x = Configuration::from_positions(&[[0.5, 0.1], [-0.2, 0.4], [0.3, -0.7]], Gauge::None);
        assert_ne!(with.loss(&x).unwrap(), without.loss(&x).unwrap());

        let dist_with =
            LossInstance::particle_pairs(3, Kernel::distance_power(6, 4, 1.0).unwrap(), Gauge::None, true)
                .unwrap();
        let dist_without =
            LossInstance::particle_pairs(3, Kernel::distance_power(6, 4, 1.0).unwrap(), Gauge::None, false)
                .unwrap();
        assert_eq!(dist_with.loss(&x).unwrap(), dist_without.loss(&x).unwrap());
    }

    fn finite_diff_grad(inst: &LossInstance, x: &Configuration, h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; x.values.len()];
        for i in 0..x.values.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.values[i] += h;
            xm.values[i] -= h;
            grad[i] = (inst.loss(&xp).unwrap() - inst.loss(&xm).unwrap()) / (2.0 * h);
        }
        grad
    }

    fn sample_instances() -> Vec<(LossInstance, f64)> {
        vec![
            (fano_target(true, 8), 0.5),
            (octahedral_instance(), 0.5),
            (
                LossInstance::graph_edge_pairs(
                    6,
                    &perfect_matching_edges(3),
                    Kernel::distance_power(6, 4, 7.0).unwrap(),
                )
                .unwrap(),
                0.5,
            ),
            (
                LossInstance::particle_pairs(
                    4,
                    Kernel::distance_power(6, 4, 1.0).unwrap(),
                    Gauge::None,
                    true,
                )
                .unwrap(),
                0.7,
            ),
            (
                LossInstance::particle_pairs(
                    4,
                    Kernel::inner_power_pair(8, 3, 1.0).unwrap(),
                    Gauge::FixYOfFirst,
                    true,
                )
                .unwrap(),
                0.7,
            ),
            (
                LossInstance::particle_pairs(4, Kernel::Repulsive, Gauge::None, true).unwrap(),
                1.5,
            ),
            (
                LossInstance::graph_edge_pairs(
                    6,
                    &OCTAHEDRAL_EDGES,
                    crate::kernels::shipped_random_kernel(1).unwrap(),
                )
                .unwrap(),
                0.5,
            ),
        ]
    }

    #[test]
    fn gradients_match_finite_differences_and_jets() {
        let mut rng = crate::rng::SplitMix64::new(2718);
        for (inst, scale) in sample_instances() {
            for _ in 0..5 {
                let x = Configuration::new(
                    (0..inst.dof()).map(|_| scale * rng.next_normal() + 0.3).collect(),
                    inst.geometry(),
                )
                .unwrap();
                let (value, grad, hess) = inst.loss_grad_hess(&x).unwrap();
                assert!((value - inst.loss(&x).unwrap()).abs() <= 1e-10 * (1.0 + value.abs()));
                assert!(hess.asymmetry() <= 1e-9 * (1.0 + value.abs()));

                let fd = finite_diff_grad(&inst, &x, 1e-6);
                let gscale = 1.0 + crate::linalg::norm_inf(&grad).max(crate::linalg::norm_inf(&fd));
                for i in 0..grad.len() {
                    assert!(
                        (grad[i] - fd[i]).abs() <= 1e-5 * gscale,
                        "{:?} grad[{i}] {} vs fd {}",
                        inst.kind(),
                        grad[i],
                        fd[i]
                    );
                }

                let (jv, jg, jh) = inst.loss_grad_hess_jet(&x).unwrap();
                assert!((jv - value).abs() <= 1e-9 * (1.0 + value.abs()));
                for i in 0..grad.len() {
                    assert!((jg[i] - grad[i]).abs() <= 1e-8 * gscale);
                    for j in 0..grad.len() {
                        let hscale = 1.0 + jh.get(i, j).abs().max(hess.get(i, j).abs());
                        assert!(
                            (jh.get(i, j) - hess.get(i, j)).abs() <= 1e-8 * hscale,
                            "{:?} hess[{i},{j}] {} vs jet {}",
                            inst.kind(),
                            hess.get(i, j),
                            jh.get(i, j)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn loss_is_invariant_under_the_symmetry_group() {
        let mut rng = crate::rng::SplitMix64::new(424242);
        for (inst, scale) in sample_instances() {
            let x = Configuration::new(
                (0..inst.dof()).map(|_| scale * rng.next_normal() + 0.1).collect(),
                inst.geometry(),
            )
            .unwrap();
            let dev = inst.invariance_check(&x, 100, 7).unwrap();
            assert!(dev < 1e-9, "{:?} deviation {dev}", inst.kind());
        }
    }

    #[test]
    fn graph_loss_unchanged_by_automorphism_relabeling() {
        let inst = octahedral_instance();
        let mut rng = crate::rng::SplitMix64::new(88);
        let x = Configuration::new(
            (0..6).map(|_| rng.next_normal()).collect(),
            inst.geometry(),
        )
        .unwrap();
        let base = inst.loss(&x).unwrap();
        for sigma in inst.symmetry().elements() {
            let moved = inst.apply_symmetry(&x, sigma).unwrap();
            let l = inst.loss(&moved).unwrap();
            assert!((l - base).abs() <= 1e-9 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn distance_losses_are_isometry_invariant() {
        let inst = LossInstance::particle_pairs(
            4,
            Kernel::distance_power(6, 4, 1.0).unwrap(),
            Gauge::None,
            true,
        )
        .unwrap();
        let mut rng = crate::rng::SplitMix64::new(9);
        for _ in 0..20 {
            let pos: Vec<[f64; 2]> = (0..4).map(|_| [rng.next_normal(), rng.next_normal()]).collect();
            let x = Configuration::from_positions(&pos, Gauge::None);
            let base = inst.loss(&x).unwrap();
            let theta = rng.next_f64() * std::f64::consts::TAU;
            let (c, s) = (theta.cos(), theta.sin());
            let (tx, ty) = (rng.next_normal(), rng.next_normal());
            let moved: Vec<[f64; 2]> = pos
                .iter()
                .map(|p| [c * p[0] - s * p[1] + tx, s * p[0] + c * p[1] + ty])
                .collect();
            let xm = Configuration::from_positions(&moved, Gauge::None);
            let l = inst.loss(&xm).unwrap();
            assert!((l - base).abs() <= 1e-10 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let inst = octahedral_instance();
        let wrong = Configuration::constant(1.0, Geometry::ScalarPerVertex { vertices: 5 });
        assert!(matches!(inst.loss(&wrong), Err(LossError::GeometryMismatch(_))));
        assert!(Configuration::new(vec![0.0; 3], Geometry::ScalarPerVertex { vertices: 5 }).is_err());
    }

    #[test]
    fn gauge_layout_round_trips() {
        let positions = [[1.5, 0.0], [0.2, -0.3], [0.0, 0.9], [-1.0, 0.4]];
        let x = Configuration::from_positions(&positions, Gauge::FixYOfFirst);
        assert_eq!(x.values.len(), 7);
        assert_eq!(x.positions(), positions.to_vec());
        let free = Configuration::from_positions(&positions, Gauge::None);
        assert_eq!(free.values.len(), 8);
        assert_eq!(free.positions(), positions.to_vec());
    }
}
