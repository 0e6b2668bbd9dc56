//! The glued cube complex X of a cut-bind system, its hyperplane census,
//! and the covering tower ending in a special cover.
//!
//! Pieces are materialized only when every vertex group A_v is finite, which
//! happens exactly when n = 0. Otherwise the census is reported from the
//! divisibility formulas alone.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::config_graph::ConfigGraph;
use crate::cube_kernel::{
    cover_component, fiber_product, raag_and_char_map, slot, to_permutation_cover, Cube, CubeComplex, CubeError,
    EdgeTag, Hyperplanes, PermutationCover, Witness,
};
use crate::cutbind::{self, divisibility, surface_square_complex, CutBindError, CutBindSystem, DivTarget, SurfaceComplex};
use crate::linalg::{big_to_i64, smith_invariants, Lattice};
use crate::surface_model::SurfaceModel;

pub const DEFAULT_BUDGET: usize = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CubulationError {
    #[error(transparent)]
    CutBind(#[from] CutBindError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("boundary data across curve {0} do not match")]
    BoundaryMismatch(usize),
    #[error("census mismatch: {0}")]
    CensusMismatch(String),
    #[error("materialization needs finite vertex groups; n = {0}")]
    Scope(usize),
    #[error("post-check failed: {0}")]
    PostCheck(String),
    #[error("tower stage {stage} needs {cells} cells, budget {budget}")]
    TowerBlowup { stage: String, cells: usize, budget: usize },
    #[error("final cover still has {0} specialness witnesses")]
    NotSpecialAfterTower(usize),
}

/// One vertex group A_v = Z^{n+1}/L_v with the piece's base data.
#[derive(Clone, Debug, Serialize)]
pub struct Piece {
    pub vertex: usize,
    pub index: usize,
    /// Classes j ≠ i(v) labelling the fiber directions.
    pub fiber_classes: Vec<usize>,
    pub lattice: Vec<Vec<i64>>,
    pub invariants: Vec<BigInt>,
    pub finite: bool,
    pub order: Option<usize>,
    pub regions: Vec<usize>,
    /// Surface-complex bind edges; each carries voltage −(1, …, 1).
    pub strands: Vec<usize>,
}

pub fn build_piece(v: usize, cbs: &CutBindSystem, sc: &SurfaceComplex) -> Piece {
    let xd = &cbs.xi;
    let i = xd.index[v];
    let fiber_classes: Vec<usize> = (1..=xd.classes()).filter(|&j| j != i).collect();
    let gen: Vec<i64> = fiber_classes.iter().map(|&j| big_to_i64(&xd.on_fiber(j, v))).collect();
    let invariants = smith_invariants(&vec![gen.iter().map(|&x| BigInt::from(x)).collect()], gen.len());
    let nonzero = invariants.iter().filter(|x| !x.is_zero()).count();
    let finite = nonzero == fiber_classes.len();
    let order = finite.then(|| invariants.iter().map(|x| x.abs().to_usize().unwrap()).product());
    let pants: Vec<usize> = (0..cbs.decomposition.pants.len()).filter(|&p| cbs.decomposition.pants[p].vertex == v).collect();
    let regions = (0..sc.complex.num_vertices).filter(|r| pants.contains(&sc.pants_of_region[*r])).collect();
    let strands = pants.iter().flat_map(|&p| sc.strand_edge[p].iter().copied()).collect();
    Piece { vertex: v, index: i, fiber_classes, lattice: vec![gen], invariants, finite, order, regions, strands }
}

/// Reference data of a gluing: a label offset per surface region and a
/// reference segment per curve. The canonical lift is all zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Lift {
    pub phi: Vec<i64>,
    pub seg_ref: Vec<usize>,
}

impl Lift {
    pub fn canonical(cbs: &CutBindSystem, sc: &SurfaceComplex) -> Self {
        Lift { phi: vec![0; sc.complex.num_vertices], seg_ref: vec![0; cbs.decomposition.curves.len()] }
    }

    /// Tree-normalized lift: strand voltages vanish on a spanning tree of
    /// each pants grown from its last region, reference segments moved by
    /// one and every label translated by one.
    pub fn tree_normalized(cbs: &CutBindSystem, sc: &SurfaceComplex) -> Self {
        let mut phi = vec![i64::MIN; sc.complex.num_vertices];
        for (p, strands) in sc.strand_edge.iter().enumerate() {
            let root = sc.offset[p] + cbs.placed[p].pattern.regions - 1;
            phi[root] = 1;
            let mut q = VecDeque::from([root]);
            while let Some(r) = q.pop_front() {
                for &e in strands {
                    let [t, h] = sc.complex.edges[e];
                    if t == r && phi[h] == i64::MIN {
                        phi[h] = phi[r] - 1;
                        q.push_back(h);
                    } else if h == r && phi[t] == i64::MIN {
                        phi[t] = phi[r] + 1;
                        q.push_back(t);
                    }
                }
            }
        }
        let seg_ref = (0..cbs.decomposition.curves.len()).map(|c| 1 % cbs.value(c).unsigned_abs() as usize).collect();
        Lift { phi, seg_ref }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EdgeKind {
    Bind { strand: usize },
    Fiber { region: usize },
    Cut { curve: usize },
}

/// The materialized glued complex X.
#[derive(Clone, Debug, Serialize)]
pub struct Glued {
    pub complex: CubeComplex,
    pub vertex_region: Vec<usize>,
    pub vertex_label: Vec<i64>,
    pub edge_kind: Vec<EdgeKind>,
    pub labels_per_curve: Vec<usize>,
    pub pieces: Vec<Piece>,
}

impl Glued {
    pub fn octagon_vertices(&self, sc: &SurfaceComplex) -> Vec<usize> {
        (0..self.complex.num_vertices).filter(|&v| sc.offset.contains(&self.vertex_region[v])).collect()
    }
}

struct Frame<'a> {
    cbs: &'a CutBindSystem,
    sc: &'a SurfaceComplex,
    lift: &'a Lift,
    base: Vec<usize>,
    size: Vec<i64>,
    bind_at: HashMap<(usize, usize), usize>,
    fiber_at: Vec<usize>,
}

impl Frame<'_> {
    fn vid(&self, r: usize, a: i64) -> usize {
        self.base[r] + (a + self.lift.phi[r]).rem_euclid(self.size[r]) as usize
    }

    fn vertex_of(&self, r: usize) -> usize {
        self.cbs.decomposition.pants[self.sc.pants_of_region[r]].vertex
    }

    /// (region, unlifted label, segment) of label p on side σ of curve c.
    fn side_point(&self, c: usize, side: usize, p: &[i64]) -> (usize, i64, usize) {
        let cv = &self.cbs.decomposition.curves[c];
        let v = self.cbs.decomposition.pants[cv.sides[side].pants].vertex;
        let ii = self.cbs.xi.index[v] - 1;
        let m = self.cbs.value(c) * if side == 0 { 1 } else { -1 };
        let big = m.abs();
        let k0 = if side == 0 {
            self.lift.seg_ref[c] as i64
        } else {
            (self.cbs.shifts[c] as i64 - 1 - self.lift.seg_ref[c] as i64).rem_euclid(big)
        };
        let s = p[ii];
        let a = p[1 - ii] - s;
        let k = (k0 + m.signum() * s).rem_euclid(big) as usize;
        let r = self.sc.offset[cv.sides[side].pants] + self.cbs.seg_region(c, side, k);
        (r, a, k)
    }

    /// Edge of X leaving the side point of p in direction j.
    fn step_edge(&self, c: usize, side: usize, p: &[i64], j: usize) -> usize {
        let (r, a, k) = self.side_point(c, side, p);
        let v = self.vertex_of(r);
        let tail = self.vid(r, a);
        if j == self.cbs.xi.index[v] {
            let cv = &self.cbs.decomposition.curves[c];
            let m = self.cbs.value(c) * if side == 0 { 1 } else { -1 };
            let big = m.unsigned_abs() as usize;
            let pt = if m > 0 { (k + 1) % big } else { k };
            let strand = self.cbs.point_strand(c, side, pt);
            self.bind_at[&(self.sc.strand_edge[cv.sides[side].pants][strand], tail)]
        } else {
            self.fiber_at[tail]
        }
    }
}

fn unit(j: usize) -> [i64; 2] {
    let mut e = [0; 2];
    e[j - 1] = 1;
    e
}

/// Glue the pieces with the canonical lift.
pub fn glue_canonical(cbs: &CutBindSystem, sc: &SurfaceComplex) -> Result<Glued, CubulationError> {
    glue_with_lift(cbs, sc, &Lift::canonical(cbs, sc))
}

pub fn glue_with_lift(cbs: &CutBindSystem, sc: &SurfaceComplex, lift: &Lift) -> Result<Glued, CubulationError> {
    let xd = &cbs.xi;
    if xd.n != 0 {
        return Err(CubulationError::Scope(xd.n));
    }
    let nv_graph = xd.fiber.len();
    let pieces: Vec<Piece> = (0..nv_graph).map(|v| build_piece(v, cbs, sc)).collect();
    let nreg = sc.complex.num_vertices;
    let mut frame = Frame { cbs, sc, lift, base: Vec::new(), size: Vec::new(), bind_at: HashMap::new(), fiber_at: Vec::new() };
    let mut vertex_region = Vec::new();
    let mut vertex_label = Vec::new();
    for r in 0..nreg {
        let n = pieces[frame.vertex_of(r)].order.unwrap() as i64;
        frame.base.push(vertex_region.len());
        frame.size.push(n);
        for a in 0..n {
            vertex_region.push(r);
            vertex_label.push(a);
        }
    }
    let mut x = CubeComplex { num_vertices: vertex_region.len(), ..Default::default() };
    let mut edge_kind = Vec::new();
    // bind edges, enumerated by lifted tail label
    for (p, strands) in sc.strand_edge.iter().enumerate() {
        let v = cbs.decomposition.pants[p].vertex;
        for (si, &e) in strands.iter().enumerate() {
            let [r, r2] = sc.complex.edges[e];
            for lab in 0..frame.size[r] {
                let a = lab - lift.phi[r];
                let (t, h) = (frame.vid(r, a), frame.vid(r2, a - 1));
                let id = x.add_edge(t, h, EdgeTag::Bind(xd.index[v]));
                frame.bind_at.insert((e, t), id);
                edge_kind.push(EdgeKind::Bind { strand: si });
            }
        }
    }
    frame.fiber_at = vec![usize::MAX; x.num_vertices];
    for r in 0..nreg {
        let v = frame.vertex_of(r);
        for lab in 0..frame.size[r] {
            let t = frame.base[r] + lab as usize;
            let h = frame.base[r] + ((lab + 1) % frame.size[r]) as usize;
            frame.fiber_at[t] = x.add_edge(t, h, EdgeTag::Bind(3 - xd.index[v]));
            edge_kind.push(EdgeKind::Fiber { region: r });
        }
    }
    // bind × fiber squares
    let nbind = frame.bind_at.len();
    for b in 0..nbind {
        let [t, h] = x.edges[b];
        let (ft, fh) = (frame.fiber_at[t], frame.fiber_at[h]);
        let e = sc_edge_of(&frame, b);
        let b2 = frame.bind_at[&(e, x.edges[ft][1])];
        if x.edges[b2][1] != x.edges[fh][1] {
            return Err(CubulationError::PostCheck(format!("bind square at edge {b} does not close")));
        }
        x.cubes.push(Cube::square((b, true), (b2, true), (ft, true), (fh, true)));
    }
    // cut edges, squares and 3-cubes per curve
    let mut labels_per_curve = Vec::new();
    for (c, cv) in cbs.decomposition.curves.iter().enumerate() {
        let big = cbs.value(c).abs();
        let side_lattice = |side: usize| {
            let v = cbs.decomposition.pants[cv.sides[side].pants].vertex;
            let f: Vec<i64> = (1..=2).map(|j| big_to_i64(&xd.on_fiber(j, v))).collect();
            Lattice::new(2, &[vec![big, big], f])
        };
        let lat = side_lattice(0);
        if lat != side_lattice(1) {
            return Err(CubulationError::BoundaryMismatch(c));
        }
        let reps = lat.cosets().ok_or(CubulationError::BoundaryMismatch(c))?;
        labels_per_curve.push(reps.len());
        let mut cut = HashMap::new();
        for p in &reps {
            let (r0, a0, _) = frame.side_point(c, 0, p);
            let (r1, a1, _) = frame.side_point(c, 1, p);
            cut.insert(p.clone(), x.add_edge(frame.vid(r0, a0), frame.vid(r1, a1), EdgeTag::Cut));
            edge_kind.push(EdgeKind::Cut { curve: c });
        }
        let shifted = |p: &[i64], j: usize| -> Vec<i64> {
            let e = unit(j);
            lat.reduce(&[p[0] + e[0], p[1] + e[1]])
        };
        for p in &reps {
            for j in 1..=2 {
                let q = shifted(p, j);
                let s0 = frame.step_edge(c, 0, p, j);
                let s1 = frame.step_edge(c, 1, p, j);
                if x.edges[s0][1] != x.edges[cut[&q]][0] || x.edges[s1][1] != x.edges[cut[&q]][1] {
                    return Err(CubulationError::BoundaryMismatch(c));
                }
                x.cubes.push(Cube::square((cut[p], true), (cut[&q], true), (s0, true), (s1, true)));
            }
            let mut edges = vec![(0, true); 12];
            for corner in 0..8usize {
                let (b0, b1, b2) = (corner & 1, corner >> 1 & 1, corner >> 2 & 1);
                let at = |dx: usize, dy: usize| -> Vec<i64> {
                    let mut q = p.clone();
                    if dx == 1 {
                        q = shifted(&q, 1);
                    }
                    if dy == 1 {
                        q = shifted(&q, 2);
                    }
                    q
                };
                if b0 == 0 {
                    edges[slot(3, 0, corner)] = (cut[&at(b1, b2)], true);
                }
                if b1 == 0 {
                    edges[slot(3, 1, corner)] = (frame.step_edge(c, b0, &at(0, b2), 1), true);
                }
                if b2 == 0 {
                    edges[slot(3, 2, corner)] = (frame.step_edge(c, b0, &at(b1, 0), 2), true);
                }
            }
            x.cubes.push(Cube { dim: 3, edges });
        }
    }
    Ok(Glued { complex: x, vertex_region, vertex_label, edge_kind, labels_per_curve, pieces })
}

fn sc_edge_of(frame: &Frame, b: usize) -> usize {
    // bind edges are numbered strand by strand, one per tail label
    let mut acc = 0;
    for strands in &frame.sc.strand_edge {
        for &e in strands {
            let n = frame.size[frame.sc.complex.edges[e][0]] as usize;
            if b < acc + n {
                return e;
            }
            acc += n;
        }
    }
    unreachable!("not a bind edge")
}

/// How a hyperplane's decomposition graph maps to Υ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IotaClass {
    Embedding,
    Immersion,
    NotImmersion,
}

#[derive(Clone, Debug, Serialize)]
pub struct HEdge {
    pub cut: usize,
    /// Vertices on the negative and positive side of the cut hyperplane.
    pub ends: [usize; 2],
}

/// Υ_H with its map to Υ.
#[derive(Clone, Debug, Serialize)]
pub struct HGraph {
    pub hyperplane: usize,
    pub tag: EdgeTag,
    /// Piece under each vertex.
    pub vertices: Vec<usize>,
    pub edges: Vec<HEdge>,
    pub class: IotaClass,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionGraphs {
    pub piece_of_vertex: Vec<usize>,
    pub pieces: usize,
    /// Cut hyperplanes as Υ edges: (hyperplane, [negative piece, positive piece]).
    pub upsilon: Vec<(usize, [usize; 2])>,
    pub graphs: Vec<HGraph>,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a] = b;
        }
    }
}

fn square_key(c: &Cube) -> [usize; 4] {
    let mut k = [c.edges[0].0, c.edges[1].0, c.edges[2].0, c.edges[3].0];
    k.sort();
    k
}

fn face_key(c: &Cube, i: usize, a: usize, t: usize, b: usize) -> [usize; 4] {
    let base = b << t;
    let mut k = [c.edge(i, base).0, c.edge(i, base | 1 << a).0, c.edge(a, base).0, c.edge(a, base | 1 << i).0];
    k.sort();
    k
}

/// Pieces, Υ and every Υ_H → Υ of a complex whose cut edges carry the Cut tag.
pub fn decomposition_graphs(x: &CubeComplex, hp: &Hyperplanes) -> DecompositionGraphs {
    let mut dsu = Dsu::new(x.num_vertices);
    for (e, en) in x.edges.iter().enumerate() {
        if x.edge_tags[e] != EdgeTag::Cut {
            dsu.union(en[0], en[1]);
        }
    }
    let mut piece_id = HashMap::new();
    let piece_of_vertex: Vec<usize> = (0..x.num_vertices)
        .map(|v| {
            let r = dsu.find(v);
            let n = piece_id.len();
            *piece_id.entry(r).or_insert(n)
        })
        .collect();
    let neg_tail = |e: usize| hp.orient[e] > 0;
    let mut upsilon = Vec::new();
    let mut up_index = HashMap::new();
    for (h, hy) in hp.list.iter().enumerate() {
        if hy.tag == EdgeTag::Cut {
            let e = hy.edges[0];
            let [t, hd] = x.edges[e];
            let ends = if neg_tail(e) { [t, hd] } else { [hd, t] };
            up_index.insert(h, upsilon.len());
            upsilon.push((h, [piece_of_vertex[ends[0]], piece_of_vertex[ends[1]]]));
        }
    }
    // H ∩ X_P: H-edges joined through squares without cut edges
    let mut edsu = Dsu::new(x.edges.len());
    let squares: Vec<usize> = (0..x.cubes.len()).filter(|&k| x.cubes[k].dim == 2).collect();
    let mut square_of = HashMap::new();
    for &k in &squares {
        let c = &x.cubes[k];
        square_of.insert(square_key(c), k);
        if c.edges.iter().all(|(e, _)| x.edge_tags[*e] != EdgeTag::Cut) {
            for i in 0..2 {
                edsu.union(c.edge(i, 0).0, c.edge(i, 1 << (1 - i)).0);
            }
        }
    }
    // H ∩ H_z: (cut, H) squares joined through 3-cubes
    let mut sdsu = Dsu::new(x.cubes.len());
    for c in x.cubes.iter().filter(|c| c.dim == 3) {
        for i in 0..3 {
            if x.edge_tags[c.edge(i, 0).0] != EdgeTag::Cut {
                continue;
            }
            for a in (0..3).filter(|&a| a != i) {
                let t = 3 - i - a;
                let (f0, f1) = (square_of.get(&face_key(c, i, a, t, 0)), square_of.get(&face_key(c, i, a, t, 1)));
                if let (Some(&f0), Some(&f1)) = (f0, f1) {
                    sdsu.union(f0, f1);
                }
            }
        }
    }
    let mut graphs: Vec<HGraph> = Vec::new();
    let mut graph_of: HashMap<usize, usize> = HashMap::new();
    let mut vertex_of: HashMap<usize, (usize, usize)> = HashMap::new();
    for (h, hy) in hp.list.iter().enumerate() {
        if hy.tag == EdgeTag::Cut {
            continue;
        }
        let gi = graphs.len();
        graph_of.insert(h, gi);
        let mut g = HGraph { hyperplane: h, tag: hy.tag, vertices: Vec::new(), edges: Vec::new(), class: IotaClass::Embedding };
        for &e in &hy.edges {
            let r = edsu.find(e);
            if let std::collections::hash_map::Entry::Vacant(slot) = vertex_of.entry(r) {
                slot.insert((gi, g.vertices.len()));
                g.vertices.push(piece_of_vertex[x.edges[e][0]]);
            }
        }
        graphs.push(g);
    }
    let mut seen_edge: HashMap<usize, ()> = HashMap::new();
    for &k in &squares {
        let c = &x.cubes[k];
        let cut_axis = (0..2).find(|&i| x.edge_tags[c.edge(i, 0).0] == EdgeTag::Cut);
        let Some(i) = cut_axis else { continue };
        let other = c.edge(1 - i, 0).0;
        if x.edge_tags[other] == EdgeTag::Cut {
            continue;
        }
        let root = sdsu.find(k);
        if seen_edge.insert(root, ()).is_some() {
            continue;
        }
        let ce = c.edge(i, 0).0;
        let h = hp.of_edge[other];
        let gi = graph_of[&h];
        // the H-edge through the cut edge's negative-side endpoint
        let neg = if neg_tail(ce) { x.edges[ce][0] } else { x.edges[ce][1] };
        let (h0, h1) = (c.edge(1 - i, 0).0, c.edge(1 - i, 1 << i).0);
        let on_neg = |e: usize| x.edges[e].contains(&neg);
        let (en, ep) = if on_neg(h0) { (h0, h1) } else { (h1, h0) };
        let vn = vertex_of[&edsu.find(en)].1;
        let vp = vertex_of[&edsu.find(ep)].1;
        graphs[gi].edges.push(HEdge { cut: hp.of_edge[ce], ends: [vn, vp] });
    }
    for g in graphs.iter_mut() {
        g.class = classify(g, &upsilon, &up_index);
    }
    let pieces = piece_id.len();
    DecompositionGraphs { piece_of_vertex, pieces, upsilon, graphs }
}

fn classify(g: &HGraph, upsilon: &[(usize, [usize; 2])], up_index: &HashMap<usize, usize>) -> IotaClass {
    let mut half: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for e in &g.edges {
        for s in 0..2 {
            *half.entry((e.ends[s], e.cut, s)).or_default() += 1;
        }
    }
    if half.values().any(|&n| n > 1) {
        return IotaClass::NotImmersion;
    }
    debug_assert!(g.edges.iter().all(|e| upsilon[up_index[&e.cut]].1 == [g.vertices[e.ends[0]], g.vertices[e.ends[1]]]));
    let mut pieces = g.vertices.clone();
    pieces.sort();
    let mut cuts: Vec<usize> = g.edges.iter().map(|e| e.cut).collect();
    cuts.sort();
    let inj = pieces.windows(2).all(|w| w[0] != w[1]) && cuts.windows(2).all(|w| w[0] != w[1]);
    if inj {
        IotaClass::Embedding
    } else {
        IotaClass::Immersion
    }
}

/// Census of one pants of the base complex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PantsCensus {
    pub pants: usize,
    pub index: usize,
    pub vertical: usize,
    /// (class j, number of index-j horizontal hyperplanes in X_P).
    pub horizontal: Vec<(usize, usize)>,
    /// (class j, slot, boundary components of each horizontal on that slot).
    pub boundary: Vec<(usize, usize, Vec<usize>)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Census {
    pub cut: usize,
    pub pants: Vec<PantsCensus>,
    pub fiber_duality: bool,
    pub iota: Vec<(usize, EdgeTag, IotaClass)>,
}

/// Census of a materialized X, checked against the divisibility formulas.
pub fn hyperplane_census(
    g: &Glued,
    cbs: &CutBindSystem,
    hp: &Hyperplanes,
    dg: &DecompositionGraphs,
) -> Result<Census, CubulationError> {
    let x = &g.complex;
    let d = &cbs.decomposition;
    let sc = surface_square_complex(cbs);
    let cut = hp.list.iter().filter(|h| h.tag == EdgeTag::Cut).count();
    if cut != d.curves.len() {
        return Err(CubulationError::CensusMismatch(format!("{cut} cut hyperplanes for {} curves", d.curves.len())));
    }
    let pants_of_piece = |piece: usize| {
        let v = dg.piece_of_vertex.iter().position(|&p| p == piece).unwrap();
        sc.pants_of_region[g.vertex_region[v]]
    };
    // negative side of each cut hyperplane as (curve, side)
    let side_of = |h: usize, s: usize| -> (usize, usize) {
        let e = hp.list[h].edges[0];
        let EdgeKind::Cut { curve } = g.edge_kind[e] else { unreachable!() };
        let neg_is_side0 = hp.orient[e] > 0;
        (curve, if neg_is_side0 == (s == 0) { 0 } else { 1 })
    };
    let mut out = Vec::new();
    for (p, pa) in d.pants.iter().enumerate() {
        let i = cbs.xi.index[pa.vertex];
        let mut vertical = 0;
        let mut horizontal = Vec::new();
        let mut boundary = Vec::new();
        for j in 1..=cbs.xi.classes() {
            let mut count = 0;
            let mut per_slot: Vec<Vec<usize>> = vec![Vec::new(); 3];
            for hg in dg.graphs.iter().filter(|h| h.tag == EdgeTag::Bind(j)) {
                for (vi, &piece) in hg.vertices.iter().enumerate() {
                    if pants_of_piece(piece) != p {
                        continue;
                    }
                    count += 1;
                    let mut slots = [0usize; 3];
                    for e in &hg.edges {
                        for s in 0..2 {
                            if e.ends[s] == vi {
                                let (c, side) = side_of(e.cut, s);
                                let sd = d.curves[c].sides[side];
                                if sd.pants == p {
                                    slots[sd.slot] += 1;
                                }
                            }
                        }
                    }
                    for s in 0..3 {
                        per_slot[s].push(slots[s]);
                    }
                }
            }
            if j == i {
                vertical = count;
            } else {
                horizontal.push((j, count));
                for (s, v) in per_slot.into_iter().enumerate() {
                    boundary.push((j, s, v));
                }
            }
        }
        let strands = cbs.placed[p].pattern.strands.len();
        if vertical != strands {
            return Err(CubulationError::CensusMismatch(format!("pants {p}: {vertical} vertical, {strands} arcs")));
        }
        for &(j, count) in &horizontal {
            let dp = divisibility(&cbs.xi, cbs, j, DivTarget::Pants(p))?;
            if BigInt::from(count) != dp {
                return Err(CubulationError::CensusMismatch(format!("pants {p}: {count} index-{j} horizontals, div {dp}")));
            }
            for (jj, s, v) in boundary.iter().filter(|b| b.0 == j) {
                let dz = divisibility(&cbs.xi, cbs, *jj, DivTarget::Curve(pa.curves[*s]))?;
                let want = (&dz / &dp).to_usize().unwrap();
                if v.iter().any(|&k| k != want) {
                    return Err(CubulationError::CensusMismatch(format!("pants {p} slot {s}: boundary {v:?}, want {want}")));
                }
            }
        }
        out.push(PantsCensus { pants: p, index: i, vertical, horizontal, boundary });
    }
    // a fiber loop has ξ^j-weight |ξ^j(f_v)| in its own direction and none in the other
    let mut fiber_duality = true;
    for r in 0..sc.complex.num_vertices {
        let v = d.pants[sc.pants_of_region[r]].vertex;
        let i = cbs.xi.index[v];
        let fibers: Vec<usize> =
            (0..x.edges.len()).filter(|&e| g.edge_kind[e] == EdgeKind::Fiber { region: r }).collect();
        let o = 3 - i;
        fiber_duality &= fibers.iter().all(|&e| x.edge_tags[e] == EdgeTag::Bind(o))
            && BigInt::from(fibers.len()) == cbs.xi.on_fiber(o, v).abs() * BigInt::from(1);
    }
    let iota = dg.graphs.iter().map(|h| (h.hyperplane, h.tag, h.class)).collect();
    let _ = x;
    Ok(Census { cut, pants: out, fiber_duality, iota })
}

/// Census from formulas alone, valid for every n.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolicCensus {
    pub n: usize,
    pub cut: usize,
    pub pieces: Vec<Piece>,
    pub pants: Vec<PantsCensus>,
}

pub fn symbolic_census(cbs: &CutBindSystem) -> Result<SymbolicCensus, CubulationError> {
    let sc = surface_square_complex(cbs);
    let d = &cbs.decomposition;
    let pieces = (0..cbs.xi.fiber.len()).map(|v| build_piece(v, cbs, &sc)).collect();
    let mut pants = Vec::new();
    for (p, pa) in d.pants.iter().enumerate() {
        let i = cbs.xi.index[pa.vertex];
        let mut horizontal = Vec::new();
        let mut boundary = Vec::new();
        for j in (1..=cbs.xi.classes()).filter(|&j| j != i) {
            let dp = divisibility(&cbs.xi, cbs, j, DivTarget::Pants(p))?;
            let count = dp.to_usize().unwrap();
            horizontal.push((j, count));
            for s in 0..3 {
                let dz = divisibility(&cbs.xi, cbs, j, DivTarget::Curve(pa.curves[s]))?;
                boundary.push((j, s, vec![(&dz / &dp).to_usize().unwrap(); count]));
            }
        }
        pants.push(PantsCensus { pants: p, index: i, vertical: cbs.placed[p].pattern.strands.len(), horizontal, boundary });
    }
    Ok(SymbolicCensus { n: cbs.xi.n, cut: d.curves.len(), pieces, pants })
}

/// Witnesses sorted into the three kinds that occur, plus the guarantees
/// that must always hold.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Pathologies {
    pub cut_self_osculation: Vec<Witness>,
    pub bind_self_osculation: Vec<Witness>,
    pub cut_bind_inter_osculation: Vec<Witness>,
    pub other: Vec<Witness>,
    pub basic_guarantees: bool,
}

impl Pathologies {
    pub fn total(&self) -> usize {
        self.cut_self_osculation.len()
            + self.bind_self_osculation.len()
            + self.cut_bind_inter_osculation.len()
            + self.other.len()
    }
}

pub fn pathologies(x: &CubeComplex, hp: &Hyperplanes) -> Pathologies {
    let sp = x.specialness_with(hp);
    let mut out = Pathologies::default();
    let tag = |h: usize| hp.list[h].tag;
    let mut basic = true;
    for w in sp.witnesses {
        match &w {
            Witness::SelfOsculation { hyperplane, .. } if tag(*hyperplane) == EdgeTag::Cut => out.cut_self_osculation.push(w),
            Witness::SelfOsculation { .. } => out.bind_self_osculation.push(w),
            Witness::InterOsculation { hyperplanes: [a, b], .. } => {
                let (ta, tb) = (tag(*a), tag(*b));
                if (ta == EdgeTag::Cut) != (tb == EdgeTag::Cut) {
                    out.cut_bind_inter_osculation.push(w);
                } else {
                    basic = false;
                    out.other.push(w);
                }
            }
            _ => {
                basic = false;
                out.other.push(w);
            }
        }
    }
    for (a, b) in x.crossings(hp).keys() {
        if tag(*a) == tag(*b) {
            basic = false;
        }
    }
    out.basic_guarantees = basic;
    out
}

/// ξ^j-weight of an edge: one on edges dual to the bind(j) family.
fn weight(x: &CubeComplex, e: usize, j: usize) -> usize {
    usize::from(x.edge_tags[e] == EdgeTag::Bind(j))
}

/// Composite projection of a cover stage onto X.
#[derive(Clone, Debug)]
pub struct Stage {
    pub complex: CubeComplex,
    pub vmap: Vec<usize>,
    pub emap: Vec<usize>,
}

impl Stage {
    pub fn degree(&self, base: &CubeComplex) -> usize {
        self.complex.num_vertices / base.num_vertices
    }
}

/// Cyclic cover dual to ξ^j mod l^j, connected component through vertex 0.
pub fn cyclic_cover(x: &CubeComplex, j: usize, l: usize) -> Result<Stage, CubulationError> {
    let perms = (0..x.edges.len()).map(|e| (0..l).map(|s| (s + weight(x, e, j)) % l).collect()).collect();
    let cv = cover_component(x, &PermutationCover { d: l, perms }, 0, 0)?;
    Ok(Stage {
        vmap: cv.vertex_map.iter().map(|p| p.0).collect(),
        emap: cv.edge_map.iter().map(|p| p.0).collect(),
        complex: cv.complex,
    })
}

/// Stallings completion of an immersion Υ_H → Υ to a cover of Υ: fibers are
/// padded to equal size and partial matchings extended in index order.
pub fn stallings_completion(g: &HGraph, pieces: usize, upsilon: &[(usize, [usize; 2])]) -> PermutationCover {
    let mut fiber_index = vec![0usize; g.vertices.len()];
    let mut fiber_size = vec![0usize; pieces];
    for (vi, &p) in g.vertices.iter().enumerate() {
        fiber_index[vi] = fiber_size[p];
        fiber_size[p] += 1;
    }
    let d = fiber_size.iter().copied().max().unwrap_or(1).max(1);
    let perms = upsilon
        .iter()
        .map(|&(h, _)| {
            let mut perm = vec![usize::MAX; d];
            let mut used = vec![false; d];
            for e in g.edges.iter().filter(|e| e.cut == h) {
                let (a, b) = (fiber_index[e.ends[0]], fiber_index[e.ends[1]]);
                perm[a] = b;
                used[b] = true;
            }
            let mut free = (0..d).filter(|&b| !used[b]);
            for slot in perm.iter_mut().filter(|s| **s == usize::MAX) {
                *slot = free.next().unwrap();
            }
            perm
        })
        .collect();
    PermutationCover { d, perms }
}

/// Connected component through sheet 0 of the product of graph covers of Υ,
/// renumbered per piece.
pub fn product_component(pieces: usize, upsilon: &[(usize, [usize; 2])], covers: &[PermutationCover]) -> PermutationCover {
    let mut ids: Vec<HashMap<Vec<usize>, usize>> = vec![HashMap::new(); pieces];
    let start = vec![0usize; covers.len()];
    ids[0].insert(start.clone(), 0);
    let mut q = VecDeque::from([(0usize, start)]);
    let mut trans: Vec<Vec<(usize, usize)>> = vec![Vec::new(); upsilon.len()];
    let inv: Vec<Vec<Vec<usize>>> = covers
        .iter()
        .map(|c| {
            c.perms
                .iter()
                .map(|p| {
                    let mut r = vec![0; p.len()];
                    for (i, &j) in p.iter().enumerate() {
                        r[j] = i;
                    }
                    r
                })
                .collect()
        })
        .collect();
    while let Some((piece, st)) = q.pop_front() {
        for (u, &(_, [a, b])) in upsilon.iter().enumerate() {
            for (from, to, fwd) in [(a, b, true), (b, a, false)] {
                if from != piece {
                    continue;
                }
                let next: Vec<usize> = st
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| if fwd { covers[k].perms[u][s] } else { inv[k][u][s] })
                    .collect();
                if !ids[to].contains_key(&next) {
                    let n = ids[to].len();
                    ids[to].insert(next.clone(), n);
                    q.push_back((to, next));
                }
            }
        }
    }
    let d = ids[0].len();
    for (u, &(_, [a, b])) in upsilon.iter().enumerate() {
        for (st, &i) in &ids[a] {
            let next: Vec<usize> = st.iter().enumerate().map(|(k, &s)| covers[k].perms[u][s]).collect();
            trans[u].push((i, ids[b][&next]));
        }
    }
    let perms = trans
        .into_iter()
        .map(|t| {
            let mut p = vec![0; d];
            for (i, j) in t {
                p[i] = j;
            }
            p
        })
        .collect();
    PermutationCover { d, perms }
}

fn rank_mod(rows: &[Vec<i64>], p: i64) -> usize {
    let mut m: Vec<Vec<i64>> = rows.iter().map(|r| r.iter().map(|x| x.rem_euclid(p)).collect()).collect();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..ncols {
        let Some(piv) = (rank..m.len()).find(|&i| m[i][c] != 0) else { continue };
        m.swap(rank, piv);
        let inv = (1..p).find(|&t| t * m[rank][c] % p == 1).unwrap();
        for x in m[rank].iter_mut() {
            *x = *x * inv % p;
        }
        for i in 0..m.len() {
            if i != rank && m[i][c] != 0 {
                let f = m[i][c];
                for j in 0..ncols {
                    m[i][j] = (m[i][j] - f * m[rank][j]).rem_euclid(p);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Elementary abelian voltage cover of Υ in which every elevation of every
/// given Υ_H embeds. Starts from the mod-p homology cover and quotients by
/// a greedily grown subspace W while no vertex difference of any Υ_H falls
/// into W + (cycle voltages of Υ_H).
pub fn abelian_embedding_cover(
    pieces: usize,
    upsilon: &[(usize, [usize; 2])],
    graphs: &[&HGraph],
    p: i64,
) -> Option<PermutationCover> {
    let mut in_tree = vec![false; upsilon.len()];
    let mut seen = vec![false; pieces];
    seen[0] = true;
    let mut q = VecDeque::from([0usize]);
    while let Some(x) = q.pop_front() {
        for (u, &(_, [a, b])) in upsilon.iter().enumerate() {
            for (s, t) in [(a, b), (b, a)] {
                if s == x && !seen[t] {
                    seen[t] = true;
                    in_tree[u] = true;
                    q.push_back(t);
                }
            }
        }
    }
    let free: Vec<usize> = (0..upsilon.len()).filter(|&u| !in_tree[u]).collect();
    let r = free.len();
    let volt = |u: usize| -> Vec<i64> {
        let mut v = vec![0; r];
        if let Some(i) = free.iter().position(|&f| f == u) {
            v[i] = 1;
        }
        v
    };
    let up: HashMap<usize, usize> = upsilon.iter().enumerate().map(|(i, &(h, _))| (h, i)).collect();
    // (cycle span, difference) conditions
    let mut conds: Vec<(Vec<Vec<i64>>, Vec<i64>)> = Vec::new();
    for g in graphs {
        let n = g.vertices.len();
        let mut pot: Vec<Option<Vec<i64>>> = vec![None; n];
        let mut cycles = Vec::new();
        for root in 0..n {
            if pot[root].is_some() {
                continue;
            }
            pot[root] = Some(vec![0; r]);
            let mut st = vec![root];
            while let Some(x) = st.pop() {
                for e in &g.edges {
                    let f = volt(up[&e.cut]);
                    for (a, b, sg) in [(e.ends[0], e.ends[1], 1), (e.ends[1], e.ends[0], -1)] {
                        if a != x {
                            continue;
                        }
                        let want: Vec<i64> = pot[a].as_ref().unwrap().iter().zip(&f).map(|(x, y)| x + sg * y).collect();
                        match &pot[b] {
                            None => {
                                pot[b] = Some(want);
                                st.push(b);
                            }
                            Some(have) => cycles.push(want.iter().zip(have).map(|(x, y)| x - y).collect()),
                        }
                    }
                }
            }
        }
        for x in 0..n {
            for y in x + 1..n {
                if g.vertices[x] == g.vertices[y] {
                    let d = pot[x].as_ref().unwrap().iter().zip(pot[y].as_ref().unwrap()).map(|(a, b)| a - b).collect();
                    conds.push((cycles.clone(), d));
                }
            }
        }
    }
    let holds = |w: &[Vec<i64>]| {
        conds.iter().all(|(k, d)| {
            let mut rows: Vec<Vec<i64>> = w.iter().chain(k.iter()).cloned().collect();
            let base = rank_mod(&rows, p);
            rows.push(d.clone());
            rank_mod(&rows, p) > base
        })
    };
    if !holds(&[]) {
        return None;
    }
    let mut w: Vec<Vec<i64>> = Vec::new();
    let total = (p as usize).pow(r as u32);
    for code in 1..total {
        let mut v = vec![0i64; r];
        let mut c = code;
        for x in v.iter_mut() {
            *x = (c % p as usize) as i64;
            c /= p as usize;
        }
        let mut cand = w.clone();
        cand.push(v);
        if rank_mod(&cand, p) > w.len() && holds(&cand) {
            w = cand;
        }
    }
    // quotient coordinates: reduce by an echelon basis of W, keep free columns
    let mut ech: Vec<(usize, Vec<i64>)> = Vec::new();
    for v in &w {
        let mut v = v.clone();
        for (c, row) in &ech {
            let f = v[*c];
            for j in 0..r {
                v[j] = (v[j] - f * row[j]).rem_euclid(p);
            }
        }
        let c = v.iter().position(|&x| x != 0).unwrap();
        let inv = (1..p).find(|&t| t * v[c] % p == 1).unwrap();
        v.iter_mut().for_each(|x| *x = *x * inv % p);
        for (_, row) in ech.iter_mut() {
            let f = row[c];
            for j in 0..r {
                row[j] = (row[j] - f * v[j]).rem_euclid(p);
            }
        }
        ech.push((c, v));
    }
    let keep: Vec<usize> = (0..r).filter(|j| !ech.iter().any(|(c, _)| c == j)).collect();
    let coords = |v: &[i64]| -> Vec<i64> {
        let mut v = v.to_vec();
        for (c, row) in &ech {
            let f = v[*c];
            for j in 0..r {
                v[j] = (v[j] - f * row[j]).rem_euclid(p);
            }
        }
        keep.iter().map(|&j| v[j]).collect()
    };
    let d = (p as usize).pow(keep.len() as u32);
    let to_sheet = |v: &[i64]| v.iter().rev().fold(0usize, |acc, &x| acc * p as usize + x as usize);
    let from_sheet = |mut s: usize| -> Vec<i64> {
        (0..keep.len())
            .map(|_| {
                let x = (s % p as usize) as i64;
                s /= p as usize;
                x
            })
            .collect()
    };
    let perms = (0..upsilon.len())
        .map(|u| {
            let f = coords(&volt(u));
            (0..d)
                .map(|s| {
                    let v: Vec<i64> = from_sheet(s).iter().zip(&f).map(|(a, b)| (a + b) % p).collect();
                    to_sheet(&v)
                })
                .collect()
        })
        .collect();
    Some(PermutationCover { d, perms })
}

/// Pull a cover of Υ back along the collapse of a complex: cut edges follow
/// their Υ edge, every other edge stays on its sheet.
fn pull_back(x: &CubeComplex, hp: &Hyperplanes, dg: &DecompositionGraphs, cov: &PermutationCover) -> PermutationCover {
    let up: HashMap<usize, usize> = dg.upsilon.iter().enumerate().map(|(i, &(h, _))| (h, i)).collect();
    let perms = (0..x.edges.len())
        .map(|e| {
            if x.edge_tags[e] != EdgeTag::Cut {
                return (0..cov.d).collect();
            }
            let p = &cov.perms[up[&hp.of_edge[e]]];
            if hp.orient[e] > 0 {
                p.clone()
            } else {
                let mut r = vec![0; cov.d];
                for (i, &j) in p.iter().enumerate() {
                    r[j] = i;
                }
                r
            }
        })
        .collect();
    PermutationCover { d: cov.d, perms }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub name: String,
    pub degree: usize,
    pub vertices: usize,
    pub cells: usize,
    pub euler_characteristic: i64,
    pub cut_self_osculation: usize,
    pub bind_self_osculation: usize,
    pub cut_bind_inter_osculation: usize,
    pub other_witnesses: usize,
    pub iota: [usize; 3],
}

fn stage_report(name: &str, base: &CubeComplex, st: &Stage) -> (StageReport, Hyperplanes, DecompositionGraphs) {
    let hp = st.complex.hyperplanes();
    let pa = pathologies(&st.complex, &hp);
    let dg = decomposition_graphs(&st.complex, &hp);
    let count = |c: IotaClass| dg.graphs.iter().filter(|g| g.class == c).count();
    let r = StageReport {
        name: name.into(),
        degree: st.degree(base),
        vertices: st.complex.num_vertices,
        cells: st.complex.cell_count(),
        euler_characteristic: st.complex.euler_characteristic(),
        cut_self_osculation: pa.cut_self_osculation.len(),
        bind_self_osculation: pa.bind_self_osculation.len(),
        cut_bind_inter_osculation: pa.cut_bind_inter_osculation.len(),
        other_witnesses: pa.other.len(),
        iota: [count(IotaClass::Embedding), count(IotaClass::Immersion), count(IotaClass::NotImmersion)],
    };
    (r, hp, dg)
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub n: usize,
    pub lcm: Vec<usize>,
    pub cyclic_degrees: Vec<usize>,
    pub tower_degrees: Vec<usize>,
    pub final_degree: usize,
    pub stages: Vec<StageReport>,
    pub census: Census,
    pub special: bool,
    pub witnesses: Vec<Witness>,
    pub local_isometry: bool,
    pub generators: usize,
    pub crossing_graph: Vec<(usize, usize)>,
    pub crossing_dot: String,
}

fn check_budget(stage: &str, cells: usize, budget: usize) -> Result<(), CubulationError> {
    if cells > budget {
        Err(CubulationError::TowerBlowup { stage: stage.into(), cells, budget })
    } else {
        Ok(())
    }
}

/// Everything up to the special cover, for n = 0.
pub fn lerf_tower_and_certify(cbs: &CutBindSystem, budget: usize) -> Result<(Certificate, CubeComplex), CubulationError> {
    let sc = surface_square_complex(cbs);
    let g = glue_canonical(cbs, &sc)?;
    let x = &g.complex;
    x.validate()?;
    let base = Stage { complex: x.clone(), vmap: (0..x.num_vertices).collect(), emap: (0..x.edges.len()).collect() };
    let (rep, hp, dg) = stage_report("X", x, &base);
    let census = hyperplane_census(&g, cbs, &hp, &dg)?;
    let mut stages = vec![rep];
    let classes = cbs.xi.classes();
    let mut lcm = Vec::new();
    let mut cyclic_degrees = Vec::new();
    let mut tower_degrees = Vec::new();
    let mut covers = Vec::new();
    for j in 1..=classes {
        let l = divisibility(&cbs.xi, cbs, j, DivTarget::Lcm)?.to_usize().unwrap();
        lcm.push(l);
        check_budget(&format!("cyclic {j}"), x.cell_count() * l, budget)?;
        let y = cyclic_cover(x, j, l)?;
        let (rep, yhp, ydg) = stage_report(&format!("cyclic {j}"), x, &y);
        cyclic_degrees.push(rep.degree);
        // no cut self-osculation over pants of vertical index j
        let pa = pathologies(&y.complex, &yhp);
        for w in &pa.cut_self_osculation {
            if let Witness::SelfOsculation { vertex, .. } = w {
                let r = g.vertex_region[y.vmap[*vertex]];
                if cbs.xi.index[cbs.decomposition.pants[sc.pants_of_region[r]].vertex] == j {
                    return Err(CubulationError::PostCheck(format!("cut self-osculation over index {j} in cyclic cover")));
                }
            }
        }
        let bind: Vec<&HGraph> = ydg.graphs.iter().filter(|h| h.tag == EdgeTag::Bind(j)).collect();
        if bind.iter().any(|h| h.class == IotaClass::NotImmersion) {
            return Err(CubulationError::PostCheck(format!("bind({j}) hyperplane not immersed in cyclic cover")));
        }
        stages.push(rep);
        let best = [2, 3, 5].into_iter().filter_map(|p| abelian_embedding_cover(ydg.pieces, &ydg.upsilon, &bind, p)).min_by_key(|c| c.d);
        let ups = match best {
            Some(c) => c,
            None => {
                let completions: Vec<PermutationCover> =
                    bind.iter().map(|h| stallings_completion(h, ydg.pieces, &ydg.upsilon)).collect();
                product_component(ydg.pieces, &ydg.upsilon, &completions)
            }
        };
        check_budget(&format!("tower {j}"), y.complex.cell_count() * ups.d, budget)?;
        let pb = pull_back(&y.complex, &yhp, &ydg, &ups);
        let cv = cover_component(&y.complex, &pb, 0, 0)?;
        let z = Stage {
            vmap: cv.vertex_map.iter().map(|&(v, _)| y.vmap[v]).collect(),
            emap: cv.edge_map.iter().map(|&(e, _)| y.emap[e]).collect(),
            complex: cv.complex,
        };
        let (rep, _, zdg) = stage_report(&format!("tower {j}"), x, &z);
        if zdg.graphs.iter().any(|h| h.tag == EdgeTag::Bind(j) && h.class != IotaClass::Embedding) {
            return Err(CubulationError::PostCheck(format!("bind({j}) elevation not embedded after completion")));
        }
        tower_degrees.push(rep.degree);
        stages.push(rep);
        covers.push(to_permutation_cover(x, &z.complex, &z.vmap, &z.emap));
    }
    let mut pc = covers[0].clone();
    for c in &covers[1..] {
        pc = fiber_product(&pc, c);
    }
    check_budget("fiber product", x.num_vertices * pc.d, budget)?;
    let fin = cover_component(x, &pc, 0, 0)?;
    let stage = Stage {
        vmap: fin.vertex_map.iter().map(|p| p.0).collect(),
        emap: fin.edge_map.iter().map(|p| p.0).collect(),
        complex: fin.complex,
    };
    check_budget("final", stage.complex.cell_count(), budget)?;
    let (rep, fhp, _) = stage_report("final", x, &stage);
    let final_degree = rep.degree;
    stages.push(rep);
    let sp = stage.complex.specialness_with(&fhp);
    if !sp.special {
        return Err(CubulationError::NotSpecialAfterTower(sp.witnesses.len()));
    }
    let raag = raag_and_char_map(&stage.complex)?;
    let cert = Certificate {
        n: cbs.xi.n,
        lcm,
        cyclic_degrees,
        tower_degrees,
        final_degree,
        stages,
        census,
        special: sp.special,
        witnesses: sp.witnesses,
        local_isometry: raag.local_isometry,
        generators: raag.generators,
        crossing_dot: raag.to_dot(),
        crossing_graph: raag.crossing_graph,
    };
    Ok((cert, stage.complex))
}

/// Outcome of the cubulation command.
#[derive(Clone, Debug, Serialize)]
pub enum Cubulation {
    Certified(Box<Certificate>),
    Symbolic(SymbolicCensus),
}

pub fn cubulate(m: &SurfaceModel, g: &ConfigGraph, budget: usize) -> Result<(Cubulation, Option<CubeComplex>), CubulationError> {
    let cbs = cutbind::cut_bind_system(m, g)?;
    if cbs.xi.n > 0 {
        return Ok((Cubulation::Symbolic(symbolic_census(&cbs)?), None));
    }
    let (cert, fin) = lerf_tower_and_certify(&cbs, budget)?;
    Ok((Cubulation::Certified(Box::new(cert)), Some(fin)))
}

/// Vertex bijection preserving tagged directed edges with multiplicity and
/// carrying cubes onto cubes, found by backtracking.
pub fn find_isomorphism(a: &CubeComplex, b: &CubeComplex) -> Option<Vec<usize>> {
    if a.num_vertices != b.num_vertices || a.edges.len() != b.edges.len() || a.cubes.len() != b.cubes.len() {
        return None;
    }
    let n = a.num_vertices;
    let mult = |x: &CubeComplex| {
        let mut m: HashMap<(usize, usize, EdgeTag), usize> = HashMap::new();
        for (e, en) in x.edges.iter().enumerate() {
            *m.entry((en[0], en[1], x.edge_tags[e])).or_default() += 1;
        }
        m
    };
    let (ma, mb) = (mult(a), mult(b));
    let sig = |x: &CubeComplex| {
        let mut s: Vec<Vec<(EdgeTag, u8)>> = vec![Vec::new(); x.num_vertices];
        for (e, en) in x.edges.iter().enumerate() {
            s[en[0]].push((x.edge_tags[e], 0));
            s[en[1]].push((x.edge_tags[e], 1));
        }
        for v in s.iter_mut() {
            v.sort_by_key(|(t, d)| (format!("{t:?}"), *d));
        }
        s
    };
    let (sa, sb) = (sig(a), sig(b));
    let nbrs = |x: &CubeComplex| {
        let mut nb = vec![Vec::new(); x.num_vertices];
        for en in &x.edges {
            nb[en[0]].push(en[1]);
            nb[en[1]].push(en[0]);
        }
        nb
    };
    let (na, nb) = (nbrs(a), nbrs(b));
    // breadth-first order so every vertex after the first has a placed neighbour
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            for &w in &na[v] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
    }
    let cube_keys = |x: &CubeComplex, f: &dyn Fn(usize) -> usize| {
        let mut keys: Vec<Vec<(usize, usize, String)>> = x
            .cubes
            .iter()
            .map(|c| {
                let mut k: Vec<(usize, usize, String)> = c
                    .edges
                    .iter()
                    .map(|&(e, _)| (f(x.edges[e][0]), f(x.edges[e][1]), format!("{:?}", x.edge_tags[e])))
                    .collect();
                k.sort();
                k
            })
            .collect();
        keys.sort();
        keys
    };
    let target = cube_keys(b, &|v| v);
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    #[allow(clippy::too_many_arguments)]
    fn go(
        k: usize,
        order: &[usize],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        cands: &dyn Fn(&[usize], usize) -> Vec<usize>,
        ok: &dyn Fn(&[usize], usize, usize) -> bool,
        done: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if k == order.len() {
            return done(map);
        }
        let v = order[k];
        for w in cands(map, v) {
            if used[w] || !ok(map, v, w) {
                continue;
            }
            map[v] = w;
            used[w] = true;
            if go(k + 1, order, map, used, cands, ok, done) {
                return true;
            }
            map[v] = usize::MAX;
            used[w] = false;
        }
        false
    }
    let cands = |map: &[usize], v: usize| -> Vec<usize> {
        match na[v].iter().find(|&&u| map[u] != usize::MAX) {
            Some(&u) => {
                let mut c = nb[map[u]].clone();
                c.sort();
                c.dedup();
                c
            }
            None => (0..n).collect(),
        }
    };
    let ok = |map: &[usize], v: usize, w: usize| -> bool {
        if sa[v] != sb[w] {
            return false;
        }
        let tags: Vec<EdgeTag> = a.edge_tags.to_vec();
        for &u in na[v].iter().chain(std::iter::once(&v)) {
            let fu = if u == v { w } else { map[u] };
            if fu == usize::MAX {
                continue;
            }
            for t in &tags {
                for (p, q, fp, fq) in [(v, u, w, fu), (u, v, fu, w)] {
                    if ma.get(&(p, q, *t)) != mb.get(&(fp, fq, *t)) {
                        return false;
                    }
                }
            }
        }
        true
    };
    let mut result = None;
    let mut done = |m: &[usize]| -> bool {
        if cube_keys(a, &|v| m[v]) == target {
            result = Some(m.to_vec());
            true
        } else {
            false
        }
    };
    go(0, &order, &mut map, &mut used, &cands, &ok, &mut done);
    result
}


#[cfg(test)]
mod tower_tests {
    use super::*;
    use crate::config_graph::two_vertex;
    use crate::cutbind::cut_bind_system;
    use crate::surface_model::build_model;

    #[test]
    fn two_three_six_tower_is_special() {
        let g = two_vertex(&[2, -3, -6]);
        let m = build_model(&g);
        let cbs = cut_bind_system(&m, &g).unwrap();
        let (cert, fin) = lerf_tower_and_certify(&cbs, DEFAULT_BUDGET).unwrap();
        for s in &cert.stages {
            eprintln!("{s:?}");
        }
        assert!(cert.special && cert.witnesses.is_empty() && cert.local_isometry);
        assert_eq!(cert.lcm, vec![6, 6]);
        assert_eq!(cert.cyclic_degrees, vec![6, 6]);
        assert_eq!(fin.euler_characteristic(), 0);
    }
}
