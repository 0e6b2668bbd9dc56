//! Cut-bind systems on the fiber surface: pants decomposition, the invariant
//! class and its fiber-shifted relatives, arc patterns, and the dual square
//! complex of F.
//!
//! Orientation conventions. Each pants is drawn as a disk (outer slot z)
//! with two holes (z' west, z'' east); slots carry the induced boundary
//! orientation, so the pants lies on the left of every slot. A bind edge is
//! oriented so that crossing it forward adds +1 to ξ̄, and cut edges run from
//! side 0 (slot class +[c]) to side 1 (slot class −[c]).

use std::collections::VecDeque;

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::config_graph::ConfigGraph;
use crate::cube_kernel::{Cube, CubeComplex, EdgeEnd, EdgeTag};
use crate::current_solver::{cycle_sum, vertex_sum, CurrentSolution};
use crate::linalg::{self, big_to_i64};
use crate::surface_model::{fiber_values, invariant_functionals, survives, ModelError, SurfaceModel};

const PERMUTATION_CAP: usize = 20_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CutBindError {
    #[error("curve of edge {0} does not survive")]
    SurvivalPreconditionFailed(usize),
    #[error("no pants template with surviving curves found for vertex {0}")]
    TemplateSearchExhausted(usize),
    #[error("every invariant functional vanishes on curve {0}")]
    NoNondegenerateXi(usize),
    #[error("bad pants triple {0:?}")]
    BadTriple([i64; 3]),
    #[error("no shift realizes the class on curve {0}")]
    ShiftSearchFailed(usize),
    #[error("realization check failed: {0}")]
    RealizationMismatch(String),
    #[error("class index {0} out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Jsj { edge: usize },
    Handle { vertex: usize, i: usize },
    Chain { vertex: usize, j: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Side {
    pub pants: usize,
    pub slot: usize,
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub class: Vec<BigInt>,
    /// sides[0] has slot class +[c], sides[1] has −[c].
    pub sides: [Side; 2],
    /// In the spanning tree of the pants adjacency graph.
    pub tree: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pants {
    pub vertex: usize,
    pub curves: [usize; 3],
    pub signs: [i8; 3],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub curves: Vec<Curve>,
    pub pants: Vec<Pants>,
}

impl Decomposition {
    pub fn slot_class(&self, p: usize, s: usize) -> Vec<BigInt> {
        let sg = BigInt::from(self.pants[p].signs[s]);
        self.curves[self.pants[p].curves[s]].class.iter().map(|x| x * &sg).collect()
    }

    /// Adjacent pants across curve c from pants p (or p itself).
    fn across(&self, c: usize, p: usize) -> usize {
        let s = &self.curves[c].sides;
        if s[0].pants == p {
            s[1].pants
        } else {
            s[0].pants
        }
    }
}

fn check_survival(m: &SurfaceModel, g: &ConfigGraph) -> Result<(), CutBindError> {
    for e in 0..g.num_edges() {
        if !survives(m, g, &m.z[e]) {
            return Err(CutBindError::SurvivalPreconditionFailed(e));
        }
    }
    Ok(())
}

/// Pants decomposition of F subordinate to the JSJ curves. Each F_v is cut
/// along its handle curves and the planar residue is chained by partial
/// boundary sums; entry orders are searched until every added class
/// survives.
pub fn pants_subordinate(m: &SurfaceModel, g: &ConfigGraph) -> Result<Decomposition, CutBindError> {
    check_survival(m, g)?;
    let mut curves: Vec<Curve> = Vec::new();
    let dummy = Side { pants: usize::MAX, slot: 0, sign: 0 };
    for e in 0..g.num_edges() {
        curves.push(Curve { kind: CurveKind::Jsj { edge: e }, class: m.z[e].clone(), sides: [dummy; 2], tree: m.tree.in_tree[e] });
    }
    let mut pants: Vec<Pants> = Vec::new();
    for v in 0..g.num_vertices() {
        let mut entries: Vec<(usize, i8)> = g.ends_at(v).iter().map(|&d| (d.edge, m.eps(d))).collect();
        for (i, &(a, _)) in m.handles[v].iter().enumerate() {
            let c = curves.len();
            curves.push(Curve { kind: CurveKind::Handle { vertex: v, i }, class: m.unit(a), sides: [dummy; 2], tree: false });
            entries.push((c, 1));
            entries.push((c, -1));
        }
        let n = entries.len();
        let class_of = |(c, s): (usize, i8)| -> Vec<BigInt> {
            curves[c].class.iter().map(|x| x * BigInt::from(s)).collect()
        };
        let mut found = None;
        for order in (0..n).permutations(n).take(PERMUTATION_CAP) {
            let mut acc = vec![BigInt::zero(); m.dim];
            let mut chain = Vec::new();
            let mut ok = true;
            for &k in order.iter().take(n.saturating_sub(2)) {
                for (a, b) in acc.iter_mut().zip(class_of(entries[k])) {
                    *a += b;
                }
                chain.push(acc.clone());
            }
            // chain[j] for j = 1..n-3 are the added curves C_j
            let added: Vec<Vec<BigInt>> = if n > 3 { chain[1..n - 2].to_vec() } else { Vec::new() };
            for c in &added {
                if !survives(m, g, c) {
                    ok = false;
                    break;
                }
            }
            if ok {
                found = Some((order, added));
                break;
            }
        }
        let (order, added) = found.ok_or(CutBindError::TemplateSearchExhausted(v))?;
        let ent: Vec<(usize, i8)> = order.iter().map(|&k| entries[k]).collect();
        let first_chain = curves.len();
        for (j, c) in added.into_iter().enumerate() {
            curves.push(Curve { kind: CurveKind::Chain { vertex: v, j: j + 1 }, class: c, sides: [dummy; 2], tree: true });
        }
        if n == 3 {
            pants.push(Pants { vertex: v, curves: [ent[0].0, ent[1].0, ent[2].0], signs: [ent[0].1, ent[1].1, ent[2].1] });
        } else {
            let ch = |j: usize| first_chain + j - 1;
            pants.push(Pants { vertex: v, curves: [ent[0].0, ent[1].0, ch(1)], signs: [ent[0].1, ent[1].1, -1] });
            for j in 1..n - 3 {
                pants.push(Pants { vertex: v, curves: [ch(j), ent[j + 1].0, ch(j + 1)], signs: [1, ent[j + 1].1, -1] });
            }
            pants.push(Pants {
                vertex: v,
                curves: [ch(n - 3), ent[n - 2].0, ent[n - 1].0],
                signs: [1, ent[n - 2].1, ent[n - 1].1],
            });
        }
    }
    let mut seen: Vec<Vec<Side>> = vec![Vec::new(); curves.len()];
    for (p, pa) in pants.iter().enumerate() {
        for s in 0..3 {
            seen[pa.curves[s]].push(Side { pants: p, slot: s, sign: pa.signs[s] });
        }
    }
    for (c, sides) in seen.into_iter().enumerate() {
        assert_eq!(sides.len(), 2, "curve {c} must bound exactly two slots");
        let (a, b) = if sides[0].sign == 1 { (sides[0], sides[1]) } else { (sides[1], sides[0]) };
        assert!(a.sign == 1 && b.sign == -1, "curve {c} sides have equal signs");
        curves[c].sides = [a, b];
    }
    Ok(Decomposition { curves, pants })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct XiData {
    /// ξ̄ as a row vector in the model basis.
    pub xi: Vec<BigInt>,
    /// ξ̄ on each curve class.
    pub curve_values: Vec<BigInt>,
    /// ξ⁰ on the fiber class of each vertex.
    pub fiber: Vec<BigInt>,
    /// Distinct fiber values, ascending; ξ^j = ξ⁰ − levels[j−1] on fibers.
    pub levels: Vec<BigInt>,
    /// Vertical index i(v), 1-based.
    pub index: Vec<usize>,
    pub n: usize,
}

impl XiData {
    /// ξ^j on the fiber class of v.
    pub fn on_fiber(&self, j: usize, v: usize) -> BigInt {
        &self.fiber[v] - &self.levels[j - 1]
    }
    /// t_j = −(fiber value of the j-th level).
    pub fn t(&self, j: usize) -> BigInt {
        -&self.levels[j - 1]
    }
    pub fn classes(&self) -> usize {
        self.n + 2
    }
}

/// Generic integral invariant class nonzero on every curve, with the
/// derived fiber data.
pub fn xi_select(m: &SurfaceModel, g: &ConfigGraph, d: &Decomposition) -> Result<XiData, CutBindError> {
    let basis = invariant_functionals(m, g);
    let vals: Vec<Vec<BigRational>> = basis
        .iter()
        .map(|xi| d.curves.iter().map(|c| linalg::qz(&linalg::dot(xi, &c.class))).collect())
        .collect();
    let kept: Vec<usize> = (0..basis.len()).filter(|&k| vals[k].iter().any(|x| !x.is_zero())).collect();
    let kv: Vec<Vec<BigRational>> = kept.iter().map(|&k| vals[k].clone()).collect();
    let (lambdas, w) = linalg::greedy_nonvanishing(&kv, d.curves.len());
    if let Some(c) = w.iter().position(|x| x.is_zero()) {
        return Err(CutBindError::NoNondegenerateXi(c));
    }
    let mut xi = vec![BigInt::zero(); m.dim];
    for (&k, lam) in kept.iter().zip(&lambdas) {
        for (a, b) in xi.iter_mut().zip(&basis[k]) {
            *a += lam * b;
        }
    }
    let gcd = linalg::gcd_all(&xi);
    let mut curve_values: Vec<BigInt> = d.curves.iter().map(|c| linalg::dot(&xi, &c.class)).collect();
    let flip = curve_values[0].is_negative();
    for x in xi.iter_mut() {
        *x = &*x / &gcd * if flip { -1 } else { 1 };
    }
    curve_values = d.curves.iter().map(|c| linalg::dot(&xi, &c.class)).collect();
    let fiber = fiber_values(m, g, &xi)?;
    let mut levels = fiber.clone();
    levels.sort();
    levels.dedup();
    let index = fiber.iter().map(|f| levels.iter().position(|l| l == f).unwrap() + 1).collect();
    let n = levels.len() - 2;
    Ok(XiData { xi, curve_values, fiber, levels, index, n })
}

/// The JSJ values as a symmetric current solution (read at positive ends).
pub fn as_current(m: &SurfaceModel, xd: &XiData, g: &ConfigGraph) -> CurrentSolution {
    CurrentSolution { y: (0..g.num_edges()).map(|e| linalg::qz(&xd.curve_values[e])).collect(), eps: m.eps.clone() }
}

/// Whether the JSJ values solve the current equations nondegenerately.
pub fn current_bridge_holds(m: &SurfaceModel, xd: &XiData, g: &ConfigGraph) -> bool {
    let x = as_current(m, xd, g);
    x.nondegenerate()
        && (0..g.num_vertices()).all(|v| vertex_sum(g, &x, v).is_zero())
        && m.tree.cycles.iter().all(|c| cycle_sum(g, &x, &c.ends).is_zero())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RotEntry {
    Cut { slot: usize, seg: usize },
    Bind { strand: usize, tail: bool },
}

/// Arc pattern of one pants in canonical slot order (z, z', z'').
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PantsPattern {
    pub m: [i64; 3],
    /// Region 0 is the octagon, then bands B'_k, then bands B''_k.
    pub regions: usize,
    /// (tail, head) regions of each strand, in the positive crossing direction.
    pub strands: Vec<[usize; 2]>,
    /// Region of the segment after point idx, per slot.
    pub seg: [Vec<usize>; 3],
    /// Strand through point idx, per slot.
    pub point: [Vec<usize>; 3],
    /// Counterclockwise edge ends around each region.
    pub rotation: Vec<Vec<RotEntry>>,
}

impl PantsPattern {
    pub fn arcs(&self) -> (usize, usize) {
        (self.m[1].unsigned_abs() as usize, self.m[2].unsigned_abs() as usize)
    }
    pub fn bands(&self) -> usize {
        self.regions - 1
    }
}

/// Position of (z, z', z'') among the three slots: z carries the odd sign.
pub fn canonical_order(t: [i64; 3]) -> Option<[usize; 3]> {
    if t.iter().sum::<i64>() != 0 || t.contains(&0) {
        return None;
    }
    let z = (0..3).find(|&i| (0..3).filter(|&j| j != i).all(|j| t[j].signum() != t[i].signum()))?;
    let rest: Vec<usize> = (0..3).filter(|&j| j != z).collect();
    Some([z, rest[0], rest[1]])
}

pub fn pants_arc_pattern(t: [i64; 3]) -> Result<PantsPattern, CutBindError> {
    if canonical_order(t) != Some([0, 1, 2]) {
        return Err(CutBindError::BadTriple(t));
    }
    let pos = t[0] > 0;
    let a = t[1].unsigned_abs() as usize;
    let b = t[2].unsigned_abs() as usize;
    let big = a + b;
    let bp = |k: usize| k; // B'_k
    let bpp = |k: usize| a - 1 + k; // B''_k
    let north = |k: usize| if k == 1 { 0 } else { bp(k - 1) };
    let south = |k: usize| if k == a { 0 } else { bp(k) };
    let south2 = |k: usize| if k == 1 { 0 } else { bpp(k - 1) };
    let north2 = |k: usize| if k == b { 0 } else { bpp(k) };
    let mut strands = Vec::new();
    for k in 1..=a {
        strands.push(if pos { [north(k), south(k)] } else { [south(k), north(k)] });
    }
    for k in 1..=b {
        strands.push(if pos { [south2(k), north2(k)] } else { [north2(k), south2(k)] });
    }
    let s1 = |k: usize| k - 1;
    let s2 = |k: usize| a + k - 1;
    let seg0: Vec<usize> = (0..big)
        .map(|i| match i {
            i if i + 1 < a => bp(i + 1),
            i if i + 1 == a => 0,
            i if i + 1 < big => bpp(i - a + 1),
            _ => 0,
        })
        .collect();
    let point0: Vec<usize> = (0..big).collect();
    let seg1: Vec<usize> = (0..a).map(|i| if a - i == 1 { 0 } else { bp(a - i - 1) }).collect();
    let point1: Vec<usize> = (0..a).map(|i| s1(a - i)).collect();
    let seg2: Vec<usize> = (0..b).map(|i| if b - i == 1 { 0 } else { bpp(b - i - 1) }).collect();
    let point2: Vec<usize> = (0..b).map(|i| s2(b - i)).collect();
    let mut rotation = vec![Vec::new(); big - 1];
    rotation[0] = vec![
        RotEntry::Cut { slot: 0, seg: big - 1 },
        RotEntry::Bind { strand: s1(1), tail: pos },
        RotEntry::Cut { slot: 1, seg: a - 1 },
        RotEntry::Bind { strand: s1(a), tail: !pos },
        RotEntry::Cut { slot: 0, seg: a - 1 },
        RotEntry::Bind { strand: s2(1), tail: pos },
        RotEntry::Cut { slot: 2, seg: b - 1 },
        RotEntry::Bind { strand: s2(b), tail: !pos },
    ];
    for k in 1..a {
        rotation[bp(k)] = vec![
            RotEntry::Bind { strand: s1(k), tail: !pos },
            RotEntry::Cut { slot: 0, seg: k - 1 },
            RotEntry::Bind { strand: s1(k + 1), tail: pos },
            RotEntry::Cut { slot: 1, seg: a - k - 1 },
        ];
    }
    for k in 1..b {
        rotation[bpp(k)] = vec![
            RotEntry::Bind { strand: s2(k + 1), tail: pos },
            RotEntry::Cut { slot: 2, seg: b - k - 1 },
            RotEntry::Bind { strand: s2(k), tail: !pos },
            RotEntry::Cut { slot: 0, seg: a + k - 1 },
        ];
    }
    Ok(PantsPattern { m: t, regions: big - 1, strands, seg: [seg0, seg1, seg2], point: [point0, point1, point2], rotation })
}

/// A pants with its canonical pattern: canon[c] is the original slot at
/// canonical position c.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlacedPants {
    pub canon: [usize; 3],
    pub pattern: PantsPattern,
}

impl PlacedPants {
    fn canonical_slot(&self, slot: usize) -> usize {
        self.canon.iter().position(|&s| s == slot).unwrap()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CutBindSystem {
    pub decomposition: Decomposition,
    pub xi: XiData,
    pub placed: Vec<PlacedPants>,
    /// Gluing shift per curve: side-0 point k meets side-1 point shift − k.
    pub shifts: Vec<usize>,
    /// Non-tree curves in Lagrangian order with (curve, ℓ index, dual index).
    pub lagrangian: Vec<(usize, usize, usize)>,
    /// Twists along non-tree curves absorbed into the identification.
    pub windings: Vec<BigInt>,
    /// [W] in the model basis.
    pub w_class: Vec<BigInt>,
}

impl CutBindSystem {
    pub fn value(&self, c: usize) -> i64 {
        big_to_i64(&self.xi.curve_values[c])
    }
    /// ξ̄ on the oriented slot.
    pub fn slot_value(&self, p: usize, s: usize) -> i64 {
        let pa = &self.decomposition.pants[p];
        self.value(pa.curves[s]) * pa.signs[s] as i64
    }
    pub fn points(&self) -> usize {
        (0..self.decomposition.curves.len()).map(|c| self.value(c).unsigned_abs() as usize).sum()
    }
    /// Region after point idx on the given side of curve c.
    pub fn seg_region(&self, c: usize, side: usize, idx: usize) -> usize {
        let sd = self.decomposition.curves[c].sides[side];
        let pl = &self.placed[sd.pants];
        pl.pattern.seg[pl.canonical_slot(sd.slot)][idx]
    }
    /// Strand through point idx on the given side of curve c.
    pub fn point_strand(&self, c: usize, side: usize, idx: usize) -> usize {
        let sd = self.decomposition.curves[c].sides[side];
        let pl = &self.placed[sd.pants];
        pl.pattern.point[pl.canonical_slot(sd.slot)][idx]
    }
    /// Side-1 index of the segment glued to side-0 segment k.
    pub fn partner_segment(&self, c: usize, k: usize) -> usize {
        let big = self.value(c).unsigned_abs() as usize;
        (self.shifts[c] + 2 * big - k - 1) % big
    }
}

fn place(d: &Decomposition, values: &[BigInt]) -> Result<Vec<PlacedPants>, CutBindError> {
    d.pants
        .iter()
        .map(|p| {
            let t: [i64; 3] = std::array::from_fn(|s| big_to_i64(&values[p.curves[s]]) * p.signs[s] as i64);
            let canon = canonical_order(t).ok_or(CutBindError::BadTriple(t))?;
            let pattern = pants_arc_pattern([t[canon[0]], t[canon[1]], t[canon[2]]])?;
            Ok(PlacedPants { canon, pattern })
        })
        .collect()
}

/// Dual square complex of Z ∪ W with bookkeeping for loops.
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceComplex {
    pub complex: CubeComplex,
    /// First global region id per pants.
    pub offset: Vec<usize>,
    /// Global edge id per (pants, strand).
    pub strand_edge: Vec<Vec<usize>>,
    /// Global edge id per (curve, side-0 segment).
    pub cut_edge: Vec<Vec<usize>>,
    /// Counterclockwise edge ends around each region.
    pub rotation: Vec<Vec<EdgeEnd>>,
    pub pants_of_region: Vec<usize>,
}

pub fn surface_square_complex(cbs: &CutBindSystem) -> SurfaceComplex {
    let d = &cbs.decomposition;
    let mut offset = Vec::new();
    let mut pants_of_region = Vec::new();
    for (p, pl) in cbs.placed.iter().enumerate() {
        offset.push(pants_of_region.len());
        pants_of_region.extend(std::iter::repeat_n(p, pl.pattern.regions));
    }
    let mut x = CubeComplex { num_vertices: pants_of_region.len(), ..Default::default() };
    let mut strand_edge: Vec<Vec<usize>> = Vec::new();
    for (p, pl) in cbs.placed.iter().enumerate() {
        strand_edge.push(
            pl.pattern.strands.iter().map(|s| x.add_edge(offset[p] + s[0], offset[p] + s[1], EdgeTag::Bind(0))).collect(),
        );
    }
    let mut cut_edge = Vec::new();
    for (c, cv) in d.curves.iter().enumerate() {
        let big = cbs.value(c).unsigned_abs() as usize;
        let [s0, s1] = cv.sides;
        cut_edge.push(
            (0..big)
                .map(|k| {
                    let t = offset[s0.pants] + cbs.seg_region(c, 0, k);
                    let h = offset[s1.pants] + cbs.seg_region(c, 1, cbs.partner_segment(c, k));
                    x.add_edge(t, h, EdgeTag::Cut)
                })
                .collect::<Vec<_>>(),
        );
    }
    for (c, cv) in d.curves.iter().enumerate() {
        let big = cbs.value(c).unsigned_abs() as usize;
        let fwd = cbs.value(c) * cv.sides[0].sign as i64 > 0;
        for k in 0..big {
            let prev = (k + big - 1) % big;
            let b0 = strand_edge[cv.sides[0].pants][cbs.point_strand(c, 0, k)];
            let other = (cbs.shifts[c] + big - k) % big;
            let b1 = strand_edge[cv.sides[1].pants][cbs.point_strand(c, 1, other)];
            x.cubes.push(Cube::square((cut_edge[c][prev], true), (cut_edge[c][k], true), (b0, fwd), (b1, fwd)));
        }
    }
    let mut rotation = vec![Vec::new(); x.num_vertices];
    for (p, pl) in cbs.placed.iter().enumerate() {
        for (r, rot) in pl.pattern.rotation.iter().enumerate() {
            rotation[offset[p] + r] = rot
                .iter()
                .map(|&en| match en {
                    RotEntry::Bind { strand, tail } => (strand_edge[p][strand], if tail { 0 } else { 1 }),
                    RotEntry::Cut { slot, seg } => {
                        let orig = pl.canon[slot];
                        let c = d.pants[p].curves[orig];
                        let side = if d.curves[c].sides[0] == (Side { pants: p, slot: orig, sign: 1 }) { 0 } else { 1 };
                        if side == 0 {
                            (cut_edge[c][seg], 0)
                        } else {
                            let big = cbs.value(c).unsigned_abs() as usize;
                            let k = (cbs.shifts[c] + 2 * big - seg - 1) % big;
                            (cut_edge[c][k], 1)
                        }
                    }
                })
                .collect();
        }
    }
    SurfaceComplex { complex: x, offset, strand_edge, cut_edge, rotation, pants_of_region }
}

/// A closed edge path: (edge, traversed tail→head).
pub type EdgeLoop = Vec<(usize, bool)>;

/// Algebraic count of bind crossings, i.e. ξ̄ evaluated by W.
pub fn w_value(sc: &SurfaceComplex, l: &EdgeLoop) -> i64 {
    l.iter()
        .filter(|(e, _)| sc.complex.edge_tags[*e] != EdgeTag::Cut)
        .map(|&(_, f)| if f { 1 } else { -1 })
        .sum()
}

/// Algebraic intersection I(α, β) of two closed edge paths, computed by
/// pushing β off to its left through the rotation system.
pub fn intersection(sc: &SurfaceComplex, alpha: &EdgeLoop, beta: &EdgeLoop) -> i64 {
    let usage = |(e, end): EdgeEnd| -> i64 {
        alpha
            .iter()
            .filter(|(a, _)| *a == e)
            .map(|&(_, f)| {
                let inward = (end == 1) == f;
                if inward {
                    1
                } else {
                    -1
                }
            })
            .sum()
    };
    let n = beta.len();
    let mut total = 0;
    for k in 0..n {
        let (ei, fi) = beta[k];
        let (eo, fo) = beta[(k + 1) % n];
        let end_in: EdgeEnd = (ei, if fi { 1 } else { 0 });
        let end_out: EdgeEnd = (eo, if fo { 0 } else { 1 });
        let x = sc.complex.edges[ei][end_in.1 as usize];
        let rot = &sc.rotation[x];
        let len = rot.len();
        let io = rot.iter().position(|&r| r == end_out).expect("outgoing end in rotation");
        let ii = rot.iter().position(|&r| r == end_in).expect("incoming end in rotation");
        let mut j = (io + 1) % len;
        while j != ii {
            total += usage(rot[j]);
            j = (j + 1) % len;
        }
    }
    total
}

/// Loop parallel to the slot on the given side, in its induced direction.
pub fn slot_loop(cbs: &CutBindSystem, sc: &SurfaceComplex, c: usize, side: usize) -> EdgeLoop {
    let sd = cbs.decomposition.curves[c].sides[side];
    let big = cbs.value(c).unsigned_abs() as usize;
    let fwd = cbs.value(c) * sd.sign as i64 > 0;
    (1..=big).map(|k| (sc.strand_edge[sd.pants][cbs.point_strand(c, side, k % big)], fwd)).collect()
}

/// Shortest bind path inside one pants from region r to any region in targets.
fn route_in_pants(sc: &SurfaceComplex, p: usize, r: usize, targets: &[usize]) -> (Vec<(usize, bool)>, usize) {
    let mut prev: Vec<Option<(usize, usize, bool)>> = vec![None; sc.complex.num_vertices];
    let mut seen = vec![false; sc.complex.num_vertices];
    seen[r] = true;
    let mut q = VecDeque::from([r]);
    let mut hit = None;
    while let Some(x) = q.pop_front() {
        if targets.contains(&x) {
            hit = Some(x);
            break;
        }
        for &e in &sc.strand_edge[p] {
            let [t, h] = sc.complex.edges[e];
            for (from, to, f) in [(t, h, true), (h, t, false)] {
                if from == x && !seen[to] {
                    seen[to] = true;
                    prev[to] = Some((x, e, f));
                    q.push_back(to);
                }
            }
        }
    }
    let end = hit.expect("pants regions are connected");
    let mut path = Vec::new();
    let mut y = end;
    while let Some((x, e, f)) = prev[y] {
        path.push((e, f));
        y = x;
    }
    path.reverse();
    (path, end)
}

/// Pants path along tree curves: (curve, next pants) steps.
fn tree_path(d: &Decomposition, from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; d.pants.len()];
    let mut seen = vec![false; d.pants.len()];
    seen[from] = true;
    let mut q = VecDeque::from([from]);
    while let Some(p) = q.pop_front() {
        for c in d.pants[p].curves {
            if !d.curves[c].tree {
                continue;
            }
            let o = d.across(c, p);
            if !seen[o] {
                seen[o] = true;
                prev[o] = Some((p, c));
                q.push_back(o);
            }
        }
    }
    let mut out = Vec::new();
    let mut y = to;
    while let Some((p, c)) = prev[y] {
        out.push((c, y));
        y = p;
    }
    out.reverse();
    out
}

/// Closed loop crossing curve c once from side 1 into side 0 and returning
/// through tree curves only.
pub fn dual_loop(cbs: &CutBindSystem, sc: &SurfaceComplex, c: usize) -> EdgeLoop {
    let d = &cbs.decomposition;
    let [s0, s1] = d.curves[c].sides;
    let e0 = sc.cut_edge[c][0];
    let [start_tail, start_head] = sc.complex.edges[e0];
    let mut lp: EdgeLoop = vec![(e0, false)];
    let mut here = start_tail;
    let mut pants = s0.pants;
    for (t, next) in tree_path(d, s0.pants, s1.pants) {
        let side = if d.curves[t].sides[0].pants == pants && d.curves[t].sides[1].pants == next {
            0
        } else {
            1
        };
        let exits: Vec<usize> = sc.cut_edge[t].iter().map(|&e| sc.complex.edges[e][side]).collect();
        let (path, end) = route_in_pants(sc, pants, here, &exits);
        lp.extend(path);
        let k = exits.iter().position(|&x| x == end).unwrap();
        let e = sc.cut_edge[t][k];
        lp.push((e, side == 0));
        here = sc.complex.edges[e][1 - side];
        pants = next;
    }
    let (path, _) = route_in_pants(sc, pants, here, &[start_head]);
    lp.extend(path);
    reduce_loop(lp)
}

fn reduce_loop(mut l: EdgeLoop) -> EdgeLoop {
    loop {
        let n = l.len();
        if n < 2 {
            return l;
        }
        let pos = (0..n).find(|&k| {
            let (a, fa) = l[k];
            let (b, fb) = l[(k + 1) % n];
            a == b && fa != fb
        });
        match pos {
            None => return l,
            Some(k) if k + 1 < n => {
                l.drain(k..k + 2);
            }
            Some(_) => {
                l.pop();
                l.remove(0);
            }
        }
    }
}

/// Non-tree curves ordered by the model index of their class, with the
/// index of the dual basis element.
fn lagrangian_order(m: &SurfaceModel, d: &Decomposition) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = d
        .curves
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.tree)
        .map(|(ci, c)| match c.kind {
            CurveKind::Jsj { edge } => {
                let (zi, cix) = m.dual_pair[edge].unwrap();
                (ci, zi, cix)
            }
            CurveKind::Handle { vertex, i } => {
                let (a, b) = m.handles[vertex][i];
                (ci, a, b)
            }
            CurveKind::Chain { .. } => unreachable!("chain curves are tree curves"),
        })
        .collect();
    out.sort_by_key(|t| t.1);
    out
}

/// Glue the pants so that the bind class is Poincaré dual to ξ̄. Tree curves
/// keep shift 0; each non-tree curve takes the smallest shift whose residual
/// is divisible by its ξ̄-value, processed last to first.
pub fn assemble_cut_bind(m: &SurfaceModel, d: &Decomposition, xi: &XiData) -> Result<CutBindSystem, CutBindError> {
    let placed = place(d, &xi.curve_values)?;
    let lag = lagrangian_order(m, d);
    let mut cbs = CutBindSystem {
        decomposition: d.clone(),
        xi: xi.clone(),
        placed,
        shifts: vec![0; d.curves.len()],
        lagrangian: lag.clone(),
        windings: vec![BigInt::zero(); lag.len()],
        w_class: Vec::new(),
    };
    let mu: Vec<i64> = lag.iter().map(|&(c, _, _)| cbs.value(c)).collect();
    for i in (0..lag.len()).rev() {
        let (c, _, xidx) = lag[i];
        let big = mu[i].unsigned_abs() as usize;
        let mut ok = false;
        for s in 0..big {
            cbs.shifts[c] = s;
            let sc = surface_square_complex(&cbs);
            let li = dual_loop(&cbs, &sc, c);
            let mut r = w_value(&sc, &li) - big_to_i64(&xi.xi[xidx]);
            for j in i + 1..lag.len() {
                let lj = dual_loop(&cbs, &sc, lag[j].0);
                r -= intersection(&sc, &li, &lj) * mu[j];
            }
            if r % mu[i] == 0 {
                cbs.windings[i] = BigInt::from(r / mu[i]);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(CutBindError::ShiftSearchFailed(c));
        }
    }
    cbs.w_class = verify_realization(m, &cbs)?;
    Ok(cbs)
}

/// Check the identification of combinatorial loops with the model basis and
/// return [W] in model coordinates.
pub fn verify_realization(m: &SurfaceModel, cbs: &CutBindSystem) -> Result<Vec<BigInt>, CutBindError> {
    let sc = surface_square_complex(cbs);
    let d = &cbs.decomposition;
    let lag = &cbs.lagrangian;
    let loops: Vec<EdgeLoop> = lag.iter().map(|&(c, _, _)| dual_loop(cbs, &sc, c)).collect();
    // every curve meets each dual loop as its class pairs with the dual element
    for (c, cv) in d.curves.iter().enumerate() {
        let sl = slot_loop(cbs, &sc, c, 0);
        if w_value(&sc, &sl) != cbs.value(c) {
            return Err(CutBindError::RealizationMismatch(format!("bind count on curve {c}")));
        }
        for (i, &(_, _, xidx)) in lag.iter().enumerate() {
            let comb = intersection(&sc, &sl, &loops[i]);
            let model = big_to_i64(&m.intersect(&cv.class, &m.unit(xidx)));
            if comb != model {
                return Err(CutBindError::RealizationMismatch(format!(
                    "curve {c} meets dual loop {i} {comb} times, model says {model}"
                )));
            }
        }
    }
    // pairings of W with the basis: ξ̄ on ℓ directly, on x_i after removing
    // the triangular correction and the winding
    let mut pair = vec![BigInt::zero(); m.dim];
    for (i, &(c, li, xidx)) in lag.iter().enumerate() {
        pair[li] = BigInt::from(cbs.value(c));
        let mut v = BigInt::from(w_value(&sc, &loops[i])) - &cbs.windings[i] * BigInt::from(cbs.value(c));
        for j in i + 1..lag.len() {
            v -= BigInt::from(intersection(&sc, &loops[i], &loops[j]) * cbs.value(lag[j].0));
        }
        pair[xidx] = v;
    }
    // wᵀ I = pair, with I⁻¹ = −I for the standard form
    let w: Vec<BigInt> = linalg::vec_mat(&pair, &m.form, m.dim).into_iter().map(|x| -x).collect();
    if m.dual(&w) != cbs.xi.xi {
        return Err(CutBindError::RealizationMismatch("bind class is not dual to the invariant class".into()));
    }
    Ok(w)
}

/// What a divisibility is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivTarget {
    Curve(usize),
    Pants(usize),
    Global,
    Lcm,
}

pub fn divisibility(xd: &XiData, cbs: &CutBindSystem, j: usize, target: DivTarget) -> Result<BigInt, CutBindError> {
    if j == 0 || j > xd.classes() {
        return Err(CutBindError::IndexOutOfRange(j));
    }
    let d = &cbs.decomposition;
    let curve = |c: usize| {
        let v = d.pants[d.curves[c].sides[0].pants].vertex;
        xd.curve_values[c].abs().gcd(&xd.on_fiber(j, v).abs())
    };
    Ok(match target {
        DivTarget::Curve(c) => {
            if c >= d.curves.len() {
                return Err(CutBindError::IndexOutOfRange(c));
            }
            curve(c)
        }
        DivTarget::Pants(p) => {
            if p >= d.pants.len() {
                return Err(CutBindError::IndexOutOfRange(p));
            }
            let pa = &d.pants[p];
            pa.curves.iter().fold(xd.on_fiber(j, pa.vertex).abs(), |g, &c| g.gcd(&xd.curve_values[c]))
        }
        DivTarget::Global => {
            let f = (0..xd.fiber.len()).fold(BigInt::zero(), |g, v| g.gcd(&xd.on_fiber(j, v)));
            xd.xi.iter().fold(f, |g, x| g.gcd(x))
        }
        DivTarget::Lcm => (0..d.curves.len()).fold(BigInt::one(), |l, c| l.lcm(&curve(c))),
    })
}

/// Full pipeline from a model: decomposition, class, glued system.
pub fn cut_bind_system(m: &SurfaceModel, g: &ConfigGraph) -> Result<CutBindSystem, CutBindError> {
    let d = pants_subordinate(m, g)?;
    let xd = xi_select(m, g, &d)?;
    assemble_cut_bind(m, &d, &xd)
}
