//! Finite cube complexes: validation, links, hyperplanes, specialness,
//! crossing graphs with the characteristic map, permutation covers.

use std::collections::{HashMap, HashSet, VecDeque};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CubeError {
    #[error("bad attachment: {0}")]
    BadAttachment(String),
    #[error("complex is not special ({0} witnesses)")]
    NotSpecial(usize),
    #[error("permutation assignment violates the square relator at cube {cube}, sheet {sheet}")]
    RelatorViolation { cube: usize, sheet: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeTag {
    Untyped,
    Cut,
    Bind(usize),
}

/// A cube of dimension ≥ 2 described by its edges. Edge slot (i, p) is the
/// edge in direction i whose lower corner is p (bit i of p clear); the flag
/// says whether the edge runs tail→head in the increasing direction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cube {
    pub dim: usize,
    pub edges: Vec<(usize, bool)>,
}

pub fn slot(dim: usize, i: usize, p: usize) -> usize {
    let rest = (p & ((1 << i) - 1)) | ((p >> (i + 1)) << i);
    i * (1 << (dim - 1)) + rest
}

impl Cube {
    pub fn edge(&self, i: usize, p: usize) -> (usize, bool) {
        self.edges[slot(self.dim, i, p & !(1 << i))]
    }
    pub fn square(e0: (usize, bool), e1: (usize, bool), f0: (usize, bool), f1: (usize, bool)) -> Cube {
        // direction 0 at p = 00 and 10(bit1 set); direction 1 at p = 00 and 01(bit0 set)
        Cube { dim: 2, edges: vec![e0, e1, f0, f1] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeComplex {
    pub num_vertices: usize,
    /// (tail, head)
    pub edges: Vec<[usize; 2]>,
    pub edge_tags: Vec<EdgeTag>,
    pub cubes: Vec<Cube>,
}

/// End of an edge at a vertex: 0 tail, 1 head.
pub type EdgeEnd = (usize, u8);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Attachment {
    pub face: usize,
    pub target: usize,
    pub perm: Vec<usize>,
    pub mask: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Link {
    pub vertices: Vec<EdgeEnd>,
    /// Simplices as vertex index lists, one per cube corner (may repeat).
    pub simplices: Vec<Vec<usize>>,
}

impl Link {
    pub fn is_simplicial(&self) -> bool {
        let mut seen = HashSet::new();
        for s in &self.simplices {
            let mut t = s.clone();
            t.sort();
            if t.windows(2).any(|w| w[0] == w[1]) || !seen.insert(t) {
                return false;
            }
        }
        true
    }
    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        let mut out = HashSet::new();
        for s in &self.simplices {
            for (&a, &b) in s.iter().tuple_combinations() {
                out.insert((a.min(b), a.max(b)));
            }
        }
        out
    }
    pub fn is_flag(&self) -> bool {
        if !self.is_simplicial() {
            return false;
        }
        let simp: HashSet<Vec<usize>> = self
            .simplices
            .iter()
            .flat_map(|s| {
                let mut t = s.clone();
                t.sort();
                t.into_iter().powerset().filter(|f| f.len() >= 3).collect::<Vec<_>>()
            })
            .collect();
        let adj = self.edge_set();
        let n = self.vertices.len();
        let nb: Vec<Vec<usize>> =
            (0..n).map(|a| (0..n).filter(|&b| a != b && adj.contains(&(a.min(b), a.max(b)))).collect()).collect();
        // extend cliques in increasing order; every clique of size ≥ 3 must be a simplex
        let mut stack: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        while let Some(c) = stack.pop() {
            let last = *c.last().unwrap();
            for &w in nb[last].iter().filter(|&&w| w > last) {
                if c.iter().all(|&x| nb[x].contains(&w)) {
                    let mut d = c.clone();
                    d.push(w);
                    if d.len() >= 3 && !simp.contains(&d) {
                        return false;
                    }
                    stack.push(d);
                }
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub attachments: Vec<(usize, Vec<Attachment>)>,
    pub simple: bool,
    pub flag: bool,
    pub non_simplicial_vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Hyperplane {
    pub edges: Vec<usize>,
    /// (cube, direction)
    pub midcubes: Vec<(usize, usize)>,
    pub two_sided: bool,
    pub tag: EdgeTag,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Hyperplanes {
    pub list: Vec<Hyperplane>,
    pub of_edge: Vec<usize>,
    /// Transverse orientation per edge: +1 if tail→head points to the positive side.
    pub orient: Vec<i8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Witness {
    OneSided { hyperplane: usize },
    SelfIntersection { hyperplane: usize, cube: usize },
    SelfOsculation { hyperplane: usize, vertex: usize, ends: [EdgeEnd; 2] },
    InterOsculation { hyperplanes: [usize; 2], vertex: usize, ends: [EdgeEnd; 2], crossing_cube: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecialReport {
    pub special: bool,
    pub witnesses: Vec<Witness>,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    (0..k).permutations(k).collect()
}

impl CubeComplex {
    pub fn new(num_vertices: usize, edges: Vec<[usize; 2]>) -> Self {
        let n = edges.len();
        CubeComplex { num_vertices, edges, edge_tags: vec![EdgeTag::Untyped; n], cubes: Vec::new() }
    }

    pub fn add_edge(&mut self, tail: usize, head: usize, tag: EdgeTag) -> usize {
        self.edges.push([tail, head]);
        self.edge_tags.push(tag);
        self.edges.len() - 1
    }

    pub fn count(&self, dim: usize) -> usize {
        match dim {
            0 => self.num_vertices,
            1 => self.edges.len(),
            d => self.cubes.iter().filter(|c| c.dim == d).count(),
        }
    }

    pub fn max_dim(&self) -> usize {
        self.cubes.iter().map(|c| c.dim).max().unwrap_or(if self.edges.is_empty() { 0 } else { 1 })
    }

    pub fn cell_count(&self) -> usize {
        self.num_vertices + self.edges.len() + self.cubes.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut chi = self.num_vertices as i64 - self.edges.len() as i64;
        for c in &self.cubes {
            chi += if c.dim % 2 == 0 { 1 } else { -1 };
        }
        chi
    }

    /// Vertex at corner p of a cube.
    pub fn corner(&self, c: &Cube, p: usize) -> usize {
        let (e, fwd) = c.edge(0, p);
        let low = p & 1 == 0;
        self.edges[e][if low == fwd { 0 } else { 1 }]
    }

    /// End of the direction-i edge of cube c at corner p.
    pub fn corner_end(c: &Cube, i: usize, p: usize) -> EdgeEnd {
        let (e, fwd) = c.edge(i, p);
        let bit = (p >> i) & 1 == 1;
        (e, (bit ^ !fwd) as u8)
    }

    fn face(c: &Cube, i: usize, b: usize) -> Cube {
        let k = c.dim - 1;
        let mut edges = vec![(0, true); k * (1 << (k - 1))];
        let lift = |q: usize| {
            let low = q & ((1 << i) - 1);
            let high = (q >> i) << (i + 1);
            low | (b << i) | high
        };
        for j2 in 0..k {
            let j = if j2 < i { j2 } else { j2 + 1 };
            for q in 0..(1usize << k) {
                if q >> j2 & 1 == 0 {
                    edges[slot(k, j2, q)] = c.edge(j, lift(q));
                }
            }
        }
        Cube { dim: k, edges }
    }

    fn matches(face: &Cube, t: &Cube, perm: &[usize], mask: usize) -> bool {
        let k = face.dim;
        for j in 0..k {
            for q in 0..(1usize << k) {
                if q >> j & 1 == 1 {
                    continue;
                }
                let mut s = 0;
                for (a, &pa) in perm.iter().enumerate() {
                    s |= ((q >> a) & 1) << pa;
                }
                s ^= mask;
                let pj = perm[j];
                let (te, tf) = t.edge(pj, s & !(1 << pj));
                let (fe, ff) = face.edge(j, q);
                if te != fe || tf != (ff ^ ((mask >> pj) & 1 == 1)) {
                    return false;
                }
            }
        }
        true
    }

    pub fn validate(&self) -> Result<ValidationReport, CubeError> {
        if self.edge_tags.len() != self.edges.len() {
            return Err(CubeError::BadAttachment("edge tag count".into()));
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.iter().any(|&v| v >= self.num_vertices) {
                return Err(CubeError::BadAttachment(format!("edge {i} has an unknown endpoint")));
            }
        }
        let mut by_dim: HashMap<usize, Vec<usize>> = HashMap::new();
        for (ci, c) in self.cubes.iter().enumerate() {
            if c.dim < 2 || c.edges.len() != c.dim << (c.dim - 1) {
                return Err(CubeError::BadAttachment(format!("cube {ci} has wrong shape")));
            }
            if c.edges.iter().any(|&(e, _)| e >= self.edges.len()) {
                return Err(CubeError::BadAttachment(format!("cube {ci} uses an unknown edge")));
            }
            for p in 0..(1usize << c.dim) {
                let v = self.corner(c, p);
                for i in 0..c.dim {
                    let (e, t) = Self::corner_end(c, i, p);
                    if self.edges[e][t as usize] != v {
                        return Err(CubeError::BadAttachment(format!("cube {ci} corners disagree at {p}")));
                    }
                }
            }
            by_dim.entry(c.dim).or_default().push(ci);
        }
        let mut attachments = Vec::new();
        for (ci, c) in self.cubes.iter().enumerate().filter(|(_, c)| c.dim >= 3) {
            let perms = permutations(c.dim - 1);
            let mut att = Vec::new();
            for i in 0..c.dim {
                for b in 0..2 {
                    let f = Self::face(c, i, b);
                    let found = by_dim.get(&(c.dim - 1)).and_then(|cands| {
                        cands.iter().find_map(|&t| {
                            perms.iter().find_map(|perm| {
                                (0..(1usize << (c.dim - 1)))
                                    .find(|&m| Self::matches(&f, &self.cubes[t], perm, m))
                                    .map(|mask| Attachment { face: 2 * i + b, target: t, perm: perm.clone(), mask })
                            })
                        })
                    });
                    match found {
                        Some(a) => att.push(a),
                        None => return Err(CubeError::BadAttachment(format!("face {} of cube {ci} is not a cube", 2 * i + b))),
                    }
                }
            }
            attachments.push((ci, att));
        }
        let links = self.links();
        let non_simplicial_vertices: Vec<usize> =
            (0..self.num_vertices).filter(|&v| !links[v].is_simplicial()).collect();
        let simple = non_simplicial_vertices.is_empty();
        let flag = simple && links.iter().all(|l| l.is_flag());
        Ok(ValidationReport { attachments, simple, flag, non_simplicial_vertices })
    }

    pub fn ends_at(&self) -> Vec<Vec<EdgeEnd>> {
        let mut out = vec![Vec::new(); self.num_vertices];
        for (e, ends) in self.edges.iter().enumerate() {
            out[ends[0]].push((e, 0));
            out[ends[1]].push((e, 1));
        }
        out
    }

    pub fn links(&self) -> Vec<Link> {
        let ends = self.ends_at();
        let mut links: Vec<Link> = ends.iter().map(|v| Link { vertices: v.clone(), simplices: Vec::new() }).collect();
        let index: Vec<HashMap<EdgeEnd, usize>> =
            ends.iter().map(|v| v.iter().enumerate().map(|(i, &x)| (x, i)).collect()).collect();
        for c in &self.cubes {
            for p in 0..(1usize << c.dim) {
                let v = self.corner(c, p);
                let s = (0..c.dim).map(|i| index[v][&Self::corner_end(c, i, p)]).collect();
                links[v].simplices.push(s);
            }
        }
        links
    }

    pub fn link(&self, v: usize) -> Link {
        self.links().swap_remove(v)
    }

    pub fn hyperplanes(&self) -> Hyperplanes {
        let ne = self.edges.len();
        // constraint graph: s_a = rel · s_b
        let mut adj: Vec<Vec<(usize, i8)>> = vec![Vec::new(); ne];
        let mut mids: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ne];
        for (ci, c) in self.cubes.iter().enumerate() {
            for i in 0..c.dim {
                let row: Vec<(usize, bool)> =
                    (0..(1usize << c.dim)).filter(|p| p >> i & 1 == 0).map(|p| c.edge(i, p)).collect();
                let (e0, f0) = row[0];
                mids[e0].push((ci, i));
                for &(e, f) in &row[1..] {
                    let rel = if f == f0 { 1 } else { -1 };
                    adj[e0].push((e, rel));
                    adj[e].push((e0, rel));
                }
            }
        }
        let mut of_edge = vec![usize::MAX; ne];
        let mut orient = vec![0i8; ne];
        let mut list = Vec::new();
        for start in 0..ne {
            if of_edge[start] != usize::MAX {
                continue;
            }
            let h = list.len();
            let mut two_sided = true;
            let mut edges = vec![start];
            let mut midcubes = Vec::new();
            of_edge[start] = h;
            orient[start] = 1;
            let mut queue = VecDeque::from([start]);
            while let Some(a) = queue.pop_front() {
                midcubes.extend(mids[a].iter().copied());
                for &(b, rel) in &adj[a] {
                    if of_edge[b] == usize::MAX {
                        of_edge[b] = h;
                        orient[b] = orient[a] * rel;
                        edges.push(b);
                        queue.push_back(b);
                    } else if orient[b] != orient[a] * rel {
                        two_sided = false;
                    }
                }
            }
            edges.sort();
            midcubes.sort();
            midcubes.dedup();
            list.push(Hyperplane { edges, midcubes, two_sided, tag: self.edge_tags[start] });
        }
        Hyperplanes { list, of_edge, orient }
    }

    pub fn crossings(&self, hp: &Hyperplanes) -> HashMap<(usize, usize), usize> {
        let mut out = HashMap::new();
        for (ci, c) in self.cubes.iter().enumerate() {
            for (i, j) in (0..c.dim).tuple_combinations() {
                let a = hp.of_edge[c.edge(i, 0).0];
                let b = hp.of_edge[c.edge(j, 0).0];
                if a != b {
                    out.entry((a.min(b), a.max(b))).or_insert(ci);
                }
            }
        }
        out
    }

    /// Pairs of ends at each vertex that span a square corner.
    fn corner_pairs(&self) -> HashSet<(EdgeEnd, EdgeEnd)> {
        let mut out = HashSet::new();
        for c in &self.cubes {
            for p in 0..(1usize << c.dim) {
                for (i, j) in (0..c.dim).tuple_combinations() {
                    let a = Self::corner_end(c, i, p);
                    let b = Self::corner_end(c, j, p);
                    out.insert((a.min(b), a.max(b)));
                }
            }
        }
        out
    }

    pub fn specialness(&self) -> SpecialReport {
        let hp = self.hyperplanes();
        self.specialness_with(&hp)
    }

    pub fn specialness_with(&self, hp: &Hyperplanes) -> SpecialReport {
        let mut w = Vec::new();
        for (h, x) in hp.list.iter().enumerate() {
            if !x.two_sided {
                w.push(Witness::OneSided { hyperplane: h });
            }
        }
        for (ci, c) in self.cubes.iter().enumerate() {
            for (i, j) in (0..c.dim).tuple_combinations() {
                let a = hp.of_edge[c.edge(i, 0).0];
                if a == hp.of_edge[c.edge(j, 0).0] {
                    w.push(Witness::SelfIntersection { hyperplane: a, cube: ci });
                }
            }
        }
        let crossing = self.crossings(hp);
        let corners = self.corner_pairs();
        // leaving direction of an end, measured by the transverse orientation
        let dir = |(e, t): EdgeEnd| if t == 0 { hp.orient[e] } else { -hp.orient[e] };
        for (v, ends) in self.ends_at().iter().enumerate() {
            for (&a, &b) in ends.iter().tuple_combinations() {
                if corners.contains(&(a.min(b), a.max(b))) {
                    continue;
                }
                let (ha, hb) = (hp.of_edge[a.0], hp.of_edge[b.0]);
                if ha == hb {
                    if dir(a) == dir(b) {
                        w.push(Witness::SelfOsculation { hyperplane: ha, vertex: v, ends: [a, b] });
                    }
                } else if let Some(&ci) = crossing.get(&(ha.min(hb), ha.max(hb))) {
                    w.push(Witness::InterOsculation { hyperplanes: [ha, hb], vertex: v, ends: [a, b], crossing_cube: ci });
                }
            }
        }
        SpecialReport { special: w.is_empty(), witnesses: w }
    }
}

/// Salvetti complex of a graph on n vertices, cubes up to dimension cap.
pub fn salvetti(n: usize, graph_edges: &[(usize, usize)], cap: usize) -> CubeComplex {
    let mut x = CubeComplex::new(1, vec![[0, 0]; n]);
    let adj: HashSet<(usize, usize)> = graph_edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    for k in 2..=cap.min(n) {
        for clique in (0..n).combinations(k) {
            if clique.iter().tuple_combinations().all(|(&a, &b)| adj.contains(&(a, b))) {
                let edges = clique.iter().flat_map(|&g| std::iter::repeat_n((g, true), 1 << (k - 1))).collect();
                x.cubes.push(Cube { dim: k, edges });
            }
        }
    }
    x
}

#[derive(Clone, Debug, Serialize)]
pub struct RaagReport {
    pub generators: usize,
    pub crossing_graph: Vec<(usize, usize)>,
    pub presentation: String,
    /// Each edge goes to its hyperplane's loop, with orientation.
    pub edge_map: Vec<(usize, bool)>,
    pub local_isometry: bool,
    pub failing_vertices: Vec<usize>,
}

impl RaagReport {
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph crossing {\n");
        for h in 0..self.generators {
            s += &format!("  h{h};\n");
        }
        for (a, b) in &self.crossing_graph {
            s += &format!("  h{a} -- h{b};\n");
        }
        s + "}\n"
    }
}

pub fn raag_and_char_map(x: &CubeComplex) -> Result<RaagReport, CubeError> {
    let hp = x.hyperplanes();
    let sp = x.specialness_with(&hp);
    if !sp.special {
        return Err(CubeError::NotSpecial(sp.witnesses.len()));
    }
    let mut crossing_graph: Vec<(usize, usize)> = x.crossings(&hp).into_keys().collect();
    crossing_graph.sort();
    let gens: Vec<String> = (0..hp.list.len()).map(|h| format!("x{h}")).collect();
    let rels: Vec<String> = crossing_graph.iter().map(|&(a, b)| format!("[{},{}]", gens[a], gens[b])).collect();
    let presentation = format!("<{} | {}>", gens.join(","), rels.join(","));
    let edge_map: Vec<(usize, bool)> = (0..x.edges.len()).map(|e| (hp.of_edge[e], hp.orient[e] > 0)).collect();
    let cross: HashSet<(usize, usize)> = crossing_graph.iter().copied().collect();
    let corners = x.corner_pairs();
    let mut failing = Vec::new();
    for (v, ends) in x.ends_at().iter().enumerate() {
        let image = |(e, t): EdgeEnd| (edge_map[e].0, if edge_map[e].1 { t } else { 1 - t });
        let imgs: Vec<(usize, u8)> = ends.iter().map(|&d| image(d)).collect();
        let injective = imgs.iter().all_unique();
        let full = ends.iter().enumerate().tuple_combinations().all(|((i, &a), (j, &b))| {
            let (ga, gb) = (imgs[i].0, imgs[j].0);
            let target_edge = ga != gb && cross.contains(&(ga.min(gb), ga.max(gb)));
            !target_edge || corners.contains(&(a.min(b), a.max(b)))
        });
        if !(injective && full) {
            failing.push(v);
        }
    }
    Ok(RaagReport {
        generators: hp.list.len(),
        crossing_graph,
        presentation,
        edge_map,
        local_isometry: failing.is_empty(),
        failing_vertices: failing,
    })
}

/// d-fold cover given by a permutation of sheets per edge (tail sheet i
/// goes to head sheet perm[e][i]).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationCover {
    pub d: usize,
    pub perms: Vec<Vec<usize>>,
}

impl PermutationCover {
    pub fn trivial(x: &CubeComplex, d: usize) -> Self {
        PermutationCover { d, perms: vec![(0..d).collect(); x.edges.len()] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Covering {
    pub complex: CubeComplex,
    /// (base vertex, sheet) per vertex, (base edge, sheet) per edge, (base cube, sheet) per cube.
    pub vertex_map: Vec<(usize, usize)>,
    pub edge_map: Vec<(usize, usize)>,
    pub cube_map: Vec<(usize, usize)>,
}

/// Sheet of corner p of cube c when corner 0 sits on sheet s.
fn sheet_at(pc: &PermutationCover, c: &Cube, s: usize, p: usize) -> usize {
    let mut sh = s;
    let mut q = 0usize;
    for i in 0..c.dim {
        if p >> i & 1 == 1 {
            let (e, fwd) = c.edge(i, q);
            sh = if fwd { pc.perms[e][sh] } else { inverse_at(&pc.perms[e], sh) };
            q |= 1 << i;
        }
    }
    sh
}

fn inverse_at(perm: &[usize], j: usize) -> usize {
    perm.iter().position(|&x| x == j).unwrap()
}

pub fn cover(x: &CubeComplex, pc: &PermutationCover) -> Result<Covering, CubeError> {
    let d = pc.d;
    let nv = x.num_vertices;
    let mut y = CubeComplex::default();
    y.num_vertices = nv * d;
    let vertex_map = (0..nv).flat_map(|v| (0..d).map(move |s| (v, s))).collect();
    let vid = |v: usize, s: usize| v * d + s;
    let mut edge_map = Vec::new();
    for (e, ends) in x.edges.iter().enumerate() {
        for s in 0..d {
            y.edges.push([vid(ends[0], s), vid(ends[1], pc.perms[e][s])]);
            y.edge_tags.push(x.edge_tags[e]);
            edge_map.push((e, s));
        }
    }
    let eid = |e: usize, s: usize| e * d + s;
    let mut cube_map = Vec::new();
    for (ci, c) in x.cubes.iter().enumerate() {
        for s in 0..d {
            let sheets: Vec<usize> = (0..(1usize << c.dim)).map(|p| sheet_at(pc, c, s, p)).collect();
            let mut edges = vec![(0, true); c.edges.len()];
            for i in 0..c.dim {
                for p in (0..(1usize << c.dim)).filter(|p| p >> i & 1 == 0) {
                    let (e, fwd) = c.edge(i, p);
                    let (lo, hi) = (sheets[p], sheets[p | 1 << i]);
                    let (tail_sheet, head_sheet) = if fwd { (lo, hi) } else { (hi, lo) };
                    if pc.perms[e][tail_sheet] != head_sheet {
                        return Err(CubeError::RelatorViolation { cube: ci, sheet: s });
                    }
                    edges[slot(c.dim, i, p)] = (eid(e, tail_sheet), fwd);
                }
            }
            y.cubes.push(Cube { dim: c.dim, edges });
            cube_map.push((ci, s));
        }
    }
    Ok(Covering { complex: y, vertex_map, edge_map, cube_map })
}

/// Connected components: (complex, vertex ids, edge ids, cube ids) in the parent.
pub fn components(x: &CubeComplex) -> Vec<(CubeComplex, Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut comp = vec![usize::MAX; x.num_vertices];
    let mut adj = vec![Vec::new(); x.num_vertices];
    for e in &x.edges {
        adj[e[0]].push(e[1]);
        adj[e[1]].push(e[0]);
    }
    let mut n = 0;
    for s in 0..x.num_vertices {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = n;
        let mut st = vec![s];
        while let Some(v) = st.pop() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = n;
                    st.push(w);
                }
            }
        }
        n += 1;
    }
    let mut out = Vec::new();
    for c in 0..n {
        let verts: Vec<usize> = (0..x.num_vertices).filter(|&v| comp[v] == c).collect();
        let vnew: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let eids: Vec<usize> = (0..x.edges.len()).filter(|&e| comp[x.edges[e][0]] == c).collect();
        let enew: HashMap<usize, usize> = eids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let cids: Vec<usize> = (0..x.cubes.len()).filter(|&k| comp[x.edges[x.cubes[k].edges[0].0][0]] == c).collect();
        let sub = CubeComplex {
            num_vertices: verts.len(),
            edges: eids.iter().map(|&e| [vnew[&x.edges[e][0]], vnew[&x.edges[e][1]]]).collect(),
            edge_tags: eids.iter().map(|&e| x.edge_tags[e]).collect(),
            cubes: cids
                .iter()
                .map(|&k| Cube { dim: x.cubes[k].dim, edges: x.cubes[k].edges.iter().map(|&(e, f)| (enew[&e], f)).collect() })
                .collect(),
        };
        out.push((sub, verts, eids, cids));
    }
    out
}

/// Fiber product of two permutation covers of the same complex, as one
/// cover of degree d1·d2 (sheet (i, j) ↦ i·d2 + j).
pub fn fiber_product(a: &PermutationCover, b: &PermutationCover) -> PermutationCover {
    let d = a.d * b.d;
    let perms = a
        .perms
        .iter()
        .zip(&b.perms)
        .map(|(pa, pb)| (0..d).map(|s| pa[s / b.d] * b.d + pb[s % b.d]).collect())
        .collect();
    PermutationCover { d, perms }
}

/// Degrees of the connected components of a cover (sheets over vertex 0 of
/// a connected base).
pub fn component_degrees(x: &CubeComplex, pc: &PermutationCover) -> Result<Vec<usize>, CubeError> {
    let cv = cover(x, pc)?;
    let mut out: Vec<usize> = components(&cv.complex)
        .iter()
        .map(|(_, verts, _, _)| verts.iter().filter(|&&v| cv.vertex_map[v].0 == 0).count())
        .collect();
    out.sort();
    Ok(out)
}

/// Image of a witness of a cover in the base.
pub fn project_witness(cv: &Covering, base_hp: &Hyperplanes, cover_hp: &Hyperplanes, w: &Witness) -> Witness {
    let hmap = |h: usize| base_hp.of_edge[cv.edge_map[cover_hp.list[h].edges[0]].0];
    let emap = |(e, t): EdgeEnd| (cv.edge_map[e].0, t);
    match *w {
        Witness::OneSided { hyperplane } => Witness::OneSided { hyperplane: hmap(hyperplane) },
        Witness::SelfIntersection { hyperplane, cube } => {
            Witness::SelfIntersection { hyperplane: hmap(hyperplane), cube: cv.cube_map[cube].0 }
        }
        Witness::SelfOsculation { hyperplane, vertex, ends } => Witness::SelfOsculation {
            hyperplane: hmap(hyperplane),
            vertex: cv.vertex_map[vertex].0,
            ends: [emap(ends[0]), emap(ends[1])],
        },
        Witness::InterOsculation { hyperplanes, vertex, ends, crossing_cube } => Witness::InterOsculation {
            hyperplanes: [hmap(hyperplanes[0]), hmap(hyperplanes[1])],
            vertex: cv.vertex_map[vertex].0,
            ends: [emap(ends[0]), emap(ends[1])],
            crossing_cube: cv.cube_map[crossing_cube].0,
        },
    }
}

/// Whether a projected witness is a genuine witness in the base (locations
/// checked directly, crossing cube allowed to differ).
pub fn is_witness(x: &CubeComplex, hp: &Hyperplanes, w: &Witness) -> bool {
    let corners = x.corner_pairs();
    let dir = |(e, t): EdgeEnd| if t == 0 { hp.orient[e] } else { -hp.orient[e] };
    let at = |v: usize, (e, t): EdgeEnd| x.edges[e][t as usize] == v;
    match *w {
        Witness::OneSided { hyperplane } => !hp.list[hyperplane].two_sided,
        Witness::SelfIntersection { hyperplane, cube } => {
            let c = &x.cubes[cube];
            (0..c.dim).filter(|&i| hp.of_edge[c.edge(i, 0).0] == hyperplane).count() >= 2
        }
        Witness::SelfOsculation { hyperplane, vertex, ends: [a, b] } => {
            at(vertex, a)
                && at(vertex, b)
                && a != b
                && hp.of_edge[a.0] == hyperplane
                && hp.of_edge[b.0] == hyperplane
                && !corners.contains(&(a.min(b), a.max(b)))
                && (dir(a) == dir(b) || !hp.list[hyperplane].two_sided)
        }
        Witness::InterOsculation { hyperplanes: [h1, h2], vertex, ends: [a, b], .. } => {
            let cross = x.crossings(hp);
            at(vertex, a)
                && at(vertex, b)
                && hp.of_edge[a.0] == h1
                && hp.of_edge[b.0] == h2
                && cross.contains_key(&(h1.min(h2), h1.max(h2)))
                && !corners.contains(&(a.min(b), a.max(b)))
        }
    }
}

/// Connected component of a permutation cover through (v0, s0), built by
/// search so that only the component is ever materialized.
pub fn cover_component(x: &CubeComplex, pc: &PermutationCover, v0: usize, s0: usize) -> Result<Covering, CubeError> {
    let d = pc.d;
    let inv: Vec<Vec<usize>> = pc
        .perms
        .iter()
        .map(|p| {
            let mut q = vec![0; d];
            for (i, &j) in p.iter().enumerate() {
                q[j] = i;
            }
            q
        })
        .collect();
    let ends = x.ends_at();
    let key = |v: usize, s: usize| v * d + s;
    let mut id = vec![usize::MAX; x.num_vertices * d];
    let mut vertex_map = vec![(v0, s0)];
    id[key(v0, s0)] = 0;
    let mut q = VecDeque::from([(v0, s0)]);
    while let Some((v, s)) = q.pop_front() {
        for &(e, t) in &ends[v] {
            let (w, r) = if t == 0 { (x.edges[e][1], pc.perms[e][s]) } else { (x.edges[e][0], inv[e][s]) };
            if id[key(w, r)] == usize::MAX {
                id[key(w, r)] = vertex_map.len();
                vertex_map.push((w, r));
                q.push_back((w, r));
            }
        }
    }
    let mut y = CubeComplex { num_vertices: vertex_map.len(), ..Default::default() };
    let mut eid = HashMap::new();
    let mut edge_map = Vec::new();
    for (e, en) in x.edges.iter().enumerate() {
        for s in 0..d {
            let t = id[key(en[0], s)];
            if t != usize::MAX {
                eid.insert((e, s), y.edges.len());
                y.edges.push([t, id[key(en[1], pc.perms[e][s])]]);
                y.edge_tags.push(x.edge_tags[e]);
                edge_map.push((e, s));
            }
        }
    }
    let mut cube_map = Vec::new();
    for (ci, c) in x.cubes.iter().enumerate() {
        let v = x.corner(c, 0);
        for s in 0..d {
            if id[key(v, s)] == usize::MAX {
                continue;
            }
            let mut sheets = vec![s; 1 << c.dim];
            for p in 1..(1usize << c.dim) {
                let i = p.trailing_zeros() as usize;
                let lo = p & !(1 << i);
                let (e, fwd) = c.edge(i, lo);
                sheets[p] = if fwd { pc.perms[e][sheets[lo]] } else { inv[e][sheets[lo]] };
            }
            let mut edges = vec![(0, true); c.edges.len()];
            for i in 0..c.dim {
                for p in (0..(1usize << c.dim)).filter(|p| p >> i & 1 == 0) {
                    let (e, fwd) = c.edge(i, p);
                    let (lo, hi) = (sheets[p], sheets[p | 1 << i]);
                    let (ts, hs) = if fwd { (lo, hi) } else { (hi, lo) };
                    if pc.perms[e][ts] != hs {
                        return Err(CubeError::RelatorViolation { cube: ci, sheet: s });
                    }
                    edges[slot(c.dim, i, p)] = (eid[&(e, ts)], fwd);
                }
            }
            y.cubes.push(Cube { dim: c.dim, edges });
            cube_map.push((ci, s));
        }
    }
    Ok(Covering { complex: y, vertex_map, edge_map, cube_map })
}

/// Permutation cover of `base` equivalent to a covering map given by its
/// vertex and edge projections; sheets number each fiber in id order.
pub fn to_permutation_cover(base: &CubeComplex, total: &CubeComplex, vmap: &[usize], emap: &[usize]) -> PermutationCover {
    let mut fibers = vec![0usize; base.num_vertices];
    let mut sheet = vec![0usize; total.num_vertices];
    for (v, &b) in vmap.iter().enumerate() {
        sheet[v] = fibers[b];
        fibers[b] += 1;
    }
    let d = fibers[0];
    debug_assert!(fibers.iter().all(|&f| f == d), "covering with uneven fibers");
    let mut perms = vec![vec![usize::MAX; d]; base.edges.len()];
    for (e, en) in total.edges.iter().enumerate() {
        perms[emap[e]][sheet[en[0]]] = sheet[en[1]];
    }
    PermutationCover { d, perms }
}
