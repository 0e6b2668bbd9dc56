//! Configuration graphs of multitwists: validation, charges, bicolorings,
//! cycle bases and the bipartite double cover.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub chi: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    /// Vertex indices of side 0 and side 1.
    pub ends: [usize; 2],
    pub b: i64,
}

/// An end of an edge: the edge seen from one of its two sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct End {
    pub edge: usize,
    pub side: u8,
}

impl End {
    pub fn new(edge: usize, side: u8) -> Self {
        End { edge, side }
    }
    pub fn bar(self) -> Self {
        End { edge: self.edge, side: 1 - self.side }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
pub enum Violation {
    #[error("edge {0} has b = 0")]
    ZeroMultiplicity(String),
    #[error("vertex {0} has chi >= 0")]
    NonNegativeChi(String),
    #[error("vertex {0}: genus (2 - chi - valence)/2 is not a nonnegative integer")]
    GenusParity(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge {0} is a self-loop")]
    SelfLoop(String),
    #[error("no edges: the curve system is empty")]
    EmptyCurveSystem,
    #[error("edge {edge} references unknown vertex {vertex}")]
    UnknownVertex { edge: String, vertex: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i64),
}

#[derive(Deserialize)]
struct RawVertex {
    id: String,
    chi: i64,
}

#[derive(Deserialize)]
struct RawEdge {
    id: String,
    ends: [String; 2],
    b: i64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInput {
    Graph { vertices: Vec<RawVertex>, edges: Vec<RawEdge> },
    Anosov { matrix: [[i64; 2]; 2] },
}

#[derive(Clone, Debug)]
pub enum InputFile {
    Graph(ConfigGraph),
    Anosov([[i64; 2]; 2]),
}

pub fn parse_input(text: &str) -> Result<InputFile, ConfigError> {
    let raw: RawInput = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    match raw {
        RawInput::Anosov { matrix } => Ok(InputFile::Anosov(matrix)),
        RawInput::Graph { vertices, edges } => {
            let vs = vertices.into_iter().map(|v| (v.id, v.chi)).collect::<Vec<_>>();
            let es = edges.into_iter().map(|e| (e.id, e.ends, e.b)).collect::<Vec<_>>();
            ConfigGraph::from_parts(&vs, &es).map(InputFile::Graph)
        }
    }
}

/// Parse and validate a configuration file.
pub fn parse_validate(text: &str) -> Result<ConfigGraph, ConfigError> {
    match parse_input(text)? {
        InputFile::Graph(g) => Ok(g),
        InputFile::Anosov(_) => Err(ConfigError::Parse("expected a graph, found a matrix".into())),
    }
}

impl ConfigGraph {
    /// Build from ids; vertices and edges are stored sorted by id.
    pub fn from_parts<S: AsRef<str>>(
        vertices: &[(S, i64)],
        edges: &[(S, [S; 2], i64)],
    ) -> Result<Self, ConfigError> {
        let mut errs = Vec::new();
        let mut vs: Vec<Vertex> = vertices
            .iter()
            .map(|(id, chi)| Vertex { id: id.as_ref().to_string(), chi: *chi })
            .collect();
        vs.sort_by(|a, b| a.id.cmp(&b.id));
        for w in vs.windows(2) {
            if w[0].id == w[1].id {
                errs.push(Violation::DuplicateId(w[0].id.clone()));
            }
        }
        let index: BTreeMap<&str, usize> = vs.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let mut es = Vec::new();
        let mut seen = BTreeSet::new();
        for (id, ends, b) in edges {
            let id = id.as_ref().to_string();
            if !seen.insert(id.clone()) {
                errs.push(Violation::DuplicateId(id.clone()));
            }
            let mut idx = [0usize; 2];
            let mut ok = true;
            for s in 0..2 {
                match index.get(ends[s].as_ref()) {
                    Some(&i) => idx[s] = i,
                    None => {
                        ok = false;
                        errs.push(Violation::UnknownVertex { edge: id.clone(), vertex: ends[s].as_ref().to_string() })
                    }
                }
            }
            if ok {
                es.push(Edge { id, ends: idx, b: *b });
            }
        }
        es.sort_by(|a, b| a.id.cmp(&b.id));
        let g = ConfigGraph { vertices: vs, edges: es };
        errs.extend(g.violations());
        if errs.is_empty() {
            Ok(g)
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Every violated invariant.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.edges.is_empty() {
            out.push(Violation::EmptyCurveSystem);
        }
        for e in &self.edges {
            if e.b == 0 {
                out.push(Violation::ZeroMultiplicity(e.id.clone()));
            }
            if e.ends[0] == e.ends[1] {
                out.push(Violation::SelfLoop(e.id.clone()));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.chi >= 0 {
                out.push(Violation::NonNegativeChi(v.id.clone()));
            }
            let t = 2 - v.chi - self.valence(i) as i64;
            if t < 0 || t % 2 != 0 {
                out.push(Violation::GenusParity(v.id.clone()));
            }
        }
        if !self.vertices.is_empty() && !self.is_connected() {
            out.push(Violation::Disconnected);
        }
        out
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_of(&self, d: End) -> usize {
        self.edges[d.edge].ends[d.side as usize]
    }
    pub fn b(&self, d: End) -> i64 {
        self.edges[d.edge].b
    }

    pub fn all_ends(&self) -> Vec<End> {
        (0..self.edges.len()).flat_map(|e| [End::new(e, 0), End::new(e, 1)]).collect()
    }

    /// Ends at v, ordered by (edge, side).
    pub fn ends_at(&self, v: usize) -> Vec<End> {
        self.all_ends().into_iter().filter(|&d| self.vertex_of(d) == v).collect()
    }

    pub fn valence(&self, v: usize) -> usize {
        self.edges.iter().map(|e| e.ends.iter().filter(|&&x| x == v).count()).sum()
    }

    pub fn genus(&self, v: usize) -> usize {
        ((2 - self.vertices[v].chi - self.valence(v) as i64) / 2) as usize
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }
    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                for s in 0..2 {
                    if e.ends[s] == v && !seen[e.ends[1 - s]] {
                        seen[e.ends[1 - s]] = true;
                        stack.push(e.ends[1 - s]);
                    }
                }
            }
        }
        seen.iter().all(|&x| x)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.iter().map(|v| v.chi).sum()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph config {\n");
        for v in &self.vertices {
            let _ = writeln!(s, "  \"{}\" [label=\"{}:{}\"];", v.id, v.id, v.chi);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -- \"{}\" [label=\"{}:{}\"];",
                self.vertices[e.ends[0]].id, self.vertices[e.ends[1]].id, e.id, e.b
            );
        }
        s.push_str("}\n");
        s
    }
}

/// k_v = Σ 1/b over the ends at v.
pub fn charges(g: &ConfigGraph) -> Vec<BigRational> {
    (0..g.num_vertices())
        .map(|v| {
            g.ends_at(v).iter().fold(BigRational::zero(), |k, &d| {
                k + BigRational::new(BigInt::from(1), BigInt::from(g.b(d)))
            })
        })
        .collect()
}

/// A proper 2-coloring with vertex 0 colored +1, or None for odd cycles.
pub fn bicoloring(g: &ConfigGraph) -> Option<Vec<i8>> {
    let n = g.num_vertices();
    let mut col = vec![0i8; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if col[s] != 0 {
            continue;
        }
        col[s] = 1;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for d in g.ends_at(v) {
                let w = g.vertex_of(d.bar());
                if col[w] == 0 {
                    col[w] = -col[v];
                    queue.push_back(w);
                } else if col[w] == col[v] {
                    return None;
                }
            }
        }
    }
    Some(col)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FundamentalCycle {
    pub edge: usize,
    /// Each end δ means: traverse e(δ) from v(δ) to v(bar δ).
    pub ends: Vec<End>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CycleBasis {
    pub in_tree: Vec<bool>,
    pub cycles: Vec<FundamentalCycle>,
    /// For each vertex other than the root, the end leading to its parent
    /// (the end sits at the vertex itself).
    pub parent_end: Vec<Option<End>>,
    /// Vertices in BFS order from the root (vertex 0).
    pub order: Vec<usize>,
}

impl CycleBasis {
    /// Tree path from `a` to `b` as a sequence of traversed ends.
    pub fn tree_path(&self, g: &ConfigGraph, a: usize, b: usize) -> Vec<End> {
        let up = |mut v: usize| {
            let mut chain = vec![v];
            while let Some(d) = self.parent_end[v] {
                v = g.vertex_of(d.bar());
                chain.push(v);
            }
            chain
        };
        let ca = up(a);
        let cb = up(b);
        let lca = *ca.iter().find(|v| cb.contains(v)).unwrap();
        let mut path = Vec::new();
        let mut v = a;
        while v != lca {
            let d = self.parent_end[v].unwrap();
            path.push(d);
            v = g.vertex_of(d.bar());
        }
        let mut tail = Vec::new();
        let mut v = b;
        while v != lca {
            let d = self.parent_end[v].unwrap();
            tail.push(d.bar());
            v = g.vertex_of(d.bar());
        }
        tail.reverse();
        path.extend(tail);
        path
    }
}

/// Kruskal spanning tree over edges in index (= id) order, with fundamental
/// cycles.
pub fn cycle_basis(g: &ConfigGraph) -> CycleBasis {
    let n = g.num_vertices();
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while uf[r] != r {
            r = uf[r];
        }
        let mut x = x;
        while uf[x] != r {
            let nx = uf[x];
            uf[x] = r;
            x = nx;
        }
        r
    }
    let mut in_tree = vec![false; g.num_edges()];
    for (i, e) in g.edges.iter().enumerate() {
        let (a, b) = (find(&mut uf, e.ends[0]), find(&mut uf, e.ends[1]));
        if a != b {
            uf[a] = b;
            in_tree[i] = true;
        }
    }
    let mut parent_end = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = vec![0];
    seen[0] = true;
    let mut k = 0;
    while k < order.len() {
        let v = order[k];
        k += 1;
        for d in g.ends_at(v) {
            if !in_tree[d.edge] {
                continue;
            }
            let w = g.vertex_of(d.bar());
            if !seen[w] {
                seen[w] = true;
                parent_end[w] = Some(d.bar());
                order.push(w);
            }
        }
    }
    let mut basis = CycleBasis { in_tree, cycles: Vec::new(), parent_end, order };
    for (i, e) in g.edges.iter().enumerate() {
        if basis.in_tree[i] {
            continue;
        }
        let mut ends = vec![End::new(i, 0)];
        ends.extend(basis.tree_path(g, e.ends[1], e.ends[0]));
        basis.cycles.push(FundamentalCycle { edge: i, ends });
    }
    basis
}

/// All simple cycles (closed paths with distinct vertices and edges, length
/// at least 2), one orientation each.
pub fn simple_cycles(g: &ConfigGraph) -> Vec<Vec<End>> {
    let mut out = Vec::new();
    let mut seen_sets = BTreeSet::new();
    for s in 0..g.num_vertices() {
        let mut path: Vec<End> = Vec::new();
        let mut on = vec![false; g.num_vertices()];
        on[s] = true;
        fn dfs(
            g: &ConfigGraph,
            s: usize,
            v: usize,
            path: &mut Vec<End>,
            on: &mut Vec<bool>,
            out: &mut Vec<Vec<End>>,
            seen: &mut BTreeSet<Vec<usize>>,
        ) {
            for d in g.ends_at(v) {
                if path.iter().any(|p| p.edge == d.edge) {
                    continue;
                }
                let w = g.vertex_of(d.bar());
                if w == s && !path.is_empty() {
                    let mut c = path.clone();
                    c.push(d);
                    let mut key: Vec<usize> = c.iter().map(|x| x.edge).collect();
                    key.sort();
                    if seen.insert(key) {
                        out.push(c);
                    }
                } else if w > s && !on[w] {
                    on[w] = true;
                    path.push(d);
                    dfs(g, s, w, path, on, out, seen);
                    path.pop();
                    on[w] = false;
                }
            }
        }
        dfs(g, s, s, &mut path, &mut on, &mut out, &mut seen_sets);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoverMap {
    pub vertex_map: Vec<usize>,
    pub edge_map: Vec<usize>,
    pub input_already_bipartite: bool,
}

/// Double cover dual to the mod-2 edge count; lifted edges carry 2b.
/// For bipartite input the cover is trivial and one component is returned.
pub fn bipartite_double_cover(g: &ConfigGraph) -> (ConfigGraph, CoverMap) {
    let bip = bicoloring(g).is_some();
    let name = |id: &str, s: usize| format!("{id}#{s}");
    let mut vs = Vec::new();
    let mut es = Vec::new();
    for v in &g.vertices {
        for s in 0..2 {
            vs.push((name(&v.id, s), v.chi));
        }
    }
    for e in &g.edges {
        for s in 0..2 {
            let a = name(&g.vertices[e.ends[0]].id, s);
            let b = name(&g.vertices[e.ends[1]].id, 1 - s);
            es.push((name(&e.id, s), [a, b], 2 * e.b));
        }
    }
    if bip {
        // keep the component of (vertex 0, sheet 0): sheet of v is 0 iff color +1
        let col = bicoloring(g).unwrap();
        let sheet = |v: usize| if col[v] == 1 { 0 } else { 1 };
        vs.retain(|(id, _)| {
            let (base, s) = id.rsplit_once('#').unwrap();
            let v = g.vertex_index(base).unwrap();
            s.parse::<usize>().unwrap() == sheet(v)
        });
        es.retain(|(id, _, _)| {
            let (base, s) = id.rsplit_once('#').unwrap();
            let e = g.edge_index(base).unwrap();
            s.parse::<usize>().unwrap() == sheet(g.edges[e].ends[0])
        });
    }
    let cover = ConfigGraph::from_parts(&vs, &es).expect("double cover of a valid graph is valid");
    let base_of = |id: &str| id.rsplit_once('#').unwrap().0.to_string();
    let vertex_map = cover.vertices.iter().map(|v| g.vertex_index(&base_of(&v.id)).unwrap()).collect();
    let edge_map = cover.edges.iter().map(|e| g.edge_index(&base_of(&e.id)).unwrap()).collect();
    (cover, CoverMap { vertex_map, edge_map, input_already_bipartite: bip })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AnosovClass {
    Anosov,
    NotAnosov,
}

pub fn anosov_classify(m: [[i64; 2]; 2]) -> Result<AnosovClass, ConfigError> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() != 1 {
        return Err(ConfigError::NotUnimodular(det));
    }
    let tr = m[0][0] + m[1][1];
    Ok(if det == 1 && tr.abs() > 2 { AnosovClass::Anosov } else { AnosovClass::NotAnosov })
}

/// Two vertices joined by parallel edges with the given multiplicities;
/// χ is the largest value allowed by the valence.
pub fn two_vertex(bs: &[i64]) -> ConfigGraph {
    let chi = min_chi(bs.len(), -1);
    let vs = vec![("u".to_string(), chi), ("w".to_string(), chi)];
    let es: Vec<(String, [String; 2], i64)> = bs
        .iter()
        .enumerate()
        .map(|(i, &b)| (format!("e{}", i + 1), ["u".to_string(), "w".to_string()], b))
        .collect();
    ConfigGraph::from_parts(&vs, &es).expect("two-vertex instance")
}

/// Largest admissible χ ≤ `upper` for a vertex of the given valence.
pub fn min_chi(valence: usize, upper: i64) -> i64 {
    let mut chi = upper.min(-1);
    while (2 - chi - valence as i64) < 0 || (2 - chi - valence as i64) % 2 != 0 {
        chi -= 1;
    }
    chi
}

/// Cycle graph v1..vn with edges e_i = (v_i, v_{i+1}).
pub fn cycle_graph(bs: &[i64], chi: i64) -> ConfigGraph {
    let n = bs.len();
    let vs: Vec<(String, i64)> = (1..=n).map(|i| (format!("v{i}"), chi)).collect();
    let es: Vec<(String, [String; 2], i64)> = bs
        .iter()
        .enumerate()
        .map(|(i, &b)| (format!("e{}", i + 1), [format!("v{}", i + 1), format!("v{}", (i + 1) % n + 1)], b))
        .collect();
    ConfigGraph::from_parts(&vs, &es).expect("cycle instance")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_THREE_SIX: &str = r#"{"vertices":[{"id":"u","chi":-1},{"id":"w","chi":-1}],
        "edges":[{"id":"e1","ends":["u","w"],"b":2},{"id":"e2","ends":["u","w"],"b":-3},{"id":"e3","ends":["u","w"],"b":-6}]}"#;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn two_three_six_parses_as_two_pants() {
        let g = parse_validate(TWO_THREE_SIX).unwrap();
        assert_eq!(g.genus(0), 0);
        assert_eq!(g.genus(1), 0);
        assert_eq!(charges(&g), vec![rat(0, 1), rat(0, 1)]);
    }

    #[test]
    fn empty_curve_system_rejected() {
        let r = ConfigGraph::from_parts::<&str>(&[("v", -1)], &[]);
        match r {
            Err(ConfigError::Invalid(v)) => assert!(v.contains(&Violation::EmptyCurveSystem)),
            _ => panic!("expected rejection"),
        }
    }

    #[test]
    fn all_violations_reported() {
        let r = ConfigGraph::from_parts(
            &[("a", 0), ("b", -2), ("c", -2)],
            &[("e1", ["a", "b"], 0), ("e2", ["b", "b"], 1)],
        );
        let Err(ConfigError::Invalid(v)) = r else { panic!() };
        assert!(v.contains(&Violation::ZeroMultiplicity("e1".into())));
        assert!(v.contains(&Violation::SelfLoop("e2".into())));
        assert!(v.contains(&Violation::NonNegativeChi("a".into())));
        assert!(v.contains(&Violation::Disconnected));
        assert!(v.contains(&Violation::GenusParity("b".into())));
    }

    #[test]
    fn charges_examples() {
        let g = two_vertex(&[2, 3, 6]);
        assert_eq!(charges(&g)[0], rat(1, 1));
        let c = cycle_graph(&[1, 2, -1, -2], -2);
        // v1 sees e1 (b=1) and e4 (b=-2)
        assert_eq!(charges(&c)[0], rat(1, 2));
    }

    #[test]
    fn bicolorings() {
        assert_eq!(bicoloring(&two_vertex(&[1, 1, 1])), Some(vec![1, -1]));
        assert_eq!(bicoloring(&cycle_graph(&[1, 1, 1], -2)), None);
        assert_eq!(bicoloring(&cycle_graph(&[1, 2, -1, -2], -2)), Some(vec![1, -1, 1, -1]));
    }

    #[test]
    fn cycle_basis_sizes() {
        let tree = ConfigGraph::from_parts(&[("a", -1), ("b", -1)], &[("e", ["a", "b"], 1)]).unwrap();
        assert!(cycle_basis(&tree).cycles.is_empty());
        let cb = cycle_basis(&two_vertex(&[2, -3, -6]));
        assert_eq!(cb.cycles.len(), 2);
        assert!(cb.cycles.iter().all(|c| c.ends.len() == 2));
        let cb = cycle_basis(&cycle_graph(&[1, 2, -1, -2], -2));
        assert_eq!(cb.cycles.len(), 1);
        assert_eq!(cb.cycles[0].ends.len(), 4);
    }

    #[test]
    fn triangle_double_cover_is_hexagon() {
        let t = cycle_graph(&[1, 1, 1], -2);
        let (h, map) = bipartite_double_cover(&t);
        assert!(!map.input_already_bipartite);
        assert_eq!(h.num_vertices(), 6);
        assert_eq!(h.num_edges(), 6);
        assert!(h.edges.iter().all(|e| e.b == 2));
        assert!(h.vertices.iter().all(|v| v.chi == -2));
        assert!(bicoloring(&h).is_some());
        assert_eq!(cycle_basis(&h).cycles[0].ends.len(), 6);
    }

    #[test]
    fn bipartite_double_cover_keeps_one_component() {
        let (c, map) = bipartite_double_cover(&two_vertex(&[2, -3, -6]));
        assert!(map.input_already_bipartite);
        assert_eq!(c.num_vertices(), 2);
        assert_eq!(c.edges.iter().map(|e| e.b).collect::<Vec<_>>(), vec![4, -6, -12]);
    }

    #[test]
    fn anosov_examples() {
        assert_eq!(anosov_classify([[2, 1], [1, 1]]).unwrap(), AnosovClass::Anosov);
        assert_eq!(anosov_classify([[1, 1], [0, 1]]).unwrap(), AnosovClass::NotAnosov);
        assert_eq!(anosov_classify([[0, -1], [1, 0]]).unwrap(), AnosovClass::NotAnosov);
        assert!(matches!(anosov_classify([[2, 0], [0, 1]]), Err(ConfigError::NotUnimodular(2))));
    }

    #[test]
    fn dot_labels() {
        let g = parse_validate(TWO_THREE_SIX).unwrap();
        let d = g.to_dot();
        assert!(d.contains("label=\"u:-1\""));
        assert!(d.contains("label=\"e2:-3\""));
    }

    fn arb_graph() -> impl Strategy<Value = ConfigGraph> {
        (2usize..5, proptest::collection::vec((0usize..4, 0usize..4, -3i64..4), 1..7)).prop_filter_map(
            "valid graph",
            |(n, raw)| {
                let es: Vec<(String, [String; 2], i64)> = raw
                    .iter()
                    .enumerate()
                    .filter(|(_, (a, b, x))| a % n != b % n && *x != 0)
                    .map(|(i, (a, b, x))| (format!("e{i}"), [format!("v{}", a % n), format!("v{}", b % n)], *x))
                    .collect();
                let mut val = vec![0usize; n];
                for (_, [a, b], _) in &es {
                    val[a[1..].parse::<usize>().unwrap()] += 1;
                    val[b[1..].parse::<usize>().unwrap()] += 1;
                }
                let vs: Vec<(String, i64)> = (0..n).map(|i| (format!("v{i}"), min_chi(val[i], -1))).collect();
                ConfigGraph::from_parts(&vs, &es).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn ends_and_cover_invariants(g in arb_graph()) {
            let total: usize = (0..g.num_vertices()).map(|v| g.valence(v)).sum();
            prop_assert_eq!(total, 2 * g.num_edges());
            for d in g.all_ends() {
                prop_assert_ne!(d, d.bar());
                prop_assert_eq!(d.bar().bar(), d);
            }
            let (c, map) = bipartite_double_cover(&g);
            prop_assert!(bicoloring(&c).is_some());
            let kc = charges(&c);
            let kb = charges(&g);
            for (i, k) in kc.iter().enumerate() {
                prop_assert_eq!(k.clone() * BigRational::from_integer(BigInt::from(2)), kb[map.vertex_map[i]].clone());
            }
        }

        #[test]
        fn fundamental_cycles_span_simple_cycles(g in arb_graph()) {
            let cb = cycle_basis(&g);
            prop_assert_eq!(cb.cycles.len(), g.num_edges() + 1 - g.num_vertices());
            let vec_of = |c: &[End]| {
                let mut v = vec![0i64; g.num_edges()];
                for d in c { v[d.edge] += if d.side == 0 { 1 } else { -1 }; }
                v
            };
            for c in simple_cycles(&g) {
                // coefficient of each fundamental cycle = coefficient of its non-tree edge
                let target = vec_of(&c);
                let mut sum = vec![0i64; g.num_edges()];
                for f in &cb.cycles {
                    let k = target[f.edge];
                    for (s, x) in sum.iter_mut().zip(vec_of(&f.ends)) { *s += k * x; }
                }
                prop_assert_eq!(sum, target);
            }
        }
    }
}
