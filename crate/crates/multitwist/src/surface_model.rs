//! Integral symplectic model of H₁(F) for the fiber surface of a multitwist.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::config_graph::{bicoloring, cycle_basis, ConfigGraph, CycleBasis, End};
use crate::linalg::{self, ZMat};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum BasisLabel {
    A { vertex: usize, i: usize },
    B { vertex: usize, i: usize },
    Z { edge: usize },
    C { edge: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceModel {
    pub dim: usize,
    pub labels: Vec<BasisLabel>,
    /// Standard symplectic form in the basis.
    pub form: ZMat,
    /// [z_e] per edge.
    pub z: Vec<Vec<BigInt>>,
    /// ε per edge and side.
    pub eps: Vec<[i8; 2]>,
    /// Basis indices (a_i, b_i) of handles per vertex.
    pub handles: Vec<Vec<(usize, usize)>>,
    /// Basis indices (z_e, c_e) for non-tree edges.
    pub dual_pair: Vec<Option<(usize, usize)>>,
    pub tree: CycleBasis,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("fiber values inconsistent around a cycle through edge {0}")]
    InconsistentCycle(usize),
    #[error("functional vanishes on the curve of edge {0}")]
    DegenerateFunctional(usize),
}

impl SurfaceModel {
    pub fn eps(&self, d: End) -> i8 {
        self.eps[d.edge][d.side as usize]
    }

    pub fn unit(&self, i: usize) -> Vec<BigInt> {
        let mut v = vec![BigInt::zero(); self.dim];
        v[i] = BigInt::one();
        v
    }

    /// I(x, y) = xᵀ I y.
    pub fn intersect(&self, x: &[BigInt], y: &[BigInt]) -> BigInt {
        linalg::dot(x, &linalg::mat_vec(&self.form, y))
    }

    /// The row vector xᵀ I.
    pub fn dual(&self, x: &[BigInt]) -> Vec<BigInt> {
        linalg::vec_mat(x, &self.form, self.dim)
    }
}

/// Boundary signs: +1 on the side of the positive bicolor class, or on the
/// lower-index endpoint when no bicoloring exists.
pub fn boundary_signs(g: &ConfigGraph) -> Vec<[i8; 2]> {
    let col = bicoloring(g);
    g.edges
        .iter()
        .map(|e| {
            let first = match &col {
                Some(c) => c[e.ends[0]] == 1,
                None => e.ends[0] < e.ends[1],
            };
            if first {
                [1, -1]
            } else {
                [-1, 1]
            }
        })
        .collect()
}

pub fn build_model(g: &ConfigGraph) -> SurfaceModel {
    let tree = cycle_basis(g);
    let eps = boundary_signs(g);
    let mut labels = Vec::new();
    let mut handles = Vec::new();
    for v in 0..g.num_vertices() {
        let mut hs = Vec::new();
        for i in 0..g.genus(v) {
            hs.push((labels.len(), labels.len() + 1));
            labels.push(BasisLabel::A { vertex: v, i });
            labels.push(BasisLabel::B { vertex: v, i });
        }
        handles.push(hs);
    }
    let mut dual_pair = vec![None; g.num_edges()];
    for e in 0..g.num_edges() {
        if !tree.in_tree[e] {
            dual_pair[e] = Some((labels.len(), labels.len() + 1));
            labels.push(BasisLabel::Z { edge: e });
            labels.push(BasisLabel::C { edge: e });
        }
    }
    let dim = labels.len();
    let mut form = vec![vec![BigInt::zero(); dim]; dim];
    for k in (0..dim).step_by(2) {
        form[k][k + 1] = BigInt::one();
        form[k + 1][k] = -BigInt::one();
    }
    let mut z = vec![vec![BigInt::zero(); dim]; g.num_edges()];
    for e in 0..g.num_edges() {
        if let Some((zi, _)) = dual_pair[e] {
            z[e][zi] = BigInt::one();
        }
    }
    for e in 0..g.num_edges() {
        if !tree.in_tree[e] {
            continue;
        }
        // side S = component of Λ − e containing the side-0 vertex
        let side_set = component_without(g, &tree, e);
        let e0 = eps[e][0] as i64;
        let mut cls = vec![BigInt::zero(); dim];
        for (f, edge) in g.edges.iter().enumerate() {
            if tree.in_tree[f] {
                continue;
            }
            let in0 = side_set[edge.ends[0]];
            let in1 = side_set[edge.ends[1]];
            if in0 == in1 {
                continue;
            }
            let s = if in0 { 0 } else { 1 };
            let (zi, _) = dual_pair[f].unwrap();
            cls[zi] -= BigInt::from(e0 * eps[f][s] as i64);
        }
        z[e] = cls;
    }
    SurfaceModel { dim, labels, form, z, eps, handles, dual_pair, tree }
}

fn component_without(g: &ConfigGraph, tree: &CycleBasis, cut: usize) -> Vec<bool> {
    let mut seen = vec![false; g.num_vertices()];
    let start = g.edges[cut].ends[0];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        for d in g.ends_at(v) {
            if d.edge == cut || !tree.in_tree[d.edge] {
                continue;
            }
            let w = g.vertex_of(d.bar());
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Twist matrix of T_z^b: α ↦ α + b·I(z, α)·z.
pub fn twist_matrix(m: &SurfaceModel, z: &[BigInt], b: i64) -> ZMat {
    let zi = m.dual(z);
    let mut t = linalg::identity(m.dim);
    for (i, row) in t.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x += BigInt::from(b) * &z[i] * &zi[j];
        }
    }
    t
}

/// σ_* as the product of the twist matrices over all edges.
pub fn sigma_star(m: &SurfaceModel, g: &ConfigGraph) -> ZMat {
    g.edges.iter().enumerate().fold(linalg::identity(m.dim), |acc, (e, edge)| {
        linalg::mat_mul(&acc, &twist_matrix(m, &m.z[e], edge.b))
    })
}

/// σ_* − Id.
pub fn sigma_minus_id(m: &SurfaceModel, g: &ConfigGraph) -> ZMat {
    let mut s = sigma_star(m, g);
    for (i, r) in s.iter_mut().enumerate() {
        r[i] -= BigInt::one();
    }
    s
}

/// Whether the class stays nonzero in the coinvariants over Q.
pub fn survives(m: &SurfaceModel, g: &ConfigGraph, class: &[BigInt]) -> bool {
    let n = linalg::to_qmat(&sigma_minus_id(m, g));
    let v: Vec<BigRational> = class.iter().map(linalg::qz).collect();
    !linalg::in_column_span(&n, m.dim, &v)
}

/// Integer basis of {ξ : ξ σ_* = ξ}.
pub fn invariant_functionals(m: &SurfaceModel, g: &ConfigGraph) -> Vec<Vec<BigInt>> {
    let n = linalg::to_qmat(&sigma_minus_id(m, g));
    linalg::left_nullspace(&n, m.dim).iter().map(|v| linalg::primitive_integer(v)).collect()
}

/// ξ̄ on the oriented curve of end δ: ε_δ·ξ̄([z_e]).
pub fn end_value(m: &SurfaceModel, xi: &[BigInt], d: End) -> BigInt {
    linalg::dot(xi, &m.z[d.edge]) * BigInt::from(m.eps(d))
}

/// Fiber values normalized to 0 at vertex 0, propagated by
/// fv(v(bar δ)) − fv(v(δ)) = b·ε_δ·ξ̄([z_e]).
pub fn fiber_values(m: &SurfaceModel, g: &ConfigGraph, xi: &[BigInt]) -> Result<Vec<BigInt>, ModelError> {
    for e in 0..g.num_edges() {
        if linalg::dot(xi, &m.z[e]).is_zero() {
            return Err(ModelError::DegenerateFunctional(e));
        }
    }
    let mut fv: Vec<Option<BigInt>> = vec![None; g.num_vertices()];
    fv[0] = Some(BigInt::zero());
    for &v in &m.tree.order {
        for d in g.ends_at(v) {
            if !m.tree.in_tree[d.edge] {
                continue;
            }
            let w = g.vertex_of(d.bar());
            if fv[w].is_none() {
                let base = fv[v].clone().unwrap();
                fv[w] = Some(base + BigInt::from(g.b(d)) * end_value(m, xi, d));
            }
        }
    }
    let fv: Vec<BigInt> = fv.into_iter().map(|x| x.unwrap()).collect();
    for d in g.all_ends() {
        let (v, w) = (g.vertex_of(d), g.vertex_of(d.bar()));
        if &fv[w] - &fv[v] != BigInt::from(g.b(d)) * end_value(m, xi, d) {
            return Err(ModelError::InconsistentCycle(d.edge));
        }
    }
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_graph::{cycle_graph, two_vertex, min_chi};
    use proptest::prelude::*;

    fn zv(xs: &[i64]) -> Vec<BigInt> {
        xs.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn two_three_six_model() {
        let g = two_vertex(&[2, -3, -6]);
        let m = build_model(&g);
        assert_eq!(m.dim, 4);
        assert_eq!(m.labels, vec![BasisLabel::Z { edge: 1 }, BasisLabel::C { edge: 1 }, BasisLabel::Z { edge: 2 }, BasisLabel::C { edge: 2 }]);
        assert_eq!(m.z[0], zv(&[-1, 0, -1, 0]));
        for a in &m.z {
            for b in &m.z {
                assert!(m.intersect(a, b).is_zero());
            }
        }
        let s = sigma_star(&m, &g);
        for z in &m.z {
            assert_eq!(&linalg::mat_vec(&s, z), z);
        }
        assert!(survives(&m, &g, &m.z[0]));
        assert!(!survives(&m, &g, &zv(&[0, 0, 0, 0])));
        let inv = invariant_functionals(&m, &g);
        let vals: Vec<Vec<BigInt>> = inv.iter().map(|xi| m.z.iter().map(|z| linalg::dot(xi, z)).collect()).collect();
        // the z-values of the invariant space are the line through (3,-2,-1)
        assert!(vals.iter().any(|v| v.iter().any(|x| !x.is_zero())));
        for v in vals {
            assert_eq!(&v[0] * BigInt::from(-2), &v[1] * BigInt::from(3));
            assert_eq!(&v[0] * BigInt::from(-1), &v[2] * BigInt::from(3));
        }
    }

    #[test]
    fn separating_curve_has_zero_class() {
        let g = ConfigGraph::from_parts(&[("a", -1), ("b", -1)], &[("e", ["a", "b"], 3)]).unwrap();
        let m = build_model(&g);
        assert_eq!(m.dim, 4);
        assert!(m.z[0].iter().all(|x| x.is_zero()));
        assert_eq!(twist_matrix(&m, &m.z[0], 3), linalg::identity(4));
        assert_eq!(invariant_functionals(&m, &g).len(), 4);
    }

    #[test]
    fn single_twist_on_handle() {
        let g = ConfigGraph::from_parts(&[("a", -1), ("b", -1)], &[("e", ["a", "b"], 1)]).unwrap();
        let m = build_model(&g);
        let (a1, b1) = m.handles[0][0];
        let t = twist_matrix(&m, &m.unit(a1), 1);
        let mut expect = m.unit(b1);
        expect[a1] = BigInt::one();
        assert_eq!(linalg::mat_vec(&t, &m.unit(b1)), expect);
    }

    #[test]
    fn all_positive_curve_dies() {
        let g = two_vertex(&[1, 1, 1]);
        let m = build_model(&g);
        assert!(!survives(&m, &g, &m.z[0]));
    }

    #[test]
    fn fiber_values_examples() {
        let g = two_vertex(&[2, -3, -6]);
        let m = build_model(&g);
        // ξ̄ with values (3,-2,-1) on (z1,z2,z3): z2 ↦ -2, z3 ↦ -1 on basis z2, z3
        let xi = zv(&[-2, 0, -1, 0]);
        assert_eq!(m.z.iter().map(|z| linalg::dot(&xi, z)).collect::<Vec<_>>(), zv(&[3, -2, -1]));
        assert_eq!(fiber_values(&m, &g, &xi).unwrap(), zv(&[0, 6]));

        let c = cycle_graph(&[1, 2, -1, -2], -2);
        let m = build_model(&c);
        // y_e = (1,-1,1,-1) at the positive ends; e4 is the non-tree edge
        let (zi, _) = m.dual_pair[3].unwrap();
        let mut xi = vec![BigInt::zero(); m.dim];
        let pos4 = if m.eps[3][0] == 1 { 0 } else { 1 };
        xi[zi] = BigInt::from(-(m.eps[3][pos4] as i64));
        for e in 0..4 {
            let pos = if m.eps[e][0] == 1 { 0 } else { 1 };
            let y = end_value(&m, &xi, End::new(e, pos));
            assert_eq!(y, BigInt::from(if e % 2 == 0 { 1 } else { -1 }));
        }
        assert_eq!(fiber_values(&m, &c, &xi).unwrap(), zv(&[0, 1, 3, 2]));
    }

    fn arb_graph() -> impl Strategy<Value = ConfigGraph> {
        (2usize..4, proptest::collection::vec((0usize..3, 0usize..3, -3i64..4), 1..6), 0i64..2).prop_filter_map(
            "valid",
            |(n, raw, extra)| {
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
                let vs: Vec<(String, i64)> =
                    (0..n).map(|i| (format!("v{i}"), min_chi(val[i], -1) - 2 * extra * (i as i64 % 2))).collect();
                ConfigGraph::from_parts(&vs, &es).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn model_invariants(g in arb_graph()) {
            let m = build_model(&g);
            let expected: usize = (0..g.num_vertices()).map(|v| g.genus(v)).sum::<usize>() + m.tree.cycles.len();
            prop_assert_eq!(m.dim, 2 * expected);
            prop_assert_eq!(linalg::det(&m.form), BigInt::one());
            for a in &m.z { for b in &m.z { prop_assert!(m.intersect(a, b).is_zero()); } }
            for v in 0..g.num_vertices() {
                let mut s = vec![BigInt::zero(); m.dim];
                for d in g.ends_at(v) {
                    for (x, y) in s.iter_mut().zip(&m.z[d.edge]) { *x += y * BigInt::from(m.eps(d)); }
                }
                prop_assert!(s.iter().all(|x| x.is_zero()));
            }
            let s = sigma_star(&m, &g);
            // σᵀ I σ = I
            let st = linalg::transpose(&s, m.dim);
            prop_assert_eq!(linalg::mat_mul(&linalg::mat_mul(&st, &m.form), &s), m.form.clone());
            // order independence
            let rev = g.edges.iter().enumerate().rev().fold(linalg::identity(m.dim), |acc, (e, edge)| {
                linalg::mat_mul(&acc, &twist_matrix(&m, &m.z[e], edge.b))
            });
            prop_assert_eq!(rev, s.clone());
            for xi in invariant_functionals(&m, &g) {
                prop_assert_eq!(linalg::vec_mat(&xi, &s, m.dim), xi.clone());
                if let Ok(fv) = fiber_values(&m, &g, &xi) {
                    for e in &g.edges { prop_assert_ne!(&fv[e.ends[0]], &fv[e.ends[1]]); }
                }
            }
        }
    }
}
