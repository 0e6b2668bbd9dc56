//! Exact solution of the current equations.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::config_graph::{bicoloring, cycle_basis, ConfigGraph, End};
use crate::linalg::{self, q, QMat};
use crate::surface_model::{boundary_signs, build_model, survives};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CurrentError {
    #[error("configuration graph has an odd cycle")]
    NotBipartite,
}

/// A symmetric solution stored as one value per edge, read at the
/// positive end; x at the negative end is the negative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CurrentSolution {
    pub y: Vec<BigRational>,
    pub eps: Vec<[i8; 2]>,
}

impl CurrentSolution {
    pub fn x(&self, d: End) -> BigRational {
        &self.y[d.edge] * q(self.eps[d.edge][d.side as usize] as i64)
    }
    pub fn nondegenerate(&self) -> bool {
        self.y.iter().all(|v| !v.is_zero())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InfeasibilityWitness {
    pub end: End,
    pub basis: Vec<CurrentSolution>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PointResult {
    Feasible(CurrentSolution),
    Infeasible(InfeasibilityWitness),
}

fn positive_end(eps: &[[i8; 2]], e: usize) -> End {
    End::new(e, if eps[e][0] == 1 { 0 } else { 1 })
}

/// Coefficient matrix on the per-edge variables: vertex rows, then one row
/// per fundamental cycle.
pub fn equations(g: &ConfigGraph) -> Result<QMat, CurrentError> {
    bicoloring(g).ok_or(CurrentError::NotBipartite)?;
    let eps = boundary_signs(g);
    let ne = g.num_edges();
    let mut rows = Vec::new();
    for v in 0..g.num_vertices() {
        let mut r = vec![BigRational::zero(); ne];
        for d in g.ends_at(v) {
            r[d.edge] += q(eps[d.edge][d.side as usize] as i64);
        }
        rows.push(r);
    }
    for c in cycle_basis(g).cycles {
        let mut r = vec![BigRational::zero(); ne];
        for d in c.ends {
            r[d.edge] += q(g.b(d) * eps[d.edge][d.side as usize] as i64);
        }
        rows.push(r);
    }
    Ok(rows)
}

pub fn solution_space(g: &ConfigGraph) -> Result<Vec<CurrentSolution>, CurrentError> {
    let eqs = equations(g)?;
    let eps = boundary_signs(g);
    Ok(linalg::nullspace(&eqs, g.num_edges())
        .into_iter()
        .map(|y| CurrentSolution { y, eps: eps.clone() })
        .collect())
}

pub fn nondegenerate_point(g: &ConfigGraph) -> Result<PointResult, CurrentError> {
    let basis = solution_space(g)?;
    let eps = boundary_signs(g);
    let ne = g.num_edges();
    if let Some(e) = (0..ne).find(|&e| basis.iter().all(|s| s.y[e].is_zero())) {
        return Ok(PointResult::Infeasible(InfeasibilityWitness { end: positive_end(&eps, e), basis }));
    }
    let vecs: Vec<Vec<BigRational>> = basis.iter().map(|s| s.y.clone()).collect();
    let (_, y) = linalg::greedy_nonvanishing(&vecs, ne);
    Ok(PointResult::Feasible(CurrentSolution { y, eps }))
}

/// Σ b_δ x_δ along a closed path of ends.
pub fn cycle_sum(g: &ConfigGraph, x: &CurrentSolution, cycle: &[End]) -> BigRational {
    cycle.iter().fold(BigRational::zero(), |s, &d| s + x.x(d) * q(g.b(d)))
}

pub fn vertex_sum(g: &ConfigGraph, x: &CurrentSolution, v: usize) -> BigRational {
    g.ends_at(v).iter().fold(BigRational::zero(), |s, &d| s + x.x(d))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SurvivalReport {
    pub feasible: bool,
    /// survives([z_e]) per edge.
    pub survives: Vec<bool>,
    /// Whether y_e is not identically zero on the solution space, per edge.
    pub coordinate_alive: Vec<bool>,
    pub agree: bool,
}

/// Compare current feasibility with homological survival of every curve.
pub fn crosscheck_survival(g: &ConfigGraph) -> Result<SurvivalReport, CurrentError> {
    let basis = solution_space(g)?;
    let m = build_model(g);
    let survives: Vec<bool> = (0..g.num_edges()).map(|e| survives(&m, g, &m.z[e])).collect();
    let coordinate_alive: Vec<bool> =
        (0..g.num_edges()).map(|e| basis.iter().any(|s| !s.y[e].is_zero())).collect();
    let feasible = coordinate_alive.iter().all(|&x| x);
    let agree = survives == coordinate_alive && feasible == survives.iter().all(|&x| x);
    Ok(SurvivalReport { feasible, survives, coordinate_alive, agree })
}

/// Integer-scaled values per edge, for reports.
pub fn integer_values(x: &CurrentSolution) -> Vec<BigInt> {
    linalg::primitive_integer(&x.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_graph::{cycle_graph, simple_cycles, two_vertex, min_chi};
    use proptest::prelude::*;

    fn rq(xs: &[i64]) -> Vec<BigRational> {
        xs.iter().map(|&x| q(x)).collect()
    }

    #[test]
    fn two_three_six_space() {
        let g = two_vertex(&[2, -3, -6]);
        let sp = solution_space(&g).unwrap();
        assert_eq!(sp.len(), 1);
        let ints = integer_values(&sp[0]);
        let s = if ints[0] > BigInt::zero() { 1 } else { -1 };
        assert_eq!(ints.iter().map(|x| x * s).collect::<Vec<_>>(), vec![3.into(), (-2).into(), (-1).into()]);
        // x at w is the negation
        assert_eq!(sp[0].x(End::new(0, 1)), -sp[0].x(End::new(0, 0)));
        match nondegenerate_point(&g).unwrap() {
            PointResult::Feasible(x) => assert!(x.nondegenerate()),
            _ => panic!(),
        }
    }

    #[test]
    fn two_edge_examples() {
        let sp = solution_space(&two_vertex(&[1, -1])).unwrap();
        assert_eq!(sp.len(), 1);
        assert_eq!(sp[0].y[0], -sp[0].y[1].clone());
        assert!(solution_space(&two_vertex(&[1, 1])).unwrap().is_empty());
    }

    #[test]
    fn all_positive_has_witness() {
        let g = two_vertex(&[1, 1, 1]);
        match nondegenerate_point(&g).unwrap() {
            PointResult::Infeasible(w) => {
                assert!(w.basis.iter().all(|s| s.y[w.end.edge].is_zero()));
            }
            _ => panic!("expected witness"),
        }
        let r = crosscheck_survival(&g).unwrap();
        assert!(r.agree && !r.feasible);
    }

    #[test]
    fn four_cycle_alternates() {
        let g = cycle_graph(&[1, 2, -1, -2], -2);
        let PointResult::Feasible(x) = nondegenerate_point(&g).unwrap() else { panic!() };
        let y0 = x.y[0].clone();
        assert_eq!(x.y, vec![y0.clone(), -y0.clone(), y0.clone(), -y0]);
        assert_eq!(x.y.len(), rq(&[1, -1, 1, -1]).len());
    }

    #[test]
    fn odd_cycle_rejected() {
        assert_eq!(solution_space(&cycle_graph(&[1, 1, 1], -2)).unwrap_err(), CurrentError::NotBipartite);
    }

    fn arb_bipartite() -> impl Strategy<Value = ConfigGraph> {
        (2usize..4, proptest::collection::vec((0usize..3, 0usize..3, -3i64..4), 1..6)).prop_filter_map(
            "valid bipartite",
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
                ConfigGraph::from_parts(&vs, &es).ok().filter(|g| bicoloring(g).is_some())
            },
        )
    }

    proptest! {
        #[test]
        fn solutions_satisfy_every_simple_cycle(g in arb_bipartite()) {
            for s in solution_space(&g).unwrap() {
                for v in 0..g.num_vertices() { prop_assert!(vertex_sum(&g, &s, v).is_zero()); }
                for c in simple_cycles(&g) { prop_assert!(cycle_sum(&g, &s, &c).is_zero()); }
                // scaling keeps a solution
                let t = CurrentSolution { y: s.y.iter().map(|v| v * q(-3)).collect(), eps: s.eps.clone() };
                for c in simple_cycles(&g) { prop_assert!(cycle_sum(&g, &t, &c).is_zero()); }
            }
            // vertex rows sum to zero under symmetry
            let eqs = equations(&g).unwrap();
            for e in 0..g.num_edges() {
                let s = (0..g.num_vertices()).fold(BigRational::zero(), |s, v| s + &eqs[v][e]);
                prop_assert!(s.is_zero());
            }
            prop_assert!(crosscheck_survival(&g).unwrap().agree);
        }
    }
}
