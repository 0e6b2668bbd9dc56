//! BKN equations: verification, perturbation from currents, Newton
//! refinement, affine/general conversion, θ classes and the NPC decision.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::config_graph::{bicoloring, charges, cycle_basis, ConfigGraph, End};
use crate::current_solver::{nondegenerate_point, CurrentError, CurrentSolution, PointResult};
use crate::linalg::q;

#[derive(Debug, Error, PartialEq)]
pub enum BknError {
    #[error("malformed candidate: {0}")]
    MalformedCandidate(String),
    #[error("current solution vanishes at edge {0}")]
    DegenerateInput(usize),
    #[error("potentials disagree across edge {0}")]
    PotentialInconsistency(usize),
    #[error("Newton did not converge: best residual {best_residual:e} after {iterations} iterations")]
    NoConvergence { best_residual: f64, iterations: usize, best: BknCandidate },
    #[error("nondegeneracy margin lost (min 1-|γ| = {0:e})")]
    MarginLoss(f64),
    #[error("vertex weight of vertex {0} is not positive")]
    ZeroVertexWeight(usize),
    #[error("log-ratios do not close up around a cycle through edge {0}")]
    CycleInconsistent(usize),
    #[error("degenerate candidate (γ = ±1 at edge {0})")]
    DegenerateCandidate(usize),
    #[error(transparent)]
    Current(#[from] CurrentError),
}

/// Candidate in the (t, ω) parametrization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BknCandidate {
    pub t: Vec<f64>,
    /// ω per edge and side.
    pub omega: Vec<[f64; 2]>,
}

/// cos(√z), with the even series near 0.
pub fn cos_sqrt(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z / 2.0 + z * z / 24.0 - z * z * z / 720.0
    } else if z >= 0.0 {
        z.sqrt().cos()
    } else {
        (-z).sqrt().cosh()
    }
}

/// d/dz cos(√z) = −sin(√z)/(2√z).
fn dcos_sqrt(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        -0.5 + z / 12.0 - z * z / 240.0
    } else {
        let r = z.sqrt();
        -r.sin() / (2.0 * r)
    }
}

/// Gudermannian, a stable form of arccos(sech y).
pub fn gd(y: f64) -> f64 {
    y.abs().sinh().atan()
}

impl BknCandidate {
    pub fn trivial(g: &ConfigGraph) -> Self {
        let w = PI * PI / 8.0;
        BknCandidate { t: vec![0.0; g.num_vertices()], omega: vec![[w, w]; g.num_edges()] }
    }
    pub fn w(&self, e: usize) -> f64 {
        self.omega[e][0] + self.omega[e][1]
    }
    pub fn gamma(&self, e: usize) -> f64 {
        cos_sqrt(self.w(e))
    }
    pub fn u(&self, g: &ConfigGraph, d: End) -> f64 {
        (self.t[g.vertex_of(d)] - self.t[g.vertex_of(d.bar())]).exp()
    }
    pub fn margin(&self) -> f64 {
        (0..self.omega.len()).map(|e| 1.0 - self.gamma(e).abs()).fold(f64::INFINITY, f64::min)
    }
    fn check(&self, g: &ConfigGraph) -> Result<(), BknError> {
        if self.t.len() != g.num_vertices() || self.omega.len() != g.num_edges() {
            return Err(BknError::MalformedCandidate("wrong number of entries".into()));
        }
        if self.t.iter().any(|x| !x.is_finite()) || self.omega.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(BknError::MalformedCandidate("non-finite value or negative ω".into()));
        }
        Ok(())
    }
}

/// Vertex residuals Σ(1 − uγ)/b, computed as k_v − Σ uγ/b with the exact charge.
pub fn vertex_residuals(g: &ConfigGraph, c: &BknCandidate) -> Vec<f64> {
    let k = charges(g);
    (0..g.num_vertices())
        .map(|v| {
            let s: f64 = g.ends_at(v).iter().map(|&d| c.u(g, d) * c.gamma(d.edge) / g.b(d) as f64).sum();
            k[v].to_f64().unwrap() - s
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub vertex_residuals: Vec<f64>,
    /// Σ log u around each fundamental cycle vanishes identically: the
    /// integer coefficients of the t-variables cancel.
    pub cycles_exact: bool,
    pub symmetric: bool,
    pub margin: f64,
    pub max_residual: f64,
    pub pass: bool,
}

pub fn verify(g: &ConfigGraph, c: &BknCandidate, tol: f64) -> Result<VerifyReport, BknError> {
    c.check(g)?;
    let res = vertex_residuals(g, c);
    let cycles_exact = cycle_basis(g).cycles.iter().all(|cy| {
        let mut coeff = vec![0i64; g.num_vertices()];
        for &d in &cy.ends {
            coeff[g.vertex_of(d)] += 1;
            coeff[g.vertex_of(d.bar())] -= 1;
        }
        coeff.iter().all(|&x| x == 0)
    });
    // u_δ u_bar = 1 and γ_δ = γ_bar hold by construction; check numerically anyway
    let symmetric = g.all_ends().iter().all(|&d| (c.u(g, d) * c.u(g, d.bar()) - 1.0).abs() < 1e-12);
    let margin = c.margin();
    let max_residual = res.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pass = cycles_exact && symmetric && max_residual <= tol && margin > 0.0;
    Ok(VerifyReport { vertex_residuals: res, cycles_exact, symmetric, margin, max_residual, pass })
}

/// Potentials l with b_δ x_δ = l_{v(δ)} − l_{v(bar δ)}, l = 0 at vertex 0.
pub fn potentials(g: &ConfigGraph, x: &CurrentSolution) -> Result<Vec<BigRational>, BknError> {
    let tree = cycle_basis(g);
    let mut l = vec![BigRational::zero(); g.num_vertices()];
    for &v in tree.order.iter().skip(1) {
        let d = tree.parent_end[v].unwrap();
        let p = g.vertex_of(d.bar());
        l[v] = &l[p] + x.x(d) * q(g.b(d));
    }
    for d in g.all_ends() {
        if x.x(d) * q(g.b(d)) != &l[g.vertex_of(d)] - &l[g.vertex_of(d.bar())] {
            return Err(BknError::PotentialInconsistency(d.edge));
        }
    }
    Ok(l)
}

/// Candidate on the perturbation curve at parameter s.
pub fn from_current(g: &ConfigGraph, x: &CurrentSolution, s: f64) -> Result<BknCandidate, BknError> {
    if let Some(e) = x.y.iter().position(|v| v.is_zero()) {
        return Err(BknError::DegenerateInput(e));
    }
    let l = potentials(g, x)?;
    let t = l.iter().map(|v| v.to_f64().unwrap() * s).collect();
    let omega = (0..g.num_edges())
        .map(|e| {
            let d = End::new(e, 0);
            let y = (x.x(d) * q(g.b(d))).to_f64().unwrap() * s;
            let w = 0.5 * gd(y).powi(2);
            [w, w]
        })
        .collect();
    Ok(BknCandidate { t, omega })
}

/// Solve (A + λI) z = r for a small dense symmetric system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut r: Vec<f64>) -> Option<Vec<f64>> {
    let n = r.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        r.swap(c, p);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[i][k] -= f * a[c][k];
                }
                r[i] -= f * r[c];
            }
        }
    }
    let mut z = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * z[k]).sum();
        z[c] = (r[c] - s) / a[c][c];
    }
    Some(z)
}

/// Minimum-norm Gauss–Newton step −Jᵀ(JJᵀ)⁻¹R.
fn min_norm_step(j: &[Vec<f64>], r: &[f64]) -> Option<Vec<f64>> {
    let m = j.len();
    let n = if m == 0 { 0 } else { j[0].len() };
    let mut jj = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            jj[a][b] = (0..n).map(|k| j[a][k] * j[b][k]).sum();
        }
    }
    let tr: f64 = (0..m).map(|a| jj[a][a]).sum();
    for (a, row) in jj.iter_mut().enumerate() {
        row[a] += 1e-14 * tr.max(1e-300);
    }
    let z = solve_dense(jj, r.to_vec())?;
    Some((0..n).map(|k| -(0..m).map(|a| j[a][k] * z[a]).sum::<f64>()).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn in_open_range(w: f64) -> bool {
    w > 0.0 && w < PI * PI
}

/// Damped minimum-norm Gauss–Newton on W_e = ω_δ + ω_bar and t (t at
/// vertex 0 pinned). With t fixed the system is linear in γ and singular
/// around even cycles, so t has to move too.
pub fn newton_refine(g: &ConfigGraph, cand: &BknCandidate, tol: f64) -> Result<BknCandidate, BknError> {
    cand.check(g)?;
    let m0 = cand.margin();
    if m0 <= 0.0 {
        return Err(BknError::MarginLoss(m0));
    }
    newton_core(g, cand, tol, true, 60)
}

fn newton_core(
    g: &ConfigGraph,
    cand: &BknCandidate,
    tol: f64,
    move_t: bool,
    max_iter: usize,
) -> Result<BknCandidate, BknError> {
    let nv = g.num_vertices();
    let ne = g.num_edges();
    let mut cur = cand.clone();
    let mut res = vertex_residuals(g, &cur);
    let mut norm = max_abs(&res);
    let mut it = 0;
    while norm > tol && it < max_iter {
        it += 1;
        // columns: W_e, then t_1..t_{nv-1} when moving t
        let ncol = ne + if move_t { nv - 1 } else { 0 };
        let mut jac = vec![vec![0.0; ncol]; nv];
        for v in 0..nv {
            for d in g.ends_at(v) {
                let e = d.edge;
                let u = cur.u(g, d);
                let b = g.b(d) as f64;
                jac[v][e] -= u * dcos_sqrt(cur.w(e)) / b;
                if move_t {
                    let gam = cur.gamma(e);
                    let (a, w) = (g.vertex_of(d), g.vertex_of(d.bar()));
                    if a > 0 {
                        jac[v][ne + a - 1] -= u * gam / b;
                    }
                    if w > 0 {
                        jac[v][ne + w - 1] += u * gam / b;
                    }
                }
            }
        }
        let Some(step) = min_norm_step(&jac, &res) else { break };
        let mut lam = 1.0;
        let mut accepted = false;
        while lam > 1e-6 {
            let mut next = cur.clone();
            let mut ok = true;
            for e in 0..ne {
                let w = cur.w(e) + lam * step[e];
                if !in_open_range(w) {
                    ok = false;
                    break;
                }
                next.omega[e] = [w / 2.0, w / 2.0];
            }
            if ok && move_t {
                for v in 1..nv {
                    next.t[v] += lam * step[ne + v - 1];
                }
            }
            if ok {
                let r2 = vertex_residuals(g, &next);
                let n2 = max_abs(&r2);
                if l2(&r2) < l2(&res) || n2 <= tol {
                    cur = next;
                    res = r2;
                    norm = n2;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let margin = cur.margin();
    if margin <= 0.0 {
        return Err(BknError::MarginLoss(margin));
    }
    if norm <= tol {
        Ok(cur)
    } else {
        Err(BknError::NoConvergence { best_residual: norm, iterations: it, best: cur })
    }
}

/// Exact affine data: u and γ per edge and side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AffineData {
    pub u: Vec<[BigRational; 2]>,
    pub gamma: Vec<[BigRational; 2]>,
}

/// General form: a weight per vertex and γ per edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneralData {
    pub a: Vec<BigRational>,
    pub gamma: Vec<BigRational>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum BknForm {
    Affine(AffineData),
    General(GeneralData),
}

fn sgn(b: i64) -> BigRational {
    q(b.signum())
}

/// Convert between the general and the affine forms.
pub fn affine_general_convert(g: &ConfigGraph, data: &BknForm) -> Result<BknForm, BknError> {
    match data {
        BknForm::General(gd) => {
            if let Some(v) = gd.a.iter().position(|a| !a.is_positive()) {
                return Err(BknError::ZeroVertexWeight(v));
            }
            let u = g
                .edges
                .iter()
                .map(|e| [&gd.a[e.ends[1]] / &gd.a[e.ends[0]], &gd.a[e.ends[0]] / &gd.a[e.ends[1]]])
                .collect();
            let gamma = g
                .edges
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let x = sgn(e.b) * &gd.gamma[i];
                    [x.clone(), x]
                })
                .collect();
            Ok(BknForm::Affine(AffineData { u, gamma }))
        }
        BknForm::Affine(ad) => {
            let tree = cycle_basis(g);
            let mut a = vec![BigRational::one(); g.num_vertices()];
            for &v in tree.order.iter().skip(1) {
                let d = tree.parent_end[v].unwrap();
                // u at the parent's end is a_v / a_parent
                let pd = d.bar();
                a[v] = &a[g.vertex_of(pd)] * &ad.u[pd.edge][pd.side as usize];
            }
            for d in g.all_ends() {
                let expect = &a[g.vertex_of(d.bar())] / &a[g.vertex_of(d)];
                if ad.u[d.edge][d.side as usize] != expect {
                    return Err(BknError::CycleInconsistent(d.edge));
                }
                if ad.gamma[d.edge][0] != ad.gamma[d.edge][1] {
                    return Err(BknError::MalformedCandidate(format!("γ not symmetric on edge {}", d.edge)));
                }
            }
            let gamma = g.edges.iter().enumerate().map(|(i, e)| sgn(e.b) * &ad.gamma[i][0]).collect();
            Ok(BknForm::General(GeneralData { a, gamma }))
        }
    }
}

/// Exact vertex residuals Σ(1 − uγ)/b of affine data.
pub fn affine_residuals(g: &ConfigGraph, ad: &AffineData) -> Vec<BigRational> {
    (0..g.num_vertices())
        .map(|v| {
            g.ends_at(v).iter().fold(BigRational::zero(), |s, &d| {
                let (e, k) = (d.edge, d.side as usize);
                s + (BigRational::one() - &ad.u[e][k] * &ad.gamma[e][k]) / q(g.b(d))
            })
        })
        .collect()
}

/// Affine data with constant γ and ratio u = U at one vertex of a
/// two-vertex graph (1/U at the other).
pub fn two_vertex_affine(g: &ConfigGraph, gamma: BigRational, ratio: BigRational) -> AffineData {
    let u = g
        .edges
        .iter()
        .map(|e| if e.ends[0] == 0 { [ratio.clone(), ratio.recip()] } else { [ratio.recip(), ratio.clone()] })
        .collect();
    AffineData { u, gamma: vec![[gamma.clone(), gamma]; g.num_edges()] }
}

/// θ± in (f, z) coordinates for one end.
pub fn theta_pair<T>(b: i64, u: T, gamma: T) -> [[T; 2]; 2]
where
    T: Num + Clone + FromPrimitive,
{
    let one = T::one();
    let two = T::from_i64(2).unwrap();
    let bt = T::from_i64(b).unwrap();
    let plus = (one.clone() + gamma.clone()) / (two.clone() * bt.clone());
    let minus = (one.clone() - gamma) / (two * bt.clone());
    [
        [plus.clone() * (one.clone() + u.clone()), plus * bt.clone()],
        [minus.clone() * (one - u), minus * bt],
    ]
}

/// I((a,b),(c,d)) with I(f,z) = 1.
fn form<T: Num + Clone>(x: &[T; 2], y: &[T; 2]) -> T {
    x[0].clone() * y[1].clone() - x[1].clone() * y[0].clone()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaReport<T> {
    /// θ⁺, θ⁻ per edge and side.
    pub theta: Vec<[[[T; 2]; 2]; 2]>,
    pub positivity: bool,
    /// max |I(f,θ) − 1|.
    pub unit_dev: T,
    /// max over vertices |Σ I(θ, φf̄/b) − k_v|.
    pub charge_dev: T,
    /// max |(|I(φf̄,θ±)/I(f,θ±)|) − u|.
    pub ratio_dev: T,
    pub independent: bool,
}

fn theta_report<T>(g: &ConfigGraph, u: impl Fn(End) -> T, gamma: impl Fn(End) -> T, k: Vec<T>) -> ThetaReport<T>
where
    T: Num + Clone + FromPrimitive + Signed + PartialOrd,
{
    let zero = T::zero();
    let f = [T::one(), T::zero()];
    let mut theta = Vec::new();
    let mut positivity = true;
    let mut independent = true;
    let mut unit_dev = zero.clone();
    let mut ratio_dev = zero.clone();
    let maxa = |m: &mut T, x: T| {
        if x.abs() > *m {
            *m = x.abs();
        }
    };
    for e in 0..g.num_edges() {
        let mut per = Vec::new();
        for s in 0..2u8 {
            let d = End::new(e, s);
            let b = g.b(d);
            let th = theta_pair(b, u(d), gamma(d));
            let phi = [T::one(), T::from_i64(b).unwrap()];
            for t in &th {
                let ift = form(&f, t);
                positivity &= ift > zero;
                let r = form(&phi, t) / ift;
                maxa(&mut ratio_dev, r.abs() - u(d));
            }
            independent &= !form(&th[0], &th[1]).is_zero();
            let sum = [th[0][0].clone() + th[1][0].clone(), th[0][1].clone() + th[1][1].clone()];
            maxa(&mut unit_dev, form(&f, &sum) - T::one());
            per.push(th);
        }
        theta.push([per[0].clone(), per[1].clone()]);
    }
    let mut charge_dev = zero;
    for v in 0..g.num_vertices() {
        let mut s = T::zero();
        for d in g.ends_at(v) {
            let b = g.b(d);
            let th = &theta[d.edge][d.side as usize];
            let sum = [th[0][0].clone() + th[1][0].clone(), th[0][1].clone() + th[1][1].clone()];
            let phi = [T::one(), T::from_i64(b).unwrap()];
            s = s + form(&sum, &phi) / T::from_i64(b).unwrap();
        }
        maxa(&mut charge_dev, s - k[v].clone());
    }
    ThetaReport { theta, positivity, unit_dev, charge_dev, ratio_dev, independent }
}

/// θ classes of a candidate and the deviations of the four identities.
pub fn theta_classes(g: &ConfigGraph, c: &BknCandidate) -> Result<ThetaReport<f64>, BknError> {
    c.check(g)?;
    if let Some(e) = (0..g.num_edges()).find(|&e| c.gamma(e).abs() >= 1.0) {
        return Err(BknError::DegenerateCandidate(e));
    }
    let k = charges(g).iter().map(|x| x.to_f64().unwrap()).collect();
    Ok(theta_report(g, |d| c.u(g, d), |d| c.gamma(d.edge), k))
}

/// Exact θ identities for rational affine data.
pub fn theta_classes_exact(g: &ConfigGraph, ad: &AffineData) -> Result<ThetaReport<BigRational>, BknError> {
    for (e, gm) in ad.gamma.iter().enumerate() {
        if gm[0].abs() >= BigRational::one() {
            return Err(BknError::DegenerateCandidate(e));
        }
    }
    Ok(theta_report(
        g,
        |d| ad.u[d.edge][d.side as usize].clone(),
        |d| ad.gamma[d.edge][d.side as usize].clone(),
        charges(g),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "NPC_CERTIFIED")]
    NpcCertified,
    #[serde(rename = "NOT_NPC")]
    NotNpc,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Provenance {
    #[serde(rename = "current+perturbation")]
    CurrentPerturbation,
    #[serde(rename = "numeric-search")]
    NumericSearch,
    #[serde(rename = "all-positive-rule")]
    AllPositiveRule,
    #[serde(rename = "anosov-rule")]
    AnosovRule,
    #[serde(rename = "none")]
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub provenance: Provenance,
    pub candidate: Option<BknCandidate>,
    pub report: Option<VerifyReport>,
    pub current: Option<CurrentSolution>,
    pub perturbation_s: Option<f64>,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct DecideOptions {
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for DecideOptions {
    fn default() -> Self {
        DecideOptions { tol: 1e-10, max_halvings: 30 }
    }
}

/// Deterministic starting points for the numeric search.
fn search_starts(g: &ConfigGraph) -> Vec<BknCandidate> {
    let nv = g.num_vertices();
    let ne = g.num_edges();
    let tvals: &[f64] = if nv <= 3 { &[0.0, 0.5, -0.5, 1.0, -1.0] } else { &[0.0, 0.7, -0.7] };
    let gammas: [f64; 3] = [0.0, 0.5, -0.5];
    let mut starts = Vec::new();
    let free = nv - 1;
    let total = tvals.len().pow(free as u32).min(243);
    for gm in gammas {
        let w = gm.acos().powi(2);
        for idx in 0..total {
            let mut t = vec![0.0; nv];
            let mut r = idx;
            for tv in t.iter_mut().skip(1) {
                *tv = tvals[r % tvals.len()];
                r /= tvals.len();
            }
            starts.push(BknCandidate { t, omega: vec![[w / 2.0, w / 2.0]; ne] });
        }
    }
    starts
}

pub fn decide_npc(g: &ConfigGraph, opts: DecideOptions) -> Result<Decision, BknError> {
    bicoloring(g).ok_or(BknError::Current(CurrentError::NotBipartite))?;
    let mut diagnostics = Vec::new();
    let signs: Vec<i64> = g.edges.iter().map(|e| e.b.signum()).collect();
    let point = nondegenerate_point(g)?;
    if signs.iter().all(|&s| s == signs[0]) {
        let current = match &point {
            PointResult::Infeasible(w) => {
                diagnostics.push(format!("current equations infeasible at edge {}", g.edges[w.end.edge].id));
                None
            }
            PointResult::Feasible(x) => Some(x.clone()),
        };
        return Ok(Decision {
            verdict: Verdict::NotNpc,
            provenance: Provenance::AllPositiveRule,
            candidate: None,
            report: None,
            current,
            perturbation_s: None,
            diagnostics,
        });
    }
    if let PointResult::Feasible(x) = &point {
        let maxbx = g
            .all_ends()
            .iter()
            .map(|&d| (x.x(d) * q(g.b(d))).abs().to_f64().unwrap())
            .fold(0.0f64, f64::max);
        let mut s = 1.0 / (4.0 * maxbx);
        for _ in 0..opts.max_halvings {
            let cand = from_current(g, x, s)?;
            if cand.margin() > 0.0 {
                match newton_refine(g, &cand, opts.tol * 0.1) {
                    Ok(c) => {
                        let rep = verify(g, &c, opts.tol)?;
                        if rep.pass {
                            return Ok(Decision {
                                verdict: Verdict::NpcCertified,
                                provenance: Provenance::CurrentPerturbation,
                                candidate: Some(c),
                                report: Some(rep),
                                current: Some(x.clone()),
                                perturbation_s: Some(s),
                                diagnostics,
                            });
                        }
                    }
                    Err(e) => diagnostics.push(format!("s = {s:e}: {e}")),
                }
            }
            s /= 2.0;
        }
    } else if let PointResult::Infeasible(w) = &point {
        diagnostics.push(format!("current equations infeasible at edge {}", g.edges[w.end.edge].id));
    }
    for start in search_starts(g) {
        if let Ok(c) = newton_core(g, &start, opts.tol * 0.1, true, 80) {
            let rep = verify(g, &c, opts.tol)?;
            if rep.pass && rep.margin > 1e-9 {
                return Ok(Decision {
                    verdict: Verdict::NpcCertified,
                    provenance: Provenance::NumericSearch,
                    candidate: Some(c),
                    report: Some(rep),
                    current: None,
                    perturbation_s: None,
                    diagnostics,
                });
            }
        }
    }
    diagnostics.push("numeric search found no nondegenerate solution".into());
    Ok(Decision {
        verdict: Verdict::Unknown,
        provenance: Provenance::None,
        candidate: None,
        report: None,
        current: None,
        perturbation_s: None,
        diagnostics,
    })
}

/// Leading s³ coefficient of the perturbation residual at v:
/// −Σ (b x)³ / (3 b).
pub fn cubic_coefficient(g: &ConfigGraph, x: &CurrentSolution, v: usize) -> BigRational {
    g.ends_at(v).iter().fold(BigRational::zero(), |s, &d| {
        let y = x.x(d) * q(g.b(d));
        s - &y * &y * &y / q(3 * g.b(d))
    })
}

pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_graph::{cycle_graph, two_vertex};
    use crate::current_solver::nondegenerate_point;
    use proptest::prelude::*;

    fn four_cycle_solution() -> (ConfigGraph, CurrentSolution) {
        let g = cycle_graph(&[1, 2, -1, -2], -2);
        let PointResult::Feasible(mut x) = nondegenerate_point(&g).unwrap() else { panic!() };
        // normalize to a = 1 at e1
        let a = x.y[0].clone();
        x.y = x.y.iter().map(|v| v / &a).collect();
        (g, x)
    }

    #[test]
    fn cos_sqrt_series_matches() {
        for z in [0.0, 1e-6, 5e-5, 9.9e-5] {
            assert!((cos_sqrt(z) - z.sqrt().cos()).abs() < 1e-15);
        }
        assert!((gd(0.3) - (1.0 / 0.3f64.cosh()).acos()).abs() < 1e-14);
    }

    #[test]
    fn trivial_solution_exact() {
        let g = two_vertex(&[2, -3, -6]);
        let ad = two_vertex_affine(&g, BigRational::zero(), BigRational::one());
        assert!(affine_residuals(&g, &ad).iter().all(|r| r.is_zero()));
        let rep = verify(&g, &BknCandidate::trivial(&g), 1e-15).unwrap();
        assert!(rep.pass);
        let th = theta_classes_exact(&g, &ad).unwrap();
        assert!(th.unit_dev.is_zero() && th.charge_dev.is_zero() && th.ratio_dev.is_zero());
        // θ± = ((1±1)/2b)·f + z/2 at u = 1, γ = 0
        let t = &th.theta[0][0];
        assert_eq!(t[0], [rational(1, 2), rational(1, 2)]);
        assert_eq!(t[1], [BigRational::zero(), rational(1, 2)]);
    }

    #[test]
    fn trivial_fails_with_charge() {
        let g = two_vertex(&[2, 3, 6]);
        let rep = verify(&g, &BknCandidate::trivial(&g), 1e-10).unwrap();
        assert!(!rep.pass);
        assert!((rep.vertex_residuals[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_unit_closed_form_balances_one_vertex_only() {
        let g = two_vertex(&[1, 1, -1]);
        let ad = two_vertex_affine(&g, rational(9, 10), rational(10, 9));
        let r = affine_residuals(&g, &ad);
        assert!(r[0].is_zero());
        assert_eq!(r[1], rational(19, 100));
        // the symmetric two-vertex solutions have U = 1 and Σγ/b = k
        let ok = AffineData {
            u: vec![[BigRational::one(), BigRational::one()]; 3],
            gamma: vec![[rational(1, 2), rational(1, 2)], [rational(1, 2), rational(1, 2)], [BigRational::zero(), BigRational::zero()]],
        };
        assert!(affine_residuals(&g, &ok).iter().all(|x| x.is_zero()));
        let th = theta_classes_exact(&g, &ok).unwrap();
        assert!(th.unit_dev.is_zero() && th.charge_dev.is_zero() && th.ratio_dev.is_zero() && th.positivity);
    }

    #[test]
    fn affine_general_round_trip() {
        let g = two_vertex(&[1, 1, -1]);
        let gen = GeneralData { a: vec![rational(10, 9), BigRational::one()], gamma: vec![rational(9, 10), rational(9, 10), rational(-9, 10)] };
        let BknForm::Affine(ad) = affine_general_convert(&g, &BknForm::General(gen.clone())).unwrap() else { panic!() };
        assert!(ad.gamma.iter().all(|x| x[0] == rational(9, 10)));
        let BknForm::General(back) = affine_general_convert(&g, &BknForm::Affine(ad)).unwrap() else { panic!() };
        assert_eq!(back.gamma, gen.gamma);
        assert_eq!(&back.a[0] / &back.a[1], rational(10, 9));
        let triv = affine_general_convert(&g, &BknForm::General(GeneralData { a: vec![BigRational::one(); 2], gamma: vec![BigRational::zero(); 3] })).unwrap();
        let BknForm::Affine(t) = triv else { panic!() };
        assert!(t.u.iter().flatten().all(|x| x.is_one()) && t.gamma.iter().flatten().all(|x| x.is_zero()));
        let bad = GeneralData { a: vec![BigRational::zero(), BigRational::one()], gamma: vec![BigRational::zero(); 3] };
        assert_eq!(affine_general_convert(&g, &BknForm::General(bad)), Err(BknError::ZeroVertexWeight(0)));
        let mut broken = two_vertex_affine(&g, BigRational::zero(), rational(2, 1));
        broken.u[1] = [rational(3, 1), rational(1, 3)];
        assert!(matches!(affine_general_convert(&g, &BknForm::Affine(broken)), Err(BknError::CycleInconsistent(_))));
    }

    #[test]
    fn four_cycle_perturbation() {
        let (g, x) = four_cycle_solution();
        let c = from_current(&g, &x, 0.1).unwrap();
        let r = vertex_residuals(&g, &c);
        let oracle = 0.1f64.tanh() - 0.2f64.tanh() / 2.0;
        assert!((r[0].abs() - oracle.abs()).abs() < 1e-15);
        assert!((r[0].abs() - 9.8033e-4).abs() < 1e-6);
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&s| vertex_residuals(&g, &from_current(&g, &x, s).unwrap())[0] / (s * s * s))
            .collect();
        for w in ratios.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 0.05);
        }
        // s³ coefficient of Σ tanh(y)/b with y = bxs: Σ (bx)³/(3b), opposite sign to the residual
        let k3 = cubic_coefficient(&g, &x, 0).to_f64().unwrap();
        assert!((ratios[2] + k3).abs() / k3.abs() < 1e-3 || (ratios[2] - k3).abs() / k3.abs() < 1e-3);
        let refined = newton_refine(&g, &c, 1e-12).unwrap();
        assert!(max_abs(&vertex_residuals(&g, &refined)) <= 1e-12);
        assert!(refined.omega.iter().flatten().all(|&w| w > 0.0));
        let dt = refined.t.iter().zip(&c.t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dt < 1e-2);
    }

    #[test]
    fn two_three_six_residual_vanishes_along_curve() {
        let g = two_vertex(&[2, -3, -6]);
        let PointResult::Feasible(x) = nondegenerate_point(&g).unwrap() else { panic!() };
        for s in [0.01, 0.05] {
            let r = vertex_residuals(&g, &from_current(&g, &x, s).unwrap());
            assert!(max_abs(&r) < 1e-15);
        }
    }

    #[test]
    fn newton_fixed_point_and_margin() {
        let g = two_vertex(&[2, -3, -6]);
        let t = BknCandidate::trivial(&g);
        assert_eq!(newton_refine(&g, &t, 1e-12).unwrap(), t);
        let (g4, x) = four_cycle_solution();
        // tiny s drives γ to 1 in floating point
        let c = from_current(&g4, &x, 1e-200).unwrap();
        assert!(matches!(newton_refine(&g4, &c, 1e-12), Err(BknError::MarginLoss(_))));
    }

    #[test]
    fn decisions() {
        let a = decide_npc(&two_vertex(&[2, -3, -6]), DecideOptions::default()).unwrap();
        assert_eq!((a.verdict, a.provenance), (Verdict::NpcCertified, Provenance::CurrentPerturbation));
        let p = decide_npc(&two_vertex(&[1, 1, 1]), DecideOptions::default()).unwrap();
        assert_eq!((p.verdict, p.provenance), (Verdict::NotNpc, Provenance::AllPositiveRule));
        let d = decide_npc(&two_vertex(&[1, 1, -1]), DecideOptions::default()).unwrap();
        assert_eq!((d.verdict, d.provenance), (Verdict::NpcCertified, Provenance::NumericSearch));
        let th = theta_classes(&two_vertex(&[1, 1, -1]), d.candidate.as_ref().unwrap()).unwrap();
        assert!(th.charge_dev < 1e-10 && th.unit_dev < 1e-12 && th.ratio_dev < 1e-10 && th.positivity);
    }

    #[test]
    fn phi_is_an_involution() {
        for b in -3i64..=3 {
            let m = [[1, 0], [b, -1]];
            let sq = [[m[0][0] * m[0][0] + m[0][1] * m[1][0], m[0][0] * m[0][1] + m[0][1] * m[1][1]],
                      [m[1][0] * m[0][0] + m[1][1] * m[1][0], m[1][0] * m[0][1] + m[1][1] * m[1][1]]];
            assert_eq!(sq, [[1, 0], [0, 1]]);
        }
    }

    proptest! {
        #[test]
        fn theta_identities_hold_for_exact_solutions(n in 1i64..5, d in 1i64..5, gn in -9i64..10) {
            // any u and γ with BKN at a single end pattern: check bullets 1, 2, 4 exactly
            let u = rational(n, d);
            let gamma = rational(gn, 10);
            for b in [-3i64, -1, 2] {
                let th = theta_pair(b, u.clone(), gamma.clone());
                let f = [BigRational::one(), BigRational::zero()];
                let phi = [BigRational::one(), q(b)];
                let sum = [&th[0][0] + &th[1][0], &th[0][1] + &th[1][1]];
                prop_assert!(form(&f, &sum).is_one());
                for t in &th {
                    prop_assert!(form(&f, t).is_positive());
                    prop_assert_eq!((form(&phi, t) / form(&f, t)).abs(), u.clone());
                }
            }
        }

        #[test]
        fn cycle_residuals_exact(t in proptest::collection::vec(-2.0f64..2.0, 4), w in proptest::collection::vec(0.1f64..4.0, 4)) {
            let g = cycle_graph(&[1, 2, -1, -2], -2);
            let c = BknCandidate { t, omega: w.iter().map(|&x| [x / 2.0, x / 2.0]).collect() };
            let rep = verify(&g, &c, 1e-10).unwrap();
            prop_assert!(rep.cycles_exact && rep.symmetric);
        }
    }
}
