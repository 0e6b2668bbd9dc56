//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAIL` print an honest FAIL; every other
//! criterion must pass for the test to pass.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use multitwist::bkn::{
    self, affine_residuals, decide_npc, from_current, newton_refine, rational, theta_classes, theta_classes_exact,
    two_vertex_affine, vertex_residuals, BknCandidate, DecideOptions, Decision, Provenance, Verdict,
};
use multitwist::config_graph::{
    bicoloring, bipartite_double_cover, charges, cycle_graph, min_chi, simple_cycles, two_vertex, ConfigGraph,
};
use multitwist::cube_kernel::{cover, raag_and_char_map, salvetti, Cube, CubeComplex, PermutationCover, Witness};
use multitwist::cubulation::{
    cubulate, find_isomorphism, glue_canonical, glue_with_lift, pathologies, Cubulation, Lift, DEFAULT_BUDGET,
};
use multitwist::current_solver::{
    cycle_sum, integer_values, nondegenerate_point, solution_space, vertex_sum, CurrentSolution, PointResult,
};
use multitwist::cutbind::{cut_bind_system, divisibility, surface_square_complex, CurveKind, DivTarget};
use multitwist::surface_model::{build_model, survives};

/// Two vertices with b = (1, 1, -1): the closed-form candidate misses the second vertex by 19/100.
const KNOWN_FAIL: &[usize] = &[3];

type Check = Result<String, String>;

struct Sweep {
    graphs: Vec<ConfigGraph>,
    decisions: Vec<Decision>,
    elapsed: Duration,
}

/// Multisets of size k from the edge weights.
fn weight_multisets(k: usize) -> Vec<Vec<i64>> {
    const W: [i64; 6] = [-3, -2, -1, 1, 2, 3];
    W.iter().copied().combinations_with_replacement(k).collect()
}

fn graph(vertices: usize, edges: &[(usize, usize, i64)]) -> Option<ConfigGraph> {
    let mut val = vec![0usize; vertices];
    for &(a, b, _) in edges {
        val[a] += 1;
        val[b] += 1;
    }
    let vs: Vec<(String, i64)> = (0..vertices).map(|v| (format!("v{v}"), min_chi(val[v], -1))).collect();
    let es: Vec<(String, [String; 2], i64)> = edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b, x))| (format!("e{i}"), [format!("v{a}"), format!("v{b}")], x))
        .collect();
    ConfigGraph::from_parts(&vs, &es).ok()
}

/// Every connected bipartite configuration on two or three vertices with at
/// most five edges and weights in ±{1,2,3}, genus as small as the valence allows.
fn sweep_graphs() -> Vec<ConfigGraph> {
    let mut out = Vec::new();
    for k in 1..=5 {
        for ws in weight_multisets(k) {
            let es: Vec<_> = ws.iter().map(|&b| (0, 1, b)).collect();
            out.extend(graph(2, &es));
        }
    }
    // the path v0 - v1 - v2; (k1, ws1) ≤ (k2, ws2) up to the flip
    for k1 in 1..=4 {
        for k2 in k1..=(5 - k1) {
            for w1 in weight_multisets(k1) {
                for w2 in weight_multisets(k2) {
                    if k1 == k2 && w2 < w1 {
                        continue;
                    }
                    let es: Vec<_> = w1.iter().map(|&b| (0, 1, b)).chain(w2.iter().map(|&b| (1, 2, b))).collect();
                    out.extend(graph(3, &es));
                }
            }
        }
    }
    out
}

fn run_sweep() -> Sweep {
    let t = Instant::now();
    let graphs = sweep_graphs();
    let decisions = graphs.iter().map(|g| decide_npc(g, DecideOptions::default()).unwrap()).collect();
    Sweep { graphs, decisions, elapsed: t.elapsed() }
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1() -> Check {
    let g = two_vertex(&[2, -3, -6]);
    let d = decide_npc(&g, DecideOptions::default()).map_err(|e| e.to_string())?;
    ensure(d.verdict == Verdict::NpcCertified, format!("verdict {:?}", d.verdict))?;
    let sp = solution_space(&g).map_err(|e| e.to_string())?;
    ensure(sp.len() == 1, format!("solution space has dimension {}", sp.len()))?;
    // oracle: equal b·y along every cycle forces y ∝ 1/b, and Σ 1/b = 0 here
    let oracle: Vec<BigRational> = g.edges.iter().map(|e| BigRational::one() / q(e.b)).collect();
    let ratio = &sp[0].y[0] / &oracle[0];
    ensure(sp[0].y.iter().zip(&oracle).all(|(y, o)| *y == &ratio * o), "nullspace differs from the 1/b oracle")?;
    let ints = integer_values(&sp[0]);
    let sign = if ints[0].is_negative() { -1 } else { 1 };
    let ints: Vec<BigInt> = ints.iter().map(|x| x * sign).collect();
    ensure(ints == [3, -2, -1].map(BigInt::from), format!("primitive solution {ints:?}"))?;
    let trivial = BknCandidate::trivial(&g);
    // floating point cannot represent 1/2 − 1/3 − 1/6 = 0 exactly; exactness is the rational check below
    ensure(vertex_residuals(&g, &trivial).iter().all(|r| r.abs() < 1e-15), "trivial candidate leaves a residual")?;
    let ad = two_vertex_affine(&g, BigRational::zero(), BigRational::one());
    ensure(affine_residuals(&g, &ad).iter().all(Zero::is_zero), "exact residual nonzero")?;
    Ok("NPC_CERTIFIED, solution space spanned by (3,-2,-1), trivial solution exact".into())
}

fn c2() -> Check {
    let g = two_vertex(&[1, 1, 1]);
    let d = decide_npc(&g, DecideOptions::default()).map_err(|e| e.to_string())?;
    ensure(
        (d.verdict, d.provenance) == (Verdict::NotNpc, Provenance::AllPositiveRule),
        format!("{:?} via {:?}", d.verdict, d.provenance),
    )?;
    // oracle: y ∝ 1/b needs Σ 1/b = 0, which is 3 here
    let k: BigRational = g.edges.iter().map(|e| BigRational::one() / q(e.b)).sum();
    ensure(!k.is_zero(), "closed form admits a solution")?;
    ensure(solution_space(&g).map_err(|e| e.to_string())?.is_empty(), "solution space not trivial")?;
    match nondegenerate_point(&g).map_err(|e| e.to_string())? {
        PointResult::Infeasible(w) => {
            ensure(w.basis.iter().all(|s| s.y[w.end.edge].is_zero()), "witness coordinate is alive")?;
            Ok(format!("NOT_NPC via all-positive-rule, infeasibility witness at edge {}", g.edges[w.end.edge].id))
        }
        PointResult::Feasible(_) => Err("current solver returned a solution".into()),
    }
}

fn c3() -> Check {
    let g = two_vertex(&[1, 1, -1]);
    ensure(
        matches!(nondegenerate_point(&g).map_err(|e| e.to_string())?, PointResult::Infeasible(_)),
        "current equations feasible",
    )?;
    let d = decide_npc(&g, DecideOptions::default()).map_err(|e| e.to_string())?;
    ensure(
        (d.verdict, d.provenance) == (Verdict::NpcCertified, Provenance::NumericSearch),
        format!("{:?} via {:?}", d.verdict, d.provenance),
    )?;
    // closed form at the first vertex: Σγ/b = k/U with k = 1, γ = 9/10
    let ad = two_vertex_affine(&g, rational(9, 10), rational(10, 9));
    let r = affine_residuals(&g, &ad);
    let worst = r.iter().map(|x| x.abs()).max().unwrap();
    ensure(
        worst.to_f64().unwrap() <= 1e-10,
        format!(
            "numeric search certifies NPC, but the stated candidate (γ≡0.9, ratio 10/9) has exact vertex residuals [{}, {}]",
            r[0], r[1]
        ),
    )?;
    Ok("stated candidate verifies".into())
}

fn c4() -> Check {
    let g = cycle_graph(&[1, 2, -1, -2], -2);
    let PointResult::Feasible(mut x) = nondegenerate_point(&g).map_err(|e| e.to_string())? else {
        return Err("no current solution".into());
    };
    let a = x.y[0].clone();
    x.y = x.y.iter().map(|v| v / &a).collect();
    let res = |s: f64| -> Result<f64, String> {
        Ok(vertex_residuals(&g, &from_current(&g, &x, s).map_err(|e| e.to_string())?)[0])
    };
    let r1 = res(0.1)?;
    // oracle: y = b·x·s at v1, residual Σ tanh(y)/b = tanh(s) − tanh(2s)/2
    let oracle = 0.1f64.tanh() - 0.2f64.tanh() / 2.0;
    ensure((r1.abs() - oracle.abs()).abs() < 1e-12, format!("residual {r1:e} vs tanh oracle {oracle:e}"))?;
    ensure((r1.abs() - 9.8033e-4).abs() < 1e-6, format!("residual {r1:e}"))?;
    let ratios = [1e-1, 1e-2, 1e-3].iter().map(|&s| res(s).map(|r| r / (s * s * s))).collect::<Result<Vec<_>, _>>()?;
    for w in ratios.windows(2) {
        ensure((w[0] / w[1] - 1.0).abs() < 0.05, format!("residual/s³ drifts: {ratios:?}"))?;
    }
    let c = from_current(&g, &x, 0.1).map_err(|e| e.to_string())?;
    let refined = newton_refine(&g, &c, 1e-12).map_err(|e| e.to_string())?;
    let worst = vertex_residuals(&g, &refined).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    ensure(worst <= 1e-12, format!("newton residual {worst:e}"))?;
    ensure(refined.omega.iter().flatten().all(|&w| w > 0.0), "ω left the positive range")?;
    Ok(format!("residual(0.1) = {r1:.4e}, residual/s³ ≈ {:.4}, newton {worst:.1e}", ratios[2]))
}

fn c5(sw: &Sweep) -> Check {
    let mut n = 0;
    for (g, d) in sw.graphs.iter().zip(&sw.decisions) {
        let Some(c) = &d.candidate else { continue };
        let th = theta_classes(g, c).map_err(|e| e.to_string())?;
        let ok = th.positivity && th.unit_dev <= 1e-10 && th.charge_dev <= 1e-10 && th.ratio_dev <= 1e-10;
        ensure(ok, format!("θ identities fail on {:?}", g.edges.iter().map(|e| e.b).collect::<Vec<_>>()))?;
        n += 1;
    }
    let g = two_vertex(&[2, -3, -6]);
    let th = theta_classes_exact(&g, &two_vertex_affine(&g, BigRational::zero(), BigRational::one()))
        .map_err(|e| e.to_string())?;
    ensure(th.unit_dev.is_zero() && th.charge_dev.is_zero() && th.ratio_dev.is_zero(), "exact identities fail")?;
    ensure(n > 0, "no certified candidates")?;
    Ok(format!("{n} certified candidates, exact I(f,θ) = 1 on the rational solution"))
}

fn c6(sw: &Sweep) -> Check {
    let mut feasible = 0;
    for g in &sw.graphs {
        let m = build_model(g);
        let all_survive = (0..g.num_edges()).all(|e| survives(&m, g, &m.z[e]));
        let current = matches!(nondegenerate_point(g).map_err(|e| e.to_string())?, PointResult::Feasible(_));
        ensure(
            all_survive == current,
            format!("disagreement on {:?}", g.edges.iter().map(|e| (e.ends, e.b)).collect::<Vec<_>>()),
        )?;
        feasible += usize::from(current);
    }
    ensure(sw.elapsed < Duration::from_secs(120), format!("sweep took {:.1?}", sw.elapsed))?;
    Ok(format!("{} instances, {} feasible, 100% agreement, sweep {:.1?}", sw.graphs.len(), feasible, sw.elapsed))
}

fn c7(sw: &Sweep) -> Check {
    let mut checked = 0;
    for g in &sw.graphs {
        let cycles = simple_cycles(g);
        let mut sols: Vec<CurrentSolution> = solution_space(g).map_err(|e| e.to_string())?;
        if let PointResult::Feasible(x) = nondegenerate_point(g).map_err(|e| e.to_string())? {
            sols.push(x);
        }
        for s in &sols {
            ensure((0..g.num_vertices()).all(|v| vertex_sum(g, s, v).is_zero()), "vertex equation fails")?;
            ensure(cycles.iter().all(|c| cycle_sum(g, s, c).is_zero()), "simple-cycle equation fails")?;
            checked += 1;
        }
    }
    Ok(format!("{checked} solutions satisfy every simple-cycle equation"))
}

fn c8() -> Check {
    let g = two_vertex(&[2, -3, -6]);
    let m = build_model(&g);
    let cbs = cut_bind_system(&m, &g).map_err(|e| e.to_string())?;
    ensure(cbs.xi.n == 0, format!("n = {}", cbs.xi.n))?;
    // oracle: ξ^j vanishes on the fiber of one vertex, so the curve divisibilities
    // are the primitive current values and l^j is their lcm
    let l_oracle = integer_values(&solution_space(&g).map_err(|e| e.to_string())?[0])
        .iter()
        .fold(BigInt::one(), |l, y| l.lcm(y))
        .to_usize()
        .unwrap();
    ensure(l_oracle == 6, "oracle lcm")?;
    let t = Instant::now();
    let (cub, fin) = cubulate(&m, &g, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let Cubulation::Certified(cert) = cub else { return Err("symbolic only".into()) };
    let fin = fin.ok_or("no final complex")?;
    ensure(cert.lcm == vec![l_oracle; 2], format!("lcm {:?}", cert.lcm))?;
    for j in 1..=2 {
        let global = divisibility(&cbs.xi, &cbs, j, DivTarget::Global).map_err(|e| e.to_string())?.to_usize().unwrap();
        ensure(cert.cyclic_degrees[j - 1] == l_oracle / global, format!("cyclic degrees {:?}", cert.cyclic_degrees))?;
    }
    ensure(cert.cyclic_degrees == [6, 6], format!("cyclic degrees {:?}", cert.cyclic_degrees))?;
    ensure(cert.census.cut == 3, format!("{} cut hyperplanes", cert.census.cut))?;
    let d = &cbs.decomposition;
    let pu = d.pants.iter().position(|p| p.vertex == 0).ok_or("no pants at u")?;
    let pc = cert.census.pants.iter().find(|p| p.pants == pu).ok_or("no census for P_u")?;
    ensure(pc.vertical == 3, format!("{} vertical in P_u", pc.vertical))?;
    ensure(pc.horizontal == [(2, 1)], format!("horizontal {:?}", pc.horizontal))?;
    let z1 = d.curves.iter().position(|c| c.kind == CurveKind::Jsj { edge: 0 }).ok_or("no z1")?;
    let slot = d.pants[pu].curves.iter().position(|&c| c == z1).ok_or("z1 not on P_u")?;
    let comps = pc.boundary.iter().find(|(j, s, _)| *j == 2 && *s == slot).map(|b| b.2.clone());
    ensure(comps == Some(vec![3]), format!("z1-side components {comps:?}"))?;
    // base X: cut self-osculation at every octagon vertex
    let sc = surface_square_complex(&cbs);
    let x = glue_canonical(&cbs, &sc).map_err(|e| e.to_string())?;
    let hp = x.complex.hyperplanes();
    let pa = pathologies(&x.complex, &hp);
    let at: BTreeSet<usize> = pa
        .cut_self_osculation
        .iter()
        .filter_map(|w| match w {
            Witness::SelfOsculation { vertex, .. } => Some(*vertex),
            _ => None,
        })
        .collect();
    let oct: BTreeSet<usize> = x.octagon_vertices(&sc).into_iter().collect();
    ensure(!oct.is_empty() && oct.is_subset(&at), "an octagon vertex has no cut self-osculation")?;
    ensure(cert.special && cert.witnesses.is_empty(), format!("{} witnesses remain", cert.witnesses.len()))?;
    let raag = raag_and_char_map(&fin).map_err(|e| e.to_string())?;
    ensure(raag.local_isometry && cert.local_isometry, "local isometry check fails")?;
    ensure(elapsed < Duration::from_secs(120), format!("tower took {elapsed:.1?}"))?;
    Ok(format!(
        "l = {:?}, cyclic degrees {:?}, final degree {}, {} octagon vertices osculate, SPECIAL in {elapsed:.1?}",
        cert.lcm,
        cert.cyclic_degrees,
        cert.final_degree,
        oct.len()
    ))
}

fn c9() -> Check {
    let pairs: Vec<(usize, usize)> = (0..4).tuple_combinations().collect();
    let mut graphs = 0;
    for n in 1..=4 {
        let pn: Vec<_> = pairs.iter().copied().filter(|&(a, b)| a < n && b < n).collect();
        for mask in 0..(1u32 << pn.len()) {
            let es: Vec<_> = (0..pn.len()).filter(|i| mask >> i & 1 == 1).map(|i| pn[i]).collect();
            let x = salvetti(n, &es, 2);
            ensure(x.specialness().special, format!("Salvetti complex of {es:?} not special"))?;
            graphs += 1;
        }
    }
    // Klein bottle: one square, the direction-1 sides glued with opposite orientations
    let mut klein = CubeComplex::new(1, vec![[0, 0], [0, 0]]);
    klein.cubes.push(Cube::square((0, true), (0, false), (1, true), (1, true)));
    klein.validate().map_err(|e| e.to_string())?;
    let one_sided = klein.hyperplanes().list.iter().filter(|h| !h.two_sided).count();
    ensure(one_sided == 1, format!("{one_sided} one-sided hyperplanes"))?;
    let mut torus = CubeComplex::new(1, vec![[0, 0], [0, 0]]);
    torus.cubes.push(Cube::square((0, true), (0, true), (1, true), (1, true)));
    let rose = CubeComplex::new(1, vec![[0, 0]; 3]);
    let mut covers = 0;
    for d in 1..=6usize {
        let rot = |k: usize| (0..d).map(|i| (i + k) % d).collect::<Vec<_>>();
        let rev: Vec<usize> = (0..d).rev().collect();
        for a in 0..d {
            for b in 0..d {
                let cases = [
                    (&torus, PermutationCover { d, perms: vec![rot(a), rot(b)] }),
                    (&klein, PermutationCover { d, perms: vec![rot(a), rot(b)] }),
                    (&rose, PermutationCover { d, perms: vec![rot(a), rot(b), rev.clone()] }),
                ];
                for (base, pc) in cases {
                    let Ok(cv) = cover(base, &pc) else { continue };
                    let chi = cv.complex.euler_characteristic();
                    ensure(chi == d as i64 * base.euler_characteristic(), format!("χ of a degree {d} cover is {chi}"))?;
                    covers += 1;
                }
            }
        }
    }
    Ok(format!("{graphs} Salvetti complexes special, Klein bottle one-sided, χ multiplicative on {covers} covers"))
}

fn c10(sw: &Sweep) -> Check {
    let tri = cycle_graph(&[1, 1, 1], -2);
    ensure(bicoloring(&tri).is_none(), "triangle is bipartite")?;
    let (hex, map) = bipartite_double_cover(&tri);
    ensure(hex.num_vertices() == 6 && hex.num_edges() == 6, "cover is not a hexagon")?;
    ensure(hex.edges.iter().all(|e| e.b == 2), "cover weights are not 2")?;
    let (kb, kh) = (charges(&tri), charges(&hex));
    for (v, &base) in map.vertex_map.iter().enumerate() {
        ensure(kh[v] == &kb[base] / q(2), "charges not halved")?;
    }
    let mut n = 0;
    for (g, d) in sw.graphs.iter().zip(&sw.decisions) {
        if d.verdict != Verdict::NpcCertified {
            continue;
        }
        let (c, _) = bipartite_double_cover(g);
        let dc = bkn::decide_npc(&c, DecideOptions::default()).map_err(|e| e.to_string())?;
        ensure(dc.verdict == d.verdict, "verdict changes under the double cover")?;
        n += 1;
    }
    Ok(format!("triangle → hexagon with b ≡ 2, {n} certified verdicts stable"))
}

fn c11() -> Check {
    let g = two_vertex(&[2, -3, -6]);
    let m = build_model(&g);
    let cbs = cut_bind_system(&m, &g).map_err(|e| e.to_string())?;
    let sc = surface_square_complex(&cbs);
    let (l1, l2) = (Lift::canonical(&cbs, &sc), Lift::tree_normalized(&cbs, &sc));
    ensure(l1 != l2, "lifts coincide")?;
    let a = glue_with_lift(&cbs, &sc, &l1).map_err(|e| e.to_string())?;
    let b = glue_with_lift(&cbs, &sc, &l2).map_err(|e| e.to_string())?;
    ensure(a.complex != b.complex, "glued complexes are literally equal")?;
    let iso = find_isomorphism(&a.complex, &b.complex).ok_or("no isomorphism")?;
    Ok(format!("isomorphism found on {} vertices", iso.len()))
}

fn runtime_bound(i: usize) -> Option<Duration> {
    match i {
        1 | 2 => Some(Duration::from_secs(1)),
        3 | 4 => Some(Duration::from_secs(5)),
        8 => Some(Duration::from_secs(120)),
        _ => None,
    }
}

fn main() {
    let sweep = run_sweep();
    let results: Vec<(usize, Check, Duration)> = (1..=11)
        .map(|i| {
            let t = Instant::now();
            let r = match i {
                1 => c1(),
                2 => c2(),
                3 => c3(),
                4 => c4(),
                5 => c5(&sweep),
                6 => c6(&sweep),
                7 => c7(&sweep),
                8 => c8(),
                9 => c9(),
                10 => c10(&sweep),
                _ => c11(),
            };
            let dt = t.elapsed();
            let r = match (r, runtime_bound(i)) {
                (Ok(_), Some(b)) if dt > b => Err(format!("took {dt:.2?}, bound {b:?}")),
                (r, _) => r,
            };
            (i, r, dt)
        })
        .collect();
    let mut unexpected = Vec::new();
    for (i, r, dt) in &results {
        match r {
            Ok(msg) => println!("criterion {i:>2}: PASS  {msg} [{dt:.2?}]"),
            Err(msg) => println!("criterion {i:>2}: FAIL  {msg} [{dt:.2?}]"),
        }
        if r.is_err() != KNOWN_FAIL.contains(i) {
            unexpected.push(*i);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected outcome: {unexpected:?}");
        std::process::exit(1);
    }
}
