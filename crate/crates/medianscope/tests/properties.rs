use std::collections::{HashSet, VecDeque};
use std::sync::LazyLock;

use medianscope::boundary::{construct_nonterminating, roller_distance, Provenance, UltrafilterApprox};
use medianscope::complex::lazy::{ProductUltra, TreeRay};
use medianscope::complex::{CubeBall, Explicit, Halfspace, HypKey, Orientation, Provider, Vertex};
use medianscope::dynamics::{
    entropy_profile, sample_walks, stationary_estimate, strip_profile, strip_profile_lazy, WalkConfig,
};
use medianscope::harness::{compare_baseline, parse_spec, run_experiment, Tolerances};
use medianscope::intervalgeom::{collapse_counts, folner_profile, l1_embedding};
use medianscope::pocset::{minus, plus, Pocset};
use medianscope::structure::collapse;
use petgraph::algo::is_isomorphic;
use petgraph::graph::UnGraph;
use proptest::prelude::*;

static GRID: LazyLock<CubeBall> = LazyLock::new(|| CubeBall::with_inner_radius(&Provider::grid(2), 8).unwrap());
static RAAG: LazyLock<CubeBall> = LazyLock::new(|| {
    CubeBall::with_inner_radius(&Provider::raag(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap(), 5).unwrap()
});
static PRODUCT: LazyLock<CubeBall> = LazyLock::new(|| {
    CubeBall::with_inner_radius(&Provider::product(vec![Provider::tree(3), Provider::tree(3)]), 5).unwrap()
});
static TREE: LazyLock<CubeBall> = LazyLock::new(|| CubeBall::with_inner_radius(&Provider::tree(3), 8).unwrap());

fn balls() -> [&'static CubeBall; 4] {
    [&GRID, &RAAG, &PRODUCT, &TREE]
}

fn trusted(ball: &CubeBall, r: u32) -> Vec<usize> {
    ball.within(r)
}

fn bfs_in(ball: &CubeBall, s: usize, allowed: &dyn Fn(usize) -> bool) -> Vec<Option<usize>> {
    let mut d = vec![None; ball.len()];
    d[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for (y, _) in ball.neighbors(x) {
            if d[y].is_none() && allowed(y) {
                d[y] = Some(d[x].unwrap() + 1);
                q.push_back(y);
            }
        }
    }
    d
}

fn skeleton(ball: &CubeBall) -> UnGraph<(), ()> {
    let mut g = UnGraph::new_undirected();
    let nodes: Vec<_> = (0..ball.len()).map(|_| g.add_node(())).collect();
    for &(a, b) in ball.edges() {
        g.add_edge(nodes[a as usize], nodes[b as usize], ());
    }
    g
}

fn halfspace(pair: usize, up: bool) -> Halfspace {
    if up {
        plus(pair)
    } else {
        minus(pair)
    }
}

prop_compose! {
    fn pocset_relations()(n in 1usize..=6)
        (n in Just(n), rel in prop::collection::vec((0..n, any::<bool>(), 0..n, any::<bool>()), 0..=n + 1))
        -> (usize, Vec<(Halfspace, Halfspace)>) {
        let rel = rel.into_iter()
            .filter(|(a, _, b, _)| a != b)
            .map(|(a, sa, b, sb)| (halfspace(a, sa), halfspace(b, sb)))
            .collect();
        (n, rel)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn involution_law((n, rel) in pocset_relations()) {
        let p = Pocset::from_symmetric_relations(n, &rel).unwrap();
        for a in 0..n {
            for b in 0..n {
                for (h, k) in [(plus(a), plus(b)), (plus(a), minus(b)), (minus(a), plus(b)), (minus(a), minus(b))] {
                    prop_assert_eq!(p.leq(h, k), p.leq(k.star(), h.star()));
                }
            }
        }
    }

    #[test]
    fn lift_after_restrict((n, rel) in pocset_relations(), mask in any::<u32>()) {
        let p = Pocset::from_symmetric_relations(n, &rel).unwrap();
        prop_assume!(p.validate().is_valid());
        let k: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        for u in p.ultrafilters(1 << 12).unwrap() {
            let uk = Pocset::restrict(&u, &k);
            let lifted = p.lift_ultrafilter(&k, &uk).unwrap();
            prop_assert_eq!(Pocset::restrict(&lifted, &k), uk);
        }
    }

    #[test]
    fn dual_of_ball_pocset_is_the_ball(w in 1u32..=4, h in 1u32..=4) {
        let ball = CubeBall::complete(&Provider::explicit(Explicit::grid(w, h))).unwrap();
        let d = Pocset::of_ball(&ball).unwrap().dual_complex().unwrap();
        prop_assert!(is_isomorphic(&skeleton(&ball), &skeleton(&d.ball)));
    }

    #[test]
    fn antichain_dual_counts(n in 0usize..=6) {
        let d = Pocset::new(n).unwrap().dual_complex().unwrap();
        prop_assert_eq!(d.ball.len(), 1 << n);
        prop_assert_eq!(d.ball.edges().len(), n << n >> 1);
    }

    #[test]
    fn median_axioms(which in 0usize..4, seeds in prop::array::uniform3(any::<prop::sample::Index>())) {
        let ball = balls()[which];
        let pool = trusted(ball, ball.inner_radius().unwrap());
        let [a, b, c] = seeds.map(|s| *s.get(&pool));
        let m = ball.median(a, b, c).unwrap();
        prop_assert_eq!(ball.median(b, c, a).unwrap(), m);
        prop_assert_eq!(ball.median(c, a, b).unwrap(), m);
        prop_assert_eq!(ball.median(b, a, c).unwrap(), m);
        prop_assert_eq!(ball.median(a, a, c).unwrap(), a);
        prop_assert_eq!(ball.separators(a, b).unwrap().len(), ball.distance(a, b));
        prop_assert_eq!(ball.distance(a, m) + ball.distance(m, b), ball.distance(a, b));
        // interval(a, b) = {u : median(a, b, u) = u}, over trusted u
        let iv: HashSet<usize> = ball.vertex_interval(a, b).unwrap().members.into_iter().filter(|&u| ball.trusted(u)).collect();
        let fixed: HashSet<usize> = pool.iter().copied().filter(|&u| ball.median(a, b, u).unwrap() == u).collect();
        prop_assert_eq!(iv, fixed);
    }

    #[test]
    fn hyperplane_splits_in_two(which in 0usize..4, pick in any::<prop::sample::Index>()) {
        let ball = balls()[which];
        let inner = ball.inner_radius().unwrap();
        let hs: Vec<usize> = (0..ball.num_hyperplanes()).filter(|&h| ball.hyperplane(h).distance < inner).collect();
        let h = *pick.get(&hs);
        let pool = trusted(ball, inner);
        let mut seen = HashSet::new();
        let mut comps = 0;
        for &s in &pool {
            if seen.contains(&s) {
                continue;
            }
            comps += 1;
            let side = ball.side(h, s);
            let d = bfs_in(ball, s, &|y| ball.trusted(y) && ball.side(h, y) == side);
            seen.extend((0..ball.len()).filter(|&y| d[y].is_some()));
        }
        prop_assert_eq!(comps, 2);
    }

    #[test]
    fn product_median_is_factorwise(seeds in prop::array::uniform3(any::<prop::sample::Index>())) {
        let ball = &*PRODUCT;
        let pool = trusted(ball, 3);
        let t = &*TREE;
        let [a, b, c] = seeds.map(|s| *s.get(&pool));
        let m = ball.vertex(ball.median(a, b, c).unwrap()).clone();
        for f in 0..2 {
            let idx = |x: usize| t.index_of(&ball.vertex(x).parts()[f]).unwrap();
            let mf = t.median(idx(a), idx(b), idx(c)).unwrap();
            prop_assert_eq!(t.vertex(mf), &m.parts()[f]);
        }
    }

    #[test]
    fn collapse_is_lipschitz_and_two_to_one(which in 0usize..3, pick in any::<prop::sample::Index>(),
                                           pairs in prop::collection::vec(prop::array::uniform2(any::<prop::sample::Index>()), 20)) {
        let ball = balls()[which];
        let inner = ball.inner_radius().unwrap();
        let hs: Vec<usize> = (0..ball.num_hyperplanes()).filter(|&h| ball.hyperplane(h).distance < inner).collect();
        let h = *pick.get(&hs);
        let q = collapse(ball, &[h]).unwrap();
        let pool = trusted(ball, inner);
        for [x, y] in pairs {
            let (v, w) = (*x.get(&pool), *y.get(&pool));
            prop_assert!(q.ball.distance(q.map[v], q.map[w]) <= ball.distance(v, w));
        }
        let mut fibre = std::collections::HashMap::new();
        for &v in &pool {
            *fibre.entry(q.map[v]).or_insert(0) += 1;
        }
        prop_assert!(fibre.values().all(|&n| n <= 2));
    }

    #[test]
    fn folner_bookkeeping_and_sandwich(which in 0usize..4, e in any::<prop::sample::Index>(),
                                       x in any::<prop::sample::Index>(), y in any::<prop::sample::Index>()) {
        let ball = balls()[which];
        let pool = trusted(ball, ball.inner_radius().unwrap() / 2);
        let iv = ball.vertex_interval(ball.base(), *e.get(&pool)).unwrap();
        let (v, w) = (*x.get(&iv.members), *y.get(&iv.members));
        let limit = ball.inner_radius().unwrap();
        let r_max = limit / 2;
        let fv = folner_profile(ball, &iv, v, r_max).unwrap();
        let fw = folner_profile(ball, &iv, w, limit).unwrap();
        let mut acc = 0;
        for r in 0..=r_max as usize {
            acc += fv.sphere[r];
            prop_assert_eq!(fv.ball[r], acc);
        }
        let d = ball.distance(v, w);
        for r in d + 1..=(r_max as usize).min(limit as usize - d) {
            prop_assert!(fw.ball[r - d] <= fv.ball[r] && fv.ball[r] <= fw.ball[r + d]);
        }
    }

    #[test]
    fn collapse_volume_bound(which in 0usize..3, e in any::<prop::sample::Index>(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..=3)) {
        let ball = balls()[which];
        let pool = trusted(ball, ball.inner_radius().unwrap() / 2);
        let iv = ball.vertex_interval(ball.base(), *e.get(&pool)).unwrap();
        prop_assume!(!iv.hyperplanes.is_empty());
        let mut s: Vec<usize> = picks.iter().map(|p| *p.get(&iv.hyperplanes)).collect();
        s.sort();
        s.dedup();
        for (a, b) in collapse_counts(ball, &iv, &s, 6) {
            prop_assert!(b << s.len() >= a);
        }
    }

    #[test]
    fn embedding_is_isometric(which in 0usize..4, x in any::<prop::sample::Index>(), y in any::<prop::sample::Index>()) {
        let ball = balls()[which];
        let pool = trusted(ball, ball.inner_radius().unwrap() / 2);
        let iv = ball.vertex_interval(*x.get(&pool), *y.get(&pool)).unwrap();
        let chart = l1_embedding(ball, &iv).unwrap();
        prop_assert!(chart.chains.len() <= ball.provider().dimension());
        for &u in &iv.members {
            for &v in &iv.members {
                let (cu, cv) = (chart.coordinates(u).unwrap(), chart.coordinates(v).unwrap());
                let l1: i64 = cu.iter().zip(cv).map(|(a, b)| (a - b).abs()).sum();
                prop_assert_eq!(l1 as usize, ball.distance(u, v));
            }
        }
    }

    #[test]
    fn roller_distance_is_a_pseudometric(picks in prop::array::uniform3(any::<prop::sample::Index>())) {
        let ball = &*TREE;
        let pool = trusted(ball, 6);
        let mut us: Vec<UltrafilterApprox> = picks.iter().map(|p| UltrafilterApprox::vertex(ball, *p.get(&pool))).collect();
        us.push(construct_nonterminating(ball).unwrap());
        for a in &us {
            for b in &us {
                prop_assert_eq!(roller_distance(ball, 0, a, b), roller_distance(ball, 0, b, a));
                for c in &us {
                    prop_assert!(roller_distance(ball, 0, a, c) <= roller_distance(ball, 0, a, b) + roller_distance(ball, 0, b, c));
                }
            }
        }
    }

    #[test]
    fn strip_ball_matches_lazy(pa in prop::collection::vec(0u16..3, 0..3), pb in prop::collection::vec(0u16..3, 0..3),
                               qa in 0u16..3, qb in 0u16..3) {
        let t = Provider::tree(3);
        let ray = |prefix: Vec<u16>, q: u16| {
            let w = prefix.iter().fold(t.base(), |x, &l| t.mul(&x, &Vertex::Word(vec![l]))).word().to_vec();
            let q = if w.last() == Some(&q) { (q + 1) % 3 } else { q };
            TreeRay::new(w, vec![q, (q + 1) % 3])
        };
        let (a, b) = (ray(pa, qa), ray(pb, qb));
        let ball = &*TREE;
        let ua = UltrafilterApprox::from_orienter(ball, &a, Provenance::Given).unwrap();
        let ub = UltrafilterApprox::from_orienter(ball, &b, Provenance::Given).unwrap();
        let sb = strip_profile(ball, &ua, &ub, 8).unwrap();
        let sl = strip_profile_lazy(&t, &a, &b, 8).unwrap();
        prop_assert_eq!(sb.generic, sl.generic);
        if let (Some(c), Some(_)) = (&sb.center, &sl.center) {
            let depth = ball.depth(ball.lookup(c).unwrap()) as usize;
            let lim = (ball.inner_radius().unwrap() as usize).saturating_sub(depth).min(8);
            prop_assert_eq!(&sb.counts[..=lim], &sl.counts[..=lim]);
            if let Some(d) = sl.degree {
                prop_assert!(d <= 1.0 + 0.25);
            }
        }
    }
}

#[test]
fn stationary_complements_sum_to_one() {
    let t = Provider::tree(3);
    let cfg = WalkConfig::uniform(&t, 100, 500, 4);
    let e = sample_walks(&t, &cfg, &t.base(), 150).unwrap();
    let hs: Vec<(HypKey, Orientation)> = [vec![0], vec![1, 2], vec![2, 0, 1]]
        .into_iter()
        .flat_map(|w| [(HypKey::Tree(w.clone()), Orientation::Plus), (HypKey::Tree(w), Orientation::Minus)])
        .collect();
    let r = stationary_estimate(&e, &hs, None).unwrap();
    for pair in r.rows.chunks(2) {
        assert_eq!(pair[0].nu + pair[1].nu, 1.0);
    }
}

#[test]
fn product_strip_degree_below_dimension() {
    let t = Provider::tree(3);
    let p = Provider::product(vec![t.clone(), t]);
    let a = TreeRay::new(vec![], vec![0, 1]);
    let b = TreeRay::new(vec![2], vec![1, 0]);
    let pa = ProductUltra(vec![Box::new(a.clone()), Box::new(b.clone())]);
    let pb = ProductUltra(vec![Box::new(b), Box::new(a)]);
    let s = strip_profile_lazy(&p, &pa, &pb, 24).unwrap();
    assert!(s.degree.unwrap() <= 2.0 + 0.3);
}

#[test]
fn entropy_first_step_and_subadditivity() {
    let r = Provider::raag(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
    let e = entropy_profile(&r, &WalkConfig::uniform(&r, 0, 0, 1), 6, 1 << 20).unwrap();
    assert!((e.h[1] - 6f64.ln()).abs() < 1e-12);
    assert!(e.subadditivity_violations().is_empty());
}

#[test]
fn walks_ignore_worker_count() {
    let t = Provider::tree(3);
    let cfg = WalkConfig::uniform(&t, 60, 300, 9);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_walks(&t, &cfg, &Vertex::Word(vec![]), 80).unwrap().trajectories)
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn harness_reruns_are_identical() {
    let spec = parse_spec(
        r#"{"name": "w", "operation": "walk", "seed": 5, "provider": {"kind": "tree", "valence": 3},
            "walk": {"steps": 40, "trajectories": 50}}"#,
    )
    .unwrap();
    let a = run_experiment(&spec, None).unwrap().csv;
    let b = run_experiment(&spec, None).unwrap().csv;
    assert_eq!(a, b);
    let rep = compare_baseline(&a, &b, &Tolerances::default()).unwrap();
    assert!(rep.pass());
}
