//! Crossing graph, product decomposition, deep halfspaces, collapsing,
//! facing triples and corner hyperplanes.

use std::collections::{HashMap, VecDeque};

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::complex::{ComplexError, CubeBall, Explicit, Halfspace, Orientation, Provider};

/// Hyperplanes as nodes, crossing pairs as edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossingGraph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl CrossingGraph {
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes];
        for &(a, b) in &self.edges {
            out[a].push(b);
            out[b].push(a);
        }
        out
    }
}

/// Crossing graph of a ball. Fails if some pair has all four quadrants
/// inside the inner radius but no square.
pub fn crossing_graph(ball: &CubeBall) -> Result<CrossingGraph, ComplexError> {
    if let Some(&(a, b)) = ball.crossing_anomalies().first() {
        return Err(ComplexError::Provider(format!(
            "hyperplanes {} and {} have four nonempty quadrants but no square",
            ball.hyperplane_name(a),
            ball.hyperplane_name(b)
        )));
    }
    Ok(CrossingGraph { nodes: ball.num_hyperplanes(), edges: ball.crossing_pairs() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    /// Factor of each hyperplane, numbered by least member. `None` for
    /// hyperplanes too close to the rim to be placed.
    pub factor_of: Vec<Option<usize>>,
    pub factors: usize,
}

impl Decomposition {
    pub fn is_irreducible(&self) -> bool {
        self.factors <= 1
    }

    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.factor_of.len()).filter(|&h| self.factor_of[h] == Some(f)).collect()
    }
}

/// Components of the non-crossing graph.
///
/// Only pairs whose crossing square would fall inside the truncation are
/// compared; a hyperplane with no such partner in the core gets `None`.
pub fn product_decomposition(ball: &CubeBall) -> Decomposition {
    let n = ball.num_hyperplanes();
    let core: Vec<usize> = (0..n).filter(|&h| ball.relation_visible(h, h)).collect();
    let mut uf = UnionFind::<usize>::new(n);
    for (i, &h) in core.iter().enumerate() {
        for &k in &core[i + 1..] {
            if !ball.crosses(h, k) {
                uf.union(h, k);
            }
        }
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut factor_of = vec![None; n];
    for &h in &core {
        let next = ids.len();
        factor_of[h] = Some(*ids.entry(uf.find(h)).or_insert(next));
    }
    for h in 0..n {
        if factor_of[h].is_none() {
            factor_of[h] = core
                .iter()
                .find(|&&k| ball.relation_visible(h, k) && !ball.crosses(h, k))
                .and_then(|&k| factor_of[k]);
        }
    }
    Decomposition { factors: ids.len(), factor_of }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeepReport {
    pub radius: u32,
    pub deep_plus: Vec<bool>,
    pub deep_minus: Vec<bool>,
}

impl DeepReport {
    pub fn deep(&self, hs: Halfspace) -> bool {
        match hs.orient {
            Orientation::Plus => self.deep_plus[hs.hyp],
            Orientation::Minus => self.deep_minus[hs.hyp],
        }
    }

    pub fn essential(&self, h: usize) -> bool {
        self.deep_plus[h] && self.deep_minus[h]
    }
}

/// Which halfspaces contain a ball of radius `r` lying entirely in the truncation.
pub fn deep_report(ball: &CubeBall, r: u32) -> Result<DeepReport, ComplexError> {
    if let Some(inner) = ball.inner_radius() {
        if 2 * r > inner {
            return Err(ComplexError::Truncation(format!("depth {r} exceeds half the inner radius {inner}")));
        }
    }
    let n = ball.num_hyperplanes();
    let flags: Vec<(bool, bool)> = (0..n)
        .into_par_iter()
        .map(|h| (contains_ball(ball, h, Orientation::Plus, r), contains_ball(ball, h, Orientation::Minus, r)))
        .collect();
    Ok(DeepReport {
        radius: r,
        deep_plus: flags.iter().map(|f| f.0).collect(),
        deep_minus: flags.iter().map(|f| f.1).collect(),
    })
}

fn contains_ball(ball: &CubeBall, h: usize, side: Orientation, r: u32) -> bool {
    let fits = |x: usize| ball.outer_radius().is_none_or(|out| ball.depth(x) + r <= out);
    let mut dist: HashMap<usize, u32> = HashMap::new();
    let mut q = VecDeque::new();
    for v in ball.carrier(h).expect("hyperplane of the ball") {
        if ball.side(h, v) == side {
            dist.insert(v, 0);
            q.push_back(v);
        }
    }
    while let Some(x) = q.pop_front() {
        let dx = dist[&x];
        if dx >= r {
            if fits(x) {
                return true;
            }
            continue;
        }
        for (y, _) in ball.neighbors(x) {
            if ball.side(h, y) == side && !dist.contains_key(&y) {
                dist.insert(y, dx + 1);
                q.push_back(y);
            }
        }
    }
    false
}

/// Quotient of a ball by a set of hyperplanes.
pub struct Collapsed {
    pub ball: CubeBall,
    /// Image of each vertex of the original ball.
    pub map: Vec<usize>,
    /// Original hyperplane of each hyperplane of the quotient.
    pub hyperplane_origin: Vec<usize>,
}

/// Collapse the hyperplanes in `s`: vertices are identified when they differ
/// only across hyperplanes of `s`.
pub fn collapse(ball: &CubeBall, s: &[usize]) -> Result<Collapsed, ComplexError> {
    let mut drop = vec![false; ball.num_hyperplanes()];
    for &h in s {
        *drop.get_mut(h).ok_or(ComplexError::UnknownHyperplane(h))? = true;
    }
    let mut class: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut names = Vec::new();
    let mut map = Vec::with_capacity(ball.len());
    for v in 0..ball.len() {
        let key: Vec<u32> = ball.plus_set(v).iter().copied().filter(|&h| !drop[h as usize]).collect();
        let next = class.len() as u32;
        let c = *class.entry(key).or_insert_with(|| {
            names.push(ball.name(v));
            next
        });
        map.push(c);
    }
    let mut edges = Vec::new();
    for &(a, b) in ball.edges() {
        let (p, q) = (map[a as usize], map[b as usize]);
        if p != q {
            edges.push((p, q));
        }
    }
    let e = Explicit::new(names, &edges, Vec::new(), map[0], Some(ball.provider().dimension()))?;
    let out = CubeBall::complete(&Provider::explicit(e))?;
    // Quotient ids coincide with explicit vertex ids; translate to ball ids.
    let to_ball: Vec<usize> = {
        let mut t = vec![0; out.len()];
        for i in 0..out.len() {
            if let crate::complex::Vertex::Id(j) = out.vertex(i) {
                t[*j as usize] = i;
            }
        }
        t
    };
    let map: Vec<usize> = map.iter().map(|&c| to_ball[c as usize]).collect();
    let hyperplane_origin = (0..out.num_hyperplanes())
        .map(|h| {
            let e = out.hyperplane(h).edges[0] as usize;
            let (a, b) = out.edges()[e];
            let (a, b) = (a as usize, b as usize);
            let va = (0..ball.len()).find(|&v| map[v] == a).unwrap();
            let vb = ball
                .neighbors(va)
                .find(|&(w, k)| map[w] == b && !drop[k])
                .or_else(|| {
                    (0..ball.len())
                        .filter(|&v| map[v] == a)
                        .flat_map(|v| ball.neighbors(v).collect::<Vec<_>>())
                        .find(|&(w, k)| map[w] == b && !drop[k])
                })
                .expect("quotient edge lifts");
            vb.1
        })
        .collect();
    Ok(Collapsed { ball: out, map, hyperplane_origin })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FacingTriple {
    Found(usize, usize, usize),
    /// No triple among hyperplanes meeting the inner radius.
    NoneFound,
}

/// First facing triple (in hyperplane order) among trusted hyperplanes.
pub fn facing_triple_search(ball: &CubeBall) -> FacingTriple {
    let cands = trusted_hyperplanes(ball);
    let sides = |a: usize, b: usize, c: usize| -> bool {
        // Pairwise disjoint, and neither b nor c separated by a.
        match (ball.side_of_hyperplane(a, b), ball.side_of_hyperplane(a, c)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    };
    let found = cands.par_iter().enumerate().find_map_first(|(i, &a)| {
        for (j, &b) in cands.iter().enumerate().skip(i + 1) {
            if ball.disjoint_pair(a, b).is_none() {
                continue;
            }
            for &c in &cands[j + 1..] {
                if sides(a, b, c) && sides(b, a, c) && sides(c, a, b) {
                    return Some((a, b, c));
                }
            }
        }
        None
    });
    match found {
        Some((a, b, c)) => FacingTriple::Found(a, b, c),
        None => FacingTriple::NoneFound,
    }
}

/// Hyperplanes whose nearest dual edge lies inside the inner radius.
pub fn trusted_hyperplanes(ball: &CubeBall) -> Vec<usize> {
    let inner = ball.inner_radius().unwrap_or(u32::MAX);
    (0..ball.num_hyperplanes()).filter(|&h| ball.hyperplane(h).distance < inner).collect()
}

/// Whether every dual edge of `k` inside the ball lies in all the given halfspaces.
pub fn hyperplane_inside(ball: &CubeBall, k: usize, sector: &[Halfspace]) -> bool {
    sector.iter().all(|s| s.hyp != k && ball.side_of_hyperplane(s.hyp, k) == Some(s.orient))
        && ball
            .carrier(k)
            .expect("hyperplane of the ball")
            .into_iter()
            .all(|v| sector.iter().all(|s| ball.side(s.hyp, v) == s.orient))
}

/// Corner search: hyperplanes in two diagonally opposite quadrants of `h1`, `h2`.
pub fn corner_hyperplane(ball: &CubeBall, h1: usize, h2: usize) -> Result<Option<(Halfspace, Halfspace, usize, usize)>, ComplexError> {
    for h in [h1, h2] {
        if h >= ball.num_hyperplanes() {
            return Err(ComplexError::UnknownHyperplane(h));
        }
    }
    if !ball.crosses(h1, h2) {
        return Err(ComplexError::Config(format!(
            "hyperplanes {} and {} do not cross",
            ball.hyperplane_name(h1),
            ball.hyperplane_name(h2)
        )));
    }
    use Orientation::*;
    let cands = trusted_hyperplanes(ball);
    let first_in = |o1: Orientation, o2: Orientation| {
        let sector = [Halfspace::new(h1, o1), Halfspace::new(h2, o2)];
        cands.iter().copied().find(|&k| hyperplane_inside(ball, k, &sector))
    };
    for (o1, o2) in [(Plus, Plus), (Plus, Minus)] {
        if let (Some(a), Some(b)) = (first_in(o1, o2), first_in(!o1, !o2)) {
            return Ok(Some((Halfspace::new(h1, o1), Halfspace::new(h2, o2), a, b)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> CubeBall {
        CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap()
    }

    #[test]
    fn decompositions() {
        let g = product_decomposition(&grid3());
        assert_eq!(g.factors, 2);
        let t = product_decomposition(&CubeBall::build(&Provider::tree(3), 4).unwrap());
        assert!(t.is_irreducible());
        let p = Provider::product(vec![Provider::tree(3), Provider::tree(3)]);
        let pb = CubeBall::build(&p, 6).unwrap();
        assert_eq!(product_decomposition(&pb).factors, 2);
        assert!(crossing_graph(&pb).is_ok());
    }

    #[test]
    fn depth_flags() {
        let g = CubeBall::build(&Provider::grid(2), 12).unwrap();
        let r = deep_report(&g, 3).unwrap();
        assert!((0..g.num_hyperplanes()).filter(|&h| g.hyperplane(h).distance < 4).all(|h| r.essential(h)));
        let f = deep_report(&grid3(), 2).unwrap();
        assert!(f.deep_plus.iter().chain(&f.deep_minus).all(|d| !d));
        let t = CubeBall::build(&Provider::tree(3), 12).unwrap();
        let tr = deep_report(&t, 3).unwrap();
        assert!((0..3).all(|h| tr.essential(h)));
        assert!(deep_report(&t, 6).is_err());
    }

    #[test]
    fn collapse_grid_column() {
        let b = grid3();
        let v = (0..4).find(|&h| b.hyperplane_name(h) == "0_0~1_0").unwrap();
        let c = collapse(&b, &[v]).unwrap();
        assert_eq!(c.ball.len(), 6);
        assert_eq!(c.ball.num_hyperplanes(), 3);
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(collapse(&b, &all).unwrap().ball.len(), 1);
        for x in 0..9 {
            for y in 0..9 {
                assert!(c.ball.distance(c.map[x], c.map[y]) <= b.distance(x, y));
            }
        }
    }

    #[test]
    fn facing_triples() {
        let t = CubeBall::build(&Provider::tree(3), 3).unwrap();
        assert_eq!(facing_triple_search(&t), FacingTriple::Found(0, 1, 2));
        let g = CubeBall::build(&Provider::grid(2), 6).unwrap();
        assert_eq!(facing_triple_search(&g), FacingTriple::NoneFound);
        let p = CubeBall::build(&Provider::product(vec![Provider::tree(3), Provider::tree(3)]), 8).unwrap();
        let FacingTriple::Found(a, b, c) = facing_triple_search(&p) else { panic!() };
        let d = product_decomposition(&p);
        assert!(d.factor_of[a] == d.factor_of[b] && d.factor_of[b] == d.factor_of[c]);
    }

    #[test]
    fn corners() {
        let g = CubeBall::build(&Provider::grid(2), 6).unwrap();
        let (x, y) = g.crossing_pairs()[0];
        assert_eq!(corner_hyperplane(&g, x, y).unwrap(), None);
        let b = grid3();
        let (x, y) = b.crossing_pairs()[0];
        assert_eq!(corner_hyperplane(&b, x, y).unwrap(), None);
        let p4 = Provider::raag(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("c", "d")]).unwrap();
        let r = CubeBall::build(&p4, 8).unwrap();
        let (x, y) = r.crossing_pairs()[0];
        let (s1, s2, k1, k2) = corner_hyperplane(&r, x, y).unwrap().expect("corner in an irreducible raag");
        assert!(hyperplane_inside(&r, k1, &[s1, s2]));
        assert!(hyperplane_inside(&r, k2, &[s1.star(), s2.star()]));
        let t = CubeBall::build(&Provider::tree(3), 4).unwrap();
        assert!(corner_hyperplane(&t, 0, 1).is_err());
    }
}
