//! Ball-truncated cube complexes: hyperplanes, sides, distance, medians,
//! intervals, sectors and carriers.

pub mod lazy;
pub mod provider;

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use petgraph::unionfind::UnionFind;
use thiserror::Error;

pub use provider::{Explicit, HypKey, Orientation, Provider, Raag, Vertex};

/// Default cap on the number of vertices of a ball.
pub const DEFAULT_VERTEX_CAP: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComplexError {
    #[error("config error: {0}")]
    Config(String),
    #[error("provider inconsistency: {0}")]
    Provider(String),
    #[error("truncation too large: more than {0} vertices")]
    TooLarge(usize),
    #[error("invalid truncation: {0}")]
    Truncation(String),
    #[error("untrusted region: vertex {0} lies outside the inner radius")]
    Untrusted(String),
    #[error("no vertex realizes the majority choice")]
    NoMedian,
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("hyperplane {0} is not in the ball")]
    UnknownHyperplane(usize),
    #[error("inconsistent ultrafilter: {0}")]
    Inconsistent(String),
}

/// A hyperplane together with a choice of side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Halfspace {
    pub hyp: usize,
    pub orient: Orientation,
}

impl Halfspace {
    pub fn new(hyp: usize, orient: Orientation) -> Self {
        Halfspace { hyp, orient }
    }

    pub fn star(self) -> Self {
        Halfspace { hyp: self.hyp, orient: !self.orient }
    }
}

impl std::fmt::Display for Halfspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.hyp, self.orient)
    }
}

/// A hyperplane class of a ball.
#[derive(Clone, Debug)]
pub struct Hyperplane {
    /// Dual edges (indices into [`CubeBall::edges`]).
    pub edges: Vec<u32>,
    /// Shortlex-least dual edge, as (nearer, farther) vertex ids.
    pub canonical: (u32, u32),
    /// Distance from the base to the nearest dual edge.
    pub distance: u32,
}

/// Endpoint of an interval: a vertex of the ball or an orientation of every
/// hyperplane of the ball.
#[derive(Clone, Copy, Debug)]
pub enum Endpoint<'a> {
    Vertex(usize),
    Orientation(&'a [Orientation]),
}

/// Vertex set of an interval inside a ball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalRegion {
    /// Vertex endpoint used as the center of interval balls, if any.
    pub anchor: Option<usize>,
    pub members: Vec<usize>,
    /// Hyperplanes of the ball on which the two endpoints disagree.
    pub hyperplanes: Vec<usize>,
    /// Largest pairwise crossing set of member hyperplanes.
    pub dimension: usize,
}

impl IntervalRegion {
    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SectorRegion {
    Sector(Vec<usize>),
    /// Two of the hyperplanes do not cross.
    NotSector(usize, usize),
}

struct Relation {
    cross: HashSet<(u32, u32)>,
    plus_meet: HashSet<(u32, u32)>,
    forced: Vec<Vec<u32>>,
}

/// A ball-truncated cube complex.
pub struct CubeBall {
    provider: Provider,
    vertices: Vec<Vertex>,
    index: HashMap<Vertex, u32>,
    dist: Vec<u32>,
    adj: Vec<Vec<(u32, u32)>>,
    edges: Vec<(u32, u32)>,
    edge_hyp: Vec<u32>,
    squares: Vec<[u32; 4]>,
    hyps: Vec<Hyperplane>,
    sep: Vec<Vec<u32>>,
    outer: Option<u32>,
    margin: u32,
    plus_reach: Vec<u32>,
    plus_at_rim: Vec<u32>,
    rim_count: u32,
    relation: OnceLock<Relation>,
    sep_index: OnceLock<HashMap<Vec<u32>, u32>>,
    key_index: OnceLock<HashMap<HypKey, u32>>,
}

fn pair(a: usize, b: usize) -> (u32, u32) {
    if a < b {
        (a as u32, b as u32)
    } else {
        (b as u32, a as u32)
    }
}

impl CubeBall {
    /// Ball of the given radius with the default margin `2 * dimension`.
    pub fn build(provider: &Provider, radius: u32) -> Result<Self, ComplexError> {
        Self::build_with(provider, Some(radius), None, DEFAULT_VERTEX_CAP)
    }

    /// The whole complex of a finite provider.
    pub fn complete(provider: &Provider) -> Result<Self, ComplexError> {
        Self::build_with(provider, None, None, DEFAULT_VERTEX_CAP)
    }

    /// Ball whose inner radius is `inner`, built at `inner + 2 * dimension`.
    pub fn with_inner_radius(provider: &Provider, inner: u32) -> Result<Self, ComplexError> {
        let margin = 2 * provider.dimension() as u32;
        Self::build_with(provider, Some(inner + margin), Some(margin), DEFAULT_VERTEX_CAP)
    }

    pub fn build_with(
        provider: &Provider,
        radius: Option<u32>,
        margin: Option<u32>,
        cap: usize,
    ) -> Result<Self, ComplexError> {
        provider.validate()?;
        let dim = provider.dimension() as u32;
        let margin = match radius {
            None => {
                if !provider.is_finite() {
                    return Err(ComplexError::Truncation("an infinite provider needs a radius".into()));
                }
                0
            }
            Some(r) => {
                let m = margin.unwrap_or(2 * dim);
                if m < 2 * dim {
                    return Err(ComplexError::Truncation(format!("margin {m} is below 2*dimension = {}", 2 * dim)));
                }
                if r <= m {
                    return Err(ComplexError::Truncation(format!("radius {r} must exceed margin {m}")));
                }
                m
            }
        };
        let limit = radius.unwrap_or(u32::MAX);

        let base = provider.base();
        let mut vertices = vec![base.clone()];
        let mut index = HashMap::from([(base, 0u32)]);
        let mut dist = vec![0u32];
        let mut adj: Vec<Vec<(u32, u32)>> = vec![Vec::new()];
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut head = 0;
        while head < vertices.len() {
            let x = head as u32;
            head += 1;
            let dx = dist[x as usize];
            if dx >= limit {
                continue;
            }
            for y in provider.neighbors(&vertices[x as usize]) {
                let yi = match index.get(&y) {
                    Some(&yi) => yi,
                    None => {
                        if vertices.len() >= cap {
                            return Err(ComplexError::TooLarge(cap));
                        }
                        let yi = vertices.len() as u32;
                        index.insert(y.clone(), yi);
                        vertices.push(y);
                        dist.push(dx + 1);
                        adj.push(Vec::new());
                        yi
                    }
                };
                let dy = dist[yi as usize];
                if dy == dx {
                    return Err(ComplexError::Provider(format!(
                        "odd cycle through {} and {}",
                        provider.name(&vertices[x as usize]),
                        provider.name(&vertices[yi as usize])
                    )));
                }
                if dy == dx + 1 {
                    let e = edges.len() as u32;
                    edges.push((x, yi));
                    adj[x as usize].push((yi, e));
                    adj[yi as usize].push((x, e));
                }
            }
        }

        let n = vertices.len();
        let mut sorted_nbrs: Vec<Vec<u32>> =
            adj.iter().map(|l| l.iter().map(|&(y, _)| y).collect()).collect();
        for l in &mut sorted_nbrs {
            l.sort_unstable();
        }
        let edge_between = |a: u32, b: u32| -> u32 {
            adj[a as usize].iter().find(|&&(y, _)| y == b).map(|&(_, e)| e).expect("edge exists")
        };
        let mut squares = Vec::new();
        for x in 0..n as u32 {
            let nb = &sorted_nbrs[x as usize];
            for (i, &y) in nb.iter().enumerate() {
                if y < x {
                    continue;
                }
                for &z in &nb[i + 1..] {
                    let (ny, nz) = (&sorted_nbrs[y as usize], &sorted_nbrs[z as usize]);
                    let (mut p, mut q) = (0, 0);
                    while p < ny.len() && q < nz.len() {
                        match ny[p].cmp(&nz[q]) {
                            std::cmp::Ordering::Less => p += 1,
                            std::cmp::Ordering::Greater => q += 1,
                            std::cmp::Ordering::Equal => {
                                let w = ny[p];
                                if w > x {
                                    squares.push([x, y, w, z]);
                                }
                                p += 1;
                                q += 1;
                            }
                        }
                    }
                }
            }
        }

        let mut uf = UnionFind::<u32>::new(edges.len());
        for &[x, y, w, z] in &squares {
            uf.union(edge_between(x, y), edge_between(z, w));
            uf.union(edge_between(y, w), edge_between(x, z));
        }
        let mut classes: HashMap<u32, Vec<u32>> = HashMap::new();
        for e in 0..edges.len() as u32 {
            classes.entry(uf.find(e)).or_default().push(e);
        }
        let mut hyps: Vec<Hyperplane> = classes
            .into_values()
            .map(|es| {
                let canonical = es
                    .iter()
                    .map(|&e| edges[e as usize])
                    .min_by(|a, b| {
                        (&vertices[a.0 as usize], &vertices[a.1 as usize])
                            .cmp(&(&vertices[b.0 as usize], &vertices[b.1 as usize]))
                    })
                    .expect("class is nonempty");
                let distance = es.iter().map(|&e| dist[edges[e as usize].0 as usize]).min().unwrap();
                Hyperplane { edges: es, canonical, distance }
            })
            .collect();
        hyps.sort_by(|a, b| {
            a.distance.cmp(&b.distance).then_with(|| {
                (&vertices[a.canonical.0 as usize], &vertices[a.canonical.1 as usize])
                    .cmp(&(&vertices[b.canonical.0 as usize], &vertices[b.canonical.1 as usize]))
            })
        });
        let mut edge_hyp = vec![0u32; edges.len()];
        for (h, hp) in hyps.iter_mut().enumerate() {
            hp.edges.sort_unstable();
            for &e in &hp.edges {
                edge_hyp[e as usize] = h as u32;
            }
        }

        let inner = radius.map(|r| r - margin);
        let trusted = |d: u32| inner.is_none_or(|r| d <= r);
        let mut sep: Vec<Vec<u32>> = vec![Vec::new(); n];
        for y in 1..n {
            let &(x, e) = adj[y]
                .iter()
                .find(|&&(x, _)| dist[x as usize] + 1 == dist[y])
                .expect("non-base vertex has a parent");
            let h = edge_hyp[e as usize];
            let mut s = sep[x as usize].clone();
            match s.binary_search(&h) {
                Ok(_) => {
                    if trusted(dist[y]) {
                        return Err(ComplexError::Provider(format!(
                            "geodesic to {} crosses a hyperplane twice",
                            provider.name(&vertices[y])
                        )));
                    }
                }
                Err(pos) => s.insert(pos, h),
            }
            sep[y] = s;
        }
        for &(x, y) in &edges {
            if !trusted(dist[y as usize]) {
                continue;
            }
            let (sx, sy) = (&sep[x as usize], &sep[y as usize]);
            let ok = sy.len() == sx.len() + 1 && sx.iter().all(|h| sy.binary_search(h).is_ok());
            if !ok {
                return Err(ComplexError::Provider(format!(
                    "hyperplane sides disagree along the edge {} - {}",
                    provider.name(&vertices[x as usize]),
                    provider.name(&vertices[y as usize])
                )));
            }
        }

        let mut plus_reach = vec![0u32; hyps.len()];
        let mut plus_at_rim = vec![0u32; hyps.len()];
        let rim = radius.unwrap_or_else(|| dist.iter().copied().max().unwrap_or(0));
        let mut rim_count = 0;
        for u in 0..n {
            if dist[u] == rim {
                rim_count += 1;
            }
            for &h in &sep[u] {
                plus_reach[h as usize] = plus_reach[h as usize].max(dist[u]);
                if dist[u] == rim {
                    plus_at_rim[h as usize] += 1;
                }
            }
        }

        Ok(CubeBall {
            provider: provider.clone(),
            vertices,
            index,
            dist,
            adj,
            edges,
            edge_hyp,
            squares,
            hyps,
            sep,
            outer: radius,
            margin,
            plus_reach,
            plus_at_rim,
            rim_count,
            relation: OnceLock::new(),
            sep_index: OnceLock::new(),
            key_index: OnceLock::new(),
        })
    }

    /// Induced subcomplex on `members` (which should be convex), as a complete
    /// explicit complex based at `members[0]`. Returns the map new -> old.
    pub fn subcomplex(&self, members: &[usize]) -> Result<(CubeBall, Vec<usize>), ComplexError> {
        let pos: HashMap<usize, u32> = members.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
        let names = members.iter().map(|&v| self.name(v)).collect();
        let mut edges = Vec::new();
        for &(a, b) in &self.edges {
            if let (Some(&p), Some(&q)) = (pos.get(&(a as usize)), pos.get(&(b as usize))) {
                edges.push((p, q));
            }
        }
        let e = Explicit::new(names, &edges, Vec::new(), 0, Some(self.provider.dimension()))?;
        let ball = CubeBall::complete(&Provider::explicit(e))?;
        let map = (0..ball.len())
            .map(|i| match ball.vertex(i) {
                Vertex::Id(j) => members[*j as usize],
                _ => unreachable!(),
            })
            .collect();
        Ok((ball, map))
    }

    pub fn provider(&self) -> &Provider {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn base(&self) -> usize {
        0
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn name(&self, i: usize) -> String {
        self.provider.name(&self.vertices[i])
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).map(|&i| i as usize)
    }

    pub fn lookup(&self, name: &str) -> Result<usize, ComplexError> {
        let v = self.provider.parse_vertex(name)?;
        self.index_of(&v).ok_or_else(|| ComplexError::UnknownVertex(name.to_string()))
    }

    /// Distance from the base vertex.
    pub fn depth(&self, i: usize) -> u32 {
        self.dist[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj[i].iter().map(move |&(y, e)| (y as usize, self.edge_hyp[e as usize] as usize))
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_hyperplane(&self, e: usize) -> usize {
        self.edge_hyp[e] as usize
    }

    pub fn squares(&self) -> &[[u32; 4]] {
        &self.squares
    }

    pub fn num_hyperplanes(&self) -> usize {
        self.hyps.len()
    }

    pub fn hyperplane(&self, h: usize) -> &Hyperplane {
        &self.hyps[h]
    }

    pub fn hyperplane_name(&self, h: usize) -> String {
        let (a, b) = self.hyps[h].canonical;
        format!("{}~{}", self.name(a as usize), self.name(b as usize))
    }

    pub fn outer_radius(&self) -> Option<u32> {
        self.outer
    }

    pub fn inner_radius(&self) -> Option<u32> {
        self.outer.map(|r| r - self.margin)
    }

    pub fn margin(&self) -> u32 {
        self.margin
    }

    pub fn is_complete(&self) -> bool {
        self.outer.is_none()
    }

    pub fn trusted(&self, i: usize) -> bool {
        self.inner_radius().is_none_or(|r| self.dist[i] <= r)
    }

    /// Hyperplanes separating `i` from the base (the plus sides containing `i`).
    pub fn plus_set(&self, i: usize) -> &[u32] {
        &self.sep[i]
    }

    /// Side of hyperplane `h` containing vertex `i`; plus is the side away from the base.
    pub fn side(&self, h: usize, i: usize) -> Orientation {
        if self.sep[i].binary_search(&(h as u32)).is_ok() {
            Orientation::Plus
        } else {
            Orientation::Minus
        }
    }

    /// Largest distance from the base reached by the plus side of `h`.
    pub fn plus_reach(&self, h: usize) -> u32 {
        self.plus_reach[h]
    }

    /// Whether the halfspace reaches the outer sphere of the ball.
    pub fn reaches_rim(&self, hs: Halfspace) -> bool {
        match hs.orient {
            Orientation::Plus => self.plus_at_rim[hs.hyp] > 0,
            Orientation::Minus => self.plus_at_rim[hs.hyp] < self.rim_count,
        }
    }

    /// Ultrafilter of a vertex.
    pub fn vertex_orientation(&self, i: usize) -> Vec<Orientation> {
        let mut o = vec![Orientation::Minus; self.hyps.len()];
        for &h in &self.sep[i] {
            o[h as usize] = Orientation::Plus;
        }
        o
    }

    fn check_trusted(&self, i: usize) -> Result<(), ComplexError> {
        if i >= self.len() {
            return Err(ComplexError::UnknownVertex(i.to_string()));
        }
        if !self.trusted(i) {
            return Err(ComplexError::Untrusted(self.name(i)));
        }
        Ok(())
    }

    /// Number of separating hyperplanes (no trust check).
    pub fn distance(&self, v: usize, w: usize) -> usize {
        let (a, b) = (&self.sep[v], &self.sep[w]);
        let (mut i, mut j, mut common) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    common += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        a.len() + b.len() - 2 * common
    }

    /// Hyperplanes separating `v` and `w`, sorted.
    pub fn separators(&self, v: usize, w: usize) -> Result<Vec<usize>, ComplexError> {
        self.check_trusted(v)?;
        self.check_trusted(w)?;
        let (a, b) = (&self.sep[v], &self.sep[w]);
        let mut out: Vec<usize> = a
            .iter()
            .filter(|h| b.binary_search(h).is_err())
            .chain(b.iter().filter(|h| a.binary_search(h).is_err()))
            .map(|&h| h as usize)
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    fn sep_index(&self) -> &HashMap<Vec<u32>, u32> {
        self.sep_index
            .get_or_init(|| self.sep.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect())
    }

    /// Vertex whose plus set is exactly `set` (sorted), if it lies in the ball.
    pub fn vertex_with_plus_set(&self, set: &[u32]) -> Option<usize> {
        self.sep_index().get(set).map(|&i| i as usize)
    }

    /// The majority vertex of a triple.
    pub fn median(&self, u: usize, v: usize, w: usize) -> Result<usize, ComplexError> {
        for x in [u, v, w] {
            self.check_trusted(x)?;
        }
        let mut all: Vec<u32> = self.sep[u].iter().chain(&self.sep[v]).chain(&self.sep[w]).copied().collect();
        all.sort_unstable();
        let mut maj = Vec::new();
        let mut i = 0;
        while i < all.len() {
            let mut j = i;
            while j < all.len() && all[j] == all[i] {
                j += 1;
            }
            if j - i >= 2 {
                maj.push(all[i]);
            }
            i = j;
        }
        self.vertex_with_plus_set(&maj).ok_or(ComplexError::NoMedian)
    }

    fn endpoint_orientation(&self, e: Endpoint<'_>) -> Result<Vec<Orientation>, ComplexError> {
        match e {
            Endpoint::Vertex(v) => {
                self.check_trusted(v)?;
                Ok(self.vertex_orientation(v))
            }
            Endpoint::Orientation(o) => {
                if o.len() != self.hyps.len() {
                    return Err(ComplexError::Inconsistent(format!(
                        "orientation covers {} hyperplanes, ball has {}",
                        o.len(),
                        self.hyps.len()
                    )));
                }
                Ok(o.to_vec())
            }
        }
    }

    /// Vertices lying in every halfspace on which the two orientations agree.
    pub fn interval(&self, a: Endpoint<'_>, b: Endpoint<'_>) -> Result<IntervalRegion, ComplexError> {
        let oa = self.endpoint_orientation(a)?;
        let ob = self.endpoint_orientation(b)?;
        let anchor = match (a, b) {
            (Endpoint::Vertex(v), _) | (_, Endpoint::Vertex(v)) => Some(v),
            _ => None,
        };
        let mut need_plus = 0usize;
        let mut agree = vec![None; self.hyps.len()];
        let mut hyperplanes = Vec::new();
        for h in 0..self.hyps.len() {
            if oa[h] == ob[h] {
                agree[h] = Some(oa[h]);
                if oa[h] == Orientation::Plus {
                    need_plus += 1;
                }
            } else {
                hyperplanes.push(h);
            }
        }
        let members = (0..self.len())
            .filter(|&u| {
                let mut plus = 0;
                for &h in &self.sep[u] {
                    match agree[h as usize] {
                        Some(Orientation::Minus) => return false,
                        Some(Orientation::Plus) => plus += 1,
                        None => {}
                    }
                }
                plus == need_plus
            })
            .collect();
        let dimension = self.crossing_clique(&hyperplanes);
        Ok(IntervalRegion { anchor, members, hyperplanes, dimension })
    }

    /// Interval between two vertices.
    pub fn vertex_interval(&self, a: usize, b: usize) -> Result<IntervalRegion, ComplexError> {
        self.interval(Endpoint::Vertex(a), Endpoint::Vertex(b))
    }

    /// Size of the largest pairwise crossing subset of `hs`.
    pub fn crossing_clique(&self, hs: &[usize]) -> usize {
        if hs.is_empty() {
            return 0;
        }
        let rel = self.relation();
        let mut nbrs: HashMap<usize, Vec<usize>> = HashMap::new();
        let set: HashSet<usize> = hs.iter().copied().collect();
        for &(a, b) in &rel.cross {
            let (a, b) = (a as usize, b as usize);
            if set.contains(&a) && set.contains(&b) {
                nbrs.entry(a).or_default().push(b);
                nbrs.entry(b).or_default().push(a);
            }
        }
        let mut best = 1;
        for &h in hs {
            let Some(cands) = nbrs.get(&h) else { continue };
            let cands: Vec<usize> = cands.iter().copied().filter(|&k| k > h).collect();
            extend_clique(&nbrs, 1, &cands, &mut best);
        }
        best
    }

    /// Vertices of the intersection of the given halfspaces, provided their
    /// hyperplanes pairwise cross.
    pub fn sector_region(&self, hs: &[Halfspace]) -> Result<SectorRegion, ComplexError> {
        for h in hs {
            if h.hyp >= self.hyps.len() {
                return Err(ComplexError::UnknownHyperplane(h.hyp));
            }
        }
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                if !self.crosses(hs[i].hyp, hs[j].hyp) {
                    return Ok(SectorRegion::NotSector(hs[i].hyp, hs[j].hyp));
                }
            }
        }
        Ok(SectorRegion::Sector(self.halfspace_region(hs)))
    }

    /// Vertices in every listed halfspace (no crossing requirement).
    pub fn halfspace_region(&self, hs: &[Halfspace]) -> Vec<usize> {
        (0..self.len()).filter(|&u| hs.iter().all(|h| self.side(h.hyp, u) == h.orient)).collect()
    }

    /// Endpoints of the dual edges of `h`.
    pub fn carrier(&self, h: usize) -> Result<Vec<usize>, ComplexError> {
        let hp = self.hyps.get(h).ok_or(ComplexError::UnknownHyperplane(h))?;
        let mut out: Vec<usize> = hp
            .edges
            .iter()
            .flat_map(|&e| {
                let (a, b) = self.edges[e as usize];
                [a as usize, b as usize]
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn relation(&self) -> &Relation {
        self.relation.get_or_init(|| self.compute_relation(|_| true))
    }

    fn compute_relation(&self, keep: impl Fn(usize) -> bool) -> Relation {
        let mut cross = HashSet::new();
        for &[x, y, _, z] in &self.squares {
            let h1 = self.edge_hyp[self.edge_index(x, y)] as usize;
            let h2 = self.edge_hyp[self.edge_index(x, z)] as usize;
            cross.insert(pair(h1, h2));
        }
        let mut plus_meet = HashSet::new();
        let mut forced: Vec<Option<Vec<u32>>> = vec![None; self.hyps.len()];
        for u in 0..self.len() {
            if !keep(u) {
                continue;
            }
            let s = &self.sep[u];
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    plus_meet.insert((s[i], s[j]));
                }
                let f = &mut forced[s[i] as usize];
                match f {
                    None => *f = Some(s.clone()),
                    Some(cur) => cur.retain(|h| s.binary_search(h).is_ok()),
                }
            }
        }
        let forced = forced.into_iter().map(Option::unwrap_or_default).collect();
        Relation { cross, plus_meet, forced }
    }

    fn edge_index(&self, a: u32, b: u32) -> usize {
        self.adj[a as usize].iter().find(|&&(y, _)| y == b).map(|&(_, e)| e as usize).expect("edge")
    }

    /// Whether the ball is large enough to show how `h` and `k` relate: if they
    /// cross, a crossing square lies within `dist(h) + dist(k) + 2` of the base.
    pub fn relation_visible(&self, h: usize, k: usize) -> bool {
        self.outer.is_none_or(|r| self.hyps[h].distance + self.hyps[k].distance + 2 <= r)
    }

    /// Crossing by square witness.
    pub fn crosses(&self, h: usize, k: usize) -> bool {
        h != k && self.relation().cross.contains(&pair(h, k))
    }

    /// All crossing pairs (by square witness), sorted.
    pub fn crossing_pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> =
            self.relation().cross.iter().map(|&(a, b)| (a as usize, b as usize)).collect();
        v.sort_unstable();
        v
    }

    /// For non-crossing `h != k`, the sides `(oh, ok)` whose halfspaces are disjoint.
    /// `None` when the hyperplanes cross (or coincide).
    pub fn disjoint_pair(&self, h: usize, k: usize) -> Option<(Orientation, Orientation)> {
        use Orientation::*;
        if h == k {
            return None;
        }
        let rel = self.relation();
        if rel.cross.contains(&pair(h, k)) {
            return None;
        }
        let (a, b) = pair(h, k);
        if !rel.plus_meet.contains(&(a, b)) {
            return Some((Plus, Plus));
        }
        if rel.forced[h].binary_search(&(k as u32)).is_ok() {
            return Some((Plus, Minus));
        }
        if rel.forced[k].binary_search(&(h as u32)).is_ok() {
            return Some((Minus, Plus));
        }
        None
    }

    /// Halfspace containment `a ⊆ b` (within the ball).
    pub fn halfspace_subset(&self, a: Halfspace, b: Halfspace) -> bool {
        if a.hyp == b.hyp {
            return a.orient == b.orient;
        }
        self.disjoint_pair(a.hyp, b.hyp) == Some((a.orient, !b.orient))
    }

    /// Side of hyperplane `k` containing the whole hyperplane `h`, or `None` if they cross.
    pub fn side_of_hyperplane(&self, k: usize, h: usize) -> Option<Orientation> {
        self.disjoint_pair(k, h).map(|(ok, _)| !ok)
    }

    /// Number of hyperplanes separating `h` from `k` (both non-crossing), or
    /// `None` if they cross.
    pub fn hyperplanes_between(&self, h: usize, k: usize) -> Option<usize> {
        if h == k || self.disjoint_pair(h, k).is_none() {
            return if h == k { Some(0) } else { None };
        }
        let count = (0..self.hyps.len())
            .filter(|&m| m != h && m != k)
            .filter(|&m| match (self.side_of_hyperplane(m, h), self.side_of_hyperplane(m, k)) {
                (Some(a), Some(b)) => a != b,
                _ => false,
            })
            .count();
        Some(count)
    }

    /// Non-crossing pairs whose four quadrants are all witnessed inside the
    /// inner radius although no square exists. Empty for a consistent provider.
    pub fn crossing_anomalies(&self) -> Vec<(usize, usize)> {
        let inner = self.compute_relation(|u| self.trusted(u));
        let rel = self.relation();
        let mut out: Vec<(usize, usize)> = inner
            .plus_meet
            .iter()
            .filter(|&&(a, b)| !rel.cross.contains(&(a, b)))
            .filter(|&&(a, b)| {
                inner.forced[a as usize].binary_search(&b).is_err()
                    && inner.forced[b as usize].binary_search(&a).is_err()
            })
            .map(|&(a, b)| (a as usize, b as usize))
            .collect();
        out.sort_unstable();
        out
    }

    /// Base-independent key of a ball hyperplane (Cayley-type providers).
    pub fn key_of(&self, h: usize) -> Option<HypKey> {
        let (a, b) = self.hyps[h].canonical;
        self.provider.hyp_key(&self.vertices[a as usize], &self.vertices[b as usize])
    }

    /// Ball hyperplane named by a provider key, if it meets the ball.
    pub fn hyperplane_of_key(&self, key: &HypKey) -> Option<usize> {
        let map = self.key_index.get_or_init(|| {
            (0..self.hyps.len()).filter_map(|h| self.key_of(h).map(|k| (k, h as u32))).collect()
        });
        map.get(key).map(|&h| h as usize)
    }

    /// Translate between key orientation and ball orientation of hyperplane `h`.
    pub fn ball_orientation(&self, h: usize, key_orient: Orientation) -> Orientation {
        let key = self.key_of(h).expect("Cayley-type provider");
        if self.provider.side(&key, &self.vertices[0]) == Orientation::Minus {
            key_orient
        } else {
            !key_orient
        }
    }

    /// Vertices at distance at most `r` from the base.
    pub fn within(&self, r: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.dist[i] <= r).collect()
    }
}

fn extend_clique(nbrs: &HashMap<usize, Vec<usize>>, size: usize, cands: &[usize], best: &mut usize) {
    *best = (*best).max(size);
    for (i, &c) in cands.iter().enumerate() {
        let Some(nc) = nbrs.get(&c) else { continue };
        let next: Vec<usize> = cands[i + 1..].iter().copied().filter(|x| nc.contains(x)).collect();
        extend_clique(nbrs, size + 1, &next, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn bfs(ball: &CubeBall, s: usize) -> Vec<usize> {
        let mut d = vec![usize::MAX; ball.len()];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for (y, _) in ball.neighbors(x) {
                if d[y] == usize::MAX {
                    d[y] = d[x] + 1;
                    q.push_back(y);
                }
            }
        }
        d
    }

    #[test]
    fn tree_ball_counts() {
        let ball = CubeBall::build(&Provider::tree(3), 4).unwrap();
        assert_eq!(ball.len(), 1 + 3 * ((1 << 4) - 1));
        assert_eq!(ball.edges().len(), 45);
        assert_eq!(ball.squares().len(), 0);
        assert_eq!(ball.num_hyperplanes(), 45);
        assert!(ball.hyperplanes_all_singletons());
    }

    impl CubeBall {
        fn hyperplanes_all_singletons(&self) -> bool {
            self.hyps.iter().all(|h| h.edges.len() == 1)
        }
    }

    #[test]
    fn grid_ball_radius_two() {
        let ball = CubeBall::build_with(&Provider::grid(2), Some(5), Some(4), 1000).unwrap();
        assert_eq!(ball.within(2).len(), 13);
        let small = CubeBall::build_with(&Provider::grid(2), Some(2), Some(1), 1000);
        assert!(matches!(small, Err(ComplexError::Truncation(_))));
        let ball2 = CubeBall::build_with(&Provider::grid(2), Some(5), Some(4), 1000).unwrap();
        // Hyperplanes meeting B(2): cuts -2..=1 on each axis.
        let near: Vec<usize> = (0..ball2.num_hyperplanes()).filter(|&h| ball2.hyperplane(h).distance < 2).collect();
        assert_eq!(near.len(), 8);
    }

    #[test]
    fn explicit_three_by_three() {
        let ball = CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap();
        assert_eq!(ball.len(), 9);
        assert_eq!(ball.edges().len(), 12);
        assert_eq!(ball.squares().len(), 4);
        assert_eq!(ball.num_hyperplanes(), 4);
        let h = (0..4).find(|&h| ball.hyperplane_name(h) == "0_0~1_0").unwrap();
        assert_eq!(ball.carrier(h).unwrap().len(), 6);
    }

    #[test]
    fn separators_match_bfs_distance() {
        let p = Provider::raag(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
        let ball = CubeBall::build(&p, 6).unwrap();
        let inner: Vec<usize> = (0..ball.len()).filter(|&i| ball.trusted(i)).collect();
        for &s in inner.iter().step_by(7) {
            let d = bfs(&ball, s);
            for &t in inner.iter().step_by(5) {
                assert_eq!(ball.separators(s, t).unwrap().len(), d[t]);
            }
        }
    }

    #[test]
    fn grid_examples() {
        let ball = CubeBall::build(&Provider::grid(2), 10).unwrap();
        let v = |s: &str| ball.lookup(s).unwrap();
        assert_eq!(ball.separators(v("(0,0)"), v("(2,3)")).unwrap().len(), 5);
        assert_eq!(ball.median(v("(0,0)"), v("(2,0)"), v("(1,3)")).unwrap(), v("(1,0)"));
        let i = ball.vertex_interval(v("(0,0)"), v("(2,1)")).unwrap();
        assert_eq!(i.members.len(), 6);
        assert_eq!(i.dimension, 2);
        let far = ball.lookup("(9,0)").unwrap();
        assert!(matches!(ball.separators(far, v("(0,0)")), Err(ComplexError::Untrusted(_))));
    }

    #[test]
    fn tree_median_of_leaves_is_center() {
        let ball = CubeBall::build(&Provider::tree(3), 6).unwrap();
        let v = |s: &str| ball.lookup(s).unwrap();
        assert_eq!(ball.median(v("aba"), v("abc"), v("ac")).unwrap(), v("ab"));
        assert_eq!(ball.median(v("ab"), v("ac"), v("ba")).unwrap(), v("a"));
        assert_eq!(ball.median(v("ab"), v("ab"), v("c")).unwrap(), v("ab"));
    }

    #[test]
    fn sector_examples() {
        let ball = CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap();
        let find = |n: &str| (0..4).find(|&h| ball.hyperplane_name(h) == n).unwrap();
        let (v, h) = (find("0_0~1_0"), find("0_0~0_1"));
        let sec = ball.sector_region(&[Halfspace::new(v, Orientation::Plus), Halfspace::new(h, Orientation::Plus)]).unwrap();
        let SectorRegion::Sector(vs) = sec else { panic!() };
        let mut names: Vec<String> = vs.iter().map(|&i| ball.name(i)).collect();
        names.sort();
        assert_eq!(names, ["1_1", "1_2", "2_1", "2_2"]);
        let v2 = find("1_0~2_0");
        let not = ball.sector_region(&[Halfspace::new(v, Orientation::Plus), Halfspace::new(v2, Orientation::Plus)]).unwrap();
        assert!(matches!(not, SectorRegion::NotSector(_, _)));
        let one = ball.sector_region(&[Halfspace::new(v, Orientation::Minus)]).unwrap();
        let SectorRegion::Sector(vs) = one else { panic!() };
        let mut names: Vec<String> = vs.iter().map(|&i| ball.name(i)).collect();
        names.sort();
        assert_eq!(names, ["0_0", "0_1", "0_2"]);
    }

    #[test]
    fn relation_on_grid() {
        let ball = CubeBall::build(&Provider::grid(2), 8).unwrap();
        assert!(ball.crossing_anomalies().is_empty());
        let key = |axis, cut| ball.hyperplane_of_key(&HypKey::Grid { axis, cut }).unwrap();
        let (x0, x1, y0) = (key(0, 0), key(0, 1), key(1, 0));
        assert!(ball.crosses(x0, y0));
        assert_eq!(ball.side_of_hyperplane(x0, x1), Some(Orientation::Plus));
        assert!(ball.halfspace_subset(Halfspace::new(x1, Orientation::Plus), Halfspace::new(x0, Orientation::Plus)));
        let xm = key(0, -2);
        // {x <= -2} and {x >= 1} are disjoint.
        assert_eq!(ball.disjoint_pair(xm, x0), Some((Orientation::Plus, Orientation::Plus)));
        assert_eq!(ball.hyperplanes_between(xm, x1), Some(2));
    }

    #[test]
    fn odd_cycle_is_a_provider_error() {
        let names = vec!["a".into(), "b".into(), "c".into()];
        let e = Explicit::new(names, &[(0, 1), (1, 2), (2, 0)], vec![], 0, Some(1)).unwrap();
        assert!(matches!(CubeBall::complete(&Provider::explicit(e)), Err(ComplexError::Provider(_))));
    }

    #[test]
    fn hexagon_is_not_median() {
        let names = (0..6).map(|i| i.to_string()).collect();
        let edges: Vec<(u32, u32)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let e = Explicit::new(names, &edges, vec![], 0, Some(1)).unwrap();
        assert!(matches!(CubeBall::complete(&Provider::explicit(e)), Err(ComplexError::Provider(_))));
    }

    #[test]
    fn cap_is_enforced() {
        let r = CubeBall::build_with(&Provider::tree(3), Some(12), None, 100);
        assert_eq!(r.err(), Some(ComplexError::TooLarge(100)));
    }
}
