use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::ComplexError;

/// A vertex of a provider complex. Cayley-type providers identify vertices
/// with group elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Vertex {
    /// Vertex of an explicit complex.
    Id(u32),
    /// Reduced word (tree) or shortlex normal form (raag).
    Word(Vec<u16>),
    /// Lattice point of a grid.
    Point(Vec<i64>),
    /// Vertex of a product complex.
    Tuple(Vec<Vertex>),
}

impl Vertex {
    /// Length used by the shortlex order.
    pub fn size(&self) -> u64 {
        match self {
            Vertex::Id(_) => 0,
            Vertex::Word(w) => w.len() as u64,
            Vertex::Point(p) => p.iter().map(|x| x.unsigned_abs()).sum(),
            Vertex::Tuple(t) => t.iter().map(Vertex::size).sum(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Vertex::Id(_) => 0,
            Vertex::Word(_) => 1,
            Vertex::Point(_) => 2,
            Vertex::Tuple(_) => 3,
        }
    }

    pub fn word(&self) -> &[u16] {
        match self {
            Vertex::Word(w) => w,
            _ => panic!("vertex is not a word: {self:?}"),
        }
    }

    pub fn point(&self) -> &[i64] {
        match self {
            Vertex::Point(p) => p,
            _ => panic!("vertex is not a lattice point: {self:?}"),
        }
    }

    pub fn parts(&self) -> &[Vertex] {
        match self {
            Vertex::Tuple(t) => t,
            _ => panic!("vertex is not a tuple: {self:?}"),
        }
    }
}

/// Shortlex: size first, then lexicographic.
impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.size()
            .cmp(&other.size())
            .then_with(|| match (self, other) {
                (Vertex::Id(a), Vertex::Id(b)) => a.cmp(b),
                (Vertex::Word(a), Vertex::Word(b)) => a.cmp(b),
                (Vertex::Point(a), Vertex::Point(b)) => a.cmp(b),
                (Vertex::Tuple(a), Vertex::Tuple(b)) => a.cmp(b),
                _ => self.rank().cmp(&other.rank()),
            })
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Plus,
    Minus,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Plus => Orientation::Minus,
            Orientation::Minus => Orientation::Plus,
        }
    }

    pub fn sign(self) -> char {
        match self {
            Orientation::Plus => '+',
            Orientation::Minus => '-',
        }
    }

    pub fn from_sign(c: char) -> Option<Self> {
        match c {
            '+' => Some(Orientation::Plus),
            '-' => Some(Orientation::Minus),
            _ => None,
        }
    }
}

impl std::ops::Not for Orientation {
    type Output = Orientation;
    fn not(self) -> Orientation {
        self.flip()
    }
}

/// Base-independent name of a hyperplane of a Cayley-type provider.
///
/// The plus side is the side containing the positive endpoint of
/// [`Provider::canonical_edge`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HypKey {
    /// Edge from the parent of the word to the word.
    Tree(Vec<u16>),
    /// Cut between coordinate `cut` and `cut + 1` on `axis`.
    Grid { axis: usize, cut: i64 },
    /// Dual to the edge `coset -> coset * gen`, with `coset` the shortest
    /// representative of its coset of the link subgroup of `gen`.
    Raag { coset: Vec<u16>, gen: u16 },
    Factor(usize, Box<HypKey>),
}

/// A right-angled Artin group on a finite defining graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raag {
    pub gens: Vec<String>,
    commute: Vec<Vec<bool>>,
}

impl Raag {
    pub fn new(gens: Vec<String>, edges: &[(String, String)]) -> Result<Self, ComplexError> {
        let n = gens.len();
        if n == 0 || n > 1000 {
            return Err(ComplexError::Config(format!("raag needs 1..=1000 generators, got {n}")));
        }
        let uniq: BTreeSet<&String> = gens.iter().collect();
        if uniq.len() != n {
            return Err(ComplexError::Config("duplicate generator names".into()));
        }
        let mut commute = vec![vec![false; n]; n];
        let idx = |s: &str| {
            gens.iter()
                .position(|g| g == s)
                .ok_or_else(|| ComplexError::Config(format!("unknown generator {s}")))
        };
        for (a, b) in edges {
            let (i, j) = (idx(a)?, idx(b)?);
            if i == j {
                return Err(ComplexError::Config(format!("loop at generator {a}")));
            }
            commute[i][j] = true;
            commute[j][i] = true;
        }
        Ok(Raag { gens, commute })
    }

    /// Generators `g`, `h` commute (never true for `g == h`).
    pub fn commutes(&self, g: u16, h: u16) -> bool {
        self.commute[g as usize][h as usize]
    }

    /// Size of the largest clique of the defining graph.
    pub fn dimension(&self) -> usize {
        let n = self.gens.len();
        let mut best = 1;
        let mut stack: Vec<(Vec<usize>, usize)> = (0..n).map(|i| (vec![i], i + 1)).collect();
        while let Some((clique, next)) = stack.pop() {
            best = best.max(clique.len());
            for j in next..n {
                if clique.iter().all(|&i| self.commute[i][j]) {
                    let mut c = clique.clone();
                    c.push(j);
                    stack.push((c, j + 1));
                }
            }
        }
        best
    }

    fn letters_commute(&self, x: u16, y: u16) -> bool {
        self.commutes(x >> 1, y >> 1)
    }

    /// Append letter `x` (`2g` for `g`, `2g+1` for its inverse) to a word in
    /// normal form, keeping it in normal form.
    pub fn push(&self, word: &mut Vec<u16>, x: u16) {
        let mut i = word.len();
        while i > 0 {
            let y = word[i - 1];
            if y == x ^ 1 {
                word.remove(i - 1);
                let rest = std::mem::take(word);
                for z in rest {
                    self.insert(word, z);
                }
                return;
            }
            if self.letters_commute(x, y) {
                i -= 1;
            } else {
                break;
            }
        }
        self.insert_from(word, x, i);
    }

    fn insert(&self, word: &mut Vec<u16>, x: u16) {
        let mut i = word.len();
        while i > 0 && self.letters_commute(x, word[i - 1]) {
            i -= 1;
        }
        self.insert_from(word, x, i);
    }

    fn insert_from(&self, word: &mut Vec<u16>, x: u16, i: usize) {
        let mut p = i;
        while p < word.len() && word[p] < x {
            p += 1;
        }
        word.insert(p, x);
    }

    pub fn normalize(&self, letters: &[u16]) -> Vec<u16> {
        let mut w = Vec::with_capacity(letters.len());
        for &x in letters {
            self.push(&mut w, x);
        }
        w
    }

    /// Shortest representative of `c * <lk(gen)>`.
    fn coset_rep(&self, c: &[u16], gen: u16) -> Vec<u16> {
        let mut kept: Vec<u16> = Vec::with_capacity(c.len());
        for &x in c.iter().rev() {
            let movable = self.commutes(x >> 1, gen) && kept.iter().all(|&y| self.letters_commute(x, y));
            if !movable {
                kept.push(x);
            }
        }
        kept.reverse();
        self.normalize(&kept)
    }

    fn letter_name(&self, x: u16) -> String {
        let g = &self.gens[(x >> 1) as usize];
        if x & 1 == 0 {
            g.clone()
        } else {
            format!("{g}^-1")
        }
    }
}

/// Finite complex given by vertices, edges and (optionally) squares.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Explicit {
    pub names: Vec<String>,
    pub adj: Vec<Vec<u32>>,
    pub squares: Vec<[u32; 4]>,
    pub base: u32,
    pub dim: usize,
}

impl Explicit {
    pub fn new(
        names: Vec<String>,
        edges: &[(u32, u32)],
        squares: Vec<[u32; 4]>,
        base: u32,
        dim: Option<usize>,
    ) -> Result<Self, ComplexError> {
        let n = names.len();
        if n == 0 {
            return Err(ComplexError::Config("explicit complex has no vertices".into()));
        }
        if base as usize >= n {
            return Err(ComplexError::Config("base vertex out of range".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n || a == b {
                return Err(ComplexError::Provider(format!("bad edge {a} {b}")));
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        for sq in &squares {
            for k in 0..4 {
                let (a, b) = (sq[k], sq[(k + 1) % 4]);
                if (a as usize) >= n || adj[a as usize].binary_search(&b).is_err() {
                    return Err(ComplexError::Provider(format!("square {sq:?} is not a 4-cycle")));
                }
            }
        }
        let dim = dim.unwrap_or(if squares.is_empty() { 1 } else { 2 });
        Ok(Explicit { names, adj, squares, base, dim })
    }

    /// Parse the text format: `vertex <name>`, `edge <a> <b>`,
    /// `square <a> <b> <c> <d>`, `base <name>`, `dim <n>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ComplexError> {
        let mut names: Vec<String> = Vec::new();
        let mut index = std::collections::HashMap::new();
        let mut edges = Vec::new();
        let mut squares = Vec::new();
        let mut base = None;
        let mut dim = None;
        let bad = |ln: usize, msg: &str| ComplexError::Config(format!("line {}: {msg}", ln + 1));
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let lookup = |index: &std::collections::HashMap<String, u32>, t: &str| {
                index.get(t).copied().ok_or_else(|| bad(ln, &format!("unknown vertex {t}")))
            };
            match toks[0] {
                "vertex" if toks.len() == 2 => {
                    if index.contains_key(toks[1]) {
                        return Err(bad(ln, "duplicate vertex"));
                    }
                    index.insert(toks[1].to_string(), names.len() as u32);
                    names.push(toks[1].to_string());
                }
                "edge" if toks.len() == 3 => {
                    edges.push((lookup(&index, toks[1])?, lookup(&index, toks[2])?));
                }
                "square" if toks.len() == 5 => {
                    let mut sq = [0u32; 4];
                    for k in 0..4 {
                        sq[k] = lookup(&index, toks[k + 1])?;
                    }
                    squares.push(sq);
                }
                "base" if toks.len() == 2 => base = Some(lookup(&index, toks[1])?),
                "dim" if toks.len() == 2 => {
                    dim = Some(toks[1].parse().map_err(|_| bad(ln, "bad dimension"))?)
                }
                _ => return Err(bad(ln, "unrecognized line")),
            }
        }
        Explicit::new(names, &edges, squares, base.unwrap_or(0), dim)
    }

    /// The `w x h` grid of vertices `x_y`, based at `0_0`.
    pub fn grid(w: u32, h: u32) -> Self {
        let id = |x: u32, y: u32| y * w + x;
        let mut names = Vec::new();
        for y in 0..h {
            for x in 0..w {
                names.push(format!("{x}_{y}"));
            }
        }
        let mut edges = Vec::new();
        let mut squares = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    edges.push((id(x, y), id(x + 1, y)));
                }
                if y + 1 < h {
                    edges.push((id(x, y), id(x, y + 1)));
                }
                if x + 1 < w && y + 1 < h {
                    squares.push([id(x, y), id(x + 1, y), id(x + 1, y + 1), id(x, y + 1)]);
                }
            }
        }
        Explicit::new(names, &edges, squares, 0, Some(2)).expect("grid is well formed")
    }
}

/// A lazily explored CAT(0) cube complex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provider {
    Explicit(Arc<Explicit>),
    /// Cayley graph of the free product of `valence` copies of Z/2.
    Tree { valence: u16 },
    /// Standard cubulation of Z^dim.
    Grid { dim: usize },
    Raag(Arc<Raag>),
    Product(Vec<Provider>),
}

impl Provider {
    pub fn tree(valence: u16) -> Self {
        Provider::Tree { valence }
    }

    pub fn grid(dim: usize) -> Self {
        Provider::Grid { dim }
    }

    pub fn raag(gens: &[&str], edges: &[(&str, &str)]) -> Result<Self, ComplexError> {
        let gens = gens.iter().map(|s| s.to_string()).collect();
        let edges: Vec<(String, String)> =
            edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Ok(Provider::Raag(Arc::new(Raag::new(gens, &edges)?)))
    }

    pub fn product(factors: Vec<Provider>) -> Self {
        Provider::Product(factors)
    }

    pub fn explicit(e: Explicit) -> Self {
        Provider::Explicit(Arc::new(e))
    }

    pub fn validate(&self) -> Result<(), ComplexError> {
        match self {
            Provider::Tree { valence } if *valence < 2 => {
                Err(ComplexError::Config("tree valence must be at least 2".into()))
            }
            Provider::Grid { dim } if *dim == 0 => Err(ComplexError::Config("grid dimension must be positive".into())),
            Provider::Product(f) if f.is_empty() => Err(ComplexError::Config("empty product".into())),
            Provider::Product(f) => f.iter().try_for_each(Provider::validate),
            _ => Ok(()),
        }
    }

    pub fn base(&self) -> Vertex {
        match self {
            Provider::Explicit(e) => Vertex::Id(e.base),
            Provider::Tree { .. } | Provider::Raag(_) => Vertex::Word(Vec::new()),
            Provider::Grid { dim } => Vertex::Point(vec![0; *dim]),
            Provider::Product(f) => Vertex::Tuple(f.iter().map(Provider::base).collect()),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Provider::Explicit(e) => e.dim,
            Provider::Tree { .. } => 1,
            Provider::Grid { dim } => *dim,
            Provider::Raag(r) => r.dimension(),
            Provider::Product(f) => f.iter().map(Provider::dimension).sum(),
        }
    }

    pub fn is_cayley(&self) -> bool {
        match self {
            Provider::Explicit(_) => false,
            Provider::Product(f) => f.iter().all(Provider::is_cayley),
            _ => true,
        }
    }

    /// Grids (and products of grids) are Euclidean by construction.
    pub fn is_euclidean(&self) -> bool {
        match self {
            Provider::Grid { .. } => true,
            Provider::Product(f) => f.iter().all(Provider::is_euclidean),
            _ => false,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Provider::Explicit(_) => true,
            Provider::Product(f) => f.iter().all(Provider::is_finite),
            _ => false,
        }
    }

    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        match (self, v) {
            (Provider::Explicit(e), Vertex::Id(i)) => {
                e.adj[*i as usize].iter().map(|&j| Vertex::Id(j)).collect()
            }
            (Provider::Product(f), Vertex::Tuple(t)) => {
                let mut out = Vec::new();
                for (i, p) in f.iter().enumerate() {
                    for n in p.neighbors(&t[i]) {
                        let mut t2 = t.clone();
                        t2[i] = n;
                        out.push(Vertex::Tuple(t2));
                    }
                }
                out
            }
            _ => self.generators().iter().map(|s| self.mul(v, s)).collect(),
        }
    }

    /// Symmetric generating set, in a fixed order. Empty for non-Cayley providers.
    pub fn generators(&self) -> Vec<Vertex> {
        match self {
            Provider::Explicit(_) => Vec::new(),
            Provider::Tree { valence } => (0..*valence).map(|i| Vertex::Word(vec![i])).collect(),
            Provider::Grid { dim } => {
                let mut out = Vec::new();
                for i in 0..*dim {
                    for s in [1, -1] {
                        let mut p = vec![0; *dim];
                        p[i] = s;
                        out.push(Vertex::Point(p));
                    }
                }
                out
            }
            Provider::Raag(r) => (0..2 * r.gens.len() as u16).map(|x| Vertex::Word(vec![x])).collect(),
            Provider::Product(f) => {
                let id = self.base();
                let mut out = Vec::new();
                for (i, p) in f.iter().enumerate() {
                    for s in p.generators() {
                        let mut t = id.parts().to_vec();
                        t[i] = s;
                        out.push(Vertex::Tuple(t));
                    }
                }
                out
            }
        }
    }

    /// Group multiplication for Cayley-type providers.
    pub fn mul(&self, a: &Vertex, b: &Vertex) -> Vertex {
        match (self, a, b) {
            (Provider::Tree { .. }, Vertex::Word(x), Vertex::Word(y)) => {
                let mut w = x.clone();
                for &l in y {
                    if w.last() == Some(&l) {
                        w.pop();
                    } else {
                        w.push(l);
                    }
                }
                Vertex::Word(w)
            }
            (Provider::Grid { .. }, Vertex::Point(x), Vertex::Point(y)) => {
                Vertex::Point(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (Provider::Raag(r), Vertex::Word(x), Vertex::Word(y)) => {
                let mut w = x.clone();
                for &l in y {
                    r.push(&mut w, l);
                }
                Vertex::Word(w)
            }
            (Provider::Product(f), Vertex::Tuple(x), Vertex::Tuple(y)) => {
                Vertex::Tuple(f.iter().zip(x.iter().zip(y)).map(|(p, (u, v))| p.mul(u, v)).collect())
            }
            _ => panic!("mul is defined only for Cayley-type providers"),
        }
    }

    pub fn inv(&self, a: &Vertex) -> Vertex {
        match (self, a) {
            (Provider::Tree { .. }, Vertex::Word(x)) => Vertex::Word(x.iter().rev().copied().collect()),
            (Provider::Grid { .. }, Vertex::Point(x)) => Vertex::Point(x.iter().map(|p| -p).collect()),
            (Provider::Raag(r), Vertex::Word(x)) => {
                let rev: Vec<u16> = x.iter().rev().map(|l| l ^ 1).collect();
                Vertex::Word(r.normalize(&rev))
            }
            (Provider::Product(f), Vertex::Tuple(x)) => {
                Vertex::Tuple(f.iter().zip(x).map(|(p, u)| p.inv(u)).collect())
            }
            _ => panic!("inv is defined only for Cayley-type providers"),
        }
    }

    /// Word length of a group element (its distance from the identity).
    pub fn length(&self, g: &Vertex) -> u64 {
        match (self, g) {
            (Provider::Product(f), Vertex::Tuple(x)) => f.iter().zip(x).map(|(p, u)| p.length(u)).sum(),
            (Provider::Explicit(_), _) => panic!("length is defined only for Cayley-type providers"),
            _ => g.size(),
        }
    }

    /// Graph distance, available without a ball for Cayley-type providers.
    pub fn distance(&self, u: &Vertex, v: &Vertex) -> Option<u64> {
        if !self.is_cayley() {
            return None;
        }
        Some(self.length(&self.mul(&self.inv(u), v)))
    }

    /// Hyperplane dual to the edge `u - v` (Cayley-type providers only).
    pub fn hyp_key(&self, u: &Vertex, v: &Vertex) -> Option<HypKey> {
        match (self, u, v) {
            (Provider::Tree { .. }, Vertex::Word(a), Vertex::Word(b)) => {
                Some(HypKey::Tree(if a.len() > b.len() { a.clone() } else { b.clone() }))
            }
            (Provider::Grid { .. }, Vertex::Point(a), Vertex::Point(b)) => {
                let axis = a.iter().zip(b).position(|(p, q)| p != q)?;
                Some(HypKey::Grid { axis, cut: a[axis].min(b[axis]) })
            }
            (Provider::Raag(r), Vertex::Word(_), Vertex::Word(_)) => {
                let step = self.mul(&self.inv(u), v);
                let s = *step.word().first()?;
                let (c, gen) = if s & 1 == 0 { (u, s >> 1) } else { (v, s >> 1) };
                Some(HypKey::Raag { coset: r.coset_rep(c.word(), gen), gen })
            }
            (Provider::Product(f), Vertex::Tuple(a), Vertex::Tuple(b)) => {
                let i = a.iter().zip(b).position(|(p, q)| p != q)?;
                Some(HypKey::Factor(i, Box::new(f[i].hyp_key(&a[i], &b[i])?)))
            }
            _ => None,
        }
    }

    /// The (minus, plus) endpoints of the edge naming `key`.
    pub fn canonical_edge(&self, key: &HypKey) -> (Vertex, Vertex) {
        match (self, key) {
            (Provider::Tree { .. }, HypKey::Tree(w)) => {
                (Vertex::Word(w[..w.len() - 1].to_vec()), Vertex::Word(w.clone()))
            }
            (Provider::Grid { dim }, HypKey::Grid { axis, cut }) => {
                let mut a = vec![0; *dim];
                a[*axis] = *cut;
                let mut b = a.clone();
                b[*axis] += 1;
                (Vertex::Point(a), Vertex::Point(b))
            }
            (Provider::Raag(_), HypKey::Raag { coset, gen }) => {
                let c = Vertex::Word(coset.clone());
                let p = self.mul(&c, &Vertex::Word(vec![2 * gen]));
                (c, p)
            }
            (Provider::Product(f), HypKey::Factor(i, k)) => {
                let (a, b) = f[*i].canonical_edge(k);
                let mut ta = self.base().parts().to_vec();
                let mut tb = ta.clone();
                ta[*i] = a;
                tb[*i] = b;
                (Vertex::Tuple(ta), Vertex::Tuple(tb))
            }
            _ => panic!("hyperplane key {key:?} does not belong to this provider"),
        }
    }

    /// Side of `key` on which `x` lies.
    pub fn side(&self, key: &HypKey, x: &Vertex) -> Orientation {
        let plus = match (self, key, x) {
            (Provider::Tree { .. }, HypKey::Tree(w), Vertex::Word(y)) => y.starts_with(w),
            (Provider::Grid { .. }, HypKey::Grid { axis, cut }, Vertex::Point(p)) => p[*axis] > *cut,
            (Provider::Raag(r), HypKey::Raag { coset, gen }, Vertex::Word(_)) => {
                let y = self.mul(&self.inv(&Vertex::Word(coset.clone())), x);
                let mut plus = false;
                for &l in y.word() {
                    if l == 2 * gen {
                        plus = true;
                        break;
                    }
                    if !r.commutes(l >> 1, *gen) {
                        break;
                    }
                }
                plus
            }
            (Provider::Product(f), HypKey::Factor(i, k), Vertex::Tuple(t)) => {
                return f[*i].side(k, &t[*i]);
            }
            _ => panic!("side: key {key:?} and vertex {x:?} do not match the provider"),
        };
        if plus {
            Orientation::Plus
        } else {
            Orientation::Minus
        }
    }

    /// Image of the halfspace `(key, o)` under left multiplication by `g`.
    pub fn act_halfspace(&self, g: &Vertex, key: &HypKey, o: Orientation) -> (HypKey, Orientation) {
        let (m, p) = self.canonical_edge(key);
        let (gm, gp) = (self.mul(g, &m), self.mul(g, &p));
        let k2 = self.hyp_key(&gm, &gp).expect("translated edge has a key");
        let o2 = if self.side(&k2, &gp) == Orientation::Plus { o } else { !o };
        (k2, o2)
    }

    /// Distance from the base vertex to the nearest edge dual to `key`.
    pub fn key_distance(&self, key: &HypKey) -> u64 {
        let (a, b) = self.canonical_edge(key);
        self.length(&a).min(self.length(&b))
    }

    pub fn name(&self, v: &Vertex) -> String {
        match (self, v) {
            (Provider::Explicit(e), Vertex::Id(i)) => e.names[*i as usize].clone(),
            (Provider::Tree { valence }, Vertex::Word(w)) => {
                if w.is_empty() {
                    "e".into()
                } else if *valence <= 26 {
                    w.iter().map(|&l| (b'a' + l as u8) as char).collect()
                } else {
                    w.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(".")
                }
            }
            (Provider::Grid { .. }, Vertex::Point(p)) => {
                format!("({})", p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
            }
            (Provider::Raag(r), Vertex::Word(w)) => {
                if w.is_empty() {
                    "e".into()
                } else {
                    w.iter().map(|&l| r.letter_name(l)).collect::<Vec<_>>().join(".")
                }
            }
            (Provider::Product(f), Vertex::Tuple(t)) => {
                format!("({})", f.iter().zip(t).map(|(p, x)| p.name(x)).collect::<Vec<_>>().join("|"))
            }
            _ => format!("{v:?}"),
        }
    }

    /// Inverse of [`Provider::name`].
    pub fn parse_vertex(&self, s: &str) -> Result<Vertex, ComplexError> {
        let s = s.trim();
        let bad = || ComplexError::Config(format!("cannot parse vertex {s:?}"));
        match self {
            Provider::Explicit(e) => e
                .names
                .iter()
                .position(|n| n == s)
                .map(|i| Vertex::Id(i as u32))
                .ok_or_else(bad),
            Provider::Tree { valence } => {
                if s == "e" || s.is_empty() {
                    return Ok(Vertex::Word(Vec::new()));
                }
                let letters: Vec<u16> = if s.contains('.') || *valence > 26 {
                    s.split('.').map(|t| t.parse::<u16>().map_err(|_| bad())).collect::<Result<_, _>>()?
                } else {
                    s.chars().map(|c| (c as u32).wrapping_sub('a' as u32) as u16).collect()
                };
                if letters.iter().any(|&l| l >= *valence) {
                    return Err(bad());
                }
                Ok(self.mul(&self.base(), &Vertex::Word(letters)))
            }
            Provider::Grid { dim } => {
                let inner = s.trim_start_matches('(').trim_end_matches(')');
                let p: Vec<i64> =
                    inner.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
                if p.len() != *dim {
                    return Err(bad());
                }
                Ok(Vertex::Point(p))
            }
            Provider::Raag(r) => {
                if s == "e" || s.is_empty() {
                    return Ok(Vertex::Word(Vec::new()));
                }
                let mut letters = Vec::new();
                for tok in s.split('.') {
                    let (name, inv) = match tok.strip_suffix("^-1") {
                        Some(n) => (n, 1),
                        None => (tok, 0),
                    };
                    let g = r.gens.iter().position(|x| x == name).ok_or_else(bad)? as u16;
                    letters.push(2 * g + inv);
                }
                Ok(Vertex::Word(r.normalize(&letters)))
            }
            Provider::Product(f) => {
                let inner = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')).ok_or_else(bad)?;
                let parts = split_top_level(inner, '|');
                if parts.len() != f.len() {
                    return Err(bad());
                }
                Ok(Vertex::Tuple(
                    f.iter().zip(parts).map(|(p, t)| p.parse_vertex(t)).collect::<Result<_, _>>()?,
                ))
            }
        }
    }

    pub fn key_name(&self, key: &HypKey) -> String {
        let (a, b) = self.canonical_edge(key);
        format!("{}~{}", self.name(&a), self.name(&b))
    }
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn path_raag() -> Provider {
        Provider::raag(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap()
    }

    /// All words equivalent to `w` under swapping adjacent commuting letters.
    fn commutation_class(r: &Raag, w: &[u16]) -> HashSet<Vec<u16>> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([w.to_vec()]);
        seen.insert(w.to_vec());
        while let Some(x) = queue.pop_front() {
            for i in 0..x.len().saturating_sub(1) {
                if r.letters_commute(x[i], x[i + 1]) {
                    let mut y = x.clone();
                    y.swap(i, i + 1);
                    if seen.insert(y.clone()) {
                        queue.push_back(y);
                    }
                }
            }
        }
        seen
    }

    #[test]
    fn raag_normal_form_is_shortlex_least_of_its_class() {
        let p = Provider::raag(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")]).unwrap();
        let Provider::Raag(r) = &p else { unreachable!() };
        let mut state = 12345u64;
        for _ in 0..300 {
            let mut letters = Vec::new();
            for _ in 0..7 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                letters.push(((state >> 33) % 4 * 2) as u16);
            }
            let nf = r.normalize(&letters);
            assert_eq!(nf.len(), letters.len(), "positive words are reduced");
            let class = commutation_class(r, &letters);
            assert_eq!(&nf, class.iter().min().unwrap());
        }
    }

    #[test]
    fn raag_cancellation_through_commuting_letters() {
        let p = path_raag();
        let a_b_ainv = p.parse_vertex("a.b.a^-1").unwrap();
        assert_eq!(p.name(&a_b_ainv), "b");
        let c_a = p.parse_vertex("c.a").unwrap();
        assert_eq!(p.length(&c_a), 2);
        assert_eq!(p.mul(&c_a, &p.inv(&c_a)), p.base());
    }

    #[test]
    fn neighbors_are_symmetric() {
        for p in [Provider::tree(3), Provider::grid(2), path_raag(), Provider::product(vec![Provider::tree(3), Provider::grid(1)])] {
            let mut frontier = vec![p.base()];
            for _ in 0..3 {
                let mut next = Vec::new();
                for v in &frontier {
                    for n in p.neighbors(v) {
                        assert!(p.neighbors(&n).contains(v), "{p:?} {v:?} {n:?}");
                        next.push(n);
                    }
                }
                frontier = next;
            }
        }
    }

    #[test]
    fn hyperplane_keys_agree_across_squares() {
        let p = path_raag();
        let a = p.parse_vertex("a").unwrap();
        let b = p.parse_vertex("b").unwrap();
        let ab = p.mul(&a, &b);
        assert_eq!(p.hyp_key(&p.base(), &a), p.hyp_key(&b, &ab));
        let c = p.parse_vertex("c").unwrap();
        let ca = p.mul(&c, &a);
        assert_ne!(p.hyp_key(&p.base(), &a), p.hyp_key(&c, &ca));
    }

    #[test]
    fn side_and_action_are_equivariant() {
        for p in [Provider::tree(3), Provider::grid(2), path_raag()] {
            let gens = p.generators();
            let mut verts = vec![p.base()];
            for i in 0..40 {
                let v = p.mul(&verts[i / gens.len()], &gens[i % gens.len()]);
                verts.push(v);
            }
            for u in verts.iter().take(12) {
                for s in &gens {
                    let v = p.mul(u, s);
                    let key = p.hyp_key(u, &v).unwrap();
                    assert_ne!(p.side(&key, u), p.side(&key, &v));
                    for g in verts.iter().take(8) {
                        for x in verts.iter().take(20) {
                            let (k2, o2) = p.act_halfspace(g, &key, Orientation::Plus);
                            let inside = p.side(&key, x) == Orientation::Plus;
                            assert_eq!(inside, p.side(&k2, &p.mul(g, x)) == o2);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn parse_and_name_round_trip() {
        let prod = Provider::product(vec![Provider::tree(3), Provider::grid(2)]);
        let v = prod.parse_vertex("(abc|(1,-2))").unwrap();
        assert_eq!(prod.name(&v), "(abc|(1,-2))");
        assert_eq!(prod.length(&v), 6);
        assert!(Provider::tree(3).parse_vertex("ad").is_err());
    }

    #[test]
    fn explicit_text_format() {
        let e = Explicit::parse("vertex x\nvertex y\nvertex z # leaf\nedge x y\nedge y z\nbase y\n").unwrap();
        assert_eq!(e.base, 1);
        assert_eq!(e.adj[1], vec![0, 2]);
        assert!(Explicit::parse("vertex x\nedge x q\n").is_err());
    }

    #[test]
    fn dimensions() {
        assert_eq!(path_raag().dimension(), 2);
        assert_eq!(Provider::product(vec![Provider::tree(3), Provider::tree(3)]).dimension(), 2);
        assert_eq!(Provider::grid(3).dimension(), 3);
    }
}
