//! Ball-free queries on Cayley-type providers: orientations given by a rule
//! instead of a table, and intervals/strips explored on demand.

use std::collections::{HashMap, VecDeque};

use super::{CubeBall, HypKey, Orientation, Provider, Vertex};

/// An orientation of every hyperplane of a provider, given lazily.
/// `None` means the rule does not decide this hyperplane.
pub trait Orienter: Send + Sync {
    fn side(&self, key: &HypKey) -> Option<Orientation>;
}

/// Principal ultrafilter of a vertex.
pub struct AtVertex<'a> {
    pub provider: &'a Provider,
    pub vertex: Vertex,
}

impl Orienter for AtVertex<'_> {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        Some(self.provider.side(key, &self.vertex))
    }
}

/// Ray in a tree provider: `prefix` followed by `period` repeated forever.
/// The infinite word must be reduced.
#[derive(Clone, Debug)]
pub struct TreeRay {
    pub prefix: Vec<u16>,
    pub period: Vec<u16>,
}

impl TreeRay {
    pub fn new(prefix: Vec<u16>, period: Vec<u16>) -> Self {
        assert!(!period.is_empty(), "a ray needs a nonempty period");
        TreeRay { prefix, period }
    }

    pub fn letter(&self, i: usize) -> u16 {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.period[(i - self.prefix.len()) % self.period.len()]
        }
    }

    /// First `n` letters.
    pub fn head(&self, n: usize) -> Vec<u16> {
        (0..n).map(|i| self.letter(i)).collect()
    }
}

impl Orienter for TreeRay {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        match key {
            HypKey::Tree(w) => Some(if w.iter().enumerate().all(|(i, &l)| self.letter(i) == l) {
                Orientation::Plus
            } else {
                Orientation::Minus
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridCoord {
    PlusInf,
    MinusInf,
    Finite(i64),
}

/// Ultrafilter on a grid given coordinatewise.
#[derive(Clone, Debug)]
pub struct GridUltra(pub Vec<GridCoord>);

impl GridUltra {
    /// `(+inf, 0)` on the plane: every vertical cut oriented to the right,
    /// horizontal cuts as for the x-axis.
    pub fn twisted() -> Self {
        GridUltra(vec![GridCoord::PlusInf, GridCoord::Finite(0)])
    }
}

impl Orienter for GridUltra {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        match key {
            HypKey::Grid { axis, cut } => Some(match self.0.get(*axis)? {
                GridCoord::PlusInf => Orientation::Plus,
                GridCoord::MinusInf => Orientation::Minus,
                GridCoord::Finite(t) if t > cut => Orientation::Plus,
                GridCoord::Finite(_) => Orientation::Minus,
            }),
            _ => None,
        }
    }
}

/// Product of factor ultrafilters.
pub struct ProductUltra<'a>(pub Vec<Box<dyn Orienter + 'a>>);

impl Orienter for ProductUltra<'_> {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        match key {
            HypKey::Factor(i, k) => self.0.get(*i)?.side(k),
            _ => None,
        }
    }
}

/// The translate `g * alpha`.
pub struct Translated<'a> {
    pub provider: &'a Provider,
    pub g_inv: Vertex,
    pub inner: &'a dyn Orienter,
}

impl<'a> Translated<'a> {
    pub fn new(provider: &'a Provider, g: &Vertex, inner: &'a dyn Orienter) -> Self {
        Translated { provider, g_inv: provider.inv(g), inner }
    }
}

impl Orienter for Translated<'_> {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        let (k2, o2) = self.provider.act_halfspace(&self.g_inv, key, Orientation::Plus);
        let s = self.inner.side(&k2)?;
        Some(if s == o2 { Orientation::Plus } else { Orientation::Minus })
    }
}

/// Orientation table over a ball, read through hyperplane keys.
pub struct BallOrienter<'a> {
    pub ball: &'a CubeBall,
    pub orientation: &'a [Orientation],
}

impl Orienter for BallOrienter<'_> {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        let h = self.ball.hyperplane_of_key(key)?;
        let o = self.orientation[h];
        Some(if self.ball.ball_orientation(h, Orientation::Plus) == o {
            Orientation::Plus
        } else {
            Orientation::Minus
        })
    }
}

/// Vertex of the lazy interval `[v, alpha]` with its distances.
#[derive(Clone, Debug)]
pub struct LazyMember {
    pub vertex: Vertex,
    /// Distance from the interval endpoint `v`.
    pub from_v: u32,
    /// Distance from the ball center.
    pub from_center: u32,
}

/// Vertices of `[v, alpha]` within distance `r` of `center`, in BFS order from `v`.
///
/// A step crosses a hyperplane only towards alpha's side and away from `v`'s.
/// Hyperplanes `alpha` leaves undecided are treated as agreeing with `v`.
pub fn interval_members(
    provider: &Provider,
    v: &Vertex,
    alpha: &dyn Orienter,
    center: &Vertex,
    r: u32,
) -> Vec<LazyMember> {
    let offset = provider.distance(center, v).expect("Cayley-type provider") as u32;
    let depth = r + offset;
    let mut seen: HashMap<Vertex, u32> = HashMap::from([(v.clone(), 0)]);
    let mut order = vec![v.clone()];
    let mut q = VecDeque::from([v.clone()]);
    while let Some(x) = q.pop_front() {
        let dx = seen[&x];
        if dx >= depth {
            continue;
        }
        for y in provider.neighbors(&x) {
            if seen.contains_key(&y) {
                continue;
            }
            let key = provider.hyp_key(&x, &y).expect("Cayley-type provider");
            let ys = provider.side(&key, &y);
            if alpha.side(&key) == Some(ys) && provider.side(&key, v) != ys {
                seen.insert(y.clone(), dx + 1);
                order.push(y.clone());
                q.push_back(y);
            }
        }
    }
    order
        .into_iter()
        .filter_map(|u| {
            let dc = provider.distance(center, &u).unwrap() as u32;
            (dc <= r).then(|| LazyMember { from_v: seen[&u], from_center: dc, vertex: u })
        })
        .collect()
}

/// Vertices of the strip between `alpha` and `beta`.
#[derive(Clone, Debug)]
pub struct LazyStrip {
    /// Projection of the provider base onto the strip; `None` if the strip is empty
    /// (no strip vertex reached within the search radius).
    pub center: Option<Vertex>,
    /// Members with their distance from `center`, within the requested radius.
    pub members: Vec<(Vertex, u32)>,
}

/// Strip `[alpha, beta]` restricted to vertices, searched within `r_max` of
/// the projection of the base vertex.
pub fn strip_members(provider: &Provider, alpha: &dyn Orienter, beta: &dyn Orienter, r_max: u32) -> LazyStrip {
    let agreed = |key: &HypKey| match (alpha.side(key), beta.side(key)) {
        (Some(a), Some(b)) if a == b => Some(a),
        _ => None,
    };
    let mut x = provider.base();
    let mut steps = 0;
    loop {
        let next = provider.neighbors(&x).into_iter().find(|y| {
            let key = provider.hyp_key(&x, y).unwrap();
            agreed(&key).is_some_and(|o| provider.side(&key, &x) != o)
        });
        match next {
            None => break,
            Some(y) => {
                if steps >= r_max {
                    return LazyStrip { center: None, members: Vec::new() };
                }
                x = y;
                steps += 1;
            }
        }
    }
    let mut seen: HashMap<Vertex, u32> = HashMap::from([(x.clone(), 0)]);
    let mut members = vec![(x.clone(), 0)];
    let mut q = VecDeque::from([x.clone()]);
    while let Some(u) = q.pop_front() {
        let du = seen[&u];
        if du >= r_max {
            continue;
        }
        for y in provider.neighbors(&u) {
            if seen.contains_key(&y) {
                continue;
            }
            let key = provider.hyp_key(&u, &y).unwrap();
            if agreed(&key).is_none() {
                seen.insert(y.clone(), du + 1);
                members.push((y.clone(), du + 1));
                q.push_back(y);
            }
        }
    }
    LazyStrip { center: Some(x), members }
}
