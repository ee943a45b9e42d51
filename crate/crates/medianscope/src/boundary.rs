//! Ultrafilter approximations over a ball: nonterminating construction,
//! checks, Roller distance, sector neighborhoods and sector hyperplanes.

use num_rational::Ratio;
use thiserror::Error;

use crate::complex::lazy::Orienter;
use crate::complex::{ComplexError, CubeBall, Halfspace, Orientation};
use crate::structure::{hyperplane_inside, product_decomposition, trusted_hyperplanes};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoundaryError {
    #[error("truncation too small: stuck at hyperplane {0}")]
    TruncationTooSmall(String),
    #[error("bounded complex: no nonterminating ultrafilter")]
    Bounded,
    #[error("ultrafilter does not contain halfspace {0}")]
    NotContained(String),
    #[error("inconsistent ultrafilter: {0} and {1} are disjoint")]
    Inconsistent(String, String),
    #[error("ultrafilter leaves hyperplane {0} undecided")]
    Undecided(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    Vertex(usize),
    Constructed,
    WalkLimit,
    Given,
}

/// An orientation of every hyperplane of a ball.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UltrafilterApprox {
    pub orientation: Vec<Orientation>,
    pub provenance: Provenance,
}

impl UltrafilterApprox {
    pub fn vertex(ball: &CubeBall, v: usize) -> Self {
        UltrafilterApprox { orientation: ball.vertex_orientation(v), provenance: Provenance::Vertex(v) }
    }

    /// Read a lazy orientation through the ball's hyperplane keys.
    pub fn from_orienter(ball: &CubeBall, alpha: &dyn Orienter, provenance: Provenance) -> Result<Self, BoundaryError> {
        let mut orientation = Vec::with_capacity(ball.num_hyperplanes());
        for h in 0..ball.num_hyperplanes() {
            let key = ball.key_of(h).ok_or_else(|| {
                BoundaryError::Complex(ComplexError::Config("provider has no hyperplane keys".into()))
            })?;
            let o = alpha.side(&key).ok_or_else(|| BoundaryError::Undecided(ball.hyperplane_name(h)))?;
            orientation.push(ball.ball_orientation(h, o));
        }
        Ok(UltrafilterApprox { orientation, provenance })
    }

    pub fn contains(&self, h: Halfspace) -> bool {
        self.orientation[h.hyp] == h.orient
    }

    pub fn halfspace(&self, h: usize) -> Halfspace {
        Halfspace::new(h, self.orientation[h])
    }

    /// CSV `hyperplane_id,orientation`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("hyperplane_id,orientation\n");
        for (h, o) in self.orientation.iter().enumerate() {
            s += &format!("{h},{o}\n");
        }
        s
    }

    pub fn from_csv(text: &str, hyperplanes: usize) -> Result<Self, BoundaryError> {
        let mut orientation = vec![None; hyperplanes];
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| BoundaryError::Parse(e.to_string()))?;
            let h: usize = rec.get(0).unwrap_or("").trim().parse().map_err(|_| BoundaryError::Parse("bad hyperplane id".into()))?;
            let o = rec
                .get(1)
                .and_then(|t| t.trim().chars().next())
                .and_then(Orientation::from_sign)
                .ok_or_else(|| BoundaryError::Parse("bad orientation".into()))?;
            *orientation.get_mut(h).ok_or_else(|| BoundaryError::Parse(format!("hyperplane {h} out of range")))? = Some(o);
        }
        let orientation = orientation
            .into_iter()
            .enumerate()
            .map(|(h, o)| o.ok_or_else(|| BoundaryError::Undecided(h.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(UltrafilterApprox { orientation, provenance: Provenance::Given })
    }
}

/// First pair of chosen halfspaces that are disjoint, among trusted hyperplanes.
pub fn find_inconsistency(ball: &CubeBall, u: &UltrafilterApprox) -> Option<(Halfspace, Halfspace)> {
    let hs = trusted_hyperplanes(ball);
    for (i, &h) in hs.iter().enumerate() {
        for &k in &hs[i + 1..] {
            if ball.relation_visible(h, k) && ball.disjoint_pair(h, k) == Some((u.orientation[h], u.orientation[k])) {
                return Some((u.halfspace(h), u.halfspace(k)));
            }
        }
    }
    None
}

pub fn check_consistent(ball: &CubeBall, u: &UltrafilterApprox) -> Result<(), BoundaryError> {
    match find_inconsistency(ball, u) {
        Some((a, b)) => Err(BoundaryError::Inconsistent(hs_name(ball, a), hs_name(ball, b))),
        None => Ok(()),
    }
}

pub fn hs_name(ball: &CubeBall, h: Halfspace) -> String {
    format!("{}{}", ball.hyperplane_name(h.hyp), h.orient)
}

/// Whether `h` is chosen by `u` and no chosen halfspace is strictly inside it.
pub fn is_minimal(ball: &CubeBall, u: &UltrafilterApprox, h: Halfspace) -> bool {
    u.contains(h) && smaller_in(ball, u, h).is_none()
}

/// Some chosen halfspace strictly inside `h`, among trusted hyperplanes.
pub fn smaller_in(ball: &CubeBall, u: &UltrafilterApprox, h: Halfspace) -> Option<usize> {
    trusted_hyperplanes(ball)
        .into_iter()
        .find(|&k| k != h.hyp && ball.halfspace_subset(u.halfspace(k), h))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NtCheck {
    Pass { depth: u32 },
    /// First chosen halfspace (in hyperplane order) with nothing smaller chosen.
    Minimal(Halfspace),
}

/// Every chosen halfspace whose hyperplane lies within `depth` strictly contains another chosen one.
pub fn check_nonterminating(ball: &CubeBall, u: &UltrafilterApprox, depth: u32) -> NtCheck {
    for h in 0..ball.num_hyperplanes() {
        if ball.hyperplane(h).distance > depth {
            continue;
        }
        if smaller_in(ball, u, u.halfspace(h)).is_none() {
            return NtCheck::Minimal(u.halfspace(h));
        }
    }
    NtCheck::Pass { depth }
}

/// Greedy nonterminating ultrafilter; see [`construct_nonterminating_from`].
pub fn construct_nonterminating(ball: &CubeBall) -> Result<UltrafilterApprox, BoundaryError> {
    construct_nonterminating_from(ball, None)
}

/// Greedy construction, one descending chain of halfspaces per product factor.
///
/// The current halfspace of a factor forces every hyperplane disjoint from it.
/// The first undecided hyperplane either lies inside the current halfspace (the
/// chain descends into it if that side reaches the rim) or crosses it (a corner
/// hyperplane inside both is found and becomes the new current halfspace).
pub fn construct_nonterminating_from(ball: &CubeBall, start: Option<Halfspace>) -> Result<UltrafilterApprox, BoundaryError> {
    use Orientation::*;
    if ball.is_complete() {
        return Err(BoundaryError::Bounded);
    }
    let n = ball.num_hyperplanes();
    let inner = ball.inner_radius().unwrap_or(u32::MAX);
    let dec = product_decomposition(ball);
    let mut ori: Vec<Option<Orientation>> = vec![None; n];
    let mut cur: Vec<Option<Halfspace>> = vec![None; dec.factors];

    let propagate = |ori: &mut Vec<Option<Orientation>>, c: Halfspace| {
        for (k, slot) in ori.iter_mut().enumerate() {
            if slot.is_none() {
                if let Some((oc, ok)) = ball.disjoint_pair(c.hyp, k) {
                    if oc == c.orient && ball.relation_visible(c.hyp, k) {
                        *slot = Some(!ok);
                    }
                }
            }
        }
    };
    let consistent_side = |ori: &Vec<Option<Orientation>>, k: usize| {
        [Plus, Minus].into_iter().find(|&s| {
            (0..n).all(|d| match ori[d] {
                Some(od) => d == k || ball.disjoint_pair(k, d) != Some((s, od)),
                None => true,
            })
        })
    };

    if let Some(s) = start {
        if !ball.reaches_rim(s) {
            return Err(BoundaryError::TruncationTooSmall(hs_name(ball, s)));
        }
        if let Some(f) = dec.factor_of[s.hyp] {
            cur[f] = Some(s);
        }
        ori[s.hyp] = Some(s.orient);
        propagate(&mut ori, s);
    }

    let mut next = 0;
    while next < n {
        let k = next;
        if ori[k].is_some() {
            next += 1;
            continue;
        }
        let Some(f) = dec.factor_of[k] else {
            let s = consistent_side(&ori, k).ok_or_else(|| BoundaryError::TruncationTooSmall(ball.hyperplane_name(k)))?;
            ori[k] = Some(s);
            continue;
        };
        let Some(c) = cur[f] else {
            let s = if ball.reaches_rim(Halfspace::new(k, Plus)) { Plus } else { Minus };
            let h = Halfspace::new(k, s);
            ori[k] = Some(s);
            cur[f] = Some(h);
            propagate(&mut ori, h);
            continue;
        };
        match ball.disjoint_pair(c.hyp, k) {
            Some((oc, ok)) if oc != c.orient => {
                // k^ok lies inside c
                let inner_side = Halfspace::new(k, ok);
                if ball.reaches_rim(inner_side) {
                    ori[k] = Some(ok);
                    cur[f] = Some(inner_side);
                    propagate(&mut ori, inner_side);
                } else {
                    ori[k] = Some(!ok);
                }
            }
            Some((_, ok)) => ori[k] = Some(!ok),
            None => {
                let corner = [Plus, Minus].into_iter().find_map(|s| {
                    let ks = Halfspace::new(k, s);
                    (0..n)
                        .filter(|&m| m != k && ori[m].is_none())
                        .flat_map(|m| [Halfspace::new(m, Plus), Halfspace::new(m, Minus)])
                        .find(|&mt| {
                            ball.halfspace_subset(mt, c) && ball.halfspace_subset(mt, ks) && ball.reaches_rim(mt)
                        })
                        .map(|mt| (s, mt))
                });
                match corner {
                    Some((s, mt)) => {
                        ori[k] = Some(s);
                        ori[mt.hyp] = Some(mt.orient);
                        cur[f] = Some(mt);
                        propagate(&mut ori, Halfspace::new(k, s));
                        propagate(&mut ori, mt);
                    }
                    None => {
                        if ball.hyperplane(k).distance + 2 < inner {
                            return Err(BoundaryError::TruncationTooSmall(ball.hyperplane_name(k)));
                        }
                        let s = consistent_side(&ori, k)
                            .ok_or_else(|| BoundaryError::TruncationTooSmall(ball.hyperplane_name(k)))?;
                        ori[k] = Some(s);
                    }
                }
            }
        }
    }
    let u = UltrafilterApprox {
        orientation: ori.into_iter().map(Option::unwrap).collect(),
        provenance: Provenance::Constructed,
    };
    let depth = inner.saturating_sub(2);
    match check_nonterminating(ball, &u, depth) {
        NtCheck::Pass { .. } => Ok(u),
        NtCheck::Minimal(h) => Err(BoundaryError::TruncationTooSmall(hs_name(ball, h))),
    }
}

/// `max 1/(d(h, p) + 1)` over hyperplanes separating the two approximations,
/// with `d(h, p)` the number of hyperplanes separating `h` from `p`.
pub fn roller_distance(ball: &CubeBall, p: usize, u1: &UltrafilterApprox, u2: &UltrafilterApprox) -> Ratio<u32> {
    let best = (0..ball.num_hyperplanes())
        .filter(|&h| u1.orientation[h] != u2.orientation[h])
        .map(|h| {
            if p == ball.base() {
                ball.hyperplane(h).distance as usize
            } else {
                ball.carrier(h).unwrap().into_iter().map(|v| ball.distance(p, v)).min().unwrap()
            }
        })
        .min();
    match best {
        Some(d) => Ratio::new(1, d as u32 + 1),
        None => Ratio::from_integer(0),
    }
}

fn pair_cost(ball: &CubeBall, a: usize, b: usize) -> usize {
    match ball.hyperplanes_between(a, b) {
        None => 0,
        Some(s) => s + 1,
    }
}

/// `(N, D)`: number of halfspaces and summed pairwise hyperplane distances.
pub fn complexity(ball: &CubeBall, hs: &[Halfspace]) -> (usize, usize) {
    let mut d = 0;
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            d += pair_cost(ball, hs[i].hyp, hs[j].hyp);
        }
    }
    (hs.len(), d)
}

fn remove_extraneous(ball: &CubeBall, hs: &mut Vec<Halfspace>) {
    hs.sort();
    hs.dedup();
    let mut i = 0;
    while i < hs.len() {
        let redundant = (0..hs.len()).any(|j| j != i && ball.halfspace_subset(hs[j], hs[i]));
        if redundant {
            hs.remove(i);
        } else {
            i += 1;
        }
    }
}

fn pairwise_crossing(ball: &CubeBall, hs: &[Halfspace]) -> Option<(usize, usize)> {
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            if !ball.crosses(hs[i].hyp, hs[j].hyp) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Sector `S` with `u in S ⊆ U`, by lexicographic descent on `(N, D)`.
pub fn sector_neighborhood(ball: &CubeBall, u: &UltrafilterApprox, open: &[Halfspace]) -> Result<Vec<Halfspace>, BoundaryError> {
    for &h in open {
        if h.hyp >= ball.num_hyperplanes() {
            return Err(ComplexError::UnknownHyperplane(h.hyp).into());
        }
        if !u.contains(h) {
            return Err(BoundaryError::NotContained(hs_name(ball, h)));
        }
    }
    let cands = trusted_hyperplanes(ball);
    let mut cur = open.to_vec();
    remove_extraneous(ball, &mut cur);
    loop {
        let Some((i, j)) = pairwise_crossing(ball, &cur) else { return Ok(cur) };
        let before = complexity(ball, &cur);
        let mut best: Option<((usize, usize), Vec<Halfspace>)> = None;
        for target in [i, j] {
            let hi = cur[target];
            for &k in &cands {
                let hk = u.halfspace(k);
                if k == hi.hyp || !ball.halfspace_subset(hk, hi) {
                    continue;
                }
                let mut next = cur.clone();
                next[target] = hk;
                remove_extraneous(ball, &mut next);
                let c = complexity(ball, &next);
                if c < before && best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                    best = Some((c, next));
                }
            }
        }
        match best {
            Some((_, next)) => cur = next,
            None => return Err(BoundaryError::TruncationTooSmall(hs_name(ball, cur[i]))),
        }
    }
}

/// A trusted hyperplane whose dual edges lie in every halfspace of the sector.
pub fn sector_hyperplane(ball: &CubeBall, u: &UltrafilterApprox, sector: &[Halfspace]) -> Result<usize, BoundaryError> {
    for &h in sector {
        if !u.contains(h) {
            return Err(BoundaryError::NotContained(hs_name(ball, h)));
        }
    }
    trusted_hyperplanes(ball)
        .into_iter()
        .find(|&k| hyperplane_inside(ball, k, sector))
        .ok_or_else(|| {
            BoundaryError::TruncationTooSmall(sector.first().map(|&h| hs_name(ball, h)).unwrap_or_default())
        })
}
