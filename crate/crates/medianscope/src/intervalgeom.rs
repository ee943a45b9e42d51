//! Interval geometry: ball growth inside intervals, symmetric differences,
//! meager hyperplanes, l1 charts, projections and Property A witnesses.

use std::collections::{HashMap, HashSet};

use num_rational::Ratio;
use thiserror::Error;

use crate::boundary::UltrafilterApprox;
use crate::complex::lazy::{interval_members, BallOrienter, Orienter, Translated};
use crate::complex::{ComplexError, CubeBall, Endpoint, IntervalRegion, Provider, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntervalError {
    #[error("vertex {0} is not in the interval")]
    NotInInterval(String),
    #[error("radius {radius} exceeds the trusted radius {limit}")]
    BeyondTrusted { radius: u32, limit: u32 },
    #[error("operation needs a Cayley-type provider")]
    NotCayley,
    #[error("chain decomposition uses {chains} chains but the interval has dimension {dimension}")]
    ChainOverflow { chains: usize, dimension: usize },
    #[error("chart is not isometric on {0} and {1}")]
    NotIsometric(String, String),
    #[error("hyperplane {0} does not cross the interval")]
    NotAHyperplane(usize),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Ball and sphere counts of an interval around a vertex, radius 0 to `r_max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FolnerProfile {
    pub ball: Vec<u64>,
    pub sphere: Vec<u64>,
}

impl FolnerProfile {
    pub fn from_distances(dists: impl IntoIterator<Item = u32>, r_max: u32) -> Self {
        let mut sphere = vec![0u64; r_max as usize + 1];
        for d in dists {
            if d <= r_max {
                sphere[d as usize] += 1;
            }
        }
        let ball = sphere
            .iter()
            .scan(0u64, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        FolnerProfile { ball, sphere }
    }

    pub fn r_max(&self) -> u32 {
        self.ball.len() as u32 - 1
    }

    /// `|S(r)| / |B(r)|` as an exact fraction.
    pub fn ratio(&self, r: u32) -> Ratio<u64> {
        let r = r as usize;
        Ratio::new(self.sphere[r], self.ball[r].max(1))
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..=self.r_max()).map(|r| ratio_f64(self.ratio(r))).collect()
    }

    /// Least `r` from which the ratio stays below `eps` up to `r_max`.
    pub fn uniformity_radius(&self, eps: f64) -> Option<u32> {
        let ratios = self.ratios();
        let mut first = None;
        for (r, &x) in ratios.iter().enumerate() {
            if x < eps {
                first.get_or_insert(r as u32);
            } else {
                first = None;
            }
        }
        first
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,count_ball,count_sphere,ratio\n");
        for r in 0..=self.r_max() {
            let i = r as usize;
            out.push_str(&format!("{r},{},{},{}\n", self.ball[i], self.sphere[i], ratio_f64(self.ratio(r))));
        }
        out
    }
}

fn ratio_f64(x: Ratio<u64>) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn check_radius(ball: &CubeBall, r: u32) -> Result<(), IntervalError> {
    match ball.inner_radius() {
        Some(limit) if r > limit => Err(IntervalError::BeyondTrusted { radius: r, limit }),
        _ => Ok(()),
    }
}

fn check_member(ball: &CubeBall, interval: &IntervalRegion, v: usize) -> Result<(), IntervalError> {
    if interval.members.binary_search(&v).is_ok() {
        Ok(())
    } else {
        Err(IntervalError::NotInInterval(ball.name(v)))
    }
}

/// Growth of interval balls `B_v(I, r)` inside a ball.
pub fn folner_profile(ball: &CubeBall, interval: &IntervalRegion, v: usize, r_max: u32) -> Result<FolnerProfile, IntervalError> {
    check_radius(ball, r_max)?;
    check_member(ball, interval, v)?;
    Ok(FolnerProfile::from_distances(
        interval.members.iter().map(|&u| ball.distance(v, u) as u32),
        r_max,
    ))
}

/// Growth of `B_v([v, alpha], r)` without a ball.
pub fn folner_profile_lazy(provider: &Provider, v: &Vertex, alpha: &dyn Orienter, r_max: u32) -> Result<FolnerProfile, IntervalError> {
    if !provider.is_cayley() {
        return Err(IntervalError::NotCayley);
    }
    let members = interval_members(provider, v, alpha, v, r_max);
    Ok(FolnerProfile::from_distances(members.iter().map(|m| m.from_v), r_max))
}

/// Counts of `([v,a] △ [w,a]) ∩ B(r)` and `([v,a] ∪ [w,a]) ∩ B(r)` around `base`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymdiffProfile {
    pub base: String,
    pub symdiff: Vec<u64>,
    pub union: Vec<u64>,
}

impl SymdiffProfile {
    fn from_members(base: String, a: &HashMap<Vertex, u32>, b: &HashMap<Vertex, u32>, r_max: u32) -> Self {
        let mut symdiff = vec![0u64; r_max as usize + 1];
        let mut union = vec![0u64; r_max as usize + 1];
        let all: HashSet<&Vertex> = a.keys().chain(b.keys()).collect();
        for x in all {
            let d = a.get(x).or_else(|| b.get(x)).copied().unwrap() as usize;
            if d > r_max as usize {
                continue;
            }
            union[d] += 1;
            if a.contains_key(x) != b.contains_key(x) {
                symdiff[d] += 1;
            }
        }
        for s in [&mut symdiff, &mut union] {
            for i in 1..s.len() {
                s[i] += s[i - 1];
            }
        }
        SymdiffProfile { base, symdiff, union }
    }

    pub fn ratio(&self, r: u32) -> Ratio<u64> {
        let r = r as usize;
        Ratio::new(self.symdiff[r], self.union[r].max(1))
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.symdiff.len()).map(|r| ratio_f64(self.ratio(r as u32))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,count_symdiff,count_union,ratio\n");
        for r in 0..self.symdiff.len() {
            out.push_str(&format!("{r},{},{},{}\n", self.symdiff[r], self.union[r], ratio_f64(self.ratio(r as u32))));
        }
        out
    }
}

/// Symmetric difference profile inside a ball, around the ball's base vertex.
pub fn symdiff_profile(
    ball: &CubeBall,
    v: usize,
    w: usize,
    alpha: &UltrafilterApprox,
    r_max: u32,
) -> Result<SymdiffProfile, IntervalError> {
    let collect = |x: usize| -> Result<HashMap<Vertex, u32>, IntervalError> {
        let i = ball.interval(Endpoint::Vertex(x), Endpoint::Orientation(&alpha.orientation))?;
        Ok(i.members.iter().map(|&u| (ball.vertex(u).clone(), ball.depth(u))).collect())
    };
    let (a, b) = (collect(v)?, collect(w)?);
    Ok(SymdiffProfile::from_members(ball.name(ball.base()), &a, &b, r_max))
}

/// Symmetric difference profile on a Cayley-type provider, balls around `center`.
pub fn symdiff_profile_lazy(
    provider: &Provider,
    v: &Vertex,
    w: &Vertex,
    alpha: &dyn Orienter,
    center: &Vertex,
    r_max: u32,
) -> Result<SymdiffProfile, IntervalError> {
    if !provider.is_cayley() {
        return Err(IntervalError::NotCayley);
    }
    let collect = |x: &Vertex| -> HashMap<Vertex, u32> {
        interval_members(provider, x, alpha, center, r_max)
            .into_iter()
            .map(|m| (m.vertex, m.from_center))
            .collect()
    };
    Ok(SymdiffProfile::from_members(provider.name(center), &collect(v), &collect(w), r_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeagerClass {
    MeagerTrending,
    NonMeagerSuspect,
}

/// Default threshold on the carrier ratio at `r_max`.
pub const MEAGER_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct MeagerProfile {
    pub hyperplane: usize,
    /// `|C(h) ∩ B_v(I,r)|` per radius.
    pub carrier: Vec<u64>,
    pub ball: Vec<u64>,
    pub class: MeagerClass,
}

impl MeagerProfile {
    pub fn ratio(&self, r: u32) -> Ratio<u64> {
        let r = r as usize;
        Ratio::new(self.carrier[r], self.ball[r].max(1))
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.ball.len()).map(|r| ratio_f64(self.ratio(r as u32))).collect()
    }
}

/// Share of interval balls taken by the carrier of `h`, balls around the interval anchor.
pub fn meager_profile(
    ball: &CubeBall,
    interval: &IntervalRegion,
    h: usize,
    r_max: u32,
    threshold: f64,
) -> Result<MeagerProfile, IntervalError> {
    check_radius(ball, r_max)?;
    let v = interval.anchor.unwrap_or(interval.members[0]);
    if !interval.hyperplanes.contains(&h) {
        return Err(IntervalError::NotAHyperplane(h));
    }
    let member: HashSet<usize> = interval.members.iter().copied().collect();
    let mut on_carrier = HashSet::new();
    for &e in &ball.hyperplane(h).edges {
        let (a, b) = ball.edges()[e as usize];
        let (a, b) = (a as usize, b as usize);
        if member.contains(&a) && member.contains(&b) {
            on_carrier.insert(a);
            on_carrier.insert(b);
        }
    }
    let prof = FolnerProfile::from_distances(interval.members.iter().map(|&u| ball.distance(v, u) as u32), r_max);
    let car = FolnerProfile::from_distances(on_carrier.iter().map(|&u| ball.distance(v, u) as u32), r_max);
    let mut out = MeagerProfile { hyperplane: h, carrier: car.ball, ball: prof.ball, class: MeagerClass::MeagerTrending };
    if ratio_f64(out.ratio(r_max)) >= threshold {
        out.class = MeagerClass::NonMeagerSuspect;
    }
    Ok(out)
}

/// Hyperplanes of `interval` that split its member set, with the far side
/// (away from `anchor`) of each as a sorted member list.
fn splitting(ball: &CubeBall, interval: &IntervalRegion, anchor: usize) -> Vec<(usize, Vec<usize>)> {
    interval
        .hyperplanes
        .iter()
        .filter_map(|&h| {
            let a = ball.side(h, anchor);
            let far: Vec<usize> = interval.members.iter().copied().filter(|&u| ball.side(h, u) != a).collect();
            (!far.is_empty() && far.len() < interval.members.len()).then_some((h, far))
        })
        .collect()
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.len() <= b.len() && a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Coordinates of an interval in a product of lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingChart {
    pub anchor: usize,
    /// Nested hyperplane families, each listed from the anchor outward.
    pub chains: Vec<Vec<usize>>,
    /// `(vertex, coordinates)` for every member.
    pub coords: Vec<(usize, Vec<i64>)>,
}

impl EmbeddingChart {
    pub fn coordinates(&self, u: usize) -> Option<&[i64]> {
        self.coords.iter().find(|(v, _)| *v == u).map(|(_, c)| c.as_slice())
    }
}

/// Splits the hyperplanes of an interval into nested chains and reads off
/// coordinates. Greedy chains first; if they overshoot the dimension, a
/// minimum chain cover by bipartite matching.
pub fn l1_embedding(ball: &CubeBall, interval: &IntervalRegion) -> Result<EmbeddingChart, IntervalError> {
    let anchor = interval.anchor.unwrap_or(interval.members[0]);
    let mut hs = splitting(ball, interval, anchor);
    hs.sort_by_key(|(h, far)| (std::cmp::Reverse(far.len()), *h));
    let n = hs.len();
    // below[i][j]: hyperplane j lies beyond hyperplane i
    let below: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && subset(&hs[j].1, &hs[i].1)).collect())
        .collect();
    let mut chains = greedy_chains(&below);
    if chains.len() > interval.dimension.max(1) {
        chains = matching_chains(&below);
    }
    if n > 0 && chains.len() > interval.dimension {
        return Err(IntervalError::ChainOverflow { chains: chains.len(), dimension: interval.dimension });
    }
    let chains: Vec<Vec<usize>> = chains.into_iter().map(|c| c.into_iter().map(|i| hs[i].0).collect()).collect();
    let a_side: Vec<Vec<_>> = chains.iter().map(|c| c.iter().map(|&h| ball.side(h, anchor)).collect()).collect();
    let coords: Vec<(usize, Vec<i64>)> = interval
        .members
        .iter()
        .map(|&u| {
            let c = chains
                .iter()
                .zip(&a_side)
                .map(|(chain, sides)| chain.iter().zip(sides).filter(|&(&h, &s)| ball.side(h, u) != s).count() as i64)
                .collect();
            (u, c)
        })
        .collect();
    for (i, (u, cu)) in coords.iter().enumerate() {
        for (w, cw) in &coords[i + 1..] {
            let l1: i64 = cu.iter().zip(cw).map(|(a, b)| (a - b).abs()).sum();
            if l1 as usize != ball.distance(*u, *w) {
                return Err(IntervalError::NotIsometric(ball.name(*u), ball.name(*w)));
            }
        }
    }
    Ok(EmbeddingChart { anchor, chains, coords })
}

fn greedy_chains(below: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = below.len();
    let mut used = vec![false; n];
    let mut chains = Vec::new();
    for start in 0..n {
        if used[start] {
            continue;
        }
        let mut chain = vec![start];
        used[start] = true;
        for j in start + 1..n {
            if !used[j] && below[*chain.last().unwrap()][j] {
                chain.push(j);
                used[j] = true;
            }
        }
        chains.push(chain);
    }
    chains
}

/// Minimum chain cover of a transitive order (Dilworth, via Kuhn matching).
fn matching_chains(below: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = below.len();
    let mut next: Vec<Option<usize>> = vec![None; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    fn augment(i: usize, below: &[Vec<bool>], seen: &mut [bool], next: &mut [Option<usize>], prev: &mut [Option<usize>]) -> bool {
        for j in 0..below.len() {
            if below[i][j] && !seen[j] {
                seen[j] = true;
                if prev[j].is_none_or(|k| augment(k, below, seen, next, prev)) {
                    next[i] = Some(j);
                    prev[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        augment(i, below, &mut seen, &mut next, &mut prev);
    }
    (0..n)
        .filter(|&i| prev[i].is_none())
        .map(|mut i| {
            let mut c = vec![i];
            while let Some(j) = next[i] {
                c.push(j);
                i = j;
            }
            c
        })
        .collect()
}

/// Nearest-point projection of an interval onto the anchor-side carrier of one of its hyperplanes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalProjection {
    pub hyperplane: usize,
    /// The carrier side, which is the image of the projection.
    pub image: Vec<usize>,
    /// `(vertex, projection)` for every member.
    pub map: Vec<(usize, usize)>,
    /// Hyperplanes of the interval collapsed by the projection (those not crossing `h`).
    pub collapsed: Vec<usize>,
    /// Chart of the image.
    pub chart: EmbeddingChart,
}

pub fn project_interval(ball: &CubeBall, interval: &IntervalRegion, h: usize) -> Result<IntervalProjection, IntervalError> {
    let anchor = interval.anchor.unwrap_or(interval.members[0]);
    let member: HashSet<usize> = interval.members.iter().copied().collect();
    let near = ball.side(h, anchor);
    let mut image = Vec::new();
    for &e in &ball.hyperplane(h).edges {
        let (a, b) = ball.edges()[e as usize];
        let (a, b) = (a as usize, b as usize);
        if member.contains(&a) && member.contains(&b) {
            image.push(if ball.side(h, a) == near { a } else { b });
        }
    }
    if image.is_empty() {
        return Err(IntervalError::NotAHyperplane(h));
    }
    image.sort_unstable();
    image.dedup();
    let map = interval
        .members
        .iter()
        .map(|&u| (u, *image.iter().min_by_key(|&&c| (ball.distance(u, c), c)).unwrap()))
        .collect();
    let crossing: HashSet<usize> = interval.hyperplanes.iter().copied().filter(|&k| ball.crosses(h, k)).collect();
    let collapsed = splitting(ball, interval, anchor)
        .into_iter()
        .map(|(k, _)| k)
        .filter(|&k| k != h && !crossing.contains(&k))
        .collect();
    let far_corner = image.iter().copied().max_by_key(|&c| (ball.distance(anchor, c), c)).unwrap();
    let near_corner = image.iter().copied().min_by_key(|&c| (ball.distance(anchor, c), c)).unwrap();
    let sub = ball.vertex_interval(near_corner, far_corner)?;
    if sub.members != image {
        return Err(IntervalError::NotAHyperplane(h));
    }
    let chart = l1_embedding(ball, &sub)?;
    Ok(IntervalProjection { hyperplane: h, image, map, collapsed, chart })
}

/// Ball counts of an interval before and after collapsing the hyperplanes `s`.
pub fn collapse_counts(ball: &CubeBall, interval: &IntervalRegion, s: &[usize], r_max: u32) -> Vec<(u64, u64)> {
    let v = interval.anchor.unwrap_or(interval.members[0]);
    let drop: HashSet<u32> = s.iter().map(|&h| h as u32).collect();
    let key = |u: usize| -> Vec<u32> { ball.plus_set(u).iter().copied().filter(|h| !drop.contains(h)).collect() };
    let kv = key(v);
    let classes: HashSet<Vec<u32>> = interval.members.iter().map(|&u| key(u)).collect();
    let sym = |a: &[u32], b: &[u32]| a.iter().filter(|x| b.binary_search(x).is_err()).count() + b.iter().filter(|x| a.binary_search(x).is_err()).count();
    let before = FolnerProfile::from_distances(interval.members.iter().map(|&u| ball.distance(v, u) as u32), r_max);
    let after = FolnerProfile::from_distances(classes.iter().map(|c| sym(c, &kv) as u32), r_max);
    before.ball.into_iter().zip(after.ball).collect()
}

/// Uniform probability on `B(n, o) ∩ [o, b]`.
pub fn property_a_witness(provider: &Provider, o: &Vertex, b: &dyn Orienter, n: u32) -> Result<Vec<(Vertex, Ratio<i64>)>, IntervalError> {
    if !provider.is_cayley() {
        return Err(IntervalError::NotCayley);
    }
    let mut support: Vec<Vertex> = interval_members(provider, o, b, o, n).into_iter().map(|m| m.vertex).collect();
    support.sort();
    let mass = Ratio::new(1, support.len() as i64);
    Ok(support.into_iter().map(|v| (v, mass)).collect())
}

/// `‖β_n(g b) − g β_n(b)‖₁` for left multiplication by `g`.
pub fn witness_defect(provider: &Provider, g: &Vertex, o: &Vertex, b: &dyn Orienter, n: u32) -> Result<Ratio<i64>, IntervalError> {
    let gb = Translated::new(provider, g, b);
    let lhs: HashMap<Vertex, Ratio<i64>> = property_a_witness(provider, o, &gb, n)?.into_iter().collect();
    let rhs: HashMap<Vertex, Ratio<i64>> = property_a_witness(provider, o, b, n)?
        .into_iter()
        .map(|(v, m)| (provider.mul(g, &v), m))
        .collect();
    let zero = Ratio::from_integer(0);
    let keys: HashSet<&Vertex> = lhs.keys().chain(rhs.keys()).collect();
    Ok(keys
        .into_iter()
        .map(|x| {
            let d = lhs.get(x).copied().unwrap_or(zero) - rhs.get(x).copied().unwrap_or(zero);
            if d < zero { -d } else { d }
        })
        .sum())
}

/// Ball version of [`property_a_witness`]; `n` must stay within the trusted radius.
pub fn property_a_witness_ball(ball: &CubeBall, o: usize, b: &UltrafilterApprox, n: u32) -> Result<Vec<(usize, Ratio<i64>)>, IntervalError> {
    check_radius(ball, n + ball.depth(o))?;
    let alpha = BallOrienter { ball, orientation: &b.orientation };
    property_a_witness(ball.provider(), ball.vertex(o), &alpha, n)?
        .into_iter()
        .map(|(v, m)| Ok((ball.index_of(&v).ok_or_else(|| ComplexError::UnknownVertex(ball.provider().name(&v)))?, m)))
        .collect()
}

/// Ball version of [`witness_defect`].
pub fn witness_defect_ball(ball: &CubeBall, g: &Vertex, o: usize, b: &UltrafilterApprox, n: u32) -> Result<Ratio<i64>, IntervalError> {
    let p = ball.provider();
    if !p.is_cayley() {
        return Err(IntervalError::NotCayley);
    }
    check_radius(ball, n + ball.depth(o) + p.length(g) as u32)?;
    let alpha = BallOrienter { ball, orientation: &b.orientation };
    witness_defect(p, g, ball.vertex(o), &alpha, n)
}
