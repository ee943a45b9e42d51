//! Random walks on Cayley-type providers: boundary limits, stationary
//! measures, proximality and skewering searches, strips and entropy.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::boundary::UltrafilterApprox;
use crate::complex::lazy::{strip_members, BallOrienter, Orienter, Translated};
use crate::complex::{ComplexError, CubeBall, Endpoint, Halfspace, HypKey, Orientation, Provider, Vertex};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("operation needs a Cayley-type provider")]
    NotCayley,
    #[error("invalid walk configuration: {0}")]
    Config(String),
    #[error("trajectory {0} left the radius and was truncated")]
    Flagged(usize),
    #[error("no convergence at this scale: {undecided} of {crossed} crossed hyperplanes undecided")]
    NoConvergence { undecided: usize, crossed: usize },
    #[error("halfspace {0} lies outside the walk radius")]
    OutsideRadius(String),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Finitely supported step distribution and sampling parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub generators: Vec<Vertex>,
    pub weights: Vec<f64>,
    pub steps: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// Fraction of the trajectory used as the stability window.
    pub window: f64,
}

pub const DEFAULT_WINDOW: f64 = 0.25;

impl WalkConfig {
    /// Uniform measure on the provider's symmetric generating set.
    pub fn uniform(provider: &Provider, steps: usize, trajectories: usize, seed: u64) -> Self {
        let generators = provider.generators();
        let w = 1.0 / generators.len() as f64;
        WalkConfig { weights: vec![w; generators.len()], generators, steps, trajectories, seed, window: DEFAULT_WINDOW }
    }

    /// Weights positive and summing to one; every generator's inverse is a
    /// product of at most `max_len` generators.
    pub fn validate(&self, provider: &Provider, max_len: usize) -> Result<(), DynamicsError> {
        if !provider.is_cayley() {
            return Err(DynamicsError::NotCayley);
        }
        if self.generators.is_empty() || self.generators.len() != self.weights.len() {
            return Err(DynamicsError::Config("need one positive weight per generator".into()));
        }
        if self.weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(DynamicsError::Config("weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(DynamicsError::Config(format!("weights sum to {total}, not 1")));
        }
        if !(self.window > 0.0 && self.window < 1.0) {
            return Err(DynamicsError::Config("window must be a fraction in (0, 1)".into()));
        }
        let mut reach: HashSet<Vertex> = self.generators.iter().cloned().collect();
        let mut frontier: Vec<Vertex> = reach.iter().cloned().collect();
        for _ in 1..max_len {
            let mut next = Vec::new();
            for x in &frontier {
                for g in &self.generators {
                    let y = provider.mul(x, g);
                    if reach.insert(y.clone()) {
                        next.push(y);
                    }
                }
            }
            frontier = next;
        }
        for g in &self.generators {
            let inv = provider.inv(g);
            if !reach.contains(&inv) {
                return Err(DynamicsError::Config(format!(
                    "inverse of {} is not reached within {max_len} steps",
                    provider.name(g)
                )));
            }
        }
        Ok(())
    }

    fn window_steps(&self) -> usize {
        ((self.steps as f64 * self.window).round() as usize).max(1)
    }
}

/// One sampled trajectory, stored as its generator indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub increments: Vec<u16>,
    pub endpoint: Vertex,
    /// Left the walk radius; the trajectory stops at the exit step.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct WalkEnsemble {
    pub provider: Provider,
    pub config: WalkConfig,
    pub start: Vertex,
    pub radius: u32,
    pub trajectories: Vec<Trajectory>,
}

impl WalkEnsemble {
    pub fn flagged(&self) -> usize {
        self.trajectories.iter().filter(|t| t.flagged).count()
    }

    /// Distance from the start to each endpoint.
    pub fn displacements(&self) -> Vec<u64> {
        self.trajectories
            .iter()
            .map(|t| self.provider.distance(&self.start, &t.endpoint).unwrap())
            .collect()
    }

    /// Vertices visited by trajectory `i`, start included.
    pub fn path(&self, i: usize) -> Vec<Vertex> {
        let mut x = self.start.clone();
        let mut out = vec![x.clone()];
        for &g in &self.trajectories[i].increments {
            x = self.provider.mul(&x, &self.config.generators[g as usize]);
            out.push(x.clone());
        }
        out
    }
}

/// Hyperplanes crossed going from `x` to `y` along a geodesic.
fn crossed_keys(p: &Provider, x: &Vertex, y: &Vertex) -> Vec<HypKey> {
    let mut cur = x.clone();
    let mut d = p.distance(&cur, y).unwrap();
    let mut out = Vec::with_capacity(d as usize);
    while d > 0 {
        let next = p
            .neighbors(&cur)
            .into_iter()
            .find(|n| p.distance(n, y).unwrap() < d)
            .expect("a neighbor closer to the target");
        out.push(p.hyp_key(&cur, &next).unwrap());
        cur = next;
        d -= 1;
    }
    out
}

fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples `cfg.trajectories` walks `start · ω₁ω₂⋯ω_n` in parallel. A walk that
/// gets farther than `radius` from `start` is truncated and flagged.
pub fn sample_walks(provider: &Provider, cfg: &WalkConfig, start: &Vertex, radius: u32) -> Result<WalkEnsemble, DynamicsError> {
    if !provider.is_cayley() {
        return Err(DynamicsError::NotCayley);
    }
    let dist = WeightedIndex::new(&cfg.weights).map_err(|e| DynamicsError::Config(e.to_string()))?;
    let trajectories = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i);
            let mut x = start.clone();
            let mut increments = Vec::with_capacity(cfg.steps);
            let mut flagged = false;
            for _ in 0..cfg.steps {
                let g = dist.sample(&mut rng);
                x = provider.mul(&x, &cfg.generators[g]);
                increments.push(g as u16);
                if provider.distance(start, &x).unwrap() > radius as u64 {
                    flagged = true;
                    break;
                }
            }
            Trajectory { increments, endpoint: x, flagged }
        })
        .collect();
    Ok(WalkEnsemble { provider: provider.clone(), config: cfg.clone(), start: start.clone(), radius, trajectories })
}

/// Boundary limit read off a trajectory: the endpoint's side of every
/// hyperplane, except hyperplanes crossed inside the stability window.
#[derive(Clone, Debug)]
pub struct WalkLimit {
    pub provider: Provider,
    pub endpoint: Vertex,
    pub undecided: HashSet<HypKey>,
    pub crossed: usize,
}

impl WalkLimit {
    pub fn undecided_fraction(&self) -> f64 {
        if self.crossed == 0 {
            0.0
        } else {
            self.undecided.len() as f64 / self.crossed as f64
        }
    }

    /// Read through a ball; undecided hyperplanes of the ball are an error.
    pub fn to_approx(&self, ball: &CubeBall) -> Result<UltrafilterApprox, crate::boundary::BoundaryError> {
        UltrafilterApprox::from_orienter(ball, self, crate::boundary::Provenance::WalkLimit)
    }
}

impl Orienter for WalkLimit {
    fn side(&self, key: &HypKey) -> Option<Orientation> {
        if self.undecided.contains(key) {
            None
        } else {
            Some(self.provider.side(key, &self.endpoint))
        }
    }
}

/// Limit ultrafilter of trajectory `i` with a window of `window` steps.
pub fn limit_ultrafilter(ens: &WalkEnsemble, i: usize, window: usize) -> Result<WalkLimit, DynamicsError> {
    let t = &ens.trajectories[i];
    if t.flagged {
        return Err(DynamicsError::Flagged(i));
    }
    let p = &ens.provider;
    let n = t.increments.len();
    let mut last: HashMap<HypKey, usize> = HashMap::new();
    let mut x = ens.start.clone();
    for (step, &g) in t.increments.iter().enumerate() {
        let y = p.mul(&x, &ens.config.generators[g as usize]);
        for k in crossed_keys(p, &x, &y) {
            last.insert(k, step + 1);
        }
        x = y;
    }
    let crossed = last.len();
    let undecided: HashSet<HypKey> = last.into_iter().filter(|&(_, s)| s + window > n).map(|(k, _)| k).collect();
    if 2 * undecided.len() > crossed {
        return Err(DynamicsError::NoConvergence { undecided: undecided.len(), crossed });
    }
    Ok(WalkLimit { provider: p.clone(), endpoint: x, undecided, crossed })
}

/// A halfspace named by its provider key.
pub type KeyHalfspace = (HypKey, Orientation);

/// Fraction of decided limits containing each halfspace, measured in the
/// frame of the ensemble's start (limits are translated by `start⁻¹`).
struct Tally {
    hits: Vec<u64>,
    decided: Vec<u64>,
    converged: usize,
}

fn tally(ens: &WalkEnsemble, halfspaces: &[KeyHalfspace]) -> Tally {
    let window = ens.config.window_steps();
    let p = &ens.provider;
    let shifted: Vec<KeyHalfspace> = halfspaces.iter().map(|(k, o)| p.act_halfspace(&ens.start, k, *o)).collect();
    let m = halfspaces.len();
    let (hits, decided, converged) = (0..ens.trajectories.len())
        .into_par_iter()
        .filter_map(|i| limit_ultrafilter(ens, i, window).ok())
        .map(|lim| {
            let mut hits = vec![0u64; m];
            let mut decided = vec![0u64; m];
            for (j, (k, o)) in shifted.iter().enumerate() {
                if let Some(s) = lim.side(k) {
                    decided[j] += 1;
                    hits[j] += (s == *o) as u64;
                }
            }
            (hits, decided, 1usize)
        })
        .reduce(
            || (vec![0; m], vec![0; m], 0),
            |(mut h1, mut d1, c1), (h2, d2, c2)| {
                for j in 0..m {
                    h1[j] += h2[j];
                    d1[j] += d2[j];
                }
                (h1, d1, c1 + c2)
            },
        );
    Tally { hits, decided, converged }
}

fn estimate(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n.max(1) as f64;
    (p, (p * (1.0 - p) / n.max(1) as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryRow {
    pub halfspace: String,
    pub nu: f64,
    pub se: f64,
    /// `ν̂(U_h) − Σ_g μ(g) ν̂(U_{g⁻¹h})`.
    pub residual: f64,
    pub residual_se: f64,
    /// `ν̂₁(U_h) − ν̂₂(U_h)` against a second ensemble, if given.
    pub gap: Option<f64>,
    pub gap_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryReport {
    pub rows: Vec<StationaryRow>,
    pub converged: usize,
    pub trajectories: usize,
    pub window: usize,
}

impl StationaryReport {
    /// Largest `|x| / se` over residuals and gaps.
    pub fn max_z(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| {
                let z1 = r.residual.abs() / r.residual_se.max(1e-12);
                let z2 = match (r.gap, r.gap_se) {
                    (Some(g), Some(s)) => g.abs() / s.max(1e-12),
                    _ => 0.0,
                };
                [z1, z2]
            })
            .fold(0.0, f64::max)
    }
}

/// Empirical stationary measure on the given halfspaces, with stationarity
/// residuals and, if `second` is given, the gap to a walk from another start.
pub fn stationary_estimate(
    ens: &WalkEnsemble,
    halfspaces: &[KeyHalfspace],
    second: Option<&WalkEnsemble>,
) -> Result<StationaryReport, DynamicsError> {
    let p = &ens.provider;
    for (k, o) in halfspaces {
        if p.key_distance(k) > ens.radius as u64 {
            return Err(DynamicsError::OutsideRadius(format!("{}{}", p.key_name(k), o)));
        }
    }
    let gens = &ens.config.generators;
    let weights = &ens.config.weights;
    // all halfspaces h followed by the translates g⁻¹h
    let mut all: Vec<KeyHalfspace> = halfspaces.to_vec();
    for (k, o) in halfspaces {
        for g in gens {
            all.push(p.act_halfspace(&p.inv(g), k, *o));
        }
    }
    let t = tally(ens, &all);
    let t2 = second.map(|e| tally(e, halfspaces));
    let m = halfspaces.len();
    let rows = (0..m)
        .map(|j| {
            let (nu, se) = estimate(t.hits[j], t.decided[j]);
            let mut mix = 0.0;
            let mut mix_se = 0.0;
            for (gi, w) in weights.iter().enumerate() {
                let idx = m + j * gens.len() + gi;
                let (q, s) = estimate(t.hits[idx], t.decided[idx]);
                mix += w * q;
                mix_se += w * s;
            }
            let (gap, gap_se) = match &t2 {
                Some(t2) => {
                    let (q, s) = estimate(t2.hits[j], t2.decided[j]);
                    (Some(nu - q), Some((se * se + s * s).sqrt()))
                }
                None => (None, None),
            };
            let (k, o) = &halfspaces[j];
            StationaryRow {
                halfspace: format!("{}{}", p.key_name(k), o),
                nu,
                se,
                residual: nu - mix,
                residual_se: se + mix_se,
                gap,
                gap_se,
            }
        })
        .collect();
    Ok(StationaryReport { rows, converged: t.converged, trajectories: ens.trajectories.len(), window: ens.config.window_steps() })
}

/// Group elements by breadth-first search over generator words, shortlex order.
/// Each element appears once, with its first word.
pub fn words(provider: &Provider, max_len: usize) -> Vec<(Vertex, Vec<usize>)> {
    let gens = provider.generators();
    let id = provider.base();
    let mut seen: HashSet<Vertex> = HashSet::from([id.clone()]);
    let mut out = vec![(id.clone(), Vec::new())];
    let mut q = VecDeque::from([(id, Vec::new())]);
    while let Some((x, w)) = q.pop_front() {
        if w.len() >= max_len {
            continue;
        }
        for (i, g) in gens.iter().enumerate() {
            let y = provider.mul(&x, g);
            if seen.insert(y.clone()) {
                let mut w2 = w.clone();
                w2.push(i);
                out.push((y.clone(), w2.clone()));
                q.push_back((y, w2));
            }
        }
    }
    out
}

/// Ball orientation of `g · u` at hyperplane `h`, where `g_inv = g⁻¹`.
fn translated_side(ball: &CubeBall, u: &UltrafilterApprox, g_inv: &Vertex, h: usize) -> Option<Orientation> {
    let inner = BallOrienter { ball, orientation: &u.orientation };
    let t = Translated { provider: ball.provider(), g_inv: g_inv.clone(), inner: &inner };
    let key = ball.key_of(h)?;
    t.side(&key).map(|o| ball.ball_orientation(h, o))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupWitness {
    pub element: Vertex,
    pub word: String,
}

fn witness(provider: &Provider, g: &Vertex) -> GroupWitness {
    GroupWitness { element: g.clone(), word: provider.name(g) }
}

/// Shortest `g` (shortlex) with `g·u₁` and `g·u₂` both in the sector. Only
/// elements for which every sector hyperplane lies within `R_in − |g|` count.
pub fn proximality_search(
    ball: &CubeBall,
    u1: &UltrafilterApprox,
    u2: &UltrafilterApprox,
    sector: &[Halfspace],
    max_len: usize,
) -> Result<Option<GroupWitness>, DynamicsError> {
    let p = ball.provider();
    if !p.is_cayley() {
        return Err(DynamicsError::NotCayley);
    }
    let inner = ball.inner_radius().unwrap_or(u32::MAX);
    for (g, _) in words(p, max_len) {
        let len = p.length(&g) as u32;
        if sector.iter().any(|s| ball.hyperplane(s.hyp).distance + len > inner) {
            continue;
        }
        let g_inv = p.inv(&g);
        let inside = |u: &UltrafilterApprox| {
            sector.iter().all(|s| translated_side(ball, u, &g_inv, s.hyp) == Some(s.orient))
        };
        if inside(u1) && inside(u2) {
            return Ok(Some(witness(p, &g)));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FlipSkew {
    /// `g` with `g·h* ⊆ h`.
    pub flipper: Option<GroupWitness>,
    /// `g` and `n` with `gⁿ·h ⊊ h`, certified by `g²ⁿ·h ⊊ gⁿ·h`.
    pub skewerer: Option<(GroupWitness, u32)>,
}

/// Largest power tried for skewering.
pub const MAX_SKEWER_POWER: u32 = 3;

/// Ball halfspace `g · h`, if it lies on a trusted hyperplane.
fn act_on_ball(ball: &CubeBall, g: &Vertex, h: Halfspace) -> Option<Halfspace> {
    let key = ball.key_of(h.hyp)?;
    let (k2, o2) = ball.provider().act_halfspace(g, &key, ball.ball_orientation(h.hyp, h.orient));
    let h2 = ball.hyperplane_of_key(&k2)?;
    if !ball.trusted(h2) {
        return None;
    }
    Some(Halfspace::new(h2, ball.ball_orientation(h2, o2)))
}

fn proper_subset(ball: &CubeBall, a: Halfspace, b: Halfspace) -> bool {
    a.hyp != b.hyp && ball.relation_visible(a.hyp, b.hyp) && ball.halfspace_subset(a, b)
}

/// Shortest flipper and skewerer of `h` among words of length at most `max_len`.
/// Non-Cayley providers have no group to search and give an empty result.
pub fn find_flipper_skewerer(ball: &CubeBall, h: Halfspace, max_len: usize) -> FlipSkew {
    let p = ball.provider();
    let mut out = FlipSkew::default();
    if !p.is_cayley() || !ball.trusted(h.hyp) {
        return out;
    }
    let star = Halfspace::new(h.hyp, !h.orient);
    for (g, _) in words(p, max_len).into_iter().skip(1) {
        if out.flipper.is_none() {
            if let Some(f) = act_on_ball(ball, &g, star) {
                if f == h || proper_subset(ball, f, h) {
                    out.flipper = Some(witness(p, &g));
                }
            }
        }
        if out.skewerer.is_none() {
            let mut power = p.base();
            for n in 1..=MAX_SKEWER_POWER {
                power = p.mul(&power, &g);
                let square = p.mul(&power, &power);
                let (Some(gn), Some(g2n)) = (act_on_ball(ball, &power, h), act_on_ball(ball, &square, h)) else {
                    break;
                };
                if proper_subset(ball, gn, h) && proper_subset(ball, g2n, gn) {
                    out.skewerer = Some((witness(p, &g), n));
                    break;
                }
            }
        }
        if out.flipper.is_some() && out.skewerer.is_some() {
            break;
        }
    }
    out
}

/// Least-squares slope of `ln count` against `ln r` over `r ∈ [r_max/2, r_max]`.
pub fn growth_degree(counts: &[u64]) -> Option<f64> {
    let r_max = counts.len().checked_sub(1)?;
    let pts: Vec<(f64, f64)> = ((r_max / 2).max(1)..=r_max)
        .filter(|&r| counts[r] > 0)
        .map(|r| ((r as f64).ln(), (counts[r] as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Strip between two ultrafilters with its growth around its nearest point to the base.
#[derive(Clone, Debug, PartialEq)]
pub struct StripProfile {
    pub center: Option<String>,
    pub members: Vec<String>,
    pub generic: bool,
    /// `|strip ∩ B(center, r)|` for `r = 0..=r_max`.
    pub counts: Vec<u64>,
    pub degree: Option<f64>,
}

fn cumulative(dists: impl Iterator<Item = u32>, r_max: u32) -> Vec<u64> {
    let mut c = vec![0u64; r_max as usize + 1];
    for d in dists {
        if d <= r_max {
            c[d as usize] += 1;
        }
    }
    for i in 1..c.len() {
        c[i] += c[i - 1];
    }
    c
}

/// Strip `[u₁, u₂] ∩ X` inside a ball. Only strip vertices within the
/// trusted radius make the pair generic; the others may be rim artifacts.
pub fn strip_profile(ball: &CubeBall, u1: &UltrafilterApprox, u2: &UltrafilterApprox, r_max: u32) -> Result<StripProfile, DynamicsError> {
    let i = ball.interval(Endpoint::Orientation(&u1.orientation), Endpoint::Orientation(&u2.orientation))?;
    let inner = ball.inner_radius().unwrap_or(u32::MAX);
    let trusted: Vec<usize> = i.members.iter().copied().filter(|&v| ball.depth(v) <= inner).collect();
    let center = trusted.iter().copied().min_by_key(|&v| (ball.depth(v), v));
    let counts = match center {
        Some(c) => cumulative(trusted.iter().map(|&v| ball.distance(c, v) as u32), r_max),
        None => vec![0; r_max as usize + 1],
    };
    Ok(StripProfile {
        center: center.map(|c| ball.name(c)),
        members: i.members.iter().map(|&v| ball.name(v)).collect(),
        generic: center.is_some(),
        degree: growth_degree(&counts),
        counts,
    })
}

/// Strip between two lazy ultrafilters on a Cayley-type provider.
pub fn strip_profile_lazy(provider: &Provider, alpha: &dyn Orienter, beta: &dyn Orienter, r_max: u32) -> Result<StripProfile, DynamicsError> {
    if !provider.is_cayley() {
        return Err(DynamicsError::NotCayley);
    }
    let s = strip_members(provider, alpha, beta, r_max);
    let counts = cumulative(s.members.iter().map(|&(_, d)| d), r_max);
    Ok(StripProfile {
        generic: s.center.is_some(),
        center: s.center.as_ref().map(|c| provider.name(c)),
        members: s.members.iter().map(|(v, _)| provider.name(v)).collect(),
        degree: growth_degree(&counts),
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntropyMethod {
    Exact,
    /// Plug-in estimate from sampled endpoints; biased low.
    MonteCarlo { samples: usize },
}

/// `h[n] = −Σ_g μ*ⁿ(g) ln μ*ⁿ(g)` for `n = 0..=n_max` (unnormalized).
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyProfile {
    pub h: Vec<f64>,
    pub method: Vec<EntropyMethod>,
    pub support: Vec<usize>,
    /// `Σ μ(g) ln |g|` over non-identity support.
    pub log_moment: f64,
}

/// Slack for float round-off in subadditivity checks.
pub const ENTROPY_SLACK: f64 = 1e-9;

impl EntropyProfile {
    /// `H_n / n`.
    pub fn rate(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.h[n] / n as f64
        }
    }

    /// Pairs `(n, m)` among exact values with `h[n+m] > h[n] + h[m]`.
    pub fn subadditivity_violations(&self) -> Vec<(usize, usize)> {
        let exact = |n: usize| self.method[n] == EntropyMethod::Exact;
        let mut out = Vec::new();
        for n in 1..self.h.len() {
            for m in n..self.h.len() - n {
                if exact(n) && exact(m) && exact(n + m) && self.h[n + m] > self.h[n] + self.h[m] + ENTROPY_SLACK {
                    out.push((n, m));
                }
            }
        }
        out
    }
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    probs.filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// Exact convolution powers of μ while their support stays within `cap`,
/// then Monte Carlo with `cfg.trajectories` samples.
pub fn entropy_profile(provider: &Provider, cfg: &WalkConfig, n_max: usize, cap: usize) -> Result<EntropyProfile, DynamicsError> {
    if !provider.is_cayley() {
        return Err(DynamicsError::NotCayley);
    }
    let log_moment = cfg
        .generators
        .iter()
        .zip(&cfg.weights)
        .map(|(g, w)| {
            let l = provider.length(g);
            if l == 0 { 0.0 } else { w * (l as f64).ln() }
        })
        .sum();
    let mut h = vec![0.0];
    let mut method = vec![EntropyMethod::Exact];
    let mut support = vec![1];
    let mut dist: HashMap<Vertex, f64> = HashMap::from([(provider.base(), 1.0)]);
    let mut exact = true;
    for n in 1..=n_max {
        if exact {
            let mut next: HashMap<Vertex, f64> = HashMap::with_capacity(dist.len() * 2);
            for (x, px) in &dist {
                for (g, w) in cfg.generators.iter().zip(&cfg.weights) {
                    *next.entry(provider.mul(x, g)).or_insert(0.0) += px * w;
                }
            }
            if next.len() <= cap {
                dist = next;
                h.push(shannon(dist.values().copied()));
                method.push(EntropyMethod::Exact);
                support.push(dist.len());
                continue;
            }
            exact = false;
        }
        let walk = WalkConfig { steps: n, ..cfg.clone() };
        let ens = sample_walks(provider, &walk, &provider.base(), u32::MAX)?;
        let mut counts: HashMap<&Vertex, usize> = HashMap::new();
        for t in &ens.trajectories {
            *counts.entry(&t.endpoint).or_insert(0) += 1;
        }
        let total = ens.trajectories.len() as f64;
        h.push(shannon(counts.values().map(|&c| c as f64 / total)));
        method.push(EntropyMethod::MonteCarlo { samples: ens.trajectories.len() });
        support.push(counts.len());
    }
    Ok(EntropyProfile { h, method, support, log_moment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Provenance;
    use crate::complex::lazy::{GridCoord, GridUltra, ProductUltra, TreeRay};
    use crate::complex::Explicit;

    #[test]
    fn config_validation() {
        let t = Provider::tree(3);
        let c = WalkConfig::uniform(&t, 10, 10, 1);
        assert!(c.validate(&t, 3).is_ok());
        let g = Provider::grid(2);
        let mut c = WalkConfig::uniform(&g, 10, 10, 1);
        assert!(c.validate(&g, 3).is_ok());
        c.generators = vec![Vertex::Point(vec![1, 0]), Vertex::Point(vec![0, 1])];
        c.weights = vec![0.5, 0.5];
        assert!(matches!(c.validate(&g, 6), Err(DynamicsError::Config(_))));
        c.weights = vec![0.7, 0.7];
        assert!(c.validate(&g, 6).is_err());
    }

    #[test]
    fn walks_are_deterministic_and_drift() {
        let t = Provider::tree(3);
        let cfg = WalkConfig::uniform(&t, 200, 400, 7);
        let a = sample_walks(&t, &cfg, &t.base(), 250).unwrap();
        let b = sample_walks(&t, &cfg, &t.base(), 250).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        let d = a.displacements();
        let mean = d.iter().sum::<u64>() as f64 / d.len() as f64;
        // distance is a birth-death chain with drift 1/3 away from the root
        assert!((mean - 200.0 / 3.0).abs() < 3.0, "mean displacement {mean}");
        let short = sample_walks(&t, &cfg, &t.base(), 20).unwrap();
        assert!(short.flagged() > 350);
        assert_eq!(a.path(0).len(), 201);
    }

    #[test]
    fn grid_walks_stay_diffusive() {
        let g = Provider::grid(2);
        let cfg = WalkConfig::uniform(&g, 1000, 200, 3);
        let e = sample_walks(&g, &cfg, &g.base(), 2000).unwrap();
        let d = e.displacements();
        // E|x|_1 is about sqrt(n) times a constant near 1.13
        let mean = d.iter().sum::<u64>() as f64 / d.len() as f64;
        assert!(mean < 3.0 * (1000f64).sqrt());
        let small = d.iter().filter(|&&x| x < 100).count();
        assert!(small > 150);
    }

    #[test]
    fn tree_limits_follow_the_escape_ray() {
        let t = Provider::tree(3);
        let cfg = WalkConfig::uniform(&t, 200, 50, 11);
        let e = sample_walks(&t, &cfg, &t.base(), 250).unwrap();
        let mut ok = 0;
        for i in 0..50 {
            let Ok(lim) = limit_ultrafilter(&e, i, 50) else { continue };
            ok += 1;
            let w = lim.endpoint.word().to_vec();
            assert!(lim.undecided.len() <= 50);
            let base = HypKey::Tree(vec![w[0]]);
            assert_eq!(lim.side(&base), Some(Orientation::Plus));
        }
        assert!(ok >= 45);
    }

    #[test]
    fn grid_limits_do_not_settle() {
        let g = Provider::grid(2);
        let t = Provider::tree(3);
        let frac = |p: &Provider| {
            let cfg = WalkConfig::uniform(p, 200, 100, 5);
            let e = sample_walks(p, &cfg, &p.base(), 400).unwrap();
            let mut fails = 0;
            let mut total = 0.0;
            for i in 0..100 {
                match limit_ultrafilter(&e, i, 50) {
                    Ok(l) => total += l.undecided_fraction(),
                    Err(_) => {
                        fails += 1;
                        total += 1.0;
                    }
                }
            }
            (fails, total / 100.0)
        };
        let (gf, gm) = frac(&g);
        let (tf, tm) = frac(&t);
        assert!(gm > tm && gf > tf, "grid {gf} {gm} tree {tf} {tm}");
    }

    #[test]
    fn product_limits_are_factorwise() {
        let p = Provider::product(vec![Provider::tree(3), Provider::tree(3)]);
        let cfg = WalkConfig::uniform(&p, 200, 20, 2);
        let e = sample_walks(&p, &cfg, &p.base(), 250).unwrap();
        let lim = (0..20).find_map(|i| limit_ultrafilter(&e, i, 50).ok()).unwrap();
        for f in 0..2 {
            let w = lim.endpoint.parts()[f].word().to_vec();
            let k = HypKey::Factor(f, Box::new(HypKey::Tree(vec![w[0]])));
            assert_eq!(lim.side(&k), Some(Orientation::Plus));
        }
    }

    #[test]
    fn stationary_tree() {
        let t = Provider::tree(3);
        let cfg = WalkConfig::uniform(&t, 150, 3000, 21);
        let e = sample_walks(&t, &cfg, &t.base(), 200).unwrap();
        let start2 = Vertex::Word(vec![0, 1, 2, 0]);
        let cfg2 = WalkConfig { seed: 22, ..cfg.clone() };
        let e2 = sample_walks(&t, &cfg2, &start2, 200).unwrap();
        let hs: Vec<KeyHalfspace> = (0..3).map(|i| (HypKey::Tree(vec![i]), Orientation::Plus)).collect();
        let r = stationary_estimate(&e, &hs, Some(&e2)).unwrap();
        for row in &r.rows {
            assert!((row.nu - 1.0 / 3.0).abs() <= 3.0 * row.se, "{row:?}");
        }
        assert!(r.max_z() <= 3.0, "{r:?}");
        let comp: Vec<KeyHalfspace> = hs.iter().map(|(k, o)| (k.clone(), !*o)).collect();
        let rc = stationary_estimate(&e, &comp, None).unwrap();
        for (a, b) in r.rows.iter().zip(&rc.rows) {
            assert!((a.nu + b.nu - 1.0).abs() < 1e-12);
        }
        let far = vec![(HypKey::Tree([0, 1].repeat(120)), Orientation::Plus)];
        assert!(matches!(stationary_estimate(&e, &far, None), Err(DynamicsError::OutsideRadius(_))));
    }

    #[test]
    fn word_order() {
        let t = Provider::tree(3);
        let w = words(&t, 2);
        assert_eq!(w.len(), 1 + 3 + 6);
        assert_eq!(w[1].1, vec![0]);
        assert_eq!(w[4].1, vec![0, 1]);
    }

    #[test]
    fn proximality() {
        let t = Provider::tree(3);
        let ball = CubeBall::build(&t, 10).unwrap();
        let u1 = UltrafilterApprox::from_orienter(&ball, &TreeRay::new(vec![], vec![0, 1]), Provenance::Given).unwrap();
        let u2 = UltrafilterApprox::from_orienter(&ball, &TreeRay::new(vec![], vec![1, 0]), Provenance::Given).unwrap();
        let h = ball.hyperplane_of_key(&HypKey::Tree(vec![2])).unwrap();
        let s = Halfspace::new(h, ball.ball_orientation(h, Orientation::Plus));
        let g = proximality_search(&ball, &u1, &u2, &[s], 3).unwrap().unwrap();
        assert_eq!(g.word, "c");
        assert_eq!(proximality_search(&ball, &u1, &u1, &[u1.halfspace(0)], 0).unwrap().unwrap().word, "e");
        let deep = ball.hyperplane_of_key(&HypKey::Tree(vec![2, 0, 2])).unwrap();
        let s = Halfspace::new(deep, ball.ball_orientation(deep, Orientation::Plus));
        let g = proximality_search(&ball, &u1, &u2, &[s], 4).unwrap().unwrap();
        assert_eq!(t.length(&g.element), 3);

        let gp = Provider::grid(2);
        let gb = CubeBall::build(&gp, 10).unwrap();
        let ne = UltrafilterApprox::from_orienter(&gb, &GridUltra(vec![GridCoord::PlusInf, GridCoord::PlusInf]), Provenance::Given).unwrap();
        let sw = UltrafilterApprox::from_orienter(&gb, &GridUltra(vec![GridCoord::MinusInf, GridCoord::MinusInf]), Provenance::Given).unwrap();
        let x0 = gb.hyperplane_of_key(&HypKey::Grid { axis: 0, cut: 0 }).unwrap();
        let y0 = gb.hyperplane_of_key(&HypKey::Grid { axis: 1, cut: 0 }).unwrap();
        let sector = [ne.halfspace(x0), ne.halfspace(y0)];
        assert_eq!(proximality_search(&gb, &ne, &sw, &sector, 4).unwrap(), None);
    }

    #[test]
    fn flipping_and_skewering() {
        let t = CubeBall::build(&Provider::tree(3), 8).unwrap();
        let h = t.hyperplane_of_key(&HypKey::Tree(vec![0])).unwrap();
        let hs = Halfspace::new(h, t.ball_orientation(h, Orientation::Plus));
        let r = find_flipper_skewerer(&t, hs, 2);
        let (g, _) = r.skewerer.unwrap();
        assert!(t.provider().length(&g.element) <= 2);
        assert_eq!(r.flipper.unwrap().word, "a");

        let g = CubeBall::build(&Provider::grid(2), 10).unwrap();
        let x = g.hyperplane_of_key(&HypKey::Grid { axis: 0, cut: 0 }).unwrap();
        let r = find_flipper_skewerer(&g, Halfspace::new(x, Orientation::Plus), 2);
        assert!(r.skewerer.is_some());
        assert!(r.flipper.is_none());

        let e = CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap();
        assert_eq!(find_flipper_skewerer(&e, Halfspace::new(0, Orientation::Plus), 3), FlipSkew::default());
    }

    #[test]
    fn strips() {
        let t = Provider::tree(3);
        let a = TreeRay::new(vec![], vec![0, 1]);
        let b = TreeRay::new(vec![], vec![1, 0]);
        let s = strip_profile_lazy(&t, &a, &b, 40).unwrap();
        assert!(s.generic);
        assert_eq!(s.counts[40], 81);
        let d = s.degree.unwrap();
        assert!((0.8..=1.2).contains(&d));

        let p = Provider::product(vec![t.clone(), t.clone()]);
        let pa = ProductUltra(vec![Box::new(a.clone()), Box::new(a.clone())]);
        let pb = ProductUltra(vec![Box::new(b.clone()), Box::new(b.clone())]);
        let s = strip_profile_lazy(&p, &pa, &pb, 30).unwrap();
        let d = s.degree.unwrap();
        assert!((1.7..=2.3).contains(&d), "{d}");

        let g = Provider::grid(2);
        let ne = GridUltra(vec![GridCoord::PlusInf, GridCoord::PlusInf]);
        let nw = GridUltra(vec![GridCoord::MinusInf, GridCoord::PlusInf]);
        assert!(!strip_profile_lazy(&g, &ne, &nw, 20).unwrap().generic);

        // ball strip agrees with the lazy strip inside the trusted radius
        let ball = CubeBall::build(&t, 10).unwrap();
        let ua = UltrafilterApprox::from_orienter(&ball, &a, Provenance::Given).unwrap();
        let ub = UltrafilterApprox::from_orienter(&ball, &b, Provenance::Given).unwrap();
        let sb = strip_profile(&ball, &ua, &ub, 8).unwrap();
        assert!(sb.generic);
        let lazy = strip_profile_lazy(&t, &a, &b, 8).unwrap();
        assert_eq!(sb.counts, lazy.counts);
        let gb = CubeBall::build(&g, 10).unwrap();
        let une = UltrafilterApprox::from_orienter(&gb, &ne, Provenance::Given).unwrap();
        let unw = UltrafilterApprox::from_orienter(&gb, &nw, Provenance::Given).unwrap();
        let sg = strip_profile(&gb, &une, &unw, 8).unwrap();
        assert!(!sg.generic);
    }

    #[test]
    fn entropy() {
        let g = Provider::grid(2);
        let cfg = WalkConfig::uniform(&g, 0, 100, 1);
        let e = entropy_profile(&g, &cfg, 10, 1 << 20).unwrap();
        assert!((e.h[1] - 4f64.ln()).abs() < 1e-12);
        assert!(e.subadditivity_violations().is_empty());
        // rotated coordinates are two independent simple walks
        let binom = |n: u64| {
            let mut s = 0.0;
            let mut c = 1.0f64;
            for k in 0..=n {
                if k > 0 {
                    c *= (n - k + 1) as f64 / k as f64;
                }
                let p = c / 2f64.powi(n as i32);
                s -= p * p.ln();
            }
            s
        };
        assert!((e.h[10] - 2.0 * binom(10)).abs() < 1e-9);
        let point = WalkConfig { generators: vec![Vertex::Point(vec![1, 0])], weights: vec![1.0], ..cfg.clone() };
        let z = entropy_profile(&g, &point, 5, 100).unwrap();
        assert!(z.h.iter().all(|&x| x.abs() < 1e-12));
        let capped = entropy_profile(&g, &WalkConfig { trajectories: 2000, ..cfg }, 6, 30).unwrap();
        assert_eq!(capped.method[6], EntropyMethod::MonteCarlo { samples: 2000 });
        assert!((capped.h[6] - 2.0 * binom(6)).abs() < 0.1);
    }
}
