//! Finite pocsets, their ultrafilters and the dual cube complex.

use std::fmt;

use thiserror::Error;

use crate::complex::{ComplexError, CubeBall, Explicit, Halfspace, Orientation, Provider};

/// Halfspace `<pair>+` or `<pair>-` of a pocset.
pub type HalfspaceId = Halfspace;

/// Default bound on the number of pairs.
pub const MAX_PAIRS: usize = 64;
/// Largest number of ultrafilters enumerated by [`Pocset::dual_complex`].
pub const MAX_ULTRAFILTERS: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PocsetError {
    #[error("pocset has {0} pairs, the limit is {1}")]
    TooManyPairs(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("incomplete choice: pair {0} has no orientation")]
    Incomplete(usize),
    #[error("inconsistent choice: {0} and {1}")]
    Inconsistent(Halfspace, Halfspace),
    #[error("invalid pocset: {0}")]
    Invalid(String),
    #[error("dual complex has more than {0} vertices")]
    TooManyUltrafilters(usize),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axiom {
    Reflexive,
    Antisymmetric,
    Transitive,
    InvolutionNotOrderReversing,
    /// `h <= h*`.
    SelfDual,
    Width,
    FiniteInterval,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::Reflexive => "not reflexive",
            Axiom::Antisymmetric => "not antisymmetric",
            Axiom::Transitive => "not transitive",
            Axiom::InvolutionNotOrderReversing => "involution not order-reversing",
            Axiom::SelfDual => "halfspace below its complement",
            Axiom::Width => "width exceeds the declared bound",
            Axiom::FiniteInterval => "infinite interval",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub axiom: Axiom,
    pub witness: (Halfspace, Halfspace),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Largest pairwise transverse set of pairs.
    pub width: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Result of checking a total choice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UltrafilterCheck {
    Valid,
    /// `h` is chosen, `h <= k`, but `k` is not chosen.
    Violation(Halfspace, Halfspace),
}

/// A finite pocset stored as a relation matrix on the `2n` halfspaces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pocset {
    n: usize,
    leq: Vec<Vec<bool>>,
    dim_bound: Option<usize>,
}

fn idx(h: Halfspace) -> usize {
    2 * h.hyp + (h.orient == Orientation::Minus) as usize
}

fn hs(i: usize) -> Halfspace {
    Halfspace::new(i / 2, if i.is_multiple_of(2) { Orientation::Plus } else { Orientation::Minus })
}

pub fn plus(pair: usize) -> Halfspace {
    Halfspace::new(pair, Orientation::Plus)
}

pub fn minus(pair: usize) -> Halfspace {
    Halfspace::new(pair, Orientation::Minus)
}

fn token(h: Halfspace) -> String {
    format!("{}{}", h.hyp, h.orient)
}

fn parse_token(t: &str) -> Result<Halfspace, PocsetError> {
    let bad = || PocsetError::Parse(format!("bad halfspace token {t:?}"));
    let c = t.chars().last().ok_or_else(bad)?;
    let o = Orientation::from_sign(c).ok_or_else(bad)?;
    let pair = t[..t.len() - 1].parse().map_err(|_| bad())?;
    Ok(Halfspace::new(pair, o))
}

impl Pocset {
    /// The discrete pocset on `n` pairs (every pair transverse to every other).
    pub fn new(n: usize) -> Result<Self, PocsetError> {
        Self::with_limit(n, MAX_PAIRS)
    }

    pub fn with_limit(n: usize, limit: usize) -> Result<Self, PocsetError> {
        if n > limit {
            return Err(PocsetError::TooManyPairs(n, limit));
        }
        let mut leq = vec![vec![false; 2 * n]; 2 * n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        Ok(Pocset { n, leq, dim_bound: None })
    }

    /// Relation given by `h <= k` pairs, closed under transitivity (and
    /// reflexivity) but not under the involution.
    pub fn from_relations(n: usize, rel: &[(Halfspace, Halfspace)]) -> Result<Self, PocsetError> {
        let mut p = Self::new(n)?;
        for &(h, k) in rel {
            p.check_pair(h)?;
            p.check_pair(k)?;
            p.leq[idx(h)][idx(k)] = true;
        }
        p.close();
        Ok(p)
    }

    /// Like [`Pocset::from_relations`], adding `k* <= h*` for each `h <= k`.
    pub fn from_symmetric_relations(n: usize, rel: &[(Halfspace, Halfspace)]) -> Result<Self, PocsetError> {
        let all: Vec<_> = rel.iter().flat_map(|&(h, k)| [(h, k), (k.star(), h.star())]).collect();
        Self::from_relations(n, &all)
    }

    fn check_pair(&self, h: Halfspace) -> Result<(), PocsetError> {
        if h.hyp >= self.n {
            return Err(PocsetError::Parse(format!("pair {} out of range", h.hyp)));
        }
        Ok(())
    }

    fn close(&mut self) {
        let m = 2 * self.n;
        for k in 0..m {
            for i in 0..m {
                if self.leq[i][k] {
                    for j in 0..m {
                        if self.leq[k][j] {
                            self.leq[i][j] = true;
                        }
                    }
                }
            }
        }
    }

    pub fn set_dimension_bound(&mut self, d: Option<usize>) {
        self.dim_bound = d;
    }

    pub fn num_pairs(&self) -> usize {
        self.n
    }

    pub fn leq(&self, h: Halfspace, k: Halfspace) -> bool {
        self.leq[idx(h)][idx(k)]
    }

    /// Pairs `a`, `b` are transverse: no halfspace of one is comparable with a halfspace of the other.
    pub fn transverse(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        for x in [plus(a), minus(a)] {
            for y in [plus(b), minus(b)] {
                if self.leq(x, y) || self.leq(y, x) {
                    return false;
                }
            }
        }
        true
    }

    /// Largest pairwise transverse set of pairs.
    pub fn width(&self) -> usize {
        let n = self.n;
        let mut best = usize::from(n > 0);
        let mut stack: Vec<(Vec<usize>, usize)> = (0..n).map(|i| (vec![i], i + 1)).collect();
        while let Some((set, next)) = stack.pop() {
            best = best.max(set.len());
            for j in next..n {
                if set.iter().all(|&i| self.transverse(i, j)) {
                    let mut s = set.clone();
                    s.push(j);
                    stack.push((s, j + 1));
                }
            }
        }
        best
    }

    pub fn validate(&self) -> ValidationReport {
        let m = 2 * self.n;
        let mut v = Vec::new();
        let mut push = |axiom, a: usize, b: usize| v.push(Violation { axiom, witness: (hs(a), hs(b)) });
        for i in 0..m {
            if !self.leq[i][i] {
                push(Axiom::Reflexive, i, i);
            }
            if self.leq[i][i ^ 1] {
                push(Axiom::SelfDual, i, i ^ 1);
            }
        }
        for i in 0..m {
            for j in 0..m {
                if !self.leq[i][j] {
                    continue;
                }
                if i < j && self.leq[j][i] {
                    push(Axiom::Antisymmetric, i, j);
                }
                if !self.leq[j ^ 1][i ^ 1] {
                    push(Axiom::InvolutionNotOrderReversing, i, j);
                }
                if let Some(k) = (0..m).find(|&k| self.leq[j][k] && !self.leq[i][k]) {
                    push(Axiom::Transitive, i, k);
                }
            }
        }
        let width = self.width();
        if let Some(d) = self.dim_bound {
            if width > d {
                push(Axiom::Width, 0, 0);
            }
        }
        // Intervals of a finite pocset are finite; nothing to check.
        ValidationReport { violations: v, width }
    }

    /// Check a total choice.
    pub fn is_ultrafilter(&self, choice: &[Option<Orientation>]) -> Result<UltrafilterCheck, PocsetError> {
        if let Some(p) = (0..self.n).find(|&p| choice.get(p).copied().flatten().is_none()) {
            return Err(PocsetError::Incomplete(p));
        }
        let chosen: Vec<Halfspace> = (0..self.n).map(|p| Halfspace::new(p, choice[p].unwrap())).collect();
        for &h in &chosen {
            for &k in &chosen {
                if h.hyp != k.hyp && self.leq(h, k.star()) {
                    return Ok(UltrafilterCheck::Violation(h, k.star()));
                }
            }
        }
        Ok(UltrafilterCheck::Valid)
    }

    pub fn check_total(&self, u: &[Orientation]) -> UltrafilterCheck {
        let c: Vec<Option<Orientation>> = u.iter().map(|&o| Some(o)).collect();
        self.is_ultrafilter(&c).expect("total choice")
    }

    fn compatible(&self, chosen: &[Option<Orientation>], x: Halfspace) -> Option<Halfspace> {
        if self.leq(x, x.star()) {
            return Some(x);
        }
        chosen
            .iter()
            .enumerate()
            .filter_map(|(p, o)| o.map(|o| Halfspace::new(p, o)))
            .find(|&s| s.hyp != x.hyp && self.leq(x, s.star()))
    }

    /// Extend a consistent partial choice to an ultrafilter (a vertex of the dual
    /// complex lying in every chosen halfspace).
    pub fn solve_intersection(&self, partial: &[Halfspace]) -> Result<Vec<Orientation>, PocsetError> {
        let mut chosen: Vec<Option<Orientation>> = vec![None; self.n];
        for &h in partial {
            self.check_pair(h)?;
            match chosen[h.hyp] {
                Some(o) if o != h.orient => return Err(PocsetError::Inconsistent(h, h.star())),
                _ => chosen[h.hyp] = Some(h.orient),
            }
        }
        for &h in partial {
            if let Some(s) = self.compatible(&chosen, h) {
                return Err(PocsetError::Inconsistent(h, s));
            }
        }
        self.extend(chosen)
    }

    fn extend(&self, mut chosen: Vec<Option<Orientation>>) -> Result<Vec<Orientation>, PocsetError> {
        for p in 0..self.n {
            if chosen[p].is_some() {
                continue;
            }
            let o = if self.compatible(&chosen, plus(p)).is_none() {
                Orientation::Plus
            } else if self.compatible(&chosen, minus(p)).is_none() {
                Orientation::Minus
            } else {
                return Err(PocsetError::Invalid(format!("pair {p} cannot be oriented")));
            };
            chosen[p] = Some(o);
        }
        Ok(chosen.into_iter().map(Option::unwrap).collect())
    }

    /// Lift an ultrafilter on the pairs `k` (given in the same order) to the whole pocset.
    pub fn lift_ultrafilter(&self, k: &[usize], u_k: &[Orientation]) -> Result<Vec<Orientation>, PocsetError> {
        if k.len() != u_k.len() {
            return Err(PocsetError::Incomplete(k.len().min(u_k.len())));
        }
        let partial: Vec<Halfspace> = k.iter().zip(u_k).map(|(&p, &o)| Halfspace::new(p, o)).collect();
        self.solve_intersection(&partial)
    }

    /// All ultrafilters, in lexicographic order with plus before minus.
    pub fn ultrafilters(&self, limit: usize) -> Result<Vec<Vec<Orientation>>, PocsetError> {
        let mut out = Vec::new();
        let mut cur: Vec<Option<Orientation>> = vec![None; self.n];
        self.enumerate(0, &mut cur, &mut out, limit)?;
        Ok(out)
    }

    fn enumerate(
        &self,
        p: usize,
        cur: &mut Vec<Option<Orientation>>,
        out: &mut Vec<Vec<Orientation>>,
        limit: usize,
    ) -> Result<(), PocsetError> {
        if p == self.n {
            if out.len() >= limit {
                return Err(PocsetError::TooManyUltrafilters(limit));
            }
            out.push(cur.iter().map(|o| o.unwrap()).collect());
            return Ok(());
        }
        for o in [Orientation::Plus, Orientation::Minus] {
            let x = Halfspace::new(p, o);
            if self.compatible(cur, x).is_none() {
                cur[p] = Some(o);
                self.enumerate(p + 1, cur, out, limit)?;
                cur[p] = None;
            }
        }
        Ok(())
    }

    /// The dual cube complex, its vertices' ultrafilters, and for each ball
    /// hyperplane the pair it comes from.
    pub fn dual_complex(&self) -> Result<DualComplex, PocsetError> {
        let report = self.validate();
        if let Some(v) = report.violations.first() {
            return Err(PocsetError::Invalid(format!("{} at ({}, {})", v.axiom, v.witness.0, v.witness.1)));
        }
        let ufs = self.ultrafilters(MAX_ULTRAFILTERS)?;
        let index: std::collections::HashMap<&[Orientation], u32> =
            ufs.iter().enumerate().map(|(i, u)| (u.as_slice(), i as u32)).collect();
        let names: Vec<String> = ufs.iter().map(|u| u.iter().map(|o| o.sign()).collect()).collect();
        let mut edges = Vec::new();
        for (i, u) in ufs.iter().enumerate() {
            for p in 0..self.n {
                if u[p] == Orientation::Plus {
                    let mut w = u.clone();
                    w[p] = Orientation::Minus;
                    if let Some(&j) = index.get(w.as_slice()) {
                        edges.push((i as u32, j));
                    }
                }
            }
        }
        let e = Explicit::new(names.clone(), &edges, Vec::new(), 0, Some(report.width.max(1)))?;
        let ball = CubeBall::complete(&Provider::explicit(e))?;
        // the ball renumbers vertices; names are the sign strings
        let by_name: std::collections::HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let ufs: Vec<Vec<Orientation>> =
            (0..ball.len()).map(|i| ufs[by_name[ball.name(i).as_str()]].clone()).collect();
        let pair_of = (0..ball.num_hyperplanes())
            .map(|h| {
                let (a, b) = ball.hyperplane(h).canonical;
                let (ua, ub) = (&ufs[a as usize], &ufs[b as usize]);
                (0..self.n).find(|&p| ua[p] != ub[p]).expect("edge changes one pair")
            })
            .collect();
        Ok(DualComplex { ball, ultrafilters: ufs, pair_of })
    }

    /// Load the text format (`pocset <n>` then `le <h> <k>` lines).
    pub fn parse(text: &str) -> Result<Self, PocsetError> {
        let mut n = None;
        let mut rel = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match (toks[0], toks.len()) {
                ("pocset", 2) if n.is_none() => {
                    n = Some(toks[1].parse().map_err(|_| PocsetError::Parse(format!("line {}: bad size", ln + 1)))?)
                }
                ("le", 3) => rel.push((parse_token(toks[1])?, parse_token(toks[2])?)),
                _ => return Err(PocsetError::Parse(format!("line {}: unrecognized line", ln + 1))),
            }
        }
        let n = n.ok_or_else(|| PocsetError::Parse("missing `pocset <n>` header".into()))?;
        Self::from_relations(n, &rel)
    }

    /// Text format listing every strict relation.
    pub fn to_text(&self) -> String {
        let mut s = format!("pocset {}\n", self.n);
        for i in 0..2 * self.n {
            for j in 0..2 * self.n {
                if i != j && self.leq[i][j] {
                    s += &format!("le {} {}\n", token(hs(i)), token(hs(j)));
                }
            }
        }
        s
    }

    /// Halfspace pocset of a ball: one pair per hyperplane, plus = far from base.
    pub fn of_ball(ball: &CubeBall) -> Result<Self, PocsetError> {
        let n = ball.num_hyperplanes();
        let mut p = Self::new(n)?;
        for h in 0..n {
            for k in 0..n {
                if h == k {
                    continue;
                }
                for oh in [Orientation::Plus, Orientation::Minus] {
                    for ok in [Orientation::Plus, Orientation::Minus] {
                        let (a, b) = (Halfspace::new(h, oh), Halfspace::new(k, ok));
                        if ball.halfspace_subset(a, b) {
                            p.leq[idx(a)][idx(b)] = true;
                        }
                    }
                }
            }
        }
        Ok(p)
    }

    /// Restriction of a total choice to the pairs `k`.
    pub fn restrict(u: &[Orientation], k: &[usize]) -> Vec<Orientation> {
        k.iter().map(|&p| u[p]).collect()
    }
}

/// The Sageev dual of a finite pocset.
pub struct DualComplex {
    pub ball: CubeBall,
    /// Ultrafilter of each ball vertex.
    pub ultrafilters: Vec<Vec<Orientation>>,
    /// Pocset pair of each ball hyperplane.
    pub pair_of: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Pocset {
        let rel: Vec<_> = (1..n).map(|i| (plus(i), plus(i - 1))).collect();
        Pocset::from_symmetric_relations(n, &rel).unwrap()
    }

    #[test]
    fn nested_pair_is_valid() {
        let p = chain(2);
        assert!(p.validate().is_valid());
        assert_eq!(p.validate().width, 1);
    }

    #[test]
    fn one_sided_relation_is_reported() {
        let p = Pocset::from_relations(2, &[(plus(0), plus(1))]).unwrap();
        let r = p.validate();
        assert!(r
            .violations
            .iter()
            .any(|v| v.axiom == Axiom::InvolutionNotOrderReversing && v.witness == (plus(0), plus(1))));
    }

    #[test]
    fn antichain_and_chain_duals() {
        for n in 0..=4 {
            let d = Pocset::new(n).unwrap().dual_complex().unwrap();
            assert_eq!(d.ball.len(), 1 << n);
            assert_eq!(d.ball.edges().len(), n * (1 << n) / 2);
            let c = chain(n).dual_complex().unwrap();
            assert_eq!(c.ball.len(), n + 1);
        }
    }

    #[test]
    fn antichain_choices_are_all_valid() {
        let p = Pocset::new(4).unwrap();
        for mask in 0..16u32 {
            let u: Vec<Orientation> = (0..4)
                .map(|i| if mask >> i & 1 == 1 { Orientation::Plus } else { Orientation::Minus })
                .collect();
            assert_eq!(p.check_total(&u), UltrafilterCheck::Valid);
        }
    }

    #[test]
    fn flipping_breaks_a_chain_ultrafilter() {
        let p = chain(3);
        // 2+ <= 1+ <= 0+; choose all plus, then flip 1 to minus.
        let u = vec![Orientation::Plus, Orientation::Minus, Orientation::Plus];
        assert!(matches!(p.check_total(&u), UltrafilterCheck::Violation(_, _)));
        let r = p.is_ultrafilter(&[Some(Orientation::Plus), None, None]);
        assert_eq!(r, Err(PocsetError::Incomplete(1)));
    }

    #[test]
    fn grid_pocset_round_trip() {
        let ball = CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap();
        let p = Pocset::of_ball(&ball).unwrap();
        let r = p.validate();
        assert!(r.is_valid(), "{:?}", r.violations);
        assert_eq!(r.width, 2);
        let d = p.dual_complex().unwrap();
        assert_eq!(d.ball.len(), 9);
        assert_eq!(d.ball.squares().len(), 4);
    }

    #[test]
    fn solve_top_row() {
        let ball = CubeBall::complete(&Provider::explicit(Explicit::grid(3, 3))).unwrap();
        let p = Pocset::of_ball(&ball).unwrap();
        let horizontal: Vec<usize> =
            (0..4).filter(|&h| !ball.hyperplane_name(h).ends_with("_0")).collect();
        assert_eq!(horizontal.len(), 2);
        let partial: Vec<_> = horizontal.iter().map(|&h| plus(h)).collect();
        let u = p.solve_intersection(&partial).unwrap();
        let v = (0..9).find(|&v| ball.vertex_orientation(v) == u).unwrap();
        assert!(ball.name(v).ends_with("_2"));
        assert!(matches!(p.solve_intersection(&[plus(0), minus(0)]), Err(PocsetError::Inconsistent(_, _))));
    }

    #[test]
    fn text_round_trip() {
        let p = chain(3);
        let q = Pocset::parse(&p.to_text()).unwrap();
        assert_eq!(p, q);
        assert!(Pocset::parse("pocset 2\nle 0+ 5-\n").is_err());
        assert_eq!(Pocset::new(65).unwrap_err(), PocsetError::TooManyPairs(65, 64));
    }

    #[test]
    fn lift_identity_and_empty() {
        let p = chain(3);
        for u in p.ultrafilters(100).unwrap() {
            assert_eq!(p.lift_ultrafilter(&[0, 1, 2], &u).unwrap(), u);
        }
        let any = p.lift_ultrafilter(&[], &[]).unwrap();
        assert_eq!(p.check_total(&any), UltrafilterCheck::Valid);
    }
}
