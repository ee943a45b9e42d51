//! Experiment specs, dispatch to the library operations, CSV output and
//! baseline comparison.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::boundary::{
    check_consistent, check_nonterminating, construct_nonterminating, hs_name, roller_distance, NtCheck, Provenance,
    UltrafilterApprox,
};
use crate::complex::lazy::{AtVertex, GridCoord, GridUltra, Orienter, ProductUltra, TreeRay};
use crate::complex::{CubeBall, Endpoint, Explicit, Halfspace, HypKey, Orientation, Provider, DEFAULT_VERTEX_CAP};
use crate::dynamics::{self, WalkConfig, DEFAULT_WINDOW};
use crate::intervalgeom::{self, MEAGER_THRESHOLD};
use crate::structure::{deep_report, product_decomposition};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Module(String),
    #[error("baseline mismatch: {0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Module(_) | HarnessError::Io(_) => 1,
            HarnessError::Config(_) => 2,
            HarnessError::Mismatch(_) => 3,
        }
    }
}

fn module<E: Display>(ctx: &str) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Module(format!("{ctx}: {e}"))
}

fn config<E: Display>(ctx: &str) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Config(format!("{ctx}: {e}"))
}

pub const OPERATIONS: [&str; 14] = [
    "build", "decompose", "boundary", "folner", "symdiff", "meager", "embed", "witness", "walk", "stationary", "strip",
    "entropy", "search", "compare",
];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Defaults to the CLI subcommand.
    #[serde(default)]
    pub operation: Option<String>,
    #[serde(default)]
    pub provider: Option<ProviderSpec>,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub walk: Option<WalkSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ProviderSpec {
    #[serde(flatten)]
    pub kind: ProviderKind,
    #[serde(default)]
    pub radius: Option<u32>,
    #[serde(default)]
    pub margin: Option<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderKind {
    Tree { valence: u16 },
    Grid { dim: usize },
    Raag { generators: Vec<String>, #[serde(default)] edges: Vec<(String, String)> },
    Product { factors: Vec<ProviderKind> },
    Explicit { #[serde(default)] text: Option<String>, #[serde(default)] path: Option<PathBuf> },
}

impl ProviderKind {
    pub fn provider(&self) -> Result<Provider, HarnessError> {
        let p = match self {
            ProviderKind::Tree { valence } => Provider::tree(*valence),
            ProviderKind::Grid { dim } => Provider::grid(*dim),
            ProviderKind::Raag { generators, edges } => {
                let g: Vec<&str> = generators.iter().map(String::as_str).collect();
                let e: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                Provider::raag(&g, &e).map_err(config("raag"))?
            }
            ProviderKind::Product { factors } => {
                Provider::product(factors.iter().map(ProviderKind::provider).collect::<Result<_, _>>()?)
            }
            ProviderKind::Explicit { text, path } => {
                let text = match (text, path) {
                    (Some(t), None) => t.clone(),
                    (None, Some(p)) => std::fs::read_to_string(p).map_err(config("explicit complex"))?,
                    _ => return Err(HarnessError::Config("explicit provider needs exactly one of text, path".into())),
                };
                Provider::explicit(Explicit::parse(&text).map_err(config("explicit complex"))?)
            }
        };
        p.validate().map_err(config("provider"))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    /// Generator names; defaults to the provider's symmetric generating set.
    #[serde(default)]
    pub generators: Option<Vec<String>>,
    /// Defaults to uniform.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub steps: usize,
    pub trajectories: usize,
    #[serde(default)]
    pub window: Option<f64>,
    /// Walkers farther than this from the start are flagged; defaults to `steps`.
    #[serde(default)]
    pub radius: Option<u32>,
    #[serde(default)]
    pub start: Option<String>,
}

/// How an ultrafilter is named in a spec.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum UltraSpec {
    Vertex { vertex: String },
    /// Tree ray `prefix period period ...`, letters as vertex words.
    Ray { #[serde(default)] prefix: String, period: String },
    /// Grid coordinates, each an integer, `+inf` or `-inf`.
    Grid { coords: Vec<String> },
    Product { factors: Vec<UltraSpec> },
    /// Greedy nonterminating ultrafilter of the ball.
    Constructed,
    /// CSV written by `boundary construct`.
    File { path: PathBuf },
}

fn tree_letters(p: &Provider, s: &str) -> Result<Vec<u16>, HarnessError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    Ok(p.parse_vertex(s).map_err(config("ray"))?.word().to_vec())
}

fn lazy<'a>(p: &'a Provider, u: &UltraSpec) -> Result<Option<Box<dyn Orienter + 'a>>, HarnessError> {
    Ok(Some(match (u, p) {
        (UltraSpec::Vertex { vertex }, _) if p.is_cayley() => {
            Box::new(AtVertex { provider: p, vertex: p.parse_vertex(vertex).map_err(config("vertex"))? })
        }
        (UltraSpec::Ray { prefix, period }, Provider::Tree { .. }) => {
            let period = tree_letters(p, period)?;
            if period.is_empty() {
                return Err(HarnessError::Config("ray period must be nonempty".into()));
            }
            Box::new(TreeRay::new(tree_letters(p, prefix)?, period))
        }
        (UltraSpec::Grid { coords }, Provider::Grid { dim }) => {
            if coords.len() != *dim {
                return Err(HarnessError::Config("grid ultrafilter has the wrong number of coordinates".into()));
            }
            let c = coords
                .iter()
                .map(|s| match s.trim() {
                    "+inf" | "inf" => Ok(GridCoord::PlusInf),
                    "-inf" => Ok(GridCoord::MinusInf),
                    t => t.parse().map(GridCoord::Finite).map_err(config("grid coordinate")),
                })
                .collect::<Result<_, _>>()?;
            Box::new(GridUltra(c))
        }
        (UltraSpec::Product { factors }, Provider::Product(fs)) => {
            if factors.len() != fs.len() {
                return Err(HarnessError::Config("product ultrafilter has the wrong number of factors".into()));
            }
            let parts = fs
                .iter()
                .zip(factors)
                .map(|(f, u)| lazy(f, u)?.ok_or_else(|| HarnessError::Config("factor ultrafilters must be vertices, rays or grid points".into())))
                .collect::<Result<Vec<_>, _>>()?;
            Box::new(ProductUltra(parts))
        }
        (UltraSpec::Constructed | UltraSpec::File { .. } | UltraSpec::Vertex { .. }, _) => return Ok(None),
        _ => return Err(HarnessError::Config(format!("ultrafilter {u:?} does not fit this provider"))),
    }))
}

fn approx(ball: &CubeBall, u: &UltraSpec) -> Result<UltrafilterApprox, HarnessError> {
    match u {
        UltraSpec::Vertex { vertex } => Ok(UltrafilterApprox::vertex(ball, ball.lookup(vertex).map_err(config("vertex"))?)),
        UltraSpec::Constructed => construct_nonterminating(ball).map_err(module("construct")),
        UltraSpec::File { path } => {
            let text = std::fs::read_to_string(path).map_err(config("ultrafilter file"))?;
            UltrafilterApprox::from_csv(&text, ball.num_hyperplanes()).map_err(config("ultrafilter file"))
        }
        _ => {
            let o = lazy(ball.provider(), u)?.expect("lazy spec");
            UltrafilterApprox::from_orienter(ball, o.as_ref(), Provenance::Given).map_err(module("ultrafilter"))
        }
    }
}

/// CSV rows plus a trailing `# key=value,...` metadata line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub meta: Vec<(String, String)>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn meta(&mut self, k: &str, v: impl Display) {
        self.meta.push((k.to_string(), v.to_string()));
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf8");
        let meta: Vec<String> = self.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
        out.push_str(&format!("# {}\n", meta.join(",")));
        out
    }
}

/// Result of one experiment: the CSV, and a mismatch message for `compare`.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub csv: String,
    pub mismatch: Option<String>,
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    provider: Option<Provider>,
}

impl Ctx<'_> {
    fn provider(&self) -> Result<&Provider, HarnessError> {
        self.provider.as_ref().ok_or_else(|| HarnessError::Config("this operation needs a provider block".into()))
    }

    fn ball(&self) -> Result<CubeBall, HarnessError> {
        let p = self.provider()?;
        let radius = self.spec.provider.as_ref().and_then(|s| s.radius);
        let margin = self.spec.provider.as_ref().and_then(|s| s.margin);
        if radius.is_none() && !p.is_finite() {
            return Err(HarnessError::Config("an infinite provider needs a radius".into()));
        }
        CubeBall::build_with(p, radius, margin, DEFAULT_VERTEX_CAP).map_err(module("build"))
    }

    fn params<T: DeserializeOwned>(&self) -> Result<T, HarnessError> {
        let v = match &self.spec.params {
            serde_json::Value::Null => serde_json::json!({}),
            v => v.clone(),
        };
        serde_json::from_value(v).map_err(config("params"))
    }

    fn vertex_or_base(&self, ball: &CubeBall, name: &Option<String>) -> Result<usize, HarnessError> {
        match name {
            Some(n) => ball.lookup(n).map_err(config("vertex")),
            None => Ok(ball.base()),
        }
    }

    fn walk_config(&self) -> Result<(WalkConfig, WalkSpec), HarnessError> {
        let p = self.provider()?;
        let w = self.spec.walk.clone().ok_or_else(|| HarnessError::Config("this operation needs a walk block".into()))?;
        let mut cfg = WalkConfig::uniform(p, w.steps, w.trajectories, self.spec.seed);
        if let Some(g) = &w.generators {
            cfg.generators = g.iter().map(|s| p.parse_vertex(s)).collect::<Result<_, _>>().map_err(config("walk generators"))?;
            cfg.weights = vec![1.0 / g.len() as f64; g.len()];
        }
        if let Some(ws) = &w.weights {
            cfg.weights = ws.clone();
        }
        cfg.window = w.window.unwrap_or(DEFAULT_WINDOW);
        Ok((cfg, w))
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn edge_halfspace(ball: &CubeBall, s: &str) -> Result<Halfspace, HarnessError> {
    let (a, b) = s.split_once('~').ok_or_else(|| HarnessError::Config(format!("halfspace {s:?} is not of the form u~v")))?;
    let (a, b) = (ball.lookup(a.trim()).map_err(config("halfspace"))?, ball.lookup(b.trim()).map_err(config("halfspace"))?);
    let h = ball
        .neighbors(a)
        .find(|&(y, _)| y == b)
        .map(|(_, h)| h)
        .ok_or_else(|| HarnessError::Config(format!("{s} is not an edge")))?;
    Ok(Halfspace::new(h, ball.side(h, b)))
}

fn edge_key(p: &Provider, s: &str) -> Result<(HypKey, Orientation), HarnessError> {
    let (a, b) = s.split_once('~').ok_or_else(|| HarnessError::Config(format!("halfspace {s:?} is not of the form u~v")))?;
    let a = p.parse_vertex(a).map_err(config("halfspace"))?;
    let b = p.parse_vertex(b).map_err(config("halfspace"))?;
    let key = p.hyp_key(&a, &b).ok_or_else(|| HarnessError::Config(format!("{s} is not an edge")))?;
    let o = p.side(&key, &b);
    Ok((key, o))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildParams {
    #[serde(default)]
    table: Option<String>,
}

fn op_build(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: BuildParams = ctx.params()?;
    let ball = ctx.ball()?;
    let mut t;
    match prm.table.as_deref().unwrap_or("vertices") {
        "vertices" => {
            t = Table::new(&["id", "name", "depth", "trusted"]);
            for v in 0..ball.len() {
                let trusted = ball.inner_radius().is_none_or(|r| ball.depth(v) <= r);
                t.push(vec![v.to_string(), ball.name(v), ball.depth(v).to_string(), trusted.to_string()]);
            }
        }
        "hyperplanes" => {
            t = Table::new(&["id", "name", "distance", "edges", "trusted"]);
            for h in 0..ball.num_hyperplanes() {
                let hp = ball.hyperplane(h);
                t.push(vec![
                    h.to_string(),
                    ball.hyperplane_name(h),
                    hp.distance.to_string(),
                    hp.edges.len().to_string(),
                    ball.trusted(h).to_string(),
                ]);
            }
        }
        other => return Err(HarnessError::Config(format!("unknown table {other}"))),
    }
    t.meta("vertices", ball.len());
    t.meta("hyperplanes", ball.num_hyperplanes());
    t.meta("squares", ball.squares().len());
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecomposeParams {
    #[serde(default)]
    deep_radius: Option<u32>,
}

fn op_decompose(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: DecomposeParams = ctx.params()?;
    let ball = ctx.ball()?;
    let dec = product_decomposition(&ball);
    let deep = prm.deep_radius.map(|r| deep_report(&ball, r)).transpose().map_err(module("deep"))?;
    let mut t = Table::new(&["hyperplane", "name", "distance", "factor", "deep_plus", "deep_minus"]);
    for h in 0..ball.num_hyperplanes() {
        let (dp, dm) = match &deep {
            Some(d) => (d.deep_plus[h].to_string(), d.deep_minus[h].to_string()),
            None => (String::new(), String::new()),
        };
        t.push(vec![
            h.to_string(),
            ball.hyperplane_name(h),
            ball.hyperplane(h).distance.to_string(),
            dec.factor_of[h].map(|x| x.to_string()).unwrap_or_default(),
            dp,
            dm,
        ]);
    }
    t.meta("factors", dec.factors);
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryParams {
    action: String,
    #[serde(default)]
    ultrafilter: Option<UltraSpec>,
    #[serde(default)]
    other: Option<UltraSpec>,
    #[serde(default)]
    depth: Option<u32>,
    #[serde(default)]
    point: Option<String>,
}

fn op_boundary(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: BoundaryParams = ctx.params()?;
    let ball = ctx.ball()?;
    let need = |u: &Option<UltraSpec>| u.clone().ok_or_else(|| HarnessError::Config("missing ultrafilter".into()));
    match prm.action.as_str() {
        "construct" => {
            let u = construct_nonterminating(&ball).map_err(module("construct"))?;
            let mut t = Table::new(&["hyperplane_id", "orientation", "name"]);
            for (h, o) in u.orientation.iter().enumerate() {
                t.push(vec![h.to_string(), o.to_string(), ball.hyperplane_name(h)]);
            }
            t.meta("depth", ball.inner_radius().unwrap_or(0).saturating_sub(2));
            Ok(t)
        }
        "check" => {
            let u = approx(&ball, &need(&prm.ultrafilter)?)?;
            let depth = prm.depth.unwrap_or(ball.inner_radius().unwrap_or(0).saturating_sub(2));
            let mut t = Table::new(&["check", "result", "detail"]);
            match check_consistent(&ball, &u) {
                Ok(()) => t.push(vec!["consistent".into(), "pass".into(), String::new()]),
                Err(e) => t.push(vec!["consistent".into(), "fail".into(), e.to_string()]),
            }
            match check_nonterminating(&ball, &u, depth) {
                NtCheck::Pass { depth } => t.push(vec!["nonterminating".into(), "pass".into(), format!("depth {depth}")]),
                NtCheck::Minimal(h) => {
                    t.push(vec!["nonterminating".into(), "fail".into(), format!("minimal {}", hs_name(&ball, h))])
                }
            }
            t.meta("depth", depth);
            Ok(t)
        }
        "distance" => {
            let u1 = approx(&ball, &need(&prm.ultrafilter)?)?;
            let u2 = approx(&ball, &need(&prm.other)?)?;
            let p = ctx.vertex_or_base(&ball, &prm.point)?;
            let d = roller_distance(&ball, p, &u1, &u2);
            let mut t = Table::new(&["distance", "numer", "denom"]);
            t.push(vec![f(*d.numer() as f64 / *d.denom() as f64), d.numer().to_string(), d.denom().to_string()]);
            t.meta("point", ball.name(p));
            Ok(t)
        }
        other => Err(HarnessError::Config(format!("unknown boundary action {other}"))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FolnerParams {
    #[serde(default)]
    v: Option<String>,
    alpha: UltraSpec,
    r_max: u32,
}

fn op_folner(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: FolnerParams = ctx.params()?;
    let p = ctx.provider()?;
    let prof = match lazy(p, &prm.alpha)? {
        Some(alpha) => {
            let v = match &prm.v {
                Some(n) => p.parse_vertex(n).map_err(config("vertex"))?,
                None => p.base(),
            };
            intervalgeom::folner_profile_lazy(p, &v, alpha.as_ref(), prm.r_max).map_err(module("folner"))?
        }
        None => {
            let ball = ctx.ball()?;
            let v = ctx.vertex_or_base(&ball, &prm.v)?;
            let u = approx(&ball, &prm.alpha)?;
            let i = ball.interval(Endpoint::Vertex(v), Endpoint::Orientation(&u.orientation)).map_err(module("interval"))?;
            intervalgeom::folner_profile(&ball, &i, v, prm.r_max).map_err(module("folner"))?
        }
    };
    let mut t = Table::new(&["r", "count_ball", "count_sphere", "ratio"]);
    for r in 0..=prof.r_max() {
        let i = r as usize;
        let q = prof.ratio(r);
        t.push(vec![r.to_string(), prof.ball[i].to_string(), prof.sphere[i].to_string(), f(*q.numer() as f64 / *q.denom() as f64)]);
    }
    if let Some(r) = prof.uniformity_radius(0.1) {
        t.meta("uniformity_radius_0.1", r);
    }
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SymdiffParams {
    v: String,
    w: String,
    alpha: UltraSpec,
    r_max: u32,
    #[serde(default)]
    center: Option<String>,
}

fn op_symdiff(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: SymdiffParams = ctx.params()?;
    let p = ctx.provider()?;
    let prof = match lazy(p, &prm.alpha)? {
        Some(alpha) => {
            let pv = |s: &str| p.parse_vertex(s).map_err(config("vertex"));
            let center = match &prm.center {
                Some(c) => pv(c)?,
                None => p.base(),
            };
            intervalgeom::symdiff_profile_lazy(p, &pv(&prm.v)?, &pv(&prm.w)?, alpha.as_ref(), &center, prm.r_max)
                .map_err(module("symdiff"))?
        }
        None => {
            let ball = ctx.ball()?;
            let u = approx(&ball, &prm.alpha)?;
            let (v, w) = (ball.lookup(&prm.v).map_err(config("v"))?, ball.lookup(&prm.w).map_err(config("w"))?);
            intervalgeom::symdiff_profile(&ball, v, w, &u, prm.r_max).map_err(module("symdiff"))?
        }
    };
    let mut t = Table::new(&["r", "count_symdiff", "count_union", "ratio"]);
    for (r, x) in prof.ratios().into_iter().enumerate() {
        t.push(vec![r.to_string(), prof.symdiff[r].to_string(), prof.union[r].to_string(), f(x)]);
    }
    t.meta("base", &prof.base);
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeagerParams {
    #[serde(default)]
    v: Option<String>,
    alpha: UltraSpec,
    r_max: u32,
    #[serde(default)]
    threshold: Option<f64>,
    /// Halfspaces `u~v` whose hyperplanes to report; default all of the interval.
    #[serde(default)]
    hyperplanes: Option<Vec<String>>,
}

fn op_meager(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: MeagerParams = ctx.params()?;
    let ball = ctx.ball()?;
    let v = ctx.vertex_or_base(&ball, &prm.v)?;
    let u = approx(&ball, &prm.alpha)?;
    let i = ball.interval(Endpoint::Vertex(v), Endpoint::Orientation(&u.orientation)).map_err(module("interval"))?;
    let hs: Vec<usize> = match &prm.hyperplanes {
        Some(list) => list.iter().map(|s| edge_halfspace(&ball, s).map(|h| h.hyp)).collect::<Result<_, _>>()?,
        None => i.hyperplanes.clone(),
    };
    let tau = prm.threshold.unwrap_or(MEAGER_THRESHOLD);
    let mut t = Table::new(&["hyperplane", "name", "r", "count_carrier", "count_ball", "ratio", "class"]);
    for h in hs {
        let m = intervalgeom::meager_profile(&ball, &i, h, prm.r_max, tau).map_err(module("meager"))?;
        let class = match m.class {
            intervalgeom::MeagerClass::MeagerTrending => "meager-trending",
            intervalgeom::MeagerClass::NonMeagerSuspect => "non-meager-suspect",
        };
        for (r, x) in m.ratios().into_iter().enumerate() {
            t.push(vec![
                h.to_string(),
                ball.hyperplane_name(h),
                r.to_string(),
                m.carrier[r].to_string(),
                m.ball[r].to_string(),
                f(x),
                class.to_string(),
            ]);
        }
    }
    t.meta("threshold", tau);
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedParams {
    #[serde(default)]
    v: Option<String>,
    w: String,
}

fn op_embed(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: EmbedParams = ctx.params()?;
    let ball = ctx.ball()?;
    let v = ctx.vertex_or_base(&ball, &prm.v)?;
    let w = ball.lookup(&prm.w).map_err(config("w"))?;
    let i = ball.vertex_interval(v, w).map_err(module("interval"))?;
    let chart = intervalgeom::l1_embedding(&ball, &i).map_err(module("embed"))?;
    let cols: Vec<String> = (0..chart.chains.len()).map(|c| format!("c{c}")).collect();
    let mut header = vec!["vertex"];
    header.extend(cols.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for (u, c) in &chart.coords {
        let mut row = vec![ball.name(*u)];
        row.extend(c.iter().map(|x| x.to_string()));
        t.push(row);
    }
    t.meta("chains", chart.chains.len());
    t.meta("dimension", i.dimension);
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessParams {
    #[serde(default)]
    o: Option<String>,
    b: UltraSpec,
    g: String,
    n_max: u32,
}

fn op_witness(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: WitnessParams = ctx.params()?;
    let p = ctx.provider()?;
    let g = p.parse_vertex(&prm.g).map_err(config("g"))?;
    let mut t = Table::new(&["n", "defect", "defect_numer", "defect_denom"]);
    let mut push = |n: u32, d: num_rational::Ratio<i64>| {
        t.push(vec![n.to_string(), f(*d.numer() as f64 / *d.denom() as f64), d.numer().to_string(), d.denom().to_string()]);
    };
    match lazy(p, &prm.b)? {
        Some(b) => {
            let o = match &prm.o {
                Some(s) => p.parse_vertex(s).map_err(config("o"))?,
                None => p.base(),
            };
            for n in 0..=prm.n_max {
                push(n, intervalgeom::witness_defect(p, &g, &o, b.as_ref(), n).map_err(module("witness"))?);
            }
        }
        None => {
            let ball = ctx.ball()?;
            let o = ctx.vertex_or_base(&ball, &prm.o)?;
            let u = approx(&ball, &prm.b)?;
            for n in 0..=prm.n_max {
                push(n, intervalgeom::witness_defect_ball(&ball, &g, o, &u, n).map_err(module("witness"))?);
            }
        }
    }
    t.meta("g", &prm.g);
    Ok(t)
}

fn ensemble(ctx: &Ctx, start: Option<&str>, seed: u64) -> Result<dynamics::WalkEnsemble, HarnessError> {
    let p = ctx.provider()?;
    let (mut cfg, w) = ctx.walk_config()?;
    cfg.seed = seed;
    cfg.validate(p, 8).map_err(config("walk"))?;
    let start = match start.or(w.start.as_deref()) {
        Some(s) => p.parse_vertex(s).map_err(config("start"))?,
        None => p.base(),
    };
    dynamics::sample_walks(p, &cfg, &start, w.radius.unwrap_or(w.steps as u32)).map_err(module("walk"))
}

fn op_walk(ctx: &Ctx) -> Result<Table, HarnessError> {
    let ens = ensemble(ctx, None, ctx.spec.seed)?;
    let p = &ens.provider;
    let window = ((ens.config.steps as f64 * ens.config.window).round() as usize).max(1);
    let mut t = Table::new(&["trajectory", "steps", "flagged", "endpoint", "displacement", "converged", "undecided_fraction"]);
    let disp = ens.displacements();
    for (i, tr) in ens.trajectories.iter().enumerate() {
        let lim = if tr.flagged { None } else { dynamics::limit_ultrafilter(&ens, i, window).ok() };
        t.push(vec![
            i.to_string(),
            tr.increments.len().to_string(),
            tr.flagged.to_string(),
            p.name(&tr.endpoint),
            disp[i].to_string(),
            lim.is_some().to_string(),
            lim.map(|l| f(l.undecided_fraction())).unwrap_or_default(),
        ]);
    }
    t.meta("window", window);
    t.meta("radius", ens.radius);
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StationaryParams {
    /// Halfspaces `u~v` (the side containing `v`); default the halfspaces across the base edges.
    #[serde(default)]
    halfspaces: Option<Vec<String>>,
    #[serde(default)]
    second_start: Option<String>,
}

fn op_stationary(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: StationaryParams = ctx.params()?;
    let p = ctx.provider()?;
    let hs: Vec<(HypKey, Orientation)> = match &prm.halfspaces {
        Some(list) => list.iter().map(|s| edge_key(p, s)).collect::<Result<_, _>>()?,
        None => p
            .neighbors(&p.base())
            .into_iter()
            .map(|n| {
                let k = p.hyp_key(&p.base(), &n).expect("Cayley-type provider");
                let o = p.side(&k, &n);
                (k, o)
            })
            .collect(),
    };
    let e1 = ensemble(ctx, None, ctx.spec.seed)?;
    let e2 = match &prm.second_start {
        Some(s) => Some(ensemble(ctx, Some(s), ctx.spec.seed.wrapping_add(1))?),
        None => None,
    };
    let rep = dynamics::stationary_estimate(&e1, &hs, e2.as_ref()).map_err(module("stationary"))?;
    let mut t = Table::new(&["halfspace", "nu", "se", "residual", "residual_se", "gap", "gap_se"]);
    for r in &rep.rows {
        t.push(vec![
            r.halfspace.clone(),
            f(r.nu),
            f(r.se),
            f(r.residual),
            f(r.residual_se),
            r.gap.map(f).unwrap_or_default(),
            r.gap_se.map(f).unwrap_or_default(),
        ]);
    }
    t.meta("window", rep.window);
    t.meta("converged", rep.converged);
    t.meta("trajectories", rep.trajectories);
    t.meta("window_note", "stability window is a heuristic");
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StripParams {
    alpha: UltraSpec,
    beta: UltraSpec,
    r_max: u32,
}

fn op_strip(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: StripParams = ctx.params()?;
    let p = ctx.provider()?;
    let prof = match (lazy(p, &prm.alpha)?, lazy(p, &prm.beta)?) {
        (Some(a), Some(b)) => dynamics::strip_profile_lazy(p, a.as_ref(), b.as_ref(), prm.r_max).map_err(module("strip"))?,
        _ => {
            let ball = ctx.ball()?;
            let (a, b) = (approx(&ball, &prm.alpha)?, approx(&ball, &prm.beta)?);
            dynamics::strip_profile(&ball, &a, &b, prm.r_max).map_err(module("strip"))?
        }
    };
    let mut t = Table::new(&["r", "count"]);
    for (r, c) in prof.counts.iter().enumerate() {
        t.push(vec![r.to_string(), c.to_string()]);
    }
    t.meta("generic", prof.generic);
    t.meta("center", prof.center.unwrap_or_default());
    t.meta("degree", prof.degree.map(f).unwrap_or_default());
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntropyParams {
    n_max: usize,
    #[serde(default)]
    cap: Option<usize>,
}

pub const DEFAULT_ENTROPY_CAP: usize = 1 << 21;

fn op_entropy(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: EntropyParams = ctx.params()?;
    let p = ctx.provider()?;
    let cfg = match &ctx.spec.walk {
        Some(_) => ctx.walk_config()?.0,
        None => WalkConfig::uniform(p, 0, 10_000, ctx.spec.seed),
    };
    let e = dynamics::entropy_profile(p, &cfg, prm.n_max, prm.cap.unwrap_or(DEFAULT_ENTROPY_CAP)).map_err(module("entropy"))?;
    let mut t = Table::new(&["n", "h", "rate", "method", "support"]);
    for n in 0..e.h.len() {
        let m = match e.method[n] {
            dynamics::EntropyMethod::Exact => "exact".to_string(),
            dynamics::EntropyMethod::MonteCarlo { samples } => format!("monte-carlo({samples}, biased low)"),
        };
        t.push(vec![n.to_string(), f(e.h[n]), f(e.rate(n)), m, e.support[n].to_string()]);
    }
    t.meta("log_moment", e.log_moment);
    t.meta("subadditivity_violations", e.subadditivity_violations().len());
    Ok(t)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchParams {
    kind: String,
    #[serde(default)]
    u1: Option<UltraSpec>,
    #[serde(default)]
    u2: Option<UltraSpec>,
    #[serde(default)]
    sector: Vec<String>,
    #[serde(default)]
    halfspace: Option<String>,
    max_len: usize,
}

fn op_search(ctx: &Ctx) -> Result<Table, HarnessError> {
    let prm: SearchParams = ctx.params()?;
    let ball = ctx.ball()?;
    let mut t = Table::new(&["kind", "found", "word", "power"]);
    match prm.kind.as_str() {
        "proximality" => {
            let need = |u: &Option<UltraSpec>| u.clone().ok_or_else(|| HarnessError::Config("missing u1/u2".into()));
            let u1 = approx(&ball, &need(&prm.u1)?)?;
            let u2 = approx(&ball, &need(&prm.u2)?)?;
            let sector: Vec<Halfspace> = prm.sector.iter().map(|s| edge_halfspace(&ball, s)).collect::<Result<_, _>>()?;
            let g = dynamics::proximality_search(&ball, &u1, &u2, &sector, prm.max_len).map_err(module("search"))?;
            t.push(vec!["proximality".into(), g.is_some().to_string(), g.map(|g| g.word).unwrap_or_default(), String::new()]);
        }
        "flip" => {
            let s = prm.halfspace.as_deref().ok_or_else(|| HarnessError::Config("missing halfspace".into()))?;
            let h = edge_halfspace(&ball, s)?;
            let r = dynamics::find_flipper_skewerer(&ball, h, prm.max_len);
            t.push(vec!["flipper".into(), r.flipper.is_some().to_string(), r.flipper.map(|g| g.word).unwrap_or_default(), String::new()]);
            let (found, word, power) = match r.skewerer {
                Some((g, n)) => ("true".to_string(), g.word, n.to_string()),
                None => ("false".to_string(), String::new(), String::new()),
            };
            t.push(vec!["skewerer".into(), found, word, power]);
        }
        other => return Err(HarnessError::Config(format!("unknown search kind {other}"))),
    }
    t.meta("max_len", prm.max_len);
    Ok(t)
}

/// Absolute and relative tolerance for one numeric column.
#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    #[serde(default)]
    pub abs: f64,
    #[serde(default)]
    pub rel: f64,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default)]
    pub columns: HashMap<String, Tolerance>,
    #[serde(default)]
    pub default: Tolerance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub row: usize,
    pub column: String,
    pub value: String,
    pub baseline: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: usize,
    pub first: Option<Divergence>,
}

impl CompareReport {
    pub fn pass(&self) -> bool {
        self.first.is_none()
    }
}

fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(config("csv"))?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(config("csv"))?;
    Ok((header, rows))
}

/// Cellwise comparison: numbers within `abs + rel * |baseline|`, everything else equal.
pub fn compare_baseline(csv_text: &str, baseline: &str, tol: &Tolerances) -> Result<CompareReport, HarnessError> {
    let (h1, r1) = read_table(csv_text)?;
    let (h2, r2) = read_table(baseline)?;
    if h1 != h2 {
        return Err(HarnessError::Config(format!("column schemas differ: {h1:?} vs {h2:?}")));
    }
    for (i, (a, b)) in r1.iter().zip(&r2).enumerate() {
        for (c, name) in h1.iter().enumerate() {
            let (x, y) = (a.get(c).map(String::as_str).unwrap_or(""), b.get(c).map(String::as_str).unwrap_or(""));
            let ok = match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(p), Ok(q)) => {
                    let t = tol.columns.get(name).copied().unwrap_or(tol.default);
                    p == q || (p - q).abs() <= t.abs + t.rel * q.abs()
                }
                _ => x == y,
            };
            if !ok {
                return Ok(CompareReport {
                    rows: r1.len(),
                    first: Some(Divergence { row: i, column: name.clone(), value: x.into(), baseline: y.into() }),
                });
            }
        }
    }
    if r1.len() != r2.len() {
        let row = r1.len().min(r2.len());
        return Ok(CompareReport {
            rows: r1.len(),
            first: Some(Divergence {
                row,
                column: "<row count>".into(),
                value: r1.len().to_string(),
                baseline: r2.len().to_string(),
            }),
        });
    }
    Ok(CompareReport { rows: r1.len(), first: None })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareParams {
    csv: PathBuf,
    baseline: PathBuf,
    #[serde(default)]
    tolerances: Tolerances,
}

fn op_compare(ctx: &Ctx) -> Result<(Table, Option<String>), HarnessError> {
    let prm: CompareParams = ctx.params()?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(config("compare input"));
    let rep = compare_baseline(&read(&prm.csv)?, &read(&prm.baseline)?, &prm.tolerances)?;
    let mut t = Table::new(&["rows", "pass", "row", "column", "value", "baseline"]);
    let d = rep.first.clone();
    t.push(vec![
        rep.rows.to_string(),
        rep.pass().to_string(),
        d.as_ref().map(|d| d.row.to_string()).unwrap_or_default(),
        d.as_ref().map(|d| d.column.clone()).unwrap_or_default(),
        d.as_ref().map(|d| d.value.clone()).unwrap_or_default(),
        d.as_ref().map(|d| d.baseline.clone()).unwrap_or_default(),
    ]);
    let mismatch = d.map(|d| format!("row {} column {}: {} vs baseline {}", d.row, d.column, d.value, d.baseline));
    Ok((t, mismatch))
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, HarnessError> {
    serde_json::from_str(text).map_err(config("spec"))
}

/// Runs the spec's operation (or `operation` if the spec names none).
pub fn run_experiment(spec: &ExperimentSpec, operation: Option<&str>) -> Result<Outcome, HarnessError> {
    let op = match (operation, spec.operation.as_deref()) {
        (Some(a), Some(b)) if a != b => {
            return Err(HarnessError::Config(format!("spec operation {b} does not match subcommand {a}")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(HarnessError::Config("no operation given".into())),
    };
    if !OPERATIONS.contains(&op) {
        return Err(HarnessError::Config(format!("unknown operation {op}")));
    }
    let provider = spec.provider.as_ref().map(|p| p.kind.provider()).transpose()?;
    let ctx = Ctx { spec, provider };
    let (mut table, mismatch) = match op {
        "build" => (op_build(&ctx)?, None),
        "decompose" => (op_decompose(&ctx)?, None),
        "boundary" => (op_boundary(&ctx)?, None),
        "folner" => (op_folner(&ctx)?, None),
        "symdiff" => (op_symdiff(&ctx)?, None),
        "meager" => (op_meager(&ctx)?, None),
        "embed" => (op_embed(&ctx)?, None),
        "witness" => (op_witness(&ctx)?, None),
        "walk" => (op_walk(&ctx)?, None),
        "stationary" => (op_stationary(&ctx)?, None),
        "strip" => (op_strip(&ctx)?, None),
        "entropy" => (op_entropy(&ctx)?, None),
        "search" => (op_search(&ctx)?, None),
        "compare" => op_compare(&ctx)?,
        _ => unreachable!(),
    };
    let mut meta = vec![("name".to_string(), spec.name.clone()), ("seed".to_string(), spec.seed.to_string())];
    if let Some(ps) = &spec.provider {
        if let Some(r) = ps.radius {
            meta.push(("radius".into(), r.to_string()));
        }
    }
    meta.append(&mut table.meta);
    table.meta = meta;
    Ok(Outcome { csv: table.to_csv(), mismatch })
}

/// Runs a spec and writes its CSV to `out`, the spec's output path, or stdout.
/// Returns the process exit code.
pub fn run_to_output(spec: &ExperimentSpec, operation: Option<&str>, out: Option<&Path>) -> Result<i32, HarnessError> {
    let outcome = run_experiment(spec, operation)?;
    match out.or(spec.output.as_deref()) {
        Some(path) => std::fs::write(path, &outcome.csv)?,
        None => print!("{}", outcome.csv),
    }
    match outcome.mismatch {
        Some(m) => Err(HarnessError::Mismatch(m)),
        None => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(json: &str) -> Result<Outcome, HarnessError> {
        run_experiment(&parse_spec(json)?, None)
    }

    #[test]
    fn folner_tree_csv() {
        let out = run(r#"{"name": "f", "operation": "folner", "provider": {"kind": "tree", "valence": 3},
            "params": {"alpha": {"type": "ray", "period": "ab"}, "r_max": 5}}"#)
        .unwrap();
        let lines: Vec<&str> = out.csv.lines().collect();
        assert_eq!(lines[0], "r,count_ball,count_sphere,ratio");
        assert_eq!(lines[4], "3,4,1,0.25");
        assert!(lines.last().unwrap().starts_with("# name=f,seed=0"));
    }

    #[test]
    fn schema_errors_exit_2() {
        let e = run(r#"{"name": "x", "operation": "build", "provider": {"kind": "moebius"}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run(r#"{"name": "x", "operation": "paint", "provider": {"kind": "tree", "valence": 3}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run(r#"{"name": "x", "operation": "build", "provider": {"kind": "tree", "valence": 3}}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run(r#"{"name": "x", "operation": "boundary", "provider": {"kind": "explicit", "text": "vertex a\nvertex b\nedge a b"},
            "params": {"action": "construct"}}"#)
        .unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn walks_are_reproducible() {
        let spec = r#"{"name": "w", "operation": "walk", "seed": 9, "provider": {"kind": "tree", "valence": 3},
            "walk": {"steps": 40, "trajectories": 30}}"#;
        let a = run(spec).unwrap().csv;
        let b = run(spec).unwrap().csv;
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run(spec).unwrap().csv);
        assert_eq!(a, c);
    }

    #[test]
    fn every_operation_runs() {
        let specs = [
            r#"{"name": "b", "operation": "build", "provider": {"kind": "grid", "dim": 2, "radius": 6}, "params": {"table": "hyperplanes"}}"#,
            r#"{"name": "d", "operation": "decompose", "provider": {"kind": "product", "factors": [{"kind": "tree", "valence": 3}, {"kind": "tree", "valence": 3}], "radius": 6}, "params": {"deep_radius": 1}}"#,
            r#"{"name": "c", "operation": "boundary", "provider": {"kind": "tree", "valence": 3, "radius": 8}, "params": {"action": "check", "ultrafilter": {"type": "constructed"}}}"#,
            r#"{"name": "c", "operation": "boundary", "provider": {"kind": "tree", "valence": 3, "radius": 6}, "params": {"action": "distance", "ultrafilter": {"type": "vertex", "vertex": "a"}, "other": {"type": "vertex", "vertex": "ab"}}}"#,
            r#"{"name": "s", "operation": "symdiff", "provider": {"kind": "grid", "dim": 2}, "params": {"v": "(0,0)", "w": "(0,1)", "alpha": {"type": "grid", "coords": ["+inf", "0"]}, "r_max": 10}}"#,
            r#"{"name": "m", "operation": "meager", "provider": {"kind": "grid", "dim": 2, "radius": 10}, "params": {"alpha": {"type": "vertex", "vertex": "(2,2)"}, "r_max": 4}}"#,
            r#"{"name": "e", "operation": "embed", "provider": {"kind": "grid", "dim": 2, "radius": 10}, "params": {"w": "(2,3)"}}"#,
            r#"{"name": "wi", "operation": "witness", "provider": {"kind": "tree", "valence": 3}, "params": {"b": {"type": "ray", "period": "ab"}, "g": "a", "n_max": 4}}"#,
            r#"{"name": "st", "operation": "stationary", "seed": 3, "provider": {"kind": "tree", "valence": 3}, "walk": {"steps": 60, "trajectories": 200}, "params": {"second_start": "ab"}}"#,
            r#"{"name": "sp", "operation": "strip", "provider": {"kind": "tree", "valence": 3}, "params": {"alpha": {"type": "ray", "period": "ab"}, "beta": {"type": "ray", "period": "ba"}, "r_max": 6}}"#,
            r#"{"name": "en", "operation": "entropy", "provider": {"kind": "grid", "dim": 2}, "params": {"n_max": 5}}"#,
            r#"{"name": "se", "operation": "search", "provider": {"kind": "tree", "valence": 3, "radius": 8}, "params": {"kind": "flip", "halfspace": "e~a", "max_len": 2}}"#,
            r#"{"name": "se", "operation": "search", "provider": {"kind": "tree", "valence": 3, "radius": 10}, "params": {"kind": "proximality", "u1": {"type": "ray", "period": "ab"}, "u2": {"type": "ray", "period": "ba"}, "sector": ["e~c"], "max_len": 2}}"#,
        ];
        for s in specs {
            let out = run(s).unwrap_or_else(|e| panic!("{s}: {e}"));
            assert!(out.csv.lines().count() >= 3, "{}", out.csv);
        }
    }

    #[test]
    fn baseline_comparison() {
        let a = "r,ratio\n0,1\n1,0.5\n# seed=1\n";
        let b = "r,ratio\n0,1\n1,0.500000000001\n# seed=2\n";
        let tol = Tolerances { default: Tolerance { abs: 1e-9, rel: 0.0 }, ..Default::default() };
        assert!(compare_baseline(a, a, &Tolerances::default()).unwrap().pass());
        assert!(compare_baseline(a, b, &tol).unwrap().pass());
        assert!(!compare_baseline(a, b, &Tolerances::default()).unwrap().pass());
        // a stationary estimate 5 standard errors off fails a 3 se tolerance
        let est = "halfspace,nu\ne~a+,0.3833\n";
        let base = "halfspace,nu\ne~a+,0.3333\n";
        let se = (1.0f64 / 3.0 * 2.0 / 3.0 / 2000.0).sqrt();
        let mut cols = HashMap::new();
        cols.insert("nu".to_string(), Tolerance { abs: 3.0 * se, rel: 0.0 });
        let r = compare_baseline(est, base, &Tolerances { columns: cols, ..Default::default() }).unwrap();
        assert_eq!(r.first.unwrap().column, "nu");
        assert!(compare_baseline(a, "x,y\n1,2\n", &tol).is_err());
    }
}
