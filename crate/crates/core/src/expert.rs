//! Expert strategy library: per-tendency payoff coefficients calibrated by
//! a genetic algorithm against observed crossing orders.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{decision_instants, fingerprint, window_lag, LabeledEvent};
use crate::game::{payoff_features, solve_by_enumeration, AgentKinematics, Coefficients, GameConfig, GameState, PayoffFeatures};
use crate::orientation::{InteractionSnapshot, TendencyCategory};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no usable events")]
    EmptyDataset,
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("library format version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
}

pub fn game_state(s: &InteractionSnapshot) -> GameState {
    GameState { left: AgentKinematics::new(s.d_l, s.v_l), straight: AgentKinematics::new(s.d_s, s.v_s) }
}

/// Payoff features of every decision instant of one event, plus its labels.
#[derive(Debug, Clone)]
pub struct EventFeatures {
    pub p_l: f64,
    pub p_s: f64,
    pub instants: Vec<PayoffFeatures>,
}

/// Events reduced to what the loss needs. Features do not depend on the
/// coefficients, so they are computed once per dataset.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub events: Vec<EventFeatures>,
}

impl FeatureSet {
    /// Events without a decision instant are skipped.
    pub fn new(events: &[LabeledEvent], game: &GameConfig, window: f64) -> Result<Self, LearnError> {
        let lag = window_lag(window);
        let out: Vec<EventFeatures> = events
            .iter()
            .filter_map(|ev| {
                let ks = decision_instants(&ev.series, lag);
                if ks.is_empty() {
                    log::debug!("event {} has no decision instant", ev.id);
                    return None;
                }
                let instants = ks.iter().map(|&k| payoff_features(&game_state(&ev.series[k]), game)).collect();
                Some(EventFeatures { p_l: f64::from(ev.p_l), p_s: f64::from(ev.p_s), instants })
            })
            .collect();
        if out.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        Ok(Self { events: out })
    }

    /// Time-averaged equilibrium Proceed probabilities `(p_l, p_s)` of one event.
    pub fn predict(&self, event: usize, c: &Coefficients) -> (f64, f64) {
        predict_features(&self.events[event].instants, c)
    }

    /// Mean over events of `(P_l - p_l)^2 + (P_s - p_s)^2`.
    pub fn loss(&self, c: &Coefficients) -> f64 {
        let total: f64 = (0..self.events.len())
            .map(|i| {
                let (pl, ps) = self.predict(i, c);
                let ev = &self.events[i];
                (ev.p_l - pl).powi(2) + (ev.p_s - ps).powi(2)
            })
            .sum();
        total / self.events.len() as f64
    }

    /// Share of events whose predicted first mover matches the label.
    pub fn accuracy(&self, c: &Coefficients) -> f64 {
        let hits = (0..self.events.len())
            .filter(|&i| {
                let (pl, ps) = self.predict(i, c);
                (pl > ps) == (self.events[i].p_l == 1.0)
            })
            .count();
        hits as f64 / self.events.len() as f64
    }
}

pub(crate) fn predict_features(instants: &[PayoffFeatures], c: &Coefficients) -> (f64, f64) {
    let zero = [[0.0; 4]; 2];
    let (mut sl, mut ss) = (0.0, 0.0);
    for f in instants {
        let p = solve_by_enumeration(&f.bimatrix(c, &zero)).expect("finite payoffs");
        sl += p.p_l[0];
        ss += p.p_s[0];
    }
    let n = instants.len() as f64;
    (sl / n, ss / n)
}

/// Loss of `c` on `events` with the disturbance disabled.
pub fn evaluate_loss(c: &Coefficients, events: &[LabeledEvent], game: &GameConfig, window: f64) -> Result<f64, LearnError> {
    Ok(FeatureSet::new(events, game, window)?.loss(c))
}

pub fn event_loss(p_l: f64, p_s: f64, hat_l: f64, hat_s: f64) -> f64 {
    (p_l - hat_l).powi(2) + (p_s - hat_s).powi(2)
}

fn d_pop() -> usize {
    64
}
fn d_gens() -> usize {
    200
}
fn d_tour() -> usize {
    3
}
fn d_cross() -> f64 {
    0.8
}
fn d_mrate() -> f64 {
    0.1
}
fn d_mscale() -> f64 {
    0.5
}
fn d_elite() -> usize {
    2
}
fn d_bounds() -> (f64, f64) {
    (-10.0, 10.0)
}
fn d_delta() -> f64 {
    0.05
}
fn d_patience() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaConfig {
    #[serde(default = "d_pop")]
    pub population: usize,
    #[serde(default = "d_gens")]
    pub generations: usize,
    #[serde(default = "d_tour")]
    pub tournament: usize,
    #[serde(default = "d_cross")]
    pub crossover_rate: f64,
    #[serde(default = "d_mrate")]
    pub mutation_rate: f64,
    #[serde(default = "d_mscale")]
    pub mutation_scale: f64,
    #[serde(default = "d_elite")]
    pub elitism: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_bounds")]
    pub bounds: (f64, f64),
    /// Stop once the best loss drops below this.
    #[serde(default = "d_delta")]
    pub delta: f64,
    /// Stop after this many generations without improvement.
    #[serde(default = "d_patience")]
    pub patience: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: d_pop(),
            generations: d_gens(),
            tournament: d_tour(),
            crossover_rate: d_cross(),
            mutation_rate: d_mrate(),
            mutation_scale: d_mscale(),
            elitism: d_elite(),
            seed: 0,
            bounds: d_bounds(),
            delta: d_delta(),
            patience: d_patience(),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.bounds.0 < self.bounds.1) {
            return bad("bounds.min must be below bounds.max");
        }
        if self.elitism >= self.population || self.tournament == 0 {
            return bad("elitism must be below the population size and tournament >= 1");
        }
        if !(self.mutation_scale >= 0.0) {
            return bad("mutation scale must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub coefficients: Coefficients,
    pub loss: f64,
    /// Best loss after initialisation and after each generation.
    pub trace: Vec<f64>,
    pub generations: usize,
    /// Best loss fell below `delta`.
    pub converged: bool,
}

/// Minimises the loss over `features` from a uniformly random population.
pub fn ga_optimize(features: &FeatureSet, cfg: &GaConfig) -> Result<GaOutcome, LearnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.bounds;
    let init: Vec<Vec<f64>> =
        (0..cfg.population).map(|_| (0..Coefficients::LEN).map(|_| rng.gen_range(lo..hi)).collect()).collect();
    evolve(features, cfg, init, rng)
}

/// [`ga_optimize`] from a given initial population.
pub fn ga_optimize_from(features: &FeatureSet, cfg: &GaConfig, population: Vec<Vec<f64>>) -> Result<GaOutcome, LearnError> {
    cfg.validate()?;
    if population.len() != cfg.population || population.iter().any(|g| g.len() != Coefficients::LEN) {
        return Err(LearnError::InvalidConfig("initial population does not match the configuration".into()));
    }
    evolve(features, cfg, population, ChaCha8Rng::seed_from_u64(cfg.seed))
}

fn coeffs(genes: &[f64]) -> Coefficients {
    Coefficients::from_slice(genes).expect("genome length")
}

fn evolve(features: &FeatureSet, cfg: &GaConfig, mut pop: Vec<Vec<f64>>, mut rng: ChaCha8Rng) -> Result<GaOutcome, LearnError> {
    let (lo, hi) = cfg.bounds;
    let noise = Normal::new(0.0, cfg.mutation_scale).map_err(|e| LearnError::InvalidConfig(e.to_string()))?;
    let mut fit: Vec<f64> = pop.iter().map(|g| features.loss(&coeffs(g))).collect();
    let argmin = |fit: &[f64]| (0..fit.len()).fold(0, |b, i| if fit[i] < fit[b] { i } else { b });
    let b = argmin(&fit);
    let (mut best, mut best_loss) = (pop[b].clone(), fit[b]);
    let mut trace = vec![best_loss];
    let mut stale = 0;
    let mut generations = 0;

    while generations < cfg.generations && best_loss >= cfg.delta && stale < cfg.patience {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..cfg.elitism].iter().map(|&i| fit[i]).collect();

        let tournament = |rng: &mut ChaCha8Rng| {
            let mut w = rng.gen_range(0..pop.len());
            for _ in 1..cfg.tournament {
                let c = rng.gen_range(0..pop.len());
                if fit[c] < fit[w] {
                    w = c;
                }
            }
            w
        };
        while next.len() < cfg.population {
            let a = tournament(&mut rng);
            let b = tournament(&mut rng);
            let mut child = pop[a].clone();
            if rng.gen::<f64>() < cfg.crossover_rate {
                for (g, other) in child.iter_mut().zip(&pop[b]) {
                    if rng.gen::<bool>() {
                        *g = *other;
                    }
                }
            }
            for g in child.iter_mut() {
                if rng.gen::<f64>() < cfg.mutation_rate {
                    *g = (*g + noise.sample(&mut rng)).clamp(lo, hi);
                }
            }
            next_fit.push(features.loss(&coeffs(&child)));
            next.push(child);
        }
        pop = next;
        fit = next_fit;
        generations += 1;

        let b = argmin(&fit);
        if fit[b] < best_loss {
            best_loss = fit[b];
            best = pop[b].clone();
            stale = 0;
        } else {
            stale += 1;
        }
        trace.push(best_loss);
        log::debug!("generation {generations}: best loss {best_loss:.6}");
    }
    Ok(GaOutcome { coefficients: coeffs(&best), loss: best_loss, trace, generations, converged: best_loss < cfg.delta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub category: Option<TendencyCategory>,
    pub coefficients: Coefficients,
    pub loss: f64,
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub events: usize,
    pub generations: usize,
    pub converged: bool,
    /// Best loss after initialisation and after each generation.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub tool: String,
    pub dataset_fingerprint: String,
    pub ga: GaConfig,
    pub game: GameConfig,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertLibrary {
    pub experts: BTreeMap<TendencyCategory, ExpertParams>,
    /// Single parameter set fitted on all events, used by baseline runs.
    pub global: Option<ExpertParams>,
    pub meta: LibraryMeta,
}

/// Parameters chosen for a category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub coefficients: Coefficients,
    /// Category whose entry was used; `None` for the built-in defaults.
    pub source: Option<TendencyCategory>,
    pub fallback: bool,
}

impl ExpertLibrary {
    /// Entry for `category`, else the Ambiguous entry, else all-ones coefficients.
    pub fn lookup(&self, category: TendencyCategory) -> Lookup {
        if let Some(e) = self.experts.get(&category) {
            return Lookup { coefficients: e.coefficients, source: Some(category), fallback: false };
        }
        if let Some(e) = self.experts.get(&TendencyCategory::Ambiguous) {
            return Lookup { coefficients: e.coefficients, source: Some(TendencyCategory::Ambiguous), fallback: true };
        }
        Lookup { coefficients: Coefficients::default(), source: None, fallback: true }
    }

    pub fn global_coefficients(&self) -> Coefficients {
        self.global.as_ref().map(|g| g.coefficients).unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnError> {
        let mut text = serde_json::to_string_pretty(&StoredLibrary::from(self)).expect("library serializes");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != u64::from(FORMAT_VERSION) {
            return Err(LearnError::SchemaVersionMismatch { found, expected: FORMAT_VERSION });
        }
        let stored: StoredLibrary = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        stored.try_into()
    }
}

fn parse_error(text: &str, e: &serde_json::Error) -> LearnError {
    let offset = byte_offset(text, e.line(), e.column());
    LearnError::Parse { offset, message: e.to_string() }
}

/// Byte offset of a 1-based `(line, column)` position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)).min(text.len())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredExpert {
    category: Option<TendencyCategory>,
    coefficients: Vec<String>,
    loss: String,
    dataset_fingerprint: String,
    seed: u64,
    events: usize,
    generations: usize,
    converged: bool,
    #[serde(default)]
    trace: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredLibrary {
    format_version: u32,
    meta: LibraryMeta,
    experts: Vec<StoredExpert>,
    global: Option<StoredExpert>,
}

impl From<&ExpertParams> for StoredExpert {
    fn from(e: &ExpertParams) -> Self {
        Self {
            category: e.category,
            coefficients: e.coefficients.to_vec().iter().map(|v| v.to_string()).collect(),
            loss: e.loss.to_string(),
            dataset_fingerprint: e.dataset_fingerprint.clone(),
            seed: e.seed,
            events: e.events,
            generations: e.generations,
            converged: e.converged,
            trace: e.trace.iter().map(|v| v.to_string()).collect(),
        }
    }
}

impl TryFrom<StoredExpert> for ExpertParams {
    type Error = LearnError;

    fn try_from(s: StoredExpert) -> Result<Self, LearnError> {
        let num = |t: &str| t.parse::<f64>().map_err(|e| LearnError::Parse { offset: 0, message: format!("{t:?}: {e}") });
        let values = s.coefficients.iter().map(|t| num(t)).collect::<Result<Vec<_>, _>>()?;
        let coefficients = Coefficients::from_slice(&values).ok_or_else(|| LearnError::Parse {
            offset: 0,
            message: format!("expected {} coefficients, found {}", Coefficients::LEN, values.len()),
        })?;
        Ok(Self {
            category: s.category,
            coefficients,
            loss: num(&s.loss)?,
            dataset_fingerprint: s.dataset_fingerprint,
            seed: s.seed,
            events: s.events,
            generations: s.generations,
            converged: s.converged,
            trace: s.trace.iter().map(|t| num(t)).collect::<Result<_, _>>()?,
        })
    }
}

impl From<&ExpertLibrary> for StoredLibrary {
    fn from(l: &ExpertLibrary) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            meta: l.meta.clone(),
            experts: l.experts.values().map(StoredExpert::from).collect(),
            global: l.global.as_ref().map(StoredExpert::from),
        }
    }
}

impl TryFrom<StoredLibrary> for ExpertLibrary {
    type Error = LearnError;

    fn try_from(s: StoredLibrary) -> Result<Self, LearnError> {
        let mut experts = BTreeMap::new();
        for e in s.experts {
            let e = ExpertParams::try_from(e)?;
            let cat = e.category.ok_or_else(|| LearnError::Parse { offset: 0, message: "expert without category".into() })?;
            if experts.insert(cat, e).is_some() {
                return Err(LearnError::Parse { offset: 0, message: format!("duplicate entry for {cat}") });
            }
        }
        let global = s.global.map(ExpertParams::try_from).transpose()?;
        Ok(Self { experts, global, meta: s.meta })
    }
}

/// Learning settings shared by every partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub game: GameConfig,
    /// Skip fitting the single global parameter set.
    #[serde(default)]
    pub skip_global: bool,
}

fn fit(events: &[LabeledEvent], category: Option<TendencyCategory>, ga: &GaConfig, game: &GameConfig, window: f64) -> Result<ExpertParams, LearnError> {
    let features = FeatureSet::new(events, game, window)?;
    let out = ga_optimize(&features, ga)?;
    if !out.converged {
        log::info!("{}: stopped at loss {:.4} after {} generations", category.map_or("global", |c| c.as_str()), out.loss, out.generations);
    }
    Ok(ExpertParams {
        category,
        coefficients: out.coefficients,
        loss: out.loss,
        dataset_fingerprint: fingerprint(events),
        seed: ga.seed,
        events: features.events.len(),
        generations: out.generations,
        converged: out.converged,
        trace: out.trace,
    })
}

/// Global single-model fit on all events.
pub fn learn_global(events: &[LabeledEvent], cfg: &LearnConfig, window: f64) -> Result<ExpertParams, LearnError> {
    fit(events, None, &cfg.ga, &cfg.game, window)
}

/// Partitions `events` by tendency and fits one parameter set per partition.
pub fn learn_library(events: &[LabeledEvent], cfg: &LearnConfig, window: f64) -> Result<ExpertLibrary, LearnError> {
    if events.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    cfg.ga.validate()?;
    cfg.game.validate().map_err(|e| LearnError::InvalidConfig(e.to_string()))?;
    let mut parts: BTreeMap<TendencyCategory, Vec<LabeledEvent>> = BTreeMap::new();
    for ev in events {
        parts.entry(ev.category).or_default().push(ev.clone());
    }
    let mut experts = BTreeMap::new();
    for (cat, evs) in &parts {
        let ga = GaConfig { seed: partition_seed(cfg.ga.seed, Some(*cat)), ..cfg.ga.clone() };
        match fit(evs, Some(*cat), &ga, &cfg.game, window) {
            Ok(e) => {
                experts.insert(*cat, e);
            }
            Err(LearnError::EmptyDataset) => log::warn!("{cat}: no usable events"),
            Err(e) => return Err(e),
        }
    }
    if experts.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let global = if cfg.skip_global {
        None
    } else {
        let ga = GaConfig { seed: partition_seed(cfg.ga.seed, None), ..cfg.ga.clone() };
        Some(fit(events, None, &ga, &cfg.game, window)?)
    };
    Ok(ExpertLibrary {
        experts,
        global,
        meta: LibraryMeta {
            tool: concat!("socialturn ", env!("CARGO_PKG_VERSION")).to_string(),
            dataset_fingerprint: fingerprint(events),
            ga: cfg.ga.clone(),
            game: cfg.game,
            window,
        },
    })
}

/// Seed of the GA run for one partition (`None` = the global model).
pub fn partition_seed(seed: u64, category: Option<TendencyCategory>) -> u64 {
    let k = match category {
        Some(TendencyCategory::Precedence) => 1,
        Some(TendencyCategory::Ambiguous) => 2,
        Some(TendencyCategory::Yielding) => 3,
        None => 4,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loss_examples() {
        assert_eq!(event_loss(1.0, 0.0, 1.0, 0.0), 0.0);
        assert_abs_diff_eq!(event_loss(1.0, 0.0, 0.5, 0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(event_loss(1.0, 0.0, 0.9, 0.1), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn byte_offsets() {
        let text = "ab\ncde\nf";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 2, 2), 4);
        assert_eq!(byte_offset(text, 3, 1), 7);
    }

    fn library(cats: &[TendencyCategory]) -> ExpertLibrary {
        let mut experts = BTreeMap::new();
        for (i, c) in cats.iter().enumerate() {
            experts.insert(
                *c,
                ExpertParams {
                    category: Some(*c),
                    coefficients: Coefficients::uniform(i as f64 + 0.5),
                    loss: 0.1,
                    dataset_fingerprint: "x".into(),
                    seed: 1,
                    events: 3,
                    generations: 4,
                    converged: false,
                    trace: vec![0.3, 0.2, 0.1],
                },
            );
        }
        ExpertLibrary {
            experts,
            global: None,
            meta: LibraryMeta {
                tool: "t".into(),
                dataset_fingerprint: "x".into(),
                ga: GaConfig::default(),
                game: GameConfig::default(),
                window: 1.0,
            },
        }
    }

    #[test]
    fn lookup_falls_back() {
        use TendencyCategory::*;
        let full = library(&[Precedence, Ambiguous, Yielding]);
        let hit = full.lookup(Precedence);
        assert_eq!((hit.source, hit.fallback), (Some(Precedence), false));
        let partial = library(&[Ambiguous, Yielding]);
        let l = partial.lookup(Precedence);
        assert_eq!((l.source, l.fallback), (Some(Ambiguous), true));
        let empty = library(&[]);
        let l = empty.lookup(Yielding);
        assert_eq!((l.source, l.fallback), (None, true));
        assert_eq!(l.coefficients, Coefficients::uniform(1.0));
    }

    #[test]
    fn invalid_ga_config() {
        assert!(GaConfig { population: 3, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { mutation_rate: 1.5, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { bounds: (1.0, 1.0), ..GaConfig::default() }.validate().is_err());
    }
}
