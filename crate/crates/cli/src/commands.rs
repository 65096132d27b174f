use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use socialturn::engine::{instant_seed, DecisionEngine, ParamSource};
use socialturn::events::{read_jsonl, write_jsonl, LabeledEvent, SAMPLE_DT};
use socialturn::expert::{learn_library, ExpertLibrary, LearnConfig};
use socialturn::game::{
    build_payoff_matrix, decide, expected_payoffs, solve_mixed_nash, support_enumeration, Action, Bimatrix, Coefficients,
    GameConfig, GameState, MixedProfile,
};
use socialturn::ingest::{extract_events, label_events, parse_trajectories};
use socialturn::kinematics::{IntersectionGeometry, Role};
use socialturn::orientation::{OrientationConfig, TendencyCategory};
use socialturn::sim::{run_batch, HvPolicy, ScriptedProfile, SimConfig, SimError, Stats};
use socialturn::synth::{generate, SynthConfig};
use socialturn_service::{ServeConfig, Server};

use crate::manifest::{default_path, Run, RunManifest};
use crate::{parse_args, Command, EngineArgs, IngestArgs, IoAnalyzeArgs, LearnArgs, ReplayArgs, ServeArgs, SimulateArgs, SolveArgs, SynthArgs};

/// Bad input (exit 2) or a failure while running (exit 3).
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

type Outcome = Result<(), Failure>;

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::IoAnalyze(_) => "io-analyze",
        Command::Solve(_) => "solve",
        Command::Ingest(_) => "ingest",
        Command::Synth(_) => "synth",
        Command::Learn(_) => "learn",
        Command::Predict(_) => "predict",
        Command::Eval(_) => "eval",
        Command::Simulate(_) => "simulate",
        Command::Serve(_) => "serve",
        Command::Replay(_) => "replay",
    }
}

pub fn dispatch(cmd: Command, manifest: Option<PathBuf>, args: Vec<String>) -> Outcome {
    let command = name(&cmd);
    if let Command::Replay(a) = cmd {
        return replay(&a, manifest);
    }
    let mut run = Run::start(command, args).runtime()?;
    if let Command::Serve(a) = cmd {
        return serve(&a, run, manifest);
    }
    execute(cmd, &mut run)?;
    let path = manifest.unwrap_or_else(|| default_path(command, run.first_output()));
    run.finish().runtime()?.write(&path).runtime()
}

fn execute(cmd: Command, run: &mut Run) -> Outcome {
    match cmd {
        Command::IoAnalyze(a) => io_analyze(&a, run),
        Command::Solve(a) => solve(&a, run),
        Command::Ingest(a) => ingest(&a, run),
        Command::Synth(a) => synth(&a, run),
        Command::Learn(a) => learn(&a, run),
        Command::Predict(a) => predict(&a, run),
        Command::Eval(a) => eval(&a, run),
        Command::Simulate(a) => simulate(&a, run),
        Command::Serve(_) | Command::Replay(_) => Err(Failure::Invalid(anyhow!("{} cannot be nested", name(&cmd)))),
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Reads a JSON config, filling missing keys from `T::default()`.
fn read_config<T: Serialize + DeserializeOwned + Default>(run: &mut Run, name: &str, path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    run.config(name, path).invalid()?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).invalid()?;
    let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).invalid()?;
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    merge(&mut value, &patch);
    serde_json::from_value(value).with_context(|| format!("invalid {name} config {}", path.display())).invalid()
}

fn read_events(run: &mut Run, path: &Path) -> Result<Vec<LabeledEvent>, Failure> {
    run.input(path).invalid()?;
    let events = read_jsonl(path).with_context(|| format!("reading events {}", path.display())).invalid()?;
    if events.is_empty() {
        return Err(Failure::Invalid(anyhow!("{} holds no events", path.display())));
    }
    Ok(events)
}

fn load_library(run: &mut Run, path: &Path) -> Result<ExpertLibrary, Failure> {
    run.input(path).invalid()?;
    ExpertLibrary::load(path).with_context(|| format!("loading library {}", path.display())).invalid()
}

fn engine_for(library: ExpertLibrary, baseline: bool) -> DecisionEngine {
    if baseline {
        DecisionEngine::baseline(&library)
    } else {
        DecisionEngine::expert(library)
    }
}

fn csv_writer(run: &mut Run, path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    run.output(path);
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display())).runtime()
}

fn finish_csv(mut w: csv::Writer<fs::File>) -> Outcome {
    w.flush().runtime()
}

fn io_analyze(a: &IoAnalyzeArgs, run: &mut Run) -> Outcome {
    let cfg: OrientationConfig = read_config(run, "orientation", a.orientation.as_deref())?;
    let events = read_events(run, &a.events)?;
    #[derive(Serialize)]
    struct Row<'a> {
        event: &'a str,
        t: f64,
        itsi: f64,
        s_norm: f64,
        io: f64,
        delta_ttcp: f64,
        a_c: f64,
    }
    let mut w = csv_writer(run, &a.out)?;
    let mut frames = 0;
    let mut tally: BTreeMap<TendencyCategory, usize> = BTreeMap::new();
    for ev in &events {
        let series = cfg.io_series(&ev.series, SAMPLE_DT);
        for f in &series {
            let s = f.sample;
            w.serialize(Row { event: &ev.id, t: s.t, itsi: s.itsi, s_norm: s.s_norm, io: s.io, delta_ttcp: f.delta_ttcp, a_c: f.a_c }).runtime()?;
        }
        frames += series.len();
        let samples: Vec<_> = series.iter().map(|f| f.sample).collect();
        if let Ok(c) = cfg.classify(&samples) {
            *tally.entry(c).or_default() += 1;
        }
    }
    finish_csv(w)?;
    println!("{} events, {frames} frames -> {}", events.len(), a.out.display());
    for (c, n) in tally {
        println!("  {:<10} {n}", c.as_str());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    #[serde(default)]
    bimatrix: Option<Bimatrix>,
    #[serde(default)]
    state: Option<GameState>,
    #[serde(default)]
    coefficients: Option<Coefficients>,
    /// Library path, relative to the scenario file.
    #[serde(default)]
    library: Option<PathBuf>,
    #[serde(default)]
    category: Option<TendencyCategory>,
    #[serde(default)]
    game: Option<GameConfig>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    seed: u64,
    category: Option<TendencyCategory>,
    bimatrix: Bimatrix,
    equilibria: Vec<MixedProfile>,
    profile: MixedProfile,
    expected_payoffs: [f64; 2],
    decision_left: Action,
    decision_straight: Action,
}

fn solve(a: &SolveArgs, run: &mut Run) -> Outcome {
    run.config("scenario", &a.scenario).invalid()?;
    let text = fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display())).invalid()?;
    let sc: Scenario = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.scenario.display())).invalid()?;
    let seed = a.seed.unwrap_or(sc.seed);
    run.seed("seed", seed);
    let mut game = sc.game.unwrap_or_default();
    let bimatrix = match (sc.bimatrix, sc.state) {
        (Some(b), None) => b,
        (None, Some(state)) => {
            let coefficients = match (sc.coefficients, &sc.library) {
                (Some(c), None) => c,
                (None, Some(lib)) => {
                    let path = a.scenario.parent().unwrap_or(Path::new(".")).join(lib);
                    let library = load_library(run, &path)?;
                    if sc.game.is_none() {
                        game = library.meta.game;
                    }
                    let category = sc.category.ok_or_else(|| anyhow!("a library scenario needs a category")).invalid()?;
                    library.lookup(category).coefficients
                }
                _ => return Err(Failure::Invalid(anyhow!("give exactly one of coefficients and library"))),
            };
            build_payoff_matrix(&state, &coefficients, &game, seed).invalid()?
        }
        _ => return Err(Failure::Invalid(anyhow!("give exactly one of bimatrix and state"))),
    };
    let profile = solve_mixed_nash(&bimatrix).runtime()?;
    let (el, es) = expected_payoffs(&bimatrix, &profile);
    let report = SolveReport {
        seed,
        category: sc.category,
        bimatrix,
        equilibria: support_enumeration(&bimatrix),
        profile,
        expected_payoffs: [el, es],
        decision_left: decide(&profile, Role::LeftTurn, game.decision_threshold),
        decision_straight: decide(&profile, Role::Straight, game.decision_threshold),
    };
    println!("payoffs (left, straight); rows = left action, cols = straight action");
    for (i, r) in ["proceed", "yield"].iter().enumerate() {
        println!(
            "  {r:<8} ({:>9.4}, {:>9.4})  ({:>9.4}, {:>9.4})",
            bimatrix.u_l[i][0], bimatrix.u_s[i][0], bimatrix.u_l[i][1], bimatrix.u_s[i][1]
        );
    }
    println!("equilibria found: {}", report.equilibria.len());
    println!("selected: left proceed {:.6}, straight proceed {:.6}", profile.p_l[0], profile.p_s[0]);
    println!("decisions: left {:?}, straight {:?}", report.decision_left, report.decision_straight);
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        fs::write(out, text).with_context(|| format!("writing {}", out.display())).runtime()?;
        run.output(out);
    }
    Ok(())
}

fn ingest(a: &IngestArgs, run: &mut Run) -> Outcome {
    let geometry: IntersectionGeometry = read_config(run, "geometry", Some(&a.geometry))?;
    let layout = geometry.layout().invalid()?;
    let orientation: OrientationConfig = read_config(run, "orientation", a.orientation.as_deref())?;
    run.input(&a.csv).invalid()?;
    let report = parse_trajectories(&a.csv).with_context(|| format!("reading {}", a.csv.display())).invalid()?;
    for r in &report.rejected {
        log::warn!("line {}: {}", r.line, r.message);
    }
    let events = extract_events(&report.tracks, &layout);
    let (labeled, discarded) = label_events(&events, &orientation);
    for d in &discarded {
        log::info!("{}: {}", d.id, d.reason);
    }
    write_jsonl(&a.out, &labeled).runtime()?;
    run.output(&a.out);
    println!(
        "{} tracks ({} rows rejected), {} interactions, {} labelled, {} discarded -> {}",
        report.tracks.len(),
        report.rejected.len(),
        events.len(),
        labeled.len(),
        discarded.len(),
        a.out.display()
    );
    Ok(())
}

fn category_counts(events: &[LabeledEvent]) -> BTreeMap<TendencyCategory, (usize, usize)> {
    let mut m: BTreeMap<TendencyCategory, (usize, usize)> = BTreeMap::new();
    for e in events {
        let c = m.entry(e.category).or_default();
        c.0 += 1;
        c.1 += usize::from(e.left_first());
    }
    m
}

fn synth(a: &SynthArgs, run: &mut Run) -> Outcome {
    let mut cfg: SynthConfig = read_config(run, "synth", a.config.as_deref())?;
    cfg.seed = a.seed;
    if let Some(n) = a.per_category {
        cfg.per_category = n;
    }
    run.seed("seed", a.seed);
    let events = generate(&cfg);
    write_jsonl(&a.out, &events).runtime()?;
    run.output(&a.out);
    println!("{} events -> {}", events.len(), a.out.display());
    for (c, (n, lf)) in category_counts(&events) {
        println!("  {:<10} {n:>5}  left first {lf}", c.as_str());
    }
    Ok(())
}

fn learn(a: &LearnArgs, run: &mut Run) -> Outcome {
    let mut cfg: LearnConfig = read_config(run, "learn", a.config.as_deref())?;
    cfg.ga.seed = a.seed;
    run.seed("seed", a.seed);
    let events = read_events(run, &a.data)?;
    let window = OrientationConfig::default().window;
    let library = learn_library(&events, &cfg, window).invalid()?;
    library.save(&a.out).runtime()?;
    run.output(&a.out);
    let parts = library.experts.values().chain(library.global.as_ref());
    if let Some(path) = &a.trace {
        #[derive(Serialize)]
        struct Row<'a> {
            partition: &'a str,
            generation: usize,
            best_loss: f64,
        }
        let mut w = csv_writer(run, path)?;
        for p in parts.clone() {
            let partition = p.category.map_or("global", |c| c.as_str());
            for (generation, &best_loss) in p.trace.iter().enumerate() {
                w.serialize(Row { partition, generation, best_loss }).runtime()?;
            }
        }
        finish_csv(w)?;
    }
    println!("{:<10} {:>6} {:>8} {:>5} converged", "partition", "events", "loss", "gens");
    for p in parts {
        let partition = p.category.map_or("global", |c| c.as_str());
        println!("{partition:<10} {:>6} {:>8.4} {:>5} {}", p.events, p.loss, p.generations, p.converged);
    }
    println!("-> {}", a.out.display());
    Ok(())
}

fn predictions(a: &EngineArgs, run: &mut Run) -> Result<(Vec<LabeledEvent>, Vec<socialturn::engine::EventPrediction>), Failure> {
    let library = load_library(run, &a.library)?;
    let events = read_events(run, &a.events)?;
    run.seed("seed", a.seed);
    let engine = engine_for(library, a.baseline);
    let preds = events
        .iter()
        .enumerate()
        .map(|(i, ev)| engine.predict_event(ev, instant_seed(a.seed, i)))
        .collect::<Result<Vec<_>, _>>()
        .runtime()?;
    Ok((events, preds))
}

fn predict(a: &EngineArgs, run: &mut Run) -> Outcome {
    let (events, preds) = predictions(a, run)?;
    #[derive(Serialize)]
    struct Row<'a> {
        event: &'a str,
        category: TendencyCategory,
        left_first: bool,
        p_hat_l: f64,
        p_hat_s: f64,
        predicted_left_first: bool,
        correct: bool,
        instants: usize,
    }
    let mut w = csv_writer(run, &a.out)?;
    let mut rows = [(0usize, 0usize); 2];
    for (ev, p) in events.iter().zip(&preds) {
        w.serialize(Row {
            event: &ev.id,
            category: ev.category,
            left_first: p.left_first,
            p_hat_l: p.p_hat_l,
            p_hat_s: p.p_hat_s,
            predicted_left_first: p.predicted_left_first(),
            correct: p.correct(),
            instants: p.instants.len(),
        })
        .runtime()?;
        let r = &mut rows[usize::from(!p.left_first)];
        r.0 += 1;
        r.1 += usize::from(p.correct());
    }
    finish_csv(w)?;
    let pct = |(n, ok): (usize, usize)| if n == 0 { "-".to_string() } else { format!("{:.1}%", 100.0 * ok as f64 / n as f64) };
    println!("{:<42} {:>6} {:>8}", "scenario", "events", "accuracy");
    println!("{:<42} {:>6} {:>8}", "Left Turn Goes First, Straight Yields", rows[0].0, pct(rows[0]));
    println!("{:<42} {:>6} {:>8}", "Straight Goes First, Left Turn Yields", rows[1].0, pct(rows[1]));
    let all = (rows[0].0 + rows[1].0, rows[0].1 + rows[1].1);
    println!("{:<42} {:>6} {:>8}", "Overall", all.0, pct(all));
    Ok(())
}

fn eval(a: &EngineArgs, run: &mut Run) -> Outcome {
    let (events, preds) = predictions(a, run)?;
    #[derive(Serialize)]
    struct Row<'a> {
        event: &'a str,
        category: TendencyCategory,
        left_first: bool,
        decision_index: Option<usize>,
        decision_t: Option<f64>,
        decision_distance: f64,
    }
    let mut w = csv_writer(run, &a.out)?;
    let mut missing = 0;
    for (ev, p) in events.iter().zip(&preds) {
        let k = p.decision_point();
        missing += usize::from(k.is_none());
        w.serialize(Row {
            event: &ev.id,
            category: ev.category,
            left_first: p.left_first,
            decision_index: k,
            decision_t: k.map(|k| p.instants[k].t),
            decision_distance: p.decision_distance(),
        })
        .runtime()?;
    }
    finish_csv(w)?;
    let stats = Stats::of(preds.iter().map(|p| p.decision_distance()));
    println!("events {}, without a decision point {missing}", preds.len());
    println!(
        "distance to conflict at the decision point: mean {:.2} m, median {:.2} m",
        stats.mean.unwrap_or(f64::NAN),
        stats.median.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn parse_policies(spec: &str) -> Result<Vec<HvPolicy>, Failure> {
    let scripted = |profile| HvPolicy::Scripted { profile };
    match spec {
        "config" => Ok(Vec::new()),
        "mix" => Ok(ScriptedProfile::ALL.iter().map(|p| scripted(*p)).collect()),
        list => list
            .split(',')
            .map(|p| match p.trim() {
                "aggressive" => Ok(scripted(ScriptedProfile::Aggressive)),
                "conservative" => Ok(scripted(ScriptedProfile::Conservative)),
                "oscillating" => Ok(scripted(ScriptedProfile::Oscillating)),
                other => Err(Failure::Invalid(anyhow!("unknown policy {other:?}"))),
            })
            .collect(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn label<T: Serialize>(v: Option<T>) -> String {
    v.map(|x| serde_json::to_value(x).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()).unwrap_or_default()
}

fn simulate(a: &SimulateArgs, run: &mut Run) -> Outcome {
    let base: SimConfig = read_config(run, "sim", a.config.as_deref())?;
    let policies = parse_policies(&a.policies)?;
    let engine = match &a.library {
        Some(p) => engine_for(load_library(run, p)?, a.baseline),
        None => DecisionEngine::new(ParamSource::Global(Coefficients::default()), OrientationConfig::default(), GameConfig::default()),
    };
    run.seed("seed", a.seed);
    if let Some(dir) = &a.logs {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).runtime()?;
    }
    let mut log_error = None;
    let result = run_batch(&base, &policies, a.episodes, a.seed, &engine, |i, log| {
        if let Some(dir) = &a.logs {
            if let Err(e) = fs::write(dir.join(format!("episode-{i:05}.jsonl")), log.to_jsonl()) {
                log_error.get_or_insert(e);
            }
        }
    });
    let (rows, summary) = match result {
        Ok(r) => r,
        Err(e @ (SimError::ConfigInvalid(_) | SimError::Geometry(_))) => return Err(Failure::Invalid(e.into())),
        Err(e) => return Err(Failure::Runtime(e.into())),
    };
    if let Some(e) = log_error {
        return Err(Failure::Runtime(anyhow!(e).context("writing episode logs")));
    }
    #[derive(Serialize)]
    struct Row {
        episode: usize,
        seed: u64,
        policy: String,
        av_d0: f64,
        av_v0: f64,
        hv_d0: f64,
        hv_v0: f64,
        terminal: String,
        transit_time_av: String,
        transit_time_hv: String,
        combined: String,
        pet: String,
        collision: bool,
        severe_conflict: bool,
        first: String,
        final_decision: String,
        decision_consistency: String,
    }
    let mut w = csv_writer(run, &a.out)?;
    for r in rows {
        let m = r.metrics;
        w.serialize(Row {
            episode: r.episode,
            seed: r.seed,
            policy: r.policy,
            av_d0: r.av_d0,
            av_v0: r.av_v0,
            hv_d0: r.hv_d0,
            hv_v0: r.hv_v0,
            terminal: label(m.terminal),
            transit_time_av: opt(m.transit_time_av),
            transit_time_hv: opt(m.transit_time_hv),
            combined: opt(m.combined),
            pet: opt(m.pet),
            collision: m.collision,
            severe_conflict: m.severe_conflict,
            first: label(m.first),
            final_decision: label(m.final_decision),
            decision_consistency: m.decision_consistency.map(|b| b.to_string()).unwrap_or_default(),
        })
        .runtime()?;
    }
    finish_csv(w)?;
    if let Some(dir) = &a.logs {
        run.output(dir);
    }
    let s = summary;
    println!("episodes {}  collisions {}  severe conflicts {} ({:.1}%)  timeouts {}", s.episodes, s.collisions, s.severe_conflicts, 100.0 * s.severe_rate(), s.timeouts);
    let show = |name: &str, st: &Stats| {
        println!("  {name:<12} n {:>4}  mean {:>6.2}  median {:>6.2}", st.n, st.mean.unwrap_or(f64::NAN), st.median.unwrap_or(f64::NAN));
    };
    show("transit av", &s.transit_av);
    show("transit hv", &s.transit_hv);
    show("combined", &s.combined);
    show("pet", &s.pet);
    if let Some(c) = s.consistency_rate {
        println!("  decision consistency {:.1}%", 100.0 * c);
    }
    Ok(())
}

fn serve(a: &ServeArgs, mut run: Run, manifest: Option<PathBuf>) -> Outcome {
    let library = load_library(&mut run, &a.library)?;
    let default: SimConfig = read_config(&mut run, "sim", a.config.as_deref())?;
    default.validate().invalid()?;
    if a.tick_ms == 0 {
        return Err(Failure::Invalid(anyhow!("--tick-ms must be positive")));
    }
    let engine = engine_for(library, a.baseline);
    let server = Server::bind(&a.addr, engine, default, ServeConfig { tick: Duration::from_millis(a.tick_ms) })
        .with_context(|| format!("binding {}", a.addr))
        .runtime()?;
    let path = manifest.unwrap_or_else(|| default_path("serve", None));
    run.finish().runtime()?.write(&path).runtime()?;
    println!("listening on ws://{}", server.local_addr().runtime()?);
    server.run().runtime()
}

fn replay(a: &ReplayArgs, manifest: Option<PathBuf>) -> Outcome {
    let source = fs::canonicalize(&a.manifest).with_context(|| format!("opening {}", a.manifest.display())).invalid()?;
    let recorded = RunManifest::read(&source).invalid()?;
    if matches!(recorded.command.as_str(), "serve" | "replay") {
        return Err(Failure::Invalid(anyhow!("{} runs cannot be replayed", recorded.command)));
    }
    let target = manifest.map(|p| std::env::current_dir().map(|d| d.join(p))).transpose().runtime()?;
    std::env::set_current_dir(&recorded.cwd).with_context(|| format!("entering {}", recorded.cwd.display())).invalid()?;
    let cmd = parse_args(&recorded.args).invalid()?;
    let mut run = Run::start(&recorded.command, recorded.args.clone()).runtime()?;
    execute(cmd, &mut run)?;
    let again = run.finish().runtime()?;
    let target = target.unwrap_or_else(|| {
        let mut s = source.clone().into_os_string();
        s.push(".replay.json");
        PathBuf::from(s)
    });
    again.write(&target).runtime()?;
    let mut problems = Vec::new();
    if again.inputs != recorded.inputs {
        problems.push("inputs changed since the recorded run".to_string());
    }
    for (i, want) in recorded.outputs.iter().enumerate() {
        match again.outputs.iter().find(|o| o.path == want.path) {
            Some(got) if got.sha256 == want.sha256 => println!("same      {}", want.path.display()),
            Some(_) => problems.push(format!("differs   {}", want.path.display())),
            None => problems.push(format!("missing   {} (output {i})", want.path.display())),
        }
    }
    for extra in again.outputs.iter().filter(|o| !recorded.outputs.iter().any(|w| w.path == o.path)) {
        problems.push(format!("new       {}", extra.path.display()));
    }
    if problems.is_empty() {
        println!("replay reproduced all {} outputs", recorded.outputs.len());
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(Failure::Invalid(anyhow!("replay did not reproduce the recorded run")))
    }
}
