use std::path::{Path, PathBuf};

use windtunnel::corpus_io::{self, CorpusSample, QrelsFormat};
use windtunnel::graph_builder::{self, ScoreFilter};
use windtunnel::graph_sampler::{self, SamplePlan};
use windtunnel::powerlaw::{self, DegreeSample};
use windtunnel::seed::derive_seed;
use windtunnel::{corpus_reconstructor, eval_metrics, ClusterAssignment, Edge, Engine, EngineConfig, EntityRecord, QRel, QueryRecord};

use crate::args::*;
use crate::manifest::{beside, RunManifest};
use crate::CliError;

const MANIFEST_FILE: &str = "manifest.json";
const PIPELINE_TOP_FRACTION: f64 = 0.5;

type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn dispatch(cli: Cli) -> Result<PathBuf> {
    let engine = build_engine(&cli.engine)?;
    let e = &cli.engine;
    match cli.command {
        Command::BuildGraph(a) => build_graph(&engine, e, a),
        Command::Sample(a) => sample(&engine, e, a),
        Command::Reconstruct(a) => reconstruct(&engine, e, a),
        Command::Baseline(a) => baseline(&engine, e, a),
        Command::FitPowerlaw(a) => fit_powerlaw(e, a),
        Command::Eval(a) => eval(e, a),
        Command::Density(a) => density(e, a),
        Command::Pipeline(a) => pipeline(&engine, e, a),
    }
}

fn build_engine(args: &EngineArgs) -> Result<Engine> {
    let mut config = EngineConfig::default();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        config = config.with_workers(w);
    }
    if let Some(b) = args.memory_budget {
        config = config.with_memory_budget(b);
    }
    if let Some(dir) = &args.tmp_dir {
        config = config.with_tmp_dir(dir);
    }
    Ok(Engine::new(config)?)
}

fn qrels_format(input: &QrelsInput) -> Result<QrelsFormat> {
    input
        .qrels_format
        .parse()
        .map_err(|e: windtunnel::Error| CliError::Usage(e.to_string()))
}

fn load_qrels(input: &QrelsInput, m: &mut RunManifest) -> Result<Vec<QRel>> {
    let format = qrels_format(input)?;
    let qrels = corpus_io::read_qrels(&input.qrels, format)?;
    m.input(&input.qrels)?;
    m.count("qrels_read", qrels.len());
    Ok(qrels)
}

fn load_tables(t: &TableInputs, m: &mut RunManifest) -> Result<(Vec<QueryRecord>, Vec<EntityRecord>, Vec<QRel>)> {
    let format = qrels_format(&t.qrels)?;
    let queries = corpus_io::read_queries(&t.queries)?;
    let entities = corpus_io::read_corpus(&t.corpus)?;
    let qrels = corpus_io::read_qrels(&t.qrels.qrels, format)?;
    m.input(&t.queries)?;
    m.input(&t.corpus)?;
    m.input(&t.qrels.qrels)?;
    m.count("queries_read", queries.len());
    m.count("entities_read", entities.len());
    m.count("qrels_read", qrels.len());
    Ok((queries, entities, qrels))
}

fn score_filter(args: &ScoreFilterArgs, default_top_fraction: Option<f64>) -> Result<ScoreFilter<f64>> {
    Ok(match (args.tau, args.top_fraction.or(default_top_fraction)) {
        (Some(t), _) if t.is_nan() => return Err(CliError::Usage("--tau must be a number".into())),
        (Some(t), _) => ScoreFilter::Threshold(t),
        (None, Some(f)) if !(f > 0.0 && f <= 1.0) => {
            return Err(CliError::Usage(format!("--top-fraction {f} is outside (0, 1]")))
        }
        (None, Some(f)) => ScoreFilter::TopFraction(f),
        (None, None) => ScoreFilter::All,
    })
}

fn graph_stage(
    engine: &Engine,
    qrels: &[QRel],
    filter: ScoreFilter<f64>,
    max_query_fanout: usize,
    m: &mut RunManifest,
) -> Result<Vec<Edge>> {
    if max_query_fanout < 2 {
        return Err(CliError::Usage("--max-query-fanout must be at least 2".into()));
    }
    let tau = filter.tau(qrels)?;
    let kept = graph_builder::filter_qrels(qrels, tau);
    let build = graph_builder::build_affinity_edges(engine, &kept, max_query_fanout)?;
    m.setting(
        "score_filter",
        match filter {
            ScoreFilter::All => "none".to_string(),
            ScoreFilter::Threshold(t) => format!("tau {t}"),
            ScoreFilter::TopFraction(f) => format!("top-fraction {f}"),
        },
    );
    m.setting("tau", if tau.is_finite() { Some(tau) } else { None });
    m.setting("max_query_fanout", max_query_fanout);
    m.count("qrels_kept", kept.len());
    m.count("edges", build.edges.len());
    m.count("graph_nodes", graph_builder::node_degrees(&build.edges).len());
    m.count("queries_over_fanout_cap", build.dropped_queries.len());
    for (q, n) in &build.dropped_queries {
        m.warn(format!("query {q} judges {n} entities, above the fanout cap {max_query_fanout}; skipped"));
    }
    Ok(build.edges)
}

fn sample_stage(
    engine: &Engine,
    edges: &[Edge],
    rounds: u32,
    seed: u64,
    scale: &ScaleArgs,
    total_entities: u64,
    m: &mut RunManifest,
) -> Result<(Vec<ClusterAssignment>, SamplePlan<f64>)> {
    if rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let propagation = graph_sampler::propagate_labels(engine, edges, rounds)?;
    let changed = propagation.changed_fraction();
    m.setting("final_round_label_change_fraction", changed);
    if changed > 0.0 {
        m.warn(format!(
            "{:.4} of nodes changed label in the final round; propagation had not settled",
            changed
        ));
    }
    let clusters = graph_sampler::extract_clusters(engine, &propagation.states)?;
    let stage_seed = derive_seed(seed, "sample");
    m.seed = Some(seed);
    m.derived_seeds.insert("sample".into(), stage_seed);

    let factor = match (scale.scale, scale.target_entities) {
        (Some(c), _) if !(c > 0.0 && c.is_finite()) => {
            return Err(CliError::Usage(format!("--scale {c} must be positive")))
        }
        (Some(c), _) => c,
        (None, Some(target)) => graph_sampler::calibrate_scale(&clusters, total_entities, target)?,
        (None, None) => 1.0,
    };
    let mut plan = graph_sampler::sample_clusters(engine, &clusters, total_entities, stage_seed, factor)?;
    plan.target_entities = scale.target_entities;

    let selected: std::collections::HashSet<&str> = plan.selected_labels().collect();
    let selected_entities: u64 = clusters
        .iter()
        .filter(|c| selected.contains(c.label.as_str()))
        .map(ClusterAssignment::size)
        .sum();
    m.setting("scale", factor);
    m.setting("total_entities", total_entities);
    m.setting(
        "expected_sampled_entities",
        graph_sampler::expected_sample_size(&clusters, total_entities, factor),
    );
    m.count("labelled_nodes", propagation.states.len());
    m.count("clusters", clusters.len());
    m.count("clusters_selected", selected.len());
    m.count("entities_selected", selected_entities);
    Ok((clusters, plan))
}

fn write_sample(sample: &CorpusSample<f64>, dir: &Path, allow_empty: bool, m: &mut RunManifest) -> Result<()> {
    if sample.is_empty() && !allow_empty {
        return Err(CliError::Data(windtunnel::Error::InvalidArgument(
            "the sample is empty; pass --allow-empty to write empty tables".into(),
        )));
    }
    corpus_io::write_sample(sample, dir)?;
    for f in [corpus_io::QUERIES_FILE, corpus_io::CORPUS_FILE, corpus_io::QRELS_FILE] {
        m.output(&dir.join(f))?;
    }
    m.count("sample_queries", sample.queries.len());
    m.count("sample_entities", sample.entities.len());
    m.count("sample_judged_entities", sample.judged_entity_count());
    m.count("sample_unjudged_entities", sample.entities.len() - sample.judged_entity_count());
    m.count("sample_qrels", sample.qrels.len());
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn build_graph(engine: &Engine, e: &EngineArgs, a: BuildGraphArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("build-graph", &a, e);
    let qrels = load_qrels(&a.qrels, &mut m)?;
    let edges = graph_stage(engine, &qrels, score_filter(&a.filter, None)?, a.max_query_fanout, &mut m)?;
    graph_builder::write_edges(&a.out, &edges)?;
    m.output(&a.out)?;
    m.write(&beside(&a.out))
}

fn sample(engine: &Engine, e: &EngineArgs, a: SampleArgs) -> Result<PathBuf> {
    let [clusters_out, plan_out] = <[PathBuf; 2]>::try_from(a.out.clone())
        .map_err(|_| CliError::Usage("--out takes clusters.tsv,plan.tsv".into()))?;
    let mut m = RunManifest::new("sample", &a, e);
    let edges: Vec<Edge> = graph_builder::read_edges(&a.edges)?;
    m.input(&a.edges)?;
    m.count("edges", edges.len());
    let (clusters, plan) = sample_stage(engine, &edges, a.rounds, a.seed, &a.scale, a.total_entities, &mut m)?;
    graph_sampler::write_clusters(&clusters_out, &clusters)?;
    graph_sampler::write_plan(&plan_out, &plan)?;
    m.output(&clusters_out)?;
    m.output(&plan_out)?;
    m.write(&beside(&plan_out))
}

fn reconstruct(engine: &Engine, e: &EngineArgs, a: ReconstructArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("reconstruct", &a, e);
    let plan = graph_sampler::read_plan::<f64>(&a.plan)?;
    let clusters = graph_sampler::read_clusters(&a.clusters)?;
    m.input(&a.plan)?;
    m.input(&a.clusters)?;
    let (queries, entities, qrels) = load_tables(&a.tables, &mut m)?;
    let sample = corpus_reconstructor::reconstruct(engine, &plan, &clusters, &queries, &entities, &qrels)?;
    create_dir(&a.out)?;
    write_sample(&sample, &a.out, a.allow_empty, &mut m)?;
    m.write(&a.out.join(MANIFEST_FILE))
}

fn baseline(engine: &Engine, e: &EngineArgs, a: BaselineArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("baseline", &a, e);
    let (queries, entities, qrels) = load_tables(&a.tables, &mut m)?;
    let stage_seed = derive_seed(a.seed, "baseline");
    m.seed = Some(a.seed);
    m.derived_seeds.insert("baseline".into(), stage_seed);
    let sample = corpus_reconstructor::uniform_sample(engine, &entities, &queries, &qrels, a.k, stage_seed)?;
    create_dir(&a.out)?;
    write_sample(&sample, &a.out, a.allow_empty, &mut m)?;
    m.write(&a.out.join(MANIFEST_FILE))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn fit_powerlaw(e: &EngineArgs, a: FitArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("fit-powerlaw", &a, e);
    if !(a.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let edges: Vec<Edge> = graph_builder::read_edges(&a.edges)?;
    m.input(&a.edges)?;
    let degrees = DegreeSample::new(graph_builder::node_degrees(&edges).into_values())?;
    let fit = powerlaw::fit_yule_simon(&degrees, a.tol, a.max_iter)?;
    if fit.boundary_warning {
        m.warn(format!("fit reached the search bound (rho = {})", fit.rho));
    }
    write_json(&a.out, &fit)?;
    powerlaw::export_histogram(&degrees, Some(&fit), &a.hist)?;
    m.count("nodes", degrees.len());
    m.count("iterations", fit.iterations);
    m.output(&a.out)?;
    m.output(&a.hist)?;
    m.write(&beside(&a.out))
}

fn eval(e: &EngineArgs, a: EvalArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("eval", &a, e);
    let run = corpus_io::read_run::<f64>(&a.run)?;
    m.input(&a.run)?;
    let qrels = load_qrels(&a.qrels, &mut m)?;
    let report = eval_metrics::precision_at_k(&run, &qrels, a.k, a.rel_threshold)?;
    write_json(&a.out, &report)?;
    m.count("judged_queries", report.judged_queries);
    m.output(&a.out)?;
    m.write(&beside(&a.out))
}

fn density(e: &EngineArgs, a: DensityArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("density", &a, e);
    let sample = corpus_io::read_sample::<f64>(&a.sample)?;
    for f in [corpus_io::QUERIES_FILE, corpus_io::CORPUS_FILE, corpus_io::QRELS_FILE] {
        m.input(&a.sample.join(f))?;
    }
    let report = eval_metrics::query_density(&sample)?;
    write_json(&a.out, &report)?;
    m.output(&a.out)?;
    m.write(&beside(&a.out))
}

fn pipeline(engine: &Engine, e: &EngineArgs, a: PipelineArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new("pipeline", &a, e);
    let (queries, entities, qrels) = load_tables(&a.tables, &mut m)?;
    let filter = score_filter(&a.filter, Some(PIPELINE_TOP_FRACTION))?;
    let edges = graph_stage(engine, &qrels, filter, a.max_query_fanout, &mut m)?;
    let (clusters, plan) = sample_stage(engine, &edges, a.rounds, a.seed, &a.scale, entities.len() as u64, &mut m)?;
    let sample = corpus_reconstructor::reconstruct(engine, &plan.entries, &clusters, &queries, &entities, &qrels)?;

    create_dir(&a.out)?;
    let edges_out = a.out.join("edges.tsv");
    let clusters_out = a.out.join("clusters.tsv");
    let plan_out = a.out.join("plan.tsv");
    graph_builder::write_edges(&edges_out, &edges)?;
    graph_sampler::write_clusters(&clusters_out, &clusters)?;
    graph_sampler::write_plan(&plan_out, &plan)?;
    for p in [&edges_out, &clusters_out, &plan_out] {
        m.output(p)?;
    }
    write_sample(&sample, &a.out, a.allow_empty, &mut m)?;
    m.write(&a.out.join(MANIFEST_FILE))
}
