//! Command-line front end: argument parsing, orchestration of the analysis
//! pipeline and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use metaprop::io::{load_dataset, write_dataset, SchemaConfig};
use metaprop::multilevel::{reml_fit, FitResult, Likelihood};
use metaprop::regression::{
    encode_features, forward_select, permutation_importance, Criterion, InformationCriteria,
    PfiOptions, PfiReport, SelectionOptions, SelectionPath,
};
use metaprop::reporting::{
    forest_plot, funnel_plot, importance_plot, regression_plot, selection_plot, summary_table,
    Plot, PlotKind, PlotSpec, SummaryTable,
};
use metaprop::simulate::{simulate_dataset, CountRange, SimulationConfig};
use metaprop::{Dataset, Error, ErrorKind, FeatureMatrix, Result};
use serde::Serialize;
use serde_json::{json, Value};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "METAPROP_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "metaprop",
    version,
    about = "Three-level meta-analysis of accuracy proportions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intercept-only model: summary table, forest and funnel plots.
    Analyze(AnalyzeArgs),
    /// Model with study-level features next to the intercept-only model.
    Regress(RegressArgs),
    /// Forward selection over the declared features.
    Select(SelectArgs),
    /// Cross-validated permutation feature importance.
    Importance(ImportanceArgs),
    /// Draw a synthetic dataset with known parameters.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Delimited input file.
    #[arg(long)]
    pub input: PathBuf,
    /// TOML schema declaring delimiter, missing token and features.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    /// Significance level of the reported intervals.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Drop a study before fitting. Repeatable.
    #[arg(long = "exclude-study", value_name = "ID")]
    pub exclude_study: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long = "out", env = OUT_ENV, default_value = "metaprop-out")]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Features in the model, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Candidate features, comma separated. Defaults to every declared feature.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Aic)]
    pub criterion: CriterionArg,
    /// Likelihood behind AIC and BIC.
    #[arg(long, value_enum, default_value_t = LikelihoodArg::Ml)]
    pub likelihood: LikelihoodArg,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Features in the model, comma separated. Defaults to every declared feature.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML, or JSON by extension). Overrides the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value_t = 20)]
    pub studies: usize,
    #[arg(long, default_value_t = 2)]
    pub min_trials: u64,
    #[arg(long, default_value_t = 6)]
    pub max_trials: u64,
    #[arg(long, default_value_t = 200)]
    pub min_n: u64,
    #[arg(long, default_value_t = 2000)]
    pub max_n: u64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.017)]
    pub sigma2_xi: f64,
    #[arg(long, default_value_t = 0.010)]
    pub sigma2_zeta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
    Rmse,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
            CriterionArg::Rmse => Criterion::Rmse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Ml,
    Reml,
}

impl From<LikelihoodArg> for Likelihood {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Ml => Likelihood::Ml,
            LikelihoodArg::Reml => Likelihood::Reml,
        }
    }
}

/// Process exit status for a failure.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Data => 2,
        ErrorKind::Convergence => 3,
        ErrorKind::RankDeficient => 4,
        ErrorKind::Io => 1,
    }
}

/// Everything that determines a run's numbers. Written into every JSON artifact.
#[derive(Debug, Clone, Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    input: &'a Path,
    schema_file: Option<&'a Path>,
    schema: &'a SchemaConfig,
    alpha: f64,
    excluded_studies: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<SelectionOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    importance: Option<PfiOptions>,
}

fn provenance(config: &impl Serialize) -> Value {
    json!({
        "tool": "metaprop",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    })
}

/// Run one command and return the files it wrote, in write order.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Regress(a) => regress(&a),
        Command::Select(a) => select(&a),
        Command::Importance(a) => importance(&a),
        Command::Simulate(a) => simulate(&a),
    }
}

struct Loaded {
    schema: SchemaConfig,
    dataset: Dataset,
}

fn load(args: &DataArgs) -> Result<Loaded> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let schema = match &args.schema {
        Some(path) => SchemaConfig::load(path)?,
        None => SchemaConfig::default(),
    };
    let dataset = load_dataset(&args.input, &schema)?;
    let dataset = if args.exclude_study.is_empty() {
        dataset
    } else {
        dataset.without_studies(&args.exclude_study)?
    };
    Ok(Loaded { schema, dataset })
}

fn config<'a>(
    command: &'static str,
    args: &'a DataArgs,
    schema: &'a SchemaConfig,
) -> RunConfig<'a> {
    RunConfig {
        command,
        input: &args.input,
        schema_file: args.schema.as_deref(),
        schema,
        alpha: args.alpha,
        excluded_studies: &args.exclude_study,
        features: None,
        selection: None,
        importance: None,
    }
}

fn check_declared(schema: &SchemaConfig, features: &[String]) -> Result<()> {
    for f in features {
        if schema.feature(f).is_none() {
            return Err(Error::Data(format!(
                "feature '{f}' is not declared in the schema"
            )));
        }
    }
    Ok(())
}

fn all_features(schema: &SchemaConfig) -> Vec<String> {
    schema.features.iter().map(|f| f.name.clone()).collect()
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, provenance: &Value, body: &impl Serialize) -> Result<()> {
        let mut value = serde_json::to_value(body)?;
        let map = value.as_object_mut().ok_or_else(|| {
            Error::InvalidArgument(format!("{name}: artifact is not a JSON object"))
        })?;
        map.insert("provenance".into(), provenance.clone());
        let mut s = serde_json::to_string_pretty(&value)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn plot<T: Serialize>(&mut self, stem: &str, provenance: &Value, plot: &Plot<T>) -> Result<()> {
        self.text(&format!("{stem}.svg"), &plot.svg)?;
        self.json(&format!("{stem}.json"), provenance, &plot.sidecar)
    }
}

fn plot_spec(kind: PlotKind, alpha: f64) -> PlotSpec {
    PlotSpec::new(kind).with_confidence(1.0 - alpha)
}

fn intercept_fit(dataset: &Dataset) -> Result<FitResult> {
    reml_fit(
        dataset,
        &FeatureMatrix::intercept_only(dataset.num_trials()),
    )
}

fn write_summary(out: &mut Writer, prov: &Value, table: &SummaryTable) -> Result<()> {
    out.text("summary.txt", &table.to_text())?;
    out.json("summary.json", prov, table)
}

fn analyze(args: &AnalyzeArgs) -> Result<Vec<PathBuf>> {
    let Loaded { schema, dataset } = load(&args.data)?;
    let prov = provenance(&config("analyze", &args.data, &schema));
    let fit = intercept_fit(&dataset)?;
    let table = summary_table(&dataset, &fit, None, args.data.alpha)?;
    let forest = forest_plot(
        &fit,
        &dataset,
        &plot_spec(PlotKind::Forest, args.data.alpha),
    )?;
    let funnel = funnel_plot(
        &fit,
        &dataset,
        &plot_spec(PlotKind::Funnel, args.data.alpha),
    )?;

    let mut out = Writer::new(&args.data.out.dir)?;
    write_summary(&mut out, &prov, &table)?;
    out.plot("forest", &prov, &forest)?;
    out.plot("funnel", &prov, &funnel)?;
    Ok(out.written)
}

fn regress(args: &RegressArgs) -> Result<Vec<PathBuf>> {
    if args.features.is_empty() {
        return analyze(&AnalyzeArgs {
            data: DataArgs {
                input: args.data.input.clone(),
                schema: args.data.schema.clone(),
                out: OutArgs {
                    dir: args.data.out.dir.clone(),
                },
                alpha: args.data.alpha,
                exclude_study: args.data.exclude_study.clone(),
            },
        });
    }
    let Loaded { schema, dataset } = load(&args.data)?;
    check_declared(&schema, &args.features)?;
    let mut cfg = config("regress", &args.data, &schema);
    cfg.features = Some(&args.features);
    let prov = provenance(&cfg);
    let alpha = args.data.alpha;

    let null = intercept_fit(&dataset)?;
    let x = encode_features(&dataset, &schema.features, &args.features)?;
    let fit = reml_fit(&dataset, &x)?;
    let table = summary_table(&dataset, &null, Some(&fit), alpha)?;
    let forest = forest_plot(&fit, &dataset, &plot_spec(PlotKind::Forest, alpha))?;
    let regressions = args
        .features
        .iter()
        .filter(|f| schema.feature(f).is_some_and(|s| s.is_numeric()))
        .map(|f| {
            Ok((
                f,
                regression_plot(&fit, &dataset, f, &plot_spec(PlotKind::Regression, alpha))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Writer::new(&args.data.out.dir)?;
    write_summary(&mut out, &prov, &table)?;
    out.plot("forest", &prov, &forest)?;
    for (feature, plot) in &regressions {
        out.plot(&format!("regression-{}", file_stem(feature)), &prov, plot)?;
    }
    Ok(out.written)
}

/// Feature names made safe for file names.
fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn select(args: &SelectArgs) -> Result<Vec<PathBuf>> {
    let Loaded { schema, dataset } = load(&args.data)?;
    let candidates = if args.features.is_empty() {
        all_features(&schema)
    } else {
        args.features.clone()
    };
    check_declared(&schema, &candidates)?;
    let specs: Vec<_> = schema
        .features
        .iter()
        .filter(|f| candidates.contains(&f.name))
        .cloned()
        .collect();
    let options = SelectionOptions {
        criterion: args.criterion.into(),
        likelihood: args.likelihood.into(),
    };
    let mut cfg = config("select", &args.data, &schema);
    cfg.features = Some(&candidates);
    cfg.selection = Some(options);
    let prov = provenance(&cfg);

    let path = forward_select(&dataset, &specs, options)?;
    let plot = selection_plot(&path, &plot_spec(PlotKind::Selection, args.data.alpha))?;

    let mut out = Writer::new(&args.data.out.dir)?;
    out.text("selection.txt", &selection_text(&path))?;
    out.json("selection.json", &prov, &json!({ "path": path }))?;
    out.plot("selection-plot", &prov, &plot)?;
    Ok(out.written)
}

fn selection_text(path: &SelectionPath) -> String {
    let lik = path.options.likelihood;
    let mut s = String::new();
    let _ = writeln!(s, "criterion: {}", path.options.criterion);
    let _ = writeln!(
        s,
        "{:<6}  {:<40}  {:>12}  {:>12}  {:>10}  accepted",
        "step", "model", "AIC", "BIC", "RMSE"
    );
    model_line(
        &mut s,
        lik,
        "-",
        &path.null.features,
        &path.null.criteria,
        "yes",
    );
    for (i, step) in path.steps.iter().enumerate() {
        for cand in &step.candidates {
            match &cand.score {
                Some(score) => {
                    let accepted =
                        step.accepted && step.best.as_deref() == Some(cand.feature.as_str());
                    model_line(
                        &mut s,
                        lik,
                        &(i + 1).to_string(),
                        &score.features,
                        &score.criteria,
                        if accepted { "yes" } else { "" },
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "{:<6}  {:<40}  failed: {}",
                        i + 1,
                        cand.feature,
                        cand.failure.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
    }
    let selected = if path.selected.is_empty() {
        "none".to_string()
    } else {
        path.selected.join(", ")
    };
    let _ = writeln!(s, "selected: {selected}");
    s
}

fn model_line(
    s: &mut String,
    lik: Likelihood,
    step: &str,
    features: &[String],
    c: &InformationCriteria,
    mark: &str,
) {
    let model = if features.is_empty() {
        "null (intercept only)".to_string()
    } else {
        features.join(" + ")
    };
    let _ = writeln!(
        s,
        "{step:<6}  {model:<40}  {:>12.4}  {:>12.4}  {:>10.6}  {mark}",
        c.value(Criterion::Aic, lik),
        c.value(Criterion::Bic, lik),
        c.rmse
    );
}

fn importance(args: &ImportanceArgs) -> Result<Vec<PathBuf>> {
    let Loaded { schema, dataset } = load(&args.data)?;
    let features = if args.features.is_empty() {
        all_features(&schema)
    } else {
        args.features.clone()
    };
    check_declared(&schema, &features)?;
    let options = PfiOptions {
        folds: args.folds,
        permutations: args.permutations,
        seed: args.seed,
    };
    let mut cfg = config("importance", &args.data, &schema);
    cfg.features = Some(&features);
    cfg.importance = Some(options);
    let prov = provenance(&cfg);

    let report = permutation_importance(&dataset, &schema.features, &features, options)?;
    let plot = importance_plot(&report, &plot_spec(PlotKind::Importance, args.data.alpha))?;

    let mut out = Writer::new(&args.data.out.dir)?;
    out.text("importance.txt", &importance_text(&report))?;
    out.json("importance.json", &prov, &json!({ "report": report }))?;
    out.plot("importance-plot", &prov, &plot)?;
    Ok(out.written)
}

fn importance_text(report: &PfiReport) -> String {
    let mut s = String::new();
    let o = report.options;
    let _ = writeln!(
        s,
        "folds: {}, permutations: {}, seed: {}",
        o.folds, o.permutations, o.seed
    );
    let _ = writeln!(
        s,
        "{:<24}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "feature", "mean", "2.5%", "25%", "75%", "97.5%"
    );
    let mut rows: Vec<_> = report.features.iter().collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.feature.cmp(&b.feature)));
    for f in rows {
        let _ = writeln!(
            s,
            "{:<24}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
            f.feature, f.mean, f.p2_5, f.p25, f.p75, f.p97_5
        );
    }
    s
}

fn simulation_config(args: &SimulateArgs) -> Result<SimulationConfig> {
    let Some(path) = &args.config else {
        return Ok(SimulationConfig {
            studies: args.studies,
            trials_per_study: CountRange {
                min: args.min_trials,
                max: args.max_trials,
            },
            sample_size: CountRange {
                min: args.min_n,
                max: args.max_n,
            },
            mu: args.mu,
            sigma2_xi: args.sigma2_xi,
            sigma2_zeta: args.sigma2_zeta,
            features: Vec::new(),
            seed: args.seed,
        });
    };
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(Error::from)
    }
}

fn simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let cfg = simulation_config(args)?;
    let (dataset, truth) = simulate_dataset(&cfg)?;
    let schema = cfg.schema();
    let mut csv = Vec::new();
    write_dataset(&dataset, &schema, &mut csv)?;
    let prov = provenance(&json!({ "command": "simulate", "simulation": cfg }));

    let mut out = Writer::new(&args.out.dir)?;
    out.text(
        "data.csv",
        &String::from_utf8(csv).expect("csv output is UTF-8"),
    )?;
    out.text("schema.toml", &schema.to_toml())?;
    out.json("truth.json", &prov, &truth)?;
    Ok(out.written)
}
