//! Batch command-line driver: one subcommand per analysis, reproducible
//! outputs, seeds mandatory wherever randomness is involved.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use spendlens_core::cohort::{
    distinctive_categories, distribution, group_stats, price_popularity, DistributionMetric,
    Grouping,
};
use spendlens_core::datastore::{
    load_dataset_dir, load_graph_dir, read_zip_timezone_csv, Dataset, EventRecord, Gender,
    IngestOutcome, DEFAULT_MAX_PURCHASES, DEFAULT_MIN_MESSAGES,
};
use spendlens_core::predictor::{
    add_months_ts, build_instances, chi2_rank, evaluate, train, Instance, NbClassifier,
    TargetKind, DEFAULT_ALPHA,
};
use spendlens_core::receipt::{explode_order, load_templates, parse_email, ReceiptError};
use spendlens_core::social::cohort_similarity;
use spendlens_core::synthgen::{generate, render_receipts, write_templates, SynthConfig};
use spendlens_core::temporal::{
    activity_profile, budget_curve, delay_distribution, month_boundary_test, recurring_items,
    Granularity, TimezoneTable,
};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "spendlens", version, about = "Purchase-event analytics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse receipt emails into a purchase-event file
    Parse(ParseArgs),
    /// Generate a seeded synthetic population
    Synth(SynthArgs),
    /// Ingest and filter a dataset directory, reporting provenance
    Ingest(IngestArgs),
    /// Demographic group statistics and dataset distributions
    Stats(StatsArgs),
    /// Categories most distinctive of one group versus another
    Distinctive(DistinctiveArgs),
    /// Purchase statistics across income buckets
    Income(IncomeArgs),
    /// Weekly/diurnal profiles, month-boundary test, delay PDF
    Temporal(TemporalArgs),
    /// Repeatedly purchased items and their cycles
    Recurring(RecurringArgs),
    /// Normalized price versus days since previous purchase
    BudgetCurve(BudgetCurveArgs),
    /// Similarity of connected versus random user pairs
    SocialSim(SocialSimArgs),
    /// Train the next-purchase classifier and save the model
    Train(TrainArgs),
    /// Predict one user's next purchase class at an instant
    Predict(PredictArgs),
    /// Evaluate the classifier against the baselines
    Evaluate(EvaluateArgs),
    /// Rank features by chi-squared dependence on the label
    Chi2(Chi2Args),
}

#[derive(Args)]
struct ParseArgs {
    /// Directory of merchant template files
    #[arg(long)]
    templates: PathBuf,
    /// Directory of email files named <user_id>__<order>.txt
    #[arg(long)]
    emails: PathBuf,
    /// Output events.jsonl (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Null,
    Weekly,
    Budget,
    MixedNull,
    Recurring,
    DelayCycle,
    Homophily,
    Gender,
    Predictor,
    Income,
    Popularity,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, default_value_t = 1000)]
    users: usize,
    /// Seed for the generator (mandatory: runs must be reproducible)
    #[arg(long)]
    seed: u64,
    /// Output directory for the dataset files
    #[arg(long)]
    out: PathBuf,
    /// Also render receipt emails and template files
    #[arg(long)]
    emails: bool,
    /// Monday boost for the weekly scenario
    #[arg(long, default_value_t = 1.326)]
    monday_multiplier: f64,
    /// Class-repeat probability for the predictor scenario
    #[arg(long, default_value_t = 0.7)]
    repeat_prob: f64,
    /// Community preference strength for the homophily scenario
    #[arg(long, default_value_t = 8.0)]
    strength: f64,
    /// Consumable cycle length for the recurring scenario
    #[arg(long, default_value_t = 30.0)]
    cycle_days: f64,
    #[arg(long, default_value_t = 3.0)]
    jitter_days: f64,
    /// Income-spend elasticity for the income scenario
    #[arg(long, default_value_t = 1.0)]
    elasticity: f64,
    /// Purchases per user for the budget scenario
    #[arg(long, default_value_t = 5)]
    count: usize,
    #[arg(long, default_value_t = 30)]
    max_delay: u32,
    /// Disable the planted price-delay coupling in the budget scenario
    #[arg(long)]
    no_depletion: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_PURCHASES)]
    max_purchases: usize,
    /// Write the filtered events to this path
    #[arg(long)]
    out_events: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StatsView {
    Groups,
    Distribution,
    PricePopularity,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    PurchasesPerUser,
    SpendPerUser,
    PurchasesPerItem,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = StatsView::Groups)]
    view: StatsView,
    /// Age bucket edges for the groups view, e.g. 18,25,35,50,81
    #[arg(long, value_delimiter = ',')]
    age_edges: Option<Vec<u32>>,
    /// Histogram metric for the distribution view
    #[arg(long, value_enum, default_value_t = MetricArg::PurchasesPerUser)]
    metric: MetricArg,
    /// Price bins for the price-popularity view
    #[arg(long, default_value_t = 10)]
    price_bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistinctiveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Group selector: gender=female, gender=male, or age=LO-HI
    #[arg(long)]
    group_a: String,
    #[arg(long)]
    group_b: String,
    #[arg(long, default_value_t = 1)]
    level: u8,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IncomeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TemporalAnalysis {
    Dow,
    Hour,
    MonthBoundary,
    DelayPdf,
}

#[derive(Args)]
struct TemporalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    analysis: TemporalAnalysis,
    /// zip,utc_offset_minutes table; defaults to zip_timezone.csv in the
    /// data directory when present
    #[arg(long)]
    tz: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecurringArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetCurveArgs {
    #[arg(long)]
    data: PathBuf,
    /// Purchase-count cohort: a count ("5"), a range ("9-11"), or "all"
    #[arg(long)]
    cohort: String,
    /// Shuffle each user's prices before computing the curve
    #[arg(long)]
    shuffle: bool,
    /// Seed for the shuffle (required with --shuffle)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SocialSimArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    by_gender: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_MESSAGES)]
    min_messages: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TargetArg {
    Price,
    Time,
}

impl From<TargetArg> for TargetKind {
    fn from(value: TargetArg) -> TargetKind {
        match value {
            TargetArg::Price => TargetKind::Price,
            TargetArg::Time => TargetKind::Time,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, default_value_t = 6)]
    train_months: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    /// Drop the next-purchase cross-target feature (leakage-free mode)
    #[arg(long)]
    no_cross_target: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    user: String,
    /// Prediction instant: epoch seconds or a receipt-style date
    #[arg(long)]
    at: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, default_value_t = 6)]
    train_months: u32,
    #[arg(long, default_value_t = 2)]
    test_months: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long)]
    no_cross_target: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Chi2Args {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, default_value_t = 6)]
    train_months: u32,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long)]
    no_cross_target: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Parse(args) => cmd_parse(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Distinctive(args) => cmd_distinctive(args),
        Command::Income(args) => cmd_income(args),
        Command::Temporal(args) => cmd_temporal(args),
        Command::Recurring(args) => cmd_recurring(args),
        Command::BudgetCurve(args) => cmd_budget_curve(args),
        Command::SocialSim(args) => cmd_social_sim(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Chi2(args) => cmd_chi2(args),
    }
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_data(dir: &Path, max_purchases: usize) -> Result<IngestOutcome> {
    load_dataset_dir(dir, max_purchases)
        .with_context(|| format!("loading dataset directory {}", dir.display()))
}

fn timezone_table(data: &Path, tz: &Option<PathBuf>) -> Result<Option<TimezoneTable>> {
    let path = match tz {
        Some(path) => path.clone(),
        None => {
            let default = data.join("zip_timezone.csv");
            if !default.exists() {
                return Ok(None);
            }
            default
        }
    };
    Ok(Some(TimezoneTable::new(read_zip_timezone_csv(&path)?)))
}

fn cmd_parse(args: ParseArgs) -> Result<()> {
    let templates = load_templates(&args.templates)
        .with_context(|| format!("loading templates from {}", args.templates.display()))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.emails)
        .with_context(|| format!("reading {}", args.emails.display()))?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();

    let mut records: Vec<EventRecord> = Vec::new();
    let mut parsed = 0usize;
    let mut no_template_match = 0usize;
    let mut failed = 0usize;
    for path in &entries {
        let file_name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("bad email file name {}", path.display()))?;
        let user_id = file_name.split("__").next().unwrap_or(file_name).to_string();
        let raw = std::fs::read_to_string(path)?;
        match parse_email(&raw, &templates) {
            Ok(order) => {
                parsed += 1;
                for event in explode_order(&order, &user_id) {
                    records.push(EventRecord::from_event(&event));
                }
            }
            Err(ReceiptError::NoTemplateMatch(_)) => no_template_match += 1,
            Err(err) => {
                failed += 1;
                eprintln!("{}: {err}", path.display());
            }
        }
    }

    let mut out = open_out(&args.out)?;
    for record in &records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!(
        "parsed {parsed} receipts into {} events; {no_template_match} emails matched no template; {failed} failed",
        records.len()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = match args.scenario {
        Scenario::Null => SynthConfig::null_model(args.users, args.seed),
        Scenario::Weekly => SynthConfig::weekly(args.users, args.monday_multiplier, args.seed),
        Scenario::Budget => SynthConfig::budget(
            args.users,
            args.count,
            args.max_delay,
            !args.no_depletion,
            args.seed,
        ),
        Scenario::MixedNull => SynthConfig::mixed_counts_null(args.users, args.seed),
        Scenario::Recurring => {
            SynthConfig::recurring(args.users, args.cycle_days, args.jitter_days, args.seed)
        }
        Scenario::DelayCycle => SynthConfig::delay_weekly(args.users, args.seed),
        Scenario::Homophily => SynthConfig::homophily(args.users, args.strength, args.seed),
        Scenario::Gender => SynthConfig::gender_assortative(args.users, args.seed),
        Scenario::Predictor => {
            SynthConfig::predictor_signal(args.users, args.repeat_prob, args.seed)
        }
        Scenario::Income => SynthConfig::income_gradient(args.users, args.elasticity, args.seed),
        Scenario::Popularity => SynthConfig::inverse_popularity(args.users, 1.0, args.seed),
    };
    let output = generate(&config)?;
    output.write_dir(&args.out)?;
    let mut summary = format!(
        "wrote {} events for {} users to {}",
        output.events.len(),
        output.profiles.len(),
        args.out.display()
    );
    if args.emails {
        let template_dir = args.out.join("templates");
        write_templates(&config, &template_dir)?;
        let templates = load_templates(&template_dir)?;
        let dataset = output.dataset().dataset;
        let emails = render_receipts(&dataset, &templates)?;
        let email_dir = args.out.join("emails");
        std::fs::create_dir_all(&email_dir)?;
        for email in &emails {
            std::fs::write(email_dir.join(&email.file_name), &email.text)?;
        }
        summary.push_str(&format!("; rendered {} emails", emails.len()));
    }
    eprintln!("{summary}");
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let outcome = load_data(&args.data, args.max_purchases)?;
    if let Some(path) = &args.out_events {
        let records = spendlens_core::datastore::dataset_to_records(&outcome.dataset);
        spendlens_core::datastore::write_events_jsonl(path, &records)?;
    }
    let dataset = &outcome.dataset;
    let provenance = dataset.provenance();
    let summary = serde_json::json!({
        "shoppers": dataset.shopper_count(),
        "events": dataset.event_count(),
        "window": { "start": dataset.window().0, "end": dataset.window().1 },
        "max_purchases": provenance.max_purchases,
        "removed_bulk_users": provenance.removed_users,
        "removed_bulk_events": provenance.removed_events,
        "rejected_records": outcome.rejected.len(),
        "rejected_reasons": outcome.rejected.iter().take(10).map(|r| r.reason.clone()).collect::<Vec<_>>(),
    });
    let mut out = open_out(&args.out)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let dataset = &outcome.dataset;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    match args.view {
        StatsView::Groups => {
            let population: Vec<_> = dataset.profiles().cloned().collect();
            let grouping = Grouping::GenderAge {
                age_edges: args
                    .age_edges
                    .clone()
                    .unwrap_or_else(spendlens_core::cohort::default_age_edges),
            };
            let stats = group_stats(dataset, &population, &grouping)?;
            out.write_record([
                "group",
                "population",
                "shoppers",
                "shopper_fraction",
                "purchases_per_shopper",
                "mean_price_cents",
                "total_spend_cents",
            ])?;
            for s in stats {
                out.write_record([
                    s.key.as_str(),
                    &s.population.to_string(),
                    &s.shoppers.to_string(),
                    &format!("{:.6}", s.shopper_fraction),
                    &format!("{:.6}", s.purchases_per_shopper),
                    &format!("{:.6}", s.mean_price_cents),
                    &s.total_spend_cents.to_string(),
                ])?;
            }
        }
        StatsView::Distribution => {
            let metric = match args.metric {
                MetricArg::PurchasesPerUser => DistributionMetric::PurchasesPerUser,
                MetricArg::SpendPerUser => DistributionMetric::SpendPerUser,
                MetricArg::PurchasesPerItem => DistributionMetric::PurchasesPerItem,
            };
            let hist = distribution(dataset, metric)?;
            out.write_record(["bin_lower", "bin_upper", "count", "pdf", "cdf"])?;
            for bin in hist.bins {
                out.write_record([
                    &format!("{}", bin.lower),
                    &format!("{}", bin.upper),
                    &bin.count.to_string(),
                    &format!("{:.9}", bin.pdf),
                    &format!("{:.9}", bin.cdf),
                ])?;
            }
        }
        StatsView::PricePopularity => {
            let report = price_popularity(dataset, args.price_bins)?;
            out.write_record(["bin_lower_cents", "bin_upper_cents", "n_items", "mean_purchase_count"])?;
            for bin in report.bins {
                out.write_record([
                    &format!("{:.2}", bin.lower),
                    &format!("{:.2}", bin.upper),
                    &bin.n_items.to_string(),
                    &format!("{:.6}", bin.mean_purchase_count),
                ])?;
            }
            out.write_record(["spearman", &format!("{:.6}", report.spearman), "", ""])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_group_selector(dataset: &Dataset, selector: &str) -> Result<BTreeSet<String>> {
    let (key, value) = selector
        .split_once('=')
        .ok_or_else(|| anyhow!("group selector must look like gender=female or age=18-25"))?;
    let mut users = BTreeSet::new();
    match key {
        "gender" => {
            let gender = match value {
                "female" => Gender::Female,
                "male" => Gender::Male,
                other => bail!("unknown gender {other:?}"),
            };
            for profile in dataset.profiles() {
                if profile.gender == gender {
                    users.insert(profile.user_id.clone());
                }
            }
        }
        "age" => {
            let (lo, hi) = value
                .split_once('-')
                .ok_or_else(|| anyhow!("age selector must look like age=18-25"))?;
            let lo: u32 = lo.parse()?;
            let hi: u32 = hi.parse()?;
            for profile in dataset.profiles() {
                if let Some(age) = profile.age {
                    if age >= lo && age <= hi {
                        users.insert(profile.user_id.clone());
                    }
                }
            }
        }
        other => bail!("unknown group selector key {other:?}"),
    }
    Ok(users)
}

fn cmd_distinctive(args: DistinctiveArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let dataset = &outcome.dataset;
    let group_a = parse_group_selector(dataset, &args.group_a)?;
    let group_b = parse_group_selector(dataset, &args.group_b)?;
    let report = distinctive_categories(dataset, &group_a, &group_b, args.level, args.top_k)?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record(["side", "category", "share_a", "share_b", "diff", "z", "p_value"])?;
    for (side, rows) in [("a", &report.top_a), ("b", &report.top_b)] {
        for d in rows {
            out.write_record([
                side,
                d.category.as_str(),
                &format!("{:.6}", d.share_a),
                &format!("{:.6}", d.share_b),
                &format!("{:.6}", d.diff),
                &format!("{:.4}", d.z),
                &format!("{:.6}", d.p_value),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_income(args: IncomeArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let dataset = &outcome.dataset;
    let population: Vec<_> = dataset.profiles().cloned().collect();
    let stats = group_stats(dataset, &population, &Grouping::IncomeBuckets(args.buckets))?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record([
        "bucket",
        "population",
        "shoppers",
        "shopper_fraction",
        "purchases_per_shopper",
        "mean_price_cents",
        "total_spend_cents",
    ])?;
    for s in stats {
        out.write_record([
            s.key.as_str(),
            &s.population.to_string(),
            &s.shoppers.to_string(),
            &format!("{:.6}", s.shopper_fraction),
            &format!("{:.6}", s.purchases_per_shopper),
            &format!("{:.6}", s.mean_price_cents),
            &s.total_spend_cents.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_temporal(args: TemporalArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let dataset = &outcome.dataset;
    let tz = timezone_table(&args.data, &args.tz)?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    match args.analysis {
        TemporalAnalysis::Dow => {
            let profile = activity_profile(dataset, Granularity::DayOfWeek, tz.as_ref());
            out.write_record(["slot", "count"])?;
            let days = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
            for (day, &count) in days.iter().zip(&profile.slot_counts) {
                out.write_record([*day, &count.to_string()])?;
            }
            let ratio = profile
                .monday_sunday_ratio
                .map(|r| format!("{r:.6}"))
                .unwrap_or_else(|| "undefined".to_string());
            out.write_record(["monday_sunday_ratio", &ratio])?;
        }
        TemporalAnalysis::Hour => {
            let profile = activity_profile(dataset, Granularity::HourOfDay, tz.as_ref());
            out.write_record(["slot", "count"])?;
            for (hour, &count) in profile.slot_counts.iter().enumerate() {
                out.write_record([&format!("{hour:02}"), &count.to_string()])?;
            }
        }
        TemporalAnalysis::MonthBoundary => {
            let rows = month_boundary_test(dataset, tz.as_ref());
            out.write_record([
                "month",
                "first_monday_count",
                "last_monday_count",
                "count_ratio",
                "first_monday_spend_cents",
                "last_monday_spend_cents",
                "spend_ratio",
            ])?;
            let fmt = |r: Option<f64>| r.map(|v| format!("{v:.6}")).unwrap_or_default();
            for row in rows {
                out.write_record([
                    row.month.as_str(),
                    &row.first_monday_count.to_string(),
                    &row.last_monday_count.to_string(),
                    &fmt(row.count_ratio),
                    &row.first_monday_spend_cents.to_string(),
                    &row.last_monday_spend_cents.to_string(),
                    &fmt(row.spend_ratio),
                ])?;
            }
        }
        TemporalAnalysis::DelayPdf => {
            let dist = delay_distribution(dataset);
            out.write_record(["delay_days", "count", "pdf"])?;
            for bin in dist.bins {
                out.write_record([
                    &bin.day.to_string(),
                    &bin.count.to_string(),
                    &format!("{:.9}", bin.pdf),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_recurring(args: RecurringArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let items = recurring_items(&outcome.dataset, args.top_k);
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record(["item_id", "item_name", "repurchase_count", "median_delay_days"])?;
    for item in items {
        out.write_record([
            item.item_id.as_str(),
            item.item_name.as_str(),
            &item.repurchase_count.to_string(),
            &format!("{:.4}", item.median_delay_days),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cohort(text: &str) -> Result<(usize, usize)> {
    if text == "all" {
        return Ok((1, usize::MAX));
    }
    if let Some((lo, hi)) = text.split_once('-') {
        return Ok((lo.parse()?, hi.parse()?));
    }
    let exact: usize = text.parse()?;
    Ok((exact, exact))
}

fn cmd_budget_curve(args: BudgetCurveArgs) -> Result<()> {
    if args.shuffle && args.seed.is_none() {
        bail!("--shuffle requires --seed");
    }
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let cohort = parse_cohort(&args.cohort)?;
    let shuffle = if args.shuffle { args.seed } else { None };
    let curve = budget_curve(&outcome.dataset, cohort, shuffle)?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record(["delay_days", "mean_normalized_price", "ci95", "n"])?;
    for point in &curve.points {
        out.write_record([
            &point.delay_days.to_string(),
            &format!("{:.9}", point.mean_normalized_price),
            &format!("{:.9}", point.ci95),
            &point.n.to_string(),
        ])?;
    }
    out.write_record([
        "event_spearman",
        &format!("{:.6}", curve.event_spearman),
        &curve.n_users.to_string(),
        "",
    ])?;
    out.flush()?;
    Ok(())
}

fn cmd_social_sim(args: SocialSimArgs) -> Result<()> {
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let graph = load_graph_dir(&args.data, args.min_messages)?
        .ok_or_else(|| anyhow!("no edges.csv in {}", args.data.display()))?;
    let report = cohort_similarity(&outcome.dataset, &graph, args.pairs, args.seed, args.by_gender)?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record(["level", "cohort", "mean", "se", "n", "lift"])?;
    for level in &report.levels {
        let lvl = level.level.to_string();
        out.write_record([
            lvl.as_str(),
            "connected",
            &format!("{:.6}", level.connected.mean),
            &format!("{:.6}", level.connected.se),
            &level.connected.n.to_string(),
            &format!("{:.6}", level.lift),
        ])?;
        out.write_record([
            lvl.as_str(),
            "random",
            &format!("{:.6}", level.random.mean),
            &format!("{:.6}", level.random.se),
            &level.random.n.to_string(),
            "",
        ])?;
        if let Some(by_gender) = &level.by_gender {
            for (pair, stats) in by_gender {
                out.write_record([
                    lvl.as_str(),
                    pair.as_str(),
                    &format!("{:.6}", stats.mean),
                    &format!("{:.6}", stats.se),
                    &stats.n.to_string(),
                    "",
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn prepared_instances(
    data: &Path,
    target: TargetKind,
    include_cross_target: bool,
) -> Result<(IngestOutcome, Vec<Instance>)> {
    let outcome = load_data(data, DEFAULT_MAX_PURCHASES)?;
    let graph = load_graph_dir(data, DEFAULT_MIN_MESSAGES)?;
    let instances = build_instances(&outcome.dataset, graph.as_ref(), target, include_cross_target)?;
    Ok((outcome, instances))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let target: TargetKind = args.target.into();
    let (outcome, instances) = prepared_instances(&args.data, target, !args.no_cross_target)?;
    let split_ts = add_months_ts(outcome.dataset.window().0, args.train_months);
    let train_set: Vec<Instance> = instances.into_iter().filter(|i| i.instant < split_ts).collect();
    if train_set.is_empty() {
        bail!("no training instances inside the first {} months", args.train_months);
    }
    let n_train = train_set.len();
    let model = train(&train_set, target, !args.no_cross_target, args.alpha, args.bins)?;
    model.save(&args.out)?;
    eprintln!(
        "trained {} model on {} instances; saved to {}",
        target.as_str(),
        n_train,
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = NbClassifier::load(&args.model)?;
    let outcome = load_data(&args.data, DEFAULT_MAX_PURCHASES)?;
    let graph = load_graph_dir(&args.data, DEFAULT_MIN_MESSAGES)?;
    let at: i64 = match args.at.parse() {
        Ok(ts) => ts,
        Err(_) => spendlens_core::receipt::parse_date(&args.at)
            .map_err(|_| anyhow!("--at must be epoch seconds or a date like 2014-06-01"))?,
    };
    let features = spendlens_core::predictor::extract_features(
        &outcome.dataset,
        graph.as_ref(),
        &args.user,
        at,
        model.target,
        model.include_cross_target,
    )?;
    let (class, posterior) = model.predict(&features);
    let labels: Vec<String> = (0..posterior.len()).map(|c| model.target.class_label(c)).collect();
    let result = serde_json::json!({
        "user": args.user,
        "at": at,
        "target": model.target.as_str(),
        "predicted_class": model.target.class_label(class),
        "posterior": labels.iter().zip(&posterior).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let mut out = open_out(&args.out)?;
    writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
    Ok(())
}

fn split_for_eval(
    instances: Vec<Instance>,
    window_start: i64,
    train_months: u32,
    test_months: u32,
) -> (Vec<Instance>, Vec<Instance>) {
    let split_ts = add_months_ts(window_start, train_months);
    let end_ts = add_months_ts(split_ts, test_months);
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    for instance in instances {
        if instance.instant < split_ts {
            train_set.push(instance);
        } else if instance.instant < end_ts {
            test_set.push(instance);
        }
    }
    (train_set, test_set)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let target: TargetKind = args.target.into();
    let (outcome, instances) = prepared_instances(&args.data, target, !args.no_cross_target)?;
    let (train_set, test_set) = split_for_eval(
        instances,
        outcome.dataset.window().0,
        args.train_months,
        args.test_months,
    );
    if train_set.is_empty() || test_set.is_empty() {
        bail!(
            "temporal split produced {} training and {} test instances",
            train_set.len(),
            test_set.len()
        );
    }
    let model = train(&train_set, target, !args.no_cross_target, args.alpha, args.bins)?;
    let report = evaluate(&model, &test_set)?;
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record([
        "target",
        "majority",
        "last_used",
        "most_used",
        "classifier",
        "absolute_improvement",
        "relative_improvement",
        "auc",
        "rmse",
    ])?;
    out.write_record([
        target.as_str(),
        &format!("{:.4}", report.majority_accuracy),
        &format!("{:.4}", report.last_class_accuracy),
        &format!("{:.4}", report.most_used_accuracy),
        &format!("{:.4}", report.classifier_accuracy),
        &format!("{:.4}", report.absolute_improvement),
        &format!("{:.4}", report.relative_improvement),
        &format!("{:.4}", report.weighted_auc),
        &format!("{:.4}", report.rmse),
    ])?;
    out.flush()?;
    Ok(())
}

fn cmd_chi2(args: Chi2Args) -> Result<()> {
    let target: TargetKind = args.target.into();
    let (outcome, instances) = prepared_instances(&args.data, target, !args.no_cross_target)?;
    let split_ts = add_months_ts(outcome.dataset.window().0, args.train_months);
    let train_set: Vec<Instance> = instances.into_iter().filter(|i| i.instant < split_ts).collect();
    if train_set.is_empty() {
        bail!("no training instances inside the first {} months", args.train_months);
    }
    let model = train(&train_set, target, !args.no_cross_target, args.alpha, args.bins)?;
    let ranked = chi2_rank(&model, &train_set);
    let mut out = csv::Writer::from_writer(open_out(&args.out)?);
    out.write_record(["rank", "feature", "chi2"])?;
    for (i, (feature, chi2)) in ranked.iter().enumerate() {
        out.write_record([&(i + 1).to_string(), feature.as_str(), &format!("{chi2:.4}")])?;
    }
    out.flush()?;
    Ok(())
}
