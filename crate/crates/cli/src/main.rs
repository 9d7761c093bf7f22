mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use intercept_core::assignment::solve_bap;
use intercept_core::datagen::{build_dataset, DatagenConfig, Dataset, EngagementClass};
use intercept_core::dynamics::NOMINAL_PN_GAIN;
use intercept_core::harness::{
    build_cost_matrix_approx, build_cost_matrix_true, compare, emit_report, emit_trajectory_plot, engagement_paths,
    evaluate, generate_engagements, robustness_eval, TruthConfig,
};
use intercept_core::surrogate::ApproximatorSetup;
use intercept_core::{ApproximatorModel, Engagement, EvalReport};

use config::Config;

#[derive(Debug, Parser)]
#[command(name = "intercept", version, about = "Minimum-time intercept assignment experiments")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample, label, rebalance and split a training dataset.
    Datagen {
        #[arg(long)]
        class: Option<EngagementClass>,
    },
    /// Train the classifier/regressor approximator.
    Train {
        #[arg(long)]
        class: Option<EngagementClass>,
        /// Training CSV; defaults to `<out-dir>/<class>_train.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Held-out CSV; defaults to `<out-dir>/<class>_test.csv` when present.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Generate one engagement and assign it end to end.
    Solve(EngagementArgs),
    /// Compare surrogate and truth assignments over random engagements.
    Eval {
        #[arg(long)]
        class: Option<EngagementClass>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Engagement sizes; overrides the config.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Re-evaluate maneuvering engagements against truths at other PN gains.
    Robust {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        gains: Vec<f64>,
    },
    /// Draw the truth-optimal assignment of an engagement as SVG.
    Plot {
        #[command(flatten)]
        engagement: EngagementArgs,
        /// Engagement JSON written by `solve`; otherwise one is generated.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = NOMINAL_PN_GAIN)]
        gain: f64,
    },
}

#[derive(Debug, Args)]
struct EngagementArgs {
    #[arg(long)]
    class: Option<EngagementClass>,
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Surrogate model to compare against; optional.
    #[arg(long)]
    model: Option<PathBuf>,
}

struct Ctx {
    config: Config,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn class(&self, flag: Option<EngagementClass>) -> EngagementClass {
        flag.unwrap_or(self.config.class)
    }

    fn file(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }

    fn model_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.config.model.clone())
            .unwrap_or_else(|| self.file("model.json"))
    }

    fn load_model(&self, flag: Option<PathBuf>, class: EngagementClass) -> anyhow::Result<ApproximatorModel> {
        let path = self.model_path(flag);
        let model = ApproximatorModel::load(&path)?;
        if model.class != class {
            bail!("{} holds a {} model, expected {class}", path.display(), model.class);
        }
        Ok(model)
    }

    fn truth(&self, pn_gain: f64) -> TruthConfig {
        TruthConfig {
            pn_gain,
            workers: self.config.workers,
        }
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> anyhow::Result<PathBuf> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn engagements(&self, class: EngagementClass, n: usize, count: usize) -> anyhow::Result<Vec<Engagement>> {
        Ok(generate_engagements(
            n,
            count,
            class,
            self.seed,
            &self.config.ranges,
            &self.config.params,
        )?)
    }
}

fn datagen(ctx: &Ctx, class: EngagementClass) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let config = DatagenConfig {
        class,
        ranges: cfg.ranges,
        target_fraction: cfg.target_fraction,
        test_fraction: cfg.test_fraction,
        seed: ctx.seed,
    };
    let built = build_dataset(&config, &cfg.params, &cfg.scp, cfg.workers)?;
    built.full.save_csv(&ctx.file(format!("{class}_full.csv")))?;
    built.train.save_csv(&ctx.file(format!("{class}_train.csv")))?;
    built.test.save_csv(&ctx.file(format!("{class}_test.csv")))?;
    built.manifest.save(&ctx.file(format!("{class}_manifest.json")))?;
    println!(
        "{class}: {} labelled, feasible fraction {:.4} -> {:.4}, {} train / {} test",
        built.full.len(),
        built.manifest.feasible_fraction_before,
        built.manifest.feasible_fraction_after,
        built.train.len(),
        built.test.len()
    );
    if let Some(notice) = &built.manifest.rebalance_notice {
        println!("rebalance: {notice}");
    }
    Ok(())
}

fn train(ctx: &Ctx, class: EngagementClass, data: Option<PathBuf>, test: Option<PathBuf>) -> anyhow::Result<()> {
    let data = data.unwrap_or_else(|| ctx.file(format!("{class}_train.csv")));
    let train_set = Dataset::load_csv(&data, class)?;
    let mut setup = ApproximatorSetup::for_class(class, ctx.seed);
    if let Some(e) = ctx.config.train.classifier_epochs {
        setup.classifier_train.epochs = e;
    }
    if let Some(e) = ctx.config.train.regressor_epochs {
        setup.regressor_train.epochs = e;
    }
    let (model, log) = ApproximatorModel::train(&train_set, &setup)?;
    let model_path = ctx.file("model.json");
    model.save(&model_path)?;
    ctx.write_json("training_log.json", &log)?;
    println!("trained on {} samples -> {}", train_set.len(), model_path.display());
    let test = test.or_else(|| Some(ctx.file(format!("{class}_test.csv"))).filter(|p| p.exists()));
    if let Some(test) = test {
        let metrics = model.evaluate(&Dataset::load_csv(&test, class)?)?;
        ctx.write_json("metrics.json", &metrics)?;
        println!(
            "test accuracy {:.4}, regression MAE {:.2} ms over {} feasible samples",
            metrics.accuracy,
            metrics.mae * 1e3,
            metrics.feasible_samples
        );
    }
    Ok(())
}

fn solve(ctx: &Ctx, args: EngagementArgs) -> anyhow::Result<()> {
    let class = ctx.class(args.class);
    let e = ctx.engagements(class, args.n, 1)?.remove(0);
    let cfg = &ctx.config;
    let truth = ctx.truth(NOMINAL_PN_GAIN);
    let start = std::time::Instant::now();
    let c_true = build_cost_matrix_true(&e, &cfg.params, &cfg.scp, &truth)?;
    let true_ms = start.elapsed().as_secs_f64() * 1e3;
    let best = solve_bap(&c_true);
    ctx.write_json("engagement.json", &e)?;
    c_true.save_csv(&ctx.file("cost_true.csv"))?;
    let mut summary = serde_json::json!({ "truth": best.to_json(), "true_build_ms": true_ms });
    let model_path = ctx.model_path(args.model);
    if model_path.exists() {
        let model = ctx.load_model(Some(model_path), class)?;
        let start = std::time::Instant::now();
        let c_approx = build_cost_matrix_approx(&e, &model)?;
        let approx_ms = start.elapsed().as_secs_f64() * 1e3;
        c_approx.save_csv(&ctx.file("cost_approx.csv"))?;
        let outcome = compare(&c_true, &c_approx, true_ms, approx_ms)?;
        summary["approx"] = serde_json::to_value(&outcome)?;
        println!(
            "bottleneck: truth {:.4} s, surrogate assignment {:.4} s",
            outcome.b_true, outcome.b_approx
        );
    } else {
        println!("bottleneck: truth {:.4} s (no model at {})", best.value, model_path.display());
    }
    ctx.write_json("solve.json", &summary)?;
    let paths = engagement_paths(&e, &best.assignment, &cfg.params, &cfg.scp, &truth)?;
    emit_trajectory_plot(&paths, &ctx.file("solve.svg"))?;
    Ok(())
}

fn print_report(r: &EvalReport) {
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} {}x{} gain {}: feasible {}/{}, match {}, all intercepted {}, ratio {}, build speedup {:.0}x",
        r.class,
        r.n,
        r.n,
        r.pn_gain,
        r.feasible_count,
        r.engagements,
        show(r.bottleneck_match_fraction),
        show(r.all_intercepted_fraction()),
        show(r.mean_bottleneck_ratio),
        r.timing.build_speedup()
    );
}

fn eval(
    ctx: &Ctx,
    class: EngagementClass,
    model: Option<PathBuf>,
    sizes: Vec<usize>,
    count: Option<usize>,
) -> anyhow::Result<()> {
    let model = ctx.load_model(model, class)?;
    let sizes = if sizes.is_empty() { ctx.config.eval.sizes.clone() } else { sizes };
    let count = count.unwrap_or(ctx.config.eval.count);
    let mut reports = Vec::new();
    for n in sizes {
        let es = ctx.engagements(class, n, count)?;
        let r = evaluate(&es, &model, &ctx.config.params, &ctx.config.scp, &ctx.truth(NOMINAL_PN_GAIN))?;
        print_report(&r);
        reports.push(r);
    }
    emit_report(&reports, &ctx.file("eval"))?;
    Ok(())
}

fn robust(ctx: &Ctx, model: Option<PathBuf>, n: usize, count: Option<usize>, gains: Vec<f64>) -> anyhow::Result<()> {
    let class = EngagementClass::Maneuvering;
    let model = ctx.load_model(model, class)?;
    let mut gains = if gains.is_empty() { ctx.config.eval.gains.clone() } else { gains };
    if !gains.contains(&NOMINAL_PN_GAIN) {
        gains.insert(0, NOMINAL_PN_GAIN);
    }
    let es = ctx.engagements(class, n, count.unwrap_or(ctx.config.eval.count))?;
    let reports = robustness_eval(&es, &model, &ctx.config.params, &ctx.config.scp, &gains, ctx.config.workers)?;
    reports.iter().for_each(print_report);
    emit_report(&reports, &ctx.file("robust"))?;
    Ok(())
}

fn plot(ctx: &Ctx, args: EngagementArgs, input: Option<PathBuf>, gain: f64) -> anyhow::Result<()> {
    let e: Engagement = match input {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ctx.engagements(ctx.class(args.class), args.n, 1)?.remove(0),
    };
    let cfg = &ctx.config;
    let truth = ctx.truth(gain);
    let c = build_cost_matrix_true(&e, &cfg.params, &cfg.scp, &truth)?;
    let best = solve_bap(&c);
    let paths = engagement_paths(&e, &best.assignment, &cfg.params, &cfg.scp, &truth)?;
    let out = ctx.file("plot.svg");
    emit_trajectory_plot(&paths, &out)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        config: Config::load(cli.config.as_deref())?,
        seed: cli.seed,
        out: cli.out_dir,
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    match cli.command {
        Command::Datagen { class } => datagen(&ctx, ctx.class(class)),
        Command::Train { class, data, test } => train(&ctx, ctx.class(class), data, test),
        Command::Solve(args) => solve(&ctx, args),
        Command::Eval {
            class,
            model,
            sizes,
            count,
        } => eval(&ctx, ctx.class(class), model, sizes, count),
        Command::Robust { model, n, count, gains } => robust(&ctx, model, n, count, gains),
        Command::Plot { engagement, input, gain } => plot(&ctx, engagement, input, gain),
    }
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
