use std::path::{Path, PathBuf};

use trix_core::experiments::{
    run_experiment, run_metadata, write_outputs, ExperimentConfig, ExperimentReport, Scenario, Target,
};
use trix_core::io::{self, grid_csv, load_histogram_csv, wires_csv, LoadedHistogram, Metadata};
use trix_core::rng::parse_seed;
use trix_core::stats::{
    bootstrap_stddev_interval, confidence_band, dkw_epsilon, dkw_sample_size, ecdf_and_qq, fit_exponential_tail,
    stddev_interval, BucketPolicy, TailSide,
};
use trix_core::{
    exact_delay_pmf, exact_mean, exact_skew_pmf, simulate_sample, ConeSpec, DelayModel, EnumerationGuard, Error,
    Result, RngStream,
};

use crate::args::{AnalyzeArgs, EnumerateArgs, QqArgs, RunArgs, SimulateArgs};

const OUT_ENV: &str = "TRIX_OUT_DIR";
const DEFAULT_OUT: &str = "trix-out";

fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Config file (if any) overlaid with the flags, normalized.
fn build_config(a: RunArgs, default: Scenario, allowed: &[Scenario]) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(default),
    };
    if let Some(s) = a.scenario {
        c.scenario = s.parse()?;
    }
    if !allowed.contains(&c.scenario) {
        let names: Vec<_> = allowed.iter().map(|s| s.name()).collect();
        return Err(Error::Config(format!(
            "scenario {} is not available here (expected one of: {})",
            c.scenario,
            names.join(", ")
        )));
    }
    if a.height.is_some() || a.heights.is_some() {
        c.height = a.height;
        c.heights = a.heights.unwrap_or_default();
    }
    if a.delta.is_some() || a.deltas.is_some() {
        c.delta = a.delta;
        c.deltas = a.deltas.unwrap_or_default();
    }
    if let Some(n) = a.samples {
        c.samples = n;
    }
    if let Some(s) = a.seed {
        c.seed = Some(parse_seed(&s)?);
    }
    if let Some(r) = a.rng {
        c.rng = r.parse()?;
    }
    if let Some(m) = a.model {
        c.model = m.parse()?;
    }
    if let Some(x) = a.alpha {
        c.alpha = x;
    }
    if let Some(x) = a.lambda_min {
        c.lambda_min = x;
    }
    if let Some(x) = a.bootstrap_resamples {
        c.bootstrap_resamples = x;
    }
    if let Some(w) = a.workers {
        c.workers = w;
    }
    c.force |= a.force;
    c.out_dir = Some(out_dir(a.out, c.out_dir.take()));
    c.normalized()
}

fn announce(config: &ExperimentConfig) -> Result<()> {
    eprintln!("effective config: {}", serde_json::to_string(config)?);
    eprintln!("config hash: {}", config.hash()?);
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.6}"))
}

fn summarize(report: &ExperimentReport, written: &[PathBuf]) {
    for d in &report.distributions {
        let iv = d.stddev_interval.map_or("-".into(), |i| format!("[{:.6}, {:.6}]", i.lo, i.hi));
        let boot = d.bootstrap_interval.map_or("-".into(), |i| format!("[{:.6}, {:.6}]", i.lo, i.hi));
        println!(
            "{} H={} delta={} model={} rng={} n={} mean={:.6} stddev={} interval={} bootstrap={} dkw={:.3e}",
            d.target,
            d.height,
            d.delta,
            d.model,
            d.rng,
            d.histogram.n(),
            d.mean,
            fmt_opt(d.stddev),
            iv,
            boot,
            d.dkw_epsilon
        );
        if let Some(t) = &d.tail_fit {
            println!("  tail fit |k| in [{}, {}]: lambda={:.4}", t.k_lo, t.k_hi, t.lambda);
        }
    }
    for s in &report.sweeps {
        for f in &s.fits {
            println!(
                "{} sweep over {}: {} slope={:.5} intercept={:.5} residual={:.3e}",
                s.target, s.axis_name, f.coordinates, f.slope, f.intercept, f.residual
            );
        }
    }
    for cv in &report.cross_validations {
        for p in [&cv.rng_pair, &cv.model_pair] {
            println!(
                "cross-validation H={} {} vs {}: KS={:.3e} eps={:.3e}+{:.3e} verdict={}",
                cv.height, p.a, p.b, p.ks_distance, p.epsilon_a, p.epsilon_b, p.verdict
            );
        }
        if let Some(t) = cv.ternary_not_worse {
            println!("  ternary stddev <= binary stddev: {t}");
        }
    }
    for c in &report.oracle_checks {
        println!(
            "oracle {} H={} delta={}: KS={:.3e} eps={:.3e} within_dkw={} within_band={}",
            c.target, c.height, c.delta, c.ks_distance, c.dkw_epsilon, c.within_dkw, c.within_band
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        println!("FAILED check {}: {}", c.name, c.detail);
    }
    println!(
        "{:.2} s, {:.0} samples/s",
        report.elapsed_seconds, report.samples_per_second
    );
    for p in written {
        println!("wrote {}", p.display());
    }
}

fn finish(report: &ExperimentReport, written: &[PathBuf]) -> Result<()> {
    summarize(report, written);
    if report.all_checks_passed() {
        Ok(())
    } else {
        Err(Error::Inconsistency("one or more result checks failed".into()))
    }
}

fn execute(config: &ExperimentConfig) -> Result<(ExperimentReport, PathBuf, Vec<PathBuf>)> {
    announce(config)?;
    let report = run_experiment(config)?;
    let dir = config.out_dir.clone().expect("out_dir is always set");
    let written = write_outputs(&report, &dir)?;
    Ok((report, dir, written))
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let config = build_config(
        a.run,
        Scenario::DelayPmf,
        &[Scenario::DelayPmf, Scenario::SkewPmf, Scenario::OracleCheck],
    )?;
    let (report, dir, mut written) = execute(&config)?;
    if a.record_grid {
        written.extend(dump_grids(&config, &report, &dir)?);
    }
    finish(&report, &written)
}

/// Re-evaluates sample 0 of every height with full recording.
fn dump_grids(config: &ExperimentConfig, report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let span = config.deltas.last().copied().unwrap_or(0);
    let meta = run_metadata(config, &report.config_hash).with("sample", 0);
    let mut written = Vec::new();
    for &h in &config.heights {
        let mut stream = RngStream::for_sample(config.rng, config.seed(), 0);
        let sample = simulate_sample(ConeSpec::new(h, span), &config.model, &mut stream, true)?;
        let meta = meta.clone().with("height", h).with("span", span);
        for (name, body) in [
            (format!("grid_h{h}_sample0.csv"), grid_csv(&sample, &meta)?),
            (format!("wires_h{h}_sample0.csv"), wires_csv(&sample, &meta)?),
        ] {
            let path = dir.join(name);
            io::write_bytes(&path, &body)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn sweep(a: RunArgs) -> Result<()> {
    let config = build_config(
        a,
        Scenario::DelaySweep,
        &[Scenario::DelaySweep, Scenario::SkewSweep, Scenario::DeltaSweep],
    )?;
    let (report, _, written) = execute(&config)?;
    finish(&report, &written)
}

pub fn cross_validate(a: RunArgs) -> Result<()> {
    let config = build_config(a, Scenario::CrossValidate, &[Scenario::CrossValidate])?;
    let (report, _, written) = execute(&config)?;
    finish(&report, &written)
}

pub fn enumerate(a: EnumerateArgs) -> Result<()> {
    let target: Target = a.target.parse()?;
    let model: DelayModel = a.model.parse()?;
    let guard = EnumerationGuard {
        force: a.force,
        ..Default::default()
    };
    let (pmf, stem, delta) = match target {
        Target::Delay => (exact_delay_pmf(a.height, &model, &guard)?, format!("exact_delay_h{}", a.height), 0),
        Target::Skew => (
            exact_skew_pmf(a.height, a.delta, &model, &guard)?,
            format!("exact_skew_h{}_d{}", a.height, a.delta),
            a.delta,
        ),
    };
    let meta = Metadata::tagged()
        .with("target", target)
        .with("height", a.height)
        .with("delta", delta)
        .with("model", &model);
    let csv = io::exact_pmf_csv(&pmf, &meta)?;
    eprintln!(
        "{} assignments of {} wires, exact mean {}",
        pmf.denominator,
        pmf.wires,
        exact_mean(&pmf)
    );
    match a.out {
        None => print!("{}", String::from_utf8_lossy(&csv)),
        Some(dir) => {
            for (name, body) in [
                (format!("{stem}.csv"), csv),
                (format!("{stem}.json"), io::exact_pmf_json(&pmf)?.into_bytes()),
            ] {
                let path = dir.join(name);
                io::write_bytes(&path, &body)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn load(path: &Path, n: Option<u64>) -> Result<LoadedHistogram> {
    let loaded = load_histogram_csv(path, n)?;
    if loaded.histogram.is_empty() {
        return Err(Error::Config(format!("{}: histogram is empty", path.display())));
    }
    Ok(loaded)
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let loaded = load(&a.input, a.samples)?;
    let h = &loaded.histogram;
    let n = h.n();
    let mut summary = serde_json::Map::new();
    let mut put = |k: &str, v: serde_json::Value| {
        println!("{k}: {}", v);
        summary.insert(k.into(), v);
    };
    put("input", a.input.display().to_string().into());
    put("n", n.into());
    if let Some(d) = loaded.declared_n {
        put("declared_n", d.into());
    }
    put("resolution", h.resolution().into());
    put("mean", h.mean()?.into());
    let band = confidence_band(h, a.alpha, &BucketPolicy::default())?;
    if n >= 2 {
        let sd = h.stddev()?;
        let iv = stddev_interval(h, &band, a.lambda_min)?;
        let boot = bootstrap_stddev_interval(h, 1000, a.alpha, 0)?;
        put("stddev", sd.into());
        put("stddev_interval", serde_json::json!([iv.lo, iv.hi]));
        put("stddev_bootstrap", serde_json::json!([boot.lo, boot.hi]));
    }
    put("chernoff_buckets", band.buckets.into());
    let basis = loaded.declared_n.unwrap_or(n);
    let eps = dkw_epsilon(basis, a.alpha)?;
    if a.dkw {
        put("alpha", a.alpha.into());
        put("dkw_epsilon", eps.into());
    }
    if let Some(reported) = loaded.meta.get("reported_dkw_epsilon").and_then(|r| r.parse::<f64>().ok()) {
        if (reported - eps).abs() > 5e-8 {
            let implied = dkw_sample_size(reported, a.alpha);
            put(
                "note",
                format!(
                    "the file reports DKW epsilon {reported}, but n = {basis} at alpha = {} gives {eps:.7}; \
                     the reported value corresponds to n = {implied:.4e}. The formula value is used.",
                    a.alpha
                )
                .into(),
            );
        }
    }
    if let Some(r) = &a.tail_fit {
        if r.len() != 2 {
            return Err(Error::Config("--tail-fit takes LO,HI".into()));
        }
        let fit = fit_exponential_tail(h, r[0], r[1], TailSide::Pooled)?;
        put("tail_lambda", fit.lambda.into());
        put("tail_residual", fit.residual.into());
    }
    if let Some(dir) = a.out {
        let stem = a.input.file_stem().map_or("histogram".into(), |s| s.to_string_lossy().into_owned());
        let meta = Metadata::tagged().with("source", a.input.display()).with("alpha", a.alpha);
        let path = dir.join(format!("{stem}_band.csv"));
        io::write_histogram_csv(&path, h, Some(&band), &meta)?;
        println!("wrote {}", path.display());
        let path = dir.join(format!("{stem}_analysis.json"));
        io::write_json(&path, &summary)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn qq(a: QqArgs) -> Result<()> {
    let h = load(&a.input, a.samples)?.histogram;
    let mu = match a.mu {
        Some(m) => m,
        None => h.mean()?,
    };
    let sigma = match a.sigma {
        Some(s) => s,
        None => h.stddev()?,
    };
    let points = ecdf_and_qq(&h, mu, sigma)?;
    let meta = Metadata::tagged()
        .with("source", a.input.display())
        .with("mu", mu)
        .with("sigma", sigma);
    let body = io::qq_csv(&points, &meta)?;
    match a.out {
        None => print!("{}", String::from_utf8_lossy(&body)),
        Some(dir) => {
            let stem = a.input.file_stem().map_or("histogram".into(), |s| s.to_string_lossy().into_owned());
            let path = dir.join(format!("{stem}_qq.csv"));
            io::write_bytes(&path, &body)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
