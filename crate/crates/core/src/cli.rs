//! Command-line front end. Every option is `--key=value` (a bare `--flag`
//! means `true`); `--config=FILE` reads the same keys from a flat
//! `key = value` file, and flags override file values.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{apply_train_key, normalize_key, parse_kv, render_train_config, TRAIN_KEYS};
use crate::convert::{read_format, InputFormat};
use crate::cv::{run_cv, CvConfig};
use crate::data::{generate_synthetic, save_csv, stratified_split, BagDataset, Standardizer, SyntheticSpec};
use crate::diag::{budget_grid, epochs_to_train_auc, frozen_comparison};
use crate::error::MidamError;
use crate::eval::{write_metrics_csv, MetricsRow};
use crate::trainer::{train_with_observer, TrainConfig, FULL_BAG};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MIDAM_OUT_DIR";

pub const USAGE: &str = "\
usage: midam <command> [--config=FILE] [--key=value ...]

commands:
  gen      write a synthetic bag dataset
           --out=FILE --n-pos=50 --n-neg=50 --bag-size=16 --dim=10
           --witness-shift=2.0 --witness-count=1 --seed=0 [--header]
  convert  convert a MIL dataset to canonical CSV (bag_id,label,features)
           --input=FILE --out=FILE --format=label-bag|bag-label|uci-musk|svmlight
           [--header] [--out-header]
  train    train one model on one fold
           --dataset=FILE [--fold=0 --folds=5 --test-frac=0.1 --split-seed=S]
           [--checkpoint-every=K] [training keys]
  cv       repeated stratified cross-validation
           --dataset=FILE [--folds=5 --seeds=0,1,2 --test-frac=0.1]
           [--lr-grid=0.1,0.01,0.001] [training keys]
  diag     diagnostics
           --mode=frozen  VRSP vs naive pooling on a frozen model
                          [--dataset=FILE] [--b=4 --gamma0=0.1 --rounds=500]
           --mode=budget  train over (s, b) cells with s*b = --budget
           --mode=bsweep  train with --bs=1,2,4,full, report epochs to --target train AUC

training keys:
  --method=midam|dam_mb|ce --pool=mean|max|smx|smx:TAU|att --s-pos=8 --s-neg=8
  --b=4|full --eta=0.1 --eta-prime=1 --beta1=0.1 --gamma0=0.9 --epochs=100
  --lr-decay-epochs=50,75 --lr-decay-factor=10 --mom-gamma-decay-factor=2
  --weight-decay=1e-4 --margin=0.1 --omega-upper=10 --optimizer=momentum|adam
  --adam-eps=1e-8 --adam-beta2=0.999 --seed=0 --init-scale=1 --att-dim=auto
  --diag-every=0

common:
  --out-dir=DIR (default $MIDAM_OUT_DIR or ./runs)  --run-id=NAME
  --threads=N (1 gives bit-reproducible runs)  --header (input CSV has a header)
  --format=bag-label (input dataset format for train/cv/diag)
  --no-standardize
";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(MidamError),
}

impl From<MidamError> for CliError {
    fn from(e: MidamError) -> Self {
        match e {
            MidamError::Config(_) | MidamError::Argument(_) => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Options after merging the config file and flags; keys are consumed as
/// they are read so leftovers can be reported.
struct Opts {
    map: BTreeMap<String, String>,
    used: Vec<String>,
    resolved: BTreeMap<String, String>,
}

impl Opts {
    fn parse(args: &[String]) -> CliResult<Self> {
        let mut flags = Vec::new();
        for arg in args {
            let Some(body) = arg.strip_prefix("--") else {
                return usage(format!("unexpected argument {arg:?}"));
            };
            let (k, v) = body.split_once('=').unwrap_or((body, "true"));
            let k = normalize_key(k);
            if let Some(stripped) = k.strip_prefix("no_") {
                flags.push((stripped.to_string(), "false".to_string()));
            } else {
                flags.push((k, v.to_string()));
            }
        }
        let mut map = BTreeMap::new();
        if let Some((_, path)) = flags.iter().rev().find(|(k, _)| k == "config") {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
            for (k, v) in parse_kv(&text)? {
                map.insert(k, v);
            }
        }
        for (k, v) in flags {
            if k != "config" {
                map.insert(k, v);
            }
        }
        Ok(Self { map, used: Vec::new(), resolved: BTreeMap::new() })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.push(key.to_string());
        }
        v
    }

    fn get<T: std::str::FromStr + std::fmt::Display>(&mut self, key: &str, default: T) -> CliResult<T> {
        let value = match self.raw(key) {
            None => default,
            Some(v) => v.parse().or_else(|_| usage(format!("--{key}: cannot parse {v:?}")))?,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn required(&mut self, key: &str) -> CliResult<String> {
        let v = self.raw(key).map_or_else(|| usage(format!("missing --{}", key.replace('_', "-"))), Ok)?;
        self.resolved.insert(key.to_string(), v.clone());
        Ok(v)
    }

    fn list<T: std::str::FromStr + std::fmt::Display>(&mut self, key: &str, default: Vec<T>) -> CliResult<Vec<T>> {
        let values = match self.raw(key) {
            None => default,
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().or_else(|_| usage(format!("--{key}: cannot parse {s:?}"))))
                .collect::<CliResult<Vec<T>>>()?,
        };
        let text = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        self.resolved.insert(key.to_string(), text);
        Ok(values)
    }

    /// Applies every training key present and returns the config.
    fn train_config(&mut self) -> CliResult<TrainConfig> {
        let mut cfg = match self.raw("method") {
            Some(m) => TrainConfig::for_method(m.parse()?),
            None => TrainConfig::default(),
        };
        let keys: Vec<String> = self.map.keys().cloned().collect();
        for k in keys {
            if k == "method" {
                continue;
            }
            let v = self.map[&k].clone();
            if apply_train_key(&mut cfg, &k, &v)? {
                self.used.push(k);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn finish(&self) -> CliResult<()> {
        let unknown: Vec<&String> = self.map.keys().filter(|k| !self.used.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            usage(format!(
                "unknown option(s): {}",
                unknown.iter().map(|k| format!("--{}", k.replace('_', "-"))).collect::<Vec<_>>().join(", ")
            ))
        }
    }

    /// Every non-training option read so far, defaults included.
    fn echo_run_keys(&self, skip_train_keys: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            if !(skip_train_keys && TRAIN_KEYS.contains(&k.as_str())) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Parses `args` (without the program name), runs the command and returns
/// the process exit code.
pub fn parse_and_dispatch<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    match dispatch(&args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(args: &[String]) -> CliResult<()> {
    let Some((cmd, rest)) = args.split_first() else {
        return usage("no command given");
    };
    if matches!(cmd.as_str(), "help" | "--help" | "-h") {
        print!("{USAGE}");
        return Ok(());
    }
    let mut opts = Opts::parse(rest)?;
    let threads: usize = opts.get("threads", 0)?;
    let run = |opts: &mut Opts| -> CliResult<()> {
        match cmd.as_str() {
            "gen" => cmd_gen(opts),
            "convert" => cmd_convert(opts),
            "train" => cmd_train(opts),
            "cv" => cmd_cv(opts),
            "diag" => cmd_diag(opts),
            other => usage(format!("unknown command {other:?}")),
        }
    };
    if threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(MidamError::Config(e.to_string())))?;
        pool.install(|| run(&mut opts))
    } else {
        run(&mut opts)
    }
}

fn cmd_gen(opts: &mut Opts) -> CliResult<()> {
    let out = PathBuf::from(opts.required("out")?);
    let spec = SyntheticSpec {
        n_pos: opts.get("n_pos", 50)?,
        n_neg: opts.get("n_neg", 50)?,
        bag_size: opts.get("bag_size", 16)?,
        dim: opts.get("dim", 10)?,
        witness_shift: opts.get("witness_shift", 2.0)?,
        witness_count: opts.get("witness_count", 1)?,
        seed: opts.get("seed", 0)?,
    };
    let header = opts.get("header", false)?;
    opts.finish()?;
    let ds = generate_synthetic(&spec)?;
    save_csv(&ds, &out, header)?;
    println!("wrote {} bags ({} instances, d={}) to {}", ds.len(), ds.n_instances(), ds.dim(), out.display());
    Ok(())
}

fn cmd_convert(opts: &mut Opts) -> CliResult<()> {
    let input = opts.required("input")?;
    let out = PathBuf::from(opts.required("out")?);
    let format: InputFormat = opts.required("format")?.parse()?;
    let header = opts.get("header", false)?;
    let out_header = opts.get("out_header", false)?;
    opts.finish()?;
    let ds = read_format(fs::File::open(&input)?, format, header)?;
    save_csv(&ds, &out, out_header)?;
    println!(
        "converted {input}: {} bags ({} positive, {} negative), {} instances, d={}",
        ds.len(),
        ds.n_pos(),
        ds.n_neg(),
        ds.n_instances(),
        ds.dim()
    );
    Ok(())
}

/// Where and how to read the input dataset; resolved before any I/O so
/// option errors are reported first.
struct DatasetSource {
    path: String,
    format: InputFormat,
    header: bool,
}

impl DatasetSource {
    fn from_opts(opts: &mut Opts) -> CliResult<Self> {
        let path = opts.required("dataset")?;
        let format = opts.get("format", "bag-label".to_string())?.parse()?;
        let header = opts.get("header", false)?;
        Ok(Self { path, format, header })
    }

    fn load(&self) -> CliResult<BagDataset> {
        let file = fs::File::open(&self.path)
            .map_err(|e| CliError::Runtime(MidamError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", self.path)))))?;
        read_format(file, self.format, self.header).map_err(CliError::Runtime)
    }
}

fn run_dir(opts: &mut Opts, default_id: String) -> CliResult<PathBuf> {
    let default_dir = std::env::var(OUT_DIR_ENV).unwrap_or_else(|_| "runs".into());
    let dir = PathBuf::from(opts.get("out_dir", default_dir)?);
    let id = opts.get("run_id", default_id)?;
    Ok(dir.join(id))
}

fn write_config_echo(dir: &Path, opts: &Opts, cfg: Option<&TrainConfig>) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let mut text = opts.echo_run_keys(cfg.is_some());
    if let Some(cfg) = cfg {
        text.push_str(&render_train_config(cfg));
    }
    fs::write(dir.join("config.txt"), text)?;
    Ok(())
}

fn cmd_train(opts: &mut Opts) -> CliResult<()> {
    let source = DatasetSource::from_opts(opts)?;
    let cfg = opts.train_config()?;
    let folds = opts.get("folds", 5)?;
    let fold: usize = opts.get("fold", 0)?;
    let test_frac = opts.get("test_frac", 0.1)?;
    let split_seed = opts.get("split_seed", cfg.seed)?;
    let standardize = opts.get("standardize", true)?;
    let checkpoint_every: usize = opts.get("checkpoint_every", 0)?;
    let dir = run_dir(opts, format!("train-{}-{}-seed{}", cfg.method, cfg.kind.short_name(), cfg.seed))?;
    opts.finish()?;
    if fold >= folds {
        return usage(format!("--fold={fold} must be below --folds={folds}"));
    }
    let ds = source.load()?;
    write_config_echo(&dir, opts, Some(&cfg))?;

    let split = stratified_split(&ds, folds, test_frac, split_seed).map_err(CliError::Runtime)?.swap_remove(fold);
    let (tr, va, te) = if standardize {
        let z = Standardizer::fit(&split.train);
        (z.apply(&split.train), z.apply(&split.val), z.apply(&split.test))
    } else {
        (split.train, split.val, split.test)
    };
    let mut metrics_file = std::io::BufWriter::new(fs::File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(&[], &mut metrics_file)?;
    let out = train_with_observer(&tr, &va, &te, &cfg, |view| {
        writeln!(metrics_file, "{}", view.row.csv_line())?;
        metrics_file.flush()?;
        if checkpoint_every > 0 && view.row.epoch % checkpoint_every == 0 {
            let ck = Checkpoint {
                epoch: view.row.epoch,
                kind: cfg.kind,
                params: view.state.params.clone(),
                pool_state: view.state.pool_state.clone(),
            };
            ck.save(dir.join(format!("checkpoint-epoch{}", view.row.epoch)))?;
        }
        Ok(())
    })
    .map_err(CliError::Runtime)?;
    Checkpoint { epoch: out.best_epoch, kind: cfg.kind, params: out.best.clone(), pool_state: None }
        .save(dir.join("checkpoint"))
        .map_err(CliError::Runtime)?;

    let best = out.best_epoch.checked_sub(1).and_then(|i| out.metrics.get(i));
    let mut summary = format!(
        "dataset = {}\nmethod = {}\npool = {}\nbags = {} train, {} val, {} test\nepochs = {}\nbest_epoch = {}\n",
        source.path,
        cfg.method,
        cfg.kind,
        tr.len(),
        va.len(),
        te.len(),
        out.metrics.len(),
        out.best_epoch
    );
    if let Some(r) = best {
        summary.push_str(&format!("best_val_auc = {:.4}\ntest_auc_at_best_val = {:.4}\n", r.val_auc, r.test_auc));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!("outputs in {}", dir.display());
    Ok(())
}

fn cmd_cv(opts: &mut Opts) -> CliResult<()> {
    let source = DatasetSource::from_opts(opts)?;
    let cfg = opts.train_config()?;
    let cv = CvConfig {
        folds: opts.get("folds", 5)?,
        seeds: opts.list("seeds", vec![0, 1, 2])?,
        test_frac: opts.get("test_frac", 0.1)?,
        standardize: opts.get("standardize", true)?,
        lr_grid: opts.list("lr_grid", Vec::new())?,
    };
    let dir = run_dir(opts, format!("cv-{}-{}", cfg.method, cfg.kind.short_name()))?;
    opts.finish()?;
    let ds = source.load()?;
    write_config_echo(&dir, opts, Some(&cfg))?;

    let report = run_cv(&ds, &cfg, &cv).map_err(CliError::Runtime)?;
    let mut trials = String::from("fold,seed,eta,best_epoch,best_val_auc,test_auc_at_best_val\n");
    for t in &report.trials {
        trials.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.fold, t.seed, t.eta, t.best_epoch, t.best_val_auc, t.test_auc_at_best_val
        ));
    }
    fs::write(dir.join("trials.csv"), trials)?;

    let mut summary = format!(
        "dataset = {}\nmethod = {}\npool = {}\ntrials = {}\nfailures = {}\n",
        source.path,
        cfg.method,
        cfg.kind,
        report.trials.len(),
        report.failures.len()
    );
    match report.summary() {
        Some(s) => summary.push_str(&format!("test_auc = {s}\n")),
        None => summary.push_str("test_auc = n/a\n"),
    }
    for f in &report.failures {
        summary.push_str(&format!("failed fold={} seed={}: {}\n", f.fold, f.seed, f.error));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    if report.trials.is_empty() {
        return Err(CliError::Runtime(MidamError::Numeric("every trial failed".into())));
    }
    Ok(())
}

fn cmd_diag(opts: &mut Opts) -> CliResult<()> {
    let mode = opts.get("mode", "frozen".to_string())?;
    match mode.as_str() {
        "frozen" => diag_frozen(opts),
        "budget" => diag_budget(opts),
        "bsweep" => diag_bsweep(opts),
        other => usage(format!("unknown diag mode {other:?} (expected frozen, budget or bsweep)")),
    }
}

fn diag_frozen(opts: &mut Opts) -> CliResult<()> {
    let source = if opts.map.contains_key("dataset") { Some(DatasetSource::from_opts(opts)?) } else { None };
    let kinds: Vec<String> = opts.list("pools", vec!["smx".to_string(), "att".to_string()])?;
    let b = opts.get("b", 4)?;
    let gamma0 = opts.get("gamma0", 0.1)?;
    let rounds = opts.get("rounds", 500)?;
    let seed: u64 = opts.get("seed", 0)?;
    let dir = run_dir(opts, "diag-frozen".into())?;
    opts.finish()?;
    let ds = match source {
        Some(src) => src.load()?,
        None => generate_synthetic(&SyntheticSpec {
            n_pos: 20,
            n_neg: 20,
            bag_size: 32,
            dim: 8,
            witness_shift: 2.0,
            witness_count: 2,
            seed: 0,
        })?,
    };
    write_config_echo(&dir, opts, None)?;

    let p = TrainConfig { seed, ..Default::default() }.init_params(ds.dim())?;
    let mut summary = String::from("pool,b,gamma0,rounds,vrsp_mse,naive_mse,result\n");
    for k in kinds {
        let kind = k.parse()?;
        let c = frozen_comparison(&p, &ds, kind, b, gamma0, rounds, seed)?;
        let verdict = if c.vrsp_wins() { "PASS" } else { "FAIL" };
        summary.push_str(&format!("{kind},{b},{gamma0},{rounds},{:e},{:e},{verdict}\n", c.vrsp_mse, c.naive_mse));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Trains on a fixed split and returns the per-epoch metrics.
fn train_cell(
    tr: &BagDataset,
    va: &BagDataset,
    te: &BagDataset,
    cfg: &TrainConfig,
    file: &Path,
) -> CliResult<Vec<MetricsRow>> {
    let out = train_with_observer(tr, va, te, cfg, |_| Ok(())).map_err(CliError::Runtime)?;
    write_metrics_csv(&out.metrics, std::io::BufWriter::new(fs::File::create(file)?))?;
    Ok(out.metrics)
}

fn split_for_diag(ds: &BagDataset, folds: usize, test_frac: f64, seed: u64) -> CliResult<(BagDataset, BagDataset, BagDataset)> {
    let split = stratified_split(ds, folds, test_frac, seed).map_err(CliError::Runtime)?.swap_remove(0);
    let z = Standardizer::fit(&split.train);
    Ok((z.apply(&split.train), z.apply(&split.val), z.apply(&split.test)))
}

fn diag_budget(opts: &mut Opts) -> CliResult<()> {
    let source = DatasetSource::from_opts(opts)?;
    let cfg = opts.train_config()?;
    let budget = opts.get("budget", 64)?;
    let (folds, test_frac) = (opts.get("folds", 5)?, opts.get("test_frac", 0.1)?);
    let dir = run_dir(opts, format!("diag-budget{budget}"))?;
    opts.finish()?;
    let (tr, va, te) = split_for_diag(&source.load()?, folds, test_frac, cfg.seed)?;
    write_config_echo(&dir, opts, Some(&cfg))?;
    let mut summary = String::from("s,b,final_train_auc,best_val_auc\n");
    for (s, b) in budget_grid(budget) {
        if s > tr.n_pos() || s > tr.n_neg() {
            summary.push_str(&format!("{s},{b},skipped,skipped\n"));
            continue;
        }
        let cell = TrainConfig { s_pos: s, s_neg: s, b, ..cfg.clone() };
        let rows = train_cell(&tr, &va, &te, &cell, &dir.join(format!("metrics-s{s}-b{b}.csv")))?;
        let last = rows.last().map_or(f64::NAN, |r| r.train_auc);
        let best_val = rows.iter().map(|r| r.val_auc).fold(f64::NAN, f64::max);
        summary.push_str(&format!("{s},{b},{last:.4},{best_val:.4}\n"));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn diag_bsweep(opts: &mut Opts) -> CliResult<()> {
    let source = DatasetSource::from_opts(opts)?;
    let cfg = opts.train_config()?;
    let bs: Vec<String> = opts.list("bs", vec!["1".into(), "2".into(), "4".into(), "full".into()])?;
    let n_seeds: u64 = opts.get("n_seeds", 1)?;
    let target = opts.get("target", 0.9)?;
    let (folds, test_frac) = (opts.get("folds", 5)?, opts.get("test_frac", 0.1)?);
    let dir = run_dir(opts, "diag-bsweep".into())?;
    opts.finish()?;
    let (tr, va, te) = split_for_diag(&source.load()?, folds, test_frac, cfg.seed)?;
    write_config_echo(&dir, opts, Some(&cfg))?;
    let mut summary = String::from("b,mean_epochs_to_target,reached,final_train_auc\n");
    for b in &bs {
        let b_val = if b == "full" { FULL_BAG } else { b.parse().or_else(|_| usage(format!("--bs: bad value {b:?}")))? };
        let (mut epochs, mut reached, mut final_auc) = (0.0, 0, 0.0);
        for seed in 0..n_seeds {
            let cell = TrainConfig { b: b_val, seed: cfg.seed + seed, ..cfg.clone() };
            let rows = train_cell(&tr, &va, &te, &cell, &dir.join(format!("metrics-b{b}-seed{}.csv", cell.seed)))?;
            // runs that never reach the target count as the full budget
            match epochs_to_train_auc(&rows, target) {
                Some(e) => {
                    epochs += e as f64;
                    reached += 1;
                }
                None => epochs += cfg.epochs as f64 + 1.0,
            }
            final_auc += rows.last().map_or(f64::NAN, |r| r.train_auc);
        }
        let n = n_seeds.max(1) as f64;
        summary.push_str(&format!("{b},{:.2},{reached}/{n_seeds},{:.4}\n", epochs / n, final_auc / n));
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
