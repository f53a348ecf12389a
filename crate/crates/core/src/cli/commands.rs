use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::{prepare, train_model, Checkpoint, Prepared, Report, RunConfig};
use crate::baselines::{FrequencyModel, FrequencyRanker, FrequencyRule, OdLstm};
use crate::dataset::{load_corpus, preprocess, read_raw_trips, write_corpus, write_trips, Corpus, Split, Trip};
use crate::error::{Error, Result};
use crate::eval::{
    cold_start_cohort, cold_start_eval, evaluate, sensitivity_sweep, ModelRanker, Ranker, SweepAxis,
};
use crate::model::{ranking, Variant};
use crate::synth::{generate, oracle_accuracy, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "odrec", version, about = "Origin-aware next-destination recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter sparse users and locations and write the surviving corpus.
    Preprocess {
        #[arg(long)]
        trips: PathBuf,
        #[arg(long)]
        locations: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_trips: usize,
        #[arg(long, default_value_t = 10)]
        min_users: usize,
    },
    /// Train a model and write a checkpoint plus the held-out test trips.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Where to write the test partition (default: `<checkpoint>.test.csv`).
        #[arg(long)]
        test_out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on test trips.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also score the frequency baselines on the same queries.
        #[arg(long)]
        baselines: bool,
    },
    /// Rank next destinations for one query.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        origin: String,
        #[arg(long)]
        prev_dest: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Print per-state attention percentages.
        #[arg(long)]
        explain: bool,
        /// Trips CSV holding the history of a user missing from the checkpoint.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Pickup timestamp of the current trip.
        #[arg(long)]
        time: Option<i64>,
    },
    /// Train and evaluate one ablation variant or baseline.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// A model variant, or one of od-lstm, top, u-top, taxi.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with a planted rule.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate over a range of one hyperparameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `hidden` or `epochs`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn emit(out: &mut dyn Write, report: &Report, path: Option<&Path>) -> Result<()> {
    out.write_all(report.to_text().as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;
    if let Some(p) = path {
        report.write(p)?;
    }
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn load_run(path: &Path) -> Result<(RunConfig, Prepared)> {
    let cfg = RunConfig::load(path)?;
    let raw = load_corpus(&cfg.data.trips, &cfg.data.locations)?;
    let prepared = prepare(raw, &cfg.data, cfg.model.geohash_precision)?;
    Ok((cfg, prepared))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            trips,
            locations,
            out: dir,
            min_trips,
            min_users,
        } => {
            let raw = load_corpus(&trips, &locations)?;
            let p = preprocess(&raw, min_trips, min_users);
            create_dir(&dir)?;
            write_corpus(&p.corpus, &dir.join("trips.csv"), &dir.join("locations.csv"))?;
            let mut r = Report::new();
            r.stats(&p.corpus.stats())
                .push("removed_users", p.removed_users.len())
                .push("empty", p.empty_warning);
            emit(out, &r, Some(&dir.join("stats.txt")))
        }
        Command::Train {
            config,
            out_checkpoint,
            test_out,
            report,
        } => {
            let (cfg, p) = load_run(&config)?;
            let t = train_model(&p, &cfg.model)?;
            t.checkpoint(&p, cfg.hash()).save(&out_checkpoint)?;
            let test_path = test_out.unwrap_or_else(|| out_checkpoint.with_extension("test.csv"));
            write_trips(&p.split.test, &test_path)?;
            let mut r = Report::new();
            r.push("config_hash", cfg.hash())
                .push("variant", cfg.model.variant)
                .push("seed", cfg.model.seed)
                .push("users_trained", t.report.n_users_trained)
                .push("examples", t.report.n_examples);
            for (e, l) in t.report.loss_curve.iter().enumerate() {
                r.push(format!("loss.epoch{}", e + 1), l);
            }
            r.push("checkpoint", out_checkpoint.display())
                .push("test_trips", test_path.display());
            emit(out, &r, report.as_deref())
        }
        Command::Eval {
            checkpoint,
            test,
            report,
            baselines,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (split, unmapped) = test_split(&ck, &test)?;
            let mut r = Report::new();
            r.push("config_hash", &ck.config_hash)
                .push("variant", ck.model.config.variant)
                .push("unmapped_trips", unmapped);
            let cache = match &ck.cache {
                Some(c) => c.clone(),
                None => ck.model.build_cache(&split.train)?,
            };
            let mut rep = evaluate(
                &ModelRanker {
                    model: &ck.model,
                    cache: &cache,
                },
                &split,
            )?;
            rep.seed = Some(ck.model.config.seed);
            r.eval("", &rep);
            if baselines {
                let fm = FrequencyModel::fit(&split.train);
                for rule in [FrequencyRule::Top, FrequencyRule::UserTop, FrequencyRule::Taxi { lambda: 0.5 }] {
                    let ranker = FrequencyRanker::new(fm.clone(), rule);
                    r.eval(&ranker.name(), &evaluate(&ranker, &split)?);
                }
            }
            emit(out, &r, report.as_deref())
        }
        Command::Predict {
            checkpoint,
            user,
            origin,
            prev_dest,
            k,
            explain,
            history,
            time,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            predict(&ck, &user, &origin, &prev_dest, k, explain, history.as_deref(), time, out)
        }
        Command::Ablate { config, variant, report } => {
            let (cfg, p) = load_run(&config)?;
            let cohort = cold_start_cohort(&p.raw, &p.pre.corpus, cfg.data.min_trips);
            let mut r = Report::new();
            r.push("config_hash", cfg.hash()).push("variant", &variant);
            let score = |ranker: &dyn Ranker, r: &mut Report| -> Result<()> {
                let mut test = evaluate(ranker, &p.split)?;
                test.seed = Some(cfg.model.seed);
                r.eval("test", &test);
                if !cohort.users.is_empty() {
                    r.eval("cold", &cold_start_eval(ranker, &cohort)?);
                }
                Ok(())
            };
            let fm = || FrequencyModel::fit(&p.split.train);
            match variant.as_str() {
                "top" => score(&FrequencyRanker::new(fm(), FrequencyRule::Top), &mut r)?,
                "u-top" => score(&FrequencyRanker::new(fm(), FrequencyRule::UserTop), &mut r)?,
                "taxi" => score(&FrequencyRanker::new(fm(), FrequencyRule::Taxi { lambda: 0.5 }), &mut r)?,
                "od-lstm" => {
                    let mut m = OdLstm::new(cfg.model.clone(), p.vocab.n_locations)?;
                    m.train(&p.split.train)?;
                    score(&m, &mut r)?;
                }
                kind => {
                    let v: Variant = kind.parse()?;
                    let t = train_model(&p, &crate::model::ModelConfig { variant: v, ..cfg.model.clone() })?;
                    score(
                        &ModelRanker {
                            model: &t.model,
                            cache: &t.cache,
                        },
                        &mut r,
                    )?;
                }
            }
            emit(out, &r, report.as_deref())
        }
        Command::Synth { config, out: dir } => {
            let cfg = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SynthConfig::default(),
            };
            let s = generate(&cfg)?;
            create_dir(&dir)?;
            write_corpus(&s.corpus, &dir.join("trips.csv"), &dir.join("locations.csv"))?;
            crate::dataset::io::write_file(&dir.join("rule.json"), s.rule.manifest()?.as_bytes())?;
            let mut r = Report::new();
            r.push("config_hash", super::hash_json(&cfg))
                .push("oracle_acc1", oracle_accuracy(&cfg))
                .stats(&s.corpus.stats())
                .push("main_users", s.n_main_users);
            emit(out, &r, Some(&dir.join("synth.txt")))
        }
        Command::Sweep {
            config,
            axis,
            values,
            report,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let (cfg, p) = load_run(&config)?;
            let rows = sensitivity_sweep(axis, &values, &cfg.model, &p.split, &p.vocab, &p.tables)?;
            let mut r = Report::new();
            r.push("config_hash", cfg.hash()).push("axis", axis);
            for row in &rows {
                r.eval(&format!("{axis}.{}", row.value), &row.report);
            }
            emit(out, &r, report.as_deref())
        }
    }
}

/// Maps a trips file onto the checkpoint's users and locations. Rows with
/// an unknown user or location are counted and left out.
fn test_split(ck: &Checkpoint, path: &Path) -> Result<(Split, usize)> {
    let mut test = vec![Vec::new(); ck.user_ids.len()];
    let mut unmapped = 0;
    for row in read_raw_trips(path)? {
        match (
            ck.user_index(&row.user_id),
            ck.location_index(&row.origin_id),
            ck.location_index(&row.dest_id),
        ) {
            (Some(u), Some(o), Some(d)) => test[u].push(Trip {
                origin: o,
                dest: d,
                pickup_ts: row.pickup_ts,
                dropoff_ts: row.dropoff_ts,
            }),
            _ => unmapped += 1,
        }
    }
    let corpus = |trips| Corpus::new(ck.locations.clone(), ck.user_ids.clone(), trips);
    Ok((
        Split {
            train: corpus(ck.train_histories.clone())?,
            test: corpus(test)?,
            flagged: Vec::new(),
        },
        unmapped,
    ))
}

#[allow(clippy::too_many_arguments)]
fn predict(
    ck: &Checkpoint,
    user: &str,
    origin: &str,
    prev_dest: &str,
    k: usize,
    explain: bool,
    history_path: Option<&Path>,
    time: Option<i64>,
    out: &mut dyn Write,
) -> Result<()> {
    use crate::model::UserRef;

    let loc = |id: &str| {
        ck.location_index(id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown location `{id}`")))
    };
    let (o, d) = (loc(origin)?, loc(prev_dest)?);
    let (user_ref, history): (UserRef, Vec<Trip>) = match ck.user_index(user) {
        Some(u) => (UserRef::Known(u), ck.train_histories[u].clone()),
        None => {
            let Some(path) = history_path else {
                return Err(cold_guidance(user));
            };
            let mut trips: Vec<Trip> = read_raw_trips(path)?
                .into_iter()
                .filter(|r| r.user_id == user)
                .filter_map(|r| {
                    Some(Trip {
                        origin: ck.location_index(&r.origin_id)?,
                        dest: ck.location_index(&r.dest_id)?,
                        pickup_ts: r.pickup_ts,
                        dropoff_ts: r.dropoff_ts,
                    })
                })
                .collect();
            trips.sort_by_key(|t| (t.pickup_ts, t.dropoff_ts));
            if trips.is_empty() {
                return Err(cold_guidance(user));
            }
            (UserRef::Cold, trips)
        }
    };
    let pickup = time.unwrap_or_else(|| history.last().map_or(0, |t| t.dropoff_ts + 3600));
    let model = &ck.model;

    let cached = match (user_ref, &ck.cache) {
        (UserRef::Known(u), Some(c)) if model.config.variant.uses_cache() => c.get(u).map(<[_]>::to_vec),
        _ => None,
    };
    let (states, mode) = match cached {
        Some(s) => (s, "cached"),
        None if history.is_empty() => return Err(cold_guidance(user)),
        None => (
            model.encode_history(&history, o, pickup)?,
            if user_ref == UserRef::Cold { "cold" } else { "history" },
        ),
    };
    let p = if model.config.variant.uses_cache() {
        model.score_states(user_ref, o, d, &states)?
    } else {
        model.predict(None, user_ref, &history, o, pickup, d)?
    };

    let mut r = Report::new();
    r.push("user", user).push("mode", mode).push("variant", model.config.variant);
    for (i, l) in ranking(&p.probs).into_iter().take(k).enumerate() {
        r.push(format!("rank{}", i + 1), format!("{} {:.6}", ck.locations[l].loc_id, p.probs[l]));
    }
    if explain {
        let seq = |role| {
            states
                .iter()
                .filter(|s| s.role == role)
                .map(|s| ck.locations[s.loc].loc_id.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        };
        r.push("origin_sequence", seq(crate::dataset::Role::Origin))
            .push("dest_sequence", seq(crate::dataset::Role::Destination));
        match &p.attention {
            Some(weights) => {
                for (s, w) in states.iter().zip(weights) {
                    let tag = match s.role {
                        crate::dataset::Role::Origin => "O",
                        crate::dataset::Role::Destination => "D",
                    };
                    let pct = 100.0 * w.iter().sum::<f64>() / w.len() as f64;
                    r.push(
                        format!("attention.{tag}{}", s.step),
                        format!("{} {pct:.2}%", ck.locations[s.loc].loc_id),
                    );
                }
            }
            None => {
                r.push("attention", "none");
            }
        }
    }
    emit(out, &r, None)
}

fn cold_guidance(user: &str) -> Error {
    Error::ColdStart(format!(
        "user `{user}` is not in the checkpoint; pass --history with a trips CSV holding their earlier trips"
    ))
}
