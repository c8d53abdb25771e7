//! Implementations of the six subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmap_core::analysis::{compare_tangling, embed_pca, steady_attention_map};
use dmap_core::config::{ExperimentConfig, RawConfig};
use dmap_core::distill::{assemble_rma, collect_rollouts, distill as distill_encoder, save_dataset, CollectConfig, DistillConfig};
use dmap_core::envs::{testset::TestSet, EnvSpec};
use dmap_core::eval::{
    adaptation_speed, limb_sweep, matrix_csv, pool_cell, rollout, sigmoid_fit, zero_shot_eval, EvalReport,
};
use dmap_core::io::csv::{CsvCell, CsvWriter};
use dmap_core::io::svg::{heatmap, Plot};
use dmap_core::io::{load_checkpoint, save_checkpoint, Manifest};
use dmap_core::policies::{Policy, PolicyConfig, PolicyKind};
use dmap_core::rng::Rng;
use dmap_core::sac::{default_critic_hiddens, train as sac_train, Sac, TrainHooks};

use crate::exit::{CliError, CliResult};

fn write_file(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_testset(path: &Path) -> CliResult<TestSet> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(TestSet::from_bytes(&bytes)?)
}

/// Per-run seeds derive from the master seed and the configured seed index
/// through a splittable stream, so extending the seed list never perturbs
/// existing runs.
fn run_seed(master: u64, configured: u64) -> u64 {
    Rng::stream(master, "run-seed", &[configured]).next_u64()
}

pub fn testset(env: &str, sigma: f64, seed: u64, n: usize, out: &Path) -> CliResult {
    let spec = EnvSpec::by_name(env)?;
    let ts = TestSet::generate(&spec, sigma, n, seed);
    write_file(out, &ts.to_json())?;
    let mut config = BTreeMap::new();
    config.insert("env".into(), env.to_string());
    config.insert("sigma".into(), format!("{sigma}"));
    config.insert("seed".into(), format!("{seed}"));
    config.insert("n".into(), format!("{n}"));
    config.insert("out".into(), out.display().to_string());
    if let Some(dir) = out.parent() {
        let mut manifest = Manifest::new("testset", config);
        manifest.add_input(out).map_err(|e| CliError::io(out, e))?;
        manifest.write(dir).map_err(|e| CliError::io(dir, e))?;
    }
    println!("wrote {} morphologies to {}", n, out.display());
    Ok(())
}

fn load_config(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = read_to_string(path)?;
    let mut raw = RawConfig::parse(&text)?;
    for o in overrides {
        raw.apply_override(o)?;
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

pub fn train(config_path: &Path, overrides: &[String], out: Option<&Path>, master_seed: u64) -> CliResult {
    let cfg = load_config(config_path, overrides)?;
    let out_dir: PathBuf = match (out, &cfg.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("runs"),
    };
    let spec = EnvSpec::by_name(&cfg.env)?;

    let mut flat = cfg.to_flat();
    flat.insert("master_seed".into(), format!("{master_seed}"));
    let mut manifest = Manifest::new("train", flat);
    manifest.add_input(config_path).map_err(|e| CliError::io(config_path, e))?;

    for &seed_index in &cfg.seeds {
        let seed = run_seed(master_seed, seed_index);
        let run_dir = out_dir.join(format!("sigma_{}", cfg.sigma_train)).join(format!("seed_{seed_index}"));
        std::fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;

        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = seed;
        let actor = Policy::new(PolicyConfig::for_env(cfg.policy, &spec), spec.name, seed)?;
        let sac = Sac::new(actor, &default_critic_hiddens(cfg.policy), train_cfg)?;

        let metrics_path = run_dir.join("metrics.csv");
        let mut metrics = std::fs::File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
        let mut hooks = TrainHooks { metrics: Some(&mut metrics), checkpoint_dir: Some(&run_dir) };
        eprintln!(
            "training {} on {} (sigma {}, seed index {seed_index}) for {} steps",
            cfg.policy, cfg.env, cfg.sigma_train, cfg.train.total_steps
        );
        sac_train(&spec, sac, &mut hooks)?;
        println!("seed {seed_index}: wrote {}", run_dir.display());
    }
    manifest.write(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    Ok(())
}

pub fn distill(
    config_path: &Path,
    oracle_path: Option<&Path>,
    overrides: &[String],
    out: Option<&Path>,
    master_seed: u64,
) -> CliResult {
    let cfg = load_config(config_path, overrides)?;
    let oracle_path: PathBuf = match (oracle_path, &cfg.distill.oracle) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => {
            return Err(CliError::Other("distill needs --oracle or distill.oracle in the config".into()))
        }
    };
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("distill_out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let oracle = load_checkpoint(&oracle_path)?;
    let spec = EnvSpec::by_name(&oracle.env_name)?;
    let seed = run_seed(master_seed, cfg.seeds[0]);

    eprintln!("collecting {} oracle episodes at sigma {}", cfg.distill.episodes, cfg.distill.sigma);
    let collect = CollectConfig {
        episodes: cfg.distill.episodes,
        sigma: cfg.distill.sigma,
        stride: cfg.distill.stride,
        seed,
    };
    let samples = collect_rollouts(&oracle, &spec, &collect)?;
    let dims = [spec.n_s, spec.n_a, oracle.config.history_len, oracle.config.n_v];
    let dataset_path = out_dir.join("dataset.bin");
    save_dataset(&dataset_path, &samples, spec.name, dims)?;
    eprintln!("dataset: {} samples from {} episodes", samples.len(), cfg.distill.episodes);

    let mut student_cfg = PolicyConfig::for_env(PolicyKind::Tcn, &spec);
    student_cfg.trunk_hiddens = oracle.config.trunk_hiddens.clone();
    student_cfg.n_v = oracle.config.n_v;
    student_cfg.history_len = oracle.config.history_len;
    let mut student = Policy::new(student_cfg, spec.name, seed ^ 0xd15)?;
    let report = distill_encoder(
        &mut student,
        &samples,
        &DistillConfig {
            epochs: cfg.distill.epochs,
            lr: cfg.distill.lr,
            batch_size: cfg.distill.batch_size,
            heldout_fraction: cfg.distill.heldout_fraction,
            seed,
        },
    )?;
    write_file(&out_dir.join("report.json"), &report.to_json())?;

    let rma = assemble_rma(&student, &oracle)?;
    let ckpt_path = out_dir.join("rma.bin");
    save_checkpoint(&rma, &ckpt_path)?;
    println!(
        "held-out mse {:.5} (from {:.5}); checkpoint {}",
        report.heldout_mse,
        report.initial_heldout_mse,
        ckpt_path.display()
    );

    let mut flat = cfg.to_flat();
    flat.insert("oracle".into(), oracle_path.display().to_string());
    let mut manifest = Manifest::new("distill", flat);
    manifest.add_input(config_path).map_err(|e| CliError::io(config_path, e))?;
    manifest.add_input(&oracle_path).map_err(|e| CliError::io(&oracle_path, e))?;
    manifest.write(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    Ok(())
}

pub fn eval(ckpt: &Path, testset_path: &Path, train_sigma: Option<f64>, sweep_limbs: bool, out: &Path) -> CliResult {
    let policy = load_checkpoint(ckpt)?;
    let test_set = load_testset(testset_path)?;
    let spec = EnvSpec::by_name(&test_set.env)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let report = zero_shot_eval(&policy, &spec, &test_set, train_sigma)?;
    write_file(&out.join("report.json"), &report.to_json())?;

    // reward against perturbation intensity, with a sigmoid fit when the
    // spread supports one
    let mut csv = CsvWriter::new(&["morphology", "intensity", "reward"]);
    for (i, (&x, &r)) in report.intensities.iter().zip(&report.rewards).enumerate() {
        csv.row(&[CsvCell::Int(i as i64), CsvCell::Float(x), CsvCell::Float(r)]);
    }
    write_file(&out.join("reward_vs_intensity.csv"), &csv.finish())?;
    let points: Vec<(f64, f64)> = report.intensities.iter().copied().zip(report.rewards.iter().copied()).collect();
    let mut plot = Plot::new(
        &format!("{} on {} (test sigma {})", report.policy_kind, report.env, report.sigma_test),
        "perturbation intensity",
        "episode reward",
    )
    .scatter("episodes", points.clone());
    if let Ok(fit) = sigmoid_fit(&points) {
        let lo = report.intensities.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = report.intensities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let curve: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 100.0;
                (x, fit.eval(x))
            })
            .collect();
        plot = plot.line("sigmoid fit", curve);
        write_file(
            &out.join("sigmoid_fit.json"),
            &serde_json::to_string_pretty(&fit).expect("fit serializes"),
        )?;
    }
    write_file(&out.join("reward_vs_intensity.svg"), &plot.render())?;

    // adaptation speed curve (trailing 30-step window, per the protocol)
    let curve = adaptation_speed(&policy, &spec, &test_set, 30)?;
    let mut csv = CsvWriter::new(&["step", "mean_speed", "episodes_alive"]);
    for (t, &(v, n)) in curve.curve.iter().enumerate() {
        csv.row(&[CsvCell::Int(t as i64), CsvCell::Float(v), CsvCell::Int(n as i64)]);
    }
    write_file(&out.join("adaptation_speed.csv"), &csv.finish())?;
    let speed_points: Vec<(f64, f64)> = curve.curve.iter().enumerate().map(|(t, &(v, _))| (t as f64, v)).collect();
    let speed_plot = Plot::new("adaptation speed", "step", "smoothed speed (m/s)").line("mean over test set", speed_points);
    write_file(&out.join("adaptation_speed.svg"), &speed_plot.render())?;

    if sweep_limbs {
        let fractions: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let mut plot = Plot::new("single-limb shortening", "length reduction", "episode reward");
        for limb_id in 0..spec.limb_groups.len() {
            let sweep = limb_sweep(&policy, &spec, limb_id, &fractions, test_set.seed)?;
            let mut csv = CsvWriter::new(&["fraction", "reward"]);
            for &(f, r) in &sweep.points {
                csv.row(&[CsvCell::Float(f), CsvCell::Float(r)]);
            }
            write_file(&out.join(format!("limb_sweep_{}.csv", sweep.limb)), &csv.finish())?;
            eprintln!("limb {}: spearman rho = {:.3}", sweep.limb, sweep.spearman_rho);
            plot = plot.line(&sweep.limb.clone(), sweep.points.clone());
        }
        write_file(&out.join("limb_sweep.svg"), &plot.render())?;
    }

    let mut config = BTreeMap::new();
    config.insert("ckpt".into(), ckpt.display().to_string());
    config.insert("testset".into(), testset_path.display().to_string());
    if let Some(ts) = train_sigma {
        config.insert("train_sigma".into(), format!("{ts}"));
    }
    let mut manifest = Manifest::new("eval", config);
    manifest.add_input(ckpt).map_err(|e| CliError::io(ckpt, e))?;
    manifest.add_input(testset_path).map_err(|e| CliError::io(testset_path, e))?;
    manifest.write(out).map_err(|e| CliError::io(out, e))?;
    println!("mean reward {:.2} +- {:.2} over {} morphologies", report.mean, report.sem, report.rewards.len());
    Ok(())
}

pub fn matrix(config_path: &Path, ckpt_dir: &Path, jobs: usize, overrides: &[String], out: &Path) -> CliResult {
    let cfg = load_config(config_path, overrides)?;
    let spec = EnvSpec::by_name(&cfg.env)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    // test sets, one per evaluation sigma
    let ts_dir = out.join("testsets");
    let mut testset_paths = Vec::new();
    for &sigma in &cfg.eval.test_sigmas {
        let ts = TestSet::generate(&spec, sigma, cfg.eval.episodes, cfg.eval.testset_seed);
        let path = ts_dir.join(format!("sigma_{sigma}.json"));
        write_file(&path, &ts.to_json())?;
        testset_paths.push((sigma, path));
    }

    // discover checkpoints: <ckpt_dir>/sigma_<s>/seed_<k>/final.bin
    struct Cell {
        train_sigma: f64,
        test_sigma: f64,
        ckpt: PathBuf,
        testset: PathBuf,
        out: PathBuf,
    }
    let mut cells = Vec::new();
    let entries = std::fs::read_dir(ckpt_dir).map_err(|e| CliError::io(ckpt_dir, e))?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(sigma_str) = name.strip_prefix("sigma_") else { continue };
        let Ok(train_sigma) = sigma_str.parse::<f64>() else { continue };
        let seeds = std::fs::read_dir(entry.path()).map_err(|e| CliError::io(&entry.path(), e))?;
        for seed_entry in seeds.flatten() {
            let seed_name = seed_entry.file_name().to_string_lossy().into_owned();
            if !seed_name.starts_with("seed_") {
                continue;
            }
            let ckpt = seed_entry.path().join("final.bin");
            if !ckpt.exists() {
                eprintln!("warning: no final.bin under {}", seed_entry.path().display());
                continue;
            }
            for (test_sigma, ts_path) in &testset_paths {
                cells.push(Cell {
                    train_sigma,
                    test_sigma: *test_sigma,
                    ckpt: ckpt.clone(),
                    testset: ts_path.clone(),
                    out: out.join(format!("cells/sigma_{train_sigma}/{seed_name}/test_{test_sigma}")),
                });
            }
        }
    }
    if cells.is_empty() {
        eprintln!("warning: no checkpoints found under {}", ckpt_dir.display());
    }

    // evaluate cells: in-process when jobs <= 1, child processes otherwise
    if jobs <= 1 {
        for cell in &cells {
            eval(&cell.ckpt, &cell.testset, Some(cell.train_sigma), false, &cell.out)?;
        }
    } else {
        let exe = std::env::current_exe().map_err(|e| CliError::Other(format!("current_exe: {e}")))?;
        let mut pending: std::collections::VecDeque<&Cell> = cells.iter().collect();
        let mut running: Vec<(std::process::Child, String)> = Vec::new();
        while !pending.is_empty() || !running.is_empty() {
            while running.len() < jobs {
                let Some(cell) = pending.pop_front() else { break };
                let child = std::process::Command::new(&exe)
                    .arg("eval")
                    .arg("--ckpt")
                    .arg(&cell.ckpt)
                    .arg("--testset")
                    .arg(&cell.testset)
                    .arg("--train-sigma")
                    .arg(format!("{}", cell.train_sigma))
                    .arg("--out")
                    .arg(&cell.out)
                    .stdout(std::process::Stdio::null())
                    .spawn()
                    .map_err(|e| CliError::Other(format!("spawn eval: {e}")))?;
                running.push((child, cell.out.display().to_string()));
            }
            if let Some((mut child, label)) = running.pop() {
                let status = child.wait().map_err(|e| CliError::Other(format!("wait: {e}")))?;
                if !status.success() {
                    return Err(CliError::Other(format!("cell {label} failed with {status}")));
                }
            }
        }
    }

    // pool per-seed reports into table cells
    let mut pooled = Vec::new();
    let mut train_sigmas: Vec<f64> = Vec::new();
    for cell in &cells {
        if !train_sigmas.iter().any(|&s| s == cell.train_sigma) {
            train_sigmas.push(cell.train_sigma);
        }
    }
    train_sigmas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &st in &train_sigmas {
        for &(te, _) in &testset_paths {
            let mut reports: Vec<EvalReport> = Vec::new();
            for cell in cells.iter().filter(|c| c.train_sigma == st && c.test_sigma == te) {
                let text = read_to_string(&cell.out.join("report.json"))?;
                let report: EvalReport =
                    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("cell report: {e}")))?;
                reports.push(report);
            }
            if let Some(cell) = pool_cell(&reports) {
                pooled.push(cell);
            } else {
                eprintln!("warning: cell (train {st}, test {te}) is empty, leaving it blank");
            }
        }
    }
    let csv = matrix_csv(&pooled, &train_sigmas, &cfg.eval.test_sigmas);
    write_file(&out.join("matrix.csv"), &csv)?;

    let mut flat = cfg.to_flat();
    flat.insert("ckpt_dir".into(), ckpt_dir.display().to_string());
    flat.insert("jobs".into(), format!("{jobs}"));
    let mut manifest = Manifest::new("matrix", flat);
    manifest.add_input(config_path).map_err(|e| CliError::io(config_path, e))?;
    manifest.write(out).map_err(|e| CliError::io(out, e))?;
    println!("wrote {}", out.join("matrix.csv").display());
    Ok(())
}

pub fn analyze(ckpt: &Path, testset_path: &Path, episodes: usize, out: &Path) -> CliResult {
    let policy = load_checkpoint(ckpt)?;
    if policy.kind() != PolicyKind::Dmap {
        return Err(CliError::Other(format!(
            "attention analysis needs a dmap checkpoint, got {}",
            policy.kind()
        )));
    }
    let test_set = load_testset(testset_path)?;
    let spec = EnvSpec::by_name(&test_set.env)?;
    if policy.env_name != spec.name {
        return Err(CliError::Other(format!(
            "checkpoint is for `{}`, test set is for `{}`",
            policy.env_name, spec.name
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let n = episodes.min(test_set.contexts.len()).max(1);
    let mut logs = Vec::with_capacity(n);
    for (i, ctx) in test_set.contexts.iter().take(n).enumerate() {
        let reset_seed = Rng::stream(test_set.seed, "analyze", &[i as u64]).next_u64();
        let episode = rollout::run_episode(&policy, &spec, ctx, reset_seed, true)?;
        logs.push(episode.log.expect("logging enabled"));
    }

    // steady attention map with channel labels
    let k_mean = steady_attention_map(&logs)?;
    let mut row_labels: Vec<&str> = spec.state_names.clone();
    row_labels.extend(spec.action_names.iter());
    let col_labels: Vec<&str> = spec.action_names.clone();
    let mut csv = CsvWriter::new(&{
        let mut h = vec!["channel"];
        h.extend(col_labels.iter().copied());
        h
    });
    let rows: Vec<Vec<f64>> = (0..row_labels.len())
        .map(|i| (0..col_labels.len()).map(|j| k_mean.at2(i, j)).collect())
        .collect();
    for (label, row) in row_labels.iter().zip(&rows) {
        let mut cells = vec![CsvCell::Str(label)];
        cells.extend(row.iter().map(|&v| CsvCell::Float(v)));
        csv.row(&cells);
    }
    write_file(&out.join("attention_map.csv"), &csv.finish())?;
    write_file(
        &out.join("attention_map.svg"),
        &heatmap("steady attention (mean K)", &row_labels, &col_labels, &rows),
    )?;

    // attention-dynamics embedding per episode
    for (i, log) in logs.iter().enumerate() {
        let records = log.attention.as_ref().expect("dmap log");
        let flat: Vec<Vec<f64>> = records.iter().map(|r| r.k.data().to_vec()).collect();
        if flat.len() < 4 {
            eprintln!("warning: episode {i} too short to embed");
            continue;
        }
        let pca = embed_pca(&flat, 3);
        let mut csv = CsvWriter::new(&["t", "dim1", "dim2", "dim3"]);
        for (t, p) in pca.projected.iter().enumerate() {
            csv.row(&[
                CsvCell::Int(t as i64),
                CsvCell::Float(p.first().copied().unwrap_or(0.0)),
                CsvCell::Float(p.get(1).copied().unwrap_or(0.0)),
                CsvCell::Float(p.get(2).copied().unwrap_or(0.0)),
            ]);
        }
        write_file(&out.join(format!("attention_embedding_ep{i}.csv")), &csv.finish())?;
        let points: Vec<(f64, f64)> = pca
            .projected
            .iter()
            .map(|p| (p.first().copied().unwrap_or(0.0), p.get(1).copied().unwrap_or(0.0)))
            .collect();
        let ev: Vec<String> = pca.explained_variance.iter().map(|v| format!("{:.2}", v)).collect();
        let plot = Plot::new(
            &format!("attention dynamics, episode {i} (explained: {})", ev.join(", ")),
            "component 1",
            "component 2",
        )
        .line("K trajectory", points);
        write_file(&out.join(format!("attention_embedding_ep{i}.svg")), &plot.render())?;
    }

    // tangling comparison across the logged morphologies
    let window = policy.config.history_len;
    let mut csv = CsvWriter::new(&["morphology", "q_attention", "q_observation", "q_action"]);
    let mut obs_pts = Vec::new();
    let mut act_pts = Vec::new();
    let mut comparisons = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        match compare_tangling(log, window) {
            Ok(c) => {
                csv.row(&[
                    CsvCell::Int(i as i64),
                    CsvCell::Float(c.attention),
                    CsvCell::Float(c.observation),
                    CsvCell::Float(c.action),
                ]);
                obs_pts.push((c.attention, c.observation));
                act_pts.push((c.attention, c.action));
                comparisons.push(c);
            }
            Err(e) => eprintln!("warning: episode {i}: {e}"),
        }
    }
    write_file(&out.join("tangling.csv"), &csv.finish())?;
    write_file(
        &out.join("tangling.json"),
        &serde_json::to_string_pretty(&comparisons).expect("comparisons serialize"),
    )?;
    let plot = Plot::new("trajectory tangling", "Q attention", "Q input signal")
        .scatter("observations", obs_pts)
        .scatter("actions", act_pts)
        .with_identity_line();
    write_file(&out.join("tangling.svg"), &plot.render())?;

    let mut config = BTreeMap::new();
    config.insert("ckpt".into(), ckpt.display().to_string());
    config.insert("testset".into(), testset_path.display().to_string());
    config.insert("episodes".into(), format!("{n}"));
    let mut manifest = Manifest::new("analyze", config);
    manifest.add_input(ckpt).map_err(|e| CliError::io(ckpt, e))?;
    manifest.add_input(testset_path).map_err(|e| CliError::io(testset_path, e))?;
    manifest.write(out).map_err(|e| CliError::io(out, e))?;
    println!("analysis artifacts in {}", out.display());
    Ok(())
}
