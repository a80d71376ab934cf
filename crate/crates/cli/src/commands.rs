//! The four subcommands. Each writes its artifacts plus the resolved
//! configuration into the output directory and returns a short summary.

use std::fs;
use std::path::Path;

use gcmt_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Network};
use gcmt_core::synthdata::{generate_domain, read_dataset, write_dataset, SyntheticDataset};
use gcmt_core::trainer::{
    classification_accuracy, dense_labels, evaluate_network, pretrain_source, train_with_observer,
};

use crate::config::{ExperimentConfig, RESOLVED_CONFIG};
use crate::error::CliError;

fn prepare_out(cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(cfg.out.clone(), e.to_string()))?;
    let path = cfg.out.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_text()).map_err(|e| CliError::Io(path, e.to_string()))
}

fn require(role: &'static str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            role,
            path: path.to_path_buf(),
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))
}

fn load_models(paths: &[std::path::PathBuf]) -> Result<Vec<Network>, CliError> {
    paths
        .iter()
        .map(|p| Ok(load_checkpoint(p)?.into_model()))
        .collect()
}

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<String, CliError> {
    prepare_out(cfg)?;
    let mut summary = Vec::new();
    for spec in &cfg.domains {
        let ds = generate_domain(spec)?;
        let path = cfg.out.join(format!("{}.csv", spec.name));
        write_dataset(&ds, &path)?;
        summary.push(format!("{} samples -> {}", ds.len(), path.display()));
    }
    Ok(summary.join("\n"))
}

pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = &cfg.pretrain;
    require("pretraining dataset", &p.dataset)?;
    prepare_out(cfg)?;
    let ds = read_dataset(&p.dataset)?;
    let all = ds.all();
    let mut config = p.config.clone();
    config.dims = vec![ds.input_dim, p.hidden, p.feature_dim];
    let out = pretrain_source(&all.features, &all.identities, &config)?;
    save_checkpoint(&Checkpoint::Model(out.network.clone()), &p.output)?;
    let (labels, _) = dense_labels(&all.identities);
    let acc = classification_accuracy(&out.network, &all.features, &labels)?;
    let last = out.loss_history.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "pretrained {} epochs: final loss {last:.6}, train accuracy {acc:.4} -> {}",
        config.epochs,
        p.output.display()
    ))
}

pub fn cmd_adapt(cfg: &ExperimentConfig) -> Result<String, CliError> {
    cmd_adapt_with_progress(cfg, |_| {})
}

/// [`cmd_adapt`] reporting one line per finished epoch.
pub fn cmd_adapt_with_progress(cfg: &ExperimentConfig, mut progress: impl FnMut(&str)) -> Result<String, CliError> {
    let a = &cfg.adapt;
    require("target dataset", &a.dataset)?;
    for c in &a.checkpoints {
        require("checkpoint", c)?;
    }
    prepare_out(cfg)?;
    let target: SyntheticDataset = read_dataset(&a.dataset)?;
    let nets = load_models(&a.checkpoints)?;
    let outcome = train_with_observer(&a.config, &nets, &target, |_, r| {
        let best = r.best_teacher.map_or(String::from("-"), |b| format!("{:.4}", r.teachers[b].map));
        progress(&format!(
            "epoch {} l_total {:.4} best teacher mAP {best}",
            r.epoch, r.losses.l_total
        ));
    })?;
    write_text(&a.metrics, &outcome.log.to_csv())?;
    let mut written = vec![a.metrics.display().to_string()];
    for pair in &outcome.pairs {
        let path = cfg.out.join(format!("pair_{}.ckpt", pair.pair_id));
        save_checkpoint(&Checkpoint::Pair(pair.clone()), &path)?;
        written.push(path.display().to_string());
    }
    let best = outcome
        .log
        .final_best_map()
        .map_or(String::from("n/a"), |m| format!("{m:.6}"));
    Ok(format!("best teacher mAP {best}; wrote {}", written.join(", ")))
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let e = &cfg.eval;
    require("evaluation dataset", &e.dataset)?;
    for c in &e.checkpoints {
        require("checkpoint", c)?;
    }
    prepare_out(cfg)?;
    let ds = read_dataset(&e.dataset)?;
    let nets = load_models(&e.checkpoints)?;
    let mut text = String::new();
    for (path, net) in e.checkpoints.iter().zip(&nets) {
        let r = evaluate_network(net, &ds)?;
        text.push_str(&format!("checkpoint = {}\n", path.display()));
        text.push_str(&r.to_text());
    }
    write_text(&e.output, &text)?;
    Ok(text)
}
