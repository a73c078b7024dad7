#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use typofix::alphabet::Alphabet;
use typofix::catalog::Catalog;
use typofix::index::build_index;
use typofix::model::{Checkpoint, ModelConfig, ModelParams};
use typofix_server::config::ServiceConfig;
use typofix_server::service::{spawn, AppState, Snapshot};

/// Small untrained model; enough to exercise the service end to end.
pub fn small_config(num_classes: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        hidden_size: 16,
        dense_size: 32,
        init_seed: seed,
        ..ModelConfig::desk(num_classes)
    }
}

/// Writes `<tag>.ckpt` and `<tag>.index` into `dir`.
pub fn write_pair(
    dir: &Path,
    tag: &str,
    config: &ModelConfig,
    catalog: &Catalog,
) -> (PathBuf, PathBuf) {
    let params = ModelParams::init(config).unwrap();
    let ckpt = Checkpoint {
        params,
        initial_loss: 0.0,
        loss_trace: Vec::new(),
    };
    let ckpt_path = dir.join(format!("{tag}.ckpt"));
    let digest = ckpt.write(&ckpt_path).unwrap();
    let index = build_index(&ckpt.params, &digest, catalog, &Alphabet::default()).unwrap();
    let index_path = dir.join(format!("{tag}.index"));
    std::fs::write(&index_path, index.save().unwrap()).unwrap();
    (ckpt_path, index_path)
}

pub fn catalog(n: usize) -> Catalog {
    typofix::fixtures::desk_catalog(&Alphabet::default(), n).unwrap()
}

/// Starts a service on an ephemeral port and returns its base URL.
pub async fn start(ckpt: &Path, index: &Path) -> (String, Arc<AppState>) {
    let snapshot = Snapshot::load(ckpt, index).unwrap();
    let config = ServiceConfig {
        checkpoint: ckpt.to_path_buf(),
        index: index.to_path_buf(),
        ..Default::default()
    };
    let state = AppState::new(snapshot, config);
    let (addr, _handle) = spawn(state.clone(), "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    (format!("http://{addr}"), state)
}
