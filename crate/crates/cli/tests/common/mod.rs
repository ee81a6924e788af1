#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn polyfuse(root: &Path, args: &[&str]) -> Output {
    polyfuse_env(root, args, &[])
}

pub fn polyfuse_env(root: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polyfuse"));
    cmd.arg("--root").arg(root).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("POLYFUSE_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small models that train in well under a second on the synthetic
/// corpora.
pub fn small_config(embedding_dim: usize) -> String {
    format!(
        r#"[features]
visual_shape = [4, 8, 8]

[models.audio]
hidden = [32, 16]
[models.audio.training]
learning_rate = 0.01
batch_size = 8
epochs = 40
patience = 10

[models.visual]
input = [4, 8, 8]
padding = "same"
layers = [
  {{ kind = "conv3d", filters = 4, kernel = [2, 2, 2] }},
  {{ kind = "conv3d", filters = 4, kernel = [2, 2, 2] }},
  {{ kind = "max_pool3d", pool = [1, 2, 2] }},
  {{ kind = "conv3d", filters = 4, kernel = [2, 2, 2] }},
  {{ kind = "max_pool3d", pool = [2, 2, 2] }},
  {{ kind = "conv3d", filters = 4, kernel = [2, 2, 2] }},
  {{ kind = "max_pool3d", pool = [1, 2, 2] }},
  {{ kind = "dense", units = 16 }},
  {{ kind = "dense", units = 8 }},
  {{ kind = "dense", units = 2 }},
]
[models.visual.training]
learning_rate = 0.01
batch_size = 8
epochs = 30
patience = 10

[models.text]
recurrent_layers = [8]
input_dim = {embedding_dim}
dense_layers = [{{ neurons = 8, activation = "relu" }}]
[models.text.training]
learning_rate = 0.01
batch_size = 8
epochs = 30
patience = 10
"#
    )
}

/// A 60-utterance separable corpus plus the small config under `root`.
pub fn small_corpus(root: &Path) {
    let o = polyfuse(root, &["synth", "--utterances", "60", "--speakers", "6", "--embedding-dim", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(root.join("polyfuse.toml"), small_config(16)).unwrap();
}
