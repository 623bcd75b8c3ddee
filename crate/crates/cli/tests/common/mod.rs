#![allow(dead_code)]

use std::fmt::Write;
use std::path::{Path, PathBuf};

use imlp_cli::commands::cmd_prep;
use imlp_cli::config::RunConfig;

/// Writes a two-class table with a numeric signal, a noisy numeric column
/// with gaps and a categorical column, plus its schema.
pub fn write_dataset(dir: &Path, n_rows: usize) -> (PathBuf, PathBuf) {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut csv = String::from("x1,x2,shade,label\n");
    for _ in 0..n_rows {
        let pos = next() < 0.4;
        let x1 = if pos { 1.2 } else { -0.8 } + (next() - 0.5) * 2.0;
        let x2 = if next() < 0.05 { String::new() } else { format!("{:.4}", next() * 3.0) };
        let shade = ["light", "dark", "mid"][(next() * 3.0) as usize % 3];
        writeln!(csv, "{x1:.5},{x2},{shade},{}", if pos { "pos" } else { "neg" }).unwrap();
    }
    let table = dir.join("table.csv");
    let schema = dir.join("schema.toml");
    std::fs::write(&table, csv).unwrap();
    std::fs::write(
        &schema,
        "version = 1\ntarget = \"label\"\nlabels = [\"neg\", \"pos\"]\n\n[[columns]]\nname = \"x1\"\nkind = \"numeric\"\n\n[[columns]]\nname = \"x2\"\nkind = \"numeric\"\n\n[[columns]]\nname = \"shade\"\nkind = \"categorical\"\n",
    )
    .unwrap();
    (table, schema)
}

/// Prepared dataset plus a small, fast run configuration writing to `out`.
pub fn small_run(dir: &Path, n_rows: usize, out: &str) -> RunConfig {
    let (table, schema) = write_dataset(dir, n_rows);
    let prep = cmd_prep(&table, &schema, &dir.join("prep"), 42).unwrap();
    let mut cfg = RunConfig::new(prep.manifest_path);
    cfg.out_dir = dir.join(out);
    cfg.seeds = vec![7];
    cfg.model.d_h = 8;
    cfg.model.d_ff = 16;
    cfg.model.window = 3;
    cfg.train.epochs_per_segment = 2;
    cfg.train.batch_size = 32;
    cfg
}
