use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use fedceo::learner::{synth_blobs_with_test, Dataset};
use fedceo::protocol::DataSource;

use crate::error::{CliError, Result};
use crate::run::load_config;

fn write(path: &Path, data: &Dataset) -> Result<()> {
    let f = File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut w = BufWriter::new(f);
    data.write_text(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path.display(), e))
}

pub fn run(config: Option<&Path>, overrides: &[String], out: &Path) -> Result<()> {
    let cfg = load_config(config, overrides)?;
    let (spec, test_per_class) = match (&cfg.data, cfg.data.blob_spec(cfg.seed)) {
        (DataSource::Blobs { test_per_class, .. }, Some(spec)) => (spec, *test_per_class),
        _ => return Err(CliError::Config("gen-data needs data = blobs".into())),
    };
    let (train, test) = synth_blobs_with_test(&spec, test_per_class).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    write(&out.join("train.txt"), &train)?;
    write(&out.join("test.txt"), &test)?;
    eprintln!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}
