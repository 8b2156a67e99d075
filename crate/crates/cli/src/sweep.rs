//! Runs every `*.conf` in a directory, optionally in parallel.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::experiment::{run_experiment, CliError, OutputPaths, RunReportFile};

pub struct SweepItem {
    pub config: PathBuf,
    pub outcome: Result<RunReportFile, CliError>,
}

pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .collect();
    files.sort();
    Ok(files)
}

/// Each config writes into `out_dir/<config stem>/`. Results come back in
/// file-name order regardless of `jobs`.
pub fn sweep(dir: &Path, out_dir: &Path, jobs: usize) -> Result<Vec<SweepItem>, CliError> {
    let files = config_files(dir)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReportFile, CliError>>>> =
        Mutex::new((0..files.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(files.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(path) = files.get(i) else { break };
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let outcome = run_experiment(path, Some(OutputPaths::in_dir(&out_dir.join(stem))));
                results.lock().expect("no panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let results = results.into_inner().expect("workers joined");
    Ok(files
        .into_iter()
        .zip(results)
        .map(|(config, r)| SweepItem { config, outcome: r.expect("every file processed") })
        .collect())
}
