//! Files under the runs directory: one replay log per run, plus the shared
//! `races.jsonl` leaderboard.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use blimp_core::console::RaceRow;
use blimp_core::replay::LogLine;

pub const RACES_FILE: &str = "races.jsonl";

enum Line {
    Log(String),
    Race(String),
}

/// Appends lines from a dedicated thread so the sim loop never touches disk.
pub struct RunWriter {
    tx: Option<mpsc::Sender<Line>>,
    thread: Option<JoinHandle<io::Result<()>>>,
    log_path: PathBuf,
    races_path: PathBuf,
}

fn create_log(dir: &Path, seed: u64) -> io::Result<(PathBuf, File)> {
    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    for n in 0u32.. {
        let name = match n {
            0 => format!("run-{unix}-{seed}.jsonl"),
            n => format!("run-{unix}-{seed}-{n}.jsonl"),
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => return Ok((path, file)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

impl RunWriter {
    pub fn create(dir: &Path, seed: u64) -> io::Result<RunWriter> {
        fs::create_dir_all(dir)?;
        let (log_path, log) = create_log(dir, seed)?;
        let races_path = dir.join(RACES_FILE);
        let races = OpenOptions::new().create(true).append(true).open(&races_path)?;
        let (tx, rx) = mpsc::channel::<Line>();
        let thread = std::thread::Builder::new().name("runs-writer".into()).spawn(move || {
            let mut log = BufWriter::new(log);
            let mut races = BufWriter::new(races);
            while let Ok(first) = rx.recv() {
                let mut next = Some(first);
                while let Some(line) = next {
                    match line {
                        Line::Log(s) => writeln!(log, "{s}")?,
                        Line::Race(s) => writeln!(races, "{s}")?,
                    }
                    next = rx.try_recv().ok();
                }
                log.flush()?;
                races.flush()?;
            }
            log.flush()?;
            races.flush()
        })?;
        Ok(RunWriter { tx: Some(tx), thread: Some(thread), log_path, races_path })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn races_path(&self) -> &Path {
        &self.races_path
    }

    fn send(&self, line: Line) {
        if let Some(tx) = &self.tx {
            if tx.send(line).is_err() {
                tracing::error!("runs writer has stopped; output is incomplete");
            }
        }
    }

    pub fn log(&self, line: &LogLine) {
        self.send(Line::Log(line.to_json()));
    }

    pub fn race(&self, row: &RaceRow) {
        self.send(Line::Race(serde_json::to_string(row).expect("race rows serialize")));
    }

    /// Close both files, waiting for queued lines to land.
    pub fn finish(mut self) -> io::Result<()> {
        self.close()
    }

    fn close(&mut self) -> io::Result<()> {
        self.tx.take();
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("runs writer panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunWriter {
    fn drop(&mut self) {
        if let Err(e) = self.close() {
            tracing::error!("runs writer: {e}");
        }
    }
}

/// Rows from an existing leaderboard. Unreadable lines are skipped.
pub fn read_races(path: &Path) -> io::Result<Vec<RaceRow>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(row) => rows.push(row),
            Err(e) => tracing::warn!("{}:{}: skipping race row: {e}", path.display(), i + 1),
        }
    }
    Ok(rows)
}
