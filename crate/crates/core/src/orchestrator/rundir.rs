//! On-disk run directory: config, checkpoint state, per-iteration snapshots,
//! trace, transcript and report. Nothing here records wall-clock time.

use std::fs;
use std::path::{Path, PathBuf};

use super::{OrchestratorError, Phase, Result, RunState, TranscriptEntry};
use crate::config::RunConfig;
use crate::gap::SearchChain;

fn io(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// A fresh directory; an existing non-empty one is refused unless `force`.
    pub fn create(root: &Path, force: bool) -> Result<Self> {
        if root.exists() {
            let non_empty = fs::read_dir(root).map_err(|e| io(root, e))?.next().is_some();
            if non_empty && !force {
                return Err(OrchestratorError::Io(format!("{} exists; pass --force to overwrite", root.display())));
            }
            if non_empty {
                fs::remove_dir_all(root).map_err(|e| io(root, e))?;
            }
        }
        fs::create_dir_all(root.join("iterations")).map_err(|e| io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn open(root: &Path) -> Result<Self> {
        if !root.join("state.json").is_file() || !root.join("config.json").is_file() {
            return Err(OrchestratorError::Io(format!("{} is not a run directory", root.display())));
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn iter_dir(&self, n: usize) -> PathBuf {
        self.root.join("iterations").join(format!("iter_{n:03}"))
    }

    pub fn write_config(&self, cfg: &RunConfig) -> Result<()> {
        write(&self.root.join("config.json"), &(cfg.to_json() + "\n"))
    }

    pub fn read_config(&self) -> Result<RunConfig> {
        let p = self.root.join("config.json");
        let cfg: RunConfig = serde_json::from_str(&read(&p)?).map_err(|e| io(&p, e))?;
        cfg.validate().map_err(|e| OrchestratorError::Validation(e.to_string()))?;
        Ok(cfg)
    }

    pub fn read_state(&self) -> Result<RunState> {
        RunState::from_json(&read(&self.root.join("state.json"))?)
    }

    pub fn read_transcript(&self) -> Result<Vec<TranscriptEntry>> {
        let p = self.root.join("transcript.jsonl");
        if !p.exists() {
            return Ok(Vec::new());
        }
        read(&p)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| io(&p, e)))
            .collect()
    }

    pub fn write_transcript(&self, transcript: &[TranscriptEntry]) -> Result<()> {
        let mut text = String::new();
        for t in transcript {
            text.push_str(&serde_json::to_string(t).expect("transcript entry"));
            text.push('\n');
        }
        write(&self.root.join("transcript.jsonl"), &text)
    }

    /// State, trace, transcript and the snapshot of the current iteration.
    pub fn checkpoint(&self, s: &RunState, transcript: &[TranscriptEntry]) -> Result<()> {
        let dir = self.iter_dir(s.iteration);
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        write(&dir.join("outline.txt"), &(s.og.render(true) + "\n"))?;
        if let Some(kg) = &s.kg {
            write(&dir.join("kg.json"), &(kg.to_json() + "\n"))?;
        }
        write(&dir.join("bank.json"), &(s.bank.to_json() + "\n"))?;
        if let Some(r) = s.rounds.get(s.iteration) {
            let doc = serde_json::json!({"queries": r.queries, "evidence": r.evidence, "selected_chains": r.selected_chains});
            write(&dir.join("queries.json"), &(serde_json::to_string_pretty(&doc).unwrap() + "\n"))?;
        }
        // Chains built from the previous iteration's graph belong with it.
        if s.iteration >= 1 && s.kg.is_some() {
            if let Some(r) = s.rounds.get(s.iteration) {
                let prev = self.iter_dir(s.iteration - 1);
                fs::create_dir_all(&prev).map_err(|e| io(&prev, e))?;
                write(&prev.join("chains.json"), &(serde_json::to_string_pretty(&r.chains).unwrap() + "\n"))?;
            }
        }
        write(&self.root.join("trace.json"), &(serde_json::to_string_pretty(&s.trace).unwrap() + "\n"))?;
        self.write_transcript(transcript)?;
        write(&self.root.join("state.json"), &(s.to_json() + "\n"))
    }

    pub fn write_report(&self, report: &str) -> Result<PathBuf> {
        let p = self.root.join("report.md");
        write(&p, report)?;
        Ok(p)
    }

    pub fn is_reported(&self) -> Result<bool> {
        Ok(self.read_state()?.phase == Phase::Reported)
    }

    pub fn read_outline(&self, n: usize) -> Result<String> {
        read(&self.iter_dir(n).join("outline.txt"))
    }

    pub fn read_kg(&self, n: usize) -> Result<String> {
        let p = self.iter_dir(n).join("kg.json");
        if !p.exists() {
            return Err(OrchestratorError::Validation(format!("no knowledge graph at iteration {n}")));
        }
        read(&p)
    }

    pub fn read_chains(&self, n: usize) -> Result<Vec<SearchChain>> {
        let p = self.iter_dir(n).join("chains.json");
        if !p.exists() {
            return Err(OrchestratorError::Validation(format!("no chains recorded for iteration {n}")));
        }
        serde_json::from_str(&read(&p)?).map_err(|e| io(&p, e))
    }

    /// Highest iteration with a snapshot.
    pub fn last_iteration(&self) -> Result<usize> {
        Ok(self.read_state()?.iteration)
    }
}
