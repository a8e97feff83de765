//! The run manifest: a plain-text record written next to every batch of
//! artifacts, holding the full configuration, every derived task seed,
//! the artifact list, and wall-clock timings. The configuration and
//! seed sections alone are sufficient to reproduce the run bit for bit;
//! the timing section is informational and varies between runs.

use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiments::{LabelledSeed, TaskFailure};

#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    config: ExperimentConfig,
    task_seeds: Vec<LabelledSeed>,
    artifacts: Vec<String>,
    timings: Vec<(String, u128)>,
    failures: Vec<TaskFailure>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        ManifestBuilder {
            command: command.to_owned(),
            config: config.clone(),
            task_seeds: Vec::new(),
            artifacts: Vec::new(),
            timings: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn seeds(&mut self, seeds: &[LabelledSeed]) -> &mut Self {
        self.task_seeds.extend_from_slice(seeds);
        self
    }

    pub fn artifact(&mut self, name: &str) -> &mut Self {
        self.artifacts.push(name.to_owned());
        self
    }

    pub fn timing(&mut self, phase: &str, elapsed: std::time::Duration) -> &mut Self {
        self.timings.push((phase.to_owned(), elapsed.as_millis()));
        self
    }

    pub fn failures(&mut self, failures: &[TaskFailure]) -> &mut Self {
        self.failures.extend(failures.iter().cloned());
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[run]\n");
        out.push_str(&format!("command={}\n", self.command));
        out.push_str(&format!("config_hash={}\n", self.config.hash()));
        out.push_str(&format!("seed={}\n", self.config.seed));

        out.push_str("\n[config]\n");
        for line in self.config.canonical_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!("jobs={}\n", self.config.jobs));
        out.push_str(&format!(
            "output_dir={}\n",
            self.config.output_dir.display()
        ));

        out.push_str("\n[task_seeds]\n");
        for (label, seed) in &self.task_seeds {
            out.push_str(&format!("{label}={seed}\n"));
        }

        out.push_str("\n[artifacts]\n");
        for artifact in &self.artifacts {
            out.push_str(artifact);
            out.push('\n');
        }

        out.push_str("\n[timings]\n");
        for (phase, ms) in &self.timings {
            out.push_str(&format!("{phase}_ms={ms}\n"));
        }

        if !self.failures.is_empty() {
            out.push_str("\n[errors]\n");
            for failure in &self.failures {
                out.push_str(&format!("{}: {}\n", failure.task, failure.message));
            }
        }
        out
    }

    /// Writes `manifest.txt` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_carries_every_section_in_order() {
        let config = ExperimentConfig::default();
        let mut builder = ManifestBuilder::new("uniqueness", &config);
        builder
            .seeds(&[("challenges".into(), 7)])
            .artifact("uniqueness_metrics.csv")
            .timing("evaluate", std::time::Duration::from_millis(1234))
            .failures(&[crate::experiments::TaskFailure {
                task: "device/3".into(),
                message: "did not settle".into(),
            }]);
        let text = builder.render();
        let sections: Vec<usize> = ["[run]", "[config]", "[task_seeds]", "[artifacts]", "[timings]", "[errors]"]
            .iter()
            .map(|s| text.find(s).expect(s))
            .collect();
        assert!(sections.windows(2).all(|w| w[0] < w[1]), "sections in order");
        assert!(text.contains(&format!("config_hash={}", config.hash())));
        assert!(text.contains("challenges=7"));
        assert!(text.contains("evaluate_ms=1234"));
        assert!(text.contains("device/3: did not settle"));
    }
}
