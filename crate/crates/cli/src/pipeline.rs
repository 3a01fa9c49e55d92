//! Stage runner. Each stage reads its inputs from the artifacts directory
//! and writes its outputs there, so any stage can be rerun on its own.
//!
//! ```text
//! <out>/<name>-seed<seed>/
//!   stage.json                       completed stages, failure if any
//!   doc.json doc.csv                 doc
//!   trials.csv                       qn
//!   volumes.csv                      volumes (when configured)
//!   bounds.csv                       bounds
//!   report.json boxplot.csv comparison.csv doc.svg boxplot.svg comparison.svg
//! ```

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use doclab::bounds::{curves_to_csv, BoundCurve, BoundKind, BoundParams};
use doclab::data::{filter_binary, gen_gaussian_balanced, load_idx};
use doclab::doc::estimate_doc;
use doclab::erm::{sample_qn, sample_volume_pairs};
use doclab::sphere::streams;
use doclab::{
    derive_stream, Arch, DataSource, DocHistogram, DocSettings, EminPolicy, LabeledDataset, QnSettings, TrialRecord,
    VolumePair, VolumeSettings,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EminChoice, ExperimentConfig, ProblemConfig};
use crate::plot;
use crate::report::{build_report, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Doc,
    Qn,
    Volumes,
    Bounds,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Doc, Stage::Qn, Stage::Volumes, Stage::Bounds, Stage::Report];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Doc => "doc",
            Stage::Qn => "qn",
            Stage::Volumes => "volumes",
            Stage::Bounds => "bounds",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Core(#[from] doclab::Error),

    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

#[derive(Debug, Error)]
#[error("stage {stage} failed: {error}")]
pub struct StageFailure {
    pub stage: Stage,
    #[source]
    pub error: PipelineError,
}

type PResult<T> = Result<T, PipelineError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMarker {
    pub completed: Vec<Stage>,
    pub failed: Option<FailedStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedStage {
    pub stage: Stage,
    pub error: String,
}

/// Data a stage needs beyond the config: network, training-set source and
/// test set.
pub struct Prepared {
    pub arch: Arch,
    pub source: DataSource,
    pub test: LabeledDataset,
    pub dataset_id: String,
    pub e_min_policy: EminPolicy,
}

pub struct Pipeline {
    config: ExperimentConfig,
    dir: PathBuf,
}

fn write(path: &Path, contents: &str) -> PResult<()> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> PResult<String> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_csv<T>(path: &Path, header: &str, parse: impl Fn(&str) -> Option<T>) -> PResult<Vec<T>> {
    let text = read(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(PipelineError::Artifact {
            path: path.to_path_buf(),
            message: format!("expected header {header:?}"),
        });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            parse(line).ok_or_else(|| PipelineError::Artifact {
                path: path.to_path_buf(),
                message: format!("malformed row at line {}", i + 2),
            })
        })
        .collect()
}

impl Pipeline {
    /// Artifacts go to `<out_root>/<name>-seed<seed>`.
    pub fn new(config: ExperimentConfig, out_root: &Path) -> Self {
        let dir = out_root.join(format!("{}-seed{}", config.name, config.seed));
        Pipeline { config, dir }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn prepare(&self) -> PResult<Prepared> {
        let c = &self.config;
        let arch = c.arch();
        match &c.problem {
            ProblemConfig::Gaussian {
                test_size,
                random_labels,
                ..
            } => {
                let problem = c.gaussian_problem().expect("gaussian problem");
                let mut rng = derive_stream(c.seed, streams::id(streams::TEST_SET, 0, 0));
                let mut test = gen_gaussian_balanced(&problem, *test_size, &mut rng);
                let (source, analytic) = if *random_labels {
                    test = test.with_random_labels(&mut derive_stream(c.seed, streams::id(streams::RELABEL, 0, 0)));
                    (DataSource::RandomLabels(problem), 0.5)
                } else {
                    (DataSource::Gaussian(problem), problem.e_min())
                };
                let e_min_policy = match c.e_min_choice() {
                    EminChoice::Analytic => EminPolicy::Analytic { value: analytic },
                    EminChoice::Estimated => EminPolicy::Estimated,
                };
                let dataset_id = format!(
                    "gaussian(dim={},offset={},std={},test={}{})",
                    problem.dim,
                    problem.center_offset,
                    problem.class_std,
                    test_size,
                    if *random_labels { ",random-labels" } else { "" }
                );
                Ok(Prepared {
                    arch,
                    source,
                    test,
                    dataset_id,
                    e_min_policy,
                })
            }
            ProblemConfig::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                digits,
                train_per_class,
                test_per_class,
            } => {
                let (ti, tl) = load_idx(train_images, train_labels).map_err(doclab::Error::from)?;
                let (si, sl) = load_idx(test_images, test_labels).map_err(doclab::Error::from)?;
                let pool = filter_binary(&ti, &tl, digits[0], digits[1], *train_per_class)?;
                let test = filter_binary(&si, &sl, digits[0], digits[1], *test_per_class)?;
                if pool.dim() != arch.input_dim() {
                    return Err(doclab::Error::Shape {
                        expected: arch.input_dim(),
                        got: pool.dim(),
                    }
                    .into());
                }
                let dataset_id = format!(
                    "mnist({}v{},train={},test={})",
                    digits[0],
                    digits[1],
                    pool.len(),
                    test.len()
                );
                Ok(Prepared {
                    arch,
                    source: DataSource::Pool(pool),
                    test,
                    dataset_id,
                    e_min_policy: EminPolicy::Estimated,
                })
            }
        }
    }

    pub fn read_marker(&self) -> StageMarker {
        fs::read_to_string(self.path("stage.json"))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }

    fn write_marker(&self, marker: &StageMarker) -> PResult<()> {
        let mut s = serde_json::to_string_pretty(marker).expect("marker serializes");
        s.push('\n');
        write(&self.path("stage.json"), &s)
    }

    pub fn load_doc(&self) -> PResult<DocHistogram> {
        let path = self.path("doc.json");
        DocHistogram::from_json(&read(&path)?).map_err(|e| PipelineError::Artifact {
            path,
            message: e.to_string(),
        })
    }

    pub fn load_trials(&self) -> PResult<Vec<TrialRecord>> {
        parse_csv(
            &self.path("trials.csv"),
            TrialRecord::CSV_HEADER,
            TrialRecord::from_csv_row,
        )
    }

    pub fn load_volumes(&self) -> PResult<Vec<VolumePair>> {
        parse_csv(
            &self.path("volumes.csv"),
            VolumePair::CSV_HEADER,
            VolumePair::from_csv_row,
        )
    }

    pub fn stage_doc(&self, p: &Prepared) -> PResult<DocHistogram> {
        let c = &self.config;
        let settings = DocSettings {
            samples: c.doc.samples,
            bins: c.doc.bins,
            seed: c.seed,
            workers: c.workers,
            dataset_id: p.dataset_id.clone(),
        };
        let doc = estimate_doc(&p.arch, &p.test, &settings)?.with_policy(p.e_min_policy);
        let mut json = doc.to_json();
        json.push('\n');
        write(&self.path("doc.json"), &json)?;
        write(&self.path("doc.csv"), &doc.to_csv())?;
        Ok(doc)
    }

    pub fn stage_qn(&self, p: &Prepared) -> PResult<Vec<TrialRecord>> {
        let c = &self.config;
        let settings = QnSettings {
            trials: c.qn.trials_per_n,
            max_trials_each: c.qn.max_trials_each,
            seed: c.seed,
            workers: c.workers,
            record_timing: c.record_timing,
        };
        let mut all = Vec::new();
        let mut csv = format!("{}\n", TrialRecord::CSV_HEADER);
        for &n in &c.qn.n_values {
            let records = sample_qn(&p.arch, &p.source, &p.test, n, &settings)?;
            for r in &records {
                csv.push_str(&r.to_csv_row());
                csv.push('\n');
            }
            all.extend(records);
        }
        write(&self.path("trials.csv"), &csv)?;
        Ok(all)
    }

    pub fn stage_volumes(&self, p: &Prepared) -> PResult<Vec<VolumePair>> {
        let c = &self.config;
        let mut all = Vec::new();
        let mut csv = format!("{}\n", VolumePair::CSV_HEADER);
        if let Some(vol) = &c.volumes {
            let doc = self.load_doc()?;
            let settings = VolumeSettings {
                training_sets: vol.training_sets,
                probes: vol.probes,
                epsilons: vol.epsilons.clone(),
                e_min: doc.e_min(),
                seed: c.seed,
                workers: c.workers,
            };
            for &n in &vol.n_values {
                let pairs = sample_volume_pairs(&p.arch, &p.source, &p.test, n, &settings)?;
                for v in &pairs {
                    csv.push_str(&v.to_csv_row());
                    csv.push('\n');
                }
                all.extend(pairs);
            }
        }
        write(&self.path("volumes.csv"), &csv)?;
        Ok(all)
    }

    pub fn stage_bounds(&self) -> PResult<Vec<BoundCurve>> {
        let c = &self.config;
        let doc = self.load_doc()?;
        let ns: Vec<usize> = (0..=c.bound_n_max()).collect();
        let mut curves = vec![BoundCurve::compute(
            &doc,
            BoundKind::PredictedMeanError,
            BoundParams::default(),
            &ns,
        )?];
        let upper = 1.0 - doc.e_min();
        for &eps in c.bounds.epsilons.iter().filter(|&&e| e <= upper) {
            let p = BoundParams {
                epsilon: Some(eps),
                ..BoundParams::default()
            };
            curves.push(BoundCurve::compute(&doc, BoundKind::MeanBadVolume, p, &ns)?);
            curves.push(BoundCurve::compute(&doc, BoundKind::Ratio, p, &ns)?);
            for &a in &c.bounds.a_values {
                let pa = BoundParams { a: Some(a), ..p };
                curves.push(BoundCurve::compute(&doc, BoundKind::Corollary1Bound, pa, &ns)?);
                // the exponential form needs g_{eps/a} > 0
                if doc.g_epsilon(eps / a)? > 0.0 {
                    curves.push(BoundCurve::compute(&doc, BoundKind::Corollary1Exp, pa, &ns)?);
                }
            }
            for &gamma in &c.bounds.gammas {
                let pg = BoundParams {
                    gamma: Some(gamma),
                    ..p
                };
                curves.push(BoundCurve::compute(&doc, BoundKind::MarkovTail, pg, &ns)?);
            }
        }
        write(&self.path("bounds.csv"), &curves_to_csv(&curves))?;
        Ok(curves)
    }

    /// Builds `report.json` and the plot files from stored artifacts.
    pub fn stage_report(&self, wall_time_ms: Option<u64>) -> PResult<Report> {
        let doc = self.load_doc()?;
        let trials = self.load_trials()?;
        let volumes = if self.config.volumes.is_some() {
            self.load_volumes()?
        } else {
            Vec::new()
        };
        let report = build_report(&self.config, &doc, &trials, &volumes, wall_time_ms);
        let name = &self.config.name;
        write(&self.path("report.json"), &report.to_json())?;
        write(&self.path("boxplot.csv"), &plot::boxplot_csv(&report))?;
        write(&self.path("comparison.csv"), &plot::comparison_csv(&report))?;
        write(
            &self.path("doc.svg"),
            &plot::doc_svg(&doc, &format!("{name}: density of classifiers")),
        )?;
        write(
            &self.path("boxplot.svg"),
            &plot::boxplot_svg(&report, &format!("{name}: test error of zero-training-error solutions")),
        )?;
        write(
            &self.path("comparison.svg"),
            &plot::comparison_svg(&report, &format!("{name}: empirical vs predicted mean test error")),
        )?;
        Ok(report)
    }

    fn ensure_dir(&self) -> PResult<()> {
        fs::create_dir_all(&self.dir).map_err(|source| PipelineError::Io {
            path: self.dir.clone(),
            source,
        })
    }

    fn execute(&self, stage: Stage, prepared: &mut Option<Prepared>, started: Instant) -> PResult<Option<Report>> {
        if matches!(stage, Stage::Doc | Stage::Qn | Stage::Volumes) && prepared.is_none() {
            *prepared = Some(self.prepare()?);
        }
        match stage {
            Stage::Doc => self.stage_doc(prepared.as_ref().unwrap()).map(|_| None),
            Stage::Qn => self.stage_qn(prepared.as_ref().unwrap()).map(|_| None),
            Stage::Volumes => self.stage_volumes(prepared.as_ref().unwrap()).map(|_| None),
            Stage::Bounds => self.stage_bounds().map(|_| None),
            Stage::Report => self.stage_report(Some(started.elapsed().as_millis() as u64)).map(Some),
        }
    }

    /// Runs the given stages in order, recording progress in `stage.json`.
    /// A failure stops the run; completed artifacts stay in place.
    pub fn run_stages(&self, stages: &[Stage]) -> Result<Option<Report>, StageFailure> {
        let started = Instant::now();
        let fail = |stage, error| StageFailure { stage, error };
        self.ensure_dir().map_err(|e| fail(stages[0], e))?;
        let mut marker = self.read_marker();
        let mut prepared = None;
        let mut report = None;
        for &stage in stages {
            marker.completed.retain(|&s| s < stage);
            match self.execute(stage, &mut prepared, started) {
                Ok(r) => {
                    report = r.or(report);
                    marker.completed.push(stage);
                    marker.failed = None;
                    self.write_marker(&marker).map_err(|e| fail(stage, e))?;
                }
                Err(error) => {
                    marker.failed = Some(FailedStage {
                        stage,
                        error: error.to_string(),
                    });
                    // best effort: the original error matters more
                    let _ = self.write_marker(&marker);
                    return Err(fail(stage, error));
                }
            }
        }
        Ok(report)
    }

    /// Full pipeline starting at `from`; earlier stages are taken from the
    /// artifacts directory.
    pub fn run_from(&self, from: Stage) -> Result<Report, StageFailure> {
        let stages: Vec<Stage> = Stage::ALL.into_iter().filter(|&s| s >= from).collect();
        Ok(self.run_stages(&stages)?.expect("report stage ran"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("plot".parse::<Stage>().is_err());
    }
}
