//! Flat key=value study configuration files.
//!
//! Lines hold `key = value`; `#` starts a comment. Unknown keys are rejected
//! with their line number. `--set key=value` overrides file values. The
//! effective configuration is echoed into the run manifest.
//!
//! Keys:
//!   scenario              all_normal | e_skew | ve_skew | custom   (required)
//!   beta                  comma list, custom scenario only
//!   sigma_u sigma_v sigma_e   custom scenario only
//!   lambda_u lambda_v lambda_e custom scenario only (default 0)
//!   case                  case1 | case2 | custom        (default case1)
//!   m_d n_dj              custom case only
//!   areas subareas_per_area units_per_subarea   layout (default 40 10 50)
//!   I B                   replicates / censuses (default 200 / 100)
//!   estimators            comma list of ELL MELL1 MELL2 ELL1
//!   alphas                comma list of 0 1 2 (default 0,1)
//!   seed                  u64, required
//!   poverty_line_policy   per_population | fixed_reference
//!   poverty_line_fraction default 0.6
//!   sample_policy         redraw | fixed
//!   workers               thread count (default: available parallelism)
//!   out                   output directory (default "out")

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use simcensus::dist::SkewNormalSpec;
use simcensus::population::PopulationLayout;
use simcensus::sampling::SamplingDesign;
use simcensus::simulator::EstimatorKind;
use simcensus::study::{PovertyLinePolicy, SamplePolicy, ScenarioSpec, StudyConfig};

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "beta",
    "sigma_u",
    "sigma_v",
    "sigma_e",
    "lambda_u",
    "lambda_v",
    "lambda_e",
    "case",
    "m_d",
    "n_dj",
    "areas",
    "subareas_per_area",
    "units_per_subarea",
    "I",
    "B",
    "estimators",
    "alphas",
    "seed",
    "poverty_line_policy",
    "poverty_line_fraction",
    "sample_policy",
    "workers",
    "out",
];

/// Raw key-value view of a configuration: file values plus overrides, with
/// provenance for error messages.
#[derive(Debug, Clone, Default)]
pub struct RunConfigFile {
    values: BTreeMap<String, String>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {line_no}: expected 'key = value', got '{raw}'"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {line_no}: unknown key '{key}'"
                )));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(CliError::Usage(format!(
                    "config line {line_no}: key '{key}' given twice"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Apply one `--set key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects KEY=VALUE, got '{assignment}'"
            )));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("--set: unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("config key '{key}': invalid value '{raw}'"))
            }),
        }
    }

    fn require_absent_for(&self, keys: &[&str], reason: &str) -> Result<(), CliError> {
        for key in keys {
            if self.values.contains_key(*key) {
                return Err(CliError::Usage(format!(
                    "config key '{key}' conflicts with {reason}"
                )));
            }
        }
        Ok(())
    }

    /// Resolve into a study configuration plus the output directory.
    pub fn resolve(&self) -> Result<(StudyConfig, PathBuf), CliError> {
        let scenario_name = self
            .get("scenario")
            .ok_or_else(|| CliError::Usage("missing key 'scenario'".into()))?;
        let scenario = match scenario_name {
            "custom" => {
                let beta: Vec<f64> = self
                    .get("beta")
                    .ok_or_else(|| CliError::Usage("custom scenario: missing key 'beta'".into()))?
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| CliError::Usage(format!("beta: bad entry '{s}'")))
                    })
                    .collect::<Result<_, _>>()?;
                let sd = |key: &str| -> Result<f64, CliError> {
                    self.parsed::<f64>(key)?
                        .ok_or_else(|| CliError::Usage(format!("custom scenario: missing key '{key}'")))
                };
                let shape = |key: &str| -> Result<f64, CliError> {
                    Ok(self.parsed::<f64>(key)?.unwrap_or(0.0))
                };
                let spec = |sd_val: f64, shape_val: f64, what: &str| {
                    SkewNormalSpec::new(shape_val, sd_val)
                        .map_err(|e| CliError::Usage(format!("{what}: {e}")))
                };
                ScenarioSpec {
                    name: "custom".into(),
                    beta,
                    area_effect: spec(sd("sigma_u")?, shape("lambda_u")?, "area effect")?,
                    subarea_effect: spec(sd("sigma_v")?, shape("lambda_v")?, "subarea effect")?,
                    unit_error: spec(sd("sigma_e")?, shape("lambda_e")?, "unit error")?,
                }
            }
            name => {
                let preset = ScenarioSpec::preset(name).ok_or_else(|| {
                    CliError::Usage(format!(
                        "scenario '{name}' is not all_normal, e_skew, ve_skew or custom"
                    ))
                })?;
                self.require_absent_for(
                    &["beta", "sigma_u", "sigma_v", "sigma_e", "lambda_u", "lambda_v", "lambda_e"],
                    &format!("scenario preset '{name}'"),
                )?;
                preset
            }
        };

        let areas = self.parsed::<usize>("areas")?.unwrap_or(40);
        let subareas = self.parsed::<usize>("subareas_per_area")?.unwrap_or(10);
        let units = self.parsed::<usize>("units_per_subarea")?.unwrap_or(50);
        let layout = PopulationLayout::uniform(areas, subareas, units)
            .map_err(|e| CliError::Usage(format!("layout: {e}")))?;

        let case_name = self.get("case").unwrap_or("case1");
        let (design, case_label) = match case_name {
            "case1" => {
                self.require_absent_for(&["m_d", "n_dj"], "case preset 'case1'")?;
                (SamplingDesign::uniform(areas, subareas, 10), "case1".to_string())
            }
            "case2" => {
                self.require_absent_for(&["m_d", "n_dj"], "case preset 'case2'")?;
                (
                    SamplingDesign::uniform(areas, (subareas + 1) / 2, 20),
                    "case2".to_string(),
                )
            }
            "custom" => {
                let m = self
                    .parsed::<usize>("m_d")?
                    .ok_or_else(|| CliError::Usage("custom case: missing key 'm_d'".into()))?;
                let n = self
                    .parsed::<usize>("n_dj")?
                    .ok_or_else(|| CliError::Usage("custom case: missing key 'n_dj'".into()))?;
                (SamplingDesign::uniform(areas, m, n), format!("m{m}_n{n}"))
            }
            other => {
                return Err(CliError::Usage(format!(
                    "case '{other}' is not case1, case2 or custom"
                )))
            }
        };

        let estimators = match self.get("estimators") {
            None => vec![EstimatorKind::Ell, EstimatorKind::Mell1, EstimatorKind::Mell2],
            Some(raw) => raw
                .split(',')
                .map(|name| {
                    EstimatorKind::parse(name)
                        .ok_or_else(|| CliError::Usage(format!("estimators: unknown '{name}'")))
                })
                .collect::<Result<_, _>>()?,
        };
        let alphas = match self.get("alphas") {
            None => vec![0u8, 1],
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u8>()
                        .map_err(|_| CliError::Usage(format!("alphas: bad entry '{s}'")))
                })
                .collect::<Result<_, _>>()?,
        };

        let seed = self
            .parsed::<u64>("seed")?
            .ok_or_else(|| CliError::Usage("missing key 'seed'".into()))?;

        let poverty_line_policy = match self.get("poverty_line_policy") {
            None => PovertyLinePolicy::PerPopulation,
            Some(raw) => PovertyLinePolicy::parse(raw).ok_or_else(|| {
                CliError::Usage(format!(
                    "poverty_line_policy '{raw}' is not per_population or fixed_reference"
                ))
            })?,
        };
        let sample_policy = match self.get("sample_policy") {
            None => SamplePolicy::RedrawPerReplicate,
            Some(raw) => SamplePolicy::parse(raw).ok_or_else(|| {
                CliError::Usage(format!("sample_policy '{raw}' is not redraw or fixed"))
            })?,
        };

        let config = StudyConfig {
            scenario,
            layout,
            design,
            case_label,
            replicates: self.parsed::<usize>("I")?.unwrap_or(200),
            censuses: self.parsed::<usize>("B")?.unwrap_or(100),
            estimators,
            alphas,
            seed,
            poverty_line_policy,
            poverty_line_fraction: self.parsed::<f64>("poverty_line_fraction")?.unwrap_or(0.6),
            sample_policy,
            workers: self.parsed::<usize>("workers")?,
        };
        let out = PathBuf::from(self.get("out").unwrap_or("out"));
        Ok((config, out))
    }

    /// Effective key=value lines for the run manifest.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            let _ = writeln!(out, "config.{key}={value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfigFile::parse("scenario = e_skew\nseed = 7\n").unwrap();
        let (study, out) = cfg.resolve().unwrap();
        assert_eq!(study.scenario.name, "e_skew");
        assert_eq!(study.replicates, 200);
        assert_eq!(study.censuses, 100);
        assert_eq!(study.seed, 7);
        assert_eq!(out, PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let err = RunConfigFile::parse("scenario = e_skew\nbogus = 1\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2"), "{text}");
        assert!(text.contains("bogus"), "{text}");
    }

    #[test]
    fn missing_seed_is_named() {
        let cfg = RunConfigFile::parse("scenario = e_skew\n").unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn preset_conflicts_are_rejected() {
        let cfg = RunConfigFile::parse("scenario = e_skew\nsigma_u = 0.4\nseed = 1\n").unwrap();
        assert!(cfg.resolve().is_err());
        let cfg = RunConfigFile::parse("scenario = e_skew\ncase = case1\nm_d = 3\nseed = 1\n")
            .unwrap();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn custom_scenario_and_case() {
        let text = "scenario = custom\nbeta = 1.0, 0.5\nsigma_u = 0.3\nsigma_v = 0.2\nsigma_e = 0.4\nlambda_e = 2\ncase = custom\nm_d = 2\nn_dj = 5\nareas = 4\nsubareas_per_area = 3\nunits_per_subarea = 10\nseed = 3\n";
        let cfg = RunConfigFile::parse(text).unwrap();
        let (study, _) = cfg.resolve().unwrap();
        assert_eq!(study.scenario.beta, vec![1.0, 0.5]);
        assert_eq!(study.scenario.unit_error.shape(), 2.0);
        assert_eq!(study.case_label, "m2_n5");
        assert_eq!(study.layout.areas(), 4);
    }

    #[test]
    fn set_overrides_file_values() {
        let mut cfg = RunConfigFile::parse("scenario = e_skew\nseed = 1\nI = 50\n").unwrap();
        cfg.set("I=7").unwrap();
        cfg.set("seed = 9").unwrap();
        let (study, _) = cfg.resolve().unwrap();
        assert_eq!(study.replicates, 7);
        assert_eq!(study.seed, 9);
        assert!(cfg.set("nope=1").is_err());
    }
}
