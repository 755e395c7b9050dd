//! Flat `key = value` experiment files. Matrices for custom setups are
//! JSON arrays of `[re, im]` pairs, row by row.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::BenchError;
use crate::linalg::{CMatrix, Complex, StateVector};
use crate::maps::MapKind;
use crate::metrics::HistogramSpec;
use crate::setup::{ExampleId, MeasurementSetup};
use crate::trajectory::ProtocolConfig;

/// Ensemble size selected by `--full`.
pub const FULL_REALIZATIONS: usize = 5000;

const KNOWN_KEYS: &[&str] = &[
    "example",
    "gamma",
    "gamma_dt_bin",
    "gamma_dt_fine",
    "total_time_in_gamma",
    "realizations",
    "seed",
    "maps",
    "hamiltonian_prefactor",
    "output_dir",
    "formats",
    "histogram_bins",
    "histogram_lo",
    "histogram_hi",
    "max_abort_fraction",
    "sweep_grid",
    "sweep_gamma_dt_fine",
    "sweep_records",
    "c",
    "h",
    "eta",
    "lindblads",
    "initial_state",
];

/// Output formats to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

/// Single-bin sweep settings, in units of `γ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSettings {
    pub grid: Vec<f64>,
    pub gamma_dt_fine: f64,
    pub records: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            grid: vec![4e-3, 1e-2, 2.5e-2, 6.3e-2],
            gamma_dt_fine: 1e-6,
            records: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// `None` for a custom setup.
    pub example: Option<ExampleId>,
    pub setup: MeasurementSetup,
    pub protocol: ProtocolConfig,
    pub output_dir: PathBuf,
    pub formats: Formats,
    pub histogram: HistogramSpec,
    pub max_abort_fraction: f64,
    pub sweep: SweepSettings,
    /// The parsed key-value pairs, kept for the run manifest.
    pub raw: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

/// Splits the text into key-value pairs. `#` and `;` start comments and
/// `[section]` lines are ignored.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, BenchError> {
    let mut out = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find(['#', ';']) {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() || (line.starts_with('[') && !line.contains('=')) {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(config_err(format!(
                "line {}: unknown key `{key}`",
                lineno + 1
            )));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(config_err(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(
    pairs: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, BenchError> {
    pairs
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`")))
        })
        .transpose()
}

fn parse_bool(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>, BenchError> {
    pairs
        .get(key)
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(config_err(format!(
                "`{key}`: expected a boolean, got `{v}`"
            ))),
        })
        .transpose()
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_matrix_json(key: &str, value: &str) -> Result<CMatrix, BenchError> {
    let rows: Vec<Vec<[f64; 2]>> =
        serde_json::from_str(value).map_err(|e| config_err(format!("`{key}`: {e}")))?;
    matrix_from_rows(key, rows)
}

fn matrix_from_rows(key: &str, rows: Vec<Vec<[f64; 2]>>) -> Result<CMatrix, BenchError> {
    let rows: Vec<Vec<Complex>> = rows
        .into_iter()
        .map(|r| r.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
        .collect();
    CMatrix::from_rows(&rows).map_err(|e| config_err(format!("`{key}`: {e}")))
}

fn parse_state_json(value: &str) -> Result<StateVector, BenchError> {
    let amps: Vec<[f64; 2]> =
        serde_json::from_str(value).map_err(|e| config_err(format!("`initial_state`: {e}")))?;
    StateVector::new(
        amps.into_iter()
            .map(|[re, im]| Complex::new(re, im))
            .collect(),
    )
    .map_err(|e| config_err(format!("`initial_state`: {e}")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let pairs = parse_pairs(text)?;
        let gamma = parse_num::<f64>(&pairs, "gamma")?.unwrap_or(1.0);

        let example_name = pairs
            .get("example")
            .ok_or_else(|| config_err("`example` is required (a preset name or `custom`)"))?;
        let example = if example_name.eq_ignore_ascii_case("custom") {
            None
        } else {
            Some(
                example_name
                    .parse::<ExampleId>()
                    .map_err(|e| config_err(e.to_string()))?,
            )
        };

        let mut setup = match example {
            Some(ex) => {
                if let Some(k) = ["c", "initial_state"]
                    .iter()
                    .find(|k| pairs.contains_key(**k))
                {
                    return Err(config_err(format!(
                        "`{k}` is only allowed with `example = custom`"
                    )));
                }
                ex.setup(gamma).map_err(|e| config_err(e.to_string()))?
            }
            None => {
                let c = parse_matrix_json(
                    "c",
                    pairs
                        .get("c")
                        .ok_or_else(|| config_err("custom setup needs `c`"))?,
                )?;
                let psi = parse_state_json(
                    pairs
                        .get("initial_state")
                        .ok_or_else(|| config_err("custom setup needs `initial_state`"))?,
                )?;
                MeasurementSetup::pure(c, psi, gamma).map_err(|e| config_err(e.to_string()))?
            }
        };
        if let Some(h) = pairs.get("h") {
            setup = setup
                .with_hamiltonian(parse_matrix_json("h", h)?)
                .map_err(|e| config_err(e.to_string()))?;
        }
        if let Some(eta) = parse_num::<f64>(&pairs, "eta")? {
            setup = setup.with_eta(eta).map_err(|e| config_err(e.to_string()))?;
        }
        if let Some(ls) = pairs.get("lindblads") {
            let mats: Vec<Vec<Vec<[f64; 2]>>> =
                serde_json::from_str(ls).map_err(|e| config_err(format!("`lindblads`: {e}")))?;
            let mats = mats
                .into_iter()
                .map(|m| matrix_from_rows("lindblads", m))
                .collect::<Result<Vec<_>, _>>()?;
            setup = setup
                .with_extra_lindblads(mats)
                .map_err(|e| config_err(e.to_string()))?;
        }

        let defaults = ProtocolConfig::desk();
        let map_kinds = match pairs.get("maps") {
            Some(v) => parse_list(v)
                .iter()
                .map(|s| s.parse::<MapKind>().map_err(|e| config_err(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
            None => defaults.map_kinds.clone(),
        };
        let protocol = ProtocolConfig {
            gamma_dt_bin: parse_num(&pairs, "gamma_dt_bin")?.unwrap_or(defaults.gamma_dt_bin),
            gamma_dt_fine: parse_num(&pairs, "gamma_dt_fine")?.unwrap_or(defaults.gamma_dt_fine),
            total_time_in_gamma: parse_num(&pairs, "total_time_in_gamma")?
                .unwrap_or(defaults.total_time_in_gamma),
            realizations: parse_num(&pairs, "realizations")?.unwrap_or(defaults.realizations),
            seed: parse_num(&pairs, "seed")?.unwrap_or(defaults.seed),
            map_kinds,
            hamiltonian_prefactor: parse_bool(&pairs, "hamiltonian_prefactor")?
                .unwrap_or(defaults.hamiltonian_prefactor),
        };

        let formats = match pairs.get("formats") {
            Some(v) => {
                let list = parse_list(v);
                let mut f = Formats {
                    csv: false,
                    json: false,
                };
                for item in &list {
                    match item.to_ascii_lowercase().as_str() {
                        "csv" => f.csv = true,
                        "json" => f.json = true,
                        other => {
                            return Err(config_err(format!("`formats`: unknown format `{other}`")))
                        }
                    }
                }
                f
            }
            None => Formats {
                csv: true,
                json: true,
            },
        };

        let hdef = HistogramSpec::default();
        let histogram = HistogramSpec {
            lo: parse_num(&pairs, "histogram_lo")?.unwrap_or(hdef.lo),
            hi: parse_num(&pairs, "histogram_hi")?.unwrap_or(hdef.hi),
            bins: parse_num(&pairs, "histogram_bins")?.unwrap_or(hdef.bins),
        };

        let sdef = SweepSettings::default();
        let sweep = SweepSettings {
            grid: match pairs.get("sweep_grid") {
                Some(v) => parse_list(v)
                    .iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| config_err(format!("`sweep_grid`: cannot parse `{s}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                None => sdef.grid,
            },
            gamma_dt_fine: parse_num(&pairs, "sweep_gamma_dt_fine")?.unwrap_or(sdef.gamma_dt_fine),
            records: parse_num(&pairs, "sweep_records")?.unwrap_or(sdef.records),
        };

        let cfg = Self {
            example,
            setup,
            protocol,
            output_dir: PathBuf::from(
                pairs
                    .get("output_dir")
                    .map(String::as_str)
                    .unwrap_or("qtraj-out"),
            ),
            formats,
            histogram,
            max_abort_fraction: parse_num(&pairs, "max_abort_fraction")?.unwrap_or(0.01),
            sweep,
            raw: pairs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.protocol
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.histogram
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.max_abort_fraction) {
            return Err(config_err("`max_abort_fraction` must lie in [0, 1]"));
        }
        if self.sweep.records == 0 {
            return Err(config_err("`sweep_records` must be positive"));
        }
        Ok(())
    }

    /// Name used in outputs: the preset name or `custom`.
    pub fn name(&self) -> &'static str {
        self.example.map_or("custom", ExampleId::name)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        full: bool,
        out: Option<PathBuf>,
    ) -> Result<Self, BenchError> {
        if let Some(seed) = seed {
            self.protocol.seed = seed;
            self.raw.insert("seed".into(), seed.to_string());
        }
        if full {
            self.protocol.realizations = FULL_REALIZATIONS;
            self.raw
                .insert("realizations".into(), FULL_REALIZATIONS.to_string());
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_defaults() {
        let cfg = ExperimentConfig::parse("example = qubit-z\n").unwrap();
        assert_eq!(cfg.example, Some(ExampleId::QubitZ));
        assert_eq!(cfg.protocol.realizations, 500);
        assert_eq!(cfg.protocol.map_kinds.len(), 5);
        assert!(cfg.formats.csv && cfg.formats.json);
        assert_eq!(cfg.histogram.bins, 50);
    }

    #[test]
    fn full_parse_with_comments() {
        let text = "\
# benchmark
[protocol]
example = spin1-z        ; Case 4
gamma = 2.0
gamma_dt_bin = 0.02
gamma_dt_fine = 0.0002
realizations = 10
seed = 42
maps = ito, phi
formats = csv
sweep_grid = 0.01, 0.02, 0.04
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.setup.gamma(), 2.0);
        assert_eq!(cfg.protocol.seed, 42);
        assert_eq!(cfg.protocol.map_kinds, vec![MapKind::Ito, MapKind::Phi]);
        assert!(cfg.formats.csv && !cfg.formats.json);
        assert_eq!(cfg.sweep.grid, vec![0.01, 0.02, 0.04]);
        assert_eq!(cfg.protocol.n_bins().unwrap(), 50);
    }

    #[test]
    fn custom_matrices() {
        let text = r#"
example = custom
c = [[[0,0],[0,0]],[[1,0],[0,0]]]
initial_state = [[0.6,0],[0,0.8]]
h = [[[0.5,0],[0,0]],[[0,0],[-0.5,0]]]
lindblads = [[[[0,0],[0.1,0]],[[0,0],[0,0]]]]
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.example, None);
        assert_eq!(cfg.name(), "custom");
        assert_eq!(cfg.setup.c().get(1, 0), Complex::new(1.0, 0.0));
        assert_eq!(
            cfg.setup.initial_state().as_slice()[1],
            Complex::new(0.0, 0.8)
        );
        assert!(cfg.setup.has_hamiltonian());
        assert_eq!(cfg.setup.extra_lindblads().len(), 1);
    }

    #[test]
    fn config_errors() {
        for text in [
            "",
            "example = qubit-z\nrealizations = 0\n",
            "example = qubit-q\n",
            "example = qubit-z\nbogus = 1\n",
            "example = qubit-z\nseed = 1\nseed = 2\n",
            "example = qubit-z\ngamma_dt_fine = 0.0003\n",
            "example = qubit-z\nmaps = ito, euler\n",
            "example = custom\nc = [[[1,0]]]\n",
            "example = custom\nc = [[[1,0],[0,0]],[[0,0],[1,0]]]\ninitial_state = [[1,0],[1,0]]\n",
            "example = qubit-z\nh = [[[0,1],[0,0]],[[0,0],[0,0]]]\n",
            "example = qubit-z\nformats = xml\n",
            "no equals sign\n",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(text), Err(BenchError::Config(_))),
                "accepted: {text:?}"
            );
        }
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::parse("example = qubit-z\n")
            .unwrap()
            .with_overrides(Some(9), true, Some("elsewhere".into()))
            .unwrap();
        assert_eq!(cfg.protocol.seed, 9);
        assert_eq!(cfg.protocol.realizations, FULL_REALIZATIONS);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }
}
