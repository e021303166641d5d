//! Run configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use bundle_miner::ingest::{LabelRule, UnmappedPolicy};
use bundle_miner::seqmine::MinSupport;
use bundle_miner::synth::PlantedSpec;
use bundle_miner::topics::FitParams;

use crate::CliError;

pub const CONFIG_ENV: &str = "BUNDLE_MINER_CONFIG";

/// Inclusive range of topic counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopicRange {
    pub min: usize,
    pub max: usize,
}

impl TopicRange {
    pub fn parse(raw: &str) -> Result<Self, String> {
        let raw = raw.trim();
        let (a, b) = raw
            .split_once("..")
            .or_else(|| raw.split_once('-'))
            .or_else(|| raw.split_once(':'))
            .unwrap_or((raw, raw));
        let min = a.trim().parse::<usize>().map_err(|e| format!("range {raw:?}: {e}"))?;
        let max = b.trim().parse::<usize>().map_err(|e| format!("range {raw:?}: {e}"))?;
        if min == 0 || min > max {
            return Err(format!("range {raw:?} must satisfy 1 <= min <= max"));
        }
        if min < max && min < 2 {
            return Err(format!("range {raw:?}: a sweep needs min >= 2"));
        }
        Ok(Self { min, max })
    }
}

impl fmt::Display for TopicRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

/// Every tunable of a run, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub events: Option<PathBuf>,
    pub diagnoses: Option<PathBuf>,
    pub codemap: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub label_rule: LabelRule,
    pub collapse_repeats: bool,
    pub unmapped_policy: UnmappedPolicy,
    pub min_support: MinSupport,
    pub max_len: usize,
    pub k_range: TopicRange,
    pub q_range: TopicRange,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub average_samples: usize,
    pub weight_threshold: f64,
    pub seed: u64,
    pub seed_topics: u64,
    pub seed_louvain: u64,
    pub seed_counterpart: u64,
    pub synth: PlantedSpec,
}

/// Keys accepted in the config file, with their defaults ("" = unset).
/// Seeds default to values derived from `seed`.
const DEFAULTS: &[(&str, &str)] = &[
    ("events", ""),
    ("diagnoses", ""),
    ("codemap", ""),
    ("responses", ""),
    ("out_dir", "out"),
    ("label_rule", "role_and_reason"),
    ("collapse_repeats", "false"),
    ("unmapped_policy", "passthrough"),
    ("min_support", "2%"),
    ("max_len", "4"),
    ("k_range", "15..35"),
    ("q_range", "15..35"),
    ("alpha", "auto"),
    ("beta", "0.01"),
    ("iterations", "500"),
    ("average_samples", "0"),
    ("weight_threshold", "0"),
    ("seed", "0"),
    ("seed_topics", ""),
    ("seed_louvain", ""),
    ("seed_counterpart", ""),
    ("synth.n_bundles", "3"),
    ("synth.workflow_topics_per_bundle", "2"),
    ("synth.phenotype_topics_per_bundle", "2"),
    ("synth.patients_per_bundle", "200"),
    ("synth.action_vocab_size", "30"),
    ("synth.code_vocab_size", "60"),
    ("synth.tokens_per_patient_seq", "30"),
    ("synth.codes_per_patient", "30"),
    ("synth.noise_rate", "0.05"),
    ("synth.seed", ""),
];

/// SplitMix64 finaliser, used to derive per-stage seeds from the master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_flat(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_flat(&text, &path.display().to_string())
}

impl RunConfig {
    /// Layers `overrides` (flags) over `file` over the defaults and validates.
    pub fn resolve(
        file: &BTreeMap<String, String>,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in file.iter().chain(overrides) {
            if !raw.contains_key(k) {
                return Err(CliError::Usage(format!("unknown config key {k:?}")));
            }
            raw.insert(k.clone(), v.clone());
        }
        let get = |k: &str| raw[k].as_str();
        let bad = |k: &str, e: &dyn fmt::Display| CliError::Usage(format!("config {k} = {:?}: {e}", raw[k]));
        let path = |k: &str| (!get(k).is_empty()).then(|| PathBuf::from(get(k)));
        fn num<T: std::str::FromStr>(raw: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            raw.parse::<T>().map_err(|e| e.to_string())
        }
        macro_rules! parsed {
            ($k:expr) => {
                num(get($k)).map_err(|e| bad($k, &e))?
            };
        }

        let seed: u64 = parsed!("seed");
        let seed_or = |k: &str, stream: u64| -> Result<u64, CliError> {
            if get(k).is_empty() {
                Ok(derive_seed(seed, stream))
            } else {
                num(get(k)).map_err(|e| bad(k, &e))
            }
        };
        let alpha = match get("alpha") {
            "auto" | "" => None,
            v => Some(num::<f64>(v).map_err(|e| bad("alpha", &e))?),
        };
        let beta: f64 = parsed!("beta");
        if beta.is_nan() || beta <= 0.0 {
            return Err(bad("beta", &"must be > 0"));
        }
        if alpha.is_some_and(|a| a.is_nan() || a <= 0.0) {
            return Err(bad("alpha", &"must be > 0"));
        }
        let weight_threshold: f64 = parsed!("weight_threshold");
        if weight_threshold.is_nan() || weight_threshold < 0.0 {
            return Err(bad("weight_threshold", &"must be >= 0"));
        }
        let iterations: usize = parsed!("iterations");
        if iterations == 0 {
            return Err(bad("iterations", &"must be >= 1"));
        }
        let max_len: usize = parsed!("max_len");
        if max_len == 0 {
            return Err(bad("max_len", &"must be >= 1"));
        }
        let collapse_repeats = match get("collapse_repeats") {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => return Err(bad("collapse_repeats", &"expected true or false")),
        };

        let synth = PlantedSpec {
            n_bundles: parsed!("synth.n_bundles"),
            workflow_topics_per_bundle: parsed!("synth.workflow_topics_per_bundle"),
            phenotype_topics_per_bundle: parsed!("synth.phenotype_topics_per_bundle"),
            patients_per_bundle: parsed!("synth.patients_per_bundle"),
            action_vocab_size: parsed!("synth.action_vocab_size"),
            code_vocab_size: parsed!("synth.code_vocab_size"),
            tokens_per_patient_seq: parsed!("synth.tokens_per_patient_seq"),
            codes_per_patient: parsed!("synth.codes_per_patient"),
            noise_rate: parsed!("synth.noise_rate"),
            seed: seed_or("synth.seed", 4)?,
        };
        synth.validate().map_err(|e| CliError::Usage(format!("synth config: {e}")))?;

        Ok(Self {
            events: path("events"),
            diagnoses: path("diagnoses"),
            codemap: path("codemap"),
            responses: path("responses"),
            out_dir: PathBuf::from(get("out_dir")),
            label_rule: parsed!("label_rule"),
            collapse_repeats,
            unmapped_policy: parsed!("unmapped_policy"),
            min_support: parsed!("min_support"),
            max_len,
            k_range: TopicRange::parse(get("k_range")).map_err(|e| bad("k_range", &e))?,
            q_range: TopicRange::parse(get("q_range")).map_err(|e| bad("q_range", &e))?,
            alpha,
            beta,
            iterations,
            average_samples: parsed!("average_samples"),
            weight_threshold,
            seed,
            seed_topics: seed_or("seed_topics", 1)?,
            seed_louvain: seed_or("seed_louvain", 2)?,
            seed_counterpart: seed_or("seed_counterpart", 3)?,
            synth,
        })
    }

    pub fn fit_params(&self) -> FitParams {
        FitParams {
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            seed: self.seed_topics,
            average_samples: self.average_samples,
        }
    }

    /// The resolved configuration as key/value pairs, every seed explicit.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let s = &self.synth;
        let label_rule = match self.label_rule {
            LabelRule::RoleAndReason => "role_and_reason",
            LabelRule::RoleOnly => "role_only",
            LabelRule::ReasonOnly => "reason_only",
        };
        [
            ("events", p(&self.events)),
            ("diagnoses", p(&self.diagnoses)),
            ("codemap", p(&self.codemap)),
            ("responses", p(&self.responses)),
            ("out_dir", self.out_dir.display().to_string()),
            ("label_rule", label_rule.to_string()),
            ("collapse_repeats", self.collapse_repeats.to_string()),
            ("unmapped_policy", self.unmapped_policy.to_string()),
            ("min_support", self.min_support.to_string()),
            ("max_len", self.max_len.to_string()),
            ("k_range", self.k_range.to_string()),
            ("q_range", self.q_range.to_string()),
            ("alpha", self.alpha.map_or_else(|| "auto".to_string(), |a| a.to_string())),
            ("beta", self.beta.to_string()),
            ("iterations", self.iterations.to_string()),
            ("average_samples", self.average_samples.to_string()),
            ("weight_threshold", self.weight_threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("seed_topics", self.seed_topics.to_string()),
            ("seed_louvain", self.seed_louvain.to_string()),
            ("seed_counterpart", self.seed_counterpart.to_string()),
            ("synth.n_bundles", s.n_bundles.to_string()),
            ("synth.workflow_topics_per_bundle", s.workflow_topics_per_bundle.to_string()),
            ("synth.phenotype_topics_per_bundle", s.phenotype_topics_per_bundle.to_string()),
            ("synth.patients_per_bundle", s.patients_per_bundle.to_string()),
            ("synth.action_vocab_size", s.action_vocab_size.to_string()),
            ("synth.code_vocab_size", s.code_vocab_size.to_string()),
            ("synth.tokens_per_patient_seq", s.tokens_per_patient_seq.to_string()),
            ("synth.codes_per_patient", s.codes_per_patient.to_string()),
            ("synth.noise_rate", s.noise_rate.to_string()),
            ("synth.seed", s.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Flat-file rendering of [`RunConfig::to_map`]; parses back to the same config.
    pub fn to_flat(&self) -> String {
        self.to_map().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(file: &str, flags: &[(&str, &str)]) -> Result<RunConfig, CliError> {
        let file = parse_flat(file, "test.conf")?;
        let flags = flags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        RunConfig::resolve(&file, &flags)
    }

    #[test]
    fn defaults_resolve_with_explicit_seeds() {
        let c = resolve("", &[]).unwrap();
        assert_eq!(c.k_range, TopicRange { min: 15, max: 35 });
        assert_eq!(c.seed_topics, derive_seed(0, 1));
        let map = c.to_map();
        assert_eq!(map["seed_topics"], derive_seed(0, 1).to_string());
        assert_eq!(map["alpha"], "auto");
    }

    #[test]
    fn flags_win_over_file() {
        let c = resolve("seed = 5\nk_range = 3..9  # narrow\n", &[("k_range", "4..8")]).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.k_range, TopicRange { min: 4, max: 8 });
        assert_eq!(c.seed_louvain, derive_seed(5, 2));
    }

    #[test]
    fn flat_round_trip() {
        let c = resolve("alpha = 0.5\nmin_support = 3\nevents = a b/e.csv\n", &[]).unwrap();
        let again = resolve(&c.to_flat(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for (k, v) in [("k_range", "9..4"), ("beta", "0"), ("iterations", "x"), ("nope", "1"), ("label_rule", "everything")] {
            assert!(matches!(resolve("", &[(k, v)]), Err(CliError::Usage(_))), "{k} = {v}");
        }
        assert!(matches!(resolve("just text", &[]), Err(CliError::Usage(_))));
    }

    #[test]
    fn singleton_and_dash_ranges() {
        assert_eq!(TopicRange::parse("25").unwrap(), TopicRange { min: 25, max: 25 });
        assert_eq!(TopicRange::parse("25..25").unwrap(), TopicRange { min: 25, max: 25 });
        assert_eq!(TopicRange::parse("15-35").unwrap(), TopicRange { min: 15, max: 35 });
        assert!(TopicRange::parse("1..5").is_err());
    }
}
