//! Plain-text `key = value` simulation configs.
//!
//! ```text
//! # overdispersion, largest deviation
//! setting = power_2
//! j = 0.5
//! n = 100
//! reps = 1000
//! tests = ghl, naive_ghl, sw
//! ```

use super::settings::SettingId;
use super::SimError;
use crate::gof::Method;
use crate::grouping::GroupingMethod;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimConfig {
    pub setting: Option<SettingId>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub groups: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub j: Option<f64>,
    pub d: Option<usize>,
    pub ds: Option<Vec<usize>>,
    pub tests: Option<Vec<Method>>,
    pub grouping: Option<GroupingMethod>,
    pub sw_boot: Option<usize>,
    pub sw_reps: Option<usize>,
    pub threads: Option<usize>,
}

/// Parse a `j` value, accepting fractions such as `1/16`.
pub fn parse_j(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad J `{text}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad J `{text}`"))?;
            a / b
        }
        None => text.parse().map_err(|_| format!("bad J `{text}`"))?,
    };
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("bad J `{text}`"))
    }
}

pub fn parse_tests(text: &str) -> Result<Vec<Method>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<Method>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("bad value `{value}` for `{key}`"))
}

pub fn parse_config(text: &str) -> Result<SimConfig, SimError> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SimError::Config {
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        let parsed: Result<(), String> = (|| {
            match key.as_str() {
                "setting" => {
                    cfg.setting = Some(value.parse().map_err(|e: SimError| e.to_string())?)
                }
                "n" => cfg.n = Some(parse_num(&key, value)?),
                "reps" => cfg.reps = Some(parse_num(&key, value)?),
                "g" | "groups" => cfg.groups = Some(parse_num(&key, value)?),
                "alpha" => cfg.alpha = Some(parse_num(&key, value)?),
                "seed" => cfg.seed = Some(parse_num(&key, value)?),
                "j" => cfg.j = Some(parse_j(value)?),
                "d" => cfg.d = Some(parse_num(&key, value)?),
                "ds" => {
                    cfg.ds = Some(
                        value
                            .split(',')
                            .map(|v| parse_num(&key, v.trim()))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "tests" => cfg.tests = Some(parse_tests(value)?),
                "grouping" => {
                    cfg.grouping = Some(
                        value
                            .parse()
                            .map_err(|e: crate::grouping::GroupingError| e.to_string())?,
                    )
                }
                "sw_boot" => cfg.sw_boot = Some(parse_num(&key, value)?),
                "sw_reps" => cfg.sw_reps = Some(parse_num(&key, value)?),
                "threads" => cfg.threads = Some(parse_num(&key, value)?),
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        })();
        parsed.map_err(err)?;
    }
    Ok(cfg)
}
