//! Validation reports shared by the Monte-Carlo validators and the CLI.

use crate::jsonout::Json;

/// One statistical check. `limit` is the precomputed acceptance bound; for
/// 3-sigma style checks it is `tolerance * SE + bias allowance`, for relative
/// checks it is the plain threshold.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub label: String,
    pub statistic: f64,
    pub standard_error: f64,
    pub bias_allowance: f64,
    pub limit: f64,
    pub pass: bool,
}

impl CheckLine {
    pub fn three_sigma(
        label: &str,
        statistic: f64,
        standard_error: f64,
        bias_allowance: f64,
        tolerance_multiple: f64,
    ) -> Self {
        let limit = tolerance_multiple * standard_error + bias_allowance;
        CheckLine {
            label: label.to_string(),
            statistic,
            standard_error,
            bias_allowance,
            limit,
            pass: statistic.abs() <= limit,
        }
    }

    pub fn below(label: &str, statistic: f64, threshold: f64) -> Self {
        CheckLine {
            label: label.to_string(),
            statistic,
            standard_error: 0.0,
            bias_allowance: 0.0,
            limit: threshold,
            pass: statistic <= threshold,
        }
    }

    pub fn to_json(&self) -> Json {
        Json::obj(vec![
            ("label", Json::Str(self.label.clone())),
            ("statistic", Json::Float(self.statistic)),
            ("standard_error", Json::Float(self.standard_error)),
            ("bias_allowance", Json::Float(self.bias_allowance)),
            ("limit", Json::Float(self.limit)),
            ("pass", Json::Bool(self.pass)),
        ])
    }
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub test: String,
    pub model: String,
    pub tolerance_multiple: f64,
    pub params: Vec<(String, f64)>,
    pub checks: Vec<CheckLine>,
    pub clipped_fraction: f64,
    pub clip_ok: bool,
    pub flags: Vec<String>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn new(test: &str, model: &str, tolerance_multiple: f64) -> Self {
        ValidationReport {
            test: test.to_string(),
            model: model.to_string(),
            tolerance_multiple,
            params: Vec::new(),
            checks: Vec::new(),
            clipped_fraction: 0.0,
            clip_ok: true,
            flags: Vec::new(),
            pass: false,
        }
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.push((name.to_string(), value));
        self
    }

    /// Records the clip fraction; a report fails automatically when more than
    /// `max_fraction` of the path-steps were clipped to the state range.
    pub fn with_clipping(mut self, clipped_fraction: f64, max_fraction: f64) -> Self {
        self.clipped_fraction = clipped_fraction;
        self.clip_ok = clipped_fraction <= max_fraction;
        if !self.clip_ok {
            self.flags.push(format!(
                "clipped fraction {clipped_fraction:e} exceeds {max_fraction:e}; statistics would be biased"
            ));
        }
        self
    }

    pub fn flag(mut self, text: &str) -> Self {
        self.flags.push(text.to_string());
        self
    }

    pub fn check(mut self, line: CheckLine) -> Self {
        self.checks.push(line);
        self
    }

    pub fn finish(mut self) -> Self {
        self.pass = self.clip_ok && self.checks.iter().all(|c| c.pass);
        self
    }

    /// Primary statistic (first check).
    pub fn statistic(&self) -> f64 {
        self.checks.first().map(|c| c.statistic).unwrap_or(f64::NAN)
    }

    pub fn standard_error(&self) -> f64 {
        self.checks.first().map(|c| c.standard_error).unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> Json {
        Json::obj(vec![
            ("test", Json::Str(self.test.clone())),
            ("model", Json::Str(self.model.clone())),
            ("tolerance_multiple", Json::Float(self.tolerance_multiple)),
            (
                "params",
                Json::Obj(
                    self.params.iter().map(|(k, v)| (k.clone(), Json::Float(*v))).collect(),
                ),
            ),
            ("checks", Json::Arr(self.checks.iter().map(|c| c.to_json()).collect())),
            ("clipped_fraction", Json::Float(self.clipped_fraction)),
            ("clip_ok", Json::Bool(self.clip_ok)),
            ("flags", Json::Arr(self.flags.iter().map(|f| Json::Str(f.clone())).collect())),
            ("pass", Json::Bool(self.pass)),
        ])
    }
}

/// Two-pass mean and standard deviation, summed in index order so results
/// are bitwise reproducible.
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
