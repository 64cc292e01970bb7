//! Context-aware adaptive gating.
//!
//! The semantic stream weight and the visual anchor weight at normalised time
//! `t_hat` (1 = pure noise, 0 = end of sampling) are
//!
//! ```text
//! alpha_final = alpha_base * gamma_sem * T_sem(t_hat)
//! w_final     = w_base     * gamma_vis * T_vis(t_hat)
//! ```
//!
//! with `gamma_sem = 1 + lambda_up * I`, `gamma_vis = max(0, 1 - lambda_down * I)`
//! for the binary intent indicator `I`, and the linear complementary pair
//! `T_sem = t_hat`, `T_vis = 1 - t_hat`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{detect_intent, EditDictionary, IntentResult, Prompt};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatingConfig {
    pub alpha_base: f64,
    pub w_base: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub schedule: ScheduleKind,
    /// Clamp `gamma_vis` at zero when `lambda_down > 1`.
    pub clamp_gamma_vis: bool,
}

impl Default for GatingConfig {
    fn default() -> Self {
        GatingConfig {
            alpha_base: 0.1,
            w_base: 1.0,
            lambda_up: 0.5,
            lambda_down: 0.5,
            schedule: ScheduleKind::Linear,
            clamp_gamma_vis: true,
        }
    }
}

impl GatingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_base", self.alpha_base),
            ("w_base", self.w_base),
            ("lambda_up", self.lambda_up),
            ("lambda_down", self.lambda_down),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Resolved weights for one Euler step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSample {
    pub step: usize,
    pub t_hat: f64,
    pub indicator: u8,
    pub gamma_sem: f64,
    pub gamma_vis: f64,
    pub t_sem: f64,
    pub t_vis: f64,
    pub alpha_final: f64,
    pub w_final: f64,
}

/// `(gamma_sem, gamma_vis)` for a binary indicator, `gamma_vis` clamped at 0.
pub fn adjustment_factors(indicator: u8, lambda_up: f64, lambda_down: f64) -> Result<(f64, f64)> {
    adjustment_factors_with(indicator, lambda_up, lambda_down, true)
}

fn adjustment_factors_with(indicator: u8, lambda_up: f64, lambda_down: f64, clamp: bool) -> Result<(f64, f64)> {
    if indicator > 1 {
        return Err(Error::Validation(format!("intent indicator must be 0 or 1, got {indicator}")));
    }
    for (name, v) in [("lambda_up", lambda_up), ("lambda_down", lambda_down)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Validation(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let i = f64::from(indicator);
    let gamma_sem = 1.0 + lambda_up * i;
    let mut gamma_vis = 1.0 - lambda_down * i;
    if clamp && gamma_vis < 0.0 {
        gamma_vis = 0.0;
    }
    Ok((gamma_sem, gamma_vis))
}

/// `(T_sem, T_vis) = (t_hat, 1 - t_hat)`.
pub fn temporal_weights(t_hat: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&t_hat) {
        return Err(Error::Validation(format!("t_hat must lie in [0, 1], got {t_hat}")));
    }
    Ok((t_hat, 1.0 - t_hat))
}

pub fn weights_at(cfg: &GatingConfig, t_hat: f64, intent: &IntentResult) -> Result<ScheduleSample> {
    cfg.validate()?;
    let (gamma_sem, gamma_vis) =
        adjustment_factors_with(intent.indicator, cfg.lambda_up, cfg.lambda_down, cfg.clamp_gamma_vis)?;
    let (t_sem, t_vis) = match cfg.schedule {
        ScheduleKind::Linear => temporal_weights(t_hat)?,
    };
    Ok(ScheduleSample {
        step: 0,
        t_hat,
        indicator: intent.indicator,
        gamma_sem,
        gamma_vis,
        t_sem,
        t_vis,
        alpha_final: cfg.alpha_base * gamma_sem * t_sem,
        w_final: cfg.w_base * gamma_vis * t_vis,
    })
}

/// Normalised time at the start of Euler step `k` of `steps`.
pub fn grid_time(k: usize, steps: usize) -> f64 {
    1.0 - k as f64 / steps as f64
}

/// One sample per Euler step, each evaluated at the time the step leaves.
/// Intent is detected once for the whole prompt.
pub fn full_schedule(
    cfg: &GatingConfig,
    prompt: &Prompt,
    dict: &EditDictionary,
    steps: usize,
) -> Result<Vec<ScheduleSample>> {
    schedule_for_intent(cfg, &detect_intent(prompt, dict), steps)
}

pub fn schedule_for_intent(cfg: &GatingConfig, intent: &IntentResult, steps: usize) -> Result<Vec<ScheduleSample>> {
    if steps == 0 {
        return Err(Error::Validation("steps must be at least 1".into()));
    }
    (0..steps)
        .map(|k| {
            let mut s = weights_at(cfg, grid_time(k, steps), intent)?;
            s.step = k;
            Ok(s)
        })
        .collect()
}

/// Fixed-weight schedule used when gating is disabled: every step injects
/// `alpha_base` and `w_base` regardless of time or intent. The temporal and
/// adjustment columns are reported as 1.
pub fn static_schedule(cfg: &GatingConfig, indicator: u8, steps: usize) -> Result<Vec<ScheduleSample>> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::Validation("steps must be at least 1".into()));
    }
    Ok((0..steps)
        .map(|k| ScheduleSample {
            step: k,
            t_hat: grid_time(k, steps),
            indicator,
            gamma_sem: 1.0,
            gamma_vis: 1.0,
            t_sem: 1.0,
            t_vis: 1.0,
            alpha_final: cfg.alpha_base,
            w_final: cfg.w_base,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::normalize_prompt;

    fn high() -> IntentResult {
        detect_intent(&normalize_prompt("laughing"), &EditDictionary::parse("expression: laugh*", "t").unwrap())
    }

    #[test]
    fn adjustment_factor_examples() {
        assert_eq!(adjustment_factors(0, 3.0, 7.0).unwrap(), (1.0, 1.0));
        assert_eq!(adjustment_factors(1, 0.5, 0.5).unwrap(), (1.5, 0.5));
        assert_eq!(adjustment_factors(1, 0.5, 1.2).unwrap().1, 0.0);
        assert!(adjustment_factors(1, -0.1, 0.5).is_err());
        assert!(adjustment_factors(2, 0.5, 0.5).is_err());
    }

    #[test]
    fn temporal_weight_examples() {
        assert_eq!(temporal_weights(1.0).unwrap(), (1.0, 0.0));
        assert_eq!(temporal_weights(0.0).unwrap(), (0.0, 1.0));
        assert_eq!(temporal_weights(0.25).unwrap(), (0.25, 0.75));
        assert!(temporal_weights(1.01).is_err());
        assert!(temporal_weights(f64::NAN).is_err());
    }

    #[test]
    fn weights_at_examples() {
        let cfg = GatingConfig::default();
        let s = weights_at(&cfg, 0.8, &high()).unwrap();
        assert!((s.alpha_final - 0.12).abs() < 1e-15);
        assert!((s.w_final - 0.10).abs() < 1e-15);
        let s = weights_at(&cfg, 0.5, &IntentResult::low()).unwrap();
        assert!((s.alpha_final - 0.05).abs() < 1e-15);
        assert!((s.w_final - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unclamped_gamma_vis_can_go_negative() {
        let cfg = GatingConfig { lambda_down: 1.5, clamp_gamma_vis: false, ..Default::default() };
        let s = weights_at(&cfg, 0.0, &high()).unwrap();
        assert_eq!(s.gamma_vis, -0.5);
    }

    #[test]
    fn schedule_grid() {
        let cfg = GatingConfig::default();
        let s = schedule_for_intent(&cfg, &IntentResult::low(), 25).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s[0].t_hat, 1.0);
        assert!((s[24].t_hat - 0.04).abs() < 1e-15);
        for (k, w) in s.windows(2).enumerate() {
            assert!((w[0].t_hat - w[1].t_hat - 0.04).abs() < 1e-12, "step {k}");
        }

        let one = schedule_for_intent(&cfg, &high(), 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].alpha_final, cfg.alpha_base * 1.5);
        assert_eq!(one[0].w_final, 0.0);

        assert!(schedule_for_intent(&cfg, &high(), 0).is_err());
    }

    #[test]
    fn static_schedule_is_constant() {
        let cfg = GatingConfig::default();
        let s = static_schedule(&cfg, 1, 5).unwrap();
        assert!(s.iter().all(|x| x.alpha_final == 0.1 && x.w_final == 1.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GatingConfig { w_base: f64::INFINITY, ..Default::default() };
        assert!(weights_at(&cfg, 0.5, &IntentResult::low()).is_err());
    }
}
