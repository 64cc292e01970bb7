use flexid::cag::{schedule_for_intent, static_schedule, weights_at, GatingConfig};
use flexid::intent::IntentResult;
use proptest::prelude::*;

fn intent(indicator: u8) -> IntentResult {
    IntentResult { indicator, matches: Vec::new() }
}

fn oracle(cfg: &GatingConfig, t: f64, i: f64) -> (f64, f64) {
    let gs = 1.0 + cfg.lambda_up * i;
    let gv = (1.0 - cfg.lambda_down * i).max(0.0);
    (cfg.alpha_base * gs * t, cfg.w_base * gv * (1.0 - t))
}

fn gating() -> impl Strategy<Value = GatingConfig> {
    (0.0..1.0f64, 0.0..2.0f64, 0.0..3.0f64, 0.0..3.0f64).prop_map(|(a, w, up, down)| GatingConfig {
        alpha_base: a,
        w_base: w,
        lambda_up: up,
        lambda_down: down,
        ..Default::default()
    })
}

proptest! {
    #[test]
    fn weights_match_closed_form(cfg in gating(), t in 0.0..=1.0f64, i in 0u8..=1) {
        let s = weights_at(&cfg, t, &intent(i)).unwrap();
        let (a, w) = oracle(&cfg, t, f64::from(i));
        prop_assert!((s.alpha_final - a).abs() <= 1e-12);
        prop_assert!((s.w_final - w).abs() <= 1e-12);
        prop_assert!(s.w_final >= 0.0 && s.alpha_final >= 0.0);
        prop_assert_eq!(s.t_sem + s.t_vis, 1.0);
    }

    #[test]
    fn intent_moves_streams_in_opposite_directions(cfg in gating(), steps in 1usize..60) {
        let lo = schedule_for_intent(&cfg, &intent(0), steps).unwrap();
        let hi = schedule_for_intent(&cfg, &intent(1), steps).unwrap();
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!(h.alpha_final >= l.alpha_final);
            prop_assert!(h.w_final <= l.w_final);
        }
    }

    #[test]
    fn schedules_are_monotone_in_time(cfg in gating(), steps in 1usize..60, i in 0u8..=1) {
        let s = schedule_for_intent(&cfg, &intent(i), steps).unwrap();
        for pair in s.windows(2) {
            prop_assert!(pair[1].t_hat < pair[0].t_hat);
            prop_assert!(pair[1].alpha_final <= pair[0].alpha_final);
            prop_assert!(pair[1].w_final >= pair[0].w_final);
        }
    }

    #[test]
    fn static_schedule_is_constant(cfg in gating(), steps in 1usize..60, i in 0u8..=1) {
        let s = static_schedule(&cfg, i, steps).unwrap();
        prop_assert_eq!(s.len(), steps);
        prop_assert!(s.iter().all(|x| x.alpha_final == cfg.alpha_base && x.w_final == cfg.w_base));
    }
}

#[test]
fn grid_starts_at_one_and_never_reaches_zero() {
    let s = schedule_for_intent(&GatingConfig::default(), &intent(0), 25).unwrap();
    assert_eq!(s[0].t_hat, 1.0);
    assert_eq!(s[0].w_final, 0.0);
    assert!((s[24].t_hat - 0.04).abs() < 1e-15);
    assert_eq!(s.iter().map(|x| x.step).collect::<Vec<_>>(), (0..25).collect::<Vec<_>>());
}

#[test]
fn out_of_range_inputs_are_rejected() {
    let cfg = GatingConfig::default();
    assert!(weights_at(&cfg, 1.5, &intent(0)).is_err());
    assert!(weights_at(&cfg, 0.5, &intent(2)).is_err());
    assert!(schedule_for_intent(&cfg, &intent(0), 0).is_err());
    let neg = GatingConfig { lambda_down: -0.1, ..cfg };
    assert!(weights_at(&neg, 0.5, &intent(1)).is_err());
}

#[test]
fn unclamped_gamma_vis_may_go_negative() {
    let cfg = GatingConfig { lambda_down: 1.5, clamp_gamma_vis: false, ..Default::default() };
    let s = weights_at(&cfg, 0.0, &intent(1)).unwrap();
    assert!((s.gamma_vis + 0.5).abs() < 1e-15);
    let clamped = weights_at(&GatingConfig { lambda_down: 1.5, ..Default::default() }, 0.0, &intent(1)).unwrap();
    assert_eq!(clamped.w_final, 0.0);
}
