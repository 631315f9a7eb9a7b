mod common;

use common::*;
use tandem_core::experiments::{self, Axis, GridKind, Range, RuleChoice, SweepSpec, SynergyRange};
use tandem_core::sim::SimConfig;
use tandem_core::SystemParams;

fn column(t: &experiments::Table, name: &str) -> Vec<String> {
    let k = t.header.iter().position(|h| h == name).unwrap();
    t.rows.iter().map(|r| r[k].clone()).collect()
}

fn numbers(t: &experiments::Table, name: &str) -> Vec<f64> {
    column(t, name).iter().map(|x| x.parse().unwrap()).collect()
}

#[test]
fn policy_report_examples() {
    let p = SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 2.0, 1.0, 12).unwrap();
    assert_eq!(experiments::policy_report(&p).unwrap().threshold, 1);
    let p = SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 1.0, 1e-9, 12).unwrap();
    let r = experiments::policy_report(&p).unwrap();
    assert_eq!(r.threshold, 14);
    assert_eq!(r.certificate.map(|c| c.1), Some(true));
    let p = SystemParams::new([[1.0, 0.0], [0.0, 1.0]], 1.0, 5.0, 3).unwrap();
    let t = experiments::policy_report(&p).unwrap().table();
    assert_eq!(column(&t, "g_1"), vec!["0.5"]);
    let p0 = p.with_theta(0.0).unwrap();
    assert_eq!(experiments::policy_report(&p0).unwrap().certificate, None);
}

#[test]
fn gn_curves_have_expected_shape() {
    let p = SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 1.2, 1.0, 5).unwrap();
    let g = numbers(&experiments::gn_curve(&p), "g_n");
    assert_eq!(g.len(), 7);
    let peak = g.iter().cloned().enumerate().fold((0, f64::MIN), |a, (i, x)| if x > a.1 { (i, x) } else { a }).0;
    assert!(g[..=peak].windows(2).all(|w| w[1] >= w[0]));
    assert!(g[peak..].windows(2).all(|w| w[1] <= w[0]));

    let expedite = numbers(&experiments::gn_curve(&p.with_gamma(2.0).unwrap()), "g_n");
    assert!(expedite.windows(2).all(|w| w[1] <= w[0]));

    let no_cross = SystemParams::new([[10.0, 0.0], [2.0, 13.0]], 1.0, 1.0, 5).unwrap();
    let rising = numbers(&experiments::gn_curve(&no_cross), "g_n");
    assert!(rising.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn grid_interior_point_matches_exhaustive_argmax() {
    let base = experiments::grid_instance();
    let g = experiments::threshold_grid(&base, GridKind::GammaTheta, Axis::new(1.0, 1.4, 3), Axis::new(0.0, 2.0, 3)).unwrap();
    // (gamma, theta) = (1.2, 1)
    let p = base.with_gamma(1.2).unwrap().with_theta(1.0).unwrap();
    assert_eq!(g.thresholds[1][1], exhaustive_threshold(&p));
    assert_eq!(g.table().rows.len(), 9);
}

#[test]
fn sweeps_are_reproducible_and_ordered() {
    let spec = SweepSpec::wide(400, 99).with_buffer(0, 20);
    let a = experiments::sweep(&spec).unwrap();
    let b = experiments::sweep(&spec).unwrap();
    assert_eq!(a, b);
    let serial: Vec<_> = (0..400).map(|k| spec.sample(k)).collect();
    assert_eq!(a.params, serial);
    let total: usize = a.histogram().iter().map(|(_, c)| c).sum();
    assert_eq!(total, 400);
    assert_eq!(a.draws_table().rows.len(), 400);
}

#[test]
fn small_certificate_campaigns_pass() {
    let uniform = SweepSpec::wide(300, 5).with_buffer(0, 30).with_theta(Range::new(0.01, 10.0));
    assert!(experiments::certify_campaign(&uniform).unwrap().all_certified());
    let td = SweepSpec::wide_task_dependent(300, 6).with_buffer(0, 30).with_theta(Range::new(0.01, 10.0));
    let r = experiments::certify_campaign(&td).unwrap();
    assert!(r.all_certified(), "min {}", r.global_relative_min());
}

#[test]
fn ratios_lie_in_unit_interval() {
    let r = experiments::ratio_study(&[1.0, 1.5, 2.0], 200, 3).unwrap();
    assert_eq!(r.rows.len(), 18);
    assert!(r.rows.iter().all(|row| row.ratio > 0.0 && row.ratio <= 1.0));
    assert_eq!(r.get(0, 10.0, 2.0), Some(1.0));
}

#[test]
fn fixed_synergy_sweep_reports_all_expedite() {
    let spec = SweepSpec::wide(200, 1).with_synergy(SynergyRange::Uniform(Range::fixed(2.0)));
    let t = experiments::sweep(&spec).unwrap().histogram_table();
    assert_eq!(t.rows, vec![vec!["1".to_string(), "200".to_string(), "1".to_string()]]);
}

#[test]
fn simulation_report_is_deterministic() {
    let p = SystemParams::new([[10.0, 2.0], [2.0, 13.0]], 1.2, 1.0, 5).unwrap();
    let cfg = SimConfig::events(50_000, 12);
    let a = experiments::simulate_two_station(&p, &RuleChoice::Optimal, &cfg, 3).unwrap().table();
    let b = experiments::simulate_two_station(&p, &RuleChoice::Optimal, &cfg, 3).unwrap().table();
    assert_eq!(a, b);
    assert_eq!(column(&a, "seed"), vec!["12"; 3]);
    assert!(column(&a, "analytic").iter().all(|x| !x.is_empty()));
}
