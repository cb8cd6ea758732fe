// SPDX-License-Identifier: MIT OR Apache-2.0

use interchange_core::dataset::{Condition, TokenClass};
use interchange_core::engine::{CellKey, SweepGrid, SweepRow};
use interchange_core::patch::Component;
use interchange_core::stats::{
    analyze_grid, bonferroni_threshold, bootstrap_ci, correct_multiple, format_specificity, format_stats,
    one_sample_t, paired_t, parse_stats, specificity_map, Specificity, StatsConfig,
};
use interchange_core::Error;
use proptest::prelude::*;

/// Two-sided t tail by Simpson integration of the density.
fn t_two_sided(t: f64, df: f64) -> f64 {
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

/// Lanczos approximation.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

#[test]
fn t_test_by_hand() {
    let r = one_sample_t(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let by_hand = 3.0 / (2.5f64.sqrt() / 5f64.sqrt());
    assert!((r.t - by_hand).abs() < 1e-12);
    assert!((r.t - 4.2426).abs() < 1e-4);
    assert_eq!(r.df, 4);
    assert!((r.p - t_two_sided(r.t, 4.0)).abs() < 1e-8, "{} vs {}", r.p, t_two_sided(r.t, 4.0));

    let samples: Vec<f64> = (0..58).map(|i| 0.3 + ((i * 37) % 11) as f64 / 10.0 - 0.5).collect();
    let r = one_sample_t(&samples).unwrap();
    assert_eq!(r.df, 57);
    assert!((r.p - t_two_sided(r.t, 57.0)).abs() < 1e-8);
    assert!(matches!(one_sample_t(&[0.0; 10]), Err(Error::DegenerateVariance)));
}

#[test]
fn paired_t_is_the_test_on_differences() {
    let a = [1.0, 2.5, 3.0, 4.5];
    let b = [0.5, 2.0, 3.5, 3.0];
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    assert_eq!(paired_t(&a, &b).unwrap(), one_sample_t(&d).unwrap());
    assert!(paired_t(&a, &b[..3]).is_err());
}

#[test]
fn bootstrap_examples() {
    assert_eq!(bootstrap_ci(&[0.7; 9], 10_000, 0.95, 4).unwrap(), (0.7, 0.7));
    let (lo, hi) = bootstrap_ci(&[0.0, 1.0], 10_000, 0.95, 1).unwrap();
    assert!((0.0..=0.5).contains(&lo) && (0.5..=1.0).contains(&hi));
    let samples = [0.3, -1.2, 2.2, 0.9, 0.0, 1.4];
    let a = bootstrap_ci(&samples, 5_000, 0.95, 77).unwrap();
    let b = bootstrap_ci(&samples, 5_000, 0.95, 77).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
    assert!(matches!(bootstrap_ci(&[], 10, 0.95, 0), Err(Error::NotEnoughSamples { .. })));
    assert!(matches!(bootstrap_ci(&[1.0], 10, 0.0, 0), Err(Error::InvalidLevel(_))));
}

#[test]
fn bonferroni_examples() {
    assert_eq!(correct_multiple(&[0.049], 0.05), vec![true]);
    assert_eq!(correct_multiple(&[0.05], 0.05), vec![false]);
    let m = 64 * 12 * 5;
    assert_eq!(m, 3840);
    assert_eq!(bonferroni_threshold(0.005, m), 0.005 / 3840.0);
    let mut p = vec![0.5; m];
    p[0] = 0.005 / 3840.0;
    p[1] = 0.005 / 3840.0 * 0.999;
    let flags = correct_multiple(&p, 0.005);
    assert_eq!(flags.iter().filter(|f| **f).count(), 1);
    assert!(flags[1]);
}

proptest! {
    #[test]
    fn wider_level_contains_narrower(samples in proptest::collection::vec(-5.0f64..5.0, 1..30), seed in any::<u64>()) {
        let narrow = bootstrap_ci(&samples, 500, 0.95, seed).unwrap();
        let wide = bootstrap_ci(&samples, 500, 0.99, seed).unwrap();
        prop_assert!(wide.0 <= narrow.0 && narrow.1 <= wide.1);
        prop_assert!(narrow.0 <= narrow.1);
    }

    #[test]
    fn lowering_alpha_never_adds_flags(p in proptest::collection::vec(0.0f64..=1.0, 1..50), a in 0.0f64..0.2, b in 0.0f64..0.2) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let strict = correct_multiple(&p, lo);
        let loose = correct_multiple(&p, hi);
        for (s, l) in strict.iter().zip(&loose) {
            prop_assert!(!s || *l);
        }
    }

    #[test]
    fn labels_follow_flags(c in any::<bool>(), s in any::<bool>()) {
        let label = Specificity::from_flags(c, s);
        let expected = match (c, s) {
            (true, true) => Specificity::Both,
            (true, false) => Specificity::ContextOnly,
            (false, true) => Specificity::SyntaxOnly,
            (false, false) => Specificity::Neither,
        };
        prop_assert_eq!(label, expected);
    }
}

/// Head-sweep rows for `pairs` pairs where cell `(head, layer, class)` has
/// per-pair values from `value`.
fn head_rows(pairs: usize, heads: usize, layers: usize, value: impl Fn(usize, usize, TokenClass, usize) -> f64) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for p in 0..pairs {
        for layer in 0..layers {
            for head in 0..heads {
                for class in TokenClass::AGGREGATED {
                    let v = value(head, layer, class, p);
                    rows.push(SweepRow {
                        pair_id: format!("p{p}"),
                        condition: Condition::Context,
                        layer,
                        head: Some(head),
                        component: Component::Transformation,
                        class,
                        position: None,
                        log_effect_dir_ab: v,
                        log_effect_dir_ba: v,
                        log_effect: v,
                    });
                }
            }
        }
    }
    rows
}

fn noise(p: usize) -> f64 {
    [0.13, -0.21, 0.07, -0.02, 0.18, -0.11, 0.04, -0.09, 0.15, -0.14][p % 10]
}

#[test]
fn grid_statistics_and_table() {
    let rows = head_rows(10, 2, 3, |h, l, c, p| {
        if (h, l, c) == (1, 2, TokenClass::Context) {
            3.0 + noise(p)
        } else {
            noise(p + h + l)
        }
    });
    let grid = SweepGrid::from_rows(&rows).unwrap();
    let config = StatsConfig {
        resamples: 2_000,
        ..Default::default()
    };
    let stats = analyze_grid(&grid, &config).unwrap();
    assert_eq!(stats.family_size, 2 * 3 * 5);
    let hot = CellKey {
        component: Component::Transformation,
        head: Some(1),
        layer: 2,
        class: TokenClass::Context,
    };
    assert!(stats.cells[&hot].significant);
    assert_eq!(stats.cells.values().filter(|c| c.significant).count(), 1);
    for c in stats.cells.values() {
        assert_eq!(c.df, 9);
        assert!(c.ci_low <= c.mean && c.mean <= c.ci_high);
        assert!((0.0..=1.0).contains(&c.p_value.unwrap()));
    }
    assert_eq!(analyze_grid(&grid, &config).unwrap(), stats);

    let text = format_stats(&stats);
    assert!(text.lines().next().unwrap().ends_with("family_size"));
    assert_eq!(parse_stats(&text, config.alpha).unwrap(), stats);
}

#[test]
fn stricter_alpha_keeps_fewer_heads() {
    // head h has effect size growing with h
    let rows = head_rows(12, 6, 2, |h, _, c, p| {
        let base = if c == TokenClass::Context { 0.05 * (h * h) as f64 } else { 0.0 };
        base + noise(p)
    });
    let grid = SweepGrid::from_rows(&rows).unwrap();
    let mut counts = Vec::new();
    for alpha in [0.05, 0.01, 0.001, 1e-6] {
        let stats = analyze_grid(
            &grid,
            &StatsConfig {
                resamples: 200,
                alpha,
                ..Default::default()
            },
        )
        .unwrap();
        let heads: std::collections::BTreeSet<_> =
            stats.cells.iter().filter(|(_, c)| c.significant).map(|(k, _)| k.head).collect();
        counts.push(heads.len());
    }
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert!(counts[0] > counts[3]);
}

#[test]
fn constant_cells_are_not_tested() {
    let rows = head_rows(4, 1, 1, |_, _, _, _| 0.0);
    let stats = analyze_grid(&SweepGrid::from_rows(&rows).unwrap(), &StatsConfig::default()).unwrap();
    for c in stats.cells.values() {
        assert_eq!((c.t_stat, c.p_value, c.significant), (None, None, false));
        assert_eq!((c.ci_low, c.ci_high), (0.0, 0.0));
    }
}

#[test]
fn specificity_fixtures() {
    let cfg = StatsConfig {
        resamples: 200,
        ..Default::default()
    };
    let analyze = |rows: Vec<SweepRow>| analyze_grid(&SweepGrid::from_rows(&rows).unwrap(), &cfg).unwrap();
    let quiet = analyze(head_rows(10, 3, 4, |h, l, _, p| noise(p + h + l)));
    let one = analyze(head_rows(10, 3, 4, |h, l, c, p| {
        noise(p + h + l) + if (h, l, c) == (2, 3, TokenClass::Verb) { 5.0 } else { 0.0 }
    }));

    let neither = specificity_map(&quiet, &quiet).unwrap();
    assert_eq!(neither.len(), 3 * 4 * 5);
    assert!(neither.iter().all(|c| c.label == Specificity::Neither));

    let map = specificity_map(&one, &quiet).unwrap();
    assert_eq!(map.iter().filter(|c| c.label == Specificity::ContextOnly).count(), 1);
    assert_eq!(map.iter().filter(|c| c.label != Specificity::Neither).count(), 1);
    // the head with context-only cells is listed first
    assert_eq!(map[0].head, Some(2));

    let both = specificity_map(&one, &one).unwrap();
    let hit = both.iter().find(|c| c.label != Specificity::Neither).unwrap();
    assert_eq!(hit.label, Specificity::Both);
    let syn = specificity_map(&quiet, &one).unwrap();
    assert_eq!(syn.iter().filter(|c| c.label == Specificity::SyntaxOnly).count(), 1);

    let text = format_specificity(&map);
    assert_eq!(text.lines().count(), 1 + 60);
    assert!(text.contains("context_only"));

    let smaller = analyze(head_rows(10, 2, 4, |h, l, _, p| noise(p + h + l)));
    assert!(matches!(specificity_map(&one, &smaller), Err(Error::AxisMismatch(_))));
}

#[test]
fn heads_are_ordered_by_earliest_context_layer() {
    let cfg = StatsConfig {
        resamples: 100,
        ..Default::default()
    };
    let rows = head_rows(10, 4, 5, |h, l, c, p| {
        let hot = matches!((h, l, c), (3, 1, TokenClass::Context) | (0, 4, TokenClass::Context) | (1, 2, TokenClass::Mask));
        noise(p + h + l) + if hot { 4.0 } else { 0.0 }
    });
    let context = analyze_grid(&SweepGrid::from_rows(&rows).unwrap(), &cfg).unwrap();
    let quiet = analyze_grid(
        &SweepGrid::from_rows(&head_rows(10, 4, 5, |h, l, _, p| noise(p + h + l))).unwrap(),
        &cfg,
    )
    .unwrap();
    let map = specificity_map(&context, &quiet).unwrap();
    let mut order: Vec<Option<usize>> = Vec::new();
    for c in &map {
        if order.last() != Some(&c.head) {
            order.push(c.head);
        }
    }
    assert_eq!(order, vec![Some(3), Some(1), Some(0), Some(2)]);
}
