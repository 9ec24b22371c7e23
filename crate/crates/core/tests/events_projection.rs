//! Local projections on event panels with known responses.

use technet::econo::Panel;
use technet::events::{
    detect_events, local_projection, read_irf_csv, subperiod_compare, write_irf_csv, EventSet,
    LpErrors, LpResult, LpSpec, LpVars, ShockKind,
};
use technet::synth::EventDgp;
use technet::Error;

fn vars() -> LpVars {
    LpVars {
        outcome: "dn".into(),
        control: "X".into(),
    }
}

fn setup(dgp: &EventDgp, seed: u64) -> (Panel, EventSet) {
    let (p, _) = dgp.generate(seed).unwrap();
    let first = p.years[0];
    let ev = detect_events(
        &p,
        "L",
        ShockKind::Direct,
        (first, *p.years.last().unwrap()),
    )
    .unwrap();
    (p, ev)
}

fn small() -> EventDgp {
    EventDgp {
        sectors: 40,
        periods: 30,
        event_window: (4, 20),
        ..Default::default()
    }
}

#[test]
fn detected_events_match_planted_years() {
    let dgp = small();
    let (p, planted) = dgp.generate(1).unwrap();
    let ev = detect_events(
        &p,
        "L",
        ShockKind::Direct,
        (p.years[0], *p.years.last().unwrap()),
    )
    .unwrap();
    for (i, s) in p.sectors.iter().enumerate() {
        assert_eq!(ev.year_of(s), Some(p.years[planted[i]]));
    }
}

#[test]
fn shifting_calendar_years_leaves_the_path_unchanged() {
    let (p, ev) = setup(&small(), 2);
    let base = local_projection(&p, &ev, &vars(), &LpSpec::default(), "full").unwrap();
    let mut shifted =
        Panel::new(p.sectors.clone(), p.years.iter().map(|y| y + 37).collect()).unwrap();
    for name in p.names() {
        shifted.set(name, p.column(name).unwrap().to_vec()).unwrap();
    }
    let mut ev2 = ev.clone();
    ev2.events.iter_mut().for_each(|e| e.year += 37);
    let moved = local_projection(&shifted, &ev2, &vars(), &LpSpec::default(), "full").unwrap();
    for (a, b) in base.points.iter().zip(&moved.points) {
        if a.coef.is_nan() {
            assert!(b.coef.is_nan());
            continue;
        }
        assert!((a.coef - b.coef).abs() < 1e-10);
        assert!((a.se - b.se).abs() < 1e-10);
    }
}

#[test]
fn scaling_the_outcome_scales_the_path() {
    let (mut p, ev) = setup(&small(), 3);
    let base = local_projection(&p, &ev, &vars(), &LpSpec::default(), "full").unwrap();
    let c = 4.0;
    let scaled: Vec<f64> = p.column("dn").unwrap().iter().map(|v| c * v).collect();
    p.set("dn", scaled).unwrap();
    let r = local_projection(&p, &ev, &vars(), &LpSpec::default(), "full").unwrap();
    for (a, b) in base.points.iter().zip(&r.points) {
        if a.coef.is_nan() {
            assert!(b.coef.is_nan());
            continue;
        }
        assert!(
            (b.coef - c * a.coef).abs() <= 1e-12 * a.coef.abs().max(1.0),
            "{} vs {}",
            b.coef,
            c * a.coef
        );
        assert!((b.se - c * a.se).abs() <= 1e-10 * a.se.max(1.0));
    }
}

/// Bands nest at every identified horizon; at least one is identified.
fn bands_nest(r: &LpResult) {
    assert!(r.points.iter().any(|p| p.coef.is_finite()));
    for p in r.points.iter().filter(|p| p.coef.is_finite()) {
        assert!(p.lo95 <= p.lo90 && p.lo90 <= p.coef && p.coef <= p.hi90 && p.hi90 <= p.hi95);
    }
}

#[test]
fn horizon_contract() {
    let (p, ev) = setup(&small(), 4);
    let zero = LpSpec {
        horizons: 0,
        ..Default::default()
    };
    assert!(matches!(
        local_projection(&p, &ev, &vars(), &zero, "full"),
        Err(Error::Input(_))
    ));

    let short = p.slice_years(p.years[0], p.years[0] + 7).unwrap();
    let ev_short = detect_events(
        &short,
        "L",
        ShockKind::Direct,
        (short.years[0], short.years[7]),
    )
    .unwrap();
    let spec = LpSpec {
        clean_controls: false,
        ..Default::default()
    };
    let r = local_projection(&short, &ev_short, &vars(), &spec, "short").unwrap();
    // Eight years leave four horizons: two outcome lags, two usable years.
    assert_eq!(r.truncated_from, Some(10));
    assert_eq!(r.points.len(), 4);

    for errors in [LpErrors::Hc1, LpErrors::ClusterSector] {
        for clean_controls in [true, false] {
            let spec = LpSpec {
                errors,
                clean_controls,
                ..Default::default()
            };
            let r = local_projection(&p, &ev, &vars(), &spec, "full").unwrap();
            assert_eq!(r.points.len(), 10);
            bands_nest(&r);
        }
    }
    let full = local_projection(
        &p,
        &ev,
        &vars(),
        &LpSpec {
            clean_controls: false,
            ..Default::default()
        },
        "full",
    )
    .unwrap();
    assert!(full.columns[9].iter().any(|c| c == "F2.E"));
    assert!(full.columns[0].iter().all(|c| c != "F2.E"));
}

#[test]
fn subperiods() {
    let dgp = EventDgp {
        sectors: 60,
        periods: 40,
        event_window: (3, 34),
        ..Default::default()
    };
    let (p, ev) = setup(&dgp, 5);
    let spec = LpSpec {
        horizons: 6,
        ..Default::default()
    };
    let only = subperiod_compare(&p, &ev, &vars(), &spec, &[]).unwrap();
    assert_eq!(only.len(), 1);
    assert_eq!(only[0].subperiod, "full");

    let (y0, y1) = (p.years[0], *p.years.last().unwrap());
    let mid = y0 + 19;
    let splits = vec![
        ("early".to_string(), y0, mid),
        ("late".to_string(), mid + 1, y1),
    ];
    let runs = subperiod_compare(&p, &ev, &vars(), &spec, &splits).unwrap();
    assert_eq!(runs.len(), 3);
    for r in &runs {
        assert_eq!(
            r.points.iter().map(|q| q.horizon).collect::<Vec<_>>(),
            (1..=6).collect::<Vec<_>>()
        );
        bands_nest(r);
    }
    // Same process in both halves: the 95% bands overlap at every horizon.
    for (a, b) in runs[1].points.iter().zip(&runs[2].points) {
        assert!(
            a.lo95 <= b.hi95 && b.lo95 <= a.hi95,
            "horizon {}",
            a.horizon
        );
    }

    let tiny = vec![("tiny".to_string(), y0, y0 + 5)];
    match subperiod_compare(&p, &ev, &vars(), &spec, &tiny) {
        Err(Error::Input(m)) => assert!(m.contains("tiny")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn irf_csv_round_trip() {
    let (p, ev) = setup(&small(), 6);
    let r = local_projection(
        &p,
        &ev,
        &vars(),
        &LpSpec {
            horizons: 4,
            ..Default::default()
        },
        "full",
    )
    .unwrap();
    let mut buf = Vec::new();
    write_irf_csv(std::slice::from_ref(&r), &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("shock,subperiod,horizon,coef,se,lo90,hi90,lo95,hi95\n"));
    let rows = read_irf_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, p) in rows.iter().zip(&r.points) {
        assert_eq!(row.shock, "direct");
        assert_eq!(row.horizon, p.horizon);
        assert_eq!(row.coef, p.coef);
        assert_eq!(row.hi95, p.hi95);
    }
}

#[test]
fn planted_step_and_placebo() {
    let reps = 30;
    let spec = LpSpec::default();
    let mut step_mean = [0.0; 10];
    let mut covered = 0usize;
    for seed in 0..reps {
        let (p, ev) = setup(&EventDgp::default(), 100 + seed);
        for (k, pt) in local_projection(&p, &ev, &vars(), &spec, "full")
            .unwrap()
            .points
            .iter()
            .enumerate()
        {
            step_mean[k] += pt.coef / reps as f64;
        }
        let (p, ev) = setup(
            &EventDgp {
                step: 0.0,
                ..Default::default()
            },
            500 + seed,
        );
        let r = local_projection(&p, &ev, &vars(), &spec, "full").unwrap();
        covered += r
            .points
            .iter()
            .filter(|q| q.lo95 <= 0.0 && 0.0 <= q.hi95)
            .count();
    }
    for (k, m) in step_mean.iter().enumerate() {
        let truth = if k + 1 >= 3 { 0.2 } else { 0.0 };
        assert!((m - truth).abs() <= 0.05, "horizon {}: {m}", k + 1);
    }
    let coverage = covered as f64 / (10 * reps) as f64;
    assert!(coverage >= 0.9, "{coverage}");
}

#[test]
fn common_event_year_is_not_identified() {
    // Every sector's event falls in the same year, so the event dummy is a
    // year dummy on every horizon's sample.
    let dgp = EventDgp {
        sectors: 30,
        periods: 25,
        event_window: (10, 10),
        ..Default::default()
    };
    let (p, ev) = setup(&dgp, 7);
    let r = local_projection(
        &p,
        &ev,
        &vars(),
        &LpSpec {
            horizons: 4,
            ..Default::default()
        },
        "full",
    )
    .unwrap();
    assert_eq!(r.points.len(), 4);
    for q in &r.points {
        assert!(
            q.coef.is_nan() && q.se.is_nan() && q.lo95.is_nan(),
            "horizon {}: {q:?}",
            q.horizon
        );
    }
    let mut buf = Vec::new();
    write_irf_csv(std::slice::from_ref(&r), &mut buf).unwrap();
    assert!(read_irf_csv(buf.as_slice()).unwrap()[0].coef.is_nan());
}

/// Rank of the sector and year indicator columns, with or without the event
/// dummy appended, on the clean-control sample of horizon `k`.
fn effects_rank(n_years: usize, event_idx: &[usize], k: usize, with_event: bool) -> usize {
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &e) in event_idx.iter().enumerate() {
        let kept: Vec<usize> = (2..n_years)
            .filter(|&t| t + k < n_years && (t == e || t + k < e))
            .collect();
        if kept.len() > 1 {
            rows.extend(kept.iter().map(|&t| (i, t, if t == e { 1.0 } else { 0.0 })));
        }
    }
    let cols = event_idx.len() + n_years + usize::from(with_event);
    let m = nalgebra::DMatrix::from_fn(rows.len(), cols, |r, c| {
        let (i, t, ev) = rows[r];
        if c < event_idx.len() {
            f64::from(c == i)
        } else if c < event_idx.len() + n_years {
            f64::from(c - event_idx.len() == t)
        } else {
            ev
        }
    });
    m.rank(1e-9)
}

#[test]
fn unidentified_horizons_match_a_rank_oracle() {
    let (p, ev) = setup(&small(), 4);
    let idx: Vec<usize> = p
        .sectors
        .iter()
        .map(|s| {
            p.years
                .iter()
                .position(|&y| Some(y) == ev.year_of(s))
                .unwrap()
        })
        .collect();
    let r = local_projection(&p, &ev, &vars(), &LpSpec::default(), "full").unwrap();
    let mut unidentified = 0;
    for q in &r.points {
        let k = q.horizon;
        let identified =
            effects_rank(p.n_years(), &idx, k, true) > effects_rank(p.n_years(), &idx, k, false);
        assert_eq!(q.coef.is_finite(), identified, "horizon {k}");
        unidentified += usize::from(!identified);
    }
    assert!(unidentified > 0, "the check should cover both outcomes");
}
