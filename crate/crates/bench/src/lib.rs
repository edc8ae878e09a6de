//! Fixtures shared by the optimizer benchmarks.

use std::collections::BTreeMap;

use knobtune_core::bo::CandidateSampler;
use knobtune_core::harness::{SurfaceDim, SyntheticSurface};
use knobtune_core::knowledge::StructuredKnob;
use knobtune_core::space::{build_tiny_space, SpaceOptions};
use knobtune_core::util::rng;
use knobtune_core::{DiskKind, KnobCatalog, KnobKind, KnobSpec, KnobValue, Objective, SearchSpace, SystemProfile, Unit};

fn name(i: usize) -> String {
    format!("knob_{i:02}")
}

/// `dims` integer knobs over [0, 1e6], each with a suggested value and a
/// knowledge window, every fourth one boolean.
pub fn synthetic_space(dims: usize) -> SearchSpace {
    let mut knobs = BTreeMap::new();
    let mut sks = BTreeMap::new();
    for i in 0..dims {
        let boolean = i % 4 == 3;
        let spec = KnobSpec {
            name: name(i),
            kind: if boolean { KnobKind::Boolean } else { KnobKind::Integer },
            vendor_min: (!boolean).then_some(0.0),
            vendor_max: (!boolean).then_some(1e6),
            default_value: if boolean { KnobValue::Text("on".into()) } else { KnobValue::Number(1000.0 * i as f64) },
            unit: Unit::None,
            categories: if boolean { vec!["off".into(), "on".into()] } else { Vec::new() },
            description: String::new(),
            category: String::new(),
        };
        knobs.insert(spec.name.clone(), spec);
        let lo = 20_000.0 * i as f64;
        sks.insert(
            name(i),
            StructuredKnob {
                knob_name: name(i),
                suggested_values: vec![if boolean { KnobValue::Text("off".into()) } else { KnobValue::Number(lo + 100_000.0) }],
                min_value: (!boolean).then_some(KnobValue::Number(lo)),
                max_value: (!boolean).then_some(KnobValue::Number(lo + 300_000.0)),
                special_value: None,
            },
        );
    }
    let catalog = KnobCatalog {
        profile: SystemProfile::new(16 << 30, DiskKind::Ssd, 8).expect("valid profile"),
        knobs,
    };
    build_tiny_space(&catalog.names(), &catalog, &sks, &SpaceOptions::default()).expect("synthetic space builds")
}

/// Features and targets of `n` uniform samples from the full space, with
/// the categorical mask.
pub fn training_set(space: &SearchSpace, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let sampler = CandidateSampler::new(space).expect("sampler");
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| sampler.features(&space.sample_full(&mut r))).collect();
    let y = x
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, v)| (v - 0.1 * (j % 7) as f64).powi(2)).sum())
        .collect();
    (x, y, sampler.categorical().to_vec())
}

/// A latency surface over the knobs of [`synthetic_space`].
pub fn surface(dims: usize) -> SyntheticSurface {
    let dims = (0..dims)
        .map(|i| {
            let target = if i % 4 == 3 {
                KnobValue::Text("off".into())
            } else {
                KnobValue::Number(20_000.0 * i as f64 + 150_000.0)
            };
            (name(i), SurfaceDim { target, weight: 1.0, lo: 0.0, hi: 1e6, default: None })
        })
        .collect();
    SyntheticSurface {
        objective: Objective::Latency,
        base: 100.0,
        dims,
        specials: Vec::new(),
        crashes: Vec::new(),
        noise: 0.01,
        seed: 3,
        wall_ms: 0,
        plans: BTreeMap::new(),
    }
}
