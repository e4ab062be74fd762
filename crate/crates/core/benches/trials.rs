//! Batch trial throughput, sequential against rayon.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use harmonic_core::agent::StrategicAgent;
use harmonic_core::kb::fixture_knowledge;
use harmonic_core::llm::synthetic::SyntheticProvider;
use harmonic_core::llm::{Condition, LlmAgent};
use harmonic_core::ontoagent::OntoAgent;
use harmonic_core::runner::{run_trials, Mode, RunError};
use harmonic_core::sim::ScenarioFixture;

const TRIALS: u32 = 16;

fn modes() -> Vec<Mode> {
    if cfg!(feature = "parallel") {
        vec![Mode::Sequential, Mode::Parallel]
    } else {
        vec![Mode::Sequential]
    }
}

fn batches(c: &mut Criterion) {
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());
    let budget = fixture.kinematics.budget;

    let onto = |_: u32| -> Result<Box<dyn StrategicAgent + Send>, RunError> {
        Ok(Box::new(OntoAgent::new(kb.clone(), &fixture)))
    };
    let llm = |i: u32| -> Result<Box<dyn StrategicAgent + Send>, RunError> {
        let provider = SyntheticProvider::new("fixture-a", Condition::KE, 0, i)?;
        Ok(Box::new(LlmAgent::new(
            "fixture-a",
            Condition::KE,
            Box::new(provider),
            kb.clone(),
            &fixture,
        )))
    };

    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    for (name, make) in [
        ("ontoagent", &onto as &(dyn Fn(u32) -> _ + Sync)),
        ("synthetic-llm", &llm),
    ] {
        for mode in modes() {
            group.bench_with_input(BenchmarkId::new(name, format!("{mode:?}")), &mode, |b, &mode| {
                b.iter(|| run_trials(make, &fixture, TRIALS, 0, budget, mode, None).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batches);
criterion_main!(benches);
