//! Throwaway scale pilot (ignored): single-seed WAKER-M vs DR comparison
//! with timing, used to size the acceptance experiment.

mod common;

use std::time::Instant;
use waker_core::curriculum::{SamplerConfig, Strategy};
use waker_core::env::{build_family, FamilyConfig};
use waker_core::eval::{cvar_worst, evaluate_checkpoint, EvalConfig};
use waker_core::explore::ExplorationConfig;
use waker_core::model::ModelConfig;
use waker_core::snapshot;
use waker_core::trainer::{run, TrainerConfig};

#[test]
#[ignore]
fn pilot_waker_vs_dr() {
    let fam = build_family(&FamilyConfig::default()).unwrap();
    for strategy in [Strategy::WakerM, Strategy::Dr] {
        for seed in [0u64, 1] {
            let t0 = Instant::now();
            let dir = tempfile::tempdir().unwrap();
            let sampler = SamplerConfig::default().with_strategy(strategy);
            let trainer = TrainerConfig {
                seed,
                ..TrainerConfig::default()
            };
            let summary = run(
                &fam,
                &sampler,
                &trainer,
                &ExplorationConfig::default(),
                &ModelConfig::default(),
                dir.path(),
            )
            .unwrap();
            let train_secs = t0.elapsed().as_secs_f64();
            let snap = snapshot::load(summary.checkpoints.last().unwrap()).unwrap();
            let t1 = Instant::now();
            let report = evaluate_checkpoint(
                &snap.model,
                &snap.policy,
                &fam,
                &EvalConfig {
                    seed: 1000 + seed,
                    ..EvalConfig::default()
                },
                "final",
            )
            .unwrap();
            let eval_secs = t1.elapsed().as_secs_f64();
            let reach = report.tasks.iter().find(|t| t.task == "reach-goal").unwrap();
            let regrets: Vec<f64> = reach.draws.iter().map(|d| d.2).collect();
            let cvar_reg = cvar_worst(&regrets, 0.1).unwrap();

            // Complex-subset sampling share over the final quarter.
            let text = std::fs::read_to_string(&summary.steps_csv).unwrap();
            let lines: Vec<&str> = text.lines().skip(1).collect();
            let quarter = &lines[lines.len() - lines.len() / 4..];
            let complex_labels: Vec<String> = fam
                .complex_subset()
                .iter()
                .map(|&t| fam.label(t))
                .collect();
            let hits = quarter
                .iter()
                .filter(|l| complex_labels.iter().any(|c| l.split(',').nth(2) == Some(c)))
                .count();
            let share = hits as f64 / quarter.len() as f64;

            println!(
                "{strategy} seed {seed}: train {train_secs:.1}s eval {eval_secs:.1}s | \
                 max_wm_err {:.4} | reach-goal cvar-regret {cvar_reg:.4} mean_regret {:.4} | \
                 ood_mean_regret {:.4} | complex share (final quarter) {share:.3}",
                report.max_wm_error, reach.mean_regret, reach.ood_mean_regret
            );
        }
    }
}
