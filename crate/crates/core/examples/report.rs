//! Computes metrics from run records and prints the markdown report.

use sorryforge::harness::{compute_metrics, emit_report, ReportFormat, RunRecord};
use sorryforge::model::{ProofProposal, RepoCategory, VerdictStatus, VerificationVerdict};
use sorryforge::provers::{ApproachGroup, AttemptRecord, ProverInfo, TokenUsage};

fn attempt(task: &str, iteration: u32, ok: bool) -> AttemptRecord {
    AttemptRecord {
        proposal: ProofProposal { sorry_id: task.into(), text: "simp".into(), origin: "s".into(), iteration },
        verdict: VerificationVerdict::new(if ok { VerdictStatus::Accepted } else { VerdictStatus::BuildFailure }, vec![]),
        tokens: TokenUsage { prompt: 900, completion: 60 },
        wall_ms: 0,
        tool_rounds: 0,
    }
}

fn main() {
    let infos = vec![
        ProverInfo { id: "tactics".into(), group: ApproachGroup::Deterministic, samples: None },
        ProverInfo { id: "sampler".into(), group: ApproachGroup::GeneralPurpose, samples: Some(2) },
    ];
    let mut runs = Vec::new();
    for t in 0..6 {
        let task = format!("t{t}");
        let category = Some(if t < 4 { RepoCategory::Formalization } else { RepoCategory::Pedagogical });
        let tac = vec![attempt(&task, 0, t == 0)];
        let smp = vec![attempt(&task, 0, t == 1), attempt(&task, 1, t == 1 || t == 4)];
        for (prover, attempts) in [("tactics", tac), ("sampler", smp)] {
            runs.push(RunRecord {
                sorry_id: task.clone(),
                prover_id: prover.into(),
                solved: attempts.iter().any(|a| a.verdict.is_accepted()),
                attempts,
                category,
                diagnostic: None,
            });
        }
    }
    print!("{}", emit_report(&compute_metrics(&runs, &infos), ReportFormat::Markdown));
}
