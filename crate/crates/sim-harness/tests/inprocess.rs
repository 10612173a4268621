use simharness::inprocess::{self, Simulation};
use simharness::scenario::{Disturbance, Scenario};

fn with_outages(seed: u64, agents: usize, ops: usize) -> Scenario {
    let mut s = Scenario::basic(seed, agents, ops);
    s.disturbances = vec![
        Disturbance { agent: 1, disconnect_at: 8_000, reconnect_at: 14_000 },
        Disturbance { agent: 2, disconnect_at: 20_000, reconnect_at: 21_500 },
    ];
    s
}

#[test]
fn default_scenario_passes_every_check() {
    let report = inprocess::run(with_outages(7, 4, 300));
    println!("{report}");
    assert!(report.passed, "{report}");
    assert_eq!(report.reconnects, 2);
    assert_eq!(report.ops.submitted, 1200);
    assert_eq!(report.ops.accepted + report.ops.rejected, 1200);
}

#[test]
fn equal_seeds_give_equal_transcripts() {
    let a = inprocess::run(with_outages(3, 3, 150));
    let b = inprocess::run(with_outages(3, 3, 150));
    let c = inprocess::run(with_outages(4, 3, 150));
    assert_eq!(a.transcript_digest, b.transcript_digest);
    assert_eq!(a.final_seq, b.final_seq);
    assert_ne!(a.transcript_digest, c.transcript_digest);
}

#[test]
fn one_agent_creating_notes() {
    let mut s = Scenario::basic(1, 1, 10);
    s.op_mix = [(mindmap_core::PayloadKind::CreateNote, 1)].into_iter().collect();
    s.stale_fraction = 0.0;
    let (report, sim) = Simulation::new(s).run();
    assert!(report.passed, "{report}");
    assert_eq!(sim.room().state().notes.len(), 10);
    assert_eq!(report.final_seq, 10);
}
