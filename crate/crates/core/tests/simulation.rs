// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;

use roomtrack_core::graph::BuildingGraph;
use roomtrack_core::node::DetectionModel;
use roomtrack_core::service::{register_plan_checkpoints, LocalLink, Role, Service, ServiceConfig};
use roomtrack_core::sim::{feed, generate, make_nodes, GroundTruth, ScenarioParams};
use roomtrack_core::store::StoreConfig;

fn run(seed: u64, visitors: usize, p_detect: f64) -> (Service, GroundTruth, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let graph = BuildingGraph::default_scenario();
    let mut params = ScenarioParams::new(graph.clone());
    params.n_visitors = visitors;
    params.seed = seed;
    params.duration_s = 3 * 3600;
    let gt = generate(&params).unwrap();
    let cfg = ServiceConfig {
        store: StoreConfig { sync: false, ..StoreConfig::default() },
        ..ServiceConfig::default()
    };
    let (svc, _) = Service::open(Arc::new(graph.clone()), cfg, dir.path()).unwrap();
    register_plan_checkpoints(&svc, Role::Manager, params.start).unwrap();
    let model = DetectionModel { p_detect, ..DetectionModel::default() };
    let mut nodes = make_nodes(&graph, model, seed);
    let mut link = LocalLink { service: &svc, role: Role::Manager };
    let report = feed(&gt, &mut nodes, &mut link, &mut |_| {}).unwrap();
    assert_eq!(report.undelivered, 0);
    assert_eq!(report.registered as usize, gt.visitors.len());
    (svc, gt, dir)
}

#[test]
fn perfect_detection_matches_ground_truth() {
    for seed in [3, 11] {
        let (svc, gt, _dir) = run(seed, 40, 1.0);
        let engine = svc.snapshot();
        for t in gt.event_times() {
            let occ = engine.occupancy(Some(t)).unwrap();
            assert_eq!(occ.per_room, gt.occupancy(t), "seed {seed} at {t}");
            for v in &gt.visitors {
                assert_eq!(engine.last_known_at(&v.tag, t), gt.last_known(&v.tag, t), "seed {seed} {} at {t}", v.tag);
            }
        }
        let times = gt.event_times();
        for w in times.windows(7).step_by(5) {
            for room in &gt.rooms {
                let f = engine.interval_flow(room, w[0], w[6]).unwrap();
                assert_eq!((f.entered, f.left), gt.flow(room, w[0], w[6]));
            }
        }
        assert_eq!(engine.observed_transitions(), gt.transitions());
    }
}

#[test]
fn missed_reads_never_invent_visitors() {
    let (svc, gt, _dir) = run(5, 40, 0.9);
    let engine = svc.snapshot();
    let mut fewer = 0;
    for t in gt.event_times() {
        let truth: BTreeMap<_, _> = gt.occupancy(t);
        let occ = engine.occupancy(Some(t)).unwrap();
        assert!(occ.total <= truth.values().sum::<u64>());
        fewer += (occ.per_room != truth) as u32;
    }
    assert!(fewer > 0, "a 10% miss rate should leave some rooms wrong");
    assert!(engine.observed_transitions() <= gt.transitions());
}
