use super::*;
use crate::model::{normalize_node_id, parse_timestamp, validate_tag_id};
use crate::wire::frame_message;

const SAMPLE_REPORT: &str = "<IpAdress | Name | Location | LastMeasurementTime>= <
192.168.0.1| Rp1 | Room1 |28-09-2017T11:08:15 ,
192.168.0.2| Rp2 | Room2 |28-09-2017T11:08:16 ,
192.168.0.3| Rp3 | Room3 |28-09-2017T11:08:17 ,
192.168.0.3| Rp3 | Room3 |28-09-2017T11:08:17 ,
... >";

fn ts(s: &str) -> Timestamp {
    parse_timestamp(s).unwrap()
}

fn tag(s: &str) -> TagId {
    validate_tag_id(s).unwrap()
}

fn open(dir: &Path) -> Service {
    let cfg = ServiceConfig {
        store: StoreConfig { sync: false, ..StoreConfig::default() },
        ..ServiceConfig::default()
    };
    Service::open(Arc::new(BuildingGraph::default_scenario()), cfg, dir).unwrap().0
}

fn setup(svc: &Service) {
    for (node, name, room) in [
        ("192.168.0.1", "Rp1", "Room1"),
        ("192.168.0.2", "Rp2", "Room2"),
        ("192.168.0.3", "Rp3", "Room3"),
    ] {
        svc.register_checkpoint(
            Role::Manager,
            normalize_node_id(node).unwrap(),
            Name::new(name).unwrap(),
            RoomId::new(room).unwrap(),
            ts("28-09-2017T11:00:00"),
        )
        .unwrap();
    }
    for (i, t) in ["01008C7200", "01008C7201", "01008C7202"].iter().enumerate() {
        svc.register_visitor(
            Role::Manager,
            tag(t),
            Name::new(&format!("Visitor Name{}", i + 1)).unwrap(),
            Demographic::Unspecified,
            ts("28-09-2017T11:05:00"),
        )
        .unwrap();
    }
}

fn sample_frame() -> Vec<u8> {
    let payload = format!(
        "{SAMPLE_REPORT}\n<TagId | Name>=<01008C7200 | 01008C7200, 01008C7201 | 01008C7201, 01008C7202 | 01008C7202, 01008C7202 | 01008C7202>"
    );
    frame_message(FrameKind::Report, &payload).unwrap()
}

#[test]
fn sample_report_is_acked_and_duplicate_collapsed() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    setup(&svc);
    let out = svc.ingest(&sample_frame());
    assert!(matches!(out.reply, Reply::Ok(Some(_))), "{:?}", out.reply);
    let d = svc.snapshot().diagnostics();
    assert_eq!((d.reads, d.duplicates), (4, 1));
    let occ = svc.occupancy(None).unwrap();
    for room in ["Room1", "Room2", "Room3"] {
        assert_eq!(occ.per_room[&RoomId::new(room).unwrap()], 1, "{room}");
    }

    // redelivery: acked with the same id, nothing appended
    let again = svc.ingest(&sample_frame());
    assert_eq!(again.reply, out.reply);
    assert_eq!(again.appended, 0);
    assert_eq!(svc.snapshot().diagnostics(), d);

    let pos = svc.last_position(&tag("01008C7202")).unwrap();
    assert_eq!((pos.room.as_str(), pos.seen_at), ("Room3", ts("28-09-2017T11:08:17")));
}

#[test]
fn unregistered_node_is_rejected_with_403() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let out = svc.ingest(&sample_frame());
    assert!(matches!(out.reply, Reply::Err { status: 403, .. }));
    let hb = frame_message(FrameKind::Heartbeat, "192.168.0.9 28-09-2017T11:00:00").unwrap();
    assert!(matches!(svc.ingest(&hb).reply, Reply::Err { status: 403, .. }));
}

#[test]
fn malformed_frames_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    for bad in [&b"report\n<nope>\n\n"[..], b"bogus\nx\n\n", b"report\n", b"roster\n<TagId | Name>=<>\n\n"] {
        assert!(matches!(svc.ingest(bad).reply, Reply::Err { status: 400, .. }), "{bad:?}");
    }
}

#[test]
fn roles_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let node = normalize_node_id("192.168.0.1").unwrap();
    let r = svc.register_checkpoint(Role::Viewer, node.clone(), Name::new("Rp1").unwrap(), RoomId::new("Room1").unwrap(), ts("28-09-2017T11:00:00"));
    assert_eq!(r.unwrap_err().status(), 403);
    setup(&svc);
    let dup = svc.register_checkpoint(Role::Manager, node, Name::new("Rp1").unwrap(), RoomId::new("Room1").unwrap(), ts("28-09-2017T11:00:00"));
    assert_eq!(dup.unwrap_err().status(), 409);
    let unknown_room = svc.register_checkpoint(
        Role::Manager,
        normalize_node_id("10.0.0.7").unwrap(),
        Name::new("X").unwrap(),
        RoomId::new("Attic").unwrap(),
        ts("28-09-2017T11:00:00"),
    );
    assert_eq!(unknown_room.unwrap_err().status(), 404);
    let again = svc.register_visitor(Role::Manager, tag("01008C7200"), Name::new("A").unwrap(), Demographic::Female, ts("28-09-2017T11:06:00"));
    assert_eq!(again.unwrap_err().status(), 409);
    assert_eq!(svc.return_tag(Role::Manager, tag("01008C72FF"), ts("28-09-2017T12:00:00")).unwrap_err().status(), 404);
    let auth = Auth { manager_token: "m".into(), viewer_token: Some("v".into()) };
    assert_eq!(auth.role(Some("m")), Some(Role::Manager));
    assert_eq!(auth.role(Some("v")), Some(Role::Viewer));
    assert_eq!(auth.role(Some("x")), None);
    assert_eq!(auth.role(None), None);
}

#[test]
fn empty_gateway_reports_zero_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    let occ = svc.occupancy(None).unwrap();
    assert_eq!(occ.total, 0);
    assert!(occ.per_room.values().all(|&n| n == 0));
    assert!(render_occupancy(&occ).contains("\ntotal: 0\n"));
}

#[test]
fn acked_state_survives_restart_and_snapshots_agree() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let svc = open(dir.path());
        setup(&svc);
        svc.ingest(&sample_frame());
        svc.snapshot_now().unwrap();
        svc.return_tag(Role::Manager, tag("01008C7200"), ts("28-09-2017T11:30:00")).unwrap();
        svc.snapshot().encode_state()
    };
    let (svc, info) = Service::open(Arc::new(BuildingGraph::default_scenario()), ServiceConfig::default(), dir.path()).unwrap();
    assert!(matches!(info.source, RestoreSource::Snapshot(_)));
    assert_eq!(svc.snapshot().encode_state(), before);
    // the batch id registry is part of the log
    assert_eq!(svc.ingest(&sample_frame()).appended, 0);
    let a = audit(svc.graph().clone(), EngineConfig::default(), dir.path()).unwrap();
    assert_eq!(a.snapshot_matches, Some(true));
    assert_eq!(a.active, 2);
}

#[test]
fn alert_goes_to_outbox_once_per_cooldown() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    setup(&svc);
    svc.ingest(&sample_frame());
    let now = ts("28-09-2017T11:10:00");
    assert_eq!(
        svc.evac_alert(Role::Viewer, &[Channel::Email], &["ops@example.org".into()], now).unwrap_err().status(),
        403
    );
    let (report, outcome) = svc.evac_alert(Role::Manager, &[Channel::Email], &["ops@example.org".into()], now).unwrap();
    assert!(matches!(outcome, AlertOutcome::Queued(ref n) if n.len() == 1));
    assert_eq!(report.total_inside, 3);
    assert_eq!(svc.outbox_len(), 1);
    let (_, again) = svc.evac_alert(Role::Manager, &[Channel::Email], &["ops@example.org".into()], now.plus_seconds(5)).unwrap();
    assert!(matches!(again, AlertOutcome::Coalesced { .. }));
    assert_eq!(svc.outbox_len(), 1);
    assert!(render_alert(&report, &outcome, 1).starts_with("alert: queued\nnotifications: 1\noutbox_records: 1\nat: "));
}

#[test]
fn alert_describes_the_building_at_its_time() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    setup(&svc);
    svc.ingest(&sample_frame());
    svc.return_tag(Role::Manager, tag("01008C7201"), ts("28-09-2017T11:30:00")).unwrap();
    let at = ts("28-09-2017T11:20:00");
    let (report, outcome) = svc.evac_alert(Role::Manager, &[Channel::Sms], &["+300000".into()], at).unwrap();
    assert_eq!((report.at, report.total_inside), (at, 3));
    let AlertOutcome::Queued(n) = outcome else { panic!("not queued") };
    assert!(n[0].body.contains("11:20:00: 3 inside"), "{}", n[0].body);
    // later than anything recorded: the latest state
    let (report, _) = svc.evac_alert(Role::Manager, &[Channel::Sms], &["+300000".into()], ts("28-09-2017T12:00:00")).unwrap();
    assert_eq!((report.at, report.total_inside), (ts("28-09-2017T11:30:00"), 2));
}

#[test]
fn responses_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    setup(&svc);
    svc.ingest(&sample_frame());
    let room = RoomId::new("Room3").unwrap();
    let f = svc.flow(&room, ts("28-09-2017T11:00:00"), ts("28-09-2017T11:10:00")).unwrap();
    assert_eq!((f.entered, f.left), (1, 0));
    let a = (render_occupancy(&svc.occupancy(None).unwrap()), render_checkpoints(&svc.checkpoints()));
    let b = (render_occupancy(&svc.occupancy(None).unwrap()), render_checkpoints(&svc.checkpoints()));
    assert_eq!(a, b);
    assert_eq!(
        render_flow(ts("28-09-2017T11:08:17"), &f),
        "at: 28-09-2017T11:08:17\nroom: Room3\nfrom: 28-09-2017T11:00:00\nto: 28-09-2017T11:10:00\nentered: 1\nleft: 0\n"
    );
}

#[test]
fn storage_failure_is_fail_stop() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path());
    setup(&svc);
    svc.lock_writer().store.inject(crate::store::FaultPlan { fail_append: Some(0), ..Default::default() });
    assert!(matches!(svc.ingest(&sample_frame()).reply, Reply::Err { status: 503, .. }));
    assert!(svc.is_halted());
    let r = svc.return_tag(Role::Manager, tag("01008C7200"), ts("28-09-2017T12:00:00"));
    assert_eq!(r.unwrap_err().status(), 503);
    // state untouched by the failed ingest
    assert_eq!(svc.snapshot().diagnostics().reads, 0);
}
