use serde::Deserialize;
use tending_bridge::Session;
use tending_core::config::WorkbenchConfig;

#[derive(Deserialize)]
struct Fixture {
    name: String,
    prelude: Vec<String>,
    send: String,
    expect: Vec<String>,
}

fn fixtures() -> Vec<Fixture> {
    include_str!("fixtures/replies.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn every_fixture_gets_its_exact_reply() {
    let mut failures = Vec::new();
    for f in fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new(WorkbenchConfig::default(), dir.path());
        for p in &f.prelude {
            s.handle_text(p, 0.0);
        }
        let got: Vec<String> = s.handle_text(&f.send, 0.0).replies.iter().map(|m| m.to_json()).collect();
        if got != f.expect {
            failures.push(format!("{}: got {:?}", f.name, got));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn every_client_tag_has_a_fixture() {
    let tags = [
        "hello",
        "capture_dgp",
        "capture_dvsp",
        "start_follow",
        "drag_object",
        "finish_teaching",
        "start_training",
        "start_execution",
        "abort",
    ];
    let sent: Vec<String> = fixtures()
        .iter()
        .filter_map(|f| serde_json::from_str::<serde_json::Value>(&f.send).ok())
        .filter_map(|v| v["type"].as_str().map(str::to_string))
        .collect();
    for t in tags {
        assert!(sent.iter().any(|s| s == t), "no fixture sends {t}");
    }
}
