use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use spotex_core::{load_venue, Fingerprint};
use spotex_dpi::{router, AppState, ManualClock, Mode, ServerConfig};
use tower::ServiceExt;

const T0: u64 = 1_700_000_000_000;
const ALICE: &str = "alice-session-0001";
const BOB: &str = "bob-session-000002";

const RULES: &str = r#"# cafe rules
SNIPPET cafe_coupon TITLE "Café coupon" HTML <<<<p>10% off</p>>>>
SNIPPET lobby_map TITLE "Lobby" HTML <<<<a href="/map">map</a>>>>
RULE cafe_rule PRIORITY 5 IF visible(ssid:"Café") THEN SHOW cafe_coupon
RULE lobby_rule IF visible(ssid:"Lobby") AND visible(ssid:"Café") THEN SHOW lobby_map
"#;

fn testdata(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../testdata/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

struct Harness {
    app: Router,
    state: Arc<AppState>,
    clock: Arc<ManualClock>,
    dir: tempfile::TempDir,
}

fn harness(mode: Mode, venue_doc: Option<&str>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let rules_path = dir.path().join("rules.spotex");
    std::fs::write(&rules_path, RULES).unwrap();
    let clock = Arc::new(ManualClock::new(T0));
    let venue = venue_doc.map(|d| load_venue(d).unwrap());
    let state = Arc::new(
        AppState::new(
            ServerConfig::new(&rules_path, mode),
            RULES.into(),
            venue,
            clock.clone(),
        )
        .unwrap(),
    );
    Harness {
        app: router(state.clone()),
        state,
        clock,
        dir,
    }
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

impl Harness {
    async fn send(&self, method: Method, uri: &str, body: &str) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send_request(req).await
    }

    async fn send_request(&self, req: Request<Body>) -> Reply {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            content_type,
            body: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, "").await
    }

    async fn post(&self, uri: &str, body: &str) -> Reply {
        self.send(Method::POST, uri, body).await
    }
}

fn venue_doc() -> String {
    testdata("venue.json")
}

#[tokio::test]
async fn jsonp_wraps_canonical_json() {
    let h = harness(Mode::Push, None);
    let r = h
        .post(
            &format!("/fingerprint?session={ALICE}"),
            r#"[{"SSID":"Café","MAC":"aa-bb-cc-dd-ee-ff","RSSI":-65}]"#,
        )
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({"merged": 1}));

    let r = h
        .get(&format!("/getNetworks?session={ALICE}&callback=f"))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.content_type.starts_with("application/javascript"));
    assert_eq!(
        r.body,
        format!(
            r#"f([{{"SSID":"Café","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-65,"kind":"wifi","ts":{T0}}}]);"#
        )
    );

    let bare = h.get(&format!("/getNetworks?session={ALICE}")).await;
    assert_eq!(bare.content_type, "application/json");
    assert_eq!(format!("f({});", bare.body), r.body);
}

#[tokio::test]
async fn unknown_or_missing_session_is_empty() {
    let h = harness(Mode::Push, None);
    assert_eq!(
        h.get("/getNetworks?session=nobody-knows-this-one&callback=f")
            .await
            .body,
        "f([]);"
    );
    assert_eq!(h.get("/getNetworks?callback=f").await.body, "f([]);");
    assert_eq!(
        h.get("/getNetworks?session=short&callback=f").await.body,
        "f([]);"
    );
    assert_eq!(h.get("/getNetworks").await.body, "[]");
}

#[tokio::test]
async fn bad_callback_is_rejected() {
    let h = harness(Mode::Push, None);
    for cb in ["alert(1);x", "1abc", "", "a.b"] {
        let uri = format!("/getNetworks?session={ALICE}&callback={}", urlencode(cb));
        assert_eq!(h.get(&uri).await.status, StatusCode::BAD_REQUEST, "{cb}");
    }
    assert_eq!(
        h.get("/getNetworks?callback=$jq_1").await.body,
        "$jq_1([]);"
    );
}

fn urlencode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-' | b'.' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

#[tokio::test]
async fn session_header_is_accepted() {
    let h = harness(Mode::Push, None);
    let req = Request::post("/fingerprint")
        .header("X-Spotex-Session", BOB)
        .body(Body::from(
            r#"[{"SSID":"Lobby","MAC":"02:00:00:00:00:01","RSSI":-50}]"#,
        ))
        .unwrap();
    assert_eq!(h.send_request(req).await.json(), json!({"merged": 1}));
    let req = Request::get("/getNetworks")
        .header("x-spotex-session", BOB)
        .body(Body::empty())
        .unwrap();
    assert!(h.send_request(req).await.body.contains("Lobby"));
}

#[tokio::test]
async fn push_validation_and_mode() {
    let h = harness(Mode::Push, None);
    let two = r#"[{"SSID":"Café","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-61},{"SSID":"Beacon","MAC":"00:11:22:33:44:55","RSSI":-70,"kind":"bluetooth"}]"#;
    assert_eq!(
        h.post(&format!("/fingerprint?session={ALICE}"), two)
            .await
            .json(),
        json!({"merged": 2})
    );

    for bad in [
        r#"[{"SSID":"x","MAC":"AA:BB:CC:DD:EE:FF","RSSI":10}]"#,
        r#"[{"SSID":"x","MAC":"AA:BB:CC:DD:EE","RSSI":-50}]"#,
        r#"{"SSID":"x"}"#,
        "not json",
    ] {
        let r = h.post(&format!("/fingerprint?session={ALICE}"), bad).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(r.json()["error"].is_string());
    }
    assert_eq!(
        h.post("/fingerprint", two).await.status,
        StatusCode::BAD_REQUEST
    );

    let sim = harness(Mode::Sim, Some(&venue_doc()));
    assert_eq!(
        sim.post(&format!("/fingerprint?session={ALICE}"), two)
            .await
            .status,
        StatusCode::CONFLICT
    );
}

#[tokio::test]
async fn sim_move_scans_the_venue() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    let r = h
        .post(
            &format!("/sim/move?session={ALICE}"),
            r#"{"x":1,"y":0,"floor":0}"#,
        )
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let fp = Fingerprint::from_json(&r.body, 0).unwrap();
    let cafe = fp
        .iter()
        .find(|o| o.ssid() == "Café")
        .expect("Café visible");
    assert!(cafe.rssi() >= -85);
    assert_eq!(fp.to_canonical_json(), r.body);

    let far = h
        .post(
            &format!("/sim/move?session={ALICE}"),
            r#"{"x":100,"y":100,"floor":0}"#,
        )
        .await;
    assert_eq!(far.body, "[]");
    assert_eq!(
        h.get(&format!("/getNetworks?session={ALICE}")).await.body,
        "[]"
    );

    for bad in [
        r#"{"x":1,"y":0,"floor":"one"}"#,
        r#"{"x":1,"y":0}"#,
        r#"{"x":1,"y":0,"floor":64}"#,
        "[]",
    ] {
        let r = h.post(&format!("/sim/move?session={ALICE}"), bad).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
    }

    let push = harness(Mode::Push, Some(&venue_doc()));
    let r = push
        .post(
            &format!("/sim/move?session={ALICE}"),
            r#"{"x":1,"y":0,"floor":0}"#,
        )
        .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn golden_jsonp_for_seeded_session() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":5,"y":0,"floor":0}"#,
    )
    .await;
    let r = h
        .get(&format!("/getNetworks?session={ALICE}&callback=spotexCb"))
        .await;
    assert_eq!(
        r.body.as_bytes(),
        testdata("golden_getnetworks.jsonp").as_bytes()
    );
}

#[tokio::test]
async fn evaluate_uses_session_and_time() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":5,"y":0,"floor":0}"#,
    )
    .await;
    let r = h.get(&format!("/evaluate?session={ALICE}&now=12:00")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(
        r.json(),
        json!({
            "fired": ["cafe_rule", "lobby_rule"],
            "snippets": [
                {"id": "cafe_coupon", "title": "Café coupon", "html": "<p>10% off</p>"},
                {"id": "lobby_map", "title": "Lobby", "html": "<a href=\"/map\">map</a>"}
            ]
        })
    );
    assert_eq!(
        h.get("/evaluate?session=unknown-session-xyz").await.json(),
        json!({"fired": [], "snippets": []})
    );
    assert_eq!(
        h.get(&format!("/evaluate?session={ALICE}&now=25:99"))
            .await
            .status,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn pages_filtered_and_annotated() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":0,"y":0,"floor":0}"#,
    )
    .await;
    // Lobby is 5 m away here and Café right on top
    let r = h.get(&format!("/page?mode=filtered&session={ALICE}")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(r.content_type.starts_with("text/html"));
    assert!(r.body.starts_with("<!DOCTYPE html>"));
    assert_eq!(r.body.matches("<div id=").count(), 2);
    assert!(r
        .body
        .contains("<div id=\"cafe_rule\"><p>10% off</p></div>"));
    assert!(!r.body.contains("<script"));

    let empty = h
        .get("/page?mode=filtered&session=nobody-at-all-here")
        .await;
    assert!(empty.body.contains("<main id=\"spotex-content\">\n</main>"));
    assert_eq!(empty.body.matches("<div").count(), 0);

    let far = h
        .post(
            &format!("/sim/move?session={BOB}"),
            r#"{"x":40,"y":0,"floor":0}"#,
        )
        .await;
    assert!(!far.body.contains("Café"));
    let annotated = h.get(&format!("/page?mode=annotated&session={BOB}")).await;
    assert!(annotated.body.contains(
        "<div id=\"cafe_rule\" cond=\"Café\" style=\"display:none\"><p>10% off</p></div>"
    ));
    assert!(annotated
        .body
        .contains("<div id=\"lobby_rule\" cond=\"Lobby Café\" style=\"display:none\">"));
    assert!(annotated.body.contains(&format!(
        "<script src=\"/shim.js\" data-session=\"{BOB}\"></script>"
    )));

    assert_eq!(
        h.get("/page?mode=bogus").await.status,
        StatusCode::BAD_REQUEST
    );
    assert!(h.get("/page").await.body.contains("<main"));
}

#[tokio::test]
async fn rules_put_get_and_rollback() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    assert_eq!(h.get("/rules").await.body, RULES);

    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":5,"y":0,"floor":0}"#,
    )
    .await;
    let next = "SNIPPET b TITLE \"Beacon\" HTML <<<hi>>>\n  # kept verbatim\nRULE beacon IF visible(mac:\"00:11:22:33:44:55\") THEN SHOW b\nRULE never IF time(03:00, 03:00) THEN SHOW b\n";
    let r = h.send(Method::PUT, "/rules", next).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({"rules": 2, "snippets": 1}));
    assert_eq!(h.get("/rules").await.body, next);
    let rules_file = h.dir.path().join("rules.spotex");
    assert_eq!(std::fs::read_to_string(&rules_file).unwrap(), next);
    assert_eq!(
        h.get(&format!("/evaluate?session={ALICE}&now=12:00"))
            .await
            .json()["fired"],
        json!(["beacon"])
    );

    let broken = h
        .send(
            Method::PUT,
            "/rules",
            "RULE x IF visible(ssid:\"a\" THEN SHOW y",
        )
        .await;
    assert_eq!(broken.status, StatusCode::UNPROCESSABLE_ENTITY);
    let detail = broken.json();
    assert_eq!(detail["error"], "parse");
    assert_eq!(detail["line"], 1);
    assert!(detail["column"].as_u64().unwrap() > 1);

    let invalid = h
        .send(
            Method::PUT,
            "/rules",
            "RULE x IF visible(ssid:\"a\") THEN SHOW missing",
        )
        .await;
    assert_eq!(invalid.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(invalid.json()["error"], "validation");

    assert_eq!(h.get("/rules").await.body, next);
    assert_eq!(std::fs::read_to_string(&rules_file).unwrap(), next);
    assert_eq!(
        h.get(&format!("/evaluate?session={ALICE}&now=12:00"))
            .await
            .json()["fired"],
        json!(["beacon"])
    );
}

#[tokio::test]
async fn failed_persist_keeps_old_rules() {
    let h = harness(Mode::Push, None);
    std::fs::create_dir(h.dir.path().join("rules.spotex.tmp")).unwrap();
    let r = h
        .send(Method::PUT, "/rules", "SNIPPET s TITLE \"\" HTML <<<x>>>")
        .await;
    assert_eq!(r.status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(h.get("/rules").await.body, RULES);
}

#[tokio::test]
async fn venue_endpoint() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    let r = h.get("/venue").await;
    assert_eq!(r.status, StatusCode::OK);
    let doc = r.json();
    assert_eq!(doc["name"], "Galleria");
    assert_eq!(doc["aps"].as_array().unwrap().len(), 4);
    assert_eq!(
        harness(Mode::Push, None).get("/venue").await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn sessions_are_isolated() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    h.post(
        &format!("/sim/move?session={BOB}"),
        r#"{"x":5,"y":0,"floor":0}"#,
    )
    .await;
    let before = h.get(&format!("/getNetworks?session={BOB}")).await.body;
    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":100,"y":0,"floor":3}"#,
    )
    .await;
    h.send(Method::GET, &format!("/evaluate?session={ALICE}"), "")
        .await;
    assert_eq!(
        h.get(&format!("/getNetworks?session={BOB}")).await.body,
        before
    );
    assert_ne!(
        h.get(&format!("/getNetworks?session={ALICE}")).await.body,
        before
    );
}

#[tokio::test]
async fn pushed_observations_expire() {
    let h = harness(Mode::Push, None);
    h.post(
        &format!("/fingerprint?session={ALICE}"),
        r#"[{"SSID":"Café","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-61}]"#,
    )
    .await;
    h.clock.advance(30_000);
    assert!(h
        .get(&format!("/getNetworks?session={ALICE}"))
        .await
        .body
        .contains("Café"));
    h.clock.advance(1);
    assert_eq!(
        h.get(&format!("/getNetworks?session={ALICE}")).await.body,
        "[]"
    );
}

#[tokio::test]
async fn parked_simulated_device_is_rescanned() {
    let h = harness(Mode::Sim, Some(&venue_doc()));
    h.post(
        &format!("/sim/move?session={ALICE}"),
        r#"{"x":5,"y":0,"floor":0}"#,
    )
    .await;
    h.clock.advance(14_999);
    let body = h.get(&format!("/getNetworks?session={ALICE}")).await.body;
    assert!(body.contains(&format!("\"ts\":{T0}")));
    h.clock.advance(60_000);
    let body = h.get(&format!("/getNetworks?session={ALICE}")).await.body;
    assert!(body.contains("Café"));
    assert!(body.contains(&format!("\"ts\":{}", T0 + 74_999)));
}

#[tokio::test]
async fn idle_sessions_are_dropped() {
    let h = harness(Mode::Push, None);
    h.post(
        &format!("/fingerprint?session={ALICE}"),
        r#"[{"SSID":"a","MAC":"02:00:00:00:00:09","RSSI":-61}]"#,
    )
    .await;
    assert_eq!(h.state.expire_idle_sessions(), 0);
    h.clock.advance(h.state.config().session_idle_ms() + 1);
    assert_eq!(h.state.expire_idle_sessions(), 1);
    assert_eq!(h.state.session_count(), 0);
}

#[tokio::test]
async fn sim_mode_is_deterministic() {
    let mut doc: Value = serde_json::from_str(&venue_doc()).unwrap();
    doc["params"]["noise_sigma_db"] = json!(4.0);
    let doc = doc.to_string();
    let run = || async {
        let h = harness(Mode::Sim, Some(&doc));
        let mut bodies = Vec::new();
        for (i, x) in [0.0, 3.0, 7.5, 12.0, 30.0].iter().enumerate() {
            h.clock.advance(1_000);
            let s = if i % 2 == 0 { ALICE } else { BOB };
            bodies.push(
                h.post(
                    &format!("/sim/move?session={s}"),
                    &format!(r#"{{"x":{x},"y":1,"floor":0}}"#),
                )
                .await
                .body,
            );
            bodies.push(
                h.get(&format!("/getNetworks?session={s}&callback=cb"))
                    .await
                    .body,
            );
            bodies.push(
                h.get(&format!("/evaluate?session={s}&now=10:00"))
                    .await
                    .body,
            );
            bodies.push(
                h.get(&format!("/page?mode=annotated&session={s}"))
                    .await
                    .body,
            );
        }
        bodies
    };
    let first = run().await;
    assert_eq!(first, run().await);
}

#[test]
fn sim_mode_requires_a_venue() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.spotex");
    let clock = Arc::new(ManualClock::new(0));
    assert!(AppState::new(
        ServerConfig::new(&path, Mode::Sim),
        RULES.into(),
        None,
        clock.clone()
    )
    .is_err());
    std::fs::write(&path, RULES).unwrap();
    assert!(AppState::load(ServerConfig::new(&path, Mode::Sim), clock.clone()).is_err());
    assert!(AppState::load(ServerConfig::new(&path, Mode::Push), clock).is_ok());
}
