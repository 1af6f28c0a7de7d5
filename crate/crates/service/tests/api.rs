use std::path::Path;
use std::sync::Arc;

use patexpand_core::embedding::{save, train, EmbeddingModel};
use patexpand_core::expansion::{expand, ExpansionRequest};
use patexpand_core::fixtures::{fixture_params, planted_clusters, token_stream};
use patexpand_core::Scope;
use patexpand_service::api::{ExpandResponse, SeqResponse, VotesResponse};
use patexpand_service::{start, RunningServer, ServiceConfig};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

fn trained(scope: &str, seed: u64) -> EmbeddingModel {
    let fixture = planted_clusters(seed);
    train(&token_stream(&fixture.documents, &Scope::Generic), &fixture_params(seed))
        .unwrap()
        .with_scope(scope.parse().unwrap())
}

struct Harness {
    server: RunningServer,
    client: Client,
    _dir: tempfile::TempDir,
}

impl Harness {
    async fn new(models: &[(&str, &EmbeddingModel)]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let model_dir = dir.path().join("models");
        std::fs::create_dir(&model_dir).unwrap();
        for (id, model) in models {
            save(model, &model_dir.join(id)).unwrap();
        }
        let static_dir = dir.path().join("static");
        std::fs::create_dir(&static_dir).unwrap();
        std::fs::write(static_dir.join("index.html"), "<html>ui</html>").unwrap();
        let config = ServiceConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            model_dir,
            vote_log: Some(dir.path().join("votes.jsonl")),
            static_dir: Some(static_dir),
            ..ServiceConfig::default()
        };
        let server = start(&config).await.unwrap();
        Self {
            server,
            client: Client::new(),
            _dir: dir,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.server.addr)
    }

    fn model_dir(&self) -> &Path {
        self._dir.path()
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }
}

fn head_of(seed: u64) -> String {
    planted_clusters(seed).heads[0].head.clone()
}

#[tokio::test]
async fn lists_models_and_hot_registers() {
    let empty = Harness::new(&[]).await;
    assert_eq!(empty.get("/api/models").await, (StatusCode::OK, json!([])));
    empty.server.stop().await.unwrap();

    let a = trained("art_unit:1641", 1);
    let b = trained("workgroup:1640", 2);
    let h = Harness::new(&[("zeta", &a), ("alpha", &b)]).await;
    let (status, models) = h.get("/api/models").await;
    assert_eq!(status, StatusCode::OK);
    let rows = models.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["model_id"], "zeta");
    assert_eq!(rows[0]["scope"], "art_unit:1641");
    assert_eq!(rows[0]["vocab_size"], a.vocab().len());
    assert_eq!(rows[1]["model_id"], "alpha");
    assert_eq!(rows[1]["dim"], 40);

    save(&a, &h.model_dir().join("models/late")).unwrap();
    let (status, body) = h.post("/api/models/rescan", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["models"].as_array().unwrap().len(), 3);
    let (_, models) = h.get("/api/models").await;
    let ids: Vec<&str> = models.as_array().unwrap().iter().map(|m| m["model_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["late", "zeta", "alpha"]);
}

#[tokio::test]
async fn expand_matches_module_and_reports_errors() {
    let model = trained("art_unit:1641", 1);
    let h = Harness::new(&[("m", &model)]).await;
    let head = head_of(1);
    let (status, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 7})).await;
    assert_eq!(status, StatusCode::OK);
    let response: ExpandResponse = serde_json::from_value(body).unwrap();
    let direct = expand(&model, &ExpansionRequest::new([head.clone()]).with_k(7)).unwrap();
    assert_eq!(response.suggestions, direct.suggestions);
    assert_eq!(response.request.k, 7);
    assert_eq!(response.request.crowd_scope.unwrap().as_str(), "1641");

    let second = direct.suggestions[0].term.clone();
    let (_, ab) = h.post("/api/expand", json!({"model_id": "m", "terms": [head, second]})).await;
    let (_, ba) = h.post("/api/expand", json!({"model_id": "m", "terms": [second, head]})).await;
    assert_eq!(ab, ba);
    assert_eq!(ab["request"]["k"], 20);

    let (status, body) = h.post("/api/expand", json!({"model_id": "nope", "terms": ["x"]})).await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_model")));
    let (status, body) = h.post("/api/expand", json!({"model_id": "m", "terms": ["qqqqqq"]})).await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("not_representable")));
    let (status, _) = h.post("/api/expand", json!({"model_id": "m", "terms": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let resp = h.client.post(h.url("/api/expand")).body("{not json").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let err: Value = resp.json().await.unwrap();
    assert_eq!(err["error"]["code"], "bad_request");

    let (status, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head, "qqqqqq"]})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["skipped_terms"][0]["term"], "qqqqqq");
}

#[tokio::test]
async fn votes_reorder_and_suppress() {
    let model = trained("art_unit:1641", 1);
    let h = Harness::new(&[("m", &model)]).await;
    let head = head_of(1);
    let raw = expand(&model, &ExpansionRequest::new([head.clone()]).with_k(10)).unwrap().suggestions;
    let last = raw[9].term.clone();
    let top = raw[0].term.clone();

    let vote = |user: &str, term: &str, direction: &str| {
        json!({"user": user, "scope": "1641", "query_term": head, "term": term, "direction": direction})
    };
    let (status, first) = h.post("/api/votes", vote("ann", &last, "up")).await;
    assert_eq!(status, StatusCode::OK);
    let first: SeqResponse = serde_json::from_value(first).unwrap();
    let (_, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 10})).await;
    assert_eq!(body["suggestions"][0]["term"], last.as_str());
    assert_eq!(body["suggestions"][0]["source"], "crowd");
    assert_eq!(body["suggestions"][0]["net_votes"], 1);
    let (_, raw_body) = h
        .post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 10, "include_crowd": false}))
        .await;
    assert_eq!(raw_body["suggestions"][9]["term"], last.as_str());

    for user in ["ann", "bob"] {
        h.post("/api/votes", vote(user, &top, "down")).await;
    }
    let (_, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 10})).await;
    let terms: Vec<&str> = body["suggestions"].as_array().unwrap().iter().map(|s| s["term"].as_str().unwrap()).collect();
    assert!(!terms.contains(&top.as_str()));
    assert_eq!(terms.len(), 10);

    let resp = h
        .client
        .post(h.url("/api/terms"))
        .header("X-User", "cy")
        .json(&json!({"scope": "1641", "query_term": head, "term": "nanolens"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let manual: SeqResponse = resp.json().await.unwrap();
    assert!(manual.seq > first.seq);
    let (_, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 10})).await;
    let nano = body["suggestions"].as_array().unwrap().iter().find(|s| s["term"] == "nanolens").unwrap();
    assert_eq!(nano["source"], "manual");

    let (status, votes) = h.get(&format!("/api/votes?user=ann&scope=1641&query_term={head}")).await;
    assert_eq!(status, StatusCode::OK);
    let votes: VotesResponse = serde_json::from_value(votes).unwrap();
    assert_eq!(votes.votes.len(), 2);
    h.post("/api/votes", vote("ann", &last, "clear")).await;
    let resp = h
        .client
        .get(h.url(&format!("/api/votes?scope=1641&query_term={head}")))
        .header("X-User", "ann")
        .send()
        .await
        .unwrap();
    let votes: VotesResponse = resp.json().await.unwrap();
    assert_eq!(votes.votes.len(), 1);
    assert_eq!(votes.votes[0].term, top);

    let (_, crowd) = h.get(&format!("/api/crowd?scope=1641&query_term={head}")).await;
    assert_eq!(crowd["suggestions"][0]["term"], "nanolens");

    let (status, _) = h.post("/api/votes", vote("ann", &head, "up")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.post("/api/votes", vote("ann", "optic", "sideways")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = h
        .post("/api/votes", json!({"scope": "1641", "query_term": "lens", "term": "optic", "direction": "up"}))
        .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!body["error"]["message"].as_str().unwrap().contains('/'));
    let (status, _) = h.get("/api/votes?scope=1641").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn votes_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("models")).unwrap();
    let config = ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        model_dir: dir.path().join("models"),
        vote_log: Some(dir.path().join("votes.jsonl")),
        ..ServiceConfig::default()
    };
    let client = Client::new();
    let server = start(&config).await.unwrap();
    let body = json!({"user": "ann", "scope": "1641", "query_term": "lens", "term": "optic", "direction": "up"});
    let resp = client.post(format!("http://{}/api/votes", server.addr)).json(&body).send().await.unwrap();
    let seq: SeqResponse = resp.json().await.unwrap();
    server.stop().await.unwrap();

    let server = start(&config).await.unwrap();
    let resp = client.post(format!("http://{}/api/votes", server.addr)).json(&body).send().await.unwrap();
    let next: SeqResponse = resp.json().await.unwrap();
    assert_eq!(next.seq, seq.seq + 1);
    let crowd: Value = client
        .get(format!("http://{}/api/crowd?scope=1641&query_term=lens", server.addr))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(crowd["suggestions"][0]["net_votes"], 1);
}

#[tokio::test]
async fn search_string_static_assets_and_errors() {
    let h = Harness::new(&[]).await;
    let cases = [
        (json!({"base_term": "lens", "selected": ["optic", "microlens"]}), "(lens OR optic OR microlens)"),
        (json!({"base_term": "lens", "selected": []}), "(lens)"),
        (json!({"base_term": "assay", "selected": ["binding assay", "assay"]}), "(assay OR \"binding assay\")"),
    ];
    for (body, expected) in cases {
        let (status, resp) = h.post("/api/search-string", body).await;
        assert_eq!((status, resp["query"].as_str().unwrap()), (StatusCode::OK, expected));
    }
    let (status, body) = h.post("/api/search-string", json!({"base_term": "", "selected": ["x"]})).await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));

    let page = h.client.get(h.url("/index.html")).send().await.unwrap();
    assert_eq!(page.status(), StatusCode::OK);
    assert_eq!(page.text().await.unwrap(), "<html>ui</html>");
    let (status, body) = h.get("/api/unknown").await;
    assert_eq!((status, body["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    assert_eq!(h.get("/api/health").await.1["status"], "ok");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients_read_their_writes() {
    let model = trained("art_unit:1641", 3);
    let h = Arc::new(Harness::new(&[("m", &model)]).await);
    let head = head_of(3);
    let mut tasks = Vec::new();
    for c in 0..50 {
        let h = h.clone();
        let head = head.clone();
        tasks.push(tokio::spawn(async move {
            let term = format!("term{c}");
            let (status, ack) = h
                .post("/api/votes", json!({"user": format!("u{c}"), "scope": "1641", "query_term": head, "term": term, "direction": "up"}))
                .await;
            assert_eq!(status, StatusCode::OK);
            let seq = ack["seq"].as_u64().unwrap();
            let (_, body) = h.post("/api/expand", json!({"model_id": "m", "terms": [head], "k": 60})).await;
            let seen = body["suggestions"].as_array().unwrap().iter().any(|s| s["term"] == term.as_str());
            assert!(seen, "client {c} does not see its vote");
            seq
        }));
    }
    let mut seqs = Vec::new();
    for t in tasks {
        seqs.push(t.await.unwrap());
    }
    seqs.sort();
    seqs.dedup();
    assert_eq!(seqs.len(), 50);
}
