use std::path::{Path, PathBuf};
use std::sync::Arc;

use polyfuse_annotation_service::{router, AnnotationStore};
use polyfuse_core::audio::read_wav;
use polyfuse_core::corpus::{
    compute_statistics, load_manifest, resolve_labels, write_manifest, CorpusManifest, ResolutionPolicy,
};
use polyfuse_core::synth::{generate_corpus, SynthConfig};
use serde_json::{json, Value};

const ANNOTATORS: [&str; 3] = ["a1", "a2", "a3"];

struct Server {
    base: String,
    client: reqwest::Client,
    dir: tempfile::TempDir,
    manifest_path: PathBuf,
}

fn corpus(dir: &Path, utterances: usize) -> PathBuf {
    let synth = generate_corpus(
        &SynthConfig {
            utterances,
            speakers: 2,
            videos_per_speaker: 1,
            embedding_dim: 4,
            ..SynthConfig::default()
        },
        dir,
    )
    .unwrap();
    let mut m = synth.manifest;
    m.annotations.clear();
    let path = dir.join("base.jsonl");
    write_manifest(&m, &path).unwrap();
    path
}

async fn start_with(manifest: CorpusManifest, dir: tempfile::TempDir, manifest_path: PathBuf, log: &str) -> Server {
    let store = AnnotationStore::open(manifest, ANNOTATORS.map(String::from), &dir.path().join(log)).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(store))).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        dir,
        manifest_path,
    }
}

async fn start(utterances: usize) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let path = corpus(dir.path(), utterances);
    let manifest = load_manifest(&path).unwrap();
    start_with(manifest, dir, path, "log.jsonl").await
}

fn record(utterance: &str, annotator: &str, polarity: i64) -> Value {
    json!({
        "utterance_id": utterance,
        "annotator_id": annotator,
        "polarity": polarity,
        "subjectivity": "subjective",
        "gestures": [],
    })
}

impl Server {
    async fn next(&self, annotator: &str) -> reqwest::Response {
        self.client
            .get(format!("{}/api/tasks/next?annotator={annotator}", self.base))
            .send()
            .await
            .unwrap()
    }

    async fn post(&self, body: &Value) -> reqwest::Response {
        self.client
            .post(format!("{}/api/annotations", self.base))
            .json(body)
            .send()
            .await
            .unwrap()
    }

    async fn get_json(&self, path: &str) -> Value {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap().json().await.unwrap()
    }

    async fn export(&self) -> String {
        self.client.get(format!("{}/api/export", self.base)).send().await.unwrap().text().await.unwrap()
    }

    fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = load_manifest(&self.manifest_path)
            .unwrap()
            .utterances
            .into_iter()
            .map(|u| u.utterance_id)
            .collect();
        ids.sort();
        ids
    }
}

#[tokio::test]
async fn annotators_walk_the_queue_independently() {
    let s = start(4).await;
    let ids = s.ids();
    let task: Value = s.next("a1").await.json().await.unwrap();
    assert_eq!(task["utterance_id"], ids[0].as_str());
    assert_eq!(task["annotator_id"], "a1");
    assert_eq!(task["status"], "pending");
    assert_eq!(task["media"]["audio"], format!("/api/media/{}.wav", ids[0]));
    assert!(!task["transcript"].as_str().unwrap().is_empty());

    for id in &ids {
        assert_eq!(s.post(&record(id, "a1", 1)).await.status(), 200);
    }
    assert_eq!(s.next("a1").await.status(), 204);
    let other: Value = s.next("a2").await.json().await.unwrap();
    assert_eq!(other["utterance_id"], ids[0].as_str());

    let unknown = s.next("stranger").await;
    assert_eq!(unknown.status(), 404);
    assert_eq!(unknown.json::<Value>().await.unwrap()["error"], "UnknownAnnotator");
    let missing = s.client.get(format!("{}/api/tasks/next", s.base)).send().await.unwrap();
    assert_eq!(missing.status(), 400);
}

#[tokio::test]
async fn submissions_are_validated_and_last_write_wins() {
    let s = start(2).await;
    let id = s.ids()[0].clone();
    for bad in [
        record(&id, "a1", 2),
        json!({"utterance_id": id, "annotator_id": "a1", "polarity": 1, "subjectivity": "maybe", "gestures": []}),
        json!({"utterance_id": id, "annotator_id": "a1", "polarity": 1, "subjectivity": "subjective", "gestures": ["wink"]}),
        json!({"utterance_id": id, "annotator_id": "a1", "polarity": 1, "subjectivity": "subjective", "subjectivity_rule": "gut_feeling", "gestures": []}),
    ] {
        let r = s.post(&bad).await;
        assert_eq!(r.status(), 422);
        assert_eq!(r.json::<Value>().await.unwrap()["error"], "ValidationError");
    }
    let r = s.post(&record("no-such-utterance", "a1", 1)).await;
    assert_eq!(r.status(), 404);
    assert_eq!(r.json::<Value>().await.unwrap()["error"], "UnknownUtterance");

    let mut first = record(&id, "a1", 1);
    first["gestures"] = json!(["smile", "head_nod"]);
    first["subjectivity_rule"] = json!("explicit_criticism");
    let ack: Value = s.post(&first).await.json().await.unwrap();
    assert_eq!(ack["replaced"], false);
    let export = s.export().await;
    let line = export.lines().find(|l| l.contains("\"annotation\"")).unwrap();
    let stored: Value = serde_json::from_str(line).unwrap();
    assert_eq!(stored["gestures"], json!(["smile", "head_nod"]));
    assert_eq!(stored["subjectivity_rule"], "explicit_criticism");

    let ack: Value = s.post(&record(&id, "a1", -1)).await.json().await.unwrap();
    assert_eq!(ack["replaced"], true);
    let export = s.export().await;
    let annotations: Vec<Value> = export
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["kind"] == "annotation")
        .collect();
    assert_eq!(annotations.len(), 1);
    assert_eq!(annotations[0]["polarity"], -1);
}

#[tokio::test]
async fn concurrent_resubmissions_leave_one_record() {
    let s = Arc::new(start(2).await);
    let id = s.ids()[0].clone();
    let handles: Vec<_> = (0..40)
        .map(|i| {
            let s = s.clone();
            let body = record(&id, ANNOTATORS[i % 3], [1, 0, -1][i % 3]);
            tokio::spawn(async move { s.post(&body).await.status() })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), 200);
    }
    let snapshot = s.get_json("/api/agreement").await;
    assert_eq!(snapshot["records"], 3);
    let log = std::fs::read_to_string(s.dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 40);
}

#[tokio::test]
async fn agreement_reports_pairwise_percentages() {
    let s = start(4).await;
    let empty = s.get_json("/api/agreement").await;
    assert_eq!(empty["polarity"]["status"], "not_yet_computable");
    assert_eq!(empty["completed"]["a1"], 0);

    for id in s.ids() {
        s.post(&record(&id, "a1", 1)).await;
        s.post(&record(&id, "a2", 1)).await;
        s.post(&record(&id, "a3", -1)).await;
    }
    let snap = s.get_json("/api/agreement").await;
    assert_eq!(snap["polarity"], json!({"status": "computable", "percentage": 33.33}));
    assert_eq!(snap["subjectivity"]["percentage"], 100.0);
    assert_eq!(snap["gestures"]["percentage"], 100.0);

    for id in s.ids() {
        s.post(&record(&id, "a3", 1)).await;
    }
    let snap = s.get_json("/api/agreement").await;
    assert_eq!(snap["polarity"]["percentage"], 100.0);
    assert_eq!(snap["completed"]["a3"], 4);
}

#[tokio::test]
async fn export_reloads_and_is_a_fixed_point() {
    let s = start(10).await;
    let ids = s.ids();
    let untouched = s.export().await;
    assert_eq!(untouched, std::fs::read_to_string(&s.manifest_path).unwrap());

    for (k, id) in ids.iter().enumerate() {
        let p = if k % 2 == 0 { 1 } else { -1 };
        for a in ANNOTATORS {
            assert_eq!(s.post(&record(id, a, p)).await.status(), 200);
        }
    }
    let exported = s.export().await;
    let path = s.dir.path().join("exported.jsonl");
    std::fs::write(&path, &exported).unwrap();
    let reloaded = load_manifest(&path).unwrap();
    assert_eq!(reloaded.annotations.len(), 30);
    let stats = compute_statistics(&resolve_labels(&reloaded, ResolutionPolicy::default()).unwrap());
    assert_eq!(stats.fully_annotated, 10);
    assert_eq!((stats.positive, stats.negative), (5, 5));

    let dir = tempfile::tempdir().unwrap();
    let again = start_with(reloaded, dir, path, "fresh.jsonl").await;
    assert_eq!(again.export().await, exported);
}

#[tokio::test]
async fn media_clips_support_ranges() {
    let s = start(2).await;
    let id = s.ids()[0].clone();
    let manifest = load_manifest(&s.manifest_path).unwrap();
    let u = manifest.utterance(&id).unwrap().clone();

    let url = format!("{}/api/media/{id}.wav", s.base);
    let full = s.client.get(&url).send().await.unwrap();
    assert_eq!(full.status(), 200);
    assert_eq!(full.headers()["content-type"], "audio/wav");
    assert_eq!(full.headers()["accept-ranges"], "bytes");
    let bytes = full.bytes().await.unwrap();
    let clip_path = s.dir.path().join("clip.wav");
    std::fs::write(&clip_path, &bytes).unwrap();
    let clip = read_wav(&clip_path).unwrap();
    assert!((clip.duration() - u.duration()).abs() < 1e-3);

    let part = s.client.get(&url).header("Range", "bytes=0-3").send().await.unwrap();
    assert_eq!(part.status(), 206);
    assert_eq!(
        part.headers()["content-range"].to_str().unwrap(),
        format!("bytes 0-3/{}", bytes.len())
    );
    assert_eq!(&part.bytes().await.unwrap()[..], b"RIFF");
    let past = s
        .client
        .get(&url)
        .header("Range", format!("bytes={}-", bytes.len()))
        .send()
        .await
        .unwrap();
    assert_eq!(past.status(), 416);

    let video = s.client.get(format!("{}/api/media/{id}.mp4", s.base)).send().await.unwrap();
    assert_eq!(video.status(), 200);
    let video_path = manifest.resolve_media(&manifest.video(&u.video_id).unwrap().video_path);
    assert_eq!(&video.bytes().await.unwrap()[..], &std::fs::read(video_path).unwrap()[..]);

    let tail = s
        .client
        .get(format!("{}/api/media/{id}.mp4", s.base))
        .header("Range", "bytes=-8")
        .send()
        .await
        .unwrap();
    assert_eq!(tail.status(), 206);
    assert_eq!(tail.bytes().await.unwrap().len(), 8);

    assert_eq!(s.client.get(format!("{}/api/media/nope.wav", s.base)).send().await.unwrap().status(), 404);
    assert_eq!(s.client.get(format!("{}/api/media/{id}.ogg", s.base)).send().await.unwrap().status(), 404);
}
